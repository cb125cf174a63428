//! Checks analysis results against ground facts from the interpreter.
//!
//! Every location a value concretely held must appear in that value's
//! static points-to set, and any two values that concretely held the same
//! location must have intersecting sets. Facts are projected into each
//! mode's namespace first: the context-enhanced mode names allocations by
//! the callsite that entered the deepest run of modeled allocator frames
//! and has no values inside modeled bodies, and the cloning mode renames
//! facts into the clone variant selected by the activation's entry
//! callsite.

use std::collections::BTreeMap;
use std::collections::BTreeSet;
use std::fmt;

use crate::ir::Program;
use crate::panalysis::{AbsObj, AnalysisResult, CloneMap, Mode, ObjKey, ValueRef};

use super::interp::{AllocationRecord, ConcreteLoc, ExecFacts, Fact, ObjId};

/// A ground fact the analysis failed to cover.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    /// `value` concretely held `object`, but `object` is missing from its
    /// points-to set.
    MissingHolding { mode: Mode, value: ValueRef, object: AbsObj },
    /// `left` and `right` concretely held the same location, but their
    /// points-to sets are disjoint.
    MissingAlias { mode: Mode, left: ValueRef, right: ValueRef },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::MissingHolding { mode, value, object } => {
                write!(f, "{mode:?}: {value} held {object} but its points-to set misses it")
            }
            Violation::MissingAlias { mode, left, right } => {
                write!(f, "{mode:?}: {left} and {right} aliased concretely but not statically")
            }
        }
    }
}

/// Check one analysis result against executed facts. `al` is the full
/// allocator list the result was computed with; members beyond the seeds
/// determine which frames count as modeled. Returns all violations, empty
/// when the result soundly covers the run.
pub fn check(
    p: &Program,
    facts: &ExecFacts,
    result: &AnalysisResult,
    al: &BTreeSet<String>,
) -> Vec<Violation> {
    let seeds = p.seeds();
    let modeled: BTreeSet<String> = al.difference(&seeds).cloned().collect();
    let cm = result.clone_map.as_ref();
    let mut out = Vec::new();

    for fact in &facts.holdings {
        let Some(value) = project_value(result.mode, fact, &modeled, cm) else {
            continue;
        };
        let object = abstract_loc(result.mode, &fact.loc, &facts.allocations, &modeled, cm);
        if !result.pts.of(&value).contains(&object) {
            out.push(Violation::MissingHolding { mode: result.mode, value, object });
        }
    }

    for (a, b) in facts.alias_pairs() {
        let (Some(va), Some(vb)) = (
            project_value(result.mode, a, &modeled, cm),
            project_value(result.mode, b, &modeled, cm),
        ) else {
            continue;
        };
        if va == vb {
            continue;
        }
        let pa = result.pts.of(&va);
        let pb = result.pts.of(&vb);
        if pa.intersection(&pb).next().is_none() {
            out.push(Violation::MissingAlias { mode: result.mode, left: va, right: vb });
        }
    }

    out
}

fn project_value(
    mode: Mode,
    fact: &Fact,
    modeled: &BTreeSet<String>,
    cm: Option<&CloneMap>,
) -> Option<ValueRef> {
    match mode {
        Mode::Baseline => Some(ValueRef::new(&fact.function, &fact.value)),
        Mode::Enhanced => {
            // Values inside modeled allocator bodies have no static
            // counterpart at all.
            if modeled.contains(&fact.function) {
                None
            } else {
                Some(ValueRef::new(&fact.function, &fact.value))
            }
        }
        Mode::OneCallsite => {
            let function = match fact.entered_via {
                None => fact.function.clone(),
                Some(site) => cm
                    .and_then(|cm| cm.instance_for_callsite(&fact.function, site))
                    .unwrap_or_else(|| fact.function.clone()),
            };
            Some(ValueRef::new(function, &fact.value))
        }
    }
}

fn abstract_loc(
    mode: Mode,
    loc: &ConcreteLoc,
    allocations: &BTreeMap<ObjId, AllocationRecord>,
    modeled: &BTreeSet<String>,
    cm: Option<&CloneMap>,
) -> AbsObj {
    let record = &allocations[&loc.obj()];
    let base = AbsObj::heap(project_object(mode, record, modeled, cm));
    match loc {
        ConcreteLoc::Obj(_) => base,
        ConcreteLoc::Field(_, field) => base.field_of(field),
    }
}

fn project_object(
    mode: Mode,
    record: &AllocationRecord,
    modeled: &BTreeSet<String>,
    cm: Option<&CloneMap>,
) -> ObjKey {
    match mode {
        Mode::Baseline => (record.seed_site(), None),
        Mode::Enhanced => {
            if !modeled.contains(record.allocating_function()) {
                return (record.seed_site(), None);
            }
            // Walk outward until the first retained frame; the call it made
            // into the modeled run is the allocation's static site.
            for entry in record.stack.iter().rev().skip(1) {
                if !modeled.contains(&entry.caller) {
                    return (entry.callsite, None);
                }
            }
            // The entry function is never a detected allocator, so a
            // retained frame always exists; keep the seed site as a
            // defensive fallback.
            (record.seed_site(), None)
        }
        Mode::OneCallsite => {
            let cloned = match (record.allocating_entered_via(), cm) {
                (Some(site), Some(cm)) => {
                    cm.instance_for_callsite(record.allocating_function(), site).is_some()
                }
                _ => false,
            };
            match (cloned, record.allocating_entered_via()) {
                (true, Some(site)) => (record.seed_site(), Some(site)),
                _ => (record.seed_site(), None),
            }
        }
    }
}
