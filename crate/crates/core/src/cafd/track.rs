//! Intraprocedural value-flow tracking.
//!
//! Two complementary passes over one function body. The backward pass asks
//! of each value: does it always hold either a fresh allocation from an
//! allocator-list call or NULL? The forward pass asks of each value: does it
//! flow only into return statements? A wrapper must answer yes on both
//! sides: every return backed by fresh allocations, every allocation
//! receiver consumed by returns alone.

use std::collections::{BTreeMap, BTreeSet};

use crate::ir::{Callee, Function, Operand, SiteId, Statement, StatementKind};

/// True when the statement is a call that can only land in the allocator
/// list: a direct call to a member, or an indirect call whose resolved
/// target set is nonempty and entirely members.
pub fn is_allocator_call(
    s: &Statement,
    al: &BTreeSet<String>,
    indirect: &BTreeMap<SiteId, BTreeSet<String>>,
) -> bool {
    let StatementKind::Call { callee, .. } = &s.kind else { return false };
    match callee {
        Callee::Direct(g) => al.contains(g),
        Callee::Indirect(_) => indirect
            .get(&s.site)
            .is_some_and(|ts| !ts.is_empty() && ts.iter().all(|t| al.contains(t))),
    }
}

/// Every value a function declares: parameters plus statement definitions.
fn universe(f: &Function) -> BTreeSet<String> {
    let mut names: BTreeSet<String> = f.params.iter().map(|p| p.name.clone()).collect();
    for s in &f.statements {
        if let Some(d) = s.def() {
            names.insert(d.to_owned());
        }
    }
    names
}

/// Occurrence count of each value in operand position (definitions do not
/// count as uses).
pub fn uses_of(f: &Function) -> BTreeMap<String, usize> {
    let mut uses: BTreeMap<String, usize> = universe(f).into_iter().map(|v| (v, 0)).collect();
    let mut bump = |v: &str| {
        *uses.entry(v.to_owned()).or_insert(0) += 1;
    };
    for s in &f.statements {
        match &s.kind {
            StatementKind::Copy { src, .. } => {
                if let Operand::Value(v) = src {
                    bump(v);
                }
            }
            StatementKind::Phi { srcs, .. } => {
                for src in srcs {
                    if let Operand::Value(v) = src {
                        bump(v);
                    }
                }
            }
            StatementKind::NullAssign { .. } => {}
            StatementKind::Store { target, payload } => {
                bump(target);
                if let Some(Operand::Value(v)) = payload {
                    bump(v);
                }
            }
            StatementKind::Load { src, .. } => bump(src),
            StatementKind::Field { base, .. } => bump(base),
            StatementKind::Call { callee, args, .. } => {
                if let Callee::Indirect(v) = callee {
                    bump(v);
                }
                for a in args {
                    if let Operand::Value(v) = a {
                        bump(v);
                    }
                }
            }
            StatementKind::Return { operand } => {
                if let Some(Operand::Value(v)) = operand {
                    bump(v);
                }
            }
        }
    }
    uses
}

/// Backward tracking: `true` for values whose every definition chain
/// bottoms out in an allocator-list call result or NULL.
///
/// Copies and phis propagate; loads, field projections, non-member calls,
/// parameters, and function constants break the chain. A value that ever
/// takes part in memory traffic (store target or payload, load address,
/// field base) is disqualified outright: once aliased into memory we can no
/// longer claim it stays fresh.
pub fn backward_track(
    f: &Function,
    al: &BTreeSet<String>,
    indirect: &BTreeMap<SiteId, BTreeSet<String>>,
) -> BTreeMap<String, bool> {
    let mut bt: BTreeMap<String, bool> =
        f.params.iter().map(|p| (p.name.clone(), false)).collect();
    let mut deps: BTreeMap<String, Vec<String>> = BTreeMap::new();

    for s in &f.statements {
        match &s.kind {
            StatementKind::NullAssign { dst } => {
                bt.insert(dst.clone(), true);
            }
            StatementKind::Copy { dst, src } => match src {
                Operand::Value(v) => {
                    bt.insert(dst.clone(), true);
                    deps.insert(dst.clone(), vec![v.clone()]);
                }
                Operand::Func(_) => {
                    bt.insert(dst.clone(), false);
                }
            },
            StatementKind::Phi { dst, srcs } => {
                let mut ds = Vec::with_capacity(srcs.len());
                let mut ok = true;
                for src in srcs {
                    match src {
                        Operand::Value(v) => ds.push(v.clone()),
                        Operand::Func(_) => ok = false,
                    }
                }
                bt.insert(dst.clone(), ok);
                if ok {
                    deps.insert(dst.clone(), ds);
                }
            }
            StatementKind::Call { dst: Some(d), .. } => {
                bt.insert(d.clone(), is_allocator_call(s, al, indirect));
            }
            StatementKind::Load { dst, .. } | StatementKind::Field { dst, .. } => {
                bt.insert(dst.clone(), false);
            }
            _ => {}
        }
    }

    for s in &f.statements {
        match &s.kind {
            StatementKind::Store { target, payload } => {
                bt.insert(target.clone(), false);
                if let Some(Operand::Value(v)) = payload {
                    bt.insert(v.clone(), false);
                }
            }
            StatementKind::Load { src, .. } => {
                bt.insert(src.clone(), false);
            }
            StatementKind::Field { base, .. } => {
                bt.insert(base.clone(), false);
            }
            _ => {}
        }
    }

    lower_until_stable(&mut bt, &deps);
    bt
}

/// Forward tracking: `true` for values that flow only into return
/// statements (through copies and phis). Any other use disqualifies the
/// value, and an allocator-call receiver with no uses at all is a dropped
/// allocation, disqualified as well.
pub fn forward_track(
    f: &Function,
    al: &BTreeSet<String>,
    indirect: &BTreeMap<SiteId, BTreeSet<String>>,
) -> BTreeMap<String, bool> {
    let mut fw: BTreeMap<String, bool> =
        universe(f).into_iter().map(|v| (v, true)).collect();
    // value -> copy/phi destinations its content flows into
    let mut deps: BTreeMap<String, Vec<String>> = BTreeMap::new();
    let kill = |fw: &mut BTreeMap<String, bool>, v: &str| {
        fw.insert(v.to_owned(), false);
    };

    for s in &f.statements {
        match &s.kind {
            StatementKind::Copy { dst, src } => {
                if let Operand::Value(v) = src {
                    deps.entry(v.clone()).or_default().push(dst.clone());
                }
            }
            StatementKind::Phi { dst, srcs } => {
                for src in srcs {
                    if let Operand::Value(v) = src {
                        deps.entry(v.clone()).or_default().push(dst.clone());
                    }
                }
            }
            StatementKind::NullAssign { .. } | StatementKind::Return { .. } => {}
            StatementKind::Store { target, payload } => {
                kill(&mut fw, target);
                if let Some(Operand::Value(v)) = payload {
                    kill(&mut fw, v);
                }
            }
            StatementKind::Load { src, .. } => kill(&mut fw, src),
            StatementKind::Field { base, .. } => kill(&mut fw, base),
            StatementKind::Call { callee, args, .. } => {
                if let Callee::Indirect(v) = callee {
                    kill(&mut fw, v);
                }
                for a in args {
                    if let Operand::Value(v) = a {
                        kill(&mut fw, v);
                    }
                }
            }
        }
    }

    let uses = uses_of(f);
    for s in &f.statements {
        if !is_allocator_call(s, al, indirect) {
            continue;
        }
        if let StatementKind::Call { dst: Some(d), .. } = &s.kind {
            if uses.get(d) == Some(&0) {
                fw.insert(d.clone(), false);
            }
        }
    }

    lower_until_stable(&mut fw, &deps);
    fw
}

/// Propagate falseness through dependency edges until a fixpoint: a value
/// stays true only while all values it depends on stay true.
fn lower_until_stable(state: &mut BTreeMap<String, bool>, deps: &BTreeMap<String, Vec<String>>) {
    loop {
        let mut changed = false;
        for (v, ds) in deps {
            if state[v] && ds.iter().any(|d| !state[d]) {
                state.insert(v.clone(), false);
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
}
