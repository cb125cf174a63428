//! Custom-allocation-function detection.
//!
//! Starting from the declared allocation seeds, detection repeatedly scans
//! for functions that call a known allocator and forward the fresh object
//! to their callers untouched. Each round identifies candidates bottom-up;
//! side-effect-free wrappers are accepted outright, wrappers whose effects
//! an oracle judges confined to error handling are accepted with oracle
//! provenance, everything else is rejected. Accepting a function reopens
//! its callers, since their callsites have changed meaning. The loop stops
//! the first round that accepts nothing.

use std::collections::{BTreeMap, BTreeSet};

use crate::callgraph::{bottom_up_order, build_call_graph, CallGraph};
use crate::ir::{render_function, render_statement, Function, Operand, Program, SiteId, StatementKind};
use crate::oracle::{Oracle, OracleCounters, OracleError, SideEffectQuery, Verdict, VerdictValue};
use crate::panalysis::{analyze, AnalyzeError, ModeSpec};

mod sideeffect;
mod track;

pub use sideeffect::{compute_side_effects, SideEffectMap};
pub use track::{backward_track, forward_track, is_allocator_call, uses_of};

/// How a function earned its allocator-list membership.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    /// Declared as an allocation seed in the program.
    Seed,
    /// Accepted purely by value-flow and side-effect analysis.
    Heuristic,
    /// Accepted after an oracle judged its side effects ignorable.
    OracleAssisted,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Seed => "seed",
            Provenance::Heuristic => "heuristic",
            Provenance::OracleAssisted => "oracle_assisted",
        }
    }
}

/// The allocator list: member functions with their provenance.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AllocatorList {
    members: BTreeMap<String, Provenance>,
}

impl AllocatorList {
    /// The initial list: exactly the program's allocation seeds.
    pub fn seeded(p: &Program) -> AllocatorList {
        AllocatorList {
            members: p.seeds().into_iter().map(|n| (n, Provenance::Seed)).collect(),
        }
    }

    pub fn contains(&self, name: &str) -> bool {
        self.members.contains_key(name)
    }

    pub fn insert(&mut self, name: String, provenance: Provenance) {
        self.members.insert(name, provenance);
    }

    pub fn provenance(&self, name: &str) -> Option<Provenance> {
        self.members.get(name).copied()
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, Provenance)> {
        self.members.iter().map(|(n, p)| (n, *p))
    }

    pub fn member_set(&self) -> BTreeSet<String> {
        self.members.keys().cloned().collect()
    }

    /// Members found by detection, i.e. everything beyond the seeds.
    pub fn detected(&self) -> BTreeSet<String> {
        self.members
            .iter()
            .filter(|(_, p)| **p != Provenance::Seed)
            .map(|(n, _)| n.clone())
            .collect()
    }

    pub fn oracle_assisted(&self) -> BTreeSet<String> {
        self.members
            .iter()
            .filter(|(_, p)| **p == Provenance::OracleAssisted)
            .map(|(n, _)| n.clone())
            .collect()
    }
}

/// Verdict on one candidate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum IdentifyOutcome {
    Accept(Provenance),
    Reject(String),
}

/// Final decision recorded for a function, overwritten on re-analysis.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub struct DecisionRecord {
    pub accepted: bool,
    pub provenance: Option<Provenance>,
    pub reason: String,
    /// 1-based detection round the decision was made in.
    pub iteration: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DetectionOutcome {
    pub allocators: AllocatorList,
    /// Total rounds, final (empty) round included.
    pub iterations: usize,
    /// Names accepted per round, in acceptance order; the last entry is
    /// empty by construction.
    pub deltas: Vec<Vec<String>>,
    pub decisions: BTreeMap<String, DecisionRecord>,
    pub counters: OracleCounters,
}

impl DetectionOutcome {
    /// Detected members beyond the seeds.
    pub fn num_detected(&self) -> usize {
        self.allocators.detected().len()
    }

    /// Detected members that needed the oracle.
    pub fn num_oracle_assisted(&self) -> usize {
        self.allocators.oracle_assisted().len()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum DetectError {
    #[error(transparent)]
    Invalid(#[from] AnalyzeError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

/// Assemble the oracle query for a flagged function: its original source
/// when the program carries one, its rendered IR otherwise, plus the
/// flagged statements in site order.
pub fn side_effect_query(f: &Function, flagged: &BTreeSet<SiteId>) -> SideEffectQuery {
    let source = match &f.source_text {
        Some(src) => src.clone(),
        None => render_function(f),
    };
    let by_site: BTreeMap<SiteId, String> =
        f.statements.iter().map(|s| (s.site, render_statement(s))).collect();
    SideEffectQuery {
        function_name: f.name.clone(),
        source,
        flagged: flagged.iter().map(|site| (*site, by_site[site].clone())).collect(),
    }
}

/// Decide whether one candidate is a side-effect-free allocation wrapper
/// with respect to the effective allocator list `al_eff`.
///
/// The checks run cheapest-first and the first failure wins: a function
/// must return something, call an allocator it is not mutually recursive
/// with, never drop an allocation, back every return by fresh allocations
/// or NULL, forward every allocation only to returns, and finally be free
/// of side effects, either outright or per the oracle's judgment.
pub fn identify_allocator<F>(
    f: &Function,
    al_eff: &BTreeSet<String>,
    si: &SideEffectMap,
    indirect: &BTreeMap<SiteId, BTreeSet<String>>,
    consult: &mut F,
) -> Result<IdentifyOutcome, OracleError>
where
    F: FnMut(&SideEffectQuery) -> Result<Verdict, OracleError>,
{
    let returns: Vec<&crate::ir::Statement> = f.returns().collect();
    if returns.is_empty() {
        return Ok(IdentifyOutcome::Reject("no return statements".into()));
    }

    let al_sites: Vec<&crate::ir::Statement> = f
        .statements
        .iter()
        .filter(|s| is_allocator_call(s, al_eff, indirect))
        .collect();
    if al_sites.is_empty() {
        return Ok(IdentifyOutcome::Reject(
            "no allocator callsites outside its own call-graph component".into(),
        ));
    }

    for s in &al_sites {
        if matches!(&s.kind, StatementKind::Call { dst: None, .. }) {
            return Ok(IdentifyOutcome::Reject(format!(
                "allocation at site {} is discarded",
                s.site
            )));
        }
    }

    let bt = backward_track(f, al_eff, indirect);
    for r in &returns {
        let StatementKind::Return { operand } = &r.kind else { continue };
        match operand {
            None => {}
            Some(Operand::Func(g)) => {
                return Ok(IdentifyOutcome::Reject(format!(
                    "returns function constant `{g}`"
                )));
            }
            Some(Operand::Value(v)) => {
                if !bt[v] {
                    return Ok(IdentifyOutcome::Reject(format!(
                        "return value `{v}` is not always a fresh allocation or null"
                    )));
                }
            }
        }
    }

    let fw = forward_track(f, al_eff, indirect);
    let uses = uses_of(f);
    for s in &al_sites {
        let StatementKind::Call { dst: Some(d), .. } = &s.kind else { continue };
        if uses.get(d) == Some(&0) {
            return Ok(IdentifyOutcome::Reject(format!(
                "allocation `{d}` at site {} is never used",
                s.site
            )));
        }
        if !fw[d] {
            return Ok(IdentifyOutcome::Reject(format!(
                "allocation `{d}` escapes through a non-return use"
            )));
        }
    }

    let flagged = si.get(&f.name).cloned().unwrap_or_default();
    if flagged.is_empty() {
        return Ok(IdentifyOutcome::Accept(Provenance::Heuristic));
    }

    let verdict = consult(&side_effect_query(f, &flagged))?;
    match verdict.value {
        VerdictValue::Ignorable => Ok(IdentifyOutcome::Accept(Provenance::OracleAssisted)),
        VerdictValue::NotIgnorable => {
            let mut reason = "side effects not judged ignorable".to_owned();
            if let Some(note) = &verdict.note {
                reason.push_str(" (");
                reason.push_str(note);
                reason.push(')');
            }
            Ok(IdentifyOutcome::Reject(reason))
        }
    }
}

/// Run detection to a fixpoint over `p` with the given oracle.
///
/// Each round collects the unvisited functions containing allocator
/// callsites, identifies them bottom-up (so callees join before their
/// callers are judged), and reopens callers of newly accepted members.
/// Within a round the list grows live, but a candidate never counts its
/// own component's members as allocators; mutual recursion cannot
/// self-certify. Oracle verdicts are cached per function for the run.
pub fn detect_scafs(p: &Program, oracle: &Oracle) -> Result<DetectionOutcome, DetectError> {
    let baseline = analyze(p, ModeSpec::Baseline)?;
    let graph = build_call_graph(p, Some(&baseline.pts));
    let si = compute_side_effects(p, &graph);

    let mut al = AllocatorList::seeded(p);
    let mut visited: BTreeSet<String> = BTreeSet::new();
    let mut decisions: BTreeMap<String, DecisionRecord> = BTreeMap::new();
    let mut cache: BTreeMap<String, Verdict> = BTreeMap::new();
    let mut counters = OracleCounters::default();
    let mut deltas: Vec<Vec<String>> = Vec::new();

    loop {
        let iteration = deltas.len() + 1;
        let start_members = al.member_set();
        let candidates: BTreeSet<String> = p
            .defined()
            .filter(|f| {
                !start_members.contains(&f.name)
                    && !visited.contains(&f.name)
                    && f.statements
                        .iter()
                        .any(|s| is_allocator_call(s, &start_members, &graph.indirect_targets))
            })
            .map(|f| f.name.clone())
            .collect();

        let mut delta: Vec<String> = Vec::new();
        for name in bottom_up_order(&graph, &candidates) {
            let f = p.function(&name).expect("candidate is defined");
            let members = al.member_set();
            let component = graph.scc_members(&name);
            let al_eff: BTreeSet<String> = members.difference(&component).cloned().collect();

            let outcome =
                identify_allocator(f, &al_eff, &si, &graph.indirect_targets, &mut |q| {
                    if let Some(v) = cache.get(&q.function_name) {
                        return Ok(v.clone());
                    }
                    let v = oracle.classify(q)?;
                    counters.absorb(&v.counters);
                    cache.insert(q.function_name.clone(), v.clone());
                    Ok(v)
                })?;

            match outcome {
                IdentifyOutcome::Accept(provenance) => {
                    al.insert(name.clone(), provenance);
                    delta.push(name.clone());
                    let reason = match provenance {
                        Provenance::Heuristic => {
                            "returns only fresh allocations; no side effects".to_owned()
                        }
                        _ => "side effects judged ignorable by the oracle".to_owned(),
                    };
                    decisions.insert(
                        name,
                        DecisionRecord {
                            accepted: true,
                            provenance: Some(provenance),
                            reason,
                            iteration,
                        },
                    );
                }
                IdentifyOutcome::Reject(reason) => {
                    visited.insert(name.clone());
                    decisions.insert(
                        name,
                        DecisionRecord { accepted: false, provenance: None, reason, iteration },
                    );
                }
            }
        }

        // A new member changes what its callers' callsites mean.
        for m in &delta {
            for caller in graph.callers_of(m) {
                visited.remove(&caller);
            }
        }
        let grew = !delta.is_empty();
        deltas.push(delta);
        if !grew {
            break;
        }
    }

    Ok(DetectionOutcome {
        allocators: al,
        iterations: deltas.len(),
        deltas,
        decisions,
        counters,
    })
}

/// Convenience wrapper used by graph-independent callers and tests.
pub fn detection_call_graph(p: &Program) -> Result<CallGraph, AnalyzeError> {
    let baseline = analyze(p, ModeSpec::Baseline)?;
    Ok(build_call_graph(p, Some(&baseline.pts)))
}
