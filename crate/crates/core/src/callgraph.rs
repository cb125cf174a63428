//! Call graph construction and bottom-up orderings.
//!
//! Indirect callsites are resolved against a solved points-to map when one
//! is supplied; without one, a conservative fallback assumes any
//! address-taken function whose signature fits the callsite. Either way the
//! resolved target sets are recorded per callsite and expanded into edges.

use std::collections::{BTreeMap, BTreeSet};

use petgraph::graph::{DiGraph, NodeIndex};

use crate::ir::{Callee, Operand, Program, SiteId, StatementKind};
use crate::panalysis::{resolve_indirect_calls, target_compatible, PointsToMap};

#[derive(Debug, Clone, Default)]
pub struct CallGraph {
    /// Every declared function, sorted by name.
    pub nodes: Vec<String>,
    /// `(caller, callsite, callee)`, indirect callsites expanded per target.
    pub edges: BTreeSet<(String, SiteId, String)>,
    /// Resolved targets of every indirect callsite (possibly empty sets).
    pub indirect_targets: BTreeMap<SiteId, BTreeSet<String>>,
}

impl CallGraph {
    /// Functions with at least one callsite targeting `name`.
    pub fn callers_of(&self, name: &str) -> BTreeSet<String> {
        self.edges
            .iter()
            .filter(|(_, _, callee)| callee == name)
            .map(|(caller, _, _)| caller.clone())
            .collect()
    }

    fn petgraph(&self) -> (DiGraph<String, ()>, BTreeMap<String, NodeIndex>) {
        let mut graph = DiGraph::new();
        let mut idx = BTreeMap::new();
        for n in &self.nodes {
            idx.insert(n.clone(), graph.add_node(n.clone()));
        }
        let mut seen = BTreeSet::new();
        for (caller, _, callee) in &self.edges {
            if seen.insert((caller, callee)) {
                if let (Some(&a), Some(&b)) = (idx.get(caller), idx.get(callee)) {
                    graph.add_edge(a, b, ());
                }
            }
        }
        (graph, idx)
    }

    /// Strongly connected components, callees-first (a component appears
    /// before every component that calls into it).
    pub fn sccs(&self) -> Vec<BTreeSet<String>> {
        let (graph, _) = self.petgraph();
        petgraph::algo::tarjan_scc(&graph)
            .into_iter()
            .map(|scc| scc.into_iter().map(|n| graph[n].clone()).collect())
            .collect()
    }

    /// Members of the component containing `name` (including `name` itself).
    pub fn scc_members(&self, name: &str) -> BTreeSet<String> {
        self.sccs()
            .into_iter()
            .find(|scc| scc.contains(name))
            .unwrap_or_else(|| BTreeSet::from([name.to_owned()]))
    }
}

/// Build the call graph of `p`. `pts` refines indirect-call targets; without
/// it, any address-taken function whose arity and result kind fit the
/// callsite is assumed callable (externals carry no signature and always
/// fit).
pub fn build_call_graph(p: &Program, pts: Option<&PointsToMap>) -> CallGraph {
    let mut graph = CallGraph {
        nodes: {
            let mut v: Vec<String> = p.functions.keys().cloned().collect();
            v.sort();
            v
        },
        ..CallGraph::default()
    };

    graph.indirect_targets = match pts {
        Some(pts) => resolve_indirect_calls(pts, p),
        None => fallback_indirect_targets(p),
    };

    for (f, s) in p.statements() {
        let StatementKind::Call { callee, .. } = &s.kind else { continue };
        match callee {
            Callee::Direct(g) => {
                graph.edges.insert((f.name.clone(), s.site, g.clone()));
            }
            Callee::Indirect(_) => {
                if let Some(targets) = graph.indirect_targets.get(&s.site) {
                    for t in targets {
                        graph.edges.insert((f.name.clone(), s.site, t.clone()));
                    }
                }
            }
        }
    }
    graph
}

/// Address-taken approximation of indirect targets, filtered per callsite by
/// arity and result kind.
fn fallback_indirect_targets(p: &Program) -> BTreeMap<SiteId, BTreeSet<String>> {
    let mut address_taken: BTreeSet<String> = BTreeSet::new();
    {
        let mut note = |op: &Operand| {
            if let Operand::Func(g) = op {
                address_taken.insert(g.clone());
            }
        };
        for (_, s) in p.statements() {
            match &s.kind {
                StatementKind::Copy { src, .. } => note(src),
                StatementKind::Phi { srcs, .. } => srcs.iter().for_each(&mut note),
                StatementKind::Store { payload: Some(op), .. } => note(op),
                StatementKind::Call { args, .. } => args.iter().for_each(&mut note),
                StatementKind::Return { operand: Some(op) } => note(op),
                _ => {}
            }
        }
    }

    let mut out = BTreeMap::new();
    for (_, s) in p.statements() {
        let StatementKind::Call { dst, dst_ty, callee: Callee::Indirect(_), args } = &s.kind
        else {
            continue;
        };
        let recv_ty = dst.as_ref().map(|_| *dst_ty);
        let targets: BTreeSet<String> = address_taken
            .iter()
            .filter(|name| target_compatible(p, name, args.len(), recv_ty))
            .cloned()
            .collect();
        out.insert(s.site, targets);
    }
    out
}

/// Order `focus` so callees come before callers; mutually recursive
/// functions land in one component and are ordered by name within it.
pub fn bottom_up_order(graph: &CallGraph, focus: &BTreeSet<String>) -> Vec<String> {
    graph
        .sccs()
        .into_iter()
        .flatten() // BTreeSet iteration keeps each component name-sorted
        .filter(|name| focus.contains(name))
        .collect()
}
