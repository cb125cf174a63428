//! Callsite cloning for the OneCallsite analysis mode.
//!
//! Every defined function that is not the entry point, not recursive, and
//! called directly at least once is replicated once per *original* direct
//! callsite; each callsite is retargeted to its private copy. Copies of the
//! same original callsite (arising when the caller is itself cloned) share
//! one clone, so the transform is one level of callsite context, not full
//! inlining. Originals that end up unreachable by direct calls are dropped
//! unless their address is taken or they are the entry point.

use std::collections::{BTreeMap, BTreeSet};

use indexmap::IndexMap;
use petgraph::graph::DiGraph;

use crate::ir::{Callee, Function, FunctionClass, Operand, Program, SiteId, StatementKind};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CloneOrigin {
    pub original: String,
    /// Original-program callsite the clone serves.
    pub callsite: SiteId,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CloneMap {
    /// Clone instance name to its origin.
    pub clones: BTreeMap<String, CloneOrigin>,
    /// Defined originals still present in the transformed program.
    pub kept: BTreeSet<String>,
    /// Transformed site id to the original site id it was copied from
    /// (identity for statements of kept functions).
    pub site_origin: BTreeMap<SiteId, SiteId>,
}

impl CloneMap {
    /// Original function name behind an instance name.
    pub fn origin_of<'a>(&'a self, instance: &'a str) -> &'a str {
        self.clones.get(instance).map(|c| c.original.as_str()).unwrap_or(instance)
    }

    /// Context tag of an instance: the callsite its clone serves, if cloned.
    pub fn context_of(&self, instance: &str) -> Option<SiteId> {
        self.clones.get(instance).map(|c| c.callsite)
    }

    /// Instance names covering a given original function (the original
    /// itself when kept, plus its clones), sorted.
    pub fn instances_of(&self, original: &str) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        if self.kept.contains(original) {
            out.push(original.to_owned());
        }
        out.extend(
            self.clones
                .iter()
                .filter(|(_, o)| o.original == original)
                .map(|(name, _)| name.clone()),
        );
        out
    }

    /// Instance analyzing activations of `original` entered through direct
    /// callsite `site` (the clone when one exists, the kept original
    /// otherwise).
    pub fn instance_for_callsite(&self, original: &str, site: SiteId) -> Option<String> {
        for (name, origin) in &self.clones {
            if origin.original == original && origin.callsite == site {
                return Some(name.clone());
            }
        }
        self.kept.contains(original).then(|| original.to_owned())
    }
}

fn address_taken(p: &Program) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    let mut note = |op: &Operand| {
        if let Operand::Func(g) = op {
            out.insert(g.clone());
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
    out
}

/// Functions reached through direct-call recursion (nontrivial SCC membership
/// or a direct self call).
fn recursive_functions(p: &Program) -> BTreeSet<String> {
    let mut graph: DiGraph<&str, ()> = DiGraph::new();
    let mut idx = BTreeMap::new();
    for f in p.defined() {
        idx.insert(f.name.as_str(), graph.add_node(f.name.as_str()));
    }
    let mut out = BTreeSet::new();
    for (f, s) in p.statements() {
        if let StatementKind::Call { callee: Callee::Direct(g), .. } = &s.kind {
            if let (Some(&a), Some(&b)) = (idx.get(f.name.as_str()), idx.get(g.as_str())) {
                if a == b {
                    out.insert(f.name.clone()); // direct self call
                } else {
                    graph.add_edge(a, b, ());
                }
            }
        }
    }
    for scc in petgraph::algo::tarjan_scc(&graph) {
        if scc.len() > 1 {
            for node in scc {
                out.insert(graph[node].to_owned());
            }
        }
    }
    out
}

/// Clone-instance name for `original` serving `callsite`, avoiding
/// collisions with names already in use.
fn clone_name(original: &str, callsite: SiteId, taken: &BTreeSet<String>) -> String {
    let mut name = format!("{original}__c{callsite}");
    while taken.contains(&name) {
        name.push('_');
    }
    name
}

/// Apply the transform. The returned program has freshly renumbered site ids;
/// the clone map records instance origins and the per-site origin mapping.
pub fn one_callsite_transform(p: &Program) -> (Program, CloneMap) {
    let addr_taken = address_taken(p);
    let recursive = recursive_functions(p);

    // Original direct callsites per defined callee, in site order.
    let mut callsites: BTreeMap<String, Vec<SiteId>> = BTreeMap::new();
    for (_, s) in p.statements() {
        if let StatementKind::Call { callee: Callee::Direct(g), .. } = &s.kind {
            if p.function(g).map(|f| f.class == FunctionClass::Defined).unwrap_or(false) {
                callsites.entry(g.clone()).or_default().push(s.site);
            }
        }
    }

    let clonable = |name: &str| -> bool {
        p.entry.as_deref() != Some(name)
            && !recursive.contains(name)
            && callsites.contains_key(name)
    };

    // Fix every clone's name up front so callsite retargeting and body
    // emission agree; collision avoidance sees all original names plus the
    // clone names assigned so far.
    let mut taken: BTreeSet<String> = p.functions.keys().cloned().collect();
    let mut clone_names: BTreeMap<(String, SiteId), String> = BTreeMap::new();
    for (callee, sites) in &callsites {
        if !clonable(callee) {
            continue;
        }
        for &site in sites {
            let name = clone_name(callee, site, &taken);
            taken.insert(name.clone());
            clone_names.insert((callee.clone(), site), name);
        }
    }

    // Retarget a body's direct callsites to the clone serving each original
    // callsite. Statement sites here are still original ids.
    let retarget = |f: &Function| -> Vec<crate::ir::Statement> {
        f.statements
            .iter()
            .map(|s| {
                let mut s = s.clone();
                if let StatementKind::Call { callee: Callee::Direct(g), .. } = &mut s.kind {
                    if let Some(new) = clone_names.get(&(g.clone(), s.site)) {
                        *g = new.clone();
                    }
                }
                s
            })
            .collect()
    };

    let mut clones: BTreeMap<String, CloneOrigin> = BTreeMap::new();
    let mut functions: IndexMap<String, Function> = IndexMap::new();
    for f in p.functions.values() {
        if f.class.is_external() {
            functions.insert(f.name.clone(), f.clone());
            continue;
        }
        let keep = !clonable(&f.name) || addr_taken.contains(&f.name);
        if keep {
            let mut kept = f.clone();
            kept.statements = retarget(f);
            functions.insert(kept.name.clone(), kept);
        }
        if clonable(&f.name) {
            for &site in &callsites[&f.name] {
                let name = clone_names[&(f.name.clone(), site)].clone();
                let mut c = f.clone();
                c.name = name.clone();
                c.statements = retarget(f);
                functions.insert(name.clone(), c);
                clones.insert(name, CloneOrigin { original: f.name.clone(), callsite: site });
            }
        }
    }

    // Renumber sites sequentially, remembering each statement's origin.
    let mut site_origin = BTreeMap::new();
    let mut next: SiteId = 1;
    for f in functions.values_mut() {
        for s in &mut f.statements {
            site_origin.insert(next, s.site);
            s.site = next;
            next += 1;
        }
    }

    let kept = functions
        .values()
        .filter(|f| f.class == FunctionClass::Defined && !clones.contains_key(&f.name))
        .map(|f| f.name.clone())
        .collect();
    let transformed = Program { functions, entry: p.entry.clone() };
    (transformed, CloneMap { clones, kept, site_origin })
}
