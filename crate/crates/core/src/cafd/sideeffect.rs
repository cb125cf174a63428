//! Side-effect inventory.
//!
//! For every defined function, the set of statement sites whose execution
//! is visible to callers beyond the returned value: stores of pointer data,
//! calls to deallocating or otherwise side-effecting externals, and calls
//! into functions that themselves carry such sites. NULL stores and scalar
//! stores are invisible to a pointer analysis and stay off the list, as do
//! calls to pure externals and allocation seeds.
//!
//! The inventory is independent of the allocator list, so it is computed
//! once per program and reused across detection iterations.

use std::collections::{BTreeMap, BTreeSet};

use crate::callgraph::CallGraph;
use crate::ir::{value_types, Callee, FunctionClass, Operand, Program, SiteId, StatementKind, ValueType};

pub type SideEffectMap = BTreeMap<String, BTreeSet<SiteId>>;

/// Least fixpoint over the call graph: a callsite contributes as soon as
/// any possible target contributes, so effects propagate caller-ward until
/// stable. Indirect callsites use the graph's resolved target sets; an
/// unresolved (empty) set contributes nothing.
pub fn compute_side_effects(p: &Program, graph: &CallGraph) -> SideEffectMap {
    let mut si: SideEffectMap =
        p.defined().map(|f| (f.name.clone(), BTreeSet::new())).collect();
    let types: BTreeMap<String, BTreeMap<String, ValueType>> =
        p.defined().map(|f| (f.name.clone(), value_types(f))).collect();

    loop {
        let mut changed = false;
        for f in p.defined() {
            for s in &f.statements {
                if si[&f.name].contains(&s.site) {
                    continue;
                }
                let contributes = match &s.kind {
                    StatementKind::Store { payload, .. } => match payload {
                        None => false,
                        Some(Operand::Func(_)) => true,
                        Some(Operand::Value(v)) => {
                            types[&f.name].get(v) == Some(&ValueType::Pointer)
                        }
                    },
                    StatementKind::Call { callee, .. } => match callee {
                        Callee::Direct(g) => callee_contributes(p, &si, g),
                        Callee::Indirect(_) => graph
                            .indirect_targets
                            .get(&s.site)
                            .is_some_and(|ts| ts.iter().any(|t| callee_contributes(p, &si, t))),
                    },
                    _ => false,
                };
                if contributes {
                    si.get_mut(&f.name).unwrap().insert(s.site);
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    si
}

fn callee_contributes(p: &Program, si: &SideEffectMap, g: &str) -> bool {
    match p.function(g).map(|f| f.class) {
        Some(FunctionClass::ExternalDeallocator | FunctionClass::ExternalSideEffecting) => true,
        Some(FunctionClass::ExternalPure | FunctionClass::ExternalAllocatorSeed) => false,
        Some(FunctionClass::Defined) => si.get(g).is_some_and(|sites| !sites.is_empty()),
        None => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::callgraph::build_call_graph;
    use crate::ir::parse_program;

    #[test]
    fn pointer_stores_and_impure_calls_contribute() {
        let p = parse_program(
            "extern malloc kind=alloc_seed\n\
             extern free kind=dealloc\n\
             extern now kind=pure\n\
             func w(out:ptr, n:scalar) {\n\
               p = call malloc()\n\
               store out, p\n\
               store out, null\n\
               k = copy n\n\
               store out, k\n\
               call free(p)\n\
               t = call now()\n\
               ret t\n\
             }\n",
        )
        .unwrap();
        let graph = build_call_graph(&p, None);
        let si = compute_side_effects(&p, &graph);
        let f = p.function("w").unwrap();
        let sites: Vec<SiteId> = f.statements.iter().map(|s| s.site).collect();
        // pointer store (site of `store out, p`) and the free() call
        assert_eq!(si["w"], BTreeSet::from([sites[1], sites[5]]));
    }

    #[test]
    fn effects_propagate_through_call_chains() {
        let p = parse_program(
            "extern log_ptr kind=sideeffect\n\
             func inner(x:ptr) {\n\
               call log_ptr(x)\n\
               ret null\n\
             }\n\
             func middle(x:ptr) {\n\
               t = call inner(x)\n\
               ret t\n\
             }\n\
             func outer(x:ptr) {\n\
               t = call middle(x)\n\
               ret t\n\
             }\n\
             func clean(x:ptr) {\n\
               ret x\n\
             }\n",
        )
        .unwrap();
        let graph = build_call_graph(&p, None);
        let si = compute_side_effects(&p, &graph);
        assert_eq!(si["inner"].len(), 1);
        assert_eq!(si["middle"].len(), 1);
        assert_eq!(si["outer"].len(), 1);
        assert!(si["clean"].is_empty());
    }
}
