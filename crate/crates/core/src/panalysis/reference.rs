//! Naive reference solver.
//!
//! Re-applies every constraint in full until a complete pass changes
//! nothing, re-deriving indirect-call bindings from scratch each round. No
//! worklist, no edges, no difference propagation; deliberately the simplest
//! correct reading of the inclusion rules, kept as an independent check on
//! the worklist solver.

use std::collections::{BTreeMap, BTreeSet};

use crate::ir::FunctionClass;

use super::constraints::RetOp;
use super::solver::{register_indirect_object, target_recordable, SolveResult};
use super::{
    AbsObj, ArgOp, Constraint, ConstraintSystem, HeapObject, ObjKey, ObjOrigin, PointsToMap,
    SiteId, ValueRef,
};

#[derive(Default)]
struct State {
    pts: BTreeMap<ValueRef, BTreeSet<AbsObj>>,
    cells: BTreeMap<AbsObj, BTreeSet<AbsObj>>,
    objects: BTreeMap<ObjKey, HeapObject>,
    indirect: BTreeMap<SiteId, BTreeSet<String>>,
}

impl State {
    fn add(&mut self, dst: &ValueRef, obj: AbsObj) -> bool {
        self.pts.entry(dst.clone()).or_default().insert(obj)
    }

    fn union_into_value(&mut self, dst: &ValueRef, src: BTreeSet<AbsObj>) -> bool {
        let set = self.pts.entry(dst.clone()).or_default();
        let before = set.len();
        set.extend(src);
        set.len() != before
    }

    fn union_into_cell(&mut self, cell: &AbsObj, src: BTreeSet<AbsObj>) -> bool {
        let set = self.cells.entry(cell.clone()).or_default();
        let before = set.len();
        set.extend(src);
        set.len() != before
    }

    fn value(&self, v: &ValueRef) -> BTreeSet<AbsObj> {
        self.pts.get(v).cloned().unwrap_or_default()
    }

    fn cell(&self, c: &AbsObj) -> BTreeSet<AbsObj> {
        self.cells.get(c).cloned().unwrap_or_default()
    }
}

/// Solve `system` by exhaustive re-application.
pub fn solve(system: &ConstraintSystem) -> SolveResult {
    let mut st = State { objects: system.objects.clone(), ..State::default() };
    for c in &system.constraints {
        if let Constraint::Indirect { site, .. } = c {
            st.indirect.entry(*site).or_default();
        }
    }

    loop {
        let mut changed = false;
        for c in &system.constraints {
            match c {
                Constraint::Addr { dst, obj } => {
                    changed |= st.add(dst, obj.clone());
                }
                Constraint::Copy { dst, src } => {
                    let objs = st.value(src);
                    changed |= st.union_into_value(dst, objs);
                }
                Constraint::Store { ptr, val } => {
                    let payload = st.value(val);
                    for o in st.value(ptr) {
                        changed |= st.union_into_cell(&o, payload.clone());
                    }
                }
                Constraint::StoreFn { ptr, func } => {
                    for o in st.value(ptr) {
                        changed |= st.union_into_cell(&o, BTreeSet::from([AbsObj::func(func)]));
                    }
                }
                Constraint::Load { dst, ptr } => {
                    for o in st.value(ptr) {
                        let contents = st.cell(&o);
                        changed |= st.union_into_value(dst, contents);
                    }
                }
                Constraint::FieldAddr { dst, base, field } => {
                    for o in st.value(base) {
                        changed |= st.add(dst, o.field_of(field));
                    }
                }
                Constraint::Indirect {
                    site,
                    ctx,
                    callee,
                    args,
                    recv,
                    recv_ty,
                    caller_function,
                    caller_instance,
                } => {
                    for o in st.value(callee) {
                        let Some(target) = o.as_func() else { continue };
                        let Some(info) = system.fn_infos.get(target) else { continue };
                        if target_recordable(info, args.len(), *recv_ty)
                            && st.indirect.entry(*site).or_default().insert(target.to_owned())
                        {
                            changed = true;
                        }
                        if info.class == FunctionClass::ExternalAllocatorSeed || info.excluded {
                            let origin = if info.excluded {
                                ObjOrigin::ModeledSite
                            } else {
                                ObjOrigin::SeedSite
                            };
                            let key = (*site, *ctx);
                            let before = st.objects.get(&key).map(|h| h.origin);
                            register_indirect_object(
                                &mut st.objects,
                                key,
                                origin,
                                caller_function,
                                caller_instance,
                                recv.as_ref(),
                            );
                            if st.objects.get(&key).map(|h| h.origin) != before {
                                changed = true;
                            }
                            if let Some(recv) = recv {
                                changed |= st.add(recv, AbsObj::heap(key));
                            }
                            continue;
                        }
                        if info.class != FunctionClass::Defined || info.arity != args.len() {
                            continue;
                        }
                        for (slot, arg) in info.params.iter().zip(args) {
                            let Some(param) = slot else { continue };
                            match arg {
                                ArgOp::Val(vr) => {
                                    let objs = st.value(vr);
                                    changed |= st.union_into_value(param, objs);
                                }
                                ArgOp::Fn(g) => changed |= st.add(param, AbsObj::func(g)),
                                ArgOp::Opaque => {}
                            }
                        }
                        if let Some(recv) = recv {
                            for ret in &info.returns {
                                match ret {
                                    RetOp::Val(vr) => {
                                        let objs = st.value(vr);
                                        changed |= st.union_into_value(recv, objs);
                                    }
                                    RetOp::Fn(g) => changed |= st.add(recv, AbsObj::func(g)),
                                    RetOp::Null => {}
                                }
                            }
                        }
                    }
                }
            }
        }
        if !changed {
            break;
        }
    }

    let mut pts = PointsToMap::default();
    for (v, set) in st.pts {
        if !set.is_empty() {
            pts.pts.insert(v, set);
        }
    }
    for (c, set) in st.cells {
        if !set.is_empty() {
            pts.cells.insert(c, set);
        }
    }
    SolveResult { pts, objects: st.objects, indirect: st.indirect }
}
