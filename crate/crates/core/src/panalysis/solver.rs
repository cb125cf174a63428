//! Worklist solver with difference propagation.
//!
//! Values and object cells share one node space; copy edges carry whole
//! sets, complex constraints watch the node whose points-to growth triggers
//! them, and indirect calls expand into bindings the first time a function
//! constant reaches their callee. Only set deltas travel through the queue,
//! so each object crosses each edge once.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::ir::{FunctionClass, SiteId, ValueType};

use super::{
    AbsObj, ArgOp, Constraint, ConstraintSystem, FnInfo, HeapObject, ObjKey, ObjOrigin,
    PointsToMap, ValueRef,
};
use super::constraints::RetOp;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum Node {
    Val(ValueRef),
    Cell(AbsObj),
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub pts: PointsToMap,
    pub objects: BTreeMap<ObjKey, HeapObject>,
    /// Per indirect callsite (original site id): targets recorded during
    /// solving, filtered like
    /// [`resolve_indirect_calls`](super::resolve_indirect_calls).
    pub indirect: BTreeMap<SiteId, BTreeSet<String>>,
}

/// Reporting filter shared by both solvers: defined targets must match the
/// callsite arity and be able to produce the receiver's type; externals
/// carry no signature and always pass.
pub(super) fn target_recordable(
    info: &FnInfo,
    argc: usize,
    recv_ty: Option<ValueType>,
) -> bool {
    if info.class != FunctionClass::Defined {
        return true;
    }
    info.arity == argc
        && match recv_ty {
            None => true,
            Some(t) => info.may_return.contains(&t),
        }
}

/// Install or upgrade the abstract object allocated when an indirect call
/// reaches a seed or modeled target. A site serving both a seed and a
/// modeled target keeps one object; seed identity wins at fixpoint
/// regardless of arrival order.
pub(super) fn register_indirect_object(
    objects: &mut BTreeMap<ObjKey, HeapObject>,
    key: ObjKey,
    origin: ObjOrigin,
    caller_function: &str,
    caller_instance: &str,
    receiver: Option<&ValueRef>,
) {
    let entry = objects.entry(key).or_insert_with(|| HeapObject {
        site: key.0,
        context: key.1,
        origin,
        function: caller_function.to_owned(),
        instance: caller_instance.to_owned(),
        receiver: receiver.cloned(),
    });
    if origin == ObjOrigin::SeedSite {
        entry.origin = ObjOrigin::SeedSite;
    }
}

struct State<'a> {
    system: &'a ConstraintSystem,
    pts: BTreeMap<Node, BTreeSet<AbsObj>>,
    succ: BTreeMap<Node, BTreeSet<Node>>,
    watches: BTreeMap<Node, Vec<usize>>,
    dirty: BTreeMap<Node, BTreeSet<AbsObj>>,
    queue: VecDeque<Node>,
    objects: BTreeMap<ObjKey, HeapObject>,
    indirect: BTreeMap<SiteId, BTreeSet<String>>,
    /// (constraint index, target) pairs already expanded.
    expanded: BTreeSet<(usize, String)>,
}

impl State<'_> {
    fn add(&mut self, node: Node, obj: AbsObj) {
        if self.pts.entry(node.clone()).or_default().insert(obj.clone()) {
            let pending = self.dirty.entry(node.clone()).or_default();
            if pending.is_empty() {
                self.queue.push_back(node);
            }
            pending.insert(obj);
        }
    }

    fn add_edge(&mut self, from: Node, to: Node) {
        if self.succ.entry(from.clone()).or_default().insert(to.clone()) {
            let existing: Vec<AbsObj> =
                self.pts.get(&from).map(|s| s.iter().cloned().collect()).unwrap_or_default();
            for obj in existing {
                self.add(to.clone(), obj);
            }
        }
    }

    fn apply(&mut self, idx: usize, delta: &[AbsObj]) {
        match &self.system.constraints[idx] {
            Constraint::Store { val, .. } => {
                for o in delta {
                    self.add_edge(Node::Val(val.clone()), Node::Cell(o.clone()));
                }
            }
            Constraint::StoreFn { func, .. } => {
                for o in delta {
                    self.add(Node::Cell(o.clone()), AbsObj::func(func));
                }
            }
            Constraint::Load { dst, .. } => {
                for o in delta {
                    self.add_edge(Node::Cell(o.clone()), Node::Val(dst.clone()));
                }
            }
            Constraint::FieldAddr { dst, field, .. } => {
                for o in delta {
                    let cell = o.field_of(field);
                    self.add(Node::Val(dst.clone()), cell);
                }
            }
            Constraint::Indirect { .. } => {
                for o in delta {
                    if let Some(g) = o.as_func() {
                        self.expand(idx, g.to_owned());
                    }
                }
            }
            Constraint::Addr { .. } | Constraint::Copy { .. } => {
                unreachable!("simple constraints are not watched")
            }
        }
    }

    fn expand(&mut self, idx: usize, target: String) {
        if !self.expanded.insert((idx, target.clone())) {
            return;
        }
        let Constraint::Indirect {
            site,
            ctx,
            args,
            recv,
            recv_ty,
            caller_function,
            caller_instance,
            ..
        } = &self.system.constraints[idx]
        else {
            unreachable!("expand is only called for indirect constraints")
        };
        let Some(info) = self.system.fn_infos.get(&target) else {
            return;
        };
        if target_recordable(info, args.len(), *recv_ty) {
            self.indirect.entry(*site).or_default().insert(target.clone());
        }
        if info.class == FunctionClass::ExternalAllocatorSeed || info.excluded {
            let origin = if info.excluded { ObjOrigin::ModeledSite } else { ObjOrigin::SeedSite };
            let key = (*site, *ctx);
            register_indirect_object(
                &mut self.objects,
                key,
                origin,
                caller_function,
                caller_instance,
                recv.as_ref(),
            );
            if let Some(recv) = recv.clone() {
                self.add(Node::Val(recv), AbsObj::heap(key));
            }
            return;
        }
        if info.class != FunctionClass::Defined || info.arity != args.len() {
            return;
        }
        // Clone the binding plan so `self` is free for mutation below.
        let params = info.params.clone();
        let returns = info.returns.clone();
        let args = args.clone();
        let recv = recv.clone();
        for (slot, arg) in params.iter().zip(&args) {
            let Some(param) = slot else { continue };
            match arg {
                ArgOp::Val(vr) => {
                    self.add_edge(Node::Val(vr.clone()), Node::Val(param.clone()));
                }
                ArgOp::Fn(g) => self.add(Node::Val(param.clone()), AbsObj::func(g)),
                ArgOp::Opaque => {}
            }
        }
        if let Some(recv) = recv {
            for ret in &returns {
                match ret {
                    RetOp::Val(vr) => {
                        self.add_edge(Node::Val(vr.clone()), Node::Val(recv.clone()));
                    }
                    RetOp::Fn(g) => self.add(Node::Val(recv.clone()), AbsObj::func(g)),
                    RetOp::Null => {}
                }
            }
        }
    }
}

/// Solve to fixpoint.
pub fn solve(system: &ConstraintSystem) -> SolveResult {
    let mut state = State {
        system,
        pts: BTreeMap::new(),
        succ: BTreeMap::new(),
        watches: BTreeMap::new(),
        dirty: BTreeMap::new(),
        queue: VecDeque::new(),
        objects: system.objects.clone(),
        indirect: BTreeMap::new(),
        expanded: BTreeSet::new(),
    };

    for (i, c) in system.constraints.iter().enumerate() {
        match c {
            Constraint::Addr { dst, obj } => state.add(Node::Val(dst.clone()), obj.clone()),
            Constraint::Copy { dst, src } => {
                state.add_edge(Node::Val(src.clone()), Node::Val(dst.clone()));
            }
            Constraint::Store { ptr, .. }
            | Constraint::StoreFn { ptr, .. }
            | Constraint::Load { ptr, .. } => {
                state.watches.entry(Node::Val(ptr.clone())).or_default().push(i);
            }
            Constraint::FieldAddr { base, .. } => {
                state.watches.entry(Node::Val(base.clone())).or_default().push(i);
            }
            Constraint::Indirect { site, callee, .. } => {
                state.indirect.entry(*site).or_default();
                state.watches.entry(Node::Val(callee.clone())).or_default().push(i);
            }
        }
    }

    while let Some(node) = state.queue.pop_front() {
        let Some(delta) = state.dirty.remove(&node) else { continue };
        let delta: Vec<AbsObj> = delta.into_iter().collect();
        if let Some(indices) = state.watches.get(&node).cloned() {
            for i in indices {
                state.apply(i, &delta);
            }
        }
        if let Some(succs) = state.succ.get(&node).cloned() {
            for s in succs {
                for obj in &delta {
                    state.add(s.clone(), obj.clone());
                }
            }
        }
    }

    let mut pts = PointsToMap::default();
    for (node, set) in state.pts {
        if set.is_empty() {
            continue;
        }
        match node {
            Node::Val(v) => {
                pts.pts.insert(v, set);
            }
            Node::Cell(c) => {
                pts.cells.insert(c, set);
            }
        }
    }
    SolveResult { pts, objects: state.objects, indirect: state.indirect }
}
