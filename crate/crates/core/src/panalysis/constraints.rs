//! Lowering of programs into inclusion constraints.
//!
//! Constraints reference *original-program* site ids even when the program
//! was rewritten by callsite cloning; clone instances are distinguished by
//! the `function` component of their [`ValueRef`]s and by object context
//! tags. Scalar-typed endpoints are dropped during lowering, so the solvers
//! only ever see pointer flow.

use std::collections::{BTreeMap, BTreeSet};

use crate::ir::{
    self, Callee, Function, FunctionClass, Operand, Program, SiteId, StatementKind, ValueType,
};

use super::{
    check_allocator_list, may_return, one_callsite_transform, validated, AbsObj, AnalyzeError,
    CloneMap, HeapObject, ModeSpec, ObjKey, ObjOrigin, ValueRef,
};

/// Argument slot of an indirect call; positions are preserved so arity
/// matching works, scalar arguments become opaque placeholders.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ArgOp {
    Val(ValueRef),
    Fn(String),
    Opaque,
}

/// Return slot of a function, as seen by call binding.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RetOp {
    Val(ValueRef),
    Fn(String),
    /// `ret null` or a scalar return: nothing flows to the receiver.
    Null,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Constraint {
    /// `obj` flows into `dst` directly.
    Addr { dst: ValueRef, obj: AbsObj },
    /// pts(src) ⊆ pts(dst).
    Copy { dst: ValueRef, src: ValueRef },
    /// For every object o in pts(ptr): pts(val) ⊆ cells(o).
    Store { ptr: ValueRef, val: ValueRef },
    /// For every object o in pts(ptr): the function constant joins cells(o).
    StoreFn { ptr: ValueRef, func: String },
    /// For every object o in pts(ptr): cells(o) ⊆ pts(dst).
    Load { dst: ValueRef, ptr: ValueRef },
    /// For every object o in pts(base): the field cell joins pts(dst).
    FieldAddr { dst: ValueRef, base: ValueRef, field: String },
    /// Indirect call, expanded on the fly as function constants reach the
    /// callee. `site` is the original callsite id; `ctx` tags objects
    /// allocated when a seed or modeled target is invoked here.
    Indirect {
        site: SiteId,
        ctx: Option<SiteId>,
        callee: ValueRef,
        args: Vec<ArgOp>,
        recv: Option<ValueRef>,
        recv_ty: Option<ValueType>,
        caller_function: String,
        caller_instance: String,
    },
}

/// Call-binding view of one function instance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FnInfo {
    pub class: FunctionClass,
    /// Enhanced mode: body excluded because the function is a non-seed
    /// allocator-list member.
    pub excluded: bool,
    pub arity: usize,
    /// Pointer-typed parameter slots; scalar params are `None`.
    pub params: Vec<Option<ValueRef>>,
    pub returns: Vec<RetOp>,
    pub may_return: BTreeSet<ValueType>,
}

#[derive(Debug, Clone)]
pub struct ConstraintSystem {
    pub constraints: Vec<Constraint>,
    /// Objects known before solving (direct seed and modeled callsites).
    /// Indirect-call expansion can add more during solving.
    pub objects: BTreeMap<ObjKey, HeapObject>,
    /// Keyed by instance name.
    pub fn_infos: BTreeMap<String, FnInfo>,
    pub clone_map: Option<CloneMap>,
}

/// Lower `program` for the requested mode. The OneCallsite mode applies
/// [`one_callsite_transform`] internally and reports everything in terms of
/// original site ids.
pub fn generate_constraints(
    program: &Program,
    spec: ModeSpec<'_>,
) -> Result<ConstraintSystem, AnalyzeError> {
    validated(program)?;
    let modeled: BTreeSet<String> = match spec {
        ModeSpec::Enhanced(al) => {
            check_allocator_list(program, al)?;
            let seeds = program.seeds();
            al.iter().filter(|m| !seeds.contains(*m)).cloned().collect()
        }
        _ => BTreeSet::new(),
    };

    let (transformed, clone_map) = match spec {
        ModeSpec::OneCallsite => {
            let (t, m) = one_callsite_transform(program);
            (t, Some(m))
        }
        _ => (program.clone(), None),
    };

    let origin_site = |site: SiteId| -> SiteId {
        match &clone_map {
            Some(m) => *m.site_origin.get(&site).unwrap_or(&site),
            None => site,
        }
    };

    let mut fn_infos = BTreeMap::new();
    for f in transformed.functions.values() {
        if f.class.is_external() {
            fn_infos.insert(
                f.name.clone(),
                FnInfo {
                    class: f.class,
                    excluded: false,
                    arity: 0,
                    params: Vec::new(),
                    returns: Vec::new(),
                    may_return: BTreeSet::new(),
                },
            );
            continue;
        }
        let types = ir::value_types(f);
        let params = f
            .params
            .iter()
            .map(|p| {
                (p.ty == ValueType::Pointer).then(|| ValueRef::new(&f.name, &p.name))
            })
            .collect();
        let mut returns = Vec::new();
        for s in f.returns() {
            let StatementKind::Return { operand } = &s.kind else { unreachable!() };
            returns.push(match operand {
                None => RetOp::Null,
                Some(Operand::Func(g)) => RetOp::Fn(g.clone()),
                Some(Operand::Value(v)) => {
                    if types.get(v) == Some(&ValueType::Pointer) {
                        RetOp::Val(ValueRef::new(&f.name, v))
                    } else {
                        RetOp::Null
                    }
                }
            });
        }
        fn_infos.insert(
            f.name.clone(),
            FnInfo {
                class: f.class,
                excluded: modeled.contains(&f.name),
                arity: f.params.len(),
                params,
                returns,
                may_return: may_return(f),
            },
        );
    }

    let mut constraints = Vec::new();
    let mut objects = BTreeMap::new();
    for f in transformed.functions.values() {
        if f.class.is_external() || fn_infos[&f.name].excluded {
            continue;
        }
        lower_function(
            f,
            &fn_infos,
            clone_map.as_ref(),
            &origin_site,
            &mut constraints,
            &mut objects,
        );
    }

    Ok(ConstraintSystem { constraints, objects, fn_infos, clone_map })
}

fn lower_function(
    f: &Function,
    fn_infos: &BTreeMap<String, FnInfo>,
    clone_map: Option<&CloneMap>,
    origin_site: &dyn Fn(SiteId) -> SiteId,
    constraints: &mut Vec<Constraint>,
    objects: &mut BTreeMap<ObjKey, HeapObject>,
) {
    let inst = f.name.as_str();
    let origin_fn =
        clone_map.map(|m| m.origin_of(inst).to_owned()).unwrap_or_else(|| inst.to_owned());
    let ctx = clone_map.and_then(|m| m.context_of(inst));
    let types = ir::value_types(f);
    let is_ptr = |v: &str| types.get(v) == Some(&ValueType::Pointer);
    let vref = |v: &str| ValueRef::new(inst, v);

    for s in &f.statements {
        match &s.kind {
            StatementKind::Copy { dst, src } => {
                lower_flow(constraints, &vref, &is_ptr, dst, src);
            }
            StatementKind::Phi { dst, srcs } => {
                for src in srcs {
                    lower_flow(constraints, &vref, &is_ptr, dst, src);
                }
            }
            StatementKind::NullAssign { .. } => {}
            StatementKind::Store { target, payload } => match payload {
                None => {}
                Some(Operand::Func(g)) => {
                    constraints
                        .push(Constraint::StoreFn { ptr: vref(target), func: g.clone() });
                }
                Some(Operand::Value(q)) => {
                    if is_ptr(q) {
                        constraints.push(Constraint::Store { ptr: vref(target), val: vref(q) });
                    }
                }
            },
            StatementKind::Load { dst, dst_ty, src } => {
                if *dst_ty == ValueType::Pointer {
                    constraints.push(Constraint::Load { dst: vref(dst), ptr: vref(src) });
                }
            }
            StatementKind::Field { dst, dst_ty, base, field } => {
                if *dst_ty == ValueType::Pointer {
                    constraints.push(Constraint::FieldAddr {
                        dst: vref(dst),
                        base: vref(base),
                        field: field.clone(),
                    });
                }
            }
            StatementKind::Return { .. } => {} // captured in FnInfo
            StatementKind::Call { dst, dst_ty, callee, args } => {
                let recv = dst
                    .as_ref()
                    .filter(|_| *dst_ty == ValueType::Pointer)
                    .map(|d| vref(d));
                match callee {
                    Callee::Indirect(v) => {
                        let args = args
                            .iter()
                            .map(|a| match a {
                                Operand::Func(g) => ArgOp::Fn(g.clone()),
                                Operand::Value(x) if is_ptr(x) => ArgOp::Val(vref(x)),
                                Operand::Value(_) => ArgOp::Opaque,
                            })
                            .collect();
                        constraints.push(Constraint::Indirect {
                            site: origin_site(s.site),
                            ctx,
                            callee: vref(v),
                            args,
                            recv,
                            recv_ty: dst.as_ref().map(|_| *dst_ty),
                            caller_function: origin_fn.clone(),
                            caller_instance: inst.to_owned(),
                        });
                    }
                    Callee::Direct(g) => {
                        let info = &fn_infos[g.as_str()];
                        if info.class == FunctionClass::ExternalAllocatorSeed || info.excluded {
                            let origin = if info.excluded {
                                ObjOrigin::ModeledSite
                            } else {
                                ObjOrigin::SeedSite
                            };
                            let key = (origin_site(s.site), ctx);
                            objects.insert(
                                key,
                                HeapObject {
                                    site: key.0,
                                    context: key.1,
                                    origin,
                                    function: origin_fn.clone(),
                                    instance: inst.to_owned(),
                                    receiver: recv.clone(),
                                },
                            );
                            if let Some(recv) = recv {
                                constraints
                                    .push(Constraint::Addr { dst: recv, obj: AbsObj::heap(key) });
                            }
                        } else if info.class == FunctionClass::Defined {
                            bind_direct_call(constraints, info, args, recv, &vref, &is_ptr);
                        }
                        // Pure, dealloc, and side-effecting externals move
                        // nothing in the points-to domain.
                    }
                }
            }
        }
    }
}

/// Copy/phi flow into `dst` from one operand.
fn lower_flow(
    constraints: &mut Vec<Constraint>,
    vref: &dyn Fn(&str) -> ValueRef,
    is_ptr: &dyn Fn(&str) -> bool,
    dst: &str,
    src: &Operand,
) {
    match src {
        Operand::Func(g) => {
            constraints.push(Constraint::Addr { dst: vref(dst), obj: AbsObj::func(g) });
        }
        Operand::Value(w) => {
            if is_ptr(dst) && is_ptr(w) {
                constraints.push(Constraint::Copy { dst: vref(dst), src: vref(w) });
            }
        }
    }
}

/// Parameter and return binding for a direct call to a defined, retained
/// callee. Arity is validated before analysis, so slots line up.
fn bind_direct_call(
    constraints: &mut Vec<Constraint>,
    info: &FnInfo,
    args: &[Operand],
    recv: Option<ValueRef>,
    vref: &dyn Fn(&str) -> ValueRef,
    is_ptr: &dyn Fn(&str) -> bool,
) {
    for (slot, arg) in info.params.iter().zip(args) {
        let Some(param) = slot else { continue };
        match arg {
            Operand::Func(g) => constraints
                .push(Constraint::Addr { dst: param.clone(), obj: AbsObj::func(g) }),
            Operand::Value(a) if is_ptr(a) => {
                constraints.push(Constraint::Copy { dst: param.clone(), src: vref(a) });
            }
            Operand::Value(_) => {}
        }
    }
    if let Some(recv) = recv {
        for ret in &info.returns {
            match ret {
                RetOp::Val(vr) => {
                    constraints.push(Constraint::Copy { dst: recv.clone(), src: vr.clone() });
                }
                RetOp::Fn(g) => {
                    constraints.push(Constraint::Addr { dst: recv.clone(), obj: AbsObj::func(g) });
                }
                RetOp::Null => {}
            }
        }
    }
}
