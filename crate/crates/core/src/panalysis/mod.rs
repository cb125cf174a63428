//! Andersen-style inclusion-based pointer analysis.
//!
//! Three analysis modes share one constraint language and one solver:
//!
//! * **Baseline**: context-insensitive whole-program analysis. Every seed
//!   allocator callsite yields one abstract object.
//! * **Enhanced**: takes an allocator list; bodies of non-seed allocator
//!   members are excluded wholesale, and each retained callsite into the
//!   list yields its own object (seed callsites keep seed identity, calls to
//!   detected members yield modeled objects).
//! * **OneCallsite**: clones every defined non-entry, non-recursive function
//!   once per original direct callsite before analysis, so allocations in
//!   helper functions split by caller context.
//!
//! Objects are identified by `(site id, optional context tag)`; field cells
//! collapse nested fields onto the base object, keeping the object universe
//! finite. The worklist solver in [`solver`] and the naive fixpoint in
//! [`reference`] consume the same [`ConstraintSystem`] and must agree
//! set-for-set.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::ir::{self, Callee, Program, SiteId, StatementKind, ValueType};

mod clone;
mod constraints;
pub mod reference;
mod solver;

pub use clone::{one_callsite_transform, CloneMap, CloneOrigin};
pub use constraints::{generate_constraints, ArgOp, Constraint, ConstraintSystem, FnInfo};
pub use solver::{solve, SolveResult};

/// Identity of an abstract heap object: allocation site plus the context tag
/// introduced by callsite cloning (`None` outside OneCallsite mode and for
/// allocations in uncloned functions).
pub type ObjKey = (SiteId, Option<SiteId>);

/// A value position, qualified by the function instance that owns it.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ValueRef {
    pub function: String,
    pub value: String,
}

impl ValueRef {
    pub fn new(function: impl Into<String>, value: impl Into<String>) -> Self {
        ValueRef { function: function.into(), value: value.into() }
    }
}

impl fmt::Display for ValueRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}::{}", self.function, self.value)
    }
}

/// Base of an abstract object: a heap allocation or a function address.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BaseObj {
    Heap(ObjKey),
    Func(String),
}

/// Abstract object: a base object or one of its field cells. Field-of-field
/// collapses onto the base, so `AbsObj::Field` bases are never nested.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AbsObj {
    Base(BaseObj),
    Field { base: BaseObj, field: String },
}

impl AbsObj {
    pub fn heap(key: ObjKey) -> Self {
        AbsObj::Base(BaseObj::Heap(key))
    }

    pub fn func(name: impl Into<String>) -> Self {
        AbsObj::Base(BaseObj::Func(name.into()))
    }

    /// The field cell named `field` of this object's base.
    pub fn field_of(&self, field: &str) -> AbsObj {
        let base = match self {
            AbsObj::Base(b) | AbsObj::Field { base: b, .. } => b.clone(),
        };
        AbsObj::Field { base, field: field.to_owned() }
    }

    pub fn as_heap_base(&self) -> Option<ObjKey> {
        match self {
            AbsObj::Base(BaseObj::Heap(k)) => Some(*k),
            _ => None,
        }
    }

    pub fn as_func(&self) -> Option<&str> {
        match self {
            AbsObj::Base(BaseObj::Func(f)) => Some(f),
            _ => None,
        }
    }
}

fn render_key(key: ObjKey) -> String {
    match key.1 {
        Some(ctx) => format!("s{}@c{ctx}", key.0),
        None => format!("s{}", key.0),
    }
}

impl fmt::Display for AbsObj {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AbsObj::Base(BaseObj::Heap(k)) => write!(f, "{}", render_key(*k)),
            AbsObj::Base(BaseObj::Func(name)) => write!(f, "fn:{name}"),
            AbsObj::Field { base: BaseObj::Heap(k), field } => {
                write!(f, "{}.{field}", render_key(*k))
            }
            AbsObj::Field { base: BaseObj::Func(name), field } => write!(f, "fn:{name}.{field}"),
        }
    }
}

/// How an abstract heap object came to exist.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ObjOrigin {
    /// Allocated at a callsite whose target is a seed allocator.
    SeedSite,
    /// Summary object for a retained callsite into a detected allocator.
    ModeledSite,
}

impl ObjOrigin {
    pub fn as_str(self) -> &'static str {
        match self {
            ObjOrigin::SeedSite => "SeedSite",
            ObjOrigin::ModeledSite => "ModeledSite",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HeapObject {
    pub site: SiteId,
    pub context: Option<SiteId>,
    pub origin: ObjOrigin,
    /// Original (pre-cloning) name of the function containing the allocating
    /// callsite.
    pub function: String,
    /// Function instance containing the callsite; differs from `function`
    /// only inside clones.
    pub instance: String,
    /// Value receiving the allocation at the callsite, if any.
    pub receiver: Option<ValueRef>,
}

impl HeapObject {
    pub fn key(&self) -> ObjKey {
        (self.site, self.context)
    }
}

/// Solved points-to state: `pts` over values, `cells` over object cells
/// (both direct cells written through pointers and named field cells).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PointsToMap {
    pub pts: BTreeMap<ValueRef, BTreeSet<AbsObj>>,
    pub cells: BTreeMap<AbsObj, BTreeSet<AbsObj>>,
}

impl PointsToMap {
    /// Points-to set of a value; empty when untracked.
    pub fn of(&self, v: &ValueRef) -> BTreeSet<AbsObj> {
        self.pts.get(v).cloned().unwrap_or_default()
    }

    pub fn contains(&self, v: &ValueRef, obj: &AbsObj) -> bool {
        self.pts.get(v).map(|s| s.contains(obj)).unwrap_or(false)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Baseline,
    Enhanced,
    OneCallsite,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Baseline => "baseline",
            Mode::Enhanced => "enhanced",
            Mode::OneCallsite => "one_callsite",
        }
    }
}

/// Mode selector for [`analyze`]. Enhanced mode borrows the allocator list
/// (member names, seeds included).
#[derive(Debug, Clone, Copy)]
pub enum ModeSpec<'a> {
    Baseline,
    Enhanced(&'a BTreeSet<String>),
    OneCallsite,
}

impl ModeSpec<'_> {
    pub fn mode(&self) -> Mode {
        match self {
            ModeSpec::Baseline => Mode::Baseline,
            ModeSpec::Enhanced(_) => Mode::Enhanced,
            ModeSpec::OneCallsite => Mode::OneCallsite,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum AnalyzeError {
    #[error("program failed validation with {} violation(s); first: {first}", .violations.len())]
    Invalid { violations: Vec<ir::ValidationViolation>, first: String },
    #[error("bad allocator list: {0}")]
    BadAllocatorList(String),
}

pub(crate) fn validated(program: &Program) -> Result<(), AnalyzeError> {
    let violations = ir::validate(program);
    if violations.is_empty() {
        Ok(())
    } else {
        let first = violations[0].to_string();
        Err(AnalyzeError::Invalid { violations, first })
    }
}

/// Result of one analysis run. Object keys, value refs, and indirect-call
/// site ids all use *original-program* site ids, also under OneCallsite mode
/// (clone statements are mapped back through the clone map).
#[derive(Debug, Clone)]
pub struct AnalysisResult {
    pub mode: Mode,
    pub pts: PointsToMap,
    pub objects: BTreeMap<ObjKey, HeapObject>,
    /// Resolved indirect-call targets, keyed by original callsite id and
    /// unioned over clone variants.
    pub indirect: BTreeMap<SiteId, BTreeSet<String>>,
    /// SHA-256 of the original program's canonical text.
    pub program_hash: String,
    /// OneCallsite only: what was cloned and from where.
    pub clone_map: Option<CloneMap>,
    /// Enhanced only: the allocator list the analysis ran with.
    pub allocator_members: BTreeSet<String>,
}

/// Validate, build constraints for the requested mode, and solve.
pub fn analyze(program: &Program, spec: ModeSpec<'_>) -> Result<AnalysisResult, AnalyzeError> {
    validated(program)?;
    if let ModeSpec::Enhanced(al) = spec {
        check_allocator_list(program, al)?;
    }
    let system = generate_constraints(program, spec)?;
    let solved = solve(&system);
    Ok(AnalysisResult {
        mode: spec.mode(),
        pts: solved.pts,
        objects: solved.objects,
        indirect: solved.indirect,
        program_hash: program.content_hash(),
        clone_map: system.clone_map,
        allocator_members: match spec {
            ModeSpec::Enhanced(al) => al.clone(),
            _ => BTreeSet::new(),
        },
    })
}

/// An allocator list is usable for enhanced analysis when it covers every
/// seed of the program and names nothing the program does not define.
pub fn check_allocator_list(
    program: &Program,
    al: &BTreeSet<String>,
) -> Result<(), AnalyzeError> {
    for seed in program.seeds() {
        if !al.contains(&seed) {
            return Err(AnalyzeError::BadAllocatorList(format!(
                "seed allocator `{seed}` is missing from the list"
            )));
        }
    }
    for name in al {
        match program.function(name) {
            None => {
                return Err(AnalyzeError::BadAllocatorList(format!(
                    "`{name}` is not declared in the program"
                )))
            }
            Some(f)
                if f.class != ir::FunctionClass::Defined
                    && f.class != ir::FunctionClass::ExternalAllocatorSeed =>
            {
                return Err(AnalyzeError::BadAllocatorList(format!(
                    "`{name}` is external but not a seed allocator"
                )))
            }
            Some(_) => {}
        }
    }
    Ok(())
}

/// Resolve every indirect callsite of `program` against a solved points-to
/// map: targets are the function constants in the callee's points-to set,
/// filtered so defined targets match the callsite's argument count and can
/// produce the receiver's type. Externals carry no signature and pass both
/// filters.
pub fn resolve_indirect_calls(
    pts: &PointsToMap,
    program: &Program,
) -> BTreeMap<SiteId, BTreeSet<String>> {
    let mut out = BTreeMap::new();
    for f in program.defined() {
        for s in &f.statements {
            let StatementKind::Call { dst, dst_ty, callee: Callee::Indirect(v), args } = &s.kind
            else {
                continue;
            };
            let recv_ty = dst.as_ref().map(|_| *dst_ty);
            let callee = ValueRef::new(&f.name, v);
            let mut targets = BTreeSet::new();
            for obj in pts.of(&callee) {
                let Some(name) = obj.as_func() else { continue };
                if target_compatible(program, name, args.len(), recv_ty) {
                    targets.insert(name.to_owned());
                }
            }
            out.insert(s.site, targets);
        }
    }
    out
}

/// Reporting filter for indirect-call targets.
pub(crate) fn target_compatible(
    program: &Program,
    name: &str,
    argc: usize,
    recv_ty: Option<ValueType>,
) -> bool {
    let Some(g) = program.function(name) else { return false };
    if g.class != ir::FunctionClass::Defined {
        return true;
    }
    if g.params.len() != argc {
        return false;
    }
    match recv_ty {
        None => true,
        Some(want) => may_return(g).contains(&want),
    }
}

/// Types a defined function can return (`ret null` counts as pointer).
pub(crate) fn may_return(f: &ir::Function) -> BTreeSet<ValueType> {
    let types = ir::value_types(f);
    let mut out = BTreeSet::new();
    for s in f.returns() {
        let StatementKind::Return { operand } = &s.kind else { unreachable!() };
        match operand {
            None => {
                out.insert(ValueType::Pointer);
            }
            Some(ir::Operand::Func(_)) => {
                out.insert(ValueType::Pointer);
            }
            Some(ir::Operand::Value(v)) => {
                out.insert(types.get(v).copied().unwrap_or(ValueType::Pointer));
            }
        }
    }
    out
}
