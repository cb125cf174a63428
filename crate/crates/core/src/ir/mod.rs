//! Textual intermediate representation for pointer programs.
//!
//! A [`Program`] is an ordered collection of functions. Defined functions
//! carry a flat statement list in an SSA-like form (single assignment per
//! value name, explicit `phi` merges, no control flow); external functions
//! carry only an effect class. Every statement owns a program-unique
//! [`SiteId`] assigned in parse order, which downstream analyses use as the
//! identity of callsites, stores, and allocation sites.

use std::collections::BTreeMap;
use std::fmt;

use indexmap::IndexMap;
use sha2::{Digest, Sha256};

mod parse;
mod print;
mod validate;

pub use parse::{parse_program, ParseError};
pub use print::{print_program, render_function, render_statement};
pub use validate::{validate, ValidationViolation};

/// Program-unique identifier of a statement position.
pub type SiteId = u32;

/// Static type of a value: pointer-typed values participate in the points-to
/// domain, scalar values are carried but never tracked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ValueType {
    Pointer,
    Scalar,
}

impl fmt::Display for ValueType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValueType::Pointer => write!(f, "ptr"),
            ValueType::Scalar => write!(f, "scalar"),
        }
    }
}

/// A non-null operand position: either a local value or a function-name
/// constant (the address of a function).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Operand {
    Value(String),
    Func(String),
}

impl Operand {
    pub fn as_value(&self) -> Option<&str> {
        match self {
            Operand::Value(v) => Some(v),
            Operand::Func(_) => None,
        }
    }
}

/// Callee position of a call statement.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Callee {
    /// `call name(...)`: the target is a function named at the callsite.
    Direct(String),
    /// `icall fp(...)`: the target is whatever the value `fp` points to.
    Indirect(String),
}

/// Statement payload. `store p, null` is represented by a `None` payload and
/// `ret null` by a `None` operand; `null` is not a general operand.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StatementKind {
    /// `v = copy w`
    Copy { dst: String, src: Operand },
    /// `v = phi a, b, ...`
    Phi { dst: String, srcs: Vec<Operand> },
    /// `v = null`
    NullAssign { dst: String },
    /// `store p, q` / `store p, null`
    Store { target: String, payload: Option<Operand> },
    /// `v = load p`
    Load { dst: String, dst_ty: ValueType, src: String },
    /// `v = field p, name` (address of a named field)
    Field { dst: String, dst_ty: ValueType, base: String, field: String },
    /// `v = call f(...)`, `call f(...)`, `v = icall fp(...)`, `icall fp(...)`.
    /// `dst_ty` is meaningful only when `dst` is present.
    Call { dst: Option<String>, dst_ty: ValueType, callee: Callee, args: Vec<Operand> },
    /// `ret v` / `ret null`
    Return { operand: Option<Operand> },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Statement {
    pub site: SiteId,
    pub kind: StatementKind,
}

impl Statement {
    /// Name defined by this statement, if any.
    pub fn def(&self) -> Option<&str> {
        match &self.kind {
            StatementKind::Copy { dst, .. }
            | StatementKind::Phi { dst, .. }
            | StatementKind::NullAssign { dst }
            | StatementKind::Load { dst, .. }
            | StatementKind::Field { dst, .. } => Some(dst),
            StatementKind::Call { dst, .. } => dst.as_deref(),
            StatementKind::Store { .. } | StatementKind::Return { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Param {
    pub name: String,
    pub ty: ValueType,
}

/// Effect class of a function declaration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FunctionClass {
    /// Declared with `func`, body present.
    Defined,
    /// `extern ... kind=pure`: no caller-visible effects, returns nothing of
    /// interest to the points-to domain.
    ExternalPure,
    /// `extern ... kind=sideeffect`: observable effects, always side-effecting.
    ExternalSideEffecting,
    /// `extern ... kind=dealloc`: frees its argument; side-effecting.
    ExternalDeallocator,
    /// `extern ... kind=alloc_seed`: a system allocator; every callsite is an
    /// allocation site.
    ExternalAllocatorSeed,
}

impl FunctionClass {
    pub fn is_external(self) -> bool {
        !matches!(self, FunctionClass::Defined)
    }

    pub fn kind_keyword(self) -> Option<&'static str> {
        match self {
            FunctionClass::Defined => None,
            FunctionClass::ExternalPure => Some("pure"),
            FunctionClass::ExternalSideEffecting => Some("sideeffect"),
            FunctionClass::ExternalDeallocator => Some("dealloc"),
            FunctionClass::ExternalAllocatorSeed => Some("alloc_seed"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Function {
    pub name: String,
    pub class: FunctionClass,
    /// Externals have no declared parameter list; calls to them are not
    /// arity-checked.
    pub params: Vec<Param>,
    pub statements: Vec<Statement>,
    /// Verbatim original-source excerpt from a `source <<< ... >>>` block.
    pub source_text: Option<String>,
}

impl Function {
    pub fn returns(&self) -> impl Iterator<Item = &Statement> {
        self.statements
            .iter()
            .filter(|s| matches!(s.kind, StatementKind::Return { .. }))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Program {
    /// Functions in declaration order. Declaration order fixes site-id
    /// assignment and canonical printing.
    pub functions: IndexMap<String, Function>,
    /// Designated entry point (`entry NAME`), used by the interpreter and
    /// protected from cloning by context-sensitivity transforms.
    pub entry: Option<String>,
}

impl Program {
    pub fn function(&self, name: &str) -> Option<&Function> {
        self.functions.get(name)
    }

    /// Defined functions in declaration order.
    pub fn defined(&self) -> impl Iterator<Item = &Function> {
        self.functions.values().filter(|f| f.class == FunctionClass::Defined)
    }

    /// Names of seed allocators (`kind=alloc_seed`).
    pub fn seeds(&self) -> std::collections::BTreeSet<String> {
        self.functions
            .values()
            .filter(|f| f.class == FunctionClass::ExternalAllocatorSeed)
            .map(|f| f.name.clone())
            .collect()
    }

    /// All statements of all defined functions, with their enclosing function.
    pub fn statements(&self) -> impl Iterator<Item = (&Function, &Statement)> {
        self.defined().flat_map(|f| f.statements.iter().map(move |s| (f, s)))
    }

    /// Largest site id in use (0 when the program has no statements).
    pub fn max_site(&self) -> SiteId {
        self.statements().map(|(_, s)| s.site).max().unwrap_or(0)
    }

    /// Map from site id to (function name, statement index).
    pub fn site_index(&self) -> BTreeMap<SiteId, (String, usize)> {
        let mut out = BTreeMap::new();
        for f in self.defined() {
            for (i, s) in f.statements.iter().enumerate() {
                out.insert(s.site, (f.name.clone(), i));
            }
        }
        out
    }

    /// Canonical textual form; parsing it back yields an equal program.
    pub fn canonical_text(&self) -> String {
        print_program(self)
    }

    /// Hex SHA-256 of the canonical text, used to pair analysis results that
    /// came from the same program.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.canonical_text().as_bytes());
        let digest = h.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Infer the static type of every param and defined value of `f`.
///
/// Copy/phi results take the type of their operands, resolved by fixpoint so
/// textual order does not matter; copy/phi cycles with no typed anchor
/// default to pointer. Function-name constants are pointers.
pub fn value_types(f: &Function) -> BTreeMap<String, ValueType> {
    let mut types: BTreeMap<String, Option<ValueType>> = BTreeMap::new();
    for p in &f.params {
        types.insert(p.name.clone(), Some(p.ty));
    }
    // Anchor the values whose type is intrinsic to their defining statement.
    for s in &f.statements {
        match &s.kind {
            StatementKind::NullAssign { dst } => {
                types.insert(dst.clone(), Some(ValueType::Pointer));
            }
            StatementKind::Load { dst, dst_ty, .. }
            | StatementKind::Field { dst, dst_ty, .. } => {
                types.insert(dst.clone(), Some(*dst_ty));
            }
            StatementKind::Call { dst: Some(dst), dst_ty, .. } => {
                types.insert(dst.clone(), Some(*dst_ty));
            }
            StatementKind::Copy { dst, .. } | StatementKind::Phi { dst, .. } => {
                types.entry(dst.clone()).or_insert(None);
            }
            _ => {}
        }
    }
    let operand_type = |types: &BTreeMap<String, Option<ValueType>>, op: &Operand| match op {
        Operand::Func(_) => Some(ValueType::Pointer),
        Operand::Value(v) => types.get(v).copied().flatten(),
    };
    loop {
        let mut changed = false;
        for s in &f.statements {
            let (dst, resolved) = match &s.kind {
                StatementKind::Copy { dst, src } => (dst, operand_type(&types, src)),
                StatementKind::Phi { dst, srcs } => {
                    (dst, srcs.iter().find_map(|op| operand_type(&types, op)))
                }
                _ => continue,
            };
            if let Some(ty) = resolved {
                let slot = types.entry(dst.clone()).or_insert(None);
                if slot.is_none() {
                    *slot = Some(ty);
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    types
        .into_iter()
        .map(|(k, v)| (k, v.unwrap_or(ValueType::Pointer)))
        .collect()
}
