//! Concrete interpreter.
//!
//! Executes a program from its entry function under a statement budget and
//! records ground facts for soundness checking: every pointer binding a
//! value ever held, and for every allocation the full callsite stack it was
//! reached through. Statement lists are straight-line; the first executed
//! return leaves the frame, and a body without one returns null. Phi and
//! indirect calls have no runtime semantics here and abort execution, as
//! does dereferencing anything but a location.
//!
//! Externals are modeled minimally: allocation seeds mint a fresh object,
//! every other external is a no-op returning null (or an opaque scalar,
//! per the result annotation). Unwritten cells read as null.

use std::collections::{BTreeMap, BTreeSet};

use crate::ir::{Callee, Function, FunctionClass, Operand, Program, SiteId, StatementKind, ValueType};

pub type ObjId = u32;

/// A concrete memory location: an object or one of its named field cells.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum ConcreteLoc {
    Obj(ObjId),
    Field(ObjId, String),
}

impl ConcreteLoc {
    pub fn obj(&self) -> ObjId {
        match self {
            ConcreteLoc::Obj(id) | ConcreteLoc::Field(id, _) => *id,
        }
    }
}

/// A runtime value.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum CVal {
    Null,
    /// Opaque scalar; the grammar has no literals, so scalars carry no
    /// numeric payload.
    Scalar,
    Fn(String),
    Loc(ConcreteLoc),
}

/// One frame of the callsite stack an allocation was reached through.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct StackEntry {
    pub caller: String,
    pub callsite: SiteId,
    pub callee: String,
}

/// The path from the entry function to a seed call; the seed callsite is
/// the last entry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AllocationRecord {
    pub stack: Vec<StackEntry>,
}

impl AllocationRecord {
    /// Site of the `call <seed>` statement itself.
    pub fn seed_site(&self) -> SiteId {
        self.stack.last().expect("allocation stack is never empty").callsite
    }

    /// Function whose body contains the seed callsite.
    pub fn allocating_function(&self) -> &str {
        &self.stack.last().expect("allocation stack is never empty").caller
    }

    /// Callsite through which the allocating function's frame was entered;
    /// `None` when the allocation happened in the entry frame.
    pub fn allocating_entered_via(&self) -> Option<SiteId> {
        let n = self.stack.len();
        (n >= 2).then(|| self.stack[n - 2].callsite)
    }
}

/// One observed pointer binding: in some activation of `function` (entered
/// through `entered_via`), `value` held `loc`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Fact {
    pub function: String,
    pub value: String,
    pub entered_via: Option<SiteId>,
    pub loc: ConcreteLoc,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ExecFacts {
    pub holdings: BTreeSet<Fact>,
    pub allocations: BTreeMap<ObjId, AllocationRecord>,
}

impl ExecFacts {
    /// Distinct pairs of facts that held the same location; the static
    /// points-to sets of such a pair must intersect.
    pub fn alias_pairs(&self) -> Vec<(&Fact, &Fact)> {
        let mut by_loc: BTreeMap<&ConcreteLoc, Vec<&Fact>> = BTreeMap::new();
        for fact in &self.holdings {
            by_loc.entry(&fact.loc).or_default().push(fact);
        }
        let mut out = Vec::new();
        for group in by_loc.values() {
            for (i, a) in group.iter().enumerate() {
                for b in &group[i + 1..] {
                    out.push((*a, *b));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ExecError {
    #[error("statement budget exhausted")]
    Budget,
    #[error("program has no defined entry function")]
    NoEntry,
    #[error("site {site}: {what} statements are not executable")]
    NonExecutable { site: SiteId, what: &'static str },
    #[error("site {site}: dereference of a non-location value")]
    InvalidDeref { site: SiteId },
    #[error("site {site}: `{value}` read before it was assigned")]
    UndefinedRead { site: SiteId, value: String },
}

struct Machine<'p> {
    p: &'p Program,
    cells: BTreeMap<ConcreteLoc, CVal>,
    facts: ExecFacts,
    next_obj: ObjId,
    remaining: usize,
    call_stack: Vec<StackEntry>,
}

/// Run the program's entry function and collect facts. Pointer parameters
/// of the entry function start as null, scalar parameters as opaque
/// scalars. The budget bounds executed statements; exhausting it is an
/// error and discards all facts.
pub fn interpret(p: &Program, budget: usize) -> Result<ExecFacts, ExecError> {
    let entry = p
        .entry
        .as_deref()
        .and_then(|e| p.function(e))
        .filter(|f| f.class == FunctionClass::Defined)
        .ok_or(ExecError::NoEntry)?;
    let args: Vec<CVal> = entry
        .params
        .iter()
        .map(|prm| match prm.ty {
            ValueType::Pointer => CVal::Null,
            ValueType::Scalar => CVal::Scalar,
        })
        .collect();
    let mut m = Machine {
        p,
        cells: BTreeMap::new(),
        facts: ExecFacts::default(),
        next_obj: 1,
        remaining: budget,
        call_stack: Vec::new(),
    };
    m.run(entry, None, args)?;
    Ok(m.facts)
}

impl<'p> Machine<'p> {
    fn run(
        &mut self,
        f: &'p Function,
        entered_via: Option<SiteId>,
        args: Vec<CVal>,
    ) -> Result<CVal, ExecError> {
        let mut env: BTreeMap<&'p str, CVal> = BTreeMap::new();
        for (prm, val) in f.params.iter().zip(args) {
            self.note(f, entered_via, &prm.name, &val);
            env.insert(&prm.name, val);
        }

        for s in &f.statements {
            if self.remaining == 0 {
                return Err(ExecError::Budget);
            }
            self.remaining -= 1;

            match &s.kind {
                StatementKind::Copy { dst, src } => {
                    let v = read_operand(&env, src, s.site)?;
                    self.assign(f, entered_via, &mut env, dst, v);
                }
                StatementKind::Phi { .. } => {
                    return Err(ExecError::NonExecutable { site: s.site, what: "phi" });
                }
                StatementKind::NullAssign { dst } => {
                    self.assign(f, entered_via, &mut env, dst, CVal::Null);
                }
                StatementKind::Store { target, payload } => {
                    let loc = as_loc(read_value(&env, target, s.site)?, s.site)?;
                    let v = match payload {
                        Some(op) => read_operand(&env, op, s.site)?,
                        None => CVal::Null,
                    };
                    self.cells.insert(loc, v);
                }
                StatementKind::Load { dst, src, .. } => {
                    let loc = as_loc(read_value(&env, src, s.site)?, s.site)?;
                    let v = self.cells.get(&loc).cloned().unwrap_or(CVal::Null);
                    self.assign(f, entered_via, &mut env, dst, v);
                }
                StatementKind::Field { dst, base, field, .. } => {
                    let loc = as_loc(read_value(&env, base, s.site)?, s.site)?;
                    let cell = ConcreteLoc::Field(loc.obj(), field.clone());
                    self.assign(f, entered_via, &mut env, dst, CVal::Loc(cell));
                }
                StatementKind::Call { dst, dst_ty, callee, args } => {
                    let Callee::Direct(g) = callee else {
                        return Err(ExecError::NonExecutable {
                            site: s.site,
                            what: "indirect call",
                        });
                    };
                    let mut argv = Vec::with_capacity(args.len());
                    for a in args {
                        argv.push(read_operand(&env, a, s.site)?);
                    }
                    let result = self.call(f, s.site, g, argv, *dst_ty)?;
                    if let Some(d) = dst {
                        self.assign(f, entered_via, &mut env, d, result);
                    }
                }
                StatementKind::Return { operand } => {
                    return match operand {
                        Some(op) => read_operand(&env, op, s.site),
                        None => Ok(CVal::Null),
                    };
                }
            }
        }
        Ok(CVal::Null)
    }

    fn call(
        &mut self,
        caller: &'p Function,
        site: SiteId,
        callee: &str,
        argv: Vec<CVal>,
        dst_ty: ValueType,
    ) -> Result<CVal, ExecError> {
        let g = self.p.function(callee).expect("validated direct callee");
        match g.class {
            FunctionClass::ExternalAllocatorSeed => {
                let id = self.next_obj;
                self.next_obj += 1;
                let mut stack = self.call_stack.clone();
                stack.push(StackEntry {
                    caller: caller.name.clone(),
                    callsite: site,
                    callee: callee.to_owned(),
                });
                self.facts.allocations.insert(id, AllocationRecord { stack });
                Ok(CVal::Loc(ConcreteLoc::Obj(id)))
            }
            FunctionClass::ExternalPure
            | FunctionClass::ExternalSideEffecting
            | FunctionClass::ExternalDeallocator => Ok(match dst_ty {
                ValueType::Scalar => CVal::Scalar,
                ValueType::Pointer => CVal::Null,
            }),
            FunctionClass::Defined => {
                self.call_stack.push(StackEntry {
                    caller: caller.name.clone(),
                    callsite: site,
                    callee: callee.to_owned(),
                });
                let r = self.run(g, Some(site), argv);
                self.call_stack.pop();
                r
            }
        }
    }

    fn assign(
        &mut self,
        f: &Function,
        entered_via: Option<SiteId>,
        env: &mut BTreeMap<&'p str, CVal>,
        dst: &'p str,
        v: CVal,
    ) {
        self.note(f, entered_via, dst, &v);
        env.insert(dst, v);
    }

    fn note(&mut self, f: &Function, entered_via: Option<SiteId>, value: &str, v: &CVal) {
        if let CVal::Loc(loc) = v {
            self.facts.holdings.insert(Fact {
                function: f.name.clone(),
                value: value.to_owned(),
                entered_via,
                loc: loc.clone(),
            });
        }
    }
}

fn read_value(env: &BTreeMap<&str, CVal>, v: &str, site: SiteId) -> Result<CVal, ExecError> {
    env.get(v).cloned().ok_or_else(|| ExecError::UndefinedRead { site, value: v.to_owned() })
}

fn read_operand(env: &BTreeMap<&str, CVal>, op: &Operand, site: SiteId) -> Result<CVal, ExecError> {
    match op {
        Operand::Value(v) => read_value(env, v, site),
        Operand::Func(g) => Ok(CVal::Fn(g.clone())),
    }
}

fn as_loc(v: CVal, site: SiteId) -> Result<ConcreteLoc, ExecError> {
    match v {
        CVal::Loc(loc) => Ok(loc),
        _ => Err(ExecError::InvalidDeref { site }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::parse_program;

    #[test]
    fn wrapper_fixture_records_stacked_allocations() {
        let p = parse_program(crate::fixtures::FIG2).unwrap();
        let facts = interpret(&p, 1000).unwrap();
        assert_eq!(facts.allocations.len(), 2);

        let first = &facts.allocations[&1];
        let sites: Vec<SiteId> = first.stack.iter().map(|e| e.callsite).collect();
        // main -> array_create (s11), array_create -> xmalloc (s3), seed (s1)
        assert_eq!(sites, vec![11, 3, 1]);
        assert_eq!(first.seed_site(), 1);
        assert_eq!(first.allocating_function(), "xmalloc");
        assert_eq!(first.allocating_entered_via(), Some(3));

        // each wrapper activation held its own object through `temp`
        let temps: Vec<&Fact> = facts
            .holdings
            .iter()
            .filter(|f| f.function == "xmalloc" && f.value == "temp")
            .collect();
        assert_eq!(temps.len(), 2);
        assert_ne!(temps[0].entered_via, temps[1].entered_via);
    }

    #[test]
    fn stores_and_loads_round_trip_through_cells() {
        let p = parse_program(
            "entry main\n\
             extern malloc kind=alloc_seed\n\
             func main(n:scalar) {\n\
               h = call malloc()\n\
               p = call malloc()\n\
               store h, p\n\
               q = load h\n\
               slot = field h, data\n\
               store slot, h\n\
               w = load slot\n\
             }\n",
        )
        .unwrap();
        let facts = interpret(&p, 1000).unwrap();
        let holding = |value: &str| {
            facts
                .holdings
                .iter()
                .find(|f| f.function == "main" && f.value == value)
                .map(|f| f.loc.clone())
        };
        assert_eq!(holding("q"), Some(ConcreteLoc::Obj(2)));
        assert_eq!(holding("slot"), Some(ConcreteLoc::Field(1, "data".into())));
        assert_eq!(holding("w"), Some(ConcreteLoc::Obj(1)));
    }

    #[test]
    fn first_return_wins_and_missing_return_is_null() {
        let p = parse_program(
            "entry main\n\
             extern malloc kind=alloc_seed\n\
             func pick(x:ptr, y:ptr) {\n\
               ret x\n\
               ret y\n\
             }\n\
             func noret(x:ptr) {\n\
               t = copy x\n\
             }\n\
             func main(n:scalar) {\n\
               a = call malloc()\n\
               b = call malloc()\n\
               r = call pick(a, b)\n\
               s = call noret(a)\n\
             }\n",
        )
        .unwrap();
        let facts = interpret(&p, 1000).unwrap();
        let r = facts.holdings.iter().find(|f| f.value == "r").unwrap();
        assert_eq!(r.loc, ConcreteLoc::Obj(1));
        assert!(!facts.holdings.iter().any(|f| f.value == "s"), "no return means null");
    }

    #[test]
    fn budget_and_non_executable_statements_error() {
        let p = parse_program(
            "entry main\n\
             extern malloc kind=alloc_seed\n\
             func main(n:scalar) {\n\
               a = call malloc()\n\
               b = call malloc()\n\
             }\n",
        )
        .unwrap();
        assert_eq!(interpret(&p, 1), Err(ExecError::Budget));

        let p = parse_program(
            "entry main\n\
             func main(n:scalar) {\n\
               a = null\n\
               b = null\n\
               c = phi a, b\n\
             }\n",
        )
        .unwrap();
        assert!(matches!(interpret(&p, 100), Err(ExecError::NonExecutable { what: "phi", .. })));
    }

    #[test]
    fn null_dereference_is_an_error() {
        let p = parse_program(
            "entry main\n\
             func main(n:scalar) {\n\
               a = null\n\
               v = load a\n\
             }\n",
        )
        .unwrap();
        assert!(matches!(interpret(&p, 100), Err(ExecError::InvalidDeref { .. })));
    }
}
