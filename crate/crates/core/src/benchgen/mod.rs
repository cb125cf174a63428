//! Seeded program generation with ground-truth labels.
//!
//! Programs are assembled from a small set of function archetypes around a
//! `malloc` seed: wrappers that genuinely qualify as custom allocation
//! functions (clean, phi-merging, or with error-path-only side effects),
//! allocators that must be rejected (the allocation escapes through a
//! second channel, gets its fields initialized, or the side effect is
//! unconditional), and inert shapes that return parameters, loads, nulls,
//! or indirect-call results. Each generated function carries a label, so a
//! detection run can be scored exactly, and the labels double as a
//! ground-truth oracle: functions whose effects are error-path-confined
//! answer ignorable, unconditional ones answer not ignorable.
//!
//! Everything is driven by one explicitly seeded RNG; equal specs yield
//! byte-identical programs.

pub mod interp;
pub mod soundness;

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ir::{parse_program, validate, Program, ValueType};

/// Knobs for one generated program.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenSpec {
    pub seed: u64,
    /// Number of randomly chosen archetype functions (the entry function
    /// and any wrapper chain come on top; indirect-call drivers bring two
    /// small target functions each).
    pub functions: usize,
    /// Length of a clean wrapper chain prepended to the random functions;
    /// zero for none.
    pub wrapper_chain_depth: usize,
    /// Probability that a wrapper-shaped function carries a side effect.
    pub side_effect_rate: f64,
    /// Probability that such a side effect is confined to an error path
    /// (making the function a genuine wrapper that needs an oracle) rather
    /// than unconditional or an escaping store.
    pub error_path_rate: f64,
    /// Probability that a non-wrapper slot becomes an indirect-call driver.
    pub icall_rate: f64,
    /// Restrict to statements the interpreter executes: no phi, no
    /// indirect calls.
    pub executable_subset: bool,
}

impl Default for GenSpec {
    fn default() -> Self {
        GenSpec {
            seed: 0,
            functions: 6,
            wrapper_chain_depth: 0,
            side_effect_rate: 0.3,
            error_path_rate: 0.5,
            icall_rate: 0.15,
            executable_subset: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GenError {
    #[error("invalid spec: {0}")]
    Invalid(String),
    #[error("infeasible spec: {0}")]
    Infeasible(String),
}

impl GenSpec {
    fn validate(&self) -> Result<(), GenError> {
        for (name, rate) in [
            ("side_effect_rate", self.side_effect_rate),
            ("error_path_rate", self.error_path_rate),
            ("icall_rate", self.icall_rate),
        ] {
            if !(0.0..=1.0).contains(&rate) || rate.is_nan() {
                return Err(GenError::Invalid(format!("{name} must lie in [0, 1], got {rate}")));
            }
        }
        if self.functions + self.wrapper_chain_depth == 0 {
            return Err(GenError::Invalid("need at least one function".into()));
        }
        if self.executable_subset && self.icall_rate > 0.0 {
            return Err(GenError::Infeasible(
                "indirect calls are not executable; an executable subset needs icall_rate = 0"
                    .into(),
            ));
        }
        Ok(())
    }
}

/// What a generated function is, by construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum GenLabel {
    /// Returns a fresh allocation, nothing else.
    CleanWrapper,
    /// Returns a phi of a fresh allocation and null.
    PhiWrapper,
    /// Returns a fresh allocation; its only side effect sits on an error
    /// path.
    ErrorPathWrapper,
    /// Returns a fresh allocation but performs an unconditional store.
    EffectfulAllocator,
    /// Returns a fresh allocation that also escapes through a parameter.
    EscapingAllocator,
    /// Returns a fresh allocation after initializing one of its fields.
    InitializingAllocator,
    /// Returns a parameter unchanged.
    Identity,
    /// Returns null.
    NullReturner,
    /// Returns a loaded cell.
    LoadReturner,
    /// Calls through a function pointer and returns the result.
    IcallDriver,
    /// Address-taken target of an indirect-call driver.
    IcallTarget,
    /// The entry function wiring everything together.
    EntryPoint,
}

impl GenLabel {
    /// Whether the function genuinely qualifies as a custom allocation
    /// function.
    pub fn is_wrapper(self) -> bool {
        matches!(
            self,
            GenLabel::CleanWrapper | GenLabel::PhiWrapper | GenLabel::ErrorPathWrapper
        )
    }
}

/// By-construction truth about one generated program.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub labels: BTreeMap<String, GenLabel>,
    /// Genuine wrappers whose side-effect inventory is nonempty (their own
    /// error path, or one inherited from a wrapped callee), so accepting
    /// them requires an oracle.
    pub oracle_needed: BTreeSet<String>,
}

impl GroundTruth {
    /// All functions that should end up on the allocator list.
    pub fn wrappers(&self) -> BTreeSet<String> {
        self.labels
            .iter()
            .filter(|(_, l)| l.is_wrapper())
            .map(|(n, _)| n.clone())
            .collect()
    }

    /// The ground-truth oracle as an annotation map: error-path effects
    /// are ignorable, unconditional ones are not.
    pub fn annotations(&self) -> BTreeMap<String, bool> {
        let mut out = BTreeMap::new();
        for name in &self.oracle_needed {
            out.insert(name.clone(), true);
        }
        for (name, label) in &self.labels {
            if *label == GenLabel::EffectfulAllocator {
                out.insert(name.clone(), false);
            }
        }
        out
    }
}

struct Builder {
    text: String,
    truth: GroundTruth,
    /// Wrapper callees available for chaining, with whether their
    /// side-effect inventory is (transitively) nonempty.
    pool: Vec<(String, bool)>,
    /// Non-entry functions the entry function must call, with their
    /// parameter types.
    wiring: Vec<(String, Vec<ValueType>)>,
}

impl Builder {
    fn new() -> Self {
        Builder {
            text: String::from(
                "entry main\n\nextern malloc kind=alloc_seed\nextern free kind=dealloc\n",
            ),
            truth: GroundTruth::default(),
            pool: vec![("malloc".into(), false)],
            wiring: Vec::new(),
        }
    }

    fn label(&mut self, name: &str, label: GenLabel) {
        self.truth.labels.insert(name.to_owned(), label);
    }

    fn pick_callee(&self, rng: &mut ChaCha8Rng) -> (String, bool) {
        self.pool[rng.random_range(0..self.pool.len())].clone()
    }

    /// Allocator-calling archetypes all take two pointer parameters and
    /// forward them to defined callees, so chained wrappers stay
    /// arity-correct; the external seed is called bare.
    fn alloc_call(callee: &str, a: &str, b: &str) -> String {
        if callee == "malloc" {
            format!("call {callee}()")
        } else {
            format!("call {callee}({a}, {b})")
        }
    }

    fn chainable(&mut self, name: &str, label: GenLabel, callee_effectful: bool) {
        self.label(name, label);
        self.pool.push((name.to_owned(), callee_effectful));
        if callee_effectful || label == GenLabel::ErrorPathWrapper {
            self.truth.oracle_needed.insert(name.to_owned());
        }
        self.wiring
            .push((name.to_owned(), vec![ValueType::Pointer, ValueType::Pointer]));
    }

    fn clean_wrapper(&mut self, name: &str, callee: &str, callee_effectful: bool) {
        let call = Self::alloc_call(callee, "diag", "msg");
        self.text.push_str(&format!(
            "\nfunc {name}(diag:ptr, msg:ptr) {{\n  t = {call}\n  ret t\n}}\n"
        ));
        self.chainable(name, GenLabel::CleanWrapper, callee_effectful);
    }

    fn phi_wrapper(&mut self, name: &str, callee: &str, callee_effectful: bool) {
        let call = Self::alloc_call(callee, "diag", "msg");
        self.text.push_str(&format!(
            "\nfunc {name}(diag:ptr, msg:ptr) {{\n  t = {call}\n  z = null\n  r = phi t, z\n  ret r\n}}\n"
        ));
        self.chainable(name, GenLabel::PhiWrapper, callee_effectful);
    }

    fn error_path_wrapper(&mut self, name: &str, callee: &str, frees: bool) {
        let call = Self::alloc_call(callee, "diag", "msg");
        if frees {
            self.text.push_str(&format!(
                "\nfunc {name}(diag:ptr, msg:ptr) {{\n  p = {call}\n  call free(msg)\n  ret p\n\
                 source <<<\nvoid *{name}(void *diag, void *msg) {{\n  void *p = {callee}();\n  \
                 if (p == NULL) {{ free(msg); }}\n  return p;\n}}\n>>>\n}}\n"
            ));
        } else {
            self.text.push_str(&format!(
                "\nfunc {name}(diag:ptr, msg:ptr) {{\n  p = {call}\n  store diag, msg\n  ret p\n\
                 source <<<\nvoid *{name}(void **diag, void *msg) {{\n  void *p = {callee}();\n  \
                 if (p == NULL) {{ *diag = msg; }}\n  return p;\n}}\n>>>\n}}\n"
            ));
        }
        self.chainable(name, GenLabel::ErrorPathWrapper, true);
    }

    fn effectful_allocator(&mut self, name: &str, callee: &str) {
        let call = Self::alloc_call(callee, "gslot", "extra");
        self.text.push_str(&format!(
            "\nfunc {name}(gslot:ptr, extra:ptr) {{\n  p = {call}\n  store gslot, extra\n  ret p\n\
             source <<<\nvoid *{name}(void **gslot, void *extra) {{\n  void *p = {callee}();\n  \
             *gslot = extra;\n  return p;\n}}\n>>>\n}}\n"
        ));
        self.label(name, GenLabel::EffectfulAllocator);
        self.wiring.push((name.to_owned(), vec![ValueType::Pointer, ValueType::Pointer]));
    }

    fn escaping_allocator(&mut self, name: &str, callee: &str) {
        let call = Self::alloc_call(callee, "out", "aux");
        self.text.push_str(&format!(
            "\nfunc {name}(out:ptr, aux:ptr) {{\n  p = {call}\n  store out, p\n  ret p\n}}\n"
        ));
        self.label(name, GenLabel::EscapingAllocator);
        self.wiring.push((name.to_owned(), vec![ValueType::Pointer, ValueType::Pointer]));
    }

    fn initializing_allocator(&mut self, name: &str, callee: &str) {
        let call = Self::alloc_call(callee, "a", "b");
        self.text.push_str(&format!(
            "\nfunc {name}(a:ptr, b:ptr) {{\n  p = {call}\n  slot = field p, data\n  \
             store slot, null\n  ret p\n}}\n"
        ));
        self.label(name, GenLabel::InitializingAllocator);
        self.wiring.push((name.to_owned(), vec![ValueType::Pointer, ValueType::Pointer]));
    }

    fn identity(&mut self, name: &str) {
        self.text.push_str(&format!("\nfunc {name}(x:ptr) {{\n  ret x\n}}\n"));
        self.label(name, GenLabel::Identity);
        self.wiring.push((name.to_owned(), vec![ValueType::Pointer]));
    }

    fn null_returner(&mut self, name: &str) {
        self.text
            .push_str(&format!("\nfunc {name}(sz:scalar) {{\n  z = null\n  ret z\n}}\n"));
        self.label(name, GenLabel::NullReturner);
        self.wiring.push((name.to_owned(), vec![ValueType::Scalar]));
    }

    fn load_returner(&mut self, name: &str) {
        self.text
            .push_str(&format!("\nfunc {name}(x:ptr) {{\n  v = load x\n  ret v\n}}\n"));
        self.label(name, GenLabel::LoadReturner);
        self.wiring.push((name.to_owned(), vec![ValueType::Pointer]));
    }

    fn icall_driver(&mut self, name: &str) {
        for t in ["t1", "t2"] {
            self.text
                .push_str(&format!("\nfunc {name}_{t}() {{\n  z = null\n  ret z\n}}\n"));
            self.label(&format!("{name}_{t}"), GenLabel::IcallTarget);
        }
        self.text.push_str(&format!(
            "\nfunc {name}(sz:scalar) {{\n  h = call malloc()\n  store h, {name}_t1\n  \
             store h, {name}_t2\n  fp = load h\n  r = icall fp()\n  ret r\n}}\n"
        ));
        self.label(name, GenLabel::IcallDriver);
        self.wiring.push((name.to_owned(), vec![ValueType::Scalar]));
    }

    fn entry(&mut self) {
        self.text.push_str("\nfunc main(n:scalar) {\n");
        let mut handles = 0usize;
        for (idx, (name, params)) in self.wiring.iter().enumerate() {
            let mut args = Vec::with_capacity(params.len());
            for ty in params {
                match ty {
                    ValueType::Scalar => args.push("n".to_owned()),
                    ValueType::Pointer => {
                        handles += 1;
                        let h = format!("h{handles}");
                        self.text.push_str(&format!("  {h} = call malloc()\n"));
                        args.push(h);
                    }
                }
            }
            self.text
                .push_str(&format!("  r{idx} = call {name}({})\n", args.join(", ")));
        }
        self.text.push_str("}\n");
        self.label("main", GenLabel::EntryPoint);
    }

    fn finish(mut self) -> (Program, GroundTruth) {
        self.entry();
        let p = parse_program(&self.text).unwrap_or_else(|e| {
            panic!("generator emitted unparsable text: {e}\n{}", self.text)
        });
        let issues = validate(&p);
        assert!(issues.is_empty(), "generator emitted invalid program: {issues:?}\n{}", self.text);
        (p, self.truth)
    }
}

/// Generate one labeled program.
pub fn generate(spec: &GenSpec) -> Result<(Program, GroundTruth), GenError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut b = Builder::new();

    for j in 1..=spec.wrapper_chain_depth {
        let callee = if j == 1 { "malloc".to_owned() } else { format!("chain{}", j - 1) };
        b.clean_wrapper(&format!("chain{j}"), &callee, false);
    }

    for i in 0..spec.functions {
        if rng.random_bool(0.5) {
            let (callee, callee_effectful) = b.pick_callee(&mut rng);
            if rng.random_bool(spec.side_effect_rate) {
                if rng.random_bool(spec.error_path_rate) {
                    let frees = rng.random_bool(0.5);
                    b.error_path_wrapper(&format!("ewrap{i}"), &callee, frees);
                } else if rng.random_bool(0.5) {
                    b.effectful_allocator(&format!("acache{i}"), &callee);
                } else {
                    b.escaping_allocator(&format!("astash{i}"), &callee);
                }
            } else if !spec.executable_subset && rng.random_bool(0.25) {
                b.phi_wrapper(&format!("pwrap{i}"), &callee, callee_effectful);
            } else {
                b.clean_wrapper(&format!("wrap{i}"), &callee, callee_effectful);
            }
        } else if spec.icall_rate > 0.0 && rng.random_bool(spec.icall_rate) {
            b.icall_driver(&format!("driver{i}"));
        } else {
            match rng.random_range(0..4u8) {
                0 => b.identity(&format!("ident{i}")),
                1 => b.null_returner(&format!("zret{i}")),
                2 => b.load_returner(&format!("getp{i}")),
                _ => {
                    let (callee, _) = b.pick_callee(&mut rng);
                    b.initializing_allocator(&format!("ainit{i}"), &callee);
                }
            }
        }
    }

    Ok(b.finish())
}

/// Build a wrapper chain of the given depth: `chain1` calls the seed, each
/// `chain{j}` wraps `chain{j-1}`. With `break_link = Some(b)` every link
/// takes uniform `(err:ptr, diag:ptr)` parameters and link `b` (counted
/// from the bottom, 1-based) stores into its error parameter on its error
/// path, so accepting link `b` and everything above it requires an oracle;
/// without a break the links take no parameters and none needs one.
pub fn wrapper_chain(depth: usize, break_link: Option<u32>) -> Result<(Program, GroundTruth), GenError> {
    if depth == 0 {
        return Err(GenError::Invalid("chain depth must be at least 1".into()));
    }
    if let Some(b) = break_link {
        if b == 0 || b as usize > depth {
            return Err(GenError::Invalid(format!(
                "break link {b} outside chain of depth {depth}"
            )));
        }
    }

    let mut text = String::from("extern malloc kind=alloc_seed\n");
    let mut truth = GroundTruth::default();
    for j in 1..=depth {
        let name = format!("chain{j}");
        let callee = if j == 1 { "malloc".to_owned() } else { format!("chain{}", j - 1) };
        let call_args = if break_link.is_some() && j > 1 { "err, diag" } else { "" };
        match break_link {
            Some(b) if b as usize == j => {
                text.push_str(&format!(
                    "\nfunc {name}(err:ptr, diag:ptr) {{\n  p = call {callee}({call_args})\n  \
                     store err, diag\n  ret p\n\
                     source <<<\nvoid *{name}(void **err, void *diag) {{\n  \
                     void *p = {callee}();\n  if (p == NULL) {{ *err = diag; }}\n  \
                     return p;\n}}\n>>>\n}}\n"
                ));
                truth.labels.insert(name.clone(), GenLabel::ErrorPathWrapper);
            }
            Some(_) => {
                text.push_str(&format!(
                    "\nfunc {name}(err:ptr, diag:ptr) {{\n  p = call {callee}({call_args})\n  ret p\n}}\n"
                ));
                truth.labels.insert(name.clone(), GenLabel::CleanWrapper);
            }
            None => {
                text.push_str(&format!(
                    "\nfunc {name}() {{\n  p = call {callee}()\n  ret p\n}}\n"
                ));
                truth.labels.insert(name.clone(), GenLabel::CleanWrapper);
            }
        }
        if break_link.is_some_and(|b| j >= b as usize) {
            truth.oracle_needed.insert(name);
        }
    }

    let p = parse_program(&text)
        .unwrap_or_else(|e| panic!("chain generator emitted unparsable text: {e}\n{text}"));
    let issues = validate(&p);
    assert!(issues.is_empty(), "chain generator emitted invalid program: {issues:?}");
    Ok((p, truth))
}
