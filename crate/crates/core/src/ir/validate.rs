//! Structural validation.
//!
//! The parser already rejects most malformed text, but programs can also be
//! built or transformed through the API, so everything the analyses rely on
//! is (re)checked here: single assignment, operand resolution, call arity
//! and argument types, pointer-typed address operands, unique site ids, and
//! a defined entry point.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use super::{
    value_types, Callee, Function, FunctionClass, Operand, Program, SiteId, StatementKind,
    ValueType,
};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidationViolation {
    /// Function the violation is in; empty for program-level violations.
    pub function: String,
    pub site: Option<SiteId>,
    /// Stable machine-readable rule name.
    pub rule: &'static str,
    pub detail: String,
}

impl fmt::Display for ValidationViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.function.is_empty() {
            write!(f, "[{}] {}", self.rule, self.detail)
        } else if let Some(site) = self.site {
            write!(f, "[{}] {} (in {}, site {site})", self.rule, self.detail, self.function)
        } else {
            write!(f, "[{}] {} (in {})", self.rule, self.detail, self.function)
        }
    }
}

fn viol(
    out: &mut Vec<ValidationViolation>,
    function: &str,
    site: Option<SiteId>,
    rule: &'static str,
    detail: String,
) {
    out.push(ValidationViolation { function: function.to_owned(), site, rule, detail });
}

/// Check `p` and return all violations, sorted by function, site, and rule.
pub fn validate(p: &Program) -> Vec<ValidationViolation> {
    let mut out = Vec::new();

    if let Some(entry) = &p.entry {
        let defined =
            p.functions.get(entry).map(|f| f.class == FunctionClass::Defined).unwrap_or(false);
        if !defined {
            viol(
                &mut out,
                "",
                None,
                "entry-undefined",
                format!("entry `{entry}` is not a defined function"),
            );
        }
    }

    let mut seen_sites: BTreeMap<SiteId, String> = BTreeMap::new();
    for f in p.functions.values() {
        if f.class.is_external() {
            if !f.statements.is_empty() || !f.params.is_empty() {
                viol(
                    &mut out,
                    &f.name,
                    None,
                    "external-with-body",
                    format!("external `{}` must not declare params or a body", f.name),
                );
            }
            continue;
        }
        check_function(p, f, &mut out);
        for s in &f.statements {
            if let Some(prev) = seen_sites.insert(s.site, f.name.clone()) {
                viol(
                    &mut out,
                    &f.name,
                    Some(s.site),
                    "duplicate-site",
                    format!("site {} already used in `{prev}`", s.site),
                );
            }
        }
    }

    out.sort_by(|a, b| (&a.function, a.site, a.rule).cmp(&(&b.function, b.site, b.rule)));
    out
}

fn check_operand(
    out: &mut Vec<ValidationViolation>,
    p: &Program,
    fname: &str,
    values: &BTreeSet<&str>,
    site: SiteId,
    op: &Operand,
) {
    match op {
        Operand::Value(v) => {
            if !values.contains(v.as_str()) {
                viol(out, fname, Some(site), "undefined-operand", format!("unknown value `{v}`"));
            }
        }
        Operand::Func(g) => {
            if !p.functions.contains_key(g) {
                viol(out, fname, Some(site), "undefined-operand", format!("unknown function `{g}`"));
            }
        }
    }
}

/// Address positions (store target, load source, field base, icall callee)
/// must name pointer-typed local values.
fn check_address(
    out: &mut Vec<ValidationViolation>,
    fname: &str,
    values: &BTreeSet<&str>,
    types: &BTreeMap<String, ValueType>,
    site: SiteId,
    v: &str,
    role: &str,
) {
    if !values.contains(v) {
        viol(out, fname, Some(site), "undefined-operand", format!("unknown value `{v}`"));
    } else if types.get(v) == Some(&ValueType::Scalar) {
        viol(out, fname, Some(site), "address-type", format!("{role} `{v}` is scalar-typed"));
    }
}

fn check_function(p: &Program, f: &Function, out: &mut Vec<ValidationViolation>) {
    // Single assignment and function-name shadowing.
    let mut values: BTreeSet<&str> = BTreeSet::new();
    for param in &f.params {
        if !values.insert(&param.name) {
            viol(
                out,
                &f.name,
                None,
                "redefined-value",
                format!("parameter `{}` declared twice", param.name),
            );
        }
    }
    for s in &f.statements {
        if let Some(def) = s.def() {
            if !values.insert(def) {
                viol(
                    out,
                    &f.name,
                    Some(s.site),
                    "redefined-value",
                    format!("value `{def}` assigned twice"),
                );
            }
        }
    }
    for v in &values {
        if p.functions.contains_key(*v) {
            viol(
                out,
                &f.name,
                None,
                "shadows-function",
                format!("value `{v}` shadows a function name"),
            );
        }
    }

    let types = value_types(f);
    let ty_of = |op: &Operand| match op {
        Operand::Func(_) => Some(ValueType::Pointer),
        Operand::Value(v) => types.get(v.as_str()).copied(),
    };

    for s in &f.statements {
        match &s.kind {
            StatementKind::Copy { src, .. } => {
                check_operand(out, p, &f.name, &values, s.site, src);
            }
            StatementKind::Phi { srcs, .. } => {
                for op in srcs {
                    check_operand(out, p, &f.name, &values, s.site, op);
                }
                let mut tys = srcs.iter().filter_map(&ty_of);
                if let Some(first) = tys.next() {
                    if tys.any(|t| t != first) {
                        viol(
                            out,
                            &f.name,
                            Some(s.site),
                            "operand-type",
                            "phi operands mix pointer and scalar".into(),
                        );
                    }
                }
            }
            StatementKind::NullAssign { .. } => {}
            StatementKind::Store { target, payload } => {
                check_address(out, &f.name, &values, &types, s.site, target, "store target");
                if let Some(op) = payload {
                    check_operand(out, p, &f.name, &values, s.site, op);
                }
            }
            StatementKind::Load { src, .. } => {
                check_address(out, &f.name, &values, &types, s.site, src, "load source");
            }
            StatementKind::Field { base, .. } => {
                check_address(out, &f.name, &values, &types, s.site, base, "field base");
            }
            StatementKind::Call { callee, args, .. } => {
                for op in args {
                    check_operand(out, p, &f.name, &values, s.site, op);
                }
                match callee {
                    Callee::Indirect(v) => {
                        check_address(out, &f.name, &values, &types, s.site, v, "icall callee");
                    }
                    Callee::Direct(name) => match p.functions.get(name) {
                        None => viol(
                            out,
                            &f.name,
                            Some(s.site),
                            "unknown-callee",
                            format!("unknown function `{name}`"),
                        ),
                        Some(g) if g.class == FunctionClass::Defined => {
                            if g.params.len() != args.len() {
                                viol(
                                    out,
                                    &f.name,
                                    Some(s.site),
                                    "arity-mismatch",
                                    format!(
                                        "`{name}` takes {} argument(s), {} supplied",
                                        g.params.len(),
                                        args.len()
                                    ),
                                );
                            } else {
                                for (param, arg) in g.params.iter().zip(args) {
                                    if let Some(ty) = ty_of(arg) {
                                        if ty != param.ty {
                                            viol(
                                                out,
                                                &f.name,
                                                Some(s.site),
                                                "arg-type",
                                                format!(
                                                    "argument for `{}` of `{name}` is {ty}, expected {}",
                                                    param.name, param.ty
                                                ),
                                            );
                                        }
                                    }
                                }
                            }
                        }
                        Some(_) => {} // externals carry no signature to check against
                    },
                }
            }
            StatementKind::Return { operand } => {
                if let Some(op) = operand {
                    check_operand(out, p, &f.name, &values, s.site, op);
                }
            }
        }
    }
}
