//! Canonical printer. [`print_program`] and [`parse_program`](super::parse_program)
//! round-trip: parsing the printed text reproduces the program, site ids
//! included, because sites are assigned in statement order on both paths.

use std::fmt::Write;

use super::{Callee, Function, Operand, Program, Statement, StatementKind, ValueType};

fn operand(op: &Operand) -> &str {
    match op {
        Operand::Value(v) => v,
        Operand::Func(f) => f,
    }
}

/// Render one statement in its textual form (no indentation, no site id).
pub fn render_statement(s: &Statement) -> String {
    match &s.kind {
        StatementKind::Copy { dst, src } => format!("{dst} = copy {}", operand(src)),
        StatementKind::Phi { dst, srcs } => {
            let ops: Vec<&str> = srcs.iter().map(operand).collect();
            format!("{dst} = phi {}", ops.join(", "))
        }
        StatementKind::NullAssign { dst } => format!("{dst} = null"),
        StatementKind::Store { target, payload } => match payload {
            Some(p) => format!("store {target}, {}", operand(p)),
            None => format!("store {target}, null"),
        },
        StatementKind::Load { dst, dst_ty, src } => {
            format!("{}{} = load {src}", dst, annot(*dst_ty))
        }
        StatementKind::Field { dst, dst_ty, base, field } => {
            format!("{}{} = field {base}, {field}", dst, annot(*dst_ty))
        }
        StatementKind::Call { dst, dst_ty, callee, args } => {
            let args: Vec<&str> = args.iter().map(operand).collect();
            let call = match callee {
                Callee::Direct(f) => format!("call {f}({})", args.join(", ")),
                Callee::Indirect(v) => format!("icall {v}({})", args.join(", ")),
            };
            match dst {
                Some(d) => format!("{}{} = {call}", d, annot(*dst_ty)),
                None => call,
            }
        }
        StatementKind::Return { operand: op } => match op {
            Some(op) => format!("ret {}", operand(op)),
            None => "ret null".to_owned(),
        },
    }
}

fn annot(ty: ValueType) -> &'static str {
    match ty {
        ValueType::Pointer => "",
        ValueType::Scalar => ":scalar",
    }
}

fn print_function(out: &mut String, f: &Function) {
    if let Some(kind) = f.class.kind_keyword() {
        let _ = writeln!(out, "extern {} kind={kind}", f.name);
        return;
    }
    let params: Vec<String> =
        f.params.iter().map(|p| format!("{}:{}", p.name, p.ty)).collect();
    let _ = writeln!(out, "func {}({}) {{", f.name, params.join(", "));
    for s in &f.statements {
        let _ = writeln!(out, "  {}", render_statement(s));
    }
    if let Some(src) = &f.source_text {
        let _ = writeln!(out, "  source <<<");
        for line in src.lines() {
            let _ = writeln!(out, "{line}");
        }
        let _ = writeln!(out, "  >>>");
    }
    let _ = writeln!(out, "}}");
}

/// Render one function on its own, source block included.
pub fn render_function(f: &Function) -> String {
    let mut out = String::new();
    print_function(&mut out, f);
    out
}

/// Canonical textual form of a program.
pub fn print_program(p: &Program) -> String {
    let mut out = String::new();
    if let Some(entry) = &p.entry {
        let _ = writeln!(out, "entry {entry}");
        out.push('\n');
    }
    let mut first = true;
    for f in p.functions.values() {
        if !first && f.class.kind_keyword().is_none() {
            out.push('\n');
        }
        print_function(&mut out, f);
        first = false;
    }
    out
}
