//! Line-oriented parser for the textual program form.
//!
//! The grammar is deliberately flat: one directive or statement per line,
//! `#` starts a comment outside of source blocks, and function bodies are
//! brace-delimited. Values may be referenced before their defining line
//! (phi cycles), so each body is scanned for definitions before statements
//! are resolved.

use indexmap::IndexMap;

use super::{
    Callee, Function, FunctionClass, Operand, Param, Program, Statement, StatementKind, ValueType,
};
use std::collections::BTreeSet;
use std::fmt;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    /// 1-based source line the error was detected on.
    pub line: usize,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

impl std::error::Error for ParseError {}

fn err<T>(line: usize, message: impl Into<String>) -> Result<T, ParseError> {
    Err(ParseError { line, message: message.into() })
}

fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Strip a trailing `#` comment. Only used outside source blocks, where no
/// quoting construct exists, so the first `#` always starts a comment.
fn strip_comment(line: &str) -> &str {
    match line.find('#') {
        Some(i) => &line[..i],
        None => line,
    }
}

struct Cursor<'a> {
    lines: Vec<&'a str>,
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn line_no(&self) -> usize {
        self.pos + 1
    }
}

pub fn parse_program(text: &str) -> Result<Program, ParseError> {
    let lines: Vec<&str> = text.lines().collect();

    // First pass: collect every declared function name so that operands and
    // call targets can be resolved regardless of declaration order.
    let mut names: BTreeSet<String> = BTreeSet::new();
    {
        let mut in_source = false;
        for (i, raw) in lines.iter().enumerate() {
            if in_source {
                if raw.trim() == ">>>" {
                    in_source = false;
                }
                continue;
            }
            let line = strip_comment(raw).trim();
            if line == "source <<<" {
                in_source = true;
                continue;
            }
            let name = if let Some(rest) = line.strip_prefix("extern ") {
                rest.split_whitespace().next().map(str::to_owned)
            } else if let Some(rest) = line.strip_prefix("func ") {
                rest.split('(').next().map(|s| s.trim().to_owned())
            } else {
                None
            };
            if let Some(name) = name {
                if !is_ident(&name) {
                    return err(i + 1, format!("invalid function name `{name}`"));
                }
                if !names.insert(name.clone()) {
                    return err(i + 1, format!("function `{name}` declared twice"));
                }
            }
        }
        if in_source {
            return err(lines.len(), "unterminated source block");
        }
    }

    let mut cursor = Cursor { lines, pos: 0 };
    let mut functions: IndexMap<String, Function> = IndexMap::new();
    let mut entry: Option<String> = None;
    let mut next_site: u32 = 1;

    while cursor.pos < cursor.lines.len() {
        let line_no = cursor.line_no();
        let line = strip_comment(cursor.lines[cursor.pos]).trim().to_owned();
        if line.is_empty() {
            cursor.pos += 1;
            continue;
        }
        if let Some(rest) = line.strip_prefix("entry ") {
            let name = rest.trim();
            if entry.is_some() {
                return err(line_no, "entry declared twice");
            }
            if !names.contains(name) {
                return err(line_no, format!("entry names unknown function `{name}`"));
            }
            entry = Some(name.to_owned());
            cursor.pos += 1;
        } else if let Some(rest) = line.strip_prefix("extern ") {
            let f = parse_extern(rest.trim(), line_no)?;
            functions.insert(f.name.clone(), f);
            cursor.pos += 1;
        } else if line.starts_with("func ") {
            let f = parse_func(&mut cursor, &names, &mut next_site)?;
            functions.insert(f.name.clone(), f);
        } else {
            return err(line_no, format!("expected a declaration, found `{line}`"));
        }
    }

    Ok(Program { functions, entry })
}

fn parse_extern(rest: &str, line_no: usize) -> Result<Function, ParseError> {
    let mut parts = rest.split_whitespace();
    let name = match parts.next() {
        Some(n) => n.to_owned(),
        None => return err(line_no, "extern requires a name"),
    };
    let kind = match parts.next() {
        Some(k) => k,
        None => return err(line_no, "extern requires `kind=...`"),
    };
    if parts.next().is_some() {
        return err(line_no, "unexpected trailing tokens on extern declaration");
    }
    let class = match kind.strip_prefix("kind=") {
        Some("pure") => FunctionClass::ExternalPure,
        Some("sideeffect") => FunctionClass::ExternalSideEffecting,
        Some("dealloc") => FunctionClass::ExternalDeallocator,
        Some("alloc_seed") => FunctionClass::ExternalAllocatorSeed,
        Some(other) => return err(line_no, format!("unknown extern kind `{other}`")),
        None => return err(line_no, "extern requires `kind=...`"),
    };
    Ok(Function { name, class, params: Vec::new(), statements: Vec::new(), source_text: None })
}

fn parse_func(
    cursor: &mut Cursor<'_>,
    names: &BTreeSet<String>,
    next_site: &mut u32,
) -> Result<Function, ParseError> {
    let header_line = cursor.line_no();
    let header = strip_comment(cursor.lines[cursor.pos]).trim().to_owned();
    let rest = header.strip_prefix("func ").expect("caller checked prefix");
    let open = match rest.find('(') {
        Some(i) => i,
        None => return err(header_line, "func header requires a parameter list"),
    };
    let name = rest[..open].trim().to_owned();
    let close = match rest.rfind(')') {
        Some(i) if i > open => i,
        _ => return err(header_line, "unclosed parameter list"),
    };
    if rest[close + 1..].trim() != "{" {
        return err(header_line, "func header must end with `{`");
    }
    let mut params = Vec::new();
    let param_src = rest[open + 1..close].trim();
    if !param_src.is_empty() {
        for piece in param_src.split(',') {
            let piece = piece.trim();
            let (pname, ty) = match piece.split_once(':') {
                Some((n, t)) => (n.trim(), t.trim()),
                None => {
                    return err(
                        header_line,
                        format!("parameter `{piece}` requires a `:ptr` or `:scalar` annotation"),
                    )
                }
            };
            let ty = match ty {
                "ptr" => ValueType::Pointer,
                "scalar" => ValueType::Scalar,
                other => return err(header_line, format!("unknown parameter type `{other}`")),
            };
            if !is_ident(pname) {
                return err(header_line, format!("invalid parameter name `{pname}`"));
            }
            params.push(Param { name: pname.to_owned(), ty });
        }
    }
    cursor.pos += 1;

    // Collect body lines up to the closing brace, separating statement lines
    // from raw source-block content.
    enum BodyLine {
        Statement { line_no: usize, text: String },
        SourceBlock { line_no: usize, text: String },
    }
    let mut body: Vec<BodyLine> = Vec::new();
    let mut closed = false;
    while cursor.pos < cursor.lines.len() {
        let line_no = cursor.line_no();
        let raw = cursor.lines[cursor.pos];
        let line = strip_comment(raw).trim();
        if line == "}" {
            cursor.pos += 1;
            closed = true;
            break;
        }
        if line == "source <<<" {
            cursor.pos += 1;
            let mut content: Vec<&str> = Vec::new();
            let mut terminated = false;
            while cursor.pos < cursor.lines.len() {
                let raw = cursor.lines[cursor.pos];
                cursor.pos += 1;
                if raw.trim() == ">>>" {
                    terminated = true;
                    break;
                }
                content.push(raw);
            }
            if !terminated {
                return err(line_no, "unterminated source block");
            }
            body.push(BodyLine::SourceBlock { line_no, text: content.join("\n") });
            continue;
        }
        if line.starts_with("func ") {
            return err(line_no, "nested function declaration");
        }
        if !line.is_empty() {
            body.push(BodyLine::Statement { line_no, text: line.to_owned() });
        }
        cursor.pos += 1;
    }
    if !closed {
        return err(cursor.line_no(), format!("function `{name}` is missing its closing brace"));
    }

    // Definition scan: single assignment is enforced here, and the resulting
    // value set drives operand resolution below.
    let mut values: BTreeSet<String> = BTreeSet::new();
    for p in &params {
        if !values.insert(p.name.clone()) {
            return err(header_line, format!("parameter `{}` declared twice", p.name));
        }
    }
    for entry in &body {
        let BodyLine::Statement { line_no, text } = entry else { continue };
        let keyword = text.split_whitespace().next().unwrap_or("");
        if matches!(keyword, "store" | "ret" | "call" | "icall") {
            continue;
        }
        if let Some((lhs, _)) = text.split_once('=') {
            let def = lhs.trim();
            let def = def.split(':').next().unwrap_or(def).trim();
            if !is_ident(def) {
                return err(*line_no, format!("invalid value name `{def}`"));
            }
            if !values.insert(def.to_owned()) {
                return err(*line_no, format!("value `{def}` assigned twice"));
            }
        }
    }

    let mut statements = Vec::new();
    let mut source_text: Option<String> = None;
    for entry in body {
        match entry {
            BodyLine::SourceBlock { line_no, text } => {
                if source_text.is_some() {
                    return err(line_no, "function has two source blocks");
                }
                source_text = Some(text);
            }
            BodyLine::Statement { line_no, text } => {
                let kind = parse_statement(&text, line_no, &values, names)?;
                statements.push(Statement { site: *next_site, kind });
                *next_site += 1;
            }
        }
    }

    Ok(Function { name, class: FunctionClass::Defined, params, statements, source_text })
}

/// Resolve a non-null operand token against the local value set, falling back
/// to function-name constants.
fn resolve_operand(
    tok: &str,
    line_no: usize,
    values: &BTreeSet<String>,
    names: &BTreeSet<String>,
) -> Result<Operand, ParseError> {
    if tok == "null" {
        return err(
            line_no,
            "null is only legal as a whole right-hand side, store payload, or return operand",
        );
    }
    if !is_ident(tok) {
        return err(line_no, format!("invalid operand `{tok}`"));
    }
    if values.contains(tok) {
        Ok(Operand::Value(tok.to_owned()))
    } else if names.contains(tok) {
        Ok(Operand::Func(tok.to_owned()))
    } else {
        err(line_no, format!("unknown value or function `{tok}`"))
    }
}

/// Resolve a token that must name a local value (address positions, icall
/// callees).
fn resolve_value(
    tok: &str,
    line_no: usize,
    values: &BTreeSet<String>,
    names: &BTreeSet<String>,
) -> Result<String, ParseError> {
    if tok == "null" {
        return err(line_no, "null is not legal here");
    }
    if !is_ident(tok) {
        return err(line_no, format!("invalid operand `{tok}`"));
    }
    if values.contains(tok) {
        Ok(tok.to_owned())
    } else if names.contains(tok) {
        err(line_no, format!("`{tok}` names a function where a value is required"))
    } else {
        err(line_no, format!("unknown value `{tok}`"))
    }
}

fn parse_statement(
    text: &str,
    line_no: usize,
    values: &BTreeSet<String>,
    names: &BTreeSet<String>,
) -> Result<StatementKind, ParseError> {
    let keyword = text.split_whitespace().next().unwrap_or("");
    match keyword {
        "store" => {
            let rest = text["store".len()..].trim();
            let (target, payload) = match rest.split_once(',') {
                Some((t, p)) => (t.trim(), p.trim()),
                None => return err(line_no, "store requires `store target, payload`"),
            };
            let target = resolve_value(target, line_no, values, names)?;
            let payload = if payload == "null" {
                None
            } else {
                Some(resolve_operand(payload, line_no, values, names)?)
            };
            Ok(StatementKind::Store { target, payload })
        }
        "ret" => {
            let rest = text["ret".len()..].trim();
            if rest.is_empty() {
                return err(line_no, "ret requires an operand (use `ret null`)");
            }
            let operand = if rest == "null" {
                None
            } else {
                Some(resolve_operand(rest, line_no, values, names)?)
            };
            Ok(StatementKind::Return { operand })
        }
        "call" | "icall" => parse_call(text, line_no, None, values, names),
        _ => {
            let (lhs, rhs) = match text.split_once('=') {
                Some((l, r)) => (l.trim(), r.trim()),
                None => return err(line_no, format!("unrecognized statement `{text}`")),
            };
            let (dst, annot) = match lhs.split_once(':') {
                Some((d, a)) => (d.trim(), Some(a.trim())),
                None => (lhs, None),
            };
            if !is_ident(dst) {
                return err(line_no, format!("invalid value name `{dst}`"));
            }
            let dst_ty = match annot {
                None => None,
                Some("scalar") => Some(ValueType::Scalar),
                Some("ptr") => Some(ValueType::Pointer),
                Some(other) => return err(line_no, format!("unknown result type `{other}`")),
            };
            let rhs_keyword = rhs.split(|c: char| c.is_whitespace() || c == '(').next().unwrap_or("");
            let annotatable = matches!(rhs_keyword, "load" | "field" | "call" | "icall");
            if dst_ty.is_some() && !annotatable {
                return err(
                    line_no,
                    "result type annotations are only legal on load/field/call results",
                );
            }
            let dst = dst.to_owned();
            match rhs_keyword {
                "copy" => {
                    let src = rhs["copy".len()..].trim();
                    let src = resolve_operand(src, line_no, values, names)?;
                    Ok(StatementKind::Copy { dst, src })
                }
                "phi" => {
                    let srcs_text = rhs["phi".len()..].trim();
                    let mut srcs = Vec::new();
                    for piece in srcs_text.split(',') {
                        srcs.push(resolve_operand(piece.trim(), line_no, values, names)?);
                    }
                    if srcs.len() < 2 {
                        return err(line_no, "phi requires at least two operands");
                    }
                    Ok(StatementKind::Phi { dst, srcs })
                }
                "null" if rhs == "null" => Ok(StatementKind::NullAssign { dst }),
                "load" => {
                    let src = rhs["load".len()..].trim();
                    let src = resolve_value(src, line_no, values, names)?;
                    Ok(StatementKind::Load {
                        dst,
                        dst_ty: dst_ty.unwrap_or(ValueType::Pointer),
                        src,
                    })
                }
                "field" => {
                    let rest = rhs["field".len()..].trim();
                    let (base, field) = match rest.split_once(',') {
                        Some((b, f)) => (b.trim(), f.trim()),
                        None => return err(line_no, "field requires `field base, name`"),
                    };
                    let base = resolve_value(base, line_no, values, names)?;
                    if !is_ident(field) {
                        return err(line_no, format!("invalid field name `{field}`"));
                    }
                    Ok(StatementKind::Field {
                        dst,
                        dst_ty: dst_ty.unwrap_or(ValueType::Pointer),
                        base,
                        field: field.to_owned(),
                    })
                }
                "call" | "icall" => {
                    parse_call(rhs, line_no, Some((dst, dst_ty.unwrap_or(ValueType::Pointer))), values, names)
                }
                _ => err(line_no, format!("unrecognized statement `{text}`")),
            }
        }
    }
}

fn parse_call(
    text: &str,
    line_no: usize,
    dst: Option<(String, ValueType)>,
    values: &BTreeSet<String>,
    names: &BTreeSet<String>,
) -> Result<StatementKind, ParseError> {
    let indirect = text.starts_with("icall");
    let rest = text[if indirect { "icall".len() } else { "call".len() }..].trim();
    let open = match rest.find('(') {
        Some(i) => i,
        None => return err(line_no, "call requires an argument list"),
    };
    let target = rest[..open].trim();
    let close = match rest.rfind(')') {
        Some(i) if i >= open => i,
        _ => return err(line_no, "unclosed argument list"),
    };
    if !rest[close + 1..].trim().is_empty() {
        return err(line_no, "unexpected trailing tokens after call");
    }
    let mut args = Vec::new();
    let args_src = rest[open + 1..close].trim();
    if !args_src.is_empty() {
        for piece in args_src.split(',') {
            let piece = piece.trim();
            if piece == "null" {
                return err(line_no, "null is not legal as a call argument");
            }
            args.push(resolve_operand(piece, line_no, values, names)?);
        }
    }
    let callee = if indirect {
        if names.contains(target) && !values.contains(target) {
            return err(line_no, format!("icall callee `{target}` must be a value"));
        }
        Callee::Indirect(resolve_value(target, line_no, values, names)?)
    } else {
        if values.contains(target) {
            return err(line_no, format!("call target `{target}` is a value; use icall"));
        }
        if !names.contains(target) {
            return err(line_no, format!("unknown function `{target}`"));
        }
        Callee::Direct(target.to_owned())
    };
    let (dst, dst_ty) = match dst {
        Some((d, t)) => (Some(d), t),
        None => (None, ValueType::Pointer),
    };
    Ok(StatementKind::Call { dst, dst_ty, callee, args })
}
