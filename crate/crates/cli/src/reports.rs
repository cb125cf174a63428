//! JSON report construction.
//!
//! Sites render as `s7` (context clones as `s7@c3`), function constants as
//! `fn:f`, fields as `s7.data`, values as `function::value`, and concrete
//! interpreter objects as `o1` / `o1.field`. Undefined metric entries stay
//! `null`. Every timing figure lives under a separate `timing` key so
//! reports can be compared net of it.

use serde_json::{json, Map, Value};

use pta_core::benchgen::interp::{ConcreteLoc, ExecFacts};
use pta_core::cafd::DetectionOutcome;
use pta_core::ir::{Program, ValidationViolation};
use pta_core::metrics::{CompareRow, IcallRow};
use pta_core::panalysis::AnalysisResult;

pub fn validate_report(p: &Program, violations: &[ValidationViolation]) -> Value {
    json!({
        "valid": violations.is_empty(),
        "functions": p.functions.len(),
        "statements": p.statements().count(),
        "violations": violations.iter().map(|v| json!({
            "function": v.function,
            "site": v.site,
            "rule": v.rule,
            "detail": v.detail,
        })).collect::<Vec<_>>(),
    })
}

pub fn detect_report(out: &DetectionOutcome, elapsed_ms: u128) -> Value {
    json!({
        "allocators": out.allocators.iter().map(|(name, prov)| json!({
            "name": name,
            "provenance": prov,
        })).collect::<Vec<_>>(),
        "num1": out.num_detected(),
        "num2": out.num_oracle_assisted(),
        "iterations": out.iterations,
        "deltas": out.deltas,
        "per_function_decisions": out.decisions,
        "oracle_counters": {
            "QN": out.counters.queries,
            "IT": out.counters.input_tokens,
            "OT": out.counters.output_tokens,
            "LT": out.counters.latency_ms,
        },
        "timing": { "elapsed_ms": elapsed_ms as u64 },
    })
}

pub fn analyze_report(result: &AnalysisResult, elapsed_ms: u128) -> Value {
    let mut points_to = Map::new();
    for (value, objs) in &result.pts.pts {
        if objs.is_empty() {
            continue;
        }
        let rendered: Vec<Value> = objs.iter().map(|o| Value::String(o.to_string())).collect();
        points_to.insert(value.to_string(), Value::Array(rendered));
    }

    let mut objects = Map::new();
    for (key, obj) in &result.objects {
        let rendered = match key.1 {
            Some(ctx) => format!("s{}@c{ctx}", key.0),
            None => format!("s{}", key.0),
        };
        objects.insert(
            rendered,
            json!({
                "site": obj.site,
                "context": obj.context,
                "origin": obj.origin.as_str(),
                "function": obj.function,
                "instance": obj.instance,
                "receiver": obj.receiver.as_ref().map(|r| r.to_string()),
            }),
        );
    }

    let mut indirect = Map::new();
    for (site, targets) in &result.indirect {
        indirect.insert(
            format!("s{site}"),
            Value::Array(targets.iter().map(|t| Value::String(t.clone())).collect()),
        );
    }

    json!({
        "mode": result.mode,
        "allocators": result.allocator_members,
        "points_to": points_to,
        "objects": objects,
        "indirect": indirect,
        "timing": { "elapsed_ms": elapsed_ms as u64 },
    })
}

pub fn compare_report(allocators: &std::collections::BTreeSet<String>, rows: &[CompareRow], elapsed_ms: u128) -> Value {
    json!({
        "allocators": allocators,
        "rows": rows,
        "timing": { "elapsed_ms": elapsed_ms as u64 },
    })
}

pub fn icall_report(allocators: &std::collections::BTreeSet<String>, rows: &[IcallRow], elapsed_ms: u128) -> Value {
    json!({
        "allocators": allocators,
        "rows": rows,
        "timing": { "elapsed_ms": elapsed_ms as u64 },
    })
}

fn loc_str(loc: &ConcreteLoc) -> String {
    match loc {
        ConcreteLoc::Obj(id) => format!("o{id}"),
        ConcreteLoc::Field(id, field) => format!("o{id}.{field}"),
    }
}

pub fn interpret_report(facts: &ExecFacts) -> Value {
    let mut allocations = Map::new();
    for (id, record) in &facts.allocations {
        allocations.insert(
            format!("o{id}"),
            json!({
                "seed_site": record.seed_site(),
                "allocating_function": record.allocating_function(),
                "stack": record.stack.iter().map(|e| json!({
                    "caller": e.caller,
                    "callsite": e.callsite,
                    "callee": e.callee,
                })).collect::<Vec<_>>(),
            }),
        );
    }
    json!({
        "allocations": allocations,
        "holdings": facts.holdings.iter().map(|f| json!({
            "function": f.function,
            "value": f.value,
            "entered_via": f.entered_via,
            "held": loc_str(&f.loc),
        })).collect::<Vec<_>>(),
        "alias_pair_count": facts.alias_pairs().len(),
    })
}
