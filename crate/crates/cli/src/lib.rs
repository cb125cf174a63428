//! Library surface of the `pta` command-line tool.
//!
//! `run` executes one parsed command and returns the process exit code;
//! operational failures come back as [`CliError`], which the binary prints
//! to stderr as one JSON object. Exit codes: 0 success, 2 for input,
//! validation, configuration, and IO problems, 3 when the remote oracle
//! fails at the transport level.

pub mod args;
pub mod reports;

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde_json::{json, Value};

use pta_core::batch;
use pta_core::benchgen::{generate, interp, GenError, GenSpec};
use pta_core::cafd::{detect_scafs, DetectError};
use pta_core::ir::{parse_program, print_program, validate, Program};
use pta_core::metrics::{compare_rows, icall_rows, run_modes};
use pta_core::oracle::{CassetteConfig, CassetteMode, Oracle, OracleError, RemoteConfig};
use pta_core::panalysis::{analyze, AnalyzeError, ModeSpec};

use args::{CassetteModeArg, Cli, Command, ModeArg, OracleArgs};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_TRANSPORT: i32 = 3;

#[derive(Debug)]
pub struct CliError {
    pub kind: &'static str,
    pub message: String,
    pub exit: i32,
}

impl CliError {
    fn new(kind: &'static str, message: impl Into<String>) -> Self {
        CliError { kind, message: message.into(), exit: EXIT_INPUT }
    }

    pub fn to_json(&self) -> Value {
        json!({ "error": { "kind": self.kind, "message": self.message } })
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.kind, self.message)
    }
}

impl std::error::Error for CliError {}

impl From<OracleError> for CliError {
    fn from(e: OracleError) -> Self {
        match &e {
            OracleError::Transport(_) => CliError {
                kind: "oracle_transport",
                message: e.to_string(),
                exit: EXIT_TRANSPORT,
            },
            OracleError::Config(_) => CliError::new("oracle_config", e.to_string()),
            OracleError::Annotations { .. } => CliError::new("annotations", e.to_string()),
            OracleError::Cassette(_) => CliError::new("cassette", e.to_string()),
        }
    }
}

impl From<DetectError> for CliError {
    fn from(e: DetectError) -> Self {
        match e {
            DetectError::Oracle(o) => o.into(),
            DetectError::Invalid(v) => v.into(),
        }
    }
}

impl From<AnalyzeError> for CliError {
    fn from(e: AnalyzeError) -> Self {
        CliError::new("validate", e.to_string())
    }
}

impl From<GenError> for CliError {
    fn from(e: GenError) -> Self {
        CliError::new("gen_spec", e.to_string())
    }
}

impl From<interp::ExecError> for CliError {
    fn from(e: interp::ExecError) -> Self {
        CliError::new("interpret", e.to_string())
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::new("io", format!("{}: {e}", path.display()))
}

/// Execute one command; `Ok` carries the process exit code.
pub fn run(cli: Cli) -> Result<i32, CliError> {
    match cli.command {
        Command::Validate { input } => cmd_validate(&input),
        Command::Detect { input, oracle, out, parallel } => {
            cmd_detect(&input, &oracle, out.as_deref(), parallel)
        }
        Command::Analyze { input, mode, allocators, oracle, out, parallel } => {
            cmd_analyze(&input, mode, allocators.as_deref(), &oracle, out.as_deref(), parallel)
        }
        Command::Compare { input, allocators, oracle, out } => {
            cmd_compare(&input, allocators.as_deref(), &oracle, out.as_deref())
        }
        Command::Icalls { input, allocators, oracle, out } => {
            cmd_icalls(&input, allocators.as_deref(), &oracle, out.as_deref())
        }
        Command::Gen {
            seed,
            functions,
            chain_depth,
            side_effect_rate,
            error_path_rate,
            icall_rate,
            executable,
            count,
            out,
            out_dir,
            truth,
            parallel,
        } => {
            let spec = GenSpec {
                seed,
                functions,
                wrapper_chain_depth: chain_depth,
                side_effect_rate,
                error_path_rate,
                icall_rate: icall_rate.unwrap_or(if executable { 0.0 } else { 0.15 }),
                executable_subset: executable,
            };
            cmd_gen(spec, count, out.as_deref(), out_dir.as_deref(), truth.as_deref(), parallel)
        }
        Command::Interpret { input, budget, out } => cmd_interpret(&input, budget, out.as_deref()),
    }
}

fn load_program(path: &Path) -> Result<Program, CliError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    parse_program(&text)
        .map_err(|e| CliError::new("parse", format!("{}: {e}", path.display())))
}

/// Parse and stop on validation violations; commands that analyze need a
/// structurally sound program.
fn load_valid_program(path: &Path) -> Result<Program, CliError> {
    let p = load_program(path)?;
    let violations = validate(&p);
    if violations.is_empty() {
        Ok(p)
    } else {
        let summary: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
        Err(CliError::new("validate", format!("{}: {}", path.display(), summary.join("; "))))
    }
}

fn emit(report: &Value, out: Option<&Path>) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(report).expect("report serializes");
    text.push('\n');
    match out {
        Some(path) => fs::write(path, text).map_err(|e| io_err(path, e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn build_oracle(args: &OracleArgs) -> Result<Oracle, CliError> {
    match args.oracle.as_str() {
        "conservative" => Ok(Oracle::conservative()),
        "remote" => {
            let endpoint = args
                .endpoint
                .clone()
                .or_else(|| std::env::var("PTA_ORACLE_URL").ok())
                .unwrap_or_default();
            let api_key =
                args.api_key.clone().or_else(|| std::env::var("PTA_ORACLE_KEY").ok());
            let cassette = args.cassette.as_ref().map(|path| CassetteConfig {
                path: path.clone(),
                mode: match args.cassette_mode {
                    CassetteModeArg::Record => CassetteMode::Record,
                    CassetteModeArg::Replay => CassetteMode::Replay,
                },
            });
            let cfg = RemoteConfig {
                endpoint,
                model: args.model.clone(),
                api_key,
                temperature: args.temperature,
                query_count: args.queries,
                timeout_ms: args.timeout_ms,
                retries: args.retries,
                cassette,
            };
            Ok(Oracle::remote(cfg)?)
        }
        other => match other.strip_prefix("annotations=") {
            Some(path) if !path.is_empty() => Ok(Oracle::from_annotations_path(Path::new(path))?),
            _ => Err(CliError::new(
                "oracle_config",
                format!("unknown oracle `{other}`; expected conservative, annotations=PATH, or remote"),
            )),
        },
    }
}

/// Allocator list file: either a JSON array of function names or a detect
/// report with an `allocators` array. Seeds are always included.
fn load_allocators(path: &Path, p: &Program) -> Result<BTreeSet<String>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let v: Value = serde_json::from_str(&text)
        .map_err(|e| CliError::new("allocators", format!("{}: {e}", path.display())))?;
    let entries = match &v {
        Value::Array(items) => items.clone(),
        Value::Object(map) => match map.get("allocators") {
            Some(Value::Array(items)) => items.clone(),
            _ => {
                return Err(CliError::new(
                    "allocators",
                    format!("{}: expected an array or a detect report", path.display()),
                ))
            }
        },
        _ => {
            return Err(CliError::new(
                "allocators",
                format!("{}: expected an array or a detect report", path.display()),
            ))
        }
    };
    let mut members = p.seeds();
    for entry in entries {
        let name = match &entry {
            Value::String(s) => s.clone(),
            Value::Object(map) => match map.get("name") {
                Some(Value::String(s)) => s.clone(),
                _ => {
                    return Err(CliError::new(
                        "allocators",
                        "allocator entries need a `name` string".to_string(),
                    ))
                }
            },
            _ => {
                return Err(CliError::new(
                    "allocators",
                    "allocator entries must be names or objects".to_string(),
                ))
            }
        };
        members.insert(name);
    }
    Ok(members)
}

/// The allocator list for metric commands: an explicit file wins, else a
/// detection run with the configured oracle.
fn allocator_list(
    p: &Program,
    allocators: Option<&Path>,
    oracle_args: &OracleArgs,
) -> Result<BTreeSet<String>, CliError> {
    match allocators {
        Some(path) => load_allocators(path, p),
        None => {
            let oracle = build_oracle(oracle_args)?;
            let out = detect_scafs(p, &oracle)?;
            Ok(out.allocators.member_set())
        }
    }
}

fn ir_files(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| io_err(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext == "ir"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(CliError::new("io", format!("{}: no .ir files", dir.display())));
    }
    Ok(files)
}

/// Run `per_file` over every .ir file in `dir` and combine the reports
/// under a `results` key. Failures become inline error objects; the batch
/// exits with the most severe per-file code.
fn run_batch<F>(
    dir: &Path,
    parallel: bool,
    out: Option<&Path>,
    per_file: F,
) -> Result<i32, CliError>
where
    F: Fn(&Path) -> Result<Value, CliError> + Sync,
{
    let files = ir_files(dir)?;
    let entries: Vec<(String, Result<Value, CliError>)> = if parallel {
        files
            .par_iter()
            .map(|path| (file_key(path), per_file(path)))
            .collect()
    } else {
        files.iter().map(|path| (file_key(path), per_file(path))).collect()
    };

    let mut results = serde_json::Map::new();
    let mut exit = EXIT_OK;
    let mut failed = 0usize;
    for (name, entry) in entries {
        match entry {
            Ok(report) => {
                results.insert(name, report);
            }
            Err(e) => {
                exit = exit.max(e.exit);
                failed += 1;
                results.insert(name, e.to_json());
            }
        }
    }
    let report = json!({ "results": results, "failed": failed });
    emit(&report, out)?;
    Ok(exit)
}

fn file_key(path: &Path) -> String {
    path.file_name().map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned())
}

fn cmd_validate(input: &Path) -> Result<i32, CliError> {
    let p = load_program(input)?;
    let violations = validate(&p);
    let clean = violations.is_empty();
    emit(&reports::validate_report(&p, &violations), None)?;
    Ok(if clean { EXIT_OK } else { EXIT_INPUT })
}

fn cmd_detect(
    input: &Path,
    oracle_args: &OracleArgs,
    out: Option<&Path>,
    parallel: bool,
) -> Result<i32, CliError> {
    let oracle = build_oracle(oracle_args)?;
    let detect_one = |path: &Path| -> Result<Value, CliError> {
        let p = load_valid_program(path)?;
        let started = Instant::now();
        let outcome = detect_scafs(&p, &oracle)?;
        Ok(reports::detect_report(&outcome, started.elapsed().as_millis()))
    };
    if input.is_dir() {
        return run_batch(input, parallel, out, detect_one);
    }
    let report = detect_one(input)?;
    emit(&report, out)?;
    Ok(EXIT_OK)
}

fn cmd_analyze(
    input: &Path,
    mode: ModeArg,
    allocators: Option<&Path>,
    oracle_args: &OracleArgs,
    out: Option<&Path>,
    parallel: bool,
) -> Result<i32, CliError> {
    let analyze_one = |path: &Path| -> Result<Value, CliError> {
        let p = load_valid_program(path)?;
        let started = Instant::now();
        let result = match mode {
            ModeArg::Baseline => analyze(&p, ModeSpec::Baseline)?,
            ModeArg::OneCallsite => analyze(&p, ModeSpec::OneCallsite)?,
            ModeArg::Enhanced => {
                let al = allocator_list(&p, allocators, oracle_args)?;
                analyze(&p, ModeSpec::Enhanced(&al))?
            }
        };
        Ok(reports::analyze_report(&result, started.elapsed().as_millis()))
    };
    if input.is_dir() {
        return run_batch(input, parallel, out, analyze_one);
    }
    let report = analyze_one(input)?;
    emit(&report, out)?;
    Ok(EXIT_OK)
}

fn cmd_compare(
    input: &Path,
    allocators: Option<&Path>,
    oracle_args: &OracleArgs,
    out: Option<&Path>,
) -> Result<i32, CliError> {
    let p = load_valid_program(input)?;
    let started = Instant::now();
    let al = allocator_list(&p, allocators, oracle_args)?;
    let modes = run_modes(&p, &al)?;
    let rows = compare_rows(&p, &modes);
    let report = reports::compare_report(&al, &rows, started.elapsed().as_millis());
    emit(&report, out)?;
    Ok(EXIT_OK)
}

fn cmd_icalls(
    input: &Path,
    allocators: Option<&Path>,
    oracle_args: &OracleArgs,
    out: Option<&Path>,
) -> Result<i32, CliError> {
    let p = load_valid_program(input)?;
    let started = Instant::now();
    let al = allocator_list(&p, allocators, oracle_args)?;
    let modes = run_modes(&p, &al)?;
    let rows = icall_rows(&modes);
    let report = reports::icall_report(&al, &rows, started.elapsed().as_millis());
    emit(&report, out)?;
    Ok(EXIT_OK)
}

fn cmd_gen(
    spec: GenSpec,
    count: usize,
    out: Option<&Path>,
    out_dir: Option<&Path>,
    truth: Option<&Path>,
    parallel: bool,
) -> Result<i32, CliError> {
    if count == 0 {
        return Err(CliError::new("gen_spec", "count must be at least 1"));
    }
    if count == 1 && out_dir.is_none() {
        let (p, gt) = generate(&spec)?;
        let text = print_program(&p);
        match out {
            Some(path) => fs::write(path, &text).map_err(|e| io_err(path, e))?,
            None => print!("{text}"),
        }
        if let Some(path) = truth {
            let body = serde_json::to_string_pretty(&gt).expect("truth serializes");
            fs::write(path, body).map_err(|e| io_err(path, e))?;
        }
        return Ok(EXIT_OK);
    }

    let dir = out_dir.ok_or_else(|| {
        CliError::new("gen_spec", "generating multiple programs requires --out-dir")
    })?;
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let specs: Vec<GenSpec> =
        (0..count as u64).map(|i| GenSpec { seed: spec.seed + i, ..spec.clone() }).collect();
    let rendered: Vec<Result<(u64, String, String), CliError>> = if parallel {
        specs.par_iter().map(render_one).collect()
    } else {
        specs.iter().map(render_one).collect()
    };
    for item in rendered {
        let (seed, text, truth_body) = item?;
        let base = dir.join(format!("gen_{seed:06}"));
        let ir_path = base.with_extension("ir");
        fs::write(&ir_path, text).map_err(|e| io_err(&ir_path, e))?;
        let truth_path = base.with_extension("truth.json");
        fs::write(&truth_path, truth_body).map_err(|e| io_err(&truth_path, e))?;
    }
    emit(&json!({ "generated": count, "dir": dir.display().to_string() }), None)?;
    Ok(EXIT_OK)
}

fn render_one(spec: &GenSpec) -> Result<(u64, String, String), CliError> {
    let (p, gt) = generate(spec)?;
    let truth_body = serde_json::to_string_pretty(&gt).expect("truth serializes");
    Ok((spec.seed, print_program(&p), truth_body))
}

fn cmd_interpret(input: &Path, budget: usize, out: Option<&Path>) -> Result<i32, CliError> {
    let p = load_valid_program(input)?;
    let facts = interp::interpret(&p, budget)?;
    emit(&reports::interpret_report(&facts), out)?;
    Ok(EXIT_OK)
}

// batch::sweep is exercised through the library; re-export it so scripts
// built on the CLI crate reach the same entry point.
pub use batch::{sweep, SweepOutcome};
