//! Acceptance criteria, one test per criterion. Each prints a single
//! `acceptance N (<name>): PASS` or `FAIL` line (visible with
//! `--nocapture`) and fails the build on any miss.

use std::collections::BTreeSet;
use std::io::{Read, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde_json::Value;

use pta_core::benchgen::interp::interpret;
use pta_core::benchgen::soundness;
use pta_core::benchgen::{generate, wrapper_chain, GenSpec};
use pta_core::cafd::detect_scafs;
use pta_core::ir::print_program;
use pta_core::metrics::run_modes;
use pta_core::oracle::Oracle;
use pta_core::panalysis::{generate_constraints, reference, solve, ModeSpec};

macro_rules! check {
    ($cond:expr, $($t:tt)*) => {
        if !$cond {
            return Err(format!($($t)*));
        }
    };
}

fn conclude(n: u32, name: &str, result: Result<(), String>) {
    match result {
        Ok(()) => println!("acceptance {n} ({name}): PASS"),
        Err(msg) => {
            println!("acceptance {n} ({name}): FAIL");
            panic!("acceptance {n} ({name}): {msg}");
        }
    }
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pta"))
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures").join(name)
}

fn stdout_json(out: &Output) -> Result<Value, String> {
    serde_json::from_slice(&out.stdout).map_err(|e| {
        format!(
            "stdout is not JSON ({e}):\n{}\n{}",
            String::from_utf8_lossy(&out.stdout),
            String::from_utf8_lossy(&out.stderr)
        )
    })
}

fn approx(v: &Value, want: f64) -> bool {
    v.as_f64().is_some_and(|x| (x - want).abs() < 1e-9)
}

#[test]
fn criterion_1_wrapper_comparison() {
    conclude(1, "wrapper fixture precision table", (|| {
        let started = Instant::now();
        let out = bin()
            .arg("compare")
            .arg(fixture("fig2.ir"))
            .output()
            .map_err(|e| e.to_string())?;
        let elapsed = started.elapsed();
        check!(out.status.code() == Some(0), "compare exited {:?}", out.status.code());
        let report = stdout_json(&out)?;
        let rows = report["rows"].as_array().ok_or("rows missing")?;
        let enhanced = rows
            .iter()
            .find(|r| r["mode"] == "enhanced")
            .ok_or("no enhanced row")?;

        check!(enhanced["thoc"] == serde_json::json!([1, 2]), "thoc {:?}", enhanced["thoc"]);
        check!(approx(&enhanced["prr1"], 66.7), "prr1 {:?}", enhanced["prr1"]);
        check!(enhanced["pc2"].is_null(), "pc2 should be undefined: {:?}", enhanced["pc2"]);
        check!(enhanced["prr2"].is_null(), "prr2 should be undefined: {:?}", enhanced["prr2"]);
        let anc = enhanced["anc"].as_array().ok_or("anc missing")?;
        check!(approx(&anc[0], 2.0) && approx(&anc[1], 0.0), "anc {anc:?}");
        check!(approx(&enhanced["arr"], 100.0), "arr {:?}", enhanced["arr"]);
        check!(elapsed < Duration::from_secs(1), "took {elapsed:?}, budget 1s");
        Ok(())
    })());
}

#[test]
fn criterion_2_oracle_gated_wrapper() {
    conclude(2, "error-path wrapper needs the oracle", (|| {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let ann = dir.path().join("ann.json");
        std::fs::write(&ann, r#"{"lalloc": "ignorable"}"#).map_err(|e| e.to_string())?;

        let started = Instant::now();
        let out = bin()
            .arg("detect")
            .arg(fixture("lalloc.ir"))
            .arg("--oracle")
            .arg(format!("annotations={}", ann.display()))
            .output()
            .map_err(|e| e.to_string())?;
        let assisted_elapsed = started.elapsed();
        check!(out.status.code() == Some(0), "detect exited {:?}", out.status.code());
        let report = stdout_json(&out)?;
        check!(report["num2"] == 1, "num2 {:?}", report["num2"]);
        check!(
            report["per_function_decisions"]["lalloc"]["provenance"] == "oracle_assisted",
            "lalloc decision: {}",
            report["per_function_decisions"]["lalloc"]
        );

        let started = Instant::now();
        let out = bin()
            .arg("detect")
            .arg(fixture("lalloc.ir"))
            .output()
            .map_err(|e| e.to_string())?;
        let plain_elapsed = started.elapsed();
        let report = stdout_json(&out)?;
        check!(report["num1"] == 0, "conservative num1 {:?}", report["num1"]);
        let decision = &report["per_function_decisions"]["lalloc"];
        check!(decision["accepted"] == false, "lalloc decision: {decision}");
        check!(
            decision["reason"].as_str().unwrap_or("").contains("side effects"),
            "reason: {:?}",
            decision["reason"]
        );
        check!(
            assisted_elapsed < Duration::from_secs(1) && plain_elapsed < Duration::from_secs(1),
            "took {assisted_elapsed:?} / {plain_elapsed:?}, budget 1s each"
        );
        Ok(())
    })());
}

#[test]
fn criterion_3_chain_depth_tracks_the_oracle() {
    conclude(3, "wrapper chains stop at the oracle break", (|| {
        for depth in 1..=5usize {
            for brk in 1..=depth as u32 {
                let (p, truth) =
                    wrapper_chain(depth, Some(brk)).map_err(|e| e.to_string())?;

                let plain = detect_scafs(&p, &Oracle::conservative())
                    .map_err(|e| e.to_string())?;
                let expected: BTreeSet<String> =
                    (1..brk as usize).map(|j| format!("chain{j}")).collect();
                check!(
                    plain.allocators.detected() == expected,
                    "depth {depth} break {brk}: conservative found {:?}, expected {expected:?}",
                    plain.allocators.detected()
                );

                let lenient = Oracle::from_annotations(
                    truth.oracle_needed.iter().map(|n| (n.clone(), true)).collect(),
                );
                let full =
                    detect_scafs(&p, &lenient).map_err(|e| e.to_string())?;
                let all: BTreeSet<String> =
                    (1..=depth).map(|j| format!("chain{j}")).collect();
                check!(
                    full.allocators.detected() == all,
                    "depth {depth} break {brk}: lenient found {:?}, expected {all:?}",
                    full.allocators.detected()
                );
            }
        }
        Ok(())
    })());
}

#[test]
fn criterion_4_solver_equivalence() {
    conclude(4, "worklist matches the reference solver", (|| {
        let started = Instant::now();
        let mut programs = 0usize;
        for seed in 0..200u64 {
            let spec = GenSpec {
                seed,
                functions: 4,
                icall_rate: 0.25,
                ..GenSpec::default()
            };
            let (p, truth) = generate(&spec).map_err(|e| e.to_string())?;
            let statements = p.statements().count();
            check!(statements <= 60, "seed {seed}: {statements} statements, budget 60");

            let al: BTreeSet<String> =
                p.seeds().union(&truth.wrappers()).cloned().collect();
            for mode in [ModeSpec::Baseline, ModeSpec::Enhanced(&al), ModeSpec::OneCallsite] {
                let system =
                    generate_constraints(&p, mode).map_err(|e| e.to_string())?;
                let fast = solve(&system);
                let slow = reference::solve(&system);
                check!(
                    fast.pts.pts == slow.pts.pts,
                    "seed {seed}: points-to sets diverge\n{}",
                    print_program(&p)
                );
                check!(fast.objects == slow.objects, "seed {seed}: object sets diverge");
                check!(fast.indirect == slow.indirect, "seed {seed}: indirect targets diverge");
            }
            programs += 1;
        }
        let elapsed = started.elapsed();
        check!(programs >= 200, "only {programs} programs");
        check!(elapsed < Duration::from_secs(60), "took {elapsed:?}, budget 60s");
        Ok(())
    })());
}

#[test]
fn criterion_5_execution_soundness() {
    conclude(5, "every executed fact is covered in all modes", (|| {
        let started = Instant::now();
        let mut programs = 0usize;
        let mut facts_total = 0usize;
        for seed in 0..500u64 {
            let spec = GenSpec {
                seed: 10_000 + seed,
                functions: 5,
                icall_rate: 0.0,
                executable_subset: true,
                ..GenSpec::default()
            };
            let (p, _) = generate(&spec).map_err(|e| e.to_string())?;
            let facts = interpret(&p, 300_000)
                .map_err(|e| format!("seed {seed}: execution failed: {e}"))?;
            let out = detect_scafs(&p, &Oracle::conservative()).map_err(|e| e.to_string())?;
            let al = out.allocators.member_set();
            let modes = run_modes(&p, &al).map_err(|e| e.to_string())?;
            for result in [&modes.baseline, &modes.enhanced, &modes.one_callsite] {
                let violations = soundness::check(&p, &facts, result, &al);
                check!(
                    violations.is_empty(),
                    "seed {seed} {:?}: {} violations, first: {}\n{}",
                    result.mode,
                    violations.len(),
                    violations[0],
                    print_program(&p)
                );
            }
            facts_total += facts.holdings.len();
            programs += 1;
        }
        let elapsed = started.elapsed();
        check!(programs >= 500, "only {programs} programs");
        check!(facts_total > 2_000, "corpus too inert: {facts_total} facts overall");
        check!(elapsed < Duration::from_secs(120), "took {elapsed:?}, budget 120s");
        Ok(())
    })());
}

#[test]
fn criterion_6_detection_scoring() {
    conclude(6, "precision and recall on labeled corpora", (|| {
        let mut truth_hits = 0usize;
        let mut truth_detected = 0usize;
        let mut truth_wrappers = 0usize;
        let mut plain_hits = 0usize;
        let mut plain_detected = 0usize;
        for seed in 0..60u64 {
            let spec = GenSpec {
                seed: 20_000 + seed,
                functions: 8,
                side_effect_rate: 0.5,
                ..GenSpec::default()
            };
            let (p, truth) = generate(&spec).map_err(|e| e.to_string())?;
            let wrappers = truth.wrappers();

            let assisted = detect_scafs(&p, &Oracle::from_annotations(truth.annotations()))
                .map_err(|e| e.to_string())?;
            let detected = assisted.allocators.detected();
            truth_hits += detected.intersection(&wrappers).count();
            truth_detected += detected.len();
            truth_wrappers += wrappers.len();

            let plain =
                detect_scafs(&p, &Oracle::conservative()).map_err(|e| e.to_string())?;
            let detected = plain.allocators.detected();
            plain_hits += detected.intersection(&wrappers).count();
            plain_detected += detected.len();
        }
        check!(truth_wrappers > 0, "corpus generated no wrappers at all");
        check!(
            truth_hits == truth_detected,
            "truth-oracle precision {}/{truth_detected}",
            truth_hits
        );
        check!(
            truth_hits == truth_wrappers,
            "truth-oracle recall {}/{truth_wrappers}",
            truth_hits
        );
        check!(
            plain_hits == plain_detected,
            "conservative precision {}/{plain_detected}",
            plain_hits
        );
        Ok(())
    })());
}

#[test]
fn criterion_7_indirect_call_refinement() {
    conclude(7, "indirect-call target refinement", (|| {
        let out = bin()
            .arg("icalls")
            .arg(fixture("icall.ir"))
            .output()
            .map_err(|e| e.to_string())?;
        check!(out.status.code() == Some(0), "icalls exited {:?}", out.status.code());
        let report = stdout_json(&out)?;
        let rows = report["rows"].as_array().ok_or("rows missing")?;
        check!(rows.len() == 2, "expected 2 rows, got {}", rows.len());
        for row in rows {
            check!(row["tn"] == 2, "{}: tn {:?}", row["mode"], row["tn"]);
            check!(row["on"] == 2, "{}: on {:?}", row["mode"], row["on"]);
            check!(approx(&row["oa"], 2.0), "{}: oa {:?}", row["mode"], row["oa"]);
            check!(approx(&row["ea"], 1.0), "{}: ea {:?}", row["mode"], row["ea"]);
        }
        Ok(())
    })());
}

#[test]
fn criterion_8_deterministic_reports() {
    conclude(8, "repeated detection is byte-identical", (|| {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let ann = dir.path().join("ann.json");
        std::fs::write(&ann, r#"{"lalloc": "ignorable"}"#).map_err(|e| e.to_string())?;
        let generated = dir.path().join("gen.ir");
        let (p, _) = generate(&GenSpec { seed: 77, functions: 10, ..GenSpec::default() })
            .map_err(|e| e.to_string())?;
        std::fs::write(&generated, print_program(&p)).map_err(|e| e.to_string())?;

        let runs: Vec<(PathBuf, Vec<String>)> = vec![
            (fixture("fig2.ir"), vec![]),
            (
                fixture("lalloc.ir"),
                vec!["--oracle".into(), format!("annotations={}", ann.display())],
            ),
            (generated.clone(), vec![]),
        ];
        for (input, extra) in runs {
            let run = || -> Result<Value, String> {
                let out = bin()
                    .arg("detect")
                    .arg(&input)
                    .args(&extra)
                    .output()
                    .map_err(|e| e.to_string())?;
                check!(out.status.code() == Some(0), "detect exited {:?}", out.status.code());
                stdout_json(&out)
            };
            let mut first = run()?;
            let mut second = run()?;
            first.as_object_mut().unwrap().remove("timing");
            second.as_object_mut().unwrap().remove("timing");
            let a = serde_json::to_string(&first).unwrap();
            let b = serde_json::to_string(&second).unwrap();
            check!(
                a == b,
                "{}: reports differ net of timing:\n{a}\n{b}",
                input.display()
            );

            // allocator-list growth is monotone and bounded
            let seeds = first["allocators"]
                .as_array()
                .unwrap()
                .iter()
                .filter(|e| e["provenance"] == "seed")
                .count();
            let deltas = first["deltas"].as_array().unwrap();
            let mut size = seeds;
            let mut sizes = vec![size];
            for delta in deltas {
                size += delta.as_array().unwrap().len();
                sizes.push(size);
            }
            check!(
                sizes.windows(2).all(|w| w[0] <= w[1]),
                "{}: allocator list shrank: {sizes:?}",
                input.display()
            );
            let iterations = first["iterations"].as_u64().unwrap() as usize;
            check!(iterations == deltas.len(), "{}: iterations vs deltas", input.display());
            let text =
                std::fs::read_to_string(&input).map_err(|e| e.to_string())?;
            let defined = pta_core::ir::parse_program(&text)
                .map_err(|e| e.to_string())?
                .defined()
                .count();
            check!(
                iterations <= defined + 1,
                "{}: {iterations} iterations for {defined} defined functions",
                input.display()
            );
        }
        Ok(())
    })());
}

// ---------------------------------------------------------------------------
// criterion 9: a scripted HTTP endpoint standing in for the remote oracle

#[derive(Default)]
struct Ledger {
    requests: AtomicU64,
    prompt_tokens: AtomicU64,
    completion_tokens: AtomicU64,
}

enum Behavior {
    /// Cycle through these answers, one per request, with distinct token
    /// counts so the ledger sums are nontrivial.
    Votes(Vec<&'static str>),
    /// 200 responses that are not JSON at all.
    Garbage,
    /// Accept and immediately drop the connection.
    Hangup,
}

fn spawn_mock(behavior: Behavior) -> (String, Arc<Ledger>) {
    let listener = TcpListener::bind("127.0.0.1:0").expect("bind mock");
    let url = format!("http://{}", listener.local_addr().unwrap());
    let ledger = Arc::new(Ledger::default());
    let shared = Arc::clone(&ledger);
    std::thread::spawn(move || {
        let mut served = 0usize;
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { continue };
            shared.requests.fetch_add(1, Ordering::SeqCst);
            if matches!(behavior, Behavior::Hangup) {
                drop(stream);
                continue;
            }
            if read_http_request(&mut stream).is_none() {
                continue;
            }
            let (body, prompt_tokens, completion_tokens) = match &behavior {
                Behavior::Votes(votes) => {
                    let answer = votes[served % votes.len()];
                    let prompt_tokens = 40 + served as u64;
                    let completion_tokens = 7 + (served as u64 % 3);
                    let body = serde_json::json!({
                        "choices": [{"message": {"content":
                            format!("Considering the statements.\nANSWER: {answer}")}}],
                        "usage": {
                            "prompt_tokens": prompt_tokens,
                            "completion_tokens": completion_tokens,
                        },
                    })
                    .to_string();
                    (body, prompt_tokens, completion_tokens)
                }
                Behavior::Garbage => ("mangled ][ response".to_owned(), 0, 0),
                Behavior::Hangup => unreachable!(),
            };
            served += 1;
            shared.prompt_tokens.fetch_add(prompt_tokens, Ordering::SeqCst);
            shared.completion_tokens.fetch_add(completion_tokens, Ordering::SeqCst);
            let _ = write!(
                stream,
                "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{}",
                body.len(),
                body
            );
        }
    });
    (url, ledger)
}

/// Read one HTTP request (headers plus content-length body); None if the
/// stream ends early.
fn read_http_request(stream: &mut std::net::TcpStream) -> Option<Vec<u8>> {
    let mut buf = Vec::new();
    let mut chunk = [0u8; 1024];
    let header_end = loop {
        match stream.read(&mut chunk) {
            Ok(0) => return None,
            Ok(n) => {
                buf.extend_from_slice(&chunk[..n]);
                if let Some(pos) = buf.windows(4).position(|w| w == b"\r\n\r\n") {
                    break pos + 4;
                }
            }
            Err(_) => return None,
        }
    };
    let headers = String::from_utf8_lossy(&buf[..header_end]).to_lowercase();
    let content_length: usize = headers
        .lines()
        .find_map(|l| l.strip_prefix("content-length:"))
        .and_then(|v| v.trim().parse().ok())
        .unwrap_or(0);
    while buf.len() < header_end + content_length {
        match stream.read(&mut chunk) {
            Ok(0) => return None,
            Ok(n) => buf.extend_from_slice(&chunk[..n]),
            Err(_) => return None,
        }
    }
    Some(buf[header_end..header_end + content_length].to_vec())
}

#[test]
fn criterion_9_remote_oracle_transport() {
    conclude(9, "remote oracle voting, garbling, and failure", (|| {
        // three YES of five: the majority accepts and the counters must
        // match what the endpoint actually served
        let (url, ledger) = spawn_mock(Behavior::Votes(vec!["YES", "NO", "YES", "NO", "YES"]));
        let out = bin()
            .arg("detect")
            .arg(fixture("lalloc.ir"))
            .args(["--oracle", "remote", "--endpoint", &url])
            .args(["--queries", "5", "--retries", "0", "--timeout-ms", "5000"])
            .output()
            .map_err(|e| e.to_string())?;
        check!(
            out.status.code() == Some(0),
            "detect exited {:?}: {}",
            out.status.code(),
            String::from_utf8_lossy(&out.stderr)
        );
        let report = stdout_json(&out)?;
        check!(report["num2"] == 1, "3-of-5 YES must accept: {}", report["per_function_decisions"]["lalloc"]);
        let counters = &report["oracle_counters"];
        let qn = ledger.requests.load(Ordering::SeqCst);
        let it = ledger.prompt_tokens.load(Ordering::SeqCst);
        let ot = ledger.completion_tokens.load(Ordering::SeqCst);
        check!(counters["QN"] == qn, "QN {} vs ledger {qn}", counters["QN"]);
        check!(counters["IT"] == it, "IT {} vs ledger {it}", counters["IT"]);
        check!(counters["OT"] == ot, "OT {} vs ledger {ot}", counters["OT"]);

        // responses that cannot be parsed count as NO votes
        let (url, _ledger) = spawn_mock(Behavior::Garbage);
        let out = bin()
            .arg("detect")
            .arg(fixture("lalloc.ir"))
            .args(["--oracle", "remote", "--endpoint", &url])
            .args(["--queries", "5", "--retries", "0", "--timeout-ms", "5000"])
            .output()
            .map_err(|e| e.to_string())?;
        check!(out.status.code() == Some(0), "garbled run exited {:?}", out.status.code());
        let report = stdout_json(&out)?;
        check!(
            report["num2"] == 0 && report["per_function_decisions"]["lalloc"]["accepted"] == false,
            "unparsable votes must reject: {}",
            report["per_function_decisions"]["lalloc"]
        );

        // transport failure escalates to its own exit code
        let (url, _ledger) = spawn_mock(Behavior::Hangup);
        let out = bin()
            .arg("detect")
            .arg(fixture("lalloc.ir"))
            .args(["--oracle", "remote", "--endpoint", &url])
            .args(["--queries", "5", "--retries", "0", "--timeout-ms", "5000"])
            .output()
            .map_err(|e| e.to_string())?;
        check!(
            out.status.code() == Some(3),
            "hangup must exit 3, got {:?}",
            out.status.code()
        );
        let err: Value = serde_json::from_slice(&out.stderr)
            .map_err(|e| format!("stderr not JSON: {e}"))?;
        check!(
            err["error"]["kind"] == "oracle_transport",
            "stderr: {err}"
        );
        Ok(())
    })());
}
