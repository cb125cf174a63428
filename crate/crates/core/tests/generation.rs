//! Generated-corpus checks: detection scored against by-construction
//! labels, chain depth behavior under different oracles, solver
//! cross-validation, and execution-based soundness of all three analysis
//! modes.

use std::collections::BTreeSet;

use pta_core::benchgen::interp::{interpret, ExecError};
use pta_core::benchgen::soundness::check;
use pta_core::benchgen::{generate, wrapper_chain, GenSpec};
use pta_core::cafd::detect_scafs;
use pta_core::ir::print_program;
use pta_core::metrics::run_modes;
use pta_core::oracle::Oracle;
use pta_core::panalysis::{generate_constraints, reference, solve, ModeSpec};

#[test]
fn truth_oracle_detection_is_exact_and_conservative_is_precise() {
    for seed in 0..30u64 {
        let spec = GenSpec { seed, functions: 8, side_effect_rate: 0.5, ..GenSpec::default() };
        let (p, truth) = generate(&spec).unwrap();
        let wrappers = truth.wrappers();

        let assisted = detect_scafs(&p, &Oracle::from_annotations(truth.annotations())).unwrap();
        assert_eq!(
            assisted.allocators.detected(),
            wrappers,
            "seed {seed}: truth-oracle detection must hit exactly the genuine wrappers\n{}",
            print_program(&p)
        );
        assert_eq!(assisted.allocators.oracle_assisted(), truth.oracle_needed);

        let plain = detect_scafs(&p, &Oracle::conservative()).unwrap();
        let detected = plain.allocators.detected();
        assert!(
            detected.is_subset(&wrappers),
            "seed {seed}: conservative detection accepted a non-wrapper: {:?}",
            detected.difference(&wrappers).collect::<Vec<_>>()
        );
        let expected_plain: BTreeSet<String> =
            wrappers.difference(&truth.oracle_needed).cloned().collect();
        assert_eq!(detected, expected_plain, "seed {seed}: conservative misses only oracle-gated wrappers");
    }
}

#[test]
fn chain_detection_stops_at_the_break_without_an_oracle() {
    for depth in 1..=5usize {
        for brk in 1..=depth as u32 {
            let (p, truth) = wrapper_chain(depth, Some(brk)).unwrap();

            let plain = detect_scafs(&p, &Oracle::conservative()).unwrap();
            let below: BTreeSet<String> =
                (1..brk as usize).map(|j| format!("chain{j}")).collect();
            assert_eq!(
                plain.allocators.detected(),
                below,
                "depth {depth} break {brk}: conservative detection"
            );

            let lenient = Oracle::from_annotations(
                truth.oracle_needed.iter().map(|n| (n.clone(), true)).collect(),
            );
            let full = detect_scafs(&p, &lenient).unwrap();
            assert_eq!(
                full.allocators.detected(),
                truth.wrappers(),
                "depth {depth} break {brk}: lenient detection finds the whole chain"
            );
        }
    }
}

#[test]
fn worklist_and_reference_solvers_agree_on_generated_programs() {
    for seed in 100..140u64 {
        let spec = GenSpec { seed, functions: 5, ..GenSpec::default() };
        let (p, _) = generate(&spec).unwrap();
        let system = generate_constraints(&p, ModeSpec::Baseline).unwrap();
        let fast = solve(&system);
        let slow = reference::solve(&system);
        assert_eq!(fast.pts.pts, slow.pts.pts, "seed {seed}\n{}", print_program(&p));
        assert_eq!(fast.indirect, slow.indirect, "seed {seed}");
    }
}

#[test]
fn executed_facts_are_covered_by_every_mode() {
    let mut checked = 0usize;
    for seed in 200..260u64 {
        let spec = GenSpec {
            seed,
            functions: 6,
            icall_rate: 0.0,
            executable_subset: true,
            ..GenSpec::default()
        };
        let (p, _) = generate(&spec).unwrap();
        let facts = match interpret(&p, 100_000) {
            Ok(f) => f,
            Err(e @ ExecError::Budget) => panic!("seed {seed}: {e}"),
            Err(e) => panic!("seed {seed}: executable program failed to run: {e}"),
        };
        let out = detect_scafs(&p, &Oracle::conservative()).unwrap();
        let al = out.allocators.member_set();
        let modes = run_modes(&p, &al).unwrap();
        for result in [&modes.baseline, &modes.enhanced, &modes.one_callsite] {
            let violations = check(&p, &facts, result, &al);
            assert!(
                violations.is_empty(),
                "seed {seed} {:?}: {violations:?}\n{}",
                result.mode,
                print_program(&p)
            );
        }
        checked += facts.holdings.len();
    }
    assert!(checked > 100, "corpus too inert to mean anything: {checked} facts");
}
