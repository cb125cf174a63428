//! Randomized invariants over the generated-program space.

use std::collections::BTreeSet;

use proptest::prelude::*;

use pta_core::benchgen::{generate, GenSpec};
use pta_core::cafd::{compute_side_effects, detect_scafs, detection_call_graph, Provenance};
use pta_core::ir::{parse_program, print_program};
use pta_core::oracle::{majority, Oracle, VerdictValue, Vote};
use pta_core::panalysis::{analyze, generate_constraints, reference, solve, ModeSpec};

fn spec_strategy() -> impl Strategy<Value = GenSpec> {
    (
        any::<u64>(),
        1usize..10,
        0usize..4,
        0.0f64..=1.0,
        0.0f64..=1.0,
        0.0f64..=0.5,
        any::<bool>(),
    )
        .prop_map(
            |(seed, functions, depth, se, ep, icall, executable)| GenSpec {
                seed,
                functions,
                wrapper_chain_depth: depth,
                side_effect_rate: se,
                error_path_rate: ep,
                icall_rate: if executable { 0.0 } else { icall },
                executable_subset: executable,
            },
        )
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, ..ProptestConfig::default() })]

    #[test]
    fn printing_and_reparsing_is_lossless(spec in spec_strategy()) {
        let (p, _) = generate(&spec).unwrap();
        let text = print_program(&p);
        let reparsed = parse_program(&text).expect("printed program must parse");
        prop_assert_eq!(&reparsed, &p);
        prop_assert_eq!(print_program(&reparsed), text);
    }

    #[test]
    fn both_solvers_agree_in_every_mode(spec in spec_strategy()) {
        let (p, truth) = generate(&spec).unwrap();
        let al: BTreeSet<String> = p.seeds().union(&truth.wrappers()).cloned().collect();
        for mode in [ModeSpec::Baseline, ModeSpec::Enhanced(&al), ModeSpec::OneCallsite] {
            let system = generate_constraints(&p, mode).unwrap();
            let fast = solve(&system);
            let slow = reference::solve(&system);
            prop_assert_eq!(&fast.pts.pts, &slow.pts.pts);
            prop_assert_eq!(&fast.objects, &slow.objects);
            prop_assert_eq!(&fast.indirect, &slow.indirect);
        }
    }

    #[test]
    fn analysis_is_deterministic_and_internally_consistent(spec in spec_strategy()) {
        let (p, _) = generate(&spec).unwrap();
        let a = analyze(&p, ModeSpec::Baseline).unwrap();
        let b = analyze(&p, ModeSpec::Baseline).unwrap();
        prop_assert_eq!(&a.pts.pts, &b.pts.pts);
        prop_assert_eq!(&a.objects, &b.objects);
        prop_assert_eq!(&a.indirect, &b.indirect);

        let defined: BTreeSet<&str> = p.defined().map(|f| f.name.as_str()).collect();
        for objs in a.pts.pts.values() {
            for o in objs {
                if let Some(key) = o.as_heap_base() {
                    prop_assert!(a.objects.contains_key(&key), "dangling heap object {key:?}");
                }
            }
        }
        for targets in a.indirect.values() {
            for t in targets {
                prop_assert!(defined.contains(t.as_str()), "indirect target `{t}` not defined");
            }
        }
    }

    #[test]
    fn detection_provenance_matches_side_effect_inventories(spec in spec_strategy()) {
        let (p, truth) = generate(&spec).unwrap();
        let out = detect_scafs(&p, &Oracle::from_annotations(truth.annotations())).unwrap();

        let graph = detection_call_graph(&p).unwrap();
        let si = compute_side_effects(&p, &graph);
        for (name, prov) in out.allocators.iter() {
            let empty = BTreeSet::new();
            let effects = si.get(name).unwrap_or(&empty);
            match prov {
                Provenance::Seed => {}
                Provenance::Heuristic => {
                    prop_assert!(effects.is_empty(), "`{name}` accepted without oracle but has effects {effects:?}");
                }
                Provenance::OracleAssisted => {
                    prop_assert!(!effects.is_empty(), "`{name}` consulted the oracle without effects");
                }
            }
        }

        prop_assert_eq!(out.num_detected(), out.allocators.detected().len());
        prop_assert!(out.num_oracle_assisted() <= out.num_detected());
        prop_assert!(out.iterations <= p.defined().count() + 1);
        // per-iteration growth is monotone: deltas partition the detected set
        let mut seen = BTreeSet::new();
        for delta in &out.deltas {
            for name in delta {
                prop_assert!(seen.insert(name.clone()), "`{name}` delivered twice");
            }
        }
        prop_assert_eq!(seen, out.allocators.detected());
    }

    #[test]
    fn majority_is_order_insensitive_and_counts_yes(votes in proptest::collection::vec(
        prop_oneof![Just(Vote::Yes), Just(Vote::No), Just(Vote::Unparsable)],
        1..9,
    )) {
        let yes = votes.iter().filter(|v| matches!(v, Vote::Yes)).count();
        let expected = if yes * 2 > votes.len() {
            VerdictValue::Ignorable
        } else {
            VerdictValue::NotIgnorable
        };
        prop_assert_eq!(majority(&votes), expected);

        let mut reversed = votes.clone();
        reversed.reverse();
        prop_assert_eq!(majority(&reversed), majority(&votes));
    }
}
