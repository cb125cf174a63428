//! Detection loop behavior on the bundled fixtures and small programs.

use std::collections::BTreeMap;

use pta_core::cafd::{detect_scafs, DetectionOutcome, Provenance};
use pta_core::fixtures;
use pta_core::ir::parse_program;
use pta_core::oracle::Oracle;

fn detect(src: &str, oracle: &Oracle) -> DetectionOutcome {
    let p = parse_program(src).unwrap();
    detect_scafs(&p, oracle).unwrap()
}

#[test]
fn wrapper_is_accepted_and_initializing_callers_are_not() {
    let out = detect(fixtures::FIG2, &Oracle::conservative());
    assert_eq!(out.allocators.provenance("malloc"), Some(Provenance::Seed));
    assert_eq!(out.allocators.provenance("xmalloc"), Some(Provenance::Heuristic));
    assert_eq!(out.allocators.len(), 2);
    assert_eq!(out.num_detected(), 1);
    assert_eq!(out.num_oracle_assisted(), 0);
    assert_eq!(out.iterations, 2);
    assert_eq!(out.deltas, vec![vec!["xmalloc".to_owned()], vec![]]);

    let array_create = &out.decisions["array_create"];
    assert!(!array_create.accepted);
    assert!(array_create.reason.contains("fresh allocation"), "{}", array_create.reason);
    assert!(!out.decisions["make_bare_word"].accepted);
    assert_eq!(out.counters.queries, 0);
}

#[test]
fn error_path_effects_need_the_oracle() {
    let conservative = detect(fixtures::LALLOC, &Oracle::conservative());
    assert!(!conservative.allocators.contains("lalloc"));
    let decision = &conservative.decisions["lalloc"];
    assert!(!decision.accepted);
    assert!(decision.reason.contains("side effects"), "{}", decision.reason);

    let annotations =
        Oracle::from_annotations(BTreeMap::from([("lalloc".to_owned(), true)]));
    let assisted = detect(fixtures::LALLOC, &annotations);
    assert_eq!(assisted.allocators.provenance("lalloc"), Some(Provenance::OracleAssisted));
    assert_eq!(assisted.num_detected(), 1);
    assert_eq!(assisted.num_oracle_assisted(), 1);

    let unrelated =
        Oracle::from_annotations(BTreeMap::from([("other_fn".to_owned(), true)]));
    let defaulted = detect(fixtures::LALLOC, &unrelated);
    assert!(!defaulted.allocators.contains("lalloc"));
    assert!(defaulted.decisions["lalloc"].reason.contains("no annotation entry"));
}

#[test]
fn chains_are_absorbed_one_level_per_round() {
    let src = "\
extern malloc kind=alloc_seed

func l1(n:scalar) {
  t = call malloc()
  ret t
}

func l2(n:scalar) {
  t = call l1(n)
  ret t
}

func l3(n:scalar) {
  t = call l2(n)
  ret t
}
";
    let out = detect(src, &Oracle::conservative());
    assert_eq!(
        out.deltas,
        vec![vec!["l1".to_owned()], vec!["l2".to_owned()], vec!["l3".to_owned()], vec![]]
    );
    assert_eq!(out.iterations, 4);
    let defined = parse_program(src).unwrap().defined().count();
    assert!(out.iterations <= defined + 1);
}

#[test]
fn rejected_callers_are_reopened_when_a_callee_joins() {
    // f is judged in round 1 (it calls the seed directly) and rejected
    // because g is not yet a member; g joins in round 2, which must reopen
    // f for the round-3 accept.
    let src = "\
extern malloc kind=alloc_seed

func f(n:scalar) {
  a = call malloc()
  b = call g(n)
  c = phi a, b
  ret c
}

func g(n:scalar) {
  t = call h(n)
  ret t
}

func h(n:scalar) {
  t = call malloc()
  ret t
}
";
    let out = detect(src, &Oracle::conservative());
    assert_eq!(
        out.deltas,
        vec![vec!["h".to_owned()], vec!["g".to_owned()], vec!["f".to_owned()], vec![]]
    );
    let f = &out.decisions["f"];
    assert!(f.accepted);
    assert_eq!(f.iteration, 3, "the final decision must reflect the re-analysis round");
}

#[test]
fn dropped_allocations_disqualify() {
    let unused = "\
extern malloc kind=alloc_seed

func w(n:scalar) {
  p = call malloc()
  q = call malloc()
  ret q
}
";
    let out = detect(unused, &Oracle::conservative());
    assert!(!out.allocators.contains("w"));
    assert!(out.decisions["w"].reason.contains("never used"), "{}", out.decisions["w"].reason);

    let discarded = "\
extern malloc kind=alloc_seed

func w(n:scalar) {
  call malloc()
  q = call malloc()
  ret q
}
";
    let out = detect(discarded, &Oracle::conservative());
    assert!(!out.allocators.contains("w"));
    assert!(out.decisions["w"].reason.contains("discarded"), "{}", out.decisions["w"].reason);
}

#[test]
fn receiverless_indirect_allocator_call_is_a_dropped_allocation() {
    let src = "\
entry main

extern malloc kind=alloc_seed

func w(n:scalar) {
  t = call malloc()
  ret t
}

func driver(h:ptr, n:scalar) {
  store h, w
  fp = load h
  icall fp(n)
  p = call malloc()
  ret p
}

func main(n:scalar) {
  h = call malloc()
  r = call driver(h, n)
}
";
    let out = detect(src, &Oracle::conservative());
    assert!(out.allocators.contains("w"));
    assert!(!out.allocators.contains("driver"));
    assert!(
        out.decisions["driver"].reason.contains("discarded"),
        "{}",
        out.decisions["driver"].reason
    );
}

#[test]
fn detection_is_deterministic() {
    for src in [fixtures::FIG2, fixtures::LALLOC, fixtures::ICALL] {
        let a = detect(src, &Oracle::conservative());
        let b = detect(src, &Oracle::conservative());
        assert_eq!(a, b);
    }
}

#[test]
fn allocator_list_growth_is_monotone() {
    let out = detect(fixtures::FIG2, &Oracle::conservative());
    let mut size = out.allocators.len() - out.num_detected();
    for delta in &out.deltas {
        size += delta.len();
    }
    assert_eq!(size, out.allocators.len());
}
