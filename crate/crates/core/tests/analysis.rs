//! End-to-end checks of the three analysis modes on the bundled fixtures.

use std::collections::BTreeSet;

use pta_core::ir::parse_program;
use pta_core::panalysis::{analyze, AbsObj, ModeSpec, ObjOrigin, ValueRef};

fn al(names: &[&str]) -> BTreeSet<String> {
    names.iter().map(|s| s.to_string()).collect()
}

#[test]
fn fig2_baseline_merges_all_receivers() {
    let p = parse_program(pta_core::fixtures::FIG2).unwrap();
    assert!(pta_core::ir::validate(&p).is_empty());
    let r = analyze(&p, ModeSpec::Baseline).unwrap();

    // One allocation site: the malloc call inside the wrapper.
    assert_eq!(r.objects.len(), 1);
    let (&key, obj) = r.objects.iter().next().unwrap();
    assert_eq!(key, (1, None));
    assert_eq!(obj.origin, ObjOrigin::SeedSite);
    assert_eq!(obj.function, "xmalloc");

    let o = AbsObj::heap(key);
    for (func, value) in [("xmalloc", "temp"), ("array_create", "r"), ("make_bare_word", "w")] {
        let vr = ValueRef::new(func, value);
        assert!(r.pts.contains(&vr, &o), "{vr} should point at the shared object");
    }
}

#[test]
fn fig2_enhanced_splits_by_wrapper_callsite() {
    let p = parse_program(pta_core::fixtures::FIG2).unwrap();
    let members = al(&["malloc", "xmalloc"]);
    let r = analyze(&p, ModeSpec::Enhanced(&members)).unwrap();

    let keys: Vec<_> = r.objects.keys().copied().collect();
    assert_eq!(keys, vec![(3, None), (7, None)]);
    assert!(r.objects.values().all(|o| o.origin == ObjOrigin::ModeledSite));

    // The wrapper body is excluded, its receiver no longer tracked.
    assert!(!r.pts.pts.contains_key(&ValueRef::new("xmalloc", "temp")));
    assert_eq!(r.pts.of(&ValueRef::new("array_create", "r")), [AbsObj::heap((3, None))].into());
    assert_eq!(r.pts.of(&ValueRef::new("make_bare_word", "w")), [AbsObj::heap((7, None))].into());
}

#[test]
fn fig2_one_callsite_splits_by_caller() {
    let p = parse_program(pta_core::fixtures::FIG2).unwrap();
    let r = analyze(&p, ModeSpec::OneCallsite).unwrap();

    let clone_map = r.clone_map.as_ref().unwrap();
    assert!(clone_map.clones.contains_key("xmalloc__c3"));
    assert!(clone_map.clones.contains_key("xmalloc__c7"));
    assert_eq!(clone_map.kept, ["main".to_string()].into());

    let keys: Vec<_> = r.objects.keys().copied().collect();
    assert_eq!(keys, vec![(1, Some(3)), (1, Some(7))]);
    assert_eq!(
        r.pts.of(&ValueRef::new("array_create__c11", "r")),
        [AbsObj::heap((1, Some(3)))].into()
    );
    assert_eq!(
        r.pts.of(&ValueRef::new("xmalloc__c3", "temp")),
        [AbsObj::heap((1, Some(3)))].into()
    );
}

#[test]
fn icall_targets_shrink_under_allocator_modeling() {
    let p = parse_program(pta_core::fixtures::ICALL).unwrap();
    let base = analyze(&p, ModeSpec::Baseline).unwrap();
    let both: BTreeSet<String> = al(&["func1", "func2"]);
    assert_eq!(base.indirect.len(), 2);
    for targets in base.indirect.values() {
        assert_eq!(*targets, both);
    }

    let members = al(&["malloc", "xmalloc"]);
    let enh = analyze(&p, ModeSpec::Enhanced(&members)).unwrap();
    let sizes: Vec<usize> = enh.indirect.values().map(|t| t.len()).collect();
    assert_eq!(sizes, vec![1, 1]);
    let all: BTreeSet<String> = enh.indirect.values().flatten().cloned().collect();
    assert_eq!(all, both);
}
