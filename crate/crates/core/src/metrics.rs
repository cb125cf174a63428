//! Precision metrics over analysis modes.
//!
//! Baseline objects are partitioned against an allocator list: K holds the
//! objects the baseline allocates inside detected allocator bodies (the
//! merge points wrappers cause), A holds the per-callsite objects the
//! refined analysis mints in their place, and R holds everything else,
//! identical on both sides. Reported per comparison row:
//!
//! * `thoc` total heap object count, before and after
//! * `sup` size of the shared rest R
//! * `pc1`/`prr1` mean pointed-by size over K vs A and the relative
//!   reduction
//! * `pc2`/`prr2` the same over R
//! * `anc`/`arr` mean alias-partner count over the affected pointers P and
//!   its reduction
//! * `er` object-count expansion ratio
//!
//! A mean over an empty set has no value and serializes as null; reductions
//! against an undefined or zero reference are null as well. Percentages are
//! rounded to one decimal, half up; other reals to four decimals.

use std::collections::{BTreeMap, BTreeSet};

use crate::ir::{Program, SiteId};
use crate::panalysis::{
    analyze, AbsObj, AnalysisResult, AnalyzeError, Mode, ModeSpec, ObjKey, ObjOrigin, ValueRef,
};

/// The three analyses every comparison is built from.
#[derive(Debug)]
pub struct ModeResults {
    pub baseline: AnalysisResult,
    pub enhanced: AnalysisResult,
    pub one_callsite: AnalysisResult,
}

/// Run all three modes with one allocator list (seeds included).
pub fn run_modes(p: &Program, al: &BTreeSet<String>) -> Result<ModeResults, AnalyzeError> {
    Ok(ModeResults {
        baseline: analyze(p, ModeSpec::Baseline)?,
        enhanced: analyze(p, ModeSpec::Enhanced(al))?,
        one_callsite: analyze(p, ModeSpec::OneCallsite)?,
    })
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct CompareRow {
    pub mode: Mode,
    pub thoc: (usize, usize),
    pub sup: usize,
    pub pc1: Option<(f64, f64)>,
    pub prr1: Option<f64>,
    pub pc2: Option<(f64, f64)>,
    pub prr2: Option<f64>,
    pub anc: Option<(f64, f64)>,
    pub arr: Option<f64>,
    pub er: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct IcallRow {
    pub mode: Mode,
    /// Indirect callsites present in both the baseline and this mode.
    pub tn: usize,
    /// Of those, callsites whose target set shrank.
    pub on: usize,
    /// Mean baseline target count over the shrunken callsites.
    pub oa: Option<f64>,
    /// Mean refined target count over the shrunken callsites.
    pub ea: Option<f64>,
}

/// Round to one decimal, half away from zero (values here are >= 0).
fn round1(x: f64) -> f64 {
    (x * 10.0).round() / 10.0
}

fn round4(x: f64) -> f64 {
    (x * 10_000.0).round() / 10_000.0
}

fn pct(fraction: f64) -> f64 {
    round1(fraction * 100.0)
}

fn mean(counts: &[usize]) -> Option<f64> {
    if counts.is_empty() {
        return None;
    }
    let sum: usize = counts.iter().sum();
    Some(round4(sum as f64 / counts.len() as f64))
}

/// Relative reduction `1 - after/before` as a percentage, defined only when
/// both means exist and the reference is nonzero.
fn reduction(before: Option<f64>, after: Option<f64>) -> Option<f64> {
    match (before, after) {
        (Some(b), Some(a)) if b > 0.0 => Some(pct(1.0 - a / b)),
        _ => None,
    }
}

fn expansion(before: usize, after: usize) -> Option<f64> {
    (before > 0).then(|| round4(after as f64 / before as f64))
}

/// Pointed-by sets of every heap object: which values point at its base.
/// Objects nobody points at are present with empty sets.
pub fn heap_pbs(res: &AnalysisResult) -> BTreeMap<ObjKey, BTreeSet<ValueRef>> {
    let mut out: BTreeMap<ObjKey, BTreeSet<ValueRef>> =
        res.objects.keys().map(|k| (*k, BTreeSet::new())).collect();
    for (v, objs) in &res.pts.pts {
        for o in objs {
            if let Some(key) = o.as_heap_base() {
                if let Some(set) = out.get_mut(&key) {
                    set.insert(v.clone());
                }
            }
        }
    }
    out
}

/// Values sharing at least one pointee with `v` (excluding `v` itself).
fn partner_count(pts: &BTreeMap<ValueRef, BTreeSet<AbsObj>>, v: &ValueRef) -> usize {
    let Some(mine) = pts.get(v) else { return 0 };
    pts.iter()
        .filter(|(u, objs)| *u != v && objs.intersection(mine).next().is_some())
        .count()
}

fn partner_mean(pts: &BTreeMap<ValueRef, BTreeSet<AbsObj>>, p: &BTreeSet<ValueRef>) -> Option<f64> {
    let counts: Vec<usize> = p.iter().map(|v| partner_count(pts, v)).collect();
    mean(&counts)
}

fn pbs_sizes(
    pbs: &BTreeMap<ObjKey, BTreeSet<ValueRef>>,
    keys: impl IntoIterator<Item = ObjKey>,
) -> Vec<usize> {
    keys.into_iter().map(|k| pbs[&k].len()).collect()
}

/// Build the three comparison rows for one program and allocator list. The
/// baseline row compares the baseline to itself so reductions read as zero;
/// the pointer set P measured by `anc`/`arr` comes from the enhanced
/// partition and is shared by all rows.
pub fn compare_rows(p: &Program, modes: &ModeResults) -> Vec<CompareRow> {
    let seeds = p.seeds();
    let modeled: BTreeSet<String> = modes
        .enhanced
        .allocator_members
        .iter()
        .filter(|m| !seeds.contains(*m))
        .cloned()
        .collect();

    let base = &modes.baseline;
    let enh = &modes.enhanced;
    let one = &modes.one_callsite;
    let pbs_base = heap_pbs(base);
    let pbs_enh = heap_pbs(enh);
    let pbs_one = heap_pbs(one);

    // Shared partition of the baseline objects.
    let k_set: BTreeSet<ObjKey> = base
        .objects
        .iter()
        .filter(|(_, o)| modeled.contains(&o.function))
        .map(|(k, _)| *k)
        .collect();
    let r_set: BTreeSet<ObjKey> =
        base.objects.keys().filter(|k| !k_set.contains(k)).copied().collect();

    // Enhanced side of the partition.
    let a_enh: BTreeSet<ObjKey> = enh
        .objects
        .iter()
        .filter(|(_, o)| o.origin == ObjOrigin::ModeledSite)
        .map(|(k, _)| *k)
        .collect();
    let r_enh: BTreeSet<ObjKey> =
        enh.objects.keys().filter(|k| !a_enh.contains(k)).copied().collect();
    assert_eq!(
        r_set, r_enh,
        "objects outside allocator bodies must be identical across modes"
    );

    let k_mean = mean(&pbs_sizes(&pbs_base, k_set.iter().copied()));
    let ro_mean = mean(&pbs_sizes(&pbs_base, r_set.iter().copied()));
    let a_mean = mean(&pbs_sizes(&pbs_enh, a_enh.iter().copied()));
    let re_mean = mean(&pbs_sizes(&pbs_enh, r_enh.iter().copied()));

    // Affected pointers: everything that points at a refined object.
    let p_values: BTreeSet<ValueRef> = a_enh
        .iter()
        .chain(r_enh.iter())
        .flat_map(|k| pbs_enh[k].iter().cloned())
        .collect();
    let as_o = partner_mean(&base.pts.pts, &p_values);
    let as_e = partner_mean(&enh.pts.pts, &p_values);

    let pair = |x: Option<f64>, y: Option<f64>| Some((x?, y?));

    let baseline_row = CompareRow {
        mode: Mode::Baseline,
        thoc: (base.objects.len(), base.objects.len()),
        sup: r_set.len(),
        pc1: pair(k_mean, k_mean),
        prr1: reduction(k_mean, k_mean),
        pc2: pair(ro_mean, ro_mean),
        prr2: reduction(ro_mean, ro_mean),
        anc: pair(as_o, as_o),
        arr: reduction(as_o, as_o),
        er: expansion(base.objects.len(), base.objects.len()),
    };

    let enhanced_row = CompareRow {
        mode: Mode::Enhanced,
        thoc: (base.objects.len(), enh.objects.len()),
        sup: r_set.len(),
        pc1: pair(k_mean, a_mean),
        prr1: reduction(k_mean, a_mean),
        pc2: pair(ro_mean, re_mean),
        prr2: reduction(ro_mean, re_mean),
        anc: pair(as_o, as_e),
        arr: reduction(as_o, as_e),
        er: expansion(base.objects.len(), enh.objects.len()),
    };

    // One-callsite side: objects at K's sites stay split per context, the
    // rest collapses back to its original site with pointed-by sets unioned
    // over the clone variants.
    let k_sites: BTreeSet<SiteId> = k_set.iter().map(|k| k.0).collect();
    let mut a_one: BTreeSet<ObjKey> = BTreeSet::new();
    let mut r_one: BTreeMap<SiteId, BTreeSet<ValueRef>> = BTreeMap::new();
    for key in one.objects.keys() {
        if k_sites.contains(&key.0) {
            a_one.insert(*key);
        } else {
            r_one.entry(key.0).or_default().extend(pbs_one[key].iter().cloned());
        }
    }
    let r_sites: BTreeSet<SiteId> = r_set.iter().map(|k| k.0).collect();
    assert_eq!(
        r_one.keys().copied().collect::<BTreeSet<_>>(),
        r_sites,
        "clone variants must cover exactly the baseline's unaffected sites"
    );

    let a1_mean = mean(&pbs_sizes(&pbs_one, a_one.iter().copied()));
    let r1_counts: Vec<usize> = r_one.values().map(|s| s.len()).collect();
    let r1_mean = mean(&r1_counts);

    // Alias partners under cloning: collapse every variant back to its
    // original identity, dropping values that live in clones of allocator
    // bodies since the enhanced analysis has no counterpart for them.
    let cm = one.clone_map.as_ref().expect("one-callsite analysis carries a clone map");
    let mut agg: BTreeMap<ValueRef, BTreeSet<AbsObj>> = BTreeMap::new();
    for (v, objs) in &one.pts.pts {
        let original = cm.origin_of(&v.function).to_owned();
        if modeled.contains(&original) {
            continue;
        }
        agg.entry(ValueRef::new(original, &v.value)).or_default().extend(objs.iter().cloned());
    }
    let as_e1 = partner_mean(&agg, &p_values);

    let one_total = a_one.len() + r_one.len();
    let one_row = CompareRow {
        mode: Mode::OneCallsite,
        thoc: (base.objects.len(), one_total),
        sup: r_one.len(),
        pc1: pair(k_mean, a1_mean),
        prr1: reduction(k_mean, a1_mean),
        pc2: pair(ro_mean, r1_mean),
        prr2: reduction(ro_mean, r1_mean),
        anc: pair(as_o, as_e1),
        arr: reduction(as_o, as_e1),
        er: expansion(base.objects.len(), one_total),
    };

    vec![baseline_row, enhanced_row, one_row]
}

/// Indirect-call resolution rows for the refined modes against the
/// baseline. Only callsites present in both analyses are compared; target
/// sets are already keyed by original callsite and unioned over clones.
pub fn icall_rows(modes: &ModeResults) -> Vec<IcallRow> {
    [&modes.enhanced, &modes.one_callsite]
        .into_iter()
        .map(|row| icall_row(&modes.baseline, row))
        .collect()
}

fn icall_row(base: &AnalysisResult, refined: &AnalysisResult) -> IcallRow {
    let mut tn = 0;
    let mut before = Vec::new();
    let mut after = Vec::new();
    for (site, base_targets) in &base.indirect {
        let Some(refined_targets) = refined.indirect.get(site) else { continue };
        tn += 1;
        if refined_targets.len() < base_targets.len() {
            before.push(base_targets.len());
            after.push(refined_targets.len());
        }
    }
    IcallRow { mode: refined.mode, tn, on: before.len(), oa: mean(&before), ea: mean(&after) }
}
