//! Sequential and parallel sweeps over generated programs.
//!
//! One sweep item generates a program, runs conservative detection, and
//! solves the baseline analysis; the outcome digest keeps the work
//! observable. Items are independent, so the parallel path is a plain
//! data-parallel map; outcomes come back in input order either way.

use serde::Serialize;

use crate::benchgen::{generate, GenError, GenSpec};
use crate::cafd::{detect_scafs, DetectError};
use crate::ir::print_program;
use crate::oracle::Oracle;
use crate::panalysis::{analyze, ModeSpec};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SweepOutcome {
    pub seed: u64,
    pub statements: usize,
    pub detected: usize,
    /// Number of values with a nonempty baseline points-to set.
    pub pts_entries: usize,
    /// Rendered program size in bytes.
    pub text_bytes: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum SweepError {
    #[error(transparent)]
    Gen(#[from] GenError),
    #[error(transparent)]
    Detect(#[from] DetectError),
}

/// Generate, detect, and solve one spec.
pub fn sweep_one(spec: &GenSpec) -> Result<SweepOutcome, SweepError> {
    let (p, _) = generate(spec)?;
    let out = detect_scafs(&p, &Oracle::conservative())?;
    let baseline = analyze(&p, ModeSpec::Baseline).map_err(DetectError::from)?;
    Ok(SweepOutcome {
        seed: spec.seed,
        statements: p.statements().count(),
        detected: out.allocators.detected().len(),
        pts_entries: baseline.pts.pts.values().filter(|s| !s.is_empty()).count(),
        text_bytes: print_program(&p).len(),
    })
}

/// Run every spec, in input order. With `parallel` set (and the crate's
/// `parallel` feature enabled) items run on the rayon pool; without the
/// feature the flag quietly degrades to the sequential path.
pub fn sweep(specs: &[GenSpec], parallel: bool) -> Result<Vec<SweepOutcome>, SweepError> {
    #[cfg(feature = "parallel")]
    if parallel {
        use rayon::prelude::*;
        return specs.par_iter().map(sweep_one).collect();
    }
    let _ = parallel;
    specs.iter().map(sweep_one).collect()
}
