//! Pointer-analysis toolkit.
//!
//! The pipeline, bottom to top:
//!
//! * [`ir`]: textual program form, parser, printer, validator.
//! * [`callgraph`]: call graph construction and bottom-up orderings.
//! * [`panalysis`]: Andersen-style inclusion analysis in three modes
//!   (baseline, allocator-enhanced, one-callsite cloning), plus a naive
//!   reference solver.
//! * [`cafd`]: custom-allocation-function detection (value-flow tracking,
//!   side-effect inventory, the iterative detection loop).
//! * [`oracle`]: ignorability oracles for flagged side effects, from a
//!   constant conservative answer to a majority-voted remote LLM.
//! * [`metrics`]: object partitioning and the precision/cost report.
//! * [`benchgen`]: seeded program generation with ground-truth labels, a
//!   concrete interpreter, and dynamic soundness checking.
//! * [`batch`]: sequential/parallel helpers for corpus-sized sweeps.

pub mod batch;
pub mod benchgen;
pub mod cafd;
pub mod callgraph;
pub mod ir;
pub mod metrics;
pub mod oracle;
pub mod panalysis;

/// Bundled example programs, also present under `fixtures/`.
pub mod fixtures {
    /// Allocation-wrapper shape: one wrapper, two initializing callers.
    pub const FIG2: &str = include_str!("../fixtures/fig2.ir");
    /// Allocator whose side effects all sit on error-handling paths.
    pub const LALLOC: &str = include_str!("../fixtures/lalloc.ir");
    /// Indirect calls whose target sets shrink under allocator modeling.
    pub const ICALL: &str = include_str!("../fixtures/icall.ir");
}
