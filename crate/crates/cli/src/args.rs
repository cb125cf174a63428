//! Command-line definitions.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "pta",
    version,
    about = "Pointer-analysis toolkit: allocation-wrapper detection, context-enhanced solving, precision metrics"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse a program and report structural violations.
    Validate { input: PathBuf },

    /// Detect custom allocation functions. INPUT may be a directory of
    /// .ir files, which are processed as a batch.
    Detect {
        input: PathBuf,
        #[command(flatten)]
        oracle: OracleArgs,
        /// Write the report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Process a batch directory on the thread pool.
        #[arg(long)]
        parallel: bool,
    },

    /// Solve the points-to analysis in one mode. INPUT may be a directory
    /// of .ir files.
    Analyze {
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = ModeArg::Baseline)]
        mode: ModeArg,
        /// JSON file naming the allocator list: an array of function names
        /// or a detect report. Without it, the enhanced mode runs
        /// detection first using the oracle flags.
        #[arg(long)]
        allocators: Option<PathBuf>,
        #[command(flatten)]
        oracle: OracleArgs,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        parallel: bool,
    },

    /// Run all three modes and report the precision comparison table.
    Compare {
        input: PathBuf,
        /// Allocator list file; defaults to running detection.
        #[arg(long)]
        allocators: Option<PathBuf>,
        #[command(flatten)]
        oracle: OracleArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },

    /// Report indirect-call target refinement across modes.
    Icalls {
        input: PathBuf,
        #[arg(long)]
        allocators: Option<PathBuf>,
        #[command(flatten)]
        oracle: OracleArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },

    /// Generate labeled benchmark programs.
    Gen {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 6)]
        functions: usize,
        /// Prepend a clean wrapper chain of this depth.
        #[arg(long, default_value_t = 0)]
        chain_depth: usize,
        #[arg(long, default_value_t = 0.3)]
        side_effect_rate: f64,
        #[arg(long, default_value_t = 0.5)]
        error_path_rate: f64,
        /// Defaults to 0.15, or 0 under --executable.
        #[arg(long)]
        icall_rate: Option<f64>,
        /// Restrict to interpretable statements (no phi, no indirect calls).
        #[arg(long)]
        executable: bool,
        /// Generate this many programs (seeds counting up from --seed);
        /// more than one requires --out-dir.
        #[arg(long, default_value_t = 1)]
        count: usize,
        /// Write the program here instead of stdout (single program only).
        #[arg(long, conflicts_with = "out_dir")]
        out: Option<PathBuf>,
        /// Write programs and ground-truth labels into this directory.
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Write the ground-truth labels here (single program only).
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long)]
        parallel: bool,
    },

    /// Execute a program and report allocations and pointer holdings.
    Interpret {
        input: PathBuf,
        /// Maximum number of executed statements.
        #[arg(long, default_value_t = 100_000)]
        budget: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Baseline,
    Enhanced,
    OneCallsite,
}

/// Oracle selection, shared by every detection-running subcommand.
#[derive(Debug, Args)]
pub struct OracleArgs {
    /// `conservative`, `annotations=PATH`, or `remote`.
    #[arg(long, default_value = "conservative")]
    pub oracle: String,
    /// Remote endpoint URL; PTA_ORACLE_URL is used when unset.
    #[arg(long)]
    pub endpoint: Option<String>,
    /// Bearer token; PTA_ORACLE_KEY is used when unset.
    #[arg(long)]
    pub api_key: Option<String>,
    #[arg(long, default_value = "default")]
    pub model: String,
    /// Sampling temperature (0.4, 0.6, or 0.8).
    #[arg(long, default_value_t = 0.6)]
    pub temperature: f64,
    /// Samples per verdict; must be odd.
    #[arg(long, default_value_t = 5)]
    pub queries: u32,
    #[arg(long, default_value_t = 30_000)]
    pub timeout_ms: u64,
    /// Extra attempts per sample after a transport failure.
    #[arg(long, default_value_t = 2)]
    pub retries: u32,
    /// Cassette file for recording or replaying remote traffic.
    #[arg(long)]
    pub cassette: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = CassetteModeArg::Replay)]
    pub cassette_mode: CassetteModeArg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CassetteModeArg {
    Record,
    Replay,
}
