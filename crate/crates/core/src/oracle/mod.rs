//! Ignorability oracles.
//!
//! When a candidate allocation function carries side-effecting statements,
//! detection asks an oracle whether those effects are confined to
//! error-handling paths. Three backends share one interface: a conservative
//! constant (never ignorable), an annotation file (curated ground truth),
//! and a remote LLM endpoint queried multiple times with majority voting.
//! Every verdict carries the query/token/latency cost it incurred.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use crate::ir::SiteId;

mod prompt;
mod remote;

pub use prompt::{parse_answer, render_prompt};
pub use remote::{CassetteConfig, CassetteMode, RemoteConfig};

/// One flagged function, as presented to an oracle.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SideEffectQuery {
    pub function_name: String,
    /// Original source excerpt when the program carries one, otherwise the
    /// function's rendered IR.
    pub source: String,
    /// Flagged statements in site order: `(site id, rendered statement)`.
    pub flagged: Vec<(SiteId, String)>,
}

/// A single vote extracted from one oracle response. A response without a
/// parseable final answer counts as [`Vote::Unparsable`], which tallies as a
/// NO.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Vote {
    Yes,
    No,
    Unparsable,
}

impl Vote {
    pub fn as_str(self) -> &'static str {
        match self {
            Vote::Yes => "YES",
            Vote::No => "NO",
            Vote::Unparsable => "UNPARSABLE",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VerdictValue {
    Ignorable,
    NotIgnorable,
}

/// Cost incurred answering queries: query count, input/output tokens, and
/// wall-clock latency. Deterministic backends report zeros.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OracleCounters {
    pub queries: u64,
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub latency_ms: u64,
}

impl OracleCounters {
    pub fn absorb(&mut self, other: &OracleCounters) {
        self.queries += other.queries;
        self.input_tokens += other.input_tokens;
        self.output_tokens += other.output_tokens;
        self.latency_ms += other.latency_ms;
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Verdict {
    pub value: VerdictValue,
    /// Individual votes; one entry per query for the remote backend, a
    /// single entry for deterministic backends.
    pub votes: Vec<Vote>,
    /// Auxiliary flag, e.g. a missing annotation entry.
    pub note: Option<String>,
    pub counters: OracleCounters,
}

/// Majority tally: strictly more YES votes than half the total.
pub fn majority(votes: &[Vote]) -> VerdictValue {
    let yes = votes.iter().filter(|v| **v == Vote::Yes).count();
    if yes * 2 > votes.len() {
        VerdictValue::Ignorable
    } else {
        VerdictValue::NotIgnorable
    }
}

#[derive(Debug, thiserror::Error)]
pub enum OracleError {
    #[error("oracle configuration: {0}")]
    Config(String),
    #[error("annotation file {path}: {message}")]
    Annotations { path: PathBuf, message: String },
    #[error("oracle transport: {0}")]
    Transport(String),
    #[error("cassette: {0}")]
    Cassette(String),
}

enum Backend {
    /// Constant NotIgnorable: never trusts a flagged function.
    Conservative,
    /// Function name to ignorability, curated by hand.
    Annotations(BTreeMap<String, bool>),
    Remote(remote::RemoteOracle),
}

impl fmt::Debug for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Backend::Conservative => write!(f, "Conservative"),
            Backend::Annotations(map) => write!(f, "Annotations({} entries)", map.len()),
            Backend::Remote(_) => write!(f, "Remote"),
        }
    }
}

#[derive(Debug)]
pub struct Oracle {
    backend: Backend,
}

impl Oracle {
    pub fn conservative() -> Oracle {
        Oracle { backend: Backend::Conservative }
    }

    pub fn from_annotations(map: BTreeMap<String, bool>) -> Oracle {
        Oracle { backend: Backend::Annotations(map) }
    }

    /// Load an annotation file: a JSON object mapping function names to
    /// `"ignorable"` or `"not_ignorable"`.
    pub fn from_annotations_path(path: &Path) -> Result<Oracle, OracleError> {
        let annot = |message: String| OracleError::Annotations { path: path.to_owned(), message };
        let text = std::fs::read_to_string(path).map_err(|e| annot(e.to_string()))?;
        let raw: BTreeMap<String, String> =
            serde_json::from_str(&text).map_err(|e| annot(e.to_string()))?;
        let mut map = BTreeMap::new();
        for (name, verdict) in raw {
            let v = match verdict.as_str() {
                "ignorable" => true,
                "not_ignorable" => false,
                other => return Err(annot(format!("unknown verdict `{other}` for `{name}`"))),
            };
            map.insert(name, v);
        }
        Ok(Oracle::from_annotations(map))
    }

    /// Remote LLM backend; validates the configuration up front.
    pub fn remote(cfg: RemoteConfig) -> Result<Oracle, OracleError> {
        Ok(Oracle { backend: Backend::Remote(remote::RemoteOracle::new(cfg)?) })
    }

    /// Classify one flagged function. Transport problems (after retries) and
    /// cassette misses are errors; everything else resolves to a verdict.
    pub fn classify(&self, query: &SideEffectQuery) -> Result<Verdict, OracleError> {
        match &self.backend {
            Backend::Conservative => Ok(Verdict {
                value: VerdictValue::NotIgnorable,
                votes: vec![Vote::No],
                note: None,
                counters: OracleCounters::default(),
            }),
            Backend::Annotations(map) => {
                let (value, vote, note) = match map.get(&query.function_name) {
                    Some(true) => (VerdictValue::Ignorable, Vote::Yes, None),
                    Some(false) => (VerdictValue::NotIgnorable, Vote::No, None),
                    None => (
                        VerdictValue::NotIgnorable,
                        Vote::No,
                        Some(format!(
                            "no annotation entry for `{}`; defaulting to not ignorable",
                            query.function_name
                        )),
                    ),
                };
                Ok(Verdict { value, votes: vec![vote], note, counters: OracleCounters::default() })
            }
            Backend::Remote(r) => r.classify(query),
        }
    }
}
