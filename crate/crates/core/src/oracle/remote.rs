//! Remote LLM backend: repeated sampling over HTTP with majority voting,
//! plus a record/replay cassette so runs can be made hermetic.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use sha2::{Digest, Sha256};

use super::prompt::{parse_answer, render_prompt};
use super::{majority, OracleCounters, OracleError, SideEffectQuery, Verdict, Vote};

const ALLOWED_TEMPERATURES: [f64; 3] = [0.4, 0.6, 0.8];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CassetteMode {
    /// Send live queries and write every response to the cassette file.
    Record,
    /// Serve responses from the cassette file; never touch the network.
    Replay,
}

#[derive(Debug, Clone)]
pub struct CassetteConfig {
    pub path: PathBuf,
    pub mode: CassetteMode,
}

#[derive(Debug, Clone)]
pub struct RemoteConfig {
    pub endpoint: String,
    pub model: String,
    pub api_key: Option<String>,
    /// Sampling temperature; one of 0.4, 0.6, 0.8.
    pub temperature: f64,
    /// Votes per verdict; must be odd so the majority is strict.
    pub query_count: u32,
    pub timeout_ms: u64,
    /// Extra attempts per query after a transport failure.
    pub retries: u32,
    pub cassette: Option<CassetteConfig>,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        RemoteConfig {
            endpoint: String::new(),
            model: "default".into(),
            api_key: None,
            temperature: 0.6,
            query_count: 5,
            timeout_ms: 30_000,
            retries: 2,
            cassette: None,
        }
    }
}

struct CassetteState {
    path: PathBuf,
    mode: CassetteMode,
    entries: BTreeMap<String, Vec<String>>,
}

pub(super) struct RemoteOracle {
    cfg: RemoteConfig,
    client: reqwest::blocking::Client,
    cassette: Option<Mutex<CassetteState>>,
}

impl RemoteOracle {
    pub(super) fn new(cfg: RemoteConfig) -> Result<RemoteOracle, OracleError> {
        if cfg.query_count == 0 || cfg.query_count % 2 == 0 {
            return Err(OracleError::Config(format!(
                "query count must be odd, got {}",
                cfg.query_count
            )));
        }
        if !ALLOWED_TEMPERATURES.iter().any(|t| (cfg.temperature - t).abs() < 1e-9) {
            return Err(OracleError::Config(format!(
                "temperature must be one of 0.4, 0.6, 0.8, got {}",
                cfg.temperature
            )));
        }
        let replaying =
            matches!(cfg.cassette.as_ref().map(|c| c.mode), Some(CassetteMode::Replay));
        if cfg.endpoint.is_empty() && !replaying {
            return Err(OracleError::Config("remote oracle requires an endpoint".into()));
        }
        let cassette = match &cfg.cassette {
            None => None,
            Some(c) => {
                let entries = match c.mode {
                    CassetteMode::Replay => load_cassette(&c.path)?,
                    // A fresh recording starts from whatever is already on
                    // disk so multiple runs can share one cassette.
                    CassetteMode::Record if c.path.exists() => load_cassette(&c.path)?,
                    CassetteMode::Record => BTreeMap::new(),
                };
                Some(Mutex::new(CassetteState {
                    path: c.path.clone(),
                    mode: c.mode,
                    entries,
                }))
            }
        };
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(cfg.timeout_ms))
            .build()
            .map_err(|e| OracleError::Config(format!("http client: {e}")))?;
        Ok(RemoteOracle { cfg, client, cassette })
    }

    pub(super) fn classify(&self, query: &SideEffectQuery) -> Result<Verdict, OracleError> {
        let prompt = render_prompt(query);
        let key = format!("{:x}", Sha256::digest(prompt.as_bytes()));
        let want = self.cfg.query_count as usize;

        if let Some(lock) = &self.cassette {
            let state = lock.lock().unwrap();
            if state.mode == CassetteMode::Replay {
                let responses = state.entries.get(&key).ok_or_else(|| {
                    OracleError::Cassette(format!(
                        "no recorded responses for `{}` (prompt {key})",
                        query.function_name
                    ))
                })?;
                if responses.len() < want {
                    return Err(OracleError::Cassette(format!(
                        "cassette holds {} responses for `{}`, need {want}",
                        responses.len(),
                        query.function_name
                    )));
                }
                let votes: Vec<Vote> = responses[..want].iter().map(|r| parse_answer(r)).collect();
                return Ok(Verdict {
                    value: majority(&votes),
                    votes,
                    note: None,
                    counters: OracleCounters { queries: want as u64, ..Default::default() },
                });
            }
        }

        let mut votes = Vec::with_capacity(want);
        let mut texts = Vec::with_capacity(want);
        let mut counters = OracleCounters::default();
        for _ in 0..want {
            let sample = self.sample(&prompt)?;
            counters.queries += 1;
            counters.input_tokens += sample.input_tokens;
            counters.output_tokens += sample.output_tokens;
            counters.latency_ms += sample.latency_ms;
            votes.push(parse_answer(&sample.text));
            texts.push(sample.text);
        }

        if let Some(lock) = &self.cassette {
            let mut state = lock.lock().unwrap();
            if state.mode == CassetteMode::Record {
                state.entries.insert(key, texts);
                persist_cassette(&state)?;
            }
        }

        Ok(Verdict { value: majority(&votes), votes, note: None, counters })
    }

    /// One live query with transport-level retries. A response we cannot
    /// make sense of still yields text (an unparsable vote); only transport
    /// failures escalate to errors.
    fn sample(&self, prompt: &str) -> Result<Sample, OracleError> {
        let body = serde_json::json!({
            "model": self.cfg.model,
            "temperature": self.cfg.temperature,
            "messages": [{"role": "user", "content": prompt}],
        });
        let mut last_err = String::new();
        for _ in 0..=self.cfg.retries {
            let start = Instant::now();
            let mut req = self.client.post(&self.cfg.endpoint).json(&body);
            if let Some(key) = &self.cfg.api_key {
                req = req.bearer_auth(key);
            }
            match req.send() {
                Ok(resp) if resp.status().is_success() => {
                    let latency_ms = start.elapsed().as_millis() as u64;
                    let raw = resp.text().unwrap_or_default();
                    let (text, input_tokens, output_tokens) = dissect_response(&raw);
                    return Ok(Sample { text, input_tokens, output_tokens, latency_ms });
                }
                Ok(resp) => last_err = format!("endpoint returned {}", resp.status()),
                Err(e) => last_err = e.to_string(),
            }
        }
        Err(OracleError::Transport(last_err))
    }
}

struct Sample {
    text: String,
    input_tokens: u64,
    output_tokens: u64,
    latency_ms: u64,
}

/// Pull the completion text and token usage out of a response body. Unknown
/// shapes degrade to empty text, which parses as an unparsable vote.
fn dissect_response(raw: &str) -> (String, u64, u64) {
    let v: serde_json::Value = match serde_json::from_str(raw) {
        Ok(v) => v,
        Err(_) => return (String::new(), 0, 0),
    };
    let text = v["choices"][0]["message"]["content"]
        .as_str()
        .or_else(|| v["choices"][0]["text"].as_str())
        .or_else(|| v["content"].as_str())
        .unwrap_or_default()
        .to_owned();
    let usage = &v["usage"];
    let input = usage["prompt_tokens"].as_u64().or_else(|| usage["input_tokens"].as_u64());
    let output =
        usage["completion_tokens"].as_u64().or_else(|| usage["output_tokens"].as_u64());
    (text, input.unwrap_or(0), output.unwrap_or(0))
}

fn load_cassette(path: &std::path::Path) -> Result<BTreeMap<String, Vec<String>>, OracleError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| OracleError::Cassette(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| OracleError::Cassette(format!("{}: {e}", path.display())))
}

fn persist_cassette(state: &CassetteState) -> Result<(), OracleError> {
    let text = serde_json::to_string_pretty(&state.entries).expect("cassette serializes");
    std::fs::write(&state.path, text)
        .map_err(|e| OracleError::Cassette(format!("{}: {e}", state.path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_rejects_even_query_counts_and_odd_temperatures() {
        let cfg = RemoteConfig { query_count: 4, endpoint: "http://x".into(), ..Default::default() };
        assert!(matches!(RemoteOracle::new(cfg), Err(OracleError::Config(_))));
        let cfg = RemoteConfig { temperature: 0.5, endpoint: "http://x".into(), ..Default::default() };
        assert!(matches!(RemoteOracle::new(cfg), Err(OracleError::Config(_))));
        let cfg = RemoteConfig { ..Default::default() };
        assert!(matches!(RemoteOracle::new(cfg), Err(OracleError::Config(_))));
    }

    #[test]
    fn response_dissection_handles_common_shapes() {
        let (t, i, o) = dissect_response(
            r#"{"choices":[{"message":{"content":"ok\nANSWER: YES"}}],"usage":{"prompt_tokens":7,"completion_tokens":3}}"#,
        );
        assert_eq!(t, "ok\nANSWER: YES");
        assert_eq!((i, o), (7, 3));
        let (t, _, _) = dissect_response(r#"{"choices":[{"text":"ANSWER: NO"}]}"#);
        assert_eq!(t, "ANSWER: NO");
        let (t, i, o) = dissect_response("not json");
        assert_eq!((t.as_str(), i, o), ("", 0, 0));
    }

    #[test]
    fn replay_round_trips_a_recording() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cassette.json");
        let query = SideEffectQuery {
            function_name: "f".into(),
            source: "func f() {\n}".into(),
            flagged: vec![(1, "store a, b".into())],
        };
        let prompt = render_prompt(&query);
        let key = format!("{:x}", Sha256::digest(prompt.as_bytes()));
        let entries: BTreeMap<String, Vec<String>> = [(
            key,
            vec![
                "ANSWER: YES".to_string(),
                "ANSWER: NO".to_string(),
                "ANSWER: YES".to_string(),
            ],
        )]
        .into();
        std::fs::write(&path, serde_json::to_string(&entries).unwrap()).unwrap();

        let cfg = RemoteConfig {
            query_count: 3,
            cassette: Some(CassetteConfig { path, mode: CassetteMode::Replay }),
            ..Default::default()
        };
        let oracle = RemoteOracle::new(cfg).unwrap();
        let verdict = oracle.classify(&query).unwrap();
        assert_eq!(verdict.value, crate::oracle::VerdictValue::Ignorable);
        assert_eq!(verdict.votes, vec![Vote::Yes, Vote::No, Vote::Yes]);
        assert_eq!(verdict.counters.queries, 3);
        assert_eq!(verdict.counters.input_tokens, 0);

        let missing = SideEffectQuery { function_name: "g".into(), ..query };
        assert!(matches!(oracle.classify(&missing), Err(OracleError::Cassette(_))));
    }
}
