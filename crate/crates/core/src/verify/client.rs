//! Text-model clients and the shared call counter.

use crate::media::hex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::HashMap;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Op {
    Transcribe,
    Summarize,
    Adjudicate,
}

impl Op {
    pub fn as_str(self) -> &'static str {
        match self {
            Op::Transcribe => "transcribe",
            Op::Summarize => "summarize",
            Op::Adjudicate => "adjudicate",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum ClientError {
    /// Worth retrying: network failure, timeout, 429 or 5xx.
    #[error("transport error: {0}")]
    Transport(String),
    /// Not worth retrying: bad request, auth failure, unscripted mock input.
    #[error("request rejected: {0}")]
    Rejected(String),
}

impl ClientError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, ClientError::Transport(_))
    }
}

/// Mono PCM handed to `transcribe`.
#[derive(Clone, Copy, Debug)]
pub struct AudioInput<'a> {
    pub source_id: &'a str,
    pub sample_rate: u32,
    pub samples: &'a [i16],
}

impl AudioInput<'_> {
    /// SHA-256 of the sample rate and samples (little-endian), hex encoded.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.sample_rate.to_le_bytes());
        for s in self.samples {
            h.update(s.to_le_bytes());
        }
        hex(&h.finalize())
    }

    /// The samples as a 16-bit PCM WAV file.
    pub fn to_wav(&self) -> Vec<u8> {
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: self.sample_rate,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut cur = std::io::Cursor::new(Vec::new());
        {
            let mut w = hound::WavWriter::new(&mut cur, spec).expect("wav header");
            for &s in self.samples {
                w.write_sample(s).expect("in-memory write");
            }
            w.finalize().expect("in-memory finalize");
        }
        cur.into_inner()
    }
}

/// A speech-to-text and language-model provider.
///
/// Implementations must be safe to call from several threads at once.
pub trait TextClient: Send + Sync {
    fn provider(&self) -> &str;

    /// Whether identical inputs always give identical outputs.
    fn deterministic(&self) -> bool {
        true
    }

    fn transcribe(&self, audio: &AudioInput<'_>) -> Result<String, ClientError>;
    fn summarize(&self, text: &str) -> Result<String, ClientError>;
    fn adjudicate(&self, prompt: &str) -> Result<String, ClientError>;
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiCalls {
    pub llm: u64,
    pub database: u64,
}

impl std::ops::AddAssign for ApiCalls {
    fn add_assign(&mut self, o: Self) {
        self.llm += o.llm;
        self.database += o.database;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CallKind {
    Llm,
    Database,
}

/// Atomic tallies of client calls (every attempt counts) and retrievals.
#[derive(Debug, Default)]
pub struct CallCounter {
    llm: AtomicU64,
    database: AtomicU64,
    per_op: [AtomicU64; 3],
}

impl CallCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&self, kind: CallKind) {
        match kind {
            CallKind::Llm => self.llm.fetch_add(1, Ordering::Relaxed),
            CallKind::Database => self.database.fetch_add(1, Ordering::Relaxed),
        };
    }

    pub fn record_op(&self, op: Op) {
        self.record(CallKind::Llm);
        self.per_op[op as usize].fetch_add(1, Ordering::Relaxed);
    }

    pub fn op_calls(&self, op: Op) -> u64 {
        self.per_op[op as usize].load(Ordering::Relaxed)
    }

    pub fn snapshot(&self) -> ApiCalls {
        ApiCalls {
            llm: self.llm.load(Ordering::Relaxed),
            database: self.database.load(Ordering::Relaxed),
        }
    }

    /// Adds another counter's totals into this one.
    pub fn absorb(&self, other: &CallCounter) {
        self.llm.fetch_add(other.llm.load(Ordering::Relaxed), Ordering::Relaxed);
        self.database.fetch_add(other.database.load(Ordering::Relaxed), Ordering::Relaxed);
        for (a, b) in self.per_op.iter().zip(&other.per_op) {
            a.fetch_add(b.load(Ordering::Relaxed), Ordering::Relaxed);
        }
    }
}

/// Lookup key of a mock response: SHA-256 of `"{op}\n{input}"`, where the
/// input is the audio digest for `transcribe` and the raw text otherwise.
pub fn mock_key(op: Op, input: &str) -> String {
    let mut h = Sha256::new();
    h.update(op.as_str().as_bytes());
    h.update(b"\n");
    h.update(input.as_bytes());
    hex(&h.finalize())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockRule {
    pub op: Op,
    /// Case-sensitive substring of the text input.
    pub contains: String,
    pub output: String,
}

/// Scripted responses, in lookup order: exact `responses` by [`mock_key`],
/// then the first matching `rules` entry, then the per-op `defaults`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MockScript {
    pub provider: Option<String>,
    pub responses: HashMap<String, String>,
    pub rules: Vec<MockRule>,
    pub defaults: HashMap<Op, String>,
    /// Fail this many calls per op with a transport error before answering.
    pub transient_failures: HashMap<Op, u32>,
}

pub struct MockClient {
    script: MockScript,
    failures_left: Mutex<HashMap<Op, u32>>,
}

impl MockClient {
    pub fn new(script: MockScript) -> Self {
        let failures_left = Mutex::new(script.transient_failures.clone());
        Self { script, failures_left }
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, ClientError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| ClientError::Rejected(format!("mock script {}: {e}", path.display())))?;
        let script = serde_json::from_str(&text)
            .map_err(|e| ClientError::Rejected(format!("mock script {}: {e}", path.display())))?;
        Ok(Self::new(script))
    }

    pub fn script(&self) -> &MockScript {
        &self.script
    }

    fn answer(&self, op: Op, input: &str) -> Result<String, ClientError> {
        {
            let mut left = self.failures_left.lock().expect("mock lock");
            if let Some(n) = left.get_mut(&op).filter(|n| **n > 0) {
                *n -= 1;
                return Err(ClientError::Transport(format!("scripted transient {} failure", op.as_str())));
            }
        }
        let key = mock_key(op, input);
        if let Some(r) = self.script.responses.get(&key) {
            return Ok(r.clone());
        }
        if op != Op::Transcribe {
            if let Some(rule) = self.script.rules.iter().find(|r| r.op == op && input.contains(&r.contains)) {
                return Ok(rule.output.clone());
            }
        }
        self.script
            .defaults
            .get(&op)
            .cloned()
            .ok_or_else(|| ClientError::Rejected(format!("no scripted {} response for key {key}", op.as_str())))
    }
}

impl TextClient for MockClient {
    fn provider(&self) -> &str {
        self.script.provider.as_deref().unwrap_or("mock")
    }

    fn transcribe(&self, audio: &AudioInput<'_>) -> Result<String, ClientError> {
        self.answer(Op::Transcribe, &audio.digest())
    }

    fn summarize(&self, text: &str) -> Result<String, ClientError> {
        self.answer(Op::Summarize, text)
    }

    fn adjudicate(&self, prompt: &str) -> Result<String, ClientError> {
        self.answer(Op::Adjudicate, prompt)
    }
}
