//! JSON-over-HTTP client.
//!
//! Each operation is a `POST {base_url}/{op}` with body
//! `{"op": "...", "payload": {...}}` and an `Authorization: Bearer` header
//! taken from `VIMGUARD_API_KEY`. The response body is `{"output": "..."}`.
//!
//! Payloads:
//!
//! ```text
//! transcribe   {"source_id": str, "sample_rate": int, "audio_wav_base64": str}
//! summarize    {"text": str}
//! adjudicate   {"prompt": str}
//! ```

use super::client::{AudioInput, ClientError, Op, TextClient};
use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::sync::{Condvar, Mutex};
use std::time::Duration;

pub const API_KEY_VAR: &str = "VIMGUARD_API_KEY";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HttpConfig {
    pub base_url: String,
    pub timeout_s: u64,
    pub max_inflight: usize,
    /// Reported in transcripts; the service is assumed nondeterministic.
    pub provider: String,
}

impl Default for HttpConfig {
    fn default() -> Self {
        Self {
            base_url: "http://127.0.0.1:8080".into(),
            timeout_s: 60,
            max_inflight: 4,
            provider: "http".into(),
        }
    }
}

/// Counting semaphore bounding concurrent requests.
struct Slots {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Slots {
    fn acquire(&self) -> SlotGuard<'_> {
        let mut free = self.free.lock().expect("slot lock");
        while *free == 0 {
            free = self.cv.wait(free).expect("slot lock");
        }
        *free -= 1;
        SlotGuard(self)
    }
}

struct SlotGuard<'a>(&'a Slots);

impl Drop for SlotGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().expect("slot lock") += 1;
        self.0.cv.notify_one();
    }
}

pub struct HttpClient {
    cfg: HttpConfig,
    api_key: Option<String>,
    agent: ureq::Agent,
    slots: Slots,
}

impl HttpClient {
    /// Reads the bearer token from `VIMGUARD_API_KEY` if set.
    pub fn new(cfg: HttpConfig) -> Self {
        let key = std::env::var(API_KEY_VAR).ok().filter(|k| !k.is_empty());
        Self::with_key(cfg, key)
    }

    pub fn with_key(cfg: HttpConfig, api_key: Option<String>) -> Self {
        let agent = ureq::AgentBuilder::new()
            .timeout(Duration::from_secs(cfg.timeout_s.max(1)))
            .build();
        let slots = Slots {
            free: Mutex::new(cfg.max_inflight.max(1)),
            cv: Condvar::new(),
        };
        Self {
            cfg,
            api_key,
            agent,
            slots,
        }
    }

    fn call(&self, op: Op, payload: Value) -> Result<String, ClientError> {
        let _slot = self.slots.acquire();
        let url = format!("{}/{}", self.cfg.base_url.trim_end_matches('/'), op.as_str());
        let mut req = self.agent.post(&url).set("Content-Type", "application/json");
        if let Some(k) = &self.api_key {
            req = req.set("Authorization", &format!("Bearer {k}"));
        }
        let body = json!({"op": op.as_str(), "payload": payload});
        let resp = match req.send_json(body) {
            Ok(r) => r,
            Err(ureq::Error::Status(code, r)) => {
                let text = r.into_string().unwrap_or_default();
                let msg = format!("{url}: HTTP {code}: {}", text.chars().take(200).collect::<String>());
                return Err(if code == 429 || code >= 500 {
                    ClientError::Transport(msg)
                } else {
                    ClientError::Rejected(msg)
                });
            }
            Err(e) => return Err(ClientError::Transport(format!("{url}: {e}"))),
        };
        let v: Value = resp
            .into_json()
            .map_err(|e| ClientError::Transport(format!("{url}: unreadable body: {e}")))?;
        v.get("output")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| ClientError::Rejected(format!("{url}: response lacks string field \"output\"")))
    }
}

impl TextClient for HttpClient {
    fn provider(&self) -> &str {
        &self.cfg.provider
    }

    fn deterministic(&self) -> bool {
        false
    }

    fn transcribe(&self, audio: &AudioInput<'_>) -> Result<String, ClientError> {
        let wav = base64::engine::general_purpose::STANDARD.encode(audio.to_wav());
        self.call(
            Op::Transcribe,
            json!({"source_id": audio.source_id, "sample_rate": audio.sample_rate, "audio_wav_base64": wav}),
        )
    }

    fn summarize(&self, text: &str) -> Result<String, ClientError> {
        self.call(Op::Summarize, json!({ "text": text }))
    }

    fn adjudicate(&self, prompt: &str) -> Result<String, ClientError> {
        self.call(Op::Adjudicate, json!({ "prompt": prompt }))
    }
}
