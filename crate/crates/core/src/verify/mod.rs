//! Claim verification: transcribe, summarize, retrieve, ask.
//!
//! The adjudicator must answer with one of `TRUE`, `FALSE` or `UNVERIFIABLE`
//! as its first word; the rest of the reply is kept as the rationale.

pub mod client;
pub mod http;

pub use client::{
    mock_key, ApiCalls, AudioInput, CallCounter, CallKind, ClientError, MockClient, MockRule, MockScript, Op,
    TextClient,
};
pub use http::{HttpClient, HttpConfig, API_KEY_VAR};

use crate::media::{hex, SfvBundle};
use crate::retrieval::{tokenize_text, Article, InvertedIndex};
use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::HashMap;
use std::time::Duration;

pub const NO_ARTICLES_MARKER: &str = "NO ARTICLES RETRIEVED";

#[derive(Debug, thiserror::Error)]
pub enum VerifyError {
    #[error("unparseable verdict: {raw:?}")]
    UnparseableVerdict { raw: String },
    #[error("{op} failed after {attempts} attempt(s): {source}")]
    Client {
        op: &'static str,
        attempts: u32,
        source: ClientError,
    },
    #[error("bad config: {0}")]
    Config(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcript {
    pub text: String,
    pub source_id: String,
    pub provider: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictDecision {
    TrueClaims,
    FalseClaims,
    Unverifiable,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub decision: VerdictDecision,
    pub rationale: String,
    pub cited_article_ids: Vec<String>,
    /// SHA-256 of the prompt; empty when no prompt was sent.
    pub prompt_hash: String,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RetrieveFrom {
    #[default]
    Summary,
    Transcript,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyConfig {
    pub top_k_articles: usize,
    pub excerpt_chars: usize,
    pub key_terms: usize,
    /// Transcripts shorter than this (in characters) are used as their own summary.
    pub min_summary_chars: usize,
    pub attempts: u32,
    pub backoff_ms: u64,
    pub retrieve_from: RetrieveFrom,
    /// Only articles published on or after this `YYYY-MM-DD` date.
    pub since: Option<String>,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            top_k_articles: 3,
            excerpt_chars: 1200,
            key_terms: 10,
            min_summary_chars: 200,
            attempts: 3,
            backoff_ms: 500,
            retrieve_from: RetrieveFrom::Summary,
            since: None,
        }
    }
}

impl VerifyConfig {
    pub fn validate(&self) -> Result<(), VerifyError> {
        if self.top_k_articles == 0 || self.key_terms == 0 || self.attempts == 0 {
            return Err(VerifyError::Config(
                "top_k_articles, key_terms and attempts must be at least 1".into(),
            ));
        }
        self.since_date()?;
        Ok(())
    }

    pub fn since_date(&self) -> Result<Option<NaiveDate>, VerifyError> {
        self.since
            .as_deref()
            .map(|d| {
                NaiveDate::parse_from_str(d, "%Y-%m-%d")
                    .map_err(|_| VerifyError::Config(format!("since {d:?} is not a YYYY-MM-DD date")))
            })
            .transpose()
    }
}

/// Distinct summary terms ranked by `tf * ln(N / (1 + df))`, ties by first
/// occurrence. Returns at most `k` terms; empty when the summary has none.
pub fn extract_key_terms(summary: &str, k: usize, index: &InvertedIndex) -> Vec<String> {
    let terms = tokenize_text(summary);
    let mut order: Vec<&str> = Vec::new();
    let mut tf: HashMap<&str, u32> = HashMap::new();
    for t in &terms {
        let n = tf.entry(t).or_insert(0);
        if *n == 0 {
            order.push(t);
        }
        *n += 1;
    }
    let n_docs = index.n_docs() as f64;
    let mut scored: Vec<(f64, &str)> = order
        .into_iter()
        .map(|t| {
            let df = index.posting(t).map_or(0, |p| p.doc_frequency) as f64;
            (tf[t] as f64 * (n_docs / (1.0 + df)).ln(), t)
        })
        .collect();
    // stable sort keeps first-occurrence order among equal scores
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));
    scored.into_iter().take(k).map(|(_, t)| t.to_string()).collect()
}

fn excerpt(text: &str, max_chars: usize) -> &str {
    match text.char_indices().nth(max_chars) {
        Some((i, _)) => &text[..i],
        None => text,
    }
}

pub fn prompt_hash(prompt: &str) -> String {
    hex(&Sha256::digest(prompt.as_bytes()))
}

/// The adjudication prompt with the default 1200-character excerpts.
pub fn assemble_prompt(summary: &str, articles: &[(&Article, f64)]) -> String {
    assemble_prompt_with(summary, articles, VerifyConfig::default().excerpt_chars)
}

pub fn assemble_prompt_with(summary: &str, articles: &[(&Article, f64)], excerpt_chars: usize) -> String {
    let mut p = String::new();
    p.push_str("You are a fact-checking assistant. Decide whether the claims made in a short-form video are accurate.\n");
    p.push_str("Judge only against the reference articles below. If they do not settle the claims, answer UNVERIFIABLE.\n");
    p.push_str("\n## Reference articles\n\n");
    if articles.is_empty() {
        p.push_str(NO_ARTICLES_MARKER);
        p.push_str("\n\n");
    }
    for (i, (a, _)) in articles.iter().enumerate() {
        p.push_str(&format!("[{}] {} (id: {})\n", i + 1, a.title.trim(), a.id));
        if let Some(d) = &a.published_at {
            p.push_str(&format!("Published: {d}\n"));
        }
        p.push_str(excerpt(a.body.trim(), excerpt_chars));
        p.push_str("\n\n");
    }
    p.push_str("## Video summary\n\n");
    p.push_str(summary.trim());
    p.push_str("\n\n## Answer\n\n");
    p.push_str(
        "Reply with exactly one token from {TRUE, FALSE, UNVERIFIABLE} as the first word, \
         then a short rationale citing articles by number, e.g. [1].\n",
    );
    p
}

/// Reads the decision from the first word of `raw`. Trailing `.`, `,`, `:`,
/// `;` or `!` on that word are ignored.
pub fn parse_verdict(raw: &str) -> Result<Verdict, VerifyError> {
    let trimmed = raw.trim_start();
    let (first, rest) = trimmed
        .split_once(char::is_whitespace)
        .unwrap_or((trimmed, ""));
    let word = first.trim_end_matches(['.', ',', ':', ';', '!']).to_ascii_uppercase();
    let decision = match word.as_str() {
        "TRUE" => VerdictDecision::TrueClaims,
        "FALSE" => VerdictDecision::FalseClaims,
        "UNVERIFIABLE" => VerdictDecision::Unverifiable,
        _ => return Err(VerifyError::UnparseableVerdict { raw: raw.to_string() }),
    };
    Ok(Verdict {
        decision,
        rationale: rest.trim().to_string(),
        cited_article_ids: Vec::new(),
        prompt_hash: String::new(),
    })
}

/// Article ids referenced as `[n]` in the rationale, in order of first
/// mention. All included articles when none is referenced.
pub fn cited_ids(rationale: &str, included: &[&str]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    let mut rest = rationale;
    while let Some(open) = rest.find('[') {
        rest = &rest[open + 1..];
        let Some(close) = rest.find(']') else { break };
        if let Ok(n) = rest[..close].trim().parse::<usize>() {
            if (1..=included.len()).contains(&n) && !out.iter().any(|c| c == included[n - 1]) {
                out.push(included[n - 1].to_string());
            }
        }
        rest = &rest[close..];
    }
    if out.is_empty() {
        out = included.iter().map(|s| s.to_string()).collect();
    }
    out
}

/// Everything a verification run produced, for audit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verification {
    pub verdict: Verdict,
    pub transcript: Transcript,
    pub summary: String,
    pub key_terms: Vec<String>,
    pub retrieved: Vec<(String, f64)>,
}

fn with_retries<T>(
    op: Op,
    cfg: &VerifyConfig,
    counter: &CallCounter,
    mut f: impl FnMut() -> Result<T, ClientError>,
) -> Result<T, VerifyError> {
    let mut attempt = 0;
    loop {
        attempt += 1;
        counter.record_op(op);
        match f() {
            Ok(v) => return Ok(v),
            Err(e) if e.is_retryable() && attempt < cfg.attempts => {
                let wait = cfg.backoff_ms.saturating_mul(1 << (attempt - 1).min(16));
                log::warn!("{} attempt {attempt} failed ({e}); retrying in {wait} ms", op.as_str());
                std::thread::sleep(Duration::from_millis(wait));
            }
            Err(source) => {
                return Err(VerifyError::Client {
                    op: op.as_str(),
                    attempts: attempt,
                    source,
                })
            }
        }
    }
}

fn unverifiable(reason: &str) -> Verdict {
    Verdict {
        decision: VerdictDecision::Unverifiable,
        rationale: reason.to_string(),
        cited_article_ids: Vec::new(),
        prompt_hash: String::new(),
    }
}

/// Runs the verification stage for one bundle. Client calls (every attempt)
/// and the retrieval are tallied on `counter`.
pub fn verify_claims(
    bundle: &SfvBundle,
    client: &dyn TextClient,
    index: &InvertedIndex,
    cfg: &VerifyConfig,
    counter: &CallCounter,
) -> Result<Verification, VerifyError> {
    let since = cfg.since_date()?;
    let audio = AudioInput {
        source_id: &bundle.id,
        sample_rate: bundle.sample_rate,
        samples: &bundle.audio,
    };
    let text = with_retries(Op::Transcribe, cfg, counter, || client.transcribe(&audio))?;
    let transcript = Transcript {
        text,
        source_id: bundle.id.clone(),
        provider: client.provider().to_string(),
    };
    let done = |verdict, summary: String, key_terms, retrieved| Verification {
        verdict,
        transcript: transcript.clone(),
        summary,
        key_terms,
        retrieved,
    };
    if transcript.text.trim().is_empty() {
        return Ok(done(unverifiable("empty transcript"), String::new(), vec![], vec![]));
    }
    let summary = if transcript.text.chars().count() < cfg.min_summary_chars {
        transcript.text.clone()
    } else {
        with_retries(Op::Summarize, cfg, counter, || client.summarize(&transcript.text))?
    };
    let query_text = match cfg.retrieve_from {
        RetrieveFrom::Summary => &summary,
        RetrieveFrom::Transcript => &transcript.text,
    };
    let key_terms = extract_key_terms(query_text, cfg.key_terms, index);
    if key_terms.is_empty() {
        return Ok(done(unverifiable("no key terms in summary"), summary, key_terms, vec![]));
    }
    counter.record(CallKind::Database);
    let hits = index.retrieve_since(&key_terms, cfg.top_k_articles, since);
    let retrieved: Vec<(String, f64)> = hits.iter().map(|(a, s)| (a.id.clone(), *s)).collect();
    let prompt = assemble_prompt_with(&summary, &hits, cfg.excerpt_chars);
    let hash = prompt_hash(&prompt);
    let raw = with_retries(Op::Adjudicate, cfg, counter, || client.adjudicate(&prompt))?;
    let included: Vec<&str> = hits.iter().map(|(a, _)| a.id.as_str()).collect();
    let verdict = match parse_verdict(&raw) {
        Ok(mut v) => {
            v.cited_article_ids = cited_ids(&v.rationale, &included);
            v.prompt_hash = hash;
            v
        }
        Err(_) => {
            log::warn!("{}: unparseable verdict {raw:?}", bundle.id);
            Verdict {
                prompt_hash: hash,
                ..unverifiable(&format!("unparseable verdict: {raw}"))
            }
        }
    };
    Ok(done(verdict, summary, key_terms, retrieved))
}
