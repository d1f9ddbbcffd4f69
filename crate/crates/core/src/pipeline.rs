//! Gated two-stage checking of bundles.
//!
//! A bundle is embedded and scored by the claim head first. Only bundles the
//! head flags as making a claim go on to verification, so claim-free bundles
//! cost no client calls.

use crate::claim_detect::{ClaimDecision, ClaimError, ClaimHead, LabeledExample};
use crate::mae::{fuse, Embedding, FeatureConfig, MaeEncoder, MaeError};
use crate::media::{hex, load_bundle, MediaError, SfvBundle};
use crate::nnet::checkpoint::Checkpoint;
use crate::nnet::NnetError;
use crate::retrieval::InvertedIndex;
use crate::verify::{verify_claims, ApiCalls, CallCounter, TextClient, Verdict, VerdictDecision, VerifyConfig, VerifyError};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

pub const VIDEO_ENCODER_FILE: &str = "video_encoder.vgck";
pub const AUDIO_ENCODER_FILE: &str = "audio_encoder.vgck";
pub const CLAIM_HEAD_FILE: &str = "claim_head.vgck";
pub const FEATURES_FILE: &str = "features.json";

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("models: {0}")]
    Models(String),
    #[error(transparent)]
    Media(#[from] MediaError),
    #[error(transparent)]
    Mae(#[from] MaeError),
    #[error(transparent)]
    Claim(#[from] ClaimError),
    #[error(transparent)]
    Verify(#[from] VerifyError),
    #[error(transparent)]
    Nnet(#[from] NnetError),
    #[error("outcome stream line {line}: {msg}")]
    Stream { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl PipelineError {
    /// Whether the failure came from a text client rather than local data.
    pub fn is_client(&self) -> bool {
        matches!(self, PipelineError::Verify(VerifyError::Client { .. }))
    }
}

/// Trained encoders, claim head and the token layouts they expect.
#[derive(Clone, Debug)]
pub struct Models {
    pub features: FeatureConfig,
    pub video: MaeEncoder,
    pub audio: MaeEncoder,
    pub head: ClaimHead,
}

impl Models {
    pub fn new(features: FeatureConfig, video: MaeEncoder, audio: MaeEncoder, head: ClaimHead) -> Result<Self, PipelineError> {
        let m = Self {
            features,
            video,
            audio,
            head,
        };
        m.validate()?;
        Ok(m)
    }

    fn validate(&self) -> Result<(), PipelineError> {
        self.features.validate()?;
        let (fv, fa) = (&self.features.video, &self.features.audio);
        let (cv, ca) = (&self.video.config, &self.audio.config);
        if (fv.n_tokens(), fv.token_dim()) != (cv.n_tokens, cv.token_dim)
            || (fa.n_tokens(), fa.token_dim()) != (ca.n_tokens, ca.token_dim)
        {
            return Err(PipelineError::Models(format!(
                "token layout mismatch: features give video {}x{}, audio {}x{}; encoders expect {}x{}, {}x{}",
                fv.n_tokens(),
                fv.token_dim(),
                fa.n_tokens(),
                fa.token_dim(),
                cv.n_tokens,
                cv.token_dim,
                ca.n_tokens,
                ca.token_dim
            )));
        }
        let fused = self.video.dim() + self.audio.dim();
        if self.head.input_dim != fused {
            return Err(PipelineError::Models(format!(
                "claim head expects {}-dim input, encoders give {fused}",
                self.head.input_dim
            )));
        }
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self, PipelineError> {
        let dir = dir.as_ref();
        let features: FeatureConfig = serde_json::from_slice(&std::fs::read(dir.join(FEATURES_FILE))?)
            .map_err(|e| PipelineError::Models(format!("{}: {e}", FEATURES_FILE)))?;
        let video = MaeEncoder::from_checkpoint(&Checkpoint::load(dir.join(VIDEO_ENCODER_FILE))?)?;
        let audio = MaeEncoder::from_checkpoint(&Checkpoint::load(dir.join(AUDIO_ENCODER_FILE))?)?;
        let head = ClaimHead::from_checkpoint(&Checkpoint::load(dir.join(CLAIM_HEAD_FILE))?)?;
        Self::new(features, video, audio, head)
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<(), PipelineError> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        save_features(dir, &self.features)?;
        self.video.to_checkpoint().save(dir.join(VIDEO_ENCODER_FILE))?;
        self.audio.to_checkpoint().save(dir.join(AUDIO_ENCODER_FILE))?;
        self.head.to_checkpoint().save(dir.join(CLAIM_HEAD_FILE))?;
        Ok(())
    }

    /// SHA-256 over the serialized encoders, head and token layouts.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(&self.features).expect("features serialize"));
        for c in [self.video.to_checkpoint(), self.audio.to_checkpoint(), self.head.to_checkpoint()] {
            let bytes = c.to_bytes();
            h.update((bytes.len() as u64).to_le_bytes());
            h.update(bytes);
        }
        hex(&h.finalize())
    }

    /// Fused video+audio embedding of a bundle.
    pub fn embed(&self, bundle: &SfvBundle) -> Result<Embedding, PipelineError> {
        let v = self.video.embed(&self.features.video.tokens(bundle)?, &bundle.id)?;
        let a = self.audio.embed(&self.features.audio.tokens(bundle)?, &bundle.id)?;
        Ok(fuse(&v, &a)?)
    }

    pub fn decide(&self, bundle: &SfvBundle) -> Result<ClaimDecision, PipelineError> {
        Ok(self.head.decide(&self.embed(bundle)?)?)
    }
}

pub fn save_features(dir: &Path, features: &FeatureConfig) -> Result<(), PipelineError> {
    let mut json = serde_json::to_vec_pretty(features).expect("features serialize");
    json.push(b'\n');
    std::fs::write(dir.join(FEATURES_FILE), json)?;
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeDecision {
    HarmlessNoClaim,
    HarmlessVerified,
    Misinformative,
    UnverifiableHarmless,
}

impl OutcomeDecision {
    pub fn from_verdict(v: VerdictDecision) -> Self {
        match v {
            VerdictDecision::TrueClaims => OutcomeDecision::HarmlessVerified,
            VerdictDecision::FalseClaims => OutcomeDecision::Misinformative,
            VerdictDecision::Unverifiable => OutcomeDecision::UnverifiableHarmless,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            OutcomeDecision::HarmlessNoClaim => "harmless_no_claim",
            OutcomeDecision::HarmlessVerified => "harmless_verified",
            OutcomeDecision::Misinformative => "misinformative",
            OutcomeDecision::UnverifiableHarmless => "unverifiable_harmless",
        }
    }
}

/// Result for one bundle. `decision` is absent exactly when `error` is set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Outcome {
    pub bundle_id: String,
    pub decision: Option<OutcomeDecision>,
    pub claim_probability: Option<f64>,
    pub verdict: Option<Verdict>,
    pub api_calls: ApiCalls,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time_ms: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl Outcome {
    fn failed(bundle_id: &str, err: &PipelineError, calls: ApiCalls) -> Self {
        Self {
            bundle_id: bundle_id.to_string(),
            decision: None,
            claim_probability: None,
            verdict: None,
            api_calls: calls,
            wall_time_ms: None,
            error: Some(err.to_string()),
        }
    }
}

/// Shared, read-only state for checking bundles.
pub struct CheckContext<'a> {
    pub models: &'a Models,
    pub index: &'a InvertedIndex,
    pub client: &'a dyn TextClient,
    pub verify: VerifyConfig,
    pub cache: Option<OutcomeCache>,
    /// Record `wall_time_ms` in outcomes. Off by default so outcome streams
    /// are reproducible.
    pub timing: bool,
    models_checksum: String,
    corpus_checksum: String,
    /// Tallies every call made through this context.
    pub counter: CallCounter,
}

impl<'a> CheckContext<'a> {
    pub fn new(models: &'a Models, index: &'a InvertedIndex, client: &'a dyn TextClient, verify: VerifyConfig) -> Self {
        Self {
            models,
            index,
            client,
            verify,
            cache: None,
            timing: false,
            models_checksum: models.checksum(),
            corpus_checksum: index.checksum(),
            counter: CallCounter::new(),
        }
    }

    pub fn with_cache(mut self, cache: OutcomeCache) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn with_timing(mut self, timing: bool) -> Self {
        self.timing = timing;
        self
    }

    /// Cache key of a bundle under this context.
    pub fn cache_key(&self, bundle: &SfvBundle) -> String {
        let mut h = Sha256::new();
        for part in [
            bundle.content_hash().as_str(),
            &self.models_checksum,
            &self.corpus_checksum,
            &serde_json::to_string(&self.verify).expect("verify config serialize"),
            self.client.provider(),
        ] {
            h.update((part.len() as u64).to_le_bytes());
            h.update(part.as_bytes());
        }
        hex(&h.finalize())
    }
}

/// Checks one bundle: gate on the claim head, then verify if needed.
pub fn check_bundle(bundle: &SfvBundle, ctx: &CheckContext<'_>) -> Outcome {
    check_bundle_as(&bundle.id, bundle, ctx)
}

fn check_bundle_as(bundle_id: &str, bundle: &SfvBundle, ctx: &CheckContext<'_>) -> Outcome {
    let start = Instant::now();
    let key = ctx.cache.as_ref().map(|_| ctx.cache_key(bundle));
    let cached = match (&ctx.cache, &key) {
        (Some(c), Some(k)) => c.get(k),
        _ => None,
    };
    let mut out = match cached {
        Some(mut o) => {
            log::debug!("{bundle_id}: cache hit");
            o.bundle_id = bundle_id.to_string();
            o
        }
        None => {
            let local = CallCounter::new();
            let o = match gate_and_verify(bundle_id, bundle, ctx, &local) {
                Ok(o) => o,
                Err(e) => {
                    log::warn!("{bundle_id}: {e}");
                    Outcome::failed(bundle_id, &e, local.snapshot())
                }
            };
            ctx.counter.absorb(&local);
            if let (Some(c), Some(k), None) = (&ctx.cache, &key, &o.error) {
                if let Err(e) = c.put(k, &o) {
                    log::warn!("{bundle_id}: cache write failed: {e}");
                }
            }
            o
        }
    };
    out.wall_time_ms = ctx.timing.then(|| start.elapsed().as_millis() as u64);
    out
}

fn gate_and_verify(
    bundle_id: &str,
    bundle: &SfvBundle,
    ctx: &CheckContext<'_>,
    counter: &CallCounter,
) -> Result<Outcome, PipelineError> {
    let decision = ctx.models.decide(bundle)?;
    let mut out = Outcome {
        bundle_id: bundle_id.to_string(),
        decision: Some(OutcomeDecision::HarmlessNoClaim),
        claim_probability: Some(decision.probability),
        verdict: None,
        api_calls: ApiCalls::default(),
        wall_time_ms: None,
        error: None,
    };
    if !decision.has_claim {
        return Ok(out);
    }
    let result = verify_claims(bundle, ctx.client, ctx.index, &ctx.verify, counter);
    out.api_calls = counter.snapshot();
    let v = result?;
    out.decision = Some(OutcomeDecision::from_verdict(v.verdict.decision));
    out.verdict = Some(v.verdict);
    Ok(out)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatchSummary {
    pub n_bundles: usize,
    pub n_errors: usize,
    pub decisions: BTreeMap<OutcomeDecision, usize>,
    pub api_calls: ApiCalls,
}

impl BatchSummary {
    pub fn from_outcomes(outcomes: &[Outcome]) -> Self {
        let mut s = BatchSummary {
            n_bundles: outcomes.len(),
            ..Default::default()
        };
        for o in outcomes {
            match o.decision {
                Some(d) => *s.decisions.entry(d).or_default() += 1,
                None => s.n_errors += 1,
            }
            s.api_calls += o.api_calls;
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BatchResult {
    pub outcomes: Vec<Outcome>,
    pub summary: BatchSummary,
}

/// Checks every manifest entry with up to `jobs` worker threads. Outcomes
/// come back in manifest order; a failing bundle yields an error outcome.
pub fn check_batch(entries: &[LabeledExample], ctx: &CheckContext<'_>, jobs: usize) -> Result<BatchResult, PipelineError> {
    let run = || -> Vec<Outcome> {
        entries
            .par_iter()
            .map(|e| match load_bundle(&e.path) {
                Ok(b) => check_bundle_as(&e.bundle_id, &b, ctx),
                Err(err) => {
                    log::warn!("{}: {err}", e.bundle_id);
                    Outcome::failed(&e.bundle_id, &err.into(), ApiCalls::default())
                }
            })
            .collect()
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| PipelineError::Models(format!("worker pool: {e}")))?;
    let outcomes = pool.install(run);
    let summary = BatchSummary::from_outcomes(&outcomes);
    Ok(BatchResult { outcomes, summary })
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SummaryLine {
    summary: BatchSummary,
}

/// Writes one outcome per line followed by a `{"summary": ...}` line.
pub fn write_outcomes(mut w: impl Write, result: &BatchResult) -> std::io::Result<()> {
    for o in &result.outcomes {
        serde_json::to_writer(&mut w, o)?;
        w.write_all(b"\n")?;
    }
    serde_json::to_writer(
        &mut w,
        &SummaryLine {
            summary: result.summary.clone(),
        },
    )?;
    w.write_all(b"\n")?;
    w.flush()
}

/// Reads a stream written by [`write_outcomes`]. The summary line is
/// optional; when present it must agree with the outcomes.
pub fn read_outcomes(path: impl AsRef<Path>) -> Result<BatchResult, PipelineError> {
    let file = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut outcomes = Vec::new();
    let mut summary = None;
    for (i, line) in file.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let err = |msg: String| PipelineError::Stream { line: i + 1, msg };
        if summary.is_some() {
            return Err(err("content after the summary line".into()));
        }
        if line.trim_start().starts_with("{\"summary\"") {
            let s: SummaryLine = serde_json::from_str(&line).map_err(|e| err(e.to_string()))?;
            summary = Some(s.summary);
        } else {
            outcomes.push(serde_json::from_str::<Outcome>(&line).map_err(|e| err(e.to_string()))?);
        }
    }
    let computed = BatchSummary::from_outcomes(&outcomes);
    if summary.is_some_and(|s| s != computed) {
        return Err(PipelineError::Stream {
            line: outcomes.len() + 1,
            msg: "summary disagrees with the outcomes".into(),
        });
    }
    Ok(BatchResult {
        outcomes,
        summary: computed,
    })
}

/// One JSON file per cache key. Writes go through a temporary file and a
/// rename, so concurrent writers of the same key never expose partial files.
#[derive(Clone, Debug)]
pub struct OutcomeCache {
    dir: PathBuf,
}

impl OutcomeCache {
    pub fn new(dir: impl Into<PathBuf>) -> std::io::Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        Ok(Self { dir })
    }

    fn path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }

    pub fn get(&self, key: &str) -> Option<Outcome> {
        let bytes = std::fs::read(self.path(key)).ok()?;
        serde_json::from_slice(&bytes).ok()
    }

    pub fn put(&self, key: &str, o: &Outcome) -> std::io::Result<()> {
        let mut stored = o.clone();
        stored.wall_time_ms = None;
        let tmp = self.dir.join(format!(".{key}.{:?}.tmp", std::thread::current().id()));
        std::fs::write(&tmp, serde_json::to_vec(&stored).map_err(std::io::Error::other)?)?;
        std::fs::rename(tmp, self.path(key))
    }
}
