//! Run configuration: one TOML document, every key optional.
//!
//! Defaults are the desk-scale preset, small enough to pretrain on one CPU
//! core in seconds. Unknown keys are rejected.

use crate::claim_detect::FinetuneConfig;
use crate::mae::{AudioTokenConfig, FeatureConfig, MaeError, ModelDims, PretrainConfig, VideoTokenConfig};
use crate::retrieval::Bm25Params;
use crate::synth::SynthParams;
use crate::verify::{HttpConfig, VerifyConfig};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {msg}")]
    Parse { path: PathBuf, msg: String },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<MaeError> for ConfigError {
    fn from(e: MaeError) -> Self {
        ConfigError::Invalid(e.to_string())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClientKind {
    #[default]
    Mock,
    Http,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClientConfig {
    pub kind: ClientKind,
    /// Script file for the mock client.
    pub mock_script: Option<PathBuf>,
    pub http: HttpConfig,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IngestConfig {
    /// Shell command template with `{input}` and `{out}` placeholders.
    pub decoder_command: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub jobs: usize,
    pub cache: bool,
    pub cache_dir: PathBuf,
    pub timing: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            jobs: 1,
            cache: true,
            cache_dir: PathBuf::from(".vimguard-cache"),
            timing: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub seed: u64,
    pub synth: SynthParams,
    pub features: FeatureConfig,
    pub model: ModelDims,
    pub pretrain: PretrainConfig,
    pub finetune: FinetuneConfig,
    pub retrieval: Bm25Params,
    pub verify: VerifyConfig,
    pub client: ClientConfig,
    pub ingest: IngestConfig,
    pub pipeline: PipelineConfig,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 0,
            synth: SynthParams {
                width: 32,
                height: 32,
                n_frames: 8,
                fps: 4,
                sample_rate: 16_000,
            },
            features: FeatureConfig {
                video: VideoTokenConfig {
                    frames: 8,
                    size: 32,
                    tube: [2, 8, 8],
                    mask_ratio: 0.75,
                },
                audio: AudioTokenConfig {
                    n_mels: 64,
                    frames: 64,
                    patch: [16, 16],
                    ..AudioTokenConfig::default()
                },
            },
            model: ModelDims {
                d_model: 64,
                heads: 4,
                encoder_depth: 2,
                decoder_depth: 1,
                decoder_width: 32,
                decoder_heads: 2,
                mlp_ratio: 2,
                init_std: 0.02,
            },
            pretrain: PretrainConfig {
                steps: 50,
                batch_size: 50,
                ..PretrainConfig::default()
            },
            finetune: FinetuneConfig::default(),
            retrieval: Bm25Params::default(),
            verify: VerifyConfig::default(),
            client: ClientConfig::default(),
            ingest: IngestConfig::default(),
            pipeline: PipelineConfig::default(),
        }
    }
}

/// `(key, description)` for every configuration key.
pub const KEY_DOCS: &[(&str, &str)] = &[
    ("seed", "seed for every stochastic stage"),
    ("synth.width", "synthetic frame width (px)"),
    ("synth.height", "synthetic frame height (px)"),
    ("synth.n_frames", "synthetic frames per bundle"),
    ("synth.fps", "synthetic frame rate"),
    ("synth.sample_rate", "synthetic audio rate (Hz)"),
    ("features.video.frames", "frames sampled per bundle"),
    ("features.video.size", "side of the resized square frame (px)"),
    ("features.video.tube", "tubelet [time, height, width]"),
    ("features.video.mask_ratio", "fraction of video tokens masked in pretraining"),
    ("features.audio.n_mels", "mel bands"),
    ("features.audio.window_len", "STFT window (samples at 16 kHz)"),
    ("features.audio.hop_len", "STFT hop (samples)"),
    ("features.audio.log_offset", "offset inside the log of mel energies"),
    ("features.audio.frames", "spectrogram columns kept (crop or edge-pad)"),
    ("features.audio.patch", "spectrogram patch [mels, frames]"),
    ("features.audio.mask_ratio", "fraction of audio tokens masked in pretraining"),
    ("model.d_model", "encoder width"),
    ("model.heads", "encoder attention heads"),
    ("model.encoder_depth", "encoder blocks"),
    ("model.decoder_depth", "decoder blocks"),
    ("model.decoder_width", "decoder width"),
    ("model.decoder_heads", "decoder attention heads"),
    ("model.mlp_ratio", "MLP hidden width / block width"),
    ("model.init_std", "std of truncated-normal weight init"),
    ("pretrain.steps", "Adam steps per run"),
    ("pretrain.batch_size", "bundles per step"),
    ("pretrain.lr", "Adam learning rate"),
    ("pretrain.beta1", "Adam beta1"),
    ("pretrain.beta2", "Adam beta2"),
    ("finetune.epochs", "passes over the labeled set"),
    ("finetune.lr", "Adam learning rate"),
    ("finetune.batch_size", "examples per step"),
    ("finetune.hidden", "claim head hidden width"),
    ("finetune.threshold", "claim probability at or above which a bundle is verified"),
    ("finetune.init_std", "std of head weight init"),
    ("finetune.unfreeze", "also train the encoders"),
    ("retrieval.k1", "BM25 term-frequency saturation"),
    ("retrieval.b", "BM25 length normalization"),
    ("verify.top_k_articles", "articles placed in the prompt"),
    ("verify.excerpt_chars", "characters of each article body in the prompt"),
    ("verify.key_terms", "key terms used as the retrieval query"),
    ("verify.min_summary_chars", "shorter transcripts skip summarization"),
    ("verify.attempts", "tries per client call on transport errors"),
    ("verify.backoff_ms", "first retry delay, doubled per retry"),
    ("verify.retrieve_from", "query source: summary | transcript"),
    ("verify.since", "only articles published on/after YYYY-MM-DD"),
    ("client.kind", "text client: mock | http"),
    ("client.mock_script", "mock client script (JSON)"),
    ("client.http.base_url", "HTTP service root; ops are POSTed to {base_url}/{op}"),
    ("client.http.timeout_s", "per-request timeout (s)"),
    ("client.http.max_inflight", "concurrent HTTP requests"),
    ("client.http.provider", "provider name recorded in transcripts"),
    ("ingest.decoder_command", "decoder command template with {input} and {out}"),
    ("pipeline.jobs", "worker threads for check"),
    ("pipeline.cache", "reuse cached outcomes"),
    ("pipeline.cache_dir", "outcome cache directory"),
    ("pipeline.timing", "record wall_time_ms in outcomes"),
];

fn flatten(prefix: &str, v: &toml::Value, out: &mut Vec<(String, String)>) {
    match v {
        toml::Value::Table(t) => {
            for (k, v) in t {
                let key = if prefix.is_empty() {
                    k.clone()
                } else {
                    format!("{prefix}.{k}")
                };
                flatten(&key, v, out);
            }
        }
        other => out.push((prefix.to_string(), other.to_string())),
    }
}

impl Config {
    pub fn from_toml(text: &str, path: &Path) -> Result<Self, ConfigError> {
        let c: Config = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        Self::from_toml(&std::fs::read_to_string(path)?, path)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialize")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.features.validate()?;
        crate::mae::MaeConfig::video(&self.features.video, &self.model).validate()?;
        crate::mae::MaeConfig::audio(&self.features.audio, &self.model).validate()?;
        self.retrieval
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.verify.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let s = &self.synth;
        if s.width == 0 || s.height == 0 || s.n_frames == 0 || s.fps == 0 || s.sample_rate == 0 {
            return Err(ConfigError::Invalid("synth sizes and rates must be positive".into()));
        }
        if self.pretrain.steps == 0 || self.pretrain.batch_size == 0 || self.finetune.batch_size == 0 {
            return Err(ConfigError::Invalid("step and batch counts must be positive".into()));
        }
        if !(self.finetune.threshold > 0.0 && self.finetune.threshold < 1.0) {
            return Err(ConfigError::Invalid("finetune.threshold must lie in (0, 1)".into()));
        }
        Ok(())
    }

    /// `(key, default)` for every key set in `self`, sorted by key. Unset
    /// optional keys are absent.
    pub fn entries(&self) -> Vec<(String, String)> {
        let v = toml::Value::try_from(self).expect("config to toml value");
        let mut out = Vec::new();
        flatten("", &v, &mut out);
        out.sort();
        out
    }

    /// One line per key: `key = default  # description`.
    pub fn key_reference() -> String {
        let defaults: std::collections::HashMap<String, String> = Config::default().entries().into_iter().collect();
        let width = KEY_DOCS.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        let mut out = String::new();
        for (k, doc) in KEY_DOCS {
            let d = defaults.get(*k).map_or("(unset)", String::as_str);
            let lhs = format!("{k} = {d}");
            out.push_str(&format!("  {lhs:<w$}  # {doc}\n", w = width + 24));
        }
        out
    }
}
