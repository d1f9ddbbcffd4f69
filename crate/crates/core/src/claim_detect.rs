//! Claim detection: a small MLP over fused embeddings.

use crate::mae::{Embedding, MaeEncoder, Modality};
use crate::media::ClaimLabel;
use crate::nnet::checkpoint::Checkpoint;
use crate::nnet::layers::Linear;
use crate::nnet::{adam_step, AdamConfig, AdamState, ModuleGraph, NnetError, ParamStore, Tape, Var};
use crate::rng::SeededRng;
use crate::tokenizer::TokenSet;
use serde::{Deserialize, Serialize};
use std::io::BufRead;
use std::path::{Path, PathBuf};

pub const CLAIM_HASHTAGS: [&str; 12] = [
    "#podcast",
    "#news",
    "#politics",
    "#election",
    "#health",
    "#fitness",
    "#nutrition",
    "#science",
    "#history",
    "#technology",
    "#investing",
    "#finance",
];

pub const NO_CLAIM_HASHTAGS: [&str; 17] = [
    "#dance",
    "#music",
    "#challenge",
    "#memes",
    "#prank",
    "#skit",
    "#standup",
    "#gaming",
    "#movies",
    "#art",
    "#fashion",
    "#beauty",
    "#diy",
    "#cooking",
    "#travel",
    "#adventure",
    "#pets",
];

#[derive(Debug, thiserror::Error)]
pub enum ClaimError {
    #[error("embedding has dim {got}, head expects {expected}")]
    DimMismatch { expected: usize, got: usize },
    #[error("training data needs at least 2 examples of each class (claim {claim}, no_claim {no_claim})")]
    SingleClassDataset { claim: usize, no_claim: usize },
    #[error("threshold {0} must lie strictly between 0 and 1")]
    BadThreshold(f64),
    #[error("manifest line {line}: {msg}")]
    Manifest { line: usize, msg: String },
    #[error(transparent)]
    Nnet(#[from] NnetError),
    #[error(transparent)]
    Mae(#[from] crate::mae::MaeError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HashtagLabel {
    Claim,
    NoClaim,
    Ambiguous,
}

fn normalize_tag(t: &str) -> String {
    let t = t.trim().to_lowercase();
    if t.starts_with('#') {
        t
    } else {
        format!("#{t}")
    }
}

/// Claim if some tag is on the claim list and none on the no-claim list, and
/// symmetrically; ambiguous when both or neither match. Case-insensitive, the
/// leading `#` is optional.
pub fn label_from_hashtags<S: AsRef<str>>(tags: &[S]) -> HashtagLabel {
    let tags: Vec<String> = tags.iter().map(|t| normalize_tag(t.as_ref())).collect();
    let claim = tags.iter().any(|t| CLAIM_HASHTAGS.contains(&t.as_str()));
    let no_claim = tags.iter().any(|t| NO_CLAIM_HASHTAGS.contains(&t.as_str()));
    match (claim, no_claim) {
        (true, false) => HashtagLabel::Claim,
        (false, true) => HashtagLabel::NoClaim,
        _ => HashtagLabel::Ambiguous,
    }
}

/// One line of a training manifest.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabeledExample {
    pub bundle_id: String,
    /// Falls back to [`label_from_hashtags`] when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<ClaimLabel>,
    #[serde(default)]
    pub hashtags: Vec<String>,
    /// Bundle directory, relative to the manifest file.
    pub path: PathBuf,
}

impl LabeledExample {
    pub fn resolved_label(&self) -> Option<ClaimLabel> {
        self.label.or(match label_from_hashtags(&self.hashtags) {
            HashtagLabel::Claim => Some(ClaimLabel::Claim),
            HashtagLabel::NoClaim => Some(ClaimLabel::NoClaim),
            HashtagLabel::Ambiguous => None,
        })
    }
}

/// Reads a JSON-lines manifest. Relative bundle paths are resolved against
/// the manifest's directory. Blank lines are skipped.
pub fn read_manifest(path: &Path) -> Result<Vec<LabeledExample>, ClaimError> {
    let base = path.parent().unwrap_or(Path::new(""));
    let file = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in file.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut ex: LabeledExample = serde_json::from_str(&line).map_err(|e| ClaimError::Manifest {
            line: i + 1,
            msg: e.to_string(),
        })?;
        if ex.path.is_relative() {
            ex.path = base.join(&ex.path);
        }
        out.push(ex);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClaimDecision {
    pub probability: f64,
    pub has_claim: bool,
    pub embedding_ref: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FinetuneConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub hidden: usize,
    pub threshold: f64,
    pub init_std: f64,
    /// Train the MAE encoders together with the head.
    pub unfreeze: bool,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            lr: 1e-3,
            batch_size: 32,
            hidden: 128,
            threshold: 0.5,
            init_std: 0.02,
            unfreeze: false,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FinetuneReport {
    /// Training accuracy after each epoch.
    pub epoch_accuracy: Vec<f64>,
    /// Mean weighted BCE over each epoch.
    pub epoch_loss: Vec<f64>,
    pub class_weights: [f64; 2],
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn target(l: ClaimLabel) -> f32 {
    match l {
        ClaimLabel::Claim => 1.0,
        ClaimLabel::NoClaim => 0.0,
    }
}

/// `N / (2 · N_class)` for (claim, no_claim).
pub fn inverse_frequency_weights(labels: &[ClaimLabel]) -> Result<[f64; 2], ClaimError> {
    let claim = labels.iter().filter(|&&l| l == ClaimLabel::Claim).count();
    let no_claim = labels.len() - claim;
    if claim < 2 || no_claim < 2 {
        return Err(ClaimError::SingleClassDataset { claim, no_claim });
    }
    let n = labels.len() as f64;
    Ok([n / (2.0 * claim as f64), n / (2.0 * no_claim as f64)])
}

/// `input → hidden (GELU) → 1` logit.
#[derive(Clone, Debug)]
pub struct ClaimHead {
    pub params: ParamStore<f32>,
    pub input_dim: usize,
    pub hidden: usize,
    pub threshold: f64,
    fc1: Linear,
    fc2: Linear,
}

const HEAD_TAG: usize = 3;

impl ClaimHead {
    pub fn new(input_dim: usize, hidden: usize, threshold: f64, init_std: f64, seed: u64) -> Result<Self, ClaimError> {
        if !(threshold > 0.0 && threshold < 1.0) {
            return Err(ClaimError::BadThreshold(threshold));
        }
        let mut rng = SeededRng::derive(seed, 3);
        let mut params = ParamStore::new(HEAD_TAG);
        let fc1 = Linear::register(&mut params, "fc1", input_dim, hidden, init_std, &mut rng);
        let fc2 = Linear::register(&mut params, "fc2", hidden, 1, init_std, &mut rng);
        Ok(Self {
            params,
            input_dim,
            hidden,
            threshold,
            fc1,
            fc2,
        })
    }

    fn bind(params: ParamStore<f32>, threshold: f64) -> Result<Self, ClaimError> {
        let shape = |n: &str| {
            params
                .by_name(n)
                .map(|t| t.shape.clone())
                .ok_or_else(|| NnetError::Checkpoint(format!("missing head parameter {n}")))
        };
        let w1 = shape("fc1.weight")?;
        let w2 = shape("fc2.weight")?;
        if w1.len() != 2 || w2 != vec![w1[1], 1] {
            return Err(NnetError::Checkpoint(format!("bad head shapes {w1:?} {w2:?}")).into());
        }
        let id = |n: &str| params.id_of(n).unwrap();
        let fc1 = Linear {
            weight: id("fc1.weight"),
            bias: params.id_of("fc1.bias"),
        };
        let fc2 = Linear {
            weight: id("fc2.weight"),
            bias: params.id_of("fc2.bias"),
        };
        Ok(Self {
            input_dim: w1[0],
            hidden: w1[1],
            threshold,
            fc1,
            fc2,
            params,
        })
    }

    /// Records the logits of a `rows × input_dim` block.
    pub fn forward_tape(&self, tape: &mut Tape<f32>, x: Var) -> Var {
        let h = self.fc1.forward(tape, &self.params, x);
        let h = tape.gelu(h);
        self.fc2.forward(tape, &self.params, h)
    }

    pub fn logit(&self, x: &[f32]) -> Result<f64, ClaimError> {
        if x.len() != self.input_dim {
            return Err(ClaimError::DimMismatch {
                expected: self.input_dim,
                got: x.len(),
            });
        }
        let mut tape = Tape::new();
        let xv = tape.leaf(1, x.len(), x.to_vec());
        let z = self.forward_tape(&mut tape, xv);
        Ok(tape.scalar(z) as f64)
    }

    /// `probability = sigmoid(logit)`, claim when `probability >= threshold`.
    pub fn decide(&self, emb: &Embedding) -> Result<ClaimDecision, ClaimError> {
        let z = self.logit(&emb.vector)?;
        Ok(self.decision_from_logit(z, &emb.source_id))
    }

    pub fn decision_from_logit(&self, z: f64, source_id: &str) -> ClaimDecision {
        let probability = sigmoid(z);
        ClaimDecision {
            probability,
            has_claim: probability >= self.threshold,
            embedding_ref: source_id.to_string(),
        }
    }

    pub fn accuracy(&self, data: &[(Vec<f32>, ClaimLabel)]) -> Result<f64, ClaimError> {
        let mut correct = 0;
        for (x, l) in data {
            let p = sigmoid(self.logit(x)?);
            if (p >= self.threshold) == (*l == ClaimLabel::Claim) {
                correct += 1;
            }
        }
        Ok(correct as f64 / data.len().max(1) as f64)
    }

    /// BCE training on fixed embeddings with inverse-frequency class weights
    /// and shuffled minibatches.
    pub fn finetune(
        &mut self,
        data: &[(Vec<f32>, ClaimLabel)],
        cfg: &FinetuneConfig,
        seed: u64,
    ) -> Result<FinetuneReport, ClaimError> {
        let labels: Vec<ClaimLabel> = data.iter().map(|d| d.1).collect();
        let weights = inverse_frequency_weights(&labels)?;
        if let Some((x, _)) = data.iter().find(|(x, _)| x.len() != self.input_dim) {
            return Err(ClaimError::DimMismatch {
                expected: self.input_dim,
                got: x.len(),
            });
        }
        let adam = AdamConfig {
            lr: cfg.lr,
            ..AdamConfig::default()
        };
        let mut state = AdamState::new(&self.params);
        let mut report = FinetuneReport {
            class_weights: weights,
            ..Default::default()
        };
        let mut order: Vec<usize> = (0..data.len()).collect();
        for epoch in 0..cfg.epochs {
            SeededRng::derive(seed, epoch as u64).shuffle(&mut order);
            let mut total = 0.0;
            for chunk in order.chunks(cfg.batch_size.max(1)) {
                let mut tape = Tape::new();
                let x = tape.leaf(
                    chunk.len(),
                    self.input_dim,
                    chunk.iter().flat_map(|&i| data[i].0.iter().copied()).collect(),
                );
                let z = self.forward_tape(&mut tape, x);
                let scale = 1.0 / chunk.len() as f32;
                let mut loss: Option<Var> = None;
                for (r, &i) in chunk.iter().enumerate() {
                    let zi = tape.gather_rows(z, &[r]);
                    let w = weights[(data[i].1 == ClaimLabel::NoClaim) as usize] as f32 * scale;
                    let l = tape.bce_logit(zi, target(data[i].1), w);
                    loss = Some(match loss {
                        Some(acc) => tape.add(acc, l),
                        None => l,
                    });
                }
                let loss = loss.expect("non-empty chunk");
                total += tape.scalar(loss) as f64 * chunk.len() as f64;
                let g = tape.backward(loss);
                self.params.accumulate(&g, 1.0);
                adam_step(&mut self.params, &mut state, &adam);
                self.params.zero_grad();
            }
            report.epoch_loss.push(total / data.len() as f64);
            report.epoch_accuracy.push(self.accuracy(data)?);
        }
        Ok(report)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut c = Checkpoint::new();
        c.set_meta("kind", "claim_head");
        c.set_meta("threshold", self.threshold);
        c.add_store("head", &self.params);
        c
    }

    pub fn from_checkpoint(c: &Checkpoint) -> Result<Self, ClaimError> {
        let kind: String = c.meta_as("kind")?;
        if kind != "claim_head" {
            return Err(NnetError::Checkpoint(format!("expected a claim_head checkpoint, found {kind}")).into());
        }
        let threshold: f64 = c.meta_as("threshold")?;
        if !(threshold > 0.0 && threshold < 1.0) {
            return Err(ClaimError::BadThreshold(threshold));
        }
        Self::bind(c.store("head", HEAD_TAG), threshold)
    }
}

/// Token sets of one bundle for end-to-end fine-tuning.
#[derive(Clone, Debug)]
pub struct TokenExample {
    pub video: TokenSet,
    pub audio: TokenSet,
    pub label: ClaimLabel,
}

/// Fine-tunes the head together with both encoders, backpropagating through
/// mean pooling. Used with `unfreeze`.
pub fn finetune_unfrozen(
    head: &mut ClaimHead,
    video: &mut MaeEncoder,
    audio: &mut MaeEncoder,
    data: &[TokenExample],
    cfg: &FinetuneConfig,
    seed: u64,
) -> Result<FinetuneReport, ClaimError> {
    assert_eq!(video.modality(), Modality::Video);
    assert_eq!(audio.modality(), Modality::Audio);
    let labels: Vec<ClaimLabel> = data.iter().map(|d| d.label).collect();
    let weights = inverse_frequency_weights(&labels)?;
    if video.dim() + audio.dim() != head.input_dim {
        return Err(ClaimError::DimMismatch {
            expected: head.input_dim,
            got: video.dim() + audio.dim(),
        });
    }
    let adam = AdamConfig {
        lr: cfg.lr,
        ..AdamConfig::default()
    };
    // the three stores need distinct tags on one tape
    let retag = |enc: &MaeEncoder, tag: usize| -> Result<MaeEncoder, ClaimError> {
        let mut params = enc.graph.params.clone();
        params.tag = tag;
        Ok(MaeEncoder {
            config: enc.config.clone(),
            graph: ModuleGraph::from_store(&enc.graph.name, enc.graph.config.clone(), params)?,
        })
    };
    let (mut v_enc, mut a_enc) = (retag(video, 10)?, retag(audio, 11)?);
    let (video_out, audio_out) = (video, audio);
    let (video, audio) = (&mut v_enc, &mut a_enc);
    let mut sh = AdamState::new(&head.params);
    let mut sv = AdamState::new(&video.graph.params);
    let mut sa = AdamState::new(&audio.graph.params);
    let mut report = FinetuneReport {
        class_weights: weights,
        ..Default::default()
    };
    let pooled = |tape: &mut Tape<f32>, enc: &MaeEncoder, ts: &TokenSet| {
        let x = tape.leaf(ts.n_tokens, ts.token_dim, ts.tokens.clone());
        let pos: Vec<usize> = (0..ts.n_tokens).collect();
        let h = enc.graph.forward_tape(tape, x, &pos);
        tape.mean_rows(h)
    };
    let mut order: Vec<usize> = (0..data.len()).collect();
    for epoch in 0..cfg.epochs {
        SeededRng::derive(seed, epoch as u64).shuffle(&mut order);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size.max(1)) {
            let scale = 1.0 / chunk.len() as f32;
            for &i in chunk {
                let ex = &data[i];
                let mut tape = Tape::new();
                let v = pooled(&mut tape, video, &ex.video);
                let a = pooled(&mut tape, audio, &ex.audio);
                let f = tape.concat_cols(&[v, a]);
                let z = head.forward_tape(&mut tape, f);
                let w = weights[(ex.label == ClaimLabel::NoClaim) as usize] as f32 * scale;
                let l = tape.bce_logit(z, target(ex.label), w);
                total += tape.scalar(l) as f64 / scale as f64;
                let g = tape.backward(l);
                head.params.accumulate(&g, 1.0);
                video.graph.params.accumulate(&g, 1.0);
                audio.graph.params.accumulate(&g, 1.0);
            }
            adam_step(&mut head.params, &mut sh, &adam);
            adam_step(&mut video.graph.params, &mut sv, &adam);
            adam_step(&mut audio.graph.params, &mut sa, &adam);
            head.params.zero_grad();
            video.graph.params.zero_grad();
            audio.graph.params.zero_grad();
        }
        report.epoch_loss.push(total / data.len() as f64);
        let mut correct = 0;
        for ex in data {
            let e = crate::mae::fuse(&video.embed(&ex.video, "")?, &audio.embed(&ex.audio, "")?)?;
            if head.decide(&e)?.has_claim == (ex.label == ClaimLabel::Claim) {
                correct += 1;
            }
        }
        report.epoch_accuracy.push(correct as f64 / data.len() as f64);
    }
    *video_out = retag(video, 0)?;
    *audio_out = retag(audio, 0)?;
    Ok(report)
}
