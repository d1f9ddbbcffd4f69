//! Masked autoencoders for video tubelets and audio spectrogram patches.
//!
//! Pretraining hides a random subset of tokens, encodes the visible ones at
//! their grid positions, and asks a light decoder to reconstruct the hidden
//! rows from the encoded context plus a learned mask token. After pretraining
//! only the encoder is kept: a bundle's embedding is the mean of the encoder
//! outputs over all of its tokens, and the video and audio embeddings are
//! concatenated.

mod features;
mod pca;
mod train;

pub use features::{AudioTokenConfig, FeatureConfig, VideoTokenConfig};
pub use pca::{pca_2d, pca_2d_rows, write_pca_csv, Pca2d, PcaError};
pub use train::{batch_indices, eval_loss, pretrain, PretrainConfig, StepRecord};

use crate::media::MediaError;
use crate::nnet::checkpoint::Checkpoint;
use crate::nnet::gradcheck::HasParams;
use crate::nnet::{adam_step, AdamConfig, AdamState, GraphConfig, ModuleGraph, NnetError, ParamId, ParamStore, Real, Tape, Tensor, Var};
use crate::rng::SeededRng;
use crate::tokenizer::{make_mask, MaskPlan, TokenSet, TokenizerError};
use serde::{Deserialize, Serialize};
use std::fmt;

#[derive(Debug, thiserror::Error)]
pub enum MaeError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("embeddings come from different sources: {0} vs {1}")]
    SourceMismatch(String, String),
    #[error("expected a {expected} embedding, got {got}")]
    ModalityMismatch { expected: Modality, got: Modality },
    #[error("empty dataset")]
    EmptyDataset,
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Nnet(#[from] NnetError),
    #[error(transparent)]
    Tokenizer(#[from] TokenizerError),
    #[error(transparent)]
    Media(#[from] MediaError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Video,
    Audio,
    Fused,
}

impl Modality {
    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Video => "video",
            Modality::Audio => "audio",
            Modality::Fused => "fused",
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Transformer sizes shared by both modalities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelDims {
    pub d_model: usize,
    pub heads: usize,
    pub encoder_depth: usize,
    pub decoder_depth: usize,
    pub decoder_width: usize,
    pub decoder_heads: usize,
    /// MLP hidden width as a multiple of the block width.
    pub mlp_ratio: usize,
    pub init_std: f64,
}

impl Default for ModelDims {
    fn default() -> Self {
        Self {
            d_model: 192,
            heads: 4,
            encoder_depth: 4,
            decoder_depth: 2,
            decoder_width: 96,
            decoder_heads: 4,
            mlp_ratio: 4,
            init_std: 0.02,
        }
    }
}

/// Everything needed to rebuild an MAE: token layout, mask ratio, sizes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaeConfig {
    pub modality: Modality,
    pub n_tokens: usize,
    pub token_dim: usize,
    pub patch_shape: Vec<usize>,
    pub mask_ratio: f64,
    pub dims: ModelDims,
}

impl MaeConfig {
    pub fn video(tok: &VideoTokenConfig, dims: &ModelDims) -> Self {
        Self {
            modality: Modality::Video,
            n_tokens: tok.n_tokens(),
            token_dim: tok.token_dim(),
            patch_shape: vec![tok.tube[0], tok.tube[1], tok.tube[2], 3],
            mask_ratio: tok.mask_ratio,
            dims: dims.clone(),
        }
    }

    pub fn audio(tok: &AudioTokenConfig, dims: &ModelDims) -> Self {
        Self {
            modality: Modality::Audio,
            n_tokens: tok.n_tokens(),
            token_dim: tok.token_dim(),
            patch_shape: tok.patch.to_vec(),
            mask_ratio: tok.mask_ratio,
            dims: dims.clone(),
        }
    }

    pub fn encoder_graph(&self) -> GraphConfig {
        let d = &self.dims;
        GraphConfig {
            in_dim: self.token_dim,
            d_model: d.d_model,
            heads: d.heads,
            depth: d.encoder_depth,
            mlp_hidden: d.d_model * d.mlp_ratio,
            n_positions: self.n_tokens,
            out_dim: None,
            init_std: d.init_std,
        }
    }

    pub fn decoder_graph(&self) -> GraphConfig {
        let d = &self.dims;
        GraphConfig {
            in_dim: d.d_model,
            d_model: d.decoder_width,
            heads: d.decoder_heads,
            depth: d.decoder_depth,
            mlp_hidden: d.decoder_width * d.mlp_ratio,
            n_positions: self.n_tokens,
            out_dim: Some(self.token_dim),
            init_std: d.init_std,
        }
    }

    pub fn validate(&self) -> Result<(), MaeError> {
        if self.modality == Modality::Fused {
            return Err(MaeError::Config("an MAE is either video or audio".into()));
        }
        if self.n_tokens == 0 || self.token_dim != self.patch_shape.iter().product::<usize>() {
            return Err(MaeError::Config(format!(
                "token_dim {} does not match patch shape {:?}",
                self.token_dim, self.patch_shape
            )));
        }
        if !(0.0..=1.0).contains(&self.mask_ratio) {
            return Err(MaeError::Config(format!("mask_ratio {} outside [0, 1]", self.mask_ratio)));
        }
        self.encoder_graph().validate()?;
        self.decoder_graph().validate()?;
        Ok(())
    }

    fn check_tokens(&self, ts: &TokenSet) -> Result<(), MaeError> {
        if ts.n_tokens != self.n_tokens || ts.token_dim != self.token_dim {
            return Err(MaeError::ShapeMismatch(format!(
                "{} model expects {}x{} tokens, got {}x{}",
                self.modality, self.n_tokens, self.token_dim, ts.n_tokens, ts.token_dim
            )));
        }
        Ok(())
    }
}

/// A pooled representation of one bundle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub vector: Vec<f32>,
    pub modality: Modality,
    pub source_id: String,
}

impl Embedding {
    pub fn dim(&self) -> usize {
        self.vector.len()
    }
}

/// `[v ‖ a]` for the same source.
pub fn fuse(v: &Embedding, a: &Embedding) -> Result<Embedding, MaeError> {
    if v.modality != Modality::Video {
        return Err(MaeError::ModalityMismatch {
            expected: Modality::Video,
            got: v.modality,
        });
    }
    if a.modality != Modality::Audio {
        return Err(MaeError::ModalityMismatch {
            expected: Modality::Audio,
            got: a.modality,
        });
    }
    if v.source_id != a.source_id {
        return Err(MaeError::SourceMismatch(v.source_id.clone(), a.source_id.clone()));
    }
    let mut vector = v.vector.clone();
    vector.extend_from_slice(&a.vector);
    Ok(Embedding {
        vector,
        modality: Modality::Fused,
        source_id: v.source_id.clone(),
    })
}

/// Splits a fused embedding after its first `d_video` entries.
pub fn unfuse(f: &Embedding, d_video: usize) -> Result<(Embedding, Embedding), MaeError> {
    if f.modality != Modality::Fused {
        return Err(MaeError::ModalityMismatch {
            expected: Modality::Fused,
            got: f.modality,
        });
    }
    if d_video > f.dim() {
        return Err(MaeError::ShapeMismatch(format!("cannot split {} at {d_video}", f.dim())));
    }
    let part = |vector: &[f32], modality| Embedding {
        vector: vector.to_vec(),
        modality,
        source_id: f.source_id.clone(),
    };
    Ok((
        part(&f.vector[..d_video], Modality::Video),
        part(&f.vector[d_video..], Modality::Audio),
    ))
}

/// Mean of the encoder outputs over all tokens at positions `0..n`.
fn pool<T: Real>(graph: &ModuleGraph<T>, ts: &TokenSet) -> Result<Vec<f32>, MaeError> {
    let x = Tensor::matrix(ts.n_tokens, ts.token_dim, ts.tokens.iter().map(|&v| T::c(v as f64)).collect());
    let out = graph.forward(&x)?;
    let (n, d) = out.dims2();
    let mut acc = vec![0f64; d];
    for row in out.data.chunks(d) {
        for (a, v) in acc.iter_mut().zip(row) {
            *a += v.to_f64().unwrap();
        }
    }
    Ok(acc.into_iter().map(|a| (a / n as f64) as f32).collect())
}

const MASK_TOKEN: &str = "mask_token";

/// Encoder, decoder and mask token of one modality.
#[derive(Clone, Debug)]
pub struct MaeModel<T = f32> {
    pub config: MaeConfig,
    pub encoder: ModuleGraph<T>,
    pub decoder: ModuleGraph<T>,
    /// Holds the mask token (store tag 2).
    pub extra: ParamStore<T>,
    mask_token: ParamId,
}

/// Adam moments for the three parameter stores of an [`MaeModel`].
#[derive(Clone, Debug, PartialEq)]
pub struct MaeOptState<T = f32> {
    pub encoder: AdamState<T>,
    pub decoder: AdamState<T>,
    pub extra: AdamState<T>,
}

impl<T: Real> MaeOptState<T> {
    pub fn new(model: &MaeModel<T>) -> Self {
        Self {
            encoder: AdamState::new(&model.encoder.params),
            decoder: AdamState::new(&model.decoder.params),
            extra: AdamState::new(&model.extra),
        }
    }

    pub fn step(&self) -> u64 {
        self.encoder.step
    }
}

/// Seed of the mask for sample `i` of the batch drawn with `seed`.
pub fn sample_mask_seed(seed: u64, i: usize) -> u64 {
    SeededRng::derive(seed, i as u64 + 1).next_u64()
}

impl<T: Real> MaeModel<T> {
    pub fn new(config: MaeConfig, seed: u64) -> Result<Self, MaeError> {
        config.validate()?;
        let stream = match config.modality {
            Modality::Video => 1,
            _ => 2,
        };
        let mut rng = SeededRng::derive(seed, stream);
        let encoder = ModuleGraph::new("encoder", config.encoder_graph(), 0, &mut rng)?;
        let decoder = ModuleGraph::new("decoder", config.decoder_graph(), 1, &mut rng)?;
        let w = config.dims.decoder_width;
        let mut extra = ParamStore::new(2);
        let tok = (0..w).map(|_| T::c(rng.trunc_normal(config.dims.init_std))).collect();
        let mask_token = extra.add(MASK_TOKEN, Tensor::new(vec![1, w], tok));
        Ok(Self {
            config,
            encoder,
            decoder,
            extra,
            mask_token,
        })
    }

    fn from_parts(config: MaeConfig, encoder: ParamStore<T>, decoder: ParamStore<T>, extra: ParamStore<T>) -> Result<Self, MaeError> {
        config.validate()?;
        let encoder = ModuleGraph::from_store("encoder", config.encoder_graph(), encoder)?;
        let decoder = ModuleGraph::from_store("decoder", config.decoder_graph(), decoder)?;
        let mask_token = extra
            .id_of(MASK_TOKEN)
            .ok_or_else(|| NnetError::Checkpoint("missing mae.mask_token".into()))?;
        if extra.get(mask_token).shape != vec![1, config.dims.decoder_width] {
            return Err(NnetError::Checkpoint("mask_token has the wrong shape".into()).into());
        }
        Ok(Self {
            config,
            encoder,
            decoder,
            extra,
            mask_token,
        })
    }

    pub fn cast<U: Real>(&self) -> MaeModel<U> {
        MaeModel::from_parts(
            self.config.clone(),
            self.encoder.params.cast(),
            self.decoder.params.cast(),
            self.extra.cast(),
        )
        .expect("cast preserves layout")
    }

    pub fn n_params(&self) -> usize {
        self.encoder.n_params() + self.decoder.n_params() + self.extra.n_scalars()
    }

    /// Records the masked-reconstruction loss of `tokens` under `plan`.
    /// Returns `None` when nothing is masked.
    pub fn masked_loss(&self, tape: &mut Tape<T>, tokens: &[T], plan: &MaskPlan) -> Option<Var> {
        self.reconstruction_loss(tape, tokens, tokens, plan)
    }

    /// As [`masked_loss`](Self::masked_loss) with the reconstruction targets
    /// taken from a separate `n_tokens × token_dim` matrix.
    pub fn reconstruction_loss(&self, tape: &mut Tape<T>, inputs: &[T], targets: &[T], plan: &MaskPlan) -> Option<Var> {
        if plan.masked.is_empty() {
            return None;
        }
        let (n, dim) = (self.config.n_tokens, self.config.token_dim);
        assert_eq!(inputs.len(), n * dim, "token matrix does not match the model");
        assert_eq!(targets.len(), n * dim, "target matrix does not match the model");
        let rows = |m: &[T], idx: &[usize]| -> Vec<T> { idx.iter().flat_map(|&i| m[i * dim..(i + 1) * dim].iter().copied()).collect() };
        let dv = if plan.visible.is_empty() {
            tape.leaf(0, self.config.dims.decoder_width, Vec::new())
        } else {
            let x = tape.leaf(plan.visible.len(), dim, rows(inputs, &plan.visible));
            let enc = self.encoder.forward_tape(tape, x, &plan.visible);
            self.decoder.embed(tape, enc)
        };
        let fill = tape.param(&self.extra, self.mask_token);
        let full = tape.assemble_rows(dv, fill, &plan.visible, n);
        let all: Vec<usize> = (0..n).collect();
        let full = self.decoder.add_positions(tape, full, &all);
        let h = self.decoder.run_blocks(tape, full);
        let hm = tape.gather_rows(h, &plan.masked);
        let pred = self.decoder.project(tape, hm);
        Some(tape.mse(pred, rows(targets, &plan.masked)))
    }

    /// Loss without a parameter update; 0 when nothing is masked.
    pub fn loss(&self, ts: &TokenSet, plan: &MaskPlan) -> Result<f64, MaeError> {
        self.config.check_tokens(ts)?;
        let tokens: Vec<T> = ts.tokens.iter().map(|&v| T::c(v as f64)).collect();
        let mut tape = Tape::new();
        Ok(match self.masked_loss(&mut tape, &tokens, plan) {
            Some(l) => tape.scalar(l).to_f64().unwrap(),
            None => 0.0,
        })
    }

    /// Mean loss over `batch`, each sample masked with its own seed derived
    /// from `seed`.
    pub fn batch_loss(&self, batch: &[&TokenSet], seed: u64) -> Result<f64, MaeError> {
        if batch.is_empty() {
            return Err(MaeError::EmptyDataset);
        }
        let mut total = 0.0;
        for (i, ts) in batch.iter().enumerate() {
            let plan = make_mask(ts.n_tokens, self.config.mask_ratio, sample_mask_seed(seed, i));
            total += self.loss(ts, &plan)?;
        }
        Ok(total / batch.len() as f64)
    }

    /// One Adam step on the mean masked loss of `batch`. Returns the loss
    /// before the update. With nothing masked the loss is 0 and no parameter
    /// moves.
    pub fn pretrain_step(
        &mut self,
        opt: &mut MaeOptState<T>,
        batch: &[&TokenSet],
        seed: u64,
        adam: &AdamConfig,
    ) -> Result<f64, MaeError> {
        if batch.is_empty() {
            return Err(MaeError::EmptyDataset);
        }
        for ts in batch {
            self.config.check_tokens(ts)?;
        }
        let scale = T::c(1.0 / batch.len() as f64);
        let mut total = 0.0;
        let mut any = false;
        for (i, ts) in batch.iter().enumerate() {
            let plan = make_mask(ts.n_tokens, self.config.mask_ratio, sample_mask_seed(seed, i));
            let tokens: Vec<T> = ts.tokens.iter().map(|&v| T::c(v as f64)).collect();
            let mut tape = Tape::new();
            let Some(l) = self.masked_loss(&mut tape, &tokens, &plan) else {
                continue;
            };
            let value = tape.scalar(l);
            if !value.is_finite() {
                return Err(NnetError::NonFiniteActivation(format!("{} loss", self.config.modality)).into());
            }
            total += value.to_f64().unwrap();
            any = true;
            let grads = tape.backward(l);
            self.encoder.params.accumulate(&grads, scale);
            self.decoder.params.accumulate(&grads, scale);
            self.extra.accumulate(&grads, scale);
        }
        if any {
            adam_step(&mut self.encoder.params, &mut opt.encoder, adam);
            adam_step(&mut self.decoder.params, &mut opt.decoder, adam);
            adam_step(&mut self.extra, &mut opt.extra, adam);
        }
        self.encoder.params.zero_grad();
        self.decoder.params.zero_grad();
        self.extra.zero_grad();
        Ok(total / batch.len() as f64)
    }

    /// Encoder applied to every token, mean-pooled. No masking.
    pub fn embed(&self, ts: &TokenSet, source_id: &str) -> Result<Embedding, MaeError> {
        self.config.check_tokens(ts)?;
        Ok(Embedding {
            vector: pool(&self.encoder, ts)?,
            modality: self.config.modality,
            source_id: source_id.to_string(),
        })
    }

    pub fn encoder_only(&self) -> MaeEncoder<T> {
        MaeEncoder {
            config: self.config.clone(),
            graph: self.encoder.clone(),
        }
    }

    /// Full model (for resuming) with optional optimizer state.
    pub fn to_checkpoint(&self, opt: Option<&MaeOptState<T>>) -> Checkpoint {
        let mut c = Checkpoint::new();
        c.set_meta("kind", "mae");
        c.set_meta("config", &self.config);
        c.add_store("encoder", &self.encoder.params);
        c.add_store("decoder", &self.decoder.params);
        c.add_store("mae", &self.extra);
        if let Some(opt) = opt {
            c.set_meta("step", opt.step());
            for (prefix, store, state) in [
                ("encoder", &self.encoder.params, &opt.encoder),
                ("decoder", &self.decoder.params, &opt.decoder),
                ("mae", &self.extra, &opt.extra),
            ] {
                for (k, (name, t)) in store.iter().enumerate() {
                    c.add_tensor(&format!("adam_m.{prefix}.{name}"), &t.shape, &state.m[k]);
                    c.add_tensor(&format!("adam_v.{prefix}.{name}"), &t.shape, &state.v[k]);
                }
            }
        }
        c
    }

    pub fn from_checkpoint(c: &Checkpoint) -> Result<(Self, Option<MaeOptState<T>>), MaeError> {
        let kind: String = c.meta_as("kind")?;
        if kind != "mae" {
            return Err(NnetError::Checkpoint(format!("expected an mae checkpoint, found {kind}")).into());
        }
        let config: MaeConfig = c.meta_as("config")?;
        let model = Self::from_parts(config, c.store("encoder", 0), c.store("decoder", 1), c.store("mae", 2))?;
        let opt = match c.meta.get("step") {
            None => None,
            Some(_) => {
                let step: u64 = c.meta_as("step")?;
                let mut opt = MaeOptState::new(&model);
                for (prefix, store, state) in [
                    ("encoder", &model.encoder.params, &mut opt.encoder),
                    ("decoder", &model.decoder.params, &mut opt.decoder),
                    ("mae", &model.extra, &mut opt.extra),
                ] {
                    state.step = step;
                    for (k, (name, _)) in store.iter().enumerate() {
                        let get = |kind: &str| {
                            c.tensor::<T>(&format!("{kind}.{prefix}.{name}"))
                                .map(|t| t.data)
                                .ok_or_else(|| NnetError::Checkpoint(format!("missing {kind}.{prefix}.{name}")))
                        };
                        state.m[k] = get("adam_m")?;
                        state.v[k] = get("adam_v")?;
                    }
                }
                Some(opt)
            }
        };
        Ok((model, opt))
    }
}

impl HasParams for MaeModel<f64> {
    fn stores(&self) -> Vec<&ParamStore<f64>> {
        vec![&self.encoder.params, &self.decoder.params, &self.extra]
    }
    fn stores_mut(&mut self) -> Vec<&mut ParamStore<f64>> {
        vec![&mut self.encoder.params, &mut self.decoder.params, &mut self.extra]
    }
}

/// The part of an MAE kept after pretraining.
#[derive(Clone, Debug)]
pub struct MaeEncoder<T = f32> {
    pub config: MaeConfig,
    pub graph: ModuleGraph<T>,
}

impl<T: Real> MaeEncoder<T> {
    pub fn modality(&self) -> Modality {
        self.config.modality
    }

    pub fn dim(&self) -> usize {
        self.config.dims.d_model
    }

    pub fn embed(&self, ts: &TokenSet, source_id: &str) -> Result<Embedding, MaeError> {
        self.config.check_tokens(ts)?;
        Ok(Embedding {
            vector: pool(&self.graph, ts)?,
            modality: self.config.modality,
            source_id: source_id.to_string(),
        })
    }

    pub fn checksum(&self) -> String {
        self.graph.params.checksum()
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut c = Checkpoint::new();
        c.set_meta("kind", "encoder");
        c.set_meta("config", &self.config);
        c.add_store("encoder", &self.graph.params);
        c
    }

    /// Accepts encoder-only and full MAE checkpoints.
    pub fn from_checkpoint(c: &Checkpoint) -> Result<Self, MaeError> {
        let kind: String = c.meta_as("kind")?;
        if kind != "encoder" && kind != "mae" {
            return Err(NnetError::Checkpoint(format!("expected an encoder checkpoint, found {kind}")).into());
        }
        let config: MaeConfig = c.meta_as("config")?;
        config.validate()?;
        let graph = ModuleGraph::from_store("encoder", config.encoder_graph(), c.store("encoder", 0))?;
        Ok(Self { config, graph })
    }
}
