//! Pretraining loop.

use super::{MaeError, MaeModel, MaeOptState};
use crate::nnet::AdamConfig;
use crate::rng::SeededRng;
use crate::tokenizer::TokenSet;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PretrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            steps: 200,
            batch_size: 8,
            lr: 2e-3,
            beta1: 0.9,
            beta2: 0.999,
        }
    }
}

impl PretrainConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            ..AdamConfig::default()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u64,
    pub loss: f64,
}

/// Indices of the minibatch for `step`: a seeded draw without replacement.
pub fn batch_indices(n: usize, batch_size: usize, seed: u64, step: u64) -> Vec<usize> {
    let mut rng = SeededRng::derive(seed, 0x6261_7463_6800_0000 | step);
    let mut idx: Vec<usize> = (0..n).collect();
    let k = batch_size.min(n);
    for i in 0..k {
        let j = i + rng.below((n - i) as u64) as usize;
        idx.swap(i, j);
    }
    idx.truncate(k);
    idx
}

fn step_seed(seed: u64, step: u64) -> u64 {
    SeededRng::derive(seed, 0x6d61_736b_0000_0000 | step).next_u64()
}

/// Mean masked loss over the whole set with masks fixed by `seed`.
pub fn eval_loss(model: &MaeModel, data: &[TokenSet], seed: u64) -> Result<f64, MaeError> {
    let refs: Vec<&TokenSet> = data.iter().collect();
    model.batch_loss(&refs, seed)
}

/// Runs `cfg.steps` Adam steps continuing from `opt.step()`, calling
/// `on_step` after each one.
pub fn pretrain(
    model: &mut MaeModel,
    opt: &mut MaeOptState,
    data: &[TokenSet],
    cfg: &PretrainConfig,
    seed: u64,
    mut on_step: impl FnMut(&StepRecord),
) -> Result<Vec<StepRecord>, MaeError> {
    if data.is_empty() {
        return Err(MaeError::EmptyDataset);
    }
    let adam = cfg.adam();
    let mut curve = Vec::with_capacity(cfg.steps);
    let start = opt.step();
    for k in 0..cfg.steps as u64 {
        let step = start + k;
        let batch: Vec<&TokenSet> = batch_indices(data.len(), cfg.batch_size, seed, step)
            .into_iter()
            .map(|i| &data[i])
            .collect();
        let loss = model.pretrain_step(opt, &batch, step_seed(seed, step), &adam)?;
        let rec = StepRecord { step: step + 1, loss };
        on_step(&rec);
        curve.push(rec);
    }
    Ok(curve)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn batches_are_distinct_and_seeded() {
        let a = batch_indices(50, 8, 3, 0);
        assert_eq!(a.len(), 8);
        let mut s = a.clone();
        s.sort_unstable();
        s.dedup();
        assert_eq!(s.len(), 8);
        assert_eq!(a, batch_indices(50, 8, 3, 0));
        assert_ne!(a, batch_indices(50, 8, 3, 1));
        assert_eq!(batch_indices(3, 8, 1, 0).len(), 3);
    }
}
