//! Patch tokens for the two masked autoencoders.
//!
//! Video frames become `t×h×w×3` tubelets, spectrograms become `f×t` patches.
//! Each token set is normalized as a whole (subtract the mean, divide by the
//! largest absolute deviation) and keeps those statistics so the original
//! pixels or log-mel values can be reassembled exactly.

use crate::media::{RgbImage, Spectrogram};
use crate::rng::SeededRng;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum TokenizerError {
    #[error("shape {shape:?} is not divisible by patch {patch:?}")]
    IndivisibleShape { shape: Vec<usize>, patch: Vec<usize> },
    #[error("mask plan covers {plan} tokens but token set has {tokens}")]
    PlanMismatch { plan: usize, tokens: usize },
    #[error("empty input: {0}")]
    Empty(&'static str),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Grid {
    /// Tubelet counts along time, height, width.
    Video { t: usize, h: usize, w: usize },
    /// Patch counts along frequency and time.
    Audio { f: usize, t: usize },
}

impl Grid {
    pub fn n_tokens(&self) -> usize {
        match *self {
            Grid::Video { t, h, w } => t * h * w,
            Grid::Audio { f, t } => f * t,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: f32,
    pub scale: f32,
}

impl NormStats {
    fn fit(values: &[f32]) -> Self {
        let mean = (values.iter().map(|&v| v as f64).sum::<f64>() / values.len().max(1) as f64) as f32;
        let max_abs = values.iter().fold(0f32, |m, &v| m.max((v - mean).abs()));
        Self {
            mean,
            scale: if max_abs > 0.0 { max_abs } else { 1.0 },
        }
    }
}

/// `n_tokens × token_dim` matrix of normalized patch values.
#[derive(Clone, Debug, PartialEq)]
pub struct TokenSet {
    pub tokens: Vec<f32>,
    pub n_tokens: usize,
    pub token_dim: usize,
    pub grid: Grid,
    /// `[t, h, w, 3]` for video, `[f, t]` for audio.
    pub patch_shape: Vec<usize>,
    pub norm: NormStats,
}

impl TokenSet {
    pub fn row(&self, i: usize) -> &[f32] {
        &self.tokens[i * self.token_dim..(i + 1) * self.token_dim]
    }

    fn from_raw(raw: Vec<f32>, n_tokens: usize, grid: Grid, patch_shape: Vec<usize>) -> Self {
        let norm = NormStats::fit(&raw);
        let tokens = raw.into_iter().map(|v| (v - norm.mean) / norm.scale).collect();
        let token_dim = patch_shape.iter().product();
        Self {
            tokens,
            n_tokens,
            token_dim,
            grid,
            patch_shape,
            norm,
        }
    }

    /// Undo the normalization.
    pub fn denormalized(&self) -> Vec<f32> {
        self.tokens
            .iter()
            .map(|&v| v * self.norm.scale + self.norm.mean)
            .collect()
    }
}

/// Cuts a frame stack into `tube = (t, h, w)` cubes, row-major over the grid;
/// each token is flattened in `(dt, dy, dx, channel)` order from 0..255 pixels.
pub fn tubify(frames: &[RgbImage], tube: (usize, usize, usize)) -> Result<TokenSet, TokenizerError> {
    let first = frames.first().ok_or(TokenizerError::Empty("no frames"))?;
    let (n_f, height, width) = (frames.len(), first.height, first.width);
    let (pt, ph, pw) = tube;
    if pt == 0 || ph == 0 || pw == 0 || n_f % pt != 0 || height % ph != 0 || width % pw != 0 {
        return Err(TokenizerError::IndivisibleShape {
            shape: vec![n_f, height, width],
            patch: vec![pt, ph, pw],
        });
    }
    let grid = Grid::Video {
        t: n_f / pt,
        h: height / ph,
        w: width / pw,
    };
    let n_tokens = grid.n_tokens();
    let mut raw = Vec::with_capacity(n_tokens * pt * ph * pw * 3);
    for gt in 0..n_f / pt {
        for gy in 0..height / ph {
            for gx in 0..width / pw {
                for dt in 0..pt {
                    let frame = &frames[gt * pt + dt];
                    for dy in 0..ph {
                        let y = gy * ph + dy;
                        let start = (y * width + gx * pw) * 3;
                        raw.extend(frame.data[start..start + pw * 3].iter().map(|&b| b as f32));
                    }
                }
            }
        }
    }
    Ok(TokenSet::from_raw(raw, n_tokens, grid, vec![pt, ph, pw, 3]))
}

/// Inverse of [`tubify`].
pub fn untubify(ts: &TokenSet) -> Vec<RgbImage> {
    let Grid::Video { t: gt, h: gh, w: gw } = ts.grid else {
        panic!("untubify on a non-video token set");
    };
    let (pt, ph, pw) = (ts.patch_shape[0], ts.patch_shape[1], ts.patch_shape[2]);
    let (height, width) = (gh * ph, gw * pw);
    let mut frames = vec![vec![0u8; height * width * 3]; gt * pt];
    let values = ts.denormalized();
    let mut it = values.iter();
    for bt in 0..gt {
        for by in 0..gh {
            for bx in 0..gw {
                for dt in 0..pt {
                    for dy in 0..ph {
                        let start = ((by * ph + dy) * width + bx * pw) * 3;
                        for px in &mut frames[bt * pt + dt][start..start + pw * 3] {
                            *px = it.next().unwrap().round().clamp(0.0, 255.0) as u8;
                        }
                    }
                }
            }
        }
    }
    frames
        .into_iter()
        .map(|d| RgbImage::from_raw(height, width, d))
        .collect()
}

/// Crops or edge-pads a spectrogram along time to exactly `frames` columns.
pub fn fit_frames(spec: &Spectrogram, frames: usize) -> Spectrogram {
    assert!(spec.frames >= 1 && frames >= 1);
    let mut values = Vec::with_capacity(spec.bins * frames);
    for b in 0..spec.bins {
        for t in 0..frames {
            values.push(spec.get(b, t.min(spec.frames - 1)));
        }
    }
    Spectrogram {
        bins: spec.bins,
        frames,
        values,
        params: spec.params,
    }
}

/// Cuts a spectrogram into `patch = (f, t)` tiles after edge-padding time to a
/// multiple of `t`. Tiles are ordered row-major over `(frequency, time)` and
/// flattened row-major within.
pub fn patchify_spectrogram(spec: &Spectrogram, patch: (usize, usize)) -> Result<TokenSet, TokenizerError> {
    let (pf, pt) = patch;
    if pf == 0 || pt == 0 || spec.bins % pf != 0 {
        return Err(TokenizerError::IndivisibleShape {
            shape: vec![spec.bins, spec.frames],
            patch: vec![pf, pt],
        });
    }
    if spec.frames == 0 {
        return Err(TokenizerError::Empty("spectrogram has no frames"));
    }
    let padded = spec.frames.div_ceil(pt) * pt;
    let spec = fit_frames(spec, padded);
    let grid = Grid::Audio {
        f: spec.bins / pf,
        t: padded / pt,
    };
    let n_tokens = grid.n_tokens();
    let mut raw = Vec::with_capacity(spec.values.len());
    for gf in 0..spec.bins / pf {
        for gt in 0..padded / pt {
            for df in 0..pf {
                let row = (gf * pf + df) * padded + gt * pt;
                raw.extend_from_slice(&spec.values[row..row + pt]);
            }
        }
    }
    Ok(TokenSet::from_raw(raw, n_tokens, grid, vec![pf, pt]))
}

/// Inverse of [`patchify_spectrogram`]; returns `bins × padded_frames` values.
pub fn unpatchify(ts: &TokenSet) -> (usize, usize, Vec<f32>) {
    let Grid::Audio { f: gf, t: gt } = ts.grid else {
        panic!("unpatchify on a non-audio token set");
    };
    let (pf, pt) = (ts.patch_shape[0], ts.patch_shape[1]);
    let (bins, frames) = (gf * pf, gt * pt);
    let mut out = vec![0f32; bins * frames];
    let values = ts.denormalized();
    let mut it = values.iter();
    for bf in 0..gf {
        for bt in 0..gt {
            for df in 0..pf {
                let row = (bf * pf + df) * frames + bt * pt;
                for v in &mut out[row..row + pt] {
                    *v = *it.next().unwrap();
                }
            }
        }
    }
    (bins, frames, out)
}

/// A seeded partition of token indices into masked and visible sets.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskPlan {
    pub n_tokens: usize,
    pub masked: Vec<usize>,
    pub visible: Vec<usize>,
    /// Stored as the bit pattern of the requested ratio.
    pub ratio_bits: u64,
    pub seed: u64,
}

impl MaskPlan {
    pub fn ratio(&self) -> f64 {
        f64::from_bits(self.ratio_bits)
    }
}

/// Number of masked tokens: `round(ratio * n)`, halves rounded away from zero.
pub fn masked_count(n_tokens: usize, ratio: f64) -> usize {
    ((ratio * n_tokens as f64).round() as usize).min(n_tokens)
}

/// Uniform random subset without replacement: a partial Fisher-Yates shuffle of
/// `0..n` driven by [`SeededRng`].
pub fn make_mask(n_tokens: usize, ratio: f64, seed: u64) -> MaskPlan {
    assert!((0.0..=1.0).contains(&ratio), "mask ratio {ratio} outside [0, 1]");
    let m = masked_count(n_tokens, ratio);
    let mut rng = SeededRng::new(seed);
    let mut perm: Vec<usize> = (0..n_tokens).collect();
    for i in 0..m {
        let j = i + rng.below((n_tokens - i) as u64) as usize;
        perm.swap(i, j);
    }
    let mut masked = perm[..m].to_vec();
    let mut visible = perm[m..].to_vec();
    masked.sort_unstable();
    visible.sort_unstable();
    MaskPlan {
        n_tokens,
        masked,
        visible,
        ratio_bits: ratio.to_bits(),
        seed,
    }
}

/// Row partition of a token set: `(visible rows, masked target rows)`, each in
/// ascending index order.
pub fn split_tokens(ts: &TokenSet, plan: &MaskPlan) -> Result<(Vec<f32>, Vec<f32>), TokenizerError> {
    if plan.n_tokens != ts.n_tokens {
        return Err(TokenizerError::PlanMismatch {
            plan: plan.n_tokens,
            tokens: ts.n_tokens,
        });
    }
    let gather = |idx: &[usize]| idx.iter().flat_map(|&i| ts.row(i).iter().copied()).collect();
    Ok((gather(&plan.visible), gather(&plan.masked)))
}
