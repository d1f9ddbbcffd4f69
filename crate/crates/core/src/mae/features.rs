//! Bundle -> token set conversion for each modality.

use super::MaeError;
use crate::media::{log_mel_spectrogram, resize_frame, sample_frames, SfvBundle, SpecParams, CANONICAL_RATE};
use crate::tokenizer::{fit_frames, patchify_spectrogram, tubify, TokenSet};
use serde::{Deserialize, Serialize};

/// Frames are sampled uniformly in time, resized to `size × size` and cut
/// into `tube = [t, h, w]` tubelets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VideoTokenConfig {
    pub frames: usize,
    pub size: usize,
    pub tube: [usize; 3],
    pub mask_ratio: f64,
}

impl Default for VideoTokenConfig {
    fn default() -> Self {
        Self {
            frames: 16,
            size: 64,
            tube: [2, 16, 16],
            mask_ratio: 0.75,
        }
    }
}

impl VideoTokenConfig {
    pub fn n_tokens(&self) -> usize {
        let [t, h, w] = self.tube;
        (self.frames / t) * (self.size / h) * (self.size / w)
    }

    pub fn token_dim(&self) -> usize {
        self.tube.iter().product::<usize>() * 3
    }

    pub fn validate(&self) -> Result<(), MaeError> {
        let [t, h, w] = self.tube;
        if t == 0 || h == 0 || w == 0 || self.frames % t != 0 || self.size % h != 0 || self.size % w != 0 {
            return Err(MaeError::Config(format!(
                "video: {} frames of {}x{} not divisible by tube {:?}",
                self.frames, self.size, self.size, self.tube
            )));
        }
        check_ratio("video", self.mask_ratio)
    }

    pub fn tokens(&self, bundle: &SfvBundle) -> Result<TokenSet, MaeError> {
        if bundle.frames.is_empty() {
            return Err(MaeError::ShapeMismatch(format!("bundle {} has no frames", bundle.id)));
        }
        let frames: Vec<_> = sample_frames(bundle, self.frames)
            .iter()
            .map(|f| resize_frame(f, self.size, self.size))
            .collect();
        Ok(tubify(&frames, (self.tube[0], self.tube[1], self.tube[2]))?)
    }
}

/// Log-mel spectrogram cropped or edge-padded to `frames` columns and cut
/// into `patch = [f, t]` tiles.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AudioTokenConfig {
    pub n_mels: usize,
    pub window_len: usize,
    pub hop_len: usize,
    pub log_offset: f64,
    pub frames: usize,
    pub patch: [usize; 2],
    pub mask_ratio: f64,
}

impl Default for AudioTokenConfig {
    fn default() -> Self {
        let s = SpecParams::default();
        Self {
            n_mels: s.n_mels,
            window_len: s.window_len,
            hop_len: s.hop_len,
            log_offset: s.log_offset,
            frames: 96,
            patch: [16, 16],
            mask_ratio: 0.75,
        }
    }
}

impl AudioTokenConfig {
    pub fn spec_params(&self) -> SpecParams {
        SpecParams {
            window_len: self.window_len,
            hop_len: self.hop_len,
            n_mels: self.n_mels,
            sample_rate: CANONICAL_RATE,
            log_offset: self.log_offset,
        }
    }

    pub fn n_tokens(&self) -> usize {
        (self.n_mels / self.patch[0]) * (self.frames / self.patch[1])
    }

    pub fn token_dim(&self) -> usize {
        self.patch[0] * self.patch[1]
    }

    pub fn validate(&self) -> Result<(), MaeError> {
        self.spec_params().validate()?;
        let [f, t] = self.patch;
        if f == 0 || t == 0 || self.n_mels % f != 0 || self.frames % t != 0 {
            return Err(MaeError::Config(format!(
                "audio: {}x{} spectrogram not divisible by patch {:?}",
                self.n_mels, self.frames, self.patch
            )));
        }
        check_ratio("audio", self.mask_ratio)
    }

    pub fn tokens(&self, bundle: &SfvBundle) -> Result<TokenSet, MaeError> {
        let spec = log_mel_spectrogram(&bundle.audio_f32(), &self.spec_params())?;
        let spec = fit_frames(&spec, self.frames);
        Ok(patchify_spectrogram(&spec, (self.patch[0], self.patch[1]))?)
    }
}

/// Token layouts of both modalities, stored next to trained encoders.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeatureConfig {
    pub video: VideoTokenConfig,
    pub audio: AudioTokenConfig,
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<(), MaeError> {
        self.video.validate()?;
        self.audio.validate()
    }
}

fn check_ratio(what: &str, r: f64) -> Result<(), MaeError> {
    if (0.0..=1.0).contains(&r) {
        Ok(())
    } else {
        Err(MaeError::Config(format!("{what}.mask_ratio {r} outside [0, 1]")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::media::RgbImage;

    fn bundle() -> SfvBundle {
        let frames = (0..20)
            .map(|i| RgbImage::from_fn(48, 40, |y, x, c| ((i * 5 + y * 2 + x + 40 * c) % 256) as u8))
            .collect();
        SfvBundle {
            id: "b".into(),
            frames,
            fps: (10, 1),
            audio: (0..32_000).map(|i| (((i as f64) * 0.05).sin() * 8000.0) as i16).collect(),
            sample_rate: 16_000,
            manifest: None,
        }
    }

    #[test]
    fn default_layouts() {
        let v = VideoTokenConfig::default();
        assert_eq!((v.n_tokens(), v.token_dim()), (128, 1536));
        let a = AudioTokenConfig::default();
        assert_eq!((a.n_tokens(), a.token_dim()), (48, 256));
        let b = bundle();
        let vt = v.tokens(&b).unwrap();
        assert_eq!((vt.n_tokens, vt.token_dim), (128, 1536));
        let at = a.tokens(&b).unwrap();
        assert_eq!((at.n_tokens, at.token_dim), (48, 256));
    }

    #[test]
    fn invalid_layouts_rejected() {
        let v = VideoTokenConfig {
            size: 60,
            ..Default::default()
        };
        assert!(v.validate().is_err());
        let a = AudioTokenConfig {
            patch: [16, 10],
            ..Default::default()
        };
        assert!(a.validate().is_err());
        let a = AudioTokenConfig {
            mask_ratio: 1.5,
            ..Default::default()
        };
        assert!(a.validate().is_err());
    }
}
