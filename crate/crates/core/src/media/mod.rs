//! Short-form-video bundles: raw RGB frames plus mono PCM audio.
//!
//! Real containers are decoded by an external command (see [`decoder`]) into
//! the bundle directory layout handled here:
//!
//! ```text
//! <bundle>/frames.sfvb     "SFVB" + LE u32 {version, width, height, n_frames, fps_num, fps_den} + RGB bytes
//! <bundle>/audio.wav       RIFF PCM16 mono, any rate (resampled to 16 kHz on load)
//! <bundle>/manifest.json   optional {"id", "source", "label", "hashtags"}
//! ```

pub mod decoder;
mod image;
mod spectrogram;

pub use image::{resize_frame, RgbImage};
pub use spectrogram::{log_mel_spectrogram, mel_filterbank, SpecParams, Spectrogram};

use serde::{Deserialize, Serialize};
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

pub const FRAMES_FILE: &str = "frames.sfvb";
pub const AUDIO_FILE: &str = "audio.wav";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const SFVB_MAGIC: &[u8; 4] = b"SFVB";
pub const SFVB_VERSION: u32 = 1;
/// Rate every bundle's audio is canonicalized to at load time.
pub const CANONICAL_RATE: u32 = 16_000;
/// Allowed disagreement between frame-derived and sample-derived duration.
pub const DURATION_SLACK_S: f64 = 0.25;

#[derive(Debug, thiserror::Error)]
pub enum MediaError {
    #[error("missing file {0}")]
    MissingFile(PathBuf),
    #[error("bad magic in {0}: expected \"SFVB\"")]
    BadMagic(PathBuf),
    #[error("unsupported sfvb version {0}")]
    UnsupportedVersion(u32),
    #[error("malformed header: {0}")]
    BadHeader(String),
    #[error("frame data size mismatch: expected {expected} bytes, found {found}")]
    FrameSizeMismatch { expected: usize, found: usize },
    #[error("unsupported audio: {0}")]
    BadAudio(String),
    #[error("audio too short: {samples} samples < window {window}")]
    AudioTooShort { samples: usize, window: usize },
    #[error("invalid bundle: {0}")]
    Invalid(String),
    #[error("decoder failed: {0}")]
    Decoder(String),
    #[error("bad manifest: {0}")]
    Manifest(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClaimLabel {
    Claim,
    NoClaim,
}

/// Optional per-bundle metadata stored as `manifest.json`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BundleManifest {
    pub id: String,
    #[serde(default)]
    pub source: String,
    #[serde(default)]
    pub label: Option<ClaimLabel>,
    #[serde(default)]
    pub hashtags: Vec<String>,
}

/// Decoded frames and mono audio for one short-form video.
#[derive(Clone, Debug, PartialEq)]
pub struct SfvBundle {
    pub id: String,
    pub frames: Vec<RgbImage>,
    /// Frame rate as a rational `num / den`.
    pub fps: (u32, u32),
    pub audio: Vec<i16>,
    pub sample_rate: u32,
    pub manifest: Option<BundleManifest>,
}

impl SfvBundle {
    pub fn fps(&self) -> f64 {
        self.fps.0 as f64 / self.fps.1 as f64
    }

    /// Duration implied by the frame stream.
    pub fn duration_s(&self) -> f64 {
        self.frames.len() as f64 / self.fps()
    }

    pub fn audio_duration_s(&self) -> f64 {
        self.audio.len() as f64 / self.sample_rate as f64
    }

    pub fn frame_shape(&self) -> Option<(usize, usize)> {
        self.frames.first().map(|f| (f.height, f.width))
    }

    /// Audio scaled to `[-1, 1)`.
    pub fn audio_f32(&self) -> Vec<f32> {
        self.audio.iter().map(|&s| s as f32 / 32768.0).collect()
    }

    pub fn validate(&self) -> Result<(), MediaError> {
        if self.fps.0 == 0 || self.fps.1 == 0 {
            return Err(MediaError::Invalid("fps must be > 0".into()));
        }
        if self.sample_rate == 0 {
            return Err(MediaError::Invalid("sample_rate must be > 0".into()));
        }
        if let Some((h, w)) = self.frame_shape() {
            if h == 0 || w == 0 {
                return Err(MediaError::Invalid("empty frame dimensions".into()));
            }
            for f in &self.frames {
                if (f.height, f.width) != (h, w) || f.data.len() != h * w * 3 {
                    return Err(MediaError::FrameSizeMismatch {
                        expected: h * w * 3,
                        found: f.data.len(),
                    });
                }
            }
        }
        let gap = (self.duration_s() - self.audio_duration_s()).abs();
        if gap > DURATION_SLACK_S {
            return Err(MediaError::Invalid(format!(
                "frame duration {:.3}s and audio duration {:.3}s differ by {:.3}s",
                self.duration_s(),
                self.audio_duration_s(),
                gap
            )));
        }
        Ok(())
    }

    /// SHA-256 over every byte that defines the bundle's content.
    pub fn content_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        h.update(self.id.as_bytes());
        h.update(encode_sfvb(self));
        h.update(self.sample_rate.to_le_bytes());
        for s in &self.audio {
            h.update(s.to_le_bytes());
        }
        hex(&h.finalize())
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn encode_sfvb(bundle: &SfvBundle) -> Vec<u8> {
    let (h, w) = bundle.frame_shape().unwrap_or((0, 0));
    let mut out = Vec::with_capacity(28 + bundle.frames.len() * h * w * 3);
    out.extend_from_slice(SFVB_MAGIC);
    for v in [
        SFVB_VERSION,
        w as u32,
        h as u32,
        bundle.frames.len() as u32,
        bundle.fps.0,
        bundle.fps.1,
    ] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for f in &bundle.frames {
        out.extend_from_slice(&f.data);
    }
    out
}

/// Header fields of a `frames.sfvb` file.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SfvbHeader {
    pub version: u32,
    pub width: u32,
    pub height: u32,
    pub n_frames: u32,
    pub fps_num: u32,
    pub fps_den: u32,
}

pub fn read_sfvb_header(path: &Path) -> Result<SfvbHeader, MediaError> {
    let mut f = open(path)?;
    let mut buf = [0u8; 28];
    f.read_exact(&mut buf)
        .map_err(|_| MediaError::BadHeader("truncated sfvb header".into()))?;
    parse_header(&buf, path)
}

fn parse_header(buf: &[u8], path: &Path) -> Result<SfvbHeader, MediaError> {
    if buf.len() < 28 {
        return Err(MediaError::BadHeader("truncated sfvb header".into()));
    }
    if &buf[..4] != SFVB_MAGIC {
        return Err(MediaError::BadMagic(path.to_path_buf()));
    }
    let field = |i: usize| u32::from_le_bytes(buf[4 + 4 * i..8 + 4 * i].try_into().unwrap());
    let header = SfvbHeader {
        version: field(0),
        width: field(1),
        height: field(2),
        n_frames: field(3),
        fps_num: field(4),
        fps_den: field(5),
    };
    if header.version != SFVB_VERSION {
        return Err(MediaError::UnsupportedVersion(header.version));
    }
    if header.fps_num == 0 || header.fps_den == 0 {
        return Err(MediaError::BadHeader("fps must be > 0".into()));
    }
    Ok(header)
}

fn open(path: &Path) -> Result<fs::File, MediaError> {
    fs::File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => MediaError::MissingFile(path.to_path_buf()),
        _ => MediaError::Io(e),
    })
}

fn read_frames(path: &Path) -> Result<(SfvbHeader, Vec<RgbImage>), MediaError> {
    let mut bytes = Vec::new();
    open(path)?.read_to_end(&mut bytes)?;
    let header = parse_header(&bytes, path)?;
    let (w, h) = (header.width as usize, header.height as usize);
    let frame_len = w * h * 3;
    let expected = frame_len * header.n_frames as usize;
    let payload = &bytes[28..];
    if payload.len() != expected {
        return Err(MediaError::FrameSizeMismatch {
            expected,
            found: payload.len(),
        });
    }
    let frames = if frame_len == 0 {
        Vec::new()
    } else {
        payload
            .chunks_exact(frame_len)
            .map(|c| RgbImage::from_raw(h, w, c.to_vec()))
            .collect()
    };
    Ok((header, frames))
}

fn read_wav(path: &Path) -> Result<(Vec<i16>, u32), MediaError> {
    let file = open(path)?;
    let reader = hound::WavReader::new(std::io::BufReader::new(file))
        .map_err(|e| MediaError::BadAudio(e.to_string()))?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(MediaError::BadAudio(format!(
            "expected mono, found {} channels",
            spec.channels
        )));
    }
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(MediaError::BadAudio(format!(
            "expected PCM16, found {:?} {}-bit",
            spec.sample_format, spec.bits_per_sample
        )));
    }
    let samples = reader
        .into_samples::<i16>()
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| MediaError::BadAudio(e.to_string()))?;
    Ok((samples, spec.sample_rate))
}

fn write_wav(path: &Path, samples: &[i16], rate: u32) -> Result<(), MediaError> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut w = hound::WavWriter::create(path, spec).map_err(|e| MediaError::BadAudio(e.to_string()))?;
    for &s in samples {
        w.write_sample(s).map_err(|e| MediaError::BadAudio(e.to_string()))?;
    }
    w.finalize().map_err(|e| MediaError::BadAudio(e.to_string()))
}

/// Linear-interpolation resampler.
pub fn resample_linear(samples: &[i16], from: u32, to: u32) -> Vec<i16> {
    if from == to || samples.is_empty() {
        return samples.to_vec();
    }
    let n_out = ((samples.len() as u64 * to as u64) / from as u64) as usize;
    let ratio = from as f64 / to as f64;
    (0..n_out)
        .map(|i| {
            let pos = i as f64 * ratio;
            let j = pos.floor() as usize;
            let frac = pos - j as f64;
            let a = samples[j.min(samples.len() - 1)] as f64;
            let b = samples[(j + 1).min(samples.len() - 1)] as f64;
            (a + (b - a) * frac).round().clamp(i16::MIN as f64, i16::MAX as f64) as i16
        })
        .collect()
}

/// Loads a bundle directory, canonicalizing audio to 16 kHz.
pub fn load_bundle(dir: impl AsRef<Path>) -> Result<SfvBundle, MediaError> {
    let dir = dir.as_ref();
    let (header, frames) = read_frames(&dir.join(FRAMES_FILE))?;
    let (audio, rate) = read_wav(&dir.join(AUDIO_FILE))?;
    let audio = resample_linear(&audio, rate, CANONICAL_RATE);
    let manifest_path = dir.join(MANIFEST_FILE);
    let manifest: Option<BundleManifest> = if manifest_path.exists() {
        Some(serde_json::from_slice(&fs::read(&manifest_path)?)?)
    } else {
        None
    };
    let id = match &manifest {
        Some(m) => m.id.clone(),
        None => dir
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default(),
    };
    let bundle = SfvBundle {
        id,
        frames,
        fps: (header.fps_num, header.fps_den),
        audio,
        sample_rate: CANONICAL_RATE,
        manifest,
    };
    bundle.validate()?;
    Ok(bundle)
}

/// Writes a bundle directory; the inverse of [`load_bundle`] for 16 kHz audio.
pub fn write_bundle(dir: impl AsRef<Path>, bundle: &SfvBundle) -> Result<(), MediaError> {
    let dir = dir.as_ref();
    bundle.validate()?;
    fs::create_dir_all(dir)?;
    fs::File::create(dir.join(FRAMES_FILE))?.write_all(&encode_sfvb(bundle))?;
    write_wav(&dir.join(AUDIO_FILE), &bundle.audio, bundle.sample_rate)?;
    if let Some(m) = &bundle.manifest {
        let mut text = serde_json::to_string_pretty(m)?;
        text.push('\n');
        fs::write(dir.join(MANIFEST_FILE), text)?;
    }
    Ok(())
}

/// Indices of `n` uniformly spaced frames out of `total`.
pub fn sample_indices(total: usize, n: usize) -> Vec<usize> {
    assert!(total >= 1 && n >= 1, "sample_indices needs total >= 1 and n >= 1");
    if total < n {
        return (0..n).map(|i| i.min(total - 1)).collect();
    }
    if n == 1 {
        return vec![0];
    }
    (0..n)
        .map(|i| ((i * (total - 1)) as f64 / (n - 1) as f64).round() as usize)
        .collect()
}

/// Temporal downsampling to exactly `n` frames.
pub fn sample_frames(bundle: &SfvBundle, n: usize) -> Vec<RgbImage> {
    sample_indices(bundle.frames.len(), n)
        .into_iter()
        .map(|i| bundle.frames[i].clone())
        .collect()
}
