use super::MediaError;
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

/// STFT + mel parameters. Defaults are 25 ms Hann windows with a 10 ms hop at
/// 16 kHz and 128 HTK-scale mel bins.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpecParams {
    pub window_len: usize,
    pub hop_len: usize,
    pub n_mels: usize,
    pub sample_rate: u32,
    pub log_offset: f64,
}

impl Default for SpecParams {
    fn default() -> Self {
        Self {
            window_len: 400,
            hop_len: 160,
            n_mels: 128,
            sample_rate: 16_000,
            log_offset: 1e-6,
        }
    }
}

impl SpecParams {
    pub fn validate(&self) -> Result<(), MediaError> {
        if self.window_len < 2 || self.hop_len == 0 || self.hop_len > self.window_len {
            return Err(MediaError::Invalid(format!(
                "need 0 < hop ({}) <= window ({})",
                self.hop_len, self.window_len
            )));
        }
        if self.n_mels == 0 || self.n_mels > self.window_len / 2 {
            return Err(MediaError::Invalid(format!(
                "n_mels {} must be in 1..={}",
                self.n_mels,
                self.window_len / 2
            )));
        }
        if self.sample_rate == 0 || !(self.log_offset > 0.0) {
            return Err(MediaError::Invalid("sample_rate and log_offset must be > 0".into()));
        }
        Ok(())
    }

    pub fn n_frames(&self, n_samples: usize) -> usize {
        if n_samples < self.window_len {
            0
        } else {
            (n_samples - self.window_len) / self.hop_len + 1
        }
    }

    pub fn n_freqs(&self) -> usize {
        self.window_len / 2 + 1
    }
}

/// Log-mel magnitudes, `bins` rows (low to high frequency) by `frames` columns
/// (time), stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrogram {
    pub bins: usize,
    pub frames: usize,
    pub values: Vec<f32>,
    pub params: SpecParams,
}

impl Spectrogram {
    #[inline]
    pub fn get(&self, bin: usize, frame: usize) -> f32 {
        self.values[bin * self.frames + frame]
    }
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular filters on the HTK mel scale from 0 Hz to Nyquist, peak 1.
/// Returns `n_mels` rows of `n_freqs` weights.
pub fn mel_filterbank(params: &SpecParams) -> Vec<Vec<f64>> {
    let n_freqs = params.n_freqs();
    let nyquist = params.sample_rate as f64 / 2.0;
    let mel_max = hz_to_mel(nyquist);
    let edges: Vec<f64> = (0..params.n_mels + 2)
        .map(|i| mel_to_hz(mel_max * i as f64 / (params.n_mels + 1) as f64))
        .collect();
    let bin_hz = |k: usize| k as f64 * params.sample_rate as f64 / params.window_len as f64;
    (0..params.n_mels)
        .map(|m| {
            let (lo, center, hi) = (edges[m], edges[m + 1], edges[m + 2]);
            (0..n_freqs)
                .map(|k| {
                    let f = bin_hz(k);
                    if f <= lo || f >= hi {
                        0.0
                    } else if f <= center {
                        (f - lo) / (center - lo)
                    } else {
                        (hi - f) / (hi - center)
                    }
                })
                .collect()
        })
        .collect()
}

/// Periodic Hann window.
pub fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (std::f64::consts::TAU * i as f64 / n as f64).cos())
        .collect()
}

/// Mel filterbank energies before the log, `n_mels × frames` row-major.
pub fn mel_magnitudes(audio: &[f32], params: &SpecParams) -> Result<(usize, Vec<f64>), MediaError> {
    params.validate()?;
    if audio.len() < params.window_len {
        return Err(MediaError::AudioTooShort {
            samples: audio.len(),
            window: params.window_len,
        });
    }
    let n_frames = params.n_frames(audio.len());
    let window = hann(params.window_len);
    let bank = mel_filterbank(params);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(params.window_len);
    let mut buf = vec![Complex::new(0.0, 0.0); params.window_len];
    let mut mags = vec![0.0f64; params.n_freqs()];
    let mut out = vec![0.0f64; params.n_mels * n_frames];
    for t in 0..n_frames {
        let start = t * params.hop_len;
        for (i, slot) in buf.iter_mut().enumerate() {
            *slot = Complex::new(audio[start + i] as f64 * window[i], 0.0);
        }
        fft.process(&mut buf);
        for (k, m) in mags.iter_mut().enumerate() {
            *m = buf[k].norm();
        }
        for (m, filt) in bank.iter().enumerate() {
            out[m * n_frames + t] = filt.iter().zip(&mags).map(|(w, x)| w * x).sum();
        }
    }
    Ok((n_frames, out))
}

/// Magnitude STFT (Hann) -> mel filterbank -> `ln(x + log_offset)`.
pub fn log_mel_spectrogram(audio: &[f32], params: &SpecParams) -> Result<Spectrogram, MediaError> {
    let (frames, mel) = mel_magnitudes(audio, params)?;
    let values = mel
        .into_iter()
        .map(|v| (v + params.log_offset).ln() as f32)
        .collect();
    Ok(Spectrogram {
        bins: params.n_mels,
        frames,
        values,
        params: *params,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Direct O(N^2) DFT magnitude for one frame.
    fn dft_magnitudes(frame: &[f64]) -> Vec<f64> {
        let n = frame.len();
        (0..n / 2 + 1)
            .map(|k| {
                let (mut re, mut im) = (0.0, 0.0);
                for (i, x) in frame.iter().enumerate() {
                    let a = -std::f64::consts::TAU * (k * i) as f64 / n as f64;
                    re += x * a.cos();
                    im += x * a.sin();
                }
                (re * re + im * im).sqrt()
            })
            .collect()
    }

    #[test]
    fn zero_audio_is_log_offset() {
        let p = SpecParams::default();
        let s = log_mel_spectrogram(&vec![0.0; 4000], &p).unwrap();
        let expected = (1e-6f64).ln() as f32;
        assert!(s.values.iter().all(|&v| v == expected));
    }

    #[test]
    fn frame_count_example() {
        let s = log_mel_spectrogram(&vec![0.1; 16_000], &SpecParams::default()).unwrap();
        assert_eq!((s.bins, s.frames), (128, 98));
    }

    #[test]
    fn too_short_rejected() {
        assert!(matches!(
            log_mel_spectrogram(&[0.0; 399], &SpecParams::default()),
            Err(MediaError::AudioTooShort { .. })
        ));
    }

    #[test]
    fn invalid_params_rejected() {
        let p = SpecParams {
            n_mels: 300,
            ..SpecParams::default()
        };
        assert!(log_mel_spectrogram(&[0.0; 1000], &p).is_err());
    }

    #[test]
    fn sine_energy_concentrates_near_its_frequency() {
        let p = SpecParams::default();
        let bank = mel_filterbank(&p);
        for bin in [40usize, 75, 120] {
            let hz = bin as f64 * p.sample_rate as f64 / p.window_len as f64;
            let audio: Vec<f32> = (0..4000)
                .map(|i| (0.5 * (std::f64::consts::TAU * hz * i as f64 / 16_000.0).sin()) as f32)
                .collect();
            let (frames, mel) = mel_magnitudes(&audio, &p).unwrap();

            // Oracle: direct DFT of the first windowed frame through the same filters.
            let win = hann(p.window_len);
            let frame: Vec<f64> = (0..p.window_len).map(|i| audio[i] as f64 * win[i]).collect();
            let mags = dft_magnitudes(&frame);
            let oracle: Vec<f64> = bank
                .iter()
                .map(|f| f.iter().zip(&mags).map(|(w, m)| w * m).sum())
                .collect();
            for m in 0..p.n_mels {
                assert!((mel[m * frames] - oracle[m]).abs() < 1e-6 * (1.0 + oracle[m]));
            }

            let target = hz_to_mel(hz);
            let mut order: Vec<usize> = (0..p.n_mels).collect();
            let center = |m: usize| hz_to_mel(8000.0) * (m + 1) as f64 / (p.n_mels + 1) as f64;
            order.sort_by(|&a, &b| {
                (center(a) - target).abs().partial_cmp(&(center(b) - target).abs()).unwrap()
            });
            for t in 0..frames {
                let total: f64 = (0..p.n_mels).map(|m| mel[m * frames + t]).sum();
                let near: f64 = order[..3].iter().map(|&m| mel[m * frames + t]).sum();
                assert!(near >= 0.9 * total, "bin {bin} frame {t}: {near} / {total}");
            }
        }
    }

    proptest! {
        #[test]
        fn frame_count_formula(window in 2usize..600, hop_frac in 0.01f64..1.0, extra in 0usize..3000) {
            let hop = ((window as f64 * hop_frac) as usize).max(1);
            let p = SpecParams { window_len: window, hop_len: hop, n_mels: 1, sample_rate: 16_000, log_offset: 1e-6 };
            let n = window + extra;
            let s = log_mel_spectrogram(&vec![0.0; n], &p).unwrap();
            prop_assert_eq!(s.frames, (n - window) / hop + 1);
            prop_assert_eq!(s.values.len(), s.frames);
        }

        #[test]
        fn finite_for_finite_input(samples in proptest::collection::vec(-1.0f32..1.0, 400..1200)) {
            let s = log_mel_spectrogram(&samples, &SpecParams::default()).unwrap();
            prop_assert!(s.values.iter().all(|v| v.is_finite()));
        }
    }
}
