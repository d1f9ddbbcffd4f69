//! Procedural bundles for pretraining and fixtures.
//!
//! Two styles stand in for the two hashtag families:
//!
//! * `TalkingHead`: a static shot of a face-like blob in front of a plain
//!   gradient, with voiced, syllable-modulated audio.
//! * `Dance`: discs circling over a pulsing striped background, with a
//!   sustained chord and a kick drum.
//!
//! Per-bundle variation is mostly global (palette, pitch, tempo, phase), so
//! hidden patches can be inferred from visible ones.

use crate::media::{BundleManifest, ClaimLabel, RgbImage, SfvBundle};
use crate::retrieval::{Article, ArticleSource};
use crate::rng::SeededRng;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthStyle {
    TalkingHead,
    Dance,
}

impl SynthStyle {
    pub fn label(self) -> ClaimLabel {
        match self {
            SynthStyle::TalkingHead => ClaimLabel::Claim,
            SynthStyle::Dance => ClaimLabel::NoClaim,
        }
    }

    fn hashtags(self) -> &'static [&'static str] {
        match self {
            SynthStyle::TalkingHead => &["#podcast", "#news", "#politics", "#health", "#science"],
            SynthStyle::Dance => &["#dance", "#music", "#challenge", "#memes", "#fashion"],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthParams {
    pub width: usize,
    pub height: usize,
    pub n_frames: usize,
    pub fps: u32,
    pub sample_rate: u32,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            width: 64,
            height: 64,
            n_frames: 16,
            fps: 8,
            sample_rate: 16_000,
        }
    }
}

impl SynthParams {
    pub fn seconds(&self) -> f64 {
        self.n_frames as f64 / self.fps as f64
    }
}

fn clamp_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

fn talking_head_frames(p: &SynthParams, rng: &mut SeededRng) -> Vec<RgbImage> {
    let (h, w) = (p.height as f64, p.width as f64);
    let top = [rng.uniform_range(60.0, 110.0), rng.uniform_range(70.0, 120.0), rng.uniform_range(90.0, 140.0)];
    let bottom = [top[0] * 0.5, top[1] * 0.5, top[2] * 0.6];
    let skin = [rng.uniform_range(170.0, 220.0), rng.uniform_range(120.0, 160.0), rng.uniform_range(90.0, 130.0)];
    let (cx, cy) = (w * rng.uniform_range(0.48, 0.52), h * rng.uniform_range(0.43, 0.47));
    let (rx, ry) = (w * 0.2, h * 0.27);
    let mouth: Vec<f64> = (0..p.n_frames).map(|_| rng.uniform_range(0.0, 1.0)).collect();
    (0..p.n_frames)
        .map(|f| {
            RgbImage::from_fn(p.height, p.width, |y, x, c| {
                let (xf, yf) = (x as f64 + 0.5, y as f64 + 0.5);
                let t = yf / h;
                let mut v = top[c] * (1.0 - t) + bottom[c] * t;
                let dx = (xf - cx) / rx;
                let dy = (yf - cy) / ry;
                if dx * dx + dy * dy < 1.0 {
                    v = skin[c] * (1.0 - 0.25 * dy.max(0.0));
                    let my = (yf - (cy + ry * 0.45)) / (ry * 0.12 * (0.3 + mouth[f]));
                    let mx = (xf - cx) / (rx * 0.4);
                    if mx * mx + my * my < 1.0 {
                        v *= 0.35;
                    }
                }
                // shoulders
                if yf > h * 0.82 && (xf - cx).abs() < w * 0.35 {
                    v = [40.0, 40.0, 55.0][c];
                }
                clamp_u8(v)
            })
        })
        .collect()
}

fn dance_frames(p: &SynthParams, rng: &mut SeededRng) -> Vec<RgbImage> {
    let (h, w) = (p.height as f64, p.width as f64);
    let bg = [rng.uniform_range(150.0, 255.0), rng.uniform_range(0.0, 90.0), rng.uniform_range(120.0, 255.0)];
    let disc = [rng.uniform_range(0.0, 80.0), rng.uniform_range(180.0, 255.0), rng.uniform_range(0.0, 80.0)];
    let spin = rng.uniform_range(0.5, 0.9);
    let phase = rng.uniform_range(0.0, TAU);
    let n_discs = 4;
    (0..p.n_frames)
        .map(|f| {
            let ft = f as f64;
            let pulse = 0.8 + 0.2 * (ft * 1.7).cos();
            RgbImage::from_fn(p.height, p.width, |y, x, c| {
                let (xf, yf) = (x as f64 + 0.5, y as f64 + 0.5);
                let stripe = 0.5 + 0.5 * ((xf + yf + ft * 4.0) / w * TAU).sin();
                let mut v = bg[c] * pulse * (0.6 + 0.4 * stripe);
                for k in 0..n_discs {
                    let a = phase + spin * ft + TAU * k as f64 / n_discs as f64;
                    let (cx, cy) = (w * (0.5 + 0.28 * a.cos()), h * (0.5 + 0.28 * a.sin()));
                    if (xf - cx).powi(2) + (yf - cy).powi(2) < (0.12 * w).powi(2) {
                        v = disc[c];
                    }
                }
                clamp_u8(v)
            })
        })
        .collect()
}

fn talking_head_audio(p: &SynthParams, rng: &mut SeededRng) -> Vec<i16> {
    let n = (p.seconds() * p.sample_rate as f64) as usize;
    let sr = p.sample_rate as f64;
    let f0 = rng.uniform_range(100.0, 200.0);
    let syllable = rng.uniform_range(3.0, 5.0);
    let phase = rng.uniform();
    let formant = rng.uniform_range(500.0, 900.0);
    let level = rng.uniform_range(0.7, 1.0);
    (0..n)
        .map(|i| {
            let t = i as f64 / sr;
            let env = 0.35 + 0.65 * (0.5 - 0.5 * (TAU * (syllable * t + phase)).cos());
            let pitch = f0 * (1.0 + 0.05 * (TAU * 0.7 * t).sin());
            let mut s = 0.0;
            for k in 1..=12 {
                let fk = pitch * k as f64;
                let shape = (-((fk - formant) / 400.0).powi(2)).exp() + 0.3 / k as f64;
                s += shape * (TAU * fk * t).sin();
            }
            let noise = rng.normal() * 0.01;
            ((s * env * level * 0.25 + noise) * 12_000.0).clamp(-32_000.0, 32_000.0) as i16
        })
        .collect()
}

fn dance_audio(p: &SynthParams, rng: &mut SeededRng) -> Vec<i16> {
    let n = (p.seconds() * p.sample_rate as f64) as usize;
    let sr = p.sample_rate as f64;
    let beat = 60.0 / rng.uniform_range(110.0, 140.0);
    let root = rng.uniform_range(440.0, 660.0);
    let offset = rng.uniform_range(0.0, beat);
    // sustained major triad over a kick on every beat
    let chord = [1.0, 1.25, 1.5];
    (0..n)
        .map(|i| {
            let t = i as f64 / sr;
            let within = (t + offset) % beat;
            let kick = (-within * 30.0).exp() * (TAU * 60.0 * within).sin();
            let hiss = rng.normal() * 0.02;
            let tone: f64 = chord.iter().map(|r| 0.3 * (TAU * root * r * t).sin()).sum();
            ((tone * 0.4 + kick * 0.5 + hiss) * 12_000.0).clamp(-32_000.0, 32_000.0) as i16
        })
        .collect()
}

/// One deterministic bundle of the given style.
pub fn synth_bundle(id: &str, style: SynthStyle, seed: u64, p: &SynthParams) -> SfvBundle {
    let mut rng = SeededRng::new(seed);
    let (frames, audio) = match style {
        SynthStyle::TalkingHead => {
            let f = talking_head_frames(p, &mut rng);
            (f, talking_head_audio(p, &mut rng))
        }
        SynthStyle::Dance => {
            let f = dance_frames(p, &mut rng);
            (f, dance_audio(p, &mut rng))
        }
    };
    let tags = style.hashtags();
    let a = rng.below(tags.len() as u64) as usize;
    let b = (a + 1 + rng.below(tags.len() as u64 - 1) as usize) % tags.len();
    SfvBundle {
        id: id.to_string(),
        frames,
        fps: (p.fps, 1),
        audio,
        sample_rate: p.sample_rate,
        manifest: Some(BundleManifest {
            id: id.to_string(),
            source: "synthetic".into(),
            label: Some(style.label()),
            hashtags: vec![tags[a].to_string(), tags[b].to_string()],
        }),
    }
}

/// `n` bundles alternating between the two styles, ids `synth_0000..`.
pub fn synth_corpus(n: usize, seed: u64, p: &SynthParams) -> Vec<SfvBundle> {
    (0..n)
        .map(|i| {
            let style = if i % 2 == 0 { SynthStyle::TalkingHead } else { SynthStyle::Dance };
            let s = SeededRng::derive(seed, i as u64).next_u64();
            synth_bundle(&format!("synth_{i:04}"), style, s, p)
        })
        .collect()
}

const ONSETS: [&str; 12] = ["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t"];
const NUCLEI: [&str; 5] = ["a", "e", "i", "o", "u"];

/// A made-up word for vocabulary rank `r`; distinct ranks give distinct
/// words. The trailing `x` keeps them clear of the stopword list.
fn pseudo_word(mut r: usize) -> String {
    let mut w = String::new();
    loop {
        w.push_str(ONSETS[r % ONSETS.len()]);
        r /= ONSETS.len();
        w.push_str(NUCLEI[r % NUCLEI.len()]);
        r /= NUCLEI.len();
        if r == 0 {
            w.push('x');
            return w;
        }
        r -= 1;
    }
}

/// Samples a vocabulary rank with a roughly Zipfian skew.
fn zipf_rank(rng: &mut SeededRng, vocab: usize) -> usize {
    let u = rng.uniform();
    ((vocab as f64).powf(u) - 1.0).floor() as usize % vocab
}

/// `n` articles of pseudo-words for retrieval tests and demos. Ids are
/// `art_00000..`; most articles carry a date in 2015..2024.
pub fn synth_articles(n: usize, vocab: usize, seed: u64) -> Vec<Article> {
    let mut rng = SeededRng::new(seed);
    let sources = [ArticleSource::Wikipedia, ArticleSource::Claimreview, ArticleSource::News, ArticleSource::Other];
    (0..n)
        .map(|i| {
            let title = synth_query(3, vocab, &mut rng).join(" ");
            let len = 20 + rng.below(60) as usize;
            let body = synth_query(len, vocab, &mut rng).join(" ");
            let source = sources[rng.below(4) as usize];
            let published_at = (rng.uniform() < 0.8).then(|| {
                format!("{}-{:02}-{:02}", 2015 + rng.below(10), 1 + rng.below(12), 1 + rng.below(28))
            });
            Article {
                id: format!("art_{i:05}"),
                title,
                body,
                source,
                published_at,
            }
        })
        .collect()
}

/// A query of `len` pseudo-words drawn like article text.
pub fn synth_query(len: usize, vocab: usize, rng: &mut SeededRng) -> Vec<String> {
    (0..len).map(|_| pseudo_word(zipf_rank(rng, vocab))).collect()
}
