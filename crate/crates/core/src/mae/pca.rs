//! Two-component PCA by power iteration with deflation.

use super::{Embedding, Modality};
use crate::rng::SeededRng;
use serde::Serialize;
use std::io::Write;
use std::path::Path;

const TOL: f64 = 1e-9;
const MAX_ITERS: usize = 10_000;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum PcaError {
    #[error("pca needs at least 3 points, got {0}")]
    TooFew(usize),
    #[error("points have differing dimensions ({0} vs {1})")]
    DimMismatch(usize, usize),
    #[error("all points are identical")]
    DegenerateRank,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Pca2d {
    /// Centered data projected on the two components.
    pub points: Vec<[f64; 2]>,
    /// Covariance eigenvalues (sample variance along each component).
    pub explained_variance: [f64; 2],
    /// Fraction of the total variance per component.
    pub explained_ratio: [f64; 2],
    pub components: [Vec<f64>; 2],
    pub mean: Vec<f64>,
    pub iterations: [usize; 2],
}

fn mat_vec(c: &[f64], d: usize, v: &[f64]) -> Vec<f64> {
    c.chunks(d).map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum()).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = dot(v, v).sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

/// Makes the largest-magnitude entry positive.
fn fix_sign(v: &mut [f64]) {
    let big = v.iter().copied().fold(0f64, |m, x| if x.abs() > m.abs() { x } else { m });
    if big < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

fn orthogonalize(v: &mut [f64], against: &[&[f64]]) {
    for u in against {
        let p = dot(v, u);
        v.iter_mut().zip(u.iter()).for_each(|(x, y)| *x -= p * y);
    }
}

/// Dominant eigenpair of symmetric PSD `c`, restricted to the complement of
/// `against`. Returns `(eigenvalue, vector, iterations)`.
fn power(c: &[f64], d: usize, against: &[&[f64]], scale: f64, start: Vec<f64>) -> (f64, Vec<f64>, usize) {
    let mut v = start;
    orthogonalize(&mut v, against);
    normalize(&mut v);
    let mut iters = 0;
    while iters < MAX_ITERS {
        iters += 1;
        let mut w = mat_vec(c, d, &v);
        orthogonalize(&mut w, against);
        let norm = normalize(&mut w);
        if norm <= scale * 1e-14 {
            // the remaining spectrum is numerically zero
            return (0.0, v, iters);
        }
        if dot(&w, &v) < 0.0 {
            w.iter_mut().for_each(|x| *x = -*x);
        }
        let delta = w.iter().zip(&v).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        v = w;
        if delta < TOL {
            break;
        }
    }
    let lambda = dot(&v, &mat_vec(c, d, &v)).max(0.0);
    (lambda, v, iters)
}

/// PCA of the rows of `data`.
pub fn pca_2d_rows(data: &[Vec<f64>]) -> Result<Pca2d, PcaError> {
    let n = data.len();
    if n < 3 {
        return Err(PcaError::TooFew(n));
    }
    let d = data[0].len();
    if let Some(bad) = data.iter().find(|r| r.len() != d) {
        return Err(PcaError::DimMismatch(d, bad.len()));
    }
    let mean: Vec<f64> = (0..d).map(|j| data.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
    let centered: Vec<Vec<f64>> = data
        .iter()
        .map(|r| r.iter().zip(&mean).map(|(x, m)| x - m).collect())
        .collect();
    let mut cov = vec![0f64; d * d];
    for r in &centered {
        for i in 0..d {
            for j in 0..d {
                cov[i * d + j] += r[i] * r[j];
            }
        }
    }
    cov.iter_mut().for_each(|c| *c /= (n - 1) as f64);
    let trace: f64 = (0..d).map(|i| cov[i * d + i]).sum();
    if trace <= 0.0 {
        return Err(PcaError::DegenerateRank);
    }
    let mut rng = SeededRng::new(0x9ca);
    let mut start = || (0..d).map(|_| rng.normal()).collect::<Vec<f64>>();
    let (l1, mut v1, i1) = power(&cov, d, &[], trace, start());
    fix_sign(&mut v1);
    let mut deflated = cov.clone();
    for i in 0..d {
        for j in 0..d {
            deflated[i * d + j] -= l1 * v1[i] * v1[j];
        }
    }
    let (l2, mut v2, i2) = if d >= 2 {
        power(&deflated, d, &[&v1], trace, start())
    } else {
        (0.0, vec![0.0; d], 0)
    };
    if normalize(&mut v2) == 0.0 && d >= 2 {
        // pick any unit vector orthogonal to the first component
        for k in 0..d {
            let mut e = vec![0.0; d];
            e[k] = 1.0;
            orthogonalize(&mut e, &[&v1]);
            if normalize(&mut e) > 1e-6 {
                v2 = e;
                break;
            }
        }
    }
    fix_sign(&mut v2);
    let l2 = l2.min(l1);
    let points = centered.iter().map(|r| [dot(r, &v1), dot(r, &v2)]).collect();
    Ok(Pca2d {
        points,
        explained_variance: [l1, l2],
        explained_ratio: [l1 / trace, l2 / trace],
        components: [v1, v2],
        mean,
        iterations: [i1, i2],
    })
}

/// PCA of embedding vectors (all of one kind).
pub fn pca_2d(embs: &[Embedding]) -> Result<Pca2d, PcaError> {
    let rows: Vec<Vec<f64>> = embs
        .iter()
        .map(|e| e.vector.iter().map(|&v| v as f64).collect())
        .collect();
    pca_2d_rows(&rows)
}

#[derive(Serialize)]
struct Sidecar<'a> {
    modality: Modality,
    n_points: usize,
    dim: usize,
    explained_variance: [f64; 2],
    explained_ratio: [f64; 2],
    iterations: [usize; 2],
    source_ids: &'a [String],
}

/// Writes `x,y,label,modality` rows to `csv` and a JSON sidecar next to it
/// (same stem, `.json`).
pub fn write_pca_csv(
    csv: &Path,
    pca: &Pca2d,
    labels: &[String],
    source_ids: &[String],
    modality: Modality,
) -> std::io::Result<()> {
    assert_eq!(labels.len(), pca.points.len(), "one label per point");
    if let Some(parent) = csv.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut out = std::io::BufWriter::new(std::fs::File::create(csv)?);
    writeln!(out, "x,y,label,modality")?;
    for (p, label) in pca.points.iter().zip(labels) {
        writeln!(out, "{},{},{},{}", p[0], p[1], label, modality)?;
    }
    out.flush()?;
    let side = Sidecar {
        modality,
        n_points: pca.points.len(),
        dim: pca.mean.len(),
        explained_variance: pca.explained_variance,
        explained_ratio: pca.explained_ratio,
        iterations: pca.iterations,
        source_ids,
    };
    let mut json = serde_json::to_vec_pretty(&side).map_err(std::io::Error::other)?;
    json.push(b'\n');
    std::fs::write(csv.with_extension("json"), json)
}
