//! Conventional generative-model metrics: inception score, kernel MMD and
//! Fréchet distance, computed over class probabilities or feature embeddings.

use serde::{Deserialize, Serialize};

use crate::numkit::{trace_sqrt_product, DenseMatrix};
use crate::{Error, Result};

const ROW_SUM_TOL: f64 = 1e-9;

/// Per-sample class-probability vectors, one row per sample.
#[derive(Debug, Clone)]
pub struct ProbMatrix {
    probs: DenseMatrix,
}

impl ProbMatrix {
    pub fn new(probs: DenseMatrix) -> Result<Self> {
        if probs.rows() == 0 || probs.cols() == 0 {
            return Err(Error::Input("probability matrix is empty".into()));
        }
        for i in 0..probs.rows() {
            let row = probs.row(i);
            if let Some(p) = row.iter().find(|p| **p < 0.0) {
                return Err(Error::Input(format!("row {i} has negative probability {p}")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::Input(format!("row {i} sums to {sum}, expected 1")));
            }
        }
        Ok(Self { probs })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(DenseMatrix::from_rows(rows)?)
    }

    pub fn n(&self) -> usize {
        self.probs.rows()
    }

    pub fn k(&self) -> usize {
        self.probs.cols()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.probs.row(i)
    }
}

/// `exp(mean_i KL(p(y|x_i) || p(y)))`, with `0 log 0 = 0`.
pub fn inception_score(p: &ProbMatrix) -> f64 {
    let (n, k) = (p.n(), p.k());
    let mut marginal = vec![0.0; k];
    for i in 0..n {
        for (m, v) in marginal.iter_mut().zip(p.row(i)) {
            *m += v;
        }
    }
    for m in &mut marginal {
        *m /= n as f64;
    }
    let mut kl_sum = 0.0;
    for i in 0..n {
        for (&pij, &m) in p.row(i).iter().zip(&marginal) {
            if pij > 0.0 {
                kl_sum += pij * (pij.ln() - m.ln());
            }
        }
    }
    (kl_sum / n as f64).exp()
}

/// Embedded samples together with their sample mean and covariance.
#[derive(Debug, Clone)]
pub struct FeatureSet {
    pub features: DenseMatrix,
    pub mu: Vec<f64>,
    pub sigma: DenseMatrix,
}

impl FeatureSet {
    pub fn new(features: DenseMatrix) -> Result<Self> {
        let (mu, sigma) = moments(&features)?;
        Ok(Self { features, mu, sigma })
    }

    pub fn n(&self) -> usize {
        self.features.rows()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }
}

/// Sample mean and unbiased (`1/(n-1)`) covariance of the rows.
pub fn moments(features: &DenseMatrix) -> Result<(Vec<f64>, DenseMatrix)> {
    let (n, d) = (features.rows(), features.cols());
    if n < 2 {
        return Err(Error::Input(format!("moments need at least 2 samples, got {n}")));
    }
    let mut mu = vec![0.0; d];
    for i in 0..n {
        for (m, v) in mu.iter_mut().zip(features.row(i)) {
            *m += v;
        }
    }
    for m in &mut mu {
        *m /= n as f64;
    }
    let mut sigma = DenseMatrix::zeros(d, d);
    let mut centered = vec![0.0; d];
    for i in 0..n {
        for ((c, v), m) in centered.iter_mut().zip(features.row(i)).zip(&mu) {
            *c = v - m;
        }
        for a in 0..d {
            for b in a..d {
                sigma[(a, b)] += centered[a] * centered[b];
            }
        }
    }
    let denom = (n - 1) as f64;
    for a in 0..d {
        for b in a..d {
            let v = sigma[(a, b)] / denom;
            sigma[(a, b)] = v;
            sigma[(b, a)] = v;
        }
    }
    Ok((mu, sigma))
}

/// RBF kernel bandwidth: `k(a, b) = exp(-|a-b|² / (2 σ²))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bandwidth {
    Fixed(f64),
    /// σ is the median Euclidean distance over all distinct pairs of the
    /// pooled samples; falls back to 1 when that median is zero.
    Median,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn rbf_kernel(a: &[f64], b: &[f64], sigma: f64) -> f64 {
    (-sq_dist(a, b) / (2.0 * sigma * sigma)).exp()
}

fn median_sigma(x: &DenseMatrix, y: &DenseMatrix) -> f64 {
    let pooled: Vec<&[f64]> = (0..x.rows())
        .map(|i| x.row(i))
        .chain((0..y.rows()).map(|i| y.row(i)))
        .collect();
    let mut d: Vec<f64> = Vec::with_capacity(pooled.len() * pooled.len() / 2);
    for i in 0..pooled.len() {
        for j in i + 1..pooled.len() {
            d.push(sq_dist(pooled[i], pooled[j]).sqrt());
        }
    }
    d.sort_by(f64::total_cmp);
    let m = d.len();
    let med = if m % 2 == 1 { d[m / 2] } else { 0.5 * (d[m / 2 - 1] + d[m / 2]) };
    if med > 0.0 {
        med
    } else {
        1.0
    }
}

fn resolve_sigma(x: &DenseMatrix, y: &DenseMatrix, bandwidth: Bandwidth) -> Result<f64> {
    match bandwidth {
        Bandwidth::Fixed(s) if s.is_finite() && s > 0.0 => Ok(s),
        Bandwidth::Fixed(s) => Err(Error::Input(format!("bandwidth must be positive, got {s}"))),
        Bandwidth::Median => Ok(median_sigma(x, y)),
    }
}

fn within_mean(x: &DenseMatrix, sigma: f64) -> f64 {
    let n = x.rows();
    let mut s = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            s += rbf_kernel(x.row(i), x.row(j), sigma);
        }
    }
    2.0 * s / (n * (n - 1)) as f64
}

/// Unbiased squared MMD between two samples. May be negative; never clamped.
pub fn mmd2_unbiased(x: &FeatureSet, y: &FeatureSet, bandwidth: Bandwidth) -> Result<f64> {
    mmd2_unbiased_raw(&x.features, &y.features, bandwidth)
}

/// [`mmd2_unbiased`] on bare sample matrices.
pub fn mmd2_unbiased_raw(x: &DenseMatrix, y: &DenseMatrix, bandwidth: Bandwidth) -> Result<f64> {
    if x.rows() < 2 || y.rows() < 2 {
        return Err(Error::Input(format!(
            "MMD needs at least 2 samples per set, got {} and {}",
            x.rows(),
            y.rows()
        )));
    }
    if x.cols() != y.cols() {
        return Err(Error::Input(format!("feature dimensions differ: {} vs {}", x.cols(), y.cols())));
    }
    let sigma = resolve_sigma(x, y, bandwidth)?;
    let mut cross = 0.0;
    for i in 0..x.rows() {
        for j in 0..y.rows() {
            cross += rbf_kernel(x.row(i), y.row(j), sigma);
        }
    }
    cross /= (x.rows() * y.rows()) as f64;
    Ok(within_mean(x, sigma) + within_mean(y, sigma) - 2.0 * cross)
}

/// Fréchet distance between the Gaussian moments of two feature sets.
pub fn fid(a: &FeatureSet, b: &FeatureSet) -> Result<f64> {
    fid_from_moments(&a.mu, &a.sigma, &b.mu, &b.sigma)
}

/// `|μ₁-μ₂|² + Tr(Σ₁ + Σ₂) - 2 Tr((Σ₁^½ Σ₂ Σ₁^½)^½)`.
pub fn fid_from_moments(mu1: &[f64], s1: &DenseMatrix, mu2: &[f64], s2: &DenseMatrix) -> Result<f64> {
    let d = mu1.len();
    if mu2.len() != d || s1.rows() != d || s1.cols() != d || s2.rows() != d || s2.cols() != d {
        return Err(Error::Input(format!(
            "moment dimensions differ: mu {} vs {}, sigma {}x{} vs {}x{}",
            d,
            mu2.len(),
            s1.rows(),
            s1.cols(),
            s2.rows(),
            s2.cols()
        )));
    }
    let mean_term: f64 = mu1.iter().zip(mu2).map(|(a, b)| (a - b) * (a - b)).sum();
    let cross = trace_sqrt_product(s1, s2)?;
    Ok(mean_term + s1.trace() + s2.trace() - 2.0 * cross)
}
