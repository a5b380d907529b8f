//! Moment estimates from ensembles and their comparison with exact laws.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::chain::Ensemble;
use crate::error::{Error, Result};
use crate::gaussian_oracle::GaussianLaw;

/// Sample moments of an ensemble with standard errors.
///
/// `cov` is the unbiased sample covariance and
/// `second_moment = tr(cov) + ‖mean‖²`.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentSummary {
    pub n: usize,
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub second_moment: f64,
    pub se_mean: DVector<f64>,
    /// Normal-theory standard errors, `√((S_ii S_jj + S_ij²)/(n − 1))`.
    pub se_cov: DMatrix<f64>,
    /// Sample standard deviation of `‖x‖²` over `√n`.
    pub se_second_moment: f64,
}

/// Summarize `n × d` row-major samples. Sums run in row order.
pub fn summarize_samples(samples: &[f64], dim: usize) -> Result<MomentSummary> {
    if dim == 0 || !samples.len().is_multiple_of(dim) {
        return Err(Error::InvalidArgument(format!(
            "{} values do not form rows of length {dim}",
            samples.len()
        )));
    }
    let n = samples.len() / dim;
    if n < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 samples, got {n}")));
    }
    let nf = n as f64;
    let mut mean = DVector::zeros(dim);
    for row in samples.chunks(dim) {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean /= nf;

    let mut cov: DMatrix<f64> = DMatrix::zeros(dim, dim);
    let mut r2_sum = 0.0;
    let mut r2_sq = 0.0;
    for row in samples.chunks(dim) {
        for i in 0..dim {
            let ci = row[i] - mean[i];
            for j in 0..=i {
                cov[(i, j)] += ci * (row[j] - mean[j]);
            }
        }
        let r2: f64 = row.iter().map(|v| v * v).sum();
        r2_sum += r2;
        r2_sq += r2 * r2;
    }
    for i in 0..dim {
        for j in 0..=i {
            let v = cov[(i, j)] / (nf - 1.0);
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    let r2_mean = r2_sum / nf;
    let r2_var = ((r2_sq - nf * r2_mean * r2_mean) / (nf - 1.0)).max(0.0);

    let se_mean = DVector::from_iterator(dim, (0..dim).map(|i| (cov[(i, i)] / nf).sqrt()));
    let se_cov = DMatrix::from_fn(dim, dim, |i, j| {
        ((cov[(i, i)] * cov[(j, j)] + cov[(i, j)] * cov[(i, j)]) / (nf - 1.0)).sqrt()
    });
    let second_moment = cov.trace() + mean.norm_squared();
    Ok(MomentSummary { n, mean, cov, second_moment, se_mean, se_cov, se_second_moment: (r2_var / nf).sqrt() })
}

pub fn summarize(ensemble: &Ensemble) -> Result<MomentSummary> {
    summarize_samples(ensemble.states(), ensemble.dim())
}

/// W2 between two equal-size 1-D samples via the sorted coupling.
pub fn empirical_w2_1d(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch { expected: a.len(), got: b.len() });
    }
    if a.is_empty() {
        return Ok(0.0);
    }
    let mut sa = a.to_vec();
    let mut sb = b.to_vec();
    sa.sort_by(f64::total_cmp);
    sb.sort_by(f64::total_cmp);
    let ms: f64 = sa.iter().zip(&sb).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64;
    Ok(ms.sqrt())
}

/// `(estimate − exact) / SE` for every field of a [`MomentSummary`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ZScores {
    pub mean: Vec<f64>,
    /// Lower triangle of the covariance, row by row.
    pub cov: Vec<f64>,
    pub second_moment: f64,
}

impl ZScores {
    pub fn max_abs(&self) -> f64 {
        self.mean
            .iter()
            .chain(&self.cov)
            .chain(std::iter::once(&self.second_moment))
            .fold(0.0f64, |acc, z| acc.max(z.abs()))
    }
}

fn z(estimate: f64, exact: f64, se: f64) -> f64 {
    let diff = estimate - exact;
    if se > 0.0 {
        diff / se
    } else if diff == 0.0 {
        0.0
    } else {
        diff.signum() * f64::INFINITY
    }
}

pub fn z_scores_vs_oracle(s: &MomentSummary, law: &GaussianLaw) -> Result<ZScores> {
    let d = s.mean.len();
    if law.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, got: law.dim() });
    }
    let mean = (0..d).map(|i| z(s.mean[i], law.mean[i], s.se_mean[i])).collect();
    let mut cov = Vec::with_capacity(d * (d + 1) / 2);
    for i in 0..d {
        for j in 0..=i {
            cov.push(z(s.cov[(i, j)], law.cov[(i, j)], s.se_cov[(i, j)]));
        }
    }
    Ok(ZScores { mean, cov, second_moment: z(s.second_moment, law.second_moment(), s.se_second_moment) })
}
