//! Exact law propagation for quadratic potentials.
//!
//! Under `U(x) = ½xᵀAx` an unadjusted Langevin step is an affine map plus
//! independent Gaussian noise, so a Gaussian initial law stays Gaussian and
//! every divergence along the run has a closed form.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::potentials::{Potential, PotentialKind};
use crate::quadrature;

/// Symmetric positive-definite precision matrix `A` with its spectrum.
#[derive(Debug, Clone)]
pub struct QuadraticTarget {
    precision: DMatrix<f64>,
    eigenvalues: DVector<f64>,
    eigenvectors: DMatrix<f64>,
    diagonal: bool,
}

impl QuadraticTarget {
    pub fn new(precision: DMatrix<f64>) -> Result<Self> {
        // reuse the potential's validation of symmetry and definiteness
        Potential::quadratic_full(precision.clone())?;
        let diagonal = is_diagonal(&precision);
        let (eigenvalues, eigenvectors) = if diagonal {
            (precision.diagonal(), DMatrix::identity(precision.nrows(), precision.nrows()))
        } else {
            let eig = SymmetricEigen::new(precision.clone());
            (eig.eigenvalues, eig.eigenvectors)
        };
        Ok(Self { precision, eigenvalues, eigenvectors, diagonal })
    }

    pub fn diagonal(a: &[f64]) -> Result<Self> {
        Potential::quadratic_diagonal(a.to_vec())?;
        Self::new(DMatrix::from_diagonal(&DVector::from_column_slice(a)))
    }

    pub fn from_potential(p: &Potential) -> Result<Self> {
        match p.kind() {
            PotentialKind::QuadraticDiagonal(a) => Self::diagonal(a),
            PotentialKind::QuadraticFull(a) => Self::new(a.clone()),
            other => Err(Error::Unsupported(format!(
                "closed-form propagation needs a quadratic potential, got {}",
                other.name()
            ))),
        }
    }

    pub fn precision(&self) -> &DMatrix<f64> {
        &self.precision
    }

    pub fn dim(&self) -> usize {
        self.precision.nrows()
    }

    pub fn m(&self) -> f64 {
        self.eigenvalues.min()
    }

    pub fn l(&self) -> f64 {
        self.eigenvalues.max()
    }

    pub fn is_diagonal(&self) -> bool {
        self.diagonal
    }

    /// `p* = N(0, A⁻¹)`.
    pub fn target_law(&self) -> GaussianLaw {
        self.spectral_law(|lambda| 1.0 / lambda)
    }

    /// Zero-mean law with covariance `Q f(Λ) Qᵀ`.
    fn spectral_law(&self, f: impl Fn(f64) -> f64) -> GaussianLaw {
        let d = self.dim();
        let diag = DVector::from_iterator(d, self.eigenvalues.iter().map(|&l| f(l)));
        let cov = if self.diagonal {
            DMatrix::from_diagonal(&diag)
        } else {
            let q = &self.eigenvectors;
            symmetrize(q * DMatrix::from_diagonal(&diag) * q.transpose())
        };
        GaussianLaw { mean: DVector::zeros(d), cov }
    }

    fn check_stable(&self, h: f64) -> Result<()> {
        if !(h.is_finite() && h > 0.0) {
            return Err(Error::InvalidArgument(format!("step size must be positive, got {h}")));
        }
        if h * self.l() >= 2.0 {
            return Err(Error::Unstable { h, curvature: self.l() });
        }
        Ok(())
    }

    fn check_dim(&self, law: &GaussianLaw) -> Result<()> {
        if law.dim() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: law.dim() });
        }
        Ok(())
    }
}

/// Gaussian law `N(mean, cov)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianLaw {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl GaussianLaw {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        if cov.nrows() != mean.len() || cov.ncols() != mean.len() {
            return Err(Error::DimensionMismatch { expected: mean.len(), got: cov.nrows() });
        }
        let scale = cov.amax().max(1.0);
        for i in 0..cov.nrows() {
            for j in 0..i {
                if (cov[(i, j)] - cov[(j, i)]).abs() > 1e-12 * scale {
                    return Err(Error::InvalidArgument("covariance is not symmetric".into()));
                }
            }
        }
        if Cholesky::new(cov.clone()).is_none() {
            return Err(Error::SingularCovariance);
        }
        Ok(Self { mean, cov })
    }

    pub fn diagonal(mean: &[f64], var: &[f64]) -> Result<Self> {
        Self::new(DVector::from_column_slice(mean), DMatrix::from_diagonal(&DVector::from_column_slice(var)))
    }

    /// `N(0, I/m)`.
    pub fn isotropic(dim: usize, var: f64) -> Result<Self> {
        Self::diagonal(&vec![0.0; dim], &vec![var; dim])
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn is_diagonal(&self) -> bool {
        is_diagonal(&self.cov)
    }

    /// `E‖x‖² = tr(cov) + ‖mean‖²`.
    pub fn second_moment(&self) -> f64 {
        self.cov.trace() + self.mean.norm_squared()
    }
}

fn is_diagonal(m: &DMatrix<f64>) -> bool {
    (0..m.nrows()).all(|i| (0..m.ncols()).all(|j| i == j || m[(i, j)] == 0.0))
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

/// Law after one step: `N((I−hA)μ, (I−hA)Σ(I−hA)ᵀ + 2hI)`.
pub fn ula_step_law(law: &GaussianLaw, target: &QuadraticTarget, h: f64) -> Result<GaussianLaw> {
    target.check_stable(h)?;
    target.check_dim(law)?;
    Ok(step_unchecked(law, target, h))
}

fn step_unchecked(law: &GaussianLaw, target: &QuadraticTarget, h: f64) -> GaussianLaw {
    let d = target.dim();
    if target.diagonal && law.is_diagonal() {
        let mut mean = law.mean.clone();
        let mut cov = law.cov.clone();
        for i in 0..d {
            let r = 1.0 - h * target.precision[(i, i)];
            mean[i] *= r;
            cov[(i, i)] = r * r * cov[(i, i)] + 2.0 * h;
        }
        return GaussianLaw { mean, cov };
    }
    let contraction = DMatrix::identity(d, d) - &target.precision * h;
    let mean = &contraction * &law.mean;
    let cov = &contraction * &law.cov * contraction.transpose() + DMatrix::identity(d, d) * (2.0 * h);
    GaussianLaw { mean, cov: symmetrize(cov) }
}

/// Law after `k` steps in closed form, via the spectral decomposition of
/// `I − hA`: `μ_k = M^k μ_0`, `Σ_k = M^k Σ_0 M^k + 2h Σ_{j<k} M^{2j}`.
pub fn ula_law_after(law: &GaussianLaw, target: &QuadraticTarget, h: f64, k: u64) -> Result<GaussianLaw> {
    target.check_stable(h)?;
    target.check_dim(law)?;
    let q = &target.eigenvectors;
    let d = target.dim();
    let rho: Vec<f64> = target.eigenvalues.iter().map(|l| 1.0 - h * l).collect();
    let power: Vec<f64> = rho.iter().map(|r| r.powi(k as i32)).collect();
    let geometric: Vec<f64> = rho
        .iter()
        .zip(&power)
        .map(|(r, pk)| {
            let r2 = r * r;
            if (1.0 - r2).abs() < 1e-300 {
                k as f64
            } else {
                (1.0 - pk * pk) / (1.0 - r2)
            }
        })
        .collect();
    let mean_rot = q.transpose() * &law.mean;
    let cov_rot = q.transpose() * &law.cov * q;
    let mean_k = DVector::from_iterator(d, (0..d).map(|i| power[i] * mean_rot[i]));
    let cov_k = DMatrix::from_fn(d, d, |i, j| {
        power[i] * cov_rot[(i, j)] * power[j] + if i == j { 2.0 * h * geometric[i] } else { 0.0 }
    });
    Ok(GaussianLaw { mean: q * mean_k, cov: symmetrize(q * cov_k * q.transpose()) })
}

/// Stationary law `π_h` of the step-`h` chain: `N(0, Q diag(2/(λ(2 − hλ))) Qᵀ)`.
pub fn stationary_law(target: &QuadraticTarget, h: f64) -> Result<GaussianLaw> {
    target.check_stable(h)?;
    Ok(target.spectral_law(|l| 2.0 / (l * (2.0 - h * l))))
}

/// Law of the exact Langevin diffusion at time `t` (diagonal case only):
/// `μ_i(t) = e^{−a_i t} μ_i(0)`, `v_i(t) = 1/a_i + (v_i(0) − 1/a_i) e^{−2 a_i t}`.
pub fn exact_flow_law(target: &QuadraticTarget, init: &GaussianLaw, t: f64) -> Result<GaussianLaw> {
    if !target.diagonal || !init.is_diagonal() {
        return Err(Error::Unsupported("exact flow is only available for diagonal precision and covariance".into()));
    }
    if !(t >= 0.0) {
        return Err(Error::InvalidArgument(format!("time must be non-negative, got {t}")));
    }
    target.check_dim(init)?;
    let mut out = init.clone();
    for i in 0..target.dim() {
        let a = target.precision[(i, i)];
        let decay = (-a * t).exp();
        out.mean[i] *= decay;
        out.cov[(i, i)] = 1.0 / a + (init.cov[(i, i)] - 1.0 / a) * decay * decay;
    }
    Ok(out)
}

fn check_pair(p: &GaussianLaw, q: &GaussianLaw) -> Result<()> {
    if p.dim() != q.dim() {
        return Err(Error::DimensionMismatch { expected: p.dim(), got: q.dim() });
    }
    Ok(())
}

/// `KL(p ‖ q)` in nats.
pub fn kl_gaussian(p: &GaussianLaw, q: &GaussianLaw) -> Result<f64> {
    check_pair(p, q)?;
    let d = p.dim();
    if p.is_diagonal() && q.is_diagonal() {
        let mut acc = 0.0;
        for i in 0..d {
            let (vp, vq) = (p.cov[(i, i)], q.cov[(i, i)]);
            if !(vp > 0.0 && vq > 0.0) {
                return Err(Error::SingularCovariance);
            }
            // r − 1 − ln r written to stay accurate near r = 1
            let x = (vp - vq) / vq;
            let dm = p.mean[i] - q.mean[i];
            acc += (x - x.ln_1p()) + dm * dm / vq;
        }
        return Ok((0.5 * acc).max(0.0));
    }
    let lp = Cholesky::new(p.cov.clone()).ok_or(Error::SingularCovariance)?.l();
    let lq = Cholesky::new(q.cov.clone()).ok_or(Error::SingularCovariance)?;
    let lq_l = lq.l();
    let solved = lq_l.solve_lower_triangular(&lp).ok_or(Error::SingularCovariance)?;
    let trace = solved.norm_squared();
    let dm = &q.mean - &p.mean;
    let maha = lq_l.solve_lower_triangular(&dm).ok_or(Error::SingularCovariance)?.norm_squared();
    let logdet_q: f64 = lq_l.diagonal().iter().map(|v| 2.0 * v.ln()).sum();
    let logdet_p: f64 = lp.diagonal().iter().map(|v| 2.0 * v.ln()).sum();
    Ok((0.5 * (trace + maha - d as f64 + logdet_q - logdet_p)).max(0.0))
}

fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m.clone());
    let root = DMatrix::from_diagonal(&eig.eigenvalues.map(|v| v.max(0.0).sqrt()));
    &eig.eigenvectors * root * eig.eigenvectors.transpose()
}

/// 2-Wasserstein distance (Bures formula).
pub fn w2_gaussian(p: &GaussianLaw, q: &GaussianLaw) -> Result<f64> {
    check_pair(p, q)?;
    let shift = (&p.mean - &q.mean).norm_squared();
    if p.is_diagonal() && q.is_diagonal() {
        let spread: f64 = (0..p.dim())
            .map(|i| {
                let s = p.cov[(i, i)].sqrt() - q.cov[(i, i)].sqrt();
                s * s
            })
            .sum();
        return Ok((shift + spread).sqrt());
    }
    for c in [&p.cov, &q.cov] {
        if Cholesky::new(c.clone()).is_none() {
            return Err(Error::SingularCovariance);
        }
    }
    let root_q = psd_sqrt(&q.cov);
    let inner = symmetrize(&root_q * &p.cov * &root_q);
    let cross: f64 = SymmetricEigen::new(inner).eigenvalues.iter().map(|v| v.max(0.0).sqrt()).sum();
    Ok((shift + p.cov.trace() + q.cov.trace() - 2.0 * cross).max(0.0).sqrt())
}

fn normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    let z = x - mean;
    (-0.5 * z * z / var).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
}

/// Points where two 1-D normal densities cross.
fn density_crossings(m1: f64, v1: f64, m2: f64, v2: f64) -> Vec<f64> {
    // ln p1 − ln p2 = a x² + b x + c
    let a = 0.5 * (1.0 / v2 - 1.0 / v1);
    let b = m1 / v1 - m2 / v2;
    let c = 0.5 * (m2 * m2 / v2 - m1 * m1 / v1) + 0.5 * (v2 / v1).ln();
    let mut roots = Vec::new();
    if a.abs() < 1e-300 {
        if b != 0.0 {
            roots.push(-c / b);
        }
    } else {
        let disc = b * b - 4.0 * a * c;
        if disc >= 0.0 {
            let s = disc.sqrt();
            let q = -0.5 * (b + b.signum() * s);
            roots.push(q / a);
            if q != 0.0 {
                roots.push(c / q);
            }
        }
    }
    roots.retain(|r| r.is_finite());
    roots.sort_by(f64::total_cmp);
    roots
}

/// `½∫|p − q|` for 1-D laws, by adaptive quadrature split at the density
/// crossings.
pub fn tv_gaussian_1d(p: &GaussianLaw, q: &GaussianLaw) -> Result<f64> {
    check_pair(p, q)?;
    if p.dim() != 1 {
        return Err(Error::Unsupported("total variation is only available in one dimension".into()));
    }
    let (m1, v1, m2, v2) = (p.mean[0], p.cov[(0, 0)], q.mean[0], q.cov[(0, 0)]);
    if !(v1 > 0.0 && v2 > 0.0) {
        return Err(Error::SingularCovariance);
    }
    if m1 == m2 && v1 == v2 {
        return Ok(0.0);
    }
    let s = v1.max(v2).sqrt();
    let lo = m1.min(m2) - 40.0 * s;
    let hi = m1.max(m2) + 40.0 * s;
    let mut cuts = vec![lo];
    cuts.extend(density_crossings(m1, v1, m2, v2).into_iter().filter(|r| *r > lo && *r < hi));
    cuts.push(hi);
    let f = |x: f64| (normal_pdf(x, m1, v1) - normal_pdf(x, m2, v2)).abs();
    let pieces = (cuts.len() - 1) as f64;
    let total: f64 = cuts.windows(2).map(|w| quadrature::integrate(f, w[0], w[1], 1e-11 / pieces)).sum();
    Ok((0.5 * total).clamp(0.0, 1.0))
}

/// Relative Fisher information `E_p‖∇log(p/p*)‖²` against `p* = N(0, A⁻¹)`:
/// `tr((A − Σ⁻¹)Σ(A − Σ⁻¹)) + ‖Aμ‖²`.
pub fn fisher_info_relative(p: &GaussianLaw, target: &QuadraticTarget) -> Result<f64> {
    target.check_dim(p)?;
    let a = &target.precision;
    if target.diagonal && p.is_diagonal() {
        let mut acc = 0.0;
        for i in 0..p.dim() {
            let v = p.cov[(i, i)];
            if !(v > 0.0) {
                return Err(Error::SingularCovariance);
            }
            let ai = a[(i, i)];
            let b = ai - 1.0 / v;
            let am = ai * p.mean[i];
            acc += b * b * v + am * am;
        }
        return Ok(acc);
    }
    let inv = Cholesky::new(p.cov.clone()).ok_or(Error::SingularCovariance)?.inverse();
    let b = a - inv;
    let trace = (&b * &p.cov * b.transpose()).trace();
    Ok(trace.max(0.0) + (a * &p.mean).norm_squared())
}

/// KL to `p*` after each of `0..=k` steps from `init`.
pub fn kl_trajectory(target: &QuadraticTarget, init: &GaussianLaw, h: f64, k: u64) -> Result<Vec<f64>> {
    target.check_stable(h)?;
    target.check_dim(init)?;
    let star = target.target_law();
    let mut law = init.clone();
    let mut out = Vec::with_capacity(k as usize + 1);
    out.push(kl_gaussian(&law, &star)?);
    for _ in 0..k {
        law = step_unchecked(&law, target, h);
        out.push(kl_gaussian(&law, &star)?);
    }
    Ok(out)
}

/// Row of an exact trajectory, serialized as `step,kl,w2,fisher,second_moment`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleRow {
    pub step: u64,
    pub kl: f64,
    pub w2: f64,
    pub fisher: f64,
    pub second_moment: f64,
}

/// Full exact trajectory, recording step 0, every `record_every`-th step
/// and step `k`. Also returns the final law.
pub fn trajectory(
    target: &QuadraticTarget,
    init: &GaussianLaw,
    h: f64,
    k: u64,
    record_every: u64,
) -> Result<(Vec<OracleRow>, GaussianLaw)> {
    target.check_stable(h)?;
    target.check_dim(init)?;
    if record_every == 0 {
        return Err(Error::InvalidArgument("record_every must be at least 1".into()));
    }
    let star = target.target_law();
    let row = |step: u64, law: &GaussianLaw| -> Result<OracleRow> {
        Ok(OracleRow {
            step,
            kl: kl_gaussian(law, &star)?,
            w2: w2_gaussian(law, &star)?,
            fisher: fisher_info_relative(law, target)?,
            second_moment: law.second_moment(),
        })
    };
    let mut law = init.clone();
    let mut rows = vec![row(0, &law)?];
    for i in 1..=k {
        law = step_unchecked(&law, target, h);
        if i % record_every == 0 || i == k {
            rows.push(row(i, &law)?);
        }
    }
    Ok((rows, law))
}
