//! Target potentials `U = -log p* + C` with certified curvature bounds.
//!
//! Every built-in kind is normalized so that the minimizer sits at the origin
//! and `U(0) = 0`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise;

pub type ValueFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type GradientFn = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

/// Caller-supplied potential. Its constants are taken on trust.
#[derive(Clone)]
pub struct CustomPotential {
    pub value: ValueFn,
    pub gradient: GradientFn,
}

impl fmt::Debug for CustomPotential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("CustomPotential { .. }")
    }
}

#[derive(Debug, Clone)]
pub enum PotentialKind {
    /// `U(x) = ½ Σ a_i x_i²`
    QuadraticDiagonal(Vec<f64>),
    /// `U(x) = ½ xᵀ A x` with `A` symmetric positive definite.
    QuadraticFull(DMatrix<f64>),
    /// Coordinatewise Huber loss with threshold `delta`, summed.
    Huber { delta: f64 },
    Custom(CustomPotential),
}

impl PotentialKind {
    pub fn name(&self) -> &'static str {
        match self {
            PotentialKind::QuadraticDiagonal(_) => "quadratic-diagonal",
            PotentialKind::QuadraticFull(_) => "quadratic-full",
            PotentialKind::Huber { .. } => "huber",
            PotentialKind::Custom(_) => "custom",
        }
    }
}

/// A log-concave target with gradient access and constants `(m, L, d)`.
#[derive(Debug, Clone)]
pub struct Potential {
    kind: PotentialKind,
    m: f64,
    l: f64,
    dim: usize,
}

/// Serializable description of a built-in potential: a kind string plus a
/// flat parameter array.
///
/// * `quadratic-diagonal`: `params` are the diagonal entries `a_i`.
/// * `quadratic-full`: `params` is the row-major `d × d` matrix.
/// * `huber`: `params = [delta]`, dimension from `dim` (default 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialSpec {
    pub kind: String,
    pub params: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
}

impl Potential {
    pub fn quadratic_diagonal(a: Vec<f64>) -> Result<Self> {
        if a.is_empty() {
            return Err(Error::InvalidPotential("empty diagonal".into()));
        }
        if let Some(bad) = a.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::InvalidPotential(format!(
                "diagonal entries must be positive, got {bad}"
            )));
        }
        let m = a.iter().copied().fold(f64::INFINITY, f64::min);
        let l = a.iter().copied().fold(0.0, f64::max);
        let dim = a.len();
        Ok(Self { kind: PotentialKind::QuadraticDiagonal(a), m, l, dim })
    }

    pub fn quadratic_full(a: DMatrix<f64>) -> Result<Self> {
        if a.nrows() == 0 || a.nrows() != a.ncols() {
            return Err(Error::InvalidPotential(format!(
                "matrix must be square and non-empty, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidPotential("matrix has non-finite entries".into()));
        }
        let scale = a.amax().max(1.0);
        for i in 0..a.nrows() {
            for j in 0..i {
                if (a[(i, j)] - a[(j, i)]).abs() > 1e-12 * scale {
                    return Err(Error::InvalidPotential(format!(
                        "matrix is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        let eig = SymmetricEigen::new(a.clone());
        let m = eig.eigenvalues.min();
        let l = eig.eigenvalues.max();
        if m <= 0.0 {
            return Err(Error::InvalidPotential(format!(
                "matrix is not positive definite (smallest eigenvalue {m})"
            )));
        }
        let dim = a.nrows();
        Ok(Self { kind: PotentialKind::QuadraticFull(a), m, l, dim })
    }

    pub fn huber(delta: f64, dim: usize) -> Result<Self> {
        if !(delta.is_finite() && delta > 0.0) {
            return Err(Error::InvalidPotential(format!("huber threshold must be > 0, got {delta}")));
        }
        if dim == 0 {
            return Err(Error::InvalidPotential("dimension must be positive".into()));
        }
        Ok(Self { kind: PotentialKind::Huber { delta }, m: 0.0, l: 1.0, dim })
    }

    pub fn custom(dim: usize, m: f64, l: f64, value: ValueFn, gradient: GradientFn) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidPotential("dimension must be positive".into()));
        }
        check_constants(m, l)?;
        Ok(Self { kind: PotentialKind::Custom(CustomPotential { value, gradient }), m, l, dim })
    }

    pub fn from_spec(spec: &PotentialSpec) -> Result<Self> {
        match spec.kind.as_str() {
            "quadratic-diagonal" => Self::quadratic_diagonal(spec.params.clone()),
            "quadratic-full" => {
                let n = spec.params.len();
                let d = (n as f64).sqrt().round() as usize;
                if d * d != n {
                    return Err(Error::InvalidPotential(format!(
                        "quadratic-full needs d*d parameters, got {n}"
                    )));
                }
                Self::quadratic_full(DMatrix::from_row_slice(d, d, &spec.params))
            }
            "huber" => match spec.params.as_slice() {
                [delta] => Self::huber(*delta, spec.dim.unwrap_or(1)),
                _ => Err(Error::InvalidPotential("huber takes exactly one parameter (delta)".into())),
            },
            "custom" => Err(Error::InvalidPotential(
                "custom potentials are only available through the library API".into(),
            )),
            other => Err(Error::InvalidPotential(format!("unknown kind '{other}'"))),
        }
    }

    /// Replace the certified constants, e.g. to probe a deliberately wrong
    /// declaration with [`Potential::validate_constants`].
    pub fn with_declared_constants(mut self, m: f64, l: f64) -> Result<Self> {
        check_constants(m, l)?;
        self.m = m;
        self.l = l;
        Ok(self)
    }

    pub fn kind(&self) -> &PotentialKind {
        &self.kind
    }

    /// Strong-convexity constant.
    pub fn m(&self) -> f64 {
        self.m
    }

    /// Gradient-Lipschitz constant.
    pub fn l(&self) -> f64 {
        self.l
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Hessian of a quadratic potential; `None` for other kinds.
    pub fn precision(&self) -> Option<DMatrix<f64>> {
        match &self.kind {
            PotentialKind::QuadraticDiagonal(a) => Some(DMatrix::from_diagonal(&a.clone().into())),
            PotentialKind::QuadraticFull(a) => Some(a.clone()),
            _ => None,
        }
    }

    fn check_dim(&self, got: usize) -> Result<()> {
        if got != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got });
        }
        Ok(())
    }

    pub fn value(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x.len())?;
        Ok(self.value_unchecked(x))
    }

    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x.len())?;
        let mut g = vec![0.0; self.dim];
        self.gradient_into(x, &mut g);
        Ok(g)
    }

    pub(crate) fn value_unchecked(&self, x: &[f64]) -> f64 {
        match &self.kind {
            PotentialKind::QuadraticDiagonal(a) => {
                0.5 * a.iter().zip(x).map(|(ai, xi)| ai * xi * xi).sum::<f64>()
            }
            PotentialKind::QuadraticFull(a) => {
                let n = self.dim;
                let mut acc = 0.0;
                for i in 0..n {
                    let row: f64 = (0..n).map(|j| a[(i, j)] * x[j]).sum();
                    acc += x[i] * row;
                }
                0.5 * acc
            }
            PotentialKind::Huber { delta } => x.iter().map(|&xi| huber_value(xi, *delta)).sum(),
            PotentialKind::Custom(c) => (c.value)(x),
        }
    }

    /// Writes `∇U(x)` into `out`. Lengths are the caller's responsibility.
    pub(crate) fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        match &self.kind {
            PotentialKind::QuadraticDiagonal(a) => {
                for ((o, ai), xi) in out.iter_mut().zip(a).zip(x) {
                    *o = ai * xi;
                }
            }
            PotentialKind::QuadraticFull(a) => {
                let n = self.dim;
                for (i, o) in out.iter_mut().enumerate() {
                    *o = (0..n).map(|j| a[(i, j)] * x[j]).sum();
                }
            }
            PotentialKind::Huber { delta } => {
                for (o, xi) in out.iter_mut().zip(x) {
                    *o = xi.clamp(-delta, *delta);
                }
            }
            PotentialKind::Custom(c) => (c.gradient)(x, out),
        }
    }

    /// Randomized spot-check of the declared constants and of the gradient.
    ///
    /// Probe pairs are drawn from `N(0, s² I)` with `s = 3/√m` (or 3 when
    /// `m = 0`). For each pair the strong-convexity, smoothness and
    /// co-coercivity inequalities are checked (violations normalized by
    /// `‖x − y‖²`), and the gradient at `x` is compared against a central
    /// difference of the value with step `1e-5`.
    pub fn validate_constants(&self, n_probes: usize, seed: u64) -> Result<ValidationReport> {
        if n_probes == 0 {
            return Err(Error::InvalidArgument("n_probes must be at least 1".into()));
        }
        let d = self.dim;
        let scale = if self.m > 0.0 { 3.0 / self.m.sqrt() } else { 3.0 };
        let mut report = ValidationReport {
            n_probes,
            max_violation: f64::NEG_INFINITY,
            worst_check: String::new(),
            fd_max_rel_error: 0.0,
        };
        let mut x = vec![0.0; d];
        let mut y = vec![0.0; d];
        let mut gx = vec![0.0; d];
        let mut gy = vec![0.0; d];
        let mut probe = vec![0.0; d];
        for i in 0..n_probes as u64 {
            noise::fill_standard_normal(seed, i, 0, &mut x);
            noise::fill_standard_normal(seed, i, 1, &mut y);
            x.iter_mut().chain(y.iter_mut()).for_each(|v| *v *= scale);
            self.gradient_into(&x, &mut gx);
            self.gradient_into(&y, &mut gy);

            let mut r2 = 0.0;
            let mut ip = 0.0;
            let mut g2 = 0.0;
            for k in 0..d {
                let dx = x[k] - y[k];
                let dg = gx[k] - gy[k];
                r2 += dx * dx;
                ip += dg * dx;
                g2 += dg * dg;
            }
            if r2 > 0.0 {
                report.record("strong-convexity", (self.m * r2 - ip) / r2);
                report.record("smoothness", (ip - self.l * r2) / r2);
                report.record("co-coercivity", (g2 / self.l - ip) / r2);
            }

            for k in 0..d {
                const STEP: f64 = 1e-5;
                probe.copy_from_slice(&x);
                probe[k] = x[k] + STEP;
                let up = self.value_unchecked(&probe);
                probe[k] = x[k] - STEP;
                let down = self.value_unchecked(&probe);
                let fd = (up - down) / (2.0 * STEP);
                let rel = (fd - gx[k]).abs() / gx[k].abs().max(1.0);
                report.fd_max_rel_error = report.fd_max_rel_error.max(rel);
                report.record("finite-difference", rel - FD_REL_TOL);
            }
        }
        Ok(report)
    }
}

/// Relative tolerance for the gradient-vs-central-difference check.
pub const FD_REL_TOL: f64 = 1e-6;

fn check_constants(m: f64, l: f64) -> Result<()> {
    if !(m.is_finite() && l.is_finite() && m >= 0.0 && l > 0.0 && m <= l) {
        return Err(Error::InvalidPotential(format!(
            "constants must satisfy 0 <= m <= L, L > 0 (got m = {m}, L = {l})"
        )));
    }
    Ok(())
}

#[inline]
fn huber_value(x: f64, delta: f64) -> f64 {
    let a = x.abs();
    if a <= delta {
        0.5 * x * x
    } else {
        delta * a - 0.5 * delta * delta
    }
}

/// Outcome of [`Potential::validate_constants`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub n_probes: usize,
    /// Worst signed violation over all checks; `<= 0` means every inequality held.
    pub max_violation: f64,
    pub worst_check: String,
    pub fd_max_rel_error: f64,
}

impl ValidationReport {
    fn record(&mut self, check: &str, violation: f64) {
        if violation > self.max_violation {
            self.max_violation = violation;
            self.worst_check = check.to_string();
        }
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.max_violation <= tol
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn constants_from_parameters() {
        let p = Potential::quadratic_diagonal(vec![1.0, 2.0]).unwrap();
        assert_eq!((p.m(), p.l(), p.dim()), (1.0, 2.0, 2));

        let p = Potential::huber(1.0, 1).unwrap();
        assert_eq!((p.m(), p.l(), p.dim()), (0.0, 1.0, 1));

        let p = Potential::quadratic_full(DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 2.0])).unwrap();
        assert_relative_eq!(p.m(), 2.0, epsilon = 1e-14);
        assert_relative_eq!(p.l(), 2.0, epsilon = 1e-14);
        assert_eq!(p.dim(), 2);
    }

    #[test]
    fn construction_errors_name_constraint() {
        let e = Potential::quadratic_diagonal(vec![1.0, 0.0]).unwrap_err();
        assert!(e.to_string().contains("positive"));
        let e = Potential::quadratic_full(DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0])).unwrap_err();
        assert!(e.to_string().contains("symmetric"));
        let e = Potential::quadratic_full(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0])).unwrap_err();
        assert!(e.to_string().contains("positive definite"));
        let e = Potential::huber(0.0, 1).unwrap_err();
        assert!(e.to_string().contains("> 0"));
    }

    #[test]
    fn values() {
        let q = Potential::quadratic_diagonal(vec![1.0]).unwrap();
        assert_eq!(q.value(&[2.0]).unwrap(), 2.0);
        let h = Potential::huber(1.0, 1).unwrap();
        assert_eq!(h.value(&[3.0]).unwrap(), 2.5);
        let f = Potential::quadratic_full(DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0])).unwrap();
        for p in [&q, &h] {
            assert_eq!(p.value(&[0.0]).unwrap(), 0.0);
        }
        assert_eq!(f.value(&[0.0, 0.0]).unwrap(), 0.0);
        assert!(matches!(
            q.value(&[1.0, 2.0]),
            Err(Error::DimensionMismatch { expected: 1, got: 2 })
        ));
    }

    #[test]
    fn gradients() {
        let q = Potential::quadratic_diagonal(vec![1.0, 2.0]).unwrap();
        assert_eq!(q.gradient(&[1.0, 1.0]).unwrap(), vec![1.0, 2.0]);
        assert_eq!(q.gradient(&[0.0, 0.0]).unwrap(), vec![0.0, 0.0]);
        let h = Potential::huber(1.0, 1).unwrap();
        assert_eq!(h.gradient(&[-3.0]).unwrap(), vec![-1.0]);
        assert_eq!(h.gradient(&[0.0]).unwrap(), vec![0.0]);
        assert!(h.gradient(&[]).is_err());
    }

    #[test]
    fn validation_of_correct_constants() {
        let q = Potential::quadratic_diagonal(vec![1.0, 2.0]).unwrap();
        let r = q.validate_constants(100, 3).unwrap();
        assert!(r.max_violation <= 1e-9, "{r:?}");
        let h = Potential::huber(1.0, 1).unwrap();
        let r = h.validate_constants(100, 3).unwrap();
        assert!(r.max_violation <= 1e-9, "{r:?}");
    }

    #[test]
    fn validation_detects_wrong_constant() {
        let q = Potential::quadratic_diagonal(vec![1.0])
            .unwrap()
            .with_declared_constants(0.5, 0.5)
            .unwrap();
        let r = q.validate_constants(100, 3).unwrap();
        assert!(r.max_violation > 0.0);
        // L too small breaks both upper-curvature checks; co-coercivity by twice as much
        assert_eq!(r.worst_check, "co-coercivity");
        assert!((r.max_violation - 1.0).abs() < 1e-12);
    }

    #[test]
    fn custom_potential_is_advisory() {
        let p = Potential::custom(
            1,
            2.0,
            2.0,
            Arc::new(|x: &[f64]| x[0] * x[0]),
            Arc::new(|x: &[f64], g: &mut [f64]| g[0] = 2.0 * x[0]),
        )
        .unwrap();
        assert_eq!(p.gradient(&[1.5]).unwrap(), vec![3.0]);
        assert!(p.validate_constants(20, 1).unwrap().passes(1e-9));
        assert!(Potential::custom(1, 2.0, 1.0, Arc::new(|_: &[f64]| 0.0), Arc::new(|_: &[f64], _: &mut [f64]| {})).is_err());
    }

    #[test]
    fn spec_round_trip() {
        let spec = PotentialSpec { kind: "huber".into(), params: vec![1.0], dim: Some(3) };
        let p = Potential::from_spec(&spec).unwrap();
        assert_eq!(p.dim(), 3);
        let spec = PotentialSpec { kind: "quadratic-full".into(), params: vec![2.0, 0.0, 0.0, 1.0], dim: None };
        assert_eq!(Potential::from_spec(&spec).unwrap().dim(), 2);
        let spec = PotentialSpec { kind: "nope".into(), params: vec![], dim: None };
        assert!(Potential::from_spec(&spec).is_err());
    }
}
