//! One-dimensional density propagation of the Langevin kernel on a uniform
//! grid.
//!
//! A step pushes each cell's mass through the drift map `T(x) = x − hU′(x)`,
//! splitting it linearly between the two nodes bracketing `T(x_i)`, and then
//! convolves with a discrete Gaussian kernel whose variance is exactly `2h`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::potentials::Potential;

/// Largest mass allowed in either boundary cell.
pub const BOUNDARY_MASS_TOL: f64 = 1e-9;
/// Kernel half-width in standard deviations.
const KERNEL_STDS: f64 = 8.0;

/// Uniform grid of `n` nodes `x_i = x_min + i·dx`; node `i` owns the cell
/// `[x_i − dx/2, x_i + dx/2]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub n: usize,
}

impl GridSpec {
    pub fn new(x_min: f64, x_max: f64, n: usize) -> Result<Self> {
        if !(x_min.is_finite() && x_max.is_finite() && x_min < x_max) {
            return Err(Error::Grid(format!("need x_min < x_max, got [{x_min}, {x_max}]")));
        }
        if n < 3 {
            return Err(Error::Grid(format!("need at least 3 nodes, got {n}")));
        }
        Ok(Self { x_min, x_max, n })
    }

    /// `[−12/√max(m, ¼), 12/√max(m, ¼)]` with 4096 nodes.
    pub fn default_for(potential: &Potential) -> Self {
        let half = 12.0 / potential.m().max(0.25).sqrt();
        Self { x_min: -half, x_max: half, n: 4096 }
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / (self.n - 1) as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.dx()
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        let dx = self.dx();
        (0..self.n).map(move |i| self.x_min + i as f64 * dx)
    }
}

/// Cell probabilities on a [`GridSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridDensity {
    spec: GridSpec,
    mass: Vec<f64>,
    drift: f64,
}

/// Initial law for [`discretize_law`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GridInit {
    Gaussian { mean: f64, var: f64 },
    Point { x: f64 },
}

impl GridDensity {
    /// Build from raw weights, normalizing them to total mass 1.
    pub fn from_weights(spec: GridSpec, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != spec.n {
            return Err(Error::DimensionMismatch { expected: spec.n, got: weights.len() });
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Grid("weights must be finite and non-negative".into()));
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::Grid("weights sum to zero".into()));
        }
        Ok(Self { spec, mass: weights.into_iter().map(|w| w / total).collect(), drift: 1.0 - total })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    /// `1 − total` before the most recent renormalization.
    pub fn drift(&self) -> f64 {
        self.drift
    }

    pub fn total_mass(&self) -> f64 {
        self.mass.iter().sum()
    }

    pub fn boundary_mass(&self) -> f64 {
        self.mass[0].max(self.mass[self.spec.n - 1])
    }

    pub fn mean(&self) -> f64 {
        self.spec.nodes().zip(&self.mass).map(|(x, p)| x * p).sum()
    }

    fn check_boundary(self) -> Result<Self> {
        let b = self.boundary_mass();
        if b >= BOUNDARY_MASS_TOL {
            return Err(Error::Grid(format!(
                "grid too small: boundary cell carries mass {b:e} (limit {BOUNDARY_MASS_TOL:e})"
            )));
        }
        Ok(self)
    }

    /// Rows `x,mass`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("x,mass\n");
        for (x, p) in self.spec.nodes().zip(&self.mass) {
            s.push_str(&format!("{x},{p}\n"));
        }
        s
    }
}

/// `P(a < Z < b)` for a standard normal, computed on the side that avoids
/// cancellation.
fn std_normal_interval(a: f64, b: f64) -> f64 {
    let r = std::f64::consts::FRAC_1_SQRT_2;
    if a >= 0.0 {
        0.5 * (libm::erfc(a * r) - libm::erfc(b * r))
    } else if b <= 0.0 {
        0.5 * (libm::erfc(-b * r) - libm::erfc(-a * r))
    } else {
        0.5 * (libm::erf(b * r) - libm::erf(a * r))
    }
}

/// Discretize a Gaussian (exact CDF differences per cell) or a point mass
/// (nearest node). Gaussians must fit 8 standard deviations inside the grid.
pub fn discretize_law(init: &GridInit, spec: &GridSpec) -> Result<GridDensity> {
    let spec = GridSpec::new(spec.x_min, spec.x_max, spec.n)?;
    match *init {
        GridInit::Gaussian { mean, var } => {
            if !(var.is_finite() && var > 0.0) {
                return Err(Error::Grid(format!("variance must be positive, got {var}")));
            }
            let sd = var.sqrt();
            if mean - 8.0 * sd < spec.x_min || mean + 8.0 * sd > spec.x_max {
                return Err(Error::Grid(format!(
                    "grid [{}, {}] does not cover 8 standard deviations of N({mean}, {var})",
                    spec.x_min, spec.x_max
                )));
            }
            let half = 0.5 * spec.dx();
            let weights = spec
                .nodes()
                .map(|x| std_normal_interval((x - half - mean) / sd, (x + half - mean) / sd))
                .collect();
            GridDensity::from_weights(spec, weights)
        }
        GridInit::Point { x } => {
            if !(x >= spec.x_min && x <= spec.x_max) {
                return Err(Error::Grid(format!("point {x} lies outside the grid")));
            }
            let i = ((x - spec.x_min) / spec.dx()).round() as usize;
            let mut weights = vec![0.0; spec.n];
            weights[i.min(spec.n - 1)] = 1.0;
            GridDensity::from_weights(spec, weights)
        }
    }
}

fn require_1d(potential: &Potential) -> Result<()> {
    if potential.dim() != 1 {
        return Err(Error::Unsupported(format!(
            "grid propagation is one-dimensional, potential has d = {}",
            potential.dim()
        )));
    }
    Ok(())
}

/// Symmetric discrete Gaussian kernel (offsets `−K..=K` in cells) with
/// variance exactly `var`.
fn noise_kernel(var: f64, dx: f64) -> Vec<f64> {
    let target = var / (dx * dx);
    let sd_cells = target.sqrt();
    let half = ((KERNEL_STDS * sd_cells).ceil() as usize).max(1);
    let build = |s: f64| -> (Vec<f64>, f64) {
        let w: Vec<f64> = (0..=2 * half)
            .map(|j| {
                let k = j as f64 - half as f64;
                (-0.5 * k * k / (s * s)).exp()
            })
            .collect();
        let total: f64 = w.iter().sum();
        let v = w.iter().enumerate().map(|(j, wj)| {
            let k = j as f64 - half as f64;
            wj * k * k
        });
        (w.clone(), v.sum::<f64>() / total)
    };
    // the sampled kernel's variance grows monotonically with its width, so
    // bisect on the width until it matches
    let (mut lo, mut hi) = (1e-3 * sd_cells.max(1e-3), sd_cells.max(1.0) * 2.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if build(mid).1 < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    let (w, _) = build(0.5 * (lo + hi));
    let total: f64 = w.iter().sum();
    w.into_iter().map(|v| v / total).collect()
}

/// One step of the chain's law on the grid.
pub fn ula_step_grid(p: &GridDensity, potential: &Potential, h: f64) -> Result<GridDensity> {
    require_1d(potential)?;
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::InvalidArgument(format!("step size must be positive, got {h}")));
    }
    let spec = p.spec;
    let n = spec.n;
    let dx = spec.dx();

    let mut pushed = vec![0.0; n];
    let mut grad = [0.0];
    let mut prev = f64::NEG_INFINITY;
    for (i, &mass) in p.mass.iter().enumerate() {
        let x = spec.node(i);
        potential.gradient_into(&[x], &mut grad);
        let t = x - h * grad[0];
        if t < prev - 1e-12 * dx {
            return Err(Error::Grid(format!(
                "drift map is not monotone at node {i} (h = {h} too large for this potential)"
            )));
        }
        prev = t;
        if mass == 0.0 {
            continue;
        }
        let s = ((t - spec.x_min) / dx).clamp(0.0, (n - 1) as f64);
        let j = (s.floor() as usize).min(n - 2);
        let frac = s - j as f64;
        pushed[j] += mass * (1.0 - frac);
        pushed[j + 1] += mass * frac;
    }

    let kernel = noise_kernel(2.0 * h, dx);
    let half = (kernel.len() - 1) / 2;
    let mut out = vec![0.0; n];
    for (j, &mass) in pushed.iter().enumerate() {
        if mass == 0.0 {
            continue;
        }
        let lo = j.saturating_sub(half);
        let hi = (j + half).min(n - 1);
        let k0 = lo + half - j;
        for (o, w) in out[lo..=hi].iter_mut().zip(&kernel[k0..]) {
            *o += mass * w;
        }
    }
    GridDensity::from_weights(spec, out)?.check_boundary()
}

/// Normalized cell masses of `e^{−U}` (Simpson's rule per cell).
pub fn target_density_grid(potential: &Potential, spec: &GridSpec) -> Result<GridDensity> {
    require_1d(potential)?;
    let spec = GridSpec::new(spec.x_min, spec.x_max, spec.n)?;
    let half = 0.5 * spec.dx();
    let f = |x: f64| (-potential.value_unchecked(&[x])).exp();
    let weights = spec.nodes().map(|x| (f(x - half) + 4.0 * f(x) + f(x + half)) / 6.0).collect();
    GridDensity::from_weights(spec, weights)?.check_boundary().map_err(|_| {
        Error::Grid(format!(
            "target has tail mass above {BOUNDARY_MASS_TOL:e} at the boundary of [{}, {}]",
            spec.x_min, spec.x_max
        ))
    })
}

fn same_grid(p: &GridDensity, q: &GridDensity) -> Result<()> {
    if p.spec != q.spec {
        return Err(Error::Grid("densities live on different grids".into()));
    }
    Ok(())
}

/// `Σ p_i ln(p_i/q_i)` with `0·ln 0 = 0`.
pub fn kl_grid(p: &GridDensity, q: &GridDensity) -> Result<f64> {
    same_grid(p, q)?;
    let mut acc = 0.0;
    for (i, (&pi, &qi)) in p.mass.iter().zip(&q.mass).enumerate() {
        if pi > 0.0 {
            if !(qi > 0.0) {
                return Err(Error::Grid(format!("reference density vanishes at node {i} where p > 0")));
            }
            acc += pi * (pi / qi).ln();
        }
    }
    Ok(acc)
}

/// `½ Σ |p_i − q_i|`.
pub fn tv_grid(p: &GridDensity, q: &GridDensity) -> Result<f64> {
    same_grid(p, q)?;
    Ok(0.5 * p.mass.iter().zip(&q.mass).map(|(a, b)| (a - b).abs()).sum::<f64>())
}

/// `Σ p_i x_i²`.
pub fn second_moment_grid(p: &GridDensity) -> f64 {
    p.spec.nodes().zip(&p.mass).map(|(x, m)| x * x * m).sum()
}

/// W2 between two grid densities, each read as uniform within its cells,
/// through the quantile coupling.
pub fn w2_grid_1d(p: &GridDensity, q: &GridDensity) -> Result<f64> {
    same_grid(p, q)?;
    let spec = p.spec;
    let dx = spec.dx();
    let edge = |i: usize| spec.node(i) - 0.5 * dx;
    let tp: f64 = p.mass.iter().sum();
    let tq: f64 = q.mass.iter().sum();

    // walk both quantile functions over u ∈ [0, 1]
    let (mut i, mut j) = (0usize, 0usize);
    let (mut used_p, mut used_q) = (0.0f64, 0.0f64);
    let mut acc = 0.0;
    let n = spec.n;
    let skip = |mass: &[f64], mut k: usize| {
        while k < n && mass[k] == 0.0 {
            k += 1;
        }
        k
    };
    i = skip(&p.mass, i);
    j = skip(&q.mass, j);
    while i < n && j < n {
        let mp = p.mass[i] / tp;
        let mq = q.mass[j] / tq;
        let left_p = mp - used_p;
        let left_q = mq - used_q;
        let du = left_p.min(left_q);
        // positions at the start and end of this u-segment
        let xp0 = edge(i) + dx * used_p / mp;
        let xq0 = edge(j) + dx * used_q / mq;
        let xp1 = edge(i) + dx * (used_p + du) / mp;
        let xq1 = edge(j) + dx * (used_q + du) / mq;
        let d0 = xp0 - xq0;
        let d1 = xp1 - xq1;
        acc += du * (d0 * d0 + d0 * d1 + d1 * d1) / 3.0;
        if left_p <= left_q {
            i = skip(&p.mass, i + 1);
            used_p = 0.0;
            used_q += du;
            if left_p == left_q {
                j = skip(&q.mass, j + 1);
                used_q = 0.0;
            }
        } else {
            j = skip(&q.mass, j + 1);
            used_q = 0.0;
            used_p += du;
        }
    }
    Ok(acc.max(0.0).sqrt())
}

/// Iterate the grid kernel from the target density until successive steps
/// differ by less than `tol` in total variation. Returns the estimate of
/// `π_h` and the number of steps taken.
pub fn stationary_grid(
    potential: &Potential,
    h: f64,
    spec: &GridSpec,
    tol: f64,
    max_steps: usize,
) -> Result<(GridDensity, usize)> {
    let mut cur = target_density_grid(potential, spec)?;
    for step in 1..=max_steps {
        let next = ula_step_grid(&cur, potential, h)?;
        let change = tv_grid(&cur, &next)?;
        cur = next;
        if change < tol {
            return Ok((cur, step));
        }
    }
    Err(Error::Grid(format!("stationary law at h = {h} did not settle within {max_steps} steps")))
}

/// Empirical estimate of the step cap `h′` such that `W2(π_h, p*) ≤ C1`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HPrimeEstimate {
    pub h_prime: f64,
    /// `W2(π_{h′}, p*)` on the grid.
    pub w2_at_h_prime: f64,
    /// `(h, W2(π_h, p*))` for every candidate examined.
    pub probes: Vec<(f64, f64)>,
}

/// Scan `h = 2^{−j}/L`, `j = 0, 1, …`, and return the first (largest)
/// candidate whose grid stationary law is within `C1` of the target in W2.
/// This is an estimate, not a certificate.
pub fn estimate_h_prime(potential: &Potential, c1: f64, spec: &GridSpec) -> Result<HPrimeEstimate> {
    if !(c1 > 0.0) {
        return Err(Error::InvalidArgument(format!("C1 must be positive, got {c1}")));
    }
    let target = target_density_grid(potential, spec)?;
    let mut probes = Vec::new();
    for j in 0..24 {
        let h = 0.5f64.powi(j) / potential.l();
        let (pi, _) = stationary_grid(potential, h, spec, 1e-10, 200_000)?;
        let w2 = w2_grid_1d(&pi, &target)?;
        probes.push((h, w2));
        if w2 <= c1 {
            return Ok(HPrimeEstimate { h_prime: h, w2_at_h_prime: w2, probes });
        }
    }
    Err(Error::Grid("no candidate step size met the W2 cap".into()))
}

/// Row of a grid run, serialized as `step,kl,tv,w2,second_moment`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridRow {
    pub step: u64,
    pub kl: f64,
    pub tv: f64,
    pub w2: f64,
    pub second_moment: f64,
}

/// Distances from `p` to `target` and the second moment of `p`.
pub fn grid_row(step: u64, p: &GridDensity, target: &GridDensity) -> Result<GridRow> {
    Ok(GridRow {
        step,
        kl: kl_grid(p, target)?,
        tv: tv_grid(p, target)?,
        w2: w2_grid_1d(p, target)?,
        second_moment: second_moment_grid(p),
    })
}

/// Propagate `init` for `k` steps, recording step 0, every
/// `record_every`-th step and step `k` against `target`.
pub fn grid_run(
    init: &GridDensity,
    target: &GridDensity,
    potential: &Potential,
    h: f64,
    k: u64,
    record_every: u64,
) -> Result<(Vec<GridRow>, GridDensity)> {
    if record_every == 0 {
        return Err(Error::InvalidArgument("record_every must be at least 1".into()));
    }
    let mut cur = init.clone();
    let mut rows = vec![grid_row(0, &cur, target)?];
    for i in 1..=k {
        cur = ula_step_grid(&cur, potential, h)?;
        if i % record_every == 0 || i == k {
            rows.push(grid_row(i, &cur, target)?);
        }
    }
    Ok((rows, cur))
}
