//! Ensembles of independent unadjusted Langevin chains.
//!
//! Each transition applies `u ← u − h∇U(u) + √(2h)ξ` to every chain, with `ξ`
//! drawn from the chain's counter-based stream for that step. Results are
//! identical for any thread count.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise;
use crate::planner::StepPlan;
use crate::potentials::Potential;

/// Chains per rayon task; small ensembles are stepped serially.
const PAR_MIN_CHAINS: usize = 1024;

/// Law of the initial state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", try_from = "InitRepr")]
pub enum InitLaw {
    /// `N(0, I/m)`; needs `m > 0`.
    #[serde(rename = "gaussian_1_over_m")]
    GaussianOneOverM,
    /// Independent coordinates `N(mean_i, cov_diag_i)`.
    Gaussian { mean: Vec<f64>, cov_diag: Vec<f64> },
    Point { x: Vec<f64> },
}

/// Flat form of [`InitLaw`]; rejects keys that do not belong to the kind.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct InitRepr {
    kind: String,
    mean: Option<Vec<f64>>,
    cov_diag: Option<Vec<f64>>,
    x: Option<Vec<f64>>,
}

impl TryFrom<InitRepr> for InitLaw {
    type Error = String;

    fn try_from(r: InitRepr) -> std::result::Result<Self, String> {
        let extra = |keys: &[(&str, bool)]| match keys.iter().find(|(_, present)| *present) {
            Some((k, _)) => Err(format!("init kind '{}' does not take '{k}'", r.kind)),
            None => Ok(()),
        };
        match r.kind.as_str() {
            "gaussian_1_over_m" => {
                extra(&[("mean", r.mean.is_some()), ("cov_diag", r.cov_diag.is_some()), ("x", r.x.is_some())])?;
                Ok(InitLaw::GaussianOneOverM)
            }
            "gaussian" => {
                extra(&[("x", r.x.is_some())])?;
                match (r.mean, r.cov_diag) {
                    (Some(mean), Some(cov_diag)) => Ok(InitLaw::Gaussian { mean, cov_diag }),
                    _ => Err("init kind 'gaussian' needs 'mean' and 'cov_diag'".into()),
                }
            }
            "point" => {
                extra(&[("mean", r.mean.is_some()), ("cov_diag", r.cov_diag.is_some())])?;
                r.x.map(|x| InitLaw::Point { x }).ok_or_else(|| "init kind 'point' needs 'x'".into())
            }
            other => Err(format!("unknown init kind '{other}'; expected gaussian_1_over_m, gaussian or point")),
        }
    }
}

impl InitLaw {
    /// Mean and per-coordinate variance of the law for a `dim`-dimensional
    /// target with strong-convexity constant `m`.
    pub fn diagonal_moments(&self, dim: usize, m: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        match self {
            InitLaw::GaussianOneOverM => {
                if !(m > 0.0) {
                    return Err(Error::InvalidArgument(
                        "gaussian_1_over_m needs m > 0; give an explicit initial law for weakly convex targets"
                            .into(),
                    ));
                }
                Ok((vec![0.0; dim], vec![1.0 / m; dim]))
            }
            InitLaw::Gaussian { mean, cov_diag } => {
                for len in [mean.len(), cov_diag.len()] {
                    if len != dim {
                        return Err(Error::DimensionMismatch { expected: dim, got: len });
                    }
                }
                if let Some(v) = cov_diag.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
                    return Err(Error::InvalidArgument(format!("initial variances must be positive, got {v}")));
                }
                Ok((mean.clone(), cov_diag.clone()))
            }
            InitLaw::Point { x } => {
                if x.len() != dim {
                    return Err(Error::DimensionMismatch { expected: dim, got: x.len() });
                }
                Ok((x.clone(), vec![0.0; dim]))
            }
        }
    }
}

/// `n` chain states stored row-major (`n × d`).
#[derive(Debug, Clone)]
pub struct Ensemble {
    states: Vec<f64>,
    n_chains: usize,
    dim: usize,
    step_index: u64,
    h: Option<f64>,
    seed: u64,
    potential: Arc<Potential>,
}

impl Ensemble {
    /// Draw `n` initial states; chain `i` uses stream `(seed, i, 0)`.
    pub fn init(potential: Arc<Potential>, init: &InitLaw, n: usize, seed: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("ensemble needs at least one chain".into()));
        }
        let dim = potential.dim();
        let (mean, var) = init.diagonal_moments(dim, potential.m())?;
        let sd: Vec<f64> = var.iter().map(|v| v.sqrt()).collect();
        let mut states = vec![0.0; n * dim];
        let random = !matches!(init, InitLaw::Point { .. });
        let fill = |(i, row): (usize, &mut [f64])| {
            if random {
                noise::fill_standard_normal(seed, i as u64, 0, row);
            }
            for ((x, mu), s) in row.iter_mut().zip(&mean).zip(&sd) {
                *x = mu + s * *x;
            }
        };
        if n >= PAR_MIN_CHAINS {
            states.par_chunks_mut(dim).enumerate().for_each(fill);
        } else {
            states.chunks_mut(dim).enumerate().for_each(fill);
        }
        Ok(Self { states, n_chains: n, dim, step_index: 0, h: None, seed, potential })
    }

    pub fn n_chains(&self) -> usize {
        self.n_chains
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn step_index(&self) -> u64 {
        self.step_index
    }

    /// Step size of the most recent transition.
    pub fn h(&self) -> Option<f64> {
        self.h
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn potential(&self) -> &Arc<Potential> {
        &self.potential
    }

    /// All states, row-major.
    pub fn states(&self) -> &[f64] {
        &self.states
    }

    pub fn chain(&self, i: usize) -> &[f64] {
        &self.states[i * self.dim..(i + 1) * self.dim]
    }

    /// Coordinate `j` of every chain.
    pub fn coordinate(&self, j: usize) -> Vec<f64> {
        self.states.iter().skip(j).step_by(self.dim).copied().collect()
    }

    /// One transition with noise from the ensemble's own streams.
    pub fn step(&mut self, h: f64) -> Result<()> {
        let seed = self.seed;
        self.step_with_noise(h, |chain, step, xi| noise::fill_standard_normal(seed, chain as u64, step, xi))
    }

    /// One transition with caller-provided noise. `fill(chain, step, ξ)` must
    /// write a standard-normal vector for the transition into `step`.
    pub fn step_with_noise<F>(&mut self, h: f64, fill: F) -> Result<()>
    where
        F: Fn(usize, u64, &mut [f64]) + Sync,
    {
        if !(h.is_finite() && h > 0.0) {
            return Err(Error::InvalidArgument(format!("step size must be positive, got {h}")));
        }
        let next = self.step_index + 1;
        let dim = self.dim;
        let potential = &*self.potential;
        let scale = (2.0 * h).sqrt();
        let update = |(i, row): (usize, &mut [f64])| -> Option<usize> {
            let mut grad = [0.0f64; 16];
            let mut xi = [0.0f64; 16];
            let mut grad_heap;
            let mut xi_heap;
            let (g, z): (&mut [f64], &mut [f64]) = if dim <= 16 {
                (&mut grad[..dim], &mut xi[..dim])
            } else {
                grad_heap = vec![0.0; dim];
                xi_heap = vec![0.0; dim];
                (&mut grad_heap[..], &mut xi_heap[..])
            };
            potential.gradient_into(row, g);
            fill(i, next, z);
            let mut finite = true;
            for k in 0..dim {
                row[k] = row[k] - h * g[k] + scale * z[k];
                finite &= row[k].is_finite();
            }
            (!finite).then_some(i)
        };
        let bad = if self.n_chains >= PAR_MIN_CHAINS {
            self.states.par_chunks_mut(dim).enumerate().with_min_len(256).filter_map(update).min()
        } else {
            self.states.chunks_mut(dim).enumerate().filter_map(update).min()
        };
        self.step_index = next;
        self.h = Some(h);
        match bad {
            Some(chain) => Err(Error::NonFinite { chain, step: next }),
            None => Ok(()),
        }
    }

    /// Mean of `‖x‖²` over chains, its standard error, and `‖mean‖`.
    pub fn row_summary(&self) -> TraceRow {
        let n = self.n_chains as f64;
        let mut s1 = 0.0;
        let mut s2 = 0.0;
        let mut mean = vec![0.0; self.dim];
        for row in self.states.chunks(self.dim) {
            let r2: f64 = row.iter().map(|v| v * v).sum();
            s1 += r2;
            s2 += r2 * r2;
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        let sm = s1 / n;
        let var = if self.n_chains > 1 { ((s2 - n * sm * sm) / (n - 1.0)).max(0.0) } else { 0.0 };
        TraceRow {
            step: self.step_index,
            second_moment: sm,
            second_moment_se: (var / n).sqrt(),
            mean_norm: mean.iter().map(|m| (m / n) * (m / n)).sum::<f64>().sqrt(),
            coupled_rms: None,
        }
    }
}

/// One recorded row of a run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRow {
    pub step: u64,
    pub second_moment: f64,
    pub second_moment_se: f64,
    pub mean_norm: f64,
    pub coupled_rms: Option<f64>,
}

/// Execute `plan.k` transitions at `plan.h`, recording step 0, every
/// `record_every`-th step and the final step.
pub fn run(ensemble: &mut Ensemble, plan: &StepPlan, record_every: u64) -> Result<Vec<TraceRow>> {
    if record_every == 0 {
        return Err(Error::InvalidArgument("record_every must be at least 1".into()));
    }
    let mut rows = vec![ensemble.row_summary()];
    for i in 1..=plan.k {
        ensemble.step(plan.h)?;
        if i % record_every == 0 || i == plan.k {
            rows.push(ensemble.row_summary());
        }
    }
    Ok(rows)
}

/// RMS distance between synchronously coupled chains, one entry per step
/// (index 0 is the initial distance).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoupledTrace {
    pub rms: Vec<f64>,
    /// Delta-method standard error of each RMS entry.
    pub se: Vec<f64>,
}

/// Run two ensembles from `init_a` and `init_b` under identical noise.
///
/// Both ensembles draw their initial states from the same standard-normal
/// vectors, so equal initial laws start from equal states.
#[allow(clippy::too_many_arguments)]
pub fn coupled_run(
    potential: Arc<Potential>,
    init_a: &InitLaw,
    init_b: &InitLaw,
    h: f64,
    k: u64,
    n: usize,
    seed: u64,
) -> Result<CoupledTrace> {
    if !(h > 0.0 && h <= 1.0 / potential.l()) {
        return Err(Error::InvalidArgument(format!(
            "coupled runs need 0 < h <= 1/L = {}, got {h}",
            1.0 / potential.l()
        )));
    }
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    let mut a = Ensemble::init(potential.clone(), init_a, n, seed)?;
    let mut b = Ensemble::init(potential, init_b, n, seed)?;
    let mut trace = CoupledTrace { rms: Vec::with_capacity(k as usize + 1), se: Vec::with_capacity(k as usize + 1) };
    let record = |a: &Ensemble, b: &Ensemble, trace: &mut CoupledTrace| {
        let (rms, se) = coupled_distance(a, b);
        trace.rms.push(rms);
        trace.se.push(se);
    };
    record(&a, &b, &mut trace);
    for _ in 0..k {
        a.step(h)?;
        b.step(h)?;
        record(&a, &b, &mut trace);
    }
    Ok(trace)
}

fn coupled_distance(a: &Ensemble, b: &Ensemble) -> (f64, f64) {
    let n = a.n_chains as f64;
    let (mut s1, mut s2) = (0.0, 0.0);
    for (ra, rb) in a.states.chunks(a.dim).zip(b.states.chunks(b.dim)) {
        let d2: f64 = ra.iter().zip(rb).map(|(x, y)| (x - y) * (x - y)).sum();
        s1 += d2;
        s2 += d2 * d2;
    }
    let msd = s1 / n;
    let rms = msd.sqrt();
    let var = if a.n_chains > 1 { ((s2 - n * msd * msd) / (n - 1.0)).max(0.0) } else { 0.0 };
    let se_msd = (var / n).sqrt();
    let se = if rms > 0.0 { se_msd / (2.0 * rms) } else { 0.0 };
    (rms, se)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::planner::Regime;

    fn quad(a: Vec<f64>) -> Arc<Potential> {
        Arc::new(Potential::quadratic_diagonal(a).unwrap())
    }

    #[test]
    fn init_one_over_m_variance() {
        let e = Ensemble::init(quad(vec![1.0, 2.0]), &InitLaw::GaussianOneOverM, 100_000, 7).unwrap();
        for j in 0..2 {
            let xs = e.coordinate(j);
            let n = xs.len() as f64;
            let mean = xs.iter().sum::<f64>() / n;
            let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
            // SE of a normal sample variance is σ²√(2/(n−1))
            assert!((var - 1.0).abs() <= 5.0 * (2.0 / (n - 1.0)).sqrt(), "var {var}");
        }
    }

    #[test]
    fn init_errors_and_points() {
        let h = Arc::new(Potential::huber(1.0, 1).unwrap());
        let err = Ensemble::init(h.clone(), &InitLaw::GaussianOneOverM, 10, 1).unwrap_err();
        assert!(err.to_string().contains("explicit initial law"));
        let e = Ensemble::init(quad(vec![1.0, 2.0]), &InitLaw::Point { x: vec![0.0, 0.0] }, 3, 1).unwrap();
        assert!(e.states().iter().all(|&v| v == 0.0));
        assert!(Ensemble::init(h, &InitLaw::Point { x: vec![0.0, 0.0] }, 3, 1).is_err());
    }

    #[test]
    fn drift_only_step() {
        let mut e = Ensemble::init(quad(vec![1.0]), &InitLaw::Point { x: vec![1.0] }, 1, 0).unwrap();
        e.step_with_noise(0.5, |_, _, xi| xi.fill(0.0)).unwrap();
        assert_eq!(e.chain(0), &[0.5]);
        assert_eq!(e.step_index(), 1);
        assert!(e.step(0.0).is_err());
        assert!(e.step(-1.0).is_err());
    }

    #[test]
    fn divergence_names_chain_and_step() {
        let mut e = Ensemble::init(quad(vec![1.0]), &InitLaw::Point { x: vec![1e300] }, 2, 0).unwrap();
        let err = e.step_with_noise(3.0, |_, _, xi| xi.fill(0.0));
        // 1e300 * (1 - 3) stays finite; keep going until overflow
        let err = match err {
            Ok(()) => (0..2000).find_map(|_| e.step_with_noise(3.0, |_, _, xi| xi.fill(0.0)).err()).unwrap(),
            Err(e) => e,
        };
        assert!(matches!(err, Error::NonFinite { chain: 0, .. }));
    }

    #[test]
    fn replay_is_bit_exact() {
        let pot = quad(vec![1.0, 2.0]);
        let plan = StepPlan::new(0.05, 40, 0.1, Regime::Strong).unwrap();
        let go = || {
            let mut e = Ensemble::init(pot.clone(), &InitLaw::GaussianOneOverM, 3000, 99).unwrap();
            let rows = run(&mut e, &plan, 7).unwrap();
            (rows, e.states().to_vec())
        };
        let (r1, s1) = go();
        let (r2, s2) = go();
        assert_eq!(r1, r2);
        assert_eq!(s1, s2);
        assert_eq!(r1.first().unwrap().step, 0);
        assert_eq!(r1.last().unwrap().step, 40);
    }

    #[test]
    fn parallel_matches_serial() {
        let pot = quad(vec![1.0, 3.0]);
        let mut big = Ensemble::init(pot.clone(), &InitLaw::GaussianOneOverM, 4096, 5).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        pool.install(|| {
            for _ in 0..5 {
                big.step(0.1).unwrap();
            }
        });
        // the same chains, stepped one at a time in small ensembles
        for i in [0usize, 1000, 4095] {
            let mut single = Ensemble::init(pot.clone(), &InitLaw::Point { x: vec![0.0, 0.0] }, 1, 5).unwrap();
            single.states.copy_from_slice(Ensemble::init(pot.clone(), &InitLaw::GaussianOneOverM, 4096, 5).unwrap().chain(i));
            for _ in 0..5 {
                let seed = 5;
                single
                    .step_with_noise(0.1, |_, step, xi| noise::fill_standard_normal(seed, i as u64, step, xi))
                    .unwrap();
            }
            assert_eq!(single.chain(0), big.chain(i));
        }
    }

    #[test]
    fn coupled_identical_inits_stay_together() {
        let h = Arc::new(Potential::huber(1.0, 2).unwrap());
        let init = InitLaw::Gaussian { mean: vec![0.0, 1.0], cov_diag: vec![4.0, 1.0] };
        let t = coupled_run(h, &init, &init, 0.5, 20, 200, 3).unwrap();
        assert!(t.rms.iter().all(|&r| r == 0.0));
    }

    #[test]
    fn coupled_quadratic_halves() {
        let t = coupled_run(
            quad(vec![1.0]),
            &InitLaw::Point { x: vec![1.0] },
            &InitLaw::Point { x: vec![-1.0] },
            0.5,
            6,
            4,
            11,
        )
        .unwrap();
        let expect = [2.0, 1.0, 0.5, 0.25, 0.125, 0.0625, 0.03125];
        for (r, e) in t.rms.iter().zip(expect) {
            assert!((r - e).abs() <= 1e-12 * e, "{r} vs {e}");
        }
    }

    #[test]
    fn coupled_rejects_large_steps() {
        assert!(coupled_run(quad(vec![2.0]), &InitLaw::GaussianOneOverM, &InitLaw::GaussianOneOverM, 0.6, 3, 2, 0).is_err());
    }
}
