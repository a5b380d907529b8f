//! Property suites tying the sampler, the planner and the oracles together.
//!
//! Each suite returns a list of [`Verdict`]s. A verdict aggregates many cases
//! of one inequality into its worst margin (`rhs − lhs`, so negative means
//! violated) and passes when that margin is at least `−tolerance`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::chain::{self, coupled_run, Ensemble, InitLaw};
use crate::error::{Error, Result};
use crate::gaussian_oracle::{self as go, GaussianLaw, QuadraticTarget};
use crate::grid_oracle::{self as grid, GridInit, GridSpec};
use crate::metrics;
use crate::noise;
use crate::planner::{self, WeakPlanInputs};
use crate::potentials::Potential;

/// Slack granted to exact inequalities for rounding.
pub const MARGIN_TOL: f64 = 1e-9;

/// Grid steps allowed for the weak-convexity run.
pub const WEAK_STEP_CAP: u64 = 100_000;

pub const SUITES: &[&str] = &[
    "inequalities",
    "oracle-equivalence",
    "strong",
    "moments",
    "contraction",
    "sampler",
    "weak",
    "planner",
    "potentials",
    "all",
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub name: String,
    /// The inequality or identity under test.
    pub claim: String,
    pub margin: f64,
    pub tolerance: f64,
    pub cases: usize,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub suite: String,
    pub seed: u64,
    pub verdicts: Vec<Verdict>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.pass)
    }

    pub fn worst(&self) -> Option<&Verdict> {
        self.verdicts.iter().min_by(|a, b| (a.margin + a.tolerance).total_cmp(&(b.margin + b.tolerance)))
    }
}

/// Running minimum of `rhs − lhs` over the cases of one claim.
pub(crate) struct Check {
    name: &'static str,
    claim: &'static str,
    tolerance: f64,
    margin: f64,
    cases: usize,
}

impl Check {
    pub(crate) fn new(name: &'static str, claim: &'static str, tolerance: f64) -> Self {
        Self { name, claim, tolerance, margin: f64::INFINITY, cases: 0 }
    }

    pub(crate) fn le(&mut self, lhs: f64, rhs: f64) {
        let m = rhs - lhs;
        // NaN must fail, never vanish in `min`
        self.margin = if m.is_nan() { f64::NEG_INFINITY } else { self.margin.min(m) };
        self.cases += 1;
    }

    pub(crate) fn finish(self) -> Verdict {
        Verdict {
            name: self.name.into(),
            claim: self.claim.into(),
            margin: self.margin,
            tolerance: self.tolerance,
            cases: self.cases,
            pass: self.cases > 0 && self.margin >= -self.tolerance,
        }
    }
}

pub fn run_suite(name: &str, seed: u64) -> Result<SuiteReport> {
    let verdicts = match name {
        "inequalities" => inequalities(seed)?,
        "oracle-equivalence" => oracle_equivalence()?,
        "strong" => strong_schedule()?,
        "moments" => moments(seed)?,
        "contraction" => contraction(seed)?,
        "sampler" => sampler(seed)?,
        "weak" => weak_convexity()?,
        "planner" => planner_regression()?,
        "potentials" => potentials(seed)?,
        "all" => {
            let mut all = Vec::new();
            for s in SUITES.iter().filter(|s| **s != "all") {
                all.extend(run_suite(s, seed)?.verdicts);
            }
            all
        }
        other => {
            return Err(Error::InvalidArgument(format!(
                "unknown suite '{other}'; available suites: {}",
                SUITES.join(", ")
            )))
        }
    };
    Ok(SuiteReport { suite: name.into(), seed, verdicts })
}

fn normal(rng: &mut impl Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// `B Bᵀ/d + c I` with `c ∈ [lo, hi)`.
fn random_spd(rng: &mut impl Rng, d: usize, lo: f64, hi: f64) -> DMatrix<f64> {
    let b = DMatrix::from_fn(d, d, |_, _| normal(rng));
    let c = rng.gen_range(lo..hi);
    &b * b.transpose() / d as f64 + DMatrix::identity(d, d) * c
}

fn random_law(rng: &mut impl Rng, d: usize) -> Result<GaussianLaw> {
    let mean = DVector::from_fn(d, |_, _| 1.5 * normal(rng));
    GaussianLaw::new(mean, random_spd(rng, d, 0.1, 1.5))
}

/// Random pairs and exact flows, checked against the functional inequalities
/// that drive the convergence proofs.
pub fn inequalities(seed: u64) -> Result<Vec<Verdict>> {
    let mut pinsker = Check::new("pinsker", "tv(p, q) <= sqrt(kl(p, q) / 2)", MARGIN_TOL);
    let mut rng = noise::stream(seed, 0, 0xa7_01);
    for _ in 0..100 {
        let p = GaussianLaw::diagonal(&[2.0 * normal(&mut rng)], &[rng.gen_range(-2.5f64..2.5).exp()])?;
        let q = GaussianLaw::diagonal(&[2.0 * normal(&mut rng)], &[rng.gen_range(-2.5f64..2.5).exp()])?;
        pinsker.le(go::tv_gaussian_1d(&p, &q)?, (go::kl_gaussian(&p, &q)? / 2.0).sqrt());
    }

    let mut talagrand = Check::new("talagrand", "w2(p, p*)^2 <= (2/m) kl(p, p*)", MARGIN_TOL);
    let mut lsi = Check::new("log-sobolev", "kl(p, p*) <= fisher(p, p*) / (2m)", MARGIN_TOL);
    let mut weak = Check::new("kl-fisher-w2", "kl(p, p*) <= sqrt(fisher(p, p*)) w2(p, p*)", MARGIN_TOL);
    let mut rng = noise::stream(seed, 0, 0xa7_02);
    for _ in 0..100 {
        let d = rng.gen_range(1..=4);
        let target = QuadraticTarget::new(random_spd(&mut rng, d, 0.2, 2.0))?;
        let star = target.target_law();
        let p = random_law(&mut rng, d)?;
        let kl = go::kl_gaussian(&p, &star)?;
        let w2 = go::w2_gaussian(&p, &star)?;
        let fisher = go::fisher_info_relative(&p, &target)?;
        let m = target.m();
        talagrand.le(w2 * w2, 2.0 / m * kl);
        lsi.le(kl, fisher / (2.0 * m));
        weak.le(kl, fisher.sqrt() * w2);
    }

    Ok(vec![pinsker.finish(), talagrand.finish(), lsi.finish(), weak.finish(), dissipation(seed)?])
}

/// Centered difference of KL along the exact diffusion versus `−fisher`.
pub fn dissipation(seed: u64) -> Result<Verdict> {
    const DELTA: f64 = 1e-5;
    const REL_TOL: f64 = 1e-3;
    let mut check = Check::new("dissipation", "|dKL/dt + fisher| / fisher <= 1e-3 along the exact flow", MARGIN_TOL);
    let mut rng = noise::stream(seed, 0, 0xa7_03);
    for _ in 0..20 {
        let d = rng.gen_range(1..=3);
        let a: Vec<f64> = (0..d).map(|_| rng.gen_range(0.5..2.5)).collect();
        let mean: Vec<f64> = (0..d)
            .map(|_| {
                let s = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                s * rng.gen_range(0.5..2.0)
            })
            .collect();
        let var: Vec<f64> = (0..d).map(|_| rng.gen_range(0.2..4.0)).collect();
        let t = rng.gen_range(0.05..1.0);
        let target = QuadraticTarget::diagonal(&a)?;
        let star = target.target_law();
        let init = GaussianLaw::diagonal(&mean, &var)?;
        let kl_at = |s: f64| -> Result<f64> { go::kl_gaussian(&go::exact_flow_law(&target, &init, s)?, &star) };
        let fd = (kl_at(t + DELTA)? - kl_at(t - DELTA)?) / (2.0 * DELTA);
        let fisher = go::fisher_info_relative(&go::exact_flow_law(&target, &init, t)?, &target)?;
        check.le((fd + fisher).abs() / fisher, REL_TOL);
    }
    Ok(check.finish())
}

/// Grid propagation against the closed-form law on a 1-D quadratic.
pub fn oracle_equivalence() -> Result<Vec<Verdict>> {
    let (h, k) = (0.1, 50);
    let pot = Potential::quadratic_diagonal(vec![1.0])?;
    let spec = GridSpec::new(-8.0, 8.0, 4096)?;
    let (mean, var) = (0.5, 0.25);
    let p0 = grid::discretize_law(&GridInit::Gaussian { mean, var }, &spec)?;
    let target_grid = grid::target_density_grid(&pot, &spec)?;
    let (rows, _) = grid::grid_run(&p0, &target_grid, &pot, h, k, 1)?;

    let target = QuadraticTarget::diagonal(&[1.0])?;
    let exact = go::kl_trajectory(&target, &GaussianLaw::diagonal(&[mean], &[var])?, h, k)?;

    let mut check = Check::new("grid-gaussian-kl", "|kl_grid - kl_gaussian| <= 1e-3 at every step", 0.0);
    for row in &rows {
        check.le((row.kl - exact[row.step as usize]).abs(), 1e-3);
    }
    Ok(vec![check.finish()])
}

fn strong_example() -> Result<(QuadraticTarget, GaussianLaw, planner::StepPlan)> {
    let target = QuadraticTarget::diagonal(&[1.0, 2.0])?;
    let init = GaussianLaw::isotropic(2, 1.0 / target.m())?;
    let plan = planner::plan_strong(target.m(), target.l(), 2, 0.1)?;
    Ok((target, init, plan))
}

/// The strong-convexity schedule reaches its KL target, and the derived TV
/// and W2 guarantees hold.
pub fn strong_schedule() -> Result<Vec<Verdict>> {
    let (target, init, plan) = strong_example()?;
    let kl = go::kl_trajectory(&target, &init, plan.h, plan.k)?;
    let mut init_gap = Check::new("kl-init-bound", "kl(p0, p*) <= dL/m", MARGIN_TOL);
    init_gap.le(kl[0], planner::kl_init_bound(target.m(), target.l(), 2));
    let mut fin = Check::new("strong_kl_final", "kl(p_k, p*) <= epsilon under the strong schedule", MARGIN_TOL);
    fin.le(*kl.last().expect("trajectory includes step 0"), plan.epsilon);

    let t1 = QuadraticTarget::diagonal(&[1.0])?;
    let eps = 0.05;
    let p1 = planner::plan_strong(1.0, 1.0, 1, eps)?;
    let last = go::ula_law_after(&GaussianLaw::isotropic(1, 1.0)?, &t1, p1.h, p1.k)?;
    let star = t1.target_law();
    let mut tv = Check::new("strong_tv_final", "tv(p_k, p*) <= sqrt(epsilon)", MARGIN_TOL);
    tv.le(go::tv_gaussian_1d(&last, &star)?, eps.sqrt());
    let mut w2 = Check::new("strong_w2_final", "w2(p_k, p*) <= sqrt(2 epsilon / m)", MARGIN_TOL);
    w2.le(go::w2_gaussian(&last, &star)?, (2.0 * eps / t1.m()).sqrt());
    Ok(vec![init_gap.finish(), fin.finish(), tv.finish(), w2.finish()])
}

/// Second moments stay below `4d/m` along the strong schedule, exactly and
/// for a Monte Carlo replica.
pub fn moments(seed: u64) -> Result<Vec<Verdict>> {
    let (target, init, plan) = strong_example()?;
    let bound = 4.0 * target.dim() as f64 / target.m();
    let (rows, _) = go::trajectory(&target, &init, plan.h, plan.k, 1)?;
    let mut exact = Check::new("moment-bound-exact", "E||x_k||^2 <= 4d/m at every step", MARGIN_TOL);
    for r in &rows {
        exact.le(r.second_moment, bound);
    }

    let pot = Arc::new(Potential::quadratic_diagonal(vec![1.0, 2.0])?);
    let mut ens = Ensemble::init(pot, &InitLaw::GaussianOneOverM, 20_000, seed)?;
    let trace = chain::run(&mut ens, &plan, 50)?;
    let mut mc = Check::new("moment-bound-mc", "empirical E||x_k||^2 <= 4d/m + 5 SE at every recorded step", 0.0);
    for r in &trace {
        mc.le(r.second_moment, bound + 5.0 * r.second_moment_se);
    }
    Ok(vec![exact.finish(), mc.finish()])
}

/// W2 to the chain's stationary law never grows; synchronously coupled
/// chains never drift apart.
pub fn contraction(seed: u64) -> Result<Vec<Verdict>> {
    let (target, init, plan) = strong_example()?;
    let pi = go::stationary_law(&target, plan.h)?;
    let mut exact = Check::new("w2-contraction-exact", "w2(p_{k+1}, pi_h) <= w2(p_k, pi_h)", 1e-12);
    let mut law = init;
    let mut prev = go::w2_gaussian(&law, &pi)?;
    for _ in 0..plan.k {
        law = go::ula_step_law(&law, &target, plan.h)?;
        let cur = go::w2_gaussian(&law, &pi)?;
        exact.le(cur, prev);
        prev = cur;
    }

    let pot = Arc::new(Potential::huber(1.0, 1)?);
    let a = InitLaw::Gaussian { mean: vec![2.0], cov_diag: vec![4.0] };
    let b = InitLaw::Gaussian { mean: vec![-1.0], cov_diag: vec![0.25] };
    let trace = coupled_run(pot, &a, &b, 0.1, 200, 10_000, seed)?;
    let mut coupled = Check::new("coupled-rms-nonincreasing", "rms_{k+1} <= rms_k + 5 SE", 0.0);
    for i in 1..trace.rms.len() {
        let se = trace.se[i].hypot(trace.se[i - 1]);
        coupled.le(trace.rms[i], trace.rms[i - 1] + 5.0 * se);
    }
    Ok(vec![exact.finish(), coupled.finish()])
}

/// Ensemble moments against the exact law after 200 steps.
pub fn sampler(seed: u64) -> Result<Vec<Verdict>> {
    let (h, k, n) = (0.01, 200, 50_000);
    let mean = vec![1.0, -1.0];
    let var = vec![2.0, 0.5];
    let pot = Arc::new(Potential::quadratic_diagonal(vec![1.0, 2.0])?);
    let mut ens = Ensemble::init(pot, &InitLaw::Gaussian { mean: mean.clone(), cov_diag: var.clone() }, n, seed)?;
    for _ in 0..k {
        ens.step(h)?;
    }
    let target = QuadraticTarget::diagonal(&[1.0, 2.0])?;
    let law = go::ula_law_after(&GaussianLaw::diagonal(&mean, &var)?, &target, h, k)?;
    let z = metrics::z_scores_vs_oracle(&metrics::summarize(&ens)?, &law)?;
    let mut check = Check::new("sampler-z-scores", "|z| <= 5 for every moment against the exact law", 0.0);
    for v in z.mean.iter().chain(&z.cov).chain(std::iter::once(&z.second_moment)) {
        check.le(v.abs(), 5.0);
    }
    Ok(vec![check.finish()])
}

/// Outcome of the weakly convex grid experiment, kept for reporting.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeakRun {
    pub c1: f64,
    pub c2: f64,
    pub kl0: f64,
    pub h_prime: f64,
    pub plan: planner::StepPlan,
    pub steps_run: u64,
    pub final_kl: f64,
}

/// Grid constants `C1 = W2(p0, p*)`, `C2 = √E_{p*}x²` and `KL(p0 ‖ p*)`.
pub fn weak_constants(p0: &grid::GridDensity, target: &grid::GridDensity) -> Result<(f64, f64, f64)> {
    Ok((grid::w2_grid_1d(p0, target)?, grid::second_moment_grid(target).sqrt(), grid::kl_grid(p0, target)?))
}

/// Plan and run the weak schedule for `U = huber(1)` from `N(0, 4)` on the
/// grid, with `h′` estimated on the same grid.
pub fn weak_run(epsilon: f64) -> Result<WeakRun> {
    let pot = Potential::huber(1.0, 1)?;
    let spec = GridSpec::default_for(&pot);
    let p0 = grid::discretize_law(&GridInit::Gaussian { mean: 0.0, var: 4.0 }, &spec)?;
    let target = grid::target_density_grid(&pot, &spec)?;
    let (c1, c2, kl0) = weak_constants(&p0, &target)?;
    let h_prime = grid::estimate_h_prime(&pot, c1, &spec)?.h_prime;
    let plan = planner::plan_weak(WeakPlanInputs { c1, c2, h_prime, kl0 }, pot.l(), 1, epsilon)?;
    let steps_run = plan.k.min(WEAK_STEP_CAP);
    let (rows, _) = grid::grid_run(&p0, &target, &pot, plan.h, steps_run, steps_run)?;
    let final_kl = rows.last().expect("grid run records its last step").kl;
    Ok(WeakRun { c1, c2, kl0, h_prime, plan, steps_run, final_kl })
}

/// Weakly convex target: monotone KL, bounded second moment and the weak
/// schedule reaching its target.
pub fn weak_convexity() -> Result<Vec<Verdict>> {
    let pot = Potential::huber(1.0, 1)?;
    let spec = GridSpec::default_for(&pot);
    let p0 = grid::discretize_law(&GridInit::Gaussian { mean: 0.0, var: 4.0 }, &spec)?;
    let target = grid::target_density_grid(&pot, &spec)?;
    let (c1, c2, _) = weak_constants(&p0, &target)?;

    let (rows, _) = grid::grid_run(&p0, &target, &pot, 0.01, 500, 1)?;
    let mut decrease = Check::new("weak-kl-decreasing", "kl(p_{k+1}, p*) < kl(p_k, p*) for 500 steps", 0.0);
    let mut moment = Check::new("weak-moment-bound", "E x_k^2 <= 4 (C1^2 + C2^2) at every step", MARGIN_TOL);
    for w in rows.windows(2) {
        // strict: a zero margin counts as a failure
        let gap = w[0].kl - w[1].kl;
        decrease.le(0.0, if gap > 0.0 { gap } else { gap.min(-f64::MIN_POSITIVE) });
    }
    for r in &rows {
        moment.le(r.second_moment, 4.0 * (c1 * c1 + c2 * c2));
    }

    let eps = 0.2;
    let run = weak_run(eps)?;
    let mut fin = Check::new("weak_kl_final", "kl(p_k, p*) <= epsilon under the weak schedule", MARGIN_TOL);
    fin.le(run.final_kl, eps);
    Ok(vec![decrease.finish(), moment.finish(), fin.finish()])
}

fn exact_eq(check: &mut Check, got: f64, want: f64) {
    check.le((got - want).abs(), 0.0);
}

/// Fixed planner outputs.
pub fn planner_regression() -> Result<Vec<Verdict>> {
    let rel = |got: f64, want: f64| (got - want).abs() / want.abs().max(1e-300);
    let mut strong = Check::new("plan-strong-regression", "plan_strong(1, 2, 2, 0.1) = (7.8125e-4, 4722)", 1e-12);
    let p = planner::plan_strong(1.0, 2.0, 2, 0.1)?;
    strong.le(rel(p.h, 7.8125e-4), 0.0);
    strong.le((p.k as f64 - 4722.0).abs(), 0.0);

    let mut weak = Check::new("plan-weak-regression", "plan_weak(1, 1, inf, e; 1, 1, 0.1) = (0.01/48, 105600)", 1e-12);
    let w = planner::plan_weak(
        WeakPlanInputs { c1: 1.0, c2: 1.0, h_prime: f64::INFINITY, kl0: std::f64::consts::E },
        1.0,
        1,
        0.1,
    )?;
    weak.le(rel(w.h, 0.01 / 48.0), 0.0);
    weak.le((w.k as f64 - 105_600.0).abs(), 0.0);

    let mut init = Check::new("kl-init-bound-regression", "kl_init_bound(1, 2, 3) = 6", 1e-12);
    exact_eq(&mut init, planner::kl_init_bound(1.0, 2.0, 3), 6.0);
    let mut disc = Check::new("discretization-bound-regression", "discretization_error_bound(1, 0.01, 1, 4) = 0.24", 1e-12);
    exact_eq(&mut disc, planner::discretization_error_bound(1.0, 0.01, 1, 4.0), 0.24);
    Ok(vec![strong.finish(), weak.finish(), init.finish(), disc.finish()])
}

/// Curvature constants and gradients of the built-in kinds.
pub fn potentials(seed: u64) -> Result<Vec<Verdict>> {
    let full = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
    let kinds = [
        Potential::quadratic_diagonal(vec![1.0, 2.0, 5.0])?,
        Potential::quadratic_full(full)?,
        Potential::huber(1.0, 3)?,
    ];
    let mut check = Check::new(
        "potential-constants",
        "m||x-y||^2 <= <g(x)-g(y), x-y> <= L||x-y||^2, co-coercivity, gradient matches finite differences",
        MARGIN_TOL,
    );
    for (i, p) in kinds.iter().enumerate() {
        let r = p.validate_constants(500, noise::derive_seed(seed, i as u64))?;
        check.le(r.max_violation, 0.0);
    }
    Ok(vec![check.finish()])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_suite_lists_names() {
        let err = run_suite("nosuchsuite", 1).unwrap_err().to_string();
        assert!(err.contains("inequalities") && err.contains("oracle-equivalence"));
    }

    #[test]
    fn check_fails_on_nan_and_empty() {
        let mut c = Check::new("x", "x", 0.0);
        assert!(!Check::new("y", "y", 0.0).finish().pass);
        c.le(f64::NAN, 1.0);
        assert!(!c.finish().pass);
    }

    #[test]
    fn inequalities_pass() {
        let v = inequalities(1).unwrap();
        assert_eq!(v.len(), 5);
        for verdict in &v {
            assert!(verdict.pass, "{verdict:?}");
        }
    }

    #[test]
    fn planner_regression_passes() {
        assert!(planner_regression().unwrap().iter().all(|v| v.pass));
    }
}
