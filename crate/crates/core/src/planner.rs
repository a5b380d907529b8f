//! Step-size and iteration-count schedules for the unadjusted Langevin chain.
//!
//! Strongly convex targets use `h = mε/(16dL²)` with
//! `k = 16 (L²/m²) d ln(dL/(mε)) / ε`; weakly convex targets use the
//! three-cap rule driven by `C1 = W2(p0, p*)`, `C2 = √E_{p*}‖x‖²` and the
//! step cap `h′`. Iteration counts are ceilings of the real-valued formulas.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    Strong,
    Weak,
    HalvingStage,
}

/// Accuracy target a plan was derived for.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "metric", rename_all = "lowercase")]
pub enum PlanTarget {
    Kl,
    /// `TV ≤ δ`, planned with `ε = δ²`.
    Tv { delta: f64 },
    /// `W2 ≤ δ`, planned with `ε = mδ²/2`; `loose_epsilon = mδ²` is the
    /// larger value that does not by itself guarantee the target.
    W2 { delta: f64, loose_epsilon: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepPlan {
    pub h: f64,
    pub k: u64,
    pub epsilon: f64,
    pub regime: Regime,
    pub target: PlanTarget,
    pub notes: Vec<String>,
}

impl StepPlan {
    pub fn new(h: f64, k: u64, epsilon: f64, regime: Regime) -> Result<Self> {
        if !(h.is_finite() && h > 0.0) {
            return Err(Error::InvalidArgument(format!("step size must be positive, got {h}")));
        }
        if k == 0 {
            return Err(Error::InvalidArgument("iteration count must be at least 1".into()));
        }
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(Error::InvalidArgument(format!("epsilon must be positive, got {epsilon}")));
        }
        Ok(Self { h, k, epsilon, regime, target: PlanTarget::Kl, notes: Vec::new() })
    }

    /// Total simulated time `h·k`.
    pub fn horizon(&self) -> f64 {
        self.h * self.k as f64
    }
}

/// Inputs of the weak-convexity planner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeakPlanInputs {
    /// `W2(p0, p*)`.
    pub c1: f64,
    /// `√E_{p*}‖x‖²`.
    pub c2: f64,
    /// Step cap; `f64::INFINITY` when no cap applies.
    pub h_prime: f64,
    /// Initial KL gap `F(p0) − F(p*)` in nats.
    pub kl0: f64,
}

/// Ceiling that ignores floating-point noise just above an integer.
pub(crate) fn ceil_count(x: f64) -> u64 {
    let r = x.round();
    if (x - r).abs() <= 1e-12 * r.abs().max(1.0) {
        r as u64
    } else {
        x.ceil() as u64
    }
}

fn check_strong_inputs(m: f64, l: f64, d: usize, epsilon: f64) -> Result<()> {
    if !(m.is_finite() && m > 0.0 && l.is_finite() && m <= l) {
        return Err(Error::Planning(format!("need 0 < m <= L, got m = {m}, L = {l}")));
    }
    if d == 0 {
        return Err(Error::Planning("dimension must be positive".into()));
    }
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(Error::Planning(format!("epsilon must be positive, got {epsilon}")));
    }
    Ok(())
}

/// Strong-convexity schedule reaching `KL ≤ ε` from `p0 = N(0, I/m)`.
pub fn plan_strong(m: f64, l: f64, d: usize, epsilon: f64) -> Result<StepPlan> {
    check_strong_inputs(m, l, d, epsilon)?;
    let df = d as f64;
    let ratio = df * l / (m * epsilon);
    if ratio <= 1.0 {
        return Err(Error::Planning(format!(
            "dL/(m eps) = {ratio} <= 1: the initial KL bound is already below epsilon"
        )));
    }
    let h = m * epsilon / (16.0 * df * l * l);
    let k = ceil_count(16.0 * (l * l) / (m * m) * df * ratio.ln() / epsilon);
    let mut plan = StepPlan::new(h, k, epsilon, Regime::Strong)?;
    plan.notes.push(format!("h = m eps/(16 d L^2); k = ceil(16 (L/m)^2 d ln(dL/(m eps))/eps), ln factor {:.6}", ratio.ln()));
    Ok(plan)
}

/// Schedule for `TV(p_kh, p*) ≤ δ` via Pinsker with `ε = δ²`.
pub fn plan_strong_tv(m: f64, l: f64, d: usize, delta: f64) -> Result<StepPlan> {
    if !(delta.is_finite() && delta > 0.0) {
        return Err(Error::Planning(format!("delta must be positive, got {delta}")));
    }
    let mut plan = plan_strong(m, l, d, delta * delta)?;
    plan.target = PlanTarget::Tv { delta };
    plan.notes.push(format!("TV target {delta}: eps = delta^2, TV <= sqrt(eps)"));
    Ok(plan)
}

/// Schedule for `W2(p_kh, p*) ≤ δ`.
///
/// Uses `ε = mδ²/2`, which makes `√(2ε/m) = δ` exact; the looser `ε = mδ²`
/// is kept on the plan for reference.
pub fn plan_strong_w2(m: f64, l: f64, d: usize, delta: f64) -> Result<StepPlan> {
    if !(delta.is_finite() && delta > 0.0) {
        return Err(Error::Planning(format!("delta must be positive, got {delta}")));
    }
    let epsilon = m * delta * delta / 2.0;
    let mut plan = plan_strong(m, l, d, epsilon)?;
    plan.target = PlanTarget::W2 { delta, loose_epsilon: m * delta * delta };
    plan.notes.push(format!(
        "W2 target {delta}: eps = m delta^2/2 so sqrt(2 eps/m) = delta (eps = m delta^2 would only give sqrt(2) delta)"
    ));
    Ok(plan)
}

/// Weak-convexity schedule.
///
/// `h = (1/48)·min{ε/(C1(C1+C2)L²), ε²/(C1² d L²), h′}`, the smaller of the
/// two printed variants of the first cap, and
/// `k = ceil(2C1²/(εh) + 2C1²·max(0, ln kl0)/h)`.
pub fn plan_weak(inputs: WeakPlanInputs, l: f64, d: usize, epsilon: f64) -> Result<StepPlan> {
    let WeakPlanInputs { c1, c2, h_prime, kl0 } = inputs;
    for (name, v) in [("C1", c1), ("C2", c2), ("kl0", kl0), ("L", l), ("epsilon", epsilon)] {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::Planning(format!("{name} must be positive, got {v}")));
        }
    }
    if !(h_prime > 0.0) || h_prime.is_nan() {
        return Err(Error::Planning(format!("h' must be positive, got {h_prime}")));
    }
    if d == 0 {
        return Err(Error::Planning("dimension must be positive".into()));
    }
    let df = d as f64;
    let caps = [
        ("eps/(C1(C1+C2)L^2)", epsilon / (c1 * (c1 + c2) * l * l)),
        ("eps^2/(C1^2 d L^2)", epsilon * epsilon / (c1 * c1 * df * l * l)),
        ("h'", h_prime),
    ];
    let (binding, cap) = caps
        .iter()
        .copied()
        .fold(("", f64::INFINITY), |best, c| if c.1 < best.1 { c } else { best });
    let h = cap / 48.0;
    let log_term = kl0.ln().max(0.0);
    let k = ceil_count(2.0 * c1 * c1 / (epsilon * h) + 2.0 * c1 * c1 * log_term / h);
    let mut plan = StepPlan::new(h, k, epsilon, Regime::Weak)?;
    plan.notes.push(format!("binding cap: {binding}"));
    if kl0 <= 1.0 {
        plan.notes.push(format!("kl0 = {kl0} <= 1: log term clamped to 0"));
    }
    Ok(plan)
}

/// Restart schedule that halves the KL gap in each stage.
///
/// Stage `j` targets `ε_j = kl0/2^{j+1}` for `j < J = ceil(log2(kl0/ε))`, with
/// `h_j = mε_j/(16dL²)` and `k_j = ceil(16 (L²/m²) d ln2 / ε_j)`.
pub fn plan_halving(m: f64, l: f64, d: usize, epsilon: f64, kl0: f64) -> Result<Vec<StepPlan>> {
    check_strong_inputs(m, l, d, epsilon)?;
    if !kl0.is_finite() {
        return Err(Error::Planning(format!("kl0 must be finite, got {kl0}")));
    }
    if kl0 <= epsilon {
        return Ok(Vec::new());
    }
    let df = d as f64;
    let stages = ceil_count((kl0 / epsilon).log2()).max(1);
    let mut out = Vec::with_capacity(stages as usize);
    for j in 0..stages {
        let eps_j = kl0 / 2f64.powi(j as i32 + 1);
        let h = m * eps_j / (16.0 * df * l * l);
        let k = ceil_count(16.0 * (l * l) / (m * m) * df * std::f64::consts::LN_2 / eps_j);
        let mut plan = StepPlan::new(h, k, eps_j, Regime::HalvingStage)?;
        plan.notes.push(format!("stage {} of {stages}: halve the gap to {eps_j}", j + 1));
        out.push(plan);
    }
    Ok(out)
}

/// Multiplier of `‖D_{p_t}‖_*` in the per-time discretization error:
/// `2L²h√(E‖x‖²) + 2L√(hd)`.
pub fn discretization_error_bound(l: f64, h: f64, d: usize, second_moment: f64) -> f64 {
    2.0 * l * l * h * second_moment.sqrt() + 2.0 * l * (h * d as f64).sqrt()
}

/// Upper bound `dL/m` on `KL(N(0, I/m) ‖ p*)`.
pub fn kl_init_bound(m: f64, l: f64, d: usize) -> f64 {
    d as f64 * l / m
}
