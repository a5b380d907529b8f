//! Executes a [`RunConfig`]: plans the schedule, runs the ensemble and the
//! enabled oracles in lockstep, and judges the outcome.

use std::sync::Arc;

use crate::chain::{Ensemble, InitLaw, TraceRow};
use crate::config::{Resolved, RunConfig, RunRegime};
use crate::error::{Error, Result};
use crate::gaussian_oracle::{self as go, GaussianLaw, OracleRow, QuadraticTarget};
use crate::grid_oracle::{self as grid, GridDensity, GridInit, GridRow, GridSpec};
use crate::metrics;
use crate::planner::{self, StepPlan, WeakPlanInputs};
use crate::potentials::Potential;
use crate::report::RunReport;
use crate::verify::{Check, MARGIN_TOL};

fn grid_spec(cfg: &RunConfig, pot: &Potential) -> Result<GridSpec> {
    let default = GridSpec::default_for(pot);
    let o = &cfg.oracles;
    GridSpec::new(
        o.grid_min.unwrap_or(default.x_min),
        o.grid_max.unwrap_or(default.x_max),
        o.grid_n.unwrap_or(default.n),
    )
}

fn grid_init(init: &InitLaw, pot: &Potential) -> Result<GridInit> {
    let (mean, var) = init.diagonal_moments(pot.dim(), pot.m())?;
    if mean.len() != 1 {
        return Err(Error::Unsupported(format!("the grid oracle is one-dimensional, d = {}", mean.len())));
    }
    Ok(match init {
        InitLaw::Point { .. } => GridInit::Point { x: mean[0] },
        _ => GridInit::Gaussian { mean: mean[0], var: var[0] },
    })
}

struct GridSetup {
    p0: GridDensity,
    target: GridDensity,
}

impl GridSetup {
    fn new(cfg: &RunConfig, pot: &Potential) -> Result<Self> {
        let spec = grid_spec(cfg, pot)?;
        Ok(Self {
            p0: grid::discretize_law(&grid_init(&cfg.init, pot)?, &spec)?,
            target: grid::target_density_grid(pot, &spec)?,
        })
    }
}

fn resolve_weak(cfg: &RunConfig, pot: &Potential, setup: &mut Option<GridSetup>) -> Result<WeakPlanInputs> {
    let w = cfg.weak.as_ref().ok_or_else(|| Error::Config("regime \"weak\" needs a [weak] section".into()))?;
    let mut grid_value = |f: &dyn Fn(&GridSetup) -> Result<f64>| -> Result<f64> {
        if setup.is_none() {
            *setup = Some(GridSetup::new(cfg, pot)?);
        }
        f(setup.as_ref().expect("grid setup was just created"))
    };
    let c1 = match w.c1()? {
        Resolved::Value(v) => v,
        Resolved::Estimate => grid_value(&|g| grid::w2_grid_1d(&g.p0, &g.target))?,
    };
    let c2 = match w.c2()? {
        Resolved::Value(v) => v,
        Resolved::Estimate => grid_value(&|g| Ok(grid::second_moment_grid(&g.target).sqrt()))?,
    };
    let kl0 = match w.kl0()? {
        Resolved::Value(v) => v,
        Resolved::Estimate => grid_value(&|g| grid::kl_grid(&g.p0, &g.target))?,
    };
    let h_prime = match w.h_prime()? {
        Resolved::Value(v) => v,
        Resolved::Estimate => {
            grid_value(&|g| Ok(grid::estimate_h_prime(pot, c1, g.target.spec())?.h_prime))?
        }
    };
    Ok(WeakPlanInputs { c1, c2, h_prime, kl0 })
}

fn init_second_moment(init: &InitLaw, pot: &Potential) -> Result<f64> {
    let (mean, var) = init.diagonal_moments(pot.dim(), pot.m())?;
    Ok(mean.iter().map(|m| m * m).sum::<f64>() + var.iter().sum::<f64>())
}

fn oracle_row(step: u64, law: &GaussianLaw, target: &QuadraticTarget, star: &GaussianLaw) -> Result<OracleRow> {
    Ok(OracleRow {
        step,
        kl: go::kl_gaussian(law, star)?,
        w2: go::w2_gaussian(law, star)?,
        fisher: go::fisher_info_relative(law, target)?,
        second_moment: law.second_moment(),
    })
}

/// RMS distance between paired chains and its delta-method standard error.
fn coupled_rms(a: &Ensemble, b: &Ensemble) -> (f64, f64) {
    let n = a.n_chains() as f64;
    let d = a.dim();
    let (mut s1, mut s2) = (0.0, 0.0);
    for (ra, rb) in a.states().chunks(d).zip(b.states().chunks(d)) {
        let d2: f64 = ra.iter().zip(rb).map(|(x, y)| (x - y) * (x - y)).sum();
        s1 += d2;
        s2 += d2 * d2;
    }
    let msd = s1 / n;
    let var = ((s2 - n * msd * msd) / (n - 1.0)).max(0.0);
    let rms = msd.sqrt();
    (rms, if rms > 0.0 { (var / n).sqrt() / (2.0 * rms) } else { 0.0 })
}

pub fn execute(cfg: &RunConfig) -> Result<RunReport> {
    cfg.validate()?;
    let pot = Arc::new(Potential::from_spec(&cfg.potential)?);
    let (m, l, d) = (pot.m(), pot.l(), pot.dim());
    let mut grid_setup: Option<GridSetup> = None;
    let mut weak_inputs = None;

    let plans: Vec<StepPlan> = match cfg.regime {
        RunRegime::Strong => vec![planner::plan_strong(m, l, d, cfg.epsilon)?],
        RunRegime::Halving => {
            let kl0 = match cfg.halving.as_ref().and_then(|h| h.kl0) {
                Some(v) => v,
                None => planner::kl_init_bound(m, l, d),
            };
            planner::plan_halving(m, l, d, cfg.epsilon, kl0)?
        }
        RunRegime::Weak => {
            let inputs = resolve_weak(cfg, &pot, &mut grid_setup)?;
            weak_inputs = Some(inputs);
            vec![planner::plan_weak(inputs, l, d, cfg.epsilon)?]
        }
    };

    let mut ens = Ensemble::init(pot.clone(), &cfg.init, cfg.n_chains, cfg.seed)?;
    let mut partner = match &cfg.coupling {
        Some(c) => Some(Ensemble::init(pot.clone(), &c.init, cfg.n_chains, cfg.seed)?),
        None => None,
    };

    let mut gauss = if cfg.oracles.gaussian {
        let target = QuadraticTarget::from_potential(&pot)?;
        let (mean, var) = cfg.init.diagonal_moments(d, m)?;
        let law = GaussianLaw::diagonal(&mean, &var)?;
        let star = target.target_law();
        Some((target, star, law))
    } else {
        None
    };
    let mut grid_state = if cfg.oracles.grid {
        let setup = match grid_setup.take() {
            Some(s) => s,
            None => GridSetup::new(cfg, &pot)?,
        };
        Some(setup)
    } else {
        None
    };
    let mut grid_cur = grid_state.as_ref().map(|g| g.p0.clone());

    let mut chain_rows: Vec<TraceRow> = Vec::new();
    let mut coupled_se: Vec<f64> = Vec::new();
    let mut gauss_rows: Vec<OracleRow> = Vec::new();
    let mut grid_rows: Vec<GridRow> = Vec::new();
    let total_steps: u64 = plans.iter().map(|p| p.k).sum();

    let mut record = |step: u64,
                      ens: &Ensemble,
                      partner: &Option<Ensemble>,
                      gauss: &Option<(QuadraticTarget, GaussianLaw, GaussianLaw)>,
                      grid_cur: &Option<GridDensity>|
     -> Result<()> {
        let mut row = ens.row_summary();
        if let Some(p) = partner {
            let (rms, se) = coupled_rms(ens, p);
            row.coupled_rms = Some(rms);
            coupled_se.push(se);
        }
        chain_rows.push(row);
        if let Some((target, star, law)) = gauss {
            gauss_rows.push(oracle_row(step, law, target, star)?);
        }
        if let (Some(cur), Some(setup)) = (grid_cur, &grid_state) {
            grid_rows.push(grid::grid_row(step, cur, &setup.target)?);
        }
        Ok(())
    };

    record(0, &ens, &partner, &gauss, &grid_cur)?;
    let mut step = 0u64;
    for plan in &plans {
        for _ in 0..plan.k {
            ens.step(plan.h)?;
            if let Some(p) = partner.as_mut() {
                p.step(plan.h)?;
            }
            if let Some((target, _, law)) = gauss.as_mut() {
                *law = go::ula_step_law(law, target, plan.h)?;
            }
            if let Some(cur) = grid_cur.as_mut() {
                *cur = grid::ula_step_grid(cur, &pot, plan.h)?;
            }
            step += 1;
            if step.is_multiple_of(cfg.record_every) || step == total_steps {
                record(step, &ens, &partner, &gauss, &grid_cur)?;
            }
        }
    }

    let mut verdicts = Vec::new();
    let final_name: &'static str = match cfg.regime {
        RunRegime::Strong => "strong_kl_final",
        RunRegime::Weak => "weak_kl_final",
        RunRegime::Halving => "halving_kl_final",
    };
    if let (Some((_, _, law)), Some(last)) = (&gauss, gauss_rows.last()) {
        let mut c = Check::new(final_name, "kl(p_k, p*) <= epsilon, exact law", MARGIN_TOL);
        c.le(last.kl, cfg.epsilon);
        verdicts.push(c.finish());
        let mut z = Check::new("sampler-z-scores", "|z| <= 5 for every final moment against the exact law", 0.0);
        let scores = metrics::z_scores_vs_oracle(&metrics::summarize(&ens)?, law)?;
        for v in scores.mean.iter().chain(&scores.cov).chain(std::iter::once(&scores.second_moment)) {
            z.le(v.abs(), 5.0);
        }
        verdicts.push(z.finish());
    }
    if let Some(last) = grid_rows.last() {
        let name = match cfg.regime {
            RunRegime::Strong => "strong_kl_final_grid",
            RunRegime::Weak => "weak_kl_final_grid",
            RunRegime::Halving => "halving_kl_final_grid",
        };
        let mut c = Check::new(name, "kl(p_k, p*) <= epsilon, grid law", MARGIN_TOL);
        c.le(last.kl, cfg.epsilon);
        verdicts.push(c.finish());
    }
    if m > 0.0 && cfg.regime != RunRegime::Weak {
        let bound = 4.0 * d as f64 / m;
        if init_second_moment(&cfg.init, &pot)? <= bound {
            let mut c = Check::new("moment-bound-mc", "empirical E||x_k||^2 <= 4d/m + 5 SE at every recorded step", 0.0);
            for r in &chain_rows {
                c.le(r.second_moment, bound + 5.0 * r.second_moment_se);
            }
            verdicts.push(c.finish());
            if !gauss_rows.is_empty() {
                let mut c = Check::new("moment-bound-exact", "E||x_k||^2 <= 4d/m at every recorded step", MARGIN_TOL);
                for r in &gauss_rows {
                    c.le(r.second_moment, bound);
                }
                verdicts.push(c.finish());
            }
        }
    }
    if let Some(w) = weak_inputs {
        if !grid_rows.is_empty() {
            let mut c = Check::new("weak-moment-bound", "E x_k^2 <= 4 (C1^2 + C2^2) at every recorded step", MARGIN_TOL);
            for r in &grid_rows {
                c.le(r.second_moment, 4.0 * (w.c1 * w.c1 + w.c2 * w.c2));
            }
            verdicts.push(c.finish());
        }
    }
    if partner.is_some() && plans.iter().all(|p| p.h <= 1.0 / l) {
        let mut c = Check::new("coupled-rms-nonincreasing", "rms_{k+1} <= rms_k + 5 SE at recorded steps", 0.0);
        for i in 1..chain_rows.len() {
            let (prev, cur) = (chain_rows[i - 1].coupled_rms, chain_rows[i].coupled_rms);
            if let (Some(prev), Some(cur)) = (prev, cur) {
                c.le(cur, prev + 5.0 * coupled_se[i].hypot(coupled_se[i - 1]));
            }
        }
        verdicts.push(c.finish());
    }

    Ok(RunReport {
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed: cfg.seed,
        config: cfg.clone(),
        plans,
        weak_inputs,
        total_steps,
        chain: chain_rows,
        gaussian: gauss.map(|_| gauss_rows),
        grid: grid_state.take().map(|_| grid_rows),
        verdicts,
    })
}

