//! Unadjusted Langevin sampling with KL-convergence schedules.
//!
//! The crate provides
//!
//! * [`potentials`]: log-concave targets `p* ∝ e^{−U}` with constants `(m, L, d)`;
//! * [`planner`]: step-size and iteration-count schedules for strongly and
//!   weakly convex targets;
//! * [`chain`]: the sampler, run over ensembles with counter-based noise;
//! * [`gaussian_oracle`] and [`grid_oracle`]: exact law propagation for
//!   quadratic targets and 1-D grid propagation for general ones;
//! * [`metrics`] and [`verify`]: estimators and property suites that tie the
//!   sampler to the oracles;
//! * [`config`], [`experiment`] and [`report`]: TOML-driven runs with JSON
//!   reports and CSV tables.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN

pub mod chain;
pub mod config;
pub mod error;
pub mod experiment;
pub mod gaussian_oracle;
pub mod grid_oracle;
pub mod metrics;
pub mod noise;
pub mod planner;
pub mod potentials;
pub mod quadrature;
pub mod report;
pub mod verify;

pub use nalgebra;

pub use chain::{coupled_run, run, CoupledTrace, Ensemble, InitLaw, TraceRow};
pub use error::{Error, Result};
pub use gaussian_oracle::{GaussianLaw, QuadraticTarget};
pub use grid_oracle::{GridDensity, GridInit, GridSpec};
pub use metrics::{summarize, MomentSummary, ZScores};
pub use planner::{Regime, StepPlan, WeakPlanInputs};
pub use potentials::{Potential, PotentialKind, PotentialSpec};
