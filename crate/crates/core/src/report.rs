//! Run reports (JSON) and metric tables (CSV).

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::chain::TraceRow;
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::gaussian_oracle::OracleRow;
use crate::grid_oracle::GridRow;
use crate::planner::{StepPlan, WeakPlanInputs};
use crate::verify::Verdict;

pub const CHAIN_CSV: &str = "chain.csv";
pub const GAUSSIAN_CSV: &str = "gaussian.csv";
pub const GRID_CSV: &str = "grid.csv";
pub const REPORT_JSON: &str = "report.json";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub version: String,
    pub seed: u64,
    pub config: RunConfig,
    /// One plan per stage; a single entry outside the halving regime.
    pub plans: Vec<StepPlan>,
    /// Weak-regime inputs after grid estimation.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weak_inputs: Option<WeakPlanInputs>,
    pub total_steps: u64,
    pub chain: Vec<TraceRow>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gaussian: Option<Vec<OracleRow>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<Vec<GridRow>>,
    pub verdicts: Vec<Verdict>,
}

impl RunReport {
    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.pass)
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn chain_csv(rows: &[TraceRow]) -> String {
    let mut s = String::from("step,second_moment,mean_norm,coupled_rms\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{},{}", r.step, r.second_moment, r.mean_norm, opt(r.coupled_rms));
    }
    s
}

pub fn gaussian_csv(rows: &[OracleRow]) -> String {
    let mut s = String::from("step,kl,w2,fisher,second_moment\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{},{},{}", r.step, r.kl, r.w2, r.fisher, r.second_moment);
    }
    s
}

pub fn grid_csv(rows: &[GridRow]) -> String {
    let mut s = String::from("step,kl,tv,w2,second_moment\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{},{},{}", r.step, r.kl, r.tv, r.w2, r.second_moment);
    }
    s
}

/// Write the report and its tables into `dir`. On failure every file this
/// call created is removed again.
pub fn write_outputs(report: &RunReport, dir: &Path) -> Result<Vec<PathBuf>> {
    let json = serde_json::to_string_pretty(report).map_err(|e| Error::Io(e.to_string()))?;
    let mut files = vec![(CHAIN_CSV, chain_csv(&report.chain))];
    if let Some(rows) = &report.gaussian {
        files.push((GAUSSIAN_CSV, gaussian_csv(rows)));
    }
    if let Some(rows) = &report.grid {
        files.push((GRID_CSV, grid_csv(rows)));
    }
    files.push((REPORT_JSON, json + "\n"));

    let created_dir = !dir.exists();
    let mut written = Vec::new();
    let result = (|| -> Result<()> {
        std::fs::create_dir_all(dir)
            .map_err(|e| Error::Io(format!("cannot create {}: {e}", dir.display())))?;
        for (name, body) in &files {
            let path = dir.join(name);
            written.push(path.clone());
            std::fs::write(&path, body).map_err(|e| Error::Io(format!("cannot write {}: {e}", path.display())))?;
        }
        Ok(())
    })();
    if let Err(e) = result {
        remove_partial(&written, created_dir.then_some(dir));
        return Err(e);
    }
    Ok(written)
}

fn remove_partial(files: &[PathBuf], dir: Option<&Path>) {
    for f in files {
        let _ = std::fs::remove_file(f);
    }
    if let Some(d) = dir {
        let _ = std::fs::remove_dir(d);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn headers_and_empty_coupling() {
        let rows = [TraceRow { step: 0, second_moment: 2.5, second_moment_se: 0.1, mean_norm: 0.0, coupled_rms: None }];
        assert_eq!(chain_csv(&rows), "step,second_moment,mean_norm,coupled_rms\n0,2.5,0,\n");
        let g = [GridRow { step: 3, kl: 0.5, tv: 0.25, w2: 1.0, second_moment: 2.0 }];
        assert_eq!(grid_csv(&g), "step,kl,tv,w2,second_moment\n3,0.5,0.25,1,2\n");
        assert!(gaussian_csv(&[]).starts_with("step,kl,w2,fisher,second_moment\n"));
    }
}
