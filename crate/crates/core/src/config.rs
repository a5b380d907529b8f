//! TOML run configuration.
//!
//! ```toml
//! regime = "strong"          # strong | weak | halving
//! epsilon = 0.1              # KL target in nats
//! n_chains = 20000
//! seed = 1
//! record_every = 50
//! output = "runs/strong"     # directory, created if missing
//!
//! [potential]
//! kind = "quadratic-diagonal"
//! params = [1.0, 2.0]
//!
//! [init]
//! kind = "gaussian_1_over_m" # or "gaussian" (mean, cov_diag) or "point" (x)
//!
//! [weak]                     # regime = "weak" only
//! c1 = "estimate"            # number or "estimate"
//! c2 = "estimate"            # number or "estimate"
//! h_prime = "estimate"       # number, "inf" or "estimate"
//! kl0 = "estimate"           # number or "estimate"
//!
//! [halving]                  # regime = "halving", optional
//! kl0 = 4.0                  # default dL/m
//!
//! [coupling]                 # optional second ensemble under shared noise
//! init = { kind = "point", x = [3.0, 3.0] }
//!
//! [oracles]
//! gaussian = true            # quadratic potentials with a Gaussian init
//! grid = false               # one-dimensional potentials
//! grid_n = 4096              # grid size and range, defaults from the potential
//! grid_min = -12.0
//! grid_max = 12.0
//! ```
//!
//! `"estimate"` values are measured on the grid, so they need `d = 1`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::chain::InitLaw;
use crate::error::{Error, Result};
use crate::potentials::PotentialSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunRegime {
    Strong,
    Weak,
    Halving,
}

/// A number, or a keyword such as `"estimate"` or `"inf"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Param {
    Value(f64),
    Keyword(String),
}

/// Resolved form of a [`Param`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Resolved {
    Value(f64),
    Estimate,
}

impl Param {
    fn resolve(&self, field: &str, allow_inf: bool) -> Result<Resolved> {
        match self {
            Param::Value(v) if v.is_finite() && *v > 0.0 => Ok(Resolved::Value(*v)),
            Param::Value(v) => Err(Error::Config(format!("{field} must be positive, got {v}"))),
            Param::Keyword(k) if k == "estimate" => Ok(Resolved::Estimate),
            Param::Keyword(k) if allow_inf && k == "inf" => Ok(Resolved::Value(f64::INFINITY)),
            Param::Keyword(k) => Err(Error::Config(format!(
                "{field} must be a number{} or \"estimate\", got \"{k}\"",
                if allow_inf { ", \"inf\"" } else { "" }
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeakSection {
    pub c1: Param,
    pub c2: Param,
    pub h_prime: Param,
    pub kl0: Param,
}

impl WeakSection {
    pub fn c1(&self) -> Result<Resolved> {
        self.c1.resolve("weak.c1", false)
    }
    pub fn c2(&self) -> Result<Resolved> {
        self.c2.resolve("weak.c2", false)
    }
    pub fn h_prime(&self) -> Result<Resolved> {
        self.h_prime.resolve("weak.h_prime", true)
    }
    pub fn kl0(&self) -> Result<Resolved> {
        self.kl0.resolve("weak.kl0", false)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HalvingSection {
    pub kl0: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingSection {
    pub init: InitLaw,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSection {
    #[serde(default)]
    pub gaussian: bool,
    #[serde(default)]
    pub grid: bool,
    pub grid_n: Option<usize>,
    pub grid_min: Option<f64>,
    pub grid_max: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub regime: RunRegime,
    pub epsilon: f64,
    pub n_chains: usize,
    pub seed: u64,
    #[serde(default = "default_record_every")]
    pub record_every: u64,
    pub output: PathBuf,
    pub potential: PotentialSpec,
    pub init: InitLaw,
    pub weak: Option<WeakSection>,
    pub halving: Option<HalvingSection>,
    pub coupling: Option<CouplingSection>,
    #[serde(default)]
    pub oracles: OracleSection,
}

fn default_record_every() -> u64 {
    1
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Read a config; a relative `output` is resolved against the config's
    /// directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        if cfg.output.is_relative() {
            if let Some(dir) = path.parent() {
                cfg.output = dir.join(&cfg.output);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::Config(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if self.n_chains < 2 {
            return Err(Error::Config(format!("n_chains must be at least 2, got {}", self.n_chains)));
        }
        if self.record_every == 0 {
            return Err(Error::Config("record_every must be at least 1".into()));
        }
        if self.output.as_os_str().is_empty() {
            return Err(Error::Config("output must name a directory".into()));
        }
        match self.regime {
            RunRegime::Weak => {
                let w = self
                    .weak
                    .as_ref()
                    .ok_or_else(|| Error::Config("regime \"weak\" needs a [weak] section".into()))?;
                w.c1()?;
                w.c2()?;
                w.h_prime()?;
                w.kl0()?;
            }
            RunRegime::Halving => {
                if let Some(kl0) = self.halving.as_ref().and_then(|h| h.kl0) {
                    if !(kl0.is_finite() && kl0 > 0.0) {
                        return Err(Error::Config(format!("halving.kl0 must be positive, got {kl0}")));
                    }
                }
            }
            RunRegime::Strong => {}
        }
        let o = &self.oracles;
        if o.grid_n.is_some_and(|n| n < 16) {
            return Err(Error::Config("oracles.grid_n must be at least 16".into()));
        }
        if o.grid_min.is_some() != o.grid_max.is_some() {
            return Err(Error::Config("give both oracles.grid_min and oracles.grid_max, or neither".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const STRONG: &str = r#"
regime = "strong"
epsilon = 0.1
n_chains = 100
seed = 3
output = "out"

[potential]
kind = "quadratic-diagonal"
params = [1.0, 2.0]

[init]
kind = "gaussian_1_over_m"
"#;

    #[test]
    fn parses_minimal_strong() {
        let c = RunConfig::from_toml(STRONG).unwrap();
        assert_eq!(c.regime, RunRegime::Strong);
        assert_eq!(c.record_every, 1);
        assert_eq!(c.init, InitLaw::GaussianOneOverM);
        assert!(!c.oracles.gaussian && !c.oracles.grid);
    }

    #[test]
    fn weak_needs_section_and_valid_keywords() {
        let text = STRONG.replace("\"strong\"", "\"weak\"");
        assert!(RunConfig::from_toml(&text).is_err());
        let ok = format!("{text}\n[weak]\nc1 = 1.0\nc2 = \"estimate\"\nh_prime = \"inf\"\nkl0 = 2.0\n");
        let c = RunConfig::from_toml(&ok).unwrap();
        let w = c.weak.unwrap();
        assert_eq!(w.h_prime().unwrap(), Resolved::Value(f64::INFINITY));
        assert_eq!(w.c2().unwrap(), Resolved::Estimate);
        let bad = ok.replace("c1 = 1.0", "c1 = \"inf\"");
        assert!(RunConfig::from_toml(&bad).is_err());
        let neg = ok.replace("kl0 = 2.0", "kl0 = -2.0");
        assert!(RunConfig::from_toml(&neg).is_err());
    }

    #[test]
    fn rejects_bad_numbers_and_unknown_keys() {
        assert!(RunConfig::from_toml(&STRONG.replace("epsilon = 0.1", "epsilon = 0.0")).is_err());
        assert!(RunConfig::from_toml(&STRONG.replace("n_chains = 100", "n_chains = 1")).is_err());
        assert!(RunConfig::from_toml(&format!("{STRONG}\nbogus = 1\n")).is_err());
        let gaussian = STRONG.replace("kind = \"gaussian_1_over_m\"", "kind = \"gaussian\"\nmean = [0.0, 0.0]\ncov_diag = [1.0, 1.0]");
        assert!(RunConfig::from_toml(&format!("{gaussian}\nmeans = [1.0, 1.0]\n")).is_err());
        assert!(RunConfig::from_toml(&STRONG.replace("params = [1.0, 2.0]", "params = [1.0, 2.0]\ndims = 2")).is_err());
        assert!(RunConfig::from_toml("regime = \"strong\"").is_err());
    }

    #[test]
    fn init_variants_parse() {
        let text = STRONG.replace(
            "kind = \"gaussian_1_over_m\"",
            "kind = \"gaussian\"\nmean = [0.0, 1.0]\ncov_diag = [1.0, 2.0]",
        );
        let c = RunConfig::from_toml(&text).unwrap();
        assert_eq!(c.init, InitLaw::Gaussian { mean: vec![0.0, 1.0], cov_diag: vec![1.0, 2.0] });
    }
}
