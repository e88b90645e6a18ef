//! Run configuration: one JSON document describing the model, the solver
//! and the Monte-Carlo settings.
//!
//! ```json
//! {
//!   "a": 2.0, "r": 0.1, "sigma": 1.0, "kappa": 1.0, "c": 1.0, "lambda": 1.0,
//!   "distribution": { "kind": "exponential", "params": { "mean": 1.0 } },
//!   "solver": { "safety": 2.0, "tol": 1e-10 },
//!   "mc": { "paths": 100000, "horizon": 100.0, "seed": 1, "probes": [1, 5, 10] }
//! }
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::model::{DistributionSpec, ModelParams};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub a: f64,
    pub r: f64,
    pub sigma: f64,
    pub kappa: f64,
    pub c: f64,
    pub lambda: f64,
    pub distribution: DistributionSpec,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub mc: McSettings,
    /// Output directory; the `--out` flag takes precedence.
    #[serde(default)]
    pub out: Option<String>,
    #[serde(default)]
    pub execution: Execution,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// `u0 = safety · μ E[ξ]`.
    pub safety: f64,
    /// Stopping tolerance of the tail fixed point (weighted sup norm).
    pub tol: f64,
    pub tail_panels: usize,
    pub max_iter: usize,
    pub volterra_nodes: usize,
    /// Points of the output table; default: 100 log-spaced points over
    /// `[u0/100, 100 u0]` together with `u0`.
    pub probes: Option<Vec<f64>>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            safety: 2.0,
            tol: 1e-10,
            tail_panels: 96,
            max_iter: 500,
            volterra_nodes: 512,
            probes: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McSettings {
    pub horizon: f64,
    pub dt: f64,
    pub paths: usize,
    pub seed: u64,
    /// Survival level; default: the smallest level with `Ψ(B) ≤ 5e-4` when
    /// the analytic solution exists, `1e3 · max(1, u)` otherwise.
    pub barrier: Option<f64>,
    pub substeps_per_jump_interval: usize,
    /// Initial capitals to simulate.
    pub probes: Vec<f64>,
    /// Also write one CSV of per-path outcomes per probe.
    pub path_csv: bool,
}

impl Default for McSettings {
    fn default() -> Self {
        Self {
            horizon: 100.0,
            dt: 1e-2,
            paths: 100_000,
            seed: 0x5eed,
            barrier: None,
            substeps_per_jump_interval: 4,
            probes: vec![1.0, 5.0, 10.0],
            path_csv: false,
        }
    }
}

/// Command-line overrides of individual keys.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub u0_safety: Option<f64>,
    pub tol: Option<f64>,
    pub paths: Option<usize>,
    pub horizon: Option<f64>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn params(&self) -> ModelParams {
        ModelParams {
            a: self.a,
            r: self.r,
            sigma: self.sigma,
            kappa: self.kappa,
            c: self.c,
            lambda: self.lambda,
        }
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<()> {
        if let Some(s) = o.seed {
            self.mc.seed = s;
        }
        if let Some(s) = o.u0_safety {
            self.solver.safety = s;
        }
        if let Some(t) = o.tol {
            self.solver.tol = t;
        }
        if let Some(p) = o.paths {
            self.mc.paths = p;
        }
        if let Some(h) = o.horizon {
            self.mc.horizon = h;
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<()> {
        self.params().validate()?;
        self.distribution.build()?;
        let s = &self.solver;
        if !(s.safety > 1.0 && s.safety.is_finite()) {
            return Err(Error::invalid("solver.safety", "must be finite and > 1"));
        }
        if !(s.tol > 0.0 && s.tol < 1.0) {
            return Err(Error::invalid("solver.tol", "must lie in (0, 1)"));
        }
        if s.tail_panels < 2 {
            return Err(Error::invalid("solver.tail_panels", "must be >= 2"));
        }
        if s.volterra_nodes < 64 {
            return Err(Error::invalid("solver.volterra_nodes", "must be >= 64"));
        }
        if s.max_iter == 0 {
            return Err(Error::invalid("solver.max_iter", "must be >= 1"));
        }
        if let Some(p) = &s.probes {
            if p.is_empty() || p.iter().any(|&u| !(u > 0.0 && u.is_finite())) {
                return Err(Error::invalid("solver.probes", "must be a non-empty list of finite u > 0"));
            }
        }
        let m = &self.mc;
        if !(m.horizon > 0.0 && m.horizon.is_finite()) {
            return Err(Error::invalid("mc.horizon", "must be finite and > 0"));
        }
        if !(m.dt > 0.0 && m.dt.is_finite()) {
            return Err(Error::invalid("mc.dt", "must be finite and > 0"));
        }
        if m.paths == 0 {
            return Err(Error::invalid("mc.paths", "must be >= 1"));
        }
        if m.substeps_per_jump_interval == 0 {
            return Err(Error::invalid("mc.substeps_per_jump_interval", "must be >= 1"));
        }
        if m.probes.iter().any(|&u| !(u >= 0.0 && u.is_finite())) {
            return Err(Error::invalid("mc.probes", "initial capitals must be finite and >= 0"));
        }
        if let Some(b) = m.barrier {
            if let Some(&u) = m.probes.iter().find(|&&u| !(b > u)) {
                return Err(Error::invalid("mc.barrier", format!("must exceed every probe, {b} <= {u}")));
            }
        }
        Ok(())
    }
}
