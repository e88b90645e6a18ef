//! Monte-Carlo estimate of the ruin probability, used as an independent
//! check on the analytic solver.
//!
//! Between jumps the capital is `X_t = Z_t (x - c ∫₀^t Z_s^{-1} ds)` with
//! `Z` the stochastic exponential of the investment return, sampled exactly
//! on substeps; the integral is accumulated by the trapezoid rule. The
//! bracket is decreasing between jumps, so ruin inside a jump interval is
//! caught at the first substep where it is non-positive. Jump times are
//! exponential and handled exactly.
//!
//! Each path draws from its own ChaCha8 stream `(seed, path index)`, so
//! results do not depend on how paths are scheduled.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::model::{JumpDistribution, ModelParams};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub horizon: f64,
    /// Largest substep.
    pub dt: f64,
    pub paths: usize,
    /// Paths reaching this level count as survivors.
    pub barrier: f64,
    pub seed: u64,
    /// Minimum number of substeps between consecutive jumps.
    pub substeps_per_jump_interval: usize,
    pub execution: Execution,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            horizon: 100.0,
            dt: 1e-2,
            paths: 100_000,
            barrier: 1e3,
            seed: 0x5eed,
            substeps_per_jump_interval: 4,
            execution: Execution::Parallel,
        }
    }
}

impl McConfig {
    pub fn validate(&self, u: f64) -> Result<()> {
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::invalid("horizon", "must be finite and > 0"));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::invalid("dt", "must be finite and > 0"));
        }
        if self.paths == 0 {
            return Err(Error::invalid("paths", "must be >= 1"));
        }
        if self.substeps_per_jump_interval == 0 {
            return Err(Error::invalid("substeps_per_jump_interval", "must be >= 1"));
        }
        if !(self.barrier > u) {
            return Err(Error::invalid(
                "barrier",
                format!("must exceed the initial capital {u}, got {}", self.barrier),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "outcome", content = "time", rename_all = "snake_case")]
pub enum Outcome {
    Ruined(f64),
    HitBarrier(f64),
    Censored,
}

/// RNG of path `index`.
pub fn path_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// One path of the capital process started at `u`. Parameters are not
/// re-validated, so degenerate cases (`c = 0`) can be simulated.
pub fn simulate_path<R: Rng>(
    params: &ModelParams,
    dist: &dyn JumpDistribution,
    u: f64,
    cfg: &McConfig,
    rng: &mut R,
) -> Outcome {
    if u <= 0.0 {
        return Outcome::Ruined(0.0);
    }
    let vol = params.volatility();
    let log_drift = params.drift() - 0.5 * vol * vol;
    let jumps = (params.lambda > 0.0).then(|| Exp::new(params.lambda).expect("positive intensity"));
    let (c, barrier, horizon) = (params.c, cfg.barrier, cfg.horizon);
    let mut t = 0.0;
    let mut x = u;
    loop {
        let next_jump = match &jumps {
            Some(e) => t + rng.sample(e),
            None => f64::INFINITY,
        };
        let end = next_jump.min(horizon);
        let len = end - t;
        let m = ((len / cfg.dt).ceil() as usize).max(cfg.substeps_per_jump_interval);
        let h = len / m as f64;
        let sqrt_h = h.sqrt();
        let mut z = 1.0;
        let mut spent = 0.0;
        for k in 1..=m {
            let eps: f64 = rng.sample(StandardNormal);
            let z_new = z * (log_drift * h + vol * sqrt_h * eps).exp();
            spent += 0.5 * c * h * (1.0 / z + 1.0 / z_new);
            z = z_new;
            let bracket = x - spent;
            let time = if k == m { end } else { t + k as f64 * h };
            if bracket <= 0.0 {
                return Outcome::Ruined(time);
            }
            if z * bracket >= barrier {
                return Outcome::HitBarrier(time);
            }
        }
        x = z * (x - spent);
        t = end;
        if next_jump >= horizon {
            return Outcome::Censored;
        }
        x += dist.sample(rng);
        if x >= barrier {
            return Outcome::HitBarrier(t);
        }
    }
}

pub fn simulate_paths(params: &ModelParams, dist: &dyn JumpDistribution, u: f64, cfg: &McConfig) -> Vec<Outcome> {
    exec::map_range(cfg.execution, cfg.paths, |i| {
        let mut rng = path_rng(cfg.seed, i as u64);
        simulate_path(params, dist, u, cfg, &mut rng)
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct McEstimate {
    pub u: f64,
    pub p_hat: f64,
    /// 95% normal-approximation half-width.
    #[serde(rename = "ci")]
    pub ci_halfwidth: f64,
    pub n_paths: usize,
    pub n_ruined: usize,
    pub n_survived_to_barrier: usize,
    pub n_censored: usize,
    #[serde(rename = "T")]
    pub horizon: f64,
    #[serde(rename = "B")]
    pub barrier: f64,
    pub dt: f64,
    pub seed: u64,
    /// `Ψ(B)` when known, plus the censored fraction.
    pub bias_note: f64,
}

pub fn summarize(u: f64, outcomes: &[Outcome], cfg: &McConfig, psi_at_barrier: Option<f64>) -> McEstimate {
    let n = outcomes.len();
    let mut ruined = 0;
    let mut barrier = 0;
    let mut censored = 0;
    for o in outcomes {
        match o {
            Outcome::Ruined(_) => ruined += 1,
            Outcome::HitBarrier(_) => barrier += 1,
            Outcome::Censored => censored += 1,
        }
    }
    let p = ruined as f64 / n as f64;
    McEstimate {
        u,
        p_hat: p,
        ci_halfwidth: 1.96 * (p * (1.0 - p) / n as f64).sqrt(),
        n_paths: n,
        n_ruined: ruined,
        n_survived_to_barrier: barrier,
        n_censored: censored,
        horizon: cfg.horizon,
        barrier: cfg.barrier,
        dt: cfg.dt,
        seed: cfg.seed,
        bias_note: psi_at_barrier.unwrap_or(0.0) + censored as f64 / n as f64,
    }
}

/// Ruin frequency over `cfg.paths` independent paths from `u`.
/// `psi_at_barrier` is the analytic `Ψ(B)` when it is available.
pub fn estimate_ruin(
    params: &ModelParams,
    dist: &dyn JumpDistribution,
    u: f64,
    cfg: &McConfig,
    psi_at_barrier: Option<f64>,
) -> Result<McEstimate> {
    cfg.validate(u)?;
    let outcomes = simulate_paths(params, dist, u, cfg);
    Ok(summarize(u, &outcomes, cfg, psi_at_barrier))
}

/// Per-path CSV: `path,outcome,time` (time empty when censored).
pub fn write_outcomes<W: Write>(outcomes: &[Outcome], mut out: W) -> std::io::Result<()> {
    writeln!(out, "path,outcome,time")?;
    for (i, o) in outcomes.iter().enumerate() {
        match o {
            Outcome::Ruined(t) => writeln!(out, "{i},ruined,{t:.16e}")?,
            Outcome::HitBarrier(t) => writeln!(out, "{i},hit_barrier,{t:.16e}")?,
            Outcome::Censored => writeln!(out, "{i},censored,")?,
        }
    }
    Ok(())
}
