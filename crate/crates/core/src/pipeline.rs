//! End-to-end runs: solve, verify, simulate and parameter sweeps.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::Serialize;

use crate::assembly::{
    asymptotic_constant, glue_and_normalize, ide_residual, integration_by_parts, log_probes, table, tail_slope,
    AsymptoticConstant, GluedSolution, TableRow,
};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::mc::{self, McConfig, McEstimate, Outcome};
use crate::model::{choose_u0, derive_constants, DerivedConstants, GluingPoint, JumpDistribution, ModelParams};
use crate::tail::{overlap_distance, solve_tail, TailSettings};
use crate::volterra::{check_volterra, solve_volterra, VolterraCheck, VolterraProblem, VolterraSettings};

/// Off-grid probes of the Volterra residual, as fractions of `u0`.
const VOLTERRA_PROBES: [f64; 8] = [0.00137, 0.0111, 0.0523, 0.1234, 0.3071, 0.5013, 0.7777, 0.9431];

pub struct Solved {
    pub params: ModelParams,
    pub consts: DerivedConstants,
    pub gluing: GluingPoint,
    pub dist: Box<dyn JumpDistribution>,
    pub solution: GluedSolution,
    pub asymptotics: AsymptoticConstant,
    /// Present when requested from [`solve_model`].
    pub volterra_check: Option<VolterraCheck>,
}

fn tail_settings(cfg: &RunConfig) -> TailSettings {
    TailSettings {
        panels: cfg.solver.tail_panels,
        tol: cfg.solver.tol,
        max_iter: cfg.solver.max_iter,
        execution: cfg.execution,
        ..Default::default()
    }
}

/// Constants with the analytic hypothesis `γ > 1` enforced.
pub fn analytic_constants(cfg: &RunConfig) -> Result<DerivedConstants> {
    let consts = derive_constants(&cfg.params())?;
    consts.require_analytic()?;
    Ok(consts)
}

pub fn solve_model(cfg: &RunConfig, volterra_checks: bool) -> Result<Solved> {
    cfg.validate()?;
    let params = cfg.params();
    let consts = analytic_constants(cfg)?;
    let dist = cfg.distribution.build()?;
    let gluing = choose_u0(&consts, dist.as_ref(), cfg.solver.safety)?;
    let tail = solve_tail(&consts, dist.as_ref(), gluing.u0, &tail_settings(cfg))?;
    let vs = VolterraSettings {
        nodes: cfg.solver.volterra_nodes,
        execution: cfg.execution,
        ..Default::default()
    };
    let (low, volterra_check) = {
        let problem = VolterraProblem::new(&tail, dist.as_ref(), &vs)?;
        let low = solve_volterra(&problem, &vs)?;
        let check = if volterra_checks {
            let probes: Vec<f64> = VOLTERRA_PROBES.iter().map(|p| p * gluing.u0).collect();
            Some(check_volterra(&problem, &low, &probes, cfg.execution)?)
        } else {
            None
        };
        (low, check)
    };
    let solution = glue_and_normalize(low, tail, cfg.execution)?;
    let asymptotics = asymptotic_constant(&solution)?;
    Ok(Solved {
        params,
        consts,
        gluing,
        dist,
        solution,
        asymptotics,
        volterra_check,
    })
}

/// Table probes: the configured list, or 100 log-spaced points over
/// `[u0/100, 100 u0]` together with `u0`.
pub fn table_probes(cfg: &RunConfig, u0: f64) -> Vec<f64> {
    match &cfg.solver.probes {
        Some(p) => p.clone(),
        None => {
            let mut p = log_probes(u0 / 100.0, 100.0 * u0, 100);
            p.push(u0);
            p.sort_by(f64::total_cmp);
            p
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Summary {
    pub gamma: f64,
    pub alpha: f64,
    pub mu: f64,
    pub u0: f64,
    pub theta: f64,
    #[serde(rename = "C")]
    pub c: f64,
    #[serde(rename = "C_asym")]
    pub c_asym: f64,
    /// Largest normalized IDE residual over the table probes.
    pub residual_max: f64,
}

pub struct SolveOutput {
    pub solved: Solved,
    pub rows: Vec<TableRow>,
    pub summary: Summary,
}

pub fn run_solve(cfg: &RunConfig) -> Result<SolveOutput> {
    let solved = solve_model(cfg, false)?;
    let probes = table_probes(cfg, solved.gluing.u0);
    let rows = table(&solved.solution, &probes, solved.dist.as_ref(), cfg.execution)?;
    let residual_max = rows
        .iter()
        .map(|r| r.residual)
        .filter(|r| !r.is_nan())
        .fold(0.0, f64::max);
    let summary = Summary {
        gamma: solved.consts.gamma,
        alpha: solved.consts.alpha,
        mu: solved.consts.mu,
        u0: solved.gluing.u0,
        theta: solved.gluing.theta,
        c: solved.solution.c,
        c_asym: solved.solution.c_asym,
        residual_max,
    };
    Ok(SolveOutput { solved, rows, summary })
}

pub fn report(out: &SolveOutput) -> String {
    let s = &out.solved;
    let p = &s.params;
    let t = &s.solution.high;
    let mut r = String::new();
    let _ = writeln!(r, "survival probability solve");
    let _ = writeln!(
        r,
        "  model        a = {}, r = {}, sigma = {}, kappa = {}, c = {}, lambda = {}, jumps = {:?}",
        p.a, p.r, p.sigma, p.kappa, p.c, p.lambda, s.dist
    );
    let _ = writeln!(
        r,
        "  constants    gamma = {}, alpha = {}, mu = {}",
        s.consts.gamma, s.consts.alpha, s.consts.mu
    );
    let _ = writeln!(r, "  gluing       u0 = {}, theta = {}", s.gluing.u0, s.gluing.theta);
    let _ = writeln!(
        r,
        "  tail         {} iterations, last delta = {:.3e}, error bound = {:.3e}, w(inf) = {}",
        t.log.deltas.len(),
        t.log.deltas.last().copied().unwrap_or(0.0),
        t.error_bound,
        t.w_inf()
    );
    let _ = writeln!(
        r,
        "  low segment  {} panels, g(0+) = {}",
        s.solution.low.panels(),
        s.solution.low.boundary_value()
    );
    let _ = writeln!(
        r,
        "  normalizing  I = {} (low {}, tail {}), C = 1/I = {}",
        s.solution.i_total, s.solution.i_low, s.solution.i_high, s.solution.c
    );
    let _ = writeln!(
        r,
        "  asymptotics  Psi(u) ~ C_asym u^(1-gamma), C_asym = C w(inf)/(gamma-1) = {}; u^(gamma-1) Psi(u) at u = {:.6e}: {}",
        s.asymptotics.analytic, s.asymptotics.at, s.asymptotics.fitted
    );
    if let Some(w) = &s.asymptotics.warning {
        let _ = writeln!(r, "  warning      {w}");
    }
    let _ = writeln!(r, "  residual     max normalized IDE residual = {:.3e}", out.summary.residual_max);
    let _ = writeln!(r, "\n  {:>14} {:>22} {:>22}", "u", "Phi(u)", "Psi(u)");
    let step = (out.rows.len() / 12).max(1);
    for row in out.rows.iter().step_by(step) {
        let _ = writeln!(r, "  {:>14.6e} {:>22.15e} {:>22.15e}", row.u, row.phi, row.psi);
    }
    r
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn at_most(name: &str, value: f64, tolerance: f64, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            value,
            tolerance,
            passed: value <= tolerance,
            detail: detail.into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VerifyReport {
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn render(&self) -> String {
        let mut r = String::new();
        let _ = writeln!(r, "{:<28} {:>6} {:>12} {:>12}  detail", "check", "result", "value", "tolerance");
        for c in &self.checks {
            let _ = writeln!(
                r,
                "{:<28} {:>6} {:>12.3e} {:>12.3e}  {}",
                c.name,
                if c.passed { "PASS" } else { "FAIL" },
                c.value,
                c.tolerance,
                c.detail
            );
        }
        let failed = self.checks.iter().filter(|c| !c.passed).count();
        let _ = writeln!(r, "{} checks, {} failed", self.checks.len(), failed);
        r
    }
}

/// Runs the invariant checks of every stage on the configured model.
pub fn run_verify(cfg: &RunConfig) -> Result<VerifyReport> {
    let solved = solve_model(cfg, true)?;
    let sol = &solved.solution;
    let dist = solved.dist.as_ref();
    let k = solved.consts;
    let u0 = solved.gluing.u0;
    let theta = solved.gluing.theta;
    let mut checks = Vec::new();

    let ratios = sol.high.log.ratios();
    let worst_ratio = ratios.iter().copied().fold(0.0, f64::max);
    checks.push(Check::at_most(
        "tail.contraction",
        worst_ratio,
        theta,
        format!("largest of {} delta ratios vs theta", ratios.len()),
    ));
    checks.push(Check::at_most(
        "tail.monotone_iterates",
        (-sol.high.log.min_increment).max(0.0),
        0.0,
        format!("smallest nodal increment {:.3e}", sol.high.log.min_increment),
    ));
    let doubled = solve_tail(&k, dist, 2.0 * u0, &tail_settings(cfg))?;
    checks.push(Check::at_most(
        "tail.u0_independence",
        overlap_distance(&sol.high, &doubled, 2000),
        10.0 * cfg.solver.tol,
        "weighted distance of the u0 and 2u0 solutions on u >= 2u0",
    ));

    let vc = solved.volterra_check.as_ref().expect("requested");
    checks.push(Check::at_most(
        "volterra.residual",
        vc.max_residual,
        1e-6,
        "integral-equation residual at off-grid probes, nested quadrature",
    ));
    let boundary_gap = if vc.boundary_formula == 0.0 {
        vc.boundary_scheme.abs()
    } else {
        (vc.boundary_scheme - vc.boundary_formula).abs() / vc.boundary_formula.abs()
    };
    checks.push(Check::at_most(
        "volterra.boundary",
        boundary_gap,
        1e-6,
        format!("g(0+) = {} vs formula {}", vc.boundary_scheme, vc.boundary_formula),
    ));
    checks.push(Check::at_most(
        "volterra.gronwall",
        vc.gronwall_ratio,
        1.0,
        format!("max g / (kappa_b exp(int h)), kappa_b = {}", vc.kappa_b),
    ));

    let mut probes = log_probes(u0 / 100.0, 100.0 * u0, 100);
    probes.push(u0);
    let residuals = crate::exec::try_map_range(cfg.execution, probes.len(), |i| ide_residual(sol, probes[i], dist))?;
    let (worst_u, worst_res) = residuals
        .iter()
        .map(|r| (r.u, r.normalized))
        .fold((0.0, 0.0), |a, b| if b.1 > a.1 { b } else { a });
    checks.push(Check::at_most(
        "ide.residual",
        worst_res,
        1e-4,
        format!("101 probes on [u0/100, 100 u0], worst at u = {worst_u:.4e}"),
    ));

    let phi0 = sol.phi(0.0)?;
    checks.push(Check::at_most("boundary.phi_zero", phi0.abs(), 0.0, "Phi(0)"));
    let phis = probes[..100]
        .iter()
        .map(|&u| sol.phi(u))
        .collect::<Result<Vec<f64>>>()?;
    let violations = phis.windows(2).filter(|w| !(w[1] > w[0])).count();
    checks.push(Check::at_most(
        "boundary.phi_monotone",
        violations as f64,
        0.0,
        "non-increasing steps of Phi over the probes",
    ));
    let top = 1e3 * u0;
    let closure = sol.phi(top)? + sol.tail_closure(top) - 1.0;
    checks.push(Check::at_most(
        "normalization",
        closure.abs(),
        1e-6,
        format!("Phi({top:.3e}) + C_asym u^(1-gamma) - 1"),
    ));

    let u_max = sol.u_max();
    let slope = tail_slope(sol, u_max)?;
    checks.push(Check::at_most(
        "asymptotics.slope",
        (slope + (k.gamma - 1.0)).abs() / (k.gamma - 1.0),
        1e-2,
        format!("log-log slope {slope:.6} over [{:.3e}, {u_max:.3e}]", u_max / 10.0),
    ));
    let half = u_max / 2.0;
    let a = half.powf(k.gamma - 1.0) * sol.psi(half)?;
    let b = u_max.powf(k.gamma - 1.0) * sol.psi(u_max)?;
    checks.push(Check::at_most(
        "asymptotics.cauchy",
        (a - b).abs() / b.abs(),
        2e-2,
        "u^(gamma-1) Psi(u) at u and 2u",
    ));
    checks.push(Check::at_most(
        "asymptotics.constant",
        solved.asymptotics.relative_gap,
        1e-2,
        format!("fitted {} vs C w(inf)/(gamma-1) = {}", solved.asymptotics.fitted, solved.asymptotics.analytic),
    ));

    let mut parts_gap = 0.0f64;
    for u in [1.0, 5.0, 10.0] {
        let c = integration_by_parts(sol, u, dist)?;
        parts_gap = parts_gap.max((c.lhs - c.rhs).abs());
    }
    checks.push(Check::at_most(
        "integration_by_parts",
        parts_gap,
        1e-6,
        "E Phi(u + xi) vs Phi(u) + C int g(u+y) F(y>) dy at u = 1, 5, 10",
    ));

    if k.mu == 0.0 {
        let worst = probes
            .iter()
            .map(|&u| ((sol.ghat(u) - k.g0(u)) / k.g0(u)).abs())
            .fold(0.0, f64::max);
        checks.push(Check::at_most(
            "closed_form",
            worst,
            1e-8,
            "relative error of g against u^-gamma e^(-alpha/u)",
        ));
    }
    Ok(VerifyReport { checks })
}

/// Target for the automatic survival barrier.
pub const BARRIER_PSI: f64 = 5e-4;

/// Smallest level (up to bisection accuracy) above every probe with
/// `Ψ(B) ≤ BARRIER_PSI`.
pub fn default_barrier(sol: &GluedSolution, probes: &[f64]) -> Result<f64> {
    let lo0 = probes.iter().copied().fold(sol.u0, f64::max) * 1.01;
    let mut hi = lo0;
    while sol.psi(hi)? > BARRIER_PSI {
        hi *= 2.0;
        if hi > 1e12 {
            return Err(Error::Numerical("no barrier with small enough ruin probability".into()));
        }
    }
    if hi == lo0 {
        return Ok(hi);
    }
    let mut lo = hi / 2.0;
    for _ in 0..60 {
        let mid = (lo * hi).sqrt();
        if sol.psi(mid)? > BARRIER_PSI {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}

pub fn mc_config(cfg: &RunConfig, barrier: f64) -> McConfig {
    McConfig {
        horizon: cfg.mc.horizon,
        dt: cfg.mc.dt,
        paths: cfg.mc.paths,
        barrier,
        seed: cfg.mc.seed,
        substeps_per_jump_interval: cfg.mc.substeps_per_jump_interval,
        execution: cfg.execution,
    }
}

pub struct SimulateOutput {
    pub estimates: Vec<McEstimate>,
    /// `Ψ` from the analytic solver at the probes, when `γ > 1`.
    pub analytic: Option<Vec<f64>>,
    pub outcomes: Vec<Vec<Outcome>>,
}

#[derive(Serialize)]
pub struct SimulateRecord<'a> {
    #[serde(flatten)]
    pub estimate: &'a McEstimate,
    pub psi_solver: Option<f64>,
}

pub fn run_simulate(cfg: &RunConfig) -> Result<SimulateOutput> {
    cfg.validate()?;
    let params = cfg.params();
    let consts = derive_constants(&params)?;
    let solved = if consts.require_analytic().is_ok() {
        Some(solve_model(cfg, false)?)
    } else {
        None
    };
    let probes = &cfg.mc.probes;
    let barrier = match (cfg.mc.barrier, &solved) {
        (Some(b), _) => b,
        (None, Some(s)) => default_barrier(&s.solution, probes)?,
        (None, None) => 1e3 * probes.iter().copied().fold(1.0, f64::max),
    };
    let psi_b = match &solved {
        Some(s) => Some(s.solution.psi(barrier)?),
        None => None,
    };
    let dist = cfg.distribution.build()?;
    let mcc = mc_config(cfg, barrier);
    let mut estimates = Vec::new();
    let mut outcomes = Vec::new();
    for &u in probes {
        mcc.validate(u)?;
        let o = mc::simulate_paths(&params, dist.as_ref(), u, &mcc);
        estimates.push(mc::summarize(u, &o, &mcc, psi_b));
        if cfg.mc.path_csv {
            outcomes.push(o);
        }
    }
    let analytic = match &solved {
        Some(s) => Some(probes.iter().map(|&u| s.solution.psi(u)).collect::<Result<Vec<f64>>>()?),
        None => None,
    };
    Ok(SimulateOutput {
        estimates,
        analytic,
        outcomes,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepParam {
    A,
    R,
    Sigma,
    Kappa,
    C,
    Lambda,
}

impl FromStr for SweepParam {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "a" => Self::A,
            "r" => Self::R,
            "sigma" => Self::Sigma,
            "kappa" => Self::Kappa,
            "c" => Self::C,
            "lambda" => Self::Lambda,
            _ => {
                return Err(Error::invalid(
                    "param",
                    format!("unknown parameter {s:?}; expected one of a, r, sigma, kappa, c, lambda"),
                ))
            }
        })
    }
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            Self::A => "a",
            Self::R => "r",
            Self::Sigma => "sigma",
            Self::Kappa => "kappa",
            Self::C => "c",
            Self::Lambda => "lambda",
        }
    }

    fn set(self, cfg: &mut RunConfig, v: f64) {
        match self {
            Self::A => cfg.a = v,
            Self::R => cfg.r = v,
            Self::Sigma => cfg.sigma = v,
            Self::Kappa => cfg.kappa = v,
            Self::C => cfg.c = v,
            Self::Lambda => cfg.lambda = v,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub value: f64,
    pub gamma: f64,
    /// `γ > 1`: the analytic construction applies.
    pub analytic: bool,
    /// `Ψ` at the probes (empty when not analytic).
    pub psi: Vec<f64>,
    pub c_asym: Option<f64>,
    /// Monte-Carlo ruin frequencies at the probes, when requested.
    pub mc: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Sweep {
    pub param: SweepParam,
    pub probes: Vec<f64>,
    pub rows: Vec<SweepRow>,
    /// Consecutive sweep values between which `γ - 1` changes sign.
    pub gamma_one_brackets: Vec<(f64, f64)>,
}

/// The fraction `κ` at which `γ = 1`, i.e. the positive root of
/// `σ²κ² - 2(a - r)κ - 2r = 0`.
pub fn gamma_one_kappa(params: &ModelParams) -> Option<f64> {
    let d = params.a - params.r;
    let s2 = params.sigma * params.sigma;
    let disc = d * d + 2.0 * params.r * s2;
    if disc < 0.0 {
        return None;
    }
    let root = (d + disc.sqrt()) / s2;
    (root > 0.0).then_some(root)
}

pub fn run_sweep(cfg: &RunConfig, param: SweepParam, from: f64, to: f64, steps: usize, with_mc: bool) -> Result<Sweep> {
    if steps == 0 || !from.is_finite() || !to.is_finite() || (steps == 1 && from != to) {
        return Err(Error::invalid("range", "need finite bounds and steps >= 1 (steps = 1 only when from = to)"));
    }
    let probes = cfg.mc.probes.clone();
    let mut rows = Vec::with_capacity(steps);
    for i in 0..steps {
        let value = if steps == 1 {
            from
        } else {
            from + (to - from) * i as f64 / (steps - 1) as f64
        };
        let mut point = cfg.clone();
        param.set(&mut point, value);
        point.validate()?;
        let consts = derive_constants(&point.params())?;
        let analytic = consts.require_analytic().is_ok();
        let (psi, c_asym) = if analytic {
            let s = solve_model(&point, false)?;
            let psi = probes.iter().map(|&u| s.solution.psi(u)).collect::<Result<Vec<f64>>>()?;
            (psi, Some(s.solution.c_asym))
        } else {
            (Vec::new(), None)
        };
        let mc = if with_mc {
            let sim = run_simulate(&point)?;
            Some(sim.estimates.iter().map(|e| e.p_hat).collect())
        } else {
            None
        };
        rows.push(SweepRow {
            value,
            gamma: consts.gamma,
            analytic,
            psi,
            c_asym,
            mc,
        });
    }
    let gamma_one_brackets = rows
        .windows(2)
        .filter(|w| (w[0].gamma - 1.0) * (w[1].gamma - 1.0) <= 0.0 && w[0].gamma != w[1].gamma)
        .map(|w| (w[0].value, w[1].value))
        .collect();
    Ok(Sweep {
        param,
        probes,
        rows,
        gamma_one_brackets,
    })
}

fn field(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.16e}")).unwrap_or_default()
}

/// CSV: `<param>,gamma,analytic,psi_u<u>...,C_asym[,mc_u<u>...]`.
pub fn write_sweep<W: std::io::Write>(s: &Sweep, mut out: W) -> std::io::Result<()> {
    let with_mc = s.rows.iter().any(|r| r.mc.is_some());
    let mut header = format!("{},gamma,analytic", s.param.name());
    for u in &s.probes {
        header.push_str(&format!(",psi_u{u}"));
    }
    header.push_str(",C_asym");
    if with_mc {
        for u in &s.probes {
            header.push_str(&format!(",mc_u{u}"));
        }
    }
    writeln!(out, "{header}")?;
    for r in &s.rows {
        let mut line = format!("{:.16e},{:.16e},{}", r.value, r.gamma, r.analytic);
        for i in 0..s.probes.len() {
            line.push(',');
            line.push_str(&field(r.psi.get(i).copied()));
        }
        line.push(',');
        line.push_str(&field(r.c_asym));
        if with_mc {
            for i in 0..s.probes.len() {
                line.push(',');
                line.push_str(&field(r.mc.as_ref().and_then(|m| m.get(i).copied())));
            }
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(lambda: f64) -> RunConfig {
        RunConfig::from_json(&format!(
            r#"{{"a": 2.0, "r": 0.1, "sigma": 1.0, "kappa": 1.0, "c": 1.0, "lambda": {lambda},
                "distribution": {{"kind": "exponential", "params": {{"mean": 1.0}}}},
                "solver": {{"volterra_nodes": 128}}}}"#
        ))
        .unwrap()
    }

    #[test]
    fn refuses_without_the_hypothesis() {
        let mut c = cfg(1.0);
        c.a = 0.3;
        c.r = 0.0;
        assert!(matches!(run_solve(&c), Err(Error::HypothesisViolated(_))));
    }

    #[test]
    fn no_jumps_summary() {
        let out = run_solve(&cfg(0.0)).unwrap();
        let s = &out.summary;
        assert_eq!((s.gamma, s.alpha, s.mu, s.theta), (4.0, 2.0, 0.0, 0.0));
        // I = Γ(3)/α³ = 1/4
        assert!((s.c - 4.0).abs() <= 1e-9);
        assert!((s.c_asym - 4.0 / 3.0).abs() <= 1e-9);
        assert!(s.residual_max <= 1e-8);
    }

    #[test]
    fn kappa_root() {
        let p = ModelParams::new(0.3, 0.0, 1.0, 1.0, 1.0, 1.0).unwrap();
        assert!((gamma_one_kappa(&p).unwrap() - 0.6).abs() < 1e-15);
        let p = ModelParams::new(0.5, 0.1, 1.2, 1.0, 1.0, 1.0).unwrap();
        let k = gamma_one_kappa(&p).unwrap();
        let q = ModelParams { kappa: k, ..p };
        let g = derive_constants(&q).unwrap().gamma;
        assert!((g - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sweep_brackets_the_threshold() {
        let mut c = cfg(1.0);
        c.a = 0.3;
        c.r = 0.0;
        let s = run_sweep(&c, SweepParam::Kappa, 0.15, 0.95, 9, false).unwrap();
        assert_eq!(s.gamma_one_brackets.len(), 1);
        let (lo, hi) = s.gamma_one_brackets[0];
        let root = gamma_one_kappa(&c.params()).unwrap();
        assert!(lo <= root && root <= hi);
        assert!(s.rows.iter().all(|r| r.analytic == (r.gamma > 1.0)));
        let mut buf = Vec::new();
        write_sweep(&s, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("kappa,gamma,analytic,psi_u1,psi_u5,psi_u10,C_asym\n"));
    }

    #[test]
    fn single_point_sweep_equals_solve() {
        let c = cfg(1.0);
        let s = run_sweep(&c, SweepParam::Lambda, 1.0, 1.0, 1, false).unwrap();
        let solved = solve_model(&c, false).unwrap();
        assert_eq!(s.rows[0].c_asym, Some(solved.solution.c_asym));
        assert_eq!(s.rows[0].psi[1], solved.solution.psi(5.0).unwrap());
    }
}
