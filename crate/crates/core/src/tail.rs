//! The density on `[u0, ∞)`: fixed point of `g = g0 + T g` in the weighted
//! sup-norm `‖g‖ = sup_{u ≥ u0} u^γ |g(u)|`.
//!
//! Functions are carried in weighted, compactified form: for `v = u0/u` in
//! `[0, 1]` the weight `w(v) = u^γ e^{α/u} g(u)` is stored, so `v = 0` is the
//! point at infinity. Applying `T` in these coordinates is a cumulative
//! integral from `v = 0`:
//!
//! ```text
//! (weighted T g)(v) = ∫₀^v q(s) ds,   q(s) = (μ/u0) e^{α/t} t^γ ∫₀^∞ g(t+z) F̄(z) dz,  t = u0/s
//! ```
//!
//! with `q(0) = μ E[ξ] w(0) / u0`. The integral is taken panel by panel with
//! 7-point Gauss–Lobatto rules whose endpoints are the grid nodes, which
//! also gives the exact node slopes `w'(v) = q(v)` for Hermite
//! interpolation.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::grid::{Extrapolation, GridFunction};
use crate::model::{DerivedConstants, JumpDistribution};
use crate::quadrature::{integrate_tail_against_f, LOBATTO7};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TailSettings {
    /// Number of panels of the compactified grid.
    pub panels: usize,
    /// Target fixed-point error in the weighted norm.
    pub tol: f64,
    pub max_iter: usize,
    /// Relative accuracy of the inner `F̄` integrals.
    pub quad_eps: f64,
    pub execution: Execution,
}

impl Default for TailSettings {
    fn default() -> Self {
        Self {
            panels: 96,
            tol: 1e-10,
            max_iter: 500,
            quad_eps: 1e-13,
            execution: Execution::Parallel,
        }
    }
}

/// Chebyshev–Lobatto points of `[0, 1]`, clustered at both ends.
pub fn compact_grid(panels: usize) -> Vec<f64> {
    let n = panels.max(1);
    let mut v: Vec<f64> = (0..=n)
        .map(|i| 0.5 * (1.0 - (std::f64::consts::PI * i as f64 / n as f64).cos()))
        .collect();
    v[0] = 0.0;
    v[n] = 1.0;
    v
}

/// `A g(u) = μ ∫₀^∞ g(u+z) F̄(z) dz`.
pub fn apply_a<G: Fn(f64) -> f64>(
    g: G,
    u: f64,
    consts: &DerivedConstants,
    dist: &dyn JumpDistribution,
    eps: f64,
) -> Result<f64> {
    if consts.mu == 0.0 {
        return Ok(0.0);
    }
    Ok(consts.mu * integrate_tail_against_f(g, u, dist, eps, &[])?.value)
}

/// `q(s)` for the weighted function `w_g` (see the module docs).
fn integrand_q<W: Fn(f64) -> f64>(
    w_g: &W,
    s: f64,
    u0: f64,
    consts: &DerivedConstants,
    dist: &dyn JumpDistribution,
    eps: f64,
) -> Result<f64> {
    if consts.mu == 0.0 {
        return Ok(0.0);
    }
    if s <= 0.0 {
        return Ok(consts.mu * dist.mean() * w_g(0.0) / u0);
    }
    let t = u0 / s;
    let (gamma, alpha) = (consts.gamma, consts.alpha);
    // t^γ g(x) for x = t + z, in weighted form
    let scaled = |x: f64| {
        let wv = w_g(u0 / x);
        if wv == 0.0 {
            0.0
        } else {
            (gamma * (t / x).ln() - alpha / x).exp() * wv
        }
    };
    let inner = integrate_tail_against_f(scaled, t, dist, eps, &[])?.value;
    Ok(consts.mu / u0 * (alpha / t).exp() * inner)
}

/// Weighted `T g` at the nodes `v` (which must start at 0), together with
/// its exact slopes in `v`.
fn weighted_t_nodes<W: Fn(f64) -> f64 + Sync>(
    w_g: &W,
    v: &[f64],
    u0: f64,
    consts: &DerivedConstants,
    dist: &dyn JumpDistribution,
    eps: f64,
    execution: Execution,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let panels = v.len() - 1;
    // points: node k sits at 6k, interior Lobatto points in between
    let npts = 6 * panels + 1;
    let point = |idx: usize| -> f64 {
        let k = (idx / 6).min(panels - 1);
        let j = idx - 6 * k;
        let (a, b) = (v[k], v[k + 1]);
        let x = LOBATTO7[j].0;
        if j == 0 {
            a
        } else if j == 6 {
            b
        } else {
            0.5 * (a + b) + 0.5 * (b - a) * x
        }
    };
    let q = exec::try_map_range(execution, npts, |idx| {
        integrand_q(w_g, point(idx), u0, consts, dist, eps)
    })?;
    let mut values = Vec::with_capacity(v.len());
    values.push(0.0);
    let mut acc = 0.0;
    for k in 0..panels {
        let h = 0.5 * (v[k + 1] - v[k]);
        let panel: f64 = LOBATTO7
            .iter()
            .enumerate()
            .map(|(j, &(_, w))| w * q[6 * k + j])
            .sum();
        acc += h * panel;
        values.push(acc);
    }
    let slopes = (0..=panels).map(|k| q[6 * k]).collect();
    Ok((values, slopes))
}

/// `T g` in weighted form on the compactified grid `v` (`v[0] = 0`):
/// returns the grid function `v ↦ u^γ e^{α/u} (T g)(u)` for `u = u0/v`,
/// where `g` is given through its own weight `w_g(v) = u^γ e^{α/u} g(u)`.
pub fn apply_t<W: Fn(f64) -> f64 + Sync>(
    w_g: W,
    v: &[f64],
    u0: f64,
    consts: &DerivedConstants,
    dist: &dyn JumpDistribution,
    eps: f64,
    execution: Execution,
) -> Result<GridFunction> {
    if v.len() < 2 || v[0] != 0.0 {
        return Err(Error::Numerical("compactified grid must start at v = 0".into()));
    }
    let (values, slopes) = weighted_t_nodes(&w_g, v, u0, consts, dist, eps, execution)?;
    GridFunction::hermite(v.to_vec(), values, slopes, Extrapolation::Clamp)
}

/// `sup_{u ≥ u0} u^γ |g(u)|` over the grid nodes, for a function given by
/// its weight values on `v`.
pub fn weighted_norm(weights: &[f64], v: &[f64], u0: f64, alpha: f64) -> f64 {
    weights
        .iter()
        .zip(v)
        .map(|(w, &vi)| w.abs() * (-alpha * vi / u0).exp())
        .fold(0.0, f64::max)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct IterationLog {
    /// `‖g_{n+1} - g_n‖` in the weighted norm, one entry per iteration.
    pub deltas: Vec<f64>,
    /// Smallest nodal increment `w_{n+1} - w_n` seen over all iterations.
    pub min_increment: f64,
}

impl IterationLog {
    /// Successive ratios `delta_{n+1} / delta_n`.
    pub fn ratios(&self) -> Vec<f64> {
        self.deltas
            .windows(2)
            .filter(|w| w[0] > 0.0)
            .map(|w| w[1] / w[0])
            .collect()
    }
}

#[derive(Clone, Debug)]
pub struct TailSolution {
    pub u0: f64,
    pub theta: f64,
    pub consts: DerivedConstants,
    /// `w(v) = u^γ e^{α/u} g*(u)` on the compactified grid.
    pub w: GridFunction,
    pub log: IterationLog,
    /// A-posteriori bound `θ/(1-θ) · last delta` on the fixed-point error.
    pub error_bound: f64,
}

impl TailSolution {
    /// `u^γ e^{α/u} g*(u)` for `u ≥ u0`.
    pub fn weight(&self, u: f64) -> f64 {
        if u.is_infinite() {
            return self.w_inf();
        }
        self.w.eval(self.u0 / u)
    }

    /// `g*(u)` for `u ≥ u0`.
    pub fn g(&self, u: f64) -> f64 {
        if u.is_infinite() {
            return 0.0;
        }
        self.weight(u) * self.consts.g0(u)
    }

    /// `g*'(u)`, from the Hermite representation of the weight.
    pub fn dg(&self, u: f64) -> f64 {
        let (gamma, alpha) = (self.consts.gamma, self.consts.alpha);
        let v = self.u0 / u;
        let g0 = self.consts.g0(u);
        let w = self.w.eval(v);
        let dw = self.w.derivative(v) * (-self.u0 / (u * u));
        g0 * (dw + w * (alpha / (u * u) - gamma / u))
    }

    /// `lim_{u→∞} u^γ g*(u)`.
    pub fn w_inf(&self) -> f64 {
        self.w.values()[0]
    }

    pub fn v_nodes(&self) -> &[f64] {
        self.w.nodes()
    }

    /// Largest finite `u` on the grid.
    pub fn u_max(&self) -> f64 {
        self.u0 / self.v_nodes()[1]
    }
}

/// Picard iteration `g_{n+1} = g0 + T g_n` from `g_0 = g0`, stopped when
/// `‖g_{n+1} - g_n‖ ≤ tol (1 - θ)`.
pub fn solve_tail(
    consts: &DerivedConstants,
    dist: &dyn JumpDistribution,
    u0: f64,
    settings: &TailSettings,
) -> Result<TailSolution> {
    if !(consts.gamma > 0.0) {
        return Err(Error::HypothesisViolated(format!(
            "the tail fixed point needs gamma > 0, got {}",
            consts.gamma
        )));
    }
    let theta = consts.mu * dist.mean() / u0;
    if !(theta < 1.0) {
        return Err(Error::HypothesisViolated(format!(
            "u0 = {u0} does not exceed mu E[xi] = {}: theta = {theta} is not a contraction",
            consts.mu * dist.mean()
        )));
    }
    if settings.panels < 2 {
        return Err(Error::invalid("tail panels", "need at least 2 panels"));
    }
    let v = compact_grid(settings.panels);
    let ones = vec![1.0; v.len()];
    let mut w = GridFunction::hermite(v.clone(), ones, vec![0.0; v.len()], Extrapolation::Clamp)?;
    let mut log = IterationLog {
        deltas: Vec::new(),
        min_increment: f64::INFINITY,
    };
    let stop = settings.tol * (1.0 - theta);
    for _ in 0..settings.max_iter {
        let (tv, slopes) = weighted_t_nodes(
            &|s| w.eval(s),
            &v,
            u0,
            consts,
            dist,
            settings.quad_eps,
            settings.execution,
        )?;
        let values: Vec<f64> = tv.iter().map(|t| 1.0 + t).collect();
        let diff: Vec<f64> = values.iter().zip(w.values()).map(|(a, b)| a - b).collect();
        let delta = weighted_norm(&diff, &v, u0, consts.alpha);
        log.min_increment = diff.iter().copied().fold(log.min_increment, f64::min);
        log.deltas.push(delta);
        w = GridFunction::hermite(v.clone(), values, slopes, Extrapolation::Clamp)?;
        if delta <= stop {
            let error_bound = if theta > 0.0 { theta / (1.0 - theta) * delta } else { 0.0 };
            return Ok(TailSolution {
                u0,
                theta,
                consts: *consts,
                w,
                log,
                error_bound,
            });
        }
    }
    Err(Error::NonConvergence {
        iterations: settings.max_iter,
        last_delta: log.deltas.last().copied().unwrap_or(f64::NAN),
        deltas: log.deltas,
    })
}

/// `sup u^γ |g_a(u) - g_b(u)|` over `points` evenly spaced values of
/// `v = u_hi/u` on the common range `u ≥ u_hi = max(u0_a, u0_b)`.
pub fn overlap_distance(a: &TailSolution, b: &TailSolution, points: usize) -> f64 {
    let hi = a.u0.max(b.u0);
    let alpha = a.consts.alpha;
    (0..=points)
        .map(|i| {
            let v = i as f64 / points as f64;
            let u = if v == 0.0 { f64::INFINITY } else { hi / v };
            let decay = if u.is_infinite() { 1.0 } else { (-alpha / u).exp() };
            (a.weight(u) - b.weight(u)).abs() * decay
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{deterministic_dist, exponential_dist, pareto_dist};
    use approx::assert_relative_eq;

    fn reference() -> (DerivedConstants, crate::model::Exponential) {
        (
            DerivedConstants { gamma: 4.0, alpha: 2.0, mu: 2.0 },
            exponential_dist(1.0).unwrap(),
        )
    }

    #[test]
    fn apply_a_vanishes_without_jumps() {
        let k = DerivedConstants { gamma: 4.0, alpha: 2.0, mu: 0.0 };
        let d = exponential_dist(1.0).unwrap();
        assert_eq!(apply_a(|x: f64| x.powi(-2), 1.0, &k, &d, 1e-12).unwrap(), 0.0);
    }

    #[test]
    fn apply_a_closed_form() {
        let (k, d) = reference();
        let a = apply_a(|x: f64| (-x).exp(), 0.7, &k, &d, 1e-13).unwrap();
        assert_relative_eq!(a, (-0.7f64).exp(), max_relative = 1e-12);
    }

    #[test]
    fn apply_a_power_bound() {
        let (k, _) = reference();
        let d = pareto_dist(3.0, 2.0).unwrap();
        for &p in &[0.0, 1.5, 4.0] {
            let g = |x: f64| x.powf(-p) * (1.0 + 0.5 / (1.0 + x)) / 1.5;
            for &u in &[0.5, 1.0, 4.0, 20.0] {
                let a = apply_a(g, u, &k, &d, 1e-9).unwrap();
                // ‖g‖_{p,u} ≤ 1
                assert!(a <= k.mu * u.powf(-p) * d.mean() * (1.0 + 1e-10));
            }
        }
    }

    #[test]
    fn apply_t_of_zero_is_zero() {
        let (k, d) = reference();
        let v = compact_grid(8);
        let t = apply_t(|_| 0.0, &v, 4.0, &k, &d, 1e-12, Execution::Sequential).unwrap();
        assert!(t.values().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn apply_t_bound_and_contraction() {
        let (k, d) = reference();
        let u0 = 4.0;
        let theta = k.mu * d.mean() / u0;
        let v = compact_grid(24);
        let w1 = |s: f64| 1.0 + 0.5 * (3.0 * s).sin();
        let w2 = |s: f64| 0.3 + s * s;
        let t1 = apply_t(w1, &v, u0, &k, &d, 1e-12, Execution::Parallel).unwrap();
        let t2 = apply_t(w2, &v, u0, &k, &d, 1e-12, Execution::Parallel).unwrap();
        let dense: Vec<f64> = (0..=400).map(|i| i as f64 / 400.0).collect();
        let norm = |f: &dyn Fn(f64) -> f64| weighted_norm(&dense.iter().map(|&s| f(s)).collect::<Vec<_>>(), &dense, u0, k.alpha);
        let n1 = norm(&w1);
        let nt1 = weighted_norm(t1.values(), &v, u0, k.alpha);
        assert!(nt1 <= theta * n1 * (1.0 + 1e-9), "{nt1} vs {}", theta * n1);
        let nd = norm(&|s| w1(s) - w2(s));
        let diff: Vec<f64> = t1.values().iter().zip(t2.values()).map(|(a, b)| a - b).collect();
        assert!(weighted_norm(&diff, &v, u0, k.alpha) <= theta * nd * (1.0 + 1e-9));
    }

    #[test]
    fn no_jumps_gives_g0_exactly() {
        let k = DerivedConstants { gamma: 4.0, alpha: 2.0, mu: 0.0 };
        let d = exponential_dist(1.0).unwrap();
        let s = solve_tail(&k, &d, 1.0, &TailSettings::default()).unwrap();
        assert!(s.w.values().iter().all(|&w| w == 1.0));
        assert_eq!(s.log.deltas, vec![0.0]);
        assert_relative_eq!(s.g(3.0), k.g0(3.0), max_relative = 1e-15);
    }

    #[test]
    fn refuses_non_contraction_and_bad_gamma() {
        let (k, d) = reference();
        assert!(matches!(solve_tail(&k, &d, 2.0, &TailSettings::default()), Err(Error::HypothesisViolated(_))));
        let bad = DerivedConstants { gamma: -0.5, ..k };
        assert!(matches!(solve_tail(&bad, &d, 4.0, &TailSettings::default()), Err(Error::HypothesisViolated(_))));
    }

    #[test]
    fn iteration_cap_reports_log() {
        let (k, d) = reference();
        let settings = TailSettings { max_iter: 3, panels: 8, ..Default::default() };
        match solve_tail(&k, &d, 4.0, &settings) {
            Err(Error::NonConvergence { iterations, deltas, .. }) => {
                assert_eq!(iterations, 3);
                assert_eq!(deltas.len(), 3);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn reference_fixed_point_properties() {
        let (k, d) = reference();
        let settings = TailSettings::default();
        let s = solve_tail(&k, &d, 4.0, &settings).unwrap();
        assert_eq!(s.theta, 0.5);
        assert!(s.log.ratios().iter().all(|&r| r <= 0.5), "{:?}", s.log.ratios());
        assert!(s.log.min_increment >= 0.0);
        assert!(s.w.values().iter().all(|&w| w >= 1.0));
        assert_relative_eq!(s.weight(s.u_max()), 1.0, epsilon = 1e-3);
        // residual of the fixed-point equation on the grid
        let t = apply_t(|v| s.w.eval(v), s.v_nodes(), 4.0, &k, &d, 1e-13, Execution::Parallel).unwrap();
        let diff: Vec<f64> = t.values().iter().zip(s.w.values()).map(|(tv, w)| 1.0 + tv - w).collect();
        assert!(weighted_norm(&diff, s.v_nodes(), 4.0, k.alpha) <= settings.tol);
    }

    #[test]
    fn reference_satisfies_differential_form() {
        // (u^γ e^{α/u} g)' = -u^{γ-2} e^{α/u} A g, derivative by central differences
        let (k, d) = reference();
        let s = solve_tail(&k, &d, 4.0, &TailSettings::default()).unwrap();
        for &u in &[4.5, 6.0, 9.0, 15.0, 40.0, 120.0] {
            let m = |x: f64| s.weight(x);
            let h = 1e-3 * u;
            let lhs = (m(u + h) - m(u - h)) / (2.0 * h);
            let a = apply_a(|x| s.g(x), u, &k, &d, 1e-13).unwrap();
            let rhs = -(((k.gamma - 2.0) * u.ln() + k.alpha / u).exp()) * a;
            assert!((lhs - rhs).abs() <= 1e-5 * rhs.abs(), "u={u}: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn gluing_point_does_not_change_the_tail() {
        let (k, d) = reference();
        let settings = TailSettings::default();
        let a = solve_tail(&k, &d, 4.0, &settings).unwrap();
        let b = solve_tail(&k, &d, 8.0, &settings).unwrap();
        let worst = overlap_distance(&a, &b, 2000);
        assert!(worst <= 10.0 * settings.tol, "{worst}");
    }

    #[test]
    fn atoms_and_heavy_tails_converge() {
        let k = DerivedConstants { gamma: 2.5, alpha: 1.0, mu: 1.0 };
        for d in [
            Box::new(deterministic_dist(1.0).unwrap()) as Box<dyn JumpDistribution>,
            Box::new(pareto_dist(2.0, 1.0).unwrap()),
        ] {
            let s = solve_tail(&k, d.as_ref(), 2.0, &TailSettings { tol: 1e-9, ..Default::default() }).unwrap();
            assert!(s.log.min_increment >= 0.0);
            assert!(s.w.values().iter().all(|w| *w >= 1.0));
            assert!(s.log.ratios().iter().all(|&r| r <= s.theta));
        }
    }
}
