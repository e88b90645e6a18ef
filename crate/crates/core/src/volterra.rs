//! The density on `(0, u0]`: the Volterra equation of the second kind
//!
//! ```text
//! g(u) = f(u) + ∫_u^{u0} K(u, y) g(y) dy,   g(u0) = g*(u0),
//! ```
//!
//! marched backward from `u0` on the graded mesh `u_j = u0 (j/n)²`.
//!
//! The scheme works on the integrated form of the equation,
//! `M(u) g(u) = M(u_{j+1}) g(u_{j+1}) + ∫_u^{u_{j+1}} t^{γ-2} e^{α/t} B(t) dt`
//! with `M(u) = u^γ e^{α/u}` and `B = A ĝ = H + μ ∫_u^{u0} g(y) F̄(y-u) dy`.
//! On each panel `B` is replaced by its quadratic interpolant through three
//! consecutive nodes (product integration), and the memory integral uses the
//! same piecewise-quadratic interpolant of `g`. The node beyond `u0` is taken
//! from the tail solution. Every step is explicit up to a scalar linear
//! equation for the new node.
//!
//! All weights are evaluated in the variable `s = α (1/u - 1/t)`, in which
//! `t^{γ-2} e^{α/t} / M(u) dt = (1 - us/α)^{-γ} e^{-s} ds / α`. This is
//! bounded for every `u > 0` and tends to the limits `f(0) = H(0)/α`,
//! `K(0, y) = μ F̄(y-)/α` as `u ↓ 0`, so no cut-over to limit formulas is
//! needed away from `u = 0` itself.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::grid::{Extrapolation, GridFunction};
use crate::model::{DerivedConstants, JumpDistribution};
use crate::quadrature::{gauss_10, gauss_legendre_10, integrate, integrate_panels, tail_truncation, Integral, Tolerance};
use crate::tail::{apply_a, TailSolution};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct VolterraSettings {
    /// Number of panels `n` of the graded mesh (at least 64).
    pub nodes: usize,
    pub quad_eps: f64,
    pub execution: Execution,
}

impl Default for VolterraSettings {
    fn default() -> Self {
        Self {
            nodes: 512,
            quad_eps: 1e-13,
            execution: Execution::Parallel,
        }
    }
}

/// `u_j = u0 (j/n)²`, `j = 0..=n`.
pub fn graded_mesh(u0: f64, n: usize) -> Vec<f64> {
    let mut u: Vec<f64> = (0..=n)
        .map(|j| {
            let x = j as f64 / n as f64;
            u0 * x * x
        })
        .collect();
    u[n] = u0;
    u
}

/// `(1/α) ∫₀^{S} (1 - us/α)^{-γ} e^{-s} φ(t(s)) ds` with `t(s) = u/(1 - us/α)`
/// and `S = α(1/u - 1/upper)`, i.e. `(1/M(u)) ∫_u^{upper} t^{γ-2} e^{α/t} φ(t) dt`.
/// `t_breaks` are points in `(u, upper)` where `φ` is not smooth.
pub(crate) fn weighted_average<P: Fn(f64) -> f64>(
    phi: P,
    u: f64,
    upper: f64,
    consts: &DerivedConstants,
    t_breaks: &[f64],
    eps: f64,
) -> Result<Integral> {
    let (gamma, alpha) = (consts.gamma, consts.alpha);
    if u <= 0.0 {
        let v = phi(0.0) / alpha;
        return Ok(Integral { value: v, abs_error: 0.0 });
    }
    if upper <= u {
        return Ok(Integral { value: 0.0, abs_error: 0.0 });
    }
    let s_total = alpha * (1.0 / u - 1.0 / upper);
    // beyond s_cut the factor e^{-s} (upper/u)^γ is below e^-46
    let s_cut = s_total.min(46.0 + gamma.max(0.0) * (upper / u).ln());
    let to_s = |t: f64| alpha * (1.0 / u - 1.0 / t);
    let mut breaks = vec![0.0];
    let mut s = 1.0;
    while s < s_cut {
        breaks.push(s);
        s *= 4.0;
    }
    breaks.push(s_cut);
    breaks.extend(
        t_breaks
            .iter()
            .filter(|&&t| t > u && t < upper)
            .map(|&t| to_s(t))
            .filter(|&s| s > 0.0 && s < s_cut),
    );
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let integrand = |s: f64| {
        let x = 1.0 - u * s / alpha;
        let t = (u / x).min(upper);
        let p = phi(t);
        if p == 0.0 {
            0.0
        } else {
            (-s - gamma * x.ln()).exp() * p
        }
    };
    let r = integrate_panels(integrand, &breaks, Tolerance::relative(eps).with_abs(1e-300))?;
    Ok(Integral {
        value: r.value / alpha,
        abs_error: r.abs_error / alpha,
    })
}

/// `M(v)/M(u)` for `0 < u ≤ v`.
fn m_ratio(consts: &DerivedConstants, u: f64, v: f64) -> f64 {
    if u <= 0.0 {
        return 0.0;
    }
    (consts.gamma * (v / u).ln() + consts.alpha * (1.0 / v - 1.0 / u)).exp()
}

/// `H(u) = μ ∫_{u0}^∞ g*(y) F̄(y - u) dy` for `0 ≤ u ≤ u0`; at `u = 0` the
/// left limit `F̄(y-)` is used.
pub fn compute_h(
    gstar: &TailSolution,
    u: f64,
    consts: &DerivedConstants,
    dist: &dyn JumpDistribution,
    eps: f64,
) -> Result<f64> {
    shifted_tail_integral(|y| gstar.g(y), gstar.u0, u, dist, eps).map(|i| consts.mu * i.value)
}

/// `∫_{lower}^∞ g(y) F̄(y - shift) dy` for `lower ≥ shift ≥ 0`, using the
/// left limit of `F̄` when `shift = 0`.
pub(crate) fn shifted_tail_integral<G: Fn(f64) -> f64>(
    g: G,
    lower: f64,
    shift: f64,
    dist: &dyn JumpDistribution,
    eps: f64,
) -> Result<Integral> {
    let z_lo = lower - shift;
    let z_max = tail_truncation(dist, eps).max(2.0 * z_lo);
    let tail = |z: f64| {
        if shift == 0.0 {
            dist.tail_left(z)
        } else {
            dist.tail(z)
        }
    };
    if tail(z_lo) == 0.0 && dist.tail_left(z_lo) == 0.0 {
        return Ok(Integral { value: 0.0, abs_error: 0.0 });
    }
    let scale = dist.scale();
    let mut breaks = vec![z_lo];
    let mut width = 0.5 * scale.min(lower.max(1e-3 * scale));
    let mut z = z_lo + width;
    while z < z_max {
        breaks.push(z);
        width *= 2.0;
        z = z_lo + width;
    }
    breaks.push(z_max);
    breaks.extend(dist.atoms().iter().copied().filter(|&a| a > z_lo && a < z_max));
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let integrand = |z: f64| {
        let t = tail(z);
        if t == 0.0 {
            0.0
        } else {
            g(shift + z) * t
        }
    };
    let mut r = integrate_panels(integrand, &breaks, Tolerance::relative(eps).with_abs(1e-300))?;
    r.abs_error += g(shift + z_max).abs() * dist.tail_mass(z_max);
    Ok(r)
}

/// The data of the Volterra equation on `[0, u0]`.
pub struct VolterraProblem<'a> {
    pub u0: f64,
    pub consts: DerivedConstants,
    pub dist: &'a dyn JumpDistribution,
    pub gstar: &'a TailSolution,
    /// `H` on the mesh.
    pub h: GridFunction,
    /// `f` on the mesh.
    pub f: GridFunction,
    pub eps: f64,
}

impl<'a> VolterraProblem<'a> {
    pub fn new(
        gstar: &'a TailSolution,
        dist: &'a dyn JumpDistribution,
        settings: &VolterraSettings,
    ) -> Result<Self> {
        let consts = gstar.consts;
        consts.require_analytic()?;
        if !(consts.alpha > 0.0) {
            return Err(Error::invalid("alpha", "the Volterra problem needs alpha > 0"));
        }
        if settings.nodes < 64 {
            return Err(Error::invalid("volterra nodes", "need at least 64 panels"));
        }
        let u0 = gstar.u0;
        let mesh = graded_mesh(u0, settings.nodes);
        let eps = settings.quad_eps;
        let hv = exec::try_map_range(settings.execution, mesh.len(), |j| {
            compute_h(gstar, mesh[j], &consts, dist, eps)
        })?;
        let h = GridFunction::monotone(mesh.clone(), hv, Extrapolation::Clamp)?;
        let mut problem = Self {
            u0,
            consts,
            dist,
            gstar,
            f: h.clone(),
            h,
            eps,
        };
        let fv = exec::try_map_range(settings.execution, mesh.len(), |j| problem.compute_f(mesh[j]))?;
        problem.f = GridFunction::monotone(mesh, fv, Extrapolation::Clamp)?;
        Ok(problem)
    }

    /// `M(u) = u^γ e^{α/u}`.
    pub fn m(&self, u: f64) -> f64 {
        self.consts.ln_m(u).exp()
    }

    /// `f(u) = (M(u0)/M(u)) g*(u0) + (1/M(u)) ∫_u^{u0} t^{γ-2} e^{α/t} H(t) dt`,
    /// with `f(0) = H(0)/α`.
    pub fn compute_f(&self, u: f64) -> Result<f64> {
        let gu0 = self.gstar.g(self.u0);
        let first = m_ratio(&self.consts, u, self.u0) * gu0;
        let second = weighted_average(|t| self.h.eval(t), u, self.u0, &self.consts, &[], self.eps)?;
        Ok(first + second.value)
    }

    /// `K(u, y) = (μ/M(u)) ∫_u^y t^{γ-2} e^{α/t} F̄(y - t) dt`, with
    /// `K(0, y) = μ F̄(y-)/α`.
    pub fn compute_k(&self, u: f64, y: f64) -> Result<f64> {
        compute_k(u, y, &self.consts, self.dist, self.eps)
    }

    /// `h(y) = μ y^{γ-1}/(γ-1)`, the majorant of `K(·, y)`.
    pub fn kernel_bound(&self, y: f64) -> f64 {
        self.consts.mu * y.powf(self.consts.gamma - 1.0) / (self.consts.gamma - 1.0)
    }
}

pub fn compute_k(u: f64, y: f64, consts: &DerivedConstants, dist: &dyn JumpDistribution, eps: f64) -> Result<f64> {
    if consts.mu == 0.0 {
        return Ok(0.0);
    }
    if u <= 0.0 {
        return Ok(consts.mu / consts.alpha * dist.tail_left(y));
    }
    let breaks: Vec<f64> = dist.atoms().iter().map(|a| y - a).collect();
    let r = weighted_average(|t| dist.tail(y - t), u, y, consts, &breaks, eps)?;
    Ok(consts.mu * r.value)
}

/// Quadratic Lagrange basis through `x0 < x1 < x2`, evaluated at `x`.
fn lagrange3(x: f64, x0: f64, x1: f64, x2: f64) -> [f64; 3] {
    [
        (x - x1) * (x - x2) / ((x0 - x1) * (x0 - x2)),
        (x - x0) * (x - x2) / ((x1 - x0) * (x1 - x2)),
        (x - x0) * (x - x1) / ((x2 - x0) * (x2 - x1)),
    ]
}

#[derive(Clone, Debug)]
pub struct VolterraSolution {
    pub u0: f64,
    pub consts: DerivedConstants,
    /// Mesh `u_0 = 0 < … < u_n = u0` followed by one node beyond `u0`
    /// carried over from the tail solution.
    pub mesh: Vec<f64>,
    /// `g_*` at the mesh nodes (last entry from the tail).
    pub g: Vec<f64>,
    /// `B = A ĝ` at the mesh nodes.
    pub b: Vec<f64>,
    /// `g_*` as a monotone grid function on `[0, u0]`, for quick lookups.
    pub g_star_low: GridFunction,
}

impl VolterraSolution {
    /// Number of panels.
    pub fn panels(&self) -> usize {
        self.mesh.len() - 2
    }

    /// `g_*(0+)`.
    pub fn boundary_value(&self) -> f64 {
        self.g[0]
    }

    fn panel_of(&self, u: f64) -> usize {
        let n = self.panels();
        self.mesh[..=n].partition_point(|&x| x <= u).clamp(1, n) - 1
    }

    /// `B` on the panel containing `u`, from the quadratic used by the scheme.
    pub fn b_interp(&self, u: f64) -> f64 {
        let i = self.panel_of(u);
        let l = lagrange3(u, self.mesh[i], self.mesh[i + 1], self.mesh[i + 2]);
        l[0] * self.b[i] + l[1] * self.b[i + 1] + l[2] * self.b[i + 2]
    }

    /// `g_*(u)` for `0 ≤ u ≤ u0` by the scheme's own (Nyström) interpolation:
    /// one integration step from the node above `u`.
    pub fn eval(&self, u: f64) -> Result<f64> {
        if u <= 0.0 {
            return Ok(self.g[0]);
        }
        let n = self.panels();
        if u >= self.u0 {
            return Ok(self.g[n]);
        }
        let i = self.panel_of(u);
        if u == self.mesh[i] {
            return Ok(self.g[i]);
        }
        let (x0, x1, x2) = (self.mesh[i], self.mesh[i + 1], self.mesh[i + 2]);
        let (b0, b1, b2) = (self.b[i], self.b[i + 1], self.b[i + 2]);
        let quad = |t: f64| {
            let l = lagrange3(t, x0, x1, x2);
            l[0] * b0 + l[1] * b1 + l[2] * b2
        };
        let integral = weighted_average(quad, u, x1, &self.consts, &[], 1e-14)?;
        Ok(m_ratio(&self.consts, u, x1) * self.g[i + 1] + integral.value)
    }

    /// Evaluation that maps quadrature failures to NaN.
    pub fn eval_or_nan(&self, u: f64) -> f64 {
        self.eval(u).unwrap_or(f64::NAN)
    }
}

/// Backward product-integration march for `g_*` on `[0, u0]`.
pub fn solve_volterra(problem: &VolterraProblem<'_>, settings: &VolterraSettings) -> Result<VolterraSolution> {
    let consts = problem.consts;
    let dist = problem.dist;
    let gstar = problem.gstar;
    let n = settings.nodes;
    let u0 = problem.u0;
    let mut mesh = graded_mesh(u0, n);
    let extra = u0 + (mesh[n] - mesh[n - 1]);
    mesh.push(extra);
    let eps = problem.eps;
    let mu = consts.mu;

    let mut g = vec![0.0; n + 2];
    let mut b = vec![0.0; n + 2];
    g[n] = gstar.g(u0);
    g[n + 1] = gstar.g(extra);
    b[n] = problem.h.values()[n];
    b[n + 1] = apply_a(|y| gstar.g(y), extra, &consts, dist, eps)?;
    let h_nodes = problem.h.values();

    // product weights of the B-quadratic on panel [u_i, u_{i+1}]
    let weights = exec::try_map_range(settings.execution, n, |i| -> Result<[f64; 3]> {
        let (x0, x1, x2) = (mesh[i], mesh[i + 1], mesh[i + 2]);
        let mut p = [0.0; 3];
        for (k, pk) in p.iter_mut().enumerate() {
            *pk = weighted_average(|t| lagrange3(t, x0, x1, x2)[k], x0, x1, &consts, &[], eps)?.value;
        }
        Ok(p)
    })?;

    let atoms = dist.atoms();
    let gl: Vec<(f64, f64)> = gauss_legendre_10().collect();
    // ∫ over [a, b] ⊂ panel j of ℓ_k(y) F̄(y - shift), k = 0, 1, 2
    let panel_moments = |j: usize, shift: f64| -> [f64; 3] {
        let (x0, x1, x2) = (mesh[j], mesh[j + 1], mesh[j + 2]);
        let mut cuts = vec![x0];
        cuts.extend(atoms.iter().map(|a| shift + a).filter(|&c| c > x0 && c < x1));
        cuts.push(x1);
        let mut m = [0.0; 3];
        for w in cuts.windows(2) {
            let c = 0.5 * (w[0] + w[1]);
            let h = 0.5 * (w[1] - w[0]);
            for &(x, wt) in &gl {
                let y = c + h * x;
                let tail = dist.tail(y - shift);
                if tail == 0.0 {
                    continue;
                }
                let l = lagrange3(y, x0, x1, x2);
                for k in 0..3 {
                    m[k] += h * wt * tail * l[k];
                }
            }
        }
        m
    };

    for i in (0..n).rev() {
        let ui = mesh[i];
        // memory integral over panels j > i (all known) plus panel i
        let mut known = 0.0;
        let mut coef = 0.0;
        if mu != 0.0 {
            for j in (i + 1)..n {
                let m = panel_moments(j, ui);
                known += m[0] * g[j] + m[1] * g[j + 1] + m[2] * g[j + 2];
            }
            let m = panel_moments(i, ui);
            known += m[1] * g[i + 1] + m[2] * g[i + 2];
            coef = m[0];
        }
        let h_i = h_nodes[i];
        let p = weights[i];
        let r = m_ratio(&consts, ui, mesh[i + 1]);
        let rhs = r * g[i + 1] + p[0] * (h_i + mu * known) + p[1] * b[i + 1] + p[2] * b[i + 2];
        let denom = 1.0 - p[0] * mu * coef;
        if !(denom > 0.0) || !rhs.is_finite() {
            return Err(Error::Numerical(format!(
                "Volterra step at u = {ui} is singular (denominator {denom}, rhs {rhs})"
            )));
        }
        g[i] = rhs / denom;
        b[i] = h_i + mu * (known + coef * g[i]);
    }

    let g_star_low = GridFunction::monotone(mesh[..=n].to_vec(), g[..=n].to_vec(), Extrapolation::Clamp)?;
    Ok(VolterraSolution {
        u0,
        consts,
        mesh,
        g,
        b,
        g_star_low,
    })
}

/// Diagnostics of a Volterra solution against the equation it solves.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VolterraCheck {
    /// Largest `|g(u) - f(u) - ∫_u^{u0} K(u,y) g(y) dy|` over the probes,
    /// with the integral taken by nested adaptive quadrature.
    pub max_residual: f64,
    /// `g_*(0+)` from the march.
    pub boundary_scheme: f64,
    /// `(μ/α)[∫_{u0}^∞ g* F̄ + ∫_0^{u0} g_* F̄]` by independent quadrature.
    pub boundary_formula: f64,
    /// `κ_b = sup f` over the mesh.
    pub kappa_b: f64,
    /// Largest `g_*(u_j) / (κ_b exp(∫_{u_j}^{u0} h))` over the nodes.
    pub gronwall_ratio: f64,
    pub min_value: f64,
}

/// Residual of the Volterra equation at `u`, evaluated independently of the
/// scheme's weights.
pub fn volterra_residual(problem: &VolterraProblem<'_>, sol: &VolterraSolution, u: f64) -> Result<f64> {
    let u0 = problem.u0;
    let g_u = sol.eval(u)?;
    let f_u = problem.compute_f(u)?;
    if problem.consts.mu == 0.0 || u >= u0 {
        return Ok(g_u - f_u);
    }
    // K(u, ·) rises over a layer of width ~u²/α above u
    let mut breaks = vec![u];
    let layer = (u * u / problem.consts.alpha).max(1e-12 * u0);
    let mut d = layer;
    while u + d < u0 {
        breaks.push(u + d);
        d *= 4.0;
    }
    breaks.push(u0);
    breaks.extend(problem.dist.atoms().iter().map(|a| u + a).filter(|&y| y > u && y < u0));
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let failed = std::cell::Cell::new(None);
    let integrand = |y: f64| match (problem.compute_k(u, y), sol.eval(y)) {
        (Ok(k), Ok(gy)) => k * gy,
        (Err(e), _) | (_, Err(e)) => {
            failed.set(Some(e.to_string()));
            0.0
        }
    };
    let integral = integrate_panels(integrand, &breaks, Tolerance::relative(1e-11).with_abs(1e-16))?;
    if let Some(msg) = failed.take() {
        return Err(Error::Numerical(msg));
    }
    Ok(g_u - f_u - integral.value)
}

/// Runs the residual, boundary and Gronwall checks.
pub fn check_volterra(
    problem: &VolterraProblem<'_>,
    sol: &VolterraSolution,
    probes: &[f64],
    execution: Execution,
) -> Result<VolterraCheck> {
    let residuals = exec::try_map_range(execution, probes.len(), |k| volterra_residual(problem, sol, probes[k]))?;
    let max_residual = residuals.iter().fold(0.0f64, |m, r| m.max(r.abs()));

    let consts = &problem.consts;
    let u0 = problem.u0;
    let dist = problem.dist;
    let upper = shifted_tail_integral(|y| problem.gstar.g(y), u0, 0.0, dist, problem.eps)?.value;
    let mut breaks = vec![0.0, u0];
    breaks.extend(dist.atoms().iter().copied().filter(|&a| a > 0.0 && a < u0));
    breaks.sort_by(f64::total_cmp);
    let lower = integrate_panels(|y| sol.eval_or_nan(y) * dist.tail(y), &breaks, Tolerance::relative(1e-12))?.value;
    let boundary_formula = consts.mu / consts.alpha * (upper + lower);

    let kappa_b = problem.f.values().iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let n = sol.panels();
    let gamma = consts.gamma;
    let mut gronwall_ratio = 0.0f64;
    let mut min_value = f64::INFINITY;
    for j in 0..=n {
        let u = sol.mesh[j];
        let exponent = consts.mu * (u0.powf(gamma) - u.powf(gamma)) / (gamma * (gamma - 1.0));
        let bound = kappa_b * exponent.exp();
        gronwall_ratio = gronwall_ratio.max(sol.g[j] / bound);
        min_value = min_value.min(sol.g[j]);
    }
    Ok(VolterraCheck {
        max_residual,
        boundary_scheme: sol.boundary_value(),
        boundary_formula,
        kappa_b,
        gronwall_ratio,
        min_value,
    })
}

/// `∫_a^b g_*` on `[0, u0]`, panel by panel with Gauss–Legendre rules on the
/// Nyström interpolant. Returns the cumulative integrals at the mesh nodes.
pub(crate) fn cumulative_integral(sol: &VolterraSolution, execution: Execution) -> Result<Vec<f64>> {
    let n = sol.panels();
    let pieces = exec::try_map_range(execution, n, |i| -> Result<f64> {
        let v = gauss_10(|x| sol.eval_or_nan(x), sol.mesh[i], sol.mesh[i + 1]);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Numerical(format!("integral of g over panel {i} is not finite")))
        }
    })?;
    let mut cum = Vec::with_capacity(n + 1);
    cum.push(0.0);
    let mut acc = 0.0;
    for p in pieces {
        acc += p;
        cum.push(acc);
    }
    Ok(cum)
}

/// `∫_0^u g_*` for `u ≤ u0`, given the cumulative node integrals.
pub(crate) fn integral_to(sol: &VolterraSolution, cum: &[f64], u: f64) -> Result<f64> {
    if u <= 0.0 {
        return Ok(0.0);
    }
    let n = sol.panels();
    if u >= sol.u0 {
        return Ok(cum[n]);
    }
    let i = sol.panel_of(u);
    let a = sol.mesh[i];
    if u == a {
        return Ok(cum[i]);
    }
    let r = integrate(|x| sol.eval_or_nan(x), a, u, Tolerance::relative(1e-13))?;
    Ok(cum[i] + r.value)
}
