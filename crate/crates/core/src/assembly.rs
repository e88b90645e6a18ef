//! Gluing `g_*` on `[0, u0]` and `g*` on `(u0, ∞)` into `ĝ`, normalizing,
//! and reading off `Φ`, `Ψ` and the power-law constant.
//!
//! `Φ(u) = C ∫₀^u ĝ` and `Ψ(u) = C ∫_u^∞ ĝ` are evaluated separately, so
//! `Ψ` keeps full relative accuracy far in the tail. Beyond `u0` the
//! integrals are taken in the compactified variable `s = u0/t`:
//!
//! ```text
//! ∫_U^∞ g*(t) dt = u0^{1-γ} ∫₀^{u0/U} w(s) s^{γ-2} e^{-αs/u0} ds.
//! ```

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::model::{DerivedConstants, JumpDistribution};
use crate::quadrature::{integrate, integrate_panels, integrate_tail_against_f, Tolerance};
use crate::tail::TailSolution;
use crate::volterra::{cumulative_integral, integral_to, VolterraSolution};

#[derive(Clone, Debug)]
pub struct GluedSolution {
    pub low: VolterraSolution,
    pub high: TailSolution,
    pub consts: DerivedConstants,
    pub u0: f64,
    /// `∫₀^{u0} g_*`.
    pub i_low: f64,
    /// `∫_{u0}^∞ g*`.
    pub i_high: f64,
    /// `I = ∫₀^∞ ĝ`.
    pub i_total: f64,
    /// `C = 1/I`.
    pub c: f64,
    pub c_asym: f64,
    low_cum: Vec<f64>,
    /// `∫₀^{v_k}` of the compactified tail integrand at the tail nodes.
    tail_cum: Vec<f64>,
}

/// `u0^{1-γ} w(s) s^{γ-2} e^{-αs/u0}`.
fn tail_density(high: &TailSolution, s: f64) -> f64 {
    if s <= 0.0 {
        return 0.0;
    }
    let k = &high.consts;
    let u0 = high.u0;
    let ln = (1.0 - k.gamma) * u0.ln() + (k.gamma - 2.0) * s.ln() - k.alpha * s / u0;
    high.w.eval(s) * ln.exp()
}

/// `∫₀^{v} tail_density` for `v` inside the first tail panel, where `w` is a
/// single cubic: geometric panels towards 0 plus the closed-form remainder
/// `w(0) ε^{γ-1} / (γ-1)` (times `u0^{1-γ}`) below the last one.
fn tail_head(high: &TailSolution, v: f64) -> Result<f64> {
    if v <= 0.0 {
        return Ok(0.0);
    }
    let k = &high.consts;
    let mut breaks = vec![v];
    let mut s = v;
    for _ in 0..80 {
        s *= 0.5;
        breaks.push(s);
    }
    breaks.reverse();
    let eps = breaks[0];
    let r = integrate_panels(|s| tail_density(high, s), &breaks, Tolerance::relative(1e-14).with_abs(1e-300))?;
    let rest = high.w_inf() * (high.u0.powf(1.0 - k.gamma)) * eps.powf(k.gamma - 1.0) / (k.gamma - 1.0);
    Ok(r.value + rest)
}

pub fn glue_and_normalize(low: VolterraSolution, high: TailSolution, execution: Execution) -> Result<GluedSolution> {
    if low.consts != high.consts || low.u0 != high.u0 {
        return Err(Error::invalid(
            "solution",
            "the two halves were computed with different constants or gluing points",
        ));
    }
    let consts = high.consts;
    consts.require_analytic()?;
    let u0 = high.u0;
    let low_cum = cumulative_integral(&low, execution)?;
    let i_low = *low_cum.last().unwrap();

    let v = high.v_nodes().to_vec();
    let pieces = exec::try_map_range(execution, v.len() - 1, |k| -> Result<f64> {
        if k == 0 {
            tail_head(&high, v[1])
        } else {
            integrate(|s| tail_density(&high, s), v[k], v[k + 1], Tolerance::relative(1e-14)).map(|r| r.value)
        }
    })?;
    let mut tail_cum = Vec::with_capacity(v.len());
    tail_cum.push(0.0);
    let mut acc = 0.0;
    for p in pieces {
        acc += p;
        tail_cum.push(acc);
    }
    let i_high = acc;
    let i_total = i_low + i_high;
    if !i_total.is_finite() || !(i_total > 0.0) {
        return Err(Error::Numerical(format!(
            "normalizing integral is not finite and positive: {i_low} + {i_high}"
        )));
    }
    let c = 1.0 / i_total;
    let c_asym = c * high.w_inf() / (consts.gamma - 1.0);
    Ok(GluedSolution {
        low,
        high,
        consts,
        u0,
        i_low,
        i_high,
        i_total,
        c,
        c_asym,
        low_cum,
        tail_cum,
    })
}

impl GluedSolution {
    /// `ĝ(u)` (unnormalized).
    pub fn ghat(&self, u: f64) -> f64 {
        if u <= self.u0 {
            self.low.eval_or_nan(u.max(0.0))
        } else {
            self.high.g(u)
        }
    }

    /// `∫_u^∞ g*` for `u ≥ u0`.
    fn tail_integral(&self, u: f64) -> Result<f64> {
        if u.is_infinite() {
            return Ok(0.0);
        }
        let v = self.high.v_nodes();
        let target = (self.u0 / u).min(1.0);
        if target < v[1] {
            return tail_head(&self.high, target);
        }
        let k = v.partition_point(|&x| x <= target).min(v.len() - 1) - 1;
        if target == v[k] {
            return Ok(self.tail_cum[k]);
        }
        let r = integrate(|s| tail_density(&self.high, s), v[k], target, Tolerance::relative(1e-14))?;
        Ok(self.tail_cum[k] + r.value)
    }

    /// `Φ(u) = C ∫₀^u ĝ`; `Φ(0) = 0`.
    pub fn phi(&self, u: f64) -> Result<f64> {
        if u <= 0.0 {
            return Ok(0.0);
        }
        if u <= self.u0 {
            return Ok(self.c * integral_to(&self.low, &self.low_cum, u)?);
        }
        Ok(self.c * (self.i_low + (self.i_high - self.tail_integral(u)?)))
    }

    /// `Ψ(u) = C ∫_u^∞ ĝ`; `Ψ(u) = 1` for `u ≤ 0`.
    pub fn psi(&self, u: f64) -> Result<f64> {
        if u <= 0.0 {
            return Ok(1.0);
        }
        if u <= self.u0 {
            let below = integral_to(&self.low, &self.low_cum, u)?;
            return Ok(self.c * ((self.i_low - below) + self.i_high));
        }
        Ok(self.c * self.tail_integral(u)?)
    }

    /// Leading-order estimate of `Ψ(u)` for large `u`: `C_asym u^{1-γ}`.
    pub fn tail_closure(&self, u: f64) -> f64 {
        self.c_asym * u.powf(1.0 - self.consts.gamma)
    }

    /// Largest `u` resolved by the tail grid.
    pub fn u_max(&self) -> f64 {
        self.high.u_max()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AsymptoticConstant {
    /// `C w(∞) / (γ-1)`.
    pub analytic: f64,
    /// `u^{γ-1} Ψ(u)` at `u = at`.
    pub fitted: f64,
    pub at: f64,
    pub relative_gap: f64,
    /// Set when the two constants disagree by more than 1%.
    pub warning: Option<String>,
}

pub fn asymptotic_constant(sol: &GluedSolution) -> Result<AsymptoticConstant> {
    let at = sol.u_max();
    let fitted = at.powf(sol.consts.gamma - 1.0) * sol.psi(at)?;
    let analytic = sol.c_asym;
    let relative_gap = (fitted - analytic).abs() / analytic.abs();
    let warning = (relative_gap > 1e-2).then(|| {
        format!("fitted constant {fitted} at u = {at} differs from C w(inf)/(gamma-1) = {analytic} by {relative_gap:.3e}")
    });
    Ok(AsymptoticConstant {
        analytic,
        fitted,
        at,
        relative_gap,
        warning,
    })
}

/// Log-log slope of `Ψ` between `u/10` and `u`.
pub fn tail_slope(sol: &GluedSolution, u: f64) -> Result<f64> {
    Ok((sol.psi(u)?.ln() - sol.psi(u / 10.0)?.ln()) / 10f64.ln())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct IdeResidual {
    pub u: f64,
    /// `u² ĝ'`.
    pub drift_term: f64,
    /// `(γu - α) ĝ`.
    pub linear_term: f64,
    /// `A ĝ`.
    pub jump_term: f64,
    /// `|sum| / max |term|`.
    pub normalized: f64,
}

/// `A ĝ(u) = μ ∫₀^∞ ĝ(u+z) F̄(z) dz`, split at the gluing point.
pub fn apply_a_glued(sol: &GluedSolution, u: f64, dist: &dyn JumpDistribution, eps: f64) -> Result<f64> {
    if sol.consts.mu == 0.0 {
        return Ok(0.0);
    }
    let breaks = [sol.u0 - u];
    let r = integrate_tail_against_f(|x| sol.ghat(x), u, dist, eps, &breaks)?;
    Ok(sol.consts.mu * r.value)
}

/// Residual of `u² ĝ' + (γu - α) ĝ + A ĝ = 0` at `u > 0`, with `ĝ'` by the
/// fourth-order central difference with step `1e-3 u²/(γu + α)`, a small
/// fraction of the length over which `ĝ` changes by a factor `e`.
pub fn ide_residual(sol: &GluedSolution, u: f64, dist: &dyn JumpDistribution) -> Result<IdeResidual> {
    if !(u > 0.0) {
        return Err(Error::invalid("u", "the residual is defined for u > 0"));
    }
    let k = &sol.consts;
    let d = 1e-3 * u * u / (k.gamma.abs() * u + k.alpha.abs() + u);
    let g = |x: f64| sol.ghat(x);
    let dg = (8.0 * (g(u + d) - g(u - d)) - (g(u + 2.0 * d) - g(u - 2.0 * d))) / (12.0 * d);
    let drift_term = u * u * dg;
    let linear_term = (k.gamma * u - k.alpha) * sol.ghat(u);
    let jump_term = apply_a_glued(sol, u, dist, 1e-12)?;
    let scale = drift_term.abs().max(linear_term.abs()).max(jump_term.abs());
    let sum = drift_term + linear_term + jump_term;
    let normalized = if scale > 0.0 { sum.abs() / scale } else { 0.0 };
    if !normalized.is_finite() {
        return Err(Error::Numerical(format!("IDE residual at u = {u} is not finite")));
    }
    Ok(IdeResidual {
        u,
        drift_term,
        linear_term,
        jump_term,
        normalized,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PartsCheck {
    pub u: f64,
    /// `E Φ(u + ξ)`, through the quantile function.
    pub lhs: f64,
    /// `Φ(u) + C ∫ ĝ(u+y) F̄(y) dy`.
    pub rhs: f64,
}

/// Both sides of `∫ Φ(u+y) dF(y) = Φ(u) + ∫ Φ'(u+y) F̄(y) dy`.
pub fn integration_by_parts(sol: &GluedSolution, u: f64, dist: &dyn JumpDistribution) -> Result<PartsCheck> {
    let mut breaks = vec![0.0, 0.5];
    let mut q = 0.5;
    while q > 1e-15 {
        q *= 0.1;
        breaks.push(1.0 - q);
    }
    breaks.push(1.0);
    let failed = std::cell::Cell::new(false);
    let lhs = integrate_panels(
        |p| {
            let y = dist.quantile(p.min(1.0 - f64::EPSILON));
            sol.phi(u + y).unwrap_or_else(|_| {
                failed.set(true);
                0.0
            })
        },
        &breaks,
        Tolerance::relative(1e-10),
    )?
    .value;
    if failed.get() {
        return Err(Error::Numerical(format!("Phi evaluation failed in the parts check at u = {u}")));
    }
    let jump = integrate_tail_against_f(|x| sol.ghat(x), u, dist, 1e-12, &[sol.u0 - u])?.value;
    let rhs = sol.phi(u)? + sol.c * jump;
    Ok(PartsCheck { u, lhs, rhs })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TableRow {
    pub u: f64,
    pub phi: f64,
    pub psi: f64,
    pub ghat: f64,
    pub residual: f64,
}

pub const TABLE_HEADER: &str = "u,phi,psi,ghat,residual";

/// Rows of the `(u, Φ, Ψ, ĝ, residual)` table; `residual` is NaN at `u = 0`.
pub fn table(
    sol: &GluedSolution,
    probes: &[f64],
    dist: &dyn JumpDistribution,
    execution: Execution,
) -> Result<Vec<TableRow>> {
    exec::try_map_range(execution, probes.len(), |i| {
        let u = probes[i];
        Ok(TableRow {
            u,
            phi: sol.phi(u)?,
            psi: sol.psi(u)?,
            ghat: sol.c * sol.ghat(u),
            residual: if u > 0.0 { ide_residual(sol, u, dist)?.normalized } else { f64::NAN },
        })
    })
}

/// CSV with the fixed header and 17 significant digits per value.
pub fn write_table<W: Write>(rows: &[TableRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{TABLE_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            r.u, r.phi, r.psi, r.ghat, r.residual
        )?;
    }
    Ok(())
}

/// `n` log-spaced points in `[lo, hi]`.
pub fn log_probes(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    let mut p: Vec<f64> = (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect();
    p[0] = lo;
    p[n - 1] = hi;
    p
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::exponential_dist;
    use crate::tail::{solve_tail, TailSettings};
    use crate::volterra::{solve_volterra, VolterraProblem, VolterraSettings};
    use approx::assert_relative_eq;

    fn glued(k: DerivedConstants, u0: f64) -> (GluedSolution, crate::model::Exponential) {
        let d = exponential_dist(1.0).unwrap();
        let t = solve_tail(&k, &d, u0, &TailSettings::default()).unwrap();
        let vs = VolterraSettings::default();
        let p = VolterraProblem::new(&t, &d, &vs).unwrap();
        let low = solve_volterra(&p, &vs).unwrap();
        (glue_and_normalize(low, t, Execution::Parallel).unwrap(), d)
    }

    // Simpson–Richardson oracle for ∫_a^b f
    fn romberg(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
        let s = |n: usize| {
            let h = (b - a) / n as f64;
            let mut acc = f(a) + f(b);
            for i in 1..n {
                acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(a + i as f64 * h);
            }
            acc * h / 3.0
        };
        let mut n = 16;
        let mut prev = f64::NAN;
        loop {
            let r = (16.0 * s(2 * n) - s(n)) / 15.0;
            if (r - prev).abs() <= 1e-14 * r.abs() || n > 1 << 22 {
                return r;
            }
            prev = r;
            n *= 2;
        }
    }

    #[test]
    fn closed_form_without_jumps() {
        let k = DerivedConstants { gamma: 4.0, alpha: 2.0, mu: 0.0 };
        let (s, d) = glued(k, 1.0);
        // ∫₀^∞ t^-4 e^{-2/t} dt = Γ(3)/2³ = 1/4
        assert_relative_eq!(s.i_total, 0.25, max_relative = 1e-10);
        let g0 = |t: f64| if t > 0.0 { k.g0(t) } else { 0.0 };
        for &u in &[0.1, 0.5, 1.0, 2.0, 7.0, 40.0] {
            let oracle = romberg(g0, 0.0, u) / 0.25;
            assert_relative_eq!(s.phi(u).unwrap(), oracle, max_relative = 1e-8);
            assert_relative_eq!(s.ghat(u), k.g0(u), max_relative = 1e-8);
        }
        assert_relative_eq!(s.c_asym, 4.0 / 3.0, max_relative = 1e-12);
        let r = ide_residual(&s, 0.7, &d).unwrap();
        assert!(r.normalized <= 1e-8);
    }

    #[test]
    fn reference_boundary_and_normalization() {
        let k = DerivedConstants { gamma: 4.0, alpha: 2.0, mu: 2.0 };
        let (s, _) = glued(k, 4.0);
        assert_eq!(s.phi(0.0).unwrap(), 0.0);
        let p0 = s.phi(4.0).unwrap();
        assert!(p0 > 0.0 && p0 < 1.0);
        let mut prev = 0.0;
        for u in log_probes(0.01, 1e4, 60) {
            let p = s.phi(u).unwrap();
            assert!(p > prev);
            assert_relative_eq!(p + s.psi(u).unwrap(), 1.0, max_relative = 1e-12);
            prev = p;
        }
        let top = 1e3 * s.u0;
        assert!((s.phi(top).unwrap() + s.tail_closure(top) - 1.0).abs() <= 1e-6);
    }

    #[test]
    fn power_law_tail() {
        let k = DerivedConstants { gamma: 4.0, alpha: 2.0, mu: 2.0 };
        let (s, _) = glued(k, 4.0);
        let slope = tail_slope(&s, s.u_max()).unwrap();
        assert!((slope + 3.0).abs() <= 0.03, "{slope}");
        let u = s.u_max() / 2.0;
        let a = u.powi(3) * s.psi(u).unwrap();
        let b = (2.0 * u).powi(3) * s.psi(2.0 * u).unwrap();
        assert!((a - b).abs() <= 0.02 * b);
        let ac = asymptotic_constant(&s).unwrap();
        assert!(ac.warning.is_none(), "{ac:?}");
    }

    #[test]
    fn reference_ide_residual_and_parts() {
        let k = DerivedConstants { gamma: 4.0, alpha: 2.0, mu: 2.0 };
        let (s, d) = glued(k, 4.0);
        for u in [0.04, 0.3, 1.0, 3.9, 4.0, 4.1, 30.0, 400.0] {
            let r = ide_residual(&s, u, &d).unwrap();
            assert!(r.normalized <= 1e-4, "{r:?}");
        }
        for u in [1.0, 5.0, 10.0] {
            let c = integration_by_parts(&s, u, &d).unwrap();
            assert!((c.lhs - c.rhs).abs() <= 1e-6, "{c:?}");
        }
    }

    #[test]
    fn table_format() {
        let rows = [TableRow { u: 1.0, phi: 0.5, psi: 0.5, ghat: 0.25, residual: 1e-9 }];
        let mut buf = Vec::new();
        write_table(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some(TABLE_HEADER));
        let fields: Vec<f64> = lines.next().unwrap().split(',').map(|x| x.parse().unwrap()).collect();
        assert_eq!(fields, vec![1.0, 0.5, 0.5, 0.25, 1e-9]);
    }
}
