//! Model parameters, the reduced constants of the first-order equation for
//! the density `g = Φ'`, and the jump-size distributions.

use std::fmt;

use rand::distr::Open01;
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Primitive parameters of the capital process
/// `dX = ((a - r)κ + r) X dt + κσ X dW - c dt + dJ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Drift of the risky asset.
    pub a: f64,
    /// Riskless rate.
    pub r: f64,
    /// Volatility of the risky asset.
    pub sigma: f64,
    /// Fraction of the reserve held in the risky asset.
    pub kappa: f64,
    /// Payout rate.
    pub c: f64,
    /// Intensity of the income jumps.
    pub lambda: f64,
}

impl ModelParams {
    pub fn new(a: f64, r: f64, sigma: f64, kappa: f64, c: f64, lambda: f64) -> Result<Self> {
        let params = Self {
            a,
            r,
            sigma,
            kappa,
            c,
            lambda,
        };
        params.validate()?;
        Ok(params)
    }

    /// `lambda = 0` is accepted: it is the degenerate no-jump model whose
    /// density is known in closed form.
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("a", self.a),
            ("r", self.r),
            ("sigma", self.sigma),
            ("kappa", self.kappa),
            ("c", self.c),
            ("lambda", self.lambda),
        ] {
            if !v.is_finite() {
                return Err(Error::invalid(name, format!("must be finite, got {v}")));
            }
        }
        if self.sigma <= 0.0 {
            return Err(Error::invalid("sigma", "must be > 0"));
        }
        if !(self.kappa > 0.0 && self.kappa <= 1.0) {
            return Err(Error::invalid("kappa", "must lie in (0, 1]"));
        }
        if self.c <= 0.0 {
            return Err(Error::invalid("c", "must be > 0"));
        }
        if self.lambda < 0.0 {
            return Err(Error::invalid("lambda", "must be >= 0"));
        }
        Ok(())
    }

    /// Effective drift `(a - r)κ + r` of the capital between jumps.
    pub fn drift(&self) -> f64 {
        (self.a - self.r) * self.kappa + self.r
    }

    /// Effective volatility `κσ`.
    pub fn volatility(&self) -> f64 {
        self.kappa * self.sigma
    }
}

/// The reduced constants of `u² g' + (γu - α) g = -A g`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DerivedConstants {
    pub gamma: f64,
    pub alpha: f64,
    pub mu: f64,
}

impl DerivedConstants {
    /// The analytic construction on the whole half-line needs `gamma > 1`.
    pub fn require_analytic(&self) -> Result<()> {
        if self.gamma > 1.0 {
            Ok(())
        } else {
            Err(Error::HypothesisViolated(format!(
                "the analytic solver requires gamma > 1, got gamma = {}",
                self.gamma
            )))
        }
    }

    /// `g0(u) = u^-γ e^{-α/u}`, the solution for `mu = 0`.
    pub fn g0(&self, u: f64) -> f64 {
        if u <= 0.0 {
            return 0.0;
        }
        (-self.gamma * u.ln() - self.alpha / u).exp()
    }

    /// `ln M(u)` with `M(u) = u^γ e^{α/u}`.
    pub fn ln_m(&self, u: f64) -> f64 {
        self.gamma * u.ln() + self.alpha / u
    }
}

pub fn derive_constants(params: &ModelParams) -> Result<DerivedConstants> {
    params.validate()?;
    let diffusion = params.volatility().powi(2);
    Ok(DerivedConstants {
        gamma: 2.0 * params.drift() / diffusion,
        alpha: 2.0 * params.c / diffusion,
        mu: 2.0 * params.lambda / diffusion,
    })
}

/// Gluing point between the fixed-point domain `[u0, ∞)` and the Volterra
/// domain `(0, u0]`, with the contraction constant `θ = μE[ξ]/u0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GluingPoint {
    pub u0: f64,
    pub theta: f64,
}

/// `u0 = safety · μE[ξ]`. Without jumps (`μE[ξ] = 0`) any `u0` contracts;
/// the natural scale `α/γ` (the minimum of `u^γ e^{α/u}`) is used instead.
pub fn choose_u0(
    consts: &DerivedConstants,
    dist: &dyn JumpDistribution,
    safety: f64,
) -> Result<GluingPoint> {
    if !(safety > 1.0) || !safety.is_finite() {
        return Err(Error::invalid(
            "safety",
            format!("must be finite and > 1 for a contraction, got {safety}"),
        ));
    }
    let mean = dist.mean();
    if !mean.is_finite() || mean <= 0.0 {
        return Err(Error::HypothesisViolated(format!(
            "the jump mean must be finite and positive, got {mean}"
        )));
    }
    let scale = consts.mu * mean;
    if scale > 0.0 {
        let u0 = safety * scale;
        Ok(GluingPoint {
            u0,
            theta: scale / u0,
        })
    } else {
        let natural = if consts.gamma > 0.0 {
            consts.alpha / consts.gamma
        } else {
            consts.alpha
        };
        Ok(GluingPoint {
            u0: safety * natural,
            theta: 0.0,
        })
    }
}

/// Distribution of the (strictly positive) income jumps.
///
/// `tail(z) = P(ξ > z)` is right-continuous, `tail_left(z) = P(ξ ≥ z)` is its
/// left limit. Both equal 1 for `z < 0`.
pub trait JumpDistribution: fmt::Debug + Send + Sync {
    fn tail(&self, z: f64) -> f64;

    fn tail_left(&self, z: f64) -> f64;

    fn mean(&self) -> f64;

    /// `∫_z^∞ F̄(x) dx` for `z >= 0`.
    fn tail_mass(&self, z: f64) -> f64;

    /// Left-continuous inverse of the distribution function on `(0, 1)`.
    fn quantile(&self, p: f64) -> f64;

    /// Points where the tail function jumps.
    fn atoms(&self) -> &[f64] {
        &[]
    }

    /// Characteristic length used to seed quadrature panels.
    fn scale(&self) -> f64 {
        self.mean()
    }

    fn sample(&self, rng: &mut dyn RngCore) -> f64 {
        let p: f64 = rng.sample(Open01);
        self.quantile(p)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Exponential {
    mean: f64,
}

pub fn exponential_dist(mean: f64) -> Result<Exponential> {
    if !(mean > 0.0 && mean.is_finite()) {
        return Err(Error::invalid("mean", format!("must be finite and > 0, got {mean}")));
    }
    Ok(Exponential { mean })
}

impl JumpDistribution for Exponential {
    fn tail(&self, z: f64) -> f64 {
        if z <= 0.0 {
            1.0
        } else {
            (-z / self.mean).exp()
        }
    }

    fn tail_left(&self, z: f64) -> f64 {
        self.tail(z)
    }

    fn mean(&self) -> f64 {
        self.mean
    }

    fn tail_mass(&self, z: f64) -> f64 {
        self.mean * self.tail(z)
    }

    fn quantile(&self, p: f64) -> f64 {
        -self.mean * (-p).ln_1p()
    }
}

/// Pareto distribution of the second kind (Lomax):
/// `F̄(z) = (1 + z/scale)^-shape`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pareto {
    shape: f64,
    scale: f64,
}

pub fn pareto_dist(shape: f64, scale: f64) -> Result<Pareto> {
    if !(shape > 1.0) || !shape.is_finite() {
        return Err(Error::HypothesisViolated(format!(
            "pareto shape must exceed 1 for a finite mean, got {shape}"
        )));
    }
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::invalid("scale", format!("must be finite and > 0, got {scale}")));
    }
    Ok(Pareto { shape, scale })
}

impl JumpDistribution for Pareto {
    fn tail(&self, z: f64) -> f64 {
        if z <= 0.0 {
            1.0
        } else {
            (-self.shape * (z / self.scale).ln_1p()).exp()
        }
    }

    fn tail_left(&self, z: f64) -> f64 {
        self.tail(z)
    }

    fn mean(&self) -> f64 {
        self.scale / (self.shape - 1.0)
    }

    fn tail_mass(&self, z: f64) -> f64 {
        let z = z.max(0.0);
        self.mean() * ((1.0 - self.shape) * (z / self.scale).ln_1p()).exp()
    }

    fn quantile(&self, p: f64) -> f64 {
        self.scale * ((-(-p).ln_1p() / self.shape).exp_m1())
    }

    fn scale(&self) -> f64 {
        self.scale
    }
}

/// All jumps equal `value`: a single atom.
#[derive(Clone, Debug, PartialEq)]
pub struct Deterministic {
    atoms: [f64; 1],
}

pub fn deterministic_dist(value: f64) -> Result<Deterministic> {
    if !(value > 0.0 && value.is_finite()) {
        return Err(Error::invalid("value", format!("must be finite and > 0, got {value}")));
    }
    Ok(Deterministic { atoms: [value] })
}

impl Deterministic {
    pub fn value(&self) -> f64 {
        self.atoms[0]
    }
}

impl JumpDistribution for Deterministic {
    fn tail(&self, z: f64) -> f64 {
        if z < self.value() {
            1.0
        } else {
            0.0
        }
    }

    fn tail_left(&self, z: f64) -> f64 {
        if z <= self.value() {
            1.0
        } else {
            0.0
        }
    }

    fn mean(&self) -> f64 {
        self.value()
    }

    fn tail_mass(&self, z: f64) -> f64 {
        (self.value() - z.max(0.0)).max(0.0)
    }

    fn quantile(&self, _p: f64) -> f64 {
        self.value()
    }

    fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    fn sample(&self, _rng: &mut dyn RngCore) -> f64 {
        self.value()
    }
}

/// Serializable description of a bundled distribution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "lowercase")]
pub enum DistributionSpec {
    Exponential { mean: f64 },
    Pareto { shape: f64, scale: f64 },
    Deterministic { value: f64 },
}

impl DistributionSpec {
    pub fn build(&self) -> Result<Box<dyn JumpDistribution>> {
        Ok(match *self {
            DistributionSpec::Exponential { mean } => Box::new(exponential_dist(mean)?),
            DistributionSpec::Pareto { shape, scale } => Box::new(pareto_dist(shape, scale)?),
            DistributionSpec::Deterministic { value } => Box::new(deterministic_dist(value)?),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constants_direct_substitution() {
        let p = ModelParams::new(2.0, 0.0, 1.0, 1.0, 1.0, 1.0).unwrap();
        let k = derive_constants(&p).unwrap();
        assert_eq!((k.gamma, k.alpha, k.mu), (4.0, 2.0, 2.0));
    }

    #[test]
    fn full_risky_allocation_gives_two_a_over_sigma_squared() {
        for &(a, sigma) in &[(0.3, 0.7), (2.0, 1.5), (-0.1, 0.2)] {
            let p = ModelParams::new(a, 0.0, sigma, 1.0, 1.0, 1.0).unwrap();
            let k = derive_constants(&p).unwrap();
            let beta = 2.0 * a / (sigma * sigma) - 1.0;
            assert_relative_eq!(k.gamma, 2.0 * a / (sigma * sigma), max_relative = 1e-15);
            assert_relative_eq!(k.gamma, beta + 1.0, max_relative = 1e-14);
        }
    }

    #[test]
    fn equal_rates_leave_only_the_riskless_term() {
        let p = ModelParams::new(0.05, 0.05, 0.4, 0.5, 1.0, 1.0).unwrap();
        let k = derive_constants(&p).unwrap();
        assert_relative_eq!(k.gamma, 2.0 * 0.05 / (0.25 * 0.16), max_relative = 1e-15);
    }

    #[test]
    fn rejects_bad_params() {
        assert!(ModelParams::new(1.0, 0.0, 0.0, 1.0, 1.0, 1.0).is_err());
        assert!(ModelParams::new(1.0, 0.0, 1.0, 0.0, 1.0, 1.0).is_err());
        assert!(ModelParams::new(1.0, 0.0, 1.0, 1.5, 1.0, 1.0).is_err());
        assert!(ModelParams::new(1.0, 0.0, 1.0, 1.0, 0.0, 1.0).is_err());
        assert!(ModelParams::new(1.0, 0.0, 1.0, 1.0, 1.0, -1.0).is_err());
        assert!(ModelParams::new(f64::NAN, 0.0, 1.0, 1.0, 1.0, 1.0).is_err());
        assert!(ModelParams::new(1.0, 0.0, 1.0, 1.0, 1.0, 0.0).is_ok());
    }

    #[test]
    fn gluing_point_arithmetic() {
        let k = DerivedConstants { gamma: 4.0, alpha: 2.0, mu: 2.0 };
        let d = exponential_dist(1.0).unwrap();
        let g = choose_u0(&k, &d, 2.0).unwrap();
        assert_eq!((g.u0, g.theta), (4.0, 0.5));
        let g = choose_u0(&k, &d, 1.01).unwrap();
        assert_relative_eq!(g.theta, 1.0 / 1.01, max_relative = 1e-15);
        assert!(choose_u0(&k, &d, 1.0).is_err());
        assert!(choose_u0(&k, &d, 0.5).is_err());
    }

    #[test]
    fn gluing_point_without_jumps_uses_natural_scale() {
        let k = DerivedConstants { gamma: 4.0, alpha: 2.0, mu: 0.0 };
        let d = exponential_dist(1.0).unwrap();
        let g = choose_u0(&k, &d, 2.0).unwrap();
        assert_eq!(g.theta, 0.0);
        assert_eq!(g.u0, 1.0);
    }

    #[test]
    fn bundled_tails() {
        let e = exponential_dist(1.0).unwrap();
        assert_relative_eq!(e.tail(0.7), (-0.7f64).exp(), max_relative = 1e-15);
        assert_eq!(e.mean(), 1.0);
        let p = pareto_dist(2.0, 1.0).unwrap();
        assert_relative_eq!(p.tail(3.0), 1.0 / 16.0, max_relative = 1e-14);
        assert_eq!(p.mean(), 1.0);
        assert!(pareto_dist(1.0, 1.0).is_err());
        assert!(pareto_dist(0.5, 1.0).is_err());
        let d = deterministic_dist(1.0).unwrap();
        assert_eq!(d.tail(0.5), 1.0);
        assert_eq!(d.tail(1.5), 0.0);
        assert_eq!(d.tail(1.0), 0.0);
        assert_eq!(d.tail_left(1.0), 1.0);
    }

    #[test]
    fn tails_start_at_one_and_dominate_right_limit() {
        let dists: Vec<Box<dyn JumpDistribution>> = vec![
            Box::new(exponential_dist(0.5).unwrap()),
            Box::new(pareto_dist(3.0, 2.0).unwrap()),
            Box::new(deterministic_dist(1.25).unwrap()),
        ];
        for d in &dists {
            assert_eq!(d.tail(0.0), 1.0);
            let mut prev = 1.0;
            for i in 0..400 {
                let z = i as f64 * 0.0125;
                let t = d.tail(z);
                assert!(t <= prev && (0.0..=1.0).contains(&t));
                assert!(d.tail_left(z) >= t);
                prev = t;
            }
        }
    }

    #[test]
    fn quantile_inverts_the_tail() {
        let e = exponential_dist(2.0).unwrap();
        let p = pareto_dist(2.5, 0.5).unwrap();
        for &q in &[0.01, 0.3, 0.5, 0.9, 0.999] {
            assert_relative_eq!(e.tail(e.quantile(q)), 1.0 - q, max_relative = 1e-12);
            assert_relative_eq!(p.tail(p.quantile(q)), 1.0 - q, max_relative = 1e-12);
        }
    }

    #[test]
    fn empirical_means_within_three_standard_errors() {
        let dists: Vec<(Box<dyn JumpDistribution>, f64)> = vec![
            (Box::new(exponential_dist(1.0).unwrap()), 1.0),
            // Lomax(3, 2): variance = scale² shape / ((shape-1)²(shape-2)) = 3
            (Box::new(pareto_dist(3.0, 2.0).unwrap()), 3.0f64.sqrt()),
            (Box::new(deterministic_dist(0.75).unwrap()), 0.0),
        ];
        let n = 1_000_000;
        for (k, (d, sd)) in dists.iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(17 + k as u64);
            let mut sum = 0.0;
            for _ in 0..n {
                let x = d.sample(&mut rng);
                assert!(x > 0.0);
                sum += x;
            }
            let m = sum / n as f64;
            let se = sd / (n as f64).sqrt();
            assert!(
                (m - d.mean()).abs() <= 3.0 * se + 1e-12,
                "{d:?}: empirical {m}, exact {}",
                d.mean()
            );
        }
    }

    #[test]
    fn spec_round_trips_through_json() {
        let s: DistributionSpec =
            serde_json::from_str(r#"{"kind":"pareto","params":{"shape":2.0,"scale":1.0}}"#).unwrap();
        assert_eq!(s, DistributionSpec::Pareto { shape: 2.0, scale: 1.0 });
        assert!(s.build().is_ok());
        let bad: DistributionSpec =
            serde_json::from_str(r#"{"kind":"pareto","params":{"shape":1.0,"scale":1.0}}"#).unwrap();
        assert!(bad.build().is_err());
    }
}
