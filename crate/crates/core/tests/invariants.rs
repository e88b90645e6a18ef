use annuity_ruin::config::RunConfig;
use annuity_ruin::exec::Execution;
use annuity_ruin::mc::{simulate_paths, McConfig};
use annuity_ruin::model::{
    derive_constants, deterministic_dist, exponential_dist, pareto_dist, JumpDistribution, ModelParams,
};
use annuity_ruin::pipeline::solve_model;
use annuity_ruin::quadrature::integrate_tail_against_f;
use proptest::prelude::*;

fn bundled() -> Vec<Box<dyn JumpDistribution>> {
    vec![
        Box::new(exponential_dist(0.7).unwrap()),
        Box::new(pareto_dist(3.5, 2.0).unwrap()),
        Box::new(deterministic_dist(1.3).unwrap()),
    ]
}

// ∫₀^∞ F̄ = E[ξ]
#[test]
fn tail_quadrature_recovers_the_mean() {
    for d in bundled() {
        let r = integrate_tail_against_f(|_| 1.0, 0.0, d.as_ref(), 1e-12, &[]).unwrap();
        assert!((r.value - d.mean()).abs() <= 1e-8 * d.mean(), "{d:?}: {} vs {}", r.value, d.mean());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn exponential_scale_consistency(mean in 0.05f64..20.0, z in 0.0f64..10.0, p in 0.001f64..0.999) {
        let unit = exponential_dist(1.0).unwrap();
        let d = exponential_dist(mean).unwrap();
        prop_assert!((d.tail(mean * z) - unit.tail(z)).abs() <= 1e-14);
        prop_assert!((d.quantile(p) - mean * unit.quantile(p)).abs() <= 1e-12 * mean * (1.0 + unit.quantile(p)));
        prop_assert!((d.tail_mass(mean * z) - mean * unit.tail_mass(z)).abs() <= 1e-13 * mean);
    }

    #[test]
    fn pareto_scale_consistency(shape in 1.1f64..8.0, scale in 0.1f64..10.0, z in 0.0f64..50.0, p in 0.001f64..0.999) {
        let unit = pareto_dist(shape, 1.0).unwrap();
        let d = pareto_dist(shape, scale).unwrap();
        prop_assert!((d.tail(scale * z) - unit.tail(z)).abs() <= 1e-13);
        prop_assert!((d.quantile(p) - scale * unit.quantile(p)).abs() <= 1e-11 * scale * (1.0 + unit.quantile(p)));
        // quantile inverts the tail
        prop_assert!((d.tail(d.quantile(p)) - (1.0 - p)).abs() <= 1e-11);
    }

    #[test]
    fn tail_operator_is_linear_in_the_scale_of_g(k in 0.1f64..5.0, u in 0.01f64..10.0) {
        let d = exponential_dist(1.0).unwrap();
        let g = |x: f64| (1.0 + x).powi(-3);
        let a = integrate_tail_against_f(g, u, &d, 1e-12, &[]).unwrap().value;
        let b = integrate_tail_against_f(|x| k * g(x), u, &d, 1e-12, &[]).unwrap().value;
        prop_assert!((b - k * a).abs() <= 1e-10 * (k * a).abs());
    }

    // γ depends only on the investment parameters; α ∝ c and μ ∝ λ.
    #[test]
    fn constants_scale_with_premium_and_intensity(
        a in -1.0f64..3.0, r in 0.0f64..0.5, sigma in 0.1f64..2.0, kappa in 0.05f64..1.0,
        c in 0.1f64..5.0, lambda in 0.0f64..5.0, s in 0.1f64..10.0,
    ) {
        let p = ModelParams::new(a, r, sigma, kappa, c, lambda).unwrap();
        let q = ModelParams::new(a, r, sigma, kappa, s * c, s * lambda).unwrap();
        let (kp, kq) = (derive_constants(&p).unwrap(), derive_constants(&q).unwrap());
        prop_assert!((kp.gamma - kq.gamma).abs() <= 1e-12 * kp.gamma.abs().max(1.0));
        prop_assert!((kq.alpha - s * kp.alpha).abs() <= 1e-12 * kq.alpha);
        prop_assert!((kq.mu - s * kp.mu).abs() <= 1e-12 * kq.mu.max(1e-300));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn simulation_is_schedule_independent(seed in any::<u64>(), u in 0.0f64..5.0) {
        let p = ModelParams::new(2.0, 0.1, 1.0, 1.0, 1.0, 1.0).unwrap();
        let d = exponential_dist(1.0).unwrap();
        let cfg = McConfig { horizon: 10.0, paths: 200, barrier: 50.0, seed, ..Default::default() };
        let par = simulate_paths(&p, &d, u, &cfg);
        let seq = simulate_paths(&p, &d, u, &McConfig { execution: Execution::Sequential, ..cfg });
        prop_assert_eq!(par, seq);
    }

    // Φ(0) = 0, Φ increasing, Φ + Ψ = 1 across the parameter space.
    #[test]
    fn solution_is_a_distribution_function(
        a in 1.2f64..3.0, sigma in 0.6f64..1.2, c in 0.3f64..2.0, lambda in 0.1f64..1.5, mean in 0.3f64..2.0,
    ) {
        let json = format!(
            r#"{{"a": {a}, "r": 0.1, "sigma": {sigma}, "kappa": 1.0, "c": {c}, "lambda": {lambda},
                "distribution": {{"kind": "exponential", "params": {{"mean": {mean}}}}},
                "solver": {{"volterra_nodes": 256, "tail_panels": 48}}}}"#
        );
        let cfg = RunConfig::from_json(&json).unwrap();
        prop_assume!(derive_constants(&cfg.params()).unwrap().gamma > 1.2);
        let s = solve_model(&cfg, false).unwrap();
        let sol = &s.solution;
        prop_assert_eq!(sol.phi(0.0).unwrap(), 0.0);
        let mut prev = 0.0;
        for i in 1..80 {
            let u = 1e-2 * 1.15f64.powi(i);
            let phi = sol.phi(u).unwrap();
            prop_assert!(phi >= prev && phi <= 1.0 + 1e-12, "Phi({u}) = {phi} after {prev}");
            prop_assert!((phi + sol.psi(u).unwrap() - 1.0).abs() <= 1e-9);
            prev = phi;
        }
    }
}
