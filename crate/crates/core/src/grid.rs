//! Piecewise-cubic Hermite grid functions.

use crate::error::{Error, Result};

/// Behaviour outside `[first node, last node]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Extrapolation {
    /// Hold the end value.
    Clamp,
    /// Continue along the end slope.
    Linear,
}

/// Values (and slopes) on a strictly increasing set of nodes, evaluated by
/// cubic Hermite interpolation.
#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction {
    nodes: Vec<f64>,
    values: Vec<f64>,
    slopes: Vec<f64>,
    extrapolation: Extrapolation,
}

fn check_nodes(nodes: &[f64], values: &[f64]) -> Result<()> {
    if nodes.len() < 2 || nodes.len() != values.len() {
        return Err(Error::Numerical(format!(
            "grid function needs >= 2 nodes and matching values ({} nodes, {} values)",
            nodes.len(),
            values.len()
        )));
    }
    if nodes.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Numerical("grid nodes must be strictly increasing".into()));
    }
    if values.iter().chain(nodes).any(|v| !v.is_finite()) {
        return Err(Error::Numerical("grid nodes and values must be finite".into()));
    }
    Ok(())
}

impl GridFunction {
    /// Monotone piecewise-cubic interpolant (Fritsch–Carlson slopes, as in
    /// PCHIP): monotone data give a monotone interpolant.
    pub fn monotone(nodes: Vec<f64>, values: Vec<f64>, extrapolation: Extrapolation) -> Result<Self> {
        check_nodes(&nodes, &values)?;
        let slopes = pchip_slopes(&nodes, &values);
        Ok(Self {
            nodes,
            values,
            slopes,
            extrapolation,
        })
    }

    /// Hermite interpolant with prescribed slopes. On intervals where the
    /// data are strictly monotone the slopes are limited so the interpolant
    /// stays monotone there.
    pub fn hermite(
        nodes: Vec<f64>,
        values: Vec<f64>,
        mut slopes: Vec<f64>,
        extrapolation: Extrapolation,
    ) -> Result<Self> {
        check_nodes(&nodes, &values)?;
        if slopes.len() != nodes.len() || slopes.iter().any(|s| !s.is_finite()) {
            return Err(Error::Numerical("slopes must be finite, one per node".into()));
        }
        limit_monotone(&nodes, &values, &mut slopes);
        Ok(Self {
            nodes,
            values,
            slopes,
            extrapolation,
        })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn slopes(&self) -> &[f64] {
        &self.slopes
    }

    pub fn extrapolation(&self) -> Extrapolation {
        self.extrapolation
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn interval(&self, x: f64) -> usize {
        let n = self.nodes.len();
        self.nodes.partition_point(|&v| v <= x).clamp(1, n - 1) - 1
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.nodes.len();
        if x < self.nodes[0] || x > self.nodes[n - 1] {
            let k = if x < self.nodes[0] { 0 } else { n - 1 };
            return match self.extrapolation {
                Extrapolation::Clamp => self.values[k],
                Extrapolation::Linear => self.values[k] + self.slopes[k] * (x - self.nodes[k]),
            };
        }
        let i = self.interval(x);
        let h = self.nodes[i + 1] - self.nodes[i];
        let t = (x - self.nodes[i]) / h;
        let (y0, y1) = (self.values[i], self.values[i + 1]);
        let (d0, d1) = (self.slopes[i] * h, self.slopes[i + 1] * h);
        let t2 = t * t;
        let t3 = t2 * t;
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        h00 * y0 + h10 * d0 + h01 * y1 + h11 * d1
    }

    pub fn derivative(&self, x: f64) -> f64 {
        let n = self.nodes.len();
        if x < self.nodes[0] || x > self.nodes[n - 1] {
            let k = if x < self.nodes[0] { 0 } else { n - 1 };
            return match self.extrapolation {
                Extrapolation::Clamp => 0.0,
                Extrapolation::Linear => self.slopes[k],
            };
        }
        let i = self.interval(x);
        let h = self.nodes[i + 1] - self.nodes[i];
        let t = (x - self.nodes[i]) / h;
        let (y0, y1) = (self.values[i], self.values[i + 1]);
        let (d0, d1) = (self.slopes[i] * h, self.slopes[i + 1] * h);
        let t2 = t * t;
        ((6.0 * t2 - 6.0 * t) * (y0 - y1) + (3.0 * t2 - 4.0 * t + 1.0) * d0 + (3.0 * t2 - 2.0 * t) * d1)
            / h
    }
}

fn pchip_slopes(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let delta: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / h[i]).collect();
    if n == 2 {
        return vec![delta[0]; 2];
    }
    let mut d = vec![0.0; n];
    for k in 1..n - 1 {
        let (a, b) = (delta[k - 1], delta[k]);
        if a * b > 0.0 {
            let w1 = 2.0 * h[k] + h[k - 1];
            let w2 = h[k] + 2.0 * h[k - 1];
            d[k] = (w1 + w2) / (w1 / a + w2 / b);
        }
    }
    d[0] = pchip_end(h[0], h[1], delta[0], delta[1]);
    d[n - 1] = pchip_end(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
    d
}

fn pchip_end(h0: f64, h1: f64, m0: f64, m1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * m0 - h0 * m1) / (h0 + h1);
    if d.signum() != m0.signum() {
        0.0
    } else if m0.signum() != m1.signum() && d.abs() > 3.0 * m0.abs() {
        3.0 * m0
    } else {
        d
    }
}

fn limit_monotone(x: &[f64], y: &[f64], d: &mut [f64]) {
    for i in 0..x.len() - 1 {
        let delta = (y[i + 1] - y[i]) / (x[i + 1] - x[i]);
        if delta == 0.0 {
            continue;
        }
        for k in [i, i + 1] {
            if d[k] * delta < 0.0 {
                d[k] = 0.0;
            }
        }
        let a = d[i] / delta;
        let b = d[i + 1] / delta;
        let s = a * a + b * b;
        if s > 9.0 {
            let tau = 3.0 / s.sqrt();
            d[i] = tau * a * delta;
            d[i + 1] = tau * b * delta;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rejects_unsorted_nodes() {
        assert!(GridFunction::monotone(vec![0.0, 0.0, 1.0], vec![1.0, 2.0, 3.0], Extrapolation::Clamp).is_err());
        assert!(GridFunction::monotone(vec![0.0], vec![1.0], Extrapolation::Clamp).is_err());
        assert!(GridFunction::monotone(vec![0.0, 1.0], vec![1.0, f64::NAN], Extrapolation::Clamp).is_err());
    }

    #[test]
    fn hermite_with_exact_slopes_reproduces_cubics() {
        let f = |x: f64| 1.0 + x - 0.3 * x * x + 0.05 * x * x * x;
        let df = |x: f64| 1.0 - 0.6 * x + 0.15 * x * x;
        let nodes: Vec<f64> = (0..6).map(|i| i as f64 * 0.4).collect();
        let g = GridFunction::hermite(
            nodes.clone(),
            nodes.iter().map(|&x| f(x)).collect(),
            nodes.iter().map(|&x| df(x)).collect(),
            Extrapolation::Clamp,
        )
        .unwrap();
        for i in 0..=100 {
            let x = i as f64 * 0.02;
            assert!((g.eval(x) - f(x)).abs() < 1e-14);
            assert!((g.derivative(x) - df(x)).abs() < 1e-12);
        }
    }

    #[test]
    fn extrapolation_rules() {
        let g = GridFunction::monotone(vec![0.0, 1.0, 2.0], vec![0.0, 1.0, 2.0], Extrapolation::Clamp).unwrap();
        assert_eq!(g.eval(5.0), 2.0);
        assert_eq!(g.eval(-1.0), 0.0);
        let g = GridFunction::monotone(vec![0.0, 1.0, 2.0], vec![0.0, 1.0, 2.0], Extrapolation::Linear).unwrap();
        assert!((g.eval(3.0) - 3.0).abs() < 1e-14);
    }

    proptest! {
        #[test]
        fn monotone_data_give_monotone_interpolant(
            steps in proptest::collection::vec((0.01f64..2.0, 0.0f64..3.0), 3..20),
        ) {
            let mut x = vec![0.0];
            let mut y = vec![0.0];
            for (dx, dy) in &steps {
                x.push(x.last().unwrap() + dx);
                y.push(y.last().unwrap() + dy);
            }
            let g = GridFunction::monotone(x.clone(), y.clone(), Extrapolation::Clamp).unwrap();
            let hi = *x.last().unwrap();
            let mut prev = g.eval(0.0);
            for i in 1..=500 {
                let v = g.eval(hi * i as f64 / 500.0);
                prop_assert!(v >= prev - 1e-12);
                prev = v;
            }
            for (xi, yi) in x.iter().zip(&y) {
                prop_assert!((g.eval(*xi) - yi).abs() <= 1e-12 * (1.0 + yi.abs()));
            }
        }
    }
}
