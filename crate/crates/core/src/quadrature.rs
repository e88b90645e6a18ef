//! Adaptive Gauss–Kronrod integration and the two integrals the solver is
//! built on: `∫₀^∞ g(u+z) F̄(z) dz` and `∫ t^{γ-2} e^{α/t} g(t) dt`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::model::JumpDistribution;

/// Kronrod abscissae of the 21-point rule; the odd entries are the 10-point
/// Gauss nodes.
const XGK21: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];
const WGK21: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_208_976_119_726,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];
const WG10: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

/// 10-point Gauss–Legendre rule on `[-1, 1]`: `(node, weight)` pairs.
pub(crate) fn gauss_legendre_10() -> impl Iterator<Item = (f64, f64)> {
    (0..5).flat_map(|k| {
        let x = XGK21[2 * k + 1];
        let w = WG10[k];
        [(-x, w), (x, w)]
    })
}

/// Fixed 10-point Gauss–Legendre quadrature on `[a, b]`.
pub(crate) fn gauss_10<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> f64 {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    gauss_legendre_10().map(|(x, w)| w * f(c + h * x)).sum::<f64>() * h
}

/// 7-point Gauss–Lobatto rule on `[-1, 1]` (endpoints included).
pub(crate) const LOBATTO7: [(f64, f64); 7] = [
    (-1.0, 0.047_619_047_619_047_619_047_619_047_619_048),
    (-0.830_223_896_278_566_929_872_032_213_967_465, 0.276_826_047_361_565_948_010_700_406_290_066),
    (-0.468_848_793_470_714_213_803_771_881_908_767, 0.431_745_381_209_862_623_417_871_022_281_076),
    (0.0, 0.487_619_047_619_047_619_047_619_047_619_048),
    (0.468_848_793_470_714_213_803_771_881_908_767, 0.431_745_381_209_862_623_417_871_022_281_076),
    (0.830_223_896_278_566_929_872_032_213_967_465, 0.276_826_047_361_565_948_010_700_406_290_066),
    (1.0, 0.047_619_047_619_047_619_047_619_047_619_048),
];

/// A quadrature result with its error estimate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub abs_error: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
    pub max_panels: usize,
}

impl Tolerance {
    pub fn relative(rel: f64) -> Self {
        Self {
            abs: 0.0,
            rel,
            max_panels: 4000,
        }
    }

    pub fn with_abs(mut self, abs: f64) -> Self {
        self.abs = abs;
        self
    }

    fn target(&self, value: f64) -> f64 {
        // the per-panel error floor is 50 ε |f|, so tighter requests cannot be met
        self.abs.max(self.rel.max(100.0 * f64::EPSILON) * value.abs())
    }
}

impl Default for Tolerance {
    fn default() -> Self {
        Self::relative(1e-12)
    }
}

/// One Gauss–Kronrod 10/21 panel with the QUADPACK error heuristic.
fn gk21<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = fc * WGK21[10];
    let mut gauss = 0.0;
    let mut abs = kronrod.abs();
    let mut fv = [(0.0, 0.0); 10];
    for (j, &x) in XGK21[..10].iter().enumerate() {
        let f1 = f(c - h * x);
        let f2 = f(c + h * x);
        fv[j] = (f1, f2);
        kronrod += WGK21[j] * (f1 + f2);
        abs += WGK21[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            gauss += WG10[j / 2] * (f1 + f2);
        }
    }
    let mean = 0.5 * kronrod;
    let mut asc = WGK21[10] * (fc - mean).abs();
    for (j, (f1, f2)) in fv.iter().enumerate() {
        asc += WGK21[j] * ((f1 - mean).abs() + (f2 - mean).abs());
    }
    let value = kronrod * h;
    let (abs, asc) = (abs * h.abs(), asc * h.abs());
    let mut err = ((kronrod - gauss) * h).abs();
    if asc != 0.0 && err != 0.0 {
        err = asc * (200.0 * err / asc).powf(1.5).min(1.0);
    }
    if abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * abs);
    }
    (value, err, abs)
}

struct Panel {
    a: f64,
    b: f64,
    value: f64,
    err: f64,
    /// `∫|f|` over the panel
    abs: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.err.total_cmp(&other.err) == Ordering::Equal
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.err.total_cmp(&other.err)
    }
}

/// Globally adaptive Gauss–Kronrod integration over the panels delimited by
/// `breaks` (sorted, at least two points). The panel with the largest error
/// is bisected until the summed error meets the tolerance.
pub fn integrate_panels<F: Fn(f64) -> f64>(f: F, breaks: &[f64], tol: Tolerance) -> Result<Integral> {
    debug_assert!(breaks.len() >= 2);
    let mut heap = BinaryHeap::with_capacity(2 * breaks.len() + 16);
    let mut settled = 0.0f64;
    let mut settled_err = 0.0f64;
    let mut settled_abs = 0.0f64;
    for w in breaks.windows(2) {
        if w[1] > w[0] {
            let (value, err, abs) = gk21(&f, w[0], w[1]);
            heap.push(Panel { a: w[0], b: w[1], value, err, abs });
        }
    }
    let mut previous = f64::NAN;
    let mut count = heap.len();
    loop {
        let (value, err, abs) = heap.iter().fold((settled, settled_err, settled_abs), |(v, e, a), p| {
            (v + p.value, e + p.err, a + p.abs)
        });
        if !value.is_finite() {
            return Err(Error::Quadrature {
                lo: breaks[0],
                hi: *breaks.last().unwrap(),
                previous,
                last: value,
            });
        }
        // with cancellation the attainable accuracy is set by ∫|f|, not |∫f|
        let floor = 100.0 * f64::EPSILON * abs;
        if err <= tol.target(value).max(floor) || heap.is_empty() {
            return Ok(Integral { value, abs_error: err });
        }
        if count >= tol.max_panels {
            return Err(Error::Quadrature {
                lo: breaks[0],
                hi: *breaks.last().unwrap(),
                previous,
                last: value,
            });
        }
        previous = value;
        let worst = heap.pop().unwrap();
        let mid = 0.5 * (worst.a + worst.b);
        if !(mid > worst.a && mid < worst.b) {
            // cannot bisect further
            settled += worst.value;
            settled_err += worst.err;
            settled_abs += worst.abs;
            continue;
        }
        let (v1, e1, a1) = gk21(&f, worst.a, mid);
        let (v2, e2, a2) = gk21(&f, mid, worst.b);
        heap.push(Panel { a: worst.a, b: mid, value: v1, err: e1, abs: a1 });
        heap.push(Panel { a: mid, b: worst.b, value: v2, err: e2, abs: a2 });
        count += 1;
    }
}

/// Adaptive integral over `[a, b]`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: Tolerance) -> Result<Integral> {
    if a == b {
        return Ok(Integral { value: 0.0, abs_error: 0.0 });
    }
    if a > b {
        let r = integrate_panels(f, &[b, a], tol)?;
        return Ok(Integral { value: -r.value, abs_error: r.abs_error });
    }
    integrate_panels(f, &[a, b], tol)
}

/// Truncation point `z_max` with `∫_{z_max}^∞ F̄ ≤ eps · E[ξ]`.
pub fn tail_truncation(dist: &dyn JumpDistribution, eps: f64) -> f64 {
    let target = eps * dist.mean();
    let mut z = dist.scale().max(f64::MIN_POSITIVE);
    if let Some(&last) = dist.atoms().iter().max_by(|a, b| a.total_cmp(b)) {
        z = z.max(last);
    }
    for _ in 0..2000 {
        if dist.tail_mass(z) <= target {
            break;
        }
        z *= 2.0;
    }
    z
}

/// `∫₀^∞ g(u+z) F̄(z) dz` (the operator `A` without the factor `μ`).
///
/// The range is truncated at `z_max` from [`tail_truncation`]; the remainder
/// is bounded by `|g(u + z_max)| · ∫_{z_max}^∞ F̄` and folded into the
/// error estimate. `[0, z_max]` is split into geometric panels (plus the
/// atoms of `F` and any caller breakpoints, given in `z`) and integrated
/// adaptively to relative accuracy `eps`.
pub fn integrate_tail_against_f<G: Fn(f64) -> f64>(
    g: G,
    u: f64,
    dist: &dyn JumpDistribution,
    eps: f64,
    extra_breaks: &[f64],
) -> Result<Integral> {
    let z_max = tail_truncation(dist, eps);
    let scale = dist.scale();
    let first = 0.5 * scale.min(u.max(1e-3 * scale)).min(z_max);
    let mut breaks = vec![0.0];
    let mut z = first;
    while z < z_max {
        breaks.push(z);
        z *= 2.0;
    }
    breaks.push(z_max);
    breaks.extend(
        dist.atoms()
            .iter()
            .chain(extra_breaks)
            .copied()
            .filter(|&b| b > 0.0 && b < z_max),
    );
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let integrand = |z: f64| {
        let t = dist.tail(z);
        if t == 0.0 {
            0.0
        } else {
            g(u + z) * t
        }
    };
    let mut r = integrate_panels(integrand, &breaks, Tolerance::relative(eps).with_abs(1e-300))?;
    r.abs_error += g(u + z_max).abs() * dist.tail_mass(z_max);
    Ok(r)
}

/// `∫_lo^hi t^{γ-2} e^{α/t} g(t) dt` for `0 < lo < hi ≤ ∞`.
///
/// For `hi = ∞` the integral is taken in `s = 1/t` and `g` must decay like
/// `t^-decay` with `decay > γ - 1`.
pub fn integrate_weighted<G: Fn(f64) -> f64>(
    g: G,
    lo: f64,
    hi: f64,
    gamma: f64,
    alpha: f64,
    decay: Option<f64>,
    tol: Tolerance,
) -> Result<Integral> {
    if !(lo > 0.0) || !(hi >= lo) {
        return Err(Error::Numerical(format!(
            "weighted integral needs 0 < lo <= hi, got [{lo}, {hi}]"
        )));
    }
    if hi.is_infinite() {
        match decay {
            Some(p) if p > gamma - 1.0 => {}
            _ => {
                return Err(Error::Numerical(format!(
                    "t^(gamma-2) g(t) is not integrable at infinity for gamma = {gamma} and declared decay {decay:?}"
                )))
            }
        }
        let integrand = |s: f64| {
            if s <= 0.0 {
                return 0.0;
            }
            let t = 1.0 / s;
            let gv = g(t);
            if gv == 0.0 {
                0.0
            } else {
                (-gamma * s.ln() + alpha * s).exp() * gv
            }
        };
        return integrate(integrand, 0.0, 1.0 / lo, tol);
    }
    let integrand = |t: f64| {
        let gv = g(t);
        if gv == 0.0 {
            0.0
        } else {
            ((gamma - 2.0) * t.ln() + alpha / t).exp() * gv
        }
    };
    integrate(integrand, lo, hi, tol)
}
