//! Quadrature primitives: a globally adaptive Gauss-Kronrod (10, 21) integrator for
//! complex-valued integrands over finite and semi-infinite segments, and cached
//! Gauss-Legendre rules for fixed panels.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::sync::OnceLock;

use num_complex::Complex64;

use crate::error::{Error, Result};

const XGK: [f64; 11] = [
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

const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_208_984_813_905,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

// Gauss weights for the odd Kronrod abscissae XGK[1], XGK[3], ..., XGK[9].
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

/// Error targets for [`integrate`].
#[derive(Debug, Clone, Copy)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
    pub max_intervals: usize,
}

impl Tolerance {
    pub const fn new(abs: f64, rel: f64) -> Self {
        Tolerance {
            abs,
            rel,
            max_intervals: 4000,
        }
    }

    pub const fn with_max_intervals(mut self, n: usize) -> Self {
        self.max_intervals = n;
        self
    }
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance::new(1e-13, 1e-10)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Quad {
    pub value: Complex64,
    pub error: f64,
    pub evaluations: usize,
    pub converged: bool,
}

impl Quad {
    /// Turns a non-converged result into an error naming `what`.
    pub fn require(self, what: &str) -> Result<Complex64> {
        if self.converged {
            Ok(self.value)
        } else {
            Err(Error::Quadrature(format!(
                "{what}: estimated error {:.3e} on value {:.6e}",
                self.error,
                self.value.norm()
            )))
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Map {
    Finite,
    // t = anchor + (1 - s) / s, s in (0, 1]
    Right(f64),
    // t = anchor - (1 - s) / s, s in (0, 1]
    Left(f64),
}

impl Map {
    #[inline]
    fn apply(self, x: f64) -> (f64, f64) {
        match self {
            Map::Finite => (x, 1.0),
            Map::Right(a) => (a + (1.0 - x) / x, 1.0 / (x * x)),
            Map::Left(b) => (b - (1.0 - x) / x, 1.0 / (x * x)),
        }
    }
}

struct Piece {
    map: Map,
    a: f64,
    b: f64,
    value: Complex64,
    error: f64,
}

impl PartialEq for Piece {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Piece {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn gk21<F: FnMut(f64) -> Complex64>(f: &mut F, map: Map, a: f64, b: f64) -> (Complex64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut eval = |x: f64| {
        let (t, jac) = map.apply(x);
        let v = f(t) * jac;
        if v.re.is_finite() && v.im.is_finite() {
            v
        } else {
            Complex64::new(f64::NAN, f64::NAN)
        }
    };
    let fc = eval(center);
    let mut kronrod = fc * WGK[10];
    let mut gauss = Complex64::new(0.0, 0.0);
    for j in 0..10 {
        let dx = half * XGK[j];
        let f1 = eval(center - dx);
        let f2 = eval(center + dx);
        kronrod += (f1 + f2) * WGK[j];
        if j % 2 == 1 {
            gauss += (f1 + f2) * WG[j / 2];
        }
    }
    let value = kronrod * half;
    let diff = ((kronrod - gauss) * half).norm();
    // QUADPACK-style error scaling keeps the estimate honest for smooth integrands.
    let err = if diff == 0.0 {
        0.0
    } else {
        let scaled = (200.0 * diff / value.norm().max(1e-300)).powf(1.5) * value.norm();
        diff.min(scaled.max(50.0 * f64::EPSILON * value.norm()))
    };
    (value, err)
}

/// Integrates `f` over the union of consecutive segments between `points`.
///
/// `points` are sorted here; the outermost may be infinite. Interior points act as
/// forced breakpoints. Repeated points are skipped.
pub fn integrate<F: FnMut(f64) -> Complex64>(mut f: F, points: &[f64], tol: Tolerance) -> Quad {
    let mut pieces: BinaryHeap<Piece> = BinaryHeap::new();
    let mut total = Complex64::new(0.0, 0.0);
    let mut total_err = 0.0;
    let mut evaluations = 0;

    let push = |map: Map, a: f64, b: f64, f: &mut F, heap: &mut BinaryHeap<Piece>| {
        let (value, error) = gk21(f, map, a, b);
        heap.push(Piece {
            map,
            a,
            b,
            value,
            error,
        });
        (value, error)
    };

    let mut sorted = points.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut pts: Vec<f64> = Vec::with_capacity(points.len() + 1);
    for p in sorted {
        if pts.last().map_or(true, |&q| p > q) {
            pts.push(p);
        }
    }
    if pts.len() == 2 && pts[0] == f64::NEG_INFINITY && pts[1] == f64::INFINITY {
        pts.insert(1, 0.0);
    }
    for w in pts.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let (map, a, b) = match (lo.is_finite(), hi.is_finite()) {
            (true, true) => (Map::Finite, lo, hi),
            (true, false) => (Map::Right(lo), 0.0, 1.0),
            (false, true) => (Map::Left(hi), 0.0, 1.0),
            (false, false) => unreachable!("doubly infinite segment is split at 0"),
        };
        let (v, e) = push(map, a, b, &mut f, &mut pieces);
        total += v;
        total_err += e;
        evaluations += 21;
    }

    loop {
        if !(total.re.is_finite() && total.im.is_finite()) {
            return Quad {
                value: total,
                error: f64::INFINITY,
                evaluations,
                converged: false,
            };
        }
        let target = tol.abs.max(tol.rel * total.norm());
        if total_err <= target {
            return Quad {
                value: total,
                error: total_err,
                evaluations,
                converged: true,
            };
        }
        if pieces.len() >= tol.max_intervals {
            break;
        }
        let worst = match pieces.pop() {
            Some(p) => p,
            None => break,
        };
        let mid = 0.5 * (worst.a + worst.b);
        if !(mid > worst.a && mid < worst.b) {
            // Interval cannot be split further in floating point.
            pieces.push(worst);
            break;
        }
        total -= worst.value;
        total_err -= worst.error;
        let (v1, e1) = push(worst.map, worst.a, mid, &mut f, &mut pieces);
        let (v2, e2) = push(worst.map, mid, worst.b, &mut f, &mut pieces);
        total += v1 + v2;
        total_err += e1 + e2;
        evaluations += 42;
    }
    // Re-sum to shed accumulated cancellation in the running totals.
    let value = pieces.iter().map(|p| p.value).sum::<Complex64>();
    let error = pieces.iter().map(|p| p.error).sum::<f64>();
    let target = tol.abs.max(tol.rel * value.norm());
    Quad {
        value,
        error,
        evaluations,
        converged: error <= target,
    }
}

/// Real-valued convenience wrapper around [`integrate`].
pub fn integrate_real<F: FnMut(f64) -> f64>(mut f: F, points: &[f64], tol: Tolerance) -> Quad {
    integrate(|t| Complex64::new(f(t), 0.0), points, tol)
}

/// Gauss-Legendre nodes and weights on [-1, 1].
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=n {
                    let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = p2;
                }
                let pn = if n == 0 { 1.0 } else { p1 };
                let pnm1 = p0;
                dp = n as f64 * (x * pn - pnm1) / (x * x - 1.0);
                let dx = pn / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        GaussLegendre { nodes, weights }
    }

    /// Shared 16-point rule.
    pub fn g16() -> &'static GaussLegendre {
        static RULE: OnceLock<GaussLegendre> = OnceLock::new();
        RULE.get_or_init(|| GaussLegendre::new(16))
    }

    /// Shared 24-point rule.
    pub fn g24() -> &'static GaussLegendre {
        static RULE: OnceLock<GaussLegendre> = OnceLock::new();
        RULE.get_or_init(|| GaussLegendre::new(24))
    }

    /// Applies the rule to `f` on `[a, b]`.
    pub fn apply<F: FnMut(f64) -> Complex64>(&self, mut f: F, a: f64, b: f64) -> Complex64 {
        let c = 0.5 * (a + b);
        let h = 0.5 * (b - a);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| f(c + h * x) * w)
            .sum::<Complex64>()
            * h
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        let rule = GaussLegendre::new(16);
        let total: f64 = rule.weights.iter().sum();
        assert!((total - 2.0).abs() < 1e-14);
        // degree 30 monomial
        let v = rule.apply(|x| Complex64::new(x.powi(30), 0.0), -1.0, 1.0);
        assert!((v.re - 2.0 / 31.0).abs() < 1e-14);
    }

    #[test]
    fn semi_infinite_and_full_line() {
        let q = integrate_real(|t| 1.0 / (1.0 + t * t), &[f64::NEG_INFINITY, f64::INFINITY], Tolerance::default());
        assert!(q.converged);
        assert!((q.value.re - PI).abs() < 1e-10);
        let q = integrate_real(|t| (-t).exp(), &[0.0, f64::INFINITY], Tolerance::default());
        assert!((q.value.re - 1.0).abs() < 1e-10);
    }

    #[test]
    fn log_endpoint_singularity() {
        let q = integrate_real(|t| t.ln(), &[0.0, 1.0], Tolerance::default());
        assert!(q.converged);
        assert!((q.value.re + 1.0).abs() < 1e-9);
    }

    #[test]
    fn near_pole_lorentzian() {
        let eps = 1e-6;
        let q = integrate_real(
            |t| eps / (t * t + eps * eps),
            &[-1.0, 0.0, 1.0],
            Tolerance::default(),
        );
        assert!(q.converged);
        let exact = 2.0 * (1.0 / eps).atan();
        assert!((q.value.re - exact).abs() < 1e-9);
    }
}
