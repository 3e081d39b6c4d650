//! Boundary-value tools for the upper half-plane: the regularized conjugate function,
//! outer functions rebuilt from boundary log-modulus, Herglotz bumps, `C¹` extensions
//! and `Lᵖ` norms along horizontal lines.
//!
//! Everything uses the kernel `K(λ, t) = 1/(λ − t) + t/(1 + t²)`. An outer function is
//! `exp{ic + (i/π)∫ K(λ, t) f(t) dt}`; its boundary phase is `c + H f` with
//! `H f(x) = (1/π) PV∫ K(x, t) f(t) dt`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::quad::{self, GaussLegendre, Tolerance};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Phase normalization point: outer functions are made positive at `i·10³`.
pub const NORMALIZATION_HEIGHT: f64 = 1e3;

/// Real function on the line, zero outside `[lo, hi]` (either end may be infinite).
#[derive(Clone)]
pub struct BoundaryFn {
    f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    pub lo: f64,
    pub hi: f64,
    /// Interior points where `f` or its derivative may be discontinuous.
    pub breaks: Vec<f64>,
}

impl fmt::Debug for BoundaryFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BoundaryFn")
            .field("lo", &self.lo)
            .field("hi", &self.hi)
            .field("breaks", &self.breaks)
            .finish_non_exhaustive()
    }
}

impl BoundaryFn {
    pub fn new(f: impl Fn(f64) -> f64 + Send + Sync + 'static, lo: f64, hi: f64) -> Self {
        BoundaryFn {
            f: Arc::new(f),
            lo,
            hi,
            breaks: Vec::new(),
        }
    }

    pub fn zero() -> Self {
        Self::new(|_| 0.0, 0.0, 0.0)
    }

    pub fn indicator(a: f64, b: f64) -> Self {
        Self::new(|_| 1.0, a, b)
    }

    pub fn with_breaks(mut self, breaks: Vec<f64>) -> Self {
        self.breaks = breaks;
        self
    }

    pub fn eval(&self, x: f64) -> f64 {
        if self.lo <= x && x <= self.hi {
            (self.f)(x)
        } else {
            0.0
        }
    }

    fn is_empty(&self) -> bool {
        !(self.lo < self.hi)
    }

    /// Support ends and breaks, finite ones only, sorted.
    fn knots(&self) -> Vec<f64> {
        let mut k: Vec<f64> = [self.lo, self.hi]
            .into_iter()
            .chain(self.breaks.iter().copied())
            .filter(|x| x.is_finite())
            .collect();
        k.sort_by(f64::total_cmp);
        k.dedup();
        k
    }

    /// Integration points for the part of the line where `f` lives.
    fn points(&self, extra: &[f64]) -> Vec<f64> {
        let mut p = self.knots();
        p.extend(extra.iter().copied().filter(|&x| self.lo < x && x < self.hi));
        p
    }
}

fn regularizer(t: f64) -> f64 {
    t / (1.0 + t * t)
}

fn tol() -> Tolerance {
    Tolerance::new(1e-13, 1e-11).with_max_intervals(20_000)
}

/// Regularized conjugate `(1/π) PV∫ f(t)(1/(x − t) + t/(1 + t²)) dt`.
pub fn hilbert_transform(f: &BoundaryFn, x: f64) -> Result<f64> {
    if f.is_empty() {
        return Ok(0.0);
    }
    let knots = f.knots();
    let h = 1e-9 * x.abs().max(1.0);
    if knots.contains(&x) {
        let jump = (f.eval(x - h) - f.eval(x + h)).abs();
        if jump > 1e-6 * (1.0 + f.eval(x - h).abs().max(f.eval(x + h).abs())) {
            return Err(Error::arg(format!("conjugate function requested at a jump of f, x = {x}")));
        }
    }
    // Symmetric pairs on [x − r, x + r] where f is smooth; plain quadrature elsewhere.
    let r = knots
        .iter()
        .map(|&p| (p - x).abs())
        .filter(|&d| d > 0.0)
        .fold(1.0f64, f64::min);
    let inner = if f.lo < x + r && x - r < f.hi {
        let pair = quad::integrate_real(|s| (f.eval(x - s) - f.eval(x + s)) / s, &[0.0, r], tol())
            .require("symmetric principal-value pairs")?;
        let reg = quad::integrate_real(|t| f.eval(t) * regularizer(t), &[x - r, x + r], tol())
            .require("regularizer near the evaluation point")?;
        pair.re + reg.re
    } else {
        0.0
    };
    let kernel = |t: f64| f.eval(t) * (1.0 / (x - t) + regularizer(t));
    let mut outer = 0.0;
    if f.lo < x - r {
        let mut pts = f.points(&[]);
        pts.retain(|&p| p < x - r);
        pts.push(x - r);
        if f.lo == f64::NEG_INFINITY {
            pts.push(f64::NEG_INFINITY);
        }
        outer += quad::integrate_real(kernel, &pts, tol())
            .require("conjugate function, left part")?
            .re;
    }
    if x + r < f.hi {
        let mut pts = f.points(&[]);
        pts.retain(|&p| p > x + r);
        pts.push(x + r);
        if f.hi == f64::INFINITY {
            pts.push(f64::INFINITY);
        }
        outer += quad::integrate_real(kernel, &pts, tol())
            .require("conjugate function, right part")?
            .re;
    }
    Ok((inner + outer) / PI)
}

/// Outer function in the upper half-plane built from boundary log-modulus.
#[derive(Debug, Clone)]
pub struct OuterFunction {
    logmod: BoundaryFn,
    phase: f64,
}

impl OuterFunction {
    pub fn new(logmod: BoundaryFn, phase: f64) -> Self {
        OuterFunction { logmod, phase }
    }

    /// Phase chosen so the function is positive at `i·10³`.
    pub fn normalized(logmod: BoundaryFn) -> Result<Self> {
        let raw = OuterFunction::new(logmod, 0.0);
        let at = raw.log_eval(Complex64::new(0.0, NORMALIZATION_HEIGHT))?;
        Ok(OuterFunction {
            phase: -at.im,
            ..raw
        })
    }

    pub fn phase(&self) -> f64 {
        self.phase
    }

    pub fn logmod(&self) -> &BoundaryFn {
        &self.logmod
    }

    /// `ic + (i/π)∫ K(λ, t) f(t) dt`.
    pub fn log_eval(&self, lambda: Complex64) -> Result<Complex64> {
        if !(lambda.im > 0.0) {
            return Err(Error::arg("outer functions are evaluated in the open upper half-plane"));
        }
        if self.logmod.is_empty() {
            return Ok(I * self.phase);
        }
        let f = &self.logmod;
        let mut pts = f.points(&[lambda.re]);
        if f.lo == f64::NEG_INFINITY {
            pts.push(f64::NEG_INFINITY);
        }
        if f.hi == f64::INFINITY {
            pts.push(f64::INFINITY);
        }
        let q = quad::integrate(
            |t| f.eval(t) * (1.0 / (lambda - t) + regularizer(t)),
            &pts,
            tol(),
        );
        if !q.converged {
            return Err(Error::Quadrature(
                "log-modulus is not integrable against the outer kernel".into(),
            ));
        }
        Ok(I * self.phase + I / PI * q.value)
    }

    pub fn eval(&self, lambda: Complex64) -> Result<Complex64> {
        Ok(self.log_eval(lambda)?.exp())
    }

    /// `γ_*(λ) = conj γ(λ̄)` for `Im λ < 0`.
    pub fn eval_star(&self, lambda: Complex64) -> Result<Complex64> {
        Ok(self.eval(lambda.conj())?.conj())
    }
}

/// Nonnegative `C¹` bump `b(k) = Σ (4(k − a)(b − k)/(b − a)²)^shape` on disjoint intervals.
#[derive(Debug, Clone, PartialEq)]
pub struct Bump {
    intervals: Vec<(f64, f64)>,
    shape: u32,
    /// Coefficients of `(1 − s²)^shape` in the local variable `s`.
    poly: Vec<f64>,
}

impl Bump {
    pub fn new(intervals: Vec<(f64, f64)>, shape: u32) -> Result<Self> {
        if intervals.is_empty() {
            return Err(Error::arg("bump needs at least one interval"));
        }
        if shape < 2 {
            return Err(Error::arg("bump shape must be at least 2 to be C¹"));
        }
        let mut iv = intervals;
        iv.sort_by(|a, b| a.0.total_cmp(&b.0));
        for (j, &(a, b)) in iv.iter().enumerate() {
            if !(a < b) || !a.is_finite() || !b.is_finite() {
                return Err(Error::arg(format!("bump interval [{a}, {b}] is not a bounded interval")));
            }
            if j > 0 && iv[j - 1].1 > a {
                return Err(Error::arg("bump intervals overlap"));
            }
        }
        // (1 − s²)^n by repeated multiplication
        let mut poly = vec![1.0];
        for _ in 0..shape {
            let mut next = vec![0.0; poly.len() + 2];
            for (i, &c) in poly.iter().enumerate() {
                next[i] += c;
                next[i + 2] -= c;
            }
            poly = next;
        }
        Ok(Bump {
            intervals: iv,
            shape,
            poly,
        })
    }

    pub fn intervals(&self) -> &[(f64, f64)] {
        &self.intervals
    }

    pub fn shape(&self) -> u32 {
        self.shape
    }

    pub fn eval(&self, k: f64) -> f64 {
        self.intervals
            .iter()
            .find(|&&(a, b)| a <= k && k <= b)
            .map_or(0.0, |&(a, b)| {
                let s = (k - a) * (b - k) * 4.0 / ((b - a) * (b - a));
                s.powi(self.shape as i32)
            })
    }

    pub fn max(&self) -> f64 {
        1.0
    }

    /// `β(λ) = ∫ b(k)/(k − λ) dk`, off the real support.
    pub fn beta(&self, lambda: Complex64) -> Result<Complex64> {
        if lambda.im == 0.0 && self.intervals.iter().any(|&(a, b)| a <= lambda.re && lambda.re <= b) {
            return Err(Error::Boundary(lambda.re));
        }
        Ok(self
            .intervals
            .iter()
            .map(|&(a, b)| self.piece(a, b, lambda))
            .sum())
    }

    /// `β_*(λ) = conj β(λ̄)`.
    pub fn beta_star(&self, lambda: Complex64) -> Result<Complex64> {
        Ok(self.beta(lambda.conj())?.conj())
    }

    fn piece(&self, a: f64, b: f64, lambda: Complex64) -> Complex64 {
        let m = 0.5 * (a + b);
        let h = 0.5 * (b - a);
        // ∫_{−1}^{1} P(s)/(s − z) ds with z the local image of λ.
        let z = (lambda - m) / h;
        let p = &self.poly;
        if z.norm() > 3.0 {
            return GaussLegendre::g24().apply(|s| horner_real(p, s) / (s - z), -1.0, 1.0);
        }
        // P(s) = P(z) + (s − z)Q(s): synthetic division, then exact moments of Q.
        let n = p.len() - 1;
        let mut q = vec![Complex64::new(0.0, 0.0); n];
        let mut acc = Complex64::new(p[n], 0.0);
        for j in (0..n).rev() {
            q[j] = acc;
            acc = acc * z + p[j];
        }
        let pz = acc;
        let moments: Complex64 = q
            .iter()
            .enumerate()
            .filter(|(j, _)| j % 2 == 0)
            .map(|(j, &c)| c * (2.0 / (j + 1) as f64))
            .sum();
        let one = Complex64::new(1.0, 0.0);
        pz * ((one - z).ln() - (-one - z).ln()) + moments
    }
}

fn horner_real(p: &[f64], s: f64) -> f64 {
    p.iter().rev().fold(0.0, |acc, &c| acc * s + c)
}

/// `C¹` extension of a function known on `[x₀, ∞)`: the constant `φ(x₀)` left of
/// `x₀ − m`, a cubic Hermite blend on `[x₀ − m, x₀]`, and `φ` itself from `x₀` on.
#[derive(Clone)]
pub struct C1Extension {
    phi: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    x0: f64,
    margin: f64,
    value: f64,
    slope: f64,
}

impl fmt::Debug for C1Extension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("C1Extension")
            .field("x0", &self.x0)
            .field("margin", &self.margin)
            .field("value", &self.value)
            .field("slope", &self.slope)
            .finish_non_exhaustive()
    }
}

impl C1Extension {
    /// `slope` is `φ′(x₀)`.
    pub fn new(
        phi: impl Fn(f64) -> f64 + Send + Sync + 'static,
        slope: f64,
        x0: f64,
        margin: f64,
    ) -> Result<Self> {
        if !(margin > 0.0) {
            return Err(Error::arg("extension margin must be positive"));
        }
        let value = phi(x0);
        Ok(C1Extension {
            phi: Arc::new(phi),
            x0,
            margin,
            value,
            slope,
        })
    }

    pub fn eval(&self, x: f64) -> f64 {
        if x >= self.x0 {
            (self.phi)(x)
        } else if x <= self.x0 - self.margin {
            self.value
        } else {
            let (v, _) = hermite(
                x,
                self.x0 - self.margin,
                self.x0,
                (self.value, 0.0),
                (self.value, self.slope),
            );
            v
        }
    }
}

/// Cubic Hermite interpolant on `[a, b]` with end data `(value, derivative)`;
/// returns the value and the derivative at `x`.
pub fn hermite(x: f64, a: f64, b: f64, left: (f64, f64), right: (f64, f64)) -> (f64, f64) {
    let h = b - a;
    let s = (x - a) / h;
    let (s2, s3) = (s * s, s * s * s);
    let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
    let h10 = s3 - 2.0 * s2 + s;
    let h01 = -2.0 * s3 + 3.0 * s2;
    let h11 = s3 - s2;
    let v = h00 * left.0 + h10 * h * left.1 + h01 * right.0 + h11 * h * right.1;
    let d00 = (6.0 * s2 - 6.0 * s) / h;
    let d10 = 3.0 * s2 - 4.0 * s + 1.0;
    let d01 = (-6.0 * s2 + 6.0 * s) / h;
    let d11 = 3.0 * s2 - 2.0 * s;
    let d = d00 * left.0 + d10 * left.1 + d01 * right.0 + d11 * right.1;
    (v, d)
}

/// Samples of a function on the line `Im λ = eps` over a uniform grid, with the decay
/// exponent `q` of `|f(t)| ~ C|t|^{−q}` assumed beyond the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct LineTrace {
    pub eps: f64,
    pub t_lo: f64,
    pub t_hi: f64,
    pub values: Vec<Complex64>,
    pub tail_exponent: f64,
}

impl LineTrace {
    pub fn sample(
        f: impl Fn(Complex64) -> Complex64,
        eps: f64,
        t_lo: f64,
        t_hi: f64,
        n: usize,
        tail_exponent: f64,
    ) -> Result<Self> {
        if n < 2 || !(t_lo < t_hi) {
            return Err(Error::arg("line trace needs at least two points on an increasing grid"));
        }
        let h = (t_hi - t_lo) / (n - 1) as f64;
        let values = (0..n)
            .map(|j| f(Complex64::new(t_lo + h * j as f64, eps)))
            .collect();
        Ok(LineTrace {
            eps,
            t_lo,
            t_hi,
            values,
            tail_exponent,
        })
    }

    pub fn grid(&self) -> impl Iterator<Item = f64> + '_ {
        let h = self.spacing();
        (0..self.values.len()).map(move |j| self.t_lo + h * j as f64)
    }

    pub fn spacing(&self) -> f64 {
        (self.t_hi - self.t_lo) / (self.values.len() - 1) as f64
    }
}

/// `(∫|f|ᵖ)^{1/p}` over the line: composite Simpson (trapezoid for an even count) on the
/// grid plus `|f(T)|ᵖ·|T|/(pq − 1)` for each tail.
pub fn line_norm(trace: &LineTrace, p: u32) -> Result<f64> {
    if p != 1 && p != 2 {
        return Err(Error::arg("line norms are available for p = 1 and p = 2"));
    }
    let n = trace.values.len();
    if n < 2 {
        return Err(Error::arg("line trace has fewer than two samples"));
    }
    let pf = p as f64;
    let excess = pf * trace.tail_exponent - 1.0;
    if !(excess > 0.0) {
        return Err(Error::Tail(format!(
            "decay exponent {} gives a divergent L^{p} tail",
            trace.tail_exponent
        )));
    }
    let h = trace.spacing();
    let w: Vec<f64> = trace.values.iter().map(|v| v.norm().powi(p as i32)).collect();
    let body = if n % 2 == 1 && n >= 3 {
        let mut s = w[0] + w[n - 1];
        for (j, &x) in w.iter().enumerate().take(n - 1).skip(1) {
            s += if j % 2 == 1 { 4.0 * x } else { 2.0 * x };
        }
        s * h / 3.0
    } else {
        (w.iter().sum::<f64>() - 0.5 * (w[0] + w[n - 1])) * h
    };
    let tail = (w[0] * trace.t_lo.abs() + w[n - 1] * trace.t_hi.abs()) / excess;
    Ok((body + tail).powf(1.0 / pf))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conjugate_of_indicator() {
        let f = BoundaryFn::indicator(-1.0, 1.0);
        let v = hilbert_transform(&f, 2.0).unwrap();
        assert!((v - 3f64.ln() / PI).abs() < 1e-10, "{v}");
        let inside = hilbert_transform(&f, 0.5).unwrap();
        // (1/π) ln|(x + 1)/(x − 1)| inside the interval
        assert!((inside - (1.5f64 / 0.5).ln() / PI).abs() < 1e-10);
        assert!(hilbert_transform(&f, 1.0).is_err());
        assert_eq!(hilbert_transform(&BoundaryFn::zero(), 0.3).unwrap(), 0.0);
    }

    #[test]
    fn outer_from_rational_modulus() {
        let f = BoundaryFn::new(
            |t| 0.5 * ((t * t + 1.0) / (t * t + 4.0)).ln(),
            f64::NEG_INFINITY,
            f64::INFINITY,
        );
        let g = OuterFunction::normalized(f).unwrap();
        let lam = Complex64::new(0.0, 1.0);
        let m = g.eval(lam).unwrap().norm(); assert!((m - 2.0 / 3.0).abs() < 1e-9, "{m}");
        let exact = |z: Complex64| (z + I) / (z + 2.0 * I);
        // exact is positive on the imaginary axis, so the normalized phase matches it
        for z in [Complex64::new(0.3, 0.2), Complex64::new(-4.0, 1.0), Complex64::new(10.0, 1e-3)] {
            let v = g.eval(z).unwrap();
            assert!((v - exact(z)).norm() < 1e-8 * exact(z).norm(), "{z}");
        }
    }

    #[test]
    fn empty_logmod_is_constant() {
        let g = OuterFunction::normalized(BoundaryFn::zero()).unwrap();
        assert_eq!(g.eval(Complex64::new(0.3, 0.1)).unwrap(), Complex64::new(1.0, 0.0));
    }

    #[test]
    fn bump_transform_matches_quadrature() {
        let b = Bump::new(vec![(-1.0, 1.0)], 2).unwrap();
        assert_eq!(b.eval(1.0), 0.0);
        assert!((b.eval(0.5) - 0.5625).abs() < 1e-15);
        for lam in [
            Complex64::new(0.0, 1e-4),
            Complex64::new(0.7, 0.3),
            Complex64::new(3.5, 2.0),
            Complex64::new(-1.2, 1e-2),
        ] {
            let direct = quad::integrate(|k| b.eval(k) / (k - lam), &[-1.0, lam.re.clamp(-1.0, 1.0), 1.0], Tolerance::new(1e-14, 1e-12))
                .value;
            let v = b.beta(lam).unwrap();
            assert!((v - direct).norm() < 1e-9 * direct.norm().max(1.0), "{lam}: {v} {direct}");
        }
        let v = b.beta(Complex64::new(0.0, 1e-4)).unwrap();
        assert!((v.im - PI).abs() < 1e-3);
    }

    #[test]
    fn hermite_endpoints() {
        let (v, d) = hermite(1.0, 1.0, 2.0, (3.0, -1.0), (5.0, 2.0));
        assert!((v - 3.0).abs() < 1e-15 && (d + 1.0).abs() < 1e-14);
        let (v, d) = hermite(2.0, 1.0, 2.0, (3.0, -1.0), (5.0, 2.0));
        assert!((v - 5.0).abs() < 1e-14 && (d - 2.0).abs() < 1e-13);
    }

    #[test]
    fn extension_of_identity() {
        let e = C1Extension::new(|t| t, 1.0, 0.0, 1.0).unwrap();
        assert_eq!(e.eval(-1.0), 0.0);
        assert_eq!(e.eval(-3.0), 0.0);
        assert_eq!(e.eval(2.0), 2.0);
        let h = 1e-6;
        for knot in [-1.0, 0.0] {
            let left = (e.eval(knot) - e.eval(knot - h)) / h;
            let right = (e.eval(knot + h) - e.eval(knot)) / h;
            assert!((left - right).abs() < 1e-5, "derivative jump at {knot}");
        }
        assert!(C1Extension::new(|t| t, 1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn lorentzian_line_norm() {
        let (eps, sigma) = (0.01, 1.0);
        let tr = LineTrace::sample(|z| 1.0 / (z - Complex64::new(0.0, -sigma)), eps, -50.0, 50.0, 1 << 14 | 1, 1.0).unwrap();
        let n = line_norm(&tr, 2).unwrap();
        assert!((n - (PI / (eps + sigma)).sqrt()).abs() < 1e-2 * n);
        assert!(matches!(line_norm(&tr, 1), Err(Error::Tail(_))));
    }
}
