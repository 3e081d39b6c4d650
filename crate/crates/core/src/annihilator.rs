//! Weak annihilators of the model operator.
//!
//! Gap mode builds a bounded outer `γ = γ₁γ₂` whose boundary values vanish wherever
//! `γ_A` does to the left of a spectral gap around 0 and are real to the right of it.
//! Target mode pairs `γ_A` with the Herglotz bump transform `β` of a target set `Δ`.
//! Traces `⟨(γ(A + iε) − γ_*(A − iε))u, v⟩` are evaluated by spectral calculus.
//!
//! `γ₁` is the outer function with log-modulus `log|γ_A|` on `(−∞, −δ₀)`. Writing that
//! boundary datum as `(H + H_*)/2` with `H = log γ_A`, the real-line integral is moved
//! onto horizontal lines `Im t = ±h` plus a vertical drop at `−δ₀`, where `H` is smooth,
//! picking up `H(λ)` itself when `λ` sits inside the upper strip. The singular boundary
//! behavior of `γ_A` at atoms and self-similar pieces therefore enters exactly.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hardy::Bump;
use crate::measure::{Pairing, SymbolVector};
use crate::operator::OperatorModel;
use crate::quad::GaussLegendre;

const I: Complex64 = Complex64::new(0.0, 1.0);
const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Height of the deformed contour used for points close to the real axis.
const PATH_HEIGHT: f64 = 0.5;
/// Width beyond the support hull over which the conjugate phase is tabulated.
const TABLE_REACH: f64 = 50.0;
/// Relative node spacing of the phase table, `Δx ≤ STEP·(x + δ₀)`.
const TABLE_STEP: f64 = 0.03;
const TABLE_MAX_STEP: f64 = 0.5;
/// Height of the derealizing bump `g`.
const DEREALIZE_HEIGHT: f64 = 0.5;

fn gl() -> &'static GaussLegendre {
    GaussLegendre::g16()
}

/// Straight piece of the upper contour with cached `H` at its Gauss nodes.
#[derive(Debug, Clone)]
struct Segment {
    a: Complex64,
    b: Complex64,
    nodes: Vec<Complex64>,
    weights: Vec<Complex64>,
    h: Vec<Complex64>,
}

/// Semi-infinite piece `t = x₀ − (1 − s)/s + ih`.
#[derive(Debug, Clone)]
struct TailPiece {
    nodes: Vec<Complex64>,
    weights: Vec<Complex64>,
    h: Vec<Complex64>,
}

#[derive(Debug, Clone)]
struct Path {
    segments: Vec<Segment>,
    tail: Vec<TailPiece>,
}

fn segment_nodes(a: Complex64, b: Complex64) -> (Vec<Complex64>, Vec<Complex64>) {
    let g = gl();
    let d = b - a;
    let nodes = g.nodes.iter().map(|&x| a + d * (0.5 * (x + 1.0))).collect();
    let weights = g.weights.iter().map(|&w| d * (0.5 * w)).collect();
    (nodes, weights)
}

fn log_gamma_many(model: &OperatorModel, pts: &[Complex64]) -> Result<Vec<Complex64>> {
    pts.iter().map(|&t| model.log_gamma_a(t)).collect()
}

fn dist_to_segment(z: Complex64, a: Complex64, b: Complex64) -> f64 {
    let d = b - a;
    let s = ((z - a) * d.conj()).re / d.norm_sqr();
    let p = a + d * s.clamp(0.0, 1.0);
    (z - p).norm()
}

/// True when `z` or `z̄` (the mirror contour) is within one segment length of `[a, b]`.
fn near_segment(z: Complex64, a: Complex64, b: Complex64) -> bool {
    let len = (b - a).norm();
    dist_to_segment(z, a, b).min(dist_to_segment(z.conj(), a, b)) < len
}

impl Path {
    fn build(model: &OperatorModel, delta0: f64, height: f64, margin: f64) -> Result<Path> {
        let (lo, hi) = model.measure().hull();
        let dist = |x: f64| {
            if x < lo {
                lo - x
            } else if x > hi {
                x - hi
            } else {
                0.0
            }
        };
        let left_end = lo.min(-delta0) - 10.0;
        let mut knots = vec![left_end];
        let mut x = left_end;
        while x < -delta0 {
            let step = (0.5 * height.max(dist(x))).min(1.0);
            x = (x + step).min(-delta0);
            knots.push(x);
        }
        let mut ends: Vec<(Complex64, Complex64)> = knots
            .windows(2)
            .map(|w| (Complex64::new(w[0], height), Complex64::new(w[1], height)))
            .collect();
        let vstep = 0.5 * height.min(margin);
        let nv = (height / vstep).ceil().max(1.0) as usize;
        for j in 0..nv {
            let y0 = height * (1.0 - j as f64 / nv as f64);
            let y1 = height * (1.0 - (j + 1) as f64 / nv as f64);
            ends.push((Complex64::new(-delta0, y0), Complex64::new(-delta0, y1)));
        }
        let segments = ends
            .into_par_iter()
            .map(|(a, b)| {
                let (nodes, weights) = segment_nodes(a, b);
                let h = log_gamma_many(model, &nodes)?;
                Ok(Segment {
                    a,
                    b,
                    nodes,
                    weights,
                    h,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let g = gl();
        let tail = (0..4)
            .map(|j| {
                let (s0, s1) = (j as f64 / 4.0, (j + 1) as f64 / 4.0);
                let mut nodes = Vec::with_capacity(16);
                let mut weights = Vec::with_capacity(16);
                for (&x, &w) in g.nodes.iter().zip(&g.weights) {
                    let s = s0 + (s1 - s0) * 0.5 * (x + 1.0);
                    nodes.push(Complex64::new(left_end - (1.0 - s) / s, height));
                    weights.push(Complex64::new(0.5 * (s1 - s0) * w / (s * s), 0.0));
                }
                let h = log_gamma_many(model, &nodes)?;
                Ok(TailPiece { nodes, weights, h })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Path {
            segments,
            tail,
        })
    }

    /// `∫ k(t)H(t)dt` over the upper contour plus `∫ k(t)H_*(t)dt` over its mirror image,
    /// where `H_*(t) = conj H(t̄)`. Segments closer to `near` than their length are split.
    fn integrate<K>(&self, model: &OperatorModel, kernel: K, near: Option<Complex64>) -> Result<Complex64>
    where
        K: Fn(Complex64) -> Complex64 + Copy,
    {
        let pair = |t: Complex64, w: Complex64, h: Complex64| kernel(t) * w * h + kernel(t.conj()) * w.conj() * h.conj();
        let mut acc = ZERO;
        for p in &self.tail {
            for j in 0..p.nodes.len() {
                acc += pair(p.nodes[j], p.weights[j], p.h[j]);
            }
        }
        for s in &self.segments {
            let close = near.is_some_and(|z| near_segment(z, s.a, s.b));
            if close {
                acc += split_segment(model, s.a, s.b, near.unwrap(), &pair, 0)?;
            } else {
                for j in 0..s.nodes.len() {
                    acc += pair(s.nodes[j], s.weights[j], s.h[j]);
                }
            }
        }
        Ok(acc)
    }
}

fn split_segment<P>(model: &OperatorModel, a: Complex64, b: Complex64, z: Complex64, pair: &P, depth: u32) -> Result<Complex64>
where
    P: Fn(Complex64, Complex64, Complex64) -> Complex64,
{
    let len = (b - a).norm();
    if near_segment(z, a, b) && depth < 48 && len > 1e-13 {
        let m = (a + b) * 0.5;
        return Ok(split_segment(model, a, m, z, pair, depth + 1)? + split_segment(model, m, b, z, pair, depth + 1)?);
    }
    let (nodes, weights) = segment_nodes(a, b);
    let h = log_gamma_many(model, &nodes)?;
    Ok((0..nodes.len()).map(|j| pair(nodes[j], weights[j], h[j])).sum())
}

/// One cubic Hermite cell of `φ₁`, stored as `Σ aⱼ sʲ` with `s = (t − t0)/(t1 − t0)`.
#[derive(Debug, Clone)]
struct Cell {
    t0: f64,
    t1: f64,
    a: [f64; 4],
    /// `∫ p(t)·t/(1 + t²) dt` over the cell.
    reg: f64,
}

impl Cell {
    fn new(t0: f64, t1: f64, left: (f64, f64), right: (f64, f64)) -> Cell {
        let h = t1 - t0;
        let (y0, d0, y1, d1) = (left.0, left.1 * h, right.0, right.1 * h);
        let a = [y0, d0, -3.0 * y0 - 2.0 * d0 + 3.0 * y1 - d1, 2.0 * y0 + d0 - 2.0 * y1 + d1];
        let mut cell = Cell { t0, t1, a, reg: 0.0 };
        let g = gl();
        cell.reg = g
            .nodes
            .iter()
            .zip(&g.weights)
            .map(|(&x, &w)| {
                let t = t0 + h * 0.5 * (x + 1.0);
                0.5 * h * w * cell.eval(t) * t / (1.0 + t * t)
            })
            .sum();
        cell
    }

    fn eval(&self, t: f64) -> f64 {
        let s = (t - self.t0) / (self.t1 - self.t0);
        ((self.a[3] * s + self.a[2]) * s + self.a[1]) * s + self.a[0]
    }

    /// `∫ p(t)/(λ − t) dt` over the cell.
    fn cauchy(&self, lambda: Complex64) -> Complex64 {
        let h = self.t1 - self.t0;
        let far = dist_to_segment(lambda, self.t0.into(), self.t1.into()) > 2.0 * h;
        if far {
            let g = gl();
            return g
                .nodes
                .iter()
                .zip(&g.weights)
                .map(|(&x, &w)| {
                    let t = self.t0 + h * 0.5 * (x + 1.0);
                    0.5 * h * w * self.eval(t) / (lambda - t)
                })
                .sum();
        }
        // Expand p around λ: p(t) = Σ dⱼ (t − λ)ʲ.
        let s = (lambda - self.t0) / h;
        let a = &self.a;
        let d0 = ((s * a[3] + a[2]) * s + a[1]) * s + a[0];
        let d1 = ((s * (3.0 * a[3]) + 2.0 * a[2]) * s + a[1]) / h;
        let d2 = (s * (3.0 * a[3]) + a[2]) / (h * h);
        let d3 = Complex64::new(a[3] / (h * h * h), 0.0);
        let (z0, z1) = (self.t0 - lambda, self.t1 - lambda);
        let int = d0 * (log_lower(z1) - log_lower(z0))
            + d1 * (z1 - z0)
            + d2 * (z1 * z1 - z0 * z0) * 0.5
            + d3 * (z1 * z1 * z1 - z0 * z0 * z0) / 3.0;
        -int
    }
}

/// Logarithm continuous on the closed lower half-plane (negative reals get `arg = −π`).
fn log_lower(z: Complex64) -> Complex64 {
    if z.im == 0.0 && z.re < 0.0 {
        Complex64::new((-z.re).ln(), -PI)
    } else {
        z.ln()
    }
}

/// `φ₁`: the conjugate phase of `γ₁` on `[0, ∞)`, extended `C¹` to the whole line.
#[derive(Debug, Clone)]
struct PhaseTable {
    /// Constant value left of the blend.
    left: f64,
    margin: f64,
    cells: Vec<Cell>,
    /// Right tail `right + a/t + b/t²` beyond the last node.
    right: f64,
    tail_a: f64,
    tail_b: f64,
    end: f64,
}

impl PhaseTable {
    fn eval(&self, x: f64) -> f64 {
        if x <= -self.margin {
            return self.left;
        }
        if x >= self.end {
            return self.right + self.tail_a / x + self.tail_b / (x * x);
        }
        let j = self.cells.partition_point(|c| c.t1 < x);
        self.cells[j.min(self.cells.len() - 1)].eval(x)
    }

    /// `J(λ) = ∫ K(λ, t) φ₁(t) dt`.
    fn conjugate_integral(&self, lambda: Complex64) -> Complex64 {
        let one = Complex64::new(1.0, 0.0);
        let l = -self.margin;
        let mut j = self.left * (-(lambda - l).ln() + 0.5 * (1.0 + l * l).ln());
        for c in &self.cells {
            j += c.cauchy(lambda) + c.reg;
        }
        let t = self.end;
        let r = lambda / t;
        let (ell, i1, i2);
        if r.norm() < 0.1 {
            // ℓ/λ and ℓ/λ² + 1/(λT) by their series in λ/T
            let mut s1 = ZERO;
            let mut s2 = ZERO;
            let mut pow = one;
            for n in 0..24 {
                s1 += pow / (n + 1) as f64;
                s2 += pow / (n + 2) as f64;
                pow *= r;
            }
            let ell_over = -s1 / t;
            ell = ell_over * lambda;
            i1 = ell_over + (PI / 2.0 - t.atan());
            i2 = -s2 / (t * t) + 0.5 * (1.0 + 1.0 / (t * t)).ln();
        } else {
            ell = (one - r).ln();
            i1 = ell / lambda + (PI / 2.0 - t.atan());
            i2 = one / (lambda * t) + ell / (lambda * lambda) + 0.5 * (1.0 + 1.0 / (t * t)).ln();
        }
        let i0 = ell + t.ln() - 0.5 * (1.0 + t * t).ln();
        j + self.right * i0 + self.tail_a * i1 + self.tail_b * i2
    }
}

/// The gap-mode annihilator `γ = γ₁γ₂`.
#[derive(Debug, Clone)]
pub struct GapGamma {
    model: OperatorModel,
    delta0: f64,
    low: Path,
    high: Path,
    table: PhaseTable,
}

impl GapGamma {
    fn build(model: &OperatorModel, delta0: f64, gap_left: f64) -> Result<GapGamma> {
        let margin = gap_left - delta0;
        let high = Path::build(model, delta0, PATH_HEIGHT, margin)?;
        let low = Path::build(model, delta0, PATH_HEIGHT / 4.0, margin)?;
        let mut g = GapGamma {
            model: model.clone(),
            delta0,
            low,
            high,
            table: PhaseTable {
                left: 0.0,
                margin: delta0,
                cells: Vec::new(),
                right: 0.0,
                tail_a: 0.0,
                tail_b: 0.0,
                end: 1.0,
            },
        };
        let (_, hull_hi) = model.measure().hull();
        let end = hull_hi.max(0.0) + TABLE_REACH;
        let mut xs = vec![0.0];
        while *xs.last().unwrap() < end {
            let x = *xs.last().unwrap();
            xs.push((x + TABLE_MAX_STEP.min(TABLE_STEP * (x + delta0))).min(end));
        }
        let data = xs
            .par_iter()
            .map(|&x| Ok((g.phase(x)?, g.phase_slope(x)?)))
            .collect::<Result<Vec<(f64, f64)>>>()?;
        let right = g.phase_limit()?;
        let (y, s) = *data.last().unwrap();
        let d = y - right;
        let tail_b = -end * end * (d + s * end);
        let tail_a = 2.0 * end * d + s * end * end;
        let left = data[0].0;
        let mut cells = vec![Cell::new(-delta0, 0.0, (left, 0.0), data[0])];
        for k in 0..xs.len() - 1 {
            cells.push(Cell::new(xs[k], xs[k + 1], data[k], data[k + 1]));
        }
        g.table = PhaseTable {
            left,
            margin: delta0,
            cells,
            right,
            tail_a,
            tail_b,
            end,
        };
        Ok(g)
    }

    pub fn delta0(&self) -> f64 {
        self.delta0
    }

    /// `log γ₁(λ)` for `Im λ > 0`, or on the real axis right of `−δ₀`.
    pub fn log_gamma1(&self, lambda: Complex64) -> Result<Complex64> {
        if lambda.im < 0.0 || (lambda.im == 0.0 && lambda.re <= -self.delta0) {
            return Err(Error::arg("γ₁ is evaluated in the upper half-plane or right of −δ₀"));
        }
        let on_wall = (lambda.re + self.delta0).abs() < 1e-10 && lambda.im < PATH_HEIGHT / 2.0;
        if on_wall {
            // the vertical part of the contour passes through λ; average two neighbors
            let d = Complex64::new(2e-10, 0.0);
            return Ok((self.log_gamma1(lambda - d)? + self.log_gamma1(lambda + d)?) * 0.5);
        }
        let (path, inside) = if lambda.im < PATH_HEIGHT / 2.0 {
            (&self.high, lambda.re < -self.delta0)
        } else {
            (&self.low, false)
        };
        let sum = path.integrate(&self.model, move |t| 1.0 / (lambda - t) + t / (1.0 + t * t), Some(lambda))?;
        let mut v = I / (2.0 * PI) * sum;
        if inside {
            v += self.model.log_gamma_a(lambda)?;
        }
        Ok(v)
    }

    /// `φ(x) = Im log γ₁(x)` for real `x > −δ₀`, where `log γ₁` is purely imaginary.
    pub fn phase(&self, x: f64) -> Result<f64> {
        Ok(self.log_gamma1(Complex64::new(x, 0.0))?.im)
    }

    fn phase_slope(&self, x: f64) -> Result<f64> {
        let lambda = Complex64::new(x, 0.0);
        let sum = self
            .high
            .integrate(&self.model, move |t| -1.0 / ((lambda - t) * (lambda - t)), Some(lambda))?;
        Ok((I / (2.0 * PI) * sum).im)
    }

    fn phase_limit(&self) -> Result<f64> {
        let sum = self.high.integrate(&self.model, |t| t / (1.0 + t * t), None)?;
        Ok((I / (2.0 * PI) * sum).im)
    }

    /// The `C¹` extension `φ₁` of the conjugate phase.
    pub fn phi1(&self, x: f64) -> f64 {
        self.table.eval(x)
    }

    /// `log γ₂(λ) = (1/π)∫ K(λ, t) φ₁(t) dt`.
    pub fn log_gamma2(&self, lambda: Complex64) -> Complex64 {
        self.table.conjugate_integral(lambda) / PI
    }

    pub fn log_gamma(&self, lambda: Complex64) -> Result<Complex64> {
        Ok(self.log_gamma1(lambda)? + self.log_gamma2(lambda))
    }

    /// `(inf, sup)` of the tabulated phase, a diagnostic for the conjugate's growth.
    pub fn phase_range(&self) -> (f64, f64) {
        self.table
            .cells
            .iter()
            .flat_map(|c| [c.a[0], c.eval(c.t1)])
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
    }

    /// Limits of `φ₁` at `−∞` and `+∞`.
    pub fn phase_ends(&self) -> (f64, f64) {
        (self.table.left, self.table.right)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Construction {
    /// Annihilate everything left of `−δ₀`, given a spectral gap around 0.
    Gap { delta0: f64 },
    /// Annihilate inside the target set `Δ`.
    Target { delta: Vec<(f64, f64)> },
}

#[derive(Debug, Clone)]
pub struct AnnihilatorBundle {
    construction: Construction,
    gamma: Option<Arc<GapGamma>>,
    /// `g` with `ĝ(λ) = ∫ g(k)/(k − λ) dk`, stored as an unscaled bump.
    derealization: Option<Bump>,
    beta: Option<Bump>,
}

/// Half-widths `(left, right)` of the support-free interval around 0.
pub fn gap_around_zero(model: &OperatorModel) -> (f64, f64) {
    let mu = model.measure();
    let mut left = f64::INFINITY;
    let mut right = f64::INFINITY;
    for i in 0..mu.n_components() {
        let (a, b) = mu.component_hull(i);
        if a <= 0.0 && 0.0 <= b {
            return (0.0, 0.0);
        }
        if b < 0.0 {
            left = left.min(-b);
        } else {
            right = right.min(a);
        }
    }
    (left, right)
}

/// Gap-mode construction. Requires a support-free interval around 0 of half-width
/// greater than `δ₀` on both sides.
pub fn build_gamma_thm2(model: &OperatorModel, delta0: f64) -> Result<AnnihilatorBundle> {
    if !(delta0 > 0.0) || !delta0.is_finite() {
        return Err(Error::arg("δ₀ must be positive"));
    }
    let (left, right) = gap_around_zero(model);
    if !(left > delta0 && right > delta0) {
        return Err(Error::Precondition(format!(
            "no spectral gap of half-width > δ₀ = {delta0} around 0 (free interval is (−{left}, {right}))"
        )));
    }
    // γ_A is analytic across the gap; its boundary modulus must stay away from zero there.
    for j in 0..=20 {
        let t = -delta0 + 2.0 * delta0 * j as f64 / 20.0;
        let g = model.gamma_a(Complex64::new(t, 1e-9))?;
        if g.norm() < 1e-8 {
            return Err(Error::Precondition(format!(
                "|γ_A| is not separated from zero on the gap (|γ_A({t})| = {:.3e})",
                g.norm()
            )));
        }
    }
    let gamma = GapGamma::build(model, delta0, left.min(10.0))?;
    Ok(AnnihilatorBundle {
        construction: Construction::Gap { delta0 },
        gamma: Some(Arc::new(gamma)),
        derealization: None,
        beta: None,
    })
}

/// Target-mode construction: `β` is the Borel transform of a `C¹` bump positive exactly
/// on the interior of `Δ`.
pub fn build_beta_thm3(delta: &[(f64, f64)], shape: u32) -> Result<AnnihilatorBundle> {
    if delta.is_empty() {
        return Err(Error::arg("target set Δ is empty"));
    }
    let bump = Bump::new(delta.to_vec(), shape)?;
    Ok(AnnihilatorBundle {
        construction: Construction::Target {
            delta: bump.intervals().to_vec(),
        },
        gamma: None,
        derealization: None,
        beta: Some(bump),
    })
}

/// Multiply `γ` by `exp ĝ` with `g` a bump on `Ω ⊂ (−∞, 0)`, making the boundary values
/// non-real on `Ω` while keeping `γ` outer and bounded.
pub fn derealize(bundle: &AnnihilatorBundle, omega: &[(f64, f64)]) -> Result<AnnihilatorBundle> {
    if bundle.gamma.is_none() {
        return Err(Error::arg("derealization applies to gap-mode bundles"));
    }
    if omega.is_empty() {
        return Ok(bundle.clone());
    }
    if let Some(&(_, b)) = omega.iter().find(|&&(_, b)| b >= 0.0) {
        return Err(Error::arg(format!(
            "Ω must lie left of 0; an interval ends at {b} inside the real-boundary region"
        )));
    }
    let bump = Bump::new(omega.to_vec(), 2)?;
    Ok(AnnihilatorBundle {
        derealization: Some(bump),
        ..bundle.clone()
    })
}

impl AnnihilatorBundle {
    pub fn construction(&self) -> &Construction {
        &self.construction
    }

    pub fn gap_gamma(&self) -> Option<&GapGamma> {
        self.gamma.as_deref()
    }

    pub fn beta_bump(&self) -> Option<&Bump> {
        self.beta.as_ref()
    }

    pub fn is_derealized(&self) -> bool {
        self.derealization.is_some()
    }

    /// `ĝ(λ)`; zero without derealization.
    pub fn derealization_exponent(&self, lambda: Complex64) -> Result<Complex64> {
        match &self.derealization {
            Some(b) => Ok(b.beta(lambda)? * DEREALIZE_HEIGHT),
            None => Ok(ZERO),
        }
    }

    /// `log γ(λ)` for `Im λ > 0` (gap mode).
    pub fn log_gamma(&self, lambda: Complex64) -> Result<Complex64> {
        let g = self
            .gamma
            .as_ref()
            .ok_or_else(|| Error::arg("bundle carries no gap-mode γ"))?;
        if !(lambda.im > 0.0) {
            return Err(Error::arg("γ is evaluated in the open upper half-plane"));
        }
        Ok(g.log_gamma(lambda)? + self.derealization_exponent(lambda)?)
    }

    pub fn gamma(&self, lambda: Complex64) -> Result<Complex64> {
        Ok(self.log_gamma(lambda)?.exp())
    }

    /// `γ_*(λ) = conj γ(λ̄)` for `Im λ < 0`.
    pub fn gamma_star(&self, lambda: Complex64) -> Result<Complex64> {
        Ok(self.gamma(lambda.conj())?.conj())
    }

    pub fn beta(&self, lambda: Complex64) -> Result<Complex64> {
        self.beta
            .as_ref()
            .ok_or_else(|| Error::arg("bundle carries no β"))?
            .beta(lambda)
    }

    pub fn beta_star(&self, lambda: Complex64) -> Result<Complex64> {
        Ok(self.beta(lambda.conj())?.conj())
    }

    /// `β(k + iε) − β_*(k − iε) = 2i Im β(k + iε)`, tending to `2πi b(k)`.
    pub fn beta_difference(&self, k: f64, eps: f64) -> Result<Complex64> {
        Ok(self.beta(Complex64::new(k, eps))? - self.beta_star(Complex64::new(k, -eps))?)
    }

    /// Largest `|γ|` over a `n × n` grid of the upper half-plane around the support.
    pub fn sampled_sup(&self, model: &OperatorModel, n: usize) -> Result<f64> {
        let (lo, hi) = model.measure().hull();
        let pts: Vec<Complex64> = (0..n)
            .flat_map(|i| {
                (0..n).map(move |j| {
                    let x = lo - 5.0 + (hi - lo + 10.0) * i as f64 / (n - 1).max(1) as f64;
                    let y = 10f64.powf(-4.0 + 5.0 * j as f64 / (n - 1).max(1) as f64);
                    Complex64::new(x, y)
                })
            })
            .collect();
        let vals = pts
            .par_iter()
            .map(|&z| self.gamma(z).map(|g| g.norm()))
            .collect::<Result<Vec<_>>>()?;
        Ok(vals.into_iter().fold(0.0, f64::max))
    }
}

pub(crate) fn check_ladder(eps: &[f64]) -> Result<()> {
    if eps.is_empty() {
        return Err(Error::arg("ε-ladder is empty"));
    }
    if eps.iter().any(|&e| !(e > 0.0) || !e.is_finite()) {
        return Err(Error::arg("ε-ladder entries must be positive"));
    }
    if eps.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::arg("ε-ladder must be strictly decreasing"));
    }
    Ok(())
}

/// `T_ε = ⟨(γ(A + iε) − γ_*(A − iε))u, v⟩ = 2i ∫ Im γ(k + iε) dμ_{u,v}(k)`.
pub fn weak_trace_thm2(
    bundle: &AnnihilatorBundle,
    model: &OperatorModel,
    u: &SymbolVector,
    v: &SymbolVector,
    eps_ladder: &[f64],
) -> Result<Vec<Complex64>> {
    check_ladder(eps_ladder)?;
    if bundle.gamma.is_none() {
        return Err(Error::arg("weak_trace_thm2 needs a gap-mode bundle"));
    }
    let mu = model.measure();
    let features = mu.feature_points();
    eps_ladder
        .par_iter()
        .map(|&eps| {
            let err = std::cell::Cell::new(None);
            let value = mu.integrate(
                &Pairing::new(u, v),
                |k| match bundle.gamma(Complex64::new(k, eps)) {
                    Ok(g) => Complex64::new(0.0, 2.0 * g.im),
                    Err(e) => {
                        err.set(Some(e));
                        ZERO
                    }
                },
                eps,
                &features,
            )?;
            match err.take() {
                Some(e) => Err(e),
                None => Ok(value),
            }
        })
        .collect()
}

/// `T_ε = ∫ γ_A(k + iε)(β(k + iε) − conj β(k + iε)) dμ_{u,v}(k)`.
pub fn weak_trace_thm3(
    bundle: &AnnihilatorBundle,
    model: &OperatorModel,
    u: &SymbolVector,
    v: &SymbolVector,
    eps_ladder: &[f64],
) -> Result<Vec<Complex64>> {
    check_ladder(eps_ladder)?;
    let bump = bundle
        .beta
        .as_ref()
        .ok_or_else(|| Error::arg("weak_trace_thm3 needs a target-mode bundle"))?;
    let mu = model.measure();
    let mut features = mu.feature_points();
    features.extend(bump.intervals().iter().flat_map(|&(a, b)| [a, b]));
    eps_ladder
        .par_iter()
        .map(|&eps| {
            let err = std::cell::Cell::new(None);
            let value = mu.integrate(
                &Pairing::new(u, v),
                |k| {
                    let lam = Complex64::new(k, eps);
                    match (model.gamma_a(lam), bump.beta(lam)) {
                        (Ok(g), Ok(b)) => g * Complex64::new(0.0, 2.0 * b.im),
                        (Err(e), _) | (_, Err(e)) => {
                            err.set(Some(e));
                            ZERO
                        }
                    }
                },
                eps,
                &features,
            )?;
            match err.take() {
                Some(e) => Err(e),
                None => Ok(value),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::{AcPiece, Atom, SpectralMeasure};

    fn model(atoms: &[(f64, f64)], ac: Vec<AcPiece>) -> OperatorModel {
        let mu = SpectralMeasure::new(
            atoms.iter().map(|&(p, w)| Atom { position: p, weight: w }).collect(),
            ac,
            vec![],
        )
        .unwrap();
        OperatorModel::rank_one(mu, 1.0).unwrap()
    }

    #[test]
    fn cell_cauchy_closed_form_matches_quadrature() {
        let c = Cell::new(0.5, 0.9, (1.0, -2.0), (0.3, 0.7));
        for lam in [
            Complex64::new(0.7, 1e-6),
            Complex64::new(0.4, 0.05),
            Complex64::new(0.95, 0.3),
            Complex64::new(3.0, 0.1),
        ] {
            let direct = crate::quad::integrate(
                |t| c.eval(t) / (lam - t),
                &[0.5, lam.re.clamp(0.5, 0.9), 0.9],
                crate::quad::Tolerance::new(1e-15, 1e-13),
            )
            .value;
            assert!((c.cauchy(lam) - direct).norm() < 1e-10 * direct.norm().max(1.0), "{lam}");
        }
    }

    #[test]
    fn phase_table_tail_integrals() {
        let table = PhaseTable {
            left: 0.0,
            margin: 1.0,
            cells: vec![Cell::new(-1.0, 2.0, (0.0, 0.0), (0.0, 0.0))],
            right: 0.7,
            tail_a: 1.3,
            tail_b: -2.1,
            end: 2.0,
        };
        for lam in [Complex64::new(0.1, 0.05), Complex64::new(5.0, 1e-3), Complex64::new(-3.0, 2.0)] {
            let direct = crate::quad::integrate(
                |t| (0.7 + 1.3 / t - 2.1 / (t * t)) * (1.0 / (lam - t) + t / (1.0 + t * t)),
                &[2.0, lam.re.max(2.5), f64::INFINITY],
                crate::quad::Tolerance::new(1e-14, 1e-12),
            )
            .value;
            let v = table.conjugate_integral(lam);
            assert!((v - direct).norm() < 1e-9, "{lam}: {v} vs {direct}");
        }
    }

    #[test]
    fn empty_left_spectrum_has_no_boundary_zeros() {
        // log|γ_A| = −½ log(1 + F²) is not zero off the support, but it is bounded
        let m = model(&[(1.0, 1.0)], vec![]);
        let b = build_gamma_thm2(&m, 0.5).unwrap();
        for x in [-3.0, -1.0, -0.6] {
            let g = b.gamma(Complex64::new(x, 1e-5)).unwrap();
            assert!(g.norm() > 0.1 && g.norm() < 10.0, "{x}: {g}");
        }
        let v = b.gamma(Complex64::new(1.0, 1e-5)).unwrap();
        assert!(v.im.abs() <= 1e-3 * v.norm());
    }

    #[test]
    fn single_left_atom() {
        let m = model(&[(-1.0, 1.0)], vec![]);
        let b = build_gamma_thm2(&m, 0.5).unwrap();
        let g = b.gap_gamma().unwrap();
        // log γ₁ is purely imaginary right of −δ₀
        for x in [0.0, 0.3, 2.0] {
            let l = g.log_gamma1(Complex64::new(x, 0.0)).unwrap();
            assert!(l.re.abs() < 1e-10, "{x}: {l}");
        }
        // zero at the atom, linear in ε
        let e1 = b.gamma(Complex64::new(-1.0, 1e-3)).unwrap().norm();
        let e2 = b.gamma(Complex64::new(-1.0, 1e-5)).unwrap().norm();
        let slope = (e1 / e2).ln() / 100f64.ln();
        assert!((slope - 1.0).abs() < 0.05, "{slope}");
        // real boundary values on the right
        for x in [0.1, 0.8, 3.0, 30.0] {
            let v = b.gamma(Complex64::new(x, 1e-5)).unwrap();
            assert!(v.im.abs() <= 1e-3 * v.norm(), "{x}: {v}");
        }
    }

    #[test]
    fn contour_gamma1_matches_outer_integral() {
        use crate::hardy::{BoundaryFn, OuterFunction};
        let m = model(&[], vec![AcPiece::flat(-2.0, -0.5, 0.5)]);
        let b = build_gamma_thm2(&m, 0.25).unwrap();
        let g = b.gap_gamma().unwrap();
        // boundary log-modulus of γ_A for the flat piece in closed form
        let f = move |t: f64| {
            let z = Complex64::new(t, 0.0);
            let lb = log_lower(Complex64::new(-0.5, 0.0) - z);
            let la = log_lower(Complex64::new(-2.0, 0.0) - z);
            let big_f = (lb - la) * 0.5;
            -(Complex64::new(1.0, 0.0) - I * big_f).norm().ln()
        };
        let outer = OuterFunction::new(
            BoundaryFn::new(f, f64::NEG_INFINITY, -0.25).with_breaks(vec![-2.0, -0.5]),
            0.0,
        );
        for lam in [Complex64::new(-1.2, 0.1), Complex64::new(0.5, 0.01), Complex64::new(-0.3, 0.6)] {
            let a = g.log_gamma1(lam).unwrap();
            let o = outer.log_eval(lam).unwrap();
            assert!((a - o).norm() < 1e-7, "{lam}: {a} vs {o}");
        }
    }

    #[test]
    fn gap_precondition() {
        let m = model(&[(-0.2, 1.0), (1.0, 1.0)], vec![]);
        assert!(matches!(build_gamma_thm2(&m, 0.25), Err(Error::Precondition(_))));
    }

    #[test]
    fn derealization_moves_phase_on_omega_only() {
        let m = model(&[(-1.0, 1.0), (1.0, 1.0)], vec![]);
        let b = build_gamma_thm2(&m, 0.5).unwrap();
        assert!(derealize(&b, &[(-2.0, 0.5)]).is_err());
        let d = derealize(&b, &[(-2.0, -1.2)]).unwrap();
        let factor = |z: Complex64| d.derealization_exponent(z).unwrap().exp();
        assert!(factor(Complex64::new(-1.6, 1e-4)).im.abs() > 1e-3);
        assert!(factor(Complex64::new(0.7, 1e-8)).im.abs() < 1e-6);
        let same = derealize(&b, &[]).unwrap();
        assert!(!same.is_derealized());
    }

    #[test]
    fn beta_difference_tends_to_bump() {
        let b = build_beta_thm3(&[(-1.0, 1.0)], 2).unwrap();
        let k = 0.3;
        let target = 2.0 * PI * b.beta_bump().unwrap().eval(k);
        let d1 = (b.beta_difference(k, 1e-2).unwrap().im - target).abs();
        let d2 = (b.beta_difference(k, 1e-3).unwrap().im - target).abs();
        assert!(d2 < d1 / 5.0);
        assert!(b.beta_difference(2.0, 1e-6).unwrap().norm() < 1e-5);
        assert!(build_beta_thm3(&[], 2).is_err());
    }

    #[test]
    fn ladder_validation() {
        let m = model(&[(-1.0, 1.0)], vec![]);
        let b = build_beta_thm3(&[(-2.0, -0.5)], 2).unwrap();
        let u = SymbolVector::generating(m.measure());
        assert!(weak_trace_thm3(&b, &m, &u, &u, &[1e-2, 1e-1]).is_err());
        assert!(weak_trace_thm3(&b, &m, &u, &u, &[]).is_err());
    }
}
