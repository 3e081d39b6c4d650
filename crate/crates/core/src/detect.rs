//! Smirnov-class detectors and the verdict logic.
//!
//! For singular `u`, `√V(A − λ)⁻¹u` fails to be square integrable on lines approaching
//! the axis but becomes bounded after multiplication by the outer determinant `δ₊`;
//! for absolutely continuous `u` it is bounded already. The classifier reads these
//! laws, and the weak-annihilation traces, off fitted log-log slopes over an ε-ladder.
//! Using the converse direction is a calibrated heuristic, not a theorem.

use std::cell::Cell;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::annihilator::check_ladder;
use crate::error::{Error, Result};
use crate::measure::{Component, Pairing, SpectralMeasure, Symbol, SymbolVector};
use crate::operator::OperatorModel;
use crate::quad::{self, Tolerance};

/// Geometric ε-ladder used unless overridden.
pub const DEFAULT_LADDER: [f64; 7] = [1e-1, 3e-2, 1e-2, 3e-3, 1e-3, 3e-4, 1e-4];

/// Window half-width added to the support hull for bare `L¹` norms.
pub const WINDOW_REACH: f64 = 50.0;

const ONE: Complex64 = Complex64::new(1.0, 0.0);
const ZERO: Complex64 = Complex64::new(0.0, 0.0);

fn line_tol() -> Tolerance {
    Tolerance::new(1e-300, 1e-8).with_max_intervals(200_000)
}

/// Calibration constants of the classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Calibration {
    /// Slopes at or below this read as "unbounded".
    pub unbounded_slope: f64,
    /// Slopes at or above this read as "bounded".
    pub bounded_slope: f64,
    /// Fits with a larger RMS log residual carry no evidence.
    pub max_residual: f64,
    /// `|T_{ε_min}| ≤ annihilated·sup|T_ε|` reads as annihilation.
    pub annihilated: f64,
    /// `|T_{ε_min}| ≥ detected·sup|T_ε|` reads as detection of AC mass.
    pub detected: f64,
    /// Weighted weak norms with `max/min` above this are not uniformly bounded.
    pub weak_ratio: f64,
    /// Bare weak norms whose last growth rate per unit `ln(1/ε)` keeps at least this
    /// fraction of the largest rate in the fit window are unbounded.
    pub weak_persistence: f64,
    /// Number of smallest-ε ladder points used in slope fits.
    pub fit_points: usize,
}

impl Default for Calibration {
    fn default() -> Self {
        Calibration {
            unbounded_slope: -0.35,
            bounded_slope: -0.1,
            max_residual: 0.2,
            annihilated: 0.05,
            detected: 0.5,
            weak_ratio: 1.5,
            weak_persistence: 0.25,
            fit_points: 5,
        }
    }
}

impl Calibration {
    pub fn validate(&self) -> Result<()> {
        let ok = self.unbounded_slope < self.bounded_slope
            && self.max_residual > 0.0
            && self.annihilated > 0.0
            && self.annihilated < self.detected
            && self.detected <= 1.0
            && self.weak_ratio > 1.0
            && self.weak_persistence > 0.0
            && self.weak_persistence < 1.0
            && self.fit_points >= 2;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(
                "calibration needs unbounded_slope < bounded_slope, 0 < annihilated < detected ≤ 1, \
                 weak_ratio > 1, 0 < weak_persistence < 1, max_residual > 0 and fit_points ≥ 2"
                    .into(),
            ))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    #[serde(rename = "singular")]
    Singular,
    #[serde(rename = "absolutely-continuous")]
    AbsolutelyContinuous,
    #[serde(rename = "mixed")]
    Mixed,
    #[serde(rename = "inconclusive")]
    Inconclusive,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Singular => "singular",
            Verdict::AbsolutelyContinuous => "absolutely-continuous",
            Verdict::Mixed => "mixed",
            Verdict::Inconclusive => "inconclusive",
        }
    }
}

/// `L²` norms on `Im λ = ε` of `√(2V)(A − λ)⁻¹u`, bare and multiplied by `δ₊`, and the
/// mirror pair on `Im λ = −ε` with `δ₋`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StrongPoint {
    pub eps: f64,
    pub without: f64,
    pub with: f64,
    pub without_mirror: f64,
    pub with_mirror: f64,
}

/// `L¹` norms on `Im λ = ε` of `⟨(A − λ)⁻¹u, v⟩`: bare over the window, and multiplied by
/// `δ₊(λ)/(λ + i)` over the whole line; mirrors on `Im λ = −ε`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WeakPoint {
    pub eps: f64,
    pub bare: f64,
    pub weighted: f64,
    pub bare_mirror: f64,
    pub weighted_mirror: f64,
}

/// Points where line integrands at height `eps` are sharply structured: atoms, piece
/// ends, and the ends of self-similar leaves no longer than `eps`.
fn line_features(mu: &SpectralMeasure, eps: f64) -> Result<Vec<f64>> {
    let mut pts = mu.feature_points();
    for (j, p) in mu.sc_pieces().iter().enumerate() {
        let d = p.depth_for_scale(10.0 * eps).min(p.max_depth).min(14);
        let half = 0.5 * (p.hi - p.lo) * p.ratio.powi(d as i32);
        for a in mu.sc_leaves(j, d)?.iter() {
            pts.push(a.position - half);
            pts.push(a.position + half);
        }
    }
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    Ok(pts)
}

/// `∫ f` over the line (or a window), with `f` fallible.
fn line_integral<F>(f: F, features: &[f64], window: Option<(f64, f64)>) -> Result<Complex64>
where
    F: Fn(f64) -> Result<Complex64>,
{
    let err = Cell::new(None);
    let g = |t: f64| match f(t) {
        Ok(v) => v,
        Err(e) => {
            err.set(Some(e));
            ZERO
        }
    };
    let mut pts: Vec<f64> = match window {
        Some((lo, hi)) => {
            let mut p: Vec<f64> = features.iter().copied().filter(|&x| lo < x && x < hi).collect();
            p.extend([lo, hi]);
            p
        }
        None => {
            let mut p = features.to_vec();
            p.extend([f64::NEG_INFINITY, f64::INFINITY]);
            p
        }
    };
    pts.sort_by(f64::total_cmp);
    let q = quad::integrate(g, &pts, line_tol());
    if let Some(e) = err.take() {
        return Err(e);
    }
    q.require("line integral")
}

fn real_model(model: &OperatorModel) -> bool {
    model.couplings().iter().all(|c| c.vector.is_real())
}

/// `‖√(2V)(A − λ)⁻¹u‖²` and `δ₊(λ)` (or `δ₋` below the axis).
fn strong_integrand(model: &OperatorModel, u: &SymbolVector, lambda: Complex64) -> Result<(f64, f64)> {
    let c = model.resolvent_pairings(u, lambda)?;
    let bare: f64 = c
        .iter()
        .zip(model.couplings())
        .map(|(cj, k)| 2.0 * k.strength * cj.norm_sqr())
        .sum();
    let delta = if lambda.im > 0.0 {
        model.delta_plus(lambda)?
    } else {
        model.delta_minus(lambda)?
    };
    Ok((bare, bare * delta.norm_sqr()))
}

fn strong_at(model: &OperatorModel, u: &SymbolVector, eps: f64, mirror: bool) -> Result<(f64, f64)> {
    let mu = model.measure();
    let features = line_features(mu, eps)?;
    let height = if mirror { -eps } else { eps };
    let v = line_integral(
        |t| strong_integrand(model, u, Complex64::new(t, height)).map(|(a, b)| Complex64::new(a, b)),
        &features,
        None,
    )?;
    Ok((v.re.max(0.0).sqrt(), v.im.max(0.0).sqrt()))
}

/// Strong Smirnov trace: per ε, line norms without and with `δ±`.
pub fn smirnov_strong_trace(model: &OperatorModel, u: &SymbolVector, eps_ladder: &[f64]) -> Result<Vec<StrongPoint>> {
    check_ladder(eps_ladder)?;
    if u.is_zero() {
        return Ok(eps_ladder
            .iter()
            .map(|&eps| StrongPoint {
                eps,
                without: 0.0,
                with: 0.0,
                without_mirror: 0.0,
                with_mirror: 0.0,
            })
            .collect());
    }
    let symmetric = u.is_real() && real_model(model);
    eps_ladder
        .par_iter()
        .map(|&eps| {
            let (without, with) = strong_at(model, u, eps, false)?;
            let (without_mirror, with_mirror) = if symmetric {
                (without, with)
            } else {
                strong_at(model, u, eps, true)?
            };
            Ok(StrongPoint {
                eps,
                without,
                with,
                without_mirror,
                with_mirror,
            })
        })
        .collect()
}

/// The bare column of the strong trace: `‖√(2V)(A − λ)⁻¹u‖` on `Im λ = ε`.
pub fn ac_baseline_trace(model: &OperatorModel, u: &SymbolVector, eps_ladder: &[f64]) -> Result<Vec<f64>> {
    check_ladder(eps_ladder)?;
    let mu = model.measure();
    eps_ladder
        .par_iter()
        .map(|&eps| {
            let features = line_features(mu, eps)?;
            let v = line_integral(
                |t| {
                    let lam = Complex64::new(t, eps);
                    let c = model.resolvent_pairings(u, lam)?;
                    let s: f64 = c
                        .iter()
                        .zip(model.couplings())
                        .map(|(cj, k)| 2.0 * k.strength * cj.norm_sqr())
                        .sum();
                    Ok(Complex64::new(s, 0.0))
                },
                &features,
                None,
            )?;
            Ok(v.re.max(0.0).sqrt())
        })
        .collect()
}

fn weak_at(model: &OperatorModel, u: &SymbolVector, v: &SymbolVector, eps: f64, mirror: bool) -> Result<(f64, f64)> {
    let mu = model.measure();
    let features = line_features(mu, eps)?;
    let (lo, hi) = mu.hull();
    let window = (lo - WINDOW_REACH, hi + WINDOW_REACH);
    let height = if mirror { -eps } else { eps };
    let pairing = Pairing::new(u, v);
    let h = |t: f64| mu.weighted_borel_transform(&pairing, Complex64::new(t, height));
    let bare = line_integral(|t| Ok(Complex64::new(h(t)?.norm(), 0.0)), &features, Some(window))?;
    let weighted = line_integral(
        |t| {
            let lam = Complex64::new(t, height);
            let (delta, nu) = if mirror {
                (model.delta_minus(lam)?, ONE / (lam - Complex64::i()))
            } else {
                (model.delta_plus(lam)?, ONE / (lam + Complex64::i()))
            };
            Ok(Complex64::new((delta * nu * h(t)?).norm(), 0.0))
        },
        &features,
        None,
    )?;
    Ok((bare.re, weighted.re))
}

/// Weak Smirnov trace of the scalar pairing `⟨(A − λ)⁻¹u, v⟩`.
pub fn smirnov_weak_trace(
    model: &OperatorModel,
    u: &SymbolVector,
    v: &SymbolVector,
    eps_ladder: &[f64],
) -> Result<Vec<WeakPoint>> {
    check_ladder(eps_ladder)?;
    let mu = model.measure();
    let disjoint = (0..mu.n_components()).all(|i| {
        let p = Pairing::new(u, v);
        crate::measure::Weight::vanishes(&p, i) || !symbols_overlap(u.symbol(i), v.symbol(i))
    });
    if disjoint {
        return Ok(eps_ladder
            .iter()
            .map(|&eps| WeakPoint {
                eps,
                bare: 0.0,
                weighted: 0.0,
                bare_mirror: 0.0,
                weighted_mirror: 0.0,
            })
            .collect());
    }
    let symmetric = u.is_real() && v.is_real() && real_model(model);
    eps_ladder
        .par_iter()
        .map(|&eps| {
            let (bare, weighted) = weak_at(model, u, v, eps, false)?;
            let (bare_mirror, weighted_mirror) = if symmetric {
                (bare, weighted)
            } else {
                weak_at(model, u, v, eps, true)?
            };
            Ok(WeakPoint {
                eps,
                bare,
                weighted,
                bare_mirror,
                weighted_mirror,
            })
        })
        .collect()
}

/// Whether two symbols have pieces overlapping on a set of positive length or at a point.
fn symbols_overlap(a: &Symbol, b: &Symbol) -> bool {
    a.pieces()
        .iter()
        .any(|p| b.pieces().iter().any(|q| p.lo.max(q.lo) <= p.hi.min(q.hi)))
}

/// Least-squares slope of `ln y` against `ln ε` and the RMS residual of the fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Fit {
    pub slope: f64,
    pub residual: f64,
}

/// Fits the last `n` points; `None` when any of them is zero or not finite.
pub fn fit_slope(eps: &[f64], values: &[f64], n: usize) -> Option<Fit> {
    let k = eps.len().min(values.len());
    if k < 2 {
        return None;
    }
    let start = k.saturating_sub(n.max(2));
    let xs: Vec<f64> = eps[start..k].iter().map(|e| e.ln()).collect();
    let ys: Vec<f64> = values[start..k]
        .iter()
        .map(|&v| if v > 0.0 && v.is_finite() { v.ln() } else { f64::NAN })
        .collect();
    if ys.iter().any(|y| y.is_nan()) {
        return None;
    }
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let residual = (xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - my - slope * (x - mx)).powi(2))
        .sum::<f64>()
        / m)
        .sqrt();
    Some(Fit { slope, residual })
}

/// What a single detector says about one test vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Indication {
    #[serde(rename = "singular")]
    Singular,
    #[serde(rename = "absolutely-continuous")]
    AbsolutelyContinuous,
    #[serde(rename = "none")]
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Evidence {
    pub detector: String,
    pub vector_id: String,
    pub slope: Option<f64>,
    pub residual: Option<f64>,
    pub indication: Indication,
}

/// All traces collected for one test vector.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorTraces {
    pub id: String,
    pub eps: Vec<f64>,
    pub strong: Option<Vec<StrongPoint>>,
    pub weak: Option<Vec<WeakPoint>>,
    /// Detector name and the weak-annihilation values `T_ε`.
    pub annihilation: Option<(String, Vec<Complex64>)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VectorVerdict {
    pub vector_id: String,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionVerdict {
    pub verdict: Verdict,
    pub vectors: Vec<VectorVerdict>,
    pub evidence: Vec<Evidence>,
}

fn strong_evidence(t: &VectorTraces, pts: &[StrongPoint], cal: &Calibration) -> [Evidence; 2] {
    let without: Vec<f64> = pts.iter().map(|p| p.without.max(p.without_mirror)).collect();
    let with: Vec<f64> = pts.iter().map(|p| p.with.max(p.with_mirror)).collect();
    let fw = fit_slope(&t.eps, &without, cal.fit_points);
    let fd = fit_slope(&t.eps, &with, cal.fit_points);
    let usable = |f: &Option<Fit>| f.filter(|f| f.residual <= cal.max_residual);
    let indication = match (usable(&fw), usable(&fd)) {
        (Some(w), Some(d)) if w.slope <= cal.unbounded_slope && d.slope >= cal.bounded_slope => Indication::Singular,
        (Some(w), _) if w.slope >= cal.bounded_slope => Indication::AbsolutelyContinuous,
        _ => Indication::None,
    };
    [
        Evidence {
            detector: "smirnov_strong".into(),
            vector_id: t.id.clone(),
            slope: fw.map(|f| f.slope),
            residual: fw.map(|f| f.residual),
            indication,
        },
        Evidence {
            detector: "smirnov_strong_delta".into(),
            vector_id: t.id.clone(),
            slope: fd.map(|f| f.slope),
            residual: fd.map(|f| f.residual),
            indication,
        },
    ]
}

fn ratio(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(0.0, f64::max);
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    if min > 0.0 {
        max / min
    } else {
        f64::INFINITY
    }
}

/// Last growth rate of `values` per unit `ln(1/ε)` relative to the largest rate over the
/// fit window; `None` when the values never grow there.
fn persistence(eps: &[f64], values: &[f64], n: usize) -> Option<f64> {
    let k = eps.len().min(values.len());
    let start = k.saturating_sub(n.max(2));
    let rates: Vec<f64> = (start..k.saturating_sub(1))
        .map(|j| (values[j + 1] - values[j]) / (eps[j] / eps[j + 1]).ln())
        .collect();
    let max = rates.iter().cloned().fold(0.0, f64::max);
    if max > 0.0 {
        rates.last().map(|r| r / max)
    } else {
        None
    }
}

fn weak_evidence(t: &VectorTraces, pts: &[WeakPoint], cal: &Calibration) -> Evidence {
    let weighted: Vec<f64> = pts.iter().map(|p| p.weighted.max(p.weighted_mirror)).collect();
    let bare: Vec<f64> = pts.iter().map(|p| p.bare.max(p.bare_mirror)).collect();
    let fit = fit_slope(&t.eps, &weighted, cal.fit_points);
    let indication = if weighted.iter().all(|&w| w == 0.0) {
        Indication::None
    } else if ratio(&weighted) > cal.weak_ratio {
        // the δ-weighted pairing should stay bounded for any vector; if it does not,
        // the trace is not trustworthy
        Indication::None
    } else {
        match persistence(&t.eps, &bare, cal.fit_points) {
            Some(p) if p >= cal.weak_persistence => Indication::Singular,
            _ => Indication::AbsolutelyContinuous,
        }
    };
    Evidence {
        detector: "smirnov_weak".into(),
        vector_id: t.id.clone(),
        slope: fit.map(|f| f.slope),
        residual: fit.map(|f| f.residual),
        indication,
    }
}

fn annihilation_evidence(t: &VectorTraces, name: &str, values: &[Complex64], cal: &Calibration) -> Evidence {
    let mods: Vec<f64> = values.iter().map(|v| v.norm()).collect();
    let fit = fit_slope(&t.eps, &mods, cal.fit_points);
    let sup = mods.iter().cloned().fold(0.0, f64::max);
    let last = mods.last().copied().unwrap_or(0.0);
    let indication = if !(sup > 0.0) {
        Indication::None
    } else if last <= cal.annihilated * sup {
        Indication::Singular
    } else if last >= cal.detected * sup {
        Indication::AbsolutelyContinuous
    } else {
        Indication::None
    };
    Evidence {
        detector: name.to_string(),
        vector_id: t.id.clone(),
        slope: fit.map(|f| f.slope),
        residual: fit.map(|f| f.residual),
        indication,
    }
}

/// Verdict for a single vector and the evidence behind it.
pub fn vector_verdict(t: &VectorTraces, cal: &Calibration) -> (Verdict, Vec<Evidence>) {
    let mut evidence = Vec::new();
    let mut strong = Indication::None;
    let mut weak = Indication::None;
    if let Some(pts) = &t.strong {
        let ev = strong_evidence(t, pts, cal);
        strong = ev[0].indication;
        evidence.extend(ev);
    }
    if let Some(pts) = &t.weak {
        let ev = weak_evidence(t, pts, cal);
        weak = ev.indication;
        evidence.push(ev);
    }
    let mut annihilation = Indication::None;
    if let Some((name, values)) = &t.annihilation {
        let ev = annihilation_evidence(t, name, values, cal);
        annihilation = ev.indication;
        evidence.push(ev);
    }
    let definite = |i: Indication| i != Indication::None;
    if definite(strong) && definite(weak) && strong != weak {
        return (Verdict::Inconclusive, evidence);
    }
    let all = [strong, weak, annihilation];
    let singular = all.contains(&Indication::Singular);
    let ac = all.contains(&Indication::AbsolutelyContinuous);
    let verdict = match (singular, ac) {
        (true, true) => Verdict::Mixed,
        (true, false) => Verdict::Singular,
        (false, true) => Verdict::AbsolutelyContinuous,
        (false, false) => Verdict::Inconclusive,
    };
    (verdict, evidence)
}

/// Combines per-vector verdicts of a region's dictionary into one verdict.
pub fn classify(traces: &[VectorTraces], cal: &Calibration) -> Result<RegionVerdict> {
    if traces.is_empty() {
        return Err(Error::arg("classification needs at least one traced vector"));
    }
    let mut vectors = Vec::new();
    let mut evidence = Vec::new();
    for t in traces {
        let (v, ev) = vector_verdict(t, cal);
        vectors.push(VectorVerdict {
            vector_id: t.id.clone(),
            verdict: v,
        });
        evidence.extend(ev);
    }
    let has = |v: Verdict| vectors.iter().any(|x| x.verdict == v);
    let verdict = if has(Verdict::Mixed) || (has(Verdict::Singular) && has(Verdict::AbsolutelyContinuous)) {
        Verdict::Mixed
    } else if has(Verdict::Singular) {
        Verdict::Singular
    } else if has(Verdict::AbsolutelyContinuous) {
        Verdict::AbsolutelyContinuous
    } else {
        Verdict::Inconclusive
    };
    Ok(RegionVerdict {
        verdict,
        vectors,
        evidence,
    })
}

/// A named test vector.
#[derive(Debug, Clone, PartialEq)]
pub struct DictionaryEntry {
    pub id: String,
    pub vector: SymbolVector,
}

fn overlaps(mu: &SpectralMeasure, index: usize, region: &[(f64, f64)]) -> bool {
    let (a, b) = mu.component_hull(index);
    region.iter().any(|&(lo, hi)| {
        if a == b {
            lo <= a && a <= hi
        } else {
            a.max(lo) < b.min(hi)
        }
    })
}

/// Component indicators localized to the region plus `n_random` random piecewise-linear
/// symbols with values in `[0.5, 1.5]`, drawn from a seeded generator.
pub fn dictionary(mu: &SpectralMeasure, region: &[(f64, f64)], n_random: usize, seed: u64) -> Vec<DictionaryEntry> {
    let mut out = Vec::new();
    let mut touched = Vec::new();
    for i in 0..mu.n_components() {
        if !overlaps(mu, i, region) {
            continue;
        }
        touched.push(i);
        let id = match mu.component(i) {
            Component::Atom(j) => format!("atom{j}"),
            Component::Ac(j) => format!("ac{j}"),
            Component::Sc(j) => format!("cantor{j}"),
        };
        out.push(DictionaryEntry {
            id,
            vector: SymbolVector::indicator(mu, i).restrict(region),
        });
    }
    if touched.is_empty() {
        return out;
    }
    let lo = region.iter().map(|r| r.0).fold(f64::INFINITY, f64::min);
    let hi = region.iter().map(|r| r.1).fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = (lo.max(mu.hull().0), hi.min(mu.hull().1));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for r in 0..n_random {
        let knots: Vec<f64> = (0..=8).map(|j| lo + (hi - lo) * j as f64 / 8.0).collect();
        let values: Vec<Complex64> = knots
            .iter()
            .map(|_| Complex64::new(rng.gen_range(0.5..1.5), 0.0))
            .collect();
        let symbol = if hi > lo {
            Symbol::piecewise_linear(&knots, &values)
        } else {
            Symbol::constant(values[0])
        };
        let symbols = (0..mu.n_components())
            .map(|i| if touched.contains(&i) { symbol.clone() } else { Symbol::zero() })
            .collect();
        out.push(DictionaryEntry {
            id: format!("rand{r}"),
            vector: SymbolVector::from_symbols(symbols).restrict(region),
        });
    }
    out
}

/// The verdict the measure itself dictates for a region.
pub fn ground_truth(mu: &SpectralMeasure, region: &[(f64, f64)]) -> Verdict {
    let mut singular = false;
    let mut ac = false;
    for i in 0..mu.n_components() {
        if !overlaps(mu, i, region) {
            continue;
        }
        match mu.component(i) {
            Component::Ac(_) => ac = true,
            _ => singular = true,
        }
    }
    match (singular, ac) {
        (true, true) => Verdict::Mixed,
        (true, false) => Verdict::Singular,
        (false, true) => Verdict::AbsolutelyContinuous,
        (false, false) => Verdict::Inconclusive,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::{AcPiece, Atom};
    use std::f64::consts::PI;

    fn atom_model() -> OperatorModel {
        let mu = SpectralMeasure::new(vec![Atom { position: 0.0, weight: 1.0 }], vec![], vec![]).unwrap();
        OperatorModel::rank_one(mu, 1.0).unwrap()
    }

    #[test]
    fn single_atom_strong_norms() {
        let m = atom_model();
        let u = SymbolVector::generating(m.measure());
        let pts = smirnov_strong_trace(&m, &u, &[1e-2]).unwrap();
        let eps = 1e-2;
        assert!((pts[0].without.powi(2) - 2.0 * PI / eps).abs() < 1e-6 * 2.0 * PI / eps);
        assert!((pts[0].with.powi(2) - 2.0 * PI / (eps + 1.0)).abs() < 1e-6);
    }

    #[test]
    fn single_atom_weak_norms() {
        let m = atom_model();
        let u = SymbolVector::generating(m.measure());
        let pts = smirnov_weak_trace(&m, &u, &u, &[1e-2]).unwrap();
        assert!((pts[0].weighted - PI / 1.01).abs() < 1e-6);
        // bare: ∫_{−T}^{T} dt/√(t² + ε²) = 2 asinh(T/ε)
        let t = WINDOW_REACH;
        assert!((pts[0].bare - 2.0 * (t / 1e-2f64).asinh()).abs() < 1e-6);
    }

    #[test]
    fn zero_and_orthogonal_vectors() {
        let mu = SpectralMeasure::new(
            vec![Atom { position: -1.0, weight: 1.0 }],
            vec![AcPiece::flat(0.0, 1.0, 1.0)],
            vec![],
        )
        .unwrap();
        let m = OperatorModel::rank_one(mu.clone(), 1.0).unwrap();
        let z = SymbolVector::zero(&mu);
        let s = smirnov_strong_trace(&m, &z, &[1e-1, 1e-2]).unwrap();
        assert!(s.iter().all(|p| p.without == 0.0 && p.with == 0.0));
        let a = SymbolVector::indicator(&mu, 0);
        let b = SymbolVector::indicator(&mu, 1);
        let w = smirnov_weak_trace(&m, &a, &b, &[1e-1, 1e-2]).unwrap();
        assert!(w.iter().all(|p| p.bare == 0.0 && p.weighted == 0.0));
    }

    #[test]
    fn slope_fit_recovers_power_law() {
        let eps = DEFAULT_LADDER;
        let vals: Vec<f64> = eps.iter().map(|e| 3.0 * e.powf(-0.5)).collect();
        let f = fit_slope(&eps, &vals, 5).unwrap();
        assert!((f.slope + 0.5).abs() < 1e-12 && f.residual < 1e-12);
        assert!(fit_slope(&eps, &[0.0; 7], 5).is_none());
    }

    #[test]
    fn classification_rules() {
        let eps = DEFAULT_LADDER.to_vec();
        let cal = Calibration::default();
        let strong = |a: f64, b: f64| {
            Some(
                eps.iter()
                    .map(|&e| StrongPoint {
                        eps: e,
                        without: e.powf(a),
                        with: e.powf(b),
                        without_mirror: e.powf(a),
                        with_mirror: e.powf(b),
                    })
                    .collect(),
            )
        };
        let sing = VectorTraces {
            id: "s".into(),
            eps: eps.clone(),
            strong: strong(-0.5, 0.0),
            weak: None,
            annihilation: Some(("weak_thm3".into(), eps.iter().map(|&e| Complex64::new(e, 0.0)).collect())),
        };
        let ac = VectorTraces {
            id: "a".into(),
            eps: eps.clone(),
            strong: strong(0.0, 0.0),
            weak: None,
            annihilation: Some(("weak_thm3".into(), eps.iter().map(|_| Complex64::new(1.0, 0.0)).collect())),
        };
        assert_eq!(vector_verdict(&sing, &cal).0, Verdict::Singular);
        assert_eq!(vector_verdict(&ac, &cal).0, Verdict::AbsolutelyContinuous);
        assert_eq!(classify(&[sing.clone(), ac.clone()], &cal).unwrap().verdict, Verdict::Mixed);
        assert_eq!(classify(&[sing], &cal).unwrap().verdict, Verdict::Singular);
        assert!(classify(&[], &cal).is_err());
    }

    #[test]
    fn dictionary_is_localized_and_seeded() {
        let mu = SpectralMeasure::new(
            vec![Atom { position: -1.0, weight: 1.0 }, Atom { position: 1.0, weight: 1.0 }],
            vec![AcPiece::flat(-2.0, -0.5, 1.0)],
            vec![],
        )
        .unwrap();
        let d = dictionary(&mu, &[(-2.0, -0.5)], 2, 7);
        let ids: Vec<_> = d.iter().map(|e| e.id.as_str()).collect();
        assert_eq!(ids, ["atom0", "ac0", "rand0", "rand1"]);
        assert_eq!(d, dictionary(&mu, &[(-2.0, -0.5)], 2, 7));
        assert!(d[2].vector.value(1, 1.0) == Complex64::new(0.0, 0.0));
        assert_eq!(ground_truth(&mu, &[(-2.0, -0.5)]), Verdict::Mixed);
        assert_eq!(ground_truth(&mu, &[(0.5, 2.0)]), Verdict::Singular);
    }
}
