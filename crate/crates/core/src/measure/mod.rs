//! Compactly supported spectral measures and their Borel transforms.

mod symbol;

use std::sync::{Arc, OnceLock};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::quad::{self, Tolerance};

pub use symbol::{Pairing, Symbol, SymbolPiece, SymbolVector, Unit, Weight};

/// Hard cap on self-similar refinement; 2^22 leaves is already 64 MiB per piece.
pub const DEPTH_LIMIT: u32 = 22;

/// Refinement used for plain moments such as `⟨u, u⟩`, where no smoothing scale applies.
const MOMENT_DEPTH: u32 = 16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Atom {
    pub position: f64,
    pub weight: f64,
}

/// Polynomial density on `[lo, hi]`; `density` holds coefficients in `k`, lowest first.
#[derive(Debug, Clone, PartialEq)]
pub struct AcPiece {
    pub lo: f64,
    pub hi: f64,
    pub density: Vec<f64>,
}

impl AcPiece {
    pub fn flat(lo: f64, hi: f64, height: f64) -> Self {
        AcPiece {
            lo,
            hi,
            density: vec![height],
        }
    }

    pub fn density_at(&self, k: f64) -> f64 {
        self.density.iter().rev().fold(0.0, |acc, &c| acc * k + c)
    }

    pub fn mass(&self) -> f64 {
        let antideriv = |x: f64| {
            self.density
                .iter()
                .enumerate()
                .rev()
                .fold(0.0, |acc, (n, &c)| acc * x + c / (n + 1) as f64)
                * x
        };
        antideriv(self.hi) - antideriv(self.lo)
    }
}

/// Two-branch self-similar measure on `[lo, hi]`: the left branch keeps the first
/// `ratio` of the interval with probability `p`, the right branch the last `ratio`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScPiece {
    pub lo: f64,
    pub hi: f64,
    pub ratio: f64,
    pub p: f64,
    pub mass: f64,
    /// Deepest refinement this piece may be resolved to.
    pub max_depth: u32,
}

impl ScPiece {
    /// Middle-thirds Cantor measure with equal branch weights.
    pub fn cantor(lo: f64, hi: f64, mass: f64) -> Self {
        ScPiece {
            lo,
            hi,
            ratio: 1.0 / 3.0,
            p: 0.5,
            mass,
            max_depth: 20,
        }
    }

    /// Smallest depth with leaf length `(hi−lo)·rᵈ ≤ scale/10`.
    pub fn depth_for_scale(&self, scale: f64) -> u32 {
        let len = self.hi - self.lo;
        if !(scale > 0.0) {
            return u32::MAX;
        }
        let d = ((10.0 * len / scale).ln() / (1.0 / self.ratio).ln()).ceil();
        if d.is_nan() || d < 1.0 {
            1
        } else if d > u32::MAX as f64 {
            u32::MAX
        } else {
            let mut d = d as u32;
            // guard against rounding in the logarithms
            while d > 1 && len * self.ratio.powi(d as i32 - 1) <= scale / 10.0 {
                d -= 1;
            }
            while len * self.ratio.powi(d as i32) > scale / 10.0 {
                d += 1;
            }
            d
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = self.lo.is_finite()
            && self.hi.is_finite()
            && self.lo < self.hi
            && self.ratio > 0.0
            && self.ratio < 0.5
            && self.p >= 0.0
            && self.p <= 1.0
            && self.mass > 0.0
            && self.mass.is_finite()
            && self.max_depth >= 1
            && self.max_depth <= DEPTH_LIMIT;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidMeasure(format!(
                "self-similar piece on [{}, {}] needs ratio in (0, 1/2), p in [0, 1], \
                 positive mass and depth in 1..={DEPTH_LIMIT}",
                self.lo, self.hi
            )))
        }
    }
}

/// The `2ᵈ` leaf atoms of a self-similar piece, left to right, at leaf midpoints.
pub fn refine_sc(piece: &ScPiece, depth: u32) -> Result<Vec<Atom>> {
    if depth == 0 {
        return Err(Error::arg("refinement depth must be at least 1"));
    }
    if depth > piece.max_depth {
        return Err(Error::Precision {
            required: depth,
            max: piece.max_depth,
        });
    }
    // (left end, mass) per leaf; every leaf at level d has length len·rᵈ.
    let mut leaves = vec![(piece.lo, piece.mass)];
    let mut len = piece.hi - piece.lo;
    for _ in 0..depth {
        let child = len * piece.ratio;
        let mut next = Vec::with_capacity(leaves.len() * 2);
        for &(a, w) in &leaves {
            next.push((a, w * piece.p));
            next.push((a + len - child, w * (1.0 - piece.p)));
        }
        leaves = next;
        len = child;
    }
    Ok(leaves
        .into_iter()
        .map(|(a, w)| Atom {
            position: a + 0.5 * len,
            weight: w,
        })
        .collect())
}

/// Which piece of a measure a flat component index refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Component {
    Atom(usize),
    Ac(usize),
    Sc(usize),
}

type LeafCache = Arc<Vec<Vec<OnceLock<Arc<[Atom]>>>>>;

#[derive(Clone)]
pub struct SpectralMeasure {
    atoms: Vec<Atom>,
    ac: Vec<AcPiece>,
    sc: Vec<ScPiece>,
    ac_mass: Vec<f64>,
    total_mass: f64,
    leaves: LeafCache,
}

impl std::fmt::Debug for SpectralMeasure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectralMeasure")
            .field("atoms", &self.atoms)
            .field("ac", &self.ac)
            .field("sc", &self.sc)
            .field("total_mass", &self.total_mass)
            .finish()
    }
}

impl PartialEq for SpectralMeasure {
    fn eq(&self, other: &Self) -> bool {
        self.atoms == other.atoms && self.ac == other.ac && self.sc == other.sc
    }
}

impl SpectralMeasure {
    pub fn new(atoms: Vec<Atom>, ac: Vec<AcPiece>, sc: Vec<ScPiece>) -> Result<Self> {
        if atoms.is_empty() && ac.is_empty() && sc.is_empty() {
            return Err(Error::InvalidMeasure("measure has no components".into()));
        }
        for (i, a) in atoms.iter().enumerate() {
            if !a.position.is_finite() || !(a.weight > 0.0) || !a.weight.is_finite() {
                return Err(Error::InvalidMeasure(format!(
                    "atom {i} needs a finite position and a positive weight"
                )));
            }
            if atoms[..i].iter().any(|b| b.position == a.position) {
                return Err(Error::InvalidMeasure(format!(
                    "atom position {} appears twice",
                    a.position
                )));
            }
        }
        let mut ac_mass = Vec::with_capacity(ac.len());
        for (i, piece) in ac.iter().enumerate() {
            if !(piece.lo < piece.hi) || !piece.lo.is_finite() || !piece.hi.is_finite() {
                return Err(Error::InvalidMeasure(format!(
                    "density piece {i} needs a finite interval with lo < hi"
                )));
            }
            if piece.density.is_empty() || piece.density.iter().any(|c| !c.is_finite()) {
                return Err(Error::InvalidMeasure(format!(
                    "density piece {i} needs finite polynomial coefficients"
                )));
            }
            let n = 512;
            let negative = (0..=n).any(|j| {
                let k = piece.lo + (piece.hi - piece.lo) * j as f64 / n as f64;
                piece.density_at(k) < 0.0
            });
            if negative {
                return Err(Error::InvalidMeasure(format!(
                    "density piece {i} is negative somewhere on [{}, {}]",
                    piece.lo, piece.hi
                )));
            }
            let m = piece.mass();
            if !(m > 0.0) {
                return Err(Error::InvalidMeasure(format!("density piece {i} has no mass")));
            }
            ac_mass.push(m);
        }
        for piece in &sc {
            piece.validate()?;
        }
        let total_mass = atoms.iter().map(|a| a.weight).sum::<f64>()
            + ac_mass.iter().sum::<f64>()
            + sc.iter().map(|p| p.mass).sum::<f64>();
        let leaves = Arc::new(
            sc.iter()
                .map(|p| (0..=p.max_depth).map(|_| OnceLock::new()).collect())
                .collect(),
        );
        Ok(SpectralMeasure {
            atoms,
            ac,
            sc,
            ac_mass,
            total_mass,
            leaves,
        })
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn ac_pieces(&self) -> &[AcPiece] {
        &self.ac
    }

    pub fn sc_pieces(&self) -> &[ScPiece] {
        &self.sc
    }

    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    pub fn n_components(&self) -> usize {
        self.atoms.len() + self.ac.len() + self.sc.len()
    }

    pub fn component(&self, index: usize) -> Component {
        let na = self.atoms.len();
        let nac = self.ac.len();
        if index < na {
            Component::Atom(index)
        } else if index < na + nac {
            Component::Ac(index - na)
        } else {
            assert!(index < self.n_components(), "component index out of range");
            Component::Sc(index - na - nac)
        }
    }

    pub fn component_index(&self, c: Component) -> usize {
        match c {
            Component::Atom(i) => i,
            Component::Ac(i) => self.atoms.len() + i,
            Component::Sc(i) => self.atoms.len() + self.ac.len() + i,
        }
    }

    /// Closed interval carrying component `index`.
    pub fn component_hull(&self, index: usize) -> (f64, f64) {
        match self.component(index) {
            Component::Atom(i) => (self.atoms[i].position, self.atoms[i].position),
            Component::Ac(i) => (self.ac[i].lo, self.ac[i].hi),
            Component::Sc(i) => (self.sc[i].lo, self.sc[i].hi),
        }
    }

    pub fn component_mass(&self, index: usize) -> f64 {
        match self.component(index) {
            Component::Atom(i) => self.atoms[i].weight,
            Component::Ac(i) => self.ac_mass[i],
            Component::Sc(i) => self.sc[i].mass,
        }
    }

    pub fn hull(&self) -> (f64, f64) {
        (0..self.n_components())
            .map(|i| self.component_hull(i))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), (lo, hi)| {
                (a.min(lo), b.max(hi))
            })
    }

    /// Atom positions and piece ends; resolvent pairings are sharply structured there.
    pub fn feature_points(&self) -> Vec<f64> {
        let mut pts: Vec<f64> = (0..self.n_components())
            .flat_map(|i| {
                let (a, b) = self.component_hull(i);
                [a, b]
            })
            .collect();
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        pts
    }

    /// True when `x` lies on the closed support; self-similar pieces count as their hull.
    pub fn touches(&self, x: f64) -> bool {
        self.atoms.iter().any(|a| a.position == x)
            || self.ac.iter().any(|p| p.lo <= x && x <= p.hi)
            || self.sc.iter().any(|p| p.lo <= x && x <= p.hi)
    }

    /// Leaf atoms of self-similar piece `piece` at `depth`, shared between callers.
    pub fn sc_leaves(&self, piece: usize, depth: u32) -> Result<Arc<[Atom]>> {
        let p = &self.sc[piece];
        if depth > p.max_depth {
            return Err(Error::Precision {
                required: depth,
                max: p.max_depth,
            });
        }
        let slot = &self.leaves[piece][depth as usize];
        if let Some(l) = slot.get() {
            return Ok(l.clone());
        }
        let atoms: Arc<[Atom]> = refine_sc(p, depth)?.into();
        Ok(slot.get_or_init(|| atoms).clone())
    }

    fn sc_depth(&self, piece: usize, scale: f64) -> Result<u32> {
        let p = &self.sc[piece];
        let d = p.depth_for_scale(scale);
        if d > p.max_depth {
            Err(Error::Precision {
                required: d,
                max: p.max_depth,
            })
        } else {
            Ok(d)
        }
    }

    /// `∫ f(k)/(k−λ) dμ(k)`.
    pub fn weighted_borel_transform(&self, f: &dyn Weight, lambda: Complex64) -> Result<Complex64> {
        if !(lambda.re.is_finite() && lambda.im.is_finite()) {
            return Err(Error::arg("spectral parameter must be finite"));
        }
        if lambda.im == 0.0 && self.touches(lambda.re) {
            return Err(Error::Boundary(lambda.re));
        }
        let mut acc = Complex64::new(0.0, 0.0);
        for (i, a) in self.atoms.iter().enumerate() {
            if !f.vanishes(i) {
                acc += a.weight * f.value(i, a.position) / (a.position - lambda);
            }
        }
        for j in 0..self.ac.len() {
            let idx = self.atoms.len() + j;
            if !f.vanishes(idx) {
                acc += self.ac_transform(j, f, lambda)?;
            }
        }
        for j in 0..self.sc.len() {
            let idx = self.atoms.len() + self.ac.len() + j;
            if f.vanishes(idx) {
                continue;
            }
            let p = &self.sc[j];
            let dist = distance(lambda, p.lo, p.hi);
            let leaves = self.sc_leaves(j, self.sc_depth(j, dist)?)?;
            acc += leaves
                .iter()
                .map(|a| a.weight * f.value(idx, a.position) / (a.position - lambda))
                .sum::<Complex64>();
        }
        Ok(acc)
    }

    /// `∫ dμ/(k−λ)`.
    pub fn borel_transform(&self, lambda: Complex64) -> Result<Complex64> {
        self.weighted_borel_transform(&Unit, lambda)
    }

    /// `Im ∫ f(k)/(k−x−iε) dμ(k)`.
    pub fn poisson_imaginary(&self, f: &dyn Weight, x: f64, eps: f64) -> Result<f64> {
        if !(eps > 0.0) {
            return Err(Error::arg("eps must be positive"));
        }
        Ok(self
            .weighted_borel_transform(f, Complex64::new(x, eps))?
            .im)
    }

    fn ac_transform(&self, j: usize, f: &dyn Weight, lambda: Complex64) -> Result<Complex64> {
        let piece = &self.ac[j];
        let idx = self.atoms.len() + j;
        let (lo, hi) = (piece.lo, piece.hi);
        let x = lambda.re;
        let mut points = vec![lo, hi];
        points.extend(f.breakpoints(idx).into_iter().filter(|&b| lo < b && b < hi));
        let density = |k: f64| f.value(idx, k) * piece.density_at(k);
        // Subtract the value at Re λ so the remainder is smooth across the near-pole.
        let near = lo < x && x < hi && lambda.im.abs() < hi - lo;
        let (c, analytic) = if near {
            points.push(x);
            let c = density(x);
            let log = (Complex64::new(hi, 0.0) - lambda).ln() - (Complex64::new(lo, 0.0) - lambda).ln();
            (c, c * log)
        } else {
            (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0))
        };
        let scale = self.ac_mass[j] / distance(lambda, lo, hi).max(1e-300);
        let tol = Tolerance::new(1e-15 * scale.max(self.ac_mass[j]), 1e-11);
        let q = quad::integrate(|k| (density(k) - c) / (k - lambda), &points, tol);
        Ok(analytic + q.require("density piece of a Borel transform")?)
    }

    /// `∫ g(k) f(k) dμ(k)`. Self-similar pieces are resolved to leaves of length at most
    /// `scale/10`; `features` are points near which `g` varies sharply.
    pub fn integrate<G>(&self, f: &dyn Weight, g: G, scale: f64, features: &[f64]) -> Result<Complex64>
    where
        G: Fn(f64) -> Complex64,
    {
        let mut acc = Complex64::new(0.0, 0.0);
        for (i, a) in self.atoms.iter().enumerate() {
            if !f.vanishes(i) {
                acc += a.weight * f.value(i, a.position) * g(a.position);
            }
        }
        for (j, piece) in self.ac.iter().enumerate() {
            let idx = self.atoms.len() + j;
            if f.vanishes(idx) {
                continue;
            }
            let mut points = vec![piece.lo, piece.hi];
            points.extend(
                f.breakpoints(idx)
                    .into_iter()
                    .chain(features.iter().copied())
                    .filter(|&b| piece.lo < b && b < piece.hi),
            );
            let tol = Tolerance::new(1e-14 * self.ac_mass[j], 1e-10).with_max_intervals(20_000);
            let q = quad::integrate(
                |k| f.value(idx, k) * piece.density_at(k) * g(k),
                &points,
                tol,
            );
            acc += q.require("density piece of a spectral integral")?;
        }
        for j in 0..self.sc.len() {
            let idx = self.atoms.len() + self.ac.len() + j;
            if f.vanishes(idx) {
                continue;
            }
            let leaves = self.sc_leaves(j, self.sc_depth(j, scale)?)?;
            acc += leaves
                .iter()
                .map(|a| a.weight * f.value(idx, a.position) * g(a.position))
                .sum::<Complex64>();
        }
        Ok(acc)
    }

    /// `⟨u, v⟩ = ∫ u v̄ dμ`.
    pub fn inner(&self, u: &SymbolVector, v: &SymbolVector) -> Result<Complex64> {
        let scale = self
            .sc
            .iter()
            .map(|p| 10.0 * (p.hi - p.lo) * p.ratio.powi(MOMENT_DEPTH.min(p.max_depth) as i32))
            .fold(f64::INFINITY, f64::min);
        self.integrate(&Pairing::new(u, v), |_| Complex64::new(1.0, 0.0), scale, &[])
    }

    pub fn norm_sq(&self, u: &SymbolVector) -> Result<f64> {
        Ok(self.inner(u, u)?.re.max(0.0))
    }
}

/// Distance from `λ` to the segment `[lo, hi]`.
fn distance(lambda: Complex64, lo: f64, hi: f64) -> f64 {
    let dx = if lambda.re < lo {
        lo - lambda.re
    } else if lambda.re > hi {
        lambda.re - hi
    } else {
        0.0
    };
    dx.hypot(lambda.im)
}
