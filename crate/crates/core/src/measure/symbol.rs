//! Vectors of the multiplication model.
//!
//! An element of `L²(μ)` is stored as one piecewise-polynomial symbol per measure
//! component, so localizing a vector to a single atom, density piece or self-similar
//! piece is exact even when the pieces overlap in position.

use num_complex::Complex64;

use super::SpectralMeasure;

#[derive(Debug, Clone, PartialEq)]
pub struct SymbolPiece {
    pub lo: f64,
    pub hi: f64,
    /// Coefficients in the spectral variable, lowest degree first.
    pub coeffs: Vec<Complex64>,
}

impl SymbolPiece {
    fn eval(&self, k: f64) -> Complex64 {
        self.coeffs
            .iter()
            .rev()
            .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * k + c)
    }
}

/// Piecewise-polynomial complex function of the spectral variable, zero off its pieces.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Symbol {
    pieces: Vec<SymbolPiece>,
}

impl Symbol {
    pub fn zero() -> Self {
        Symbol { pieces: Vec::new() }
    }

    pub fn constant(c: Complex64) -> Self {
        Self::polynomial(vec![c])
    }

    pub fn one() -> Self {
        Self::constant(Complex64::new(1.0, 0.0))
    }

    /// `k ↦ kⁿ` on the whole line.
    pub fn monomial(n: usize) -> Self {
        let mut coeffs = vec![Complex64::new(0.0, 0.0); n + 1];
        coeffs[n] = Complex64::new(1.0, 0.0);
        Self::polynomial(coeffs)
    }

    pub fn polynomial(coeffs: Vec<Complex64>) -> Self {
        if coeffs.iter().all(|c| *c == Complex64::new(0.0, 0.0)) {
            return Self::zero();
        }
        Symbol {
            pieces: vec![SymbolPiece {
                lo: f64::NEG_INFINITY,
                hi: f64::INFINITY,
                coeffs,
            }],
        }
    }

    /// Linear interpolation of `values` at increasing `knots`, zero outside the knot range.
    pub fn piecewise_linear(knots: &[f64], values: &[Complex64]) -> Self {
        assert_eq!(knots.len(), values.len(), "one value per knot");
        let pieces = knots
            .windows(2)
            .zip(values.windows(2))
            .filter(|(k, _)| k[1] > k[0])
            .map(|(k, v)| {
                let slope = (v[1] - v[0]) / (k[1] - k[0]);
                SymbolPiece {
                    lo: k[0],
                    hi: k[1],
                    coeffs: vec![v[0] - slope * k[0], slope],
                }
            })
            .collect();
        Symbol { pieces }
    }

    pub fn pieces(&self) -> &[SymbolPiece] {
        &self.pieces
    }

    pub fn eval(&self, k: f64) -> Complex64 {
        self.pieces
            .iter()
            .find(|p| p.lo <= k && k <= p.hi)
            .map_or(Complex64::new(0.0, 0.0), |p| p.eval(k))
    }

    pub fn is_zero(&self) -> bool {
        self.pieces.is_empty()
    }

    pub fn is_real(&self) -> bool {
        self.pieces
            .iter()
            .all(|p| p.coeffs.iter().all(|c| c.im == 0.0))
    }

    /// Finite piece ends, where the symbol may jump.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self
            .pieces
            .iter()
            .flat_map(|p| [p.lo, p.hi])
            .filter(|x| x.is_finite())
            .collect();
        out.sort_by(f64::total_cmp);
        out.dedup();
        out
    }

    /// Multiplication by the indicator of a finite union of closed intervals.
    pub fn restrict(&self, intervals: &[(f64, f64)]) -> Symbol {
        let mut pieces = Vec::new();
        for p in &self.pieces {
            for &(a, b) in intervals {
                let lo = p.lo.max(a);
                let hi = p.hi.min(b);
                if lo <= hi {
                    pieces.push(SymbolPiece {
                        lo,
                        hi,
                        coeffs: p.coeffs.clone(),
                    });
                }
            }
        }
        Symbol { pieces }
    }

    pub fn scale(&self, c: Complex64) -> Symbol {
        if c == Complex64::new(0.0, 0.0) {
            return Symbol::zero();
        }
        Symbol {
            pieces: self
                .pieces
                .iter()
                .map(|p| SymbolPiece {
                    lo: p.lo,
                    hi: p.hi,
                    coeffs: p.coeffs.iter().map(|&x| x * c).collect(),
                })
                .collect(),
        }
    }
}

/// A vector `u ∈ L²(μ)`: one symbol per component of the owning measure.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolVector {
    symbols: Vec<Symbol>,
}

impl SymbolVector {
    pub fn from_symbols(symbols: Vec<Symbol>) -> Self {
        SymbolVector { symbols }
    }

    /// The same symbol on every component of `mu`.
    pub fn uniform(mu: &SpectralMeasure, symbol: Symbol) -> Self {
        SymbolVector {
            symbols: vec![symbol; mu.n_components()],
        }
    }

    /// The generating vector `φ ≡ 1`.
    pub fn generating(mu: &SpectralMeasure) -> Self {
        Self::uniform(mu, Symbol::one())
    }

    pub fn zero(mu: &SpectralMeasure) -> Self {
        Self::uniform(mu, Symbol::zero())
    }

    /// Constant one on component `index`, zero elsewhere.
    pub fn indicator(mu: &SpectralMeasure, index: usize) -> Self {
        let mut symbols = vec![Symbol::zero(); mu.n_components()];
        symbols[index] = Symbol::one();
        SymbolVector { symbols }
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn symbol(&self, index: usize) -> &Symbol {
        &self.symbols[index]
    }

    pub fn symbols(&self) -> &[Symbol] {
        &self.symbols
    }

    pub fn is_zero(&self) -> bool {
        self.symbols.iter().all(Symbol::is_zero)
    }

    pub fn is_real(&self) -> bool {
        self.symbols.iter().all(Symbol::is_real)
    }

    /// Spectral projection `E_A(Δ)u`.
    pub fn restrict(&self, intervals: &[(f64, f64)]) -> Self {
        SymbolVector {
            symbols: self.symbols.iter().map(|s| s.restrict(intervals)).collect(),
        }
    }

    pub fn value(&self, index: usize, k: f64) -> Complex64 {
        self.symbols[index].eval(k)
    }
}

/// Complex density `f` against which the measure is integrated, per component.
pub trait Weight: Sync {
    fn value(&self, component: usize, k: f64) -> Complex64;

    /// Points inside a density piece where `f` may be discontinuous.
    fn breakpoints(&self, _component: usize) -> Vec<f64> {
        Vec::new()
    }

    /// True when `f` vanishes identically on the component.
    fn vanishes(&self, _component: usize) -> bool {
        false
    }
}

/// `f ≡ 1`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Unit;

impl Weight for Unit {
    fn value(&self, _component: usize, _k: f64) -> Complex64 {
        Complex64::new(1.0, 0.0)
    }
}

/// `f = u·v̄`, the density of the scalar spectral measure `μ_{u,v}`.
#[derive(Debug, Clone, Copy)]
pub struct Pairing<'a> {
    pub u: &'a SymbolVector,
    pub v: &'a SymbolVector,
}

impl<'a> Pairing<'a> {
    pub fn new(u: &'a SymbolVector, v: &'a SymbolVector) -> Self {
        Pairing { u, v }
    }
}

impl Weight for Pairing<'_> {
    fn value(&self, component: usize, k: f64) -> Complex64 {
        self.u.value(component, k) * self.v.value(component, k).conj()
    }

    fn breakpoints(&self, component: usize) -> Vec<f64> {
        let mut b = self.u.symbol(component).breakpoints();
        b.extend(self.v.symbol(component).breakpoints());
        b.sort_by(f64::total_cmp);
        b.dedup();
        b
    }

    fn vanishes(&self, component: usize) -> bool {
        self.u.symbol(component).is_zero() || self.v.symbol(component).is_zero()
    }
}

impl Weight for SymbolVector {
    fn value(&self, component: usize, k: f64) -> Complex64 {
        SymbolVector::value(self, component, k)
    }

    fn breakpoints(&self, component: usize) -> Vec<f64> {
        self.symbols[component].breakpoints()
    }

    fn vanishes(&self, component: usize) -> bool {
        self.symbols[component].is_zero()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(x: f64) -> Complex64 {
        Complex64::new(x, 0.0)
    }

    #[test]
    fn piecewise_linear_interpolates_and_vanishes_outside() {
        let s = Symbol::piecewise_linear(&[0.0, 1.0, 3.0], &[c(1.0), c(3.0), c(1.0)]);
        assert_eq!(s.eval(0.5), c(2.0));
        assert_eq!(s.eval(2.0), c(2.0));
        assert_eq!(s.eval(-0.1), c(0.0));
        assert_eq!(s.eval(3.5), c(0.0));
    }

    #[test]
    fn restriction_is_an_indicator_product() {
        let s = Symbol::monomial(2);
        let r = s.restrict(&[(-1.0, 0.0), (2.0, 3.0)]);
        assert_eq!(r.eval(-0.5), c(0.25));
        assert_eq!(r.eval(1.0), c(0.0));
        assert_eq!(r.eval(2.5), c(6.25));
        assert_eq!(r.breakpoints(), vec![-1.0, 0.0, 2.0, 3.0]);
    }

    #[test]
    fn zero_polynomial_is_zero_symbol() {
        assert!(Symbol::polynomial(vec![c(0.0), c(0.0)]).is_zero());
        assert!(Symbol::one().scale(c(0.0)).is_zero());
    }
}
