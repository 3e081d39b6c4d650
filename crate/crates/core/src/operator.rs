//! The self-adjoint model `A` (multiplication by `k` on `L²(μ)`) with a finite-rank
//! nonnegative coupling `V = Σ vⱼ φⱼ⟨·, φⱼ⟩`, and the scalar and matrix functions
//! attached to the dissipative operator `A + iV`.
//!
//! Writing `V = BB*` with `B eⱼ = √vⱼ φⱼ`, every quantity reduces to the `r × r`
//! Herglotz matrix `N(λ) = B*(A − λ)⁻¹B`:
//! `S = (I + iN)(I − iN)⁻¹`, `Θ = (I + S)/2 = (I − iN)⁻¹`, `D = det(I + N)`.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::measure::{Pairing, SpectralMeasure, SymbolVector};

const I: Complex64 = Complex64::new(0.0, 1.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

#[derive(Debug, Clone, PartialEq)]
pub struct Coupling {
    pub vector: SymbolVector,
    pub strength: f64,
}

#[derive(Debug, Clone)]
pub struct OperatorModel {
    mu: SpectralMeasure,
    couplings: Vec<Coupling>,
}

impl OperatorModel {
    /// Rank-one coupling `v·φ⟨·, φ⟩` with the generating vector `φ ≡ 1`.
    pub fn rank_one(mu: SpectralMeasure, strength: f64) -> Result<Self> {
        let phi = SymbolVector::generating(&mu);
        Self::new(mu, vec![Coupling { vector: phi, strength }])
    }

    pub fn new(mu: SpectralMeasure, couplings: Vec<Coupling>) -> Result<Self> {
        if couplings.is_empty() {
            return Err(Error::arg("coupling needs rank at least one"));
        }
        for (j, c) in couplings.iter().enumerate() {
            if !(c.strength > 0.0) || !c.strength.is_finite() {
                return Err(Error::arg(format!("coupling {j} needs a positive finite strength")));
            }
            if c.vector.len() != mu.n_components() {
                return Err(Error::arg(format!(
                    "coupling vector {j} has {} components, the measure has {}",
                    c.vector.len(),
                    mu.n_components()
                )));
            }
        }
        let model = OperatorModel { mu, couplings };
        let gram = model.gram()?;
        let eig = gram.symmetric_eigenvalues();
        let max = eig.iter().cloned().fold(0.0, f64::max);
        let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
        if !(max > 0.0) || min <= 1e-10 * max {
            return Err(Error::arg("coupling vectors are linearly dependent in L²(μ)"));
        }
        Ok(model)
    }

    pub fn measure(&self) -> &SpectralMeasure {
        &self.mu
    }

    pub fn couplings(&self) -> &[Coupling] {
        &self.couplings
    }

    pub fn rank(&self) -> usize {
        self.couplings.len()
    }

    /// Gram matrix `⟨φⱼ, φᵢ⟩` of the coupling vectors.
    pub fn gram(&self) -> Result<DMatrix<Complex64>> {
        let r = self.rank();
        let mut g = DMatrix::zeros(r, r);
        for i in 0..r {
            for j in 0..r {
                g[(i, j)] = self
                    .mu
                    .inner(&self.couplings[j].vector, &self.couplings[i].vector)?;
            }
        }
        Ok(g)
    }

    /// `⟨(A − λ)⁻¹u, φⱼ⟩` for every coupling vector.
    pub fn resolvent_pairings(&self, u: &SymbolVector, lambda: Complex64) -> Result<Vec<Complex64>> {
        self.couplings
            .iter()
            .map(|c| {
                self.mu
                    .weighted_borel_transform(&Pairing::new(u, &c.vector), lambda)
            })
            .collect()
    }

    /// `N(λ)ᵢⱼ = √(vᵢvⱼ)·⟨(A − λ)⁻¹φⱼ, φᵢ⟩`; Herglotz in the upper half-plane.
    pub fn coupling_matrix(&self, lambda: Complex64) -> Result<DMatrix<Complex64>> {
        let r = self.rank();
        let mut n = DMatrix::zeros(r, r);
        for i in 0..r {
            for j in 0..r {
                let ci = &self.couplings[i];
                let cj = &self.couplings[j];
                let f = self
                    .mu
                    .weighted_borel_transform(&Pairing::new(&cj.vector, &ci.vector), lambda)?;
                n[(i, j)] = f * (ci.strength * cj.strength).sqrt();
            }
        }
        Ok(n)
    }

    /// Rank-one `vF(λ)` with `F = ⟨(A − λ)⁻¹φ, φ⟩`.
    fn scalar_coupling(&self, lambda: Complex64) -> Result<Complex64> {
        debug_assert_eq!(self.rank(), 1);
        Ok(self.coupling_matrix(lambda)?[(0, 0)])
    }

    /// `D(λ) = det(I + N(λ))`.
    pub fn perturbation_determinant(&self, lambda: Complex64) -> Result<Complex64> {
        nonreal(lambda)?;
        let n = self.coupling_matrix(lambda)?;
        Ok((DMatrix::identity(n.nrows(), n.ncols()) + n).determinant())
    }

    /// `S(λ) = (I + iN)(I − iN)⁻¹`, a contraction for `Im λ > 0`.
    pub fn characteristic_function(&self, lambda: Complex64) -> Result<DMatrix<Complex64>> {
        upper(lambda)?;
        let n = self.coupling_matrix(lambda)?;
        let id = DMatrix::<Complex64>::identity(n.nrows(), n.ncols());
        let inv = invert(&id - &n * I)?;
        Ok((id + n * I) * inv)
    }

    /// `Θ_A(λ) = I + (S(λ) − I)/2`, computed from `S`.
    pub fn theta(&self, lambda: Complex64) -> Result<DMatrix<Complex64>> {
        let s = self.characteristic_function(lambda)?;
        let id = DMatrix::<Complex64>::identity(s.nrows(), s.ncols());
        Ok((id + s) * Complex64::new(0.5, 0.0))
    }

    /// `Θ′_A(λ) = Θ_A(λ̄)*` for `Im λ < 0`.
    pub fn theta_prime(&self, lambda: Complex64) -> Result<DMatrix<Complex64>> {
        if !(lambda.im < 0.0) {
            return Err(Error::arg("theta_prime is defined in the lower half-plane"));
        }
        Ok(self.theta(lambda.conj())?.adjoint())
    }

    /// `(I − iN(λ))⁻¹`, the closed form of `Θ_A`.
    fn theta_direct(&self, lambda: Complex64) -> Result<DMatrix<Complex64>> {
        upper(lambda)?;
        let n = self.coupling_matrix(lambda)?;
        let id = DMatrix::<Complex64>::identity(n.nrows(), n.ncols());
        invert(id - n * I)
    }

    /// `δ₊(λ) = det Θ_A(λ)`, the bounded outer determinant in the upper half-plane.
    pub fn delta_plus(&self, lambda: Complex64) -> Result<Complex64> {
        Ok(self.theta_direct(lambda)?.determinant())
    }

    /// `δ₋(λ) = conj δ₊(λ̄)` for `Im λ < 0`.
    pub fn delta_minus(&self, lambda: Complex64) -> Result<Complex64> {
        if !(lambda.im < 0.0) {
            return Err(Error::arg("delta_minus is defined in the lower half-plane"));
        }
        Ok(self.delta_plus(lambda.conj())?.conj())
    }

    /// The perturbation-determinant outer function `γ_A`.
    ///
    /// Rank one uses `1/(1 − i(D − 1))`; higher rank uses `det Θ_A`, which agrees with
    /// it in rank one and stays a zero-free contraction in general.
    pub fn gamma_a(&self, lambda: Complex64) -> Result<Complex64> {
        upper(lambda)?;
        if self.rank() == 1 {
            let d = ONE + self.scalar_coupling(lambda)?;
            let denom = ONE - I * (d - ONE);
            if denom.norm() < 1e-14 {
                return Err(Error::Singular(format!("1 − i(D − 1) vanishes at {lambda}")));
            }
            Ok(ONE / denom)
        } else {
            self.delta_plus(lambda)
        }
    }

    /// `log γ_A(λ)`, continuous in the upper half-plane: `−Σ Log` of the eigenvalues of
    /// `I − iN`, all of which have real part at least one.
    pub fn log_gamma_a(&self, lambda: Complex64) -> Result<Complex64> {
        upper(lambda)?;
        let n = self.coupling_matrix(lambda)?;
        Ok(-log_det_accretive(n))
    }

    /// Numerical rank of the Gram matrix of `(A − λ)⁻¹φ` over the sample points.
    /// Equals the number of samples when the generating vector is cyclic enough.
    pub fn resolvent_rank(&self, samples: &[Complex64]) -> Result<usize> {
        let phi = &self.couplings[0].vector;
        let n = samples.len();
        let mut g = DMatrix::<Complex64>::zeros(n, n);
        let scale = samples
            .iter()
            .map(|z| z.im.abs())
            .fold(f64::INFINITY, f64::min);
        for a in 0..n {
            for b in 0..n {
                let (la, lb) = (samples[a], samples[b]);
                g[(a, b)] = self.mu.integrate(
                    &Pairing::new(phi, phi),
                    |k| ONE / ((k - la) * (k - lb.conj())),
                    scale,
                    &[],
                )?;
            }
        }
        let eig = g.symmetric_eigenvalues();
        let max = eig.iter().cloned().fold(0.0, f64::max);
        Ok(eig.iter().filter(|&&e| e > 1e-10 * max).count())
    }
}

/// `Σ Log` of the eigenvalues of `I − iN` for Herglotz `N`.
fn log_det_accretive(n: DMatrix<Complex64>) -> Complex64 {
    let r = n.nrows();
    let m = DMatrix::<Complex64>::identity(r, r) - n * I;
    match r {
        1 => m[(0, 0)].ln(),
        2 => {
            let tr = m[(0, 0)] + m[(1, 1)];
            let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
            let disc = (tr * tr - det * 4.0).sqrt();
            let (a, b) = ((tr + disc) * 0.5, (tr - disc) * 0.5);
            // the smaller root from the product avoids cancellation
            let (big, small) = if a.norm() >= b.norm() { (a, b) } else { (b, a) };
            let small = if big.norm() > 0.0 { det / big } else { small };
            big.ln() + small.ln()
        }
        _ => m
            .schur()
            .eigenvalues()
            .expect("complex Schur form is triangular")
            .iter()
            .map(|z| z.ln())
            .sum(),
    }
}

fn invert(m: DMatrix<Complex64>) -> Result<DMatrix<Complex64>> {
    let det = m.determinant();
    if det.norm() < 1e-14 {
        return Err(Error::Singular("I − iN(λ) is numerically singular".into()));
    }
    m.try_inverse()
        .ok_or_else(|| Error::Singular("I − iN(λ) is not invertible".into()))
}

fn nonreal(lambda: Complex64) -> Result<()> {
    if lambda.im == 0.0 {
        Err(Error::Boundary(lambda.re))
    } else {
        Ok(())
    }
}

fn upper(lambda: Complex64) -> Result<()> {
    if lambda.im > 0.0 {
        Ok(())
    } else if lambda.im == 0.0 {
        Err(Error::Boundary(lambda.re))
    } else {
        Err(Error::arg("expected a point of the open upper half-plane"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::{AcPiece, Atom, Symbol};

    fn atom(at: f64) -> OperatorModel {
        let mu = SpectralMeasure::new(vec![Atom { position: at, weight: 1.0 }], vec![], vec![]).unwrap();
        OperatorModel::rank_one(mu, 1.0).unwrap()
    }

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn single_atom_closed_forms() {
        let m = atom(0.0);
        assert!((m.perturbation_determinant(I).unwrap() - c(1.0, 1.0)).norm() < 1e-15);
        assert!(m.characteristic_function(I).unwrap()[(0, 0)].norm() < 1e-15);
        assert!((m.theta(I).unwrap()[(0, 0)] - 0.5).norm() < 1e-15);
        assert!((m.delta_plus(I).unwrap() - 0.5).norm() < 1e-15);
        for lam in [c(0.3, 0.1), c(-2.0, 1.0), c(5.0, 1e-3)] {
            let expect = lam / (lam + I);
            assert!((m.gamma_a(lam).unwrap() - expect).norm() < 1e-14);
        }
        let shifted = atom(-1.0);
        let eps = 1e-3;
        let g = shifted.gamma_a(c(-1.0, eps)).unwrap();
        assert!((g - eps / (eps + 1.0)).norm() < 1e-15);
    }

    #[test]
    fn flat_density_determinant() {
        let mu = SpectralMeasure::new(vec![], vec![AcPiece::flat(-1.0, 1.0, 1.0)], vec![]).unwrap();
        let m = OperatorModel::rank_one(mu, 1.0).unwrap();
        let d = m.perturbation_determinant(I).unwrap();
        assert!((d - c(1.0, std::f64::consts::FRAC_PI_2)).norm() < 1e-12);
    }

    #[test]
    fn characteristic_function_matches_direct_resolvent_solve() {
        // (A − iV − λ)x = φ on the one-atom model is a scalar equation.
        let m = atom(0.0);
        let lam = c(0.3, 0.2);
        let x = ONE / (c(0.0, 0.0) - I - lam);
        let s_direct = ONE + I * 2.0 * x;
        let s = m.characteristic_function(lam).unwrap()[(0, 0)];
        assert!((s - s_direct).norm() < 1e-14);
    }

    #[test]
    fn rank_two_logarithm_matches_determinant() {
        let mu = SpectralMeasure::new(
            vec![Atom { position: -1.0, weight: 0.5 }, Atom { position: 1.0, weight: 0.5 }],
            vec![AcPiece::flat(2.0, 3.0, 1.0)],
            vec![],
        )
        .unwrap();
        let phi = SymbolVector::generating(&mu);
        let kphi = SymbolVector::uniform(&mu, Symbol::monomial(1));
        let m = OperatorModel::new(
            mu,
            vec![
                Coupling { vector: phi, strength: 1.0 },
                Coupling { vector: kphi, strength: 0.5 },
            ],
        )
        .unwrap();
        for lam in [c(0.0, 1.0), c(-1.0, 1e-3), c(2.5, 0.01)] {
            let g = m.gamma_a(lam).unwrap();
            let lg = m.log_gamma_a(lam).unwrap();
            assert!((lg.exp() - g).norm() < 1e-12 * g.norm().max(1e-300));
            assert!(g.norm() <= 1.0 + 1e-12);
            let th = m.theta(lam).unwrap();
            assert!((th.determinant() - g).norm() < 1e-12);
        }
        let n = m.coupling_matrix(c(0.1, 0.3)).unwrap();
        let im = (&n - n.adjoint()) * Complex64::new(0.0, -0.5);
        assert!(im.symmetric_eigenvalues().iter().all(|&e| e >= -1e-14));
    }

    #[test]
    fn dependent_couplings_are_rejected() {
        let mu = SpectralMeasure::new(vec![Atom { position: 0.0, weight: 1.0 }], vec![], vec![]).unwrap();
        let phi = SymbolVector::generating(&mu);
        let r = OperatorModel::new(
            mu,
            vec![
                Coupling { vector: phi.clone(), strength: 1.0 },
                Coupling { vector: phi, strength: 2.0 },
            ],
        );
        assert!(r.is_err());
    }

    #[test]
    fn half_plane_checks() {
        let m = atom(0.0);
        assert_eq!(m.gamma_a(c(1.0, 0.0)), Err(Error::Boundary(1.0)));
        assert!(m.characteristic_function(c(0.0, -1.0)).is_err());
        assert!(m.theta_prime(c(0.0, 1.0)).is_err());
        let tp = m.theta_prime(c(0.2, -0.5)).unwrap()[(0, 0)];
        assert!((tp - m.theta(c(0.2, 0.5)).unwrap()[(0, 0)].conj()).norm() == 0.0);
    }

    #[test]
    fn atoms_are_cyclic() {
        let mu = SpectralMeasure::new(
            (0..4).map(|j| Atom { position: j as f64, weight: 0.25 }).collect(),
            vec![],
            vec![],
        )
        .unwrap();
        let m = OperatorModel::rank_one(mu, 1.0).unwrap();
        let samples: Vec<_> = (0..4).map(|j| c(j as f64 * 0.7 - 1.0, 0.5)).collect();
        assert_eq!(m.resolvent_rank(&samples).unwrap(), 4);
    }
}
