use std::f64::consts::PI;
use std::sync::OnceLock;

use annihilator_core::annihilator::{build_beta_thm3, build_gamma_thm2, AnnihilatorBundle};
use annihilator_core::detect::{
    dictionary, smirnov_strong_trace, vector_verdict, Calibration, Indication, StrongPoint, VectorTraces, Verdict,
    WeakPoint, DEFAULT_LADDER,
};
use annihilator_core::measure::{refine_sc, AcPiece, Atom, ScPiece, SpectralMeasure, SymbolVector, Unit};
use annihilator_core::operator::{Coupling, OperatorModel};
use num_complex::Complex64;
use proptest::prelude::*;

fn cfg(cases: u32) -> ProptestConfig {
    ProptestConfig {
        cases,
        failure_persistence: None,
        ..ProptestConfig::default()
    }
}

fn upper() -> impl Strategy<Value = Complex64> {
    (-3.0..3.0f64, -4.0..1.0f64).prop_map(|(x, e)| Complex64::new(x, 10f64.powf(e)))
}

/// Up to three atoms and a flat piece, all inside `[−2, 2]`.
fn measure() -> impl Strategy<Value = SpectralMeasure> {
    (
        prop::collection::vec((-2.0..2.0f64, 0.05..1.0f64), 0..=3),
        -2.0..1.0f64,
        0.2..1.0f64,
        0.05..1.0f64,
    )
        .prop_map(|(atoms, lo, len, h)| {
            let atoms = atoms
                .into_iter()
                .map(|(position, weight)| Atom { position, weight })
                .collect();
            SpectralMeasure::new(atoms, vec![AcPiece::flat(lo, lo + len, h)], vec![]).unwrap()
        })
}

fn rank_two(mu: SpectralMeasure, v: f64) -> OperatorModel {
    let phi = SymbolVector::generating(&mu);
    let kphi = SymbolVector::uniform(&mu, annihilator_core::measure::Symbol::monomial(1));
    OperatorModel::new(
        mu,
        vec![
            Coupling { vector: phi, strength: v },
            Coupling { vector: kphi, strength: v },
        ],
    )
    .unwrap()
}

fn spectral_norm(m: &nalgebra::DMatrix<Complex64>) -> f64 {
    m.clone().singular_values().max()
}

proptest! {
    #![proptest_config(cfg(48))]

    #[test]
    fn transform_is_herglotz_and_conjugate_symmetric(mu in measure(), lam in upper()) {
        let f = mu.borel_transform(lam).unwrap();
        prop_assert!(f.im > 0.0);
        let g = mu.borel_transform(lam.conj()).unwrap();
        prop_assert!((g - f.conj()).norm() <= 1e-12 * f.norm().max(1.0));
    }

    #[test]
    fn transform_decays_like_mass_over_tau(mu in measure(), tau in 10.0..1e4f64) {
        let lam = Complex64::new(0.0, tau);
        let err = (mu.borel_transform(lam).unwrap() * (-lam) - mu.total_mass()).norm();
        // |−iτ/(k − iτ) − 1| = |k|/|k − iτ| ≤ 2/τ on [−2, 2]
        prop_assert!(err <= 2.0 * mu.total_mass() / tau + 1e-12);
    }

    #[test]
    fn refinement_levels_are_consistent(d in 2u32..10, x in -1.0..2.0f64, e in -2.0..0.0f64) {
        let piece = ScPiece::cantor(0.0, 1.0, 1.0);
        let lam = Complex64::new(x, 10f64.powf(e));
        let sum = |d| -> Complex64 {
            refine_sc(&piece, d).unwrap().iter().map(|a| a.weight / (a.position - lam)).sum()
        };
        let scale = (3f64.powi(-(d as i32)) / lam.im).powi(2);
        prop_assert!((sum(d) - sum(d + 1)).norm() <= scale / lam.im);
    }

    #[test]
    fn characteristic_functions_are_contractive(mu in measure(), lam in upper(), v in 0.1..3.0f64) {
        let one = OperatorModel::rank_one(mu.clone(), v).unwrap();
        let two = rank_two(mu, v);
        for m in [&one, &two] {
            prop_assert!(spectral_norm(&m.characteristic_function(lam).unwrap()) <= 1.0 + 1e-10);
            prop_assert!(spectral_norm(&m.theta(lam).unwrap()) <= 1.0 + 1e-10);
            let dp = m.delta_plus(lam).unwrap();
            let dm = m.delta_minus(lam.conj()).unwrap();
            prop_assert_eq!(dm, dp.conj());
            let d = m.perturbation_determinant(lam).unwrap();
            let db = m.perturbation_determinant(lam.conj()).unwrap();
            prop_assert!((db - d.conj()).norm() <= 1e-12 * d.norm());
        }
    }

    #[test]
    fn rank_one_quantities_agree(mu in measure(), lam in upper(), v in 0.1..3.0f64) {
        let f = mu.weighted_borel_transform(&Unit, lam).unwrap();
        let m = OperatorModel::rank_one(mu, v).unwrap();
        let closed = 1.0 / (Complex64::new(1.0, 0.0) - Complex64::i() * v * f);
        let s = m.characteristic_function(lam).unwrap()[(0, 0)];
        for x in [m.gamma_a(lam).unwrap(), m.delta_plus(lam).unwrap(), (s + 1.0) / 2.0] {
            prop_assert!((x - closed).norm() <= 1e-12 * closed.norm().max(1.0));
        }
    }

    #[test]
    fn gamma_a_vanishes_at_atoms(mu in measure(), v in 0.2..3.0f64) {
        let m = OperatorModel::rank_one(mu.clone(), v).unwrap();
        for a in mu.atoms() {
            let ac = &mu.ac_pieces()[0];
            if a.position >= ac.lo - 1e-3 && a.position <= ac.hi + 1e-3 {
                continue;
            }
            let eps = 1e-7;
            let g = m.gamma_a(Complex64::new(a.position, eps)).unwrap().norm();
            let w: f64 = mu.atoms().iter().filter(|b| b.position == a.position).map(|b| b.weight).sum();
            prop_assert!(g <= 1.01 * eps / (v * w), "{g} at {}", a.position);
        }
    }

    #[test]
    fn beta_is_herglotz_and_bounded(lo in -3.0..0.0f64, len in 0.1..2.0f64, k in -4.0..4.0f64, e in -5.0..0.0f64) {
        let b = build_beta_thm3(&[(lo, lo + len)], 2).unwrap();
        let eps = 10f64.powf(e);
        prop_assert!(b.beta(Complex64::new(k, eps)).unwrap().im >= 0.0);
        let diff = b.beta_difference(k, eps).unwrap().norm();
        prop_assert!(diff <= 2.0 * PI * b.beta_bump().unwrap().max() + 1e-9);
    }
}

fn gap_bundle() -> &'static AnnihilatorBundle {
    static B: OnceLock<AnnihilatorBundle> = OnceLock::new();
    B.get_or_init(|| {
        let mu = SpectralMeasure::new(
            vec![Atom { position: -1.2, weight: 0.4 }],
            vec![AcPiece::flat(0.5, 2.0, 0.4)],
            vec![],
        )
        .unwrap();
        build_gamma_thm2(&OperatorModel::rank_one(mu, 1.0).unwrap(), 0.25).unwrap()
    })
}

proptest! {
    #![proptest_config(cfg(24))]

    #[test]
    fn gamma_star_is_the_reflection(lam in upper()) {
        let b = gap_bundle();
        let star = b.gamma_star(lam.conj()).unwrap();
        let reflected = b.gamma(lam).unwrap().conj();
        prop_assert!((star - reflected).norm() <= 1e-12 * star.norm().max(1.0));
    }

    #[test]
    fn atom_norms_grow_as_eps_shrinks(
        atoms in prop::collection::vec((-2.0..2.0f64, 0.05..1.0f64), 1..=3),
        v in 0.2..2.0f64,
    ) {
        let atoms: Vec<Atom> = atoms.into_iter().map(|(position, weight)| Atom { position, weight }).collect();
        let mu = SpectralMeasure::new(atoms, vec![], vec![]).unwrap();
        let m = OperatorModel::rank_one(mu.clone(), v).unwrap();
        let u = SymbolVector::indicator(&mu, 0);
        let pts = smirnov_strong_trace(&m, &u, &DEFAULT_LADDER).unwrap();
        for w in pts.windows(2) {
            prop_assert!(w[1].without >= w[0].without * (1.0 - 1e-9));
        }
    }

    #[test]
    fn dictionary_is_a_function_of_the_seed(mu in measure(), seed in any::<u64>()) {
        let region = [(-2.0, 2.0)];
        prop_assert_eq!(dictionary(&mu, &region, 2, seed), dictionary(&mu, &region, 2, seed));
        let other = dictionary(&mu, &region, 2, seed.wrapping_add(1));
        let rand = |d: &[annihilator_core::detect::DictionaryEntry]| {
            d.iter().filter(|e| e.id.starts_with("rand")).map(|e| e.vector.clone()).collect::<Vec<_>>()
        };
        prop_assert_ne!(rand(&dictionary(&mu, &region, 2, seed)), rand(&other));
    }

    #[test]
    fn strong_and_weak_disagreement_is_inconclusive(
        strong_rate in 0.0..0.7f64,
        delta_rate in 0.0..0.7f64,
        weak_growth in 0.0..1.0f64,
        annihilate in any::<bool>(),
    ) {
        let eps = DEFAULT_LADDER.to_vec();
        let strong = eps
            .iter()
            .map(|&e| {
                let without = e.powf(-strong_rate);
                let with = e.powf(-delta_rate);
                StrongPoint { eps: e, without, with, without_mirror: without, with_mirror: with }
            })
            .collect();
        let weak = eps
            .iter()
            .map(|&e| {
                let bare = 1.0 + weak_growth * (1.0 / e).ln();
                WeakPoint { eps: e, bare, weighted: 1.0, bare_mirror: bare, weighted_mirror: 1.0 }
            })
            .collect();
        let t_eps: Vec<Complex64> = eps
            .iter()
            .map(|&e| Complex64::new(if annihilate { e } else { 1.0 }, 0.0))
            .collect();
        let traces = VectorTraces {
            id: "u".into(),
            eps,
            strong: Some(strong),
            weak: Some(weak),
            annihilation: Some(("weak_thm3".into(), t_eps)),
        };
        let (verdict, evidence) = vector_verdict(&traces, &Calibration::default());
        let of = |name: &str| evidence.iter().find(|e| e.detector == name).unwrap().indication;
        let (s, w) = (of("smirnov_strong"), of("smirnov_weak"));
        if s != Indication::None && w != Indication::None && s != w {
            prop_assert_eq!(verdict, Verdict::Inconclusive);
        } else {
            prop_assert_ne!(verdict, Verdict::Inconclusive);
        }
    }
}
