mod common;

use common::*;
use num_complex::Complex64;
use proptest::prelude::*;
use qproc::fisher::{
    classical_fisher, qfi_from_sld, qfi_pure, sinusoid_model, sld, unitary_derivative,
    verify_chain, MeasurementModel,
};
use qproc::operator::{born_probabilities_pure, evolve_pure, Povm, PureState};
use qproc::{OneForm, QprocError};

fn bloch_basis(polar: f64, azimuth: f64) -> Vec<PureState> {
    let (c, s) = ((polar / 2.0).cos(), (polar / 2.0).sin());
    let phase = Complex64::from_polar(1.0, azimuth);
    let up = nalgebra::DVector::from_vec(vec![Complex64::new(c, 0.0), phase * s]);
    let down = nalgebra::DVector::from_vec(vec![-phase.conj() * s, Complex64::new(c, 0.0)]);
    vec![PureState::normalized(up).unwrap(), PureState::normalized(down).unwrap()]
}

#[test]
fn no_qubit_measurement_beats_the_quantum_fisher_information() {
    let mut r = rng(11);
    let grid = 100;
    for _ in 0..3 {
        let psi = random_state(&mut r, 2);
        let y = random_hermitian(&mut r, 2);
        let q = qfi_pure(&psi, &y).unwrap();
        let mut best = 0.0f64;
        for i in 0..grid {
            for k in 0..grid {
                let polar = std::f64::consts::PI * (i as f64 + 0.5) / grid as f64;
                let azimuth = 2.0 * std::f64::consts::PI * k as f64 / grid as f64;
                let basis = bloch_basis(polar, azimuth);
                let povm = Povm::from_basis(&basis, vec!["+".into(), "-".into()]).unwrap();
                let (psi_c, y_c) = (psi.clone(), y.clone());
                let model = MeasurementModel::new(Box::new(move |t: &[f64]| {
                    born_probabilities_pure(&evolve_pure(&psi_c, &y_c.scale(t[0]))?, &povm)
                }));
                let f = classical_fisher(&model, 1).unwrap().entries()[(0, 0)];
                assert!(f <= q + 1e-6, "F = {f} exceeds Q = {q}");
                best = best.max(f);
            }
        }
        assert!(best > 0.99 * q, "grid maximum {best} far from Q = {q}");
    }
}

#[test]
fn chain_rejects_inverted_links() {
    assert!(verify_chain(0.5, 0.9, 1.0).is_ok());
    assert!(matches!(verify_chain(1.0, 0.5, 1.0), Err(QprocError::ChainViolation { .. })));
    assert!(matches!(verify_chain(0.1, 2.0, 1.0), Err(QprocError::ChainViolation { .. })));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn sld_reproduces_the_derivative(seed in any::<u64>(), dim in 1usize..=8) {
        let mut r = rng(seed);
        let rho = random_full_rank_density(&mut r, dim);
        let drho = random_traceless(&mut r, dim);
        let l = sld(&rho, &drho).unwrap();
        prop_assert!(l.residual < 1e-10);
        prop_assert!(qfi_from_sld(&rho, &l.operator).unwrap() >= 0.0);
    }

    #[test]
    fn pure_state_qfi_is_four_times_variance(seed in any::<u64>(), dim in 2usize..=8) {
        let mut r = rng(seed);
        let psi = random_state(&mut r, dim);
        let y = random_hermitian(&mut r, dim);
        let rho = psi.density();
        let l = sld(&rho, &unitary_derivative(&rho, &y).unwrap()).unwrap();
        let via_sld = qfi_from_sld(&rho, &l.operator).unwrap();
        prop_assert!((via_sld - oracle_variance_qfi(&psi, &y)).abs() < 1e-9);
        prop_assert!((qfi_pure(&psi, &y).unwrap() - via_sld).abs() < 1e-9);
    }

    #[test]
    fn central_difference_matches_analytic_sinusoid(
        forms in prop::collection::vec((prop::collection::vec(-1.0f64..1.0, 3), 0.05f64..1.0), 1..4),
        theta in prop::collection::vec(-0.3f64..0.3, 3),
    ) {
        let total: f64 = forms.iter().map(|f| f.1).sum();
        let readouts: Vec<(OneForm, f64)> = forms
            .iter()
            .map(|(z, m)| (OneForm::new(z.clone()).unwrap(), m / total))
            .collect();
        let analytic = classical_fisher(&sinusoid_model(readouts.clone()).at(theta.clone()), 3).unwrap();
        let numeric = classical_fisher(&sinusoid_model(readouts).with_step(1e-5).at(theta), 3).unwrap();
        prop_assert!((analytic.entries() - numeric.entries()).amax() < 1e-7);
    }
}
