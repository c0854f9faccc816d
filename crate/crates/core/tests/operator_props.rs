mod common;

use common::*;
use proptest::prelude::*;
use qproc::operator::{
    born_probabilities, born_probabilities_pure, evolve_density, evolve_pure, seminorm, Povm,
    PureState,
};

fn labels(d: usize) -> Vec<String> {
    (0..d).map(|i| i.to_string()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn seminorm_is_subadditive_and_homogeneous(seed in any::<u64>(), dim in 1usize..=8, c in -5.0f64..5.0) {
        let mut r = rng(seed);
        let h = random_hermitian(&mut r, dim);
        let g = random_hermitian(&mut r, dim);
        let sum = h.add(&g).unwrap();
        prop_assert!(seminorm(&sum) <= seminorm(&h) + seminorm(&g) + 1e-10);
        prop_assert!((seminorm(&h.scale(c)) - c.abs() * seminorm(&h)).abs() < 1e-10);
        prop_assert!((seminorm(&h) - oracle_spread(&h)).abs() < 1e-10);
    }

    #[test]
    fn evolution_preserves_norm(seed in any::<u64>(), dim in 1usize..=16, t in -10.0f64..10.0) {
        let mut r = rng(seed);
        let psi = random_state(&mut r, dim);
        let h = random_hermitian(&mut r, dim).scale(t);
        let out = evolve_pure(&psi, &h).unwrap();
        prop_assert!((out.amplitudes().norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn born_rule_sums_to_one(seed in any::<u64>(), dim in 1usize..=8) {
        let mut r = rng(seed);
        let basis = random_basis(&mut r, dim);
        let povm = Povm::from_basis(&basis, labels(dim)).unwrap();
        let psi = random_state(&mut r, dim);
        let p = born_probabilities_pure(&psi, &povm).unwrap();
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        prop_assert!(p.iter().all(|x| *x >= 0.0));

        let rho = random_full_rank_density(&mut r, dim);
        let h = random_hermitian(&mut r, dim);
        let rho = evolve_density(&rho, &h).unwrap();
        let p = born_probabilities(&rho, &povm).unwrap();
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn pure_and_density_born_rules_agree(seed in any::<u64>(), dim in 1usize..=8) {
        let mut r = rng(seed);
        let povm = Povm::from_basis(&random_basis(&mut r, dim), labels(dim)).unwrap();
        let psi = random_state(&mut r, dim);
        let a = born_probabilities_pure(&psi, &povm).unwrap();
        let b = born_probabilities(&psi.density(), &povm).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }
}

#[test]
fn states_serialize_as_re_im_pairs() {
    let psi = PureState::basis(2, 1).unwrap();
    let s = serde_json::to_string(&psi).unwrap();
    assert_eq!(s, "[[0.0,0.0],[1.0,0.0]]");
    let back: PureState = serde_json::from_str(&s).unwrap();
    assert_eq!(back, psi);
}
