mod common;

use common::*;
use proptest::prelude::*;
use qproc::geometry::pair;
use qproc::norm::{b_min_solve, dual_norm, process_norm, process_norm_by_generator};
use qproc::{OneForm, ProcessFamily, TangentVector};

fn family_strategy() -> impl Strategy<Value = ProcessFamily> {
    prop_oneof![
        (1usize..=3).prop_map(|n| ProcessFamily::pauli_z(n).unwrap()),
        Just(ProcessFamily::Bloch),
        (0.0f64..1.0).prop_map(|e| ProcessFamily::epsilon_pair(e).unwrap()),
        (any::<u64>(), 1usize..=3, 1usize..=3).prop_map(|(seed, qubits, n)| {
            let mut r = rng(seed);
            let dim = 1 << qubits;
            ProcessFamily::custom((0..n).map(|_| random_hermitian(&mut r, dim)).collect()).unwrap()
        }),
    ]
}

fn norm(family: &ProcessFamily, v: &[f64]) -> f64 {
    process_norm(family, &TangentVector::new(v.to_vec()).unwrap()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn norm_axioms(family in family_strategy(), seed in any::<u64>(), lambda in -4.0f64..4.0) {
        let n = family.n();
        let mut r = rng(seed);
        let a = random_vector(&mut r, n, 2.0);
        let b = random_vector(&mut r, n, 2.0);
        let sum: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
        prop_assert!(norm(&family, &sum) <= norm(&family, &a) + norm(&family, &b) + 1e-10);
        let scaled: Vec<f64> = a.iter().map(|x| lambda * x).collect();
        prop_assert!((norm(&family, &scaled) - lambda.abs() * norm(&family, &a)).abs() < 1e-10);
        prop_assert_eq!(norm(&family, &vec![0.0; n]), 0.0);
        if a.iter().any(|x| x.abs() > 1e-3) {
            prop_assert!(norm(&family, &a) > 1e-10);
        }
    }
}

#[test]
fn pauli_z_closed_form_on_every_sign_pattern() {
    let mut r = rng(21);
    for n in 1..=6 {
        let family = ProcessFamily::pauli_z(n).unwrap();
        let mags: Vec<f64> = random_vector(&mut r, n, 1.0).iter().map(|x| x.abs() + 0.1).collect();
        for pattern in 0..(1usize << n) {
            let b: Vec<f64> = mags
                .iter()
                .enumerate()
                .map(|(j, m)| if pattern >> j & 1 == 1 { -m } else { *m })
                .collect();
            let by_gen = process_norm_by_generator(&family, &TangentVector::new(b.clone()).unwrap()).unwrap();
            assert!((by_gen - mags.iter().sum::<f64>()).abs() < 1e-12);
        }
    }
}

#[test]
fn epsilon_pair_closed_form() {
    let mut r = rng(22);
    for eps in [0.0, 0.1, 0.5, 1.0] {
        let family = ProcessFamily::epsilon_pair(eps).unwrap();
        for _ in 0..200 {
            let b = random_vector(&mut r, 2, 3.0);
            let tv = TangentVector::new(b.clone()).unwrap();
            let by_gen = process_norm_by_generator(&family, &tv).unwrap();
            let closed = b[0].abs() + (b[1] * b[1] + 2.0 * eps * b[0] * b[0]).sqrt();
            assert!((by_gen - closed).abs() < 1e-12);
            assert!((process_norm(&family, &tv).unwrap() - closed).abs() < 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn dual_norm_is_the_supremum_over_the_unit_ball(
        family in family_strategy(),
        seed in any::<u64>(),
    ) {
        let n = family.n();
        let mut r = rng(seed);
        let q = random_vector(&mut r, n, 2.0);
        prop_assume!(q.iter().map(|x| x * x).sum::<f64>() > 1e-2);
        let dq = OneForm::new(q).unwrap();
        let bm = b_min_solve(&family, &dq).unwrap();
        let dual = dual_norm(&family, &dq).unwrap();
        prop_assert!((dual * bm.norm - 1.0).abs() < 1e-10);
        prop_assert!((pair(&dq, &bm.b_min).unwrap() - 1.0).abs() < 1e-10);
        for _ in 0..200 {
            let v = random_vector(&mut r, n, 1.0);
            let len = norm(&family, &v);
            if len == 0.0 {
                continue;
            }
            let scale = r_unit(&mut r) / len;
            let b: Vec<f64> = v.iter().map(|x| x * scale).collect();
            prop_assert!(pair(&dq, &TangentVector::new(b).unwrap()).unwrap() <= dual + 1e-8);
        }
    }
}

fn r_unit(r: &mut rand_chacha::ChaCha8Rng) -> f64 {
    use rand::Rng;
    r.random_range(0.0..=1.0)
}

/// Minimum of the norm on `q·b = 1` from a grid of 10⁶ points, refined by ternary search
/// around the best grid point.
fn grid_minimum(eps: f64, q: [f64; 2]) -> f64 {
    let qq = q[0] * q[0] + q[1] * q[1];
    let origin = [q[0] / qq, q[1] / qq];
    let dir = [-q[1] / qq.sqrt(), q[0] / qq.sqrt()];
    let f = |s: f64| {
        let b = [origin[0] + s * dir[0], origin[1] + s * dir[1]];
        b[0].abs() + (b[1] * b[1] + 2.0 * eps * b[0] * b[0]).sqrt()
    };
    let half = 2.0 * (origin[0].abs() + origin[1].abs()) + 1.0;
    let points = 1_000_000;
    let step = 2.0 * half / points as f64;
    let (mut best_s, mut best) = (0.0, f64::INFINITY);
    for i in 0..=points {
        let s = -half + i as f64 * step;
        let v = f(s);
        if v < best {
            best = v;
            best_s = s;
        }
    }
    let (mut lo, mut hi) = (best_s - step, best_s + step);
    for _ in 0..200 {
        let m1 = lo + (hi - lo) / 3.0;
        let m2 = hi - (hi - lo) / 3.0;
        if f(m1) < f(m2) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    best.min(f(0.5 * (lo + hi)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn epsilon_pair_minimizer_matches_grid_oracle(
        eps in 0.0f64..1.5,
        q1 in -2.0f64..2.0,
        q2 in -2.0f64..2.0,
    ) {
        prop_assume!(q1 * q1 + q2 * q2 > 0.05);
        let family = ProcessFamily::epsilon_pair(eps).unwrap();
        let bm = b_min_solve(&family, &OneForm::new(vec![q1, q2]).unwrap()).unwrap();
        let oracle = grid_minimum(eps, [q1, q2]);
        prop_assert!((bm.norm - oracle).abs() < 1e-6, "numerical {} vs grid {}", bm.norm, oracle);
    }
}

#[test]
fn epsilon_pair_cusp_is_a_corner() {
    for eps in [0.1, 0.5, 1.0] {
        let family = ProcessFamily::epsilon_pair(eps).unwrap();
        let bm = b_min_solve(&family, &OneForm::new(vec![0.3, 1.0]).unwrap()).unwrap();
        assert!(bm.at_corner);
        assert_eq!(bm.b_min.components()[0], 0.0);
        let smooth = b_min_solve(&family, &OneForm::new(vec![1.0, 0.3]).unwrap()).unwrap();
        assert!(!smooth.at_corner, "eps = {eps}: {:?}", smooth.b_min);
    }
}
