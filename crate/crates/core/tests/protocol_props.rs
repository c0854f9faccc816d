mod common;

use common::*;
use proptest::prelude::*;
use qproc::fisher::sinusoid_model;
use qproc::geometry::{fisher_dual, fisher_form};
use qproc::norm::{b_min_solve, process_norm};
use qproc::protocol::{
    bloch_protocol, branch_probabilities, corner_strategy, cusp_protocol, extremal_cat_protocol,
    hyperedge_protocol, hyperface_protocol, kissing_residual, mixture, optimal_protocol,
    pauli_z_corner_protocol, protocol_fisher, protocol_qfi, readout_fisher, zoo_factorized,
    zoo_protocol_mixed, zoo_vertex,
};
use qproc::{
    DerivativeMode, OneForm, ProcessFamily, Protocol, ProtocolKind, SignString, TangentVector,
    ZooAmplitudes,
};

const FD: DerivativeMode = DerivativeMode::CentralDifference { h: 1e-5 };

/// Analytic Fisher against the readout closed form, and central differences against both.
fn check_fisher(p: &Protocol, family: &ProcessFamily) -> Result<(), TestCaseError> {
    let closed = readout_fisher(p);
    let analytic = protocol_fisher(p, family, DerivativeMode::Analytic).unwrap();
    let numeric = protocol_fisher(p, family, FD).unwrap();
    let a = (analytic.entries() - closed.entries()).amax();
    let n = (numeric.entries() - closed.entries()).amax();
    prop_assert!(a < 1e-8, "{:?}: analytic off by {a:e}", p.kind);
    prop_assert!(n < 1e-6, "{:?}: finite differences off by {n:e}", p.kind);
    Ok(())
}

fn string(n: usize, zeros: bool) -> impl Strategy<Value = Vec<i8>> {
    let values: Vec<i8> = if zeros { vec![-1, 0, 1] } else { vec![-1, 1] };
    prop::collection::vec(prop::sample::select(values), n)
        .prop_filter("nonzero", |s| s.iter().any(|x| *x != 0))
}

fn canonical_form() -> impl Strategy<Value = OneForm> {
    (1usize..=6, any::<u64>()).prop_map(|(n, seed)| random_canonical_form(&mut rng(seed), n))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(60))]

    #[test]
    fn hyperface_fisher_matches_closed_form(z in (1usize..=4).prop_flat_map(|n| string(n, false))) {
        let family = ProcessFamily::pauli_z(z.len()).unwrap();
        let p = hyperface_protocol(&SignString::new(z.clone()).unwrap()).unwrap();
        check_fisher(&p, &family)?;
        let zf: Vec<f64> = z.iter().map(|&s| f64::from(s)).collect();
        prop_assert!((readout_fisher(&p).entries() - outer(&zf)).amax() < 1e-15);
    }

    #[test]
    fn hyperedge_zero_slots_are_insensitive(w in (1usize..=4).prop_flat_map(|n| string(n, true))) {
        let family = ProcessFamily::pauli_z(w.len()).unwrap();
        let p = hyperedge_protocol(&SignString::new(w.clone()).unwrap()).unwrap();
        check_fisher(&p, &family)?;
        let f = protocol_fisher(&p, &family, DerivativeMode::Analytic).unwrap();
        for (j, wj) in w.iter().enumerate() {
            if *wj == 0 {
                for k in 0..w.len() {
                    prop_assert_eq!(f.entries()[(j, k)], 0.0);
                    prop_assert_eq!(f.entries()[(k, j)], 0.0);
                }
            }
        }
    }

    #[test]
    fn corner_mixture_saturates(dq in canonical_form()) {
        let family = ProcessFamily::pauli_z(dq.len()).unwrap();
        let p = corner_strategy(&dq).unwrap();
        check_fisher(&p, &family)?;
        let f = protocol_fisher(&p, &family, DerivativeMode::Analytic).unwrap();
        let corner = TangentVector::axis(dq.len(), 0);
        prop_assert!(kissing_residual(&f, &corner, &family, &dq).unwrap() < 1e-9);
        prop_assert!((fisher_dual(&f, &dq).unwrap() - 1.0).abs() < 1e-8);
        let weights = p.weights();
        prop_assert!((weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(weights.iter().all(|w| *w > 1e-15));
    }

    #[test]
    fn general_corner_protocol_reaches_the_dual_norm(q in prop::collection::vec(-2.0f64..2.0, 1..=5)) {
        let q: Vec<f64> = q.into_iter().map(|x| if x.abs() < 0.05 { 0.0 } else { x }).collect();
        prop_assume!(q.iter().any(|x| *x != 0.0));
        let family = ProcessFamily::pauli_z(q.len()).unwrap();
        let dq = OneForm::new(q.clone()).unwrap();
        let p = pauli_z_corner_protocol(&dq).unwrap();
        let f = protocol_fisher(&p, &family, DerivativeMode::Analytic).unwrap();
        let bm = b_min_solve(&family, &dq).unwrap();
        let max = q.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        prop_assert!((bm.dual_norm - max).abs() < 1e-12);
        prop_assert!(kissing_residual(&f, &bm.b_min, &family, &dq).unwrap() < 1e-9);
        prop_assert!((fisher_dual(&f, &dq).unwrap() / (max * max) - 1.0).abs() < 1e-8);
    }

    #[test]
    fn zoo_fisher_formula(a in prop::collection::vec(-0.99f64..0.99, 1..=4)) {
        let n = a.len();
        let family = ProcessFamily::pauli_z(n).unwrap();
        let amps = ZooAmplitudes::new(a.clone()).unwrap();
        let p = zoo_factorized(&amps).unwrap();
        check_fisher(&p, &family)?;
        let f = protocol_fisher(&p, &family, DerivativeMode::Analytic).unwrap();
        let want = nalgebra::DMatrix::from_fn(n, n, |j, k| {
            let delta = if j == k { 1.0 - a[j] * a[j] } else { 0.0 };
            delta + a[j] * a[k]
        });
        prop_assert!((f.entries() - &want).amax() < 1e-8);
        prop_assert!((amps.fisher().entries() - &want).amax() < 1e-12);
        let mixed = zoo_protocol_mixed(&amps.distribution(), n).unwrap();
        let fm = protocol_fisher(&mixed, &family, DerivativeMode::Analytic).unwrap();
        prop_assert!((fm.entries() - f.entries()).amax() < 1e-10);
    }

    #[test]
    fn zoo_vertex_saturates(dq in canonical_form()) {
        prop_assume!(dq.len() <= 4);
        let family = ProcessFamily::pauli_z(dq.len()).unwrap();
        let p = zoo_vertex(&dq).unwrap();
        check_fisher(&p, &family)?;
        let f = protocol_fisher(&p, &family, DerivativeMode::Analytic).unwrap();
        let corner = TangentVector::axis(dq.len(), 0);
        prop_assert!(kissing_residual(&f, &corner, &family, &dq).unwrap() < 1e-9);
    }

    #[test]
    fn mixture_fisher_is_linear(
        z in (2usize..=3).prop_flat_map(|n| (string(n, false), string(n, true))),
        w in 0.0f64..1.0,
    ) {
        let family = ProcessFamily::pauli_z(z.0.len()).unwrap();
        let p1 = hyperface_protocol(&SignString::new(z.0.clone()).unwrap()).unwrap();
        let p2 = hyperedge_protocol(&SignString::new(z.1.clone()).unwrap()).unwrap();
        let mix = mixture(&[w, 1.0 - w], &[p1.clone(), p2.clone()]).unwrap();
        let f = |p: &Protocol| protocol_fisher(p, &family, DerivativeMode::Analytic).unwrap().entries().clone();
        let want = f(&p1) * w + f(&p2) * (1.0 - w);
        prop_assert!((f(&mix) - want).amax() < 1e-10);
    }

    #[test]
    fn cusp_protocol_kisses(eps in 0.0f64..1.5, q1 in -1.0f64..1.0, q2 in 0.2f64..2.0, flip in any::<bool>()) {
        prop_assume!(q1.abs() <= q2);
        let q2 = if flip { -q2 } else { q2 };
        let family = ProcessFamily::epsilon_pair(eps).unwrap();
        let dq = OneForm::new(vec![q1, q2]).unwrap();
        let p = cusp_protocol(&dq).unwrap();
        check_fisher(&p, &family)?;
        let f = protocol_fisher(&p, &family, DerivativeMode::Analytic).unwrap();
        let bm = b_min_solve(&family, &dq).unwrap();
        prop_assert!(kissing_residual(&f, &bm.b_min, &family, &dq).unwrap() < 1e-9);
    }

    #[test]
    fn extremal_cat_attains_the_norm(seed in any::<u64>(), n in 1usize..=3, qubits in 1usize..=2) {
        let mut r = rng(seed);
        let dim = 1 << qubits;
        let family = ProcessFamily::custom((0..n).map(|_| random_hermitian(&mut r, dim)).collect()).unwrap();
        let b = TangentVector::new(random_vector(&mut r, n, 1.0)).unwrap();
        let norm = process_norm(&family, &b).unwrap();
        prop_assume!(norm > 1e-3);
        let p = extremal_cat_protocol(&family, &b, ProtocolKind::ExtremalCat).unwrap();
        check_fisher(&p, &family)?;
        let f = protocol_fisher(&p, &family, DerivativeMode::Analytic).unwrap();
        prop_assert!((fisher_form(&f, &b, &b).unwrap() - norm * norm).abs() < 1e-8);
        prop_assert!((protocol_qfi(&p, &family, &b).unwrap() - norm * norm).abs() < 1e-8);
    }

    #[test]
    fn optimal_protocols_saturate_the_chain(q in prop::collection::vec(-2.0f64..2.0, 2), eps in 0.0f64..1.0) {
        prop_assume!(q[0].abs() > 0.05 && q[1].abs() > 0.05);
        let dq = OneForm::new(q).unwrap();
        for family in [ProcessFamily::pauli_z(2).unwrap(), ProcessFamily::epsilon_pair(eps).unwrap()] {
            let p = optimal_protocol(&family, &dq).unwrap();
            let bm = b_min_solve(&family, &dq).unwrap();
            let f = protocol_fisher(&p, &family, DerivativeMode::Analytic).unwrap();
            let f_bb = fisher_form(&f, &bm.b_min, &bm.b_min).unwrap();
            let q_bb = protocol_qfi(&p, &family, &bm.b_min).unwrap();
            let n2 = bm.norm * bm.norm;
            prop_assert!((f_bb - n2).abs() < 1e-8 * (1.0 + n2), "{}: F {f_bb} vs {n2}", family.name());
            prop_assert!((q_bb - n2).abs() < 1e-8 * (1.0 + n2), "{}: Q {q_bb} vs {n2}", family.name());
            prop_assert!(kissing_residual(&f, &bm.b_min, &family, &dq).unwrap() < 1e-8);
        }
    }
}

fn unit(v: &[f64]) -> Vec<f64> {
    let r = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| x / r).collect()
}

/// A unit vector orthogonal to `axis`.
fn orthogonal(axis: &[f64], v: &[f64]) -> Vec<f64> {
    let p: f64 = axis.iter().zip(v).map(|(a, b)| a * b).sum();
    unit(&v.iter().zip(axis).map(|(x, a)| x - p * a).collect::<Vec<_>>())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn bloch_readout_depends_on_the_functional_only(
        q in prop::collection::vec(-1.0f64..1.0, 3),
        v in prop::collection::vec(-1.0f64..1.0, 3),
        t in -1.0f64..1.0,
        delta in -1.0f64..1.0,
    ) {
        prop_assume!(q.iter().map(|x| x * x).sum::<f64>() > 1e-2);
        let axis = unit(&q);
        let u = orthogonal(&axis, &v);
        prop_assume!(u.iter().all(|x| x.is_finite()));
        let p = bloch_protocol(&OneForm::new(q.clone()).unwrap()).unwrap();
        let r = &p.branches[0].readouts[0];
        let model = sinusoid_model(vec![(r.form.clone(), r.mass)]);
        let on_axis: Vec<f64> = axis.iter().map(|a| t * a).collect();
        let moved: Vec<f64> = on_axis.iter().zip(&u).map(|(a, b)| a + delta * b).collect();
        let p0 = model.probabilities_at(&on_axis).unwrap();
        let p1 = model.probabilities_at(&moved).unwrap();
        for (a, b) in p0.iter().zip(&p1) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    /// The Born-rule probabilities agree with the readout model to first order only:
    /// orthogonal displacements change them at second order.
    #[test]
    fn bloch_born_rule_is_insensitive_to_first_order(
        q in prop::collection::vec(-1.0f64..1.0, 3),
        v in prop::collection::vec(-1.0f64..1.0, 3),
        t in -1.0f64..1.0,
        delta in -0.1f64..0.1,
    ) {
        prop_assume!(q.iter().map(|x| x * x).sum::<f64>() > 1e-2);
        let axis = unit(&q);
        let u = orthogonal(&axis, &v);
        prop_assume!(u.iter().all(|x| x.is_finite()));
        let p = bloch_protocol(&OneForm::new(q.clone()).unwrap()).unwrap();
        let branch = &p.branches[0];
        let family = ProcessFamily::Bloch;
        let at = |s: f64, d: f64| {
            let theta: Vec<f64> = axis.iter().zip(&u).map(|(a, b)| s * a + d * b).collect();
            branch_probabilities(branch, &family, &theta).unwrap()
        };
        let base = at(t, 0.0);
        prop_assert!((base[0] - 0.5 * (1.0 + t.sin())).abs() < 1e-12);
        let h = 1e-5;
        let slope = (at(t, h)[0] - at(t, -h)[0]) / (2.0 * h);
        prop_assert!(slope.abs() < 1e-9, "orthogonal slope {slope:e}");
        prop_assert!((at(t, delta)[0] - base[0]).abs() <= delta * delta);
    }
}

#[test]
fn protocols_round_trip_through_json() {
    let dq = OneForm::new(vec![1.0, -0.5, 0.25]).unwrap();
    let protocols = [
        pauli_z_corner_protocol(&dq).unwrap(),
        zoo_factorized(&ZooAmplitudes::new(vec![0.5, 0.25, -0.5]).unwrap()).unwrap(),
        zoo_protocol_mixed(&ZooAmplitudes::new(vec![0.5, 0.25, -0.5]).unwrap().distribution(), 3).unwrap(),
        bloch_protocol(&dq).unwrap(),
    ];
    for p in protocols {
        let text = serde_json::to_string(&p).unwrap();
        let back: Protocol = serde_json::from_str(&text).unwrap();
        assert_eq!(back, p);
    }
}
