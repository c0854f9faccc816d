//! The process norm `‖b‖` of a unitary family, the shortest vector `b_min` reaching the
//! unit surface of `q`, and the dual norm `‖dq‖_*` whose square bounds `Var(q̂)`.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{arg, QprocError, Result};
use crate::geometry::{canonicalize, pair, OneForm, TangentVector};
use crate::minimize::{descend, polish, Hyperplane, Objective};
use crate::operator::{
    embed_qubit, pauli_z_generators, seminorm, sigma_x, sigma_y, sigma_z, HermitianOperator,
};

/// Subdifferential-width threshold for flagging `b_min` as a corner.
pub const CORNER_GAP: f64 = 1e-6;
const SNAP_TOL: f64 = 1e-6;
const TIE_TOL: f64 = 1e-9;
const MINIMIZER_SEED: u64 = 0x005e_ed0f_b011;

/// A unitary family `exp(-i θ^j X_j)`.
///
/// Only unitary variants are provided; channels with noise would need their own norm
/// evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ProcessFamily {
    /// `X_j = ½σ^z_j` on `n` qubits.
    PauliZ { n: usize },
    /// `X = ½(σ^x, σ^y, σ^z)` on one qubit.
    Bloch,
    /// `X_1 = ½(σ^z_1 + √(2ε) σ^x_2)`, `X_2 = ½σ^z_2`.
    EpsilonPair { epsilon: f64 },
    CustomUnitary { generators: Vec<HermitianOperator> },
}

impl ProcessFamily {
    pub fn pauli_z(n: usize) -> Result<Self> {
        if n == 0 {
            return arg("PauliZ family needs at least one qubit");
        }
        Ok(ProcessFamily::PauliZ { n })
    }

    pub fn epsilon_pair(epsilon: f64) -> Result<Self> {
        if !(epsilon >= 0.0) || !epsilon.is_finite() {
            return arg(format!("epsilon must be finite and nonnegative, got {epsilon}"));
        }
        Ok(ProcessFamily::EpsilonPair { epsilon })
    }

    pub fn custom(generators: Vec<HermitianOperator>) -> Result<Self> {
        let first = generators
            .first()
            .ok_or_else(|| QprocError::Argument("custom family needs generators".into()))?;
        if generators.iter().any(|g| g.dim() != first.dim()) {
            return arg("custom generators must share one dimension");
        }
        crate::operator::check_dim(first.dim())?;
        Ok(ProcessFamily::CustomUnitary { generators })
    }

    /// Re-checks invariants, e.g. after deserialization.
    pub fn validate(&self) -> Result<()> {
        match self {
            ProcessFamily::PauliZ { n } => Self::pauli_z(*n).map(|_| ()),
            ProcessFamily::Bloch => Ok(()),
            ProcessFamily::EpsilonPair { epsilon } => Self::epsilon_pair(*epsilon).map(|_| ()),
            ProcessFamily::CustomUnitary { generators } => {
                Self::custom(generators.clone()).map(|_| ())
            }
        }
    }

    /// Number of parameters.
    pub fn n(&self) -> usize {
        match self {
            ProcessFamily::PauliZ { n } => *n,
            ProcessFamily::Bloch => 3,
            ProcessFamily::EpsilonPair { .. } => 2,
            ProcessFamily::CustomUnitary { generators } => generators.len(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ProcessFamily::PauliZ { .. } => "pauli-z",
            ProcessFamily::Bloch => "bloch",
            ProcessFamily::EpsilonPair { .. } => "epsilon-pair",
            ProcessFamily::CustomUnitary { .. } => "custom-unitary",
        }
    }

    /// Hilbert-space dimension the generators act on.
    pub fn hilbert_dim(&self) -> usize {
        match self {
            ProcessFamily::PauliZ { n } => 1usize.checked_shl(*n as u32).unwrap_or(usize::MAX),
            ProcessFamily::Bloch => 2,
            ProcessFamily::EpsilonPair { .. } => 4,
            ProcessFamily::CustomUnitary { generators } => generators[0].dim(),
        }
    }

    pub fn generators(&self) -> Result<Vec<HermitianOperator>> {
        match self {
            ProcessFamily::PauliZ { n } => pauli_z_generators(*n),
            ProcessFamily::Bloch => Ok(vec![
                sigma_x().scale(0.5),
                sigma_y().scale(0.5),
                sigma_z().scale(0.5),
            ]),
            ProcessFamily::EpsilonPair { epsilon } => {
                let z1 = embed_qubit(&sigma_z(), 0, 2)?;
                let x2 = embed_qubit(&sigma_x(), 1, 2)?;
                let z2 = embed_qubit(&sigma_z(), 1, 2)?;
                Ok(vec![
                    z1.add(&x2.scale((2.0 * epsilon).sqrt()))?.scale(0.5),
                    z2.scale(0.5),
                ])
            }
            ProcessFamily::CustomUnitary { generators } => Ok(generators.clone()),
        }
    }

    /// `H(θ) = θ^j X_j`.
    pub fn hamiltonian(&self, theta: &[f64]) -> Result<HermitianOperator> {
        if theta.len() != self.n() {
            return arg(format!(
                "parameter vector has {} components, family has {}",
                theta.len(),
                self.n()
            ));
        }
        HermitianOperator::linear_combination(theta, &self.generators()?)
    }
}

/// `Y = b^j X_j`.
pub fn generator(family: &ProcessFamily, b: &TangentVector) -> Result<HermitianOperator> {
    family.hamiltonian(b.components())
}

/// `‖b‖`, using closed forms for the named families.
pub fn process_norm(family: &ProcessFamily, b: &TangentVector) -> Result<f64> {
    if b.len() != family.n() {
        return arg(format!(
            "vector has {} components, family has {}",
            b.len(),
            family.n()
        ));
    }
    let c = b.components();
    Ok(match family {
        ProcessFamily::PauliZ { .. } => c.iter().map(|x| x.abs()).sum(),
        ProcessFamily::Bloch => c.iter().map(|x| x * x).sum::<f64>().sqrt(),
        ProcessFamily::EpsilonPair { epsilon } => {
            c[0].abs() + (c[1] * c[1] + 2.0 * epsilon * c[0] * c[0]).sqrt()
        }
        ProcessFamily::CustomUnitary { .. } => seminorm(&generator(family, b)?),
    })
}

/// `‖b‖` as the seminorm of the generator, for every family.
pub fn process_norm_by_generator(family: &ProcessFamily, b: &TangentVector) -> Result<f64> {
    Ok(seminorm(&generator(family, b)?))
}

/// One element of the subdifferential of `‖b‖`.
pub fn norm_subgradient(family: &ProcessFamily, b: &[f64]) -> Result<Vec<f64>> {
    if b.len() != family.n() {
        return arg("subgradient: size mismatch");
    }
    Ok(match family {
        ProcessFamily::PauliZ { .. } => b.iter().map(|x| sign(*x)).collect(),
        ProcessFamily::Bloch => {
            let r = b.iter().map(|x| x * x).sum::<f64>().sqrt();
            if r == 0.0 {
                vec![0.0; 3]
            } else {
                b.iter().map(|x| x / r).collect()
            }
        }
        ProcessFamily::EpsilonPair { epsilon } => {
            let r = (b[1] * b[1] + 2.0 * epsilon * b[0] * b[0]).sqrt();
            if r == 0.0 {
                vec![sign(b[0]), 0.0]
            } else {
                vec![sign(b[0]) + 2.0 * epsilon * b[0] / r, b[1] / r]
            }
        }
        ProcessFamily::CustomUnitary { generators } => {
            let y = HermitianOperator::linear_combination(b, generators)?;
            let (_, vecs) = y.eigh();
            let d = y.dim();
            let top = vecs.column(d - 1).into_owned();
            let bottom = vecs.column(0).into_owned();
            generators
                .iter()
                .map(|x| {
                    let hi = top.dotc(&(x.matrix() * &top)).re;
                    let lo = bottom.dotc(&(x.matrix() * &bottom)).re;
                    hi - lo
                })
                .collect()
        }
    })
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Shortest vector, in process norm, with `dq(b) = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BMinResult {
    pub b_min: TangentVector,
    pub norm: f64,
    pub dual_norm: f64,
    pub at_corner: bool,
    /// Sign strings of the hyperfaces meeting at a cross-polytope corner.
    pub adjacent_faces: Option<Vec<Vec<i8>>>,
}

pub fn b_min_solve(family: &ProcessFamily, dq: &OneForm) -> Result<BMinResult> {
    if dq.len() != family.n() {
        return arg(format!(
            "form has {} components, family has {}",
            dq.len(),
            family.n()
        ));
    }
    if dq.is_zero() {
        return arg("b_min is undefined for the zero form");
    }
    match family {
        ProcessFamily::PauliZ { n } => {
            let canon = canonicalize(dq)?;
            let lead = canon.permutation[0];
            let b = TangentVector::axis(*n, lead).scaled(1.0 / dq.components()[lead]);
            let norm = 1.0 / canon.scale;
            let q = canon.canonical.components();
            let all_equal = q.iter().all(|x| x.abs() == 1.0) && canon.dropped.is_empty();
            let faces = corner_strings(q)
                .into_iter()
                .map(|z| {
                    let signed: Vec<i8> = z.iter().map(|&e| e * canon.sign as i8).collect();
                    canon.scatter(&signed, 0)
                })
                .collect();
            Ok(BMinResult {
                b_min: b,
                norm,
                dual_norm: canon.scale,
                at_corner: !all_equal,
                adjacent_faces: Some(faces),
            })
        }
        ProcessFamily::Bloch => {
            let qq: f64 = dq.components().iter().map(|x| x * x).sum();
            let b = TangentVector::new(dq.components().iter().map(|x| x / qq).collect())?;
            Ok(BMinResult {
                b_min: b,
                norm: 1.0 / qq.sqrt(),
                dual_norm: qq.sqrt(),
                at_corner: false,
                adjacent_faces: None,
            })
        }
        _ => numerical_b_min(family, dq),
    }
}

/// Canonical-order corner strings `z^{(k)}` for `1 = q_1 ≥ |q_2| ≥ …`.
pub(crate) fn corner_strings(q: &[f64]) -> Vec<Vec<i8>> {
    let first: Vec<i8> = q.iter().map(|&x| if x < 0.0 { -1 } else { 1 }).collect();
    (0..q.len())
        .map(|k| {
            first
                .iter()
                .enumerate()
                .map(|(j, &s)| if k == 0 || j < k { s } else { -s })
                .collect()
        })
        .collect()
}

fn numerical_b_min(family: &ProcessFamily, dq: &OneForm) -> Result<BMinResult> {
    let n = family.n();
    let q = dq.components();
    let plane = Hyperplane::new(q);
    let gens = family.generators()?;
    let value = |b: &[f64]| -> f64 {
        process_norm(family, &TangentVector(b.to_vec())).unwrap_or(f64::INFINITY)
    };
    let sub = |b: &[f64]| norm_subgradient(family, b).unwrap_or_else(|_| vec![0.0; b.len()]);
    let objective = Objective {
        value: &value,
        subgradient: &sub,
    };
    drop(gens);

    // 2N + 2 starts: the axes that meet the hyperplane, its Euclidean foot, then random
    let mut starts: Vec<DVector<f64>> = Vec::new();
    for j in 0..n {
        if q[j] != 0.0 {
            let mut e = DVector::zeros(n);
            e[j] = 1.0 / q[j];
            starts.push(e);
        }
    }
    starts.push(plane.origin.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(MINIMIZER_SEED);
    let spread = plane.origin.norm() * 2.0;
    while starts.len() < 2 * n + 2 {
        let r = DVector::from_fn(n, |_, _| rng.random_range(-spread..spread));
        starts.push(r);
    }
    let results: Vec<Result<(DVector<f64>, f64)>> = starts
        .par_iter()
        .enumerate()
        .map(|(i, s)| descend(&plane, &objective, s, MINIMIZER_SEED ^ (i as u64 + 1)))
        .collect();
    let mut candidates = Vec::new();
    let mut last_err = None;
    for r in results {
        match r {
            Ok((b, v)) => {
                let (b, v) = snap(&b, v, q, &value);
                candidates.push((b, v));
            }
            Err(e) => last_err = Some(e),
        }
    }
    if candidates.is_empty() {
        return Err(last_err.unwrap_or_else(|| QprocError::Numerical {
            message: "no minimizer start succeeded".into(),
            best: vec![],
        }));
    }
    let best = candidates
        .iter()
        .map(|c| c.1)
        .fold(f64::INFINITY, f64::min);
    let (b, norm) = candidates
        .into_iter()
        .filter(|c| c.1 <= best + TIE_TOL)
        .min_by(|a, b| {
            a.0.iter()
                .zip(b.0.iter())
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
        .unwrap();
    let at_corner = corner_gap(&plane, &value, &b) > CORNER_GAP;
    let (b, norm) = if at_corner {
        (b, norm)
    } else {
        polish(&plane, &objective, &b, norm)
    };
    Ok(BMinResult {
        b_min: TangentVector::new(b.iter().copied().collect())?,
        norm,
        dual_norm: 1.0 / norm,
        at_corner,
        adjacent_faces: None,
    })
}

/// Zeroes components below `SNAP_TOL` and rescales onto the constraint if that does not
/// increase the norm.
fn snap(b: &DVector<f64>, v: f64, q: &[f64], value: &dyn Fn(&[f64]) -> f64) -> (DVector<f64>, f64) {
    let mut s = b.clone();
    let mut changed = false;
    for x in s.iter_mut() {
        if x.abs() < SNAP_TOL && *x != 0.0 {
            *x = 0.0;
            changed = true;
        }
    }
    if !changed {
        return (b.clone(), v);
    }
    let p: f64 = s.iter().zip(q).map(|(a, c)| a * c).sum();
    if p.abs() < 1e-12 {
        return (b.clone(), v);
    }
    let s = s.unscale(p);
    let vs = value(s.as_slice());
    if vs <= v + 1e-12 {
        (s, vs)
    } else {
        (b.clone(), v)
    }
}

/// Largest `f'(b; u) + f'(b; −u)` over a spanning set of in-plane directions.
fn corner_gap(plane: &Hyperplane, value: &dyn Fn(&[f64]) -> f64, b: &DVector<f64>) -> f64 {
    let dim = plane.dim();
    if dim == 0 {
        return 0.0;
    }
    let h = 1e-5 * plane.origin.norm().max(1e-300);
    let f0 = value(b.as_slice());
    let one_sided = |u: &DVector<f64>| {
        let f1 = value((b + u * h).as_slice());
        let f2 = value((b + u * (2.0 * h)).as_slice());
        (-3.0 * f0 + 4.0 * f1 - f2) / (2.0 * h)
    };
    let mut dirs: Vec<DVector<f64>> = (0..dim).map(|i| plane.basis.column(i).into_owned()).collect();
    for i in 0..dim {
        for k in (i + 1)..dim {
            let u = (plane.basis.column(i) + plane.basis.column(k)).unscale(2f64.sqrt());
            dirs.push(u);
        }
    }
    dirs.iter()
        .map(|u| one_sided(u) + one_sided(&(-u)))
        .fold(0.0f64, f64::max)
}

/// `‖dq‖_* = 1/‖b_min‖`; zero for the zero form.
pub fn dual_norm(family: &ProcessFamily, dq: &OneForm) -> Result<f64> {
    if dq.len() != family.n() {
        return arg("form size does not match family");
    }
    if dq.is_zero() {
        return Ok(0.0);
    }
    match family {
        ProcessFamily::PauliZ { .. } => Ok(dq.max_abs()),
        ProcessFamily::Bloch => Ok(dq.euclidean_norm()),
        _ => Ok(b_min_solve(family, dq)?.dual_norm),
    }
}

/// Points of the unit process-norm surface, for external plotting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometryExport {
    /// Corners of the unit ball, where they are known in closed form.
    pub vertices: Vec<Vec<f64>>,
    pub samples: Vec<Vec<f64>>,
    pub norm: String,
}

/// Rays spread uniformly over the circle (N = 2) or sphere (N = 3, Fibonacci lattice),
/// each scaled to unit process norm. N = 1 gives the two points `±1/‖∂_1‖`.
pub fn unit_ball_mesh(family: &ProcessFamily, resolution: usize) -> Result<GeometryExport> {
    let n = family.n();
    if n > 3 || n == 0 {
        return Err(QprocError::UnsupportedDimension(n));
    }
    if resolution == 0 {
        return arg("resolution must be positive");
    }
    let rays: Vec<Vec<f64>> = match n {
        1 => vec![vec![1.0], vec![-1.0]],
        2 => (0..resolution)
            .map(|i| {
                let a = 2.0 * std::f64::consts::PI * i as f64 / resolution as f64;
                vec![a.cos(), a.sin()]
            })
            .collect(),
        _ => {
            let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
            (0..resolution)
                .map(|i| {
                    let z = if resolution == 1 {
                        0.0
                    } else {
                        1.0 - 2.0 * i as f64 / (resolution - 1) as f64
                    };
                    let r = (1.0 - z * z).max(0.0).sqrt();
                    let phi = golden * i as f64;
                    vec![r * phi.cos(), r * phi.sin(), z]
                })
                .collect()
        }
    };
    let samples = rays
        .into_iter()
        .map(|r| {
            let len = process_norm(family, &TangentVector(r.clone()))?;
            if !(len > 0.0) {
                return Err(QprocError::InvariantViolation(
                    "process norm vanishes on a nonzero vector".into(),
                ));
            }
            Ok(r.iter().map(|x| x / len).collect())
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    let vertices = match family {
        ProcessFamily::PauliZ { n } => (0..*n)
            .flat_map(|j| {
                [1.0, -1.0].into_iter().map(move |s| {
                    let mut v = vec![0.0; *n];
                    v[j] = s;
                    v
                })
            })
            .collect(),
        ProcessFamily::EpsilonPair { epsilon } => {
            let mut v = vec![vec![0.0, 1.0], vec![0.0, -1.0]];
            if *epsilon == 0.0 {
                v.extend([vec![1.0, 0.0], vec![-1.0, 0.0]]);
            }
            v
        }
        _ => Vec::new(),
    };
    Ok(GeometryExport {
        vertices,
        samples,
        norm: family.name().to_string(),
    })
}

/// Checks `pair(dq, b_min) = 1` and `dual·norm = 1`.
pub fn check_b_min(result: &BMinResult, dq: &OneForm) -> Result<()> {
    let p = pair(dq, &result.b_min)?;
    if (p - 1.0).abs() > 1e-9 {
        return Err(QprocError::InvariantViolation(format!(
            "dq(b_min) = {p}, expected 1"
        )));
    }
    if (result.dual_norm * result.norm - 1.0).abs() > 1e-10 {
        return Err(QprocError::InvariantViolation(
            "dual norm is not the reciprocal of |b_min|".into(),
        ));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(c: &[f64]) -> TangentVector {
        TangentVector::new(c.to_vec()).unwrap()
    }
    fn f(c: &[f64]) -> OneForm {
        OneForm::new(c.to_vec()).unwrap()
    }

    #[test]
    fn generator_examples() {
        let fam = ProcessFamily::pauli_z(2).unwrap();
        let y = generator(&fam, &v(&[1.0, 0.0])).unwrap();
        let expected = embed_qubit(&sigma_z(), 0, 2).unwrap().scale(0.5);
        assert!((y.matrix() - expected.matrix()).camax() < 1e-15);

        let b = [0.3, -0.2, 0.9];
        let y = generator(&ProcessFamily::Bloch, &v(&b)).unwrap();
        let expected = HermitianOperator::linear_combination(
            &b,
            &[sigma_x().scale(0.5), sigma_y().scale(0.5), sigma_z().scale(0.5)],
        )
        .unwrap();
        assert!((y.matrix() - expected.matrix()).camax() < 1e-15);

        let eps = 0.3;
        let fam = ProcessFamily::epsilon_pair(eps).unwrap();
        let y = generator(&fam, &v(&[1.0, 0.0])).unwrap();
        let expected = embed_qubit(&sigma_z(), 0, 2)
            .unwrap()
            .add(&embed_qubit(&sigma_x(), 1, 2).unwrap().scale((2.0 * eps).sqrt()))
            .unwrap()
            .scale(0.5);
        assert!((y.matrix() - expected.matrix()).camax() < 1e-15);

        assert!(generator(&fam, &v(&[1.0])).is_err());
    }

    #[test]
    fn norm_examples() {
        let fam = ProcessFamily::pauli_z(3).unwrap();
        assert_eq!(process_norm(&fam, &v(&[1.0, -1.0, 0.5])).unwrap(), 2.5);
        assert_eq!(process_norm(&ProcessFamily::Bloch, &v(&[3.0, 4.0, 0.0])).unwrap(), 5.0);
        let fam = ProcessFamily::epsilon_pair(0.0).unwrap();
        assert_eq!(process_norm(&fam, &v(&[0.4, -0.7])).unwrap(), 1.1);
    }

    #[test]
    fn b_min_examples() {
        let fam = ProcessFamily::pauli_z(2).unwrap();
        let r = b_min_solve(&fam, &f(&[1.0, 0.5])).unwrap();
        assert_eq!(r.b_min.components(), &[1.0, 0.0]);
        assert_eq!((r.norm, r.dual_norm), (1.0, 1.0));
        assert!(r.at_corner);
        assert_eq!(
            r.adjacent_faces.as_ref().unwrap(),
            &vec![vec![1, 1], vec![1, -1]]
        );

        let r = b_min_solve(&ProcessFamily::Bloch, &f(&[0.0, 0.0, 2.0])).unwrap();
        assert_eq!(r.b_min.components(), &[0.0, 0.0, 0.5]);
        assert_eq!((r.norm, r.dual_norm), (0.5, 2.0));
        assert!(!r.at_corner);

        let fam = ProcessFamily::epsilon_pair(0.5).unwrap();
        let dq = f(&[0.3, 1.0]);
        let r = b_min_solve(&fam, &dq).unwrap();
        assert_eq!(r.b_min.components()[0], 0.0);
        assert!((r.b_min.components()[1] - 1.0).abs() < 1e-12);
        assert!((r.norm - 1.0).abs() < 1e-12);
        assert!(r.at_corner);
        check_b_min(&r, &dq).unwrap();

        assert!(b_min_solve(&fam, &f(&[0.0, 0.0])).is_err());
    }

    #[test]
    fn pauli_z_face_is_not_a_corner() {
        let fam = ProcessFamily::pauli_z(3).unwrap();
        let r = b_min_solve(&fam, &f(&[-2.0, 2.0, 2.0])).unwrap();
        assert!(!r.at_corner);
        assert_eq!(r.dual_norm, 2.0);
        assert_eq!(r.b_min.components(), &[-0.5, 0.0, 0.0]);
    }

    #[test]
    fn epsilon_pair_smooth_point() {
        // |q_1| > |q_2| sends b_min onto the rounded part of the curve
        let fam = ProcessFamily::epsilon_pair(0.5).unwrap();
        let dq = f(&[1.0, 0.4]);
        let r = b_min_solve(&fam, &dq).unwrap();
        check_b_min(&r, &dq).unwrap();
        assert!(!r.at_corner);
        assert!(r.b_min.components()[0] > 0.0 && r.b_min.components()[1] > 0.0);
    }

    #[test]
    fn dual_norm_examples() {
        let fam = ProcessFamily::pauli_z(3).unwrap();
        assert_eq!(dual_norm(&fam, &f(&[1.0, 2.0 / 3.0, 1.0 / 3.0])).unwrap(), 1.0);
        let d = dual_norm(&ProcessFamily::Bloch, &f(&[1.0, 1.0, 1.0])).unwrap();
        assert!((d - 3f64.sqrt()).abs() < 1e-15);
        assert_eq!(dual_norm(&fam, &f(&[0.0, 0.0, 0.0])).unwrap(), 0.0);
    }

    #[test]
    fn mesh_examples() {
        let g = unit_ball_mesh(&ProcessFamily::pauli_z(3).unwrap(), 50).unwrap();
        assert_eq!(g.vertices.len(), 6);
        assert!(g.vertices.contains(&vec![0.0, -1.0, 0.0]));
        let g = unit_ball_mesh(&ProcessFamily::Bloch, 200).unwrap();
        for s in &g.samples {
            let r = s.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((r - 1.0).abs() < 1e-10);
        }
        let g = unit_ball_mesh(&ProcessFamily::epsilon_pair(0.0).unwrap(), 97).unwrap();
        for s in &g.samples {
            assert!((s[0].abs() + s[1].abs() - 1.0).abs() < 1e-10);
        }
        assert!(matches!(
            unit_ball_mesh(&ProcessFamily::pauli_z(4).unwrap(), 10),
            Err(QprocError::UnsupportedDimension(4))
        ));
    }

    #[test]
    fn family_validation() {
        assert!(ProcessFamily::epsilon_pair(-0.1).is_err());
        assert!(ProcessFamily::pauli_z(0).is_err());
        assert!(ProcessFamily::custom(vec![]).is_err());
        assert!(ProcessFamily::custom(vec![
            HermitianOperator::identity(2),
            HermitianOperator::identity(3)
        ])
        .is_err());
    }

    #[test]
    fn family_json() {
        let fam = ProcessFamily::epsilon_pair(0.5).unwrap();
        let s = serde_json::to_string(&fam).unwrap();
        assert_eq!(s, r#"{"kind":"epsilon-pair","epsilon":0.5}"#);
        let back: ProcessFamily = serde_json::from_str(&s).unwrap();
        assert_eq!(back, fam);
    }
}
