#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use qproc::operator::{CMatrix, DensityOperator, HermitianOperator, PureState};
use qproc::OneForm;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn gaussian(rng: &mut ChaCha8Rng) -> Complex64 {
    Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
}

pub fn complex_gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> CMatrix {
    DMatrix::from_fn(rows, cols, |_, _| gaussian(rng))
}

pub fn random_state(rng: &mut ChaCha8Rng, dim: usize) -> PureState {
    let v = DVector::from_fn(dim, |_, _| gaussian(rng));
    PureState::normalized(v).unwrap()
}

pub fn random_hermitian(rng: &mut ChaCha8Rng, dim: usize) -> HermitianOperator {
    let g = complex_gaussian(rng, dim, dim);
    HermitianOperator::new((&g + g.adjoint()).scale(0.5)).unwrap()
}

/// `GG† + δ·I`, normalized; full rank.
pub fn random_full_rank_density(rng: &mut ChaCha8Rng, dim: usize) -> DensityOperator {
    let g = complex_gaussian(rng, dim, dim);
    let m = &g * g.adjoint() + CMatrix::identity(dim, dim).scale(0.05);
    let tr = m.trace().re;
    DensityOperator::new(m.unscale(tr)).unwrap()
}

/// Random traceless Hermitian operator.
pub fn random_traceless(rng: &mut ChaCha8Rng, dim: usize) -> HermitianOperator {
    let h = random_hermitian(rng, dim);
    let shift = h.matrix().trace().re / dim as f64;
    HermitianOperator::new(h.matrix() - CMatrix::identity(dim, dim).scale(shift)).unwrap()
}

/// Orthonormal basis from the QR factor of a complex Gaussian matrix.
pub fn random_basis(rng: &mut ChaCha8Rng, dim: usize) -> Vec<PureState> {
    let q = complex_gaussian(rng, dim, dim).qr().q();
    (0..dim)
        .map(|k| PureState::normalized(q.column(k).into_owned()).unwrap())
        .collect()
}

/// `Σ_m (∂p_m)²/p_m` for `ψ(t) = e^{-itY}ψ` measured in `basis`, with
/// `∂p_m = 2 Im(conj(⟨m|ψ⟩)⟨m|Y|ψ⟩)`.
pub fn oracle_fisher_along(psi: &PureState, basis: &[PureState], y: &HermitianOperator) -> f64 {
    let ypsi = y.matrix() * psi.amplitudes();
    basis
        .iter()
        .map(|m| {
            let a = m.amplitudes().dotc(psi.amplitudes());
            let b = m.amplitudes().dotc(&ypsi);
            let p = a.norm_sqr();
            let dp = 2.0 * (a.conj() * b).im;
            if p < 1e-12 {
                0.0
            } else {
                dp * dp / p
            }
        })
        .sum()
}

/// `4(⟨Y²⟩ − ⟨Y⟩²)` computed directly.
pub fn oracle_variance_qfi(psi: &PureState, y: &HermitianOperator) -> f64 {
    let ypsi = y.matrix() * psi.amplitudes();
    let mean = psi.amplitudes().dotc(&ypsi).re;
    4.0 * (ypsi.norm_squared() - mean * mean)
}

/// `λ_max − λ_min` of `Y` computed from its eigenvalues.
pub fn oracle_spread(y: &HermitianOperator) -> f64 {
    let e = y.matrix().clone().symmetric_eigenvalues();
    e.max() - e.min()
}

/// `q_1 = 1`, non-increasing `|q_j|`, random signs, no zeros.
pub fn random_canonical_form(rng: &mut ChaCha8Rng, n: usize) -> OneForm {
    let mut mags: Vec<f64> = (1..n).map(|_| rng.random_range(0.01..1.0)).collect();
    mags.sort_by(|a, b| b.total_cmp(a));
    let mut q = vec![1.0];
    for m in mags {
        let s = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        q.push(s * m);
    }
    OneForm::new(q).unwrap()
}

pub fn random_vector(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-scale..scale)).collect()
}

pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax()
}

pub fn outer(v: &[f64]) -> DMatrix<f64> {
    let d = DVector::from_column_slice(v);
    &d * d.transpose()
}
