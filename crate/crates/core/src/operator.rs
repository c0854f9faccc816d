//! Dense complex linear algebra over small Hilbert spaces.
//!
//! Qubit basis convention: `|+1⟩ = |0⟩` is the σ^z eigenstate with eigenvalue +1, and the
//! first qubit of a tensor product is the most significant bit of a basis index.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{arg, QprocError, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Max absolute entry deviation from the conjugate transpose.
pub const HERMITIAN_TOL: f64 = 1e-12;
/// Eigenvalue floor for positive semidefinite operators.
pub const PSD_TOL: f64 = 1e-10;
/// Trace and completeness tolerance.
pub const TRACE_TOL: f64 = 1e-10;
/// Pure-state normalization tolerance.
pub const NORM_TOL: f64 = 1e-12;
/// Born probabilities may be renormalized only if their total is off by less than this.
pub const BORN_TOL: f64 = 1e-9;

pub const DEFAULT_MAX_DIM: usize = 1 << 12;
pub const MAX_DIM_ENV: &str = "QPROC_MAX_DIM";

/// Largest Hilbert-space dimension the library will build, `QPROC_MAX_DIM` or 2^12.
pub fn max_dim() -> usize {
    std::env::var(MAX_DIM_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&d| d > 0)
        .unwrap_or(DEFAULT_MAX_DIM)
}

pub(crate) fn check_dim(dim: usize) -> Result<()> {
    let limit = max_dim();
    if dim > limit {
        Err(QprocError::Resource { dim, limit })
    } else {
        Ok(())
    }
}

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

/// Dense Hermitian operator.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianOperator {
    matrix: CMatrix,
}

impl HermitianOperator {
    pub fn new(matrix: CMatrix) -> Result<Self> {
        if matrix.nrows() == 0 || matrix.nrows() != matrix.ncols() {
            return arg(format!(
                "operator must be square and nonempty, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            ));
        }
        let dev = max_abs(&(&matrix - matrix.adjoint()));
        if !dev.is_finite() || dev > HERMITIAN_TOL {
            return Err(QprocError::InvariantViolation(format!(
                "operator is not Hermitian (max deviation {dev:e})"
            )));
        }
        Ok(Self { matrix })
    }

    /// Symmetrizes `(A + A†)/2`; for operators assembled internally from Hermitian parts.
    pub(crate) fn hermitize(matrix: CMatrix) -> Self {
        let matrix = (&matrix + matrix.adjoint()).scale(0.5);
        Self { matrix }
    }

    pub fn from_real_diagonal(diag: &[f64]) -> Self {
        let v = CVector::from_iterator(diag.len(), diag.iter().map(|&d| c(d, 0.0)));
        Self {
            matrix: CMatrix::from_diagonal(&v),
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            matrix: CMatrix::identity(dim, dim),
        }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            matrix: CMatrix::zeros(dim, dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            matrix: self.matrix.scale(s),
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        same_dim(self.dim(), other.dim())?;
        Ok(Self {
            matrix: &self.matrix + &other.matrix,
        })
    }

    /// Real linear combination `Σ w_j A_j`.
    pub fn linear_combination(weights: &[f64], ops: &[HermitianOperator]) -> Result<Self> {
        if weights.len() != ops.len() {
            return arg(format!(
                "{} weights for {} operators",
                weights.len(),
                ops.len()
            ));
        }
        let first = ops
            .first()
            .ok_or_else(|| QprocError::Argument("empty operator list".into()))?;
        let mut acc = CMatrix::zeros(first.dim(), first.dim());
        for (w, op) in weights.iter().zip(ops) {
            same_dim(first.dim(), op.dim())?;
            if *w != 0.0 {
                acc += op.matrix.scale(*w);
            }
        }
        Ok(Self { matrix: acc })
    }

    /// Eigenvalues in ascending order with the matching eigenvector columns.
    pub fn eigh(&self) -> (Vec<f64>, CMatrix) {
        let eig = self.matrix.clone().symmetric_eigen();
        let mut order: Vec<usize> = (0..self.dim()).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let vectors = CMatrix::from_columns(
            &order
                .iter()
                .map(|&i| eig.eigenvectors.column(i).into_owned())
                .collect::<Vec<_>>(),
        );
        (values, vectors)
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self
            .matrix
            .clone()
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .collect();
        v.sort_by(f64::total_cmp);
        v
    }

    /// `exp(-iH)` via the eigendecomposition, unitary to round-off.
    pub fn unitary(&self) -> CMatrix {
        let (values, vectors) = self.eigh();
        let phases = CVector::from_iterator(
            values.len(),
            values.iter().map(|&l| C64::from_polar(1.0, -l)),
        );
        &vectors * CMatrix::from_diagonal(&phases) * vectors.adjoint()
    }

    /// `⟨ψ|H|ψ⟩`.
    pub fn expectation(&self, psi: &PureState) -> Result<f64> {
        same_dim(self.dim(), psi.dim())?;
        Ok(psi.amplitudes.dotc(&(&self.matrix * &psi.amplitudes)).re)
    }
}

fn same_dim(a: usize, b: usize) -> Result<()> {
    if a != b {
        arg(format!("dimension mismatch: {a} vs {b}"))
    } else {
        Ok(())
    }
}

/// Normalized state vector.
#[derive(Debug, Clone, PartialEq)]
pub struct PureState {
    amplitudes: CVector,
}

impl PureState {
    pub fn new(amplitudes: CVector) -> Result<Self> {
        if amplitudes.is_empty() {
            return arg("state vector must be nonempty");
        }
        let n = amplitudes.norm();
        if !n.is_finite() || (n - 1.0).abs() > NORM_TOL {
            return Err(QprocError::InvariantViolation(format!(
                "state norm {n} differs from 1"
            )));
        }
        Ok(Self { amplitudes })
    }

    /// Normalizes an arbitrary nonzero vector.
    pub fn normalized(amplitudes: CVector) -> Result<Self> {
        let n = amplitudes.norm();
        if amplitudes.is_empty() || !(n > 0.0) || !n.is_finite() {
            return arg("cannot normalize a zero or non-finite vector");
        }
        Ok(Self {
            amplitudes: amplitudes.unscale(n),
        })
    }

    pub fn basis(dim: usize, index: usize) -> Result<Self> {
        if index >= dim {
            return arg(format!("basis index {index} out of range for dim {dim}"));
        }
        let mut v = CVector::zeros(dim);
        v[index] = c(1.0, 0.0);
        Ok(Self { amplitudes: v })
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &CVector {
        &self.amplitudes
    }

    pub fn density(&self) -> DensityOperator {
        DensityOperator {
            matrix: &self.amplitudes * self.amplitudes.adjoint(),
        }
    }

    pub fn projector(&self) -> HermitianOperator {
        HermitianOperator::hermitize(&self.amplitudes * self.amplitudes.adjoint())
    }

    pub fn inner(&self, other: &PureState) -> C64 {
        self.amplitudes.dotc(&other.amplitudes)
    }

    pub fn tensor(&self, other: &PureState) -> PureState {
        PureState {
            amplitudes: self.amplitudes.kronecker(&other.amplitudes),
        }
    }
}

/// Mixed state: Hermitian, positive semidefinite, unit trace.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityOperator {
    matrix: CMatrix,
}

impl DensityOperator {
    pub fn new(matrix: CMatrix) -> Result<Self> {
        let h = HermitianOperator::new(matrix)?;
        let min = h.eigenvalues()[0];
        if min < -PSD_TOL {
            return Err(QprocError::InvariantViolation(format!(
                "density operator has negative eigenvalue {min:e}"
            )));
        }
        let tr = h.matrix.trace();
        if (tr.re - 1.0).abs() > TRACE_TOL || tr.im.abs() > TRACE_TOL {
            return Err(QprocError::InvariantViolation(format!(
                "density operator trace {tr} differs from 1"
            )));
        }
        Ok(Self { matrix: h.matrix })
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self {
            matrix: CMatrix::identity(dim, dim).unscale(dim as f64),
        }
    }

    /// Convex mixture `Σ w_i ρ_i`.
    pub fn mixture(weights: &[f64], states: &[DensityOperator]) -> Result<Self> {
        let ops: Vec<HermitianOperator> = states
            .iter()
            .map(|s| HermitianOperator::hermitize(s.matrix.clone()))
            .collect();
        let m = HermitianOperator::linear_combination(weights, &ops)?;
        DensityOperator::new(m.matrix)
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn as_operator(&self) -> HermitianOperator {
        HermitianOperator::hermitize(self.matrix.clone())
    }

    pub fn tensor(&self, other: &DensityOperator) -> DensityOperator {
        DensityOperator {
            matrix: self.matrix.kronecker(&other.matrix),
        }
    }

    /// `U ρ U†` for a unitary `U`.
    pub(crate) fn conjugate_by(&self, u: &CMatrix) -> DensityOperator {
        let m = u * &self.matrix * u.adjoint();
        DensityOperator {
            matrix: (&m + m.adjoint()).scale(0.5),
        }
    }
}

/// Positive operator-valued measure with labelled outcomes.
#[derive(Debug, Clone, PartialEq)]
pub struct Povm {
    elements: Vec<HermitianOperator>,
    labels: Vec<String>,
}

impl Povm {
    pub fn new(elements: Vec<HermitianOperator>, labels: Vec<String>) -> Result<Self> {
        if elements.is_empty() {
            return arg("POVM needs at least one element");
        }
        if elements.len() != labels.len() {
            return arg(format!(
                "{} POVM elements but {} labels",
                elements.len(),
                labels.len()
            ));
        }
        let dim = elements[0].dim();
        let mut sum = CMatrix::zeros(dim, dim);
        for (e, l) in elements.iter().zip(&labels) {
            same_dim(dim, e.dim())?;
            let min = e.eigenvalues()[0];
            if min < -PSD_TOL {
                return Err(QprocError::InvariantViolation(format!(
                    "POVM element {l} has negative eigenvalue {min:e}"
                )));
            }
            sum += e.matrix();
        }
        let dev = max_abs(&(sum - CMatrix::identity(dim, dim)));
        if dev > TRACE_TOL {
            return Err(QprocError::InvariantViolation(format!(
                "POVM elements do not sum to identity (deviation {dev:e})"
            )));
        }
        Ok(Self { elements, labels })
    }

    /// Projective measurement onto an orthonormal basis.
    pub fn from_basis(basis: &[PureState], labels: Vec<String>) -> Result<Self> {
        Povm::new(basis.iter().map(PureState::projector).collect(), labels)
    }

    pub fn dim(&self) -> usize {
        self.elements[0].dim()
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn elements(&self) -> &[HermitianOperator] {
        &self.elements
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }
}

pub fn sigma_x() -> HermitianOperator {
    HermitianOperator {
        matrix: CMatrix::from_row_slice(2, 2, &[c(0., 0.), c(1., 0.), c(1., 0.), c(0., 0.)]),
    }
}

pub fn sigma_y() -> HermitianOperator {
    HermitianOperator {
        matrix: CMatrix::from_row_slice(2, 2, &[c(0., 0.), c(0., -1.), c(0., 1.), c(0., 0.)]),
    }
}

pub fn sigma_z() -> HermitianOperator {
    HermitianOperator::from_real_diagonal(&[1.0, -1.0])
}

/// Kronecker product in list order.
pub fn tensor(ops: &[HermitianOperator]) -> Result<HermitianOperator> {
    let (first, rest) = ops
        .split_first()
        .ok_or_else(|| QprocError::Argument("tensor of an empty list".into()))?;
    let dim = ops.iter().try_fold(1usize, |acc, o| acc.checked_mul(o.dim()));
    match dim {
        Some(d) => check_dim(d)?,
        None => {
            return Err(QprocError::Resource {
                dim: usize::MAX,
                limit: max_dim(),
            })
        }
    }
    let m = rest
        .iter()
        .fold(first.matrix.clone(), |acc, o| acc.kronecker(&o.matrix));
    Ok(HermitianOperator { matrix: m })
}

/// `op` acting on qubit `slot` of `n` qubits, identity elsewhere.
pub fn embed_qubit(op: &HermitianOperator, slot: usize, n: usize) -> Result<HermitianOperator> {
    if slot >= n {
        return arg(format!("qubit slot {slot} out of range for {n} qubits"));
    }
    let id = HermitianOperator::identity(2);
    let factors: Vec<HermitianOperator> = (0..n)
        .map(|j| if j == slot { op.clone() } else { id.clone() })
        .collect();
    tensor(&factors)
}

/// `½ σ^z_j` on each of `n` qubits.
pub fn pauli_z_generators(n: usize) -> Result<Vec<HermitianOperator>> {
    if n == 0 {
        return arg("need at least one qubit");
    }
    if n >= usize::BITS as usize {
        return Err(QprocError::Resource {
            dim: usize::MAX,
            limit: max_dim(),
        });
    }
    check_dim(1 << n)?;
    let dim = 1usize << n;
    Ok((0..n)
        .map(|j| {
            let diag: Vec<f64> = (0..dim)
                .map(|idx| if (idx >> (n - 1 - j)) & 1 == 0 { 0.5 } else { -0.5 })
                .collect();
            HermitianOperator::from_real_diagonal(&diag)
        })
        .collect())
}

/// Spectral spread `λ_max − λ_min`.
pub fn seminorm(h: &HermitianOperator) -> f64 {
    let ev = h.eigenvalues();
    ev[ev.len() - 1] - ev[0]
}

/// Checked variant for raw matrices that may not be Hermitian.
pub fn seminorm_of(matrix: CMatrix) -> Result<f64> {
    Ok(seminorm(&HermitianOperator::new(matrix)?))
}

/// `exp(-iH)|ψ⟩`.
pub fn evolve_pure(psi: &PureState, h: &HermitianOperator) -> Result<PureState> {
    same_dim(psi.dim(), h.dim())?;
    let out = h.unitary() * &psi.amplitudes;
    // unitary to round-off; renormalize the last few ulps away
    let n = out.norm();
    Ok(PureState {
        amplitudes: out.unscale(n),
    })
}

pub fn evolve_density(rho: &DensityOperator, h: &HermitianOperator) -> Result<DensityOperator> {
    same_dim(rho.dim(), h.dim())?;
    Ok(rho.conjugate_by(&h.unitary()))
}

fn finish_probabilities(mut p: Vec<f64>) -> Result<Vec<f64>> {
    for x in p.iter_mut() {
        *x = x.clamp(0.0, 1.0);
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() >= BORN_TOL || !total.is_finite() {
        return Err(QprocError::InvariantViolation(format!(
            "Born probabilities sum to {total}"
        )));
    }
    for x in p.iter_mut() {
        *x /= total;
    }
    Ok(p)
}

/// `p_x = tr(E_x ρ)`.
pub fn born_probabilities(rho: &DensityOperator, m: &Povm) -> Result<Vec<f64>> {
    same_dim(rho.dim(), m.dim())?;
    let p = m
        .elements
        .iter()
        .map(|e| trace_product(e.matrix(), rho.matrix()))
        .collect();
    finish_probabilities(p)
}

/// `p_x = ⟨ψ|E_x|ψ⟩`.
pub fn born_probabilities_pure(psi: &PureState, m: &Povm) -> Result<Vec<f64>> {
    same_dim(psi.dim(), m.dim())?;
    let p = m
        .elements
        .iter()
        .map(|e| psi.amplitudes.dotc(&(e.matrix() * &psi.amplitudes)).re)
        .collect();
    finish_probabilities(p)
}

/// Real part of `tr(A B)` for Hermitian `A`, `B`.
pub(crate) fn trace_product(a: &CMatrix, b: &CMatrix) -> f64 {
    let d = a.nrows();
    let mut acc = 0.0;
    for i in 0..d {
        for k in 0..d {
            acc += (a[(i, k)] * b[(k, i)]).re;
        }
    }
    acc
}

/// Basis index of the product state `⊗_j |s_j⟩` with `s_j = ±1`.
pub fn sign_index(signs: &[i8]) -> usize {
    signs
        .iter()
        .fold(0usize, |acc, &s| (acc << 1) | usize::from(s < 0))
}

/// `(|a⟩ + phase·|b⟩)/√2` for orthonormal `a`, `b`.
pub fn superposition(a: &PureState, b: &PureState, phase: C64) -> Result<PureState> {
    same_dim(a.dim(), b.dim())?;
    PureState::normalized((a.amplitudes() + b.amplitudes() * phase).unscale(2f64.sqrt()))
}

/// Complex matrices in JSON: row-major nested arrays of `[re, im]` pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ComplexMatrixJson(pub Vec<Vec<[f64; 2]>>);

impl From<&CMatrix> for ComplexMatrixJson {
    fn from(m: &CMatrix) -> Self {
        ComplexMatrixJson(
            (0..m.nrows())
                .map(|i| (0..m.ncols()).map(|k| [m[(i, k)].re, m[(i, k)].im]).collect())
                .collect(),
        )
    }
}

impl TryFrom<&ComplexMatrixJson> for CMatrix {
    type Error = QprocError;

    fn try_from(j: &ComplexMatrixJson) -> Result<CMatrix> {
        let rows = j.0.len();
        let cols = j.0.first().map_or(0, Vec::len);
        if j.0.iter().any(|r| r.len() != cols) {
            return arg("ragged complex matrix");
        }
        Ok(CMatrix::from_fn(rows, cols, |i, k| {
            let [re, im] = j.0[i][k];
            c(re, im)
        }))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ComplexVectorJson(pub Vec<[f64; 2]>);

impl Serialize for HermitianOperator {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        ComplexMatrixJson::from(&self.matrix).serialize(s)
    }
}

impl<'de> Deserialize<'de> for HermitianOperator {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let j = ComplexMatrixJson::deserialize(d)?;
        let m = CMatrix::try_from(&j).map_err(serde::de::Error::custom)?;
        HermitianOperator::new(m).map_err(serde::de::Error::custom)
    }
}

impl Serialize for DensityOperator {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        ComplexMatrixJson::from(&self.matrix).serialize(s)
    }
}

impl<'de> Deserialize<'de> for DensityOperator {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let j = ComplexMatrixJson::deserialize(d)?;
        let m = CMatrix::try_from(&j).map_err(serde::de::Error::custom)?;
        DensityOperator::new(m).map_err(serde::de::Error::custom)
    }
}

impl Serialize for PureState {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        ComplexVectorJson(self.amplitudes.iter().map(|z| [z.re, z.im]).collect()).serialize(s)
    }
}

impl<'de> Deserialize<'de> for PureState {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let j = ComplexVectorJson::deserialize(d)?;
        let v = CVector::from_iterator(j.0.len(), j.0.iter().map(|&[re, im]| c(re, im)));
        PureState::new(v).map_err(serde::de::Error::custom)
    }
}

#[derive(Serialize, Deserialize)]
struct PovmJson {
    labels: Vec<String>,
    elements: Vec<HermitianOperator>,
}

impl Serialize for Povm {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        PovmJson {
            labels: self.labels.clone(),
            elements: self.elements.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Povm {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let j = PovmJson::deserialize(d)?;
        Povm::new(j.elements, j.labels).map_err(serde::de::Error::custom)
    }
}
