//! Tangent-space geometry at the fiducial point: vectors `b^j ∂_j`, one-forms `q_j dθ^j`,
//! and Fisher tensors in covariant (`F_jk`) and contravariant (`F^{jk}`) guise.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{arg, QprocError, Result};

pub const DEFAULT_RANK_TOLERANCE: f64 = 1e-10;
const SYMMETRY_TOL: f64 = 1e-12;
const PSD_TOL: f64 = 1e-10;

fn check_finite(v: &[f64], what: &str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        arg(format!("{what} has non-finite entries"))
    }
}

/// Displacement `b = b^j ∂_j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct TangentVector(pub(crate) Vec<f64>);

impl TangentVector {
    pub fn new(components: Vec<f64>) -> Result<Self> {
        check_finite(&components, "tangent vector")?;
        Ok(Self(components))
    }

    /// `∂_j` in `n` dimensions.
    pub fn axis(n: usize, j: usize) -> Self {
        let mut v = vec![0.0; n];
        v[j] = 1.0;
        Self(v)
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn components(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self(self.0.iter().map(|x| x * s).collect())
    }

    pub fn to_dvector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.0)
    }
}

impl TryFrom<Vec<f64>> for TangentVector {
    type Error = QprocError;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        TangentVector::new(v)
    }
}

impl From<TangentVector> for Vec<f64> {
    fn from(v: TangentVector) -> Self {
        v.0
    }
}

/// Linear functional `dq = q_j dθ^j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct OneForm(pub(crate) Vec<f64>);

impl OneForm {
    pub fn new(components: Vec<f64>) -> Result<Self> {
        check_finite(&components, "one-form")?;
        Ok(Self(components))
    }

    /// `dθ^j` in `n` dimensions.
    pub fn basis(n: usize, j: usize) -> Self {
        let mut v = vec![0.0; n];
        v[j] = 1.0;
        Self(v)
    }

    pub fn components(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&x| x == 0.0)
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self(self.0.iter().map(|x| x * s).collect())
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn euclidean_norm(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn to_dvector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.0)
    }
}

impl TryFrom<Vec<f64>> for OneForm {
    type Error = QprocError;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        OneForm::new(v)
    }
}

impl From<OneForm> for Vec<f64> {
    fn from(v: OneForm) -> Self {
        v.0
    }
}

/// `dq(v) = q_j v^j`.
pub fn pair(dq: &OneForm, v: &TangentVector) -> Result<f64> {
    if dq.len() != v.len() {
        return arg(format!(
            "cannot pair a {}-form with a {}-vector",
            dq.len(),
            v.len()
        ));
    }
    Ok(dq.0.iter().zip(&v.0).map(|(q, b)| q * b).sum())
}

/// Symmetric positive-semidefinite Fisher tensor `F_jk`.
#[derive(Debug, Clone, PartialEq)]
pub struct FisherMatrix {
    entries: DMatrix<f64>,
    rank_tolerance: f64,
}

impl FisherMatrix {
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        Self::with_tolerance(entries, DEFAULT_RANK_TOLERANCE)
    }

    pub fn with_tolerance(entries: DMatrix<f64>, rank_tolerance: f64) -> Result<Self> {
        if entries.nrows() != entries.ncols() || entries.nrows() == 0 {
            return arg("Fisher matrix must be square and nonempty");
        }
        if entries.iter().any(|x| !x.is_finite()) {
            return arg("Fisher matrix has non-finite entries");
        }
        let asym = (&entries - entries.transpose()).amax();
        if asym > SYMMETRY_TOL {
            return Err(QprocError::InvariantViolation(format!(
                "Fisher matrix not symmetric (deviation {asym:e})"
            )));
        }
        let sym = (&entries + entries.transpose()).scale(0.5);
        let min = sym
            .clone()
            .symmetric_eigenvalues()
            .iter()
            .fold(f64::INFINITY, |m, &x| m.min(x));
        if min < -PSD_TOL {
            return Err(QprocError::InvariantViolation(format!(
                "Fisher matrix has negative eigenvalue {min:e}"
            )));
        }
        Ok(Self {
            entries: sym,
            rank_tolerance,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return arg("Fisher matrix rows must form a square array");
        }
        Self::new(DMatrix::from_fn(n, n, |i, k| rows[i][k]))
    }

    /// `dq ⊗ dq`.
    pub fn outer(dq: &OneForm) -> Self {
        let v = dq.to_dvector();
        Self {
            entries: &v * v.transpose(),
            rank_tolerance: DEFAULT_RANK_TOLERANCE,
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            entries: DMatrix::identity(n, n),
            rank_tolerance: DEFAULT_RANK_TOLERANCE,
        }
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            entries: DMatrix::zeros(n, n),
            rank_tolerance: DEFAULT_RANK_TOLERANCE,
        }
    }

    /// `Σ w_i F_i`.
    pub fn combination(weights: &[f64], parts: &[FisherMatrix]) -> Result<Self> {
        if weights.len() != parts.len() || parts.is_empty() {
            return arg("mismatched or empty Fisher combination");
        }
        let n = parts[0].dim();
        let mut acc = DMatrix::zeros(n, n);
        for (w, f) in weights.iter().zip(parts) {
            if f.dim() != n {
                return arg("Fisher matrices of different sizes");
            }
            acc += f.entries.scale(*w);
        }
        Self::new(acc)
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn rank_tolerance(&self) -> f64 {
        self.rank_tolerance
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim())
            .map(|i| self.entries.row(i).iter().copied().collect())
            .collect()
    }

    /// `F_jk b^k` as a form.
    pub fn lower(&self, b: &TangentVector) -> Result<OneForm> {
        if b.len() != self.dim() {
            return arg("vector size does not match Fisher matrix");
        }
        OneForm::new((&self.entries * b.to_dvector()).iter().copied().collect())
    }

    /// Spectral pseudo-inverse `F^{jk}` and the null-space projector.
    pub fn pseudo_inverse(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        let n = self.dim();
        let eig = self.entries.clone().symmetric_eigen();
        let lmax = eig.eigenvalues.iter().fold(0.0f64, |m, &x| m.max(x));
        let cutoff = self.rank_tolerance * lmax;
        let mut pinv = DMatrix::zeros(n, n);
        let mut null = DMatrix::zeros(n, n);
        for (i, &l) in eig.eigenvalues.iter().enumerate() {
            let v = eig.eigenvectors.column(i);
            if lmax > 0.0 && l > cutoff {
                pinv += (v * v.transpose()).unscale(l);
            } else {
                null += v * v.transpose();
            }
        }
        (pinv, null)
    }

    /// `F^{jk} q_k`, the raised index of `dq`, after checking `dq` lies in the row space.
    pub fn raise(&self, dq: &OneForm) -> Result<TangentVector> {
        if dq.len() != self.dim() {
            return arg("form size does not match Fisher matrix");
        }
        let (pinv, null) = self.pseudo_inverse();
        let q = dq.to_dvector();
        let residual = (&null * &q).norm();
        if residual > self.rank_tolerance * q.norm() {
            return Err(QprocError::UnboundedVariance { residual });
        }
        TangentVector::new((pinv * q).iter().copied().collect())
    }
}

/// `F_jk u^j v^k`.
pub fn fisher_form(f: &FisherMatrix, u: &TangentVector, v: &TangentVector) -> Result<f64> {
    if u.len() != f.dim() || v.len() != f.dim() {
        return arg(format!(
            "vector sizes {} and {} do not match Fisher dimension {}",
            u.len(),
            v.len(),
            f.dim()
        ));
    }
    Ok(u.to_dvector().dot(&(f.entries() * v.to_dvector())))
}

/// `q_j F^{jk} q_k`: the smallest attainable variance of `q̂` for this Fisher information.
pub fn fisher_dual(f: &FisherMatrix, dq: &OneForm) -> Result<f64> {
    let raised = f.raise(dq)?;
    pair(dq, &raised)
}

/// Shortest vector in the Fisher metric that extends one unit in `q`.
pub fn b_f(f: &FisherMatrix, dq: &OneForm) -> Result<TangentVector> {
    let raised = f.raise(dq)?;
    let norm2 = pair(dq, &raised)?;
    if !(norm2 > 0.0) {
        return Err(QprocError::UnboundedVariance { residual: 0.0 });
    }
    Ok(raised.scaled(1.0 / norm2))
}

/// A one-form in the ordering `1 = q_1 ≥ |q_2| ≥ … ≥ |q_N| > 0`, with the map back.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CanonicalForm {
    /// `permutation[i]` is the original index of canonical component `i`.
    pub permutation: Vec<usize>,
    /// `|q|` of the leading original component.
    pub scale: f64,
    /// `±1`, applied together with `scale`.
    pub sign: f64,
    /// Original indices with `q_j = 0`.
    pub dropped: Vec<usize>,
    pub canonical: OneForm,
    pub original_len: usize,
}

impl CanonicalForm {
    /// Maps a canonical form back to the original coordinates.
    pub fn to_original_form(&self, form: &OneForm) -> Result<OneForm> {
        if form.len() != self.permutation.len() {
            return arg("canonical form has the wrong length");
        }
        let mut out = vec![0.0; self.original_len];
        for (i, &orig) in self.permutation.iter().enumerate() {
            out[orig] = form.0[i] * self.scale * self.sign;
        }
        OneForm::new(out)
    }

    /// Maps a canonical vector back so that pairings are preserved.
    pub fn to_original_vector(&self, b: &TangentVector) -> Result<TangentVector> {
        if b.len() != self.permutation.len() {
            return arg("canonical vector has the wrong length");
        }
        let mut out = vec![0.0; self.original_len];
        for (i, &orig) in self.permutation.iter().enumerate() {
            out[orig] = b.0[i] / (self.scale * self.sign);
        }
        TangentVector::new(out)
    }

    /// Embeds a canonical sign string (or any per-component data) into original slots,
    /// filling dropped slots with `fill`.
    pub fn scatter<T: Copy>(&self, values: &[T], fill: T) -> Vec<T> {
        let mut out = vec![fill; self.original_len];
        for (i, &orig) in self.permutation.iter().enumerate() {
            out[orig] = values[i];
        }
        out
    }

    /// A variance bound computed for the canonical form, expressed for the original form.
    pub fn variance_to_original(&self, canonical_variance: f64) -> f64 {
        canonical_variance * self.scale * self.scale
    }
}

/// Drops zero components, stable-sorts by descending `|q_j|`, and scales the leading
/// component to `+1`.
pub fn canonicalize(dq: &OneForm) -> Result<CanonicalForm> {
    if dq.is_empty() || dq.is_zero() {
        return arg("cannot canonicalize the zero form");
    }
    let mut kept: Vec<usize> = (0..dq.len()).filter(|&j| dq.0[j] != 0.0).collect();
    let dropped: Vec<usize> = (0..dq.len()).filter(|&j| dq.0[j] == 0.0).collect();
    kept.sort_by(|&a, &b| dq.0[b].abs().total_cmp(&dq.0[a].abs()));
    let lead = dq.0[kept[0]];
    let scale = lead.abs();
    let sign = lead.signum();
    let canonical: Vec<f64> = kept.iter().map(|&j| dq.0[j] / lead).collect();
    Ok(CanonicalForm {
        permutation: kept,
        scale,
        sign,
        dropped,
        canonical: OneForm::new(canonical)?,
        original_len: dq.len(),
    })
}

/// Whether `dq` already satisfies `1 = q_1 ≥ |q_2| ≥ … ≥ |q_N| > 0`.
pub fn is_canonical(dq: &OneForm) -> bool {
    let q = dq.components();
    !q.is_empty()
        && q[0] == 1.0
        && q.windows(2).all(|w| w[0].abs() >= w[1].abs())
        && q.iter().all(|x| *x != 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn form(v: &[f64]) -> OneForm {
        OneForm::new(v.to_vec()).unwrap()
    }
    fn vec_(v: &[f64]) -> TangentVector {
        TangentVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn pairing() {
        assert_eq!(pair(&form(&[1.0, 0.5]), &vec_(&[2.25, -0.5])).unwrap(), 2.0);
        for j in 0..3 {
            for k in 0..3 {
                let d = pair(&OneForm::basis(3, j), &TangentVector::axis(3, k)).unwrap();
                assert_eq!(d, if j == k { 1.0 } else { 0.0 });
            }
        }
        assert_eq!(pair(&form(&[3.0, -7.0]), &TangentVector::zeros(2)).unwrap(), 0.0);
        assert!(pair(&form(&[1.0]), &vec_(&[1.0, 2.0])).is_err());
    }

    #[test]
    fn fisher_form_examples() {
        let f = FisherMatrix::outer(&form(&[1.0, 0.5]));
        assert_eq!(fisher_form(&f, &vec_(&[1.0, 0.0]), &vec_(&[1.0, 0.0])).unwrap(), 1.0);
        let id = FisherMatrix::identity(2);
        let v = vec_(&[3.0, 4.0]);
        assert_eq!(fisher_form(&id, &v, &v).unwrap(), 25.0);
        let ones = FisherMatrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let n = vec_(&[1.0, -1.0]);
        assert_eq!(fisher_form(&ones, &n, &n).unwrap(), 0.0);
        assert!(fisher_form(&ones, &vec_(&[1.0]), &n).is_err());
    }

    #[test]
    fn fisher_dual_examples() {
        let dq = form(&[1.0, 0.5]);
        assert!((fisher_dual(&FisherMatrix::identity(2), &dq).unwrap() - 1.25).abs() < 1e-15);
        let corner = FisherMatrix::from_rows(&[vec![1.0, 0.5], vec![0.5, 1.0]]).unwrap();
        assert!((fisher_dual(&corner, &dq).unwrap() - 1.0).abs() < 1e-14);
        let rank_one = FisherMatrix::outer(&dq);
        assert!((fisher_dual(&rank_one, &dq).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fisher_dual_null_leak_is_an_error() {
        let f = FisherMatrix::outer(&form(&[1.0, 1.0]));
        assert!(matches!(
            fisher_dual(&f, &form(&[1.0, 0.5])),
            Err(QprocError::UnboundedVariance { .. })
        ));
        assert!(fisher_dual(&FisherMatrix::zeros(2), &form(&[1.0, 0.0])).is_err());
    }

    #[test]
    fn b_f_examples() {
        let dq = form(&[1.0, 0.5]);
        let b = b_f(&FisherMatrix::identity(2), &dq).unwrap();
        assert!((b.components()[0] - 0.8).abs() < 1e-15);
        assert!((b.components()[1] - 0.4).abs() < 1e-15);

        let corner = FisherMatrix::from_rows(&[vec![1.0, 0.5], vec![0.5, 1.0]]).unwrap();
        let b = b_f(&corner, &dq).unwrap();
        assert!((b.components()[0] - 1.0).abs() < 1e-14);
        assert!(b.components()[1].abs() < 1e-14);

        let diag = FisherMatrix::from_rows(&[
            vec![4.0, 0.0, 0.0],
            vec![0.0, 2.0, 0.0],
            vec![0.0, 0.0, 0.5],
        ])
        .unwrap();
        let b = b_f(&diag, &OneForm::basis(3, 0)).unwrap();
        assert!((b.components()[0] - 1.0).abs() < 1e-15);
        assert_eq!(&b.components()[1..], &[0.0, 0.0]);
        assert!((pair(&OneForm::basis(3, 0), &b).unwrap() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn canonicalize_examples() {
        let c = canonicalize(&form(&[0.5, 1.0, 0.0])).unwrap();
        assert_eq!(c.canonical.components(), &[1.0, 0.5]);
        assert_eq!(c.permutation, vec![1, 0]);
        assert_eq!(c.dropped, vec![2]);
        assert_eq!(c.scale, 1.0);

        let q = [1.0, 2.0 / 3.0, 1.0 / 3.0];
        let c = canonicalize(&form(&q)).unwrap();
        assert_eq!(c.canonical.components(), &q);
        assert_eq!(c.scale, 1.0);
        assert_eq!(c.permutation, vec![0, 1, 2]);

        let c = canonicalize(&form(&[-2.0, 1.0])).unwrap();
        assert_eq!(c.canonical.components(), &[1.0, -0.5]);
        assert_eq!(c.scale, 2.0);
        assert_eq!(c.sign, -1.0);
        assert_eq!(c.variance_to_original(1.0), 4.0);

        assert!(canonicalize(&form(&[0.0, 0.0])).is_err());
    }

    #[test]
    fn canonical_ties_are_stable() {
        let c = canonicalize(&form(&[0.5, -1.0, 1.0, -0.5])).unwrap();
        assert_eq!(c.permutation, vec![1, 2, 0, 3]);
        assert_eq!(c.canonical.components(), &[1.0, -1.0, -0.5, 0.5]);
        assert!(is_canonical(&c.canonical));
    }

    #[test]
    fn fisher_validation() {
        assert!(FisherMatrix::from_rows(&[vec![1.0, 0.0], vec![0.5, 1.0]]).is_err());
        assert!(FisherMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).is_err());
        assert!(FisherMatrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).is_ok());
    }
}
