//! Explicit measurement protocols: hyperface and hyperedge cat/icat measurements, corner
//! mixtures, ancilla-assisted zoo protocols, the Bloch protocol, and the extremal-cat
//! protocol for smooth points of a general family.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{arg, QprocError, Result};
use crate::fisher::{
    classical_fisher, qfi_from_sld, qfi_pure, sld, unitary_derivative, DerivativeMode,
    MeasurementModel, ProbabilityFn,
};
use crate::geometry::{canonicalize, is_canonical, pair, FisherMatrix, OneForm, TangentVector};
use crate::norm::{b_min_solve, corner_strings, generator, process_norm, ProcessFamily};
use crate::operator::{
    check_dim, sigma_x, sigma_y, sign_index, tensor, CMatrix, CVector, DensityOperator,
    HermitianOperator, Povm, PureState, C64,
};

/// Weight below which a mixture branch or zoo channel is dropped.
pub const WEIGHT_CUTOFF: f64 = 1e-15;
const WEIGHT_SUM_TOL: f64 = 1e-12;
const ORTHONORMAL_TOL: f64 = 1e-10;

/// String of `±1` (hyperface) or `{+1, 0, −1}` (hyperedge) entries.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<i8>", into = "Vec<i8>")]
pub struct SignString(Vec<i8>);

impl SignString {
    pub fn new(entries: Vec<i8>) -> Result<Self> {
        if entries.is_empty() {
            return arg("sign string must be nonempty");
        }
        if let Some(bad) = entries.iter().find(|e| !matches!(e, -1..=1)) {
            return arg(format!("sign string entry {bad} is not in {{-1, 0, 1}}"));
        }
        Ok(SignString(entries))
    }

    /// A string without zeros.
    pub fn face(entries: Vec<i8>) -> Result<Self> {
        let s = Self::new(entries)?;
        if s.has_zero() {
            return arg("hyperface string contains a zero; use a hyperedge protocol");
        }
        Ok(s)
    }

    pub fn entries(&self) -> &[i8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn has_zero(&self) -> bool {
        self.0.contains(&0)
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&e| e == 0)
    }

    pub fn negated(&self) -> SignString {
        SignString(self.0.iter().map(|e| -e).collect())
    }

    /// Zeros replaced by `+1`.
    pub fn filled(&self) -> SignString {
        SignString(self.0.iter().map(|&e| if e == 0 { 1 } else { e }).collect())
    }

    pub fn form(&self) -> OneForm {
        OneForm(self.0.iter().map(|&e| f64::from(e)).collect())
    }

    /// All `2^n` full strings in basis-index order.
    pub fn all_faces(n: usize) -> Vec<SignString> {
        (0..(1usize << n))
            .map(|idx| {
                SignString(
                    (0..n)
                        .map(|j| if (idx >> (n - 1 - j)) & 1 == 0 { 1 } else { -1 })
                        .collect(),
                )
            })
            .collect()
    }
}

impl TryFrom<Vec<i8>> for SignString {
    type Error = QprocError;
    fn try_from(v: Vec<i8>) -> Result<Self> {
        SignString::new(v)
    }
}

impl From<SignString> for Vec<i8> {
    fn from(s: SignString) -> Vec<i8> {
        s.0
    }
}

impl std::fmt::Display for SignString {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for e in &self.0 {
            f.write_str(match e {
                1 => "+",
                -1 => "-",
                _ => "0",
            })?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "state", rename_all = "kebab-case")]
pub enum Fiducial {
    Pure(PureState),
    Mixed(DensityOperator),
}

impl Fiducial {
    pub fn dim(&self) -> usize {
        match self {
            Fiducial::Pure(p) => p.dim(),
            Fiducial::Mixed(r) => r.dim(),
        }
    }

    pub fn density(&self) -> DensityOperator {
        match self {
            Fiducial::Pure(p) => p.density(),
            Fiducial::Mixed(r) => r.clone(),
        }
    }
}

/// Either an orthonormal basis (rank-one projectors) or a general POVM.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Measurement {
    Projective {
        labels: Vec<String>,
        basis: Vec<PureState>,
    },
    General {
        povm: Povm,
    },
}

impl Measurement {
    pub fn projective(basis: Vec<PureState>, labels: Vec<String>) -> Result<Self> {
        let dim = basis.first().map(PureState::dim).unwrap_or(0);
        if basis.len() != dim || dim == 0 {
            return arg(format!("a basis of dimension {dim} needs {dim} vectors, got {}", basis.len()));
        }
        if labels.len() != basis.len() {
            return arg("one label per basis vector required");
        }
        for (i, u) in basis.iter().enumerate() {
            if u.dim() != dim {
                return arg("basis vectors differ in dimension");
            }
            for v in &basis[..i] {
                if u.inner(v).norm() > ORTHONORMAL_TOL {
                    return arg("measurement basis is not orthonormal");
                }
            }
        }
        Ok(Measurement::Projective { labels, basis })
    }

    pub fn len(&self) -> usize {
        match self {
            Measurement::Projective { basis, .. } => basis.len(),
            Measurement::General { povm } => povm.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        match self {
            Measurement::Projective { basis, .. } => basis[0].dim(),
            Measurement::General { povm } => povm.dim(),
        }
    }

    pub fn labels(&self) -> &[String] {
        match self {
            Measurement::Projective { labels, .. } => labels,
            Measurement::General { povm } => povm.labels(),
        }
    }

    pub fn to_povm(&self) -> Result<Povm> {
        match self {
            Measurement::Projective { labels, basis } => Povm::from_basis(basis, labels.clone()),
            Measurement::General { povm } => Ok(povm.clone()),
        }
    }

    /// `p_x = tr(E_x ρ)`, clipped at zero and renormalized.
    pub fn probabilities(&self, state: &EvolvedState) -> Result<Vec<f64>> {
        let raw: Vec<f64> = match (self, state) {
            (Measurement::Projective { basis, .. }, EvolvedState::Pure(psi)) => basis
                .iter()
                .map(|m| m.amplitudes().dotc(psi).norm_sqr())
                .collect(),
            (Measurement::Projective { basis, .. }, EvolvedState::Mixed(rho)) => basis
                .iter()
                .map(|m| m.amplitudes().dotc(&(rho * m.amplitudes())).re)
                .collect(),
            (Measurement::General { povm }, EvolvedState::Pure(psi)) => povm
                .elements()
                .iter()
                .map(|e| psi.dotc(&(e.matrix() * psi)).re)
                .collect(),
            (Measurement::General { povm }, EvolvedState::Mixed(rho)) => povm
                .elements()
                .iter()
                .map(|e| (e.matrix() * rho).trace().re)
                .collect(),
        };
        let total: f64 = raw.iter().map(|p| p.max(0.0)).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(QprocError::InvariantViolation(format!(
                "Born probabilities sum to {total}"
            )));
        }
        Ok(raw.into_iter().map(|p| p.max(0.0) / total).collect())
    }
}

/// Two outcomes whose relative frequency reads `sin(form·θ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Readout {
    pub plus: usize,
    pub minus: usize,
    pub form: OneForm,
    /// Probability of landing on `plus` or `minus` at the fiducial point.
    pub mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub weight: f64,
    pub fiducial: Fiducial,
    pub measurement: Measurement,
    pub readouts: Vec<Readout>,
    /// Qubits on the left of the tensor product that the process does not touch.
    #[serde(default)]
    pub ancilla_qubits: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub string: Option<SignString>,
}

impl Branch {
    pub fn dim(&self) -> usize {
        self.fiducial.dim()
    }

    fn validate(&self, family_dim: usize) -> Result<()> {
        if !(self.weight >= 0.0) || !self.weight.is_finite() {
            return arg(format!("branch weight {} is invalid", self.weight));
        }
        if self.measurement.dim() != self.fiducial.dim() {
            return arg("fiducial and measurement dimensions differ");
        }
        if self.ancilla_qubits >= usize::BITS as usize
            || !self.dim().is_multiple_of(1usize << self.ancilla_qubits)
        {
            return arg("ancilla register does not divide the branch dimension");
        }
        for r in &self.readouts {
            if r.plus >= self.measurement.len() || r.minus >= self.measurement.len() || r.plus == r.minus {
                return arg("readout refers to invalid outcomes");
            }
            if r.form.len() != family_dim {
                return arg("readout form has the wrong length");
            }
            if !(r.mass >= 0.0 && r.mass <= 1.0 + 1e-12) {
                return arg(format!("readout mass {} is invalid", r.mass));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProtocolKind {
    Hyperface,
    Hyperedge,
    Corner,
    Cusp,
    Zoo,
    ZooMixed,
    Bloch,
    ExtremalCat,
    Mixture,
}

impl std::fmt::Display for ProtocolKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = serde_json::to_value(self).map_err(|_| std::fmt::Error)?;
        f.write_str(s.as_str().unwrap_or("?"))
    }
}

/// Probabilistic mixture of branches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ProtocolData")]
pub struct Protocol {
    pub kind: ProtocolKind,
    pub family_dim: usize,
    /// Functional the protocol was built to estimate, when there is one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<OneForm>,
    pub branches: Vec<Branch>,
}

#[derive(Deserialize)]
struct ProtocolData {
    kind: ProtocolKind,
    family_dim: usize,
    #[serde(default)]
    target: Option<OneForm>,
    branches: Vec<Branch>,
}

impl TryFrom<ProtocolData> for Protocol {
    type Error = QprocError;
    fn try_from(d: ProtocolData) -> Result<Self> {
        Protocol::new(d.kind, d.family_dim, d.target, d.branches)
    }
}

impl Protocol {
    pub fn new(
        kind: ProtocolKind,
        family_dim: usize,
        target: Option<OneForm>,
        branches: Vec<Branch>,
    ) -> Result<Self> {
        if branches.is_empty() {
            return arg("protocol needs at least one branch");
        }
        for b in &branches {
            b.validate(family_dim)?;
        }
        let total: f64 = branches.iter().map(|b| b.weight).sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return arg(format!("branch weights sum to {total}"));
        }
        if let Some(t) = &target {
            if t.len() != family_dim {
                return arg("target form has the wrong length");
            }
        }
        Ok(Protocol {
            kind,
            family_dim,
            target,
            branches,
        })
    }

    pub fn weights(&self) -> Vec<f64> {
        self.branches.iter().map(|b| b.weight).collect()
    }

    fn with_target(mut self, target: &OneForm) -> Self {
        self.target = Some(target.clone());
        self
    }
}

fn basis_vector(dim: usize, idx: usize) -> CVector {
    let mut v = CVector::zeros(dim);
    v[idx] = C64::new(1.0, 0.0);
    v
}

/// `(a + b)/√2` and `(a ± i b)/√2`.
fn cat_and_icats(a: &CVector, b: &CVector) -> Result<(PureState, PureState, PureState)> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let i = C64::new(0.0, 1.0);
    Ok((
        PureState::normalized((a + b).scale(s))?,
        PureState::normalized((a + b * i).scale(s))?,
        PureState::normalized((a - b * i).scale(s))?,
    ))
}

/// Extends orthonormal `given` to a basis by Gram–Schmidt over computational vectors.
fn complete_basis(given: &[CVector], dim: usize) -> Vec<(usize, CVector)> {
    let mut frame: Vec<CVector> = given.to_vec();
    let mut extra = Vec::new();
    for idx in 0..dim {
        if frame.len() == dim {
            break;
        }
        let mut v = basis_vector(dim, idx);
        for _ in 0..2 {
            for f in &frame {
                let c = f.dotc(&v);
                v -= f * c;
            }
        }
        let n = v.norm();
        if n > 1e-8 {
            let v = v.unscale(n);
            frame.push(v.clone());
            extra.push((idx, v));
        }
    }
    extra
}

fn bit_label(idx: usize, qubits: usize) -> String {
    (0..qubits)
        .map(|j| if (idx >> (qubits - 1 - j)) & 1 == 0 { '+' } else { '-' })
        .collect()
}

/// Single branch on `|w¹⟩`, `|(−w)¹⟩` with the given readout form.
fn hyperedge_branch(w: &SignString, weight: f64) -> Result<Branch> {
    let n = w.len();
    if n >= usize::BITS as usize {
        return Err(QprocError::Resource {
            dim: usize::MAX,
            limit: crate::operator::max_dim(),
        });
    }
    let dim = 1usize << n;
    check_dim(dim)?;
    let hi = sign_index(w.filled().entries());
    let lo = sign_index(w.negated().filled().entries());
    let (cat, plus, minus) = cat_and_icats(&basis_vector(dim, hi), &basis_vector(dim, lo))?;
    let mut basis = vec![plus, minus];
    let mut labels = vec!["+".to_string(), "-".to_string()];
    for idx in (0..dim).filter(|&i| i != hi && i != lo) {
        basis.push(PureState::basis(dim, idx)?);
        labels.push(bit_label(idx, n));
    }
    Ok(Branch {
        weight,
        fiducial: Fiducial::Pure(cat),
        measurement: Measurement::Projective { labels, basis },
        readouts: vec![Readout {
            plus: 0,
            minus: 1,
            form: w.form(),
            mass: 1.0,
        }],
        ancilla_qubits: 0,
        string: Some(w.clone()),
    })
}

/// Cat state on `±z`, measured in the icat basis.
pub fn hyperface_protocol(z: &SignString) -> Result<Protocol> {
    if z.has_zero() {
        return arg("hyperface string contains a zero; use a hyperedge protocol");
    }
    let n = z.len();
    Protocol::new(ProtocolKind::Hyperface, n, Some(z.form()), vec![hyperedge_branch(z, 1.0)?])
}

/// Hyperface-style measurement of `w`, with zero slots held in `|+1⟩`.
pub fn hyperedge_protocol(w: &SignString) -> Result<Protocol> {
    if w.is_zero() {
        return arg("hyperedge string must have a nonzero entry");
    }
    let kind = if w.has_zero() {
        ProtocolKind::Hyperedge
    } else {
        ProtocolKind::Hyperface
    };
    Protocol::new(kind, w.len(), Some(w.form()), vec![hyperedge_branch(w, 1.0)?])
}

/// Generalized parity whose eigenbasis contains the icat states of every full string:
/// `(σ^y)^{⊗N}` for odd `N`, `(σ^y)^{⊗N−1} ⊗ σ^x` for even `N`.
pub fn parity_operator(n: usize) -> Result<HermitianOperator> {
    if n == 0 {
        return arg("parity operator needs at least one qubit");
    }
    let mut factors = vec![sigma_y(); n];
    if n.is_multiple_of(2) {
        factors[n - 1] = sigma_x();
    }
    tensor(&factors)
}

/// Parity eigenvalue of the icat state `|ψ_z^{(±i)}⟩`; `plus` selects the `+i` member.
pub fn parity_eigenvalue(z: &SignString, plus: bool) -> Result<f64> {
    if z.has_zero() {
        return arg("parity eigenvalues are defined for full strings");
    }
    let n = z.len();
    let sign = if plus { -1.0 } else { 1.0 };
    let e = z.entries();
    let (phase_exp, product): (usize, i32) = if !n.is_multiple_of(2) {
        (n.div_ceil(2), e.iter().map(|&x| i32::from(x)).product())
    } else {
        (n / 2, e[..n - 1].iter().map(|&x| i32::from(x)).product())
    };
    let phase = if phase_exp % 2 == 0 { 1.0 } else { -1.0 };
    Ok(sign * phase * f64::from(product))
}

fn mixture_of_faces(
    kind: ProtocolKind,
    strings: Vec<(SignString, f64)>,
    target: &OneForm,
) -> Result<Protocol> {
    let kept: Vec<(SignString, f64)> = strings
        .into_iter()
        .filter(|(_, p)| *p >= WEIGHT_CUTOFF)
        .collect();
    let total: f64 = kept.iter().map(|(_, p)| p).sum();
    let branches = kept
        .iter()
        .map(|(s, p)| hyperedge_branch(s, p / total))
        .collect::<Result<Vec<_>>>()?;
    Protocol::new(kind, target.len(), Some(target.clone()), branches)
}

/// Weights `p_1 = ½(1 + |q_N|)`, `p_k = ½(|q_{k−1}| − |q_k|)` for canonical `dq`.
pub fn corner_weights(dq: &OneForm) -> Result<Vec<f64>> {
    if !is_canonical(dq) || dq.components().last().is_some_and(|x| *x == 0.0) {
        return arg("corner strategy needs 1 = q_1 ≥ |q_2| ≥ … ≥ |q_N| > 0");
    }
    let q = dq.components();
    let n = q.len();
    Ok((0..n)
        .map(|k| {
            if k == 0 {
                0.5 * (1.0 + q[n - 1].abs())
            } else {
                0.5 * (q[k - 1].abs() - q[k].abs())
            }
        })
        .collect())
}

/// Mixture of hyperface protocols saturating the bound at the vertex `∂_1`.
pub fn corner_strategy(dq: &OneForm) -> Result<Protocol> {
    let weights = corner_weights(dq)?;
    let strings = corner_strings(dq.components())
        .into_iter()
        .map(SignString)
        .zip(weights)
        .collect();
    mixture_of_faces(ProtocolKind::Corner, strings, dq)
}

/// Corner strategy for any nonzero `dq` under PauliZ: the canonical construction mapped back,
/// with zero components handled by hyperedge branches.
pub fn pauli_z_corner_protocol(dq: &OneForm) -> Result<Protocol> {
    if dq.is_zero() {
        return arg("the zero form has no optimal protocol");
    }
    let canon = canonicalize(dq)?;
    let q = canon.canonical.components();
    let weights = corner_weights(&canon.canonical)?;
    let strings = corner_strings(q)
        .into_iter()
        .zip(weights)
        .map(|(z, p)| {
            let signed: Vec<i8> = z.iter().map(|&e| e * canon.sign as i8).collect();
            (SignString(canon.scatter(&signed, 0)), p)
        })
        .collect();
    let mut p = mixture_of_faces(ProtocolKind::Corner, strings, dq)?;
    if p.branches.len() == 1 && !p.branches[0].string.as_ref().is_some_and(SignString::has_zero) {
        p.kind = ProtocolKind::Hyperface;
    }
    Ok(p)
}

/// The ε-pair cusp at `±∂_2` (needs `|q_1| ≤ |q_2|`): hyperface strings `sgn q_2·(±1, 1)`.
pub fn cusp_protocol(dq: &OneForm) -> Result<Protocol> {
    let q = dq.components();
    if q.len() != 2 {
        return arg("cusp protocol is defined for two parameters");
    }
    if q[1] == 0.0 || q[0].abs() > q[1].abs() {
        return arg("cusp protocol needs |q_1| ≤ |q_2| with q_2 ≠ 0");
    }
    let s: i8 = if q[1] > 0.0 { 1 } else { -1 };
    let r = q[0] / q[1];
    mixture_of_faces(
        ProtocolKind::Cusp,
        vec![
            (SignString(vec![s, s]), 0.5 * (1.0 + r)),
            (SignString(vec![-s, s]), 0.5 * (1.0 - r)),
        ],
        dq,
    )
}

/// Marginals `a_j = p_{j,+1} − p_{j,−1}` of a factorized zoo distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ZooAmplitudes(Vec<f64>);

impl ZooAmplitudes {
    pub fn new(a: Vec<f64>) -> Result<Self> {
        if a.is_empty() {
            return arg("zoo amplitudes must be nonempty");
        }
        if let Some(bad) = a.iter().find(|x| !(x.abs() <= 1.0)) {
            return arg(format!("zoo amplitude {bad} outside [-1, 1]"));
        }
        Ok(ZooAmplitudes(a))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    /// `p_z = Π_j (1 + z_j a_j)/2` in basis-index order.
    pub fn distribution(&self) -> Vec<f64> {
        SignString::all_faces(self.0.len())
            .iter()
            .map(|z| {
                z.entries()
                    .iter()
                    .zip(&self.0)
                    .map(|(&s, a)| 0.5 * (1.0 + f64::from(s) * a))
                    .product()
            })
            .collect()
    }

    /// `δ_jk(1 − a_j²) + a_j a_k`.
    pub fn fisher(&self) -> FisherMatrix {
        let n = self.0.len();
        let a = &self.0;
        let m = DMatrix::from_fn(n, n, |j, k| {
            if j == k {
                1.0
            } else {
                a[j] * a[k]
            }
        });
        FisherMatrix::new(m).expect("zoo Fisher matrix is PSD")
    }
}

impl TryFrom<Vec<f64>> for ZooAmplitudes {
    type Error = QprocError;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        ZooAmplitudes::new(v)
    }
}

impl From<ZooAmplitudes> for Vec<f64> {
    fn from(a: ZooAmplitudes) -> Vec<f64> {
        a.0
    }
}

fn zoo_branch(dist: &[f64], n: usize, mixed: bool) -> Result<Branch> {
    if n == 0 || n >= usize::BITS as usize - 1 {
        return arg("zoo protocol needs 1 ≤ N < 63");
    }
    let sys = 1usize << n;
    if dist.len() != sys {
        return arg(format!("distribution has {} entries, expected {sys}", dist.len()));
    }
    if let Some(bad) = dist.iter().find(|p| !(**p >= 0.0)) {
        return arg(format!("invalid probability {bad}"));
    }
    let total: f64 = dist.iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        return arg(format!("distribution sums to {total}"));
    }
    let dim = 2 * sys;
    check_dim(dim)?;
    let faces = SignString::all_faces(n);
    let mut psi = CVector::zeros(dim);
    let mut rho = CMatrix::zeros(dim, dim);
    let mut basis = Vec::with_capacity(dim);
    let mut labels = Vec::with_capacity(dim);
    let mut readouts = Vec::new();
    for (z, &p) in faces.iter().zip(dist) {
        let offset = if z.entries()[0] > 0 { 0 } else { sys };
        let hi = offset + sign_index(z.entries());
        let lo = offset + sign_index(z.negated().entries());
        let (cat, plus, minus) = cat_and_icats(&basis_vector(dim, hi), &basis_vector(dim, lo))?;
        psi += cat.amplitudes() * C64::new(p.sqrt(), 0.0);
        rho += cat.amplitudes() * cat.amplitudes().adjoint() * C64::new(p, 0.0);
        if p >= WEIGHT_CUTOFF {
            readouts.push(Readout {
                plus: basis.len(),
                minus: basis.len() + 1,
                form: z.form(),
                mass: p,
            });
        }
        let anc = if z.entries()[0] > 0 { '+' } else { '-' };
        labels.push(format!("{anc}|{z}:+"));
        labels.push(format!("{anc}|{z}:-"));
        basis.push(plus);
        basis.push(minus);
    }
    let fiducial = if mixed {
        Fiducial::Mixed(DensityOperator::new(rho)?)
    } else {
        Fiducial::Pure(PureState::normalized(psi)?)
    };
    Ok(Branch {
        weight: 1.0,
        fiducial,
        measurement: Measurement::Projective { labels, basis },
        readouts,
        ancilla_qubits: 1,
        string: None,
    })
}

/// Ancilla-assisted protocol `Σ_z |z_1⟩ ⊗ √p_z |ψ_z^{(+)}⟩` measured in `|z_1⟩ ⊗ |ψ_z^{(±i)}⟩`.
/// `dist` is indexed by the basis index of `z`.
pub fn zoo_protocol(dist: &[f64], n: usize) -> Result<Protocol> {
    Protocol::new(ProtocolKind::Zoo, n, None, vec![zoo_branch(dist, n, false)?])
}

/// The incoherent version `Σ_z p_z |z_1⟩⟨z_1| ⊗ |ψ_z^{(+)}⟩⟨ψ_z^{(+)}|`.
pub fn zoo_protocol_mixed(dist: &[f64], n: usize) -> Result<Protocol> {
    Protocol::new(ProtocolKind::ZooMixed, n, None, vec![zoo_branch(dist, n, true)?])
}

pub fn zoo_factorized(a: &ZooAmplitudes) -> Result<Protocol> {
    zoo_protocol(&a.distribution(), a.values().len())
}

/// Zoo protocol tangent at the vertex `∂_1` for canonical `dq`: `a = (1, q_2, …, q_N)`.
pub fn zoo_vertex(dq: &OneForm) -> Result<Protocol> {
    if !is_canonical(dq) {
        return arg("zoo vertex protocol needs canonical dq");
    }
    let a = ZooAmplitudes::new(dq.components().to_vec())?;
    Ok(zoo_factorized(&a)?.with_target(dq))
}

/// Cat of the extremal eigenvectors of `Y = b^j X_j`, measured in the icat basis.
pub fn extremal_cat_protocol(
    family: &ProcessFamily,
    b: &TangentVector,
    kind: ProtocolKind,
) -> Result<Protocol> {
    let gens = family.generators()?;
    let y = HermitianOperator::linear_combination(b.components(), &gens)?;
    let (vals, vecs) = y.eigh();
    let d = y.dim();
    if vals[d - 1] - vals[0] <= 0.0 {
        return arg("generator has no spectral spread along b");
    }
    let top = vecs.column(d - 1).into_owned();
    let bottom = vecs.column(0).into_owned();
    let (cat, plus, minus) = cat_and_icats(&top, &bottom)?;
    let form: Vec<f64> = gens
        .iter()
        .map(|x| {
            top.dotc(&(x.matrix() * &top)).re - bottom.dotc(&(x.matrix() * &bottom)).re
        })
        .collect();
    let mut basis = vec![plus.clone(), minus.clone()];
    let mut labels = vec!["+".to_string(), "-".to_string()];
    for (idx, v) in complete_basis(&[plus.amplitudes().clone(), minus.amplitudes().clone()], d) {
        basis.push(PureState::normalized(v)?);
        labels.push(format!("c{idx}"));
    }
    let branch = Branch {
        weight: 1.0,
        fiducial: Fiducial::Pure(cat),
        measurement: Measurement::projective(basis, labels)?,
        readouts: vec![Readout {
            plus: 0,
            minus: 1,
            form: OneForm::new(form)?,
            mass: 1.0,
        }],
        ancilla_qubits: 0,
        string: None,
    };
    Protocol::new(kind, family.n(), None, vec![branch])
}

/// Rotation about `q̂` read on `(|q̂⟩ + |−q̂⟩)/√2`; readout form `q̂`.
pub fn bloch_protocol(dq: &OneForm) -> Result<Protocol> {
    if dq.len() != 3 {
        return arg("Bloch protocol needs a three-component form");
    }
    if dq.is_zero() {
        return arg("Bloch protocol needs a nonzero form");
    }
    let r = dq.euclidean_norm();
    let unit = TangentVector::new(dq.components().iter().map(|x| x / r).collect())?;
    Ok(extremal_cat_protocol(&ProcessFamily::Bloch, &unit, ProtocolKind::Bloch)?.with_target(dq))
}

/// A protocol saturating `Var(q̂) ≥ ‖dq‖²_*` for this family and functional.
pub fn optimal_protocol(family: &ProcessFamily, dq: &OneForm) -> Result<Protocol> {
    if dq.len() != family.n() {
        return arg("form size does not match family");
    }
    if dq.is_zero() {
        return arg("the zero form has no optimal protocol");
    }
    match family {
        ProcessFamily::PauliZ { .. } => pauli_z_corner_protocol(dq),
        ProcessFamily::Bloch => bloch_protocol(dq),
        ProcessFamily::EpsilonPair { .. } => {
            let q = dq.components();
            if q[0].abs() <= q[1].abs() {
                cusp_protocol(dq)
            } else {
                let bm = b_min_solve(family, dq)?;
                Ok(extremal_cat_protocol(family, &bm.b_min, ProtocolKind::ExtremalCat)?
                    .with_target(dq))
            }
        }
        ProcessFamily::CustomUnitary { .. } => {
            let bm = b_min_solve(family, dq)?;
            if bm.at_corner {
                return Err(QprocError::UnsupportedCorner(format!(
                    "b_min = {:?} is a corner of a custom family; no constructive mixture is available",
                    bm.b_min.components()
                )));
            }
            Ok(extremal_cat_protocol(family, &bm.b_min, ProtocolKind::ExtremalCat)?
                .with_target(dq))
        }
    }
}

/// Branches of each protocol weighted by `weights`.
pub fn mixture(weights: &[f64], protocols: &[Protocol]) -> Result<Protocol> {
    if weights.len() != protocols.len() || protocols.is_empty() {
        return arg("mixture needs one weight per protocol");
    }
    let n = protocols[0].family_dim;
    if protocols.iter().any(|p| p.family_dim != n) {
        return arg("mixed protocols must share a family dimension");
    }
    let branches = weights
        .iter()
        .zip(protocols)
        .flat_map(|(w, p)| {
            p.branches.iter().map(move |b| Branch {
                weight: w * b.weight,
                ..b.clone()
            })
        })
        .collect();
    Protocol::new(ProtocolKind::Mixture, n, None, branches)
}

/// `Σ_branches w Σ_readouts mass · z ⊗ z`: the Fisher matrix of the ideal sinusoid readouts.
pub fn readout_fisher(p: &Protocol) -> FisherMatrix {
    let n = p.family_dim;
    let mut f = DMatrix::zeros(n, n);
    for b in &p.branches {
        for r in &b.readouts {
            let z = r.form.to_dvector();
            f += &z * z.transpose() * (b.weight * r.mass);
        }
    }
    FisherMatrix::new(f.clone()).unwrap_or_else(|_| {
        FisherMatrix::new((&f + f.transpose()) * 0.5).expect("readout Fisher is PSD")
    })
}

/// State after the process at `θ`.
#[derive(Debug, Clone)]
pub enum EvolvedState {
    Pure(CVector),
    Mixed(CMatrix),
}

fn check_branch_family(branch: &Branch, family: &ProcessFamily) -> Result<usize> {
    let d = family.hilbert_dim();
    if branch.dim() != d << branch.ancilla_qubits {
        return arg(format!(
            "branch dimension {} does not match family dimension {d} with {} ancilla qubits",
            branch.dim(),
            branch.ancilla_qubits
        ));
    }
    Ok(d)
}

/// `(I_anc ⊗ A) v` for a system operator `A`.
fn apply_blockwise(a: &CMatrix, v: &CVector) -> CVector {
    let d = a.nrows();
    let mut out = CVector::zeros(v.len());
    for k in 0..v.len() / d {
        let block = a * v.rows(k * d, d);
        out.rows_mut(k * d, d).copy_from(&block);
    }
    out
}

fn lift(a: &CMatrix, ancilla: usize) -> CMatrix {
    if ancilla == 0 {
        return a.clone();
    }
    let id = CMatrix::identity(1 << ancilla, 1 << ancilla);
    id.kronecker(a)
}

pub fn evolve_branch(branch: &Branch, family: &ProcessFamily, theta: &[f64]) -> Result<EvolvedState> {
    check_branch_family(branch, family)?;
    let u = family.hamiltonian(theta)?.unitary();
    Ok(match &branch.fiducial {
        Fiducial::Pure(psi) => EvolvedState::Pure(apply_blockwise(&u, psi.amplitudes())),
        Fiducial::Mixed(rho) => {
            let big = lift(&u, branch.ancilla_qubits);
            EvolvedState::Mixed(&big * rho.matrix() * big.adjoint())
        }
    })
}

/// Exact Born-rule outcome probabilities of one branch at `θ`.
pub fn branch_probabilities(branch: &Branch, family: &ProcessFamily, theta: &[f64]) -> Result<Vec<f64>> {
    branch.measurement.probabilities(&evolve_branch(branch, family, theta)?)
}

/// `∂_j p_x` at the fiducial point from `∂_j ρ = −i[X_j, ρ]`, indexed `[j][x]`.
fn fiducial_gradient(branch: &Branch, gens: &[HermitianOperator]) -> Vec<Vec<f64>> {
    let minus_i = C64::new(0.0, -1.0);
    gens.iter()
        .map(|x| match (&branch.fiducial, &branch.measurement) {
            (Fiducial::Pure(psi), Measurement::Projective { basis, .. }) => {
                let dpsi = apply_blockwise(x.matrix(), psi.amplitudes()) * minus_i;
                basis
                    .iter()
                    .map(|m| {
                        let a = m.amplitudes().dotc(psi.amplitudes());
                        let da = m.amplitudes().dotc(&dpsi);
                        2.0 * (a.conj() * da).re
                    })
                    .collect()
            }
            _ => {
                let rho = branch.fiducial.density();
                let xr = lift(x.matrix(), branch.ancilla_qubits) * rho.matrix();
                match &branch.measurement {
                    Measurement::Projective { basis, .. } => basis
                        .iter()
                        .map(|m| 2.0 * m.amplitudes().dotc(&(&xr * m.amplitudes())).im)
                        .collect(),
                    Measurement::General { povm } => povm
                        .elements()
                        .iter()
                        .map(|e| 2.0 * (e.matrix() * &xr).trace().im)
                        .collect(),
                }
            }
        })
        .collect()
}

/// Fisher matrix of one branch at the fiducial point.
pub fn branch_fisher(
    branch: &Branch,
    family: &ProcessFamily,
    mode: DerivativeMode,
) -> Result<FisherMatrix> {
    check_branch_family(branch, family)?;
    let n = family.n();
    let probabilities: ProbabilityFn<'_> =
        Box::new(move |theta: &[f64]| branch_probabilities(branch, family, theta));
    let model = match mode {
        DerivativeMode::Analytic => {
            let gens = family.generators()?;
            let grad = fiducial_gradient(branch, &gens);
            MeasurementModel::new(probabilities).with_gradient(Box::new(move |theta: &[f64]| {
                if theta.iter().any(|t| *t != 0.0) {
                    return Err(QprocError::Model(
                        "analytic gradients are available at the fiducial point only".into(),
                    ));
                }
                Ok(grad.clone())
            }))
        }
        DerivativeMode::CentralDifference { h } => MeasurementModel::new(probabilities).with_step(h),
    };
    classical_fisher(&model.at(vec![0.0; n]), n)
}

/// `Σ_n p_n F^{(n)}` over the protocol's branches, summed in branch order.
pub fn protocol_fisher(
    p: &Protocol,
    family: &ProcessFamily,
    mode: DerivativeMode,
) -> Result<FisherMatrix> {
    if p.family_dim != family.n() {
        return arg(format!(
            "protocol is for {} parameters, family has {}",
            p.family_dim,
            family.n()
        ));
    }
    let parts = p
        .branches
        .par_iter()
        .map(|b| branch_fisher(b, family, mode))
        .collect::<Result<Vec<_>>>()?;
    FisherMatrix::combination(&p.weights(), &parts)
}

/// Quantum Fisher information `Σ_n p_n Q^{(n)}_bb` of the branch fiducials along `b`.
pub fn protocol_qfi(p: &Protocol, family: &ProcessFamily, b: &TangentVector) -> Result<f64> {
    let y = generator(family, b)?;
    let mut total = 0.0;
    for branch in &p.branches {
        check_branch_family(branch, family)?;
        let lifted = if branch.ancilla_qubits == 0 {
            y.clone()
        } else {
            tensor(&[HermitianOperator::identity(1 << branch.ancilla_qubits), y.clone()])?
        };
        let q = match &branch.fiducial {
            Fiducial::Pure(psi) => qfi_pure(psi, &lifted)?,
            Fiducial::Mixed(rho) => {
                let drho = unitary_derivative(rho, &lifted)?;
                qfi_from_sld(rho, &sld(rho, &drho)?.operator)?
            }
        };
        total += branch.weight * q;
    }
    Ok(total)
}

/// `max_j |(F·b)_j − ‖b‖² dq_j|`; zero when both bounds are saturated at `b`.
pub fn kissing_residual(
    f: &FisherMatrix,
    b: &TangentVector,
    family: &ProcessFamily,
    dq: &OneForm,
) -> Result<f64> {
    let constraint = pair(dq, b)?;
    if (constraint - 1.0).abs() > 1e-9 {
        return arg(format!("dq(b) = {constraint}, expected 1"));
    }
    if f.dim() != b.len() {
        return arg("Fisher matrix and vector sizes differ");
    }
    let norm = process_norm(family, b)?;
    let fb = f.lower(b)?;
    Ok(fb
        .components()
        .iter()
        .zip(dq.components())
        .map(|(x, q)| (x - norm * norm * q).abs())
        .fold(0.0, f64::max))
}
