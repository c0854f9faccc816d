//! Quantum side of the bound chain `F_bb ≤ Q_bb ≤ ‖b‖²`: the symmetric logarithmic
//! derivative, quantum Fisher information, and classical Fisher information of a
//! measurement model.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{arg, ChainLink, QprocError, Result};
use crate::geometry::{FisherMatrix, OneForm};
use crate::operator::{trace_product, CMatrix, DensityOperator, HermitianOperator, PureState, C64};

pub const DEFAULT_STEP: f64 = 1e-5;
pub const DEFAULT_P_FLOOR: f64 = 1e-12;
pub const CHAIN_TOL: f64 = 1e-9;
const TRACE_TOL: f64 = 1e-10;
const SUM_TOL: f64 = 1e-10;
/// `λ_m + λ_n` below this is treated as outside the support of ρ.
const SUPPORT_CUTOFF: f64 = 1e-12;
/// Largest `|dρ_mn|` tolerated outside the support.
const NULL_WEIGHT_TOL: f64 = 1e-10;

pub type ProbabilityFn<'a> = Box<dyn Fn(&[f64]) -> Result<Vec<f64>> + Send + Sync + 'a>;
/// Returns `∂_j p_x` indexed `[j][x]`.
pub type GradientFn<'a> = Box<dyn Fn(&[f64]) -> Result<Vec<Vec<f64>>> + Send + Sync + 'a>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum DerivativeMode {
    Analytic,
    CentralDifference { h: f64 },
}

/// Outcome distribution `p(x|θ)` near a fiducial point.
pub struct MeasurementModel<'a> {
    probabilities: ProbabilityFn<'a>,
    gradient: Option<GradientFn<'a>>,
    mode: DerivativeMode,
    fiducial: Option<Vec<f64>>,
    p_floor: f64,
}

impl<'a> MeasurementModel<'a> {
    /// Central differences with the default step unless an analytic gradient is supplied.
    pub fn new(probabilities: ProbabilityFn<'a>) -> Self {
        Self {
            probabilities,
            gradient: None,
            mode: DerivativeMode::CentralDifference { h: DEFAULT_STEP },
            fiducial: None,
            p_floor: DEFAULT_P_FLOOR,
        }
    }

    pub fn with_gradient(mut self, gradient: GradientFn<'a>) -> Self {
        self.gradient = Some(gradient);
        self.mode = DerivativeMode::Analytic;
        self
    }

    /// Forces central differences even when a gradient is available.
    pub fn with_step(mut self, h: f64) -> Self {
        self.mode = DerivativeMode::CentralDifference { h };
        self
    }

    pub fn at(mut self, fiducial: Vec<f64>) -> Self {
        self.fiducial = Some(fiducial);
        self
    }

    pub fn with_p_floor(mut self, p_floor: f64) -> Self {
        self.p_floor = p_floor;
        self
    }

    pub fn mode(&self) -> DerivativeMode {
        self.mode
    }

    pub fn probabilities_at(&self, theta: &[f64]) -> Result<Vec<f64>> {
        let p = (self.probabilities)(theta)?;
        if let Some(neg) = p.iter().copied().find(|&x| x < -self.p_floor || !x.is_finite()) {
            return Err(QprocError::Model(format!("invalid probability {neg}")));
        }
        let total: f64 = p.iter().sum();
        if (total - 1.0).abs() > SUM_TOL {
            return Err(QprocError::Model(format!(
                "distribution sums to {total} at θ = {theta:?}"
            )));
        }
        Ok(p)
    }
}

/// `F_jk = Σ_x ∂_j p ∂_k p / p` at the model's fiducial point; outcomes with `p < p_floor`
/// are excluded.
pub fn classical_fisher(model: &MeasurementModel<'_>, n: usize) -> Result<FisherMatrix> {
    let fiducial = model.fiducial.clone().unwrap_or_else(|| vec![0.0; n]);
    if fiducial.len() != n {
        return arg(format!(
            "fiducial point has {} components, expected {n}",
            fiducial.len()
        ));
    }
    let p0 = model.probabilities_at(&fiducial)?;
    let grad: Vec<Vec<f64>> = match (model.mode, &model.gradient) {
        (DerivativeMode::Analytic, Some(g)) => g(&fiducial)?,
        (DerivativeMode::Analytic, None) => {
            return Err(QprocError::Model("analytic mode without a gradient".into()))
        }
        (DerivativeMode::CentralDifference { h }, _) => {
            if !(h > 0.0) {
                return arg("finite-difference step must be positive");
            }
            let mut rows = Vec::with_capacity(n);
            for j in 0..n {
                let mut plus = fiducial.clone();
                let mut minus = fiducial.clone();
                plus[j] += h;
                minus[j] -= h;
                let pp = model.probabilities_at(&plus)?;
                let pm = model.probabilities_at(&minus)?;
                if pp.len() != p0.len() || pm.len() != p0.len() {
                    return Err(QprocError::Model("outcome count changed with θ".into()));
                }
                rows.push(pp.iter().zip(&pm).map(|(a, b)| (a - b) / (2.0 * h)).collect());
            }
            rows
        }
    };
    if grad.len() != n || grad.iter().any(|r| r.len() != p0.len()) {
        return Err(QprocError::Model("gradient has the wrong shape".into()));
    }
    let mut f = DMatrix::zeros(n, n);
    for (x, &p) in p0.iter().enumerate() {
        if p < model.p_floor {
            continue;
        }
        for j in 0..n {
            for k in j..n {
                let v = grad[j][x] * grad[k][x] / p;
                f[(j, k)] += v;
                if k != j {
                    f[(k, j)] += v;
                }
            }
        }
    }
    FisherMatrix::new(f)
}

/// Two-outcome readouts `p(±) = ½·mass·(1 ± sin z_jθ^j)` with analytic derivatives.
pub fn sinusoid_model(readouts: Vec<(OneForm, f64)>) -> MeasurementModel<'static> {
    let r1 = readouts.clone();
    let probabilities: ProbabilityFn<'static> = Box::new(move |theta| {
        let mut p = Vec::with_capacity(2 * r1.len());
        for (z, mass) in &r1 {
            let s = dot(z.components(), theta)?;
            p.push(0.5 * mass * (1.0 + s.sin()));
            p.push(0.5 * mass * (1.0 - s.sin()));
        }
        Ok(p)
    });
    let gradient: GradientFn<'static> = Box::new(move |theta| {
        let n = theta.len();
        let mut g = vec![Vec::with_capacity(2 * readouts.len()); n];
        for (z, mass) in &readouts {
            let s = dot(z.components(), theta)?;
            for (j, row) in g.iter_mut().enumerate() {
                let d = 0.5 * mass * s.cos() * z.components()[j];
                row.push(d);
                row.push(-d);
            }
        }
        Ok(g)
    });
    MeasurementModel::new(probabilities).with_gradient(gradient)
}

fn dot(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return arg(format!("length mismatch {} vs {}", a.len(), b.len()));
    }
    Ok(a.iter().zip(b).map(|(x, y)| x * y).sum())
}

/// Symmetric logarithmic derivative with its Lyapunov defect.
#[derive(Debug, Clone)]
pub struct SldResult {
    pub operator: HermitianOperator,
    /// Max entry of `½(ρL + Lρ) − dρ`.
    pub residual: f64,
}

/// Solves `½(ρL + Lρ) = dρ` in the eigenbasis of ρ.
pub fn sld(rho: &DensityOperator, drho: &HermitianOperator) -> Result<SldResult> {
    if rho.dim() != drho.dim() {
        return arg("state and derivative dimensions differ");
    }
    let tr = drho.matrix().trace();
    if tr.norm() > TRACE_TOL {
        return arg(format!("dρ must be traceless, trace = {tr}"));
    }
    let (lambda, v) = rho.as_operator().eigh();
    let d = v.adjoint() * drho.matrix() * &v;
    let n = rho.dim();
    let mut l = CMatrix::zeros(n, n);
    for m in 0..n {
        for k in 0..n {
            let s = lambda[m] + lambda[k];
            if s > SUPPORT_CUTOFF {
                l[(m, k)] = d[(m, k)] * (2.0 / s);
            } else if d[(m, k)].norm() > NULL_WEIGHT_TOL {
                return Err(QprocError::InconsistentDerivative {
                    weight: d[(m, k)].norm(),
                });
            }
        }
    }
    let l = HermitianOperator::hermitize(&v * l * v.adjoint());
    let lhs = (rho.matrix() * l.matrix() + l.matrix() * rho.matrix()).scale(0.5);
    let residual = (lhs - drho.matrix())
        .iter()
        .fold(0.0f64, |m, z| m.max(z.norm()));
    Ok(SldResult {
        operator: l,
        residual,
    })
}

/// `dρ/dφ = -i[Y, ρ]` for a unitary process generated by `Y`.
pub fn unitary_derivative(rho: &DensityOperator, y: &HermitianOperator) -> Result<HermitianOperator> {
    if rho.dim() != y.dim() {
        return arg("state and generator dimensions differ");
    }
    let comm = y.matrix() * rho.matrix() - rho.matrix() * y.matrix();
    Ok(HermitianOperator::hermitize(comm * C64::new(0.0, -1.0)))
}

/// `4(⟨Y²⟩ − ⟨Y⟩²)`.
pub fn qfi_pure(psi: &PureState, y: &HermitianOperator) -> Result<f64> {
    if psi.dim() != y.dim() {
        return arg("state and generator dimensions differ");
    }
    let ypsi = y.matrix() * psi.amplitudes();
    let mean = psi.amplitudes().dotc(&ypsi).re;
    let second = ypsi.norm_squared();
    Ok((4.0 * (second - mean * mean)).max(0.0))
}

/// `tr(ρL²)`.
pub fn qfi_from_sld(rho: &DensityOperator, l: &HermitianOperator) -> Result<f64> {
    if rho.dim() != l.dim() {
        return arg("state and SLD dimensions differ");
    }
    let l2 = l.matrix() * l.matrix();
    Ok(trace_product(rho.matrix(), &l2))
}

/// Slack of each link in `F_bb ≤ Q_bb ≤ ‖b‖²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainReport {
    pub classical: f64,
    pub quantum: f64,
    pub norm_squared: f64,
    /// `Q_bb − F_bb`
    pub measurement_slack: f64,
    /// `‖b‖² − Q_bb`
    pub state_slack: f64,
}

impl ChainReport {
    pub fn saturated(&self, tol: f64) -> bool {
        self.measurement_slack.abs() <= tol && self.state_slack.abs() <= tol
    }
}

pub fn verify_chain(f_bb: f64, q_bb: f64, norm: f64) -> Result<ChainReport> {
    if f_bb < 0.0 || q_bb < 0.0 || norm < 0.0 || !(f_bb + q_bb + norm).is_finite() {
        return arg("chain quantities must be finite and nonnegative");
    }
    let norm_squared = norm * norm;
    if f_bb > q_bb + CHAIN_TOL {
        return Err(QprocError::ChainViolation {
            link: ChainLink::ClassicalQuantum,
            excess: f_bb - q_bb,
        });
    }
    if q_bb > norm_squared + CHAIN_TOL {
        return Err(QprocError::ChainViolation {
            link: ChainLink::QuantumProcess,
            excess: q_bb - norm_squared,
        });
    }
    Ok(ChainReport {
        classical: f_bb,
        quantum: q_bb,
        norm_squared,
        measurement_slack: q_bb - f_bb,
        state_slack: norm_squared - q_bb,
    })
}
