//! Monte-Carlo estimation: multinomial sampling of protocol outcomes, the arcsine readout
//! estimator with local debiasing, and variance reports against the bound.

use std::collections::HashMap;
use std::sync::Mutex;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{arg, QprocError, Result};
use crate::geometry::{FisherMatrix, OneForm};
use crate::norm::ProcessFamily;
use crate::protocol::{branch_probabilities, readout_fisher, Protocol};

/// `|θ_true|` above which the linearized model is questionable.
pub const LINEAR_REGIME: f64 = 0.3;
pub const DEFAULT_TOLERANCE: f64 = 0.05;
/// Largest Jacobian condition number accepted by [`debias`].
pub const MAX_CONDITION: f64 = 1e8;
const JACOBIAN_STEP: f64 = 1e-4;
const ALARM_Z: f64 = -5.0;
const CCRB_SLACK_SE: f64 = 3.0;
const RNG_DOMAIN: &[u8; 8] = b"qprocsim";

/// Outcome counts of one branch, indexed like the branch's measurement labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeRecord {
    pub branch: usize,
    pub shots: u64,
    pub counts: Vec<u64>,
}

impl OutcomeRecord {
    pub fn labelled<'a>(&self, p: &'a Protocol) -> Result<Vec<(&'a str, u64)>> {
        let b = p
            .branches
            .get(self.branch)
            .ok_or_else(|| QprocError::Argument("record refers to a missing branch".into()))?;
        let labels = b.measurement.labels();
        if labels.len() != self.counts.len() {
            return arg("record does not match the branch measurement");
        }
        Ok(labels.iter().map(String::as_str).zip(self.counts.iter().copied()).collect())
    }
}

/// Warning text when `θ_true` leaves the linear regime.
pub fn linearization_warning(theta_true: &[f64]) -> Option<String> {
    let r = theta_true.iter().map(|t| t * t).sum::<f64>().sqrt();
    (r > LINEAR_REGIME).then(|| {
        format!("|theta_true| = {r:.3} exceeds {LINEAR_REGIME}; the local estimator may be biased")
    })
}

/// Largest-remainder apportionment of `shots` by `weights`.
pub fn apportion(weights: &[f64], shots: u64) -> Vec<u64> {
    let total: f64 = weights.iter().sum();
    let exact: Vec<f64> = weights.iter().map(|w| w / total * shots as f64).collect();
    let mut out: Vec<u64> = exact.iter().map(|x| x.floor() as u64).collect();
    let assigned: u64 = out.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().take(shots.saturating_sub(assigned) as usize) {
        out[i] += 1;
    }
    out
}

/// Generator keyed by `(seed, repetition, branch)`; independent of evaluation order.
pub fn block_rng(seed: u64, repetition: u64, branch: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&repetition.to_le_bytes());
    key[16..24].copy_from_slice(&branch.to_le_bytes());
    key[24..].copy_from_slice(RNG_DOMAIN);
    ChaCha8Rng::from_seed(key)
}

/// Multinomial draw by sequential conditional binomials.
pub fn multinomial(rng: &mut ChaCha8Rng, n: u64, probabilities: &[f64]) -> Result<Vec<u64>> {
    let mut left = n;
    let mut mass: f64 = probabilities.iter().sum();
    let mut out = Vec::with_capacity(probabilities.len());
    for (i, &p) in probabilities.iter().enumerate() {
        if i + 1 == probabilities.len() {
            out.push(left);
            break;
        }
        let k = if left == 0 || p <= 0.0 {
            0
        } else if p >= mass {
            left
        } else {
            let d = Binomial::new(left, (p / mass).clamp(0.0, 1.0))
                .map_err(|e| QprocError::Estimation(format!("binomial: {e}")))?;
            d.sample(rng)
        };
        out.push(k);
        left -= k;
        mass -= p;
    }
    Ok(out)
}

fn check_theta(family: &ProcessFamily, theta_true: &[f64]) -> Result<()> {
    if theta_true.len() != family.n() {
        return arg(format!(
            "theta_true has {} components, family has {}",
            theta_true.len(),
            family.n()
        ));
    }
    if theta_true.iter().any(|t| !t.is_finite()) {
        return arg("theta_true must be finite");
    }
    Ok(())
}

/// Exact outcome distributions of every branch at `θ_true`.
pub fn branch_distributions(
    p: &Protocol,
    family: &ProcessFamily,
    theta_true: &[f64],
) -> Result<Vec<Vec<f64>>> {
    check_theta(family, theta_true)?;
    if p.family_dim != family.n() {
        return arg("protocol and family dimensions differ");
    }
    p.branches
        .par_iter()
        .map(|b| branch_probabilities(b, family, theta_true))
        .collect()
}

/// Samples one repetition from precomputed branch distributions.
pub fn simulate_repetition(
    p: &Protocol,
    distributions: &[Vec<f64>],
    shots: u64,
    seed: u64,
    repetition: u64,
) -> Result<Vec<OutcomeRecord>> {
    if shots == 0 {
        return arg("shots must be positive");
    }
    let split = apportion(&p.weights(), shots);
    split
        .iter()
        .zip(distributions)
        .enumerate()
        .map(|(i, (&n, probs))| {
            let mut rng = block_rng(seed, repetition, i as u64);
            Ok(OutcomeRecord {
                branch: i,
                shots: n,
                counts: multinomial(&mut rng, n, probs)?,
            })
        })
        .collect()
}

/// One repetition of `shots` samples at `θ_true`.
pub fn simulate(
    p: &Protocol,
    family: &ProcessFamily,
    theta_true: &[f64],
    shots: u64,
    seed: u64,
) -> Result<Vec<OutcomeRecord>> {
    let d = branch_distributions(p, family, theta_true)?;
    simulate_repetition(p, &d, shots, seed, 0)
}

/// `arcsin(clamp(2f − 1))` for `k` successes in `n` trials.
pub fn arcsine_estimate(k: u64, n: u64) -> f64 {
    if n == 0 {
        return 0.0;
    }
    (2.0 * k as f64 / n as f64 - 1.0).clamp(-1.0, 1.0).asin()
}

/// `E[arcsin(2k/n − 1)]` for `k ~ Binomial(n, ½(1 + sin s))`.
pub fn expected_arcsine(n: u64, s: f64) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let p = 0.5 * (1.0 + s.sin());
    if p <= 0.0 {
        return -std::f64::consts::FRAC_PI_2;
    }
    if p >= 1.0 {
        return std::f64::consts::FRAC_PI_2;
    }
    let ratio = (p / (1.0 - p)).ln();
    let mut logp = Vec::with_capacity(n as usize + 1);
    let mut lp = n as f64 * (1.0 - p).ln();
    logp.push(lp);
    for k in 0..n {
        lp += ((n - k) as f64).ln() - ((k + 1) as f64).ln() + ratio;
        logp.push(lp);
    }
    let top = logp.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut norm = 0.0;
    let mut acc = 0.0;
    for (k, l) in logp.iter().enumerate() {
        let w = (l - top).exp();
        norm += w;
        acc += w * arcsine_estimate(k as u64, n);
    }
    acc / norm
}

/// `d E[ŝ]/ds` at `s = 0` by central differences of the exact expectation.
pub fn arcsine_jacobian(n: u64) -> f64 {
    let h = JACOBIAN_STEP;
    (expected_arcsine(n, h) - expected_arcsine(n, -h)) / (2.0 * h)
}

/// Affine map `x ↦ J⁻¹(x − offset)` making an estimator locally unbiased.
#[derive(Debug, Clone, PartialEq)]
pub struct BiasCorrection {
    pub offset: Vec<f64>,
    pub jacobian: DMatrix<f64>,
    pub condition: f64,
}

impl BiasCorrection {
    pub fn new(offset: Vec<f64>, jacobian: DMatrix<f64>) -> Result<Self> {
        let n = offset.len();
        if jacobian.nrows() != n || jacobian.ncols() != n {
            return arg("jacobian shape does not match offset");
        }
        let sv = jacobian.clone().svd(false, false).singular_values;
        let smax = sv.max();
        let smin = sv.min();
        let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
        if !(condition < MAX_CONDITION) {
            return Err(QprocError::DegenerateModel { condition });
        }
        Ok(Self {
            offset,
            jacobian,
            condition,
        })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            offset: vec![0.0; n],
            jacobian: DMatrix::identity(n, n),
            condition: 1.0,
        }
    }

    pub fn apply(&self, raw: &[f64]) -> Result<Vec<f64>> {
        if raw.len() != self.offset.len() {
            return arg("sample length does not match the correction");
        }
        let d = DVector::from_iterator(raw.len(), raw.iter().zip(&self.offset).map(|(x, o)| x - o));
        let lu = self.jacobian.clone().lu();
        let out = lu
            .solve(&d)
            .ok_or(QprocError::DegenerateModel { condition: f64::INFINITY })?;
        Ok(out.iter().copied().collect())
    }
}

/// `θ̄ = J⁻¹(θ̂ − mean₀)` for each sample.
pub fn debias(
    raw_mean_at_fiducial: &[f64],
    jacobian: &DMatrix<f64>,
    raw_estimates: &[Vec<f64>],
) -> Result<Vec<Vec<f64>>> {
    let c = BiasCorrection::new(raw_mean_at_fiducial.to_vec(), jacobian.clone())?;
    raw_estimates.iter().map(|x| c.apply(x)).collect()
}

/// Readout channel `c` with its estimator weight.
#[derive(Debug, Clone, PartialEq)]
struct Channel {
    branch: usize,
    plus: usize,
    minus: usize,
    /// Column of the map from readout values to `θ̂`.
    theta_column: DVector<f64>,
    /// `λ_c` with `q̂ = Σ λ_c ŝ_c`.
    q_weight: f64,
}

/// Linear estimator `θ̂ = F_r⁺ Σ_c π_c z_c ŝ_c`, `q̂ = dq·θ̂`, where `F_r` is the readout
/// Fisher matrix and `π_c` the fiducial probability of channel `c`.
pub struct Estimator {
    dq: OneForm,
    channels: Vec<Channel>,
    debias: bool,
    jacobians: Mutex<HashMap<u64, f64>>,
}

impl Estimator {
    pub fn new(p: &Protocol, dq: &OneForm) -> Result<Self> {
        if dq.len() != p.family_dim {
            return arg("target form does not match the protocol");
        }
        let f = readout_fisher(p);
        // fails when dq has a component the readouts cannot see
        f.raise(dq)?;
        let (pinv, _) = f.pseudo_inverse();
        let q = dq.to_dvector();
        let mut channels = Vec::new();
        for (i, b) in p.branches.iter().enumerate() {
            for r in &b.readouts {
                let pi = b.weight * r.mass;
                let col = &pinv * r.form.to_dvector() * pi;
                let q_weight = q.dot(&col);
                channels.push(Channel {
                    branch: i,
                    plus: r.plus,
                    minus: r.minus,
                    theta_column: col,
                    q_weight,
                });
            }
        }
        Ok(Self {
            dq: dq.clone(),
            channels,
            debias: true,
            jacobians: Mutex::new(HashMap::new()),
        })
    }

    pub fn without_debiasing(mut self) -> Self {
        self.debias = false;
        self
    }

    pub fn target(&self) -> &OneForm {
        &self.dq
    }

    /// `λ_c` in channel order.
    pub fn q_weights(&self) -> Vec<f64> {
        self.channels.iter().map(|c| c.q_weight).collect()
    }

    fn jacobian(&self, n: u64) -> f64 {
        if let Some(j) = self.jacobians.lock().expect("cache lock").get(&n) {
            return *j;
        }
        let j = arcsine_jacobian(n);
        self.jacobians.lock().expect("cache lock").insert(n, j);
        j
    }

    /// Raw and (optionally) corrected readout values `ŝ_c`.
    pub fn readout_values(&self, records: &[OutcomeRecord]) -> Result<Vec<f64>> {
        let mut by_branch: HashMap<usize, &OutcomeRecord> = HashMap::new();
        for r in records {
            by_branch.insert(r.branch, r);
        }
        self.channels
            .iter()
            .map(|c| {
                let rec = by_branch.get(&c.branch).ok_or_else(|| {
                    QprocError::Estimation(format!("no record for branch {}", c.branch))
                })?;
                if rec.shots == 0 {
                    return Err(QprocError::Estimation(format!(
                        "branch {} received no shots",
                        c.branch
                    )));
                }
                let k = *rec.counts.get(c.plus).ok_or_else(|| {
                    QprocError::Estimation("record lacks a readout outcome".into())
                })?;
                let m = *rec.counts.get(c.minus).ok_or_else(|| {
                    QprocError::Estimation("record lacks a readout outcome".into())
                })?;
                let n = k + m;
                let raw = arcsine_estimate(k, n);
                if !self.debias || n == 0 {
                    return Ok(raw);
                }
                // E[ŝ] vanishes at s = 0 by symmetry, so only the slope is corrected
                let c = BiasCorrection::new(vec![0.0], DMatrix::from_element(1, 1, self.jacobian(n)))?;
                Ok(c.apply(&[raw])?[0])
            })
            .collect()
    }

    /// `(q̂, θ̂)` from one repetition.
    pub fn estimate(&self, records: &[OutcomeRecord]) -> Result<(f64, Vec<f64>)> {
        let s = self.readout_values(records)?;
        let n = self.dq.len();
        let mut theta = DVector::zeros(n);
        let mut q = 0.0;
        for (c, v) in self.channels.iter().zip(&s) {
            theta += &c.theta_column * *v;
            q += c.q_weight * v;
        }
        Ok((q, theta.iter().copied().collect()))
    }
}

/// Raw `q̂` for the protocol's own target, without debiasing.
pub fn estimate_q(records: &[OutcomeRecord], p: &Protocol) -> Result<f64> {
    let dq = p
        .target
        .as_ref()
        .ok_or_else(|| QprocError::Argument("protocol has no target functional".into()))?;
    Ok(Estimator::new(p, dq)?.without_debiasing().estimate(records)?.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CcrbCheck {
    pub psd: bool,
    pub min_eigenvalue: f64,
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasFit {
    pub magnitudes: Vec<f64>,
    pub linear: f64,
    pub linear_se: f64,
    pub quadratic: f64,
    pub quadratic_se: f64,
    pub linear_z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorReport {
    pub samples: usize,
    pub shots: u64,
    pub mean: f64,
    pub empirical_variance: f64,
    pub variance_se: f64,
    /// `Var(q̂)·M`.
    pub scaled_variance: f64,
    /// `‖dq‖²_*`.
    pub bound_per_shot: f64,
    /// `‖dq‖²_*/M`.
    pub bound: f64,
    pub z_score: f64,
    pub tolerance: f64,
    pub within_tolerance: bool,
    /// Variance implausibly far below the bound.
    pub sanity_alarm: bool,
    pub ccrb_check: CcrbCheck,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bias_fit: Option<BiasFit>,
    pub q_hat_samples: Vec<f64>,
}

fn mean_variance(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Sample covariance of vectors.
pub fn covariance(samples: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    if samples.len() < 2 {
        return arg("covariance needs at least two samples");
    }
    let n = samples[0].len();
    let r = samples.len() as f64;
    let mut mean = DVector::zeros(n);
    for s in samples {
        mean += DVector::from_column_slice(s);
    }
    mean /= r;
    let mut c = DMatrix::zeros(n, n);
    for s in samples {
        let d = DVector::from_column_slice(s) - &mean;
        c += &d * d.transpose();
    }
    Ok(c / (r - 1.0))
}

/// Variance against the bound, with the CCRB check `C ⪰ F⁺/M` up to sampling slack.
pub fn report(
    q_hat_samples: &[f64],
    bound_per_shot: f64,
    shots: u64,
    fisher: &FisherMatrix,
    c_empirical: &DMatrix<f64>,
    tolerance: f64,
) -> Result<EstimatorReport> {
    let r = q_hat_samples.len();
    if r < 2 {
        return arg("report needs at least two samples");
    }
    if shots == 0 {
        return arg("shots must be positive");
    }
    if c_empirical.nrows() != fisher.dim() || c_empirical.ncols() != fisher.dim() {
        return arg("covariance and Fisher sizes differ");
    }
    let m = shots as f64;
    let (mean, var) = mean_variance(q_hat_samples);
    let rel_se = (2.0 / (r as f64 - 1.0)).sqrt();
    let bound = bound_per_shot / m;
    let null_se = rel_se * bound;
    let z = if null_se > 0.0 { (var - bound) / null_se } else { 0.0 };
    let within = bound_per_shot > 0.0 && ((var * m) / bound_per_shot - 1.0).abs() <= tolerance;
    let alarm = r > 10 && (z < ALARM_Z || var == 0.0);

    let (pinv, _) = fisher.pseudo_inverse();
    let diff = c_empirical - &pinv / m;
    let sym = (&diff + diff.transpose()) * 0.5;
    let min_eigenvalue = sym.symmetric_eigenvalues().min();
    let slack = CCRB_SLACK_SE * rel_se * pinv.norm() / m;
    Ok(EstimatorReport {
        samples: r,
        shots,
        mean,
        empirical_variance: var,
        variance_se: rel_se * var,
        scaled_variance: var * m,
        bound_per_shot,
        bound,
        z_score: z,
        tolerance,
        within_tolerance: within,
        sanity_alarm: alarm,
        ccrb_check: CcrbCheck {
            psd: min_eigenvalue >= -slack,
            min_eigenvalue,
            slack,
        },
        bias_fit: None,
        q_hat_samples: q_hat_samples.to_vec(),
    })
}

/// `q̂` and `θ̂` for each of `repetitions` independent runs.
#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarlo {
    pub q_hat: Vec<f64>,
    pub theta_hat: Vec<Vec<f64>>,
}

pub fn run_repetitions(
    p: &Protocol,
    family: &ProcessFamily,
    estimator: &Estimator,
    theta_true: &[f64],
    shots: u64,
    repetitions: u64,
    seed: u64,
) -> Result<MonteCarlo> {
    if repetitions == 0 {
        return arg("repetitions must be positive");
    }
    let dists = branch_distributions(p, family, theta_true)?;
    let results = (0..repetitions)
        .into_par_iter()
        .map(|rep| {
            let rec = simulate_repetition(p, &dists, shots, seed, rep)?;
            estimator.estimate(&rec)
        })
        .collect::<Result<Vec<_>>>()?;
    let (q_hat, theta_hat) = results.into_iter().unzip();
    Ok(MonteCarlo { q_hat, theta_hat })
}

/// Weighted least-squares fit of `bias(t) = α t + β t²` through signed magnitudes
/// `±t` along `direction`.
#[allow(clippy::too_many_arguments)]
pub fn bias_study(
    p: &Protocol,
    family: &ProcessFamily,
    estimator: &Estimator,
    direction: &[f64],
    magnitudes: &[f64],
    shots: u64,
    repetitions: u64,
    seed: u64,
) -> Result<BiasFit> {
    if direction.len() != family.n() {
        return arg("direction has the wrong length");
    }
    let q = estimator.target().components();
    let mut points = Vec::new();
    for (i, &t) in magnitudes.iter().enumerate() {
        for (k, sgn) in [1.0, -1.0].into_iter().enumerate() {
            let st = sgn * t;
            let theta: Vec<f64> = direction.iter().map(|u| u * st).collect();
            let q_true: f64 = q.iter().zip(&theta).map(|(a, b)| a * b).sum();
            let run_seed = seed ^ ((2 * i + k + 1) as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
            let mc = run_repetitions(p, family, estimator, &theta, shots, repetitions, run_seed)?;
            let (mean, var) = mean_variance(&mc.q_hat);
            let se = (var / mc.q_hat.len() as f64).sqrt().max(1e-300);
            points.push((st, mean - q_true, se));
        }
    }
    let mut a = DMatrix::<f64>::zeros(2, 2);
    let mut rhs = DVector::zeros(2);
    for &(t, y, se) in &points {
        let w = 1.0 / (se * se);
        let x = [t, t * t];
        for j in 0..2 {
            rhs[j] += w * x[j] * y;
            for k in 0..2 {
                a[(j, k)] += w * x[j] * x[k];
            }
        }
    }
    let cov = a
        .try_inverse()
        .ok_or(QprocError::DegenerateModel { condition: f64::INFINITY })?;
    let coef = &cov * rhs;
    let linear_se = cov[(0, 0)].sqrt();
    Ok(BiasFit {
        magnitudes: magnitudes.to_vec(),
        linear: coef[0],
        linear_se,
        quadratic: coef[1],
        quadratic_se: cov[(1, 1)].sqrt(),
        linear_z: coef[0] / linear_se,
    })
}
