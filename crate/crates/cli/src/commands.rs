use qproc::geometry::{canonicalize, fisher_dual, CanonicalForm};
use qproc::norm::{b_min_solve, check_b_min, process_norm, unit_ball_mesh, GeometryExport};
use qproc::protocol::{
    bloch_protocol, cusp_protocol, extremal_cat_protocol, hyperedge_protocol, hyperface_protocol,
    kissing_residual, optimal_protocol, pauli_z_corner_protocol, protocol_fisher, protocol_qfi,
    readout_fisher, zoo_factorized, zoo_protocol, zoo_protocol_mixed, zoo_vertex,
};
use qproc::sim::{covariance, linearization_warning, report, run_repetitions};
use qproc::fisher::verify_chain;
use qproc::{
    BMinResult, DerivativeMode, Estimator, EstimatorReport, OneForm, ProcessFamily, Protocol,
    ProtocolKind, QprocError, SignString, ZooAmplitudes,
};
use serde::{Deserialize, Serialize};

use crate::config::{LoadedConfig, ProtocolChoice, ProtocolConfig, SimulateConfig};
use crate::error::CliError;

/// Residual above which a protocol claiming optimality is rejected.
pub const KISSING_TOL: f64 = 1e-8;
/// Relative agreement required between `F⁺` contracted with `dq` and the squared dual norm.
pub const BOUND_TOL: f64 = 1e-8;
/// The geometry export is drawn for at most this many parameters.
pub const MAX_GEOMETRY_N: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub family: ProcessFamily,
    pub q: Vec<f64>,
    pub b_min: BMinResult,
    pub variance_bound: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub canonical: Option<CanonicalForm>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolReport {
    pub family: ProcessFamily,
    pub q: Vec<f64>,
    pub protocol: Protocol,
    pub fisher: Vec<Vec<f64>>,
    pub readout_fisher: Vec<Vec<f64>>,
    pub b_min: Vec<f64>,
    pub variance_bound: f64,
    /// `dq F⁺ dq`; absent when `dq` leaves the support of `F`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub protocol_variance: Option<f64>,
    pub kissing_residual: f64,
    pub claims_optimal: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateReport {
    pub family: ProcessFamily,
    pub protocol: ProtocolKind,
    pub q: Vec<f64>,
    pub theta_true: Vec<f64>,
    pub q_true: f64,
    pub shots: u64,
    pub repetitions: u64,
    pub seed: u64,
    pub debias: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
    pub estimator: EstimatorReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    pub mesh: GeometryExport,
    pub b_min: Vec<f64>,
    pub at_corner: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometryReport {
    pub family: ProcessFamily,
    /// Normal of the level surface of the functional.
    pub q: Vec<f64>,
    pub curves: Vec<Curve>,
    /// Fisher matrix whose ellipsoid `bᵀFb = 1` is drawn against the unit ball.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fisher: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    pub threshold: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub family: ProcessFamily,
    pub q: Vec<f64>,
    pub checks: Vec<Check>,
    pub passed: bool,
}

fn sign_string(choice: ProtocolChoice, cfg: &ProtocolConfig) -> Result<SignString, CliError> {
    let s = cfg
        .parameters
        .string
        .clone()
        .ok_or_else(|| CliError::Schema(format!("{choice:?} protocol needs parameters.string")))?;
    Ok(SignString::new(s)?)
}

fn zoo_distribution(cfg: &ProtocolConfig, n: usize) -> Result<Vec<f64>, CliError> {
    match (&cfg.parameters.a, &cfg.parameters.distribution) {
        (Some(a), None) => {
            if a.len() != n {
                return Err(CliError::Schema(format!("zoo marginals need {n} entries")));
            }
            Ok(ZooAmplitudes::new(a.clone())?.distribution())
        }
        (None, Some(d)) => Ok(d.clone()),
        _ => Err(CliError::Schema(
            "zoo protocol needs exactly one of parameters.a and parameters.distribution".into(),
        )),
    }
}

/// Builds the configured protocol, or the optimal one when none is configured.
pub fn build_protocol(
    family: &ProcessFamily,
    q: &OneForm,
    cfg: Option<&ProtocolConfig>,
) -> Result<(Protocol, bool), CliError> {
    let Some(cfg) = cfg else {
        return Ok((optimal_protocol(family, q)?, true));
    };
    let n = family.n();
    let protocol = match cfg.kind {
        ProtocolChoice::Optimal => optimal_protocol(family, q)?,
        ProtocolChoice::Corner => match family {
            ProcessFamily::PauliZ { .. } => pauli_z_corner_protocol(q)?,
            ProcessFamily::EpsilonPair { .. } => cusp_protocol(q)?,
            _ => {
                return Err(QprocError::UnsupportedCorner(format!(
                    "no corner construction for the {} family",
                    family.name()
                ))
                .into())
            }
        },
        ProtocolChoice::Hyperface => hyperface_protocol(&sign_string(cfg.kind, cfg)?)?,
        ProtocolChoice::Hyperedge => hyperedge_protocol(&sign_string(cfg.kind, cfg)?)?,
        ProtocolChoice::Zoo => {
            if let (Some(a), None) = (&cfg.parameters.a, &cfg.parameters.distribution) {
                zoo_factorized(&ZooAmplitudes::new(a.clone())?)?
            } else {
                zoo_protocol(&zoo_distribution(cfg, n)?, n)?
            }
        }
        ProtocolChoice::ZooMixed => zoo_protocol_mixed(&zoo_distribution(cfg, n)?, n)?,
        ProtocolChoice::ZooVertex => zoo_vertex(q)?,
        ProtocolChoice::Bloch => bloch_protocol(q)?,
        ProtocolChoice::Cusp => cusp_protocol(q)?,
        ProtocolChoice::ExtremalCat => {
            let bm = b_min_solve(family, q)?;
            extremal_cat_protocol(family, &bm.b_min, ProtocolKind::ExtremalCat)?
        }
    };
    if protocol.family_dim != n {
        return Err(CliError::Schema(format!(
            "protocol acts on {} parameters, family has {n}",
            protocol.family_dim
        )));
    }
    Ok((protocol, cfg.kind.claims_optimal()))
}

pub fn bound(cfg: &LoadedConfig) -> Result<BoundReport, CliError> {
    let family = cfg.family()?;
    let q = cfg.q()?;
    let bm = b_min_solve(&family, &q)?;
    check_b_min(&bm, &q)?;
    let canonical = match family {
        ProcessFamily::PauliZ { .. } => Some(canonicalize(&q)?),
        _ => None,
    };
    Ok(BoundReport {
        q: cfg.config.q.clone(),
        variance_bound: bm.dual_norm * bm.dual_norm,
        b_min: bm,
        canonical,
        family,
    })
}

fn optional_fisher_dual(f: &qproc::FisherMatrix, q: &OneForm) -> Option<f64> {
    fisher_dual(f, q).ok()
}

pub fn protocol(cfg: &LoadedConfig) -> Result<ProtocolReport, CliError> {
    let family = cfg.family()?;
    let q = cfg.q()?;
    let (p, claims_optimal) = build_protocol(&family, &q, cfg.config.protocol.as_ref())?;
    let f = protocol_fisher(&p, &family, DerivativeMode::Analytic)?;
    let bm = b_min_solve(&family, &q)?;
    let residual = kissing_residual(&f, &bm.b_min, &family, &q)?;
    Ok(ProtocolReport {
        q: cfg.config.q.clone(),
        fisher: f.rows(),
        readout_fisher: readout_fisher(&p).rows(),
        b_min: bm.b_min.components().to_vec(),
        variance_bound: bm.dual_norm * bm.dual_norm,
        protocol_variance: optional_fisher_dual(&f, &q),
        kissing_residual: residual,
        claims_optimal,
        protocol: p,
        family,
    })
}

/// Overrides from the command line, applied on top of the config.
#[derive(Debug, Clone, Copy, Default)]
pub struct SimulateOverrides {
    pub seed: Option<u64>,
    pub shots: Option<u64>,
}

fn simulate_config(
    cfg: &LoadedConfig,
    overrides: SimulateOverrides,
) -> Result<SimulateConfig, CliError> {
    let mut sim = cfg
        .config
        .simulate
        .clone()
        .ok_or_else(|| CliError::Schema("missing simulate block".into()))?;
    if let Some(seed) = overrides.seed {
        sim.seed = seed;
    }
    if let Some(shots) = overrides.shots {
        sim.shots = shots;
    }
    if sim.shots == 0 || sim.repetitions < 2 {
        return Err(CliError::Schema(
            "simulate needs shots > 0 and repetitions >= 2".into(),
        ));
    }
    if !(sim.tolerance > 0.0) {
        return Err(CliError::Schema("tolerance must be positive".into()));
    }
    Ok(sim)
}

pub fn simulate(
    cfg: &LoadedConfig,
    overrides: SimulateOverrides,
) -> Result<SimulateReport, CliError> {
    let family = cfg.family()?;
    let q = cfg.q()?;
    let sim = simulate_config(cfg, overrides)?;
    let protocol_cfg = cfg
        .config
        .protocol
        .as_ref()
        .ok_or_else(|| CliError::Schema("simulate needs a protocol block".into()))?;
    if sim.theta_true.len() != family.n() {
        return Err(CliError::Schema(format!(
            "theta_true has {} components, family has {}",
            sim.theta_true.len(),
            family.n()
        )));
    }
    let (p, _) = build_protocol(&family, &q, Some(protocol_cfg))?;
    let mut estimator = Estimator::new(&p, &q)?;
    if !sim.debias {
        estimator = estimator.without_debiasing();
    }
    let mc = run_repetitions(
        &p,
        &family,
        &estimator,
        &sim.theta_true,
        sim.shots,
        sim.repetitions,
        sim.seed,
    )?;
    let f = protocol_fisher(&p, &family, DerivativeMode::Analytic)?;
    let c = covariance(&mc.theta_hat)?;
    let dual = b_min_solve(&family, &q)?.dual_norm;
    let est = report(&mc.q_hat, dual * dual, sim.shots, &f, &c, sim.tolerance)?;
    let q_true = q.components().iter().zip(&sim.theta_true).map(|(a, b)| a * b).sum();
    Ok(SimulateReport {
        protocol: p.kind,
        q: cfg.config.q.clone(),
        warning: linearization_warning(&sim.theta_true),
        theta_true: sim.theta_true,
        q_true,
        shots: sim.shots,
        repetitions: sim.repetitions,
        seed: sim.seed,
        debias: sim.debias,
        estimator: est,
        family,
    })
}

pub fn geometry(cfg: &LoadedConfig) -> Result<GeometryReport, CliError> {
    let family = cfg.family()?;
    if family.n() > MAX_GEOMETRY_N {
        return Err(QprocError::UnsupportedDimension(family.n()).into());
    }
    let q = cfg.q()?;
    let gc = cfg.config.geometry.clone().unwrap_or_default();
    if gc.resolution < 3 {
        return Err(CliError::Schema("geometry resolution must be at least 3".into()));
    }
    let families: Vec<(Option<f64>, ProcessFamily)> = match (&family, &gc.epsilons) {
        (ProcessFamily::EpsilonPair { .. }, Some(eps)) => eps
            .iter()
            .map(|&e| Ok((Some(e), ProcessFamily::epsilon_pair(e)?)))
            .collect::<Result<_, QprocError>>()?,
        (ProcessFamily::EpsilonPair { epsilon }, None) => vec![(Some(*epsilon), family.clone())],
        (_, Some(_)) => {
            return Err(CliError::Schema(
                "geometry.epsilons applies to the epsilon-pair family only".into(),
            ))
        }
        _ => vec![(None, family.clone())],
    };
    let curves = families
        .iter()
        .map(|(eps, fam)| {
            let bm = b_min_solve(fam, &q)?;
            Ok(Curve {
                epsilon: *eps,
                mesh: unit_ball_mesh(fam, gc.resolution)?,
                b_min: bm.b_min.components().to_vec(),
                at_corner: bm.at_corner,
            })
        })
        .collect::<Result<Vec<_>, QprocError>>()?;
    let fisher = match build_protocol(&family, &q, cfg.config.protocol.as_ref()) {
        Ok((p, _)) => Some(protocol_fisher(&p, &family, DerivativeMode::Analytic)?.rows()),
        Err(CliError::Core(QprocError::UnsupportedCorner(_))) if cfg.config.protocol.is_none() => {
            None
        }
        Err(e) => return Err(e),
    };
    Ok(GeometryReport {
        q: cfg.config.q.clone(),
        curves,
        fisher,
        family,
    })
}

fn check(name: &str, value: f64, threshold: f64, passed: bool, detail: Option<String>) -> Check {
    Check {
        name: name.to_string(),
        passed,
        value: value.is_finite().then_some(value),
        threshold,
        detail,
    }
}

fn failed(name: &str, e: impl std::fmt::Display) -> Check {
    check(name, f64::NAN, 0.0, false, Some(e.to_string()))
}

pub fn verify(cfg: &LoadedConfig, overrides: SimulateOverrides) -> Result<VerifyReport, CliError> {
    let family = cfg.family()?;
    let q = cfg.q()?;
    let bm = b_min_solve(&family, &q)?;
    let mut checks = Vec::new();

    let dq_b: f64 = q
        .components()
        .iter()
        .zip(bm.b_min.components())
        .map(|(a, b)| a * b)
        .sum();
    let duality = (bm.norm * bm.dual_norm - 1.0).abs().max((dq_b - 1.0).abs());
    checks.push(check(
        "b_min duality",
        duality,
        1e-9,
        check_b_min(&bm, &q).is_ok(),
        None,
    ));

    let (p, claims_optimal) = build_protocol(&family, &q, cfg.config.protocol.as_ref())?;
    match protocol_fisher(&p, &family, DerivativeMode::Analytic) {
        Ok(f) => {
            let residual = kissing_residual(&f, &bm.b_min, &family, &q)?;
            let mut kiss = check(
                "kissing residual",
                residual,
                KISSING_TOL,
                residual <= KISSING_TOL,
                None,
            );
            if !claims_optimal {
                kiss.passed = true;
                kiss.detail = Some("informational; protocol does not claim optimality".into());
            }
            checks.push(kiss);

            let target = bm.dual_norm * bm.dual_norm;
            match fisher_dual(&f, &q) {
                Ok(v) => {
                    let rel = (v / target - 1.0).abs();
                    let passed = if claims_optimal { rel <= BOUND_TOL } else { v >= target * (1.0 - BOUND_TOL) };
                    checks.push(check("fisher bound", rel, BOUND_TOL, passed, None));
                }
                Err(e) => checks.push(failed("fisher bound", e)),
            }

            let f_bb = qproc::geometry::fisher_form(&f, &bm.b_min, &bm.b_min)?;
            let q_bb = protocol_qfi(&p, &family, &bm.b_min)?;
            let norm = process_norm(&family, &bm.b_min)?;
            match verify_chain(f_bb, q_bb, norm) {
                Ok(chain) => {
                    let slack = chain.measurement_slack.abs().max(chain.state_slack.abs());
                    let saturated = chain.saturated(KISSING_TOL);
                    checks.push(check(
                        "bound chain",
                        slack,
                        KISSING_TOL,
                        saturated || !claims_optimal,
                        (!saturated).then(|| "chain holds but is not saturated".to_string()),
                    ));
                }
                Err(e) => checks.push(failed("bound chain", e)),
            }
        }
        Err(e) => checks.push(failed("kissing residual", e)),
    }

    if cfg.config.simulate.is_some() && cfg.config.protocol.is_some() {
        match simulate(cfg, overrides) {
            Ok(r) => {
                let e = &r.estimator;
                checks.push(check(
                    "variance within tolerance",
                    e.scaled_variance / e.bound_per_shot,
                    e.tolerance,
                    e.within_tolerance,
                    None,
                ));
                checks.push(check(
                    "ccrb",
                    e.ccrb_check.min_eigenvalue,
                    -e.ccrb_check.slack,
                    e.ccrb_check.psd,
                    None,
                ));
                checks.push(check(
                    "sanity",
                    e.z_score,
                    -5.0,
                    !e.sanity_alarm,
                    None,
                ));
            }
            Err(e) => checks.push(failed("variance within tolerance", e)),
        }
    }

    let passed = checks.iter().all(|c| c.passed);
    Ok(VerifyReport {
        q: cfg.config.q.clone(),
        checks,
        passed,
        family,
    })
}
