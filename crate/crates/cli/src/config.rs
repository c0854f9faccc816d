//! The JSON problem description read by every subcommand.

use std::path::{Path, PathBuf};

use qproc::operator::HermitianOperator;
use qproc::{OneForm, ProcessFamily};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub schema_version: u32,
    pub family: FamilyConfig,
    pub q: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub protocol: Option<ProtocolConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geometry: Option<GeometryConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FamilyKind {
    PauliZ,
    Bloch,
    EpsilonPair,
    CustomUnitary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyConfig {
    pub kind: FamilyKind,
    #[serde(rename = "N", alias = "n", default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generators: Option<GeneratorSource>,
}

/// Generators inline, or a path (relative to the config file) to a JSON list of them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GeneratorSource {
    Path(PathBuf),
    Inline(Vec<HermitianOperator>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProtocolChoice {
    Optimal,
    Corner,
    Hyperface,
    Hyperedge,
    Zoo,
    ZooMixed,
    ZooVertex,
    Bloch,
    Cusp,
    ExtremalCat,
}

impl ProtocolChoice {
    /// Whether the construction promises to saturate the bound for `q`.
    pub fn claims_optimal(self) -> bool {
        matches!(
            self,
            ProtocolChoice::Optimal
                | ProtocolChoice::Corner
                | ProtocolChoice::ZooVertex
                | ProtocolChoice::Bloch
                | ProtocolChoice::Cusp
                | ProtocolChoice::ExtremalCat
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolParameters {
    /// Sign string for hyperface and hyperedge protocols.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub string: Option<Vec<i8>>,
    /// Factorized zoo marginals.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<Vec<f64>>,
    /// Full zoo distribution over sign strings, in basis-index order.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distribution: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolConfig {
    pub kind: ProtocolChoice,
    #[serde(default)]
    pub parameters: ProtocolParameters,
}

fn default_repetitions() -> u64 {
    1000
}

fn default_tolerance() -> f64 {
    qproc::sim::DEFAULT_TOLERANCE
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub theta_true: Vec<f64>,
    pub shots: u64,
    #[serde(default = "default_repetitions")]
    pub repetitions: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_true")]
    pub debias: bool,
}

fn default_resolution() -> usize {
    256
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    #[serde(default = "default_resolution")]
    pub resolution: usize,
    /// Sweep of ε values for the epsilon-pair family.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilons: Option<Vec<f64>>,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self {
            resolution: default_resolution(),
            epsilons: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub format: Format,
}

/// A parsed config and the directory relative paths resolve against.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: ProblemConfig,
    pub base_dir: PathBuf,
}

impl LoadedConfig {
    pub fn from_path(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let base_dir = path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        Self::from_json(&text, base_dir)
    }

    pub fn from_json(text: &str, base_dir: PathBuf) -> Result<Self, CliError> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| CliError::Schema(e.to_string()))?;
        match value.get("schema_version") {
            None => return Err(CliError::Schema("missing schema_version".into())),
            Some(v) if v.as_u64() != Some(u64::from(SCHEMA_VERSION)) => {
                return Err(CliError::Schema(format!(
                    "unsupported schema_version {v}, expected {SCHEMA_VERSION}"
                )))
            }
            _ => {}
        }
        let config: ProblemConfig =
            serde_json::from_value(value).map_err(|e| CliError::Schema(e.to_string()))?;
        Ok(Self { config, base_dir })
    }

    pub fn family(&self) -> Result<ProcessFamily, CliError> {
        let fc = &self.config.family;
        let family = match fc.kind {
            FamilyKind::PauliZ => {
                let n = fc
                    .n
                    .ok_or_else(|| CliError::Schema("pauli-z family needs N".into()))?;
                ProcessFamily::pauli_z(n)?
            }
            FamilyKind::Bloch => ProcessFamily::Bloch,
            FamilyKind::EpsilonPair => {
                let eps = fc
                    .epsilon
                    .ok_or_else(|| CliError::Schema("epsilon-pair family needs epsilon".into()))?;
                ProcessFamily::epsilon_pair(eps)?
            }
            FamilyKind::CustomUnitary => {
                let source = fc.generators.as_ref().ok_or_else(|| {
                    CliError::Schema("custom-unitary family needs generators".into())
                })?;
                let gens = match source {
                    GeneratorSource::Inline(g) => g.clone(),
                    GeneratorSource::Path(p) => {
                        let full = self.base_dir.join(p);
                        let text = std::fs::read_to_string(&full).map_err(|source| {
                            CliError::Io {
                                path: full.clone(),
                                source,
                            }
                        })?;
                        serde_json::from_str(&text).map_err(|e| {
                            CliError::Schema(format!("{}: {e}", full.display()))
                        })?
                    }
                };
                ProcessFamily::custom(gens)?
            }
        };
        if let Some(n) = fc.n {
            if n != family.n() {
                return Err(CliError::Schema(format!(
                    "N = {n} does not match the {} family with {} parameters",
                    family.name(),
                    family.n()
                )));
            }
        }
        if self.config.q.len() != family.n() {
            return Err(CliError::Schema(format!(
                "q has {} components, family has {}",
                self.config.q.len(),
                family.n()
            )));
        }
        Ok(family)
    }

    pub fn q(&self) -> Result<OneForm, CliError> {
        OneForm::new(self.config.q.clone()).map_err(|e| CliError::Schema(e.to_string()))
    }
}
