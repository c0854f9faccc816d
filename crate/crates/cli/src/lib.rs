//! Command-line front end for the estimation bounds library.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

use std::path::{Path, PathBuf};

use serde::Serialize;

pub use config::{Format, LoadedConfig, ProblemConfig};
pub use error::{CliError, EXIT_OK, EXIT_USAGE, EXIT_VERIFICATION};

use commands::SimulateOverrides;
use output::{csv_table, csv_vector, float, to_json};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Bound,
    Protocol,
    Simulate,
    Geometry,
    Verify,
}

#[derive(Debug, Clone, Default)]
pub struct Options {
    pub seed: Option<u64>,
    pub shots: Option<u64>,
    pub output: Option<PathBuf>,
    pub format: Option<Format>,
}

/// Rendered report plus the exit code it implies.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rendered {
    pub text: String,
    pub exit_code: i32,
    pub path: Option<PathBuf>,
}

fn unsupported_csv(command: &str) -> CliError {
    CliError::Usage(format!("csv output is not available for {command}"))
}

fn render<T: Serialize>(
    value: &T,
    format: Format,
    csv: impl FnOnce(&T) -> Result<String, CliError>,
) -> Result<String, CliError> {
    match format {
        Format::Json => to_json(value),
        Format::Csv => csv(value),
    }
}

/// Runs a command against a config file and renders the report, without touching stdout.
pub fn execute(command: Command, config: &Path, opts: &Options) -> Result<Rendered, CliError> {
    let cfg = LoadedConfig::from_path(config)?;
    let out_cfg = cfg.config.output.clone().unwrap_or_default();
    let format = opts.format.unwrap_or(out_cfg.format);
    let path = opts
        .output
        .clone()
        .or_else(|| out_cfg.path.map(|p| cfg.base_dir.join(p)));
    let overrides = SimulateOverrides {
        seed: opts.seed,
        shots: opts.shots,
    };
    let (text, exit_code) = match command {
        Command::Bound => {
            let r = commands::bound(&cfg)?;
            let text = render(&r, format, |r| {
                Ok(csv_table(
                    &["family", "q", "b_min", "norm", "dual_norm", "variance_bound", "at_corner"],
                    &[vec![
                        r.family.name().to_string(),
                        csv_vector(&r.q),
                        csv_vector(r.b_min.b_min.components()),
                        float(r.b_min.norm),
                        float(r.b_min.dual_norm),
                        float(r.variance_bound),
                        r.b_min.at_corner.to_string(),
                    ]],
                ))
            })?;
            (text, EXIT_OK)
        }
        Command::Protocol => {
            let r = commands::protocol(&cfg)?;
            let code = if r.claims_optimal && r.kissing_residual > commands::KISSING_TOL {
                EXIT_VERIFICATION
            } else {
                EXIT_OK
            };
            (render(&r, format, |_| Err(unsupported_csv("protocol")))?, code)
        }
        Command::Simulate => {
            let r = commands::simulate(&cfg, overrides)?;
            let code = if r.estimator.within_tolerance { EXIT_OK } else { EXIT_VERIFICATION };
            let text = render(&r, format, |r| {
                Ok(csv_table(
                    &["protocol", "dq", "M", "R", "variance", "bound", "z_score", "seed"],
                    &[vec![
                        r.protocol.to_string(),
                        csv_vector(&r.q),
                        r.shots.to_string(),
                        r.repetitions.to_string(),
                        float(r.estimator.empirical_variance),
                        float(r.estimator.bound),
                        float(r.estimator.z_score),
                        r.seed.to_string(),
                    ]],
                ))
            })?;
            (text, code)
        }
        Command::Geometry => {
            let r = commands::geometry(&cfg)?;
            (render(&r, format, |_| Err(unsupported_csv("geometry")))?, EXIT_OK)
        }
        Command::Verify => {
            let r = commands::verify(&cfg, overrides)?;
            let code = if r.passed { EXIT_OK } else { EXIT_VERIFICATION };
            let text = render(&r, format, |r| {
                let rows: Vec<Vec<String>> = r
                    .checks
                    .iter()
                    .map(|c| {
                        vec![
                            c.name.clone(),
                            c.passed.to_string(),
                            c.value.map(float).unwrap_or_default(),
                            float(c.threshold),
                        ]
                    })
                    .collect();
                Ok(csv_table(&["check", "passed", "value", "threshold"], &rows))
            })?;
            (text, code)
        }
    };
    Ok(Rendered {
        text,
        exit_code,
        path,
    })
}

/// Executes and writes the report to its destination; returns the process exit code.
pub fn run(command: Command, config: &Path, opts: &Options) -> i32 {
    let result = execute(command, config, opts).and_then(|r| {
        match &r.path {
            Some(p) => std::fs::write(p, &r.text).map_err(|source| CliError::Io {
                path: p.clone(),
                source,
            })?,
            None => print!("{}", r.text),
        }
        Ok(r.exit_code)
    });
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("{}", e.to_json());
            e.exit_code()
        }
    }
}
