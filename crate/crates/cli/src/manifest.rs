//! Run manifests and metrics logs.
//!
//! `manifest.json` schema (version 1):
//!
//! | key | meaning |
//! |-----|---------|
//! | `schema` | always 1 |
//! | `tool`, `version` | producing binary |
//! | `created_unix` | wall-clock seconds; ignored by replay |
//! | `input` | `{"synthetic": {preset, size, source_shapes, target_shapes}}` or `{"files": {source, target}}` |
//! | `shooting` | `{scheme, n_steps, mu, kernel: {sigma, radius, weights}}` |
//! | `lambda`, `rho` | cost weights |
//! | `optimizer` | full optimizer configuration |
//! | `seed`, `init_noise` | initial momentum `init_noise * smooth_random_field(seed)` |
//! | `save_frames` | number of saved intervals along the final geodesic |
//! | `outcome` | termination, iterations, initial and final cost reports, data fraction |

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use metamorph_core::{CostReport, Iterate, OptimizeConfig, ShapeSpec, ShootingConfig, Termination};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;
pub const METRICS_HEADER: &str = "iteration,total,data_term,v_norm,z_norm,step_size";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Input {
    Synthetic {
        preset: String,
        size: usize,
        source_shapes: Vec<ShapeSpec>,
        target_shapes: Vec<ShapeSpec>,
    },
    Files {
        source: PathBuf,
        target: PathBuf,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub termination: Termination,
    pub iterations: usize,
    pub initial: CostReport,
    pub final_cost: CostReport,
    /// Final data term over the initial one.
    pub data_fraction: f64,
    pub max_abs_z0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema: u32,
    pub tool: String,
    pub version: String,
    pub created_unix: u64,
    pub input: Input,
    pub shooting: ShootingConfig,
    pub lambda: f64,
    pub rho: f64,
    pub optimizer: OptimizeConfig,
    pub seed: u64,
    pub init_noise: f64,
    pub save_frames: usize,
    pub outcome: Option<Outcome>,
}

impl RunManifest {
    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let m: RunManifest = serde_json::from_str(&text).map_err(|e| CliError::json(path, e))?;
        if m.schema != SCHEMA_VERSION {
            return Err(CliError::Usage(format!(
                "{}: unsupported manifest schema {}",
                path.display(),
                m.schema
            )));
        }
        Ok(m)
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        write_json(self, path)
    }
}

pub(crate) fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::json(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// Formats the optimizer history as `metrics.csv`. Numbers use the
/// shortest representation that round-trips, so equal runs give equal bytes.
pub fn metrics_csv(history: &[Iterate]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for it in history {
        let c = &it.cost;
        write!(out, "{}", it.iteration).expect("writing to a string");
        for x in [c.total, c.data_term, c.v_norm, c.z_norm, it.step_size] {
            write!(out, ",{}", number(x)).expect("writing to a string");
        }
        out.push('\n');
    }
    out
}

/// Shortest round-trip digits, in exponent form for very large or small
/// magnitudes and without a trailing `.0`.
fn number(x: f64) -> String {
    let s = format!("{x:?}");
    match s.strip_suffix(".0") {
        Some(whole) => whole.to_string(),
        None => s,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metrics_rows_round_trip() {
        let cost = CostReport {
            total: 0.1 + 0.2,
            data_term: 1e-300,
            v_norm: 3.0,
            z_norm: 0.0,
        };
        let csv = metrics_csv(&[Iterate {
            iteration: 7,
            cost,
            step_size: 0.125,
        }]);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some(METRICS_HEADER));
        let fields: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(fields[0], "7");
        assert_eq!(fields[1].parse::<f64>().unwrap().to_bits(), (0.1f64 + 0.2).to_bits());
        assert_eq!(fields[2], "1e-300");
        assert_eq!(fields[5], "0.125");
    }
}
