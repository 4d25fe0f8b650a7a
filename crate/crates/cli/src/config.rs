//! Declarative run configuration.
//!
//! A TOML file may set `seed`, `threads` and one table per subcommand, e.g.
//!
//! ```toml
//! seed = 7
//! [table2]
//! n_seq = 30
//! t_len = 2000
//! kinds = [{ kind = "beta", q = 5e-4 }]
//! ```
//!
//! Command-line flags override file values, which override built-in defaults.

use std::path::Path;

use scancusum::detect::{DetectorMode, DEFAULT_C_SCAN, DEFAULT_RHO};
use scancusum::experiments::{Table1Config, Table2Config};
use scancusum::metrics::DEFAULT_DELTA0;
use scancusum::{EmParams, IntensitySpec, JumpSpec};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    #[serde(default)]
    pub generate: Option<GenerateConfig>,
    #[serde(default)]
    pub detect: Option<DetectConfig>,
    #[serde(default)]
    pub evaluate: Option<EvaluateConfig>,
    #[serde(default)]
    pub calibrate: Option<CalibrateConfig>,
    #[serde(default)]
    pub bounds: Option<BoundsConfig>,
    #[serde(default)]
    pub table1: Option<Table1Config>,
    #[serde(default)]
    pub table2: Option<Table2Config>,
    #[serde(default)]
    pub pipeline: Option<PipelineConfig>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        toml::from_str(&text).map_err(|e| {
            let (line, column) = e
                .span()
                .map(|s| {
                    let before = &text[..s.start.min(text.len())];
                    let line = before.matches('\n').count() + 1;
                    let column = before.len() - before.rfind('\n').map_or(0, |p| p + 1) + 1;
                    (line, column)
                })
                .unwrap_or((0, 0));
            CliError::Usage(format!(
                "{}: line {line}, column {column}: {}",
                path.display(),
                e.message()
            ))
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateConfig {
    pub n_seq: usize,
    pub t_len: usize,
    pub intensity: IntensitySpec,
    pub jump: JumpSpec,
    pub sigma_x: f64,
    /// Replicate index within the seed's stream family.
    pub replicate: u64,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        GenerateConfig {
            n_seq: 10,
            t_len: 1000,
            intensity: IntensitySpec::Constant { q: 1e-3 },
            jump: JumpSpec::HmmYao { sigma_xi: 1.0 },
            sigma_x: 1.0,
            replicate: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectConfig {
    pub c_scan: f64,
    pub rho: f64,
    pub sigma_x: f64,
    /// Replace `sigma_x` by a robust per-sequence estimate.
    pub estimate_sigma: bool,
    pub mode: DetectorMode,
}

impl Default for DetectConfig {
    fn default() -> Self {
        DetectConfig {
            c_scan: DEFAULT_C_SCAN,
            rho: DEFAULT_RHO,
            sigma_x: 1.0,
            estimate_sigma: false,
            mode: DetectorMode::Plain,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateConfig {
    pub delta0: f64,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        EvaluateConfig { delta0: DEFAULT_DELTA0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrateConfig {
    pub t_len: usize,
    pub alpha: f64,
    pub reps: usize,
    pub sigma_x: f64,
    pub rho: f64,
}

impl Default for CalibrateConfig {
    fn default() -> Self {
        CalibrateConfig {
            t_len: 10_000,
            alpha: 0.05,
            reps: 2000,
            sigma_x: 1.0,
            rho: DEFAULT_RHO,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundsConfig {
    pub delta: Option<f64>,
    pub jump: Option<JumpSpec>,
    pub delta0: f64,
    pub reps: usize,
    /// Fixed horizon; defaults to `ceil(200 / Delta^2)`.
    pub horizon: Option<usize>,
    pub max_horizon: usize,
    pub tol: f64,
}

impl Default for BoundsConfig {
    fn default() -> Self {
        BoundsConfig {
            delta: None,
            jump: None,
            delta0: DEFAULT_DELTA0,
            reps: 10_000,
            horizon: None,
            max_horizon: 1_000_000,
            tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub c_scan: f64,
    pub rho: f64,
    pub sigma_x: f64,
    pub em: EmParams,
    pub delta0: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            c_scan: DEFAULT_C_SCAN,
            rho: DEFAULT_RHO,
            sigma_x: 1.0,
            em: EmParams::default(),
            delta0: DEFAULT_DELTA0,
        }
    }
}
