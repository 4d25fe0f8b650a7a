//! Simulation campaigns behind the two reference tables.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{default_horizon, gamma_pair_mc};
use crate::detect::{DetectorConfig, DEFAULT_C_SCAN, DEFAULT_RHO};
use crate::error::{Error, Result};
use crate::genmodel::{sample_multiseq, IntensitySpec, JumpSpec};
use crate::metrics::{aggregate, EvalReport, DEFAULT_DELTA0};
use crate::multiseq::{run_pipeline, EmParams};
use crate::rng::Streams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Table1Config {
    pub grid: Vec<f64>,
    pub reps: usize,
    /// Upper bound on the per-Delta horizon `ceil(200 / Delta^2)`.
    pub max_horizon: usize,
    pub seed: u64,
}

impl Default for Table1Config {
    fn default() -> Self {
        Table1Config {
            grid: vec![1.0, 0.3, 0.1, 0.03],
            reps: 10_000,
            max_horizon: 1_000_000,
            seed: 20_240_601,
        }
    }
}

/// One row: `Delta^2 g_lower(Delta)` and `Delta^2 g_scan(Delta)` with their
/// Monte-Carlo standard errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table1Row {
    pub delta: f64,
    pub lower: f64,
    pub lower_se: f64,
    pub scan: f64,
    pub scan_se: f64,
    pub horizon: usize,
    pub reps: usize,
    pub horizon_warning: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table1Report {
    pub config: Table1Config,
    pub rows: Vec<Table1Row>,
}

/// Row `k` uses the child stream family `k` of `seed`.
pub fn run_table1(cfg: &Table1Config) -> Result<Table1Report> {
    if cfg.grid.is_empty() {
        return Err(Error::domain("table1 grid is empty"));
    }
    let root = Streams::new(cfg.seed);
    let rows = cfg
        .grid
        .iter()
        .enumerate()
        .map(|(k, &delta)| {
            let horizon = default_horizon(delta).min(cfg.max_horizon);
            let pair = gamma_pair_mc(delta, horizon, cfg.reps, root.child(k as u64).seed)?;
            let (lower, lower_se) = pair.lower.normalized.expect("per-delta report");
            let (scan, scan_se) = pair.scan.normalized.expect("per-delta report");
            Ok(Table1Row {
                delta,
                lower,
                lower_se,
                scan,
                scan_se,
                horizon,
                reps: cfg.reps,
                horizon_warning: pair.lower.horizon_warning,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Table1Report {
        config: cfg.clone(),
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Table2Config {
    pub n_seq: usize,
    pub t_len: usize,
    pub q: f64,
    /// Intensity laws; empty means the three reference laws at `q`.
    pub kinds: Vec<IntensitySpec>,
    pub reps: usize,
    pub c_scan: f64,
    pub rho: f64,
    pub sigma_x: f64,
    pub sigma_xi: f64,
    pub em: EmParams,
    /// Jump cut-off for the gamma column.
    pub delta0: f64,
    pub seed: u64,
}

impl Default for Table2Config {
    fn default() -> Self {
        Table2Config {
            n_seq: 100,
            t_len: 10_000,
            q: 1e-4,
            kinds: Vec::new(),
            reps: 100,
            c_scan: DEFAULT_C_SCAN,
            rho: DEFAULT_RHO,
            sigma_x: 1.0,
            sigma_xi: 1.0,
            em: EmParams::default(),
            delta0: DEFAULT_DELTA0,
            seed: 20_240_602,
        }
    }
}

impl Table2Config {
    /// Reduced campaign that keeps the qualitative ordering of the full one.
    pub fn scaled() -> Self {
        Table2Config {
            n_seq: 30,
            t_len: 2000,
            q: 5e-4,
            reps: 20,
            ..Default::default()
        }
    }

    /// Point mass at `q`; mass 0.01 at `100 q` and 0.99 at 0; `Beta(q / (1 - q), 1)`.
    pub fn reference_kinds(q: f64) -> Result<Vec<IntensitySpec>> {
        Ok(vec![
            IntensitySpec::constant(q)?,
            IntensitySpec::two_point(q, 0.01, 100.0)?,
            IntensitySpec::beta(q)?,
        ])
    }

    pub fn resolved_kinds(&self) -> Result<Vec<IntensitySpec>> {
        if self.kinds.is_empty() {
            Self::reference_kinds(self.q)
        } else {
            self.kinds.iter().map(|k| k.validate().map(|_| k.clone())).collect()
        }
    }

    fn detector(&self) -> Result<DetectorConfig> {
        DetectorConfig::new(self.c_scan, self.sigma_x)?.with_rho(self.rho)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table2Row {
    pub kind: IntensitySpec,
    pub label: String,
    pub no_share: EvalReport,
    pub with_share: EvalReport,
    /// Replicates in which no sequence had a true change-point.
    pub skipped: usize,
    /// Mean count of positions with `a_hat > 1` per replicate.
    pub mean_positions_above_one: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table2Report {
    pub config: Table2Config,
    pub rows: Vec<Table2Row>,
}

/// Row `k` draws replicate `r` from the child family `k` of `seed`, so rows
/// are independent and each replicate is reproducible on its own.
pub fn run_table2(cfg: &Table2Config, progress: Option<&(dyn Fn(&str) + Sync)>) -> Result<Table2Report> {
    if cfg.reps == 0 || cfg.n_seq == 0 {
        return Err(Error::domain("table2 needs reps >= 1 and n_seq >= 1"));
    }
    let det = cfg.detector()?;
    cfg.em.validate()?;
    let jump = JumpSpec::HmmYao { sigma_xi: cfg.sigma_xi };
    jump.validate()?;
    let root = Streams::new(cfg.seed);
    let mut rows = Vec::new();
    for (k, kind) in cfg.resolved_kinds()?.into_iter().enumerate() {
        let streams = root.child(k as u64);
        let outcomes = (0..cfg.reps as u64)
            .into_par_iter()
            .map(|r| {
                let ds = sample_multiseq(&kind, cfg.n_seq, cfg.t_len, &jump, cfg.sigma_x, &streams, r)?;
                let out = run_pipeline(&ds, &det, &cfg.em, cfg.delta0)?;
                if let Some(p) = progress {
                    p(&format!("{}: replicate {} done", kind.label(), r + 1));
                }
                Ok((out.no_share, out.with_share, out.em.positions_above_one))
            })
            .collect::<Result<Vec<_>>>()?;
        let no: Vec<_> = outcomes.iter().filter_map(|o| o.0).collect();
        let with: Vec<_> = outcomes.iter().filter_map(|o| o.1).collect();
        let skipped = cfg.reps - no.len();
        if no.is_empty() {
            return Err(Error::domain(format!(
                "no replicate of {} produced a true change-point",
                kind.label()
            )));
        }
        rows.push(Table2Row {
            label: kind.label(),
            kind,
            no_share: aggregate(&no)?,
            with_share: aggregate(&with)?,
            skipped,
            mean_positions_above_one: outcomes.iter().map(|o| o.2 as f64).sum::<f64>() / cfg.reps as f64,
        });
    }
    Ok(Table2Report {
        config: cfg.clone(),
        rows,
    })
}
