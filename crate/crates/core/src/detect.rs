//! Scan-CUSUM detection.
//!
//! Windows of half-length `ell_b = ceil(rho^b)` are scanned from the smallest
//! scale upwards. Whenever the largest admissible `|Z_b(t)|` reaches
//! `c_scan`, the change-point is placed at the CUSUM (or intensity-weighted
//! profile likelihood) maximizer inside `I = (t* - ell_b, t* + ell_b)` and the
//! neighbourhood of radius `ell_b - 1` around it leaves the admissible set.

use std::collections::BTreeSet;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_finite, Error, Result};
use crate::rng::Streams;
use crate::stats::{first_argmax, log_profile_unchecked, Interval, LogWeightFn, PrefixSums};

/// Threshold used for the multi-sequence experiments (Type I error 0.05 at T = 10^4).
pub const DEFAULT_C_SCAN: f64 = 5.05;
pub const DEFAULT_RHO: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DetectorMode {
    /// Place estimates at the maximizer of `|Z_I(t)|`.
    #[default]
    Plain,
    /// Place estimates at the maximizer of `a(t) L_I(t)`.
    Extended,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub c_scan: f64,
    pub rho: f64,
    pub sigma_x: f64,
    #[serde(default)]
    pub mode: DetectorMode,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            c_scan: DEFAULT_C_SCAN,
            rho: DEFAULT_RHO,
            sigma_x: 1.0,
            mode: DetectorMode::Plain,
        }
    }
}

impl DetectorConfig {
    pub fn new(c_scan: f64, sigma_x: f64) -> Result<Self> {
        let cfg = Self {
            c_scan,
            sigma_x,
            ..Self::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_rho(mut self, rho: f64) -> Result<Self> {
        self.rho = rho;
        self.validate()?;
        Ok(self)
    }

    pub fn with_mode(mut self, mode: DetectorMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c_scan.is_finite() && self.c_scan > 0.0) {
            return Err(Error::domain(format!("c_scan must be positive, got {}", self.c_scan)));
        }
        if !(self.rho > 1.0 && self.rho <= 2.0) {
            return Err(Error::domain(format!("rho must lie in (1, 2], got {}", self.rho)));
        }
        if !(self.sigma_x.is_finite() && self.sigma_x > 0.0) {
            return Err(Error::domain(format!("sigma_x must be positive, got {}", self.sigma_x)));
        }
        Ok(())
    }
}

/// Window half-lengths `ell_b` for `b = 0 ..= b_T`, where `b_T` is the largest
/// `b` with `2 ell_b <= T - 1`. Repeated values (possible for `rho < 2`) are kept.
pub fn window_lengths(rho: f64, t_len: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut b = 0i32;
    loop {
        let ell = rho.powi(b).ceil() as usize;
        if 2 * ell + 1 > t_len {
            break;
        }
        out.push(ell);
        b += 1;
    }
    out
}

/// One estimated change-point with the interval and scale that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub tau_hat: usize,
    pub interval: Interval,
    /// `log L_I(t)` for the interior of `interval`.
    pub log_profile: LogWeightFn,
    /// Scale index `b`.
    pub scale: usize,
    pub window: usize,
    /// Scan centre `t*`.
    pub center: usize,
    /// Signed `Z_b(t*)` at admission.
    pub scan_z: f64,
    /// Admission order (0 for the first placement).
    pub order: usize,
    /// Set when the extended rule had zero intensity over the whole interval
    /// and fell back to the CUSUM maximizer.
    #[serde(default)]
    pub fallback: bool,
}

/// Estimated change-points of one sequence, sorted by location.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionResult {
    pub t_len: usize,
    pub detections: Vec<Detection>,
}

impl DetectionResult {
    pub fn tau_hat(&self) -> Vec<usize> {
        self.detections.iter().map(|d| d.tau_hat).collect()
    }

    pub fn intervals(&self) -> Vec<Interval> {
        self.detections.iter().map(|d| d.interval).collect()
    }

    pub fn len(&self) -> usize {
        self.detections.len()
    }

    pub fn is_empty(&self) -> bool {
        self.detections.is_empty()
    }
}

enum Placement<'a> {
    Cusum,
    Weighted(&'a [f64]),
}

/// Plain scan-CUSUM.
pub fn scan_cusum(x: &[f64], cfg: &DetectorConfig) -> Result<DetectionResult> {
    run(x, cfg, Placement::Cusum)
}

/// Scan-CUSUM with the within-interval estimate chosen to maximize
/// `log a(t) + log L_I(t)`. `intensity[t - 1]` is `a(t)` for `1 <= t <= T - 1`.
pub fn extended_scan_cusum(x: &[f64], intensity: &[f64], cfg: &DetectorConfig) -> Result<DetectionResult> {
    if intensity.len() + 1 != x.len() {
        return Err(Error::domain(format!(
            "intensity must have length T - 1 = {}, got {}",
            x.len().saturating_sub(1),
            intensity.len()
        )));
    }
    if let Some(k) = intensity.iter().position(|a| !(a.is_finite() && *a >= 0.0)) {
        return Err(Error::domain(format!(
            "intensity a({}) = {} must be finite and non-negative",
            k + 1,
            intensity[k]
        )));
    }
    run(x, cfg, Placement::Weighted(intensity))
}

/// Dispatches on `cfg.mode`; `intensity` is required for the extended mode.
pub fn detect(x: &[f64], intensity: Option<&[f64]>, cfg: &DetectorConfig) -> Result<DetectionResult> {
    match (cfg.mode, intensity) {
        (DetectorMode::Plain, _) => scan_cusum(x, cfg),
        (DetectorMode::Extended, Some(a)) => extended_scan_cusum(x, a, cfg),
        (DetectorMode::Extended, None) => Err(Error::domain("extended mode requires an intensity function")),
    }
}

fn run(x: &[f64], cfg: &DetectorConfig, placement: Placement<'_>) -> Result<DetectionResult> {
    cfg.validate()?;
    if x.len() < 3 {
        return Err(Error::domain(format!("scan-CUSUM needs T >= 3, got T = {}", x.len())));
    }
    check_finite(x)?;
    let ps = PrefixSums::new(x, cfg.sigma_x)?;
    let t_len = x.len();
    let mut placed: BTreeSet<usize> = BTreeSet::new();
    let mut detections = Vec::new();
    let mut prev_ell = 0;
    for (b, ell) in window_lengths(cfg.rho, t_len).into_iter().enumerate() {
        // A repeated window length cannot admit anything new: its while-loop already ran to exhaustion.
        if ell == prev_ell {
            continue;
        }
        prev_ell = ell;
        let mut candidates: Vec<(f64, usize, f64)> = (ell..=t_len - ell)
            .filter_map(|t| {
                let z = ps.scan_unchecked(ell, t);
                (z.abs() >= cfg.c_scan).then_some((z.abs(), t, z))
            })
            .collect();
        // Descending |Z|, ties to the smallest t. The admissible set only shrinks and the
        // statistics do not change, so walking this order reproduces the repeated argmax.
        candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        for (_, center, z) in candidates {
            if near(&placed, center, ell - 1) {
                continue;
            }
            debug_assert!(center >= ell && center + ell <= t_len);
            let interval = Interval {
                u: center - ell,
                v: center + ell,
            };
            let log_profile = log_profile_unchecked(&ps, interval);
            let (tau_hat, fallback) = place(&log_profile, &placement);
            debug_assert!(!placed.contains(&tau_hat));
            placed.insert(tau_hat);
            detections.push(Detection {
                tau_hat,
                interval,
                log_profile,
                scale: b,
                window: ell,
                center,
                scan_z: z,
                order: detections.len(),
                fallback,
            });
        }
    }
    detections.sort_by_key(|d| d.tau_hat);
    Ok(DetectionResult { t_len, detections })
}

fn near(placed: &BTreeSet<usize>, t: usize, radius: usize) -> bool {
    placed.range(t.saturating_sub(radius)..=t + radius).next().is_some()
}

fn place(log_profile: &LogWeightFn, placement: &Placement<'_>) -> (usize, bool) {
    let first = log_profile.offset as usize;
    match placement {
        // argmax |Z_I| == argmax Z_I^2 / 2
        Placement::Cusum => (first + first_argmax(&log_profile.log_w), false),
        Placement::Weighted(a) => {
            let scores: Vec<f64> = log_profile
                .log_w
                .iter()
                .enumerate()
                .map(|(k, l)| a[first + k - 1].ln() + l)
                .collect();
            if scores.iter().all(|s| *s == f64::NEG_INFINITY) {
                (first + first_argmax(&log_profile.log_w), true)
            } else {
                (first + first_argmax(&scores), false)
            }
        }
    }
}

/// `sqrt(2 log(T log T))`.
pub fn theoretical_threshold(t_len: usize) -> Result<f64> {
    if t_len < 3 {
        return Err(Error::domain(format!("theoretical threshold needs T >= 3, got {t_len}")));
    }
    let t = t_len as f64;
    Ok((2.0 * (t * t.ln()).ln()).sqrt())
}

/// Largest `|Z_b(t)|` over every scale and admissible centre. On a sequence
/// with no earlier placements the scan phase triggers iff this reaches `c_scan`.
pub fn max_scan_stat(ps: &PrefixSums, rho: f64) -> f64 {
    let t_len = ps.len();
    let mut best: f64 = 0.0;
    let mut prev = 0;
    for ell in window_lengths(rho, t_len) {
        if ell == prev {
            continue;
        }
        prev = ell;
        for t in ell..=t_len - ell {
            best = best.max(ps.scan_unchecked(ell, t).abs());
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub c_scan: f64,
    /// Fraction of null replicates that trigger at `c_scan`.
    pub false_alarm_rate: f64,
    pub alpha: f64,
    pub reps: usize,
    pub t_len: usize,
    pub rho: f64,
    pub sigma_x: f64,
    pub seed: u64,
}

/// Monte-Carlo calibration of `c_scan` to a target false-alarm probability
/// `P(J_hat > 0 | no change-points) = alpha`.
///
/// Each null replicate is reduced to its maximal scan statistic; bisection
/// over `c` then runs on the empirical exceedance fraction.
pub fn calibrate_threshold(
    t_len: usize,
    sigma_x: f64,
    alpha: f64,
    reps: usize,
    seed: u64,
    rho: f64,
) -> Result<Calibration> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::domain(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if reps < 100 {
        return Err(Error::domain(format!("calibration needs reps >= 100, got {reps}")));
    }
    if t_len < 3 {
        return Err(Error::domain(format!("calibration needs T >= 3, got {t_len}")));
    }
    DetectorConfig::new(1.0, sigma_x)?.with_rho(rho)?;
    let streams = Streams::new(seed);
    let maxima: Vec<f64> = (0..reps as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = streams.stream(&[r]);
            let x: Vec<f64> = (0..t_len)
                .map(|_| sigma_x * rng.sample::<f64, _>(StandardNormal))
                .collect();
            let ps = PrefixSums::new(&x, sigma_x).expect("finite noise");
            max_scan_stat(&ps, rho)
        })
        .collect();
    let fraction = |c: f64| maxima.iter().filter(|&&m| m >= c).count() as f64 / reps as f64;
    let mut lo = 0.0;
    let mut hi = maxima.iter().copied().fold(0.0, f64::max) + 1.0;
    if fraction(lo) <= alpha {
        hi = lo;
    }
    for _ in 0..200 {
        if hi - lo <= 1e-12 * hi.max(1.0) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if fraction(mid) > alpha {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Calibration {
        c_scan: hi,
        false_alarm_rate: fraction(hi),
        alpha,
        reps,
        t_len,
        rho,
        sigma_x,
        seed,
    })
}
