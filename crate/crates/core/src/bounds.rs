//! Numerical values of the error bounds.
//!
//! * `nu(Delta) = 2 Delta^-2 exp(-2 sum_{i>=1} Phi(-sqrt(i) |Delta| / 2) / i)` is the overshoot function and
//!   `beta_upper = E[Delta^2 nu(Delta)] / 2` the no-error upper bound.
//! * `p(i) = exp(Delta S(i) - i Delta^2 / 2)` on both sides of 0 (independent
//!   walks, `p(0) = 1`) is the limiting likelihood of the change-point offset;
//!   `g_lower(Delta) = E|med(p)|` and `g_scan(Delta) = E|mode(p)|`.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::genmodel::JumpSpec;
use crate::metrics::mean_se;
use crate::rng::Streams;
use crate::stats::{med_of, LogWeightFn, WeightFn};

/// Standard normal lower tail `Phi(-x)`.
pub(crate) fn normal_upper_tail(x: f64) -> f64 {
    0.5 * libm::erfc(x / std::f64::consts::SQRT_2)
}

const DIRECT_TERMS: u64 = 20_000;

/// `sum_{i>=1} Phi(-sqrt(i) a) / i` for `a > 0`.
///
/// Summed directly until the terms are negligible or `DIRECT_TERMS` is
/// reached; the remainder uses Euler-Maclaurin with the exact integral
/// `int_n^inf Phi(-a sqrt(x)) / x dx = 2 int_{a sqrt(n)}^inf Phi(-y) / y dy`.
pub(crate) fn ladder_series(a: f64) -> f64 {
    debug_assert!(a > 0.0);
    let mut sum = 0.0;
    let mut i = 1u64;
    loop {
        let term = normal_upper_tail(a * (i as f64).sqrt()) / i as f64;
        sum += term;
        if term < 1e-17 * sum {
            return sum;
        }
        if i == DIRECT_TERMS {
            break;
        }
        i += 1;
    }
    let n = i as f64;
    let y0 = a * n.sqrt();
    let y1 = (y0 + 40.0).max(40.0);
    let integral = 2.0 * quadrature::integrate(|y: f64| normal_upper_tail(y) / y, y0, y1, 1e-15).integral;
    let f = normal_upper_tail(y0) / n;
    let density = (-0.5 * y0 * y0).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let f_prime = -normal_upper_tail(y0) / (n * n) - density * a / (2.0 * n.sqrt() * n);
    // sum_{i>n} f(i) = int_n^inf f - f(n)/2 - f'(n)/12 + O(f''')
    sum + integral - 0.5 * f - f_prime / 12.0
}

/// `exp(-2 sum_{i>=1} Phi(-sqrt(i) |Delta| / 2) / i)`, i.e. `Delta^2 nu(Delta) / 2`.
fn half_delta_sq_nu(delta: f64) -> f64 {
    (-2.0 * ladder_series(0.5 * delta.abs())).exp()
}

/// Overshoot function `nu(Delta)`; undefined at 0 where its limit is 1.
pub fn overshoot_nu(delta: f64) -> Result<f64> {
    if delta == 0.0 || !delta.is_finite() {
        return Err(Error::domain(format!("overshoot nu needs a finite non-zero Delta, got {delta}")));
    }
    Ok(2.0 / (delta * delta) * half_delta_sq_nu(delta))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    Nu,
    BetaUpper,
    BetaUpperWalk,
    GammaLower,
    GammaScan,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BoundParams {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub jump: Option<JumpSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reps: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub quantity: Quantity,
    pub value: f64,
    pub mc_se: Option<f64>,
    /// `Delta^2 * value` with its standard error, for per-Delta gamma quantities.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub normalized: Option<(f64, f64)>,
    pub params: BoundParams,
    /// Set when a simulated likelihood still carried weight above 1e-8 of
    /// its maximum at the horizon.
    #[serde(default)]
    pub horizon_warning: bool,
}

/// `beta_upper` for a jump law. Closed form for point masses, adaptive
/// quadrature over the density for normal laws (the HMM uses its `N(0, 2 sigma_xi^2)` marginal).
pub fn beta_upper(jump: &JumpSpec, tol: f64) -> Result<BoundReport> {
    jump.validate()?;
    let value = match jump.marginal() {
        JumpSpec::Point { delta } => half_delta_sq_nu(delta),
        JumpSpec::Normal { sd } => {
            let density = |d: f64| (-0.5 * (d / sd).powi(2)).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt());
            // integrand is even; Delta^2 nu(Delta) / 2 <= Delta^2 / 2 makes [0, 1e-6] negligible
            let f = |d: f64| if d < 1e-6 { 0.0 } else { half_delta_sq_nu(d) * density(d) };
            2.0 * quadrature::integrate(f, 0.0, 12.0 * sd, tol).integral
        }
        JumpSpec::HmmYao { .. } => unreachable!(),
    };
    Ok(BoundReport {
        quantity: Quantity::BetaUpper,
        value: value.clamp(0.0, 1.0),
        mc_se: None,
        normalized: None,
        params: BoundParams {
            jump: Some(*jump),
            ..Default::default()
        },
        horizon_warning: false,
    })
}

/// Horizon `M = ceil(200 / Delta^2)` capped at 10^6.
pub fn default_horizon(delta: f64) -> usize {
    ((200.0 / (delta * delta)).ceil() as usize).clamp(1, 1_000_000)
}

/// Monte-Carlo probability that two independent standard normal walks both
/// stay strictly below the line `i |Delta| / 2` for `1 <= i <= horizon`.
pub fn beta_upper_walk_mc(delta: f64, reps: usize, horizon: usize, seed: u64) -> Result<BoundReport> {
    if delta == 0.0 || !delta.is_finite() || reps == 0 || horizon == 0 {
        return Err(Error::domain("walk oracle needs non-zero Delta, reps >= 1 and horizon >= 1"));
    }
    let drift = 0.5 * delta.abs();
    let streams = Streams::new(seed);
    let stays_below = |rng: &mut rand_chacha::ChaCha8Rng| {
        let mut w = 0.0;
        for _ in 0..horizon {
            w += rng.sample::<f64, _>(StandardNormal) - drift;
            if w >= 0.0 {
                return false;
            }
        }
        true
    };
    let hits: usize = (0..reps as u64)
        .into_par_iter()
        .map(|r| {
            let mut plus = streams.stream(&[r, 0]);
            let mut minus = streams.stream(&[r, 1]);
            usize::from(stays_below(&mut plus) && stays_below(&mut minus))
        })
        .sum();
    let p = hits as f64 / reps as f64;
    Ok(BoundReport {
        quantity: Quantity::BetaUpperWalk,
        value: p,
        mc_se: Some((p * (1.0 - p) / reps as f64).sqrt()),
        normalized: None,
        params: BoundParams {
            delta: Some(delta),
            horizon: Some(horizon),
            reps: Some(reps),
            seed: Some(seed),
            ..Default::default()
        },
        horizon_warning: false,
    })
}

/// One realization of `p(i)`, `-M <= i <= M`, stored on the log scale.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomWalkLik {
    pub delta: f64,
    pub horizon: usize,
    pub log_p: LogWeightFn,
}

/// Draws `S+(1..M)` then `S-(1..M)` from `rng`.
pub fn simulate_rw_lik<R: Rng + ?Sized>(delta: f64, horizon: usize, rng: &mut R) -> Result<RandomWalkLik> {
    if horizon == 0 || !delta.is_finite() {
        return Err(Error::domain("random-walk likelihood needs horizon >= 1 and finite Delta"));
    }
    let mut log_w = vec![0.0; 2 * horizon + 1];
    fill_log_lik(delta, horizon, rng, &mut log_w);
    Ok(RandomWalkLik {
        delta,
        horizon,
        log_p: LogWeightFn {
            offset: -(horizon as i64),
            log_w,
        },
    })
}

fn fill_log_lik<R: Rng + ?Sized>(delta: f64, m: usize, rng: &mut R, out: &mut [f64]) {
    let half_sq = 0.5 * delta * delta;
    out[m] = 0.0;
    let mut acc = 0.0;
    for i in 1..=m {
        acc += delta * rng.sample::<f64, _>(StandardNormal) - half_sq;
        out[m + i] = acc;
    }
    acc = 0.0;
    for i in 1..=m {
        acc += delta * rng.sample::<f64, _>(StandardNormal) - half_sq;
        out[m - i] = acc;
    }
}

/// `(|med(p)|, |mode(p)|, horizon_flag)` of one realization.
fn med_mode(log_p: &LogWeightFn) -> (i64, i64, bool) {
    let max = log_p.max();
    let flag = {
        let edge = log_p.log_w[0].max(*log_p.log_w.last().unwrap());
        edge - max > (1e-8f64).ln()
    };
    let w = WeightFn::new(log_p.offset, log_p.log_w.iter().map(|&l| (l - max).exp()).collect())
        .expect("exponentials are non-negative");
    let med = med_of(&w).expect("p(0) > 0");
    let mode = log_p.mode().expect("p(0) > 0");
    (med.abs(), mode.abs(), flag)
}

/// Paired estimates of `g_lower` and `g_scan` from shared realizations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaPair {
    pub lower: BoundReport,
    pub scan: BoundReport,
    /// Mean and standard error of `|mode| - |med|` over realizations.
    pub paired_difference: (f64, f64),
}

/// Monte-Carlo `g_lower(Delta)` and `g_scan(Delta)` at a fixed jump, with
/// common random numbers. Replicate `r` uses stream `[r]` of `seed`.
pub fn gamma_pair_mc(delta: f64, horizon: usize, reps: usize, seed: u64) -> Result<GammaPair> {
    if delta == 0.0 || !delta.is_finite() {
        return Err(Error::domain(format!("gamma functionals need finite non-zero Delta, got {delta}")));
    }
    if reps < 2 || horizon == 0 {
        return Err(Error::domain("gamma functionals need reps >= 2 and horizon >= 1"));
    }
    let streams = Streams::new(seed);
    let draws: Vec<(i64, i64, bool)> = (0..reps as u64)
        .into_par_iter()
        .map_init(
            || vec![0.0; 2 * horizon + 1],
            |buf, r| {
                let mut rng = streams.stream(&[r]);
                fill_log_lik(delta, horizon, &mut rng, buf);
                let lw = LogWeightFn {
                    offset: -(horizon as i64),
                    log_w: std::mem::take(buf),
                };
                let out = med_mode(&lw);
                *buf = lw.log_w;
                out
            },
        )
        .collect();
    let params = BoundParams {
        delta: Some(delta),
        horizon: Some(horizon),
        reps: Some(reps),
        seed: Some(seed),
        ..Default::default()
    };
    let warn = draws.iter().any(|d| d.2);
    let d2 = delta * delta;
    let report = |quantity, values: Vec<f64>| {
        let (m, se) = mean_se(&values);
        let se = se.unwrap_or(0.0);
        BoundReport {
            quantity,
            value: m,
            mc_se: Some(se),
            normalized: Some((d2 * m, d2 * se)),
            params: params.clone(),
            horizon_warning: warn,
        }
    };
    let diffs: Vec<f64> = draws.iter().map(|d| (d.1 - d.0) as f64).collect();
    let (dm, dse) = mean_se(&diffs);
    Ok(GammaPair {
        lower: report(Quantity::GammaLower, draws.iter().map(|d| d.0 as f64).collect()),
        scan: report(Quantity::GammaScan, draws.iter().map(|d| d.1 as f64).collect()),
        paired_difference: (dm, dse.unwrap_or(0.0)),
    })
}

const MIN_GAMMA_REPS: usize = 1000;

fn check_gamma_reps(reps: usize) -> Result<()> {
    if reps < MIN_GAMMA_REPS {
        return Err(Error::domain(format!("gamma estimates need reps >= {MIN_GAMMA_REPS}, got {reps}")));
    }
    Ok(())
}

/// `g_lower(Delta) = E|med(p)|`. Use [`gamma_pair_mc`] for small smoke runs.
pub fn gamma_lower_mc(delta: f64, horizon: usize, reps: usize, seed: u64) -> Result<BoundReport> {
    check_gamma_reps(reps)?;
    Ok(gamma_pair_mc(delta, horizon, reps, seed)?.lower)
}

/// `g_scan(Delta) = E|mode(p)|`.
pub fn gamma_scan_mc(delta: f64, horizon: usize, reps: usize, seed: u64) -> Result<BoundReport> {
    check_gamma_reps(reps)?;
    Ok(gamma_pair_mc(delta, horizon, reps, seed)?.scan)
}

/// `gamma_lower(Delta0)` and `gamma_scan(Delta0)` integrated over the jump
/// law conditioned on `|Delta| >= Delta0`. Each replicate draws its own jump
/// by rejection and uses the default horizon for it (capped at `max_horizon`).
pub fn gamma_pair_over_jump_mc(
    jump: &JumpSpec,
    delta0: f64,
    reps: usize,
    max_horizon: usize,
    seed: u64,
) -> Result<GammaPair> {
    jump.validate()?;
    if !(delta0.is_finite() && delta0 > 0.0) || reps < 2 || max_horizon == 0 {
        return Err(Error::domain("need delta0 > 0, reps >= 2 and max_horizon >= 1"));
    }
    if let JumpSpec::Point { delta } = jump {
        if delta.abs() < delta0 {
            return Err(Error::domain("point jump law has no mass at |Delta| >= delta0"));
        }
    }
    let streams = Streams::new(seed);
    let draws: Vec<(i64, i64, bool)> = (0..reps as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = streams.stream(&[r]);
            let delta = loop {
                let d = jump.draw_marginal(&mut rng);
                if d.abs() >= delta0 {
                    break d;
                }
            };
            let lik = simulate_rw_lik(delta, default_horizon(delta).min(max_horizon), &mut rng)
                .expect("validated inputs");
            med_mode(&lik.log_p)
        })
        .collect();
    let params = BoundParams {
        delta0: Some(delta0),
        jump: Some(*jump),
        horizon: Some(max_horizon),
        reps: Some(reps),
        seed: Some(seed),
        ..Default::default()
    };
    let warn = draws.iter().any(|d| d.2);
    let report = |quantity, values: Vec<f64>| {
        let (m, se) = mean_se(&values);
        BoundReport {
            quantity,
            value: m,
            mc_se: Some(se.unwrap_or(0.0)),
            normalized: None,
            params: params.clone(),
            horizon_warning: warn,
        }
    };
    let diffs: Vec<f64> = draws.iter().map(|d| (d.1 - d.0) as f64).collect();
    let (dm, dse) = mean_se(&diffs);
    Ok(GammaPair {
        lower: report(Quantity::GammaLower, draws.iter().map(|d| d.0 as f64).collect()),
        scan: report(Quantity::GammaScan, draws.iter().map(|d| d.1 as f64).collect()),
        paired_difference: (dm, dse.unwrap_or(0.0)),
    })
}

pub fn nu_report(delta: f64) -> Result<BoundReport> {
    Ok(BoundReport {
        quantity: Quantity::Nu,
        value: overshoot_nu(delta)?,
        mc_se: None,
        normalized: None,
        params: BoundParams {
            delta: Some(delta),
            ..Default::default()
        },
        horizon_warning: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn brute_series(a: f64, terms: u64) -> f64 {
        (1..=terms).map(|i| normal_upper_tail(a * (i as f64).sqrt()) / i as f64).sum()
    }

    #[test]
    fn series_tail_matches_brute_force() {
        for delta in [0.01, 0.02, 0.05] {
            let a: f64 = delta / 2.0;
            let terms = (3000.0 / (a * a)) as u64;
            let brute = brute_series(a, terms);
            let fast = ladder_series(a);
            assert!((brute - fast).abs() < 1e-10 * brute, "{delta}: {brute} vs {fast}");
        }
        let brute = brute_series(0.5, 2000);
        assert!((ladder_series(0.5) - brute).abs() < 1e-14);
    }

    #[test]
    fn nu_examples() {
        let mut prev = f64::INFINITY;
        for k in 0..=60 {
            let d = 0.01 * 10f64.powf(k as f64 / 20.0);
            let nu = overshoot_nu(d).unwrap();
            assert!(nu > 0.0 && nu <= 1.0, "nu({d}) = {nu}");
            assert!(nu < prev);
            prev = nu;
            assert_eq!(nu, overshoot_nu(-d).unwrap());
        }
        let small = overshoot_nu(0.01).unwrap();
        assert!((0.97..=1.0).contains(&small), "{small}");
        assert!((overshoot_nu(10.0).unwrap() - 0.02).abs() < 1e-4);
        assert!(overshoot_nu(0.0).is_err());
    }

    #[test]
    fn beta_upper_point_examples() {
        let b10 = beta_upper(&JumpSpec::Point { delta: 10.0 }, 1e-10).unwrap().value;
        assert!((b10 - 1.0).abs() < 1e-5);
        let b = beta_upper(&JumpSpec::Point { delta: 0.01 }, 1e-10).unwrap().value;
        assert!(b < 1e-4);
        let b1 = beta_upper(&JumpSpec::Point { delta: 1.0 }, 1e-10).unwrap().value;
        assert!((b1 - 0.5 * overshoot_nu(1.0).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn beta_upper_normal_matches_fixed_grid() {
        let sd = std::f64::consts::SQRT_2;
        let q = beta_upper(&JumpSpec::HmmYao { sigma_xi: 1.0 }, 1e-10).unwrap().value;
        // midpoint rule on a fine grid as an independent reference
        let h = 1e-3;
        let grid: f64 = (0..(12.0 * sd / h) as usize)
            .map(|k| {
                let d = (k as f64 + 0.5) * h;
                let dens = (-0.5 * (d / sd).powi(2)).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt());
                2.0 * h * half_delta_sq_nu(d) * dens
            })
            .sum();
        assert!((q - grid).abs() < 1e-6, "{q} vs {grid}");
        assert!((q - 0.3196).abs() < 1e-3, "{q}");
    }

    #[test]
    fn rw_lik_structure() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let lik = simulate_rw_lik(0.7, 50, &mut rng).unwrap();
        assert_eq!(lik.log_p.log_w.len(), 101);
        assert_eq!(lik.log_p.get(0), 0.0);
        assert!(lik.log_p.log_w.iter().all(|l| l.is_finite()));
        assert!(simulate_rw_lik(0.7, 0, &mut rng).is_err());
    }

    #[test]
    fn rw_lik_is_a_martingale() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let n = 100_000;
        let idx = [-3i64, -1, 1, 5];
        let mut sums = [0.0f64; 4];
        let mut sq = [0.0f64; 4];
        for _ in 0..n {
            let lik = simulate_rw_lik(0.5, 5, &mut rng).unwrap();
            for (k, &i) in idx.iter().enumerate() {
                let p = lik.log_p.get(i).exp();
                sums[k] += p;
                sq[k] += p * p;
            }
        }
        for k in 0..4 {
            let m = sums[k] / n as f64;
            let se = ((sq[k] / n as f64 - m * m) / n as f64).sqrt();
            assert!((m - 1.0).abs() < 3.0 * se, "i={} mean {m} se {se}", idx[k]);
        }
    }

    #[test]
    fn gamma_pair_is_deterministic_and_ordered() {
        let a = gamma_pair_mc(1.0, default_horizon(1.0), 2000, 3).unwrap();
        let b = gamma_pair_mc(1.0, default_horizon(1.0), 2000, 3).unwrap();
        assert_eq!(a, b);
        assert!(!a.lower.horizon_warning);
        assert!(a.scan.value >= a.lower.value);
        let (l, s) = (a.lower.normalized.unwrap().0, a.scan.normalized.unwrap().0);
        assert!(l > 2.0 && l < 3.5 && s > l, "{l} {s}");
        assert!(gamma_pair_mc(0.0, 10, 10, 1).is_err());
    }

    #[test]
    fn gamma_symmetric_in_sign() {
        let h = default_horizon(0.8);
        let plus = gamma_pair_mc(0.8, h, 4000, 11).unwrap();
        let minus = gamma_pair_mc(-0.8, h, 4000, 12).unwrap();
        for (p, m) in [(&plus.lower, &minus.lower), (&plus.scan, &minus.scan)] {
            let se = (p.mc_se.unwrap().powi(2) + m.mc_se.unwrap().powi(2)).sqrt();
            assert!((p.value - m.value).abs() < 3.0 * se);
        }
    }

    #[test]
    fn wrappers_need_enough_reps() {
        assert!(gamma_lower_mc(1.0, 100, 999, 1).is_err());
        let l = gamma_lower_mc(1.0, 400, 1000, 1).unwrap();
        let s = gamma_scan_mc(1.0, 400, 1000, 1).unwrap();
        let pair = gamma_pair_mc(1.0, 400, 1000, 1).unwrap();
        assert_eq!((l, s), (pair.lower, pair.scan));
    }

    #[test]
    fn short_horizon_is_flagged() {
        let r = gamma_pair_mc(0.1, 10, 20, 1).unwrap();
        assert!(r.lower.horizon_warning);
    }

    #[test]
    fn horizon_doubling_is_stable() {
        let d = 0.5;
        let base = gamma_pair_mc(d, default_horizon(d), 3000, 21).unwrap();
        let double = gamma_pair_mc(d, 2 * default_horizon(d), 3000, 21).unwrap();
        // same seed: the first M steps of every walk coincide, so differences come from the tail only
        for (a, b) in [(&base.lower, &double.lower), (&base.scan, &double.scan)] {
            assert!((a.value - b.value).abs() < a.mc_se.unwrap());
        }
    }

    #[test]
    fn integrated_gamma_over_point_law_matches_fixed_delta() {
        let a = gamma_pair_over_jump_mc(&JumpSpec::Point { delta: 1.0 }, 0.5, 2000, 1_000_000, 8).unwrap();
        let b = gamma_pair_mc(1.0, default_horizon(1.0), 2000, 9).unwrap();
        let se = (a.lower.mc_se.unwrap().powi(2) + b.lower.mc_se.unwrap().powi(2)).sqrt();
        assert!((a.lower.value - b.lower.value).abs() < 3.0 * se);
        assert!(gamma_pair_over_jump_mc(&JumpSpec::Point { delta: 0.2 }, 0.5, 10, 100, 1).is_err());
        let n = gamma_pair_over_jump_mc(&JumpSpec::Normal { sd: 1.0 }, 1.0, 500, 1_000_000, 2).unwrap();
        assert!(n.scan.value >= n.lower.value - 3.0 * n.paired_difference.1);
    }
}
