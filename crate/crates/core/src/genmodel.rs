//! Samplers for the Bayesian change-point models.
//!
//! Intensities `a(t)` are drawn i.i.d. from a law `G_q`; change-points are
//! independent Bernoulli(`a(t)`) indicators; the mean path moves either by an
//! i.i.d. jump (`mu(t+1) = mu(t) + Y(t) Delta(t)`) or by the Yao HMM
//! (`mu(t+1) = (1 - Y(t)) mu(t) + Y(t) xi(t)`); observations add Gaussian noise.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{Streams, INTENSITY_KEY};

/// Generator law `G_q` of the per-position intensities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum IntensitySpec {
    /// Point mass at `q`.
    Constant { q: f64 },
    /// Mass `mass_hi` at `scale * q`, the rest at 0.
    TwoPoint { q: f64, mass_hi: f64, scale: f64 },
    /// `Beta(q / (1 - q), 1)`, whose CDF is `x^(q/(1-q))`.
    Beta { q: f64 },
    /// Tabulated CDF: `cdf[k] = G(grid[k])`, linear in between, with
    /// `grid` increasing from 0 to 1 and `cdf` ending at 1.
    Custom { grid: Vec<f64>, cdf: Vec<f64> },
}

impl IntensitySpec {
    pub fn constant(q: f64) -> Result<Self> {
        let s = IntensitySpec::Constant { q };
        s.validate()?;
        Ok(s)
    }

    pub fn two_point(q: f64, mass_hi: f64, scale: f64) -> Result<Self> {
        let s = IntensitySpec::TwoPoint { q, mass_hi, scale };
        s.validate()?;
        Ok(s)
    }

    pub fn beta(q: f64) -> Result<Self> {
        let s = IntensitySpec::Beta { q };
        s.validate()?;
        Ok(s)
    }

    pub fn custom(grid: Vec<f64>, cdf: Vec<f64>) -> Result<Self> {
        let s = IntensitySpec::Custom { grid, cdf };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 && v <= 1.0 {
                Ok(())
            } else {
                Err(Error::domain(format!("{name} must lie in (0, 1], got {v}")))
            }
        };
        match self {
            IntensitySpec::Constant { q } => unit("q", *q),
            IntensitySpec::TwoPoint { q, mass_hi, scale } => {
                unit("q", *q)?;
                unit("mass_hi", *mass_hi)?;
                if !(scale.is_finite() && *scale > 0.0 && scale * q <= 1.0) {
                    return Err(Error::domain(format!(
                        "two-point high value scale * q = {} must lie in (0, 1]",
                        scale * q
                    )));
                }
                Ok(())
            }
            IntensitySpec::Beta { q } => {
                if q.is_finite() && *q > 0.0 && *q < 1.0 {
                    Ok(())
                } else {
                    Err(Error::domain(format!("beta intensity needs 0 < q < 1, got {q}")))
                }
            }
            IntensitySpec::Custom { grid, cdf } => {
                if grid.len() < 2 || grid.len() != cdf.len() {
                    return Err(Error::domain("custom intensity needs matching grid and cdf of length >= 2"));
                }
                if grid[0] != 0.0 || *grid.last().unwrap() != 1.0 {
                    return Err(Error::domain("custom intensity grid must run from 0 to 1"));
                }
                if grid.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(Error::domain("custom intensity grid must be strictly increasing"));
                }
                if cdf.iter().any(|c| !(0.0..=1.0).contains(c)) || cdf.windows(2).any(|w| w[1] < w[0]) {
                    return Err(Error::domain("custom cdf must be non-decreasing within [0, 1]"));
                }
                if *cdf.last().unwrap() != 1.0 {
                    return Err(Error::domain("custom cdf must end at 1"));
                }
                Ok(())
            }
        }
    }

    /// Mean of `G_q`.
    pub fn mean(&self) -> f64 {
        match self {
            IntensitySpec::Constant { q } | IntensitySpec::Beta { q } => *q,
            IntensitySpec::TwoPoint { q, mass_hi, scale } => mass_hi * scale * q,
            IntensitySpec::Custom { grid, cdf } => trapezoid(grid, cdf, |g| 1.0 - g),
        }
    }

    /// Short label used in tables.
    pub fn label(&self) -> String {
        match self {
            IntensitySpec::Constant { q } => format!("constant(q={q})"),
            IntensitySpec::TwoPoint { q, mass_hi, scale } => {
                format!("two_point(q={q},mass={mass_hi},scale={scale})")
            }
            IntensitySpec::Beta { q } => format!("beta(q={q})"),
            IntensitySpec::Custom { grid, .. } => format!("custom(knots={})", grid.len()),
        }
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            IntensitySpec::Constant { q } => *q,
            IntensitySpec::TwoPoint { q, mass_hi, scale } => {
                if rng.random::<f64>() < *mass_hi {
                    scale * q
                } else {
                    0.0
                }
            }
            IntensitySpec::Beta { q } => {
                // inverse CDF: U^(1/alpha) with alpha = q / (1 - q)
                let u: f64 = rng.random();
                (u.ln() * (1.0 - q) / q).exp()
            }
            IntensitySpec::Custom { grid, cdf } => {
                let u: f64 = rng.random();
                if u < cdf[0] {
                    return grid[0];
                }
                let k = cdf.partition_point(|&c| c < u).clamp(1, grid.len() - 1);
                let (c0, c1) = (cdf[k - 1], cdf[k]);
                if c1 > c0 {
                    grid[k - 1] + (u - c0) / (c1 - c0) * (grid[k] - grid[k - 1])
                } else {
                    grid[k]
                }
            }
        }
    }
}

fn trapezoid(grid: &[f64], cdf: &[f64], f: impl Fn(f64) -> f64) -> f64 {
    grid.windows(2)
        .zip(cdf.windows(2))
        .map(|(g, c)| 0.5 * (g[1] - g[0]) * (f(c[0]) + f(c[1])))
        .sum()
}

/// Jump law `F`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum JumpSpec {
    Normal { sd: f64 },
    Point { delta: f64 },
    /// Yao HMM: new level `xi ~ N(0, sigma_xi^2)` at each change-point.
    HmmYao { sigma_xi: f64 },
}

impl JumpSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            JumpSpec::Normal { sd } if sd.is_finite() && sd > 0.0 => Ok(()),
            JumpSpec::Point { delta } if delta.is_finite() && delta != 0.0 => Ok(()),
            JumpSpec::HmmYao { sigma_xi } if sigma_xi.is_finite() && sigma_xi > 0.0 => Ok(()),
            JumpSpec::Point { .. } => Err(Error::domain("point jump law needs a finite non-zero delta")),
            _ => Err(Error::domain(format!("jump law {self:?} needs a positive finite scale"))),
        }
    }

    /// Marginal law of a single jump: `N(0, 2 sigma_xi^2)` for the HMM.
    pub fn marginal(&self) -> JumpSpec {
        match *self {
            JumpSpec::HmmYao { sigma_xi } => JumpSpec::Normal {
                sd: std::f64::consts::SQRT_2 * sigma_xi,
            },
            other => other,
        }
    }

    pub(crate) fn draw_marginal<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.marginal() {
            JumpSpec::Normal { sd } => sd * rng.sample::<f64, _>(StandardNormal),
            JumpSpec::Point { delta } => delta,
            JumpSpec::HmmYao { .. } => unreachable!(),
        }
    }
}

/// True change-points and mean path of one sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    /// Change-points `t` with `mu(t+1) != mu(t)`, increasing, in `1..T-1`.
    pub tau: Vec<usize>,
    /// `Delta(tau_j) = mu(tau_j + 1) - mu(tau_j)`.
    pub delta: Vec<f64>,
    pub mu0: f64,
    /// Mean path `mu(1..=T)`; `mu[t - 1]` is `mu(t)`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub mu: Vec<f64>,
}

impl GroundTruth {
    /// Rebuilds the mean path from `mu0`, `tau` and `delta`.
    pub fn mean_path(&self, t_len: usize) -> Vec<f64> {
        let mut mu = Vec::with_capacity(t_len);
        let mut level = self.mu0;
        let mut next = 0;
        for t in 1..=t_len {
            mu.push(level);
            if next < self.tau.len() && self.tau[next] == t {
                level += self.delta[next];
                next += 1;
            }
        }
        mu
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledSequence {
    pub x: Vec<f64>,
    pub truth: GroundTruth,
}

/// i.i.d. draws `a(1), ..., a(T-1)` from `G_q`.
pub fn sample_intensity<R: Rng + ?Sized>(spec: &IntensitySpec, t_len: usize, rng: &mut R) -> Result<Vec<f64>> {
    spec.validate()?;
    if t_len < 2 {
        return Err(Error::domain("need T >= 2 for an intensity function"));
    }
    Ok((1..t_len).map(|_| spec.draw(rng)).collect())
}

/// One sequence of length `a.len() + 1`.
pub fn sample_sequence<R: Rng + ?Sized>(
    a: &[f64],
    jump: &JumpSpec,
    sigma_x: f64,
    rng: &mut R,
) -> Result<SampledSequence> {
    jump.validate()?;
    if !(sigma_x.is_finite() && sigma_x > 0.0) {
        return Err(Error::domain(format!("sigma_x must be positive, got {sigma_x}")));
    }
    if let Some(k) = a.iter().position(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::domain(format!("intensity a({}) = {} outside [0, 1]", k + 1, a[k])));
    }
    let t_len = a.len() + 1;
    let mu0 = match *jump {
        JumpSpec::HmmYao { sigma_xi } => sigma_xi * rng.sample::<f64, _>(StandardNormal),
        _ => 0.0,
    };
    let mut mu = Vec::with_capacity(t_len);
    let mut tau = Vec::new();
    let mut delta = Vec::new();
    let mut level = mu0;
    mu.push(level);
    for (k, &at) in a.iter().enumerate() {
        if rng.random::<f64>() < at {
            let d = match *jump {
                JumpSpec::Normal { sd } => sd * rng.sample::<f64, _>(StandardNormal),
                JumpSpec::Point { delta } => delta,
                JumpSpec::HmmYao { sigma_xi } => sigma_xi * rng.sample::<f64, _>(StandardNormal) - level,
            };
            let next = level + d;
            let realized = next - level;
            if realized != 0.0 {
                tau.push(k + 1);
                delta.push(realized);
            }
            level = next;
        }
        mu.push(level);
    }
    let x = mu
        .iter()
        .map(|m| m + sigma_x * rng.sample::<f64, _>(StandardNormal))
        .collect();
    Ok(SampledSequence {
        x,
        truth: GroundTruth { tau, delta, mu0, mu },
    })
}

/// `N` sequences sharing one intensity realization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub a: Vec<f64>,
    pub sequences: Vec<SampledSequence>,
}

impl Dataset {
    pub fn t_len(&self) -> usize {
        self.a.len() + 1
    }
}

/// Draws the intensity from stream `[replicate, INTENSITY_KEY]` and sequence
/// `n` from stream `[replicate, n]`.
pub fn sample_multiseq(
    spec: &IntensitySpec,
    n_seq: usize,
    t_len: usize,
    jump: &JumpSpec,
    sigma_x: f64,
    streams: &Streams,
    replicate: u64,
) -> Result<Dataset> {
    if n_seq == 0 {
        return Err(Error::domain("need at least one sequence"));
    }
    let a = sample_intensity(spec, t_len, &mut streams.stream(&[replicate, INTENSITY_KEY]))?;
    let sequences = (0..n_seq as u64)
        .map(|n| sample_sequence(&a, jump, sigma_x, &mut streams.stream(&[replicate, n])))
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset { a, sequences })
}

/// `(1/q) * integral_0^1 [1 - G_q(x)]^2 dx` with `q` the mean of `G_q`.
///
/// Closed forms for every law; custom tables are integrated segment by segment.
pub fn vg_diagnostic(spec: &IntensitySpec) -> Result<f64> {
    spec.validate()?;
    Ok(match spec {
        IntensitySpec::Constant { .. } => 1.0,
        IntensitySpec::TwoPoint { mass_hi, .. } => *mass_hi,
        IntensitySpec::Beta { q } => 2.0 * q / (1.0 + q),
        IntensitySpec::Custom { grid, cdf } => {
            // (1 - G)^2 is quadratic on each segment: h (A^2 + AB + B^2) / 3
            let sq: f64 = grid
                .windows(2)
                .zip(cdf.windows(2))
                .map(|(g, c)| {
                    let (a, b) = (1.0 - c[0], 1.0 - c[1]);
                    (g[1] - g[0]) * (a * a + a * b + b * b) / 3.0
                })
                .sum();
            sq / spec.mean()
        }
    })
}

/// The same diagnostic by numerical quadrature of the CDF, splitting the
/// range at the CDF's jump points.
pub fn vg_diagnostic_numeric(spec: &IntensitySpec, tol: f64) -> Result<f64> {
    spec.validate()?;
    let integrate = |f: &dyn Fn(f64) -> f64, a: f64, b: f64| {
        if b > a {
            quadrature::integrate(f, a, b, tol).integral
        } else {
            0.0
        }
    };
    let value = match spec {
        IntensitySpec::Constant { q } => integrate(&|_| 1.0, 0.0, *q) + integrate(&|_| 0.0, *q, 1.0),
        IntensitySpec::TwoPoint { q, mass_hi, scale } => {
            let hi = scale * q;
            integrate(&|_| mass_hi * mass_hi, 0.0, hi) + integrate(&|_| 0.0, hi, 1.0)
        }
        IntensitySpec::Beta { q } => {
            let alpha = q / (1.0 - q);
            integrate(&|x: f64| (-(alpha * x.ln()).exp_m1()).powi(2), 0.0, 1.0)
        }
        IntensitySpec::Custom { grid, cdf } => grid
            .windows(2)
            .zip(cdf.windows(2))
            .map(|(g, c)| {
                let (g0, g1, c0, c1) = (g[0], g[1], c[0], c[1]);
                integrate(&|x: f64| (1.0 - (c0 + (c1 - c0) * (x - g0) / (g1 - g0))).powi(2), g0, g1)
            })
            .sum(),
    };
    Ok(value / spec.mean())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn spec_validation() {
        assert!(IntensitySpec::constant(0.0).is_err());
        assert!(IntensitySpec::constant(1.5).is_err());
        assert!(IntensitySpec::two_point(0.1, 0.01, 100.0).is_err());
        assert!(IntensitySpec::two_point(1e-4, 0.01, 100.0).is_ok());
        assert!(IntensitySpec::beta(1.0).is_err());
        assert!(IntensitySpec::custom(vec![0.0, 1.0], vec![0.5, 0.9]).is_err());
        assert!(IntensitySpec::custom(vec![0.0, 0.5, 1.0], vec![0.5, 0.9, 1.0]).is_ok());
        assert!(JumpSpec::Point { delta: 0.0 }.validate().is_err());
        assert!(JumpSpec::Normal { sd: -1.0 }.validate().is_err());
    }

    #[test]
    fn constant_intensity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = sample_intensity(&IntensitySpec::constant(1e-4).unwrap(), 10_000, &mut rng).unwrap();
        assert_eq!(a.len(), 9_999);
        assert!(a.iter().all(|&v| v == 1e-4));
    }

    #[test]
    fn two_point_intensity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = sample_intensity(&IntensitySpec::two_point(1e-4, 0.01, 100.0).unwrap(), 200_001, &mut rng).unwrap();
        assert!(a.iter().all(|&v| v == 0.0 || (v - 0.01).abs() < 1e-15));
        let frac = a.iter().filter(|&&v| v > 0.0).count() as f64 / a.len() as f64;
        let se = (0.01f64 * 0.99 / a.len() as f64).sqrt();
        assert!((frac - 0.01).abs() < 3.0 * se, "{frac}");
    }

    #[test]
    fn beta_intensity_mean() {
        let q = 1e-4;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = sample_intensity(&IntensitySpec::beta(q).unwrap(), 1_000_001, &mut rng).unwrap();
        let n = a.len() as f64;
        let mean = a.iter().sum::<f64>() / n;
        let var = a.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!(a.iter().all(|v| (0.0..=1.0).contains(v)));
        assert!((mean - q).abs() < 3.0 * (var / n).sqrt(), "mean {mean}");
    }

    #[test]
    fn custom_intensity_sampling_matches_table() {
        let spec = IntensitySpec::custom(vec![0.0, 0.5, 1.0], vec![0.8, 0.9, 1.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = sample_intensity(&spec, 100_001, &mut rng).unwrap();
        let m = a.iter().sum::<f64>() / a.len() as f64;
        assert!((m - spec.mean()).abs() < 0.01, "{m} vs {}", spec.mean());
    }

    #[test]
    fn zero_intensity_gives_noise_only() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = sample_sequence(&[0.0; 99], &JumpSpec::Normal { sd: 1.0 }, 1.0, &mut rng).unwrap();
        assert!(s.truth.tau.is_empty());
        assert!(s.truth.mu.iter().all(|&m| m == 0.0));
        assert_eq!(s.x.len(), 100);
    }

    #[test]
    fn point_jumps_are_recorded() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let s = sample_sequence(&[0.05; 999], &JumpSpec::Point { delta: 1.5 }, 1.0, &mut rng).unwrap();
        assert!(!s.truth.tau.is_empty());
        assert!(s.truth.delta.iter().all(|&d| d == 1.5));
    }

    #[test]
    fn truth_round_trips_with_mean_path() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for jump in [JumpSpec::Normal { sd: 1.0 }, JumpSpec::HmmYao { sigma_xi: 1.0 }] {
            let s = sample_sequence(&[0.02; 1999], &jump, 1.0, &mut rng).unwrap();
            let mu = &s.truth.mu;
            let changes: Vec<usize> = (1..mu.len()).filter(|&t| mu[t] != mu[t - 1]).collect();
            assert_eq!(changes, s.truth.tau);
            for (j, &t) in s.truth.tau.iter().enumerate() {
                assert_eq!(mu[t] - mu[t - 1], s.truth.delta[j]);
            }
            assert_eq!(&s.truth.mean_path(2000), mu);
        }
    }

    #[test]
    fn hmm_first_jump_is_normal_with_variance_two() {
        // Kolmogorov-Smirnov distance of the first recorded jump against N(0, 2).
        let n = 100_000;
        let mut jumps = Vec::with_capacity(n);
        let streams = Streams::new(99);
        for r in 0..n as u64 {
            let mut rng = streams.stream(&[r]);
            let s = sample_sequence(&[0.5; 7], &JumpSpec::HmmYao { sigma_xi: 1.0 }, 1.0, &mut rng).unwrap();
            if let Some(&d) = s.truth.delta.first() {
                jumps.push(d);
            }
        }
        jumps.sort_by(f64::total_cmp);
        let m = jumps.len() as f64;
        let cdf = |x: f64| 0.5 * libm::erfc(-x / 2.0);
        let ks = jumps
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = cdf(x);
                (f - i as f64 / m).abs().max(((i + 1) as f64 / m - f).abs())
            })
            .fold(0.0, f64::max);
        assert!(ks < 0.01, "ks {ks}");
    }

    #[test]
    fn change_rate_matches_intensity_mean() {
        let spec = IntensitySpec::two_point(0.05, 0.2, 2.0).unwrap();
        let streams = Streams::new(3);
        let (mut count, mut total) = (0usize, 0usize);
        for r in 0..200u64 {
            let ds = sample_multiseq(&spec, 5, 500, &JumpSpec::Normal { sd: 1.0 }, 1.0, &streams, r).unwrap();
            for s in &ds.sequences {
                count += s.truth.tau.len();
                total += 499;
            }
        }
        let rate = count as f64 / total as f64;
        let p = spec.mean();
        // intensities are shared within a replicate, so use a generous binomial band
        assert!((rate - p).abs() < 3.0 * (p * (1.0 - p) / total as f64).sqrt() * 3.0, "{rate}");
    }

    #[test]
    fn single_sequence_dataset_matches_direct_sampling() {
        let spec = IntensitySpec::beta(0.01).unwrap();
        let jump = JumpSpec::HmmYao { sigma_xi: 1.0 };
        let streams = Streams::new(17);
        let ds = sample_multiseq(&spec, 1, 300, &jump, 1.0, &streams, 4).unwrap();
        let a = sample_intensity(&spec, 300, &mut streams.stream(&[4, INTENSITY_KEY])).unwrap();
        let s = sample_sequence(&a, &jump, 1.0, &mut streams.stream(&[4, 0])).unwrap();
        assert_eq!(ds.a, a);
        assert_eq!(ds.sequences, vec![s]);
        let again = sample_multiseq(&spec, 1, 300, &jump, 1.0, &streams, 4).unwrap();
        assert_eq!(ds, again);
    }

    #[test]
    fn beta_posterior_intensity_is_near_uniform() {
        let q = 1e-3;
        let spec = IntensitySpec::beta(q).unwrap();
        let streams = Streams::new(23);
        let mut at_changes = Vec::new();
        for r in 0..400u64 {
            let ds = sample_multiseq(&spec, 20, 1000, &JumpSpec::Normal { sd: 1.0 }, 1.0, &streams, r).unwrap();
            for s in &ds.sequences {
                at_changes.extend(s.truth.tau.iter().map(|&t| ds.a[t - 1]));
            }
        }
        let n = at_changes.len() as f64;
        let m = at_changes.iter().sum::<f64>() / n;
        // Beta(1/(1-q), 1) has mean (1/(1-q)) / (1/(1-q) + 1) ~ 0.5
        assert!(n > 2000.0);
        assert!((m - 0.5).abs() < 0.02, "mean {m} over {n}");
    }

    #[test]
    fn two_point_alignment_is_poisson_one() {
        let spec = IntensitySpec::two_point(1e-4, 0.01, 100.0).unwrap();
        let streams = Streams::new(31);
        let (mut hits, mut positions) = (0usize, 0usize);
        for r in 0..20u64 {
            let ds = sample_multiseq(&spec, 100, 10_000, &JumpSpec::HmmYao { sigma_xi: 1.0 }, 1.0, &streams, r).unwrap();
            let active: Vec<usize> = (1..ds.t_len()).filter(|&t| ds.a[t - 1] > 0.0).collect();
            positions += active.len();
            for s in &ds.sequences {
                hits += s.truth.tau.iter().filter(|&&t| ds.a[t - 1] > 0.0).count();
            }
        }
        let m = hits as f64 / positions as f64;
        assert!((m - 1.0).abs() < 0.1, "{m}");
    }

    #[test]
    fn vg_closed_forms() {
        assert_eq!(vg_diagnostic(&IntensitySpec::constant(1e-4).unwrap()).unwrap(), 1.0);
        assert_eq!(vg_diagnostic(&IntensitySpec::two_point(1e-4, 0.01, 100.0).unwrap()).unwrap(), 0.01);
        let v = vg_diagnostic(&IntensitySpec::beta(1e-4).unwrap()).unwrap();
        assert!((v - 2e-4 / 1.0001).abs() < 1e-18);
    }

    #[test]
    fn vg_closed_forms_match_quadrature() {
        for spec in [
            IntensitySpec::constant(1e-4).unwrap(),
            IntensitySpec::constant(0.3).unwrap(),
            IntensitySpec::two_point(1e-4, 0.01, 100.0).unwrap(),
            IntensitySpec::two_point(0.02, 0.3, 5.0).unwrap(),
            IntensitySpec::beta(0.2).unwrap(),
            IntensitySpec::beta(1e-3).unwrap(),
        ] {
            let closed = vg_diagnostic(&spec).unwrap();
            let numeric = vg_diagnostic_numeric(&spec, 1e-12).unwrap();
            assert!((closed - numeric).abs() <= 1e-6 * closed, "{spec:?}: {closed} vs {numeric}");
        }
        let custom = IntensitySpec::custom(vec![0.0, 0.25, 1.0], vec![0.5, 0.75, 1.0]).unwrap();
        let c = vg_diagnostic(&custom).unwrap();
        let n = vg_diagnostic_numeric(&custom, 1e-12).unwrap();
        assert!((c - n).abs() < 1e-9 * n, "{c} vs {n}");
    }
}
