//! Statistical kernels: prefix sums, scan and CUSUM statistics, profile
//! likelihoods and the median / mode / W functionals of integer-indexed
//! weight functions.

use serde::{Deserialize, Serialize};

use crate::error::{check_finite, Error, Result};

/// Cumulative sums `S(t) = X(1) + ... + X(t)` with `S(0) = 0`, together with
/// the noise standard deviation used to normalize the statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct PrefixSums {
    s: Vec<f64>,
    sigma_x: f64,
}

pub fn prefix_sums(x: &[f64], sigma_x: f64) -> Result<PrefixSums> {
    PrefixSums::new(x, sigma_x)
}

impl PrefixSums {
    pub fn new(x: &[f64], sigma_x: f64) -> Result<Self> {
        if x.is_empty() {
            return Err(Error::domain("sequence must contain at least one observation"));
        }
        if !(sigma_x.is_finite() && sigma_x > 0.0) {
            return Err(Error::domain(format!("sigma_x must be positive, got {sigma_x}")));
        }
        check_finite(x)?;
        let mut s = Vec::with_capacity(x.len() + 1);
        let mut acc = 0.0;
        s.push(acc);
        for &v in x {
            acc += v;
            s.push(acc);
        }
        Ok(Self { s, sigma_x })
    }

    /// Sequence length `T`.
    pub fn len(&self) -> usize {
        self.s.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn sigma_x(&self) -> f64 {
        self.sigma_x
    }

    /// `S(t)` for `0 <= t <= T`.
    pub fn at(&self, t: usize) -> f64 {
        self.s[t]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.s
    }

    /// Scan statistic `Z_ell(t)` for a window of length `2 ell` centred on `t`.
    pub fn scan_stat(&self, ell: usize, t: usize) -> Result<f64> {
        if ell == 0 {
            return Err(Error::domain("window half-length ell must be positive"));
        }
        if t < ell {
            return Err(Error::domain(format!("scan_stat needs ell <= t, got ell={ell}, t={t}")));
        }
        if t + ell > self.len() {
            return Err(Error::domain(format!(
                "scan_stat needs t <= T - ell, got t={t}, ell={ell}, T={}",
                self.len()
            )));
        }
        Ok(self.scan_unchecked(ell, t))
    }

    #[inline]
    pub(crate) fn scan_unchecked(&self, ell: usize, t: usize) -> f64 {
        let s = &self.s;
        (s[t + ell] + s[t - ell] - 2.0 * s[t]) / (2.0 * ell as f64 * self.sigma_x * self.sigma_x).sqrt()
    }

    /// CUSUM statistic `Z_I(t)` for an interior point of `iv`. The sign is kept.
    pub fn cusum_stat(&self, iv: Interval, t: usize) -> Result<f64> {
        if iv.v > self.len() {
            return Err(Error::domain(format!(
                "interval ({}, {}) exceeds sequence length {}",
                iv.u,
                iv.v,
                self.len()
            )));
        }
        if t <= iv.u || t >= iv.v {
            return Err(Error::domain(format!(
                "cusum_stat needs u < t < v, got t={t} for interval ({}, {})",
                iv.u, iv.v
            )));
        }
        Ok(self.cusum_unchecked(iv, t))
    }

    #[inline]
    pub(crate) fn cusum_unchecked(&self, iv: Interval, t: usize) -> f64 {
        let (u, v) = (iv.u, iv.v);
        let s = &self.s;
        let right = (v - t) as f64;
        let left = (t - u) as f64;
        let scale = (right * left / ((v - u) as f64 * self.sigma_x * self.sigma_x)).sqrt();
        scale * ((s[v] - s[t]) / right - (s[t] - s[u]) / left)
    }
}

pub fn scan_stat(ps: &PrefixSums, ell: usize, t: usize) -> Result<f64> {
    ps.scan_stat(ell, t)
}

pub fn cusum_stat(ps: &PrefixSums, iv: Interval, t: usize) -> Result<f64> {
    ps.cusum_stat(iv, t)
}

/// Open interval `(u, v)`; its interior candidates are `u+1 ..= v-1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Interval {
    pub u: usize,
    pub v: usize,
}

impl Interval {
    pub fn new(u: usize, v: usize) -> Result<Self> {
        if v < u + 2 {
            return Err(Error::domain(format!(
                "interval ({u}, {v}) has no interior point"
            )));
        }
        Ok(Self { u, v })
    }

    pub fn interior(&self) -> std::ops::Range<usize> {
        self.u + 1..self.v
    }

    pub fn contains(&self, t: usize) -> bool {
        t > self.u && t < self.v
    }
}

/// Non-negative weights on a finite window of the integers; zero elsewhere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightFn {
    offset: i64,
    w: Vec<f64>,
}

impl WeightFn {
    pub fn new(offset: i64, w: Vec<f64>) -> Result<Self> {
        if let Some(k) = w.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::domain(format!(
                "weight at index {} is {} (must be finite and non-negative)",
                offset + k as i64,
                w[k]
            )));
        }
        Ok(Self { offset, w })
    }

    pub fn offset(&self) -> i64 {
        self.offset
    }

    pub fn values(&self) -> &[f64] {
        &self.w
    }

    /// Weight at integer `i` (zero outside the stored window).
    pub fn get(&self, i: i64) -> f64 {
        let k = i - self.offset;
        if k < 0 || k as usize >= self.w.len() {
            0.0
        } else {
            self.w[k as usize]
        }
    }

    pub fn total(&self) -> f64 {
        self.w.iter().sum()
    }

    pub fn indices(&self) -> impl Iterator<Item = i64> + '_ {
        (0..self.w.len() as i64).map(move |k| k + self.offset)
    }
}

/// The integer `u` with `sum_{i<u} r(i) < s/2 <= sum_{i<=u} r(i)`.
pub fn med_of(w: &WeightFn) -> Result<i64> {
    let s = w.total();
    if !(s > 0.0) {
        return Err(Error::domain("median of a weight function with zero total mass"));
    }
    let half = s / 2.0;
    let mut cum = 0.0;
    for (k, &r) in w.w.iter().enumerate() {
        cum += r;
        if cum >= half {
            return Ok(w.offset + k as i64);
        }
    }
    // Rounding can leave the running sum a hair under s/2; the last positive entry is the answer then.
    let k = w.w.iter().rposition(|&r| r > 0.0).expect("positive mass");
    Ok(w.offset + k as i64)
}

/// Smallest integer attaining the maximum weight.
pub fn mode_of(w: &WeightFn) -> Result<i64> {
    if !(w.total() > 0.0) {
        return Err(Error::domain("mode of a weight function with zero total mass"));
    }
    Ok(w.offset + first_argmax(&w.w) as i64)
}

/// `W(r) = sum_i |i| min(1, r(i) / r(0))`.
pub fn w_functional(w: &WeightFn) -> Result<f64> {
    let r0 = w.get(0);
    if !(r0 > 0.0) {
        return Err(Error::domain("W functional requires r(0) > 0"));
    }
    Ok(w
        .indices()
        .zip(&w.w)
        .map(|(i, &r)| i.unsigned_abs() as f64 * (r / r0).min(1.0))
        .sum())
}

/// Index of the first maximum under exact comparison. Panics on an empty slice.
pub(crate) fn first_argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = k;
        }
    }
    best
}

/// Weights stored as natural logarithms; `-inf` encodes zero weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogWeightFn {
    pub offset: i64,
    pub log_w: Vec<f64>,
}

impl LogWeightFn {
    pub fn get(&self, i: i64) -> f64 {
        let k = i - self.offset;
        if k < 0 || k as usize >= self.log_w.len() {
            f64::NEG_INFINITY
        } else {
            self.log_w[k as usize]
        }
    }

    pub fn indices(&self) -> impl Iterator<Item = i64> + '_ {
        (0..self.log_w.len() as i64).map(move |k| k + self.offset)
    }

    pub fn max(&self) -> f64 {
        self.log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Exponentiates after subtracting the maximum, so the largest weight is 1.
    pub fn to_weights(&self) -> Result<WeightFn> {
        let m = self.max();
        if m == f64::NEG_INFINITY {
            return Err(Error::domain("log weight function has no positive weight"));
        }
        let w = self.log_w.iter().map(|&l| (l - m).exp()).collect();
        WeightFn::new(self.offset, w)
    }

    /// Smallest index of the largest log weight.
    pub fn mode(&self) -> Result<i64> {
        if self.log_w.is_empty() || self.max() == f64::NEG_INFINITY {
            return Err(Error::domain("mode of a weight function with zero total mass"));
        }
        Ok(self.offset + first_argmax(&self.log_w) as i64)
    }
}

/// `log L_I(t) = Z_I(t)^2 / 2` for every interior `t` of `iv`.
///
/// The normalizing constant `C_I` of the profile likelihood is dropped: it is
/// common to all `t` in `I` and cancels in argmax and posterior ratios.
pub fn log_profile_likelihood(ps: &PrefixSums, iv: Interval) -> Result<LogWeightFn> {
    if iv.v > ps.len() || iv.v < iv.u + 2 {
        return Err(Error::domain(format!(
            "invalid interval ({}, {}) for sequence of length {}",
            iv.u,
            iv.v,
            ps.len()
        )));
    }
    Ok(log_profile_unchecked(ps, iv))
}

pub(crate) fn log_profile_unchecked(ps: &PrefixSums, iv: Interval) -> LogWeightFn {
    let log_w = iv
        .interior()
        .map(|t| {
            let z = ps.cusum_unchecked(iv, t);
            0.5 * z * z
        })
        .collect();
    LogWeightFn {
        offset: iv.u as i64 + 1,
        log_w,
    }
}

/// Robust noise scale: median absolute successive difference / (sqrt(2) * 0.6745).
pub fn estimate_sigma(x: &[f64]) -> Result<f64> {
    if x.len() < 2 {
        return Err(Error::domain("need at least two observations to estimate sigma"));
    }
    check_finite(x)?;
    let mut d: Vec<f64> = x.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    d.sort_by(f64::total_cmp);
    let n = d.len();
    let med = if n % 2 == 1 {
        d[n / 2]
    } else {
        0.5 * (d[n / 2 - 1] + d[n / 2])
    };
    Ok(med / (std::f64::consts::SQRT_2 * 0.6745))
}
