//! Comparison of estimated and true change-points.
//!
//! For each true change-point `tau_j`, `kappa(tau_j)` counts the estimates
//! strictly closer than half the distance to its nearest neighbour (with
//! `tau_0 = 0` and `tau_{J+1} = T`). A change-point is localized when
//! `kappa = 1` and recovered without error when, in addition, it is itself
//! among the estimates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default jump-size cut-off for gamma reporting.
pub const DEFAULT_DELTA0: f64 = 0.3;

fn check_sorted(v: &[usize]) -> Result<()> {
    match v.windows(2).position(|w| w[0] >= w[1]) {
        Some(k) => Err(Error::Unsorted(k + 1)),
        None => Ok(()),
    }
}

pub fn kappa_counts(tau: &[usize], tau_hat: &[usize], t_len: usize) -> Result<Vec<usize>> {
    if tau.is_empty() {
        return Err(Error::domain("kappa needs at least one true change-point"));
    }
    check_sorted(tau)?;
    check_sorted(tau_hat)?;
    if tau[0] == 0 || *tau.last().unwrap() >= t_len {
        return Err(Error::domain(format!("true change-points must lie in 1..{}", t_len - 1)));
    }
    let mut counts = Vec::with_capacity(tau.len());
    for (j, &t) in tau.iter().enumerate() {
        let prev = if j == 0 { 0 } else { tau[j - 1] };
        let next = tau.get(j + 1).copied().unwrap_or(t_len);
        // |tau_hat - t| < min(gap)/2  <=>  2|tau_hat - t| < min(gap)
        let gap = (t - prev).min(next - t);
        let lo = tau_hat.partition_point(|&e| e < t);
        let mut k = 0;
        for &e in tau_hat[lo..].iter() {
            if 2 * (e - t) < gap {
                k += 1;
            } else {
                break;
            }
        }
        for &e in tau_hat[..lo].iter().rev() {
            if 2 * (t - e) < gap {
                k += 1;
            } else {
                break;
            }
        }
        counts.push(k);
    }
    Ok(counts)
}

/// Per-sequence estimates of alpha, beta and gamma.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SequenceEval {
    pub alpha: f64,
    pub beta: f64,
    /// Mean distance to the nearest estimate over localized change-points
    /// with `|Delta| >= delta0`; absent when there are none.
    pub gamma: Option<f64>,
    pub n_true: usize,
}

pub fn evaluate_sequence(
    tau: &[usize],
    delta: &[f64],
    tau_hat: &[usize],
    t_len: usize,
    delta0: f64,
) -> Result<SequenceEval> {
    if tau.len() != delta.len() {
        return Err(Error::domain("tau and delta lengths differ"));
    }
    let kappa = kappa_counts(tau, tau_hat, t_len)?;
    let n = tau.len() as f64;
    let mut miss = 0usize;
    let mut exact = 0usize;
    let mut dist_sum = 0.0;
    let mut dist_n = 0usize;
    for (j, &t) in tau.iter().enumerate() {
        if kappa[j] != 1 {
            miss += 1;
            continue;
        }
        if tau_hat.binary_search(&t).is_ok() {
            exact += 1;
        }
        if delta[j].abs() >= delta0 {
            dist_sum += nearest_distance(tau_hat, t) as f64;
            dist_n += 1;
        }
    }
    Ok(SequenceEval {
        alpha: miss as f64 / n,
        beta: exact as f64 / n,
        gamma: (dist_n > 0).then(|| dist_sum / dist_n as f64),
        n_true: tau.len(),
    })
}

/// `d(t, A) = min |u - t|` over a sorted, non-empty `A`.
fn nearest_distance(sorted: &[usize], t: usize) -> usize {
    let k = sorted.partition_point(|&e| e < t);
    let right = sorted.get(k).map(|&e| e - t);
    let left = k.checked_sub(1).map(|i| t - sorted[i]);
    match (left, right) {
        (Some(l), Some(r)) => l.min(r),
        (Some(l), None) => l,
        (None, Some(r)) => r,
        (None, None) => unreachable!("kappa = 1 implies an estimate exists"),
    }
}

/// Sequence-averaged estimates of one replicate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplicateEval {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: Option<f64>,
    /// Sequences with at least one true change-point.
    pub n_sequences: usize,
}

/// Averages over sequences with `J > 0`; `None` when there are none.
pub fn summarize_replicate(per_seq: &[SequenceEval]) -> Option<ReplicateEval> {
    if per_seq.is_empty() {
        return None;
    }
    let n = per_seq.len() as f64;
    let gammas: Vec<f64> = per_seq.iter().filter_map(|s| s.gamma).collect();
    Some(ReplicateEval {
        alpha: per_seq.iter().map(|s| s.alpha).sum::<f64>() / n,
        beta: per_seq.iter().map(|s| s.beta).sum::<f64>() / n,
        gamma: (!gammas.is_empty()).then(|| gammas.iter().sum::<f64>() / gammas.len() as f64),
        n_sequences: per_seq.len(),
    })
}

/// Mean and standard error across replicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub replicates: usize,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: Option<f64>,
    pub se_alpha: Option<f64>,
    pub se_beta: Option<f64>,
    pub se_gamma: Option<f64>,
    pub per_replicate: Vec<ReplicateEval>,
}

pub(crate) fn mean_se(values: &[f64]) -> (f64, Option<f64>) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, None);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, Some((var / n).sqrt()))
}

/// Mean over replicates with standard error = sample SD / sqrt(#replicates).
pub fn aggregate(replicates: &[ReplicateEval]) -> Result<EvalReport> {
    if replicates.is_empty() {
        return Err(Error::domain("aggregate needs at least one replicate"));
    }
    let alphas: Vec<f64> = replicates.iter().map(|r| r.alpha).collect();
    let betas: Vec<f64> = replicates.iter().map(|r| r.beta).collect();
    let gammas: Vec<f64> = replicates.iter().filter_map(|r| r.gamma).collect();
    let (alpha, se_alpha) = mean_se(&alphas);
    let (beta, se_beta) = mean_se(&betas);
    let (gamma, se_gamma) = if gammas.is_empty() {
        (None, None)
    } else {
        let (g, se) = mean_se(&gammas);
        (Some(g), se)
    };
    Ok(EvalReport {
        replicates: replicates.len(),
        alpha,
        beta,
        gamma,
        se_alpha,
        se_beta,
        se_gamma,
        per_replicate: replicates.to_vec(),
    })
}
