//! Information sharing across sequences.
//!
//! Each sequence is segmented on its own; the profile likelihoods of all
//! emitted intervals are then combined into an estimate of the common
//! intensity `a(t)` by EM, and every within-interval estimate is moved to the
//! maximizer of `a_hat(t) L(t)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detect::{scan_cusum, DetectionResult, DetectorConfig};
use crate::error::{Error, Result};
use crate::genmodel::Dataset;
use crate::metrics::{evaluate_sequence, summarize_replicate, ReplicateEval, SequenceEval};
use crate::stats::first_argmax;

/// Value of `l(a)`; `zero_mass` names the first `(sequence, interval)` whose
/// sum `sum_t a(t) L(t)` vanishes, in which case `value` is `-inf`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntensityLoglik {
    pub value: f64,
    pub zero_mass: Option<(usize, usize)>,
}

fn check_intensity(a: &[f64], results: &[DetectionResult]) -> Result<()> {
    if results.is_empty() {
        return Err(Error::domain("need at least one sequence"));
    }
    for r in results {
        if r.t_len != a.len() + 1 {
            return Err(Error::domain(format!(
                "intensity has length {} but a sequence has T = {}",
                a.len(),
                r.t_len
            )));
        }
    }
    if let Some(k) = a.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::domain(format!("a({}) = {} must be finite and non-negative", k + 1, a[k])));
    }
    Ok(())
}

/// `log sum_{t in I} a(t) L(t)` with the maximum factored out; `-inf` on zero mass.
fn log_interval_mass(a: &[f64], det: &crate::detect::Detection, scratch: &mut Vec<f64>) -> f64 {
    scratch.clear();
    scratch.extend(det.log_profile.indices().zip(&det.log_profile.log_w).map(|(t, &l)| {
        let at = a[t as usize - 1];
        if at > 0.0 {
            at.ln() + l
        } else {
            f64::NEG_INFINITY
        }
    }));
    let m = scratch.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + scratch.iter().map(|s| (s - m).exp()).sum::<f64>().ln()
}

/// `l(a) = sum_n sum_j log(sum_{t in I_j^n} a(t) L_j^n(t)) - N sum_t a(t)`.
///
/// `a[t - 1]` is `a(t)`. Profiles are used without their interval constant,
/// so `l` is determined up to an additive term that does not depend on `a`.
pub fn intensity_loglik(a: &[f64], results: &[DetectionResult]) -> Result<IntensityLoglik> {
    check_intensity(a, results)?;
    Ok(loglik_unchecked(a, results))
}

fn loglik_unchecked(a: &[f64], results: &[DetectionResult]) -> IntensityLoglik {
    let mut scratch = Vec::new();
    let mut value = -(results.len() as f64) * a.iter().sum::<f64>();
    for (n, r) in results.iter().enumerate() {
        for (j, det) in r.detections.iter().enumerate() {
            let lm = log_interval_mass(a, det, &mut scratch);
            if lm == f64::NEG_INFINITY {
                return IntensityLoglik {
                    value: f64::NEG_INFINITY,
                    zero_mass: Some((n, j)),
                };
            }
            value += lm;
        }
    }
    IntensityLoglik { value, zero_mass: None }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmParams {
    pub max_iter: usize,
    /// Stop once `max_t |a_{k+1}(t) - a_k(t)| < tol`.
    pub tol: f64,
}

impl Default for EmParams {
    fn default() -> Self {
        EmParams { max_iter: 50, tol: 1e-8 }
    }
}

impl EmParams {
    pub fn validate(&self) -> Result<()> {
        if self.max_iter == 0 {
            return Err(Error::domain("EM needs at least one iteration"));
        }
        if !(self.tol.is_finite() && self.tol >= 0.0) {
            return Err(Error::domain(format!("EM tolerance must be non-negative, got {}", self.tol)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmFit {
    /// `a_hat[t - 1]` is `a_hat(t)`, `1 <= t <= T - 1`.
    pub a_hat: Vec<f64>,
    /// `l(a_0), l(a_1), ...`; one entry per iterate including the start.
    pub loglik_trace: Vec<f64>,
    /// `sum_t a_k(t)` per iterate, aligned with `loglik_trace`.
    pub mass_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Positions with `a_hat(t) > 1`. The estimate is not clipped.
    pub positions_above_one: usize,
}

/// One EM update `a_{k+1}(t) = (1/N) sum_{(n,j): t in I_j^n} a_k(t) L_j^n(t) / sum_{u in I_j^n} a_k(u) L_j^n(u)`.
///
/// Terms are accumulated in sequence, then interval order, so the result
/// does not depend on the thread count.
pub fn em_step(a: &[f64], results: &[DetectionResult]) -> Result<Vec<f64>> {
    check_intensity(a, results)?;
    Ok(em_step_unchecked(a, results))
}

fn em_step_unchecked(a: &[f64], results: &[DetectionResult]) -> Vec<f64> {
    let inv_n = 1.0 / results.len() as f64;
    let mut next = vec![0.0; a.len()];
    let mut scratch = Vec::new();
    for r in results {
        for det in &r.detections {
            let lm = log_interval_mass(a, det, &mut scratch);
            if lm == f64::NEG_INFINITY {
                continue;
            }
            for (t, &s) in det.log_profile.indices().zip(scratch.iter()) {
                if s > f64::NEG_INFINITY {
                    next[t as usize - 1] += inv_n * (s - lm).exp();
                }
            }
        }
    }
    next
}

/// EM estimate of the shared intensity from the emitted intervals.
///
/// Starts from the constant `a_0 = sum_n J_hat^n / (N (T - 1))`; returns
/// `a = 0` at once when no sequence has a detection.
pub fn em_estimate_intensity(results: &[DetectionResult], params: &EmParams) -> Result<EmFit> {
    params.validate()?;
    let t_len = results.first().ok_or_else(|| Error::domain("need at least one sequence"))?.t_len;
    if t_len < 2 {
        return Err(Error::domain("need T >= 2"));
    }
    let m = t_len - 1;
    let total: usize = results.iter().map(|r| r.len()).sum();
    let mut a = vec![total as f64 / (results.len() as f64 * m as f64); m];
    check_intensity(&a, results)?;
    let mut fit = EmFit {
        a_hat: Vec::new(),
        loglik_trace: vec![loglik_unchecked(&a, results).value],
        mass_trace: vec![a.iter().sum()],
        iterations: 0,
        converged: false,
        positions_above_one: 0,
    };
    if total == 0 {
        fit.converged = true;
    } else {
        for _ in 0..params.max_iter {
            let next = em_step_unchecked(&a, results);
            let change = a.iter().zip(&next).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            a = next;
            fit.iterations += 1;
            fit.loglik_trace.push(loglik_unchecked(&a, results).value);
            fit.mass_trace.push(a.iter().sum());
            if change < params.tol {
                fit.converged = true;
                break;
            }
        }
    }
    fit.positions_above_one = a.iter().filter(|&&v| v > 1.0).count();
    fit.a_hat = a;
    Ok(fit)
}

/// Refined estimates of one sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinedSet {
    /// Sorted, without duplicates.
    pub tau_tilde: Vec<usize>,
    /// Per detection: the refined location before deduplication.
    pub per_detection: Vec<usize>,
    /// Detections whose interval carried no intensity and kept `tau_hat`.
    pub fallbacks: usize,
}

/// `tau_tilde = argmax_{t in I} log a_hat(t) + log L_I(t)` per interval
/// (smallest maximizer on ties).
pub fn refine_changepoints(results: &[DetectionResult], a_hat: &[f64]) -> Result<Vec<RefinedSet>> {
    check_intensity(a_hat, results)?;
    Ok(results.iter().map(|r| refine_one(r, a_hat)).collect())
}

fn refine_one(r: &DetectionResult, a_hat: &[f64]) -> RefinedSet {
    let mut fallbacks = 0;
    let mut scores = Vec::new();
    let per_detection: Vec<usize> = r
        .detections
        .iter()
        .map(|det| {
            scores.clear();
            scores.extend(det.log_profile.indices().zip(&det.log_profile.log_w).map(|(t, &l)| {
                let at = a_hat[t as usize - 1];
                if at > 0.0 {
                    at.ln() + l
                } else {
                    f64::NEG_INFINITY
                }
            }));
            if scores.iter().all(|s| *s == f64::NEG_INFINITY) {
                fallbacks += 1;
                det.tau_hat
            } else {
                (det.log_profile.offset + first_argmax(&scores) as i64) as usize
            }
        })
        .collect();
    let mut tau_tilde = per_detection.clone();
    tau_tilde.sort_unstable();
    tau_tilde.dedup();
    RefinedSet {
        tau_tilde,
        per_detection,
        fallbacks,
    }
}

/// Both pipelines on one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineOutcome {
    pub detections: Vec<DetectionResult>,
    pub em: EmFit,
    pub refined: Vec<RefinedSet>,
    /// `None` when no sequence has a true change-point.
    pub no_share: Option<ReplicateEval>,
    pub with_share: Option<ReplicateEval>,
}

/// Runs scan-CUSUM on every sequence, evaluates the estimates directly, then
/// estimates the intensity by EM, refines and evaluates again. Sequences
/// without true change-points are skipped by the evaluation.
pub fn run_pipeline(dataset: &Dataset, cfg: &DetectorConfig, em: &EmParams, delta0: f64) -> Result<PipelineOutcome> {
    cfg.validate()?;
    em.validate()?;
    if dataset.sequences.is_empty() {
        return Err(Error::domain("dataset has no sequences"));
    }
    let t_len = dataset.t_len();
    let detections = dataset
        .sequences
        .par_iter()
        .map(|s| {
            if s.x.len() != t_len {
                return Err(Error::domain("sequence length differs from the intensity length + 1"));
            }
            scan_cusum(&s.x, cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    let fit = em_estimate_intensity(&detections, em)?;
    let refined = refine_changepoints(&detections, &fit.a_hat)?;
    let eval = |estimates: &dyn Fn(usize) -> Vec<usize>| -> Result<Option<ReplicateEval>> {
        let per_seq = dataset
            .sequences
            .iter()
            .enumerate()
            .filter(|(_, s)| !s.truth.tau.is_empty())
            .map(|(n, s)| evaluate_sequence(&s.truth.tau, &s.truth.delta, &estimates(n), t_len, delta0))
            .collect::<Result<Vec<SequenceEval>>>()?;
        Ok(summarize_replicate(&per_seq))
    };
    let no_share = eval(&|n| detections[n].tau_hat())?;
    let with_share = eval(&|n| refined[n].tau_tilde.clone())?;
    Ok(PipelineOutcome {
        detections,
        em: fit,
        refined,
        no_share,
        with_share,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detect::Detection;
    use crate::stats::{Interval, LogWeightFn};

    fn det(u: usize, log_w: Vec<f64>) -> Detection {
        let v = u + log_w.len() + 1;
        Detection {
            tau_hat: u + 1 + first_argmax(&log_w),
            interval: Interval::new(u, v).unwrap(),
            log_profile: LogWeightFn {
                offset: u as i64 + 1,
                log_w,
            },
            scale: 0,
            window: 1,
            center: u + 1,
            scan_z: 0.0,
            order: 0,
            fallback: false,
        }
    }

    fn result(t_len: usize, dets: Vec<Detection>) -> DetectionResult {
        DetectionResult { t_len, detections: dets }
    }

    #[test]
    fn no_detections() {
        let rs = vec![result(10, vec![]), result(10, vec![])];
        let fit = em_estimate_intensity(&rs, &EmParams::default()).unwrap();
        assert!(fit.a_hat.iter().all(|&a| a == 0.0));
        assert_eq!(fit.loglik_trace, vec![0.0]);
        let l = intensity_loglik(&[0.5; 9], &rs).unwrap();
        assert_eq!(l.value, -2.0 * 4.5);
    }

    #[test]
    fn single_interval_constant_maximizer() {
        let lw = vec![0.3, 1.2, -0.4];
        let rs = vec![result(11, vec![det(2, lw.clone())])];
        let sum_l: f64 = lw.iter().map(|l| l.exp()).sum();
        let ell = |c: f64| intensity_loglik(&[c; 10], &rs).unwrap().value;
        let c = 1.0 / 10.0;
        assert!((ell(c) - (c.ln() + sum_l.ln() - 1.0)).abs() < 1e-12);
        assert!(ell(c) > ell(c * 1.01) && ell(c) > ell(c * 0.99));
    }

    #[test]
    fn one_step_is_normalized_profile() {
        let lw = vec![0.3, 1.2, -0.4];
        let rs = vec![result(11, vec![det(2, lw.clone())])];
        let a1 = em_step(&[0.1; 10], &rs).unwrap();
        let z: f64 = lw.iter().map(|l| l.exp()).sum();
        for t in 1..=10usize {
            let want = if (3..=5).contains(&t) { lw[t - 3].exp() / z } else { 0.0 };
            assert!((a1[t - 1] - want).abs() < 1e-15);
        }
        // N identical copies give the same update
        let many: Vec<_> = (0..7).map(|_| rs[0].clone()).collect();
        let a7 = em_step(&[0.1; 10], &many).unwrap();
        for (x, y) in a1.iter().zip(&a7) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_mass_is_reported() {
        let rs = vec![result(11, vec![]), result(11, vec![det(0, vec![1.0, 2.0]), det(5, vec![0.0, 0.0])])];
        let mut a = vec![0.0; 10];
        a[0] = 0.5;
        let l = intensity_loglik(&a, &rs).unwrap();
        assert_eq!(l.value, f64::NEG_INFINITY);
        assert_eq!(l.zero_mass, Some((1, 1)));
        assert!(intensity_loglik(&[0.1; 3], &rs).is_err());
    }

    #[test]
    fn refinement_with_constant_intensity_is_identity() {
        let rs = vec![result(20, vec![det(1, vec![0.1, 3.0, 0.2]), det(8, vec![5.0, 1.0, 1.0, 0.0])])];
        let r = refine_changepoints(&rs, &[0.3; 19]).unwrap();
        assert_eq!(r[0].tau_tilde, rs[0].tau_hat());
        assert_eq!(r[0].fallbacks, 0);
    }

    #[test]
    fn refinement_follows_intensity_spike() {
        let rs = vec![result(20, vec![det(1, vec![0.1, 3.0, 0.2, 2.5])])];
        let mut a = vec![1e-6; 19];
        a[4] = 0.9;
        let r = refine_changepoints(&rs, &a).unwrap();
        assert_eq!(rs[0].tau_hat(), vec![3]);
        assert_eq!(r[0].tau_tilde, vec![5]);
        let zero = refine_changepoints(&rs, &[0.0; 19]).unwrap();
        assert_eq!((zero[0].tau_tilde.clone(), zero[0].fallbacks), (vec![3], 1));
    }

    #[test]
    fn refinement_deduplicates() {
        let rs = vec![result(20, vec![det(1, vec![0.0; 6]), det(4, vec![0.0; 6])])];
        let mut a = vec![1e-3; 19];
        a[5] = 0.5;
        let r = refine_changepoints(&rs, &a).unwrap();
        assert_eq!(r[0].per_detection, vec![6, 6]);
        assert_eq!(r[0].tau_tilde, vec![6]);
    }

    #[test]
    fn em_fixed_point() {
        let rs = vec![
            result(15, vec![det(0, vec![0.1, 2.0, 0.5, 0.0]), det(7, vec![1.0, 0.0, 0.3])]),
            result(15, vec![det(1, vec![1.5, 0.2, 0.1])]),
            result(15, vec![]),
        ];
        let fit = em_estimate_intensity(&rs, &EmParams { max_iter: 20_000, tol: 1e-13 }).unwrap();
        assert!(fit.converged);
        let next = em_step(&fit.a_hat, &rs).unwrap();
        let change = fit.a_hat.iter().zip(&next).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(change < 1e-9);
        for w in fit.loglik_trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-9);
        }
        for m in &fit.mass_trace[1..] {
            assert!((m - 1.0).abs() < 1e-12);
        }
        // positions outside every interval stay zero
        assert!(fit.a_hat[11..].iter().all(|&v| v == 0.0));
    }
}
