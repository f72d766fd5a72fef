//! Batch estimators over repeated runs.

use serde::{Deserialize, Serialize};

use crate::engine::RunResult;

/// Version tag embedded in every JSON document the harness writes.
pub const SCHEMA_VERSION: &str = "1.0.0";

/// Aggregate of a batch of runs on one shape (or a group of shapes).
///
/// `t_hat` and `tau_hat` average over successful runs only and are absent
/// when there were none. Every `sigma_*` is the sample standard deviation
/// divided by the mean (coefficient of variation).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub schema_version: String,
    pub runs: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub rho_hat: f64,
    pub t_hat: Option<f64>,
    pub tau_hat: Option<f64>,
    pub sigma_rho: f64,
    pub sigma_t: Option<f64>,
    pub sigma_tau: Option<f64>,
    /// `|S|`; for a group, the largest member.
    pub shape_size: usize,
    pub max_iters: u64,
}

pub fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

/// Sample (n - 1) standard deviation; 0 for fewer than two values.
pub fn sample_std(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = values.iter().sum::<f64>() / values.len() as f64;
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    (ss / (values.len() - 1) as f64).sqrt()
}

/// Coefficient of variation; 0 when the mean is 0.
pub fn normalized_std(values: &[f64]) -> f64 {
    match mean(values) {
        Some(m) if m != 0.0 => sample_std(values) / m.abs(),
        _ => 0.0,
    }
}

/// Summarizes runs of one shape of `shape_size` cells under cap `max_iters`.
///
/// # Panics
/// If `results` is empty.
pub fn estimate(results: &[RunResult], shape_size: usize, max_iters: u64) -> MetricsReport {
    assert!(!results.is_empty(), "estimate needs at least one run");
    // sorted copies make the sums independent of run order
    let mut rho: Vec<f64> = results.iter().map(|r| r.final_quality).collect();
    let ok: Vec<&RunResult> = results.iter().filter(|r| r.completed).collect();
    let mut t: Vec<f64> = ok.iter().map(|r| r.iterations as f64).collect();
    let mut tau: Vec<f64> = ok.iter().map(|r| r.wall_seconds).collect();
    for v in [&mut rho, &mut t, &mut tau] {
        v.sort_by(f64::total_cmp);
    }
    let any = !ok.is_empty();
    MetricsReport {
        schema_version: SCHEMA_VERSION.to_string(),
        runs: results.len(),
        successes: ok.len(),
        success_rate: ok.len() as f64 / results.len() as f64,
        rho_hat: mean(&rho).expect("non-empty"),
        t_hat: mean(&t),
        tau_hat: mean(&tau),
        sigma_rho: normalized_std(&rho),
        sigma_t: any.then(|| normalized_std(&t)),
        sigma_tau: any.then(|| normalized_std(&tau)),
        shape_size,
        max_iters,
    }
}

/// Combines per-shape reports. `rho_hat` is a plain mean; `t_hat` and
/// `tau_hat` are rescaled to the largest shape by `|max S| / |S_m|` before
/// averaging, over the shapes that have them.
///
/// # Panics
/// If `per_shape` is empty.
pub fn estimate_group(per_shape: &[MetricsReport]) -> MetricsReport {
    assert!(!per_shape.is_empty(), "estimate_group needs at least one shape");
    if per_shape.len() == 1 {
        return per_shape[0].clone();
    }
    let largest = per_shape.iter().map(|r| r.shape_size).max().expect("non-empty") as f64;
    let scaled = |pick: fn(&MetricsReport) -> Option<f64>| -> Vec<f64> {
        per_shape
            .iter()
            .filter_map(|r| pick(r).map(|v| v * largest / r.shape_size as f64))
            .collect()
    };
    let plain = |pick: fn(&MetricsReport) -> Option<f64>| -> Vec<f64> {
        per_shape.iter().filter_map(pick).collect()
    };
    let runs = per_shape.iter().map(|r| r.runs).sum();
    let successes = per_shape.iter().map(|r| r.successes).sum();
    MetricsReport {
        schema_version: SCHEMA_VERSION.to_string(),
        runs,
        successes,
        success_rate: mean(&plain(|r| Some(r.success_rate))).expect("non-empty"),
        rho_hat: mean(&plain(|r| Some(r.rho_hat))).expect("non-empty"),
        t_hat: mean(&scaled(|r| r.t_hat)),
        tau_hat: mean(&scaled(|r| r.tau_hat)),
        sigma_rho: mean(&plain(|r| Some(r.sigma_rho))).expect("non-empty"),
        sigma_t: mean(&plain(|r| r.sigma_t)),
        sigma_tau: mean(&plain(|r| r.sigma_tau)),
        shape_size: largest as usize,
        max_iters: per_shape.iter().map(|r| r.max_iters).max().expect("non-empty"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(completed: bool, iterations: u64, quality: f64) -> RunResult {
        RunResult {
            completed,
            iterations,
            wall_seconds: iterations as f64 / 100.0,
            final_quality: quality,
            workers: 1,
            optd: None,
            trace: None,
        }
    }

    #[test]
    fn quality_mean() {
        let r = estimate(&[run(true, 5, 1.0), run(false, 800, 30.0 / 31.0)], 31, 800);
        assert!((r.rho_hat - 61.0 / 62.0).abs() < 1e-15);
        assert_eq!(r.t_hat, Some(5.0));
        assert_eq!(r.success_rate, 0.5);
    }

    #[test]
    fn all_failed() {
        let r = estimate(&[run(false, 800, 0.9), run(false, 800, 0.8)], 10, 800);
        assert!((r.rho_hat - 0.85).abs() < 1e-15);
        assert_eq!((r.t_hat, r.tau_hat, r.sigma_t), (None, None, None));
        assert_eq!(r.success_rate, 0.0);
    }

    #[test]
    fn iteration_mean_and_cv() {
        let r = estimate(&[run(true, 8, 1.0), run(true, 10, 1.0), run(true, 12, 1.0)], 10, 800);
        assert_eq!(r.t_hat, Some(10.0));
        assert!((r.sigma_t.unwrap() - 0.2).abs() < 1e-12);
        assert_eq!(r.sigma_rho, 0.0);
    }

    #[test]
    fn group_scaling() {
        let mut a = estimate(&[run(true, 10, 1.0)], 50, 800);
        let mut b = estimate(&[run(true, 20, 1.0)], 100, 800);
        a.rho_hat = 0.9;
        b.rho_hat = 1.0;
        let g = estimate_group(&[a.clone(), b]);
        assert_eq!(g.t_hat, Some(20.0));
        assert!((g.rho_hat - 0.95).abs() < 1e-15);
        assert_eq!(estimate_group(&[a.clone()]), a);
    }

    #[test]
    fn cv_edge_cases() {
        assert_eq!(normalized_std(&[]), 0.0);
        assert_eq!(normalized_std(&[0.0, 0.0]), 0.0);
        assert_eq!(normalized_std(&[3.0]), 0.0);
    }
}
