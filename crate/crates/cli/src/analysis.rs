//! Summaries of training runs used to judge the experiments.

use sntk_core::train::{detect_bifurcation, MetricsRecord};
use sntk_core::Scalar;

/// Largest ratio `loss(i) / loss(j)` over record pairs with
/// `iter(i) <= at <= iter(j)` and `iter(j) - iter(i) <= window`.
///
/// Returns `None` when no such pair exists.
pub fn loss_drop_around<T: Scalar>(metrics: &[MetricsRecord<T>], at: usize, window: usize) -> Option<f64> {
    let mut best: Option<f64> = None;
    for a in metrics.iter().filter(|r| r.iteration <= at) {
        for b in metrics.iter().filter(|r| r.iteration >= at && r.iteration - a.iteration <= window) {
            let ratio = a.loss.as_f64() / b.loss.as_f64();
            if ratio.is_finite() {
                best = Some(best.map_or(ratio, |x: f64| x.max(ratio)));
            }
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankCollapse {
    pub min_near: f64,
    pub median_before: f64,
}

impl RankCollapse {
    pub fn ratio(&self) -> f64 {
        self.min_near / self.median_before
    }
}

/// Minimum stable rank within `±radius` iterations of `at`, and the median
/// over the `lookback` iterations preceding `at`. `None` if either set is
/// empty.
pub fn rank_collapse<T: Scalar>(metrics: &[MetricsRecord<T>], at: usize, radius: usize, lookback: usize) -> Option<RankCollapse> {
    let near: Vec<f64> = metrics
        .iter()
        .filter(|r| r.iteration + radius >= at && r.iteration <= at + radius)
        .map(|r| r.stable_rank.as_f64())
        .collect();
    let mut before: Vec<f64> = metrics
        .iter()
        .filter(|r| r.iteration < at && r.iteration + lookback >= at)
        .map(|r| r.stable_rank.as_f64())
        .collect();
    if near.is_empty() || before.is_empty() {
        return None;
    }
    before.sort_by(|a, b| a.total_cmp(b));
    let k = before.len();
    let median_before = if k % 2 == 1 { before[k / 2] } else { 0.5 * (before[k / 2 - 1] + before[k / 2]) };
    let min_near = near.iter().copied().fold(f64::INFINITY, f64::min);
    Some(RankCollapse { min_near, median_before })
}

/// First spectral-radius crossing of 1, if any.
pub fn first_crossing<T: Scalar>(metrics: &[MetricsRecord<T>]) -> Option<usize> {
    detect_bifurcation(metrics).first().copied()
}

/// First record iteration at which column `k` of the recorded eigenvalue
/// moduli exceeds `level`.
pub fn first_eig_above<T: Scalar>(metrics: &[MetricsRecord<T>], k: usize, level: f64) -> Option<usize> {
    metrics
        .iter()
        .find(|r| r.eig_moduli.get(k).is_some_and(|v| v.as_f64() > level))
        .map(|r| r.iteration)
}

/// First record iteration at which eigenvalue modulus `k` lies within
/// `rel` of `target`.
pub fn first_eig_within<T: Scalar>(metrics: &[MetricsRecord<T>], k: usize, target: f64, rel: f64) -> Option<usize> {
    metrics
        .iter()
        .find(|r| r.eig_moduli.get(k).is_some_and(|v| (v.as_f64() - target).abs() <= rel * target.abs()))
        .map(|r| r.iteration)
}
