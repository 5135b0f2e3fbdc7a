//! Wall-clock timing of single metric evaluations.

use std::time::Instant;

use crate::cloud::PointCloud;
use crate::error::Result;
use crate::metric::{evaluate, Metric, MetricParams};

#[derive(Debug, Clone, PartialEq)]
pub struct Timing {
    pub metric: Metric,
    pub reps: usize,
    pub mean_ms: f64,
    /// Sample standard deviation; zero for a single repetition.
    pub stddev_ms: f64,
    pub min_ms: f64,
    pub median_ms: f64,
}

impl Timing {
    pub fn from_samples(metric: Metric, samples_ms: &[f64]) -> Self {
        let reps = samples_ms.len();
        let mean = samples_ms.iter().sum::<f64>() / reps as f64;
        let stddev = if reps < 2 {
            0.0
        } else {
            let ss: f64 = samples_ms.iter().map(|s| (s - mean).powi(2)).sum();
            (ss / (reps - 1) as f64).sqrt()
        };
        Self {
            metric,
            reps,
            mean_ms: mean,
            stddev_ms: stddev,
            min_ms: samples_ms.iter().copied().fold(f64::INFINITY, f64::min),
            median_ms: median(samples_ms),
        }
    }
}

fn median(samples: &[f64]) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    if sorted.len().is_multiple_of(2) {
        (sorted[mid - 1] + sorted[mid]) / 2.0
    } else {
        sorted[mid]
    }
}

/// Times `reps` evaluations of `metric`, after one untimed warm-up call.
pub fn time_metric(metric: Metric, p: &PointCloud, q: &PointCloud, params: &MetricParams, reps: usize) -> Result<Timing> {
    evaluate(metric, p, q, params)?;
    let mut samples = Vec::with_capacity(reps);
    for _ in 0..reps.max(1) {
        let start = Instant::now();
        let report = evaluate(metric, p, q, params)?;
        samples.push(start.elapsed().as_secs_f64() * 1e3);
        std::hint::black_box(report);
    }
    Ok(Timing::from_samples(metric, &samples))
}

/// Times several metrics with interleaved repetitions, so slow drift in
/// machine speed affects every metric alike.
pub fn time_metrics(
    metrics: &[Metric],
    p: &PointCloud,
    q: &PointCloud,
    params: &MetricParams,
    reps: usize,
) -> Result<Vec<Timing>> {
    for &m in metrics {
        evaluate(m, p, q, params)?;
    }
    let mut samples = vec![Vec::with_capacity(reps); metrics.len()];
    for _ in 0..reps.max(1) {
        for (&m, out) in metrics.iter().zip(samples.iter_mut()) {
            let start = Instant::now();
            let report = evaluate(m, p, q, params)?;
            out.push(start.elapsed().as_secs_f64() * 1e3);
            std::hint::black_box(report);
        }
    }
    Ok(metrics
        .iter()
        .zip(&samples)
        .map(|(&m, s)| Timing::from_samples(m, s))
        .collect())
}

/// Metrics sorted from fastest to slowest mean time.
pub fn ordering(timings: &[Timing]) -> Vec<Metric> {
    let mut sorted: Vec<&Timing> = timings.iter().collect();
    sorted.sort_by(|a, b| a.mean_ms.total_cmp(&b.mean_ms));
    sorted.into_iter().map(|t| t.metric).collect()
}
