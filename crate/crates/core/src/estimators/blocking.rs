//! Autocorrelation-robust standard errors by recursive pairwise blocking.

use crate::error::{CoreError, Result};

#[derive(Debug, Clone)]
pub struct BlockingResult {
    pub std_error: f64,
    /// Per-level standard-error estimates (level 0 = raw series).
    pub levels: Vec<f64>,
    pub plateau_found: bool,
}

/// Blocking analysis of an unweighted series.
pub fn blocking_error(samples: &[f64]) -> Result<BlockingResult> {
    let weights = vec![1.0; samples.len()];
    weighted_blocking_error(samples, &weights)
}

/// Blocking analysis of a weighted series: successive levels merge adjacent
/// pairs (weights add, values average weightedly); each level's error is the
/// standard error of the weighted mean treating blocks as independent.
pub fn weighted_blocking_error(samples: &[f64], weights: &[f64]) -> Result<BlockingResult> {
    if samples.len() < 16 {
        return Err(CoreError::InsufficientSamples { needed: 16, got: samples.len() });
    }
    if samples.len() != weights.len() {
        return Err(CoreError::DimensionMismatch {
            expected: samples.len(),
            got: weights.len(),
        });
    }
    let mut values: Vec<f64> = samples.to_vec();
    let mut ws: Vec<f64> = weights.to_vec();
    let mut levels = Vec::new();
    loop {
        levels.push(level_std_error(&values, &ws));
        if values.len() < 8 {
            break;
        }
        let half = values.len() / 2;
        let mut nv = Vec::with_capacity(half);
        let mut nw = Vec::with_capacity(half);
        for k in 0..half {
            let w = ws[2 * k] + ws[2 * k + 1];
            let v = if w > 0.0 {
                (ws[2 * k] * values[2 * k] + ws[2 * k + 1] * values[2 * k + 1]) / w
            } else {
                0.5 * (values[2 * k] + values[2 * k + 1])
            };
            nv.push(v);
            nw.push(w);
        }
        values = nv;
        ws = nw;
    }

    // Plateau: two consecutive levels within each other's sampling noise.
    let mut plateau = None;
    for l in 0..levels.len().saturating_sub(1) {
        let n = (samples.len() >> l).max(2) as f64;
        let tol = 1.0 / (2.0 * (n - 1.0)).sqrt();
        if levels[l] > 0.0 && (levels[l + 1] - levels[l]).abs() <= tol * levels[l] {
            plateau = Some(levels[l + 1].max(levels[l]));
            break;
        }
    }
    match plateau {
        Some(se) => Ok(BlockingResult { std_error: se, levels, plateau_found: true }),
        None => {
            let max = levels.iter().cloned().fold(0.0f64, f64::max);
            Ok(BlockingResult { std_error: max, levels, plateau_found: false })
        }
    }
}

fn level_std_error(values: &[f64], weights: &[f64]) -> f64 {
    let wsum: f64 = weights.iter().sum();
    if wsum <= 0.0 {
        return 0.0;
    }
    let mean: f64 = values.iter().zip(weights).map(|(v, w)| v * w).sum::<f64>() / wsum;
    let n = values.len() as f64;
    let var: f64 = values
        .iter()
        .zip(weights)
        .map(|(v, w)| (w / wsum).powi(2) * (v - mean).powi(2))
        .sum::<f64>();
    (var * n / (n - 1.0)).sqrt()
}

/// Weighted mean of a series (helper shared by the estimators).
pub fn weighted_mean(values: &[f64], weights: &[f64]) -> f64 {
    let wsum: f64 = weights.iter().sum();
    values.iter().zip(weights).map(|(v, w)| v * w).sum::<f64>() / wsum
}
