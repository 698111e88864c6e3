//! Delete-block jackknife for ratio estimators over walker populations.
//!
//! Blocks are the walkers' ancestry labels, inherited through resampling,
//! so block-to-block scatter includes the correlations that population
//! control introduces.

/// Accumulates per-block partial sums of a vector numerator and a scalar
/// denominator; the estimator is `sum(num) / sum(den)` componentwise.
#[derive(Debug, Clone)]
pub struct RatioAccumulator {
    num: Vec<Vec<f64>>,
    den: Vec<f64>,
    components: usize,
}

#[derive(Debug, Clone)]
pub struct RatioEstimate {
    pub value: Vec<f64>,
    pub std_error: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
    /// Blocks that carried any denominator mass.
    pub occupied_blocks: usize,
}

impl RatioAccumulator {
    pub fn new(blocks: usize, components: usize) -> Self {
        Self { num: vec![vec![0.0; components]; blocks], den: vec![0.0; blocks], components }
    }

    pub fn add_numerator(&mut self, block: u32, contribution: &[f64], weight: f64) {
        let row = &mut self.num[block as usize];
        for (r, c) in row.iter_mut().zip(contribution) {
            *r += weight * c;
        }
    }

    pub fn add_denominator(&mut self, block: u32, weight: f64) {
        self.den[block as usize] += weight;
    }

    pub fn total_denominator(&self) -> f64 {
        self.den.iter().sum()
    }

    /// Full-sample ratio plus delete-one-block errors and covariance.
    pub fn estimate(&self) -> RatioEstimate {
        let p = self.components;
        let total_num: Vec<f64> =
            (0..p).map(|k| self.num.iter().map(|row| row[k]).sum()).collect();
        let total_den: f64 = self.total_denominator();
        let value: Vec<f64> = total_num.iter().map(|n| n / total_den).collect();

        let mut deletions: Vec<Vec<f64>> = Vec::new();
        for b in 0..self.den.len() {
            let den_b = total_den - self.den[b];
            if self.den[b] == 0.0 || den_b <= 0.0 {
                continue;
            }
            deletions.push((0..p).map(|k| (total_num[k] - self.num[b][k]) / den_b).collect());
        }
        let m = deletions.len();
        if m < 2 {
            return RatioEstimate {
                value,
                std_error: vec![f64::INFINITY; p],
                covariance: vec![vec![0.0; p]; p],
                occupied_blocks: m,
            };
        }
        let mean_del: Vec<f64> =
            (0..p).map(|k| deletions.iter().map(|d| d[k]).sum::<f64>() / m as f64).collect();
        let scale = (m as f64 - 1.0) / m as f64;
        let mut covariance = vec![vec![0.0; p]; p];
        for d in &deletions {
            for i in 0..p {
                for j in 0..p {
                    covariance[i][j] += scale * (d[i] - mean_del[i]) * (d[j] - mean_del[j]);
                }
            }
        }
        let std_error = (0..p).map(|k| covariance[k][k].sqrt()).collect();
        RatioEstimate { value, std_error, covariance, occupied_blocks: m }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_ratio_with_zero_scatter() {
        // All blocks carry the same ratio: jackknife error vanishes.
        let mut acc = RatioAccumulator::new(8, 1);
        for b in 0..8u32 {
            acc.add_numerator(b, &[2.0], 1.0);
            acc.add_denominator(b, 1.0);
        }
        let est = acc.estimate();
        assert_eq!(est.value, vec![2.0]);
        assert!(est.std_error[0] < 1e-14);
    }

    #[test]
    fn scatter_produces_a_sane_error() {
        let mut acc = RatioAccumulator::new(16, 1);
        for b in 0..16u32 {
            let v = if b % 2 == 0 { 1.0 } else { 3.0 };
            acc.add_numerator(b, &[v], 1.0);
            acc.add_denominator(b, 1.0);
        }
        let est = acc.estimate();
        assert!((est.value[0] - 2.0).abs() < 1e-12);
        // Delete-one scatter of the mean of +-1 around 2 with 16 blocks.
        assert!(est.std_error[0] > 0.1 && est.std_error[0] < 0.5, "se {}", est.std_error[0]);
    }

    #[test]
    fn empty_blocks_are_skipped() {
        let mut acc = RatioAccumulator::new(8, 2);
        for b in 0..4u32 {
            acc.add_numerator(b, &[1.0, -1.0], 2.0);
            acc.add_denominator(b, 4.0);
        }
        let est = acc.estimate();
        assert_eq!(est.occupied_blocks, 4);
        assert!((est.value[0] - 0.5).abs() < 1e-12);
        assert!((est.value[1] + 0.5).abs() < 1e-12);
    }
}
