//! 1D harmonic oscillator `V = x^2 / 2` on the full line.
//!
//! The guide `exp(-(1 + theta) x^2 / 2)` is strictly positive (no nodes);
//! the model is the drifted-propagation testbed. At `theta = 0` the guide is
//! the exact groundstate with `E = 1/2`.

use crate::trial::TrialWaveFunction;

#[derive(Debug, Clone)]
pub struct HarmonicGuide;

impl TrialWaveFunction for HarmonicGuide {
    fn dimension(&self) -> usize {
        1
    }

    fn parameter_count(&self) -> usize {
        1
    }

    fn value(&self, theta: &[f64], x: &[f64]) -> f64 {
        let a = 1.0 + theta[0];
        (-a * x[0] * x[0] / 2.0).exp()
    }

    fn gradient(&self, theta: &[f64], x: &[f64], out: &mut [f64]) {
        let a = 1.0 + theta[0];
        out[0] = -a * x[0] * self.value(theta, x);
    }

    fn laplacian(&self, theta: &[f64], x: &[f64]) -> f64 {
        let a = 1.0 + theta[0];
        (a * a * x[0] * x[0] - a) * self.value(theta, x)
    }

    fn parameter_gradient(&self, theta: &[f64], x: &[f64], out: &mut [f64]) {
        out[0] = -x[0] * x[0] / 2.0 * self.value(theta, x);
    }

    fn parameter_gradient_laplacian(&self, theta: &[f64], x: &[f64], out: &mut [f64]) {
        let a = 1.0 + theta[0];
        let x2 = x[0] * x[0];
        out[0] = (-1.0 + 2.5 * a * x2 - 0.5 * a * a * x2 * x2) * self.value(theta, x);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::testing::check_family_derivatives;
    use approx::assert_abs_diff_eq;

    #[test]
    fn derivatives_match_finite_differences() {
        check_family_derivatives(&HarmonicGuide, &[0.1], &[(-2.5, 2.5)], 100);
    }

    #[test]
    fn drift_is_ornstein_uhlenbeck_at_theta_zero() {
        // grad(psi)/psi = -x for the exact groundstate guide.
        let mut g = [0.0];
        for x in [-1.3, 0.4, 2.0] {
            let v = HarmonicGuide.value_and_gradient(&[0.0], &[x], &mut g);
            assert_abs_diff_eq!(g[0] / v, -x, epsilon = 1e-12);
        }
    }
}
