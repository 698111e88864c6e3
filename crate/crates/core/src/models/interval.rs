//! 1D interval `(0, L)` with `V = 0` and a movable right endpoint,
//! `L = 1 + theta`. The trial profile is the exact groundstate shape
//! `sin(pi x / L)`, so the local energy is the constant `pi^2 / (2 L^2)`.

use std::f64::consts::PI;

use crate::trial::TrialWaveFunction;

#[derive(Debug, Clone)]
pub struct IntervalFamily;

impl IntervalFamily {
    fn length(theta: &[f64]) -> f64 {
        1.0 + theta[0]
    }
}

impl TrialWaveFunction for IntervalFamily {
    fn dimension(&self) -> usize {
        1
    }

    fn parameter_count(&self) -> usize {
        1
    }

    fn value(&self, theta: &[f64], x: &[f64]) -> f64 {
        let l = Self::length(theta);
        (PI * x[0] / l).sin()
    }

    fn gradient(&self, theta: &[f64], x: &[f64], out: &mut [f64]) {
        let l = Self::length(theta);
        out[0] = PI / l * (PI * x[0] / l).cos();
    }

    fn laplacian(&self, theta: &[f64], x: &[f64]) -> f64 {
        let l = Self::length(theta);
        -(PI / l).powi(2) * (PI * x[0] / l).sin()
    }

    fn parameter_gradient(&self, theta: &[f64], x: &[f64], out: &mut [f64]) {
        let l = Self::length(theta);
        out[0] = -PI * x[0] / (l * l) * (PI * x[0] / l).cos();
    }

    fn parameter_gradient_laplacian(&self, theta: &[f64], x: &[f64], out: &mut [f64]) {
        let l = Self::length(theta);
        let arg = PI * x[0] / l;
        out[0] = 2.0 * PI * PI / l.powi(3) * arg.sin() + PI.powi(3) * x[0] / l.powi(4) * arg.cos();
    }
}

/// `E(L) = pi^2 / (2 L^2)` for the interval of length `L`.
pub fn groundstate_energy(theta: &[f64]) -> f64 {
    let l = IntervalFamily::length(theta);
    PI * PI / (2.0 * l * l)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::testing::check_family_derivatives;
    use approx::assert_abs_diff_eq;

    #[test]
    fn derivatives_match_finite_differences() {
        check_family_derivatives(&IntervalFamily, &[0.2], &[(0.05, 1.1)], 100);
    }

    #[test]
    fn profile_gradient_at_right_end() {
        let mut g = [0.0];
        IntervalFamily.gradient(&[0.0], &[1.0], &mut g);
        assert_abs_diff_eq!(g[0], -PI, epsilon = 1e-12);
    }

    #[test]
    fn nodal_velocity_is_one_at_the_moving_end() {
        // The right endpoint moves at unit speed per unit theta; the left
        // endpoint does not move.
        let v = crate::trial::nodal_shape_velocity(&IntervalFamily, &[0.0], &[1.0], 1e-9).unwrap();
        assert_abs_diff_eq!(v[0], 1.0, epsilon = 1e-12);
        let v0 = crate::trial::nodal_shape_velocity(&IntervalFamily, &[0.0], &[0.0], 1e-9).unwrap();
        assert_abs_diff_eq!(v0[0], 0.0, epsilon = 1e-12);
    }
}
