//! Anisotropic 3D oscillator `V = (x^2 + 4 y^2 + 9 z^2) / 2` with the point
//! inversion group `{I, -I}`.
//!
//! The trial `(x + theta_1 y + theta_2 z) exp(-(x^2 + 2 y^2 + 3 z^2) / 2)`
//! has a genuinely movable nodal plane. At `theta = (0, 0)` it is the exact
//! skew-symmetric groundstate with `E = 4`; the anisotropic frequencies
//! `(1, 2, 3)` keep that level non-degenerate. This is the workhorse for the
//! gradient and symmetry diagnostics.

use crate::trial::TrialWaveFunction;

#[derive(Debug, Clone)]
pub struct OddWellFamily;

impl OddWellFamily {
    #[inline]
    fn envelope(x: &[f64]) -> f64 {
        (-(x[0] * x[0] + 2.0 * x[1] * x[1] + 3.0 * x[2] * x[2]) / 2.0).exp()
    }

    /// `2 V(x) = x^2 + 4 y^2 + 9 z^2`, which also drives the envelope's
    /// Laplacian `(2V - 6) G`.
    #[inline]
    fn two_v(x: &[f64]) -> f64 {
        x[0] * x[0] + 4.0 * x[1] * x[1] + 9.0 * x[2] * x[2]
    }
}

impl TrialWaveFunction for OddWellFamily {
    fn dimension(&self) -> usize {
        3
    }

    fn parameter_count(&self) -> usize {
        2
    }

    fn value(&self, theta: &[f64], x: &[f64]) -> f64 {
        (x[0] + theta[0] * x[1] + theta[1] * x[2]) * Self::envelope(x)
    }

    fn gradient(&self, theta: &[f64], x: &[f64], out: &mut [f64]) {
        let g = Self::envelope(x);
        let u = x[0] + theta[0] * x[1] + theta[1] * x[2];
        out[0] = (1.0 - u * x[0]) * g;
        out[1] = (theta[0] - 2.0 * u * x[1]) * g;
        out[2] = (theta[1] - 3.0 * u * x[2]) * g;
    }

    fn laplacian(&self, theta: &[f64], x: &[f64]) -> f64 {
        let g = Self::envelope(x);
        let u = x[0] + theta[0] * x[1] + theta[1] * x[2];
        let grad_dot = x[0] + 2.0 * theta[0] * x[1] + 3.0 * theta[1] * x[2];
        (u * (Self::two_v(x) - 6.0) - 2.0 * grad_dot) * g
    }

    fn parameter_gradient(&self, _theta: &[f64], x: &[f64], out: &mut [f64]) {
        let g = Self::envelope(x);
        out[0] = x[1] * g;
        out[1] = x[2] * g;
    }

    fn parameter_gradient_laplacian(&self, _theta: &[f64], x: &[f64], out: &mut [f64]) {
        let g = Self::envelope(x);
        let tv = Self::two_v(x);
        out[0] = x[1] * (tv - 10.0) * g;
        out[1] = x[2] * (tv - 12.0) * g;
    }

    fn value_and_gradient(&self, theta: &[f64], x: &[f64], grad: &mut [f64]) -> f64 {
        let g = Self::envelope(x);
        let u = x[0] + theta[0] * x[1] + theta[1] * x[2];
        grad[0] = (1.0 - u * x[0]) * g;
        grad[1] = (theta[0] - 2.0 * u * x[1]) * g;
        grad[2] = (theta[1] - 3.0 * u * x[2]) * g;
        u * g
    }
}

/// Closed-form variational (trial) energy of the family:
/// `E_I(theta) = 3 + (1 + a^2 + b^2) / (1 + a^2/2 + b^2/3)`.
pub fn trial_energy(theta: &[f64]) -> f64 {
    let (a2, b2) = (theta[0] * theta[0], theta[1] * theta[1]);
    3.0 + (1.0 + a2 + b2) / (1.0 + a2 / 2.0 + b2 / 3.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::testing::check_family_derivatives;
    use crate::symmetry::SymmetryGroup;
    use crate::trial::{nodal_shape_velocity, quasi_random_box_points, verify_skew_symmetry};
    use approx::assert_abs_diff_eq;

    #[test]
    fn derivatives_match_finite_differences() {
        check_family_derivatives(
            &OddWellFamily,
            &[0.1, -0.05],
            &[(-2.0, 2.0), (-2.0, 2.0), (-2.0, 2.0)],
            100,
        );
    }

    #[test]
    fn skew_symmetry_under_inversion() {
        let group = SymmetryGroup::point_inversion(3).unwrap();
        let points = quasi_random_box_points(&[(-6.0, 6.0), (-6.0, 6.0), (-6.0, 6.0)], 100);
        for theta in [[0.0, 0.0], [0.2, -0.3]] {
            let res = verify_skew_symmetry(&OddWellFamily, &theta, &group, &points).unwrap();
            assert!(res < 1e-14);
        }
    }

    #[test]
    fn shape_velocity_on_the_plane() {
        // At theta = 0 on the nodal plane x = 0 the parameter gradient is
        // (y G, z G) and |grad psi| = G, so the velocity is (y, z).
        let p = [0.0, 0.7, -1.2];
        let v = nodal_shape_velocity(&OddWellFamily, &[0.0, 0.0], &p, 1e-9).unwrap();
        assert_abs_diff_eq!(v[0], 0.7, epsilon = 1e-12);
        assert_abs_diff_eq!(v[1], -1.2, epsilon = 1e-12);
    }

    #[test]
    fn velocity_is_odd_under_inversion_on_the_node() {
        // Skew field on the node: r(-x) = -r(x) for the odd element.
        let theta = [0.15, -0.1];
        for p in [[-0.15 * 0.5 + 0.1 * 0.3, 0.5, 0.3], [0.15 * 1.1 + 0.1 * 0.6, -1.1, 0.6]] {
            let q = [-p[0], -p[1], -p[2]];
            let vp = nodal_shape_velocity(&OddWellFamily, &theta, &p, 1e-9).unwrap();
            let vq = nodal_shape_velocity(&OddWellFamily, &theta, &q, 1e-9).unwrap();
            assert_abs_diff_eq!(vp[0], -vq[0], epsilon = 1e-10);
            assert_abs_diff_eq!(vp[1], -vq[1], epsilon = 1e-10);
        }
    }

    #[test]
    fn parameter_gradient_at_unit_y() {
        let mut pg = [0.0, 0.0];
        OddWellFamily.parameter_gradient(&[0.0, 0.0], &[0.0, 1.0, 0.0], &mut pg);
        assert_abs_diff_eq!(pg[0], (-1.0f64).exp(), epsilon = 1e-15);
        assert_abs_diff_eq!(pg[1], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn trial_energy_reference_values() {
        assert_abs_diff_eq!(trial_energy(&[0.0, 0.0]), 4.0, epsilon = 1e-15);
        assert_abs_diff_eq!(trial_energy(&[0.1, 0.0]), 3.0 + 1.01 / 1.005, epsilon = 1e-15);
        assert!(trial_energy(&[0.3, 0.0]) > 4.0);
    }
}
