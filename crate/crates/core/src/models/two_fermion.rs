//! Two 1D fermions in a harmonic trap: `V = (x1^2 + x2^2) / 2`, symmetry
//! group `{id, swap}`.
//!
//! The trial `(x1 - x2)(1 + theta (x1 + x2)) exp(-(x1^2 + x2^2)/2)` is the
//! 2x2 Slater determinant of the orbitals `{1, x + theta x^2}` times a
//! Gaussian. Its primary node is the coincidence line `x1 = x2`, which is
//! forced by antisymmetry and does not move with `theta`; the secondary node
//! line `1 + theta (x1 + x2) = 0` stays out of the physically relevant
//! region for `|theta| <= 0.1`. At `theta = 0` the trial is the exact
//! fermionic groundstate with `E = 2`.

use crate::trial::TrialWaveFunction;

#[derive(Debug, Clone)]
pub struct TwoFermionFamily;

impl TwoFermionFamily {
    #[inline]
    fn parts(theta: &[f64], x: &[f64]) -> (f64, f64, f64, f64) {
        let diff = x[0] - x[1];
        let sum = x[0] + x[1];
        let r2 = x[0] * x[0] + x[1] * x[1];
        let gauss = (-r2 / 2.0).exp();
        (diff, sum, r2, gauss * (1.0 + theta[0] * sum))
    }
}

impl TrialWaveFunction for TwoFermionFamily {
    fn dimension(&self) -> usize {
        2
    }

    fn parameter_count(&self) -> usize {
        1
    }

    fn value(&self, theta: &[f64], x: &[f64]) -> f64 {
        let (diff, _, _, env) = Self::parts(theta, x);
        diff * env
    }

    fn gradient(&self, theta: &[f64], x: &[f64], out: &mut [f64]) {
        let t = theta[0];
        let diff = x[0] - x[1];
        let sum = x[0] + x[1];
        let gauss = (-(x[0] * x[0] + x[1] * x[1]) / 2.0).exp();
        let poly = 1.0 + t * sum;
        // d/dxi [ diff * poly ] - diff * poly * xi
        let du1 = poly + diff * t;
        let du2 = -poly + diff * t;
        out[0] = (du1 - diff * poly * x[0]) * gauss;
        out[1] = (du2 - diff * poly * x[1]) * gauss;
    }

    fn laplacian(&self, theta: &[f64], x: &[f64]) -> f64 {
        let t = theta[0];
        let diff = x[0] - x[1];
        let sum = x[0] + x[1];
        let r2 = x[0] * x[0] + x[1] * x[1];
        let gauss = (-r2 / 2.0).exp();
        let u = diff * (1.0 + t * sum);
        // u is harmonic, so Laplacian(u G) = u Laplacian(G) + 2 grad(u).grad(G).
        (u * (r2 - 2.0) - 2.0 * diff * (1.0 + 2.0 * t * sum)) * gauss
    }

    fn parameter_gradient(&self, _theta: &[f64], x: &[f64], out: &mut [f64]) {
        let diff = x[0] - x[1];
        let sum = x[0] + x[1];
        out[0] = diff * sum * (-(x[0] * x[0] + x[1] * x[1]) / 2.0).exp();
    }

    fn parameter_gradient_laplacian(&self, _theta: &[f64], x: &[f64], out: &mut [f64]) {
        let v = x[0] * x[0] - x[1] * x[1];
        let r2 = x[0] * x[0] + x[1] * x[1];
        out[0] = v * (r2 - 6.0) * (-r2 / 2.0).exp();
    }
}
