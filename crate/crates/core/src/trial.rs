//! Trial wave functions and the geometry of their nodal surfaces.

use crate::error::{CoreError, Result};
use crate::symmetry::SymmetryGroup;

/// A point in configuration space.
#[derive(Debug, Clone, PartialEq)]
pub struct Configuration {
    coords: Vec<f64>,
}

impl Configuration {
    pub fn new(coords: Vec<f64>, dim: usize) -> Result<Self> {
        if coords.len() != dim {
            return Err(CoreError::DimensionMismatch { expected: dim, got: coords.len() });
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(CoreError::InvalidParameter("non-finite coordinate".into()));
        }
        Ok(Self { coords })
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.coords
    }
}

impl From<Configuration> for Vec<f64> {
    fn from(c: Configuration) -> Self {
        c.coords
    }
}

/// A parametrized trial wave function with analytic derivatives.
///
/// Implementations provide the value, the spatial gradient and Laplacian,
/// the gradient with respect to the nodal parameters, and the Laplacian of
/// each parameter-gradient component. Built-in families ship closed forms;
/// user families must supply their own.
pub trait TrialWaveFunction: Send + Sync {
    fn dimension(&self) -> usize;

    /// Number of nodal parameters `p`.
    fn parameter_count(&self) -> usize;

    fn value(&self, theta: &[f64], x: &[f64]) -> f64;

    /// Spatial gradient, written into `out` (`d` entries).
    fn gradient(&self, theta: &[f64], x: &[f64], out: &mut [f64]);

    fn laplacian(&self, theta: &[f64], x: &[f64]) -> f64;

    /// Gradient with respect to the parameters, written into `out` (`p` entries).
    fn parameter_gradient(&self, theta: &[f64], x: &[f64], out: &mut [f64]);

    /// Laplacian (in `x`) of each parameter-gradient component (`p` entries).
    fn parameter_gradient_laplacian(&self, theta: &[f64], x: &[f64], out: &mut [f64]);

    /// Value and gradient in one call; families override when they can share
    /// work between the two.
    fn value_and_gradient(&self, theta: &[f64], x: &[f64], grad: &mut [f64]) -> f64 {
        self.gradient(theta, x, grad);
        self.value(theta, x)
    }

    fn gradient_norm(&self, theta: &[f64], x: &[f64]) -> f64 {
        let mut g = vec![0.0; self.dimension()];
        self.gradient(theta, x, &mut g);
        g.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Maximum relative skew-symmetry residual of `psi` over the given sample
/// points and group elements:
/// `max |psi(S x) - det(S) psi(x)| / (1 + |psi(x)|)`.
///
/// Zero (to machine precision) for families that are skew-symmetric by
/// construction; order `|psi|` when the sign structure is violated.
pub fn verify_skew_symmetry(
    family: &dyn TrialWaveFunction,
    theta: &[f64],
    group: &SymmetryGroup,
    sample_points: &[Vec<f64>],
) -> Result<f64> {
    if sample_points.is_empty() {
        return Err(CoreError::InsufficientSamples { needed: 1, got: 0 });
    }
    let d = family.dimension();
    let mut image = vec![0.0; d];
    let mut worst: f64 = 0.0;
    for x in sample_points {
        if x.len() != d {
            return Err(CoreError::DimensionMismatch { expected: d, got: x.len() });
        }
        let value = family.value(theta, x);
        for op in group.elements() {
            op.apply_slice(x, &mut image);
            let mapped = family.value(theta, &image);
            let residual = (mapped - op.parity() as f64 * value).abs() / (1.0 + value.abs());
            worst = worst.max(residual);
        }
    }
    Ok(worst)
}

/// Displacement speed of the nodal surface along its outward normal per unit
/// change of each parameter, evaluated at a point on (or near) the node.
///
/// Returns `grad_theta psi / |grad psi|`, the normal velocity relative to the
/// positive nodal domain. Fails when the spatial gradient vanishes (the node
/// is not a regular surface there).
pub fn nodal_shape_velocity(
    family: &dyn TrialWaveFunction,
    theta: &[f64],
    x_on_node: &[f64],
    node_tolerance: f64,
) -> Result<Vec<f64>> {
    let d = family.dimension();
    if x_on_node.len() != d {
        return Err(CoreError::DimensionMismatch { expected: d, got: x_on_node.len() });
    }
    let mut grad = vec![0.0; d];
    let value = family.value_and_gradient(theta, x_on_node, &mut grad);
    let grad_norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if grad_norm == 0.0 || !grad_norm.is_finite() {
        return Err(CoreError::DegenerateNode { grad_norm });
    }
    if value.abs() > node_tolerance * (1.0 + grad_norm) {
        return Err(CoreError::InvalidParameter(format!(
            "point is not on the node: |psi| = {:.3e}",
            value.abs()
        )));
    }
    let mut velocity = vec![0.0; family.parameter_count()];
    family.parameter_gradient(theta, x_on_node, &mut velocity);
    for v in &mut velocity {
        *v /= grad_norm;
    }
    Ok(velocity)
}

/// Low-discrepancy points in a box, used for construction-time validation of
/// user-supplied families (additive Kronecker sequence).
pub fn quasi_random_box_points(bounds: &[(f64, f64)], count: usize) -> Vec<Vec<f64>> {
    let d = bounds.len();
    // Generalized golden-ratio sequence.
    let mut gamma: f64 = 1.0;
    for _ in 0..16 {
        gamma = (1.0 + gamma).powf(1.0 / (d as f64 + 1.0));
    }
    let alphas: Vec<f64> = (1..=d).map(|k| (1.0 / gamma.powi(k as i32)).fract()).collect();
    (0..count)
        .map(|n| {
            bounds
                .iter()
                .zip(&alphas)
                .map(|(&(lo, hi), &a)| {
                    let u = (0.5 + a * (n as f64 + 1.0)).fract();
                    lo + u * (hi - lo)
                })
                .collect()
        })
        .collect()
}
