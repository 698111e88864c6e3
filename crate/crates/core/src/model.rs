//! The Hamiltonian `H = -Laplacian/2 + V` with its symmetry group and
//! simulation box.

use std::sync::Arc;

use crate::error::{CoreError, Result};
use crate::symmetry::SymmetryGroup;
use crate::trial::TrialWaveFunction;

pub type PotentialFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Exact references attached to a model when they are analytically known.
#[derive(Debug, Clone, Default)]
pub struct ExactReferences {
    /// Groundstate energy of the relevant (fixed-node or Dirichlet) problem
    /// at the family's reference parameters.
    pub groundstate_energy: Option<f64>,
    pub notes: Option<String>,
}

/// A Schrödinger problem: dimension, smooth potential, optional finite
/// symmetry group, and the box used by the oracle and the samplers.
#[derive(Clone)]
pub struct Model {
    name: String,
    dimension: usize,
    potential: PotentialFn,
    symmetry: Option<SymmetryGroup>,
    bounds: Vec<(f64, f64)>,
    exact: ExactReferences,
}

impl Model {
    pub fn new(
        name: impl Into<String>,
        dimension: usize,
        potential: PotentialFn,
        symmetry: Option<SymmetryGroup>,
        bounds: Vec<(f64, f64)>,
        exact: ExactReferences,
    ) -> Result<Self> {
        if bounds.len() != dimension {
            return Err(CoreError::DimensionMismatch { expected: dimension, got: bounds.len() });
        }
        if bounds.iter().any(|(lo, hi)| !(lo < hi)) {
            return Err(CoreError::InvalidParameter("empty box".into()));
        }
        if let Some(group) = &symmetry {
            if group.dim() != dimension {
                return Err(CoreError::DimensionMismatch {
                    expected: dimension,
                    got: group.dim(),
                });
            }
        }
        Ok(Self {
            name: name.into(),
            dimension,
            potential,
            symmetry,
            bounds,
            exact,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn potential(&self, x: &[f64]) -> f64 {
        (self.potential)(x)
    }

    pub fn potential_fn(&self) -> PotentialFn {
        self.potential.clone()
    }

    pub fn symmetry(&self) -> Option<&SymmetryGroup> {
        self.symmetry.as_ref()
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn exact(&self) -> &ExactReferences {
        &self.exact
    }

    pub fn box_diagonal(&self) -> f64 {
        self.bounds
            .iter()
            .map(|(lo, hi)| (hi - lo) * (hi - lo))
            .sum::<f64>()
            .sqrt()
    }

    /// Checks `V(Sx) = V(x)` on the given points; returns the worst residual.
    pub fn potential_invariance_residual(&self, points: &[Vec<f64>]) -> f64 {
        let Some(group) = &self.symmetry else { return 0.0 };
        let mut image = vec![0.0; self.dimension];
        let mut worst: f64 = 0.0;
        for x in points {
            let v = self.potential(x);
            for op in group.elements() {
                op.apply_slice(x, &mut image);
                worst = worst.max((self.potential(&image) - v).abs());
            }
        }
        worst
    }
}

impl std::fmt::Debug for Model {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Model")
            .field("name", &self.name)
            .field("dimension", &self.dimension)
            .field("bounds", &self.bounds)
            .finish()
    }
}

/// Node-proximity guard for [`local_energy`]: evaluation is rejected when
/// `|psi| < 1e-12 * (1 + |grad psi| * box_diagonal)`, which keeps the
/// division away from numerical zero at negligible bias.
pub fn node_proximity_threshold(model: &Model, grad_norm: f64) -> f64 {
    1e-12 * (1.0 + grad_norm * model.box_diagonal())
}

/// Local energy `E_L(x) = V(x) - Laplacian(psi)(x) / (2 psi(x))`.
///
/// Constant exactly when `psi` is an eigenfunction (the zero-variance
/// principle). Errors out near the nodes where the ratio degenerates.
pub fn local_energy(
    model: &Model,
    family: &dyn TrialWaveFunction,
    theta: &[f64],
    x: &[f64],
) -> Result<f64> {
    let value = family.value(theta, x);
    let grad_norm = family.gradient_norm(theta, x);
    let threshold = node_proximity_threshold(model, grad_norm);
    if value.abs() < threshold {
        return Err(CoreError::NodeProximity { psi_abs: value.abs(), threshold });
    }
    Ok(model.potential(x) - family.laplacian(theta, x) / (2.0 * value))
}
