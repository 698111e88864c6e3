//! Deterministic ground truth: finite-difference Dirichlet eigensolves on
//! grids (d <= 3), inhomogeneous Dirichlet solves for exit functionals,
//! finite-difference parameter gradients of the fixed-node energy, and
//! closed-form interval references.

use crate::error::{CoreError, Result};
use crate::model::Model;
use crate::trial::TrialWaveFunction;

pub mod grid;
pub mod io;
mod solver;

pub use grid::{build_mask, component_count, DomainMask, GridSpec, MASK_BOUNDARY, MASK_INSIDE, MASK_OUTSIDE};
pub use solver::{dot, norm, DiscreteHamiltonian};

/// A grid-discretized Dirichlet groundstate.
#[derive(Debug, Clone)]
pub struct OracleSolution {
    pub energy: f64,
    /// Full-grid values (zero outside the mask), sign-normalized positive,
    /// unit grid l2 norm.
    pub values: Vec<f64>,
    pub mask: DomainMask,
    pub grid: GridSpec,
    /// Relative eigen-residual ||(H_h - E) psi|| / ||psi||.
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl OracleSolution {
    /// Mean of `f` against the groundstate density `psi* dx` on the mask.
    pub fn average_against_groundstate(&self, f: impl Fn(&[f64]) -> f64) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for flat in 0..self.grid.len() {
            if self.mask.cells[flat] == MASK_INSIDE {
                let w = self.values[flat];
                num += w * f(&self.grid.point(flat));
                den += w;
            }
        }
        num / den
    }

    /// Mean of `f` against `psi*^2 dx` (the fixed-node groundstate density).
    pub fn average_against_density(&self, f: impl Fn(&[f64]) -> f64) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for flat in 0..self.grid.len() {
            if self.mask.cells[flat] == MASK_INSIDE {
                let w = self.values[flat] * self.values[flat];
                num += w * f(&self.grid.point(flat));
                den += w;
            }
        }
        num / den
    }
}

/// Solves the Dirichlet groundstate of `model` on the positive nodal domain
/// of `family` (or on the whole box interior when no family is given).
pub fn solve_dirichlet_groundstate(
    model: &Model,
    family: Option<(&dyn TrialWaveFunction, &[f64])>,
    grid: &GridSpec,
) -> Result<OracleSolution> {
    if grid.dim() != model.dimension() {
        return Err(CoreError::DimensionMismatch {
            expected: model.dimension(),
            got: grid.dim(),
        });
    }
    let mask = build_mask(grid, family)?;
    let op = DiscreteHamiltonian::assemble(model, grid, &mask);
    let eig = solver::groundstate(&op, 1e-10, 200)?;

    // Perron groundstate: single sign; normalize positive.
    let mut values = vec![0.0; grid.len()];
    let flip = if eig.vector.iter().sum::<f64>() < 0.0 { -1.0 } else { 1.0 };
    for (r, &flat) in op.inside.iter().enumerate() {
        values[flat] = flip * eig.vector[r];
    }
    Ok(OracleSolution {
        energy: eig.energy,
        values,
        mask,
        grid: grid.clone(),
        residual: eig.residual,
        iterations: eig.iterations,
        converged: eig.converged,
    })
}

/// Central finite differences of the fixed-node groundstate energy with
/// respect to each nodal parameter.
pub struct ThetaGradient {
    pub gradient: Vec<f64>,
    /// Components where the mask topology changed between `theta - delta`
    /// and `theta + delta` (the difference is then unreliable).
    pub discontinuous_components: Vec<usize>,
}

pub fn finite_difference_theta_gradient(
    model: &Model,
    family: &dyn TrialWaveFunction,
    theta: &[f64],
    grid: &GridSpec,
    delta: f64,
) -> Result<ThetaGradient> {
    let p = family.parameter_count();
    let mut gradient = vec![0.0; p];
    let mut discontinuous = Vec::new();
    for k in 0..p {
        let mut tp = theta.to_vec();
        let mut tm = theta.to_vec();
        tp[k] += delta;
        tm[k] -= delta;
        let sp = solve_dirichlet_groundstate(model, Some((family, &tp)), grid)?;
        let sm = solve_dirichlet_groundstate(model, Some((family, &tm)), grid)?;
        gradient[k] = (sp.energy - sm.energy) / (2.0 * delta);
        let cp = component_count(grid, &sp.mask);
        let cm = component_count(grid, &sm.mask);
        if cp != cm {
            discontinuous.push(k);
        }
    }
    Ok(ThetaGradient { gradient, discontinuous_components: discontinuous })
}

/// Result of an inhomogeneous Dirichlet solve `(H - lambda) h = 0`, `h = phi`
/// on the boundary layer.
#[derive(Debug)]
pub struct ExitFunctional {
    /// Full-grid h (boundary layer carries the boundary data).
    pub values: Vec<f64>,
    /// Average of h against the groundstate density psi*; equals the
    /// boundary functional of the weighted hitting distribution.
    pub functional: f64,
    pub groundstate_energy: f64,
}

/// Solves `(H - lambda) h = 0` inside the mask with `h = phi` on the
/// staircase boundary, then averages `h` against the groundstate density.
pub fn solve_exit_functional(
    model: &Model,
    family: Option<(&dyn TrialWaveFunction, &[f64])>,
    grid: &GridSpec,
    lambda: f64,
    phi_boundary: impl Fn(&[f64]) -> f64,
) -> Result<ExitFunctional> {
    let reference = solve_dirichlet_groundstate(model, family, grid)?;
    if lambda >= reference.energy {
        return Err(CoreError::SpectralShift { lambda, energy: reference.energy });
    }
    let mask = &reference.mask;
    let op = DiscreteHamiltonian::assemble(model, grid, mask);
    let dim = grid.dim();
    let h = grid.spacing();

    // Right-hand side collects the stencil couplings to boundary values.
    let mut b = vec![0.0; op.unknowns()];
    for (r, &flat) in op.inside.iter().enumerate() {
        let idx = grid.unravel(flat);
        for a in 0..dim {
            let stride = grid.stride(a);
            for dir in [-1isize, 1] {
                let ni = idx[a] as isize + dir;
                if ni < 0 || ni as usize >= grid.counts[a] {
                    continue;
                }
                let nb_flat = (flat as isize + dir * stride as isize) as usize;
                if mask.cells[nb_flat] != MASK_INSIDE {
                    let x = grid.point(nb_flat);
                    b[r] += phi_boundary(&x) / (2.0 * h[a] * h[a]);
                }
            }
        }
    }

    let mut x = vec![0.0; op.unknowns()];
    match solver::solve_cg(&op, lambda, &b, &mut x, 1e-12, 40_000) {
        Ok(_) => {}
        Err(CoreError::SpectralShift { .. }) => {
            return Err(CoreError::SpectralShift { lambda, energy: reference.energy })
        }
        Err(e) => return Err(e),
    }

    let mut values = vec![0.0; grid.len()];
    for (r, &flat) in op.inside.iter().enumerate() {
        values[flat] = x[r];
    }
    for flat in 0..grid.len() {
        if mask.cells[flat] == MASK_BOUNDARY {
            values[flat] = phi_boundary(&grid.point(flat));
        }
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for (r, &flat) in op.inside.iter().enumerate() {
        let w = reference.values[flat];
        num += w * x[r];
        den += w;
    }
    Ok(ExitFunctional {
        values,
        functional: num / den,
        groundstate_energy: reference.energy,
    })
}

/// Closed-form references for the interval `(0, L)` with `V = 0`,
/// `L = 1 + theta`.
#[derive(Debug, Clone)]
pub struct IntervalReference {
    pub length: f64,
    /// `pi^2 / (2 L^2)`.
    pub energy: f64,
    /// Derivative of the energy with respect to the endpoint parameter
    /// (right endpoint moving at unit speed): `-pi^2 / L^3`.
    pub energy_derivative: f64,
    /// `|grad psi*|` at either endpoint for the sine profile: `pi / L`.
    pub boundary_gradient: f64,
    /// Total mass of the weighted hitting distribution: `E / (E - lambda)`.
    pub mu_total_mass: f64,
    /// Mean exit position: `L/2 * mass` (both endpoints carry equal mass).
    pub mu_mean_position: f64,
    lambda: f64,
}

impl IntervalReference {
    /// Hitting-distribution functional of `phi`: the distribution carries
    /// mass `E / (2 (E - lambda))` at each endpoint.
    pub fn mu_functional(&self, phi: impl Fn(f64) -> f64) -> f64 {
        let atom = self.energy / (2.0 * (self.energy - self.lambda));
        atom * (phi(0.0) + phi(self.length))
    }
}

pub fn analytic_interval_reference(theta: f64, lambda: f64) -> Result<IntervalReference> {
    let length = 1.0 + theta;
    if length <= 0.0 {
        return Err(CoreError::InvalidParameter("interval of nonpositive length".into()));
    }
    let pi = std::f64::consts::PI;
    let energy = pi * pi / (2.0 * length * length);
    if lambda >= energy {
        return Err(CoreError::SpectralShift { lambda, energy });
    }
    let mass = energy / (energy - lambda);
    Ok(IntervalReference {
        length,
        energy,
        energy_derivative: -pi * pi / length.powi(3),
        boundary_gradient: pi / length,
        mu_total_mass: mass,
        mu_mean_position: 0.5 * length * mass,
        lambda,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::make_model;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn interval_entry() -> crate::models::ModelCatalogEntry {
        make_model("interval", &Default::default()).unwrap()
    }

    #[test]
    fn interval_groundstate_to_grid_accuracy() {
        let entry = interval_entry();
        let grid = GridSpec::with_spacing(entry.model().bounds(), 0.005).unwrap();
        let sol =
            solve_dirichlet_groundstate(entry.model(), Some((entry.trial(), &[0.0])), &grid)
                .unwrap();
        assert!(sol.converged);
        assert!((sol.energy - PI * PI / 2.0).abs() < 1e-3, "E = {}", sol.energy);
        assert!(sol.residual < 1e-8);
        // Perron positivity after normalization.
        let min_inside = sol
            .values
            .iter()
            .zip(&sol.mask.cells)
            .filter(|(_, &m)| m == MASK_INSIDE)
            .map(|(v, _)| *v)
            .fold(f64::INFINITY, f64::min);
        assert!(min_inside > 0.0);
    }

    #[test]
    fn grid_convergence_is_second_order_interval() {
        let entry = interval_entry();
        let exact = PI * PI / 2.0;
        let mut errors = Vec::new();
        for h in [0.01, 0.005] {
            let grid = GridSpec::with_spacing(entry.model().bounds(), h).unwrap();
            let sol =
                solve_dirichlet_groundstate(entry.model(), Some((entry.trial(), &[0.0])), &grid)
                    .unwrap();
            errors.push((sol.energy - exact).abs());
        }
        let ratio = errors[0] / errors[1];
        assert!((3.2..=4.8).contains(&ratio), "ratio {ratio}, errors {errors:?}");
    }

    #[test]
    fn square_groundstate_and_convergence() {
        let model = Model::new(
            "square2d",
            2,
            Arc::new(|_: &[f64]| 0.0),
            None,
            vec![(0.0, 1.0), (0.0, 1.0)],
            Default::default(),
        )
        .unwrap();
        let exact = PI * PI;
        let mut errors = Vec::new();
        for h in [0.02, 0.01] {
            let grid = GridSpec::with_spacing(model.bounds(), h).unwrap();
            let sol = solve_dirichlet_groundstate(&model, None, &grid).unwrap();
            errors.push((sol.energy - exact).abs());
        }
        assert!(errors[1] < 5e-3, "2D error {}", errors[1]);
        let ratio = errors[0] / errors[1];
        assert!((3.2..=4.8).contains(&ratio), "ratio {ratio}, errors {errors:?}");
    }

    #[test]
    fn interval_exit_functionals() {
        let entry = interval_entry();
        let grid = GridSpec::with_spacing(entry.model().bounds(), 0.005).unwrap();
        let fam = Some((entry.trial(), [0.0].as_slice()));

        // Constants are harmonic with matching boundary data: h == 1.
        let unit = solve_exit_functional(entry.model(), fam, &grid, 0.0, |_| 1.0).unwrap();
        assert_abs_diff_eq!(unit.functional, 1.0, epsilon = 1e-6);

        // Linear functions are harmonic too: functional = <x>_sin = 1/2.
        let linear = solve_exit_functional(entry.model(), fam, &grid, 0.0, |x| x[0]).unwrap();
        assert_abs_diff_eq!(linear.functional, 0.5, epsilon = 1e-5);

        // Shifted solve against the closed form E/(E - lambda).
        let shifted = solve_exit_functional(entry.model(), fam, &grid, 1.0, |_| 1.0).unwrap();
        let reference = analytic_interval_reference(0.0, 1.0).unwrap();
        assert_abs_diff_eq!(reference.mu_total_mass, PI * PI / (PI * PI - 2.0), epsilon = 1e-12);
        assert!(
            (shifted.functional - reference.mu_total_mass).abs() < 2e-4,
            "functional {} vs {}",
            shifted.functional,
            reference.mu_total_mass
        );
    }

    #[test]
    fn lambda_above_groundstate_is_rejected() {
        let entry = interval_entry();
        let grid = GridSpec::with_spacing(entry.model().bounds(), 0.01).unwrap();
        let err = solve_exit_functional(
            entry.model(),
            Some((entry.trial(), &[0.0])),
            &grid,
            6.0,
            |_| 1.0,
        )
        .unwrap_err();
        assert!(matches!(err, CoreError::SpectralShift { .. }));
    }

    #[test]
    fn analytic_reference_values() {
        let r = analytic_interval_reference(0.0, 0.0).unwrap();
        assert_abs_diff_eq!(r.energy, 4.934802200544679, epsilon = 1e-12);
        assert_abs_diff_eq!(r.energy_derivative, -PI * PI, epsilon = 1e-12);
        assert_abs_diff_eq!(r.mu_total_mass, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.mu_mean_position, 0.5, epsilon = 1e-12);
        let r = analytic_interval_reference(0.5, 0.0).unwrap();
        assert_abs_diff_eq!(r.energy, PI * PI / 4.5, epsilon = 1e-12);
    }

    #[test]
    fn interval_fd_gradient_matches_analytic_derivative() {
        let entry = interval_entry();
        let grid = GridSpec::with_spacing(entry.model().bounds(), 0.005).unwrap();
        let g = finite_difference_theta_gradient(entry.model(), entry.trial(), &[0.0], &grid, 0.01)
            .unwrap();
        assert!(g.discontinuous_components.is_empty());
        assert!(
            (g.gradient[0] - (-PI * PI)).abs() < 0.01 * PI * PI,
            "dE/dtheta = {}",
            g.gradient[0]
        );
    }

    #[test]
    fn eq11_self_consistency_on_the_interval() {
        // One-sided normal derivative of the oracle groundstate inserted into
        // the surface identity reproduces the exit-functional value within 2%.
        let entry = interval_entry();
        let grid = GridSpec::with_spacing(entry.model().bounds(), 0.005).unwrap();
        let sol =
            solve_dirichlet_groundstate(entry.model(), Some((entry.trial(), &[0.0])), &grid)
                .unwrap();
        let h = grid.spacing()[0];
        // Locate boundary-adjacent interior points at both ends of the mask.
        let inside: Vec<usize> = (0..grid.len())
            .filter(|&f| sol.mask.cells[f] == MASK_INSIDE)
            .collect();
        let first = inside[0];
        let last = *inside.last().unwrap();
        // One-sided second-order difference for psi'(boundary), with
        // psi(boundary) = 0: psi'(0) = (4 psi_1 - psi_2) / (2h) pointing inward.
        let d_left = (4.0 * sol.values[first] - sol.values[first + 1]) / (2.0 * h);
        let d_right = (4.0 * sol.values[last] - sol.values[last - 1]) / (2.0 * h);
        // Outward normal derivative is negative on both sides.
        let sum_flux = d_left + d_right;
        let integral: f64 = inside.iter().map(|&f| sol.values[f]).sum::<f64>() * h;
        let lambda = 1.0;
        let mass_surface = sum_flux / (2.0 * (sol.energy - lambda) * integral);
        let reference = analytic_interval_reference(0.0, lambda).unwrap().mu_total_mass;
        assert!(
            (mass_surface - reference).abs() / reference < 0.02,
            "surface quadrature {mass_surface} vs {reference}"
        );
    }

    #[test]
    fn two_fermion_oracle_energy_and_swap_symmetry() {
        let entry = make_model("two_fermion_trap", &Default::default()).unwrap();
        let grid = GridSpec::with_spacing(entry.model().bounds(), 0.1).unwrap();
        let sol =
            solve_dirichlet_groundstate(entry.model(), Some((entry.trial(), &[0.0])), &grid)
                .unwrap();
        assert!((sol.energy - 2.0).abs() < 5e-3, "E = {}", sol.energy);

        // The negative-domain solve is the swap image of the positive-domain
        // solve on a swap-aligned grid.
        let neg = NegatedFamily(entry.trial_arc());
        let sol_neg = solve_dirichlet_groundstate(entry.model(), Some((&neg, &[0.0])), &grid)
            .unwrap();
        assert!((sol.energy - sol_neg.energy).abs() < 1e-8);
        let n = grid.counts[0];
        let mut max_asym: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let a = sol.values[i * n + j];
                let b = sol_neg.values[j * n + i];
                max_asym = max_asym.max((a - b).abs());
            }
        }
        assert!(max_asym < 1e-8, "swap asymmetry {max_asym}");
    }

    /// Sign-flipped view of a family (its positive domain is the original
    /// negative domain).
    struct NegatedFamily(std::sync::Arc<dyn crate::trial::TrialWaveFunction>);

    impl crate::trial::TrialWaveFunction for NegatedFamily {
        fn dimension(&self) -> usize {
            self.0.dimension()
        }
        fn parameter_count(&self) -> usize {
            self.0.parameter_count()
        }
        fn value(&self, theta: &[f64], x: &[f64]) -> f64 {
            -self.0.value(theta, x)
        }
        fn gradient(&self, theta: &[f64], x: &[f64], out: &mut [f64]) {
            self.0.gradient(theta, x, out);
            out.iter_mut().for_each(|v| *v = -*v);
        }
        fn laplacian(&self, theta: &[f64], x: &[f64]) -> f64 {
            -self.0.laplacian(theta, x)
        }
        fn parameter_gradient(&self, theta: &[f64], x: &[f64], out: &mut [f64]) {
            self.0.parameter_gradient(theta, x, out);
            out.iter_mut().for_each(|v| *v = -*v);
        }
        fn parameter_gradient_laplacian(&self, theta: &[f64], x: &[f64], out: &mut [f64]) {
            self.0.parameter_gradient_laplacian(theta, x, out);
            out.iter_mut().for_each(|v| *v = -*v);
        }
    }
}
