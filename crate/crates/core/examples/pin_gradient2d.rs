//! Development probe on the separable 2D reduction of the tilted-plane
//! model: the z-axis factors out exactly (adds 3/2), so a fine 2D grid gives
//! a trusted reference for the fixed-node gradient. Pins the normalization
//! of both the bulk and surface quadrature forms.

use std::sync::Arc;

use nodalmc_core::model::Model;
use nodalmc_core::oracle::{solve_dirichlet_groundstate, GridSpec, MASK_INSIDE};
use nodalmc_core::trial::TrialWaveFunction;

/// (x + a y) exp(-(x^2 + 2 y^2)/2) in 2D.
struct TiltedPlane2D;

impl TiltedPlane2D {
    fn envelope(x: &[f64]) -> f64 {
        (-(x[0] * x[0] + 2.0 * x[1] * x[1]) / 2.0).exp()
    }
}

impl TrialWaveFunction for TiltedPlane2D {
    fn dimension(&self) -> usize {
        2
    }
    fn parameter_count(&self) -> usize {
        1
    }
    fn value(&self, theta: &[f64], x: &[f64]) -> f64 {
        (x[0] + theta[0] * x[1]) * Self::envelope(x)
    }
    fn gradient(&self, theta: &[f64], x: &[f64], out: &mut [f64]) {
        let g = Self::envelope(x);
        let u = x[0] + theta[0] * x[1];
        out[0] = (1.0 - u * x[0]) * g;
        out[1] = (theta[0] - 2.0 * u * x[1]) * g;
    }
    fn laplacian(&self, theta: &[f64], x: &[f64]) -> f64 {
        let g = Self::envelope(x);
        let u = x[0] + theta[0] * x[1];
        let q = x[0] * x[0] + 4.0 * x[1] * x[1];
        (u * (q - 3.0) - 2.0 * (x[0] + 2.0 * theta[0] * x[1])) * g
    }
    fn parameter_gradient(&self, _theta: &[f64], x: &[f64], out: &mut [f64]) {
        out[0] = x[1] * Self::envelope(x);
    }
    fn parameter_gradient_laplacian(&self, _theta: &[f64], x: &[f64], out: &mut [f64]) {
        let q = x[0] * x[0] + 4.0 * x[1] * x[1];
        out[0] = x[1] * (q - 7.0) * Self::envelope(x);
    }
}

fn trilinear(grid: &GridSpec, values: &[f64], p: &[f64]) -> f64 {
    // Bilinear interpolation (2D).
    let h = grid.spacing();
    let fx = (p[0] - grid.bounds[0].0) / h[0];
    let fy = (p[1] - grid.bounds[1].0) / h[1];
    let i = (fx.floor() as usize).min(grid.counts[0] - 2);
    let j = (fy.floor() as usize).min(grid.counts[1] - 2);
    let tx = fx - i as f64;
    let ty = fy - j as f64;
    let at = |ii: usize, jj: usize| values[ii * grid.counts[1] + jj];
    at(i, j) * (1.0 - tx) * (1.0 - ty)
        + at(i + 1, j) * tx * (1.0 - ty)
        + at(i, j + 1) * (1.0 - tx) * ty
        + at(i + 1, j + 1) * tx * ty
}

fn main() {
    let model = Model::new(
        "tilted2d",
        2,
        Arc::new(|x: &[f64]| 0.5 * (x[0] * x[0] + 4.0 * x[1] * x[1])),
        None,
        vec![(-6.0, 6.0), (-6.0, 6.0)],
        Default::default(),
    )
    .unwrap();
    let family = TiltedPlane2D;

    for (h, a) in [(0.02, 0.1), (0.01, 0.1), (0.005, 0.1), (0.01, 0.3)] {
        let grid = GridSpec::with_spacing(model.bounds(), h).unwrap();
        let delta = 0.02;
        let solve = |t: f64| {
            solve_dirichlet_groundstate(&model, Some((&family, [t].as_slice())), &grid).unwrap()
        };
        let base = solve(a);
        let ep = solve(a + delta);
        let em = solve(a - delta);
        let fd = (ep.energy - em.energy) / (2.0 * delta);
        println!(
            "h = {h}: E2d({a}) = {:.8} -> E3d = {:.8}, FD dE/da = {:.6}",
            base.energy,
            base.energy + 1.5,
            fd
        );

        // Bulk quadrature (no factor): <(H-E) dpsi/da>_psi / <psi_I>_psi.
        let e = base.energy;
        let mut num = 0.0;
        let mut den = 0.0;
        let mut z1 = 0.0;
        let mut pg = [0.0];
        let mut pgl = [0.0];
        for flat in 0..grid.len() {
            if base.mask.cells[flat] != MASK_INSIDE {
                continue;
            }
            let x = grid.point(flat);
            let w = base.values[flat];
            family.parameter_gradient(&[a], &x, &mut pg);
            family.parameter_gradient_laplacian(&[a], &x, &mut pgl);
            num += w * (-0.5 * pgl[0] + (model.potential(&x) - e) * pg[0]);
            den += w * family.value(&[a], &x);
            z1 += w;
        }
        let bulk = num / den;
        println!("  bulk (x1) = {bulk:.6}   ratio FD/bulk = {:.4}", fd / bulk);

        // Surface quadrature along the nodal line x = -a y:
        //   integral of dpsi_I/da * (grad+ psi_fn . n+) ds  /  (2 * int psi_I psi_fn)
        let sq = (1.0f64 + a * a).sqrt();
        let n_plus = [-1.0 / sq, -a / sq];
        let dy = 0.01;
        let mut q = 0.0;
        let mut y = -5.0;
        let probe = 3.0 * h;
        while y <= 5.0 {
            let p0 = [-a * y, y];
            // One-sided difference into the interior (psi = 0 on the line):
            // psi'(0) ~ (4 psi(-s n) - psi(-2 s n)) / (2 s) along -n.
            let p1 = [p0[0] - probe * n_plus[0], p0[1] - probe * n_plus[1]];
            let p2 = [p0[0] - 2.0 * probe * n_plus[0], p0[1] - 2.0 * probe * n_plus[1]];
            let v1 = trilinear(&grid, &base.values, &p1);
            let v2 = trilinear(&grid, &base.values, &p2);
            let normal_deriv = -(4.0 * v1 - v2) / (2.0 * probe);
            family.parameter_gradient(&[a], &p0, &mut pg);
            q += pg[0] * normal_deriv * sq * dy;
            y += dy;
        }
        // Grid sums need the cell volume to be physical integrals.
        let den_phys = den * h * h;
        // Surface form with coefficient c:
        //   -c (E - lambda) mu(dpsi/da) / <psi_I>_eta = c q / (2 int psi_I psi_fn)
        let surface_c1 = q / (2.0 * den_phys);
        println!(
            "  surface with c=1: {surface_c1:.6}  (c=2: {:.6})  ratio FD/surface_c1 = {:.4}",
            2.0 * surface_c1,
            fd / surface_c1
        );
    }
}
