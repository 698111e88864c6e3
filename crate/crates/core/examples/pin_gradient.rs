//! Development probe: compares the two quadrature forms of the fixed-node
//! energy gradient against the grid finite-difference reference on the
//! tilted-plane model, to fix the estimator normalization.

use std::time::Instant;

use nodalmc_core::models::make_model;
use nodalmc_core::oracle::{solve_dirichlet_groundstate, GridSpec, MASK_INSIDE};

fn main() {
    let entry = make_model("odd_well3d", &Default::default()).unwrap();
    let model = entry.model();
    let family = entry.trial();
    let grid = GridSpec::with_spacing(model.bounds(), 0.15).unwrap();
    let delta = 0.02;

    for theta1 in [0.1, 0.3] {
        let theta = [theta1, 0.0];
        let t0 = Instant::now();
        let base = solve_dirichlet_groundstate(model, Some((family, &theta)), &grid).unwrap();
        println!(
            "theta = {theta:?}: E_fn = {:.8} (residual {:.2e}, {} iterations, {:.1?})",
            base.energy,
            base.residual,
            base.iterations,
            t0.elapsed()
        );

        // Finite-difference reference in component 1.
        let p = solve_dirichlet_groundstate(model, Some((family, &[theta1 + delta, 0.0])), &grid)
            .unwrap();
        let m = solve_dirichlet_groundstate(model, Some((family, &[theta1 - delta, 0.0])), &grid)
            .unwrap();
        let fd = (p.energy - m.energy) / (2.0 * delta);
        println!("  FD reference dE/dtheta1 = {fd:.6} (E+ = {:.8}, E- = {:.8})", p.energy, m.energy);

        // Bulk quadrature: <(H - E)(dpsi/dtheta_k)>_eta / <psi_I>_eta with
        // eta the groundstate density psi_fn.
        let e = base.energy;
        let mut num = [0.0f64; 2];
        let mut den = 0.0f64;
        let mut total = 0.0f64;
        let mut pg = [0.0f64; 2];
        let mut pgl = [0.0f64; 2];
        for flat in 0..grid.len() {
            if base.mask.cells[flat] != MASK_INSIDE {
                continue;
            }
            let x = grid.point(flat);
            let w = base.values[flat];
            family.parameter_gradient(&theta, &x, &mut pg);
            family.parameter_gradient_laplacian(&theta, &x, &mut pgl);
            let v = model.potential(&x);
            for k in 0..2 {
                num[k] += w * (-0.5 * pgl[k] + (v - e) * pg[k]);
            }
            den += w * family.value(&theta, &x);
            total += w;
        }
        let bulk: Vec<f64> = num.iter().map(|n| n / den).collect();
        let _ = total;
        println!("  bulk quadrature form  = {:?}", bulk);
        println!("  2 x bulk              = {:?}", [2.0 * bulk[0], 2.0 * bulk[1]]);
        println!("  ratio FD / bulk       = {:.4}", fd / bulk[0]);
    }
}
