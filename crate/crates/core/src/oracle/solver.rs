//! Masked finite-difference Hamiltonian, conjugate-gradient kernel and
//! shifted inverse power iteration.

use rayon::prelude::*;

use crate::error::{CoreError, Result};
use crate::model::Model;
use crate::oracle::grid::{DomainMask, GridSpec, MASK_INSIDE};

const NO_NEIGHBOR: u32 = u32::MAX;

/// Second-order central-difference discretization of `H = -Laplacian/2 + V`
/// restricted to the inside points of a mask, with zero Dirichlet data on
/// everything else.
pub struct DiscreteHamiltonian {
    /// Flat grid index of each unknown.
    pub inside: Vec<usize>,
    /// Reduced index per flat grid point (NO_NEIGHBOR outside).
    pub reduced: Vec<u32>,
    /// For each unknown, its 2d neighbor reduced indices (axis-major: -x, +x, -y, +y, ...).
    neighbors: Vec<u32>,
    /// Diagonal: sum_a 1/h_a^2 + V_i.
    pub diag: Vec<f64>,
    /// Off-diagonal coefficient per axis: -1/(2 h_a^2).
    off: Vec<f64>,
    dim: usize,
}

impl DiscreteHamiltonian {
    pub fn assemble(model: &Model, grid: &GridSpec, mask: &DomainMask) -> Self {
        let dim = grid.dim();
        let h = grid.spacing();
        let mut reduced = vec![NO_NEIGHBOR; grid.len()];
        let mut inside = Vec::with_capacity(mask.inside_count);
        for flat in 0..grid.len() {
            if mask.cells[flat] == MASK_INSIDE {
                reduced[flat] = inside.len() as u32;
                inside.push(flat);
            }
        }
        let lap_diag: f64 = h.iter().map(|hi| 1.0 / (hi * hi)).sum();
        let off: Vec<f64> = h.iter().map(|hi| -0.5 / (hi * hi)).collect();
        let mut neighbors = vec![NO_NEIGHBOR; inside.len() * 2 * dim];
        let mut diag = vec![0.0; inside.len()];
        for (r, &flat) in inside.iter().enumerate() {
            let idx = grid.unravel(flat);
            diag[r] = lap_diag + model.potential(&grid.point(flat));
            for a in 0..dim {
                let stride = grid.stride(a);
                if idx[a] > 0 {
                    neighbors[r * 2 * dim + 2 * a] = reduced[flat - stride];
                }
                if idx[a] + 1 < grid.counts[a] {
                    neighbors[r * 2 * dim + 2 * a + 1] = reduced[flat + stride];
                }
            }
        }
        Self { inside, reduced, neighbors, diag, off, dim }
    }

    pub fn unknowns(&self) -> usize {
        self.inside.len()
    }

    /// `out = (H - shift) x`.
    pub fn apply(&self, shift: f64, x: &[f64], out: &mut [f64]) {
        let dim = self.dim;
        out.par_iter_mut().enumerate().for_each(|(r, o)| {
            let mut acc = (self.diag[r] - shift) * x[r];
            let base = r * 2 * dim;
            for a in 0..dim {
                let mut nb_sum = 0.0;
                let lo = self.neighbors[base + 2 * a];
                if lo != NO_NEIGHBOR {
                    nb_sum += x[lo as usize];
                }
                let hi = self.neighbors[base + 2 * a + 1];
                if hi != NO_NEIGHBOR {
                    nb_sum += x[hi as usize];
                }
                acc += self.off[a] * nb_sum;
            }
            *o = acc;
        });
    }

    pub fn rayleigh_quotient(&self, x: &[f64], scratch: &mut [f64]) -> f64 {
        self.apply(0.0, x, scratch);
        dot(x, scratch) / dot(x, x)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    // Deterministic chunked reduction (fixed tree independent of thread count).
    const CHUNK: usize = 4096;
    let partials: Vec<f64> = a
        .par_chunks(CHUNK)
        .zip(b.par_chunks(CHUNK))
        .map(|(ca, cb)| ca.iter().zip(cb).map(|(x, y)| x * y).sum::<f64>())
        .collect();
    partials.iter().sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Jacobi-preconditioned conjugate gradients for `(H - shift) x = b`.
///
/// Fails with `SpectralShift` when the operator turns out indefinite
/// (the shift was not below the smallest eigenvalue).
pub fn solve_cg(
    op: &DiscreteHamiltonian,
    shift: f64,
    b: &[f64],
    x: &mut [f64],
    rel_tol: f64,
    max_iter: usize,
) -> Result<usize> {
    let n = b.len();
    let mut r = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut ap = vec![0.0; n];

    let precond: Vec<f64> = op
        .diag
        .iter()
        .map(|d| {
            let v = d - shift;
            if v.abs() > 1e-300 {
                1.0 / v.max(1e-12)
            } else {
                1.0
            }
        })
        .collect();

    op.apply(shift, x, &mut ap);
    for i in 0..n {
        r[i] = b[i] - ap[i];
    }
    let b_norm = norm(b).max(1e-300);
    let mut rz = {
        for i in 0..n {
            z[i] = precond[i] * r[i];
        }
        dot(&r, &z)
    };
    p.copy_from_slice(&z);

    for iter in 0..max_iter {
        if norm(&r) <= rel_tol * b_norm {
            return Ok(iter);
        }
        op.apply(shift, &p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return Err(CoreError::SpectralShift { lambda: shift, energy: f64::NAN });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        for i in 0..n {
            z[i] = precond[i] * r[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    // Reached the cap; report how far we got (caller decides).
    Ok(max_iter)
}

pub struct EigenResult {
    pub energy: f64,
    pub vector: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Smallest eigenpair of the masked Hamiltonian by shifted inverse power
/// iteration with conjugate-gradient inner solves.
///
/// The initial shift is the Gershgorin-style lower bound `min V`; once the
/// Rayleigh quotient settles the shift is pulled up to `E - margin` to
/// accelerate, backing off if the operator ever looks indefinite.
pub fn groundstate(op: &DiscreteHamiltonian, rel_tol: f64, max_outer: usize) -> Result<EigenResult> {
    let n = op.unknowns();
    let min_diag_v = op
        .diag
        .iter()
        .zip(op.inside.iter())
        .map(|(d, _)| *d)
        .fold(f64::INFINITY, f64::min);
    // diag = sum 1/h^2 + V; Gershgorin lower bound over rows is >= min V
    // since each row's off-diagonal mass is at most sum 1/h^2.
    let lower_bound = op
        .diag
        .iter()
        .map(|d| d - 2.0 * op.off.iter().map(|o| o.abs()).sum::<f64>())
        .fold(f64::INFINITY, f64::min)
        .min(min_diag_v);

    let mut x = vec![1.0; n];
    let s = norm(&x);
    x.iter_mut().for_each(|v| *v /= s);

    let mut scratch = vec![0.0; n];
    let mut energy = op.rayleigh_quotient(&x, &mut scratch);
    let mut shift = lower_bound;
    let mut margin = 0.5f64;
    let mut best: Option<EigenResult> = None;

    for outer in 0..max_outer {
        let mut y = x.clone();
        let inner_tol = 1e-10;
        match solve_cg(op, shift, &x, &mut y, inner_tol, 20 * (n as f64).sqrt() as usize + 200) {
            Ok(_) => {}
            Err(CoreError::SpectralShift { .. }) => {
                // Shift overtook the groundstate; back off and retry.
                margin *= 2.0;
                shift = energy - margin;
                if shift <= lower_bound {
                    shift = lower_bound;
                }
                continue;
            }
            Err(e) => return Err(e),
        }
        let s = norm(&y);
        if !(s.is_finite() && s > 0.0) {
            return Err(CoreError::OracleStagnation("inverse iteration produced a zero vector".into()));
        }
        y.iter_mut().for_each(|v| *v /= s);
        let new_energy = op.rayleigh_quotient(&y, &mut scratch);
        let rel_change = (new_energy - energy).abs() / new_energy.abs().max(1e-300);
        x = y;
        energy = new_energy;

        // Eigen-residual ||(H - E) x|| (x is normalized).
        op.apply(energy, &x, &mut scratch);
        let residual = norm(&scratch);

        let result = EigenResult {
            energy,
            vector: x.clone(),
            residual,
            iterations: outer + 1,
            converged: rel_change < rel_tol && residual < 1e-8,
        };
        if best.as_ref().map_or(true, |b| residual < b.residual) {
            best = Some(result);
        }
        if rel_change < rel_tol && residual < 1e-8 {
            break;
        }
        // Accelerate once the Rayleigh quotient has settled.
        if outer >= 4 {
            shift = energy - margin;
        }
    }
    best.ok_or_else(|| CoreError::OracleStagnation("no iteration completed".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::grid::build_mask;
    use std::sync::Arc;

    #[test]
    fn cg_solves_a_poisson_system() {
        let model = Model::new(
            "poisson",
            1,
            Arc::new(|_: &[f64]| 0.0),
            None,
            vec![(0.0, 1.0)],
            Default::default(),
        )
        .unwrap();
        let grid = GridSpec::new(vec![(0.0, 1.0)], vec![65]).unwrap();
        let mask = build_mask(&grid, None).unwrap();
        let op = DiscreteHamiltonian::assemble(&model, &grid, &mask);
        let b = vec![1.0; op.unknowns()];
        let mut x = vec![0.0; op.unknowns()];
        solve_cg(&op, 0.0, &b, &mut x, 1e-12, 10_000).unwrap();
        // -u''/2 = 1, u(0)=u(1)=0  =>  u(x) = x(1-x).
        for (r, &flat) in op.inside.iter().enumerate() {
            let xpt = grid.point(flat)[0];
            let exact = xpt * (1.0 - xpt);
            assert!((x[r] - exact).abs() < 1e-8, "u({xpt}) = {} vs {exact}", x[r]);
        }
    }
}
