//! Stretch model: `n` 1D fermions in a harmonic trap.
//!
//! The skew-symmetric part is the Slater determinant of the first `n`
//! Hermite-Gaussian orbitals; the single nodal parameter mixes the next
//! orbital into the highest occupied one, `phi_{n-1} + theta phi_n`, which
//! genuinely moves the nodes. An optional Gaussian pair Jastrow
//! `exp(-alpha sum_{i<j} (x_i - x_j)^2)` (alpha frozen at construction)
//! multiplies the determinant. At `theta = 0`, `alpha = 0` the trial is the
//! exact fermionic groundstate with `E = n^2 / 2`.

use crate::trial::TrialWaveFunction;

#[derive(Debug, Clone)]
pub struct NFermionFamily {
    n: usize,
    alpha: f64,
}

impl NFermionFamily {
    pub fn new(n: usize, alpha: f64) -> Self {
        assert!((2..=5).contains(&n), "n must be in 2..=5");
        Self { n, alpha }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }
}

/// Hermite-Gaussian orbital `H_k(x) exp(-x^2/2)` with value and first two
/// derivatives (physicists' Hermite polynomials).
fn orbital(k: usize, x: f64) -> (f64, f64, f64) {
    // H_k, H_k' = 2k H_{k-1}, H_k'' = 4k(k-1) H_{k-2} via the recurrence.
    let mut h = [0.0f64; 8];
    h[0] = 1.0;
    if k >= 1 {
        h[1] = 2.0 * x;
    }
    for m in 1..k.max(1) {
        if m + 1 <= 7 {
            h[m + 1] = 2.0 * x * h[m] - 2.0 * m as f64 * h[m - 1];
        }
    }
    let hk = h[k];
    let h1 = if k >= 1 { 2.0 * k as f64 * h[k - 1] } else { 0.0 };
    let h2 = if k >= 2 { 4.0 * (k * (k - 1)) as f64 * h[k - 2] } else { 0.0 };
    let env = (-x * x / 2.0).exp();
    let value = hk * env;
    let deriv = (h1 - x * hk) * env;
    let deriv2 = (h2 - 2.0 * x * h1 + (x * x - 1.0) * hk) * env;
    (value, deriv, deriv2)
}

/// Determinant, per-row first/second derivative contractions of a Slater
/// matrix `A[i][j] = phi_j(x_i)` computed through cofactors: the determinant
/// is linear in each row, so `d(det)/dx_i = sum_j phi_j'(x_i) C_ij`.
struct SlaterEval {
    det: f64,
    /// d(det)/dx_i
    grad: Vec<f64>,
    /// d^2(det)/dx_i^2
    second: Vec<f64>,
}

fn cofactor(a: &[Vec<f64>], row: usize, col: usize) -> f64 {
    let n = a.len();
    let mut minor = Vec::with_capacity(n - 1);
    for i in 0..n {
        if i == row {
            continue;
        }
        let mut r = Vec::with_capacity(n - 1);
        for j in 0..n {
            if j == col {
                continue;
            }
            r.push(a[i][j]);
        }
        minor.push(r);
    }
    let sign = if (row + col) % 2 == 0 { 1.0 } else { -1.0 };
    sign * dense_det(&minor)
}

fn dense_det(a: &[Vec<f64>]) -> f64 {
    let n = a.len();
    if n == 0 {
        return 1.0;
    }
    let mut m: Vec<Vec<f64>> = a.to_vec();
    let mut det = 1.0;
    for col in 0..n {
        let mut pivot = col;
        for row in col + 1..n {
            if m[row][col].abs() > m[pivot][col].abs() {
                pivot = row;
            }
        }
        if m[pivot][col] == 0.0 {
            return 0.0;
        }
        if pivot != col {
            m.swap(pivot, col);
            det = -det;
        }
        det *= m[col][col];
        let inv = 1.0 / m[col][col];
        for row in col + 1..n {
            let f = m[row][col] * inv;
            for k in col..n {
                m[row][k] -= f * m[col][k];
            }
        }
    }
    det
}

fn slater_eval(values: &[Vec<f64>], derivs: &[Vec<f64>], second: &[Vec<f64>]) -> SlaterEval {
    let n = values.len();
    let det = dense_det(values);
    let mut grad = vec![0.0; n];
    let mut sec = vec![0.0; n];
    for i in 0..n {
        for j in 0..n {
            let c = cofactor(values, i, j);
            grad[i] += derivs[i][j] * c;
            sec[i] += second[i][j] * c;
        }
    }
    SlaterEval { det, grad, second: sec }
}

impl NFermionFamily {
    /// Orbital tables for the determinant (`shifted = false`) or for its
    /// theta-derivative, where the highest occupied column is replaced by
    /// orbital `n` (`shifted = true`).
    fn tables(&self, theta: f64, x: &[f64], shifted: bool) -> (Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let n = self.n;
        let mut vals = vec![vec![0.0; n]; n];
        let mut ders = vec![vec![0.0; n]; n];
        let mut secs = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                let (v, d, s) = if j == n - 1 {
                    if shifted {
                        orbital(n, x[i])
                    } else {
                        let (v0, d0, s0) = orbital(n - 1, x[i]);
                        let (v1, d1, s1) = orbital(n, x[i]);
                        (v0 + theta * v1, d0 + theta * d1, s0 + theta * s1)
                    }
                } else {
                    orbital(j, x[i])
                };
                vals[i][j] = v;
                ders[i][j] = d;
                secs[i][j] = s;
            }
        }
        (vals, ders, secs)
    }

    fn jastrow_log_parts(&self, x: &[f64]) -> (f64, Vec<f64>, f64) {
        // log J = -alpha sum_{i<j} (x_i - x_j)^2.
        let n = self.n;
        let sum: f64 = x.iter().sum();
        let mut log_j = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                log_j -= self.alpha * (x[i] - x[j]) * (x[i] - x[j]);
            }
        }
        let grad: Vec<f64> = x.iter().map(|&xi| -2.0 * self.alpha * (n as f64 * xi - sum)).collect();
        let d2 = -2.0 * self.alpha * (n as f64 - 1.0);
        (log_j, grad, d2)
    }
}

impl TrialWaveFunction for NFermionFamily {
    fn dimension(&self) -> usize {
        self.n
    }

    fn parameter_count(&self) -> usize {
        1
    }

    fn value(&self, theta: &[f64], x: &[f64]) -> f64 {
        let (vals, _, _) = self.tables(theta[0], x, false);
        let (log_j, _, _) = self.jastrow_log_parts(x);
        dense_det(&vals) * log_j.exp()
    }

    fn gradient(&self, theta: &[f64], x: &[f64], out: &mut [f64]) {
        let (vals, ders, secs) = self.tables(theta[0], x, false);
        let ev = slater_eval(&vals, &ders, &secs);
        let (log_j, jg, _) = self.jastrow_log_parts(x);
        let j = log_j.exp();
        for i in 0..self.n {
            out[i] = j * (jg[i] * ev.det + ev.grad[i]);
        }
    }

    fn laplacian(&self, theta: &[f64], x: &[f64]) -> f64 {
        let (vals, ders, secs) = self.tables(theta[0], x, false);
        let ev = slater_eval(&vals, &ders, &secs);
        let (log_j, jg, jd2) = self.jastrow_log_parts(x);
        let j = log_j.exp();
        let mut acc = 0.0;
        for i in 0..self.n {
            acc += (jg[i] * jg[i] + jd2) * ev.det + 2.0 * jg[i] * ev.grad[i] + ev.second[i];
        }
        j * acc
    }

    fn parameter_gradient(&self, _theta: &[f64], x: &[f64], out: &mut [f64]) {
        let (vals, _, _) = self.tables(0.0, x, true);
        let (log_j, _, _) = self.jastrow_log_parts(x);
        out[0] = dense_det(&vals) * log_j.exp();
    }

    fn parameter_gradient_laplacian(&self, _theta: &[f64], x: &[f64], out: &mut [f64]) {
        let (vals, ders, secs) = self.tables(0.0, x, true);
        let ev = slater_eval(&vals, &ders, &secs);
        let (log_j, jg, jd2) = self.jastrow_log_parts(x);
        let j = log_j.exp();
        let mut acc = 0.0;
        for i in 0..self.n {
            acc += (jg[i] * jg[i] + jd2) * ev.det + 2.0 * jg[i] * ev.grad[i] + ev.second[i];
        }
        out[0] = j * acc;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::testing::check_family_derivatives;
    use crate::symmetry::SymmetryGroup;
    use crate::trial::{quasi_random_box_points, verify_skew_symmetry};
    use approx::assert_abs_diff_eq;

    #[test]
    fn orbitals_satisfy_oscillator_equation() {
        // -phi''/2 + x^2/2 phi = (k + 1/2) phi.
        for k in 0..6 {
            for x in [-1.7, 0.3, 2.1] {
                let (v, _, s) = orbital(k, x);
                let lhs = -0.5 * s + 0.5 * x * x * v;
                assert_abs_diff_eq!(lhs, (k as f64 + 0.5) * v, epsilon = 1e-9 * v.abs().max(1.0));
            }
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let fam = NFermionFamily::new(3, 0.2);
        check_family_derivatives(&fam, &[0.1], &[(-2.0, 2.0), (-2.0, 2.0), (-2.0, 2.0)], 60);
    }

    #[test]
    fn skew_symmetric_under_permutations() {
        let fam = NFermionFamily::new(3, 0.3);
        let group = SymmetryGroup::permutations(3).unwrap();
        let pts = quasi_random_box_points(&[(-3.0, 3.0), (-3.0, 3.0), (-3.0, 3.0)], 50);
        let res = verify_skew_symmetry(&fam, &[0.15], &group, &pts).unwrap();
        assert!(res < 1e-10, "residual {res:e}");
    }

    #[test]
    fn exact_groundstate_local_energy_without_jastrow() {
        // E = n^2/2 at theta = 0, alpha = 0: check E_L = V - lap/(2 psi).
        let fam = NFermionFamily::new(3, 0.0);
        for x in [[0.3, -0.9, 1.4], [1.0, 0.1, -0.5]] {
            let v: f64 = x.iter().map(|xi| xi * xi).sum::<f64>() / 2.0;
            let e = v - fam.laplacian(&[0.0], &x) / (2.0 * fam.value(&[0.0], &x));
            assert_abs_diff_eq!(e, 4.5, epsilon = 1e-9);
        }
    }
}
