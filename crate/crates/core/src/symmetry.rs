//! Finite groups of isometries acting on configuration space.
//!
//! Operations are stored as dense orthogonal `d x d` matrices together with
//! their parity (determinant, exactly +/-1 for the permutation and inversion
//! matrices used by the built-in models).

use crate::error::{CoreError, Result};
use crate::trial::Configuration;

const ORTHOGONALITY_TOL: f64 = 1e-12;

/// One isometry `x -> S x` together with its parity `det(S)`.
#[derive(Debug, Clone)]
pub struct SymmetryOperation {
    /// Row-major `d x d` orthogonal matrix.
    matrix: Vec<f64>,
    dim: usize,
    parity: i32,
}

impl SymmetryOperation {
    /// Builds an operation from a row-major matrix, validating orthogonality
    /// and computing the parity once.
    pub fn from_matrix(dim: usize, matrix: Vec<f64>) -> Result<Self> {
        if matrix.len() != dim * dim {
            return Err(CoreError::DimensionMismatch {
                expected: dim * dim,
                got: matrix.len(),
            });
        }
        // S^T S = I within 1e-12.
        for i in 0..dim {
            for j in 0..dim {
                let mut dot = 0.0;
                for k in 0..dim {
                    dot += matrix[k * dim + i] * matrix[k * dim + j];
                }
                let expect = if i == j { 1.0 } else { 0.0 };
                if (dot - expect).abs() > ORTHOGONALITY_TOL {
                    return Err(CoreError::InvalidParameter(format!(
                        "matrix is not orthogonal: (S^T S)[{i},{j}] = {dot}"
                    )));
                }
            }
        }
        let det = determinant(dim, &matrix);
        if (det.abs() - 1.0).abs() > 1e-9 {
            return Err(CoreError::InvalidParameter(format!(
                "orthogonal matrix determinant {det} is not +/-1"
            )));
        }
        let parity = if det > 0.0 { 1 } else { -1 };
        Ok(Self { matrix, dim, parity })
    }

    pub fn identity(dim: usize) -> Self {
        let mut matrix = vec![0.0; dim * dim];
        for i in 0..dim {
            matrix[i * dim + i] = 1.0;
        }
        Self { matrix, dim, parity: 1 }
    }

    /// Coordinate permutation: output coordinate `i` reads input `perm[i]`.
    /// Parity is the exact permutation sign.
    pub fn permutation(perm: &[usize]) -> Result<Self> {
        let dim = perm.len();
        let mut seen = vec![false; dim];
        for &p in perm {
            if p >= dim || seen[p] {
                return Err(CoreError::InvalidParameter(format!(
                    "invalid permutation {perm:?}"
                )));
            }
            seen[p] = true;
        }
        let mut matrix = vec![0.0; dim * dim];
        for (i, &p) in perm.iter().enumerate() {
            matrix[i * dim + p] = 1.0;
        }
        // Count inversions for the exact sign.
        let mut swaps = 0usize;
        let mut work: Vec<usize> = perm.to_vec();
        for i in 0..dim {
            while work[i] != i {
                let j = work[i];
                work.swap(i, j);
                swaps += 1;
            }
        }
        let parity = if swaps % 2 == 0 { 1 } else { -1 };
        Ok(Self { matrix, dim, parity })
    }

    /// Point inversion `x -> -x`; parity is exactly `(-1)^d`.
    pub fn inversion(dim: usize) -> Self {
        let mut matrix = vec![0.0; dim * dim];
        for i in 0..dim {
            matrix[i * dim + i] = -1.0;
        }
        let parity = if dim % 2 == 0 { 1 } else { -1 };
        Self { matrix, dim, parity }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn parity(&self) -> i32 {
        self.parity
    }

    pub fn matrix(&self) -> &[f64] {
        &self.matrix
    }

    /// Applies the isometry to a raw coordinate slice.
    pub fn apply_slice(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.dim);
        debug_assert_eq!(out.len(), self.dim);
        for i in 0..self.dim {
            let row = &self.matrix[i * self.dim..(i + 1) * self.dim];
            out[i] = row.iter().zip(x).map(|(m, xi)| m * xi).sum();
        }
    }

    /// Composition `self . other` (first `other`, then `self`).
    pub fn compose(&self, other: &Self) -> Self {
        let d = self.dim;
        let mut matrix = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                let mut acc = 0.0;
                for k in 0..d {
                    acc += self.matrix[i * d + k] * other.matrix[k * d + j];
                }
                matrix[i * d + j] = acc;
            }
        }
        Self { matrix, dim: d, parity: self.parity * other.parity }
    }

    fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        self.dim == other.dim
            && self
                .matrix
                .iter()
                .zip(&other.matrix)
                .all(|(a, b)| (a - b).abs() <= tol)
    }
}

fn determinant(dim: usize, matrix: &[f64]) -> f64 {
    // LU with partial pivoting; d is tiny.
    let mut a = matrix.to_vec();
    let mut det = 1.0;
    for col in 0..dim {
        let mut pivot = col;
        for row in col + 1..dim {
            if a[row * dim + col].abs() > a[pivot * dim + col].abs() {
                pivot = row;
            }
        }
        if a[pivot * dim + col] == 0.0 {
            return 0.0;
        }
        if pivot != col {
            for k in 0..dim {
                a.swap(col * dim + k, pivot * dim + k);
            }
            det = -det;
        }
        det *= a[col * dim + col];
        let inv = 1.0 / a[col * dim + col];
        for row in col + 1..dim {
            let f = a[row * dim + col] * inv;
            for k in col..dim {
                a[row * dim + k] -= f * a[col * dim + k];
            }
        }
    }
    det
}

/// Applies `op` to a [`Configuration`], checking dimensions.
pub fn apply_symmetry(op: &SymmetryOperation, x: &Configuration) -> Result<Configuration> {
    if x.dim() != op.dim {
        return Err(CoreError::DimensionMismatch {
            expected: op.dim,
            got: x.dim(),
        });
    }
    let mut out = vec![0.0; op.dim];
    op.apply_slice(x.coords(), &mut out);
    Configuration::new(out, op.dim)
}

/// A finite symmetry group containing at least one odd-parity element
/// (the fermionic setting).
#[derive(Debug, Clone)]
pub struct SymmetryGroup {
    elements: Vec<SymmetryOperation>,
}

impl SymmetryGroup {
    /// Validates the group axioms numerically: identity present, closure
    /// under composition, inverses present, and at least one element of
    /// parity -1.
    pub fn new(elements: Vec<SymmetryOperation>) -> Result<Self> {
        if elements.is_empty() {
            return Err(CoreError::InvalidParameter("empty symmetry group".into()));
        }
        let dim = elements[0].dim;
        if elements.iter().any(|e| e.dim != dim) {
            return Err(CoreError::InvalidParameter(
                "group elements of mixed dimension".into(),
            ));
        }
        let tol = 1e-10;
        let id = SymmetryOperation::identity(dim);
        if !elements.iter().any(|e| e.approx_eq(&id, tol)) {
            return Err(CoreError::InvalidParameter(
                "group does not contain the identity".into(),
            ));
        }
        let find = |candidate: &SymmetryOperation| elements.iter().any(|e| e.approx_eq(candidate, tol));
        for a in &elements {
            let mut has_inverse = false;
            for b in &elements {
                let ab = a.compose(b);
                if !find(&ab) {
                    return Err(CoreError::InvalidParameter(
                        "group is not closed under composition".into(),
                    ));
                }
                if ab.approx_eq(&id, tol) {
                    has_inverse = true;
                }
            }
            if !has_inverse {
                return Err(CoreError::InvalidParameter(
                    "group element without inverse".into(),
                ));
            }
        }
        if !elements.iter().any(|e| e.parity == -1) {
            return Err(CoreError::InvalidParameter(
                "fermionic group needs at least one parity -1 element".into(),
            ));
        }
        Ok(Self { elements })
    }

    pub fn elements(&self) -> &[SymmetryOperation] {
        &self.elements
    }

    pub fn dim(&self) -> usize {
        self.elements[0].dim
    }

    /// The even (parity +1) subgroup.
    pub fn even_elements(&self) -> impl Iterator<Item = &SymmetryOperation> {
        self.elements.iter().filter(|e| e.parity == 1)
    }

    pub fn odd_elements(&self) -> impl Iterator<Item = &SymmetryOperation> {
        self.elements.iter().filter(|e| e.parity == -1)
    }

    /// `{id, swap}` acting on two 1D particles.
    pub fn pair_exchange() -> Self {
        let id = SymmetryOperation::identity(2);
        let swap = SymmetryOperation::permutation(&[1, 0]).expect("valid permutation");
        Self { elements: vec![id, swap] }
    }

    /// `{I, -I}` in odd dimension (point inversion is odd there).
    pub fn point_inversion(dim: usize) -> Result<Self> {
        let inv = SymmetryOperation::inversion(dim);
        if inv.parity != -1 {
            return Err(CoreError::InvalidParameter(format!(
                "point inversion has parity +1 in dimension {dim}"
            )));
        }
        Ok(Self { elements: vec![SymmetryOperation::identity(dim), inv] })
    }

    /// Full permutation group of `n` 1D particles (n! elements; n <= 6).
    pub fn permutations(n: usize) -> Result<Self> {
        if n == 0 || n > 6 {
            return Err(CoreError::InvalidParameter(format!(
                "permutation group for n = {n} not supported (1..=6)"
            )));
        }
        let mut elements = Vec::new();
        let mut perm: Vec<usize> = (0..n).collect();
        permute(&mut perm, 0, &mut elements)?;
        Ok(Self { elements })
    }
}

fn permute(perm: &mut Vec<usize>, k: usize, out: &mut Vec<SymmetryOperation>) -> Result<()> {
    if k == perm.len() {
        out.push(SymmetryOperation::permutation(perm)?);
        return Ok(());
    }
    for i in k..perm.len() {
        perm.swap(k, i);
        permute(perm, k + 1, out)?;
        perm.swap(k, i);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn swap_acts_on_coordinates() {
        let swap = SymmetryOperation::permutation(&[1, 0]).unwrap();
        let x = Configuration::new(vec![1.0, 2.0], 2).unwrap();
        let y = apply_symmetry(&swap, &x).unwrap();
        assert_eq!(y.coords(), &[2.0, 1.0]);
        assert_eq!(swap.parity(), -1);
    }

    #[test]
    fn identity_fixes_everything() {
        let id = SymmetryOperation::identity(3);
        let x = Configuration::new(vec![0.3, -1.2, 7.0], 3).unwrap();
        let y = apply_symmetry(&id, &x).unwrap();
        assert_eq!(y.coords(), x.coords());
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let id = SymmetryOperation::identity(3);
        let x = Configuration::new(vec![1.0, 2.0], 2).unwrap();
        assert!(apply_symmetry(&id, &x).is_err());
    }

    #[test]
    fn inversion_parity_follows_dimension() {
        assert_eq!(SymmetryOperation::inversion(3).parity(), -1);
        assert_eq!(SymmetryOperation::inversion(2).parity(), 1);
    }

    #[test]
    fn pair_group_validates() {
        let g = SymmetryGroup::pair_exchange();
        assert_eq!(g.elements().len(), 2);
        assert_eq!(g.odd_elements().count(), 1);
        // Closure etc. re-checked through the constructor.
        assert!(SymmetryGroup::new(g.elements().to_vec()).is_ok());
    }

    #[test]
    fn permutation_group_has_factorial_size() {
        let g = SymmetryGroup::permutations(3).unwrap();
        assert_eq!(g.elements().len(), 6);
        assert_eq!(g.odd_elements().count(), 3);
        assert!(SymmetryGroup::new(g.elements().to_vec()).is_ok());
    }

    #[test]
    fn norm_is_preserved() {
        let g = SymmetryGroup::permutations(4).unwrap();
        let x = Configuration::new(vec![0.5, -1.5, 2.5, 0.25], 4).unwrap();
        let norm = |c: &Configuration| c.coords().iter().map(|v| v * v).sum::<f64>().sqrt();
        for op in g.elements() {
            let y = apply_symmetry(op, &x).unwrap();
            assert_abs_diff_eq!(norm(&y), norm(&x), epsilon = 1e-12);
        }
    }

    #[test]
    fn missing_odd_element_is_rejected() {
        let id = SymmetryOperation::identity(2);
        assert!(SymmetryGroup::new(vec![id]).is_err());
    }
}
