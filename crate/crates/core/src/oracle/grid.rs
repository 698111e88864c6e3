//! Regular tensor grids with Dirichlet masking.

use crate::error::{CoreError, Result};
use crate::trial::TrialWaveFunction;

pub const MASK_OUTSIDE: u8 = 0;
pub const MASK_INSIDE: u8 = 1;
/// Outside point adjacent to an inside point (the staircase boundary layer).
pub const MASK_BOUNDARY: u8 = 2;

/// A tensor-product grid over a box, `d <= 3`.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GridSpec {
    pub bounds: Vec<(f64, f64)>,
    pub counts: Vec<usize>,
}

impl GridSpec {
    pub fn new(bounds: Vec<(f64, f64)>, counts: Vec<usize>) -> Result<Self> {
        if bounds.len() != counts.len() || bounds.is_empty() || bounds.len() > 3 {
            return Err(CoreError::InvalidConfig(format!(
                "grid dimension {} not supported (1..=3)",
                bounds.len()
            )));
        }
        if counts.iter().any(|&n| n < 16) {
            return Err(CoreError::InvalidConfig("grid counts must be >= 16".into()));
        }
        if bounds.iter().any(|(lo, hi)| !(lo < hi)) {
            return Err(CoreError::InvalidConfig("empty grid box".into()));
        }
        Ok(Self { bounds, counts })
    }

    /// Grid with (approximately) the requested spacing on the given box.
    pub fn with_spacing(bounds: &[(f64, f64)], spacing: f64) -> Result<Self> {
        let counts = bounds
            .iter()
            .map(|(lo, hi)| (((hi - lo) / spacing).round() as usize + 1).max(16))
            .collect();
        Self::new(bounds.to_vec(), counts)
    }

    pub fn dim(&self) -> usize {
        self.counts.len()
    }

    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spacing(&self) -> Vec<f64> {
        self.bounds
            .iter()
            .zip(&self.counts)
            .map(|(&(lo, hi), &n)| (hi - lo) / (n - 1) as f64)
            .collect()
    }

    /// Row-major flat index -> multi-index.
    pub fn unravel(&self, mut flat: usize) -> [usize; 3] {
        let mut idx = [0usize; 3];
        for axis in (0..self.dim()).rev() {
            idx[axis] = flat % self.counts[axis];
            flat /= self.counts[axis];
        }
        idx
    }

    pub fn ravel(&self, idx: &[usize]) -> usize {
        let mut flat = 0;
        for axis in 0..self.dim() {
            flat = flat * self.counts[axis] + idx[axis];
        }
        flat
    }

    pub fn point(&self, flat: usize) -> Vec<f64> {
        let idx = self.unravel(flat);
        let h = self.spacing();
        (0..self.dim()).map(|a| self.bounds[a].0 + idx[a] as f64 * h[a]).collect()
    }

    /// Stride of axis `a` in the flat ordering.
    pub fn stride(&self, axis: usize) -> usize {
        self.counts[axis + 1..].iter().product()
    }
}

/// Dirichlet mask: inside points are unknowns, everything else is clamped to
/// zero (or to the boundary data for inhomogeneous solves).
#[derive(Debug, Clone)]
pub struct DomainMask {
    pub cells: Vec<u8>,
    pub inside_count: usize,
}

/// Builds the mask for the positive nodal domain of `family` (when given)
/// intersected with the interior of the box; without a family the mask is
/// the whole box interior.
pub fn build_mask(
    grid: &GridSpec,
    family: Option<(&dyn TrialWaveFunction, &[f64])>,
) -> Result<DomainMask> {
    let n = grid.len();
    let dim = grid.dim();
    let mut cells = vec![MASK_OUTSIDE; n];

    // Sign threshold relative to the largest trial value on the grid, so
    // that points that are numerically on the node count as outside.
    let values: Option<Vec<f64>> = family.map(|(f, theta)| {
        (0..n).map(|i| f.value(theta, &grid.point(i))).collect()
    });
    let tol = values
        .as_ref()
        .map(|v| 1e-10 * v.iter().fold(0.0f64, |m, x| m.max(x.abs())))
        .unwrap_or(0.0);

    let mut inside_count = 0;
    for flat in 0..n {
        let idx = grid.unravel(flat);
        let interior = (0..dim).all(|a| idx[a] > 0 && idx[a] + 1 < grid.counts[a]);
        if !interior {
            continue;
        }
        let inside = match &values {
            Some(v) => v[flat] > tol,
            None => true,
        };
        if inside {
            cells[flat] = MASK_INSIDE;
            inside_count += 1;
        }
    }
    if inside_count == 0 {
        return Err(CoreError::EmptyMask);
    }

    // Tag the staircase boundary layer.
    for flat in 0..n {
        if cells[flat] != MASK_INSIDE {
            continue;
        }
        let idx = grid.unravel(flat);
        for a in 0..dim {
            for dir in [-1isize, 1] {
                let mut nb = idx;
                nb[a] = (nb[a] as isize + dir) as usize;
                let nb_flat = grid.ravel(&nb[..dim]);
                if cells[nb_flat] == MASK_OUTSIDE {
                    cells[nb_flat] = MASK_BOUNDARY;
                }
            }
        }
    }
    Ok(DomainMask { cells, inside_count })
}

/// Number of connected components of the inside set (face adjacency).
pub fn component_count(grid: &GridSpec, mask: &DomainMask) -> usize {
    let n = grid.len();
    let dim = grid.dim();
    let mut label = vec![false; n];
    let mut components = 0;
    let mut stack = Vec::new();
    for start in 0..n {
        if mask.cells[start] != MASK_INSIDE || label[start] {
            continue;
        }
        components += 1;
        stack.push(start);
        label[start] = true;
        while let Some(flat) = stack.pop() {
            let idx = grid.unravel(flat);
            for a in 0..dim {
                for dir in [-1isize, 1] {
                    let ni = idx[a] as isize + dir;
                    if ni < 0 || ni as usize >= grid.counts[a] {
                        continue;
                    }
                    let mut nb = idx;
                    nb[a] = ni as usize;
                    let nb_flat = grid.ravel(&nb[..dim]);
                    if mask.cells[nb_flat] == MASK_INSIDE && !label[nb_flat] {
                        label[nb_flat] = true;
                        stack.push(nb_flat);
                    }
                }
            }
        }
    }
    components
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::make_model;

    #[test]
    fn ravel_roundtrip() {
        let g = GridSpec::new(vec![(0.0, 1.0), (0.0, 2.0)], vec![17, 33]).unwrap();
        for flat in [0, 5, 16, 17, 200, 17 * 33 - 1] {
            let idx = g.unravel(flat);
            assert_eq!(g.ravel(&idx[..2]), flat);
        }
    }

    #[test]
    fn interval_mask_selects_single_lobe() {
        let entry = make_model("interval", &Default::default()).unwrap();
        let grid = GridSpec::with_spacing(entry.model().bounds(), 0.01).unwrap();
        let mask = build_mask(&grid, Some((entry.trial(), &[0.0]))).unwrap();
        assert_eq!(component_count(&grid, &mask), 1);
        // Inside points all lie in (0, 1).
        for flat in 0..grid.len() {
            if mask.cells[flat] == MASK_INSIDE {
                let x = grid.point(flat)[0];
                assert!(x > 0.0 && x < 1.0, "inside point at {x}");
            }
        }
    }

    #[test]
    fn two_component_mask_is_counted() {
        let entry = make_model("two_fermion_trap", &Default::default()).unwrap();
        let grid = GridSpec::with_spacing(entry.model().bounds(), 0.2).unwrap();
        // Positive domain of the full trial on the box has one component
        // (x1 > x2 half-plane); sanity-check the counter on it.
        let mask = build_mask(&grid, Some((entry.trial(), &[0.0]))).unwrap();
        assert_eq!(component_count(&grid, &mask), 1);
    }
}
