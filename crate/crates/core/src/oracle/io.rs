//! Flat binary dump of grid solutions with a JSON sidecar.
//!
//! Layout: 8-byte magic `NMCGRID1`, u32 dimension, per-axis u64 point count,
//! per-axis (f64, f64) bounds, f64 energy, then the row-major grid values as
//! little-endian f64.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::oracle::{GridSpec, OracleSolution};

const MAGIC: &[u8; 8] = b"NMCGRID1";

#[derive(Debug, Serialize, Deserialize)]
pub struct GridSidecar {
    pub format: String,
    pub dims: Vec<usize>,
    pub bounds: Vec<(f64, f64)>,
    pub energy: f64,
    pub residual: f64,
    pub converged: bool,
    pub data_file: String,
}

pub fn dump_solution(solution: &OracleSolution, path: &Path) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    file.write_all(MAGIC)?;
    file.write_all(&(solution.grid.dim() as u32).to_le_bytes())?;
    for &n in &solution.grid.counts {
        file.write_all(&(n as u64).to_le_bytes())?;
    }
    for &(lo, hi) in &solution.grid.bounds {
        file.write_all(&lo.to_le_bytes())?;
        file.write_all(&hi.to_le_bytes())?;
    }
    file.write_all(&solution.energy.to_le_bytes())?;
    let mut buf = Vec::with_capacity(solution.values.len() * 8);
    for v in &solution.values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    file.write_all(&buf)?;

    let sidecar = GridSidecar {
        format: "nmcgrid-v1 little-endian f64 row-major".into(),
        dims: solution.grid.counts.clone(),
        bounds: solution.grid.bounds.clone(),
        energy: solution.energy,
        residual: solution.residual,
        converged: solution.converged,
        data_file: path
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default(),
    };
    let json_path = path.with_extension("json");
    let json = serde_json::to_string_pretty(&sidecar)
        .map_err(|e| CoreError::InvalidConfig(e.to_string()))?;
    std::fs::write(json_path, json)?;
    Ok(())
}

pub struct LoadedGrid {
    pub grid: GridSpec,
    pub energy: f64,
    pub values: Vec<f64>,
}

pub fn load_solution(path: &Path) -> Result<LoadedGrid> {
    let mut file = std::fs::File::open(path)?;
    let mut magic = [0u8; 8];
    file.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(CoreError::InvalidConfig("bad grid file magic".into()));
    }
    let mut b4 = [0u8; 4];
    file.read_exact(&mut b4)?;
    let dim = u32::from_le_bytes(b4) as usize;
    let mut b8 = [0u8; 8];
    let mut counts = Vec::with_capacity(dim);
    for _ in 0..dim {
        file.read_exact(&mut b8)?;
        counts.push(u64::from_le_bytes(b8) as usize);
    }
    let mut bounds = Vec::with_capacity(dim);
    for _ in 0..dim {
        file.read_exact(&mut b8)?;
        let lo = f64::from_le_bytes(b8);
        file.read_exact(&mut b8)?;
        let hi = f64::from_le_bytes(b8);
        bounds.push((lo, hi));
    }
    file.read_exact(&mut b8)?;
    let energy = f64::from_le_bytes(b8);
    let grid = GridSpec::new(bounds, counts)?;
    let mut values = vec![0.0; grid.len()];
    let mut buf = vec![0u8; grid.len() * 8];
    file.read_exact(&mut buf)?;
    for (i, chunk) in buf.chunks_exact(8).enumerate() {
        values[i] = f64::from_le_bytes(chunk.try_into().unwrap());
    }
    Ok(LoadedGrid { grid, energy, values })
}
