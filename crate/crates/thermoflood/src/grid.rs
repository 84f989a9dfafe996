//! Structured Cartesian grid with two-point transmissibilities.
//!
//! Cells are axis-aligned boxes of uniform size; each interior face is
//! shared by exactly two cells and carries a geometric transmissibility
//! Γ = A·(Γ̂_ij⁻¹ + Γ̂_ji⁻¹)⁻¹ (harmonic average of the one-sided
//! half-cell transmissibilities) and an analogous thermal transmissibility
//! built from the rock conductivity. External faces carry no connection:
//! the reservoir is a closed box.

use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

use crate::constants::MILLIDARCY;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("permeability file {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("permeability file {path}: expected {expected} cells, found {found}")]
    DimensionMismatch {
        path: String,
        expected: usize,
        found: usize,
    },
    #[error("permeability file {path}: non-positive value {value} at cell {index}")]
    NonPositivePermeability {
        path: String,
        value: f64,
        index: usize,
    },
    #[error("invalid grid: {0}")]
    Invalid(String),
}

/// Diagonal permeability tensor, m².
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PermTensor {
    pub kx: f64,
    pub ky: f64,
    pub kz: f64,
}

impl PermTensor {
    pub fn isotropic(k: f64) -> Self {
        PermTensor { kx: k, ky: k, kz: k }
    }
}

/// Interior face between two cells.
#[derive(Debug, Clone)]
pub struct FaceConnection {
    pub cell_i: usize,
    pub cell_j: usize,
    /// Face area, m².
    pub area: f64,
    /// Geometric transmissibility, m³.
    pub trans: f64,
    /// Thermal transmissibility, W/K.
    pub trans_heat: f64,
    /// Depth difference z_j − z_i, m.
    pub dz: f64,
}

/// Structured hexahedral grid.
#[derive(Debug, Clone)]
pub struct StructuredGrid {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    /// Cell dimensions, m.
    pub dx: f64,
    pub dy: f64,
    pub dz: f64,
    /// Per-cell permeability tensors.
    pub perm: Vec<PermTensor>,
    /// Per-cell rock thermal conductivity, W/(m·K).
    pub kt: Vec<f64>,
    /// Depth of each cell center, m (increases downward).
    pub depth: Vec<f64>,
}

impl StructuredGrid {
    /// Uniform grid with isotropic permeability and conductivity. Depth is
    /// derived from the z-layer index (layer 0 on top).
    pub fn uniform(
        nx: usize,
        ny: usize,
        nz: usize,
        (dx, dy, dz): (f64, f64, f64),
        perm: f64,
        kt: f64,
    ) -> Self {
        let n = nx * ny * nz;
        let mut grid = StructuredGrid {
            nx,
            ny,
            nz,
            dx,
            dy,
            dz,
            perm: vec![PermTensor::isotropic(perm); n],
            kt: vec![kt; n],
            depth: vec![0.0; n],
        };
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..nx {
                    let idx = grid.index(i, j, k);
                    grid.depth[idx] = (k as f64 + 0.5) * dz;
                }
            }
        }
        grid
    }

    pub fn n_cells(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.nx * (j + self.ny * k)
    }

    /// Bulk volume of one cell, m³.
    pub fn cell_volume(&self) -> f64 {
        self.dx * self.dy * self.dz
    }

    /// Total surface area of one cell, m².
    pub fn cell_surface_area(&self) -> f64 {
        2.0 * (self.dx * self.dy + self.dy * self.dz + self.dx * self.dz)
    }

    pub fn validate(&self) -> Result<(), GridError> {
        if self.nx == 0 || self.ny == 0 || self.nz == 0 {
            return Err(GridError::Invalid("zero cell count".into()));
        }
        if !(self.dx > 0.0 && self.dy > 0.0 && self.dz > 0.0) {
            return Err(GridError::Invalid("non-positive cell dimensions".into()));
        }
        let n = self.n_cells();
        if self.perm.len() != n || self.kt.len() != n || self.depth.len() != n {
            return Err(GridError::Invalid("per-cell field length mismatch".into()));
        }
        Ok(())
    }

    /// One connection per interior face, x-faces first, then y, then z.
    ///
    /// The one-sided transmissibility of a uniform box reduces to
    /// Γ̂ = K·(Δ/2)/(Δ/2)² = 2K/Δ along the face normal, so a homogeneous
    /// isotropic grid yields the textbook Γ = K·A/Δ.
    pub fn build_connections(&self) -> Vec<FaceConnection> {
        let mut conns = Vec::new();
        let axes: [(usize, usize, usize); 3] = [(1, 0, 0), (0, 1, 0), (0, 0, 1)];
        for (di, dj, dk) in axes {
            let (delta, area) = match (di, dj, dk) {
                (1, 0, 0) => (self.dx, self.dy * self.dz),
                (0, 1, 0) => (self.dy, self.dx * self.dz),
                _ => (self.dz, self.dx * self.dy),
            };
            for k in 0..self.nz - dk {
                for j in 0..self.ny - dj {
                    for i in 0..self.nx - di {
                        if i + di >= self.nx || j + dj >= self.ny || k + dk >= self.nz {
                            continue;
                        }
                        let ci = self.index(i, j, k);
                        let cj = self.index(i + di, j + dj, k + dk);
                        let ki = self.axis_perm(ci, (di, dj, dk));
                        let kj = self.axis_perm(cj, (di, dj, dk));
                        conns.push(FaceConnection {
                            cell_i: ci,
                            cell_j: cj,
                            area,
                            trans: harmonic_two_point(ki, kj, delta, area),
                            trans_heat: harmonic_two_point(self.kt[ci], self.kt[cj], delta, area),
                            dz: self.depth[cj] - self.depth[ci],
                        });
                    }
                }
            }
        }
        conns
    }

    fn axis_perm(&self, cell: usize, axis: (usize, usize, usize)) -> f64 {
        match axis {
            (1, 0, 0) => self.perm[cell].kx,
            (0, 1, 0) => self.perm[cell].ky,
            _ => self.perm[cell].kz,
        }
    }

    /// Replace the permeability field from a plain-text file: header
    /// `nx ny nz`, then one value per line in millidarcy, row-major
    /// (x fastest, then y, then z).
    pub fn load_permeability(&mut self, path: &Path) -> Result<(), GridError> {
        let field = read_permeability_field(path, self.nx, self.ny, self.nz)?;
        self.perm = field.into_iter().map(PermTensor::isotropic).collect();
        Ok(())
    }
}

/// Γ = A·(Γ̂_i⁻¹ + Γ̂_j⁻¹)⁻¹ with Γ̂ = 2K/Δ; zero if either side is zero.
fn harmonic_two_point(ki: f64, kj: f64, delta: f64, area: f64) -> f64 {
    if ki == 0.0 || kj == 0.0 {
        return 0.0;
    }
    let gi = 2.0 * ki / delta;
    let gj = 2.0 * kj / delta;
    area / (1.0 / gi + 1.0 / gj)
}

/// Parse a permeability field file (header `nx ny nz`, values in mD) and
/// convert to m².
pub fn read_permeability_field(
    path: &Path,
    nx: usize,
    ny: usize,
    nz: usize,
) -> Result<Vec<f64>, GridError> {
    let text = std::fs::read_to_string(path).map_err(|source| GridError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let p = || path.display().to_string();
    let mut tokens = text.split_whitespace();
    let mut header = [0usize; 3];
    for h in header.iter_mut() {
        *h = tokens
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| GridError::Invalid(format!("{}: malformed header", p())))?;
    }
    let expected = nx * ny * nz;
    if header != [nx, ny, nz] {
        return Err(GridError::DimensionMismatch {
            path: p(),
            expected,
            found: header[0] * header[1] * header[2],
        });
    }
    let values: Result<Vec<f64>, _> = tokens.map(|t| t.parse::<f64>()).collect();
    let values = values.map_err(|_| GridError::Invalid(format!("{}: malformed value", p())))?;
    if values.len() != expected {
        return Err(GridError::DimensionMismatch {
            path: p(),
            expected,
            found: values.len(),
        });
    }
    for (index, v) in values.iter().enumerate() {
        if !(*v > 0.0) {
            return Err(GridError::NonPositivePermeability {
                path: p(),
                value: *v,
                index,
            });
        }
    }
    Ok(values.into_iter().map(|md| md * MILLIDARCY).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_isotropic_transmissibility_is_textbook() {
        let k = 1e-13;
        let g = StructuredGrid::uniform(3, 2, 1, (10.0, 8.0, 5.0), k, 2.5);
        let conns = g.build_connections();
        // 3x2x1: x-faces 2*2=4, y-faces 3*1=3, z-faces 0
        assert_eq!(conns.len(), 7);
        let x_face = &conns[0];
        assert!((x_face.trans - k * (8.0 * 5.0) / 10.0).abs() < 1e-12 * x_face.trans);
        let y_face = conns.iter().find(|c| c.cell_j == c.cell_i + 3).unwrap();
        assert!((y_face.trans - k * (10.0 * 5.0) / 8.0).abs() < 1e-12 * y_face.trans);
    }

    #[test]
    fn two_to_one_permeability_contrast_matches_hand_harmonic_mean() {
        let kj = 1e-13;
        let mut g = StructuredGrid::uniform(2, 1, 1, (10.0, 10.0, 10.0), kj, 2.5);
        g.perm[0] = PermTensor::isotropic(2.0 * kj);
        let conns = g.build_connections();
        // Γ = A / (Δ/(2·2K) + Δ/(2·K)) = (A/Δ)·(4/3)·K
        let want = (100.0 / 10.0) * (4.0 / 3.0) * kj;
        assert!((conns[0].trans - want).abs() < 1e-12 * want);
    }

    #[test]
    fn zero_conductivity_cell_kills_heat_transmissibility() {
        let mut g = StructuredGrid::uniform(2, 1, 1, (10.0, 10.0, 10.0), 1e-13, 2.5);
        g.kt[1] = 0.0;
        let conns = g.build_connections();
        assert_eq!(conns[0].trans_heat, 0.0);
        assert!(conns[0].trans > 0.0);
    }

    #[test]
    fn face_areas_sum_to_cell_surface_area() {
        let g = StructuredGrid::uniform(1, 1, 1, (3.0, 4.0, 5.0), 1e-13, 2.5);
        // single cell: no interior faces, but the surface bookkeeping must
        // match the box area
        assert_eq!(g.cell_surface_area(), 2.0 * (12.0 + 20.0 + 15.0));
        let g2 = StructuredGrid::uniform(2, 1, 1, (3.0, 4.0, 5.0), 1e-13, 2.5);
        let conns = g2.build_connections();
        let interior: f64 = conns.iter().map(|c| c.area).sum();
        assert_eq!(interior, 4.0 * 5.0);
    }

    #[test]
    fn transmissibility_symmetric_under_relabel() {
        let mut g = StructuredGrid::uniform(2, 1, 1, (10.0, 10.0, 10.0), 1e-13, 2.5);
        g.perm[0] = PermTensor::isotropic(5e-13);
        let t_fwd = g.build_connections()[0].trans;
        // swap the two cells
        g.perm.swap(0, 1);
        let t_rev = g.build_connections()[0].trans;
        assert_eq!(t_fwd, t_rev);
    }
}
