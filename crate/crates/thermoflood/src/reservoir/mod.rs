//! Semi-explicit DAE assembly: the conservation right-hand sides F, the
//! stacked per-cell flash conditions G, face fluxes with upwinding, and the
//! well source terms.
//!
//! Per cell, the differential state is x = [U, n_w, n] (thermal) or
//! [n_w, n] (isothermal); the algebraic state is y = [T, P, n_w, n_o, n_g]
//! or [P, n_w, n_o, n_g] plus the flash multipliers z. F depends only on
//! the algebraic variables (own and face-neighbor cells) and the well
//! controls; G is block-diagonal across cells.

mod flux;
mod props;

pub use flux::{face_fluxes, well_rates, FaceFlux, WellRates, UPWIND_BAND, WELL_BAND};
pub use props::CellProps;

use crate::flash::{
    kkt_residual_uv_from_bundle, kkt_residual_vt_from_bundle, FlashScaling, FlashSpecUv,
    FlashSpecVt, KktSystem, PhaseBundle, RockContext,
};
use crate::fluid_props::{RelPermSpec, ViscositySpec};
use crate::grid::{FaceConnection, StructuredGrid};
use crate::thermo::{FluidEos, MixtureSpec, RockSpec, ThermoError};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("cell {cell}: {source}")]
    Cell {
        cell: usize,
        #[source]
        source: ThermoError,
    },
}

/// Thermal mode solves the energy balance with UV flash per cell;
/// isothermal mode holds temperature fixed with VT flash per cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SimMode {
    Thermal,
    Isothermal,
}

impl SimMode {
    /// Differential variables per cell.
    pub fn x_len(&self, nc: usize) -> usize {
        match self {
            SimMode::Thermal => 2 + nc,
            SimMode::Isothermal => 1 + nc,
        }
    }

    /// Algebraic variables per cell.
    pub fn y_len(&self, nc: usize) -> usize {
        match self {
            SimMode::Thermal => 3 + 2 * nc,
            SimMode::Isothermal => 2 + 2 * nc,
        }
    }

    /// Multipliers per cell.
    pub fn z_len(&self, nc: usize) -> usize {
        match self {
            SimMode::Thermal => 3 + nc,
            SimMode::Isothermal => 2 + nc,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WellKind {
    Injector,
    Producer,
}

/// A single-perforation well.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WellSpec {
    pub name: String,
    pub kind: WellKind,
    /// Perforated cell index.
    pub cell: usize,
    /// Well index (perforation conductance), m³.
    pub wi: f64,
    /// BHP bounds, Pa.
    pub bhp_min: f64,
    pub bhp_max: f64,
    /// Injection temperature, K (injectors; the disturbance variable).
    pub t_inj: f64,
}

/// Heat exchange with the surroundings: T^s and a per-cell conductance.
#[derive(Debug, Clone)]
pub struct SurroundingsSpec {
    pub t_s: f64,
    /// W/K per cell.
    pub kt_rs: Vec<f64>,
}

impl SurroundingsSpec {
    pub fn adiabatic(n_cells: usize, t_s: f64) -> Self {
        SurroundingsSpec {
            t_s,
            kt_rs: vec![0.0; n_cells],
        }
    }
}

/// Fully assembled reservoir model: geometry, fluids, closures, wells.
pub struct ReservoirModel {
    pub mode: SimMode,
    pub mix: MixtureSpec,
    pub eos: FluidEos,
    pub rock: RockSpec,
    pub grid: StructuredGrid,
    pub connections: Vec<FaceConnection>,
    pub wells: Vec<WellSpec>,
    pub surroundings: SurroundingsSpec,
    pub relperm: RelPermSpec,
    pub viscosity: ViscositySpec,
    /// Temperature of the isothermal model, K (unused in thermal mode).
    pub t_iso: f64,
    /// Per-cell mole scales frozen at initialization (nondimensionalizes
    /// the flash rows; G stays exactly linear in x).
    pub flash_scalings: Vec<FlashScaling>,
}

impl ReservoirModel {
    pub fn nc(&self) -> usize {
        self.eos.nc
    }

    pub fn n_cells(&self) -> usize {
        self.grid.n_cells()
    }

    /// Rock volume per cell at the reference state, m³.
    pub fn rock_v_ref(&self) -> f64 {
        (1.0 - self.rock.phi) * self.grid.cell_volume()
    }

    pub fn rock_context(&self) -> RockContext {
        RockContext {
            spec: self.rock.clone(),
            v_ref: self.rock_v_ref(),
        }
    }

    /// Reset the per-cell flash scalings from a global state vector.
    pub fn freeze_scalings(&mut self, x: &DVector<f64>) {
        let nc = self.nc();
        let nx = self.mode.x_len(nc);
        let v = self.grid.cell_volume();
        self.flash_scalings = (0..self.n_cells())
            .map(|i| {
                let xi = x.rows(i * nx, nx);
                let moles: f64 = match self.mode {
                    SimMode::Thermal => xi.as_slice()[1..].iter().sum(),
                    SimMode::Isothermal => xi.as_slice().iter().sum(),
                };
                FlashScaling::new(moles, v)
            })
            .collect();
    }

    /// Unpack cell i's slice of y into thermal-layout quantities
    /// (t, p, n_w, n_o, n_g); isothermal mode fills t from `t_iso`.
    pub fn unpack_cell_y<'a>(&self, y: &'a DVector<f64>, i: usize) -> (f64, f64, f64, &'a [f64], &'a [f64]) {
        let nc = self.nc();
        let ny = self.mode.y_len(nc);
        let s = &y.as_slice()[i * ny..(i + 1) * ny];
        match self.mode {
            SimMode::Thermal => (s[0], s[1], s[2], &s[3..3 + nc], &s[3 + nc..3 + 2 * nc]),
            SimMode::Isothermal => (self.t_iso, s[0], s[1], &s[2..2 + nc], &s[2 + nc..2 + 2 * nc]),
        }
    }

    /// Flash specification of cell i from the differential state x_i.
    fn flash_spec_uv(&self, xi: &[f64]) -> FlashSpecUv {
        let nc = self.nc();
        FlashSpecUv {
            u: xi[0],
            v: self.grid.cell_volume(),
            n_w: xi[1],
            n: xi[2..2 + nc].to_vec(),
            rock: self.rock_context(),
        }
    }

    fn flash_spec_vt(&self, xi: &[f64]) -> FlashSpecVt {
        let nc = self.nc();
        FlashSpecVt {
            t: self.t_iso,
            v: self.grid.cell_volume(),
            n_w: xi[0],
            n: xi[1..1 + nc].to_vec(),
            rock: self.rock_context(),
        }
    }

    /// Evaluate per-cell properties and flash KKT blocks for the whole
    /// grid. Work is cell-parallel with outputs in cell order, so results
    /// are identical for any thread count.
    pub fn evaluate_cells(
        &self,
        x: &DVector<f64>,
        y: &DVector<f64>,
        z: &DVector<f64>,
    ) -> Result<Vec<CellEval>, ModelError> {
        let nc = self.nc();
        let nx = self.mode.x_len(nc);
        let nyl = self.mode.y_len(nc);
        let nzl = self.mode.z_len(nc);
        (0..self.n_cells())
            .into_par_iter()
            .map(|i| {
                let (t, p, n_w, n_o, n_g) = self.unpack_cell_y(y, i);
                let bundle = PhaseBundle::evaluate(&self.eos, t, p, n_w, n_o, n_g, &self.rock_context())
                    .map_err(|source| ModelError::Cell { cell: i, source })?;
                let xi = &x.as_slice()[i * nx..(i + 1) * nx];
                let yi = DVector::from_column_slice(&y.as_slice()[i * nyl..(i + 1) * nyl]);
                let zi = DVector::from_column_slice(&z.as_slice()[i * nzl..(i + 1) * nzl]);
                let kkt = match self.mode {
                    SimMode::Thermal => kkt_residual_uv_from_bundle(
                        nc,
                        &self.flash_spec_uv(xi),
                        &yi,
                        &zi,
                        &self.flash_scalings[i],
                        &bundle,
                    ),
                    SimMode::Isothermal => kkt_residual_vt_from_bundle(
                        nc,
                        &self.flash_spec_vt(xi),
                        &yi,
                        &zi,
                        &self.flash_scalings[i],
                        &bundle,
                    ),
                };
                let props = CellProps::build(self, t, p, n_w, n_o, n_g, &bundle);
                Ok(CellEval { props, kkt })
            })
            .collect()
    }
}

/// Everything the assemblies need from one cell at one iterate.
pub struct CellEval {
    pub props: CellProps,
    pub kkt: KktSystem,
}

/// The conservation right-hand side F (length n_cells·x_len) with its
/// Jacobian blocks.
pub struct FSystem {
    pub value: DVector<f64>,
    /// ∂F_i/∂y_i, one (x_len × y_len) block per cell.
    pub diag: Vec<DMatrix<f64>>,
    /// Per connection: (∂F_i/∂y_j, ∂F_j/∂y_i), aligned with
    /// `model.connections`.
    pub offdiag: Vec<(DMatrix<f64>, DMatrix<f64>)>,
    /// Per well: ∂F_wellcell/∂u_w (x_len column).
    pub d_du: Vec<DVector<f64>>,
    /// Per well: ∂F_wellcell/∂T_inj_w (x_len column; zero for producers).
    pub d_dd: Vec<DVector<f64>>,
    /// Per well rates at this iterate (for reporting and objectives).
    pub well_rates: Vec<WellRates>,
}

/// Assemble F(y, u, d): fluxes over faces, well sources, surroundings heat.
///
/// Face contributions are computed once per face and added with opposite
/// signs to both cells, so closed-system sums telescope to zero exactly in
/// floating point.
pub fn residual_f(
    model: &ReservoirModel,
    cells: &[CellEval],
    y: &DVector<f64>,
    u: &DVector<f64>,
    d: &DVector<f64>,
) -> FSystem {
    let nc = model.nc();
    let nx = model.mode.x_len(nc);
    let n_cells = model.n_cells();
    let mut value = DVector::zeros(n_cells * nx);
    let mut diag = vec![DMatrix::zeros(nx, model.mode.y_len(nc)); n_cells];
    let mut offdiag = Vec::with_capacity(model.connections.len());

    for conn in &model.connections {
        let (i, j) = (conn.cell_i, conn.cell_j);
        let flux = face_fluxes(model, conn, &cells[i].props, &cells[j].props);
        flux.accumulate(
            model,
            &mut value,
            &mut diag,
            &mut offdiag,
            i,
            j,
        );
    }

    // surroundings heat: +k_T^rs·(T^s − T_i) into the energy row
    if model.mode == SimMode::Thermal {
        for i in 0..n_cells {
            let kt = model.surroundings.kt_rs[i];
            if kt != 0.0 {
                let t_i = cells[i].props.t;
                value[i * nx] += kt * (model.surroundings.t_s - t_i);
                diag[i][(0, 0)] -= kt;
            }
        }
    }

    let mut d_du = Vec::with_capacity(model.wells.len());
    let mut d_dd = Vec::with_capacity(model.wells.len());
    let mut rates = Vec::with_capacity(model.wells.len());
    for (w, well) in model.wells.iter().enumerate() {
        let wr = well_rates(model, well, &cells[well.cell].props, u[w], d[w]);
        wr.accumulate(model, &mut value, &mut diag, well.cell);
        d_du.push(wr.d_du_rows(model));
        d_dd.push(wr.d_dd_rows(model));
        rates.push(wr);
    }

    let _ = y;
    FSystem {
        value,
        diag,
        offdiag,
        d_du,
        d_dd,
        well_rates: rates,
    }
}

/// Stacked per-cell flash residuals ‖G‖∞ and blocks are available directly
/// from [`ReservoirModel::evaluate_cells`]; this helper returns the global
/// ∞-norm.
pub fn g_norm(cells: &[CellEval]) -> f64 {
    cells
        .iter()
        .map(|c| c.kkt.residual.amax())
        .fold(0.0, f64::max)
}
