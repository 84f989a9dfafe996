//! Face fluxes (two-point, phase-potential upwinded) and well source terms.
//!
//! The potential difference across a face is ΔΦ^α = (P_j − P_i) − ρ̄^α·g·Δz
//! with the arithmetic-mean face mass density; the fluid transmissibility
//! ρ^α·k_r^α/μ^α, the molar enthalpy, and the phase mole fractions are
//! upwinded by the sign of ΔΦ^α. The hard upwind switch is blended over
//! |ΔΦ| < [`UPWIND_BAND`] with a cubic weight so Newton and adjoint sweeps
//! see C¹ fluxes.
//!
//! Well rates follow the perforation model q = WI·ρ·(k_r/μ)·ΔP with the
//! cell's own properties; injection applies only when BHP exceeds cell
//! pressure and production only in reverse, enforced by a C¹ positive part
//! of width [`WELL_BAND`].

use super::{CellProps, ReservoirModel, SimMode, WellKind, WellSpec};
use crate::constants::GRAVITY;
use crate::fluid_props::smooth_pos;
use crate::grid::FaceConnection;
use crate::taylor::Deriv1;
use crate::thermo::RootHint;
use nalgebra::{DMatrix, DVector};

/// Half-width of the smoothed upwind switch, Pa.
pub const UPWIND_BAND: f64 = 10.0;

/// Half-width of the smoothed well one-sidedness clamp, Pa.
pub const WELL_BAND: f64 = 1e2;

/// Scalar with gradients with respect to both cells' algebraic variables
/// (thermal layout each).
#[derive(Clone)]
struct Pair {
    v: f64,
    gi: DVector<f64>,
    gj: DVector<f64>,
}

impl Pair {
    fn from_i(d: &Deriv1) -> Self {
        Pair {
            v: d.value,
            gi: d.grad.clone(),
            gj: DVector::zeros(d.grad.len()),
        }
    }

    fn from_j(d: &Deriv1) -> Self {
        Pair {
            v: d.value,
            gi: DVector::zeros(d.grad.len()),
            gj: d.grad.clone(),
        }
    }

    fn add(&self, o: &Pair) -> Pair {
        Pair {
            v: self.v + o.v,
            gi: &self.gi + &o.gi,
            gj: &self.gj + &o.gj,
        }
    }

    fn sub(&self, o: &Pair) -> Pair {
        Pair {
            v: self.v - o.v,
            gi: &self.gi - &o.gi,
            gj: &self.gj - &o.gj,
        }
    }

    fn mul(&self, o: &Pair) -> Pair {
        Pair {
            v: self.v * o.v,
            gi: &self.gi * o.v + &o.gi * self.v,
            gj: &self.gj * o.v + &o.gj * self.v,
        }
    }

    fn scale(&self, s: f64) -> Pair {
        Pair {
            v: self.v * s,
            gi: &self.gi * s,
            gj: &self.gj * s,
        }
    }

    fn chain(&self, f: f64, fp: f64) -> Pair {
        Pair {
            v: f,
            gi: &self.gi * fp,
            gj: &self.gj * fp,
        }
    }
}

/// Cubic blend weight toward cell j: 0 for ΔΦ ≤ −band (upstream i), 1 for
/// ΔΦ ≥ +band (upstream j).
fn upwind_weight(dphi: f64) -> (f64, f64) {
    let b = UPWIND_BAND;
    if dphi <= -b {
        (0.0, 0.0)
    } else if dphi >= b {
        (1.0, 0.0)
    } else {
        let theta = (dphi + b) / (2.0 * b);
        (theta * theta * (3.0 - 2.0 * theta), 6.0 * theta * (1.0 - theta) / (2.0 * b))
    }
}

/// All face contributions to cell i's rates (cell j receives the negation).
pub struct FaceFlux {
    /// Molar phase fluxes into i, mol/s (water, oil, gas).
    q: [Pair; 3],
    /// Heat flux into i (advection + conduction), W.
    heat: Pair,
    /// Component fluxes into i, mol/s.
    comp: Vec<Pair>,
}

/// Evaluate the fluxes across one face.
pub fn face_fluxes(
    model: &ReservoirModel,
    conn: &FaceConnection,
    props_i: &CellProps,
    props_j: &CellProps,
) -> FaceFlux {
    let nc = model.nc();
    let ny = 3 + 2 * nc;
    let mut dp = Pair {
        v: props_j.p - props_i.p,
        gi: DVector::zeros(ny),
        gj: DVector::zeros(ny),
    };
    dp.gi[1] = -1.0;
    dp.gj[1] = 1.0;

    let mut q = Vec::with_capacity(3);
    let mut heat = Pair {
        v: conn.trans_heat * (props_j.t - props_i.t),
        gi: DVector::zeros(ny),
        gj: DVector::zeros(ny),
    };
    heat.gi[0] = -conn.trans_heat;
    heat.gj[0] = conn.trans_heat;

    let mut upwinded_h = Vec::with_capacity(3);
    for alpha in 0..3 {
        // face density and potential difference
        let rho_face = Pair::from_i(&props_i.mass_density[alpha])
            .add(&Pair::from_j(&props_j.mass_density[alpha]))
            .scale(0.5);
        let dphi = dp.sub(&rho_face.scale(GRAVITY * conn.dz));

        // upwinded fluid transmissibility ρ·k_r/μ
        let (w, wp) = upwind_weight(dphi.v);
        let w_pair = dphi.chain(w, wp);
        let one_minus_w = w_pair.chain(1.0 - w_pair.v, -1.0);
        let ht_i = Pair::from_i(&(&props_i.molar_density[alpha] * &props_i.mobility[alpha]));
        let ht_j = Pair::from_j(&(&props_j.molar_density[alpha] * &props_j.mobility[alpha]));
        let ht_up = ht_i.mul(&one_minus_w).add(&ht_j.mul(&w_pair));

        let q_alpha = ht_up.mul(&dphi).scale(conn.trans);

        // upwinded molar enthalpy for the advective heat flux
        let h_up = Pair::from_i(&props_i.molar_enthalpy[alpha])
            .mul(&one_minus_w)
            .add(&Pair::from_j(&props_j.molar_enthalpy[alpha]).mul(&w_pair));
        heat = heat.add(&h_up.mul(&q_alpha));
        upwinded_h.push((w_pair, one_minus_w));
        q.push(q_alpha);
    }

    // upwinded mole fractions weight the oil/gas fluxes into component rows
    let mut comp = Vec::with_capacity(nc);
    for k in 0..nc {
        let (w_o, omw_o) = (&upwinded_h[1].0, &upwinded_h[1].1);
        let x_up = Pair::from_i(&props_i.frac_o[k])
            .mul(omw_o)
            .add(&Pair::from_j(&props_j.frac_o[k]).mul(w_o));
        let (w_g, omw_g) = (&upwinded_h[2].0, &upwinded_h[2].1);
        let y_up = Pair::from_i(&props_i.frac_g[k])
            .mul(omw_g)
            .add(&Pair::from_j(&props_j.frac_g[k]).mul(w_g));
        comp.push(x_up.mul(&q[1]).add(&y_up.mul(&q[2])));
    }

    FaceFlux {
        q: [q[0].clone(), q[1].clone(), q[2].clone()],
        heat,
        comp,
    }
}

impl FaceFlux {
    /// Add this face's contributions to F and its Jacobian blocks: +rows
    /// into cell i, the exact negation into cell j.
    pub fn accumulate(
        &self,
        model: &ReservoirModel,
        value: &mut DVector<f64>,
        diag: &mut [DMatrix<f64>],
        offdiag: &mut Vec<(DMatrix<f64>, DMatrix<f64>)>,
        i: usize,
        j: usize,
    ) {
        let nc = model.nc();
        let nx = model.mode.x_len(nc);
        let nyl = model.mode.y_len(nc);
        let mut d_fi_d_yj = DMatrix::zeros(nx, nyl);
        let mut d_fj_d_yi = DMatrix::zeros(nx, nyl);

        let mut put = |row_th: usize, pair: &Pair| {
            let Some(row) = project_row(model.mode, row_th) else {
                return;
            };
            value[i * nx + row] += pair.v;
            value[j * nx + row] -= pair.v;
            add_projected(model.mode, &mut diag[i], row, &pair.gi, 1.0);
            add_projected(model.mode, &mut d_fi_d_yj, row, &pair.gj, 1.0);
            add_projected(model.mode, &mut diag[j], row, &pair.gj, -1.0);
            add_projected(model.mode, &mut d_fj_d_yi, row, &pair.gi, -1.0);
        };

        put(0, &self.heat);
        put(1, &self.q[0]);
        for k in 0..nc {
            put(2 + k, &self.comp[k]);
        }
        offdiag.push((d_fi_d_yj, d_fj_d_yi));
    }
}

/// Map a thermal x-row [U, n_w, n_k] to the mode's row; None drops the row.
fn project_row(mode: SimMode, row_th: usize) -> Option<usize> {
    match mode {
        SimMode::Thermal => Some(row_th),
        SimMode::Isothermal => row_th.checked_sub(1),
    }
}

/// Add a thermal-layout gradient into a Jacobian block row, dropping the T
/// column in isothermal mode.
fn add_projected(mode: SimMode, block: &mut DMatrix<f64>, row: usize, grad_th: &DVector<f64>, sign: f64) {
    match mode {
        SimMode::Thermal => {
            for c in 0..grad_th.len() {
                block[(row, c)] += sign * grad_th[c];
            }
        }
        SimMode::Isothermal => {
            for c in 1..grad_th.len() {
                block[(row, c - 1)] += sign * grad_th[c];
            }
        }
    }
}

/// Signed well source terms for one well, in thermal x-row layout.
pub struct WellRates {
    /// Source rows [energy, water, components], W and mol/s.
    pub source_rows: DVector<f64>,
    /// ∂rows/∂y_cell (thermal layouts).
    pub jac_y: DMatrix<f64>,
    /// ∂rows/∂u (BHP) and ∂rows/∂d (injection temperature).
    pub du: DVector<f64>,
    pub dd: DVector<f64>,
    /// Reporting rates, mol/s (all nonnegative).
    pub q_w_inj: f64,
    pub q_w_prod: f64,
    pub q_o_prod: f64,
    pub q_g_prod: f64,
    /// Oil production rate with its algebraic gradient and BHP derivative
    /// (objective integrand input).
    pub q_o_prod_deriv: Deriv1,
    pub q_o_prod_du: f64,
}

/// Evaluate one well's source terms at BHP `u` and injection temperature
/// `d` (ignored for producers).
pub fn well_rates(
    model: &ReservoirModel,
    well: &WellSpec,
    props: &CellProps,
    u: f64,
    d: f64,
) -> WellRates {
    let nc = model.nc();
    let ny = 3 + 2 * nc;
    let n_rows = 2 + nc;
    let mut source_rows = DVector::zeros(n_rows);
    let mut jac_y = DMatrix::zeros(n_rows, ny);
    let mut du = DVector::zeros(n_rows);
    let mut dd = DVector::zeros(n_rows);

    let p = props.p;
    match well.kind {
        WellKind::Injector => {
            let (pos, dpos) = smooth_pos(u - p, WELL_BAND);
            // q = WI·ρ^w·(k_r^w/μ^w)·(P^bhp − P)⁺, cell properties
            let coeff = &props.molar_density[0] * &props.mobility[0] * well.wi;
            let q = coeff.value * pos;
            let mut q_grad = &coeff.grad * pos;
            q_grad[1] -= coeff.value * dpos;
            let q_du = coeff.value * dpos;

            // molar enthalpy of injected water at (T_inj, cell P)
            let hw = model
                .eos
                .water
                .phase_props(d, p, &[1.0], RootHint::LiquidLike)
                .expect("injection water state")
                .enthalpy;
            let (h, dh_dt, dh_dp) = (hw.value, hw.grad[0], hw.grad[1]);

            source_rows[1] = q;
            source_rows[0] = h * q;
            for c in 0..ny {
                jac_y[(1, c)] += q_grad[c];
                jac_y[(0, c)] += h * q_grad[c];
            }
            jac_y[(0, 1)] += q * dh_dp;
            du[1] = q_du;
            du[0] = h * q_du;
            dd[0] = q * dh_dt;

            return WellRates {
                source_rows,
                jac_y,
                du,
                dd,
                q_w_inj: q,
                q_w_prod: 0.0,
                q_o_prod: 0.0,
                q_g_prod: 0.0,
                q_o_prod_deriv: Deriv1::constant(ny, 0.0),
                q_o_prod_du: 0.0,
            };
        }
        WellKind::Producer => {
            let (pos, dpos) = smooth_pos(p - u, WELL_BAND);
            let mut q_phase = Vec::with_capacity(3);
            let mut q_phase_du = Vec::with_capacity(3);
            for alpha in 0..3 {
                let coeff = &props.molar_density[alpha] * &props.mobility[alpha] * well.wi;
                let mut grad = &coeff.grad * pos;
                grad[1] += coeff.value * dpos;
                q_phase.push(Deriv1 {
                    value: coeff.value * pos,
                    grad,
                });
                q_phase_du.push(-coeff.value * dpos);
            }

            // water row: −q^w; component rows: −(x_k q^o + y_k q^g);
            // energy row: −Σ_α h^α q^α
            source_rows[1] = -q_phase[0].value;
            for c in 0..ny {
                jac_y[(1, c)] -= q_phase[0].grad[c];
            }
            du[1] = -q_phase_du[0];
            for k in 0..nc {
                let flux = &props.frac_o[k] * &q_phase[1] + &props.frac_g[k] * &q_phase[2];
                source_rows[2 + k] = -flux.value;
                for c in 0..ny {
                    jac_y[(2 + k, c)] -= flux.grad[c];
                }
                du[2 + k] = -(props.frac_o[k].value * q_phase_du[1]
                    + props.frac_g[k].value * q_phase_du[2]);
            }
            let mut energy = Deriv1::constant(ny, 0.0);
            let mut energy_du = 0.0;
            for alpha in 0..3 {
                energy = energy + &props.molar_enthalpy[alpha] * &q_phase[alpha];
                energy_du += props.molar_enthalpy[alpha].value * q_phase_du[alpha];
            }
            source_rows[0] = -energy.value;
            for c in 0..ny {
                jac_y[(0, c)] -= energy.grad[c];
            }
            du[0] = -energy_du;

            return WellRates {
                source_rows,
                jac_y,
                du,
                dd,
                q_w_inj: 0.0,
                q_w_prod: q_phase[0].value,
                q_o_prod: q_phase[1].value,
                q_g_prod: q_phase[2].value,
                q_o_prod_du: q_phase_du[1],
                q_o_prod_deriv: q_phase.swap_remove(1),
            };
        }
    }
}

impl WellRates {
    /// Add the well's rows into F and the cell's diagonal Jacobian block.
    pub fn accumulate(
        &self,
        model: &ReservoirModel,
        value: &mut DVector<f64>,
        diag: &mut [DMatrix<f64>],
        cell: usize,
    ) {
        let nc = model.nc();
        let nx = model.mode.x_len(nc);
        for row_th in 0..2 + nc {
            let Some(row) = project_row(model.mode, row_th) else {
                continue;
            };
            value[cell * nx + row] += self.source_rows[row_th];
            add_projected(
                model.mode,
                &mut diag[cell],
                row,
                &self.jac_y.row(row_th).transpose(),
                1.0,
            );
        }
    }

    /// ∂F_cell/∂u projected to the mode's x-rows.
    pub fn d_du_rows(&self, model: &ReservoirModel) -> DVector<f64> {
        project_x_rows(model.mode, &self.du)
    }

    /// ∂F_cell/∂T_inj projected to the mode's x-rows.
    pub fn d_dd_rows(&self, model: &ReservoirModel) -> DVector<f64> {
        project_x_rows(model.mode, &self.dd)
    }
}

fn project_x_rows(mode: SimMode, rows_th: &DVector<f64>) -> DVector<f64> {
    match mode {
        SimMode::Thermal => rows_th.clone(),
        SimMode::Isothermal => rows_th.rows(1, rows_th.len() - 1).into_owned(),
    }
}
