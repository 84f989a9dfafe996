//! KKT residuals and Jacobians for the UV and VT flash.
//!
//! Both problems are equality-constrained optimizations over per-cell phase
//! variables; their first-order optimality conditions are assembled here as
//! a square algebraic system in (y, z):
//!
//! - UV: minimize −(S^w+S^o+S^g+S^r) subject to total internal energy,
//!   volume, water, and component-balance constraints. Unknowns
//!   y = [T, P, n_w, n_o, n_g], multipliers z = [z_U, z_V, z_w, z_c].
//! - VT: minimize A^w+A^o+A^g+A^r subject to the same constraints minus the
//!   energy row; T is a parameter. y = [P, n_w, n_o, n_g],
//!   z = [z_V, z_w, z_c].
//!
//! At a solution the multipliers take the classical values z_U = 1/T,
//! z_V = P/T, z_c,k = −μ_k/T (UV) and z_V = P, z_c,k = −μ_k (VT).
//!
//! Residual rows are nondimensionalized with fixed scales captured in
//! [`FlashScaling`] (energy rows by R·n·T_SCALE, volume rows by V, mole rows
//! by n; stationarity rows by the matching entropy- or energy-gradient
//! scales). Scales are frozen per spec so the system stays exactly linear in
//! the specified (U, n_w, n).

use super::{FlashSpecUv, FlashSpecVt};
use crate::constants::{P_SCALE, R_GAS, T_SCALE};
use crate::taylor::PhaseEval as Eval;
use crate::thermo::{rock_properties, FluidEos, RootHint, ThermoError};
use nalgebra::{DMatrix, DVector};

/// Frozen nondimensionalization scales for one flash problem.
#[derive(Debug, Clone)]
pub struct FlashScaling {
    /// Mole scale, mol.
    pub n_scale: f64,
    /// Volume scale (the cell volume), m³.
    pub v_scale: f64,
}

impl FlashScaling {
    pub fn new(n_total: f64, v: f64) -> Self {
        FlashScaling {
            n_scale: n_total.max(1e-30),
            v_scale: v,
        }
    }

    pub fn for_uv(spec: &FlashSpecUv) -> Self {
        Self::new(spec.n.iter().sum::<f64>() + spec.n_w, spec.v)
    }

    pub fn for_vt(spec: &FlashSpecVt) -> Self {
        Self::new(spec.n.iter().sum::<f64>() + spec.n_w, spec.v)
    }
}

/// Assembled KKT system at one iterate.
#[derive(Debug, Clone)]
pub struct KktSystem {
    /// Nondimensionalized residual, stationarity rows first.
    pub residual: DVector<f64>,
    /// ∂residual/∂y (physical y units).
    pub jac_y: DMatrix<f64>,
    /// ∂residual/∂z (physical z units).
    pub jac_z: DMatrix<f64>,
    /// ∂residual/∂spec: UV columns [U, n_w, n_k..]; VT columns [n_w, n_k..].
    pub jac_spec: DMatrix<f64>,
}

/// Phase property evaluations shared between the flash assembly and the
/// flow-model assembly.
#[derive(Debug, Clone)]
pub struct PhaseBundle {
    pub water: crate::thermo::PhaseProps,
    pub oil: crate::thermo::PhaseProps,
    pub gas: crate::thermo::PhaseProps,
    pub rock: crate::thermo::RockProps,
}

impl PhaseBundle {
    /// Evaluate all four phases at (t, p) for the given split. Water and
    /// oil use the liquid-like root, gas the vapor-like root.
    pub fn evaluate(
        eos: &FluidEos,
        t: f64,
        p: f64,
        n_w: f64,
        n_o: &[f64],
        n_g: &[f64],
        rock: &super::RockContext,
    ) -> Result<Self, ThermoError> {
        Ok(PhaseBundle {
            water: eos.water.phase_props(t, p, &[n_w], RootHint::LiquidLike)?,
            oil: eos.hc.phase_props(t, p, n_o, RootHint::LiquidLike)?,
            gas: eos.hc.phase_props(t, p, n_g, RootHint::VaporLike)?,
            rock: rock_properties(t, p, &rock.spec, rock.v_ref),
        })
    }
}

/// Aggregate totals (thermal layout) used by both assemblies.
pub(crate) struct Totals {
    pub(crate) entropy: Eval,
    pub(crate) energy: Eval,
    pub(crate) volume: Eval,
    pub(crate) helmholtz: Eval,
}

/// Aggregate S/U/V/A over the thermal cell layout [T, P, n_w, n_o, n_g].
pub(crate) fn totals_from_bundle(nc: usize, t: f64, p: f64, bundle: &PhaseBundle) -> Totals {
    let ny = 3 + 2 * nc;
    let w_slots: Vec<usize> = vec![0, 1, 2];
    let o_slots: Vec<usize> = [0, 1]
        .into_iter()
        .chain((0..nc).map(|k| 3 + k))
        .collect();
    let g_slots: Vec<usize> = [0, 1]
        .into_iter()
        .chain((0..nc).map(|k| 3 + nc + k))
        .collect();
    let r_slots: Vec<usize> = vec![0, 1];

    let t_node = Eval::variable(ny, 0, t);
    let p_node = Eval::variable(ny, 1, p);

    let mut entropy = Eval::constant(ny, 0.0);
    let mut energy = Eval::constant(ny, 0.0);
    let mut volume = Eval::constant(ny, 0.0);
    for (props, slots) in [
        (&bundle.water, &w_slots),
        (&bundle.oil, &o_slots),
        (&bundle.gas, &g_slots),
    ] {
        entropy = entropy + scatter(&props.entropy, slots, ny);
        volume = volume + scatter(&props.volume, slots, ny);
        energy = energy + scatter(&props.enthalpy, slots, ny);
    }
    entropy = entropy + scatter(&bundle.rock.entropy, &r_slots, ny);
    volume = volume + scatter(&bundle.rock.volume, &r_slots, ny);
    energy = energy + scatter(&bundle.rock.enthalpy, &r_slots, ny) - &p_node * &volume;

    let helmholtz = &energy - &t_node * &entropy;
    Totals {
        entropy,
        energy,
        volume,
        helmholtz,
    }
}

pub(crate) fn totals(
    eos: &FluidEos,
    t: f64,
    p: f64,
    n_w: f64,
    n_o: &[f64],
    n_g: &[f64],
    rock: &super::RockContext,
) -> Result<Totals, ThermoError> {
    let bundle = PhaseBundle::evaluate(eos, t, p, n_w, n_o, n_g, rock)?;
    Ok(totals_from_bundle(eos.nc, t, p, &bundle))
}

fn scatter(e: &Eval, slots: &[usize], ny: usize) -> Eval {
    let m = e.dim();
    debug_assert_eq!(m, slots.len());
    let mut grad = DVector::zeros(ny);
    let mut hess = DMatrix::zeros(ny, ny);
    for i in 0..m {
        grad[slots[i]] = e.grad[i];
        for j in 0..m {
            hess[(slots[i], slots[j])] = e.hess[(i, j)];
        }
    }
    Eval::from_parts(e.value, grad, hess)
}

/// UV flash KKT system. y = [T, P, n_w, n_o, n_g] (3+2nc), z = [z_U, z_V,
/// z_w, z_c] (3+nc); residual rows: ny stationarity rows then the 3+nc
/// constraints (energy, volume, water, components).
pub fn kkt_residual_uv(
    eos: &FluidEos,
    spec: &FlashSpecUv,
    y: &DVector<f64>,
    z: &DVector<f64>,
    scaling: &FlashScaling,
) -> Result<KktSystem, ThermoError> {
    let nc = eos.nc;
    let (t, p, n_w) = (y[0], y[1], y[2]);
    let n_o = &y.as_slice()[3..3 + nc];
    let n_g = &y.as_slice()[3 + nc..3 + 2 * nc];
    let bundle = PhaseBundle::evaluate(eos, t, p, n_w, n_o, n_g, &spec.rock)?;
    Ok(kkt_residual_uv_from_bundle(nc, spec, y, z, scaling, &bundle))
}

/// UV KKT assembly from precomputed phase evaluations.
pub fn kkt_residual_uv_from_bundle(
    nc: usize,
    spec: &FlashSpecUv,
    y: &DVector<f64>,
    z: &DVector<f64>,
    scaling: &FlashScaling,
    bundle: &PhaseBundle,
) -> KktSystem {
    let ny = 3 + 2 * nc;
    let nz = 3 + nc;
    assert_eq!(y.len(), ny);
    assert_eq!(z.len(), nz);
    let (t, p, n_w) = (y[0], y[1], y[2]);
    let n_o = y.as_slice()[3..3 + nc].to_vec();
    let n_g = y.as_slice()[3 + nc..3 + 2 * nc].to_vec();

    let tot = totals_from_bundle(nc, t, p, bundle);
    let (z_u, z_v) = (z[0], z[1]);

    // stationarity of L = −S + z_U(U−Û) + z_V(V−V̂) + z_w(n_w−n̂_w) + Σ z_k(n_o+n_g−n̂)
    let mut stat = -&tot.entropy.grad + &tot.energy.grad * z_u + &tot.volume.grad * z_v;
    stat[2] += z[2];
    for k in 0..nc {
        stat[3 + k] += z[3 + k];
        stat[3 + nc + k] += z[3 + k];
    }
    let stat_jac_y = -&tot.entropy.hess + &tot.energy.hess * z_u + &tot.volume.hess * z_v;

    // constraints
    let mut con = DVector::zeros(nz);
    con[0] = tot.energy.value - spec.u;
    con[1] = tot.volume.value - spec.v;
    con[2] = n_w - spec.n_w;
    for k in 0..nc {
        con[3 + k] = n_o[k] + n_g[k] - spec.n[k];
    }
    let mut con_jac_y = DMatrix::zeros(nz, ny);
    con_jac_y.row_mut(0).copy_from(&tot.energy.grad.transpose());
    con_jac_y.row_mut(1).copy_from(&tot.volume.grad.transpose());
    con_jac_y[(2, 2)] = 1.0;
    for k in 0..nc {
        con_jac_y[(3 + k, 3 + k)] = 1.0;
        con_jac_y[(3 + k, 3 + nc + k)] = 1.0;
    }

    // row scales: stationarity then constraints
    let ns = scaling.n_scale;
    let mut row_scale = DVector::zeros(ny + nz);
    row_scale[0] = T_SCALE / (R_GAS * ns);
    row_scale[1] = P_SCALE / (R_GAS * ns);
    for i in 2..ny {
        row_scale[i] = 1.0 / R_GAS;
    }
    row_scale[ny] = 1.0 / (R_GAS * ns * T_SCALE);
    row_scale[ny + 1] = 1.0 / scaling.v_scale;
    for i in ny + 2..ny + nz {
        row_scale[i] = 1.0 / ns;
    }

    // assemble, scale rows
    let mut residual = DVector::zeros(ny + nz);
    residual.rows_mut(0, ny).copy_from(&stat);
    residual.rows_mut(ny, nz).copy_from(&con);
    let mut jac_y = DMatrix::zeros(ny + nz, ny);
    jac_y.view_mut((0, 0), (ny, ny)).copy_from(&stat_jac_y);
    jac_y.view_mut((ny, 0), (nz, ny)).copy_from(&con_jac_y);
    // ∂stat/∂z = C^T (constraint gradients)
    let mut jac_z = DMatrix::zeros(ny + nz, nz);
    jac_z
        .view_mut((0, 0), (ny, nz))
        .copy_from(&con_jac_y.transpose());
    // ∂residual/∂(U, n_w, n): constraint right-hand sides only
    let mut jac_spec = DMatrix::zeros(ny + nz, 2 + nc);
    jac_spec[(ny, 0)] = -1.0;
    jac_spec[(ny + 2, 1)] = -1.0;
    for k in 0..nc {
        jac_spec[(ny + 3 + k, 2 + k)] = -1.0;
    }

    apply_row_scale(&mut residual, &mut jac_y, &mut jac_z, &mut jac_spec, &row_scale);
    KktSystem {
        residual,
        jac_y,
        jac_z,
        jac_spec,
    }
}

/// VT flash KKT system. y = [P, n_w, n_o, n_g] (2+2nc), z = [z_V, z_w, z_c]
/// (2+nc); rows: 2+2nc stationarity then volume/water/component constraints.
pub fn kkt_residual_vt(
    eos: &FluidEos,
    spec: &FlashSpecVt,
    y: &DVector<f64>,
    z: &DVector<f64>,
    scaling: &FlashScaling,
) -> Result<KktSystem, ThermoError> {
    let nc = eos.nc;
    let (p, n_w) = (y[0], y[1]);
    let n_o = &y.as_slice()[2..2 + nc];
    let n_g = &y.as_slice()[2 + nc..2 + 2 * nc];
    let bundle = PhaseBundle::evaluate(eos, spec.t, p, n_w, n_o, n_g, &spec.rock)?;
    Ok(kkt_residual_vt_from_bundle(nc, spec, y, z, scaling, &bundle))
}

/// VT KKT assembly from precomputed phase evaluations.
pub fn kkt_residual_vt_from_bundle(
    nc: usize,
    spec: &FlashSpecVt,
    y: &DVector<f64>,
    z: &DVector<f64>,
    scaling: &FlashScaling,
    bundle: &PhaseBundle,
) -> KktSystem {
    let ny = 2 + 2 * nc;
    let nz = 2 + nc;
    assert_eq!(y.len(), ny);
    assert_eq!(z.len(), nz);
    let t = spec.t;
    let (p, n_w) = (y[0], y[1]);
    let n_o = y.as_slice()[2..2 + nc].to_vec();
    let n_g = y.as_slice()[2 + nc..2 + 2 * nc].to_vec();

    let tot = totals_from_bundle(nc, t, p, bundle);
    let z_v = z[0];

    // thermal-layout gradients/Hessians with the T column dropped
    let drop_t = |v: &DVector<f64>| -> DVector<f64> { v.rows(1, v.len() - 1).into_owned() };
    let a_grad = drop_t(&tot.helmholtz.grad);
    let v_grad = drop_t(&tot.volume.grad);
    let a_hess = tot.helmholtz.hess.view((1, 1), (ny, ny)).into_owned();
    let v_hess = tot.volume.hess.view((1, 1), (ny, ny)).into_owned();

    // stationarity of L = A + z_V(V−V̂) + z_w(n_w−n̂_w) + Σ z_k(n_o+n_g−n̂)
    let mut stat = &a_grad + &v_grad * z_v;
    stat[1] += z[1];
    for k in 0..nc {
        stat[2 + k] += z[2 + k];
        stat[2 + nc + k] += z[2 + k];
    }
    let stat_jac_y = a_hess + v_hess * z_v;

    let mut con = DVector::zeros(nz);
    con[0] = tot.volume.value - spec.v;
    con[1] = n_w - spec.n_w;
    for k in 0..nc {
        con[2 + k] = n_o[k] + n_g[k] - spec.n[k];
    }
    let mut con_jac_y = DMatrix::zeros(nz, ny);
    con_jac_y.row_mut(0).copy_from(&v_grad.transpose());
    con_jac_y[(1, 1)] = 1.0;
    for k in 0..nc {
        con_jac_y[(2 + k, 2 + k)] = 1.0;
        con_jac_y[(2 + k, 2 + nc + k)] = 1.0;
    }

    let ns = scaling.n_scale;
    let mut row_scale = DVector::zeros(ny + nz);
    row_scale[0] = P_SCALE / (R_GAS * ns * T_SCALE);
    for i in 1..ny {
        row_scale[i] = 1.0 / (R_GAS * T_SCALE);
    }
    row_scale[ny] = 1.0 / scaling.v_scale;
    for i in ny + 1..ny + nz {
        row_scale[i] = 1.0 / ns;
    }

    let mut residual = DVector::zeros(ny + nz);
    residual.rows_mut(0, ny).copy_from(&stat);
    residual.rows_mut(ny, nz).copy_from(&con);
    let mut jac_y = DMatrix::zeros(ny + nz, ny);
    jac_y.view_mut((0, 0), (ny, ny)).copy_from(&stat_jac_y);
    jac_y.view_mut((ny, 0), (nz, ny)).copy_from(&con_jac_y);
    let mut jac_z = DMatrix::zeros(ny + nz, nz);
    jac_z
        .view_mut((0, 0), (ny, nz))
        .copy_from(&con_jac_y.transpose());
    let mut jac_spec = DMatrix::zeros(ny + nz, 1 + nc);
    jac_spec[(ny + 1, 0)] = -1.0;
    for k in 0..nc {
        jac_spec[(ny + 2 + k, 1 + k)] = -1.0;
    }

    apply_row_scale(&mut residual, &mut jac_y, &mut jac_z, &mut jac_spec, &row_scale);
    KktSystem {
        residual,
        jac_y,
        jac_z,
        jac_spec,
    }
}

fn apply_row_scale(
    residual: &mut DVector<f64>,
    jac_y: &mut DMatrix<f64>,
    jac_z: &mut DMatrix<f64>,
    jac_spec: &mut DMatrix<f64>,
    row_scale: &DVector<f64>,
) {
    for (i, s) in row_scale.iter().enumerate() {
        residual[i] *= s;
        jac_y.row_mut(i).scale_mut(*s);
        jac_z.row_mut(i).scale_mut(*s);
        jac_spec.row_mut(i).scale_mut(*s);
    }
}

/// Column scales for the Newton linear system: physical magnitudes of the
/// unknowns so the scaled Jacobian is well conditioned.
pub fn column_scales_uv(nc: usize, scaling: &FlashScaling) -> DVector<f64> {
    let ny = 3 + 2 * nc;
    let nz = 3 + nc;
    let mut s = DVector::zeros(ny + nz);
    s[0] = T_SCALE;
    s[1] = P_SCALE;
    for i in 2..ny {
        s[i] = scaling.n_scale;
    }
    s[ny] = 1.0 / T_SCALE;
    s[ny + 1] = P_SCALE / T_SCALE;
    for i in ny + 2..ny + nz {
        s[i] = R_GAS;
    }
    s
}

pub fn column_scales_vt(nc: usize, scaling: &FlashScaling) -> DVector<f64> {
    let ny = 2 + 2 * nc;
    let nz = 2 + nc;
    let mut s = DVector::zeros(ny + nz);
    s[0] = P_SCALE;
    for i in 1..ny {
        s[i] = scaling.n_scale;
    }
    s[ny] = P_SCALE;
    for i in ny + 1..ny + nz {
        s[i] = R_GAS * T_SCALE;
    }
    s
}
