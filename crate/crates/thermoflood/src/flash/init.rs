//! Initial iterates for the flash solvers.
//!
//! Cold starts split the hydrocarbon moles between oil and gas with Wilson
//! K-values at a heuristic (T0, P0) via Rachford-Rice, then set the
//! multipliers from the analytic stationarity relations at that state
//! (z_U = 1/T, z_V = P/T, z_k = −μ_k/T for UV; z_V = P, z_k = −μ_k for VT).
//! Warm starts pass a previous [`FlashResult`] through unchanged.

use super::{pack_uv, pack_vt, FlashGuess, FlashResult, FlashSpecUv, FlashSpecVt};
use crate::constants::{R_GAS, T_REF};
use crate::thermo::{derived_potentials, FluidEos, RootHint, ThermoError};
use nalgebra::DVector;

/// Wilson correlation K_k = (Pc_k/P)·exp(5.373·(1+ω_k)·(1 − Tc_k/T)).
pub fn wilson_k(tc: f64, pc: f64, omega: f64, t: f64, p: f64) -> f64 {
    (pc / p) * (5.373 * (1.0 + omega) * (1.0 - tc / t)).exp()
}

/// Vapor fraction solving the Rachford-Rice equation for composition z and
/// K-values, clamped to (0, 1) so both phases stay active.
fn rachford_rice(z: &[f64], k: &[f64]) -> f64 {
    let g = |beta: f64| -> f64 {
        z.iter()
            .zip(k)
            .map(|(zi, ki)| zi * (ki - 1.0) / (1.0 + beta * (ki - 1.0)))
            .sum()
    };
    let floor = 1e-6;
    if g(0.0) <= 0.0 {
        return floor;
    }
    if g(1.0) >= 0.0 {
        return 1.0 - floor;
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (0.5 * (lo + hi)).clamp(floor, 1.0 - floor)
}

/// Split n between oil and gas by Wilson K-values at (t, p); the component
/// balance n_o + n_g = n holds exactly by construction.
fn wilson_split(eos: &FluidEos, t: f64, p: f64, n: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let ntot: f64 = n.iter().sum();
    let eps = 1e-12 * ntot;
    let zc: Vec<f64> = n.iter().map(|nk| nk / ntot).collect();
    let k: Vec<f64> = eos
        .hc
        .components_tc_pc_omega()
        .iter()
        .map(|(tc, pc, om)| wilson_k(*tc, *pc, *om, t, p))
        .collect();
    let beta = rachford_rice(&zc, &k);
    let mut n_o = Vec::with_capacity(n.len());
    let mut n_g = Vec::with_capacity(n.len());
    for (i, nk) in n.iter().enumerate() {
        let x = zc[i] / (1.0 + beta * (k[i] - 1.0));
        let no = ((1.0 - beta) * x * ntot).clamp(eps, (nk - eps).max(eps));
        n_o.push(no);
        n_g.push((nk - no).max(eps));
    }
    (n_o, n_g)
}

/// Multipliers from the stationarity relations at (t, p, splits): the
/// chemical potentials of water and oil yield z_w and z_c exactly when the
/// state is at equilibrium, and a consistent starting point otherwise.
fn stationarity_multipliers(
    eos: &FluidEos,
    t: f64,
    p: f64,
    n_w: f64,
    n_o: &[f64],
    entropic: bool,
) -> Result<(f64, Vec<f64>), ThermoError> {
    let wp = eos.water.phase_props(t, p, &[n_w.max(1e-12)], RootHint::LiquidLike)?;
    let (_, gw, _) = derived_potentials(&wp.enthalpy, &wp.entropy, &wp.volume, t, p);
    let mu_w = gw.grad[2];
    let mu_o = eos.chemical_potentials(t, p, n_o, RootHint::LiquidLike)?;
    if entropic {
        Ok((-mu_w / t, mu_o.iter().map(|m| -m / t).collect()))
    } else {
        Ok((-mu_w, mu_o.iter().map(|m| -m).collect()))
    }
}

/// Initial iterate for the UV flash.
///
/// T0 comes from a constant-heat-capacity energy estimate over rock plus
/// fluid; P0 from the summed ideal-gas pressure against the fluid volume.
pub fn initial_guess_uv(
    eos: &FluidEos,
    spec: &FlashSpecUv,
    warm: Option<&FlashResult>,
) -> Result<FlashGuess, ThermoError> {
    if let Some(w) = warm {
        return Ok(FlashGuess {
            y: pack_uv(w.t, w.p, w.n_w_phase, &w.n_o, &w.n_g),
            z: w.multipliers.clone(),
        });
    }
    let ntot: f64 = spec.n.iter().sum();
    // constant-cp energy estimate; the rock thermal mass dominates in cells
    let c_fluid: f64 = eos.hc.heat_capacity_estimate(T_REF, &spec.n)
        + eos.water.heat_capacity_estimate(T_REF, &[spec.n_w]);
    let c_rock = spec.rock.spec.rho_rock * spec.rock.v_ref * spec.rock.spec.cp_rock;
    let t0 = (T_REF + spec.u / (c_fluid + c_rock).max(1e-12)).clamp(260.0, 600.0);
    let v_fluid = (spec.v - spec.rock.v_ref).max(1e-3 * spec.v);
    let p0 = ((ntot + spec.n_w) * R_GAS * t0 / v_fluid).clamp(1e5, 5e7);

    let (n_o, n_g) = wilson_split(eos, t0, p0, &spec.n);
    let (z_w, z_c) = stationarity_multipliers(eos, t0, p0, spec.n_w, &n_o, true)?;
    let nc = eos.nc;
    let mut z = DVector::zeros(3 + nc);
    z[0] = 1.0 / t0;
    z[1] = p0 / t0;
    z[2] = z_w;
    for k in 0..nc {
        z[3 + k] = z_c[k];
    }
    Ok(FlashGuess {
        y: pack_uv(t0, p0, spec.n_w, &n_o, &n_g),
        z,
    })
}

/// Initial iterate for the VT flash (temperature given).
pub fn initial_guess_vt(
    eos: &FluidEos,
    spec: &FlashSpecVt,
    warm: Option<&FlashResult>,
) -> Result<FlashGuess, ThermoError> {
    if let Some(w) = warm {
        return Ok(FlashGuess {
            y: pack_vt(w.p, w.n_w_phase, &w.n_o, &w.n_g),
            z: w.multipliers.clone(),
        });
    }
    let ntot: f64 = spec.n.iter().sum();
    let v_fluid = (spec.v - spec.rock.v_ref).max(1e-3 * spec.v);
    let p0 = ((ntot + spec.n_w) * R_GAS * spec.t / v_fluid).clamp(1e5, 5e7);

    let (n_o, n_g) = wilson_split(eos, spec.t, p0, &spec.n);
    let (z_w, z_c) = stationarity_multipliers(eos, spec.t, p0, spec.n_w, &n_o, false)?;
    let nc = eos.nc;
    let mut z = DVector::zeros(2 + nc);
    z[0] = p0;
    z[1] = z_w;
    for k in 0..nc {
        z[2 + k] = z_c[k];
    }
    Ok(FlashGuess {
        y: pack_vt(p0, spec.n_w, &n_o, &n_g),
        z,
    })
}
