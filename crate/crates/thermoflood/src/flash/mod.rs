//! UV and VT flash: phase equilibrium as equality-constrained optimization,
//! solved by Newton's method on the KKT conditions.
//!
//! The UV flash maximizes total entropy at specified internal energy,
//! volume, water moles, and component moles; its solution is the
//! equilibrium temperature, pressure, and phase split. The VT flash
//! minimizes total Helmholtz energy at specified temperature and volume;
//! its solution is the equilibrium pressure and phase split.
//!
//! Both phases of the hydrocarbon system stay active throughout: phase
//! moles are floored at ε = 1e-12·Σn by step damping (trace-phase
//! regularization), which preserves the smoothness the adjoint machinery
//! relies on. A vanished phase is represented by trace moles, not by a
//! phase-count switch.

mod init;
mod kkt;

pub use init::{initial_guess_uv, initial_guess_vt, wilson_k};
pub use kkt::{
    column_scales_uv, column_scales_vt, kkt_residual_uv, kkt_residual_uv_from_bundle,
    kkt_residual_vt, kkt_residual_vt_from_bundle, FlashScaling, KktSystem, PhaseBundle,
};

use crate::thermo::{FluidEos, RockSpec, ThermoError};
use nalgebra::DVector;
use std::io::Write;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FlashError {
    #[error("flash did not converge after {iterations} iterations (residual {residual:.3e})")]
    MaxIterations { iterations: usize, residual: f64 },
    #[error("nonphysical flash specification: {0}")]
    NonphysicalSpec(String),
    #[error(transparent)]
    Thermo(#[from] ThermoError),
}

/// Rock participating in a cell's equilibrium: parameters plus the rock
/// volume at the reference state.
#[derive(Debug, Clone)]
pub struct RockContext {
    pub spec: RockSpec,
    pub v_ref: f64,
}

impl RockContext {
    /// A rock-free context (pure fluid flash).
    pub fn none() -> Self {
        RockContext {
            spec: RockSpec {
                cr: 0.0,
                cp_rock: 1.0,
                rho_rock: 0.0,
                kt_rock: 0.0,
                phi: 0.5,
            },
            v_ref: 0.0,
        }
    }
}

/// Specified quantities of the UV flash (thermal mode).
#[derive(Debug, Clone)]
pub struct FlashSpecUv {
    /// Total internal energy, J.
    pub u: f64,
    /// Cell volume, m³.
    pub v: f64,
    /// Water moles, mol.
    pub n_w: f64,
    /// Component moles, mol.
    pub n: Vec<f64>,
    pub rock: RockContext,
}

/// Specified quantities of the VT flash (isothermal mode).
#[derive(Debug, Clone)]
pub struct FlashSpecVt {
    /// Temperature, K.
    pub t: f64,
    /// Cell volume, m³.
    pub v: f64,
    pub n_w: f64,
    pub n: Vec<f64>,
    pub rock: RockContext,
}

/// Equilibrium state and multipliers returned by the solvers.
#[derive(Debug, Clone)]
pub struct FlashResult {
    pub t: f64,
    pub p: f64,
    /// Water-phase moles.
    pub n_w_phase: f64,
    /// Oil-phase component moles.
    pub n_o: Vec<f64>,
    /// Gas-phase component moles.
    pub n_g: Vec<f64>,
    /// Lagrange multipliers: UV [z_U, z_V, z_w, z_c..]; VT [z_V, z_w, z_c..].
    pub multipliers: DVector<f64>,
    /// Scaled ∞-norm of the KKT residual at the returned iterate.
    pub kkt_residual_norm: f64,
    pub iterations: usize,
}

/// Packed iterate (y, z) in the mode's layout.
#[derive(Debug, Clone, PartialEq)]
pub struct FlashGuess {
    pub y: DVector<f64>,
    pub z: DVector<f64>,
}

#[derive(Debug, Clone)]
pub struct FlashOptions {
    /// Convergence tolerance on the scaled residual ∞-norm.
    pub tol: f64,
    pub max_iter: usize,
    /// Dump per-iteration diagnostics as CSV to this path.
    pub trace: Option<std::path::PathBuf>,
}

impl Default for FlashOptions {
    fn default() -> Self {
        FlashOptions {
            tol: 1e-9,
            max_iter: 50,
            trace: None,
        }
    }
}

/// Aggregate state-function values of a cell's contents (all four phases).
#[derive(Debug, Clone, Copy)]
pub struct CellTotals {
    /// Internal energy, J.
    pub u: f64,
    /// Volume, m³.
    pub v: f64,
    /// Entropy, J/K.
    pub s: f64,
    /// Helmholtz energy, J.
    pub a: f64,
}

/// Evaluate total U, V, S, A at (t, p) and the given phase split — used to
/// derive conserved quantities from an equilibrium state.
pub fn cell_totals(
    eos: &FluidEos,
    t: f64,
    p: f64,
    n_w: f64,
    n_o: &[f64],
    n_g: &[f64],
    rock: &RockContext,
) -> Result<CellTotals, ThermoError> {
    let tot = kkt::totals(eos, t, p, n_w, n_o, n_g, rock)?;
    Ok(CellTotals {
        u: tot.energy.value,
        v: tot.volume.value,
        s: tot.entropy.value,
        a: tot.helmholtz.value,
    })
}

pub fn pack_uv(t: f64, p: f64, n_w: f64, n_o: &[f64], n_g: &[f64]) -> DVector<f64> {
    let nc = n_o.len();
    let mut y = DVector::zeros(3 + 2 * nc);
    y[0] = t;
    y[1] = p;
    y[2] = n_w;
    for k in 0..nc {
        y[3 + k] = n_o[k];
        y[3 + nc + k] = n_g[k];
    }
    y
}

pub fn pack_vt(p: f64, n_w: f64, n_o: &[f64], n_g: &[f64]) -> DVector<f64> {
    let nc = n_o.len();
    let mut y = DVector::zeros(2 + 2 * nc);
    y[0] = p;
    y[1] = n_w;
    for k in 0..nc {
        y[2 + k] = n_o[k];
        y[2 + nc + k] = n_g[k];
    }
    y
}

fn validate_common(v: f64, n_w: f64, n: &[f64], rock: &RockContext) -> Result<(), FlashError> {
    if !(v > 0.0) {
        return Err(FlashError::NonphysicalSpec("cell volume must be positive".into()));
    }
    if n_w < 0.0 || n.iter().any(|nk| *nk < 0.0) {
        return Err(FlashError::NonphysicalSpec("negative moles".into()));
    }
    if n.iter().sum::<f64>() <= 0.0 {
        return Err(FlashError::NonphysicalSpec("no hydrocarbon moles".into()));
    }
    if v - rock.v_ref <= 0.0 {
        return Err(FlashError::NonphysicalSpec(format!(
            "fluid volume non-positive: cell {v} m³ vs rock {} m³",
            rock.v_ref
        )));
    }
    Ok(())
}

/// Solve the UV flash by Newton iteration on [`kkt_residual_uv`].
pub fn solve_uv(
    eos: &FluidEos,
    spec: &FlashSpecUv,
    guess: &FlashGuess,
    opts: &FlashOptions,
) -> Result<FlashResult, FlashError> {
    validate_common(spec.v, spec.n_w, &spec.n, &spec.rock)?;
    let nc = eos.nc;
    let scaling = FlashScaling::for_uv(spec);
    let eps_n = 1e-12 * spec.n.iter().sum::<f64>();
    let ny = 3 + 2 * nc;
    let mut floors = vec![eps_n; ny];
    floors[0] = 150.0;
    floors[1] = 1e4;

    let assemble = |y: &DVector<f64>, z: &DVector<f64>| kkt_residual_uv(eos, spec, y, z, &scaling);
    let sol = newton(
        &assemble,
        guess,
        &column_scales_uv(nc, &scaling),
        &floors,
        opts,
    )?;
    let (y, z) = (&sol.y, &sol.z);
    Ok(FlashResult {
        t: y[0],
        p: y[1],
        n_w_phase: y[2],
        n_o: y.as_slice()[3..3 + nc].to_vec(),
        n_g: y.as_slice()[3 + nc..3 + 2 * nc].to_vec(),
        multipliers: z.clone(),
        kkt_residual_norm: sol.norm,
        iterations: sol.iterations,
    })
}

/// Solve the VT flash by Newton iteration on [`kkt_residual_vt`].
pub fn solve_vt(
    eos: &FluidEos,
    spec: &FlashSpecVt,
    guess: &FlashGuess,
    opts: &FlashOptions,
) -> Result<FlashResult, FlashError> {
    validate_common(spec.v, spec.n_w, &spec.n, &spec.rock)?;
    if !(spec.t > 0.0) {
        return Err(FlashError::NonphysicalSpec("temperature must be positive".into()));
    }
    let nc = eos.nc;
    let scaling = FlashScaling::for_vt(spec);
    let eps_n = 1e-12 * spec.n.iter().sum::<f64>();
    let ny = 2 + 2 * nc;
    let mut floors = vec![eps_n; ny];
    floors[0] = 1e4;

    let assemble = |y: &DVector<f64>, z: &DVector<f64>| kkt_residual_vt(eos, spec, y, z, &scaling);
    let sol = newton(
        &assemble,
        guess,
        &column_scales_vt(nc, &scaling),
        &floors,
        opts,
    )?;
    let (y, z) = (&sol.y, &sol.z);
    Ok(FlashResult {
        t: spec.t,
        p: y[0],
        n_w_phase: y[1],
        n_o: y.as_slice()[2..2 + nc].to_vec(),
        n_g: y.as_slice()[2 + nc..2 + 2 * nc].to_vec(),
        multipliers: z.clone(),
        kkt_residual_norm: sol.norm,
        iterations: sol.iterations,
    })
}

/// UV flash with the guess built internally (warm start when provided).
pub fn solve_uv_auto(
    eos: &FluidEos,
    spec: &FlashSpecUv,
    warm: Option<&FlashResult>,
    opts: &FlashOptions,
) -> Result<FlashResult, FlashError> {
    let guess = initial_guess_uv(eos, spec, warm)?;
    solve_uv(eos, spec, &guess, opts)
}

/// VT flash with the guess built internally (warm start when provided).
pub fn solve_vt_auto(
    eos: &FluidEos,
    spec: &FlashSpecVt,
    warm: Option<&FlashResult>,
    opts: &FlashOptions,
) -> Result<FlashResult, FlashError> {
    let guess = initial_guess_vt(eos, spec, warm)?;
    solve_vt(eos, spec, &guess, opts)
}

struct NewtonSolution {
    y: DVector<f64>,
    z: DVector<f64>,
    norm: f64,
    iterations: usize,
}

/// Damped Newton on the assembled KKT system: fraction-to-boundary damping
/// against the variable floors, then a backtracking line search (factor 0.5,
/// at most 30 halvings) on the scaled residual ∞-norm.
fn newton(
    assemble: &dyn Fn(&DVector<f64>, &DVector<f64>) -> Result<KktSystem, ThermoError>,
    guess: &FlashGuess,
    col_scales: &DVector<f64>,
    floors: &[f64],
    opts: &FlashOptions,
) -> Result<NewtonSolution, FlashError> {
    let ny = guess.y.len();
    let nz = guess.z.len();
    let n = ny + nz;
    let mut y = guess.y.clone();
    let mut z = guess.z.clone();
    let mut trace = opts
        .trace
        .as_ref()
        .map(|p| std::fs::File::create(p).expect("flash trace file"));
    if let Some(f) = trace.as_mut() {
        writeln!(f, "iter,residual_norm,step_fraction").unwrap();
    }

    let mut sys = assemble(&y, &z)?;
    let mut norm = sys.residual.amax();
    for iter in 0..opts.max_iter {
        if let Some(f) = trace.as_mut() {
            writeln!(f, "{iter},{norm:.16e},1.0").unwrap();
        }
        if norm < opts.tol {
            log_condition(&sys, col_scales);
            return Ok(NewtonSolution {
                y,
                z,
                norm,
                iterations: iter,
            });
        }

        // scaled square system [jac_y | jac_z]·D
        let mut jac = nalgebra::DMatrix::zeros(n, n);
        jac.view_mut((0, 0), (n, ny)).copy_from(&sys.jac_y);
        jac.view_mut((0, ny), (n, nz)).copy_from(&sys.jac_z);
        for j in 0..n {
            jac.column_mut(j).scale_mut(col_scales[j]);
        }
        let rhs = -&sys.residual;
        let step_scaled = jac.lu().solve(&rhs).ok_or(FlashError::MaxIterations {
            iterations: iter,
            residual: norm,
        })?;
        let mut dy = DVector::zeros(ny);
        let mut dz = DVector::zeros(nz);
        for j in 0..ny {
            dy[j] = step_scaled[j] * col_scales[j];
        }
        for j in 0..nz {
            dz[j] = step_scaled[ny + j] * col_scales[ny + j];
        }

        // fraction-to-boundary damping against the floors
        let mut sigma: f64 = 1.0;
        for i in 0..ny {
            if dy[i] < 0.0 {
                let allowed = (floors[i] - y[i]) / dy[i];
                if allowed < sigma {
                    sigma = 0.9995 * allowed;
                }
            }
        }
        sigma = sigma.max(0.0);

        // backtracking on the residual norm
        let mut accepted = false;
        let mut alpha = sigma;
        for _ in 0..30 {
            let y_try = &y + &dy * alpha;
            let z_try = &z + &dz * alpha;
            match assemble(&y_try, &z_try) {
                Ok(sys_try) => {
                    let norm_try = sys_try.residual.amax();
                    if norm_try < norm || norm_try < opts.tol {
                        y = y_try;
                        z = z_try;
                        sys = sys_try;
                        norm = norm_try;
                        accepted = true;
                        break;
                    }
                }
                Err(_) => {}
            }
            alpha *= 0.5;
        }
        if !accepted {
            return Err(FlashError::MaxIterations {
                iterations: iter,
                residual: norm,
            });
        }
    }
    if norm < opts.tol {
        log_condition(&sys, col_scales);
        return Ok(NewtonSolution {
            y,
            z,
            norm,
            iterations: opts.max_iter,
        });
    }
    Err(FlashError::MaxIterations {
        iterations: opts.max_iter,
        residual: norm,
    })
}

fn log_condition(sys: &KktSystem, col_scales: &DVector<f64>) {
    if !log::log_enabled!(log::Level::Debug) {
        return;
    }
    let n = sys.residual.len();
    let ny = sys.jac_y.ncols();
    let mut jac = nalgebra::DMatrix::zeros(n, n);
    jac.view_mut((0, 0), (n, ny)).copy_from(&sys.jac_y);
    jac.view_mut((0, ny), (n, n - ny)).copy_from(&sys.jac_z);
    for j in 0..n {
        jac.column_mut(j).scale_mut(col_scales[j]);
    }
    let svd = jac.svd(false, false);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    log::debug!("flash KKT condition estimate: {:.3e}", smax / smin);
}
