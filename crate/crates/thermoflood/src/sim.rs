//! Implicit-Euler integration of the semi-explicit index-1 DAE.
//!
//! Each step solves the coupled system
//!   R(w) = [ x_{n+1} − x_n − Δt·F(y_{n+1}, u, d) ;  G(x_{n+1}, y_{n+1}, z_{n+1}) ] = 0
//! for w = (x, y, z) of all cells simultaneously, warm-started from the
//! previous step. The Newton matrix is a block-sparse system over the cell
//! graph, solved either with block-ILU(1)-preconditioned GMRES or a dense
//! LU (small grids and fallback). Time steps adapt to Newton performance
//! and land exactly on control-interval boundaries.

use crate::constants::{P_SCALE, R_GAS, T_SCALE};
use crate::flash::{self, FlashError, FlashGuess, FlashOptions};
use crate::linalg::{dense_solve, gmres, BlockCsr, BlockIlu, LinearError};
use crate::reservoir::{residual_f, CellEval, ModelError, ReservoirModel, SimMode};
use crate::thermo::RootHint;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("Newton diverged at t = {time:.3e} s (dt = {dt:.3e} s)")]
    NewtonDiverged { time: f64, dt: f64 },
    #[error("time step fell below dt_min at t = {time:.3e} s")]
    StepBelowMinimum { time: f64 },
    #[error("at t = {time:.3e} s: {source}")]
    Linear {
        time: f64,
        #[source]
        source: LinearError,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("initialization: {0}")]
    Init(#[from] FlashError),
    #[error("pinned step sequence exhausted or mismatched at t = {time:.3e} s")]
    PinnedStepMismatch { time: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinearSolverKind {
    GmresIlu1,
    Direct,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimOptions {
    /// Convergence tolerance on the scaled step-residual ∞-norm.
    pub newton_tol: f64,
    pub max_newton: usize,
    /// Initial, minimum, and maximum time step, s.
    pub dt_init: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    /// Growth factor applied after fast Newton convergence, shrink factor
    /// applied on failure.
    pub dt_grow: f64,
    pub dt_shrink: f64,
    pub linear_solver: LinearSolverKind,
    pub gmres_tol: f64,
    pub gmres_restart: usize,
    pub gmres_max_iters: usize,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            newton_tol: 1e-8,
            max_newton: 20,
            dt_init: 1e4,
            dt_min: 1.0,
            dt_max: 1.3e6,
            dt_grow: 1.5,
            dt_shrink: 0.5,
            linear_solver: LinearSolverKind::GmresIlu1,
            gmres_tol: 1e-10,
            gmres_restart: 50,
            gmres_max_iters: 600,
        }
    }
}

/// Iteration-count time-step rule: grow after ≤ 5 Newton iterations, keep
/// otherwise; shrinking happens only on step failure. The result is clipped
/// to [dt_min, dt_max] and to the remaining time in the control interval.
pub fn select_timestep(newton_iters: usize, dt: f64, remaining: f64, opts: &SimOptions) -> f64 {
    let grown = if newton_iters <= 5 { dt * opts.dt_grow } else { dt };
    grown.clamp(opts.dt_min, opts.dt_max).min(remaining)
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct StepStats {
    pub newton_iters: usize,
    pub f_evals: usize,
    pub jac_evals: usize,
    pub linear_solves: usize,
    pub linear_iters: usize,
}

#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct WellRateRecord {
    /// Molar rates, mol/s (all nonnegative).
    pub q_w_inj: f64,
    pub q_w_prod: f64,
    pub q_o_prod: f64,
    pub q_g_prod: f64,
}

#[derive(Debug, Clone)]
pub struct StepRecord {
    /// End time of the step, s.
    pub time: f64,
    pub dt: f64,
    pub control_interval: usize,
    pub x: DVector<f64>,
    pub y: DVector<f64>,
    pub z: DVector<f64>,
    pub well_rates: Vec<WellRateRecord>,
    pub stats: StepStats,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub t0: f64,
    pub x0: DVector<f64>,
    pub y0: DVector<f64>,
    pub z0: DVector<f64>,
    pub steps: Vec<StepRecord>,
    pub totals: StepStats,
}

impl Trajectory {
    pub fn final_state(&self) -> (&DVector<f64>, &DVector<f64>, &DVector<f64>) {
        match self.steps.last() {
            Some(s) => (&s.x, &s.y, &s.z),
            None => (&self.x0, &self.y0, &self.z0),
        }
    }

    /// Accepted step sizes, for pinned replays.
    pub fn step_sizes(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.dt).collect()
    }
}

/// ZOH control/disturbance schedules: one column per control interval.
#[derive(Debug, Clone)]
pub struct Schedule {
    pub t0: f64,
    pub tf: f64,
    pub n_intervals: usize,
    /// wells × intervals.
    pub u: DMatrix<f64>,
    pub d: DMatrix<f64>,
}

impl Schedule {
    pub fn interval_length(&self) -> f64 {
        (self.tf - self.t0) / self.n_intervals as f64
    }

    pub fn boundary(&self, k: usize) -> f64 {
        if k >= self.n_intervals {
            self.tf
        } else {
            self.t0 + k as f64 * self.interval_length()
        }
    }
}

// ------------------------------------------------------------------ scaling

/// Row/column scales of the global Newton system, fixed per simulation.
pub(crate) struct StepScaling {
    /// Per cell: scales of the x-rows (and x-columns).
    pub x_scale: Vec<DVector<f64>>,
    /// Per cell: scales of y columns.
    pub y_scale: Vec<DVector<f64>>,
    /// Per cell: scales of z columns.
    pub z_scale: Vec<DVector<f64>>,
}

impl StepScaling {
    pub fn build(model: &ReservoirModel) -> Self {
        let nc = model.nc();
        let n_cells = model.n_cells();
        let mut x_scale = Vec::with_capacity(n_cells);
        let mut y_scale = Vec::with_capacity(n_cells);
        let mut z_scale = Vec::with_capacity(n_cells);
        for i in 0..n_cells {
            let ns = model.flash_scalings[i].n_scale;
            match model.mode {
                SimMode::Thermal => {
                    let mut xs = DVector::from_element(2 + nc, ns);
                    xs[0] = R_GAS * ns * T_SCALE;
                    x_scale.push(xs);
                    let mut ys = DVector::from_element(3 + 2 * nc, ns);
                    ys[0] = T_SCALE;
                    ys[1] = P_SCALE;
                    y_scale.push(ys);
                    let mut zs = DVector::from_element(3 + nc, R_GAS);
                    zs[0] = 1.0 / T_SCALE;
                    zs[1] = P_SCALE / T_SCALE;
                    z_scale.push(zs);
                }
                SimMode::Isothermal => {
                    x_scale.push(DVector::from_element(1 + nc, ns));
                    let mut ys = DVector::from_element(2 + 2 * nc, ns);
                    ys[0] = P_SCALE;
                    y_scale.push(ys);
                    let mut zs = DVector::from_element(2 + nc, R_GAS * T_SCALE);
                    zs[0] = P_SCALE;
                    z_scale.push(zs);
                }
            }
        }
        StepScaling {
            x_scale,
            y_scale,
            z_scale,
        }
    }
}

// -------------------------------------------------------------- step solver

/// Reusable assembly workspace: block pattern and ILU symbolic factor.
pub struct StepWorkspace {
    pattern: BlockCsr,
    ilu: BlockIlu,
    pub(crate) scaling: StepScaling,
}

impl StepWorkspace {
    pub fn new(model: &ReservoirModel) -> Self {
        let nc = model.nc();
        let bs = model.mode.x_len(nc) + model.mode.y_len(nc) + model.mode.z_len(nc);
        let pairs: Vec<(usize, usize)> = model
            .connections
            .iter()
            .flat_map(|c| [(c.cell_i, c.cell_j), (c.cell_j, c.cell_i)])
            .collect();
        let pattern = BlockCsr::from_pattern(model.n_cells(), bs, &pairs);
        let ilu = BlockIlu::symbolic(&pattern, 1);
        StepWorkspace {
            pattern,
            ilu,
            scaling: StepScaling::build(model),
        }
    }
}

/// The scaled residual of the coupled step system.
fn step_residual(
    model: &ReservoirModel,
    ws: &StepScaling,
    cells: &[CellEval],
    f_value: &DVector<f64>,
    x: &DVector<f64>,
    x_prev: &DVector<f64>,
    dt: f64,
) -> DVector<f64> {
    let nc = model.nc();
    let nx = model.mode.x_len(nc);
    let nyz = model.mode.y_len(nc) + model.mode.z_len(nc);
    let bs = nx + nyz;
    let n_cells = model.n_cells();
    let mut r = DVector::zeros(n_cells * bs);
    for i in 0..n_cells {
        for rr in 0..nx {
            let idx = i * nx + rr;
            r[i * bs + rr] = (x[idx] - x_prev[idx] - dt * f_value[idx]) / ws.x_scale[i][rr];
        }
        r.rows_mut(i * bs + nx, nyz).copy_from(&cells[i].kkt.residual);
    }
    r
}

/// Assemble the scaled Newton matrix for the current iterate.
fn assemble_jacobian(
    model: &ReservoirModel,
    ws: &mut StepWorkspace,
    cells: &[CellEval],
    fsys: &crate::reservoir::FSystem,
    dt: f64,
) {
    let nc = model.nc();
    let nx = model.mode.x_len(nc);
    let nyl = model.mode.y_len(nc);
    let nzl = model.mode.z_len(nc);
    let bs = nx + nyl + nzl;
    ws.pattern.zero();

    let scaling = &ws.scaling;
    for i in 0..model.n_cells() {
        let sx = &scaling.x_scale[i];
        let sy = &scaling.y_scale[i];
        let sz = &scaling.z_scale[i];
        let diag = ws.pattern.block_mut(i, i);
        // x-rows: identity in x, −dt·∂F/∂y
        for r in 0..nx {
            diag[(r, r)] = sx[r] / sx[r]; // unit after row/col scaling
            for c in 0..nyl {
                diag[(r, nx + c)] = -dt * fsys.diag[i][(r, c)] * sy[c] / sx[r];
            }
        }
        // G rows: pre-scaled residual rows; scale columns only
        let kkt = &cells[i].kkt;
        for r in 0..nyl + nzl {
            for c in 0..nx {
                diag[(nx + r, c)] = kkt.jac_spec[(r, c)] * sx[c];
            }
            for c in 0..nyl {
                diag[(nx + r, nx + c)] = kkt.jac_y[(r, c)] * sy[c];
            }
            for c in 0..nzl {
                diag[(nx + r, nx + nyl + c)] = kkt.jac_z[(r, c)] * sz[c];
            }
        }
    }
    for (conn, (d_fi_d_yj, d_fj_d_yi)) in model.connections.iter().zip(&fsys.offdiag) {
        let (i, j) = (conn.cell_i, conn.cell_j);
        let sx_i = &scaling.x_scale[i];
        let sy_j = &scaling.y_scale[j];
        let bij = ws.pattern.block_mut(i, j);
        for r in 0..nx {
            for c in 0..nyl {
                bij[(r, nx + c)] += -dt * d_fi_d_yj[(r, c)] * sy_j[c] / sx_i[r];
            }
        }
        let sx_j = &scaling.x_scale[j];
        let sy_i = &scaling.y_scale[i];
        let bji = ws.pattern.block_mut(j, i);
        for r in 0..nx {
            for c in 0..nyl {
                bji[(r, nx + c)] += -dt * d_fj_d_yi[(r, c)] * sy_i[c] / sx_j[r];
            }
        }
    }
    let _ = bs;
}

fn solve_linear(
    ws: &mut StepWorkspace,
    rhs: &DVector<f64>,
    opts: &SimOptions,
    stats: &mut StepStats,
) -> Result<DVector<f64>, LinearError> {
    stats.linear_solves += 1;
    match opts.linear_solver {
        LinearSolverKind::Direct => dense_solve(&ws.pattern.to_dense(), rhs),
        LinearSolverKind::GmresIlu1 => {
            if ws.ilu.factor(&ws.pattern).is_ok() {
                let pattern = &ws.pattern;
                let ilu = &ws.ilu;
                match gmres(
                    &|v| pattern.matvec(v),
                    &|r| ilu.solve(r),
                    rhs,
                    opts.gmres_tol,
                    opts.gmres_restart,
                    opts.gmres_max_iters,
                ) {
                    Ok((x, st)) => {
                        stats.linear_iters += st.iterations;
                        return Ok(x);
                    }
                    Err(e) => {
                        log::warn!("GMRES failed ({e}); falling back to dense solve");
                    }
                }
            } else {
                log::warn!("ILU factorization failed; falling back to dense solve");
            }
            dense_solve(&ws.pattern.to_dense(), rhs)
        }
    }
}

/// One implicit-Euler step: returns the new (x, y, z), per-well rates at the
/// accepted state, and iteration statistics.
#[allow(clippy::too_many_arguments)]
pub fn step(
    model: &ReservoirModel,
    ws: &mut StepWorkspace,
    x_prev: &DVector<f64>,
    y_prev: &DVector<f64>,
    z_prev: &DVector<f64>,
    u: &DVector<f64>,
    d: &DVector<f64>,
    dt: f64,
    opts: &SimOptions,
) -> Result<(DVector<f64>, DVector<f64>, DVector<f64>, Vec<WellRateRecord>, StepStats), SimError> {
    let nc = model.nc();
    let nx = model.mode.x_len(nc);
    let nyl = model.mode.y_len(nc);
    let nzl = model.mode.z_len(nc);
    let bs = nx + nyl + nzl;
    let n_cells = model.n_cells();
    let mut stats = StepStats::default();

    let mut x = x_prev.clone();
    let mut y = y_prev.clone();
    let mut z = z_prev.clone();

    let eval = |x: &DVector<f64>, y: &DVector<f64>, z: &DVector<f64>| -> Result<_, ModelError> {
        let cells = model.evaluate_cells(x, y, z)?;
        let fsys = residual_f(model, &cells, y, u, d);
        Ok((cells, fsys))
    };

    let (mut cells, mut fsys) = eval(&x, &y, &z)?;
    stats.f_evals += 1;
    let mut resid = step_residual(model, &ws.scaling, &cells, &fsys.value, &x, x_prev, dt);
    let mut norm = resid.amax();

    for _ in 0..opts.max_newton {
        if norm < opts.newton_tol {
            let rates = fsys
                .well_rates
                .iter()
                .map(|w| WellRateRecord {
                    q_w_inj: w.q_w_inj,
                    q_w_prod: w.q_w_prod,
                    q_o_prod: w.q_o_prod,
                    q_g_prod: w.q_g_prod,
                })
                .collect();
            return Ok((x, y, z, rates, stats));
        }
        stats.newton_iters += 1;
        stats.jac_evals += 1;
        assemble_jacobian(model, ws, &cells, &fsys, dt);
        let rhs = -&resid;
        let dw = solve_linear(ws, &rhs, opts, &mut stats).map_err(|source| SimError::Linear {
            time: f64::NAN,
            source,
        })?;

        // unscale and enforce positivity floors by step damping
        let mut dx = DVector::zeros(n_cells * nx);
        let mut dy = DVector::zeros(n_cells * nyl);
        let mut dz = DVector::zeros(n_cells * nzl);
        for i in 0..n_cells {
            for r in 0..nx {
                dx[i * nx + r] = dw[i * bs + r] * ws.scaling.x_scale[i][r];
            }
            for r in 0..nyl {
                dy[i * nyl + r] = dw[i * bs + nx + r] * ws.scaling.y_scale[i][r];
            }
            for r in 0..nzl {
                dz[i * nzl + r] = dw[i * bs + nx + nyl + r] * ws.scaling.z_scale[i][r];
            }
        }
        let mut sigma: f64 = 1.0;
        for i in 0..n_cells {
            let ns = model.flash_scalings[i].n_scale;
            let floor = 1e-12 * ns;
            // x moles (skip the energy slot in thermal mode)
            let mole0 = if model.mode == SimMode::Thermal { 1 } else { 0 };
            for r in mole0..nx {
                let (v, dv) = (x[i * nx + r], dx[i * nx + r]);
                if dv < 0.0 && v + dv < floor {
                    sigma = sigma.min(0.9995 * (floor - v) / dv);
                }
            }
            // y: T and P floors, mole floors
            let (t_slot, p_slot, m0) = match model.mode {
                SimMode::Thermal => (Some(0usize), 1usize, 2usize),
                SimMode::Isothermal => (None, 0usize, 1usize),
            };
            if let Some(ts) = t_slot {
                let (v, dv) = (y[i * nyl + ts], dy[i * nyl + ts]);
                if dv < 0.0 && v + dv < 150.0 {
                    sigma = sigma.min(0.9995 * (150.0 - v) / dv);
                }
            }
            let (v, dv) = (y[i * nyl + p_slot], dy[i * nyl + p_slot]);
            if dv < 0.0 && v + dv < 1e4 {
                sigma = sigma.min(0.9995 * (1e4 - v) / dv);
            }
            for r in m0..nyl {
                let (v, dv) = (y[i * nyl + r], dy[i * nyl + r]);
                if dv < 0.0 && v + dv < floor {
                    sigma = sigma.min(0.9995 * (floor - v) / dv);
                }
            }
        }
        sigma = sigma.max(0.0);

        // accept the first damped candidate that reduces the residual
        let mut alpha = sigma;
        let mut accepted = false;
        for _ in 0..6 {
            let x_try = &x + &dx * alpha;
            let y_try = &y + &dy * alpha;
            let z_try = &z + &dz * alpha;
            match eval(&x_try, &y_try, &z_try) {
                Ok((cells_try, fsys_try)) => {
                    stats.f_evals += 1;
                    let resid_try =
                        step_residual(model, &ws.scaling, &cells_try, &fsys_try.value, &x_try, x_prev, dt);
                    let norm_try = resid_try.amax();
                    if norm_try < norm || norm_try < opts.newton_tol {
                        x = x_try;
                        y = y_try;
                        z = z_try;
                        cells = cells_try;
                        fsys = fsys_try;
                        resid = resid_try;
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
            return Err(SimError::NewtonDiverged {
                time: f64::NAN,
                dt,
            });
        }
    }
    if norm < opts.newton_tol {
        let rates = fsys
            .well_rates
            .iter()
            .map(|w| WellRateRecord {
                q_w_inj: w.q_w_inj,
                q_w_prod: w.q_w_prod,
                q_o_prod: w.q_o_prod,
                q_g_prod: w.q_g_prod,
            })
            .collect();
        return Ok((x, y, z, rates, stats));
    }
    Err(SimError::NewtonDiverged {
        time: f64::NAN,
        dt,
    })
}

// --------------------------------------------------------------- simulation

/// Integrate the DAE over the schedule with adaptive steps; boundaries of
/// control intervals are hit exactly.
pub fn simulate(
    model: &ReservoirModel,
    schedule: &Schedule,
    x0: &DVector<f64>,
    y0: &DVector<f64>,
    z0: &DVector<f64>,
    opts: &SimOptions,
) -> Result<Trajectory, SimError> {
    run(model, schedule, x0, y0, z0, opts, None)
}

/// Integrate replaying a fixed sequence of accepted step sizes (smooth
/// objective evaluations for finite differences and line searches).
pub fn simulate_pinned(
    model: &ReservoirModel,
    schedule: &Schedule,
    x0: &DVector<f64>,
    y0: &DVector<f64>,
    z0: &DVector<f64>,
    opts: &SimOptions,
    steps: &[f64],
) -> Result<Trajectory, SimError> {
    run(model, schedule, x0, y0, z0, opts, Some(steps))
}

fn run(
    model: &ReservoirModel,
    schedule: &Schedule,
    x0: &DVector<f64>,
    y0: &DVector<f64>,
    z0: &DVector<f64>,
    opts: &SimOptions,
    pinned: Option<&[f64]>,
) -> Result<Trajectory, SimError> {
    let mut ws = StepWorkspace::new(model);
    let mut traj = Trajectory {
        t0: schedule.t0,
        x0: x0.clone(),
        y0: y0.clone(),
        z0: z0.clone(),
        steps: Vec::new(),
        totals: StepStats::default(),
    };
    let mut x = x0.clone();
    let mut y = y0.clone();
    let mut z = z0.clone();
    let mut t = schedule.t0;
    let mut dt_nominal = opts.dt_init;
    let mut pinned_iter = pinned.map(|s| s.iter());

    for k in 0..schedule.n_intervals {
        let boundary = schedule.boundary(k + 1);
        let u = schedule.u.column(k).into_owned();
        let d = schedule.d.column(k).into_owned();
        while t < boundary - 1e-9 * schedule.interval_length() {
            let remaining = boundary - t;
            let dt = match pinned_iter.as_mut() {
                Some(it) => *it.next().ok_or(SimError::PinnedStepMismatch { time: t })?,
                None => dt_nominal.min(remaining).max(opts.dt_min.min(remaining)),
            };
            let hits_boundary = dt >= remaining - 1e-9 * remaining;
            match step(model, &mut ws, &x, &y, &z, &u, &d, dt, opts) {
                Ok((x1, y1, z1, rates, stats)) => {
                    t = if hits_boundary && pinned.is_none() { boundary } else { t + dt };
                    traj.totals.newton_iters += stats.newton_iters;
                    traj.totals.f_evals += stats.f_evals;
                    traj.totals.jac_evals += stats.jac_evals;
                    traj.totals.linear_solves += stats.linear_solves;
                    traj.totals.linear_iters += stats.linear_iters;
                    traj.steps.push(StepRecord {
                        time: t,
                        dt,
                        control_interval: k,
                        x: x1.clone(),
                        y: y1.clone(),
                        z: z1.clone(),
                        well_rates: rates,
                        stats,
                    });
                    x = x1;
                    y = y1;
                    z = z1;
                    if pinned.is_none() {
                        dt_nominal = select_timestep(stats.newton_iters, dt, f64::INFINITY, opts);
                    }
                }
                Err(SimError::NewtonDiverged { .. }) if pinned.is_none() => {
                    if dt <= opts.dt_min * (1.0 + 1e-12) {
                        return Err(SimError::StepBelowMinimum { time: t });
                    }
                    dt_nominal = (dt * opts.dt_shrink).max(opts.dt_min);
                }
                Err(SimError::Linear { source, .. }) => {
                    return Err(SimError::Linear { time: t, source })
                }
                Err(e) => return Err(e),
            }
        }
        t = boundary;
    }
    Ok(traj)
}

// ----------------------------------------------------------- initialization

/// Primary initial conditions: the scenario speaks in (T, P, overall
/// composition, water saturation); conserved quantities are derived.
#[derive(Debug, Clone)]
pub struct InitialConditions {
    /// Per-cell temperature, K.
    pub t: Vec<f64>,
    /// Per-cell pressure, Pa.
    pub p: Vec<f64>,
    /// Overall hydrocarbon composition (mole fractions).
    pub composition: Vec<f64>,
    /// Water saturation of the fluid volume.
    pub sw: f64,
}

/// Phase split at fixed (T, P) by successive substitution on the chemical
/// potentials (Wilson start): returns (β, x, y) with β the vapor fraction;
/// β is floored into (0, 1) so both phases stay active.
fn pt_split(
    model: &ReservoirModel,
    t: f64,
    p: f64,
    zc: &[f64],
) -> Result<(f64, Vec<f64>, Vec<f64>), FlashError> {
    let eos = &model.eos;
    let nc = model.nc();
    let mut k: Vec<f64> = eos
        .hc
        .components_tc_pc_omega()
        .iter()
        .map(|(tc, pc, om)| flash::wilson_k(*tc, *pc, *om, t, p))
        .collect();
    let floor = 1e-6;
    let mut beta = 0.5;
    let mut x = zc.to_vec();
    let mut y = zc.to_vec();
    for _ in 0..300 {
        // Rachford-Rice for the current K
        let g = |b: f64| -> f64 {
            zc.iter()
                .zip(&k)
                .map(|(zi, ki)| zi * (ki - 1.0) / (1.0 + b * (ki - 1.0)))
                .sum()
        };
        beta = if g(0.0) <= 0.0 {
            floor
        } else if g(1.0) >= 0.0 {
            1.0 - floor
        } else {
            let (mut lo, mut hi) = (0.0, 1.0);
            for _ in 0..70 {
                let mid = 0.5 * (lo + hi);
                if g(mid) > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            0.5 * (lo + hi)
        };
        for i in 0..nc {
            x[i] = zc[i] / (1.0 + beta * (k[i] - 1.0));
            y[i] = k[i] * x[i];
        }
        let xs: f64 = x.iter().sum();
        let ys: f64 = y.iter().sum();
        for i in 0..nc {
            x[i] /= xs;
            y[i] /= ys;
        }
        let mu_o = eos.chemical_potentials(t, p, &x, RootHint::LiquidLike)?;
        let mu_g = eos.chemical_potentials(t, p, &y, RootHint::VaporLike)?;
        let mut worst: f64 = 0.0;
        for i in 0..nc {
            let dmu = (mu_o[i] - mu_g[i]) / (R_GAS * t);
            worst = worst.max(dmu.abs());
            k[i] *= dmu.exp();
        }
        if worst < 1e-12 {
            break;
        }
    }
    Ok((beta.clamp(floor, 1.0 - floor), x, y))
}

/// Build a consistent initial state (x̂0, y0, z0): per cell, split the
/// hydrocarbons at (T, P), size the phase moles to fill the fluid volume at
/// the prescribed water saturation, derive the conserved quantities, then
/// polish the per-cell flash so ‖G‖ meets the Newton tolerance. Also
/// freezes the model's per-cell scalings.
pub fn consistent_initial_state(
    model: &mut ReservoirModel,
    init: &InitialConditions,
) -> Result<(DVector<f64>, DVector<f64>, DVector<f64>), SimError> {
    let nc = model.nc();
    let n_cells = model.n_cells();
    let nx = model.mode.x_len(nc);
    let nyl = model.mode.y_len(nc);
    let nzl = model.mode.z_len(nc);
    let mut x = DVector::zeros(n_cells * nx);
    let mut y = DVector::zeros(n_cells * nyl);
    let mut z = DVector::zeros(n_cells * nzl);
    let rock = model.rock_context();
    let v_cell = model.grid.cell_volume();

    for i in 0..n_cells {
        let (t, p) = (init.t[i], init.p[i]);
        let (beta, xo, yg) = pt_split(model, t, p, &init.composition)?;
        let v_w = model
            .eos
            .water
            .molar_volume(t, p, &[1.0], RootHint::LiquidLike)
            .map_err(FlashError::from)?;
        let v_o = model
            .eos
            .hc
            .molar_volume(t, p, &xo, RootHint::LiquidLike)
            .map_err(FlashError::from)?;
        let v_g = model
            .eos
            .hc
            .molar_volume(t, p, &yg, RootHint::VaporLike)
            .map_err(FlashError::from)?;

        let v_fluid = model.rock.phi * v_cell;
        let n_w = init.sw * v_fluid / v_w;
        let v_hc = (1.0 - init.sw) * v_fluid;
        let n_hc = v_hc / (beta * v_g + (1.0 - beta) * v_o);
        let n_o: Vec<f64> = xo.iter().map(|xi| (1.0 - beta) * n_hc * xi).collect();
        let n_g: Vec<f64> = yg.iter().map(|yi| beta * n_hc * yi).collect();
        let n_tot: Vec<f64> = n_o.iter().zip(&n_g).map(|(a, b)| a + b).collect();

        let totals = flash::cell_totals(&model.eos, t, p, n_w, &n_o, &n_g, &rock)
            .map_err(FlashError::from)?;

        match model.mode {
            SimMode::Thermal => {
                x[i * nx] = totals.u;
                x[i * nx + 1] = n_w;
                for k in 0..nc {
                    x[i * nx + 2 + k] = n_tot[k];
                }
                y.rows_mut(i * nyl, nyl)
                    .copy_from(&flash::pack_uv(t, p, n_w, &n_o, &n_g));
            }
            SimMode::Isothermal => {
                x[i * nx] = n_w;
                for k in 0..nc {
                    x[i * nx + 1 + k] = n_tot[k];
                }
                y.rows_mut(i * nyl, nyl)
                    .copy_from(&flash::pack_vt(p, n_w, &n_o, &n_g));
            }
        }
        // multipliers from the stationarity relations
        let mu_o = model
            .eos
            .chemical_potentials(t, p, &n_o, RootHint::LiquidLike)
            .map_err(FlashError::from)?;
        let wp = model
            .eos
            .water
            .phase_props(t, p, &[n_w.max(1e-12)], RootHint::LiquidLike)
            .map_err(FlashError::from)?;
        let (_, gw, _) =
            crate::thermo::derived_potentials(&wp.enthalpy, &wp.entropy, &wp.volume, t, p);
        let mu_w = gw.grad[2];
        match model.mode {
            SimMode::Thermal => {
                z[i * nzl] = 1.0 / t;
                z[i * nzl + 1] = p / t;
                z[i * nzl + 2] = -mu_w / t;
                for k in 0..nc {
                    z[i * nzl + 3 + k] = -mu_o[k] / t;
                }
            }
            SimMode::Isothermal => {
                z[i * nzl] = p;
                z[i * nzl + 1] = -mu_w;
                for k in 0..nc {
                    z[i * nzl + 2 + k] = -mu_o[k];
                }
            }
        }
    }

    model.freeze_scalings(&x);

    // polish each cell's flash to full consistency
    let opts = FlashOptions {
        tol: 1e-11,
        ..FlashOptions::default()
    };
    for i in 0..n_cells {
        let guess = FlashGuess {
            y: y.rows(i * nyl, nyl).into_owned(),
            z: z.rows(i * nzl, nzl).into_owned(),
        };
        match model.mode {
            SimMode::Thermal => {
                let xi = x.rows(i * nx, nx);
                let spec = flash::FlashSpecUv {
                    u: xi[0],
                    v: v_cell,
                    n_w: xi[1],
                    n: xi.as_slice()[2..2 + nc].to_vec(),
                    rock: rock.clone(),
                };
                let res = flash::solve_uv(&model.eos, &spec, &guess, &opts)?;
                y.rows_mut(i * nyl, nyl)
                    .copy_from(&flash::pack_uv(res.t, res.p, res.n_w_phase, &res.n_o, &res.n_g));
                z.rows_mut(i * nzl, nzl).copy_from(&res.multipliers);
            }
            SimMode::Isothermal => {
                let xi = x.rows(i * nx, nx);
                let spec = flash::FlashSpecVt {
                    t: model.t_iso,
                    v: v_cell,
                    n_w: xi[0],
                    n: xi.as_slice()[1..1 + nc].to_vec(),
                    rock: rock.clone(),
                };
                let res = flash::solve_vt(&model.eos, &spec, &guess, &opts)?;
                y.rows_mut(i * nyl, nyl)
                    .copy_from(&flash::pack_vt(res.p, res.n_w_phase, &res.n_o, &res.n_g));
                z.rows_mut(i * nzl, nzl).copy_from(&res.multipliers);
            }
        }
    }

    Ok((x, y, z))
}
