//! Thermal and isothermal compositional reservoir flow simulation with
//! thermodynamically rigorous phase equilibrium, discrete adjoint
//! sensitivities, and bound-constrained well-control optimization.
//!
//! The model couples finite-volume mass/energy conservation on a structured
//! grid with per-cell phase equilibrium posed as an optimization problem:
//! entropy maximization at fixed (U, V, n) in thermal mode, Helmholtz energy
//! minimization at fixed (T, V, n) in isothermal mode. The first-order
//! optimality conditions of these problems are the algebraic equations of a
//! semi-explicit index-1 DAE which is integrated with implicit Euler,
//! solving the discretized differential and algebraic equations
//! simultaneously. Objective gradients for the single-shooting control
//! problem come from a discrete adjoint sweep.
//!
//! Module map:
//! - [`thermo`]: Peng-Robinson property stack with analytic first- and
//!   second-order derivatives in (T, P, n), rock thermodynamics.
//! - [`flash`]: UV and VT flash KKT systems and Newton solvers.
//! - [`fluid_props`]: saturations, Stone's model II relative
//!   permeabilities, Lohrenz-Bray-Clark and water viscosities.
//! - [`grid`]: structured grid, geometric and thermal transmissibilities.
//! - [`reservoir`]: DAE right-hand side F and stacked flash residuals G,
//!   face fluxes with upwinding, well source terms.
//! - [`sim`]: implicit Euler integration with adaptive steps and
//!   block-ILU(1) preconditioned GMRES or dense direct linear solves.
//! - [`adjoint`]: objective quadrature and discrete adjoint gradients.
//! - [`optimizer`]: projected L-BFGS over bounded BHP schedules, KPI
//!   reporting.
//! - [`scenario`]: JSON scenario ingestion, validation, canonical hashing.

pub mod adjoint;
pub mod constants;
pub mod flash;
pub mod fluid_props;
pub mod grid;
pub mod linalg;
pub mod optimizer;
pub mod output;
pub mod reservoir;
pub mod scenario;
pub mod sim;
pub mod taylor;
pub mod thermo;

pub use thermo::{ComponentSpec, MixtureSpec, PhaseEval, RockSpec};
