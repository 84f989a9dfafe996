//! Peng-Robinson equation-of-state property stack.
//!
//! Every property is returned as a [`PhaseEval`] carrying the exact value,
//! gradient, and Hessian with respect to (T, P, n), where n is the phase
//! mole vector. Enthalpy and entropy are ideal-gas contributions (integrated
//! heat-capacity polynomials from the reference state) plus Peng-Robinson
//! departures; volumes come from the selected root of the compressibility
//! cubic with derivatives by implicit differentiation.
//!
//! Units are SI throughout: K, Pa, mol, J, m³.

mod cubic;
mod ideal;
mod pr;
mod rock;

pub use pr::{PhaseProps, PrEos};
pub use rock::{rock_properties, RockProps};

use crate::taylor::PhaseEval as Eval;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type PhaseEval = Eval;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ThermoError {
    /// No real volume root with v > b exists at the queried (T, P, x).
    #[error("no physical volume root at T={t} K, P={p} Pa")]
    NoPhysicalRoot { t: f64, p: f64 },
    #[error("invalid component data: {0}")]
    InvalidComponent(String),
}

/// Which volume root of the cubic to select when several exist.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RootHint {
    /// Smallest physical root (dense phase).
    LiquidLike,
    /// Largest physical root (dilute phase).
    VaporLike,
}

/// Pure-component constants.
///
/// `cp_ig_coeffs` are the coefficients of the ideal-gas heat capacity
/// polynomial cp(T) = c0 + c1·T + c2·T² + c3·T³ in J/(mol·K).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComponentSpec {
    pub name: String,
    /// Critical temperature, K.
    pub tc: f64,
    /// Critical pressure, Pa.
    pub pc: f64,
    /// Acentric factor.
    pub omega: f64,
    /// Molecular weight, kg/mol.
    pub mw: f64,
    /// Critical molar volume, m³/mol.
    pub vc: f64,
    pub cp_ig_coeffs: [f64; 4],
    /// Reference enthalpy at (T_ref, P_ref), J/mol.
    #[serde(default)]
    pub h_ref: f64,
    /// Reference entropy at (T_ref, P_ref), J/(mol·K).
    #[serde(default)]
    pub s_ref: f64,
}

impl ComponentSpec {
    pub fn validate(&self) -> Result<(), ThermoError> {
        let bad = |what: &str| {
            Err(ThermoError::InvalidComponent(format!(
                "{}: {what} must be positive",
                self.name
            )))
        };
        if !(self.tc > 0.0) {
            return bad("Tc");
        }
        if !(self.pc > 0.0) {
            return bad("Pc");
        }
        if !(self.mw > 0.0) {
            return bad("Mw");
        }
        if !(self.vc > 0.0) {
            return bad("Vc");
        }
        Ok(())
    }
}

/// Fluid description: the hydrocarbon mixture (oil/gas phases) plus the
/// pure-water component of the immiscible water phase.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MixtureSpec {
    pub components: Vec<ComponentSpec>,
    /// Binary interaction parameters, symmetric with zero diagonal.
    pub kij: Vec<Vec<f64>>,
    pub water: ComponentSpec,
}

impl MixtureSpec {
    pub fn n_components(&self) -> usize {
        self.components.len()
    }

    pub fn validate(&self) -> Result<(), ThermoError> {
        if self.components.is_empty() {
            return Err(ThermoError::InvalidComponent(
                "at least one component required".into(),
            ));
        }
        for c in &self.components {
            c.validate()?;
        }
        self.water.validate()?;
        let nc = self.components.len();
        if self.kij.len() != nc || self.kij.iter().any(|row| row.len() != nc) {
            return Err(ThermoError::InvalidComponent(format!(
                "kij must be {nc}x{nc}"
            )));
        }
        for i in 0..nc {
            if self.kij[i][i] != 0.0 {
                return Err(ThermoError::InvalidComponent(
                    "kij diagonal must be zero".into(),
                ));
            }
            for j in 0..nc {
                if (self.kij[i][j] - self.kij[j][i]).abs() > 1e-14 {
                    return Err(ThermoError::InvalidComponent("kij must be symmetric".into()));
                }
            }
        }
        Ok(())
    }

    /// EOS over the hydrocarbon components.
    pub fn hydrocarbon_eos(&self) -> PrEos {
        PrEos::new(&self.components, Some(&self.kij))
    }

    /// EOS for the pure-water phase.
    pub fn water_eos(&self) -> PrEos {
        PrEos::new(std::slice::from_ref(&self.water), None)
    }
}

/// Rock thermodynamic parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RockSpec {
    /// Rock compressibility (1/V^r)(∂V^r/∂P), 1/Pa.
    pub cr: f64,
    /// Rock specific heat capacity, J/(kg·K).
    pub cp_rock: f64,
    /// Rock mass density, kg/m³.
    pub rho_rock: f64,
    /// Rock thermal conductivity, W/(m·K).
    pub kt_rock: f64,
    /// Porosity.
    pub phi: f64,
}

impl RockSpec {
    pub fn validate(&self) -> Result<(), ThermoError> {
        if !(self.phi > 0.0 && self.phi < 1.0) {
            return Err(ThermoError::InvalidComponent("phi must be in (0,1)".into()));
        }
        if !(self.cp_rock > 0.0) || self.kt_rock < 0.0 || self.cr < 0.0 {
            return Err(ThermoError::InvalidComponent(
                "rock cp must be > 0, kT and cr >= 0".into(),
            ));
        }
        Ok(())
    }
}

/// Hydrocarbon and water EOS instances built once from a [`MixtureSpec`].
#[derive(Debug, Clone)]
pub struct FluidEos {
    pub hc: PrEos,
    pub water: PrEos,
    pub nc: usize,
}

impl FluidEos {
    pub fn new(mix: &MixtureSpec) -> Self {
        FluidEos {
            hc: mix.hydrocarbon_eos(),
            water: mix.water_eos(),
            nc: mix.n_components(),
        }
    }

    /// Chemical potentials μ_k = ∂G/∂n_k of a hydrocarbon phase, J/mol.
    pub fn chemical_potentials(
        &self,
        t: f64,
        p: f64,
        n: &[f64],
        hint: RootHint,
    ) -> Result<Vec<f64>, ThermoError> {
        let props = self.hc.phase_props(t, p, n, hint)?;
        let (_, g, _) = derived_potentials(&props.enthalpy, &props.entropy, &props.volume, t, p);
        Ok((0..self.nc).map(|k| g.grad[2 + k]).collect())
    }
}

/// U = H − PV, G = H − TS, A = U − TS, with derivatives combined by the
/// product rule (P and T are independent variables of the evaluations).
pub fn derived_potentials(
    h: &PhaseEval,
    s: &PhaseEval,
    v: &PhaseEval,
    t: f64,
    p: f64,
) -> (PhaseEval, PhaseEval, PhaseEval) {
    let m = h.dim();
    let t_node = Eval::variable(m, 0, t);
    let p_node = Eval::variable(m, 1, p);
    let u = h - &p_node * v;
    let g = h - &t_node * s;
    let a = &u - &t_node * s;
    (u, g, a)
}
