//! Rock thermodynamics: temperature-independent exponential volume EOS with
//! constant heat capacity.
//!
//! V^r(P) = V_ref·exp(cr·(P − P_REF)), so ∂V^r/∂T = 0 identically.
//! With that EOS, dH = m·cp·dT + V·dP and dS = (m·cp/T)·dT, giving
//! H^r = m·cp·(T − T_REF) + ∫V dP and S^r = m·cp·ln(T/T_REF).
//! U^r and A^r follow from the fundamental relations.

use super::RockSpec;
use crate::constants::{P_REF, T_REF};
use crate::taylor::PhaseEval as Eval;
use nalgebra::{DMatrix, DVector};

/// Rock state functions, each a [`Eval`] over (T, P) (gradient length 2).
#[derive(Debug, Clone)]
pub struct RockProps {
    pub internal_energy: Eval,
    pub entropy: Eval,
    pub volume: Eval,
    pub enthalpy: Eval,
    pub helmholtz: Eval,
}

/// Evaluate rock properties. `v_ref` is the rock volume at (T_REF, P_REF).
pub fn rock_properties(t: f64, p: f64, rock: &RockSpec, v_ref: f64) -> RockProps {
    let m_rock = rock.rho_rock * v_ref;
    let mcp = m_rock * rock.cp_rock;
    let dp = p - P_REF;

    // volume: depends on P only
    let vr = v_ref * (rock.cr * dp).exp();
    let volume = Eval::from_parts(
        vr,
        DVector::from_column_slice(&[0.0, rock.cr * vr]),
        DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, rock.cr * rock.cr * vr]),
    );

    // pressure work ∫_{P_REF}^{P} V^r dP′ with an exact cr→0 limit
    let work = if rock.cr == 0.0 {
        Eval::from_parts(
            v_ref * dp,
            DVector::from_column_slice(&[0.0, v_ref]),
            DMatrix::zeros(2, 2),
        )
    } else {
        let val = v_ref * (rock.cr * dp).exp_m1() / rock.cr;
        Eval::from_parts(
            val,
            DVector::from_column_slice(&[0.0, vr]),
            DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, rock.cr * vr]),
        )
    };

    let thermal = Eval::from_parts(
        mcp * (t - T_REF),
        DVector::from_column_slice(&[mcp, 0.0]),
        DMatrix::zeros(2, 2),
    );
    let enthalpy = thermal + work;

    let entropy = Eval::from_parts(
        mcp * (t / T_REF).ln(),
        DVector::from_column_slice(&[mcp / t, 0.0]),
        DMatrix::from_row_slice(2, 2, &[-mcp / (t * t), 0.0, 0.0, 0.0]),
    );

    let t_node = Eval::variable(2, 0, t);
    let p_node = Eval::variable(2, 1, p);
    let internal_energy = &enthalpy - &p_node * &volume;
    let helmholtz = &internal_energy - &t_node * &entropy;

    RockProps {
        internal_energy,
        entropy,
        volume,
        enthalpy,
        helmholtz,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(cr: f64) -> RockSpec {
        RockSpec {
            cr,
            cp_rock: 920.0,
            rho_rock: 2650.0,
            kt_rock: 2.5,
            phi: 0.25,
        }
    }

    #[test]
    fn incompressible_rock_volume_is_constant() {
        let r = rock_properties(350.0, 5.0e6, &spec(0.0), 100.0);
        assert_eq!(r.volume.value, 100.0);
        assert_eq!(r.volume.grad[1], 0.0);
    }

    #[test]
    fn volume_is_temperature_independent() {
        let r = rock_properties(350.0, 5.0e6, &spec(1e-10), 100.0);
        assert_eq!(r.volume.grad[0], 0.0);
        assert_eq!(r.volume.hess[(0, 0)], 0.0);
        assert_eq!(r.volume.hess[(0, 1)], 0.0);
    }

    #[test]
    fn entropy_zero_at_reference_temperature() {
        let r = rock_properties(T_REF, 3.0e6, &spec(1e-10), 50.0);
        assert_eq!(r.entropy.value, 0.0);
    }

    #[test]
    fn enthalpy_pressure_derivative_equals_volume() {
        // dH = m cp dT + V dP for a temperature-independent volume EOS
        let r = rock_properties(330.0, 7.0e6, &spec(2e-10), 80.0);
        assert!((r.enthalpy.grad[1] - r.volume.value).abs() < 1e-10 * r.volume.value);
    }
}
