//! Per-cell property bundle consumed by the flux and well assemblies.
//!
//! All gradients live on the thermal cell layout [T, P, n_w, n_o, n_g]
//! (length 3+2·nc) regardless of mode; the isothermal assembly drops the T
//! column when scattering into Jacobian blocks.

use super::ReservoirModel;
use crate::flash::PhaseBundle;
use crate::fluid_props::{
    lbc_viscosity_with_volume, saturations_from_volumes, scatter_phase_grad, stone2_relperm,
    water_viscosity,
};
use crate::taylor::Deriv1;
use nalgebra::DVector;

/// Phase index convention: 0 = water, 1 = oil, 2 = gas.
pub struct CellProps {
    pub t: f64,
    pub p: f64,
    /// Molar densities ρ^α = N^α/V^α, mol/m³.
    pub molar_density: [Deriv1; 3],
    /// Mass densities, kg/m³ (gravity term).
    pub mass_density: [Deriv1; 3],
    /// Molar enthalpies h^α = H^α/N^α, J/mol.
    pub molar_enthalpy: [Deriv1; 3],
    /// Phase mobilities k_r^α/μ^α, 1/(Pa·s).
    pub mobility: [Deriv1; 3],
    /// Oil / gas mole fractions per component.
    pub frac_o: Vec<Deriv1>,
    pub frac_g: Vec<Deriv1>,
    /// Saturations (reporting and relperm input).
    pub saturations: [Deriv1; 3],
}

impl CellProps {
    pub fn build(
        model: &ReservoirModel,
        t: f64,
        p: f64,
        n_w: f64,
        n_o: &[f64],
        n_g: &[f64],
        bundle: &PhaseBundle,
    ) -> CellProps {
        let nc = model.nc();
        let ny = 3 + 2 * nc;

        // phase totals as linear nodes
        let nw_node = Deriv1::variable(ny, 2, n_w);
        let sum_node = |offset: usize, n: &[f64]| -> Deriv1 {
            let mut grad = DVector::zeros(ny);
            for k in 0..nc {
                grad[offset + k] = 1.0;
            }
            Deriv1 {
                value: n.iter().sum(),
                grad,
            }
        };
        let no_node = sum_node(3, n_o);
        let ng_node = sum_node(3 + nc, n_g);

        // volumes scattered to the cell layout
        let vw = scatter_phase_grad(&bundle.water.volume, 0, nc);
        let vo = scatter_phase_grad(&bundle.oil.volume, 1, nc);
        let vg = scatter_phase_grad(&bundle.gas.volume, 2, nc);

        let molar_density = [&nw_node / &vw, &no_node / &vo, &ng_node / &vg];

        // phase masses are linear in moles
        let mass_node = |offset: usize, n: &[f64], mw: &dyn Fn(usize) -> f64| -> Deriv1 {
            let mut grad = DVector::zeros(ny);
            let mut value = 0.0;
            for k in 0..n.len() {
                grad[offset + k] = mw(k);
                value += n[k] * mw(k);
            }
            Deriv1 { value, grad }
        };
        let mw_water = model.mix.water.mw;
        let m_w = mass_node(2, &[n_w], &|_| mw_water);
        let m_o = mass_node(3, n_o, &|k| model.mix.components[k].mw);
        let m_g = mass_node(3 + nc, n_g, &|k| model.mix.components[k].mw);
        let mass_density = [&m_w / &vw, &m_o / &vo, &m_g / &vg];

        let hw = scatter_phase_grad(&bundle.water.enthalpy, 0, nc);
        let ho = scatter_phase_grad(&bundle.oil.enthalpy, 1, nc);
        let hg = scatter_phase_grad(&bundle.gas.enthalpy, 2, nc);
        let molar_enthalpy = [&hw / &nw_node, &ho / &no_node, &hg / &ng_node];

        let saturations =
            saturations_from_volumes(&bundle.water.volume, &bundle.oil.volume, &bundle.gas.volume, nc);
        let relperm = stone2_relperm(&model.relperm, &saturations);

        let (mu_w, dmu_w) = water_viscosity(&model.viscosity, p);
        let mu_w_node = {
            let mut grad = DVector::zeros(ny);
            grad[1] = dmu_w;
            Deriv1 { value: mu_w, grad }
        };
        let mu_o_local = lbc_viscosity_with_volume(
            &model.mix.components,
            &model.viscosity.lbc_coeffs,
            t,
            n_o,
            &bundle.oil.volume,
        );
        let mu_g_local = lbc_viscosity_with_volume(
            &model.mix.components,
            &model.viscosity.lbc_coeffs,
            t,
            n_g,
            &bundle.gas.volume,
        );
        let mu_o = scatter_deriv1(&mu_o_local, 1, nc);
        let mu_g = scatter_deriv1(&mu_g_local, 2, nc);

        let mobility = [
            &relperm[0] / &mu_w_node,
            &relperm[1] / &mu_o,
            &relperm[2] / &mu_g,
        ];

        let frac_o: Vec<Deriv1> = (0..nc)
            .map(|k| Deriv1::variable(ny, 3 + k, n_o[k]) / &no_node)
            .collect();
        let frac_g: Vec<Deriv1> = (0..nc)
            .map(|k| Deriv1::variable(ny, 3 + nc + k, n_g[k]) / &ng_node)
            .collect();

        CellProps {
            t,
            p,
            molar_density,
            mass_density,
            molar_enthalpy,
            mobility,
            frac_o,
            frac_g,
            saturations,
        }
    }
}

/// Scatter a phase-local first-order gradient (T, P, n_phase) into the
/// thermal cell layout.
fn scatter_deriv1(d: &Deriv1, phase: usize, nc: usize) -> Deriv1 {
    let ny = 3 + 2 * nc;
    let mut grad = DVector::zeros(ny);
    grad[0] = d.grad[0];
    grad[1] = d.grad[1];
    match phase {
        0 => grad[2] = d.grad[2],
        1 => {
            for k in 0..nc {
                grad[3 + k] = d.grad[2 + k];
            }
        }
        _ => {
            for k in 0..nc {
                grad[3 + nc + k] = d.grad[2 + k];
            }
        }
    }
    Deriv1 {
        value: d.value,
        grad,
    }
}
