//! Closure models: saturations, Stone's model II relative permeabilities on
//! modified Brooks-Corey hypothetical systems, Lohrenz-Bray-Clark oil/gas
//! viscosity, and pressure-dependent water viscosity.
//!
//! Saturation- and relperm-type quantities carry gradients over the cell
//! algebraic layout `[T, P, n_w, n_o(1..nc), n_g(1..nc)]` (length 3+2·nc);
//! phase viscosities carry gradients over the phase-local `[T, P, n_phase]`.
//!
//! The hard clamps of the Brooks-Corey expressions ("set to zero or one")
//! are replaced by C¹ quadratic blends of width [`CLAMP_BAND`] in normalized
//! saturation so that Newton and adjoint sweeps see differentiable closures;
//! the hard clamp is recovered as the band shrinks.

use crate::constants::P_REF;
use crate::taylor::{Deriv1, PhaseEval};
use crate::thermo::{ComponentSpec, MixtureSpec, RootHint, ThermoError};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

/// Width of the C¹ clamp blend in normalized-saturation units.
pub const CLAMP_BAND: f64 = 1e-3;

/// Width of the C¹ positive-part floor applied to the Stone II oil relperm.
pub const KRO_FLOOR_BAND: f64 = 1e-6;

/// Stone's model II parameters (Brooks-Corey endpoints and exponents).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RelPermSpec {
    /// Connate water / gas saturations.
    pub sc_w: f64,
    pub sc_g: f64,
    /// Maximum water / gas saturations (normalization upper residuals).
    pub smax_w: f64,
    pub smax_g: f64,
    /// End-point relative permeabilities.
    pub kr0_w: f64,
    pub kr0_ow: f64,
    pub kr0_g: f64,
    pub kr0_og: f64,
    /// Corey exponents.
    pub m_w: f64,
    pub m_ow: f64,
    pub m_g: f64,
    pub m_og: f64,
    /// Stone II parameter k_r^c.
    pub kr_c: f64,
}

impl RelPermSpec {
    pub fn validate(&self) -> Result<(), String> {
        let in01 = [
            self.sc_w, self.sc_g, self.smax_w, self.smax_g, self.kr0_w, self.kr0_ow, self.kr0_g,
            self.kr0_og,
        ];
        if in01.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err("saturation endpoints and kr0 must lie in [0,1]".into());
        }
        if [self.m_w, self.m_ow, self.m_g, self.m_og].iter().any(|m| *m < 1.0) {
            return Err("Corey exponents must be >= 1".into());
        }
        if self.kr_c <= 0.0 {
            return Err("kr_c must be positive".into());
        }
        if self.sc_w + self.smax_w >= 1.0 || self.sc_g + self.smax_g >= 1.0 {
            return Err("Sc + Smax must be < 1 per phase".into());
        }
        Ok(())
    }
}

/// Lohrenz-Bray-Clark polynomial coefficients and the water viscosity model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ViscositySpec {
    /// Dimensionless polynomial a(ρ_r) coefficients a0..a4.
    pub lbc_coeffs: [f64; 5],
    /// Water viscosity at P_REF, Pa·s.
    pub mu_w_ref: f64,
    /// Water viscosibility (1/μ)(∂μ/∂P), 1/Pa.
    pub c_mu_w: f64,
}

impl ViscositySpec {
    pub fn validate(&self) -> Result<(), String> {
        if self.lbc_coeffs.iter().any(|a| !a.is_finite()) {
            return Err("LBC coefficients must be finite".into());
        }
        if !(self.mu_w_ref > 0.0) {
            return Err("mu_w_ref must be positive".into());
        }
        Ok(())
    }
}

/// Jossi-Stiel-Thodos coefficients used by the original correlation.
pub const LBC_DEFAULT_COEFFS: [f64; 5] = [0.1023, 0.023364, 0.058533, -0.040758, 0.0093324];

// ---------------------------------------------------------------- smoothing

/// C¹ clamp of x into [0,1]: identity inside, constant outside, quadratic
/// blends of half-width `band` around 0 and 1. Returns (value, slope).
pub fn smooth_clamp01(x: f64, band: f64) -> (f64, f64) {
    if x <= -band {
        (0.0, 0.0)
    } else if x < band {
        let s = x + band;
        (s * s / (4.0 * band), s / (2.0 * band))
    } else if x <= 1.0 - band {
        (x, 1.0)
    } else if x < 1.0 + band {
        let s = 1.0 + band - x;
        (1.0 - s * s / (4.0 * band), s / (2.0 * band))
    } else {
        (1.0, 0.0)
    }
}

/// C¹ positive part: 0 below −band, identity above +band, quadratic blend
/// between. Returns (value, slope).
pub fn smooth_pos(x: f64, band: f64) -> (f64, f64) {
    if x <= -band {
        (0.0, 0.0)
    } else if x >= band {
        (x, 1.0)
    } else {
        let s = x + band;
        (s * s / (4.0 * band), s / (2.0 * band))
    }
}

// -------------------------------------------------------------- saturations

/// Scatter a phase-local gradient (T, P, n_phase) into the cell layout
/// (T, P, n_w, n_o, n_g). Phase 0 is water, 1 oil, 2 gas.
pub fn scatter_phase_grad(e: &PhaseEval, phase: usize, nc: usize) -> Deriv1 {
    let ny = 3 + 2 * nc;
    let mut grad = DVector::zeros(ny);
    grad[0] = e.grad[0];
    grad[1] = e.grad[1];
    match phase {
        0 => grad[2] = e.grad[2],
        1 => {
            for k in 0..nc {
                grad[3 + k] = e.grad[2 + k];
            }
        }
        _ => {
            for k in 0..nc {
                grad[3 + nc + k] = e.grad[2 + k];
            }
        }
    }
    Deriv1 { value: e.value, grad }
}

/// Saturations Ŝ^α = V^α / (V^w + V^o + V^g) from precomputed phase volume
/// evaluations, in the cell layout. The gas saturation is formed as
/// 1 − Ŝ^w − Ŝ^o so the three sum to one exactly.
pub fn saturations_from_volumes(
    vw: &PhaseEval,
    vo: &PhaseEval,
    vg: &PhaseEval,
    nc: usize,
) -> [Deriv1; 3] {
    let vw = scatter_phase_grad(vw, 0, nc);
    let vo = scatter_phase_grad(vo, 1, nc);
    let vg = scatter_phase_grad(vg, 2, nc);
    let total = &vw + &vo + &vg;
    let sw = &vw / &total;
    let so = &vo / &total;
    let sg = -(&sw) - &so + 1.0;
    [sw, so, sg]
}

/// Saturations with derivatives, evaluating the property stack at
/// (T, P, n_w, n_o, n_g). Water and oil use the liquid-like root, gas the
/// vapor-like root.
pub fn saturations(
    mix: &MixtureSpec,
    t: f64,
    p: f64,
    n_w: f64,
    n_o: &[f64],
    n_g: &[f64],
) -> Result<[Deriv1; 3], ThermoError> {
    let hc = mix.hydrocarbon_eos();
    let wat = mix.water_eos();
    let vw = wat.phase_props(t, p, &[n_w], RootHint::LiquidLike)?.volume;
    let vo = hc.phase_props(t, p, n_o, RootHint::LiquidLike)?.volume;
    let vg = hc.phase_props(t, p, n_g, RootHint::VaporLike)?.volume;
    Ok(saturations_from_volumes(&vw, &vo, &vg, mix.n_components()))
}

// ------------------------------------------------------------------ relperm

/// Stone's model II relative permeabilities (k_r^w, k_r^o, k_r^g) from
/// saturations in the cell layout.
pub fn stone2_relperm(spec: &RelPermSpec, sats: &[Deriv1; 3]) -> [Deriv1; 3] {
    let [sw, _, sg] = sats;

    let sw_norm_raw = (sw - spec.sc_w) / (1.0 - spec.sc_w - spec.smax_w);
    let sg_norm_raw = (sg - spec.sc_g) / (1.0 - spec.sc_g - spec.smax_g);
    let (swv, swd) = smooth_clamp01(sw_norm_raw.value, CLAMP_BAND);
    let (sgv, sgd) = smooth_clamp01(sg_norm_raw.value, CLAMP_BAND);
    let sw_norm = sw_norm_raw.chain(swv, swd);
    let sg_norm = sg_norm_raw.chain(sgv, sgd);

    let kr_w = sw_norm.powf(spec.m_w) * spec.kr0_w;
    let kr_ow = (-(&sw_norm) + 1.0).powf(spec.m_ow) * spec.kr0_ow;
    let kr_g = sg_norm.powf(spec.m_g) * spec.kr0_g;
    let kr_og = (-(&sg_norm) + 1.0).powf(spec.m_og) * spec.kr0_og;

    let kc = spec.kr_c;
    let kr_o_raw = ((&kr_ow / kc + &kr_w) * (&kr_og / kc + &kr_g) - (&kr_w + &kr_g)) * kc;
    let (kov, kod) = smooth_pos(kr_o_raw.value, KRO_FLOOR_BAND);
    let kr_o = kr_o_raw.chain(kov, kod);

    [kr_w, kr_o, kr_g]
}

/// Stone II relative permeabilities evaluated from (T, P, phase moles).
pub fn stone2_relperm_at(
    mix: &MixtureSpec,
    spec: &RelPermSpec,
    t: f64,
    p: f64,
    n_w: f64,
    n_o: &[f64],
    n_g: &[f64],
) -> Result<[Deriv1; 3], ThermoError> {
    let sats = saturations(mix, t, p, n_w, n_o, n_g)?;
    Ok(stone2_relperm(spec, &sats))
}

// ---------------------------------------------------------------- viscosity

/// Lohrenz-Bray-Clark internal unit conversions, kept in one place.
///
/// The correlation's constants assume T in K, molecular weight in g/mol,
/// critical pressure in atm, and viscosity in cP; inputs arrive in SI and
/// the result leaves in Pa·s.
fn lbc_tau(tc_k: f64, mw_kg_per_mol: f64, pc_pa: f64) -> f64 {
    let mw_g = mw_kg_per_mol * 1e3;
    let pc_atm = pc_pa / 101_325.0;
    tc_k.powf(1.0 / 6.0) * mw_g.powf(-0.5) * pc_atm.powf(-2.0 / 3.0)
}

const CENTIPOISE: f64 = 1e-3;

/// Pure-component dilute-gas reference viscosity, cP, with its T-derivative.
/// The two branches do not coincide exactly at T_r = 1.5; states pinned at
/// the branch point use the ≥ branch.
fn pure_reference_viscosity(t: f64, comp: &ComponentSpec) -> (f64, f64) {
    let tau = lbc_tau(comp.tc, comp.mw, comp.pc);
    let tr = t / comp.tc;
    if tr < 1.5 {
        let v = 34e-5 * tr.powf(0.94) / tau;
        (v, 0.94 * v / t)
    } else {
        let base = 4.58 * tr - 1.67;
        let v = 17.78e-5 * base.powf(5.0 / 8.0) / tau;
        (v, v * (5.0 / 8.0) * 4.58 / (base * comp.tc))
    }
}

/// Size of the branch discontinuity of the pure-component reference
/// viscosity at T_r = 1.5, cP (diagnostic; the correlation itself jumps).
pub fn reference_viscosity_branch_jump(comp: &ComponentSpec) -> f64 {
    let tau = lbc_tau(comp.tc, comp.mw, comp.pc);
    let below = 34e-5 * 1.5f64.powf(0.94) / tau;
    let above = 17.78e-5 * (4.58f64 * 1.5 - 1.67).powf(5.0 / 8.0) / tau;
    above - below
}

/// LBC viscosity of an oil/gas phase, Pa·s, with gradient over the
/// phase-local layout (T, P, n). `volume` is the phase volume evaluation at
/// the same state (only its value and first derivatives are used).
pub fn lbc_viscosity_with_volume(
    comps: &[ComponentSpec],
    coeffs: &[f64; 5],
    t: f64,
    n: &[f64],
    volume: &PhaseEval,
) -> Deriv1 {
    let nc = comps.len();
    let m = 2 + nc;
    let ntot: f64 = n.iter().sum();

    let n_node = {
        let mut grad = DVector::zeros(m);
        for k in 0..nc {
            grad[2 + k] = 1.0;
        }
        Deriv1 { value: ntot, grad }
    };
    let mole_avg = |per_comp: &dyn Fn(&ComponentSpec) -> f64| -> Deriv1 {
        let mut value = 0.0;
        let mut grad = DVector::zeros(m);
        for (k, c) in comps.iter().enumerate() {
            let ck = per_comp(c);
            value += n[k] * ck;
            grad[2 + k] = ck;
        }
        Deriv1 { value, grad } / &n_node
    };

    // pseudo-critical mixture properties (mole-fraction weighted)
    let tc = mole_avg(&|c| c.tc);
    let pc = mole_avg(&|c| c.pc);
    let vc = mole_avg(&|c| c.vc);
    let mw = mole_avg(&|c| c.mw);
    let tau_mix = {
        let mw_g = &mw * 1e3;
        let pc_atm = &pc / 101_325.0;
        tc.powf(1.0 / 6.0) * mw_g.powf(-0.5) * pc_atm.powf(-2.0 / 3.0)
    };

    // reduced density ρ_r = (N/V)·Vc (dimensionless in SI directly)
    let v_node = Deriv1::from_eval(volume);
    let rho_r = &n_node / &v_node * &vc;

    // fourth-degree polynomial in reduced density
    let mut a_poly = Deriv1::constant(m, coeffs[0]);
    let mut rho_pow = Deriv1::constant(m, 1.0);
    for c in coeffs.iter().skip(1) {
        rho_pow = rho_pow * &rho_r;
        a_poly = a_poly + &rho_pow * *c;
    }

    // dilute-gas mixture reference viscosity
    let mut num = Deriv1::constant(m, 0.0);
    let mut den = Deriv1::constant(m, 0.0);
    let t_node = Deriv1::variable(m, 0, t);
    for (k, c) in comps.iter().enumerate() {
        let sqrt_mw_g = (c.mw * 1e3).sqrt();
        let (mu_k, dmu_k) = pure_reference_viscosity(t, c);
        let mu_node = t_node.chain(mu_k, dmu_k);
        let nk_node = Deriv1::variable(m, 2 + k, n[k]);
        num = num + &nk_node * &mu_node * sqrt_mw_g;
        den = den + nk_node * sqrt_mw_g;
    }
    let mu_bar = num / den;

    let mu_cp = mu_bar + (a_poly.powi(4) - 1e-4) / tau_mix;
    mu_cp * CENTIPOISE
}

/// LBC viscosity evaluating the phase volume internally.
pub fn lbc_viscosity(
    mix: &MixtureSpec,
    spec: &ViscositySpec,
    t: f64,
    p: f64,
    n: &[f64],
    hint: RootHint,
) -> Result<Deriv1, ThermoError> {
    let eos = mix.hydrocarbon_eos();
    let volume = eos.phase_props(t, p, n, hint)?.volume;
    Ok(lbc_viscosity_with_volume(
        &mix.components,
        &spec.lbc_coeffs,
        t,
        n,
        &volume,
    ))
}

/// Water viscosity μ^w = μ_ref·exp(c_μ·(P − P_REF)), Pa·s, and dμ/dP.
pub fn water_viscosity(spec: &ViscositySpec, p: f64) -> (f64, f64) {
    let mu = spec.mu_w_ref * (spec.c_mu_w * (p - P_REF)).exp();
    (mu, spec.c_mu_w * mu)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smooth_clamp_endpoints_and_interior() {
        let band = 1e-3;
        assert_eq!(smooth_clamp01(-0.5, band), (0.0, 0.0));
        assert_eq!(smooth_clamp01(0.5, band), (0.5, 1.0));
        assert_eq!(smooth_clamp01(1.7, band), (1.0, 0.0));
        // value/slope continuity entering the blend
        let (v, d) = smooth_clamp01(band, band);
        assert!((v - band).abs() < 1e-15 && (d - 1.0).abs() < 1e-15);
    }

    #[test]
    fn water_viscosity_reference_and_constant_cases() {
        let spec = ViscositySpec {
            lbc_coeffs: LBC_DEFAULT_COEFFS,
            mu_w_ref: 5.5e-4,
            c_mu_w: 4.0e-10,
        };
        assert_eq!(water_viscosity(&spec, P_REF).0, 5.5e-4);
        let zero = ViscositySpec { c_mu_w: 0.0, ..spec };
        assert_eq!(water_viscosity(&zero, 1.0e7).0, 5.5e-4);
        assert_eq!(water_viscosity(&zero, 1.0e7).1, 0.0);
    }

    #[test]
    fn water_viscosity_derivative_matches_fd() {
        let spec = ViscositySpec {
            lbc_coeffs: LBC_DEFAULT_COEFFS,
            mu_w_ref: 5.5e-4,
            c_mu_w: 4.0e-10,
        };
        let p = 8.0e6;
        let h = 1.0;
        let fd = (water_viscosity(&spec, p + h).0 - water_viscosity(&spec, p - h).0) / (2.0 * h);
        let (_, d) = water_viscosity(&spec, p);
        assert!((d - fd).abs() <= 1e-8 * fd.abs());
    }
}
