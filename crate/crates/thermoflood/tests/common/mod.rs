//! Shared test fixtures and independent oracles.
//!
//! Everything in here is deliberately written against textbook formulas and
//! generic numerics (companion-matrix eigenvalues, central differences,
//! mole-fraction-basis property expressions) rather than the library's own
//! evaluation path, so it can serve as an oracle for that path.

#![allow(dead_code)]

use nalgebra::DMatrix;
use thermoflood::thermo::{ComponentSpec, MixtureSpec, RockSpec};

pub const R: f64 = 8.31446261815324;

// ---------------------------------------------------------------- fixtures

pub fn methane() -> ComponentSpec {
    ComponentSpec {
        name: "methane".into(),
        tc: 190.56,
        pc: 4.599e6,
        omega: 0.0115,
        mw: 0.016043,
        vc: 98.6e-6,
        cp_ig_coeffs: [19.25, 0.05213, 1.197e-5, -1.132e-8],
        h_ref: 0.0,
        s_ref: 0.0,
    }
}

pub fn ethane() -> ComponentSpec {
    ComponentSpec {
        name: "ethane".into(),
        tc: 305.32,
        pc: 4.872e6,
        omega: 0.0995,
        mw: 0.030070,
        vc: 145.5e-6,
        cp_ig_coeffs: [5.409, 0.1781, -6.938e-5, 8.713e-9],
        h_ref: 0.0,
        s_ref: 0.0,
    }
}

pub fn propane() -> ComponentSpec {
    ComponentSpec {
        name: "propane".into(),
        tc: 369.83,
        pc: 4.248e6,
        omega: 0.1523,
        mw: 0.044096,
        vc: 200.0e-6,
        cp_ig_coeffs: [-4.224, 0.3063, -1.586e-4, 3.215e-8],
        h_ref: 0.0,
        s_ref: 0.0,
    }
}

pub fn n_heptane() -> ComponentSpec {
    ComponentSpec {
        name: "n-heptane".into(),
        tc: 540.2,
        pc: 2.74e6,
        omega: 0.3495,
        mw: 0.100204,
        vc: 428.0e-6,
        cp_ig_coeffs: [-5.146, 0.6762, -3.651e-4, 7.658e-8],
        h_ref: 0.0,
        s_ref: 0.0,
    }
}

pub fn hydrogen_sulfide() -> ComponentSpec {
    ComponentSpec {
        name: "hydrogen sulfide".into(),
        tc: 373.53,
        pc: 8.963e6,
        omega: 0.0942,
        mw: 0.034081,
        vc: 98.5e-6,
        cp_ig_coeffs: [31.94, 0.001436, 2.432e-5, -1.176e-8],
        h_ref: 0.0,
        s_ref: 0.0,
    }
}

pub fn water() -> ComponentSpec {
    ComponentSpec {
        name: "water".into(),
        tc: 647.10,
        pc: 22.064e6,
        omega: 0.3449,
        mw: 0.018015,
        vc: 55.9e-6,
        cp_ig_coeffs: [32.24, 0.001924, 1.055e-5, -3.596e-9],
        h_ref: 0.0,
        s_ref: 0.0,
    }
}

/// Five-component gas-condensate-style mixture with H2S interaction
/// parameters, plus pure water.
pub fn reservoir_mixture() -> MixtureSpec {
    let comps = vec![
        methane(),
        ethane(),
        propane(),
        n_heptane(),
        hydrogen_sulfide(),
    ];
    let nc = comps.len();
    let mut kij = vec![vec![0.0; nc]; nc];
    let h2s = 4;
    for (k, v) in [(0, 0.08), (1, 0.085), (2, 0.08), (3, 0.06)] {
        kij[k][h2s] = v;
        kij[h2s][k] = v;
    }
    MixtureSpec {
        components: comps,
        kij,
        water: water(),
    }
}

pub fn binary_mixture() -> MixtureSpec {
    MixtureSpec {
        components: vec![methane(), n_heptane()],
        kij: vec![vec![0.0; 2]; 2],
        water: water(),
    }
}

pub fn sandstone() -> RockSpec {
    RockSpec {
        cr: 0.0,
        cp_rock: 920.0,
        rho_rock: 2650.0,
        kt_rock: 2.5,
        phi: 0.25,
    }
}

pub fn default_relperm() -> thermoflood::fluid_props::RelPermSpec {
    thermoflood::fluid_props::RelPermSpec {
        sc_w: 0.1,
        sc_g: 0.05,
        smax_w: 0.15,
        smax_g: 0.1,
        kr0_w: 0.5,
        kr0_ow: 0.8,
        kr0_g: 0.7,
        kr0_og: 0.8,
        m_w: 2.0,
        m_ow: 2.0,
        m_g: 2.0,
        m_og: 2.0,
        kr_c: 0.8,
    }
}

pub fn default_viscosity() -> thermoflood::fluid_props::ViscositySpec {
    thermoflood::fluid_props::ViscositySpec {
        lbc_coeffs: thermoflood::fluid_props::LBC_DEFAULT_COEFFS,
        mu_w_ref: 5.5e-4,
        c_mu_w: 4.0e-10,
    }
}

/// Overall hydrocarbon composition that stays two-phase over 9-12 MPa at
/// 323-363 K (verified by flash probing).
pub fn overall_composition() -> Vec<f64> {
    vec![0.55, 0.06, 0.05, 0.29, 0.05]
}

pub mod model {
    use super::*;
    use thermoflood::grid::StructuredGrid;
    use thermoflood::reservoir::{ReservoirModel, SimMode, SurroundingsSpec, WellSpec};
    use thermoflood::sim::{self, InitialConditions};
    use thermoflood::thermo::FluidEos;

    /// Small uniform-grid model with the five-component mixture.
    pub fn build(
        nx: usize,
        ny: usize,
        nz: usize,
        mode: SimMode,
        wells: Vec<WellSpec>,
        perm_md: f64,
    ) -> ReservoirModel {
        let mix = reservoir_mixture();
        let eos = FluidEos::new(&mix);
        let grid = StructuredGrid::uniform(
            nx,
            ny,
            nz,
            (10.0, 10.0, 10.0),
            perm_md * 9.869233e-16,
            2.5,
        );
        let connections = grid.build_connections();
        let n_cells = grid.n_cells();
        ReservoirModel {
            mode,
            mix,
            eos,
            rock: sandstone(),
            grid,
            connections,
            wells,
            surroundings: SurroundingsSpec::adiabatic(n_cells, 323.15),
            relperm: default_relperm(),
            viscosity: default_viscosity(),
            t_iso: 323.15,
            flash_scalings: Vec::new(),
        }
    }

    /// Uniform initial conditions.
    pub fn uniform_init(model: &ReservoirModel, t: f64, p: f64, sw: f64) -> InitialConditions {
        InitialConditions {
            t: vec![t; model.n_cells()],
            p: vec![p; model.n_cells()],
            composition: overall_composition(),
            sw,
        }
    }

    /// Consistent (x, y, z) for uniform initial conditions.
    pub fn init_state(
        model: &mut ReservoirModel,
        t: f64,
        p: f64,
        sw: f64,
    ) -> (
        nalgebra::DVector<f64>,
        nalgebra::DVector<f64>,
        nalgebra::DVector<f64>,
    ) {
        let init = uniform_init(model, t, p, sw);
        sim::consistent_initial_state(model, &init).expect("initial state")
    }
}

// ------------------------------------------------- finite-difference oracle

/// Central-difference gradient with per-variable relative step.
pub fn fd_gradient(f: &dyn Fn(&[f64]) -> f64, x: &[f64], rel: f64) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let h = rel * x[i].abs().max(1e-30);
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[i] += h;
            xm[i] -= h;
            (f(&xp) - f(&xm)) / (2.0 * h)
        })
        .collect()
}

/// Central-difference derivative of a vector-valued function along variable i.
pub fn fd_column(f: &dyn Fn(&[f64]) -> Vec<f64>, x: &[f64], i: usize, rel: f64) -> Vec<f64> {
    let h = rel * x[i].abs().max(1e-30);
    let mut xp = x.to_vec();
    let mut xm = x.to_vec();
    xp[i] += h;
    xm[i] -= h;
    let fp = f(&xp);
    let fm = f(&xm);
    fp.iter().zip(&fm).map(|(p, m)| (p - m) / (2.0 * h)).collect()
}

pub fn assert_close(got: f64, want: f64, rel: f64, what: &str) {
    let scale = want.abs().max(got.abs());
    assert!(
        (got - want).abs() <= rel * scale.max(1e-300),
        "{what}: got {got}, want {want} (rel err {:.3e} > {rel:.1e})",
        (got - want).abs() / scale.max(1e-300)
    );
}

// ------------------------------------------------------ cubic-root oracle

/// All real roots of Z³ + c2·Z² + c1·Z + c0 via companion-matrix
/// eigenvalues, ascending.
pub fn cubic_roots_oracle(c2: f64, c1: f64, c0: f64) -> Vec<f64> {
    let companion = DMatrix::from_row_slice(3, 3, &[-c2, -c1, -c0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
    let eigs = companion.complex_eigenvalues();
    let mut roots: Vec<f64> = eigs
        .iter()
        .filter(|e| e.im.abs() <= 1e-9 * (1.0 + e.re.abs()))
        .map(|e| e.re)
        .collect();
    roots.sort_by(|a, b| a.partial_cmp(b).unwrap());
    roots
}

// ---------------------------------------- value-only Peng-Robinson oracle
//
// Textbook molar-basis departure functions; da/dT by central differences so
// that no analytic derivative code is shared with the library.

pub mod naive_pr {
    use super::*;

    fn pure_a(c: &ComponentSpec, t: f64) -> f64 {
        let ac = 0.457_235_529 * R * R * c.tc * c.tc / c.pc;
        let m = 0.37464 + 1.54226 * c.omega - 0.26992 * c.omega * c.omega;
        let alpha = 1.0 + m * (1.0 - (t / c.tc).sqrt());
        ac * alpha * alpha
    }

    pub fn mix_a(comps: &[ComponentSpec], kij: &[Vec<f64>], t: f64, x: &[f64]) -> f64 {
        let n = comps.len();
        let a: Vec<f64> = comps.iter().map(|c| pure_a(c, t)).collect();
        let mut out = 0.0;
        for i in 0..n {
            for j in 0..n {
                out += x[i] * x[j] * (1.0 - kij[i][j]) * (a[i] * a[j]).sqrt();
            }
        }
        out
    }

    pub fn mix_b(comps: &[ComponentSpec], x: &[f64]) -> f64 {
        comps
            .iter()
            .zip(x)
            .map(|(c, xi)| xi * 0.077_796_074 * R * c.tc / c.pc)
            .sum()
    }

    /// Compressibility factors of all physical roots (Z > B), ascending.
    pub fn z_factors(comps: &[ComponentSpec], kij: &[Vec<f64>], t: f64, p: f64, x: &[f64]) -> Vec<f64> {
        let a = mix_a(comps, kij, t, x) * p / (R * R * t * t);
        let b = mix_b(comps, x) * p / (R * t);
        cubic_roots_oracle(
            -(1.0 - b),
            a - 3.0 * b * b - 2.0 * b,
            -(a * b - b * b - b * b * b),
        )
        .into_iter()
        .filter(|z| *z > b)
        .collect()
    }

    pub fn molar_volume(
        comps: &[ComponentSpec],
        kij: &[Vec<f64>],
        t: f64,
        p: f64,
        x: &[f64],
        liquid: bool,
    ) -> Option<f64> {
        let zs = z_factors(comps, kij, t, p, x);
        let z = if liquid { zs.first() } else { zs.last() };
        z.map(|z| z * R * t / p)
    }

    fn h_poly(c: &[f64; 4], t: f64) -> f64 {
        let tr = 298.15;
        c[0] * (t - tr)
            + c[1] / 2.0 * (t * t - tr * tr)
            + c[2] / 3.0 * (t * t * t - tr * tr * tr)
            + c[3] / 4.0 * (t * t * t * t - tr * tr * tr * tr)
    }

    fn s_poly(c: &[f64; 4], t: f64) -> f64 {
        let tr = 298.15;
        c[0] * (t / tr).ln()
            + c[1] * (t - tr)
            + c[2] / 2.0 * (t * t - tr * tr)
            + c[3] / 3.0 * (t * t * t - tr * tr * tr)
    }

    /// Total enthalpy (J) of a phase of n moles; None when no physical root.
    pub fn enthalpy(
        comps: &[ComponentSpec],
        kij: &[Vec<f64>],
        t: f64,
        p: f64,
        n: &[f64],
        liquid: bool,
    ) -> Option<f64> {
        let ntot: f64 = n.iter().sum();
        let x: Vec<f64> = n.iter().map(|nk| nk / ntot).collect();
        let v = molar_volume(comps, kij, t, p, &x, liquid)?;
        let z = p * v / (R * t);
        let a = mix_a(comps, kij, t, &x);
        let dt = 1e-4 * t;
        let dadt = (mix_a(comps, kij, t + dt, &x) - mix_a(comps, kij, t - dt, &x)) / (2.0 * dt);
        let b = mix_b(comps, &x);
        let s2 = 2.0_f64.sqrt();
        let lterm = ((v + (1.0 + s2) * b) / (v + (1.0 - s2) * b)).ln();
        let h_dep = R * t * (z - 1.0) + (t * dadt - a) / (2.0 * s2 * b) * lterm;
        let h_ig: f64 = comps
            .iter()
            .zip(n)
            .map(|(c, nk)| nk * (c.h_ref + h_poly(&c.cp_ig_coeffs, t)))
            .sum();
        Some(h_ig + ntot * h_dep)
    }

    /// Total entropy (J/K) of a phase of n moles.
    pub fn entropy(
        comps: &[ComponentSpec],
        kij: &[Vec<f64>],
        t: f64,
        p: f64,
        n: &[f64],
        liquid: bool,
    ) -> Option<f64> {
        let ntot: f64 = n.iter().sum();
        let x: Vec<f64> = n.iter().map(|nk| nk / ntot).collect();
        let v = molar_volume(comps, kij, t, p, &x, liquid)?;
        let z = p * v / (R * t);
        let b = mix_b(comps, &x);
        let bcoef = b * p / (R * t);
        let dt = 1e-4 * t;
        let dadt = (mix_a(comps, kij, t + dt, &x) - mix_a(comps, kij, t - dt, &x)) / (2.0 * dt);
        let s2 = 2.0_f64.sqrt();
        let lterm = ((v + (1.0 + s2) * b) / (v + (1.0 - s2) * b)).ln();
        let s_dep = R * (z - bcoef).ln() + dadt / (2.0 * s2 * b) * lterm;
        let p_ref = 101_325.0;
        let s_ig: f64 = comps
            .iter()
            .zip(n.iter().zip(&x))
            .map(|(c, (nk, xk))| {
                let mixing = if *nk > 0.0 {
                    -R * (xk * p / p_ref).ln()
                } else {
                    0.0
                };
                nk * (c.s_ref + s_poly(&c.cp_ig_coeffs, t) + mixing)
            })
            .sum();
        Some(s_ig + ntot * s_dep)
    }

    /// Total internal energy (J).
    pub fn internal_energy(
        comps: &[ComponentSpec],
        kij: &[Vec<f64>],
        t: f64,
        p: f64,
        n: &[f64],
        liquid: bool,
    ) -> Option<f64> {
        let ntot: f64 = n.iter().sum();
        let x: Vec<f64> = n.iter().map(|nk| nk / ntot).collect();
        let v = molar_volume(comps, kij, t, p, &x, liquid)?;
        Some(enthalpy(comps, kij, t, p, n, liquid)? - p * ntot * v)
    }

    /// Total Helmholtz energy (J).
    pub fn helmholtz(
        comps: &[ComponentSpec],
        kij: &[Vec<f64>],
        t: f64,
        p: f64,
        n: &[f64],
        liquid: bool,
    ) -> Option<f64> {
        Some(internal_energy(comps, kij, t, p, n, liquid)? - t * entropy(comps, kij, t, p, n, liquid)?)
    }
}

// ------------------------------------------------- brute-force flash oracle
//
// Enumeration-based lower bounds for the flash objectives: for each
// candidate split of the components between oil and gas, match the flash
// constraints by bisection on (P) or (T, P) using only value-level oracle
// properties, then evaluate the objective. Rock-free fluid systems
// (water + oil + gas) only.

pub mod brute_force {
    use super::naive_pr;
    use super::*;

    /// Total fluid volume at (t, p) for a fixed split; None if any phase
    /// root is missing.
    fn total_volume(
        mix: &MixtureSpec,
        t: f64,
        p: f64,
        n_w: f64,
        n_o: &[f64],
        n_g: &[f64],
    ) -> Option<f64> {
        let wkij = vec![vec![0.0]];
        let wcomp = [mix.water.clone()];
        let vw = naive_pr::molar_volume(&wcomp, &wkij, t, p, &[1.0], true)? * n_w;
        let no_tot: f64 = n_o.iter().sum();
        let ng_tot: f64 = n_g.iter().sum();
        let xo: Vec<f64> = n_o.iter().map(|n| n / no_tot).collect();
        let xg: Vec<f64> = n_g.iter().map(|n| n / ng_tot).collect();
        let vo = naive_pr::molar_volume(&mix.components, &mix.kij, t, p, &xo, true)? * no_tot;
        let vg = naive_pr::molar_volume(&mix.components, &mix.kij, t, p, &xg, false)? * ng_tot;
        Some(vw + vo + vg)
    }

    /// Pressure matching the volume constraint at fixed split (bisection on
    /// the decreasing V(P)). V(P) jumps where the selected root switches
    /// branch; a bisection landing in such a gap leaves the constraint
    /// unsatisfied, so the match is verified before being accepted.
    pub fn match_pressure(
        mix: &MixtureSpec,
        t: f64,
        v: f64,
        n_w: f64,
        n_o: &[f64],
        n_g: &[f64],
    ) -> Option<f64> {
        let (mut lo, mut hi) = (1.0e4, 1.0e9);
        let v_lo = total_volume(mix, t, lo, n_w, n_o, n_g)?;
        let v_hi = total_volume(mix, t, hi, n_w, n_o, n_g)?;
        if v_lo < v || v_hi > v {
            return None;
        }
        for _ in 0..90 {
            let mid = 0.5 * (lo + hi);
            match total_volume(mix, t, mid, n_w, n_o, n_g) {
                Some(vm) if vm > v => lo = mid,
                Some(_) => hi = mid,
                None => return None,
            }
        }
        let p = 0.5 * (lo + hi);
        let v_got = total_volume(mix, t, p, n_w, n_o, n_g)?;
        if (v_got - v).abs() > 1e-7 * v {
            return None;
        }
        Some(p)
    }

    /// Total entropy / Helmholtz / internal energy at (t, p) for a split.
    pub fn split_totals(
        mix: &MixtureSpec,
        t: f64,
        p: f64,
        n_w: f64,
        n_o: &[f64],
        n_g: &[f64],
    ) -> Option<(f64, f64, f64)> {
        let wkij = vec![vec![0.0]];
        let wcomp = [mix.water.clone()];
        let s = naive_pr::entropy(&wcomp, &wkij, t, p, &[n_w], true)?
            + naive_pr::entropy(&mix.components, &mix.kij, t, p, n_o, true)?
            + naive_pr::entropy(&mix.components, &mix.kij, t, p, n_g, false)?;
        let u = naive_pr::internal_energy(&wcomp, &wkij, t, p, &[n_w], true)?
            + naive_pr::internal_energy(&mix.components, &mix.kij, t, p, n_o, true)?
            + naive_pr::internal_energy(&mix.components, &mix.kij, t, p, n_g, false)?;
        let a = naive_pr::helmholtz(&wcomp, &wkij, t, p, &[n_w], true)?
            + naive_pr::helmholtz(&mix.components, &mix.kij, t, p, n_o, true)?
            + naive_pr::helmholtz(&mix.components, &mix.kij, t, p, n_g, false)?;
        Some((s, a, u))
    }

    /// (T, P) matching the energy and volume constraints at fixed split:
    /// outer bisection on T (U is increasing in T at matched P), inner
    /// bisection on P.
    pub fn match_temperature_pressure(
        mix: &MixtureSpec,
        u: f64,
        v: f64,
        n_w: f64,
        n_o: &[f64],
        n_g: &[f64],
    ) -> Option<(f64, f64)> {
        let u_at = |t: f64| -> Option<f64> {
            let p = match_pressure(mix, t, v, n_w, n_o, n_g)?;
            split_totals(mix, t, p, n_w, n_o, n_g).map(|(_, _, u)| u)
        };
        let (mut lo, mut hi) = (220.0, 660.0);
        if u_at(lo)? > u || u_at(hi)? < u {
            return None;
        }
        for _ in 0..70 {
            let mid = 0.5 * (lo + hi);
            match u_at(mid) {
                Some(um) if um < u => lo = mid,
                Some(_) => hi = mid,
                None => return None,
            }
        }
        let t = 0.5 * (lo + hi);
        let p = match_pressure(mix, t, v, n_w, n_o, n_g)?;
        // root-branch switches can leave the energy constraint unmatched:
        // only verified-feasible candidates may compete with the solver
        let (_, _, u_got) = split_totals(mix, t, p, n_w, n_o, n_g)?;
        if (u_got - u).abs() > 1e-6 * u.abs().max(1e3) {
            return None;
        }
        Some((t, p))
    }

    /// Best (maximum) total entropy over an n×n grid of two-component
    /// splits for the UV problem.
    pub fn best_entropy_uv(
        mix: &MixtureSpec,
        u: f64,
        v: f64,
        n_w: f64,
        n: &[f64],
        steps: usize,
    ) -> f64 {
        assert_eq!(n.len(), 2);
        let mut best = f64::NEG_INFINITY;
        for i in 0..=steps {
            for j in 0..=steps {
                let f = [i as f64 / steps as f64, j as f64 / steps as f64];
                let eps = 1e-9;
                let n_g = [
                    (n[0] * f[0]).clamp(eps * n[0], (1.0 - eps) * n[0]),
                    (n[1] * f[1]).clamp(eps * n[1], (1.0 - eps) * n[1]),
                ];
                let n_o = [n[0] - n_g[0], n[1] - n_g[1]];
                if let Some((t, p)) = match_temperature_pressure(mix, u, v, n_w, &n_o, &n_g) {
                    if let Some((s, _, _)) = split_totals(mix, t, p, n_w, &n_o, &n_g) {
                        if s > best {
                            best = s;
                        }
                    }
                }
            }
        }
        best
    }

    /// Best (minimum) total Helmholtz energy over an n×n grid of splits for
    /// the VT problem.
    pub fn best_helmholtz_vt(
        mix: &MixtureSpec,
        t: f64,
        v: f64,
        n_w: f64,
        n: &[f64],
        steps: usize,
    ) -> f64 {
        assert_eq!(n.len(), 2);
        let mut best = f64::INFINITY;
        for i in 0..=steps {
            for j in 0..=steps {
                let f = [i as f64 / steps as f64, j as f64 / steps as f64];
                let eps = 1e-9;
                let n_g = [
                    (n[0] * f[0]).clamp(eps * n[0], (1.0 - eps) * n[0]),
                    (n[1] * f[1]).clamp(eps * n[1], (1.0 - eps) * n[1]),
                ];
                let n_o = [n[0] - n_g[0], n[1] - n_g[1]];
                if let Some(p) = match_pressure(mix, t, v, n_w, &n_o, &n_g) {
                    if let Some((_, a, _)) = split_totals(mix, t, p, n_w, &n_o, &n_g) {
                        if a < best {
                            best = a;
                        }
                    }
                }
            }
        }
        best
    }
}
