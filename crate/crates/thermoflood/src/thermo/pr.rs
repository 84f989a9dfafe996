//! Peng-Robinson phase property evaluation.
//!
//! A phase is evaluated at (T, P, n) with n the phase mole vector; the
//! independent-variable layout of every returned gradient/Hessian is
//! `[T, P, n_1, ..., n_nc]`. The volume root is solved numerically from the
//! compressibility cubic and lifted to a derivative-carrying node by
//! implicit differentiation of the pressure-explicit EOS residual
//! F(T, P, n, V) = P − P_PR(T, V, n) = 0; all other properties are explicit
//! compositions on top of that node.

use super::cubic::cubic_roots;
use super::ideal;
use super::{ComponentSpec, RootHint, ThermoError};
use crate::constants::R_GAS;
use crate::taylor::PhaseEval as Eval;
use nalgebra::{DMatrix, DVector};

const SQRT2: f64 = std::f64::consts::SQRT_2;

/// Precomputed Peng-Robinson parameters for a fixed component slate.
#[derive(Debug, Clone)]
pub struct PrEos {
    nc: usize,
    /// covolume per component, m³/mol
    b: Vec<f64>,
    /// attraction: q_k(T) = q0_k − q1_k·√T with a_k = q_k², √(J·m³)/mol
    q0: Vec<f64>,
    q1: Vec<f64>,
    one_minus_kij: DMatrix<f64>,
    critical: Vec<(f64, f64, f64)>,
    cp_coeffs: Vec<[f64; 4]>,
    h_ref: Vec<f64>,
    s_ref: Vec<f64>,
}

/// Volume, enthalpy, and entropy of one phase, each with exact (T, P, n)
/// gradient and Hessian.
#[derive(Debug, Clone)]
pub struct PhaseProps {
    /// Total volume, m³.
    pub volume: Eval,
    /// Total enthalpy, J.
    pub enthalpy: Eval,
    /// Total entropy, J/K.
    pub entropy: Eval,
}

impl PrEos {
    pub fn new(components: &[ComponentSpec], kij: Option<&Vec<Vec<f64>>>) -> Self {
        let nc = components.len();
        let mut b = Vec::with_capacity(nc);
        let mut q0 = Vec::with_capacity(nc);
        let mut q1 = Vec::with_capacity(nc);
        for c in components {
            b.push(0.077_796_074 * R_GAS * c.tc / c.pc);
            let ac = 0.457_235_529 * R_GAS * R_GAS * c.tc * c.tc / c.pc;
            let m = 0.37464 + 1.54226 * c.omega - 0.26992 * c.omega * c.omega;
            let s = ac.sqrt();
            q0.push(s * (1.0 + m));
            q1.push(s * m / c.tc.sqrt());
        }
        let mut omk = DMatrix::from_element(nc, nc, 1.0);
        if let Some(k) = kij {
            for i in 0..nc {
                for j in 0..nc {
                    omk[(i, j)] = 1.0 - k[i][j];
                }
            }
        }
        PrEos {
            nc,
            b,
            q0,
            q1,
            one_minus_kij: omk,
            critical: components.iter().map(|c| (c.tc, c.pc, c.omega)).collect(),
            cp_coeffs: components.iter().map(|c| c.cp_ig_coeffs).collect(),
            h_ref: components.iter().map(|c| c.h_ref).collect(),
            s_ref: components.iter().map(|c| c.s_ref).collect(),
        }
    }

    pub fn n_components(&self) -> usize {
        self.nc
    }

    /// (Tc, Pc, ω) per component, for correlation-style initialization.
    pub fn components_tc_pc_omega(&self) -> &[(f64, f64, f64)] {
        &self.critical
    }

    /// Crude Σ n_k·cp_k(t), J/K — initialization estimates only.
    pub fn heat_capacity_estimate(&self, t: f64, n: &[f64]) -> f64 {
        n.iter()
            .zip(&self.cp_coeffs)
            .map(|(nk, c)| nk * (c[0] + c[1] * t + c[2] * t * t + c[3] * t * t * t))
            .sum()
    }

    /// Molar covolume b(x) = Σ x_k b_k, m³/mol.
    pub fn covolume(&self, x: &[f64]) -> f64 {
        x.iter().zip(&self.b).map(|(xi, bi)| xi * bi).sum()
    }

    /// Molar attraction a(T, x) = Σ x_i x_j (1−k_ij) q_i(T) q_j(T).
    pub fn attraction(&self, t: f64, x: &[f64]) -> f64 {
        let st = t.sqrt();
        let q: Vec<f64> = (0..self.nc).map(|k| self.q0[k] - self.q1[k] * st).collect();
        let mut a = 0.0;
        for i in 0..self.nc {
            for j in 0..self.nc {
                a += x[i] * x[j] * self.one_minus_kij[(i, j)] * q[i] * q[j];
            }
        }
        a
    }

    /// Molar volume of the selected root, m³/mol.
    ///
    /// The returned root satisfies the pressure-explicit residual to
    /// rounding; callers relying on the contract |P − P_PR(v)| < 1e-6·P get
    /// ample margin.
    pub fn molar_volume(
        &self,
        t: f64,
        p: f64,
        x: &[f64],
        hint: RootHint,
    ) -> Result<f64, ThermoError> {
        let a = self.attraction(t, x);
        let b = self.covolume(x);
        let rt = R_GAS * t;
        let acoef = a * p / (rt * rt);
        let bcoef = b * p / rt;
        let roots = cubic_roots(
            -(1.0 - bcoef),
            acoef - 3.0 * bcoef * bcoef - 2.0 * bcoef,
            -(acoef * bcoef - bcoef * bcoef - bcoef * bcoef * bcoef),
        );
        let physical: Vec<f64> = roots.into_iter().filter(|z| *z > bcoef).collect();
        let z = match (physical.first(), physical.last()) {
            (Some(lo), Some(hi)) => match hint {
                RootHint::LiquidLike => *lo,
                RootHint::VaporLike => *hi,
            },
            _ => return Err(ThermoError::NoPhysicalRoot { t, p }),
        };
        Ok(z * rt / p)
    }

    /// Evaluate volume, enthalpy, and entropy of a phase with derivatives.
    ///
    /// `n` is the phase mole vector (mol); components at exactly zero moles
    /// contribute no ideal-mixing entropy term (the 0·ln 0 limit) and their
    /// singular dilution derivative is omitted.
    pub fn phase_props(
        &self,
        t: f64,
        p: f64,
        n: &[f64],
        hint: RootHint,
    ) -> Result<PhaseProps, ThermoError> {
        assert_eq!(n.len(), self.nc);
        let m = 2 + self.nc;
        let ntot: f64 = n.iter().sum();

        // per-component attraction terms and their T-derivatives
        let st = t.sqrt();
        let nc = self.nc;
        let mut q = vec![0.0; nc];
        let mut dq = vec![0.0; nc];
        let mut d2q = vec![0.0; nc];
        let mut d3q = vec![0.0; nc];
        for k in 0..nc {
            q[k] = self.q0[k] - self.q1[k] * st;
            dq[k] = -0.5 * self.q1[k] / st;
            d2q[k] = 0.25 * self.q1[k] / (st * t);
            d3q[k] = -0.375 * self.q1[k] / (st * t * t);
        }

        // extensive mixture attraction A(T,n) = Σ n_i n_j a_ij and its
        // analytic T-derivative A_T as independent nodes (A_T enters the
        // departure functions explicitly, so it needs its own derivatives)
        let a_ij = |i: usize, j: usize| self.one_minus_kij[(i, j)] * q[i] * q[j];
        let at_ij =
            |i: usize, j: usize| self.one_minus_kij[(i, j)] * (dq[i] * q[j] + q[i] * dq[j]);
        let att_ij = |i: usize, j: usize| {
            self.one_minus_kij[(i, j)] * (d2q[i] * q[j] + 2.0 * dq[i] * dq[j] + q[i] * d2q[j])
        };
        let attt_ij = |i: usize, j: usize| {
            self.one_minus_kij[(i, j)]
                * (d3q[i] * q[j] + 3.0 * (d2q[i] * dq[j] + dq[i] * d2q[j]) + q[i] * d3q[j])
        };
        let amix = quadratic_mix_node(m, n, &a_ij, &at_ij, &att_ij);
        let amix_t = quadratic_mix_node(m, n, &at_ij, &att_ij, &attt_ij);

        // extensive covolume and total moles (linear in n)
        let bmix = linear_mix_node(m, n, &self.b);
        let nnode = linear_mix_node(m, n, &vec![1.0; nc]);

        // volume root of the cubic, selected by hint
        let v_molar = self.molar_volume(t, p, &mole_fractions(n, ntot), hint)?;
        let vtot = ntot * v_molar;

        // lift V(T,P,n) by implicit differentiation of F = P − P_PR = 0
        let v_node = implicit_volume_node(m, t, p, vtot, &nnode, &bmix, &amix);

        let t_node = Eval::variable(m, 0, t);
        let p_node = Eval::variable(m, 1, p);

        // departure functions
        let c1 = 1.0 + SQRT2;
        let c2 = 1.0 - SQRT2;
        let log_term = ((&v_node + &bmix * c1) / (&v_node + &bmix * c2)).ln();
        let two_sqrt2_b = &bmix * (2.0 * SQRT2);
        let h_dep = (&p_node * &v_node - &nnode * &t_node * R_GAS)
            + (&t_node * &amix_t - &amix) / &two_sqrt2_b * &log_term;
        let s_dep = &nnode
            * ((&p_node * (&v_node - &bmix)) / (&nnode * &t_node * R_GAS)).ln()
            * R_GAS
            + &amix_t / &two_sqrt2_b * &log_term;

        let h_ig = ideal::enthalpy_node(m, t, n, &self.cp_coeffs, &self.h_ref);
        let s_ig = ideal::entropy_node(m, t, p, n, ntot, &self.cp_coeffs, &self.s_ref);

        let mut props = PhaseProps {
            volume: v_node,
            enthalpy: h_ig + h_dep,
            entropy: s_ig + s_dep,
        };
        // the Hessians are symmetric analytically; remove accumulation-order
        // rounding so downstream KKT blocks are exactly symmetric
        for e in [&mut props.volume, &mut props.enthalpy, &mut props.entropy] {
            symmetrize(e);
        }
        Ok(props)
    }
}

fn mole_fractions(n: &[f64], ntot: f64) -> Vec<f64> {
    n.iter().map(|nk| nk / ntot).collect()
}

/// Node for Σ_k n_k c_k: linear in the mole slots, no (T, P) dependence.
fn linear_mix_node(m: usize, n: &[f64], c: &[f64]) -> Eval {
    let mut grad = DVector::zeros(m);
    let mut value = 0.0;
    for (k, (nk, ck)) in n.iter().zip(c).enumerate() {
        value += nk * ck;
        grad[2 + k] = *ck;
    }
    Eval::from_parts(value, grad, DMatrix::zeros(m, m))
}

/// Node for Σ_ij n_i n_j c_ij(T), assembled from the coefficient matrix and
/// its first two T-derivatives.
fn quadratic_mix_node(
    m: usize,
    n: &[f64],
    c: &dyn Fn(usize, usize) -> f64,
    ct: &dyn Fn(usize, usize) -> f64,
    ctt: &dyn Fn(usize, usize) -> f64,
) -> Eval {
    let nc = n.len();
    let mut value = 0.0;
    let mut grad = DVector::zeros(m);
    let mut hess = DMatrix::zeros(m, m);
    for i in 0..nc {
        for j in 0..nc {
            let nn = n[i] * n[j];
            value += nn * c(i, j);
            grad[0] += nn * ct(i, j);
            hess[(0, 0)] += nn * ctt(i, j);
            hess[(2 + i, 2 + j)] += 2.0 * c(i, j);
        }
        let mut gi = 0.0;
        let mut gti = 0.0;
        for j in 0..nc {
            gi += n[j] * c(i, j);
            gti += n[j] * ct(i, j);
        }
        grad[2 + i] = 2.0 * gi;
        hess[(0, 2 + i)] = 2.0 * gti;
        hess[(2 + i, 0)] = 2.0 * gti;
    }
    Eval::from_parts(value, grad, hess)
}

/// Build the total-volume node from the solved root by implicit
/// differentiation of F(T, P, n, V) = P − NRT/(V−B) + A/(V²+2BV−B²) = 0.
///
/// First order: V_s = −F_s/F_V. Second order:
/// V_st = −(F_st + F_sV·V_t + F_tV·V_s + F_VV·V_s·V_t)/F_V.
fn implicit_volume_node(m: usize, t: f64, p: f64, vtot: f64, nnode: &Eval, bmix: &Eval, amix: &Eval) -> Eval {
    let me = m + 1;
    let t_e = Eval::variable(me, 0, t);
    let p_e = Eval::variable(me, 1, p);
    let v_e = Eval::variable(me, m, vtot);
    let n_e = embed(nnode, me);
    let b_e = embed(bmix, me);
    let a_e = embed(amix, me);

    let denom = &v_e * &v_e + &b_e * &v_e * 2.0 - &b_e * &b_e;
    let f = &p_e - (&n_e * &t_e * R_GAS) / (&v_e - &b_e) + &a_e / &denom;

    let fv = f.grad[m];
    let fvv = f.hess[(m, m)];
    let mut grad = DVector::zeros(m);
    for s in 0..m {
        grad[s] = -f.grad[s] / fv;
    }
    let mut hess = DMatrix::zeros(m, m);
    for s in 0..m {
        for tt in 0..m {
            hess[(s, tt)] = -(f.hess[(s, tt)]
                + f.hess[(s, m)] * grad[tt]
                + f.hess[(tt, m)] * grad[s]
                + fvv * grad[s] * grad[tt])
                / fv;
        }
    }
    Eval::from_parts(vtot, grad, hess)
}

fn symmetrize(e: &mut Eval) {
    let m = e.dim();
    for i in 0..m {
        for j in (i + 1)..m {
            let avg = 0.5 * (e.hess[(i, j)] + e.hess[(j, i)]);
            e.hess[(i, j)] = avg;
            e.hess[(j, i)] = avg;
        }
    }
}

fn embed(e: &Eval, me: usize) -> Eval {
    let m = e.dim();
    let mut grad = DVector::zeros(me);
    let mut hess = DMatrix::zeros(me, me);
    grad.rows_mut(0, m).copy_from(&e.grad);
    hess.view_mut((0, 0), (m, m)).copy_from(&e.hess);
    Eval::from_parts(e.value, grad, hess)
}
