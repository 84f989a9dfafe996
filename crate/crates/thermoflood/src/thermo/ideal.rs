//! Ideal-gas enthalpy and entropy from integrated cp(T) polynomials.
//!
//! cp(T) = c0 + c1·T + c2·T² + c3·T³ (J/(mol·K)), integrated from the
//! reference state (T_REF, P_REF) where h_ref and s_ref apply.

use crate::constants::{P_REF, R_GAS, T_REF};
use crate::taylor::PhaseEval as Eval;
use nalgebra::{DMatrix, DVector};

/// ∫cp dT from T_REF to t: value, d/dT (= cp), d²/dT² (= cp').
fn h_poly(t: f64, c: &[f64; 4]) -> (f64, f64, f64) {
    let tr = T_REF;
    let value = c[0] * (t - tr)
        + c[1] / 2.0 * (t * t - tr * tr)
        + c[2] / 3.0 * (t * t * t - tr * tr * tr)
        + c[3] / 4.0 * (t * t * t * t - tr * tr * tr * tr);
    let cp = c[0] + c[1] * t + c[2] * t * t + c[3] * t * t * t;
    let dcp = c[1] + 2.0 * c[2] * t + 3.0 * c[3] * t * t;
    (value, cp, dcp)
}

/// ∫cp/T dT from T_REF to t: value, d/dT, d²/dT².
fn s_poly(t: f64, c: &[f64; 4]) -> (f64, f64, f64) {
    let tr = T_REF;
    let value = c[0] * (t / tr).ln()
        + c[1] * (t - tr)
        + c[2] / 2.0 * (t * t - tr * tr)
        + c[3] / 3.0 * (t * t * t - tr * tr * tr);
    let d = c[0] / t + c[1] + c[2] * t + c[3] * t * t;
    let dd = -c[0] / (t * t) + c[2] + 2.0 * c[3] * t;
    (value, d, dd)
}

/// H_ig = Σ_k n_k·(h_ref_k + ∫cp_k dT), extensive.
pub fn enthalpy_node(m: usize, t: f64, n: &[f64], cp: &[[f64; 4]], h_ref: &[f64]) -> Eval {
    let mut value = 0.0;
    let mut grad = DVector::zeros(m);
    let mut hess = DMatrix::zeros(m, m);
    for (k, nk) in n.iter().enumerate() {
        let (h, dh, ddh) = h_poly(t, &cp[k]);
        let hk = h_ref[k] + h;
        value += nk * hk;
        grad[0] += nk * dh;
        grad[2 + k] = hk;
        hess[(0, 0)] += nk * ddh;
        hess[(0, 2 + k)] = dh;
        hess[(2 + k, 0)] = dh;
    }
    Eval::from_parts(value, grad, hess)
}

/// S_ig = Σ_k n_k·(s_ref_k + ∫cp_k/T dT) − R·Σ_k n_k·ln(x_k·P/P_REF).
///
/// The mixing part is assembled as −R·Σ n_k ln n_k + R·N·ln N − R·N·ln(P/P_REF)
/// with N = Σ n_k. Components at exactly zero moles contribute no
/// n·ln n term (the 0·ln 0 limit); their singular infinite-dilution
/// derivative is omitted.
pub fn entropy_node(
    m: usize,
    t: f64,
    p: f64,
    n: &[f64],
    ntot: f64,
    cp: &[[f64; 4]],
    s_ref: &[f64],
) -> Eval {
    let mut value = 0.0;
    let mut grad = DVector::zeros(m);
    let mut hess = DMatrix::zeros(m, m);
    for (k, &nk) in n.iter().enumerate() {
        let (s, ds, dds) = s_poly(t, &cp[k]);
        let sk = s_ref[k] + s;
        value += nk * sk;
        grad[0] += nk * ds;
        grad[2 + k] += sk;
        hess[(0, 0)] += nk * dds;
        hess[(0, 2 + k)] += ds;
        hess[(2 + k, 0)] += ds;
        if nk > 0.0 {
            value -= R_GAS * nk * nk.ln();
            grad[2 + k] -= R_GAS * (nk.ln() + 1.0);
            hess[(2 + k, 2 + k)] -= R_GAS / nk;
        }
    }
    let ln_p = (p / P_REF).ln();
    let ln_n = ntot.ln();
    value += R_GAS * ntot * (ln_n - ln_p);
    grad[1] -= R_GAS * ntot / p;
    hess[(1, 1)] += R_GAS * ntot / (p * p);
    for j in 0..n.len() {
        grad[2 + j] += R_GAS * (ln_n + 1.0 - ln_p);
        hess[(1, 2 + j)] -= R_GAS / p;
        hess[(2 + j, 1)] -= R_GAS / p;
        for l in 0..n.len() {
            hess[(2 + j, 2 + l)] += R_GAS / ntot;
        }
    }
    Eval::from_parts(value, grad, hess)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn entropy_node_gradient_matches_fd() {
        let cp = vec![[19.2, 0.05, 1.2e-5, -1.1e-8], [5.4, 0.178, -6.9e-5, 8.7e-9]];
        let s_ref = vec![0.0, 0.0];
        let f = |t: f64, p: f64, n: &[f64]| {
            entropy_node(4, t, p, n, n.iter().sum(), &cp, &s_ref).value
        };
        let (t, p, n) = (350.0, 2.0e6, [1.3, 0.6]);
        let node = entropy_node(4, t, p, &n, n.iter().sum(), &cp, &s_ref);
        let h = 1e-5;
        let fd_t = (f(t + t * h, p, &n) - f(t - t * h, p, &n)) / (2.0 * t * h);
        let fd_p = (f(t, p + p * h, &n) - f(t, p - p * h, &n)) / (2.0 * p * h);
        assert!((node.grad[0] - fd_t).abs() < 1e-6 * fd_t.abs());
        assert!((node.grad[1] - fd_p).abs() < 1e-6 * fd_p.abs());
        for k in 0..2 {
            let mut np = n;
            let mut nm = n;
            np[k] += h;
            nm[k] -= h;
            let fd = (f(t, p, &np) - f(t, p, &nm)) / (2.0 * h);
            assert!(
                (node.grad[2 + k] - fd).abs() < 1e-6 * fd.abs().max(1.0),
                "slot {k}"
            );
        }
    }

    #[test]
    fn entropy_hessian_matches_fd_of_gradient() {
        let cp = vec![[19.2, 0.05, 1.2e-5, -1.1e-8], [5.4, 0.178, -6.9e-5, 8.7e-9]];
        let s_ref = vec![0.0, 0.0];
        let node_at = |t: f64, p: f64, n: &[f64]| {
            entropy_node(4, t, p, n, n.iter().sum(), &cp, &s_ref)
        };
        let (t, p, n) = (350.0, 2.0e6, [1.3, 0.6]);
        let node = node_at(t, p, &n);
        let h = 1e-4;
        // perturb n_0 and compare gradient columns
        let mut np = n;
        let mut nm = n;
        np[0] += h;
        nm[0] -= h;
        let gp = node_at(t, p, &np).grad;
        let gm = node_at(t, p, &nm).grad;
        for i in 0..4 {
            let fd = (gp[i] - gm[i]) / (2.0 * h);
            assert!(
                (node.hess[(i, 2)] - fd).abs() <= 1e-5 * fd.abs().max(1e-3),
                "hess[({i},2)] = {} vs fd {}",
                node.hess[(i, 2)],
                fd
            );
        }
    }
}
