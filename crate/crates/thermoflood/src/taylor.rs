//! Second-order forward propagation of values, gradients, and Hessians.
//!
//! Thermodynamic functions are assembled as compositions of arithmetic
//! operations and elementary functions on [`PhaseEval`] nodes. Each node
//! carries the exact value, gradient, and Hessian with respect to a fixed
//! set of independent variables (for a fluid phase: temperature, pressure,
//! and the phase mole numbers). Chain rules are applied in closed form, so
//! derivatives are exact to rounding; nothing here is a finite difference.
//!
//! Molar volume is the one implicitly defined quantity (a root of the
//! Peng-Robinson cubic); its derivatives are produced by implicit
//! differentiation in `thermo::pr` and injected as a ready-made node via
//! [`PhaseEval::from_parts`].

use nalgebra::{DMatrix, DVector};
use std::ops::{Add, Div, Mul, Neg, Sub};

/// Value, gradient, and Hessian of a scalar function of m variables.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseEval {
    pub value: f64,
    pub grad: DVector<f64>,
    pub hess: DMatrix<f64>,
}

impl PhaseEval {
    /// A constant: zero gradient and Hessian over m variables.
    pub fn constant(m: usize, value: f64) -> Self {
        PhaseEval {
            value,
            grad: DVector::zeros(m),
            hess: DMatrix::zeros(m, m),
        }
    }

    /// The idx-th independent variable with the given value.
    pub fn variable(m: usize, idx: usize, value: f64) -> Self {
        let mut grad = DVector::zeros(m);
        grad[idx] = 1.0;
        PhaseEval {
            value,
            grad,
            hess: DMatrix::zeros(m, m),
        }
    }

    pub fn from_parts(value: f64, grad: DVector<f64>, hess: DMatrix<f64>) -> Self {
        debug_assert_eq!(grad.len(), hess.nrows());
        debug_assert_eq!(hess.nrows(), hess.ncols());
        PhaseEval { value, grad, hess }
    }

    /// Number of independent variables.
    pub fn dim(&self) -> usize {
        self.grad.len()
    }

    /// Composition with a scalar function: f, f', f'' evaluated at `self.value`.
    pub fn chain(&self, f: f64, fp: f64, fpp: f64) -> Self {
        let mut hess = &self.hess * fp;
        hess.ger(fpp, &self.grad, &self.grad, 1.0);
        PhaseEval {
            value: f,
            grad: &self.grad * fp,
            hess,
        }
    }

    pub fn ln(&self) -> Self {
        let v = self.value;
        self.chain(v.ln(), 1.0 / v, -1.0 / (v * v))
    }

    pub fn exp(&self) -> Self {
        let e = self.value.exp();
        self.chain(e, e, e)
    }

    pub fn sqrt(&self) -> Self {
        let s = self.value.sqrt();
        self.chain(s, 0.5 / s, -0.25 / (s * self.value))
    }

    pub fn recip(&self) -> Self {
        let v = self.value;
        self.chain(1.0 / v, -1.0 / (v * v), 2.0 / (v * v * v))
    }

    pub fn powf(&self, p: f64) -> Self {
        let v = self.value;
        self.chain(v.powf(p), p * v.powf(p - 1.0), p * (p - 1.0) * v.powf(p - 2.0))
    }

    pub fn powi(&self, p: i32) -> Self {
        let v = self.value;
        self.chain(
            v.powi(p),
            f64::from(p) * v.powi(p - 1),
            f64::from(p * (p - 1)) * v.powi(p - 2),
        )
    }

    /// self * other with the exact product rule.
    fn mul_eval(&self, other: &PhaseEval) -> PhaseEval {
        let mut hess = &self.hess * other.value;
        hess += &other.hess * self.value;
        hess.ger(1.0, &self.grad, &other.grad, 1.0);
        hess.ger(1.0, &other.grad, &self.grad, 1.0);
        PhaseEval {
            value: self.value * other.value,
            grad: &self.grad * other.value + &other.grad * self.value,
            hess,
        }
    }

    /// self / other via the exact quotient rule.
    fn div_eval(&self, other: &PhaseEval) -> PhaseEval {
        let g = other.value;
        let ratio = self.value / g;
        let grad = (&self.grad - &other.grad * ratio) / g;
        // H = (H_f - ratio*H_g - g_out*g_gᵀ - g_g*g_outᵀ) / g, with g_out the quotient gradient
        let mut hess = &self.hess - &other.hess * ratio;
        hess.ger(-1.0, &grad, &other.grad, 1.0);
        hess.ger(-1.0, &other.grad, &grad, 1.0);
        hess /= g;
        PhaseEval {
            value: ratio,
            grad,
            hess,
        }
    }
}

macro_rules! impl_binary {
    ($trait:ident, $method:ident, $body:expr) => {
        impl $trait<&PhaseEval> for &PhaseEval {
            type Output = PhaseEval;
            fn $method(self, rhs: &PhaseEval) -> PhaseEval {
                let f: fn(&PhaseEval, &PhaseEval) -> PhaseEval = $body;
                f(self, rhs)
            }
        }
        impl $trait<PhaseEval> for PhaseEval {
            type Output = PhaseEval;
            fn $method(self, rhs: PhaseEval) -> PhaseEval {
                (&self).$method(&rhs)
            }
        }
        impl $trait<&PhaseEval> for PhaseEval {
            type Output = PhaseEval;
            fn $method(self, rhs: &PhaseEval) -> PhaseEval {
                (&self).$method(rhs)
            }
        }
        impl $trait<PhaseEval> for &PhaseEval {
            type Output = PhaseEval;
            fn $method(self, rhs: PhaseEval) -> PhaseEval {
                self.$method(&rhs)
            }
        }
    };
}

impl_binary!(Add, add, |a, b| PhaseEval {
    value: a.value + b.value,
    grad: &a.grad + &b.grad,
    hess: &a.hess + &b.hess,
});
impl_binary!(Sub, sub, |a, b| PhaseEval {
    value: a.value - b.value,
    grad: &a.grad - &b.grad,
    hess: &a.hess - &b.hess,
});
impl_binary!(Mul, mul, |a, b| a.mul_eval(b));
impl_binary!(Div, div, |a, b| a.div_eval(b));

impl Mul<f64> for &PhaseEval {
    type Output = PhaseEval;
    fn mul(self, s: f64) -> PhaseEval {
        PhaseEval {
            value: self.value * s,
            grad: &self.grad * s,
            hess: &self.hess * s,
        }
    }
}
impl Mul<f64> for PhaseEval {
    type Output = PhaseEval;
    fn mul(self, s: f64) -> PhaseEval {
        (&self) * s
    }
}
impl Mul<&PhaseEval> for f64 {
    type Output = PhaseEval;
    fn mul(self, e: &PhaseEval) -> PhaseEval {
        e * self
    }
}
impl Mul<PhaseEval> for f64 {
    type Output = PhaseEval;
    fn mul(self, e: PhaseEval) -> PhaseEval {
        &e * self
    }
}
impl Div<f64> for &PhaseEval {
    type Output = PhaseEval;
    fn div(self, s: f64) -> PhaseEval {
        self * (1.0 / s)
    }
}
impl Div<f64> for PhaseEval {
    type Output = PhaseEval;
    fn div(self, s: f64) -> PhaseEval {
        (&self) * (1.0 / s)
    }
}
impl Add<f64> for &PhaseEval {
    type Output = PhaseEval;
    fn add(self, s: f64) -> PhaseEval {
        PhaseEval {
            value: self.value + s,
            grad: self.grad.clone(),
            hess: self.hess.clone(),
        }
    }
}
impl Add<f64> for PhaseEval {
    type Output = PhaseEval;
    fn add(mut self, s: f64) -> PhaseEval {
        self.value += s;
        self
    }
}
impl Sub<f64> for &PhaseEval {
    type Output = PhaseEval;
    fn sub(self, s: f64) -> PhaseEval {
        self + (-s)
    }
}
impl Sub<f64> for PhaseEval {
    type Output = PhaseEval;
    fn sub(self, s: f64) -> PhaseEval {
        self + (-s)
    }
}
impl Neg for &PhaseEval {
    type Output = PhaseEval;
    fn neg(self) -> PhaseEval {
        self * -1.0
    }
}
impl Neg for PhaseEval {
    type Output = PhaseEval;
    fn neg(self) -> PhaseEval {
        &self * -1.0
    }
}

/// Value and gradient only — for closure models (relative permeability,
/// viscosity, flux coefficients) that are differentiated once.
#[derive(Debug, Clone, PartialEq)]
pub struct Deriv1 {
    pub value: f64,
    pub grad: DVector<f64>,
}

impl Deriv1 {
    pub fn constant(m: usize, value: f64) -> Self {
        Deriv1 {
            value,
            grad: DVector::zeros(m),
        }
    }

    pub fn variable(m: usize, idx: usize, value: f64) -> Self {
        let mut grad = DVector::zeros(m);
        grad[idx] = 1.0;
        Deriv1 { value, grad }
    }

    /// First-order view of a second-order node.
    pub fn from_eval(e: &PhaseEval) -> Self {
        Deriv1 {
            value: e.value,
            grad: e.grad.clone(),
        }
    }

    pub fn dim(&self) -> usize {
        self.grad.len()
    }

    pub fn chain(&self, f: f64, fp: f64) -> Self {
        Deriv1 {
            value: f,
            grad: &self.grad * fp,
        }
    }

    pub fn powf(&self, p: f64) -> Self {
        let v = self.value;
        self.chain(v.powf(p), p * v.powf(p - 1.0))
    }

    pub fn powi(&self, p: i32) -> Self {
        let v = self.value;
        self.chain(v.powi(p), f64::from(p) * v.powi(p - 1))
    }

    pub fn exp(&self) -> Self {
        let e = self.value.exp();
        self.chain(e, e)
    }

    pub fn ln(&self) -> Self {
        self.chain(self.value.ln(), 1.0 / self.value)
    }

    pub fn sqrt(&self) -> Self {
        let s = self.value.sqrt();
        self.chain(s, 0.5 / s)
    }
}

macro_rules! impl_binary_d1 {
    ($trait:ident, $method:ident, $body:expr) => {
        impl $trait<&Deriv1> for &Deriv1 {
            type Output = Deriv1;
            fn $method(self, rhs: &Deriv1) -> Deriv1 {
                let f: fn(&Deriv1, &Deriv1) -> Deriv1 = $body;
                f(self, rhs)
            }
        }
        impl $trait<Deriv1> for Deriv1 {
            type Output = Deriv1;
            fn $method(self, rhs: Deriv1) -> Deriv1 {
                (&self).$method(&rhs)
            }
        }
        impl $trait<&Deriv1> for Deriv1 {
            type Output = Deriv1;
            fn $method(self, rhs: &Deriv1) -> Deriv1 {
                (&self).$method(rhs)
            }
        }
        impl $trait<Deriv1> for &Deriv1 {
            type Output = Deriv1;
            fn $method(self, rhs: Deriv1) -> Deriv1 {
                self.$method(&rhs)
            }
        }
    };
}

impl_binary_d1!(Add, add, |a, b| Deriv1 {
    value: a.value + b.value,
    grad: &a.grad + &b.grad,
});
impl_binary_d1!(Sub, sub, |a, b| Deriv1 {
    value: a.value - b.value,
    grad: &a.grad - &b.grad,
});
impl_binary_d1!(Mul, mul, |a, b| Deriv1 {
    value: a.value * b.value,
    grad: &a.grad * b.value + &b.grad * a.value,
});
impl_binary_d1!(Div, div, |a, b| {
    let ratio = a.value / b.value;
    Deriv1 {
        value: ratio,
        grad: (&a.grad - &b.grad * ratio) / b.value,
    }
});

impl Mul<f64> for &Deriv1 {
    type Output = Deriv1;
    fn mul(self, s: f64) -> Deriv1 {
        Deriv1 {
            value: self.value * s,
            grad: &self.grad * s,
        }
    }
}
impl Mul<f64> for Deriv1 {
    type Output = Deriv1;
    fn mul(self, s: f64) -> Deriv1 {
        (&self) * s
    }
}
impl Mul<&Deriv1> for f64 {
    type Output = Deriv1;
    fn mul(self, e: &Deriv1) -> Deriv1 {
        e * self
    }
}
impl Div<f64> for &Deriv1 {
    type Output = Deriv1;
    fn div(self, s: f64) -> Deriv1 {
        self * (1.0 / s)
    }
}
impl Div<f64> for Deriv1 {
    type Output = Deriv1;
    fn div(self, s: f64) -> Deriv1 {
        (&self) * (1.0 / s)
    }
}
impl Add<f64> for &Deriv1 {
    type Output = Deriv1;
    fn add(self, s: f64) -> Deriv1 {
        Deriv1 {
            value: self.value + s,
            grad: self.grad.clone(),
        }
    }
}
impl Add<f64> for Deriv1 {
    type Output = Deriv1;
    fn add(mut self, s: f64) -> Deriv1 {
        self.value += s;
        self
    }
}
impl Sub<f64> for &Deriv1 {
    type Output = Deriv1;
    fn sub(self, s: f64) -> Deriv1 {
        self + (-s)
    }
}
impl Sub<f64> for Deriv1 {
    type Output = Deriv1;
    fn sub(self, s: f64) -> Deriv1 {
        self + (-s)
    }
}
impl Neg for &Deriv1 {
    type Output = Deriv1;
    fn neg(self) -> Deriv1 {
        self * -1.0
    }
}
impl Neg for Deriv1 {
    type Output = Deriv1;
    fn neg(self) -> Deriv1 {
        &self * -1.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // central finite differences of a scalar closure, for self-checking the chain rules
    fn fd_grad(f: &dyn Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
        (0..x.len())
            .map(|i| {
                let mut xp = x.to_vec();
                let mut xm = x.to_vec();
                xp[i] += h;
                xm[i] -= h;
                (f(&xp) - f(&xm)) / (2.0 * h)
            })
            .collect()
    }

    fn test_expr(x: &[f64]) -> f64 {
        let (a, b, c) = (x[0], x[1], x[2]);
        (a * b + c).ln() * (a / c).sqrt() - b * b / (a + c) + (0.3 * b).exp()
    }

    fn test_expr_eval(x: &[f64]) -> PhaseEval {
        let a = PhaseEval::variable(3, 0, x[0]);
        let b = PhaseEval::variable(3, 1, x[1]);
        let c = PhaseEval::variable(3, 2, x[2]);
        (&a * &b + &c).ln() * (&a / &c).sqrt() - &b * &b / (&a + &c) + (&b * 0.3).exp()
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let x = [1.3, 0.7, 2.1];
        let eval = test_expr_eval(&x);
        assert!((eval.value - test_expr(&x)).abs() < 1e-14);
        let fd = fd_grad(&|x| test_expr(x), &x, 1e-6);
        for i in 0..3 {
            assert!(
                (eval.grad[i] - fd[i]).abs() <= 1e-8 * fd[i].abs().max(1.0),
                "grad[{i}]: {} vs fd {}",
                eval.grad[i],
                fd[i]
            );
        }
    }

    #[test]
    fn hessian_matches_finite_differences_of_gradient() {
        let x = [1.3, 0.7, 2.1];
        let eval = test_expr_eval(&x);
        let h = 1e-6;
        for j in 0..3 {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[j] += h;
            xm[j] -= h;
            let gp = test_expr_eval(&xp).grad;
            let gm = test_expr_eval(&xm).grad;
            for i in 0..3 {
                let fd = (gp[i] - gm[i]) / (2.0 * h);
                assert!(
                    (eval.hess[(i, j)] - fd).abs() <= 1e-7 * fd.abs().max(1.0),
                    "hess[({i},{j})]: {} vs fd {}",
                    eval.hess[(i, j)],
                    fd
                );
            }
        }
    }

    #[test]
    fn hessian_is_symmetric() {
        let eval = test_expr_eval(&[0.9, 1.4, 0.6]);
        for i in 0..3 {
            for j in 0..3 {
                assert!((eval.hess[(i, j)] - eval.hess[(j, i)]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn powi_and_powf_agree() {
        let a = PhaseEval::variable(1, 0, 1.37);
        let pi = a.powi(3);
        let pf = a.powf(3.0);
        assert!((pi.value - pf.value).abs() < 1e-13);
        assert!((pi.grad[0] - pf.grad[0]).abs() < 1e-12);
        assert!((pi.hess[(0, 0)] - pf.hess[(0, 0)]).abs() < 1e-12);
    }
}
