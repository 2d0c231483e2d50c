//! Synthetic systems with known behavior, used by the verification oracles:
//! a frozen diagonal system whose Lyapunov exponents are its rates, and a
//! nilpotent affine system that explicit Runge-Kutta integrates exactly.

use crate::dynamics::{DynamicalSystem, Objective};
use crate::linalg::Mat;

/// `du_i/dt = rate_i · u_i`: frozen linear dynamics with exponents `rate_i`.
#[derive(Clone, Debug)]
pub struct DiagonalLinear {
    pub rates: Vec<f64>,
}

impl DynamicalSystem for DiagonalLinear {
    fn dim(&self) -> usize {
        self.rates.len()
    }

    fn name(&self) -> &str {
        "diagonal_linear"
    }

    fn rhs(&self, u: &[f64], _s: f64, out: &mut [f64]) {
        assert_eq!(u.len(), self.rates.len());
        for (o, (r, x)) in out.iter_mut().zip(self.rates.iter().zip(u)) {
            *o = r * x;
        }
    }

    fn jacobian_apply(&self, _u: &[f64], _s: f64, v: &[f64], out: &mut [f64]) {
        for (o, (r, x)) in out.iter_mut().zip(self.rates.iter().zip(v)) {
            *o = r * x;
        }
    }

    fn jacobian_transpose_apply(&self, _u: &[f64], _s: f64, w: &[f64], out: &mut [f64]) {
        for (o, (r, x)) in out.iter_mut().zip(self.rates.iter().zip(w)) {
            *o = r * x;
        }
    }

    fn dfds(&self, _u: &[f64], _s: f64, out: &mut [f64]) {
        out.fill(0.0);
    }
}

/// `du/dt = A u + c` with strictly upper-triangular (nilpotent) `A`: the
/// trajectory is polynomial in time, so every explicit Runge-Kutta scheme of
/// order at least the nilpotency index integrates it exactly — the one case
/// where the discrete march has no discretization error at all.
#[derive(Clone, Debug)]
pub struct NilpotentAffine {
    a: Mat,
    c: Vec<f64>,
}

impl NilpotentAffine {
    pub fn new(a: Mat, c: Vec<f64>) -> Self {
        let n = c.len();
        assert_eq!(a.rows(), n);
        assert_eq!(a.cols(), n);
        for i in 0..n {
            for j in 0..=i {
                assert_eq!(a.get(i, j), 0.0, "A must be strictly upper triangular");
            }
        }
        NilpotentAffine { a, c }
    }
}

impl DynamicalSystem for NilpotentAffine {
    fn dim(&self) -> usize {
        self.c.len()
    }

    fn name(&self) -> &str {
        "nilpotent_affine"
    }

    fn rhs(&self, u: &[f64], _s: f64, out: &mut [f64]) {
        self.a.matvec(u, out);
        for (o, c) in out.iter_mut().zip(&self.c) {
            *o += c;
        }
    }

    fn jacobian_apply(&self, _u: &[f64], _s: f64, v: &[f64], out: &mut [f64]) {
        self.a.matvec(v, out);
    }

    fn jacobian_transpose_apply(&self, _u: &[f64], _s: f64, w: &[f64], out: &mut [f64]) {
        self.a.matvec_transpose(w, out);
    }

    fn dfds(&self, _u: &[f64], _s: f64, out: &mut [f64]) {
        out.fill(0.0);
    }
}

/// `J = wᵀu`.
#[derive(Clone, Debug)]
pub struct LinearObjective {
    pub weights: Vec<f64>,
}

impl Objective for LinearObjective {
    fn name(&self) -> &str {
        "linear"
    }

    fn value(&self, u: &[f64], _s: f64) -> f64 {
        crate::linalg::dot(&self.weights, u)
    }

    fn gradient(&self, _u: &[f64], _s: f64, out: &mut [f64]) {
        out.copy_from_slice(&self.weights);
    }

    fn param_derivative(&self, _u: &[f64], _s: f64) -> f64 {
        0.0
    }
}

/// `J` constant in both state and parameter.
#[derive(Clone, Copy, Debug)]
pub struct ConstantObjective(pub f64);

impl Objective for ConstantObjective {
    fn name(&self) -> &str {
        "constant"
    }

    fn value(&self, _u: &[f64], _s: f64) -> f64 {
        self.0
    }

    fn gradient(&self, _u: &[f64], _s: f64, out: &mut [f64]) {
        out.fill(0.0);
    }

    fn param_derivative(&self, _u: &[f64], _s: f64) -> f64 {
        0.0
    }
}
