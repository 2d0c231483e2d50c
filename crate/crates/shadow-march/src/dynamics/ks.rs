//! Kuramoto-Sivashinsky equation on [0, L] with homogeneous Dirichlet and
//! Neumann boundary conditions:
//!
//! ```text
//! u_t = -(u + s) u_x - u_xx - u_xxxx,   u = u_x = 0 at x = 0 and x = L
//! ```
//!
//! Second-order central differences on a uniform grid. The state holds the
//! interior nodes only; wall values are identically zero and the Neumann
//! condition enters through mirror ghost nodes (`u_{-1} = u_1`,
//! `u_{M+1} = u_{M-1}`). The Jacobian is a bandwidth-2 band refreshed from
//! the current state; its transpose action scatters the same band.

use super::{DynamicalSystem, Objective};
use crate::error::{Result, ShadowError};
use rand::{Rng, RngCore};

#[derive(Clone, Debug)]
pub struct KuramotoSivashinsky {
    length: f64,
    dx: f64,
    n: usize,
}

impl KuramotoSivashinsky {
    /// Grid over [0, length] with spacing `dx`; `length/dx` must be an
    /// integer of at least 2 so there is at least one interior node.
    pub fn new(length: f64, dx: f64) -> Result<Self> {
        if !(length > 0.0) || !(dx > 0.0) {
            return Err(ShadowError::InvalidConfig(
                "KS grid needs positive length and spacing".into(),
            ));
        }
        let ratio = length / dx;
        let nodes = ratio.round();
        if (ratio - nodes).abs() > 1e-9 * ratio.max(1.0) {
            return Err(ShadowError::InvalidConfig(format!(
                "KS domain length {length} is not an integer multiple of dx {dx}"
            )));
        }
        if nodes < 2.0 {
            return Err(ShadowError::InvalidConfig(
                "KS grid needs at least one interior node".into(),
            ));
        }
        Ok(KuramotoSivashinsky { length, dx, n: nodes as usize - 1 })
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    /// Value at physical node `p` (0..=M are the grid nodes): walls are zero,
    /// `p = -1` and `p = M+1` are the Neumann mirror ghosts.
    #[inline]
    fn value(&self, u: &[f64], p: isize) -> f64 {
        let m = self.n as isize + 1;
        if p == 0 || p == m {
            0.0
        } else if p == -1 {
            u[0]
        } else if p == m + 1 {
            u[self.n - 1]
        } else {
            u[(p - 1) as usize]
        }
    }

    /// State column that physical node `p` feeds, if any.
    #[inline]
    fn column(&self, p: isize) -> Option<usize> {
        let m = self.n as isize + 1;
        if p == 0 || p == m {
            None
        } else if p == -1 {
            Some(0)
        } else if p == m + 1 {
            Some(self.n - 1)
        } else {
            Some((p - 1) as usize)
        }
    }

    #[inline]
    fn first_derivative(&self, u: &[f64], i: usize) -> f64 {
        let p = i as isize + 1;
        (self.value(u, p + 1) - self.value(u, p - 1)) / (2.0 * self.dx)
    }

    /// Jacobian row `i` as (column, coefficient) pairs over the band.
    #[inline]
    fn stencil_row(&self, u: &[f64], s: f64, i: usize, mut emit: impl FnMut(usize, f64)) {
        let p = i as isize + 1;
        let a = 1.0 / (2.0 * self.dx);
        let b2 = 1.0 / (self.dx * self.dx);
        let b4 = b2 * b2;
        let adv = (u[i] + s) * a;

        if let Some(c) = self.column(p - 2) {
            emit(c, -b4);
        }
        if let Some(c) = self.column(p - 1) {
            emit(c, adv - b2 + 4.0 * b4);
        }
        emit(i, -self.first_derivative(u, i) + 2.0 * b2 - 6.0 * b4);
        if let Some(c) = self.column(p + 1) {
            emit(c, -adv - b2 + 4.0 * b4);
        }
        if let Some(c) = self.column(p + 2) {
            emit(c, -b4);
        }
    }
}

impl DynamicalSystem for KuramotoSivashinsky {
    fn dim(&self) -> usize {
        self.n
    }

    fn name(&self) -> &str {
        "ks"
    }

    fn description(&self) -> &str {
        "Kuramoto-Sivashinsky equation, finite differences, interior nodes"
    }

    fn rhs(&self, u: &[f64], s: f64, out: &mut [f64]) {
        assert_eq!(u.len(), self.n);
        assert_eq!(out.len(), self.n);
        let dx2 = self.dx * self.dx;
        let dx4 = dx2 * dx2;
        for i in 0..self.n {
            let p = i as isize + 1;
            let um2 = self.value(u, p - 2);
            let um1 = self.value(u, p - 1);
            let u0 = u[i];
            let up1 = self.value(u, p + 1);
            let up2 = self.value(u, p + 2);
            let ux = (up1 - um1) / (2.0 * self.dx);
            let uxx = (up1 - 2.0 * u0 + um1) / dx2;
            let uxxxx = (up2 - 4.0 * up1 + 6.0 * u0 - 4.0 * um1 + um2) / dx4;
            out[i] = -(u0 + s) * ux - uxx - uxxxx;
        }
    }

    fn jacobian_apply(&self, u: &[f64], s: f64, v: &[f64], out: &mut [f64]) {
        assert_eq!(u.len(), self.n);
        assert_eq!(v.len(), self.n);
        assert_eq!(out.len(), self.n);
        for i in 0..self.n {
            let mut acc = 0.0;
            self.stencil_row(u, s, i, |c, coeff| acc += coeff * v[c]);
            out[i] = acc;
        }
    }

    fn jacobian_transpose_apply(&self, u: &[f64], s: f64, w: &[f64], out: &mut [f64]) {
        assert_eq!(u.len(), self.n);
        assert_eq!(w.len(), self.n);
        assert_eq!(out.len(), self.n);
        out.fill(0.0);
        for i in 0..self.n {
            let wi = w[i];
            self.stencil_row(u, s, i, |c, coeff| out[c] += coeff * wi);
        }
    }

    fn dfds(&self, u: &[f64], _s: f64, out: &mut [f64]) {
        assert_eq!(u.len(), self.n);
        assert_eq!(out.len(), self.n);
        for i in 0..self.n {
            out[i] = -self.first_derivative(u, i);
        }
    }

    fn sample_initial(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        (0..self.n).map(|_| rng.gen_range(-0.5..0.5)).collect()
    }
}

/// Output `J = (1/L) ∫ u dx`, the spatial mean of the solution. With zero
/// walls the trapezoid rule reduces to `dx` times the interior sum.
#[derive(Clone, Debug)]
pub struct SpatialMean {
    weights: Vec<f64>,
}

impl SpatialMean {
    pub fn for_grid(grid: &KuramotoSivashinsky) -> Self {
        SpatialMean { weights: vec![grid.dx / grid.length; grid.n] }
    }
}

impl Objective for SpatialMean {
    fn name(&self) -> &str {
        "spatial_mean"
    }

    fn value(&self, u: &[f64], _s: f64) -> f64 {
        assert_eq!(u.len(), self.weights.len());
        crate::linalg::dot(&self.weights, u)
    }

    fn gradient(&self, u: &[f64], _s: f64, out: &mut [f64]) {
        assert_eq!(u.len(), self.weights.len());
        assert_eq!(out.len(), self.weights.len());
        out.copy_from_slice(&self.weights);
    }

    fn param_derivative(&self, _u: &[f64], _s: f64) -> f64 {
        0.0
    }
}
