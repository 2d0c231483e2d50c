//! Lorenz 63 with a z-translation parameter.
//!
//! ```text
//! dx/dt = σ (y - x)
//! dy/dt = x (ρ - (z - s)) - y
//! dz/dt = x y - β (z - s)
//! ```
//!
//! Changing `s` translates the whole attractor along the z axis, so the
//! sensitivity of the averaged z coordinate to `s` is exactly 1 — which makes
//! this the standard exactness test case.

use super::{DynamicalSystem, Objective};
use rand::{Rng, RngCore};

#[derive(Clone, Debug)]
pub struct Lorenz63 {
    pub sigma: f64,
    pub rho: f64,
    pub beta: f64,
}

impl Default for Lorenz63 {
    fn default() -> Self {
        Lorenz63 { sigma: 10.0, rho: 25.0, beta: 8.0 / 3.0 }
    }
}

impl DynamicalSystem for Lorenz63 {
    fn dim(&self) -> usize {
        3
    }

    fn name(&self) -> &str {
        "lorenz63"
    }

    fn description(&self) -> &str {
        "Lorenz 63 convection model with z-shift parameter"
    }

    fn rhs(&self, u: &[f64], s: f64, out: &mut [f64]) {
        assert_eq!(u.len(), 3);
        assert_eq!(out.len(), 3);
        let (x, y, z) = (u[0], u[1], u[2]);
        out[0] = self.sigma * (y - x);
        out[1] = x * (self.rho - (z - s)) - y;
        out[2] = x * y - self.beta * (z - s);
    }

    fn jacobian_apply(&self, u: &[f64], s: f64, v: &[f64], out: &mut [f64]) {
        assert_eq!(u.len(), 3);
        assert_eq!(v.len(), 3);
        assert_eq!(out.len(), 3);
        let (x, y, z) = (u[0], u[1], u[2]);
        out[0] = self.sigma * (v[1] - v[0]);
        out[1] = (self.rho - (z - s)) * v[0] - v[1] - x * v[2];
        out[2] = y * v[0] + x * v[1] - self.beta * v[2];
    }

    fn jacobian_transpose_apply(&self, u: &[f64], s: f64, w: &[f64], out: &mut [f64]) {
        assert_eq!(u.len(), 3);
        assert_eq!(w.len(), 3);
        assert_eq!(out.len(), 3);
        let (x, y, z) = (u[0], u[1], u[2]);
        out[0] = -self.sigma * w[0] + (self.rho - (z - s)) * w[1] + y * w[2];
        out[1] = self.sigma * w[0] - w[1] + x * w[2];
        out[2] = -x * w[1] - self.beta * w[2];
    }

    fn dfds(&self, u: &[f64], _s: f64, out: &mut [f64]) {
        assert_eq!(u.len(), 3);
        assert_eq!(out.len(), 3);
        out[0] = 0.0;
        out[1] = u[0];
        out[2] = self.beta;
    }

    fn sample_initial(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        vec![
            rng.gen_range(-15.0..15.0),
            rng.gen_range(-15.0..15.0),
            rng.gen_range(5.0..35.0),
        ]
    }
}

/// Output `J = z`, the vertical coordinate.
#[derive(Clone, Copy, Debug, Default)]
pub struct MeanZ;

impl Objective for MeanZ {
    fn name(&self) -> &str {
        "mean_z"
    }

    fn value(&self, u: &[f64], _s: f64) -> f64 {
        assert_eq!(u.len(), 3);
        u[2]
    }

    fn gradient(&self, u: &[f64], _s: f64, out: &mut [f64]) {
        assert_eq!(u.len(), 3);
        assert_eq!(out.len(), 3);
        out.copy_from_slice(&[0.0, 0.0, 1.0]);
    }

    fn param_derivative(&self, _u: &[f64], _s: f64) -> f64 {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::testutil::{fd_dfds, fd_jacobian_apply};
    use crate::linalg::{dot, norm};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn origin_is_fixed_point() {
        let sys = Lorenz63::default();
        let mut f = vec![0.0; 3];
        sys.rhs(&[0.0, 0.0, 0.0], 0.0, &mut f);
        assert_eq!(f, vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn rhs_hand_value() {
        let sys = Lorenz63::default();
        let mut f = vec![0.0; 3];
        sys.rhs(&[1.0, 1.0, 1.0], 0.0, &mut f);
        assert_eq!(f[0], 0.0);
        assert_eq!(f[1], 23.0);
        assert_eq!(f[2], 1.0 - 8.0 / 3.0);
    }

    #[test]
    fn dfds_hand_value_and_fd() {
        let sys = Lorenz63::default();
        let u = [1.0, 1.0, 1.0];
        let mut g = vec![0.0; 3];
        sys.dfds(&u, 0.0, &mut g);
        assert_eq!(g, vec![0.0, 1.0, 8.0 / 3.0]);

        let fd = fd_dfds(&sys, &u, 0.3, 1e-6);
        for (a, b) in g.iter().zip(&fd) {
            assert!((a - b).abs() <= 1e-6);
        }
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let sys = Lorenz63::default();
        let u = [1.0, 1.0, 1.0];
        for j in 0..3 {
            let mut e = vec![0.0; 3];
            e[j] = 1.0;
            let mut col = vec![0.0; 3];
            sys.jacobian_apply(&u, 0.0, &e, &mut col);
            let fd = fd_jacobian_apply(&sys, &u, 0.0, &e, 1e-6);
            for (a, b) in col.iter().zip(&fd) {
                assert!((a - b).abs() <= 1e-6, "column {j}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn transpose_is_adjoint_of_apply() {
        let sys = Lorenz63::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let u: Vec<f64> = (0..3).map(|_| rng.gen_range(-20.0..20.0)).collect();
            let v: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let w: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mut fv = vec![0.0; 3];
            let mut ftw = vec![0.0; 3];
            sys.jacobian_apply(&u, 0.4, &v, &mut fv);
            sys.jacobian_transpose_apply(&u, 0.4, &w, &mut ftw);
            let lhs = dot(&w, &fv);
            let rhs = dot(&ftw, &v);
            let scale = norm(&fv) * norm(&w) + norm(&ftw) * norm(&v) + 1e-300;
            assert!((lhs - rhs).abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn parameter_is_z_translation() {
        let sys = Lorenz63::default();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let u: Vec<f64> = (0..3).map(|_| rng.gen_range(-10.0..10.0)).collect();
            let s = rng.gen_range(-3.0..3.0);
            let shifted = [u[0], u[1], u[2] - s];
            let mut a = vec![0.0; 3];
            let mut b = vec![0.0; 3];
            sys.rhs(&u, s, &mut a);
            sys.rhs(&shifted, 0.0, &mut b);
            assert_eq!(a, b);
        }
    }

    #[test]
    fn mean_z_objective() {
        let obj = MeanZ;
        assert_eq!(obj.value(&[1.0, 2.0, 3.0], 0.0), 3.0);
        let mut g = vec![0.0; 3];
        obj.gradient(&[4.0, 5.0, 6.0], 1.0, &mut g);
        assert_eq!(g, vec![0.0, 0.0, 1.0]);
        assert_eq!(obj.param_derivative(&[1.0, 1.0, 1.0], 2.0), 0.0);
    }
}
