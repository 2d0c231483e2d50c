//! Dynamical-system interface and the concrete systems driven by the march:
//! right-hand side, Jacobian actions, parameter derivative and instantaneous
//! output, for `du/dt = f(u, s)` with a scalar design parameter `s`.

mod ks;
mod lorenz;

pub use ks::{KuramotoSivashinsky, SpatialMean};
pub use lorenz::{Lorenz63, MeanZ};

use rand::RngCore;

/// A continuous-time dynamical system `du/dt = f(u, s)`.
///
/// All callables take states of length exactly `dim()`; a mismatch is a
/// caller bug and panics. Implementations are pure functions of their inputs
/// and safe to call from any number of workers.
pub trait DynamicalSystem: Sync {
    fn dim(&self) -> usize;

    fn name(&self) -> &str;

    fn description(&self) -> &str {
        ""
    }

    /// `out = f(u, s)`
    fn rhs(&self, u: &[f64], s: f64, out: &mut [f64]);

    /// Tangent action `out = f_u(u, s) · v`.
    fn jacobian_apply(&self, u: &[f64], s: f64, v: &[f64], out: &mut [f64]);

    /// Adjoint action `out = f_uᵀ(u, s) · w`.
    fn jacobian_transpose_apply(&self, u: &[f64], s: f64, w: &[f64], out: &mut [f64]);

    /// `out = ∂f/∂s (u, s)`.
    fn dfds(&self, u: &[f64], s: f64, out: &mut [f64]);

    /// Draw an initial condition for ensemble runs; spin-up is expected to
    /// land it on the attractor.
    fn sample_initial(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        use rand::Rng;
        (0..self.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }
}

/// Instantaneous output `J(u, s)` whose long-time average is the quantity of
/// interest, together with its state gradient and parameter derivative.
pub trait Objective: Sync {
    fn name(&self) -> &str;

    fn value(&self, u: &[f64], s: f64) -> f64;

    /// `out = ∂J/∂u (u, s)`.
    fn gradient(&self, u: &[f64], s: f64, out: &mut [f64]);

    /// `∂J/∂s (u, s)`.
    fn param_derivative(&self, u: &[f64], s: f64) -> f64;
}
