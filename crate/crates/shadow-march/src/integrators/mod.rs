//! Explicit Runge-Kutta stepping for the primal equation and the discretely
//! consistent adjoint stepping for the homogeneous and inhomogeneous adjoint
//! equations.
//!
//! The adjoint step is the exact transpose of the linearized primal step: for
//! a tableau `{a_ij}, {b_i}` the increments solve
//!
//! ```text
//! λ_k = Δt f_u*(Y_k) (b_k ψ_{n+1} + Σ_j a_jk λ_j) + Δt b_k J_u(Y_k)
//! ψ_n = ψ_{n+1} + Σ_k λ_k
//! ```
//!
//! with the primal stage states `Y_k` recomputed from the stored `u_n`
//! (memory O(n·N) instead of O(n·n_s·N); bit-identical since the same
//! tableau arithmetic is replayed). For an explicit tableau `a_jk` couples
//! only stages `j > k`, so the recursion runs k = n_s..1.

mod trajectory;

pub use trajectory::TrajectoryStore;

use crate::dynamics::{DynamicalSystem, Objective};
use crate::error::{Result, ShadowError};
use crate::linalg::Mat;
use crate::quadrature::SimpsonAccumulator;

/// Coefficients of an explicit Runge-Kutta scheme.
#[derive(Clone, Debug)]
pub struct ButcherTableau {
    name: &'static str,
    order: usize,
    /// Strictly lower-triangular: `a[i]` has length `i`.
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
    c: Vec<f64>,
}

impl ButcherTableau {
    /// Classical fourth-order Runge-Kutta.
    pub fn rk4() -> Self {
        let t = ButcherTableau {
            name: "rk4",
            order: 4,
            a: vec![vec![], vec![0.5], vec![0.0, 0.5], vec![0.0, 0.0, 1.0]],
            b: vec![1.0 / 6.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0],
            c: vec![0.0, 0.5, 0.5, 1.0],
        };
        t.assert_consistent();
        t
    }

    /// Ralston's third-order scheme (minimum local error bound).
    pub fn ralston3() -> Self {
        let t = ButcherTableau {
            name: "ralston3",
            order: 3,
            a: vec![vec![], vec![0.5], vec![0.0, 0.75]],
            b: vec![2.0 / 9.0, 1.0 / 3.0, 4.0 / 9.0],
            c: vec![0.0, 0.5, 0.75],
        };
        t.assert_consistent();
        t
    }

    pub fn name(&self) -> &'static str {
        self.name
    }

    /// Design order of the scheme.
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn stages(&self) -> usize {
        self.b.len()
    }

    fn assert_consistent(&self) {
        let ns = self.b.len();
        assert_eq!(self.a.len(), ns);
        assert_eq!(self.c.len(), ns);
        let bsum: f64 = self.b.iter().sum();
        assert!((bsum - 1.0).abs() < 1e-14, "tableau weights must sum to 1");
        for i in 0..ns {
            assert_eq!(self.a[i].len(), i, "tableau must be strictly lower triangular");
            let row: f64 = self.a[i].iter().sum();
            assert!((row - self.c[i]).abs() < 1e-14, "c[{i}] must equal the row sum of a");
        }
    }
}

fn all_finite(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// Reusable stage buffers for primal stepping.
pub(crate) struct PrimalWorkspace {
    stages: Vec<Vec<f64>>,
    slopes: Vec<Vec<f64>>,
}

impl PrimalWorkspace {
    pub(crate) fn new(tableau: &ButcherTableau, dim: usize) -> Self {
        PrimalWorkspace {
            stages: vec![vec![0.0; dim]; tableau.stages()],
            slopes: vec![vec![0.0; dim]; tableau.stages()],
        }
    }
}

fn compute_stages(
    tableau: &ButcherTableau,
    system: &dyn DynamicalSystem,
    u: &[f64],
    s: f64,
    dt: f64,
    ws: &mut PrimalWorkspace,
) {
    for i in 0..tableau.stages() {
        let (stages, slopes) = (&mut ws.stages, &ws.slopes);
        stages[i].copy_from_slice(u);
        for (j, &aij) in tableau.a[i].iter().enumerate() {
            if aij != 0.0 {
                for k in 0..u.len() {
                    stages[i][k] += dt * aij * slopes[j][k];
                }
            }
        }
        system.rhs(&ws.stages[i], s, &mut ws.slopes[i]);
    }
}

pub(crate) fn primal_step_into(
    tableau: &ButcherTableau,
    system: &dyn DynamicalSystem,
    u: &[f64],
    s: f64,
    dt: f64,
    ws: &mut PrimalWorkspace,
    out: &mut [f64],
) -> Result<()> {
    compute_stages(tableau, system, u, s, dt, ws);
    out.copy_from_slice(u);
    for (i, &bi) in tableau.b.iter().enumerate() {
        let slope = &ws.slopes[i];
        for (x, k) in out.iter_mut().zip(slope) {
            *x += dt * bi * k;
        }
    }
    if !all_finite(out) {
        return Err(ShadowError::Diverged { step: 0 });
    }
    Ok(())
}

/// One explicit Runge-Kutta step of the primal equation.
pub fn primal_step(
    tableau: &ButcherTableau,
    system: &dyn DynamicalSystem,
    u: &[f64],
    s: f64,
    dt: f64,
) -> Result<Vec<f64>> {
    assert!(dt > 0.0, "time step must be positive");
    assert_eq!(u.len(), system.dim());
    let mut ws = PrimalWorkspace::new(tableau, u.len());
    let mut out = vec![0.0; u.len()];
    primal_step_into(tableau, system, u, s, dt, &mut ws, &mut out)?;
    Ok(out)
}

/// One step of the tangent linearization of `primal_step`: stage states are
/// recomputed and the Jacobian action propagates the perturbation.
pub fn tangent_step(
    tableau: &ButcherTableau,
    system: &dyn DynamicalSystem,
    u: &[f64],
    s: f64,
    v: &[f64],
    dt: f64,
) -> Result<Vec<f64>> {
    let n = system.dim();
    assert_eq!(u.len(), n);
    assert_eq!(v.len(), n);
    let mut ws = PrimalWorkspace::new(tableau, n);
    compute_stages(tableau, system, u, s, dt, &mut ws);

    let ns = tableau.stages();
    let mut vstages: Vec<Vec<f64>> = vec![vec![0.0; n]; ns];
    let mut vslopes: Vec<Vec<f64>> = vec![vec![0.0; n]; ns];
    for i in 0..ns {
        vstages[i].copy_from_slice(v);
        for (j, &aij) in tableau.a[i].iter().enumerate() {
            if aij != 0.0 {
                for k in 0..n {
                    vstages[i][k] += dt * aij * vslopes[j][k];
                }
            }
        }
        let (done, rest) = vslopes.split_at_mut(i);
        let _ = done;
        system.jacobian_apply(&ws.stages[i], s, &vstages[i], &mut rest[0]);
    }
    let mut out = v.to_vec();
    for (i, &bi) in tableau.b.iter().enumerate() {
        for k in 0..n {
            out[k] += dt * bi * vslopes[i][k];
        }
    }
    if !all_finite(&out) {
        return Err(ShadowError::Diverged { step: 0 });
    }
    Ok(out)
}

/// Stage data and buffers for adjoint stepping, shared by every column of a
/// bundle within one time step.
pub(crate) struct AdjointStepper {
    primal: PrimalWorkspace,
    /// J_u evaluated at each stage state, when a source is active.
    grads: Vec<Vec<f64>>,
    lambda: Vec<Vec<f64>>,
    arg: Vec<f64>,
    jtw: Vec<f64>,
}

impl AdjointStepper {
    pub(crate) fn new(tableau: &ButcherTableau, dim: usize) -> Self {
        AdjointStepper {
            primal: PrimalWorkspace::new(tableau, dim),
            grads: vec![vec![0.0; dim]; tableau.stages()],
            lambda: vec![vec![0.0; dim]; tableau.stages()],
            arg: vec![0.0; dim],
            jtw: vec![0.0; dim],
        }
    }

    /// Recompute the primal stages of the step starting at `u_start` (and the
    /// objective gradients at the stages, when a source is present).
    pub(crate) fn prepare(
        &mut self,
        tableau: &ButcherTableau,
        system: &dyn DynamicalSystem,
        u_start: &[f64],
        s: f64,
        dt: f64,
        objective: Option<&dyn Objective>,
    ) {
        compute_stages(tableau, system, u_start, s, dt, &mut self.primal);
        if let Some(obj) = objective {
            for (stage, grad) in self.primal.stages.iter().zip(self.grads.iter_mut()) {
                obj.gradient(stage, s, grad);
            }
        }
    }

    /// Advance one column backward in place: `psi` holds ψ_{n+1} on entry and
    /// ψ_n on exit. `with_source` adds the `Δt b_k J_u(Y_k)` term.
    pub(crate) fn step_column(
        &mut self,
        tableau: &ButcherTableau,
        system: &dyn DynamicalSystem,
        s: f64,
        dt: f64,
        psi: &mut [f64],
        with_source: bool,
    ) -> Result<()> {
        let n = psi.len();
        let ns = tableau.stages();
        for k in (0..ns).rev() {
            let bk = tableau.b[k];
            for i in 0..n {
                self.arg[i] = bk * psi[i];
            }
            for j in k + 1..ns {
                let ajk = tableau.a[j][k];
                if ajk != 0.0 {
                    let lj = &self.lambda[j];
                    for i in 0..n {
                        self.arg[i] += ajk * lj[i];
                    }
                }
            }
            system.jacobian_transpose_apply(&self.primal.stages[k], s, &self.arg, &mut self.jtw);
            let lk = &mut self.lambda[k];
            if with_source {
                let gk = &self.grads[k];
                for i in 0..n {
                    lk[i] = dt * (self.jtw[i] + bk * gk[i]);
                }
            } else {
                for i in 0..n {
                    lk[i] = dt * self.jtw[i];
                }
            }
        }
        for lk in &self.lambda[..ns] {
            for i in 0..n {
                psi[i] += lk[i];
            }
        }
        if !all_finite(psi) {
            return Err(ShadowError::Diverged { step: 0 });
        }
        Ok(())
    }
}

/// One backward step of the discrete adjoint across the primal step that
/// starts at `u_start`. With `objective` present the inhomogeneous equation
/// (J_u source) is stepped; without it the homogeneous one.
pub fn adjoint_step(
    tableau: &ButcherTableau,
    system: &dyn DynamicalSystem,
    objective: Option<&dyn Objective>,
    u_start: &[f64],
    s: f64,
    psi_next: &[f64],
    dt: f64,
) -> Result<Vec<f64>> {
    let n = system.dim();
    assert_eq!(u_start.len(), n);
    assert_eq!(psi_next.len(), n);
    let mut stepper = AdjointStepper::new(tableau, n);
    stepper.prepare(tableau, system, u_start, s, dt, objective);
    let mut psi = psi_next.to_vec();
    stepper.step_column(tableau, system, s, dt, &mut psi, objective.is_some())?;
    Ok(psi)
}

/// Integrate the primal equation for `steps` steps, storing every snapshot.
pub fn integrate_primal(
    tableau: &ButcherTableau,
    system: &dyn DynamicalSystem,
    u0: &[f64],
    s: f64,
    dt: f64,
    steps: usize,
    start_time: f64,
) -> Result<TrajectoryStore> {
    assert_eq!(u0.len(), system.dim());
    assert!(dt > 0.0);
    let mut store = TrajectoryStore::with_capacity(start_time, dt, u0.len(), steps + 1);
    store.push(u0);
    let mut ws = PrimalWorkspace::new(tableau, u0.len());
    let mut u = u0.to_vec();
    let mut next = vec![0.0; u0.len()];
    for step in 0..steps {
        primal_step_into(tableau, system, &u, s, dt, &mut ws, &mut next)
            .map_err(|_| ShadowError::Diverged { step: step + 1 })?;
        std::mem::swap(&mut u, &mut next);
        store.push(&u);
    }
    Ok(store)
}

/// Integrate the primal equation without storing the path (spin-up runs).
pub fn advance(
    tableau: &ButcherTableau,
    system: &dyn DynamicalSystem,
    u0: &[f64],
    s: f64,
    dt: f64,
    steps: usize,
) -> Result<Vec<f64>> {
    let mut ws = PrimalWorkspace::new(tableau, u0.len());
    let mut u = u0.to_vec();
    let mut next = vec![0.0; u0.len()];
    for step in 0..steps {
        primal_step_into(tableau, system, &u, s, dt, &mut ws, &mut next)
            .map_err(|_| ShadowError::Diverged { step: step + 1 })?;
        std::mem::swap(&mut u, &mut next);
    }
    Ok(u)
}

/// Result of one backward bundle integration over a trajectory window.
#[derive(Clone, Debug)]
pub struct AdjointBundle {
    /// Homogeneous columns at the lower window edge, `Y(t_lo)`.
    pub y_initial: Mat,
    /// Particular solution at the lower window edge, when one was evolved.
    pub v_initial: Option<Vec<f64>>,
    /// `d = ∫ Yᵀ f_s dt` over the window (composite Simpson on the steps).
    pub d: Vec<f64>,
    /// `h = ∫ vᵀ f_s dt` over the window; zero without a particular solution.
    pub h: f64,
}

/// Evolve `m` homogeneous adjoint columns (and optionally one particular
/// solution with its J_u source) backward across the trajectory steps
/// `step_hi` down to `step_lo`, accumulating the sensitivity integrands.
///
/// The window must contain an even number of steps so the Simpson rule
/// applies; segment and spin-up lengths are validated upstream to guarantee
/// this.
pub fn integrate_adjoint_bundle(
    tableau: &ButcherTableau,
    system: &dyn DynamicalSystem,
    trajectory: &TrajectoryStore,
    s: f64,
    step_hi: usize,
    step_lo: usize,
    y_terminal: &Mat,
    particular: Option<(&dyn Objective, &[f64])>,
) -> Result<AdjointBundle> {
    let n = system.dim();
    assert_eq!(trajectory.dim(), n, "trajectory dimension mismatch");
    assert!(step_hi <= trajectory.steps(), "window exceeds trajectory");
    assert!(step_lo < step_hi, "empty adjoint window");
    let steps = step_hi - step_lo;
    assert!(steps % 2 == 0, "adjoint window must span an even number of steps");
    assert_eq!(y_terminal.rows(), n);

    let m = y_terminal.cols();
    let dt = trajectory.dt();
    let mut y = y_terminal.clone();
    let mut v = particular.map(|(_, v0)| {
        assert_eq!(v0.len(), n);
        v0.to_vec()
    });
    let objective = particular.map(|(o, _)| o);

    let mut stepper = AdjointStepper::new(tableau, n);
    let mut d_acc: Vec<SimpsonAccumulator> =
        (0..m).map(|_| SimpsonAccumulator::new(steps, dt)).collect();
    let mut h_acc = SimpsonAccumulator::new(steps, dt);
    let mut fs = vec![0.0; n];

    let mut idx = step_hi;
    loop {
        system.dfds(trajectory.state(idx), s, &mut fs);
        let pos = idx - step_lo;
        for (j, acc) in d_acc.iter_mut().enumerate() {
            acc.add(pos, crate::linalg::dot(y.col(j), &fs));
        }
        if let Some(v) = &v {
            h_acc.add(pos, crate::linalg::dot(v, &fs));
        }

        if idx == step_lo {
            break;
        }
        idx -= 1;
        stepper.prepare(tableau, system, trajectory.state(idx), s, dt, objective);
        for j in 0..m {
            stepper
                .step_column(tableau, system, s, dt, y.col_mut(j), false)
                .map_err(|_| ShadowError::Diverged { step: idx })?;
        }
        if let Some(v) = &mut v {
            stepper
                .step_column(tableau, system, s, dt, v, true)
                .map_err(|_| ShadowError::Diverged { step: idx })?;
        }
    }

    Ok(AdjointBundle {
        y_initial: y,
        v_initial: v,
        d: d_acc.iter().map(SimpsonAccumulator::value).collect(),
        h: h_acc.value(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{Lorenz63, MeanZ};
    use crate::linalg::{dot, norm};
    use crate::quadrature::simpson;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    /// du/dt = 0.
    struct ZeroSystem(usize);
    impl DynamicalSystem for ZeroSystem {
        fn dim(&self) -> usize {
            self.0
        }
        fn name(&self) -> &str {
            "zero"
        }
        fn rhs(&self, _u: &[f64], _s: f64, out: &mut [f64]) {
            out.fill(0.0);
        }
        fn jacobian_apply(&self, _u: &[f64], _s: f64, _v: &[f64], out: &mut [f64]) {
            out.fill(0.0);
        }
        fn jacobian_transpose_apply(&self, _u: &[f64], _s: f64, _w: &[f64], out: &mut [f64]) {
            out.fill(0.0);
        }
        fn dfds(&self, _u: &[f64], _s: f64, out: &mut [f64]) {
            out.fill(0.0);
        }
    }

    /// du/dt = rate·u, scalar.
    struct ScalarLinear {
        rate: f64,
    }
    impl DynamicalSystem for ScalarLinear {
        fn dim(&self) -> usize {
            1
        }
        fn name(&self) -> &str {
            "scalar_linear"
        }
        fn rhs(&self, u: &[f64], _s: f64, out: &mut [f64]) {
            out[0] = self.rate * u[0];
        }
        fn jacobian_apply(&self, _u: &[f64], _s: f64, v: &[f64], out: &mut [f64]) {
            out[0] = self.rate * v[0];
        }
        fn jacobian_transpose_apply(&self, _u: &[f64], _s: f64, w: &[f64], out: &mut [f64]) {
            out[0] = self.rate * w[0];
        }
        fn dfds(&self, _u: &[f64], _s: f64, out: &mut [f64]) {
            out.fill(0.0);
        }
    }

    struct ZeroObjective;
    impl Objective for ZeroObjective {
        fn name(&self) -> &str {
            "zero"
        }
        fn value(&self, _u: &[f64], _s: f64) -> f64 {
            0.0
        }
        fn gradient(&self, _u: &[f64], _s: f64, out: &mut [f64]) {
            out.fill(0.0);
        }
        fn param_derivative(&self, _u: &[f64], _s: f64) -> f64 {
            0.0
        }
    }

    #[test]
    fn zero_rhs_leaves_state() {
        let sys = ZeroSystem(4);
        let u = vec![1.0, -2.0, 3.0, 0.5];
        let out = primal_step(&ButcherTableau::rk4(), &sys, &u, 0.0, 0.3).unwrap();
        assert_eq!(out, u);
    }

    #[test]
    fn rk4_scalar_matches_truncated_exponential() {
        let sys = ScalarLinear { rate: -1.0 };
        let dt = 0.1;
        let out = primal_step(&ButcherTableau::rk4(), &sys, &[1.0], 0.0, dt).unwrap();
        let expected = 1.0 - dt + dt * dt / 2.0 - dt.powi(3) / 6.0 + dt.powi(4) / 24.0;
        assert!((out[0] - expected).abs() <= 1e-15);
    }

    fn observed_order(tableau: &ButcherTableau) -> f64 {
        // Global error at t=1 for u' = -u against the exact exponential.
        let sys = ScalarLinear { rate: -1.0 };
        let exact = (-1.0f64).exp();
        let errs: Vec<f64> = [0.1f64, 0.05, 0.025, 0.0125]
            .iter()
            .map(|&dt| {
                let steps = (1.0 / dt).round() as usize;
                let u = advance(tableau, &sys, &[1.0], 0.0, dt, steps).unwrap();
                (u[0] - exact).abs()
            })
            .collect();
        let mut slopes = Vec::new();
        for w in errs.windows(2) {
            slopes.push((w[0] / w[1]).log2());
        }
        slopes.iter().sum::<f64>() / slopes.len() as f64
    }

    #[test]
    fn tableau_orders_verified_on_exponential() {
        let p4 = observed_order(&ButcherTableau::rk4());
        assert!((p4 - 4.0).abs() <= 0.2, "rk4 observed order {p4}");
        let p3 = observed_order(&ButcherTableau::ralston3());
        assert!((p3 - 3.0).abs() <= 0.2, "ralston3 observed order {p3}");
    }

    /// Least-squares slope of log(err) against log(dt).
    fn loglog_slope(dts: &[f64], errs: &[f64]) -> f64 {
        let n = dts.len() as f64;
        let xs: Vec<f64> = dts.iter().map(|d| d.ln()).collect();
        let ys: Vec<f64> = errs.iter().map(|e| e.ln()).collect();
        let xm = xs.iter().sum::<f64>() / n;
        let ym = ys.iter().sum::<f64>() / n;
        let num: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - xm) * (y - ym)).sum();
        let den: f64 = xs.iter().map(|x| (x - xm) * (x - xm)).sum();
        num / den
    }

    #[test]
    fn lorenz_self_convergence_order_four() {
        // Step-halving study against a fine reference, started on the
        // attractor so the leading error term dominates.
        let sys = Lorenz63::default();
        let tab = ButcherTableau::rk4();
        let u0 = advance(&tab, &sys, &[1.0, 2.0, 20.0], 0.0, 0.001, 10_000).unwrap();
        let t_end = 0.5;
        let reference = advance(&tab, &sys, &u0, 0.0, t_end / 16000.0, 16000).unwrap();
        let step_counts = [50usize, 100, 200, 400];
        let dts: Vec<f64> = step_counts.iter().map(|&s| t_end / s as f64).collect();
        let errs: Vec<f64> = step_counts
            .iter()
            .map(|&steps| {
                let u = advance(&tab, &sys, &u0, 0.0, t_end / steps as f64, steps).unwrap();
                u.iter().zip(&reference).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
            })
            .collect();
        let slope = loglog_slope(&dts, &errs);
        assert!((slope - 4.0).abs() <= 0.2, "observed slope {slope}");
    }

    #[test]
    fn adjoint_step_identity_for_zero_system() {
        let sys = ZeroSystem(3);
        let psi = vec![0.4, -1.0, 2.0];
        let out = adjoint_step(&ButcherTableau::rk4(), &sys, None, &[0.0; 3], 0.0, &psi, 0.05)
            .unwrap();
        assert_eq!(out, psi);
        let out =
            adjoint_step(&ButcherTableau::rk4(), &sys, Some(&ZeroObjective), &[0.0; 3], 0.0, &psi, 0.05)
                .unwrap();
        assert_eq!(out, psi);
    }

    #[test]
    fn adjoint_step_scalar_stability_polynomial() {
        // Frozen-coefficient homogeneous adjoint reproduces the stability
        // polynomial of the scheme applied backward.
        let rate = 0.7;
        let sys = ScalarLinear { rate };
        let dt = 0.1;
        let z = rate * dt;

        let out = adjoint_step(&ButcherTableau::rk4(), &sys, None, &[1.0], 0.0, &[1.0], dt).unwrap();
        let p4 = 1.0 + z + z * z / 2.0 + z.powi(3) / 6.0 + z.powi(4) / 24.0;
        assert!((out[0] - p4).abs() <= 1e-15);

        let out =
            adjoint_step(&ButcherTableau::ralston3(), &sys, None, &[1.0], 0.0, &[1.0], dt).unwrap();
        let p3 = 1.0 + z + z * z / 2.0 + z.powi(3) / 6.0;
        assert!((out[0] - p3).abs() <= 1e-15);
    }

    #[test]
    fn tangent_adjoint_dual_identity() {
        // <tangent(v), w> == <v, adjoint(w)> on the same primal step.
        let sys = Lorenz63::default();
        let tab = ButcherTableau::rk4();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..40 {
            let u: Vec<f64> = (0..3).map(|_| rng.gen_range(-15.0..15.0)).collect();
            let v: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let w: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let tv = tangent_step(&tab, &sys, &u, 0.0, &v, 0.01).unwrap();
            let aw = adjoint_step(&tab, &sys, None, &u, 0.0, &w, 0.01).unwrap();
            let lhs = dot(&tv, &w);
            let rhs = dot(&v, &aw);
            let scale = norm(&tv) * norm(&w) + norm(&v) * norm(&aw) + 1e-300;
            assert!((lhs - rhs).abs() <= 1e-12 * scale, "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn discrete_adjoint_order_matches_scheme() {
        // Refine primal and adjoint together; compare psi(0) with the value
        // on the finest grid.
        let sys = Lorenz63::default();
        let u0 = advance(&ButcherTableau::rk4(), &sys, &[1.0, 2.0, 20.0], 0.0, 0.001, 10_000)
            .unwrap();
        let t_end = 0.5;
        for (tab, order) in [(ButcherTableau::rk4(), 4.0), (ButcherTableau::ralston3(), 3.0)] {
            let obj = MeanZ;
            let psi_t = vec![0.3, -0.2, 0.5];
            let solve = |steps: usize| -> Vec<f64> {
                let dt = t_end / steps as f64;
                let traj = integrate_primal(&tab, &sys, &u0, 0.0, dt, steps, 0.0).unwrap();
                let mut psi = psi_t.clone();
                for i in (0..steps).rev() {
                    psi = adjoint_step(&tab, &sys, Some(&obj), traj.state(i), 0.0, &psi, dt)
                        .unwrap();
                }
                psi
            };
            let reference = solve(16000);
            let step_counts = [50usize, 100, 200, 400];
            let dts: Vec<f64> = step_counts.iter().map(|&s| t_end / s as f64).collect();
            let errs: Vec<f64> = step_counts
                .iter()
                .map(|&steps| {
                    let psi = solve(steps);
                    psi.iter().zip(&reference).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
                })
                .collect();
            let slope = loglog_slope(&dts, &errs);
            assert!((slope - order).abs() <= 0.4, "{}: observed slope {slope}", tab.name());
        }
    }

    #[test]
    fn integrate_primal_zero_steps_holds_initial_state() {
        let sys = Lorenz63::default();
        let store =
            integrate_primal(&ButcherTableau::rk4(), &sys, &[1.0, 1.0, 1.0], 0.0, 0.01, 0, 0.0)
                .unwrap();
        assert_eq!(store.snapshots(), 1);
        assert_eq!(store.state(0), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn spin_up_lands_on_attractor() {
        let sys = Lorenz63::default();
        let tab = ButcherTableau::rk4();
        let dt = 0.01;
        let u0 = advance(&tab, &sys, &[-8.0, 12.0, 9.0], 0.0, dt, 5000).unwrap();
        let window = 10_000;
        let traj = integrate_primal(&tab, &sys, &u0, 0.0, dt, window, 0.0).unwrap();
        let z_mean: f64 =
            (0..=window).map(|i| traj.state(i)[2]).sum::<f64>() / (window + 1) as f64;
        assert!((15.0..35.0).contains(&z_mean), "z average off the attractor: {z_mean}");
    }

    #[test]
    fn divergence_reports_step_index() {
        let sys = Lorenz63::default();
        match advance(&ButcherTableau::rk4(), &sys, &[1.0, 1.0, 1.0], 0.0, 50.0, 100) {
            Err(ShadowError::Diverged { step }) => assert!(step >= 1 && step <= 100),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn checkpoint_round_trip_from_integration() {
        let sys = Lorenz63::default();
        let traj =
            integrate_primal(&ButcherTableau::rk4(), &sys, &[1.0, 1.5, 21.0], 0.0, 0.01, 64, 0.0)
                .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("primal.shmt");
        traj.write_checkpoint(&path).unwrap();
        let loaded = TrajectoryStore::read_checkpoint(&path).unwrap();
        assert_eq!(traj, loaded);
    }

    #[test]
    fn bundle_zero_source_zero_particular() {
        // m = 0 columns, zero terminal particular, zero J_u: everything zero.
        let sys = Lorenz63::default();
        let tab = ButcherTableau::rk4();
        let traj = integrate_primal(&tab, &sys, &[3.0, -2.0, 25.0], 0.0, 0.01, 20, 0.0).unwrap();
        let y0 = Mat::zeros(3, 0);
        let out = integrate_adjoint_bundle(
            &tab,
            &sys,
            &traj,
            0.0,
            20,
            0,
            &y0,
            Some((&ZeroObjective, &[0.0, 0.0, 0.0])),
        )
        .unwrap();
        assert_eq!(out.v_initial.unwrap(), vec![0.0; 3]);
        assert_eq!(out.h, 0.0);
        assert!(out.d.is_empty());
    }

    #[test]
    fn bundle_zero_dfds_zero_integrals() {
        // f_s == 0 makes d and h vanish regardless of the adjoint values.
        let sys = ScalarLinear { rate: -0.4 };
        let tab = ButcherTableau::rk4();
        let traj = integrate_primal(&tab, &sys, &[1.0], 0.0, 0.05, 10, 0.0).unwrap();
        let y0 = Mat::from_columns(&[vec![1.0]]);
        let out =
            integrate_adjoint_bundle(&tab, &sys, &traj, 0.0, 10, 0, &y0, Some((&ZeroObjective, &[2.0])))
                .unwrap();
        assert_eq!(out.d, vec![0.0]);
        assert_eq!(out.h, 0.0);
        assert!(out.v_initial.unwrap()[0] != 0.0);
    }

    #[test]
    fn bundle_columns_match_independent_runs_bitwise() {
        let sys = Lorenz63::default();
        let tab = ButcherTableau::rk4();
        let traj = integrate_primal(&tab, &sys, &[1.0, 5.0, 20.0], 0.0, 0.01, 20, 0.0).unwrap();
        let cols = vec![
            vec![1.0, 0.0, 0.0],
            vec![0.2, -0.4, 1.0],
            vec![0.0, 1.0, 0.5],
        ];
        let bundle = integrate_adjoint_bundle(
            &tab,
            &sys,
            &traj,
            0.0,
            20,
            0,
            &Mat::from_columns(&cols),
            None,
        )
        .unwrap();
        for (j, col) in cols.iter().enumerate() {
            let single = integrate_adjoint_bundle(
                &tab,
                &sys,
                &traj,
                0.0,
                20,
                0,
                &Mat::from_columns(&[col.clone()]),
                None,
            )
            .unwrap();
            for i in 0..3 {
                assert_eq!(
                    bundle.y_initial.get(i, j).to_bits(),
                    single.y_initial.get(i, 0).to_bits()
                );
            }
            assert_eq!(bundle.d[j].to_bits(), single.d[0].to_bits());
        }
    }

    #[test]
    fn bundle_integrals_match_recomputed_simpson() {
        // Independently re-step the adjoint and Simpson-combine Yᵀf_s samples.
        let sys = Lorenz63::default();
        let tab = ButcherTableau::rk4();
        let dt = 0.01;
        let steps = 20; // one segment of length 0.2
        let traj = integrate_primal(&tab, &sys, &[-4.0, 3.0, 18.0], 0.0, dt, steps, 0.0).unwrap();
        let y_col = vec![0.3, 1.0, -0.7];
        let v_t = vec![0.1, 0.0, 0.25];
        let obj = MeanZ;
        let bundle = integrate_adjoint_bundle(
            &tab,
            &sys,
            &traj,
            0.0,
            steps,
            0,
            &Mat::from_columns(&[y_col.clone()]),
            Some((&obj, &v_t)),
        )
        .unwrap();

        let mut y = y_col.clone();
        let mut v = v_t.clone();
        let mut y_samples = vec![0.0; steps + 1];
        let mut v_samples = vec![0.0; steps + 1];
        let mut fs = vec![0.0; 3];
        for idx in (0..=steps).rev() {
            sys.dfds(traj.state(idx), 0.0, &mut fs);
            y_samples[idx] = dot(&y, &fs);
            v_samples[idx] = dot(&v, &fs);
            if idx > 0 {
                y = adjoint_step(&tab, &sys, None, traj.state(idx - 1), 0.0, &y, dt).unwrap();
                v = adjoint_step(&tab, &sys, Some(&obj), traj.state(idx - 1), 0.0, &v, dt).unwrap();
            }
        }
        let d_ref = simpson(&y_samples, dt);
        let h_ref = simpson(&v_samples, dt);
        assert!((bundle.d[0] - d_ref).abs() <= 1e-12 * d_ref.abs().max(1.0));
        assert!((bundle.h - h_ref).abs() <= 1e-12 * h_ref.abs().max(1.0));
        for i in 0..3 {
            assert!((bundle.y_initial.get(i, 0) - y[i]).abs() <= 1e-14 * y[i].abs().max(1.0));
            assert!((bundle.v_initial.as_ref().unwrap()[i] - v[i]).abs() <= 1e-14);
        }
    }
}
