//! Terminal-condition construction and the segmented backward adjoint sweep.

use super::config::MarchConfig;
use crate::dynamics::{DynamicalSystem, Objective};
use crate::error::{Result, ShadowError};
use crate::integrators::{integrate_adjoint_bundle, ButcherTableau, TrajectoryStore};
use crate::linalg::{dot, norm, thin_qr, Mat};
use crate::quadrature::SimpsonAccumulator;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Below this `|f|` the terminal particular condition is unbounded; the state
/// is effectively at an equilibrium, off the attractor.
pub const F_FLOOR: f64 = 1e-8;

/// Per-segment output of the backward sweep for segment `i` over
/// `[t_{i-1}, t_i]`: the terminal conditions `Q_i`, `γ_i` of the segment's
/// homogeneous and particular solutions, the factorization `R_{i-1}` and
/// projection `b_{i-1}` produced at its lower boundary, and the accumulated
/// sensitivity integrals `d_i`, `h_i`.
#[derive(Clone, Debug)]
pub struct SegmentRecord {
    pub index: usize,
    pub q_terminal: Mat,
    pub r: Mat,
    pub b: Vec<f64>,
    pub gamma_terminal: Vec<f64>,
    pub d: Vec<f64>,
    pub h: f64,
}

/// Everything the marches and diagnostics need from one backward sweep.
#[derive(Clone, Debug)]
pub struct SweepResult {
    /// Records in ascending segment order, 1..=K.
    pub records: Vec<SegmentRecord>,
    /// Orthonormal basis `Q_0` at t = 0.
    pub q_initial: Mat,
    /// Particular remainder `γ_0` at t = 0 (orthogonal to `Q_0`).
    pub gamma_initial: Vec<f64>,
    /// Simpson average of J over [0, T].
    pub j_mean: f64,
    /// Simpson integral of J_s over [0, T].
    pub js_integral: f64,
}

/// Terminal condition of the particular adjoint solution,
/// `γ_K = (J̄ - J(T)) f(T) / |f(T)|²`, which pins `ψ(T)ᵀf(T) = J̄ - J(T)`.
pub fn terminal_particular(
    system: &dyn DynamicalSystem,
    objective: &dyn Objective,
    u_end: &[f64],
    s: f64,
    j_mean: f64,
) -> Result<Vec<f64>> {
    let mut f = vec![0.0; system.dim()];
    system.rhs(u_end, s, &mut f);
    let f_norm = norm(&f);
    if f_norm <= F_FLOOR {
        return Err(ShadowError::NearEquilibrium { norm: f_norm });
    }
    let scale = (j_mean - objective.value(u_end, s)) / (f_norm * f_norm);
    Ok(f.iter().map(|v| scale * v).collect())
}

/// Seed the homogeneous terminal basis: QR-factor `[f(u_end), W]` with `W`
/// drawn from a seeded Gaussian and drop the first column, leaving `m`
/// orthonormal columns orthogonal to the flow direction.
///
/// A rank-deficient draw (probability zero, but possible with degenerate
/// states) is retried up to three times before the error propagates.
pub fn seed_unstable_basis(
    system: &dyn DynamicalSystem,
    u_end: &[f64],
    s: f64,
    m: usize,
    seed: u64,
) -> Result<Mat> {
    let n = system.dim();
    assert!(m + 1 <= n, "need m + 1 <= n to augment the flow direction");
    let mut f = vec![0.0; n];
    system.rhs(u_end, s, &mut f);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut last_err = None;
    for _ in 0..3 {
        let mut aug = Mat::zeros(n, m + 1);
        aug.col_mut(0).copy_from_slice(&f);
        for j in 1..=m {
            for i in 0..n {
                aug.set(i, j, StandardNormal.sample(&mut rng));
            }
        }
        match thin_qr(&aug) {
            Ok(qr) => {
                let mut q = Mat::zeros(n, m);
                for j in 0..m {
                    q.col_mut(j).copy_from_slice(qr.q.col(j + 1));
                }
                return Ok(q);
            }
            Err(e @ ShadowError::RankDeficient { .. }) => last_err = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last_err.expect("three failed attempts leave an error"))
}

pub(crate) enum SweepMode<'a> {
    /// Full sweep: particular solution, J̄ and the sensitivity integrals.
    Full(&'a dyn Objective),
    /// Homogeneous columns only (Lyapunov spectrum); γ, b, h stay zero.
    SpectrumOnly,
}

/// The backward adjoint sweep of the stabilized march.
///
/// Spins the seeded basis down from T + T0f to T with re-orthonormalization
/// every segment (discarding those factors), then walks the K production
/// segments backward: evolve the bundle, factor `Y_i(t_{i-1}) = Q_{i-1}
/// R_{i-1}`, set `b_{i-1} = -Q_{i-1}ᵀ v_i(t_{i-1})` and
/// `γ_{i-1} = v_i(t_{i-1}) + Q_{i-1} b_{i-1}`, and record `d_i`, `h_i`.
pub fn backward_sweep(
    system: &dyn DynamicalSystem,
    objective: &dyn Objective,
    tableau: &ButcherTableau,
    trajectory: &TrajectoryStore,
    s: f64,
    config: &MarchConfig,
) -> Result<SweepResult> {
    sweep_impl(system, SweepMode::Full(objective), tableau, trajectory, s, config)
}

/// Spectrum-only variant of [`backward_sweep`]: skips the particular solution
/// entirely, so it works for states where `|f|` is below the terminal floor.
pub fn spectrum_sweep(
    system: &dyn DynamicalSystem,
    tableau: &ButcherTableau,
    trajectory: &TrajectoryStore,
    s: f64,
    config: &MarchConfig,
) -> Result<SweepResult> {
    sweep_impl(system, SweepMode::SpectrumOnly, tableau, trajectory, s, config)
}

pub(crate) fn sweep_impl(
    system: &dyn DynamicalSystem,
    mode: SweepMode,
    tableau: &ButcherTableau,
    trajectory: &TrajectoryStore,
    s: f64,
    config: &MarchConfig,
) -> Result<SweepResult> {
    let n = system.dim();
    let grid = config.validate(n)?;
    assert_eq!(trajectory.dim(), n, "trajectory dimension mismatch");
    assert_eq!(
        trajectory.steps(),
        grid.total_steps,
        "trajectory must cover [0, T + T0f] at the configured step"
    );
    let m = config.n_homogeneous;
    let sps = grid.steps_per_segment;
    let dt = trajectory.dt();

    // Windowed averages over [0, T], segment by segment so the quadrature
    // partition matches the defect diagnostic exactly.
    let (j_mean, js_integral) = match &mode {
        SweepMode::Full(objective) => {
            let mut j_int = 0.0;
            let mut js_int = 0.0;
            for seg in 0..grid.segments {
                let mut j_acc = SimpsonAccumulator::new(sps, dt);
                let mut js_acc = SimpsonAccumulator::new(sps, dt);
                for pos in 0..=sps {
                    let u = trajectory.state(seg * sps + pos);
                    j_acc.add(pos, objective.value(u, s));
                    js_acc.add(pos, objective.param_derivative(u, s));
                }
                j_int += j_acc.value();
                js_int += js_acc.value();
            }
            (j_int / config.total_time, js_int)
        }
        SweepMode::SpectrumOnly => (0.0, 0.0),
    };

    // Terminal basis at T + T0f, spun down to T.
    let mut q = seed_unstable_basis(system, trajectory.state(grid.total_steps), s, m, config.seed)?;
    for k in (0..grid.spin_up_final_segments).rev() {
        let lo = grid.production_steps + k * sps;
        let bundle =
            integrate_adjoint_bundle(tableau, system, trajectory, s, lo + sps, lo, &q, None)?;
        q = thin_qr(&bundle.y_initial)?.q;
    }

    let mut gamma = match &mode {
        SweepMode::Full(objective) => terminal_particular(
            system,
            *objective,
            trajectory.state(grid.production_steps),
            s,
            j_mean,
        )?,
        SweepMode::SpectrumOnly => vec![0.0; n],
    };

    let mut records: Vec<SegmentRecord> = Vec::with_capacity(grid.segments);
    for i in (1..=grid.segments).rev() {
        let lo = (i - 1) * sps;
        let hi = i * sps;
        let particular = match &mode {
            SweepMode::Full(objective) => Some((*objective, gamma.as_slice())),
            SweepMode::SpectrumOnly => None,
        };
        let bundle =
            integrate_adjoint_bundle(tableau, system, trajectory, s, hi, lo, &q, particular)?;
        let qr = thin_qr(&bundle.y_initial)?;

        let (b, gamma_lower) = match bundle.v_initial {
            Some(v) => {
                let mut b = vec![0.0; m];
                qr.q.matvec_transpose(&v, &mut b);
                for bv in &mut b {
                    *bv = -*bv;
                }
                let mut g = v;
                for j in 0..m {
                    let col = qr.q.col(j);
                    for i in 0..n {
                        g[i] += b[j] * col[i];
                    }
                }
                (b, g)
            }
            None => (vec![0.0; m], vec![0.0; n]),
        };

        records.push(SegmentRecord {
            index: i,
            q_terminal: q,
            r: qr.r,
            b,
            gamma_terminal: gamma,
            d: bundle.d,
            h: bundle.h,
        });
        q = qr.q;
        gamma = gamma_lower;
    }
    records.reverse();

    Ok(SweepResult { records, q_initial: q, gamma_initial: gamma, j_mean, js_integral })
}
