//! End-to-end march driver: primal spin-up and solve, backward sweep,
//! spectrum, triangular march, reconstruction, and the run report.

use super::config::MarchConfig;
use super::march::{march_exact, march_split_with, MarchSolution};
use super::reconstruct::{reconstruct_adjoint, AdjointReconstruction};
use super::spectrum::{classify_unstable, lyapunov_exponents, LyapunovSpectrum};
use super::sweep::{backward_sweep, SweepResult};
use crate::dynamics::{DynamicalSystem, Objective};
use crate::error::Result;
use crate::integrators::{advance, integrate_primal, ButcherTableau, TrajectoryStore};

/// Which march resolves the coefficients.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MarchAlgorithm {
    /// Caller asserts m = n_u (Algorithm for the exactly known subspace).
    Exact,
    /// Classify n_u from the spectrum, then run the split recursions.
    Split,
    /// Split when the spectrum shows m > n_u, exact otherwise.
    Auto,
}

impl MarchAlgorithm {
    pub fn as_str(self) -> &'static str {
        match self {
            MarchAlgorithm::Exact => "exact",
            MarchAlgorithm::Split => "split",
            MarchAlgorithm::Auto => "auto",
        }
    }
}

/// Everything a run produces, for reporting and for the verification
/// oracles.
#[derive(Debug)]
pub struct MarchOutcome {
    pub trajectory: TrajectoryStore,
    pub sweep: SweepResult,
    pub spectrum: LyapunovSpectrum,
    pub solution: MarchSolution,
    pub reconstruction: AdjointReconstruction,
    pub report: SensitivityReport,
}

/// Scalar summary of one march run.
#[derive(Clone, Debug, serde::Serialize)]
pub struct SensitivityReport {
    pub system: String,
    pub objective: String,
    pub tableau: String,
    /// March actually used: "exact" or "split".
    pub algorithm: String,
    pub parameter: f64,
    pub sensitivity: f64,
    pub j_mean: f64,
    pub lyapunov_exponents: Vec<f64>,
    pub lyapunov_ordering_violations: usize,
    /// Leading exponents above the neutral tolerance (spectral diagnosis).
    pub n_unstable: usize,
    /// Unstable dimension the march used (m for the exact variant).
    pub march_unstable_count: usize,
    pub tol_neutral: f64,
    pub neutral_defect: f64,
    pub max_adjoint_norm: f64,
    pub max_boundary_adjoint_norm: f64,
    pub identity_max_error: f64,
    pub segments: usize,
    pub steps_per_segment: usize,
    pub n_homogeneous: usize,
    /// Flops actually spent in the triangular solves/recursions.
    pub triangular_flops: u64,
    /// The cost model K(n_u² + n_u) for the resolved unstable dimension.
    pub cost_model_flops: u64,
    pub seed: u64,
}

/// Run the full stabilized march from a pre-spin-up state at t = -T0i.
///
/// `sample_steps` selects trajectory steps in [0, T] at which the
/// reconstructed adjoint is returned.
pub fn run_march(
    system: &dyn DynamicalSystem,
    objective: &dyn Objective,
    tableau: &ButcherTableau,
    config: &MarchConfig,
    s: f64,
    algorithm: MarchAlgorithm,
    u_start: &[f64],
    sample_steps: &[usize],
) -> Result<MarchOutcome> {
    let grid = config.validate(system.dim())?;
    let u0 = advance(tableau, system, u_start, s, config.dt, grid.spin_up_initial_steps)?;
    let trajectory =
        integrate_primal(tableau, system, &u0, s, config.dt, grid.total_steps, 0.0)?;
    run_march_on_trajectory(
        system,
        objective,
        tableau,
        config,
        s,
        algorithm,
        trajectory,
        sample_steps,
    )
}

/// As [`run_march`], but over an already computed trajectory covering
/// [0, T + T0f].
#[allow(clippy::too_many_arguments)]
pub fn run_march_on_trajectory(
    system: &dyn DynamicalSystem,
    objective: &dyn Objective,
    tableau: &ButcherTableau,
    config: &MarchConfig,
    s: f64,
    algorithm: MarchAlgorithm,
    trajectory: TrajectoryStore,
    sample_steps: &[usize],
) -> Result<MarchOutcome> {
    let grid = config.validate(system.dim())?;
    let sweep = backward_sweep(system, objective, tableau, &trajectory, s, config)?;
    let spectrum = lyapunov_exponents(&sweep.records, config.total_time)?;
    let tol = config.neutral_tolerance(spectrum.exponents[0]);
    let n_unstable = spectrum.leading_unstable(tol);
    let m = config.n_homogeneous;

    let (solution, used) = match algorithm {
        MarchAlgorithm::Exact => {
            (march_exact(&sweep.records, sweep.js_integral, config.total_time)?, "exact")
        }
        MarchAlgorithm::Split => {
            let n_u = classify_unstable(&spectrum, tol)?;
            (march_split_with(&sweep.records, n_u, sweep.js_integral, config.total_time)?, "split")
        }
        MarchAlgorithm::Auto => {
            if n_unstable < m {
                (
                    march_split_with(
                        &sweep.records,
                        n_unstable,
                        sweep.js_integral,
                        config.total_time,
                    )?,
                    "split",
                )
            } else {
                (march_exact(&sweep.records, sweep.js_integral, config.total_time)?, "exact")
            }
        }
    };

    let reconstruction = reconstruct_adjoint(
        system,
        objective,
        tableau,
        &trajectory,
        s,
        config,
        &sweep,
        &solution,
        sample_steps,
    )?;

    let n_u_used = solution.unstable_count;
    let report = SensitivityReport {
        system: system.name().to_string(),
        objective: objective.name().to_string(),
        tableau: tableau.name().to_string(),
        algorithm: used.to_string(),
        parameter: s,
        sensitivity: solution.sensitivity,
        j_mean: sweep.j_mean,
        lyapunov_exponents: spectrum.exponents.clone(),
        lyapunov_ordering_violations: spectrum.ordering_violations(1e-9),
        n_unstable,
        march_unstable_count: n_u_used,
        tol_neutral: tol,
        neutral_defect: reconstruction.neutral_defect,
        max_adjoint_norm: reconstruction.max_norm,
        max_boundary_adjoint_norm: reconstruction.max_boundary_norm,
        identity_max_error: reconstruction.identity_max_error,
        segments: grid.segments,
        steps_per_segment: grid.steps_per_segment,
        n_homogeneous: m,
        triangular_flops: solution.flops,
        cost_model_flops: (grid.segments * (n_u_used * n_u_used + n_u_used)) as u64,
        seed: config.seed,
    };

    Ok(MarchOutcome { trajectory, sweep, spectrum, solution, reconstruction, report })
}
