//! Superposition of the adjoint solution from the stored segment data,
//! `ψ(t) = Y_i(t) a_i + v_i(t)`, with the boundedness and neutral-defect
//! diagnostics evaluated along the way.

use super::config::MarchConfig;
use super::march::MarchSolution;
use super::sweep::SweepResult;
use crate::dynamics::{DynamicalSystem, Objective};
use crate::error::{Result, ShadowError};
use crate::integrators::{AdjointStepper, ButcherTableau, TrajectoryStore};
use crate::linalg::{dot, norm};
use crate::quadrature::SimpsonAccumulator;

/// Adjoint state at one requested trajectory step.
#[derive(Clone, Debug)]
pub struct AdjointSample {
    pub step: usize,
    pub time: f64,
    pub psi: Vec<f64>,
    pub psi_dot_f: f64,
}

#[derive(Clone, Debug)]
pub struct AdjointReconstruction {
    /// Samples at the requested steps, ascending.
    pub samples: Vec<AdjointSample>,
    /// `|(1/T) ∫ ψᵀf dt|` over [0, T], composite Simpson per segment.
    pub neutral_defect: f64,
    /// Max `‖ψ‖` over every integrator step in [0, T].
    pub max_norm: f64,
    /// Max `‖ψ‖` over the segment boundaries only.
    pub max_boundary_norm: f64,
    /// Max over steps of `|ψᵀf + J - J̄|`, the pointwise shadowing identity
    /// residual (zero in exact arithmetic for the continuous march).
    pub identity_max_error: f64,
}

/// Adjoint values at the segment boundaries without re-integration:
/// `ψ(t_i) = Q_i a_i + γ_i`, i = 0..=K.
pub fn boundary_values(sweep: &SweepResult, solution: &MarchSolution) -> Vec<Vec<f64>> {
    let n = sweep.q_initial.rows();
    let mut out = Vec::with_capacity(sweep.records.len() + 1);
    let mut psi0 = sweep.gamma_initial.clone();
    let mut tmp = vec![0.0; n];
    sweep.q_initial.matvec(&solution.coefficients[0], &mut tmp);
    for (a, b) in psi0.iter_mut().zip(&tmp) {
        *a += b;
    }
    out.push(psi0);
    for rec in &sweep.records {
        let mut psi = rec.gamma_terminal.clone();
        rec.q_terminal.matvec(&solution.coefficients[rec.index], &mut tmp);
        for (a, b) in psi.iter_mut().zip(&tmp) {
            *a += b;
        }
        out.push(psi);
    }
    out
}

/// Re-run the segment bundles and superpose the adjoint at every step,
/// collecting the requested samples and the march diagnostics.
pub fn reconstruct_adjoint(
    system: &dyn DynamicalSystem,
    objective: &dyn Objective,
    tableau: &ButcherTableau,
    trajectory: &TrajectoryStore,
    s: f64,
    config: &MarchConfig,
    sweep: &SweepResult,
    solution: &MarchSolution,
    sample_steps: &[usize],
) -> Result<AdjointReconstruction> {
    let n = system.dim();
    let grid = config.validate(n)?;
    let sps = grid.steps_per_segment;
    let dt = trajectory.dt();

    let mut wanted: Vec<usize> = sample_steps.to_vec();
    wanted.sort_unstable();
    wanted.dedup();
    assert!(
        wanted.last().is_none_or(|&last| last <= grid.production_steps),
        "adjoint samples must lie in [0, T]"
    );
    let mut collected: Vec<Option<AdjointSample>> = vec![None; wanted.len()];

    let mut stepper = AdjointStepper::new(tableau, n);
    let mut psi = vec![0.0; n];
    let mut f = vec![0.0; n];
    let mut defect_integral = 0.0;
    let mut max_norm: f64 = 0.0;
    let mut max_boundary_norm: f64 = 0.0;
    let mut identity_max_error: f64 = 0.0;

    for rec in sweep.records.iter().rev() {
        let i = rec.index;
        let lo = (i - 1) * sps;
        let hi = i * sps;
        let a_i = &solution.coefficients[i];
        let mut y = rec.q_terminal.clone();
        let mut v = rec.gamma_terminal.clone();
        let mut acc = SimpsonAccumulator::new(sps, dt);

        let mut idx = hi;
        loop {
            y.matvec(a_i, &mut psi);
            for (p, vv) in psi.iter_mut().zip(&v) {
                *p += vv;
            }
            let u = trajectory.state(idx);
            system.rhs(u, s, &mut f);
            let pf = dot(&psi, &f);
            acc.add(idx - lo, pf);

            let p_norm = norm(&psi);
            max_norm = max_norm.max(p_norm);
            if idx == hi || idx == lo {
                max_boundary_norm = max_boundary_norm.max(p_norm);
            }
            identity_max_error =
                identity_max_error.max((pf + objective.value(u, s) - sweep.j_mean).abs());

            // The upper segment owns shared boundary steps; slots are filled
            // once, in descending segment order.
            if let Ok(slot) = wanted.binary_search(&idx) {
                if collected[slot].is_none() {
                    collected[slot] = Some(AdjointSample {
                        step: idx,
                        time: trajectory.time(idx),
                        psi: psi.clone(),
                        psi_dot_f: pf,
                    });
                }
            }

            if idx == lo {
                break;
            }
            idx -= 1;
            stepper.prepare(tableau, system, trajectory.state(idx), s, dt, Some(objective));
            for j in 0..y.cols() {
                stepper
                    .step_column(tableau, system, s, dt, y.col_mut(j), false)
                    .map_err(|_| ShadowError::Diverged { step: idx })?;
            }
            stepper
                .step_column(tableau, system, s, dt, &mut v, true)
                .map_err(|_| ShadowError::Diverged { step: idx })?;
        }
        defect_integral += acc.value();
    }

    let samples = collected
        .into_iter()
        .map(|s| s.expect("every requested step lies in some segment"))
        .collect();

    Ok(AdjointReconstruction {
        samples,
        neutral_defect: (defect_integral / config.total_time).abs(),
        max_norm,
        max_boundary_norm,
        identity_max_error,
    })
}
