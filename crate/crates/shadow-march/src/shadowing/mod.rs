//! The stabilized march: terminal-condition construction, segmented backward
//! adjoint sweep with re-orthonormalization, Lyapunov spectrum and
//! unstable-dimension estimation, the triangular marches, and sensitivity
//! assembly.

mod config;
mod driver;
mod march;
mod reconstruct;
mod spectrum;
mod sweep;

pub use config::{MarchConfig, SegmentGrid};
pub use driver::{
    run_march, run_march_on_trajectory, MarchAlgorithm, MarchOutcome, SensitivityReport,
};
pub use march::{march_exact, march_split, march_split_with, MarchSolution};
pub use reconstruct::{
    boundary_values, reconstruct_adjoint, AdjointReconstruction, AdjointSample,
};
pub use spectrum::{classify_unstable, lyapunov_exponents, LyapunovSpectrum};
pub use sweep::{
    backward_sweep, seed_unstable_basis, spectrum_sweep, terminal_particular, SegmentRecord,
    SweepResult, F_FLOOR,
};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{Lorenz63, MeanZ};
    use crate::integrators::{advance, ButcherTableau};
    use crate::linalg::norm;

    fn lorenz_march(total_time: f64, m: usize, algorithm: MarchAlgorithm) -> MarchOutcome {
        let sys = Lorenz63::default();
        let tab = ButcherTableau::rk4();
        let config = MarchConfig {
            total_time,
            segment_time: 0.2,
            dt: 0.01,
            n_homogeneous: m,
            spin_up_initial: 20.0,
            spin_up_final: 5.0,
            tol_neutral: None,
            seed: 7,
        };
        run_march(&sys, &MeanZ, &tab, &config, 0.0, algorithm, &[4.0, -3.0, 18.0], &[])
            .unwrap()
    }

    #[test]
    fn lorenz_end_to_end_exact() {
        let out = lorenz_march(10.0, 1, MarchAlgorithm::Exact);
        assert_eq!(out.report.algorithm, "exact");
        // a_0 is pinned to zero.
        assert_eq!(out.solution.coefficients[0], vec![0.0]);
        // One positive exponent near 0.9 for these parameters.
        assert!(out.spectrum.exponents[0] > 0.3 && out.spectrum.exponents[0] < 1.5);
        // The shadowing adjoint stays moderate over this window.
        assert!(out.reconstruction.max_norm.is_finite());
        assert!(out.report.sensitivity.is_finite());
        assert_eq!(out.report.cost_model_flops, 50 * 2);
    }

    #[test]
    fn auto_picks_exact_when_all_modes_unstable() {
        let out = lorenz_march(10.0, 1, MarchAlgorithm::Auto);
        assert_eq!(out.report.algorithm, "exact");
        assert_eq!(out.report.march_unstable_count, 1);
    }

    #[test]
    fn auto_picks_split_with_overestimated_subspace() {
        let out = lorenz_march(10.0, 2, MarchAlgorithm::Auto);
        assert_eq!(out.report.algorithm, "split");
        assert_eq!(out.report.n_unstable, 1);
        assert_eq!(out.solution.coefficients[0][0], 0.0, "a_0^u = 0");
        let k = out.sweep.records.len();
        assert_eq!(out.solution.coefficients[k][1], 0.0, "a_K^{{s0}} = 0");
    }

    #[test]
    fn boundary_continuity_two_sided() {
        // The reconstructed adjoint at each interior boundary (evaluated from
        // the upper segment) matches Q_i a_i + γ_i (the lower segment's
        // terminal representation) to superposition accuracy.
        let sys = Lorenz63::default();
        let tab = ButcherTableau::rk4();
        let config = MarchConfig {
            total_time: 4.0,
            segment_time: 0.2,
            dt: 0.01,
            n_homogeneous: 2,
            spin_up_initial: 20.0,
            spin_up_final: 2.0,
            tol_neutral: None,
            seed: 3,
        };
        let grid = config.validate(3).unwrap();
        let u_start = [1.0, 1.0, 20.0];
        let sps = grid.steps_per_segment;
        let boundaries: Vec<usize> = (0..=grid.segments).map(|i| i * sps).collect();
        let out = run_march(
            &sys,
            &MeanZ,
            &tab,
            &config,
            0.0,
            MarchAlgorithm::Split,
            &u_start,
            &boundaries,
        )
        .unwrap();

        let direct = boundary_values(&out.sweep, &out.solution);
        assert_eq!(direct.len(), out.reconstruction.samples.len());
        for (sample, expect) in out.reconstruction.samples.iter().zip(&direct) {
            let scale = norm(expect).max(1e-30);
            let diff: f64 = sample
                .psi
                .iter()
                .zip(expect)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            assert!(
                diff <= 1e-12 * scale,
                "two-sided boundary mismatch at step {}: {diff:.3e}",
                sample.step
            );
        }
    }

    #[test]
    fn terminal_identity_improves_with_spin_up() {
        // |ψ(T)ᵀf(T) - (J̄ - J(T))| shrinks as the homogeneous spin-up grows
        // (exact only in the converged-subspace limit).
        let sys = Lorenz63::default();
        let tab = ButcherTableau::rk4();
        let u_start = [2.0, 1.0, 14.0];
        let residual = |spin_up_final: f64| -> f64 {
            let config = MarchConfig {
                total_time: 8.0,
                segment_time: 0.2,
                dt: 0.01,
                n_homogeneous: 1,
                spin_up_initial: 30.0,
                spin_up_final,
                tol_neutral: None,
                seed: 11,
            };
            let grid = config.validate(3).unwrap();
            let out = run_march(
                &sys,
                &MeanZ,
                &tab,
                &config,
                0.0,
                MarchAlgorithm::Exact,
                &u_start,
                &[grid.production_steps],
            )
            .unwrap();
            let sample = &out.reconstruction.samples[0];
            let j_end = out.trajectory.state(grid.production_steps)[2];
            (sample.psi_dot_f - (out.sweep.j_mean - j_end)).abs()
        };
        let coarse = residual(0.4);
        let fine = residual(8.0);
        assert!(
            fine < coarse,
            "terminal identity residual should shrink with spin-up: {coarse:.3e} -> {fine:.3e}"
        );
        // The converged value is floored by the Δt⁴ discretization of the
        // homogeneous columns, not by the spin-up length.
        assert!(fine < 1e-4, "converged spin-up residual too large: {fine:.3e}");
    }

    #[test]
    fn spectrum_only_sweep_matches_full_sweep_spectrum() {
        let sys = Lorenz63::default();
        let tab = ButcherTableau::rk4();
        let config = MarchConfig {
            total_time: 5.0,
            segment_time: 0.2,
            dt: 0.01,
            n_homogeneous: 2,
            spin_up_initial: 10.0,
            spin_up_final: 2.0,
            tol_neutral: None,
            seed: 5,
        };
        let grid = config.validate(3).unwrap();
        let u0 = advance(&tab, &sys, &[0.5, 0.5, 12.0], 0.0, config.dt, grid.spin_up_initial_steps)
            .unwrap();
        let traj = crate::integrators::integrate_primal(
            &tab,
            &sys,
            &u0,
            0.0,
            config.dt,
            grid.total_steps,
            0.0,
        )
        .unwrap();
        let full = backward_sweep(&sys, &MeanZ, &tab, &traj, 0.0, &config).unwrap();
        let spec_only = spectrum_sweep(&sys, &tab, &traj, 0.0, &config).unwrap();
        let a = lyapunov_exponents(&full.records, config.total_time).unwrap();
        let b = lyapunov_exponents(&spec_only.records, config.total_time).unwrap();
        for (x, y) in a.exponents.iter().zip(&b.exponents) {
            assert_eq!(x.to_bits(), y.to_bits(), "homogeneous path must not depend on the source");
        }
        for rec in &spec_only.records {
            assert_eq!(rec.h, 0.0);
        }
    }
}
