//! March configuration and the derived segment grid.

use crate::error::{Result, ShadowError};

/// Parameters of a stabilized-march run.
///
/// Invariants (checked by [`MarchConfig::validate`]): `segment_time/dt` is an
/// even positive integer (the Simpson rule runs over the steps of each
/// segment), `total_time/segment_time` is a positive integer, the spin-up
/// times are nonnegative multiples of `dt` and `segment_time` respectively,
/// and `1 ≤ n_homogeneous < n`.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarchConfig {
    /// Production integration length T.
    pub total_time: f64,
    /// Segment length ΔT between QR re-orthonormalizations.
    pub segment_time: f64,
    /// Integrator time step Δt.
    pub dt: f64,
    /// Number of homogeneous adjoint solutions m.
    pub n_homogeneous: usize,
    /// Primal spin-up time T0i before t = 0.
    pub spin_up_initial: f64,
    /// Adjoint spin-up time T0f after t = T.
    pub spin_up_final: f64,
    /// Threshold separating unstable from neutral exponents; when absent it
    /// defaults to `0.05·max(1, λ_1)`.
    #[serde(default)]
    pub tol_neutral: Option<f64>,
    /// Seed for the random terminal basis (and, in ensemble drivers, the
    /// initial conditions).
    pub seed: u64,
}

/// Step counts derived from a validated [`MarchConfig`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SegmentGrid {
    /// Number of production segments K.
    pub segments: usize,
    /// Steps per segment (even).
    pub steps_per_segment: usize,
    /// Adjoint spin-up segments between T and T + T0f.
    pub spin_up_final_segments: usize,
    /// Primal spin-up steps before t = 0.
    pub spin_up_initial_steps: usize,
    /// Steps in the production window [0, T].
    pub production_steps: usize,
    /// Steps in the stored window [0, T + T0f].
    pub total_steps: usize,
}

fn integer_ratio(num: f64, den: f64, what: &str) -> Result<usize> {
    let ratio = num / den;
    let rounded = ratio.round();
    if rounded < 0.0 || (ratio - rounded).abs() > 1e-9 * ratio.abs().max(1.0) {
        return Err(ShadowError::InvalidConfig(format!(
            "{what}: {num} is not a nonnegative integer multiple of {den}"
        )));
    }
    Ok(rounded as usize)
}

impl MarchConfig {
    pub fn validate(&self, dim: usize) -> Result<SegmentGrid> {
        if !(self.dt > 0.0) {
            return Err(ShadowError::InvalidConfig("dt must be positive".into()));
        }
        if !(self.segment_time > 0.0) || !(self.total_time > 0.0) {
            return Err(ShadowError::InvalidConfig(
                "segment_time and total_time must be positive".into(),
            ));
        }
        if self.spin_up_initial < 0.0 || self.spin_up_final < 0.0 {
            return Err(ShadowError::InvalidConfig("spin-up times must be nonnegative".into()));
        }

        let steps_per_segment = integer_ratio(self.segment_time, self.dt, "segment_time/dt")?;
        if steps_per_segment == 0 || steps_per_segment % 2 != 0 {
            return Err(ShadowError::InvalidConfig(format!(
                "segment_time/dt must be an even positive integer for the Simpson rule, got {steps_per_segment}"
            )));
        }
        let segments = integer_ratio(self.total_time, self.segment_time, "total_time/segment_time")?;
        if segments == 0 {
            return Err(ShadowError::InvalidConfig(
                "total_time must contain at least one segment".into(),
            ));
        }
        let spin_up_final_segments =
            integer_ratio(self.spin_up_final, self.segment_time, "spin_up_final/segment_time")?;
        let spin_up_initial_steps =
            integer_ratio(self.spin_up_initial, self.dt, "spin_up_initial/dt")?;

        if self.n_homogeneous == 0 {
            return Err(ShadowError::InvalidConfig(
                "need at least one homogeneous solution".into(),
            ));
        }
        if self.n_homogeneous >= dim {
            return Err(ShadowError::InvalidConfig(format!(
                "n_homogeneous = {} must be below the state dimension {dim}",
                self.n_homogeneous
            )));
        }
        if let Some(tol) = self.tol_neutral {
            if !(tol > 0.0) {
                return Err(ShadowError::InvalidConfig("tol_neutral must be positive".into()));
            }
        }

        let production_steps = segments * steps_per_segment;
        Ok(SegmentGrid {
            segments,
            steps_per_segment,
            spin_up_final_segments,
            spin_up_initial_steps,
            production_steps,
            total_steps: production_steps + spin_up_final_segments * steps_per_segment,
        })
    }

    /// Classification threshold, defaulting to `0.05·max(1, λ_1)`.
    pub fn neutral_tolerance(&self, lambda_max: f64) -> f64 {
        self.tol_neutral.unwrap_or(0.05 * lambda_max.max(1.0))
    }
}
