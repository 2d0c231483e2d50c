//! Finite-time Lyapunov exponents from the segment factorizations and the
//! unstable-dimension classification.

use super::sweep::SegmentRecord;
use crate::error::{Result, ShadowError};

/// Finite-time Lyapunov exponents `λ_j = (1/T) Σ_i ln|[R_i]_jj|` over the K
/// production segments, ordered from the fastest-growing mode down.
#[derive(Clone, Debug, serde::Serialize)]
pub struct LyapunovSpectrum {
    pub exponents: Vec<f64>,
    pub segments: usize,
    pub total_time: f64,
}

impl LyapunovSpectrum {
    /// Count of leading exponents above `tol` (the Algorithm-2 while loop);
    /// stops at the first non-positive mode.
    pub fn leading_unstable(&self, tol: f64) -> usize {
        self.exponents.iter().take_while(|l| **l > tol).count()
    }

    /// Adjacent ordering violations beyond numerical noise; flagged in
    /// reports, never fatal.
    pub fn ordering_violations(&self, noise: f64) -> usize {
        self.exponents.windows(2).filter(|w| w[1] > w[0] + noise).count()
    }
}

/// Accumulate the spectrum from the per-segment `R` diagonals.
pub fn lyapunov_exponents(records: &[SegmentRecord], total_time: f64) -> Result<LyapunovSpectrum> {
    assert!(!records.is_empty(), "need at least one segment");
    assert!(total_time > 0.0);
    let m = records[0].r.rows();
    let mut sums = vec![0.0; m];
    for rec in records {
        for (j, sum) in sums.iter_mut().enumerate() {
            let diag = rec.r.get(j, j);
            if diag == 0.0 {
                return Err(ShadowError::RankDeficient { column: j });
            }
            *sum += diag.abs().ln();
        }
    }
    for sum in &mut sums {
        *sum /= total_time;
    }
    Ok(LyapunovSpectrum { exponents: sums, segments: records.len(), total_time })
}

/// Dimension of the unstable subspace: the number of leading exponents above
/// `tol_neutral`. When every tracked mode is unstable the stable/neutral
/// block is empty, the split march is unusable and the count may undershoot
/// the true `n_u`; that case is an error asking for a larger `m`.
pub fn classify_unstable(spectrum: &LyapunovSpectrum, tol_neutral: f64) -> Result<usize> {
    let n_u = spectrum.leading_unstable(tol_neutral);
    if n_u == spectrum.exponents.len() {
        return Err(ShadowError::SubspaceOverflow { m: n_u });
    }
    Ok(n_u)
}
