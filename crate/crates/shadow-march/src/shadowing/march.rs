//! The triangular marches: the exact variant (m = n_u) solving
//! `R_{i-1} a_i = b_{i-1} + a_{i-1}` forward by backward substitution, and
//! the split variant for an overestimated subspace, which first recurses the
//! stable/neutral block backward (`a_{i-1}^{s0} = R_{i-1}^{s0} a_i^{s0} -
//! b_{i-1}^{s0}`, plain matrix-vector products) and then solves the unstable
//! block forward with the coupling term moved to the right-hand side.

use super::spectrum::{classify_unstable, LyapunovSpectrum};
use super::sweep::SegmentRecord;
use crate::error::Result;
use crate::linalg::{back_substitute_counted, dot, Mat};

/// Coefficients and sensitivity produced by a march.
#[derive(Clone, Debug)]
pub struct MarchSolution {
    /// Superposition coefficients `a_0..a_K`, one m-vector per boundary.
    pub coefficients: Vec<Vec<f64>>,
    /// `dJ̄/ds = (Σ_i (a_iᵀ d_i + h_i) + ∫ J_s dt) / T`.
    pub sensitivity: f64,
    /// Unstable dimension the march used (m for the exact variant).
    pub unstable_count: usize,
    /// Floating-point operations spent in the triangular solves and
    /// recursions (the §-cost of the method: K(n_u² + n_u) for the exact
    /// march).
    pub flops: u64,
}

fn assemble_sensitivity(
    records: &[SegmentRecord],
    coefficients: &[Vec<f64>],
    js_integral: f64,
    total_time: f64,
) -> f64 {
    let mut acc = js_integral;
    for rec in records {
        acc += dot(&coefficients[rec.index], &rec.d) + rec.h;
    }
    acc / total_time
}

/// Algorithm for m = n_u: `a_0 = 0`, then one triangular solve per segment.
pub fn march_exact(
    records: &[SegmentRecord],
    js_integral: f64,
    total_time: f64,
) -> Result<MarchSolution> {
    assert!(!records.is_empty());
    let m = records[0].r.rows();
    let mut coefficients = Vec::with_capacity(records.len() + 1);
    coefficients.push(vec![0.0; m]);
    let mut flops = 0u64;
    for rec in records {
        let prev = coefficients.last().expect("a_0 is seeded");
        let rhs: Vec<f64> = rec.b.iter().zip(prev).map(|(b, a)| b + a).collect();
        flops += m as u64;
        coefficients.push(back_substitute_counted(&rec.r, &rhs, &mut flops)?);
    }
    let sensitivity = assemble_sensitivity(records, &coefficients, js_integral, total_time);
    Ok(MarchSolution { coefficients, sensitivity, unstable_count: m, flops })
}

/// Split march with the unstable dimension classified from the spectrum.
pub fn march_split(
    records: &[SegmentRecord],
    spectrum: &LyapunovSpectrum,
    js_integral: f64,
    total_time: f64,
    tol_neutral: f64,
) -> Result<MarchSolution> {
    let n_u = classify_unstable(spectrum, tol_neutral)?;
    march_split_with(records, n_u, js_integral, total_time)
}

/// Split march with an explicitly given unstable dimension `n_u ≤ m`.
///
/// `n_u = 0` skips the forward solve entirely; `n_u = m` leaves the
/// stable/neutral block empty and reduces bitwise to [`march_exact`].
pub fn march_split_with(
    records: &[SegmentRecord],
    n_u: usize,
    js_integral: f64,
    total_time: f64,
) -> Result<MarchSolution> {
    assert!(!records.is_empty());
    let k_segments = records.len();
    let m = records[0].r.rows();
    assert!(n_u <= m, "unstable dimension cannot exceed the tracked modes");
    let n_s = m - n_u;
    let mut flops = 0u64;

    // Backward recursion for the stable/neutral block, a_K^{s0} = 0.
    let mut a_s: Vec<Vec<f64>> = vec![vec![0.0; n_s]; k_segments + 1];
    for i in (1..=k_segments).rev() {
        let rec = &records[i - 1];
        debug_assert_eq!(rec.index, i);
        let upper = &a_s[i];
        let mut lower = vec![0.0; n_s];
        for row in 0..n_s {
            let mut acc = 0.0;
            for col in row..n_s {
                acc += rec.r.get(n_u + row, n_u + col) * upper[col];
                flops += 2;
            }
            lower[row] = acc - rec.b[n_u + row];
            flops += 1;
        }
        a_s[i - 1] = lower;
    }

    // Forward triangular solve for the unstable block, a_0^u = 0, with the
    // coupling R^{us0} a_i^{s0} moved to the right-hand side.
    let mut a_u: Vec<Vec<f64>> = vec![vec![0.0; n_u]; k_segments + 1];
    if n_u > 0 {
        let mut r_u = Mat::zeros(n_u, n_u);
        for i in 1..=k_segments {
            let rec = &records[i - 1];
            let mut rhs: Vec<f64> = (0..n_u).map(|row| rec.b[row] + a_u[i - 1][row]).collect();
            flops += n_u as u64;
            for row in 0..n_u {
                for col in 0..n_s {
                    rhs[row] -= rec.r.get(row, n_u + col) * a_s[i][col];
                    flops += 2;
                }
            }
            for row in 0..n_u {
                for col in row..n_u {
                    r_u.set(row, col, rec.r.get(row, col));
                }
            }
            a_u[i] = back_substitute_counted(&r_u, &rhs, &mut flops)?;
        }
    }

    let coefficients: Vec<Vec<f64>> = a_u
        .into_iter()
        .zip(a_s)
        .map(|(u, s)| {
            let mut a = u;
            a.extend_from_slice(&s);
            a
        })
        .collect();
    let sensitivity = assemble_sensitivity(records, &coefficients, js_integral, total_time);
    Ok(MarchSolution { coefficients, sensitivity, unstable_count: n_u, flops })
}
