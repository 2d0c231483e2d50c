//! Small dense linear-algebra kernels used by the march bookkeeping:
//! a thin Householder QR with a deterministic sign convention, backward
//! substitution, and orthogonal-complement projection.
//!
//! Everything here is plain column-major storage over `Vec<f64>`; problem
//! sizes are a few hundred at most, so no blocking or external BLAS.

use crate::error::{Result, ShadowError};

/// Relative floor under which a QR diagonal marks a dependent column.
pub const RANK_TOL: f64 = 1e-10;

/// Relative floor under which a triangular diagonal is treated as singular.
pub const SINGULAR_TOL: f64 = 1e-14;

/// Dense column-major matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for j in 0..n {
            m.set(j, j, 1.0);
        }
        m
    }

    pub fn from_columns(columns: &[Vec<f64>]) -> Self {
        let cols = columns.len();
        let rows = columns.first().map_or(0, Vec::len);
        let mut m = Mat::zeros(rows, cols);
        for (j, c) in columns.iter().enumerate() {
            assert_eq!(c.len(), rows, "ragged column lengths");
            m.col_mut(j).copy_from_slice(c);
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[j * self.rows + i]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[j * self.rows + i] = v;
    }

    #[inline]
    pub fn col(&self, j: usize) -> &[f64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    #[inline]
    pub fn col_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// y = A x
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.cols);
        assert_eq!(y.len(), self.rows);
        y.fill(0.0);
        for j in 0..self.cols {
            let xj = x[j];
            let col = self.col(j);
            for i in 0..self.rows {
                y[i] += col[i] * xj;
            }
        }
    }

    /// y = Aᵀ x
    pub fn matvec_transpose(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.rows);
        assert_eq!(y.len(), self.cols);
        for j in 0..self.cols {
            y[j] = dot(self.col(j), x);
        }
    }

    /// C = A B (test-scale sizes only).
    pub fn matmul(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.rows);
        let mut c = Mat::zeros(self.rows, other.cols);
        for j in 0..other.cols {
            let (bj, cj_range) = (other.col(j), j * self.rows..(j + 1) * self.rows);
            let cj = &mut c.data[cj_range];
            for k in 0..self.cols {
                let bkj = bj[k];
                let ak = self.col(k);
                for i in 0..self.rows {
                    cj[i] += ak[i] * bkj;
                }
            }
        }
        c
    }

    pub fn transposed(&self) -> Mat {
        let mut t = Mat::zeros(self.cols, self.rows);
        for j in 0..self.cols {
            for i in 0..self.rows {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Thin QR factorization: `Q` has orthonormal columns, `R` is upper
/// triangular with a nonnegative diagonal.
#[derive(Clone, Debug)]
pub struct ThinQr {
    pub q: Mat,
    pub r: Mat,
}

/// Householder thin QR of an n×m matrix, m ≤ n.
///
/// Column sign flips are absorbed into `Q` so that `diag(R) ≥ 0`, which makes
/// segment bookkeeping reproducible across runs. Returns a rank-deficiency
/// error naming the first column whose diagonal falls below
/// `RANK_TOL · max column norm`.
pub fn thin_qr(a: &Mat) -> Result<ThinQr> {
    let (n, m) = (a.rows(), a.cols());
    assert!(m <= n, "thin QR requires at least as many rows as columns");

    let max_col_norm = (0..m).map(|j| norm(a.col(j))).fold(0.0, f64::max);
    let rank_floor = RANK_TOL * max_col_norm;

    let mut work = a.clone();
    // Reflector k lives in reflectors[k], length n-k; H_k = I - 2 v vᵀ / |v|².
    let mut reflectors: Vec<Vec<f64>> = Vec::with_capacity(m);
    for k in 0..m {
        let x0 = work.get(k, k);
        let mut norm_x2 = 0.0;
        for i in k..n {
            let v = work.get(i, k);
            norm_x2 += v * v;
        }
        let norm_x = norm_x2.sqrt();
        let alpha = if x0 >= 0.0 { -norm_x } else { norm_x };

        let mut v: Vec<f64> = (k..n).map(|i| work.get(i, k)).collect();
        v[0] -= alpha;
        let v2 = dot(&v, &v);

        if v2 > 0.0 {
            for j in k..m {
                let mut proj = 0.0;
                for i in k..n {
                    proj += v[i - k] * work.get(i, j);
                }
                let scale = 2.0 * proj / v2;
                for i in k..n {
                    let w = work.get(i, j) - scale * v[i - k];
                    work.set(i, j, w);
                }
            }
        }
        reflectors.push(if v2 > 0.0 { v } else { Vec::new() });

        if work.get(k, k).abs() <= rank_floor {
            return Err(ShadowError::RankDeficient { column: k });
        }
    }

    let mut r = Mat::zeros(m, m);
    for j in 0..m {
        for i in 0..=j {
            r.set(i, j, work.get(i, j));
        }
    }

    // Accumulate the thin Q by applying the reflectors, last to first, to the
    // leading m columns of the identity.
    let mut q = Mat::zeros(n, m);
    for j in 0..m {
        q.set(j, j, 1.0);
    }
    for k in (0..m).rev() {
        let v = &reflectors[k];
        if v.is_empty() {
            continue;
        }
        let v2 = dot(v, v);
        for j in 0..m {
            let mut proj = 0.0;
            for i in k..n {
                proj += v[i - k] * q.get(i, j);
            }
            let scale = 2.0 * proj / v2;
            for i in k..n {
                let w = q.get(i, j) - scale * v[i - k];
                q.set(i, j, w);
            }
        }
    }

    for j in 0..m {
        if r.get(j, j) < 0.0 {
            for c in j..m {
                let v = -r.get(j, c);
                r.set(j, c, v);
            }
            for i in 0..n {
                let v = -q.get(i, j);
                q.set(i, j, v);
            }
        }
    }

    Ok(ThinQr { q, r })
}

/// Solve `R x = rhs` for upper-triangular `R` by backward substitution.
pub fn back_substitute(r: &Mat, rhs: &[f64]) -> Result<Vec<f64>> {
    let mut flops = 0;
    back_substitute_counted(r, rhs, &mut flops)
}

/// Backward substitution with a flop counter (m² multiply-adds plus m
/// divisions per solve, feeding the cost-model report).
pub fn back_substitute_counted(r: &Mat, rhs: &[f64], flops: &mut u64) -> Result<Vec<f64>> {
    let m = r.rows();
    assert_eq!(r.cols(), m, "back substitution needs a square matrix");
    assert_eq!(rhs.len(), m);

    let floor = SINGULAR_TOL * r.max_abs();
    let mut x = vec![0.0; m];
    for j in (0..m).rev() {
        let diag = r.get(j, j);
        if diag.abs() <= floor {
            return Err(ShadowError::SingularSystem { index: j });
        }
        let mut acc = rhs[j];
        for k in j + 1..m {
            acc -= r.get(j, k) * x[k];
        }
        x[j] = acc / diag;
        *flops += 2 * (m - j - 1) as u64 + 1;
    }
    Ok(x)
}

/// `(I - Q Qᵀ) v`: the component of `v` orthogonal to the span of `Q`'s
/// columns.
pub fn project_out(q: &Mat, v: &[f64]) -> Vec<f64> {
    assert_eq!(v.len(), q.rows());
    let mut coeffs = vec![0.0; q.cols()];
    q.matvec_transpose(v, &mut coeffs);
    let mut out = v.to_vec();
    for j in 0..q.cols() {
        let c = coeffs[j];
        let col = q.col(j);
        for i in 0..out.len() {
            out[i] -= c * col[i];
        }
    }
    out
}
