//! Small dense linear algebra kernels.
//!
//! Everything here is written against plain `Vec<f64>` storage with fixed
//! summation order, so results are bit-identical regardless of thread
//! count or build host. Problem sizes in this crate are small (tens of
//! columns), which keeps the O(mk²) Householder QR comfortably cheap.

use crate::error::{CvError, Result};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    nrows: usize,
    ncols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Mat { nrows, ncols, data: vec![0.0; nrows * ncols] }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(nrows * ncols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != ncols {
                return Err(CvError::invalid(format!(
                    "row {i} has {} entries, expected {ncols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Mat { nrows, ncols, data })
    }

    pub fn from_fn(nrows: usize, ncols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Mat::zeros(nrows, ncols);
        for i in 0..nrows {
            for j in 0..ncols {
                m.data[i * ncols + j] = f(i, j);
            }
        }
        m
    }

    #[inline]
    pub fn nrows(&self) -> usize {
        self.nrows
    }

    #[inline]
    pub fn ncols(&self) -> usize {
        self.ncols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.ncols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.ncols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.ncols..(i + 1) * self.ncols]
    }

    pub fn col(&self, j: usize) -> Vec<f64> {
        (0..self.nrows).map(|i| self.get(i, j)).collect()
    }

    /// A·v
    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.ncols);
        (0..self.nrows)
            .map(|i| dot(self.row(i), v))
            .collect()
    }

    /// Aᵀ·v
    pub fn t_matvec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.nrows);
        let mut out = vec![0.0; self.ncols];
        for i in 0..self.nrows {
            let row = self.row(i);
            let vi = v[i];
            for j in 0..self.ncols {
                out[j] += row[j] * vi;
            }
        }
        out
    }

    /// AᵀA (ncols × ncols, symmetric).
    pub fn ata(&self) -> Mat {
        let k = self.ncols;
        let mut out = Mat::zeros(k, k);
        for r in 0..self.nrows {
            let row = self.row(r);
            for i in 0..k {
                for j in i..k {
                    let v = out.get(i, j) + row[i] * row[j];
                    out.set(i, j, v);
                }
            }
        }
        for i in 0..k {
            for j in 0..i {
                out.set(i, j, out.get(j, i));
            }
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut s = 0.0;
    for i in 0..a.len() {
        s += a[i] * b[i];
    }
    s
}

pub fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.iter().sum::<f64>() / v.len() as f64
}

/// Unbiased sample variance (n−1 denominator); 0 for fewer than 2 values.
pub fn sample_var(v: &[f64]) -> f64 {
    let n = v.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(v);
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64
}

pub fn sample_sd(v: &[f64]) -> f64 {
    sample_var(v).sqrt()
}

/// Pearson correlation; exactly equal vectors give 1, any other
/// zero-variance case gives 0.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    if a == b {
        return 1.0;
    }
    let (ma, mb) = (mean(a), mean(b));
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for i in 0..a.len() {
        let da = a[i] - ma;
        let db = b[i] - mb;
        cov += da * db;
        va += da * da;
        vb += db * db;
    }
    let denom = (va * vb).sqrt();
    if denom == 0.0 {
        0.0
    } else {
        (cov / denom).clamp(-1.0, 1.0)
    }
}

/// Least-squares solution of `X·b ≈ y` with diagnostics.
#[derive(Debug, Clone)]
pub struct LeastSquares {
    pub coeffs: Vec<f64>,
    /// Diagonal of the hat matrix H = X(XᵀX)⁻¹Xᵀ.
    pub hat: Vec<f64>,
    pub fitted: Vec<f64>,
    pub residuals: Vec<f64>,
    pub rss: f64,
}

/// Householder QR with column pivoting.
///
/// Returns the least-squares coefficients, hat diagonal, and residuals,
/// or the (0-based) indices of the columns found to be collinear with
/// earlier ones.
pub fn least_squares(x: &Mat, y: &[f64]) -> std::result::Result<LeastSquares, Vec<usize>> {
    let m = x.nrows();
    let k = x.ncols();
    assert_eq!(y.len(), m);
    assert!(m >= k, "least_squares requires nrows >= ncols");

    // Working copy, column-pivoted in place. Householder vectors live
    // below the diagonal of `a`; their leading components and the betas
    // are kept separately because the diagonal holds R.
    let mut a = x.clone();
    let mut piv: Vec<usize> = (0..k).collect();
    let mut betas = vec![0.0; k];
    let mut v0s = vec![0.0; k];

    for j in 0..k {
        // Pivot on the largest remaining column norm (recomputed exactly).
        let mut best = j;
        let mut best_norm = -1.0;
        for c in j..k {
            let mut s = 0.0;
            for i in j..m {
                let v = a.get(i, c);
                s += v * v;
            }
            if s > best_norm {
                best_norm = s;
                best = c;
            }
        }
        if best != j {
            for i in 0..m {
                let t = a.get(i, j);
                a.set(i, j, a.get(i, best));
                a.set(i, best, t);
            }
            piv.swap(j, best);
        }

        // Householder reflection zeroing column j below the diagonal.
        let norm = best_norm.max(0.0).sqrt();
        if norm == 0.0 {
            betas[j] = 0.0;
            continue;
        }
        let x0 = a.get(j, j);
        let alpha = if x0 >= 0.0 { -norm } else { norm };
        let v0 = x0 - alpha;
        let mut vtv = v0 * v0;
        for i in j + 1..m {
            let v = a.get(i, j);
            vtv += v * v;
        }
        let beta = if vtv == 0.0 { 0.0 } else { 2.0 / vtv };
        betas[j] = beta;
        v0s[j] = v0;
        a.set(j, j, alpha);

        // Apply H = I − beta·v·vᵀ to the remaining columns.
        for c in j + 1..k {
            let mut s = v0 * a.get(j, c);
            for i in j + 1..m {
                s += a.get(i, j) * a.get(i, c);
            }
            s *= beta;
            a.set(j, c, a.get(j, c) - s * v0);
            for i in j + 1..m {
                a.set(i, c, a.get(i, c) - s * a.get(i, j));
            }
        }
    }

    // Rank detection against the leading diagonal magnitude.
    let r00 = a.get(0, 0).abs();
    let tol = r00 * f64::EPSILON * (m.max(k) as f64) * 16.0;
    let mut rank = 0;
    for j in 0..k {
        if a.get(j, j).abs() > tol {
            rank += 1;
        } else {
            break;
        }
    }
    if rank < k || r00 == 0.0 {
        let mut collinear: Vec<usize> = piv[rank..].to_vec();
        collinear.sort_unstable();
        return Err(collinear);
    }

    // qty = Qᵀ·y, applying reflections in factorization order.
    let mut qty = y.to_vec();
    for j in 0..k {
        let beta = betas[j];
        if beta == 0.0 {
            continue;
        }
        let v0 = v0s[j];
        let mut s = v0 * qty[j];
        for i in j + 1..m {
            s += a.get(i, j) * qty[i];
        }
        s *= beta;
        qty[j] -= s * v0;
        for i in j + 1..m {
            qty[i] -= s * a.get(i, j);
        }
    }

    // Back substitution: R·b_piv = qty[0..k].
    let mut b_piv = vec![0.0; k];
    for j in (0..k).rev() {
        let mut s = qty[j];
        for c in j + 1..k {
            s -= a.get(j, c) * b_piv[c];
        }
        b_piv[j] = s / a.get(j, j);
    }
    let mut coeffs = vec![0.0; k];
    for j in 0..k {
        coeffs[piv[j]] = b_piv[j];
    }

    // Thin Q (m×k) for the hat diagonal: apply reflections in reverse
    // order to the truncated identity.
    let mut q1 = Mat::zeros(m, k);
    for j in 0..k {
        q1.set(j, j, 1.0);
    }
    for j in (0..k).rev() {
        let beta = betas[j];
        if beta == 0.0 {
            continue;
        }
        let v0 = v0s[j];
        for c in 0..k {
            let mut s = v0 * q1.get(j, c);
            for i in j + 1..m {
                s += a.get(i, j) * q1.get(i, c);
            }
            s *= beta;
            q1.set(j, c, q1.get(j, c) - s * v0);
            for i in j + 1..m {
                q1.set(i, c, q1.get(i, c) - s * a.get(i, j));
            }
        }
    }
    let hat: Vec<f64> = (0..m).map(|i| dot(q1.row(i), q1.row(i))).collect();

    let fitted = x.matvec(&coeffs);
    let residuals: Vec<f64> = (0..m).map(|i| y[i] - fitted[i]).collect();
    let rss = dot(&residuals, &residuals);

    Ok(LeastSquares { coeffs, hat, fitted, residuals, rss })
}

/// Cholesky solve of the symmetric positive-definite system `A·x = b`.
/// Returns `None` when a pivot is not strictly positive.
pub fn solve_spd(a: &Mat, b: &[f64]) -> Option<Vec<f64>> {
    let n = a.nrows();
    assert_eq!(a.ncols(), n);
    assert_eq!(b.len(), n);
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a.get(i, j);
            for t in 0..j {
                s -= l[i * n + t] * l[j * n + t];
            }
            if i == j {
                if s <= 0.0 {
                    return None;
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    // Forward then backward substitution.
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut s = b[i];
        for t in 0..i {
            s -= l[i * n + t] * y[t];
        }
        y[i] = s / l[i * n + i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for t in i + 1..n {
            s -= l[t * n + i] * x[t];
        }
        x[i] = s / l[i * n + i];
    }
    Some(x)
}
