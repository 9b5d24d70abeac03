//! Small dense/iterative linear algebra: norms, LU with partial pivoting and
//! restarted GMRES on CSR operators.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::sparse::CsrMatrix;
use crate::{Error, Result};

pub fn sup_norm(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.abs()))
}

pub fn sup_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).fold(0.0, |m, (a, b)| m.max((a - b).abs()))
}

pub fn l1_norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v.abs()).sum()
}

/// Span seminorm `max(x) - min(x)`.
pub fn span(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    let (lo, hi) = x
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    hi - lo
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

fn norm2(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

/// LU factorization `PA = LU` of a square row-major matrix.
#[derive(Debug, Clone)]
pub struct DenseLu {
    n: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
}

impl DenseLu {
    pub fn factor(n: usize, mut a: Vec<f64>) -> Result<Self> {
        if a.len() != n * n {
            return Err(Error::Dimension {
                context: "dense LU",
                expected: n * n,
                found: a.len(),
            });
        }
        let scale = sup_norm(&a).max(f64::MIN_POSITIVE);
        let mut perm: Vec<usize> = (0..n).collect();
        for col in 0..n {
            let (pivot_row, pivot_abs) = (col..n)
                .map(|r| (r, a[r * n + col].abs()))
                .fold((col, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if pivot_abs <= f64::EPSILON * scale * n as f64 {
                return Err(Error::Singular);
            }
            if pivot_row != col {
                for c in 0..n {
                    a.swap(col * n + c, pivot_row * n + c);
                }
                perm.swap(col, pivot_row);
            }
            let pivot = a[col * n + col];
            for r in col + 1..n {
                let factor = a[r * n + col] / pivot;
                if factor == 0.0 {
                    continue;
                }
                a[r * n + col] = factor;
                for c in col + 1..n {
                    a[r * n + c] -= factor * a[col * n + c];
                }
            }
        }
        Ok(Self { n, lu: a, perm })
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let n = self.n;
        if b.len() != n {
            return Err(Error::Dimension {
                context: "dense LU rhs",
                expected: n,
                found: b.len(),
            });
        }
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for r in 0..n {
            let s: f64 = (0..r).map(|c| self.lu[r * n + c] * x[c]).sum();
            x[r] -= s;
        }
        for r in (0..n).rev() {
            let s: f64 = (r + 1..n).map(|c| self.lu[r * n + c] * x[c]).sum();
            x[r] = (x[r] - s) / self.lu[r * n + r];
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("dense LU solve"));
        }
        Ok(x)
    }
}

/// Solves `(I - scale * A) x = b` for square sparse `A` by dense LU.
pub fn solve_shifted_dense(a: &CsrMatrix, scale: f64, b: &[f64]) -> Result<Vec<f64>> {
    let n = a.n_rows();
    let mut dense = vec![0.0; n * n];
    for k in 0..n {
        dense[k * n + k] = 1.0;
    }
    for (r, c, v) in a.iter() {
        dense[r * n + c] -= scale * v;
    }
    DenseLu::factor(n, dense)?.solve(b)
}

/// Options for [`gmres_shifted`].
#[derive(Debug, Clone, Copy)]
pub struct GmresOptions {
    pub restart: usize,
    pub max_iter: usize,
    /// Relative residual target `||b - Mx||_2 <= tol * ||b||_2`.
    pub tol: f64,
}

impl Default for GmresOptions {
    fn default() -> Self {
        Self {
            restart: 50,
            max_iter: 5000,
            tol: 1e-13,
        }
    }
}

/// Restarted GMRES for `(I - scale * A) x = b`, starting from `x0` (or 0).
pub fn gmres_shifted(
    a: &CsrMatrix,
    scale: f64,
    b: &[f64],
    x0: Option<&[f64]>,
    opts: GmresOptions,
) -> Result<Vec<f64>> {
    let n = a.n_rows();
    if b.len() != n || a.n_cols() != n {
        return Err(Error::Dimension {
            context: "GMRES rhs",
            expected: n,
            found: b.len(),
        });
    }
    let apply = |x: &[f64], y: &mut [f64]| {
        a.spmv_unchecked(x, y);
        for (yi, xi) in y.iter_mut().zip(x) {
            *yi = xi - scale * *yi;
        }
    };
    let bnorm = norm2(b);
    let mut x = x0.map_or_else(|| vec![0.0; n], |v| v.to_vec());
    if bnorm == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let m = opts.restart.max(1).min(n.max(1));
    let mut total = 0usize;
    let mut tmp = vec![0.0; n];
    loop {
        apply(&x, &mut tmp);
        let r: Vec<f64> = b.iter().zip(&tmp).map(|(bi, ti)| bi - ti).collect();
        let beta = norm2(&r);
        if beta <= opts.tol * bnorm {
            return Ok(x);
        }
        if total >= opts.max_iter {
            return Err(Error::NotConverged {
                iterations: total,
                residual: beta / bnorm,
            });
        }
        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
        basis.push(r.iter().map(|v| v / beta).collect());
        // Hessenberg stored column by column, rotated in place
        let mut h = vec![vec![0.0; m + 1]; m];
        let mut cs = vec![0.0; m];
        let mut sn = vec![0.0; m];
        let mut g = vec![0.0; m + 1];
        g[0] = beta;
        let mut used = 0;
        for j in 0..m {
            let mut w = vec![0.0; n];
            apply(&basis[j], &mut w);
            for i in 0..=j {
                let hij = dot(&w, &basis[i]);
                h[j][i] = hij;
                for (wk, vk) in w.iter_mut().zip(&basis[i]) {
                    *wk -= hij * vk;
                }
            }
            let hn = norm2(&w);
            h[j][j + 1] = hn;
            for i in 0..j {
                let t = cs[i] * h[j][i] + sn[i] * h[j][i + 1];
                h[j][i + 1] = -sn[i] * h[j][i] + cs[i] * h[j][i + 1];
                h[j][i] = t;
            }
            let denom = (h[j][j] * h[j][j] + hn * hn).sqrt();
            if denom == 0.0 {
                return Err(Error::Singular);
            }
            cs[j] = h[j][j] / denom;
            sn[j] = hn / denom;
            h[j][j] = denom;
            h[j][j + 1] = 0.0;
            g[j + 1] = -sn[j] * g[j];
            g[j] *= cs[j];
            used = j + 1;
            total += 1;
            if g[j + 1].abs() <= opts.tol * bnorm || hn == 0.0 || total >= opts.max_iter {
                break;
            }
            basis.push(w.iter().map(|v| v / hn).collect());
        }
        let mut y = vec![0.0; used];
        for i in (0..used).rev() {
            let s: f64 = (i + 1..used).map(|k| h[k][i] * y[k]).sum();
            y[i] = (g[i] - s) / h[i][i];
        }
        for (i, yi) in y.iter().enumerate() {
            for (xk, vk) in x.iter_mut().zip(&basis[i]) {
                *xk += yi * vk;
            }
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("GMRES"));
        }
    }
}
