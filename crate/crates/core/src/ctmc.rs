//! Continuous-time Markov chain kernels: generator validation,
//! uniformization, Poisson truncation and the action of `exp(ΔQ)` (with
//! parameter derivatives) on vectors.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::sparse::CsrMatrix;
use crate::special::ln_poisson_pmf;
use crate::{Error, Result};

/// Relative row-sum tolerance for generators.
pub const ROW_SUM_TOL: f64 = 1e-12;

/// Largest admissible `ηΔ`; beyond this `exp(-ηΔ)` loses all precision.
pub const MAX_ETA_DELTA: f64 = 700.0;

/// Size guard for [`dense_expm_oracle`].
pub const ORACLE_MAX_STATES: usize = 200;

/// A validated sparse generator (intensity matrix).
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityMatrix {
    q: CsrMatrix,
}

impl IntensityMatrix {
    pub fn new(q: CsrMatrix) -> Result<Self> {
        validate_generator(q)
    }

    pub fn n_states(&self) -> usize {
        self.q.n_rows()
    }

    pub fn as_csr(&self) -> &CsrMatrix {
        &self.q
    }

    pub fn into_csr(self) -> CsrMatrix {
        self.q
    }

    /// `max_k |q_kk|`.
    pub fn max_exit_rate(&self) -> f64 {
        self.q.diagonal().iter().fold(0.0, |m, d| m.max(d.abs()))
    }

    /// The generator of the same chain read column-wise, i.e. `Q'`. The
    /// result is not itself a generator, so it is returned as plain CSR.
    pub fn transpose(&self) -> CsrMatrix {
        self.q.transpose()
    }

    /// Uniformization rate used when none is supplied:
    /// `max|q_kk| + 1e-8 * max(1, max|q_kk|)`, or 0 for the zero generator.
    pub fn default_rate(&self) -> f64 {
        let m = self.max_exit_rate();
        if m == 0.0 {
            0.0
        } else {
            m + 1e-8 * m.max(1.0)
        }
    }
}

/// Checks square shape, sign pattern, stored diagonals and zero row sums.
///
/// A row passes the row-sum test when `|Σ_l q_kl| <= 1e-12 * max(1, max_l |q_kl|)`.
pub fn validate_generator(q: CsrMatrix) -> Result<IntensityMatrix> {
    if !q.is_square() {
        return Err(Error::NotSquare {
            rows: q.n_rows(),
            cols: q.n_cols(),
        });
    }
    for r in 0..q.n_rows() {
        let (cols, vals) = q.row(r);
        let mut sum = 0.0;
        let mut scale: f64 = 1.0;
        let mut off_mass = false;
        let mut has_diag = false;
        for (&c, &v) in cols.iter().zip(vals) {
            if !v.is_finite() {
                return Err(Error::NonFinite("generator entry"));
            }
            if c == r {
                has_diag = true;
                if v > 0.0 {
                    return Err(Error::PositiveDiagonal { row: r, value: v });
                }
            } else if v < 0.0 {
                return Err(Error::NegativeRate {
                    row: r,
                    col: c,
                    value: v,
                });
            } else if v > 0.0 {
                off_mass = true;
            }
            sum += v;
            scale = scale.max(v.abs());
        }
        if off_mass && !has_diag {
            return Err(Error::MissingDiagonal { row: r });
        }
        if sum.abs() > ROW_SUM_TOL * scale {
            return Err(Error::RowSum { row: r, sum });
        }
    }
    Ok(IntensityMatrix { q })
}

/// Discrete-time chain `Σ = I + Q/η` subordinate to a rate-`η` Poisson clock.
#[derive(Debug, Clone, PartialEq)]
pub struct UniformizedChain {
    pub eta: f64,
    pub sigma: CsrMatrix,
    /// `ηΔ` once a horizon has been bound with [`UniformizedChain::with_horizon`].
    pub delta_eta: Option<f64>,
}

impl UniformizedChain {
    pub fn with_horizon(mut self, delta: f64) -> Self {
        self.delta_eta = Some(self.eta * delta);
        self
    }

    /// Recovers `Q = η(Σ - I)` (on Σ's pattern).
    pub fn generator(&self) -> CsrMatrix {
        let mut q = self.sigma.clone();
        let eta = self.eta;
        let structure = q.structure().clone();
        let values = q.values_mut();
        for v in values.iter_mut() {
            *v *= eta;
        }
        for k in 0..structure.n_rows() {
            if let Some(p) = structure.diagonal_position(k) {
                values[p] -= eta;
            }
        }
        q
    }
}

/// Builds `Σ = I + Q/η`. The pattern of `Σ` is `Q`'s plus a full diagonal.
pub fn uniformize(q: &IntensityMatrix, eta: Option<f64>) -> Result<UniformizedChain> {
    let required = q.max_exit_rate();
    let eta = match eta {
        Some(e) if !(e.is_finite() && e >= required) => {
            return Err(Error::RateTooSmall { eta: e, required });
        }
        Some(e) => e,
        None => q.default_rate(),
    };
    let mut sigma = q.as_csr().with_full_diagonal();
    let structure = sigma.structure().clone();
    let values = sigma.values_mut();
    if eta > 0.0 {
        for v in values.iter_mut() {
            *v /= eta;
        }
    }
    for k in 0..structure.n_rows() {
        let p = structure
            .diagonal_position(k)
            .expect("full diagonal was inserted");
        values[p] += 1.0;
    }
    Ok(UniformizedChain {
        eta,
        sigma,
        delta_eta: None,
    })
}

/// Number of retained series terms for a given tail tolerance.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TruncationBudget {
    pub tolerance: f64,
    pub j_bar: u64,
}

impl TruncationBudget {
    pub fn new(rate: f64, tolerance: f64) -> Result<Self> {
        Ok(Self {
            tolerance,
            j_bar: truncation_point(rate, tolerance)?,
        })
    }
}

fn check_eps(eps: f64) -> Result<()> {
    if eps > 0.0 && eps < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidTolerance(eps))
    }
}

/// Smallest `J` with `P(X > J) < eps` for `X ~ Poisson(rate)`.
///
/// The upper tail is accumulated from the far right in log-space pmf terms,
/// so no `1 - CDF` cancellation occurs.
pub fn truncation_point(rate: f64, eps: f64) -> Result<u64> {
    check_eps(eps)?;
    if !(rate.is_finite() && rate >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "Poisson rate must be finite and nonnegative, got {rate}"
        )));
    }
    if rate == 0.0 {
        return Ok(0);
    }
    // Terms beyond `top` are below eps * 1e-20 and cannot move the decision.
    let cutoff = eps.ln() - 46.0;
    let mut top = rate.ceil() as u64 + 1;
    let mut step = 16u64.max((rate.sqrt() * 4.0) as u64);
    while ln_poisson_pmf(top, rate) > cutoff {
        top += step;
        step *= 2;
    }
    // tail == P(X > j); step down while P(X > j - 1) is still below eps.
    let mut tail = 0.0;
    let mut j = top;
    while j > 0 {
        let next = tail + ln_poisson_pmf(j, rate).exp();
        if next >= eps {
            break;
        }
        tail = next;
        j -= 1;
    }
    Ok(j)
}

/// Which action of `P = exp(ΔQ)` is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Side {
    /// `P v`; entry `k` is `Σ_l p_kl v_l`. With `v = e_l` this is column `l`.
    #[default]
    Column,
    /// `v' P`; with `v = e_k` this is row `k`, a probability distribution.
    Row,
}

/// Options for the matrix-exponential actions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpmOptions {
    /// Poisson tail tolerance ε.
    pub eps: f64,
    /// Uniformization rate; defaults to [`IntensityMatrix::default_rate`].
    pub eta: Option<f64>,
    pub side: Side,
}

impl Default for ExpmOptions {
    fn default() -> Self {
        Self {
            eps: 1e-12,
            eta: None,
            side: Side::Column,
        }
    }
}

/// Precomputed operators for repeated `exp(ΔQ)` actions at a fixed `Δ`.
///
/// Holds `S = ΔQ + ηΔI` (nonnegative), the scaled derivative matrices
/// `Δ ∂Q/∂α`, the series length and `exp(-ηΔ)`.
#[derive(Debug, Clone)]
pub struct ExpmPlan {
    s: CsrMatrix,
    ds: Vec<CsrMatrix>,
    eta: f64,
    j_bar: u64,
    scale: f64,
}

impl ExpmPlan {
    pub fn new(
        q: &IntensityMatrix,
        dq: &[CsrMatrix],
        delta: f64,
        opts: &ExpmOptions,
    ) -> Result<Self> {
        check_eps(opts.eps)?;
        if !(delta.is_finite() && delta >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "time step must be finite and nonnegative, got {delta}"
            )));
        }
        let k = q.n_states();
        for d in dq {
            if d.n_rows() != k || d.n_cols() != k {
                return Err(Error::Dimension {
                    context: "derivative generator",
                    expected: k,
                    found: if d.n_rows() != k { d.n_rows() } else { d.n_cols() },
                });
            }
        }
        let chain = uniformize(q, opts.eta)?;
        let eta = chain.eta;
        let rate = eta * delta;
        if rate > MAX_ETA_DELTA {
            return Err(Error::RateTooLarge(rate));
        }
        let j_bar = truncation_point(rate, opts.eps)?;
        // S = ηΔ Σ = ΔQ + ηΔ I on Σ's pattern.
        let mut s = chain.sigma;
        for v in s.values_mut() {
            *v *= rate;
        }
        let mut ds: Vec<CsrMatrix> = dq
            .iter()
            .map(|d| {
                let mut m = d.clone();
                for v in m.values_mut() {
                    *v *= delta;
                }
                m
            })
            .collect();
        if opts.side == Side::Row {
            s = s.transpose();
            ds = ds.iter().map(CsrMatrix::transpose).collect();
        }
        Ok(Self {
            s,
            ds,
            eta,
            j_bar,
            scale: (-rate).exp(),
        })
    }

    pub fn n_states(&self) -> usize {
        self.s.n_rows()
    }

    pub fn n_params(&self) -> usize {
        self.ds.len()
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn j_bar(&self) -> u64 {
        self.j_bar
    }

    /// `exp(ΔQ)` applied to `v`.
    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.run(v, false).map(|(mu, _)| mu)
    }

    /// `exp(ΔQ) v` together with `∂exp(ΔQ)/∂α_p v` for every parameter.
    pub fn apply_with_derivatives(&self, v: &[f64]) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        self.run(v, true)
    }

    fn run(&self, v: &[f64], derivs: bool) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        let k = self.n_states();
        if v.len() != k {
            return Err(Error::Dimension {
                context: "expmv input",
                expected: k,
                found: v.len(),
            });
        }
        let n_par = if derivs { self.ds.len() } else { 0 };
        let mut nu = v.to_vec();
        let mut nu_next = vec![0.0; k];
        let mut mu = v.to_vec();
        let mut delta: Vec<Vec<f64>> = vec![vec![0.0; k]; n_par];
        let mut delta_next = vec![0.0; k];
        let mut mu_alpha: Vec<Vec<f64>> = vec![vec![0.0; k]; n_par];
        for j in 1..=self.j_bar {
            let inv_j = 1.0 / j as f64;
            for p in 0..n_par {
                // δ_j = (S δ_{j-1} + Δ∂Q ν_{j-1}) / j, using ν_{j-1} before it is advanced
                self.s.spmv_unchecked(&delta[p], &mut delta_next);
                self.ds[p].spmv_add_unchecked(1.0, &nu, &mut delta_next);
                for (d, m) in delta_next.iter_mut().zip(mu_alpha[p].iter_mut()) {
                    *d *= inv_j;
                    *m += *d;
                }
                core::mem::swap(&mut delta[p], &mut delta_next);
            }
            self.s.spmv_unchecked(&nu, &mut nu_next);
            for (n, m) in nu_next.iter_mut().zip(mu.iter_mut()) {
                *n *= inv_j;
                *m += *n;
            }
            core::mem::swap(&mut nu, &mut nu_next);
        }
        for m in mu.iter_mut() {
            *m *= self.scale;
        }
        for ma in mu_alpha.iter_mut() {
            for m in ma.iter_mut() {
                *m *= self.scale;
            }
        }
        if mu.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("expmv"));
        }
        Ok((mu, mu_alpha))
    }
}

/// `exp(ΔQ) v`, with the series truncated at tail mass `eps`.
///
/// For a probability vector `v` and [`Side::Row`] the result has L1 mass in
/// `[1 - eps, 1]`; for [`Side::Column`] every entry is within `eps * max|v|`
/// below the exact value.
pub fn expmv(q: &IntensityMatrix, delta: f64, v: &[f64], eps: f64) -> Result<Vec<f64>> {
    expmv_with(
        q,
        delta,
        v,
        &ExpmOptions {
            eps,
            ..ExpmOptions::default()
        },
    )
}

pub fn expmv_with(q: &IntensityMatrix, delta: f64, v: &[f64], opts: &ExpmOptions) -> Result<Vec<f64>> {
    ExpmPlan::new(q, &[], delta, opts)?.apply(v)
}

/// `exp(ΔQ) v` and its derivatives with respect to each parameter whose
/// generator derivative is given in `dq`.
pub fn expmvd(
    q: &IntensityMatrix,
    dq: &[CsrMatrix],
    delta: f64,
    v: &[f64],
    eps: f64,
) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    expmvd_with(
        q,
        dq,
        delta,
        v,
        &ExpmOptions {
            eps,
            ..ExpmOptions::default()
        },
    )
}

pub fn expmvd_with(
    q: &IntensityMatrix,
    dq: &[CsrMatrix],
    delta: f64,
    v: &[f64],
    opts: &ExpmOptions,
) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    ExpmPlan::new(q, dq, delta, opts)?.apply_with_derivatives(v)
}

/// Dense `exp(ΔQ)` (row-major) by scaling and squaring of a truncated Taylor
/// series. Intended as a test oracle for small `K`.
pub fn dense_expm_oracle(q: &IntensityMatrix, delta: f64) -> Result<Vec<f64>> {
    let n = q.n_states();
    if n > ORACLE_MAX_STATES {
        return Err(Error::OracleTooLarge {
            k: n,
            limit: ORACLE_MAX_STATES,
        });
    }
    let mut a = q.as_csr().to_dense();
    let norm = (0..n)
        .map(|r| a[r * n..(r + 1) * n].iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
        * delta.abs();
    let mut squarings = 0u32;
    let mut scaled = norm;
    while scaled > 0.25 {
        scaled *= 0.5;
        squarings += 1;
    }
    let factor = delta / 2f64.powi(squarings as i32);
    for v in a.iter_mut() {
        *v *= factor;
    }
    let mut result = vec![0.0; n * n];
    let mut term = vec![0.0; n * n];
    for k in 0..n {
        result[k * n + k] = 1.0;
        term[k * n + k] = 1.0;
    }
    for j in 1..=40 {
        term = matmul(n, &term, &a);
        let inv = 1.0 / j as f64;
        let mut biggest: f64 = 0.0;
        for (t, r) in term.iter_mut().zip(result.iter_mut()) {
            *t *= inv;
            *r += *t;
            biggest = biggest.max(t.abs());
        }
        if biggest < 1e-20 {
            break;
        }
    }
    for _ in 0..squarings {
        result = matmul(n, &result, &result);
    }
    Ok(result)
}

fn matmul(n: usize, a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for k in 0..n {
            let aik = a[i * n + k];
            if aik == 0.0 {
                continue;
            }
            for j in 0..n {
                out[i * n + j] += aik * b[k * n + j];
            }
        }
    }
    out
}
