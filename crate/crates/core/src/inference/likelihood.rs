//! Snapshot log likelihood `ℓ(θ) = Σ_kl d_kl ln P(Δ, θ)_kl` and its analytic
//! gradient.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::ctmc::{ExpmOptions, ExpmPlan, Side};
use crate::inference::counts::TransitionCounts;
use crate::model::family::GeneratorFamily;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LikelihoodOptions {
    /// Poisson tail tolerance of the matrix-exponential series.
    pub eps: f64,
    /// Fixed uniformization rate; the generator's default when `None`.
    pub eta: Option<f64>,
    /// Floor applied to probabilities before taking logs.
    pub p_min: f64,
}

impl Default for LikelihoodOptions {
    fn default() -> Self {
        Self {
            eps: 1e-12,
            eta: None,
            p_min: 1e-300,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LikelihoodEvaluation {
    pub value: f64,
    pub gradient: Option<Vec<f64>>,
    /// Number of `exp(ΔQ) e_l` columns computed.
    pub columns_evaluated: usize,
    /// Number of observed cells whose probability was raised to `p_min`.
    pub floored: usize,
}

fn evaluate<F: GeneratorFamily + ?Sized>(
    family: &F,
    theta: &[f64],
    counts: &TransitionCounts,
    delta: f64,
    opts: &LikelihoodOptions,
    with_gradient: bool,
) -> Result<LikelihoodEvaluation> {
    let k = family.n_states();
    if counts.n_states() != k {
        return Err(Error::Dimension {
            context: "transition counts",
            expected: k,
            found: counts.n_states(),
        });
    }
    if !(opts.p_min > 0.0 && opts.p_min < 1.0) {
        return Err(Error::InvalidArgument("p_min must lie in (0, 1)".into()));
    }
    let expm_opts = ExpmOptions {
        eps: opts.eps,
        eta: opts.eta,
        side: Side::Column,
    };
    let plan = if with_gradient {
        let (q, dq) = family.generator_and_derivatives(theta)?;
        ExpmPlan::new(&q, &dq, delta, &expm_opts)?
    } else {
        ExpmPlan::new(&family.generator(theta)?, &[], delta, &expm_opts)?
    };
    let mut value = 0.0;
    let mut gradient = vec![0.0; if with_gradient { plan.n_params() } else { 0 }];
    let mut columns_evaluated = 0;
    let mut floored = 0;
    let mut basis = vec![0.0; k];
    for (l, entries) in counts.column_entries() {
        basis[l] = 1.0;
        let (col, dcol) = if with_gradient {
            plan.apply_with_derivatives(&basis)?
        } else {
            (plan.apply(&basis)?, Vec::new())
        };
        basis[l] = 0.0;
        columns_evaluated += 1;
        for (origin, d) in entries {
            let d = d as f64;
            let p = col[origin];
            if p < opts.p_min {
                floored += 1;
                value += d * opts.p_min.ln();
                continue;
            }
            value += d * p.ln();
            for (g, dc) in gradient.iter_mut().zip(&dcol) {
                *g += d * dc[origin] / p;
            }
        }
    }
    if floored > 0 {
        log::warn!(
            "{floored} observed transitions have probability below {:e}; the model may be misspecified",
            opts.p_min
        );
    }
    if !value.is_finite() {
        return Err(Error::NonFinite("log likelihood"));
    }
    Ok(LikelihoodEvaluation {
        value,
        gradient: with_gradient.then_some(gradient),
        columns_evaluated,
        floored,
    })
}

/// `ℓ(θ)`; only destination columns with positive counts are computed.
pub fn log_likelihood<F: GeneratorFamily + ?Sized>(
    family: &F,
    theta: &[f64],
    counts: &TransitionCounts,
    delta: f64,
    opts: &LikelihoodOptions,
) -> Result<LikelihoodEvaluation> {
    evaluate(family, theta, counts, delta, opts, false)
}

/// `ℓ(θ)` and `∂ℓ/∂θ = Σ_kl (d_kl / p_kl) ∂p_kl/∂θ`, with all parameter
/// derivatives of a column sharing one series pass. Floored cells do not
/// contribute to the gradient.
pub fn log_likelihood_gradient<F: GeneratorFamily + ?Sized>(
    family: &F,
    theta: &[f64],
    counts: &TransitionCounts,
    delta: f64,
    opts: &LikelihoodOptions,
) -> Result<LikelihoodEvaluation> {
    evaluate(family, theta, counts, delta, opts, true)
}
