//! Maximum likelihood on snapshot counts.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::inference::counts::TransitionCounts;
use crate::inference::likelihood::{log_likelihood, log_likelihood_gradient, LikelihoodOptions};
use crate::inference::optimize::{minimize_bounded, LbfgsOptions};
use crate::model::family::GeneratorFamily;
use crate::model::ParameterVector;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum GradientMode {
    #[default]
    Analytic,
    Numeric,
}

/// Source of wall-clock readings in seconds.
pub trait Clock {
    fn now(&self) -> Option<f64>;
}

/// Clock for environments without a timer; wall times are reported as zero.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoClock;

impl Clock for NoClock {
    fn now(&self) -> Option<f64> {
        None
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FitOptions {
    pub gradient: GradientMode,
    /// Applied to `−ℓ(θ) / n`, the mean negative log likelihood per observed
    /// transition; `gtol` bounds its projected gradient.
    pub optimizer: LbfgsOptions,
    /// Per-parameter box; the family's defaults when `None`.
    pub bounds: Option<Vec<(f64, f64)>>,
    pub likelihood: LikelihoodOptions,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            gradient: GradientMode::Analytic,
            optimizer: LbfgsOptions {
                gtol: 1e-7,
                ..LbfgsOptions::default()
            },
            bounds: None,
            likelihood: LikelihoodOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EstimationResult {
    pub theta_hat: ParameterVector,
    pub loglik: f64,
    /// Gradient of `ℓ` at `theta_hat` under the chosen gradient mode.
    pub gradient: Vec<f64>,
    /// Projected gradient sup-norm of the per-transition objective.
    pub projected_gradient_norm: f64,
    /// Every likelihood evaluation, including those inside finite differences.
    pub n_func_evals: usize,
    pub iterations: usize,
    pub wall_time: f64,
    pub converged: bool,
    pub gradient_mode: GradientMode,
    pub message: String,
}

/// Central-difference gradient of `ℓ`, one-sided where a bound is closer
/// than the step. Returns the gradient and the number of evaluations used.
fn numeric_gradient<F: FnMut(&[f64]) -> Result<f64>>(
    mut ell: F,
    theta: &[f64],
    bounds: &[(f64, f64)],
) -> Result<(Vec<f64>, usize)> {
    let h0 = f64::EPSILON.cbrt();
    let mut grad = vec![0.0; theta.len()];
    let mut evals = 0;
    let mut x = theta.to_vec();
    let mut center = None;
    for j in 0..theta.len() {
        let h = h0 * theta[j].abs().max(1.0);
        let (lo, hi) = bounds[j];
        let up = theta[j] + h <= hi;
        let down = theta[j] - h >= lo;
        let mut at = |v: f64, x: &mut Vec<f64>| -> Result<f64> {
            x[j] = v;
            let r = ell(x);
            x[j] = theta[j];
            r
        };
        grad[j] = if up && down {
            evals += 2;
            (at(theta[j] + h, &mut x)? - at(theta[j] - h, &mut x)?) / (2.0 * h)
        } else {
            let f0 = match center {
                Some(f) => f,
                None => {
                    evals += 1;
                    let f = at(theta[j], &mut x)?;
                    center = Some(f);
                    f
                }
            };
            evals += 1;
            if up {
                (at(theta[j] + h, &mut x)? - f0) / h
            } else {
                (f0 - at(theta[j] - h, &mut x)?) / h
            }
        };
    }
    Ok((grad, evals))
}

/// Maximizes `ℓ(θ)` over the parameter box starting from `theta0`. Optimizer
/// failures are reported through `converged = false` with the best iterate.
pub fn fit_mle<F: GeneratorFamily + ?Sized, C: Clock + ?Sized>(
    family: &F,
    counts: &TransitionCounts,
    delta: f64,
    theta0: &[f64],
    opts: &FitOptions,
    clock: &C,
) -> Result<EstimationResult> {
    let start = clock.now();
    let n = family.n_params();
    if theta0.len() != n {
        return Err(Error::Dimension {
            context: "starting parameter vector",
            expected: n,
            found: theta0.len(),
        });
    }
    let bounds = opts.bounds.clone().unwrap_or_else(|| family.default_bounds());
    if bounds.len() != n {
        return Err(Error::Dimension {
            context: "parameter bounds",
            expected: n,
            found: bounds.len(),
        });
    }
    if let Some(j) = (0..n).find(|&j| !(theta0[j] >= bounds[j].0 && theta0[j] <= bounds[j].1)) {
        return Err(Error::InvalidArgument(alloc::format!(
            "starting value {} of {} lies outside [{}, {}]",
            theta0[j],
            family.parameter_names()[j],
            bounds[j].0,
            bounds[j].1
        )));
    }
    let lower: Vec<f64> = bounds.iter().map(|b| b.0).collect();
    let upper: Vec<f64> = bounds.iter().map(|b| b.1).collect();
    if counts.total() == 0 {
        return Err(Error::InvalidData("no observed transitions".into()));
    }
    let scale = 1.0 / counts.total() as f64;
    let lik = opts.likelihood;
    let mut n_func_evals = 0usize;

    let objective = |theta: &[f64]| -> Result<(f64, Vec<f64>)> {
        match opts.gradient {
            GradientMode::Analytic => {
                n_func_evals += 1;
                let ev = log_likelihood_gradient(family, theta, counts, delta, &lik)?;
                let g = ev.gradient.unwrap_or_default();
                Ok((-scale * ev.value, g.into_iter().map(|v| -scale * v).collect()))
            }
            GradientMode::Numeric => {
                let value = log_likelihood(family, theta, counts, delta, &lik)?.value;
                let (g, evals) = numeric_gradient(
                    |x| log_likelihood(family, x, counts, delta, &lik).map(|e| e.value),
                    theta,
                    &bounds,
                )?;
                n_func_evals += 1 + evals;
                Ok((-scale * value, g.into_iter().map(|v| -scale * v).collect()))
            }
        }
    };
    let out = minimize_bounded(objective, theta0, &lower, &upper, &opts.optimizer)?;
    let elapsed = match (start, clock.now()) {
        (Some(a), Some(b)) => b - a,
        _ => 0.0,
    };
    let theta_hat = ParameterVector::new(family.parameter_names(), &out.x)?.with_bounds(&bounds)?;
    Ok(EstimationResult {
        theta_hat,
        loglik: -out.f / scale,
        gradient: out.gradient.iter().map(|v| -v / scale).collect(),
        projected_gradient_norm: out.projected_gradient_norm,
        n_func_evals,
        iterations: out.iterations,
        wall_time: elapsed,
        converged: out.converged,
        gradient_mode: opts.gradient,
        message: out.message,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numeric_gradient_of_quadratic() {
        let f = |x: &[f64]| Ok(x[0] * x[0] + 3.0 * x[1]);
        let (g, evals) = numeric_gradient(f, &[1.0, 2.0], &[(-5.0, 5.0), (-5.0, 5.0)]).unwrap();
        assert!((g[0] - 2.0).abs() < 1e-8 && (g[1] - 3.0).abs() < 1e-8);
        assert_eq!(evals, 4);
    }

    #[test]
    fn numeric_gradient_one_sided_at_bounds() {
        let f = |x: &[f64]| Ok(x[0] * x[0] + x[1] * x[1]);
        let (g, evals) = numeric_gradient(f, &[0.0, 1.0], &[(0.0, 1.0), (0.0, 1.0)]).unwrap();
        assert!(g[0].abs() < 1e-4 && (g[1] - 2.0).abs() < 1e-4);
        assert_eq!(evals, 3);
    }
}
