//! Box-constrained limited-memory BFGS with a projected Armijo line search.

use alloc::collections::VecDeque;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LbfgsOptions {
    /// Number of stored curvature pairs.
    pub memory: usize,
    /// Convergence threshold on the sup-norm of the projected gradient.
    pub gtol: f64,
    /// Stop after three consecutive iterations whose relative objective
    /// decrease falls below this.
    pub ftol: f64,
    pub max_iter: usize,
    /// Maximum backtracking steps per line search.
    pub max_backtrack: usize,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        Self {
            memory: 10,
            gtol: 1e-5,
            ftol: 1e-14,
            max_iter: 200,
            max_backtrack: 40,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LbfgsOutcome {
    pub x: Vec<f64>,
    pub f: f64,
    pub gradient: Vec<f64>,
    /// `‖P(x − g) − x‖∞` at `x`.
    pub projected_gradient_norm: f64,
    pub iterations: usize,
    /// Objective evaluations, each returning value and gradient.
    pub evaluations: usize,
    pub converged: bool,
    pub message: String,
}

fn project(x: &mut [f64], lower: &[f64], upper: &[f64]) {
    for ((xi, &l), &u) in x.iter_mut().zip(lower).zip(upper) {
        *xi = xi.clamp(l, u);
    }
}

fn projected_gradient_norm(x: &[f64], g: &[f64], lower: &[f64], upper: &[f64]) -> f64 {
    x.iter()
        .zip(g)
        .zip(lower.iter().zip(upper))
        .map(|((&xi, &gi), (&l, &u))| ((xi - gi).clamp(l, u) - xi).abs())
        .fold(0.0, f64::max)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Coordinates held at a bound by the gradient.
fn active_set(x: &[f64], g: &[f64], lower: &[f64], upper: &[f64]) -> Vec<bool> {
    x.iter()
        .zip(g)
        .zip(lower.iter().zip(upper))
        .map(|((&xi, &gi), (&l, &u))| (xi <= l && gi > 0.0) || (xi >= u && gi < 0.0))
        .collect()
}

struct Memory {
    pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)>,
    cap: usize,
}

impl Memory {
    fn push(&mut self, s: Vec<f64>, y: Vec<f64>) -> bool {
        let sy = dot(&s, &y);
        if sy <= 1e-10 * norm2(&s) * norm2(&y) {
            return false;
        }
        if self.pairs.len() == self.cap {
            self.pairs.pop_front();
        }
        self.pairs.push_back((s, y, 1.0 / sy));
        true
    }

    /// Two-loop recursion restricted to the free coordinates.
    fn direction(&self, g: &[f64], active: &[bool]) -> Vec<f64> {
        let mask = |v: &mut [f64]| {
            for (vi, &a) in v.iter_mut().zip(active) {
                if a {
                    *vi = 0.0;
                }
            }
        };
        let mut q = g.to_vec();
        mask(&mut q);
        let mut alphas = vec![0.0; self.pairs.len()];
        for (idx, (s, y, rho)) in self.pairs.iter().enumerate().rev() {
            let mut s = s.clone();
            mask(&mut s);
            let a = rho * dot(&s, &q);
            alphas[idx] = a;
            for ((qi, &yi), &act) in q.iter_mut().zip(y).zip(active) {
                if !act {
                    *qi -= a * yi;
                }
            }
        }
        if let Some((s, y, _)) = self.pairs.back() {
            let gamma = dot(s, y) / dot(y, y);
            q.iter_mut().for_each(|v| *v *= gamma);
        }
        for (idx, (s, y, rho)) in self.pairs.iter().enumerate() {
            let b = rho * dot(y, &q);
            for ((qi, &si), &act) in q.iter_mut().zip(s).zip(active) {
                if !act {
                    *qi += (alphas[idx] - b) * si;
                }
            }
        }
        mask(&mut q);
        q.iter_mut().for_each(|v| *v = -*v);
        q
    }
}

/// Minimizes `f` over the box `[lower, upper]`. `f` returns the value and
/// gradient; errors raised at trial points during the line search are
/// treated as an infinite objective, errors at the starting point are
/// returned.
pub fn minimize_bounded<F>(
    mut f: F,
    x0: &[f64],
    lower: &[f64],
    upper: &[f64],
    opts: &LbfgsOptions,
) -> Result<LbfgsOutcome>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let n = x0.len();
    if lower.len() != n || upper.len() != n {
        return Err(Error::Dimension {
            context: "optimizer bounds",
            expected: n,
            found: lower.len().min(upper.len()),
        });
    }
    if lower.iter().zip(upper).any(|(l, u)| !(l <= u)) {
        return Err(Error::InvalidArgument("lower bound exceeds upper bound".into()));
    }
    if !(opts.gtol > 0.0) || opts.memory == 0 {
        return Err(Error::InvalidArgument("gtol must be positive and memory nonzero".into()));
    }
    let mut x = x0.to_vec();
    project(&mut x, lower, upper);
    let (mut fx, mut g) = f(&x)?;
    let mut evaluations = 1;
    if !fx.is_finite() || g.len() != n || g.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("objective at the starting point"));
    }
    let mut memory = Memory {
        pairs: VecDeque::new(),
        cap: opts.memory,
    };
    let mut pg = projected_gradient_norm(&x, &g, lower, upper);
    let mut iterations = 0;
    let mut stalled = 0;
    let mut converged = pg <= opts.gtol;
    let mut message = String::from(if converged {
        "projected gradient below tolerance"
    } else {
        "iteration limit reached"
    });

    while !converged && iterations < opts.max_iter {
        iterations += 1;
        let active = active_set(&x, &g, lower, upper);
        let mut d = memory.direction(&g, &active);
        let mut steepest = memory.pairs.is_empty();
        if !(dot(&d, &g) < 0.0) {
            memory.pairs.clear();
            d = memory.direction(&g, &active);
            steepest = true;
        }

        let mut accepted = None;
        loop {
            let dmax = d.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            let mut alpha = if steepest { (1.0 / dmax.max(1e-300)).min(1.0) } else { 1.0 };
            for _ in 0..opts.max_backtrack {
                let mut trial: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + alpha * di).collect();
                project(&mut trial, lower, upper);
                let step: Vec<f64> = trial.iter().zip(&x).map(|(a, b)| a - b).collect();
                if step.iter().all(|&s| s == 0.0) {
                    break;
                }
                let decrease = dot(&g, &step);
                evaluations += 1;
                if let Ok((ft, gt)) = f(&trial) {
                    if ft.is_finite()
                        && gt.iter().all(|v| v.is_finite())
                        && ft <= fx + 1e-4 * decrease
                    {
                        accepted = Some((trial, ft, gt, step));
                        break;
                    }
                }
                alpha *= 0.5;
            }
            if accepted.is_some() || steepest {
                break;
            }
            memory.pairs.clear();
            d = memory.direction(&g, &active);
            steepest = true;
        }

        let Some((x_new, f_new, g_new, s)) = accepted else {
            message = String::from("line search failed");
            break;
        };
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        memory.push(s, y);
        let f_old = fx;
        x = x_new;
        fx = f_new;
        g = g_new;
        pg = projected_gradient_norm(&x, &g, lower, upper);
        if pg <= opts.gtol {
            converged = true;
            message = String::from("projected gradient below tolerance");
        } else if (f_old - fx).abs() <= opts.ftol * f_old.abs().max(1.0) {
            stalled += 1;
            if stalled == 3 {
                message = format!("objective stalled with projected gradient {pg:e}");
                break;
            }
        } else {
            stalled = 0;
        }
    }

    Ok(LbfgsOutcome {
        x,
        f: fx,
        gradient: g,
        projected_gradient_norm: pg,
        iterations,
        evaluations,
        converged,
        message,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let (a, b) = (x[0], x[1]);
        let f = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
        let g = vec![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)];
        Ok((f, g))
    }

    #[test]
    fn unconstrained_rosenbrock() {
        let opts = LbfgsOptions {
            gtol: 1e-8,
            max_iter: 500,
            ..LbfgsOptions::default()
        };
        let out = minimize_bounded(rosenbrock, &[-1.2, 1.0], &[-5.0; 2], &[5.0; 2], &opts).unwrap();
        assert!(out.converged, "{}", out.message);
        assert!((out.x[0] - 1.0).abs() < 1e-6 && (out.x[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn active_bound() {
        let quad = |x: &[f64]| Ok(((x[0] - 3.0).powi(2) + (x[1] + 1.0).powi(2), vec![2.0 * (x[0] - 3.0), 2.0 * (x[1] + 1.0)]));
        let out = minimize_bounded(quad, &[0.0, 0.0], &[-2.0, 0.0], &[2.0, 2.0], &LbfgsOptions::default()).unwrap();
        assert!(out.converged);
        assert_eq!(out.x, vec![2.0, 0.0]);
    }

    #[test]
    fn start_outside_box_is_projected() {
        let quad = |x: &[f64]| Ok((x[0] * x[0], vec![2.0 * x[0]]));
        let out = minimize_bounded(quad, &[10.0], &[1.0], &[5.0], &LbfgsOptions::default()).unwrap();
        assert_eq!(out.x, vec![1.0]);
        assert!(out.converged);
    }

    #[test]
    fn errors_in_line_search_backtrack() {
        let f = |x: &[f64]| {
            if x[0] > 0.5 {
                Err(Error::NonFinite("test"))
            } else {
                Ok(((x[0] - 0.4).powi(2), vec![2.0 * (x[0] - 0.4)]))
            }
        };
        let out = minimize_bounded(f, &[-3.0], &[-10.0], &[10.0], &LbfgsOptions::default()).unwrap();
        assert!(out.converged);
        assert!((out.x[0] - 0.4).abs() < 1e-5);
    }
}
