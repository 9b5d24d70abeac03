//! Event-level CTMC simulation and snapshot sampling.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand_core::RngCore;

use crate::ctmc::IntensityMatrix;
use crate::{Error, Result};

/// Uniform draw on the open interval `(0, 1)`.
pub fn uniform_open01<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    ((rng.next_u64() >> 12) as f64 + 0.5) * (1.0 / (1u64 << 52) as f64)
}

/// Piecewise-constant, right-continuous trajectory on `[0, horizon]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EventPath {
    /// Jump times, starting with 0 for the initial state.
    pub times: Vec<f64>,
    pub states: Vec<usize>,
    pub horizon: f64,
}

impl EventPath {
    /// State at time `t` (the state after any jump at exactly `t`).
    pub fn state_at(&self, t: f64) -> usize {
        let idx = self.times.partition_point(|&s| s <= t);
        self.states[idx.saturating_sub(1)]
    }

    pub fn final_state(&self) -> usize {
        *self.states.last().expect("path holds the initial state")
    }

    pub fn n_jumps(&self) -> usize {
        self.states.len() - 1
    }
}

/// Simulates the chain from `k0` until `horizon`. Holding times are
/// exponential with rate `-q_kk`; the next state is drawn proportionally to
/// the off-diagonal rates.
pub fn simulate_trajectory<R: RngCore + ?Sized>(
    q: &IntensityMatrix,
    k0: usize,
    horizon: f64,
    rng: &mut R,
) -> Result<EventPath> {
    let n = q.n_states();
    if k0 >= n {
        return Err(Error::IndexOutOfRange { index: k0, bound: n });
    }
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(Error::InvalidArgument(format!("horizon must be positive, got {horizon}")));
    }
    let q = q.as_csr();
    let mut times = vec![0.0];
    let mut states = vec![k0];
    let mut t = 0.0;
    let mut k = k0;
    loop {
        let (cols, vals) = q.row(k);
        let out: f64 = cols
            .iter()
            .zip(vals)
            .filter(|(&c, _)| c != k)
            .map(|(_, v)| v)
            .sum();
        if out <= 0.0 {
            break;
        }
        t += -uniform_open01(rng).ln() / out;
        if t > horizon {
            break;
        }
        let target = uniform_open01(rng) * out;
        let mut acc = 0.0;
        let mut next = None;
        for (&c, &v) in cols.iter().zip(vals) {
            if c == k || v <= 0.0 {
                continue;
            }
            acc += v;
            next = Some(c);
            if target < acc {
                break;
            }
        }
        k = next.expect("positive exit rate implies a positive off-diagonal");
        times.push(t);
        states.push(k);
    }
    Ok(EventPath {
        times,
        states,
        horizon,
    })
}

/// States at `0, Δ, …, nΔ` (`n + 1` values).
pub fn sample_snapshots(path: &EventPath, delta: f64, n: usize) -> Result<Vec<usize>> {
    if !(delta.is_finite() && delta > 0.0) {
        return Err(Error::InvalidArgument(format!("snapshot spacing must be positive, got {delta}")));
    }
    let end = n as f64 * delta;
    if end > path.horizon {
        return Err(Error::InvalidArgument(format!(
            "path horizon {} is shorter than {n} snapshots at spacing {delta}",
            path.horizon
        )));
    }
    Ok((0..=n).map(|m| path.state_at(m as f64 * delta)).collect())
}
