//! Monte Carlo replications of the entry-exit estimator.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand_chacha::ChaCha8Rng;
use rand_core::SeedableRng;

use crate::inference::counts::{count_transitions, SnapshotDataset};
use crate::inference::mle::{fit_mle, Clock, EstimationResult, FitOptions, GradientMode};
use crate::inference::simulate::{sample_snapshots, simulate_trajectory};
use crate::model::entry_exit::{PARAMETER_NAMES, TRUE_THETA};
use crate::model::family::{EntryExitFamily, GeneratorFamily};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct McConfig {
    pub n_players: usize,
    pub n_demand: usize,
    /// Transitions observed per replication (one market of `n_obs + 1` snapshots).
    pub n_obs: usize,
    pub n_reps: usize,
    pub delta: f64,
    pub theta_true: Vec<f64>,
    pub theta0: Vec<f64>,
    pub seed: u64,
    pub gradient_mode: GradientMode,
    /// Length of the discarded initial segment, in units of `delta`.
    pub burn_in: f64,
    pub fit: FitOptions,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            n_players: 3,
            n_demand: 3,
            n_obs: 1000,
            n_reps: 25,
            delta: 1.0,
            theta_true: TRUE_THETA.to_vec(),
            theta0: vec![0.0, 0.0, 0.0, 0.5, 0.5],
            seed: 20_240_601,
            gradient_mode: GradientMode::Analytic,
            burn_in: 100.0,
            fit: FitOptions::default(),
        }
    }
}

impl McConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_obs == 0 || self.n_reps == 0 {
            return Err(Error::InvalidArgument("n_obs and n_reps must be positive".into()));
        }
        if !(self.delta.is_finite() && self.delta > 0.0) {
            return Err(Error::InvalidArgument("delta must be positive".into()));
        }
        if !(self.burn_in.is_finite() && self.burn_in >= 0.0) {
            return Err(Error::InvalidArgument("burn_in must be nonnegative".into()));
        }
        for (what, v) in [("theta_true", &self.theta_true), ("theta0", &self.theta0)] {
            if v.len() != PARAMETER_NAMES.len() {
                return Err(Error::Dimension {
                    context: what,
                    expected: PARAMETER_NAMES.len(),
                    found: v.len(),
                });
            }
        }
        Ok(())
    }

    pub fn family(&self) -> Result<EntryExitFamily> {
        EntryExitFamily::new(self.n_players, self.n_demand)
    }

    /// Random stream of replication `r`.
    pub fn rng(&self, r: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(r as u64);
        rng
    }
}

/// Simulated panel of replication `r`: a burn-in from state 0, then one
/// market of `n_obs` transitions.
pub fn simulate_replication_data(config: &McConfig, family: &EntryExitFamily, r: usize) -> Result<SnapshotDataset> {
    let q = family.generator(&config.theta_true)?;
    let mut rng = config.rng(r);
    let k0 = if config.burn_in > 0.0 {
        simulate_trajectory(&q, 0, config.burn_in * config.delta, &mut rng)?.final_state()
    } else {
        0
    };
    let horizon = config.n_obs as f64 * config.delta;
    let path = simulate_trajectory(&q, k0, horizon, &mut rng)?;
    let market = sample_snapshots(&path, config.delta, config.n_obs)?;
    SnapshotDataset::new(config.delta, vec![market])
}

/// Simulates, counts and fits replication `r`.
pub fn run_replication<C: Clock + ?Sized>(
    config: &McConfig,
    family: &EntryExitFamily,
    r: usize,
    clock: &C,
) -> Result<EstimationResult> {
    let ds = simulate_replication_data(config, family, r)?;
    let counts = count_transitions(&ds, family.n_states())?;
    let opts = FitOptions {
        gradient: config.gradient_mode,
        ..config.fit.clone()
    };
    fit_mle(family, &counts, config.delta, &config.theta0, &opts, clock)
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ReplicationRecord {
    pub replication: usize,
    pub theta_hat: Vec<f64>,
    pub loglik: f64,
    pub n_func_evals: usize,
    pub wall_time: f64,
    pub converged: bool,
}

impl ReplicationRecord {
    pub fn from_estimate(replication: usize, est: &EstimationResult) -> Self {
        Self {
            replication,
            theta_hat: est.theta_hat.values.clone(),
            loglik: est.loglik,
            n_func_evals: est.n_func_evals,
            wall_time: est.wall_time,
            converged: est.converged,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ParameterStats {
    pub mean: f64,
    pub median: f64,
    pub sd: f64,
    pub rmse: f64,
    pub mean_bias: f64,
    pub median_bias: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SampleStats {
    pub mean: f64,
    pub median: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct McSummary {
    pub parameter_names: Vec<String>,
    pub theta_true: Vec<f64>,
    pub parameters: Vec<ParameterStats>,
    pub wall_time: SampleStats,
    pub func_evals: SampleStats,
    /// Successful replications entering the aggregates.
    pub n_reps: usize,
    pub n_not_converged: usize,
    pub failures: Vec<(usize, String)>,
    pub replications: Vec<ReplicationRecord>,
}

fn sorted(values: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(f64::total_cmp);
    v
}

fn sample_stats(xs: &[f64]) -> SampleStats {
    let n = xs.len();
    if n == 0 {
        return SampleStats {
            mean: f64::NAN,
            median: f64::NAN,
            sd: f64::NAN,
        };
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    let median = if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    };
    let sd = if n > 1 {
        let ss = sorted(xs.iter().map(|x| (x - mean) * (x - mean)));
        (ss.iter().sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    SampleStats { mean, median, sd }
}

/// Aggregates replication outcomes. Values are sorted before every sum so
/// that the result does not depend on completion order.
pub fn summarize(
    names: &[&str],
    theta_true: &[f64],
    outcomes: Vec<(usize, Result<EstimationResult>)>,
) -> McSummary {
    let mut outcomes = outcomes;
    outcomes.sort_by_key(|(r, _)| *r);
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (r, out) in outcomes {
        match out {
            Ok(est) => records.push(ReplicationRecord::from_estimate(r, &est)),
            Err(e) => failures.push((r, e.to_string())),
        }
    }
    let parameters = (0..names.len())
        .map(|j| {
            let truth = theta_true[j];
            let xs = sorted(records.iter().map(|rec| rec.theta_hat[j]));
            let s = sample_stats(&xs);
            let n = xs.len() as f64;
            let sq = sorted(xs.iter().map(|x| (x - truth) * (x - truth)));
            ParameterStats {
                mean: s.mean,
                median: s.median,
                sd: s.sd,
                rmse: (sq.iter().sum::<f64>() / n).sqrt(),
                mean_bias: s.mean - truth,
                median_bias: s.median - truth,
            }
        })
        .collect();
    McSummary {
        parameter_names: names.iter().map(|s| s.to_string()).collect(),
        theta_true: theta_true.to_vec(),
        parameters,
        wall_time: sample_stats(&sorted(records.iter().map(|r| r.wall_time))),
        func_evals: sample_stats(&sorted(records.iter().map(|r| r.n_func_evals as f64))),
        n_reps: records.len(),
        n_not_converged: records.iter().filter(|r| !r.converged).count(),
        failures,
        replications: records,
    }
}

/// Runs all replications sequentially.
pub fn run_monte_carlo<C: Clock + ?Sized>(config: &McConfig, clock: &C) -> Result<McSummary> {
    config.validate()?;
    let family = config.family()?;
    let outcomes = (0..config.n_reps)
        .map(|r| (r, run_replication(config, &family, r, clock)))
        .collect();
    Ok(summarize(&PARAMETER_NAMES, &config.theta_true, outcomes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::mle::NoClock;
    use crate::model::ParameterVector;

    fn fake(values: &[f64], evals: usize) -> EstimationResult {
        EstimationResult {
            theta_hat: ParameterVector::new(&["a", "b"], values).unwrap(),
            loglik: 0.0,
            gradient: vec![0.0; 2],
            projected_gradient_norm: 0.0,
            n_func_evals: evals,
            iterations: 1,
            wall_time: 0.0,
            converged: true,
            gradient_mode: GradientMode::Analytic,
            message: String::new(),
        }
    }

    #[test]
    fn summary_statistics() {
        let outs = vec![
            (2, Ok(fake(&[3.0, 0.0], 10))),
            (0, Ok(fake(&[1.0, 0.0], 20))),
            (1, Ok(fake(&[2.0, 0.0], 30))),
            (3, Err(Error::Singular)),
        ];
        let s = summarize(&["a", "b"], &[1.5, 0.0], outs);
        assert_eq!(s.n_reps, 3);
        assert_eq!(s.failures.len(), 1);
        let a = s.parameters[0];
        assert!((a.mean - 2.0).abs() < 1e-15);
        assert_eq!(a.median, 2.0);
        assert!((a.sd - 1.0).abs() < 1e-15);
        assert!((a.mean_bias - 0.5).abs() < 1e-15);
        let n = 3.0;
        assert!((a.rmse.powi(2) - (a.sd.powi(2) * (n - 1.0) / n + a.mean_bias.powi(2))).abs() < 1e-12);
        assert_eq!(s.func_evals.median, 20.0);
        assert_eq!(s.replications[0].replication, 0);
    }

    #[test]
    fn replication_streams_are_deterministic_and_distinct() {
        let cfg = McConfig {
            n_players: 2,
            n_demand: 2,
            n_obs: 50,
            ..McConfig::default()
        };
        let fam = cfg.family().unwrap();
        let a = simulate_replication_data(&cfg, &fam, 0).unwrap();
        let b = simulate_replication_data(&cfg, &fam, 0).unwrap();
        let c = simulate_replication_data(&cfg, &fam, 1).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.n_transitions(), 50);
    }

    #[test]
    fn single_replication_is_reproducible() {
        let cfg = McConfig {
            n_players: 2,
            n_demand: 2,
            n_obs: 300,
            n_reps: 1,
            ..McConfig::default()
        };
        let a = run_monte_carlo(&cfg, &NoClock).unwrap();
        let b = run_monte_carlo(&cfg, &NoClock).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.n_reps, 1);
    }
}
