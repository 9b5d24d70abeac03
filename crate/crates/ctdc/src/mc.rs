//! Replication-parallel Monte Carlo.

use std::time::Instant;

use ctdc_core::inference::{run_replication, summarize, Clock, McConfig, McSummary, NoClock};
use ctdc_core::model::entry_exit::PARAMETER_NAMES;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Seconds elapsed since construction.
#[derive(Debug, Clone, Copy)]
pub struct StdClock {
    origin: Instant,
}

impl StdClock {
    pub fn new() -> Self {
        Self { origin: Instant::now() }
    }
}

impl Default for StdClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for StdClock {
    fn now(&self) -> Option<f64> {
        Some(self.origin.elapsed().as_secs_f64())
    }
}

/// Runs all replications on a pool of `threads` workers (all cores when
/// `None`). Each replication draws from its own stream, so the summary does
/// not depend on the thread count. Wall times are recorded only when
/// `timing` is set and are zero otherwise.
pub fn run_parallel(config: &McConfig, threads: Option<usize>, timing: bool) -> Result<McSummary> {
    config.validate().map_err(Error::config)?;
    let family = config.family().map_err(Error::config)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        if n == 0 {
            return Err(Error::Config("--threads must be positive".into()));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(Error::config)?;
    let clock = StdClock::new();
    let outcomes = pool.install(|| {
        (0..config.n_reps)
            .into_par_iter()
            .map(|r| {
                let out = if timing {
                    run_replication(config, &family, r, &clock)
                } else {
                    run_replication(config, &family, r, &NoClock)
                };
                if let Err(e) = &out {
                    log::warn!("replication {r} failed: {e}");
                }
                (r, out)
            })
            .collect()
    });
    Ok(summarize(&PARAMETER_NAMES, &config.theta_true, outcomes))
}
