//! Command-line records. Each subcommand's arguments are also a
//! serializable run configuration.

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use ctdc_core::ctmc::Side;
use ctdc_core::inference::GradientMode;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "ctdc", version, about = "Continuous-time dynamic discrete choice toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: RunConfig,
}

impl Cli {
    pub fn run_config(self) -> RunConfig {
        self.command
    }
}

#[derive(Debug, Clone, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "snake_case")]
pub enum RunConfig {
    /// Apply exp(ΔQ) to a vector, optionally with parameter derivatives.
    Expm(ExpmArgs),
    /// Solve for the value function.
    Solve(SolveArgs),
    /// Evaluate the snapshot log likelihood and its gradient.
    Loglik(LoglikArgs),
    /// Maximum likelihood estimation from a snapshot dataset.
    Fit(FitArgs),
    /// Monte Carlo study of the entry/exit estimator.
    Mc(McArgs),
    /// Simulate a snapshot dataset from a model configuration.
    Simulate(SimulateArgs),
}

impl RunConfig {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("run configs serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(Error::config)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SideArg {
    /// v' exp(ΔQ); with e:k the transition probabilities out of state k.
    Row,
    /// exp(ΔQ) v; with e:l the probabilities of reaching state l.
    Column,
}

impl From<SideArg> for Side {
    fn from(s: SideArg) -> Self {
        match s {
            SideArg::Row => Side::Row,
            SideArg::Column => Side::Column,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodArg {
    /// Value iteration.
    Vi,
    /// Newton-Kantorovich after value-iteration warm-start sweeps.
    Nk,
    /// Relative value iteration anchored at state 0.
    Rvi,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GradientArg {
    Analytic,
    Numeric,
}

impl From<GradientArg> for GradientMode {
    fn from(g: GradientArg) -> Self {
        match g {
            GradientArg::Analytic => GradientMode::Analytic,
            GradientArg::Numeric => GradientMode::Numeric,
        }
    }
}

#[derive(Debug, Clone, PartialEq, clap::Args, Serialize, Deserialize)]
pub struct ExpmArgs {
    /// Model configuration (JSON).
    #[arg(short, long)]
    pub config: PathBuf,
    /// Time step Δ.
    #[arg(long, default_value = "1")]
    pub delta: f64,
    /// `e:<index>` for a basis vector, or a CSV file with a `value` column.
    #[arg(long, default_value = "e:0")]
    pub vector: String,
    /// Poisson tail tolerance ε of the series.
    #[arg(long, default_value = "1e-12")]
    pub tol: f64,
    #[arg(long, value_enum, default_value = "row")]
    pub side: SideArg,
    /// Also write the derivative with respect to this parameter (repeatable).
    #[arg(long)]
    pub deriv: Vec<String>,
    /// Uniformization rate [default: max |q_kk| plus a small pad].
    #[arg(long)]
    pub eta: Option<f64>,
    /// Output CSV [default: stdout].
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write Q in Matrix Market format.
    #[arg(long)]
    pub write_q: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, clap::Args, Serialize, Deserialize)]
pub struct SolveArgs {
    #[arg(short, long)]
    pub config: PathBuf,
    #[arg(long, value_enum, default_value = "nk")]
    pub method: MethodArg,
    /// Stopping tolerance (sup-norm error for vi, Bellman residual for nk,
    /// span of the update for rvi).
    #[arg(long, default_value = "1e-10")]
    pub tol: f64,
    /// Player whose value function is solved; rivals follow the configured CCPs.
    #[arg(long, default_value_t = 0)]
    pub player: usize,
    #[arg(long, default_value_t = 1_000_000)]
    pub max_iter: usize,
    /// Value-iteration sweeps before Newton-Kantorovich.
    #[arg(long, default_value_t = 20)]
    pub warm_start: usize,
    /// Value function CSV [default: stdout].
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Convergence report JSON [default: stderr].
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, clap::Args, Serialize, Deserialize)]
pub struct LoglikArgs {
    #[arg(short, long)]
    pub config: PathBuf,
    /// Snapshot dataset CSV (market_id,obs_index,state_index).
    #[arg(long)]
    pub data: PathBuf,
    /// Snapshot spacing Δ.
    #[arg(long, default_value = "1")]
    pub delta: f64,
    /// Comma-separated parameter values [default: the configured parameters].
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub theta: Option<Vec<f64>>,
    /// Poisson tail tolerance ε.
    #[arg(long, default_value = "1e-12")]
    pub eps: f64,
    /// Output JSON [default: stdout].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, clap::Args, Serialize, Deserialize)]
pub struct FitArgs {
    #[arg(short, long)]
    pub config: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "1")]
    pub delta: f64,
    #[arg(long, value_enum, default_value = "analytic")]
    pub gradient: GradientArg,
    /// Comma-separated starting values [default: the configured parameters].
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub start: Option<Vec<f64>>,
    /// Projected-gradient tolerance on the mean log likelihood per transition.
    #[arg(long, default_value = "1e-7")]
    pub gtol: f64,
    #[arg(long, default_value_t = 200)]
    pub max_iter: usize,
    #[arg(long, default_value = "1e-12")]
    pub eps: f64,
    /// Record the wall time; output is then not reproducible.
    #[arg(long)]
    pub timing: bool,
    /// EstimationResult JSON [default: stdout].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, clap::Args, Serialize, Deserialize)]
pub struct McArgs {
    /// Number of firms N.
    #[arg(long, default_value_t = 3)]
    pub players: usize,
    /// Number of demand levels D.
    #[arg(long, default_value_t = 3)]
    pub demand: usize,
    /// Observed transitions per replication.
    #[arg(long, default_value_t = 1000)]
    pub obs: usize,
    #[arg(long, default_value_t = 25)]
    pub reps: usize,
    #[arg(long, default_value_t = 20_240_601)]
    pub seed: u64,
    #[arg(long, default_value = "1")]
    pub delta: f64,
    #[arg(long, value_enum, default_value = "analytic")]
    pub gradient: GradientArg,
    /// Discarded initial simulation time, in units of Δ.
    #[arg(long, default_value = "100")]
    pub burn_in: f64,
    /// True parameters (theta_ec, theta_rn, theta_d, lambda, gamma).
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, default_value = "-0.5,-0.05,0.1,1,0.3")]
    pub theta_true: Vec<f64>,
    /// Starting values of every fit.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, default_value = "0,0,0,0.5,0.5")]
    pub theta0: Vec<f64>,
    #[arg(long, default_value = "1e-7")]
    pub gtol: f64,
    #[arg(long, default_value_t = 200)]
    pub max_iter: usize,
    /// Worker threads [default: all cores].
    #[arg(long)]
    pub threads: Option<usize>,
    /// Record wall times and add the time row; output is then not reproducible.
    #[arg(long)]
    pub timing: bool,
    /// Aligned text table [default: stdout].
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Summary table as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Per-replication estimates as CSV.
    #[arg(long)]
    pub replications: Option<PathBuf>,
    /// Full summary as JSON.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, clap::Args, Serialize, Deserialize)]
pub struct SimulateArgs {
    #[arg(short, long)]
    pub config: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub markets: usize,
    /// Transitions per market.
    #[arg(long, default_value_t = 1000)]
    pub obs: usize,
    #[arg(long, default_value = "1")]
    pub delta: f64,
    #[arg(long, default_value_t = 20_240_601)]
    pub seed: u64,
    /// Discarded initial simulation time, in units of Δ, from state 0.
    #[arg(long, default_value = "100")]
    pub burn_in: f64,
    /// Dataset CSV [default: stdout].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl McArgs {
    pub fn to_mc_config(&self) -> ctdc_core::inference::McConfig {
        let mut cfg = ctdc_core::inference::McConfig {
            n_players: self.players,
            n_demand: self.demand,
            n_obs: self.obs,
            n_reps: self.reps,
            delta: self.delta,
            theta_true: self.theta_true.clone(),
            theta0: self.theta0.clone(),
            seed: self.seed,
            gradient_mode: self.gradient.into(),
            burn_in: self.burn_in,
            ..Default::default()
        };
        cfg.fit.optimizer.gtol = self.gtol;
        cfg.fit.optimizer.max_iter = self.max_iter;
        cfg
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;
    use ctdc_core::model::entry_exit::TRUE_THETA;

    #[test]
    fn cli_is_well_formed() {
        Cli::command().debug_assert();
    }

    #[test]
    fn theta_default_matches_core() {
        let cli = Cli::try_parse_from(["ctdc", "mc"]).unwrap();
        let RunConfig::Mc(a) = cli.command else { panic!() };
        assert_eq!(a.theta_true, TRUE_THETA.to_vec());
        assert_eq!(a.to_mc_config().seed, ctdc_core::inference::McConfig::default().seed);
    }
}
