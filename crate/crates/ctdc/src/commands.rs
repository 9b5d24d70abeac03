//! Subcommand implementations.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use ctdc_core::ctmc::{ExpmOptions, ExpmPlan};
use ctdc_core::inference::{
    count_transitions, fit_mle, log_likelihood_gradient, sample_snapshots, simulate_trajectory, EstimationResult,
    FitOptions, LikelihoodOptions, NoClock, SnapshotDataset,
};
use ctdc_core::solver::{
    bellman_residual, ccp_from_value, newton_kantorovich_warm, relative_value_iterate_optimal, value_iterate,
    SolveOptions, ValueFunction,
};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::cli::{ExpmArgs, FitArgs, LoglikArgs, McArgs, MethodArg, RunConfig, SimulateArgs, SolveArgs};
use crate::config::{Model, ModelConfig};
use crate::error::{Error, Result};
use crate::io::{parse_vector_spec, read_dataset_file, write_columns, write_dataset, write_matrix_market};
use crate::mc::{run_parallel, StdClock};
use crate::report::{format_table, write_csv, write_replications};

pub fn run(cmd: &RunConfig) -> Result<()> {
    match cmd {
        RunConfig::Expm(a) => expm(a),
        RunConfig::Solve(a) => solve(a),
        RunConfig::Loglik(a) => loglik(a),
        RunConfig::Fit(a) => fit(a),
        RunConfig::Mc(a) => mc(a),
        RunConfig::Simulate(a) => simulate(a),
    }
}

/// Runs `f` on the file at `path`, or on stdout.
fn write_to(path: Option<&Path>, f: impl FnOnce(&mut dyn Write) -> io::Result<()>) -> Result<()> {
    let (res, name) = match path {
        Some(p) => {
            let name = p.display().to_string();
            let file = File::create(p).map_err(|source| Error::Output {
                path: name.clone(),
                source,
            })?;
            let mut w = BufWriter::new(file);
            (f(&mut w).and_then(|_| w.flush()), name)
        }
        None => {
            let mut w = io::stdout().lock();
            (f(&mut w).and_then(|_| w.flush()), "stdout".to_string())
        }
    };
    res.map_err(|source| Error::Output { path: name, source })
}

fn write_json<T: Serialize>(path: Option<&Path>, value: &T) -> Result<()> {
    write_to(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        writeln!(w)
    })
}

fn require(ok: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Config(msg()))
    }
}

fn check_delta(delta: f64) -> Result<()> {
    require(delta.is_finite() && delta >= 0.0, || format!("--delta must be nonnegative, got {delta}"))
}

fn check_tol(name: &str, tol: f64) -> Result<()> {
    require(tol > 0.0 && tol < 1.0, || format!("{name} must lie in (0, 1), got {tol}"))
}

fn check_theta(model: &Model, theta: &[f64], what: &str) -> Result<()> {
    require(theta.len() == model.parameter_names().len(), || {
        format!(
            "{what} needs {} values ({}), got {}",
            model.parameter_names().len(),
            model.parameter_names().join(","),
            theta.len()
        )
    })
}

/// `exp(ΔQ)v` and the requested derivative vectors as named columns.
pub fn expm_columns(model: &Model, args: &ExpmArgs) -> Result<Vec<(String, Vec<f64>)>> {
    check_delta(args.delta)?;
    check_tol("--tol", args.tol)?;
    let family = model.family();
    let v = parse_vector_spec(&args.vector, family.n_states())?;
    let idx = args
        .deriv
        .iter()
        .map(|p| model.parameter_index(p))
        .collect::<Result<Vec<_>>>()?;
    let (q, dq) = if idx.is_empty() {
        (family.generator(&model.theta)?, Vec::new())
    } else {
        let (q, all) = family.generator_and_derivatives(&model.theta)?;
        (q, idx.iter().map(|&i| all[i].clone()).collect())
    };
    if let Some(path) = &args.write_q {
        write_to(Some(path), |w| write_matrix_market(w, q.as_csr()))?;
    }
    let opts = ExpmOptions {
        eps: args.tol,
        eta: args.eta,
        side: args.side.into(),
    };
    let plan = ExpmPlan::new(&q, &dq, args.delta, &opts)?;
    let (mu, dmu) = plan.apply_with_derivatives(&v)?;
    let mut cols = vec![("value".to_string(), mu)];
    cols.extend(args.deriv.iter().zip(dmu).map(|(p, d)| (format!("d_{p}"), d)));
    Ok(cols)
}

fn expm(args: &ExpmArgs) -> Result<()> {
    let model = ModelConfig::load(&args.config)?.build()?;
    let cols = expm_columns(&model, args)?;
    write_to(args.out.as_deref(), |w| write_columns(w, &cols))
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    pub method: MethodArg,
    pub iterations: usize,
    pub final_residual: f64,
    /// `‖V - T(V)‖∞` of the returned value function.
    pub bellman_residual: f64,
    pub residuals: Vec<f64>,
}

/// Value function, best-response CCPs and the convergence report.
pub fn solve_model(model: &Model, args: &SolveArgs) -> Result<(ValueFunction, Vec<f64>, SolveReport)> {
    let spec = &model.spec;
    require(args.player < spec.n_players(), || {
        format!("--player {} out of range for {} players", args.player, spec.n_players())
    })?;
    require(args.tol > 0.0 && args.tol.is_finite(), || format!("--tol must be positive, got {}", args.tol))?;
    let opts = SolveOptions {
        tol: args.tol,
        max_iter: args.max_iter,
    };
    let v0 = ValueFunction::zeros(spec.n_states());
    let beliefs = &model.beliefs;
    let p = args.player;
    let (v, report) = match args.method {
        MethodArg::Vi => value_iterate(spec, beliefs, p, &v0, &opts)?,
        MethodArg::Nk => newton_kantorovich_warm(spec, beliefs, p, &v0, args.warm_start, &opts)?,
        MethodArg::Rvi => relative_value_iterate_optimal(spec, beliefs, p, &v0, &opts)?,
    };
    let ccps = ccp_from_value(spec, p, &v)?;
    let out = SolveReport {
        method: args.method,
        iterations: report.iterations,
        final_residual: report.final_residual,
        bellman_residual: bellman_residual(spec, beliefs, p, &v)?,
        residuals: report.residuals,
    };
    Ok((v, ccps, out))
}

fn solve(args: &SolveArgs) -> Result<()> {
    let model = ModelConfig::load(&args.config)?.build()?;
    let (v, ccps, report) = solve_model(&model, args)?;
    let j = model.spec.n_actions();
    let mut cols = vec![("value".to_string(), v.into_vec())];
    for a in 0..j {
        cols.push((format!("ccp_{a}"), ccps.iter().skip(a).step_by(j).copied().collect()));
    }
    write_to(args.out.as_deref(), |w| write_columns(w, &cols))?;
    match &args.report {
        Some(path) => write_json(Some(path), &report),
        None => {
            eprintln!("{}", serde_json::to_string(&report).expect("reports serialize"));
            Ok(())
        }
    }
}

fn load_counts(model: &Model, data: &Path, delta: f64) -> Result<(SnapshotDataset, ctdc_core::inference::TransitionCounts)> {
    require(delta.is_finite() && delta > 0.0, || format!("--delta must be positive, got {delta}"))?;
    let ds = read_dataset_file(data, delta)?;
    let counts = count_transitions(&ds, model.family().n_states()).map_err(Error::data)?;
    Ok((ds, counts))
}

#[derive(Debug, Clone, Serialize)]
pub struct LoglikReport {
    pub parameter_names: Vec<String>,
    pub theta: Vec<f64>,
    pub loglik: f64,
    pub gradient: Vec<f64>,
    pub n_transitions: usize,
    pub columns_evaluated: usize,
    pub floored: usize,
}

pub fn loglik_report(model: &Model, args: &LoglikArgs) -> Result<LoglikReport> {
    check_tol("--eps", args.eps)?;
    let theta = args.theta.clone().unwrap_or_else(|| model.theta.clone());
    check_theta(model, &theta, "--theta")?;
    let (ds, counts) = load_counts(model, &args.data, args.delta)?;
    let opts = LikelihoodOptions {
        eps: args.eps,
        ..LikelihoodOptions::default()
    };
    let ev = log_likelihood_gradient(model.family(), &theta, &counts, args.delta, &opts)?;
    Ok(LoglikReport {
        parameter_names: model.parameter_names().iter().map(|s| s.to_string()).collect(),
        theta,
        loglik: ev.value,
        gradient: ev.gradient.unwrap_or_default(),
        n_transitions: ds.n_transitions(),
        columns_evaluated: ev.columns_evaluated,
        floored: ev.floored,
    })
}

fn loglik(args: &LoglikArgs) -> Result<()> {
    let model = ModelConfig::load(&args.config)?.build()?;
    let report = loglik_report(&model, args)?;
    write_json(args.out.as_deref(), &report)
}

pub fn fit_model(model: &Model, args: &FitArgs) -> Result<EstimationResult> {
    check_tol("--eps", args.eps)?;
    require(args.gtol > 0.0, || format!("--gtol must be positive, got {}", args.gtol))?;
    let start = args.start.clone().unwrap_or_else(|| model.theta.clone());
    check_theta(model, &start, "--start")?;
    let (_, counts) = load_counts(model, &args.data, args.delta)?;
    let mut opts = FitOptions {
        gradient: args.gradient.into(),
        ..FitOptions::default()
    };
    opts.optimizer.gtol = args.gtol;
    opts.optimizer.max_iter = args.max_iter;
    opts.likelihood.eps = args.eps;
    let result = if args.timing {
        fit_mle(model.family(), &counts, args.delta, &start, &opts, &StdClock::new())
    } else {
        fit_mle(model.family(), &counts, args.delta, &start, &opts, &NoClock)
    };
    result.map_err(|e| match e {
        ctdc_core::Error::InvalidArgument(m) => Error::Config(m),
        ctdc_core::Error::InvalidData(m) => Error::Data(m),
        e => Error::Numeric(e),
    })
}

fn fit(args: &FitArgs) -> Result<()> {
    let model = ModelConfig::load(&args.config)?.build()?;
    let est = fit_model(&model, args)?;
    write_json(args.out.as_deref(), &est)?;
    if est.converged {
        Ok(())
    } else {
        Err(Error::NotConverged(est.message))
    }
}

fn mc(args: &McArgs) -> Result<()> {
    let cfg = args.to_mc_config();
    let summary = run_parallel(&cfg, args.threads, args.timing)?;
    for (r, msg) in &summary.failures {
        log::warn!("replication {r} excluded: {msg}");
    }
    if let Some(p) = &args.csv {
        write_to(Some(p), |w| write_csv(w, &summary, args.timing))?;
    }
    if let Some(p) = &args.replications {
        write_to(Some(p), |w| write_replications(w, &summary))?;
    }
    if let Some(p) = &args.json {
        write_json(Some(p), &summary)?;
    }
    let table = format_table(&summary, args.timing);
    write_to(args.out.as_deref(), |w| w.write_all(table.as_bytes()))?;
    if summary.n_reps == 0 {
        return Err(Error::Numeric(ctdc_core::Error::InvalidData("every replication failed".into())));
    }
    Ok(())
}

/// Independent markets, each from its own random stream of `seed`.
pub fn simulate_dataset(model: &Model, args: &SimulateArgs) -> Result<SnapshotDataset> {
    require(args.delta.is_finite() && args.delta > 0.0, || {
        format!("--delta must be positive, got {}", args.delta)
    })?;
    require(args.markets > 0 && args.obs > 0, || "--markets and --obs must be positive".into())?;
    require(args.burn_in.is_finite() && args.burn_in >= 0.0, || {
        format!("--burn-in must be nonnegative, got {}", args.burn_in)
    })?;
    let q = model.family().generator(&model.theta)?;
    let markets = (0..args.markets)
        .map(|m| {
            let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
            rng.set_stream(m as u64);
            let k0 = simulate_trajectory(&q, 0, args.burn_in * args.delta, &mut rng)?.final_state();
            let path = simulate_trajectory(&q, k0, args.obs as f64 * args.delta, &mut rng)?;
            sample_snapshots(&path, args.delta, args.obs)
        })
        .collect::<ctdc_core::Result<Vec<_>>>()?;
    Ok(SnapshotDataset::new(args.delta, markets)?)
}

fn simulate(args: &SimulateArgs) -> Result<()> {
    let model = ModelConfig::load(&args.config)?.build()?;
    let ds = simulate_dataset(&model, args)?;
    write_to(args.out.as_deref(), |w| write_dataset(w, &ds))
}
