//! Value functions for fixed beliefs: the Bellman optimality operator, value
//! iteration, the uniform representation, policy evaluation,
//! Newton-Kantorovich and relative value iteration.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::ctmc::uniformize;
use crate::linalg::{gmres_shifted, solve_shifted_dense, span, sup_dist, sup_norm, GmresOptions};
use crate::model::{assemble_q, expected_shock, CcpProfile, GameSpec, ShockSpec};
use crate::sparse::CsrMatrix;
use crate::special::{logsumexp, normal_cdf, normal_pdf, softmax_into, EULER_GAMMA};
use crate::{Error, Result};

/// Systems up to this size are solved by dense LU, larger ones by GMRES.
pub const DENSE_SOLVE_LIMIT: usize = 2000;

/// A finite value vector of length `K`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(transparent))]
pub struct ValueFunction(Vec<f64>);

impl ValueFunction {
    pub fn new(v: Vec<f64>) -> Result<Self> {
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("value function"));
        }
        Ok(Self(v))
    }

    pub fn zeros(k: usize) -> Self {
        Self(vec![0.0; k])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl core::ops::Deref for ValueFunction {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Iteration count and residual history of a solver run.
#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ConvergenceReport {
    pub iterations: usize,
    pub final_residual: f64,
    pub residuals: Vec<f64>,
}

impl ConvergenceReport {
    fn push(&mut self, r: f64) {
        self.iterations += 1;
        self.final_residual = r;
        self.residuals.push(r);
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 1_000_000,
        }
    }
}

impl SolveOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            tol,
            ..Self::default()
        }
    }

    fn check(&self) -> Result<()> {
        if self.tol > 0.0 && self.tol.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("tolerance must be positive, got {}", self.tol)))
        }
    }
}

fn check_inputs(spec: &GameSpec, beliefs: &CcpProfile, player: usize, v: &[f64]) -> Result<()> {
    if player >= spec.n_players() {
        return Err(Error::IndexOutOfRange {
            index: player,
            bound: spec.n_players(),
        });
    }
    if v.len() != spec.n_states() {
        return Err(Error::Dimension {
            context: "value function",
            expected: spec.n_states(),
            found: v.len(),
        });
    }
    if (beliefs.n_players(), beliefs.n_actions(), beliefs.n_states())
        != (spec.n_players(), spec.n_actions(), spec.n_states())
    {
        return Err(Error::Dimension {
            context: "beliefs",
            expected: spec.n_players() * spec.n_actions() * spec.n_states(),
            found: beliefs.as_slice().len(),
        });
    }
    Ok(())
}

/// Choice-specific values `ψ_ijk + V_{l(i,j,k)}` for one state.
fn choice_values(spec: &GameSpec, player: usize, k: usize, v: &[f64], out: &mut [f64]) {
    for (j, o) in out.iter_mut().enumerate() {
        *o = spec.psi(player, j, k) + v[spec.transition(player, j, k)];
    }
}

/// Expected maximum of `a_j + ε_j`; writes the implied CCPs into `ccp`.
fn emax(shock: &ShockSpec, a: &[f64], ccp: &mut [f64]) -> f64 {
    match *shock {
        ShockSpec::Logit { scale } => {
            let scaled: Vec<f64> = a.iter().map(|x| x / scale).collect();
            softmax_into(&scaled, ccp);
            scale * logsumexp(&scaled) + scale * EULER_GAMMA
        }
        ShockSpec::BinaryProbit { var0, var1, cov } => {
            let s = ShockSpec::probit_diff_sd(var0, var1, cov);
            let g = a[1] - a[0];
            let p1 = normal_cdf(g / s);
            ccp[0] = 1.0 - p1;
            ccp[1] = p1;
            a[0] + g * p1 + s * normal_pdf(g / s)
        }
    }
}

/// Terms shared by the Bellman and uniformized operators for state `k`:
/// `(u + nature + rivals + λ_i Emax, out_k + Σλ)`.
fn state_numerator(
    spec: &GameSpec,
    beliefs: &CcpProfile,
    player: usize,
    k: usize,
    v: &[f64],
    scratch: &mut [f64],
    ccp: &mut [f64],
) -> (f64, f64) {
    let mut num = spec.flow(player, k);
    let mut rate = 0.0;
    let (cols, vals) = spec.q0().as_csr().row(k);
    for (&l, &q) in cols.iter().zip(vals) {
        if l != k {
            num += q * v[l];
            rate += q;
        }
    }
    for m in 0..spec.n_players() {
        let lam = spec.lambda(m);
        rate += lam;
        if m == player {
            choice_values(spec, player, k, v, scratch);
            num += lam * emax(spec.shock(), scratch, ccp);
        } else {
            let sig = beliefs.slice(m, k);
            let mut acc = 0.0;
            for (j, &p) in sig.iter().enumerate() {
                acc += p * v[spec.transition(m, j, k)];
            }
            num += lam * acc;
        }
    }
    (num, rate)
}

fn bellman_into(spec: &GameSpec, beliefs: &CcpProfile, player: usize, v: &[f64], out: &mut [f64]) {
    let mut scratch = vec![0.0; spec.n_actions()];
    let mut ccp = vec![0.0; spec.n_actions()];
    let rho = spec.rho(player);
    for (k, o) in out.iter_mut().enumerate() {
        let (num, rate) = state_numerator(spec, beliefs, player, k, v, &mut scratch, &mut ccp);
        *o = num / (rho + rate);
    }
}

/// Uniformized optimality operator
/// `Γ(V)_k = [num_k + (η̄ - out_k - Σλ) V_k] / (ρ_i + η̄)`, sharing `T`'s
/// fixed point. Also returns the best-response CCPs at `v` (layout `k*J + j`).
fn gamma_into(
    spec: &GameSpec,
    beliefs: &CcpProfile,
    player: usize,
    v: &[f64],
    out: &mut [f64],
    ccps: &mut [f64],
) {
    let j = spec.n_actions();
    let mut scratch = vec![0.0; j];
    let (eta_bar, _) = spec.eta_bounds();
    let denom = spec.rho(player) + eta_bar;
    for (k, o) in out.iter_mut().enumerate() {
        let ccp = &mut ccps[k * j..(k + 1) * j];
        let (num, rate) = state_numerator(spec, beliefs, player, k, v, &mut scratch, ccp);
        *o = (num + (eta_bar - rate) * v[k]) / denom;
    }
}

/// One application of the Bellman optimality operator `T` for `player`.
/// Rival behaviour comes from `beliefs`; the player's own slice is ignored.
pub fn bellman_apply(
    spec: &GameSpec,
    beliefs: &CcpProfile,
    player: usize,
    v: &ValueFunction,
) -> Result<ValueFunction> {
    check_inputs(spec, beliefs, player, v)?;
    let mut out = vec![0.0; v.len()];
    bellman_into(spec, beliefs, player, v, &mut out);
    ValueFunction::new(out)
}

/// Sup-norm stopping threshold on successive changes certifying a true
/// error of at most `tol` for a `beta`-contraction.
fn change_threshold(tol: f64, beta: f64) -> f64 {
    if beta <= 0.0 {
        tol
    } else {
        tol * (1.0 - beta) / beta
    }
}

/// Successive approximation `V ← T(V)`. The residual sequence records
/// `‖V_{n+1} - V_n‖∞`.
pub fn value_iterate(
    spec: &GameSpec,
    beliefs: &CcpProfile,
    player: usize,
    v0: &ValueFunction,
    opts: &SolveOptions,
) -> Result<(ValueFunction, ConvergenceReport)> {
    opts.check()?;
    check_inputs(spec, beliefs, player, v0)?;
    let threshold = change_threshold(opts.tol, spec.beta_bar(player));
    let mut v = v0.to_vec();
    let mut next = vec![0.0; v.len()];
    let mut report = ConvergenceReport::default();
    while report.iterations < opts.max_iter {
        bellman_into(spec, beliefs, player, &v, &mut next);
        let change = sup_dist(&v, &next);
        if !change.is_finite() {
            return Err(Error::NonFinite("value iteration"));
        }
        core::mem::swap(&mut v, &mut next);
        report.push(change);
        if change <= threshold {
            return Ok((ValueFunction(v), report));
        }
    }
    Err(Error::NotConverged {
        iterations: report.iterations,
        residual: report.final_residual,
    })
}

/// Best-response CCPs of `player` at `v`, layout `k * J + j`.
pub fn ccp_from_value(spec: &GameSpec, player: usize, v: &ValueFunction) -> Result<Vec<f64>> {
    if player >= spec.n_players() {
        return Err(Error::IndexOutOfRange {
            index: player,
            bound: spec.n_players(),
        });
    }
    if v.len() != spec.n_states() {
        return Err(Error::Dimension {
            context: "value function",
            expected: spec.n_states(),
            found: v.len(),
        });
    }
    let j = spec.n_actions();
    let mut out = vec![0.0; j * spec.n_states()];
    let mut scratch = vec![0.0; j];
    for k in 0..spec.n_states() {
        choice_values(spec, player, k, v, &mut scratch);
        emax(spec.shock(), &scratch, &mut out[k * j..(k + 1) * j]);
    }
    Ok(out)
}

/// `beliefs` with `player`'s slice replaced by the best response to `v`.
pub fn best_response_profile(
    spec: &GameSpec,
    beliefs: &CcpProfile,
    player: usize,
    v: &ValueFunction,
) -> Result<CcpProfile> {
    let mut profile = beliefs.clone();
    profile.set_player(player, &ccp_from_value(spec, player, v)?)?;
    Ok(profile)
}

/// `V = U + β̄ Σ V` for a fixed CCP profile.
#[derive(Debug, Clone)]
pub struct UniformRepresentation {
    pub u_eff: Vec<f64>,
    pub beta_bar: f64,
    pub sigma_matrix: CsrMatrix,
    pub eta_bar: f64,
}

impl UniformRepresentation {
    pub fn n_states(&self) -> usize {
        self.u_eff.len()
    }

    /// `T_σ(V) = U + β̄ Σ V`.
    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.n_states() {
            return Err(Error::Dimension {
                context: "value function",
                expected: self.n_states(),
                found: v.len(),
            });
        }
        let mut out = vec![0.0; v.len()];
        self.apply_into(v, &mut out);
        Ok(out)
    }

    fn apply_into(&self, v: &[f64], out: &mut [f64]) {
        self.sigma_matrix.spmv_unchecked(v, out);
        for (o, u) in out.iter_mut().zip(&self.u_eff) {
            *o = u + self.beta_bar * *o;
        }
    }
}

/// Builds `U_i(σ) = (u_i + λ_i C_i(σ)) / (ρ_i + η̄)`, `Σ(σ) = I + Q(σ)/η̄` and
/// `β̄ = η̄ / (ρ_i + η̄)` with `C_ik = Σ_j σ_ijk (ψ_ijk + e_ijk)`.
pub fn uniform_representation(
    spec: &GameSpec,
    sigma: &CcpProfile,
    player: usize,
) -> Result<UniformRepresentation> {
    if player >= spec.n_players() {
        return Err(Error::IndexOutOfRange {
            index: player,
            bound: spec.n_players(),
        });
    }
    let (q, _) = assemble_q(spec, sigma, None)?;
    let (eta_bar, _) = spec.eta_bounds();
    let chain = uniformize(&q, Some(eta_bar))?;
    let denom = spec.rho(player) + eta_bar;
    let lam = spec.lambda(player);
    let mut u_eff = Vec::with_capacity(spec.n_states());
    for k in 0..spec.n_states() {
        let mut c = 0.0;
        for (j, &p) in sigma.slice(player, k).iter().enumerate() {
            c += p * (spec.psi(player, j, k) + expected_shock(spec.shock(), p, j)?);
        }
        u_eff.push((spec.flow(player, k) + lam * c) / denom);
    }
    Ok(UniformRepresentation {
        u_eff,
        beta_bar: eta_bar / denom,
        sigma_matrix: chain.sigma,
        eta_bar,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum EvaluationMethod {
    Iterative,
    Direct,
}

/// Solves `(I - scale Σ) x = b`.
fn solve_shifted(sigma: &CsrMatrix, scale: f64, b: &[f64], x0: Option<&[f64]>) -> Result<Vec<f64>> {
    if sigma.n_rows() <= DENSE_SOLVE_LIMIT {
        solve_shifted_dense(sigma, scale, b)
    } else {
        gmres_shifted(sigma, scale, b, x0, GmresOptions::default())
    }
}

/// Fixed point of `T_σ`. The iterative method records successive changes;
/// the direct method records the final residual `‖V - T_σ V‖∞`.
pub fn policy_evaluate(
    rep: &UniformRepresentation,
    method: EvaluationMethod,
    opts: &SolveOptions,
) -> Result<(ValueFunction, ConvergenceReport)> {
    opts.check()?;
    let k = rep.n_states();
    let mut report = ConvergenceReport::default();
    match method {
        EvaluationMethod::Direct => {
            let v = solve_shifted(&rep.sigma_matrix, rep.beta_bar, &rep.u_eff, None)?;
            let tv = rep.apply(&v)?;
            report.push(sup_dist(&v, &tv));
            Ok((ValueFunction::new(v)?, report))
        }
        EvaluationMethod::Iterative => {
            let threshold = change_threshold(opts.tol, rep.beta_bar);
            let mut v = vec![0.0; k];
            let mut next = vec![0.0; k];
            while report.iterations < opts.max_iter {
                rep.apply_into(&v, &mut next);
                let change = sup_dist(&v, &next);
                if !change.is_finite() {
                    return Err(Error::NonFinite("policy evaluation"));
                }
                core::mem::swap(&mut v, &mut next);
                report.push(change);
                if change <= threshold {
                    return Ok((ValueFunction(v), report));
                }
            }
            Err(Error::NotConverged {
                iterations: report.iterations,
                residual: report.final_residual,
            })
        }
    }
}

/// Newton-Kantorovich on the uniformized optimality operator `Γ`, whose
/// Fréchet derivative at `V` is `β̄ Σ(σ(V))`. Residuals are
/// `‖V - T(V)‖∞`; the run stops once the residual is at most `tol`.
pub fn newton_kantorovich(
    spec: &GameSpec,
    beliefs: &CcpProfile,
    player: usize,
    v0: &ValueFunction,
    opts: &SolveOptions,
) -> Result<(ValueFunction, ConvergenceReport)> {
    opts.check()?;
    check_inputs(spec, beliefs, player, v0)?;
    let k = spec.n_states();
    let j = spec.n_actions();
    let beta = spec.beta_bar(player);
    let (eta_bar, _) = spec.eta_bounds();
    let mut v = v0.to_vec();
    let mut tv = vec![0.0; k];
    let mut gv = vec![0.0; k];
    let mut ccps = vec![0.0; k * j];
    let mut report = ConvergenceReport::default();
    let mut increases = 0;
    loop {
        bellman_into(spec, beliefs, player, &v, &mut tv);
        let residual = sup_dist(&v, &tv);
        if !residual.is_finite() {
            return Err(Error::NonFinite("Newton-Kantorovich"));
        }
        if let Some(&prev) = report.residuals.last() {
            increases = if residual > prev { increases + 1 } else { 0 };
        }
        report.push(residual);
        if residual <= opts.tol {
            return Ok((ValueFunction(v), report));
        }
        if increases >= 3 {
            return Err(Error::Diverged {
                iterations: report.iterations,
                residual,
            });
        }
        if report.iterations >= opts.max_iter {
            return Err(Error::NotConverged {
                iterations: report.iterations,
                residual,
            });
        }
        gamma_into(spec, beliefs, player, &v, &mut gv, &mut ccps);
        let mut profile = beliefs.clone();
        profile.set_player(player, &ccps)?;
        let (q, _) = assemble_q(spec, &profile, None)?;
        let sigma = uniformize(&q, Some(eta_bar))?.sigma;
        let rhs: Vec<f64> = v.iter().zip(&gv).map(|(a, b)| a - b).collect();
        let step = solve_shifted(&sigma, beta, &rhs, None)?;
        for (vi, s) in v.iter_mut().zip(&step) {
            *vi -= s;
        }
    }
}

/// Newton-Kantorovich started after `sweeps` value-iteration steps from `v0`.
pub fn newton_kantorovich_warm(
    spec: &GameSpec,
    beliefs: &CcpProfile,
    player: usize,
    v0: &ValueFunction,
    sweeps: usize,
    opts: &SolveOptions,
) -> Result<(ValueFunction, ConvergenceReport)> {
    check_inputs(spec, beliefs, player, v0)?;
    let mut v = v0.to_vec();
    let mut next = vec![0.0; v.len()];
    for _ in 0..sweeps {
        bellman_into(spec, beliefs, player, &v, &mut next);
        core::mem::swap(&mut v, &mut next);
    }
    newton_kantorovich(spec, beliefs, player, &ValueFunction::new(v)?, opts)
}

/// Shared relative-value loop. `step(w, out)` applies an operator that
/// commutes with constant shifts up to the factor `beta`.
fn relative_loop(
    k: usize,
    beta: f64,
    v0: &[f64],
    opts: &SolveOptions,
    mut step: impl FnMut(&[f64], &mut [f64]),
) -> Result<(Vec<f64>, ConvergenceReport)> {
    opts.check()?;
    let mut w = v0.to_vec();
    let mut tw = vec![0.0; k];
    let mut report = ConvergenceReport::default();
    while report.iterations < opts.max_iter {
        step(&w, &mut tw);
        let diff: Vec<f64> = tw.iter().zip(&w).map(|(a, b)| a - b).collect();
        let residual = span(&diff);
        if !residual.is_finite() {
            return Err(Error::NonFinite("relative value iteration"));
        }
        report.push(residual);
        if residual <= opts.tol {
            // Level from the reference-state equation: V = W + c with
            // (1 - β) c = (T W - W)_0.
            let c = diff[0] / (1.0 - beta);
            let v = w.iter().map(|x| x + c).collect();
            return Ok((v, report));
        }
        let anchor = tw[0];
        for (wi, t) in w.iter_mut().zip(&tw) {
            *wi = t - anchor;
        }
    }
    Err(Error::NotConverged {
        iterations: report.iterations,
        residual: report.final_residual,
    })
}

/// Relative value iteration for `T_σ` anchored at state 0. Residuals are
/// span seminorms of `T_σ W - W`; the returned `V` satisfies
/// `‖V - T_σ V‖∞ <= tol`.
pub fn relative_value_iterate(
    rep: &UniformRepresentation,
    v0: &ValueFunction,
    opts: &SolveOptions,
) -> Result<(ValueFunction, ConvergenceReport)> {
    let k = rep.n_states();
    if v0.len() != k {
        return Err(Error::Dimension {
            context: "value function",
            expected: k,
            found: v0.len(),
        });
    }
    let (v, report) = relative_loop(k, rep.beta_bar, v0, opts, |w, out| rep.apply_into(w, out))?;
    Ok((ValueFunction::new(v)?, report))
}

/// Relative value iteration on the uniformized optimality operator, i.e.
/// with the best response recomputed every step. The final entry of the
/// residual sequence is replaced by `‖V - T(V)‖∞` of the returned `V`.
pub fn relative_value_iterate_optimal(
    spec: &GameSpec,
    beliefs: &CcpProfile,
    player: usize,
    v0: &ValueFunction,
    opts: &SolveOptions,
) -> Result<(ValueFunction, ConvergenceReport)> {
    check_inputs(spec, beliefs, player, v0)?;
    let k = spec.n_states();
    let mut ccps = vec![0.0; k * spec.n_actions()];
    let (v, mut report) = relative_loop(k, spec.beta_bar(player), v0, opts, |w, out| {
        gamma_into(spec, beliefs, player, w, out, &mut ccps)
    })?;
    let mut tv = vec![0.0; k];
    bellman_into(spec, beliefs, player, &v, &mut tv);
    let r = sup_dist(&v, &tv);
    report.final_residual = r;
    if let Some(last) = report.residuals.last_mut() {
        *last = r;
    }
    Ok((ValueFunction::new(v)?, report))
}

/// `‖V - T(V)‖∞`.
pub fn bellman_residual(
    spec: &GameSpec,
    beliefs: &CcpProfile,
    player: usize,
    v: &ValueFunction,
) -> Result<f64> {
    let tv = bellman_apply(spec, beliefs, player, v)?;
    Ok(sup_dist(v, &tv))
}

/// Largest absolute entry, for relative tolerances.
pub fn value_scale(v: &ValueFunction) -> f64 {
    sup_norm(v)
}
