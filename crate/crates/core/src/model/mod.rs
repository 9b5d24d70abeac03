//! Game specifications and aggregate generator assembly.
//!
//! Per-(player, state, action) arrays are stored flat with index
//! `(i * K + k) * J + j`.

pub mod entry_exit;
pub mod family;
pub mod renewal;

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::ctmc::{validate_generator, IntensityMatrix};
use crate::sparse::{CsrMatrix, SparsityPattern, TransitionId};
use crate::special::{normal_pdf, normal_quantile, EULER_GAMMA};
use crate::{Error, Result};

/// Shock distribution of the choice-specific payoff shocks.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "family", rename_all = "snake_case"))]
pub enum ShockSpec {
    /// iid type-1 extreme value with scale `scale`.
    Logit { scale: f64 },
    /// Binary (`J = 2`) jointly normal shocks with the given covariance.
    BinaryProbit { var0: f64, var1: f64, cov: f64 },
}

impl Default for ShockSpec {
    fn default() -> Self {
        ShockSpec::Logit { scale: 1.0 }
    }
}

impl ShockSpec {
    fn validate(&self, n_actions: usize) -> Result<()> {
        match *self {
            ShockSpec::Logit { scale } if !(scale.is_finite() && scale > 0.0) => Err(
                Error::InvalidModel(format!("logit shock scale must be positive, got {scale}")),
            ),
            ShockSpec::Logit { .. } => Ok(()),
            ShockSpec::BinaryProbit { .. } if n_actions != 2 => Err(Error::InvalidModel(
                "probit shocks are only supported for two actions".into(),
            )),
            ShockSpec::BinaryProbit { var0, var1, cov } => {
                if var0 > 0.0 && var1 > 0.0 && var0 + var1 - 2.0 * cov > 0.0 {
                    Ok(())
                } else {
                    Err(Error::InvalidModel(
                        "probit covariance must give a positive difference variance".into(),
                    ))
                }
            }
        }
    }

    /// Standard deviation of `ε_1 - ε_0` for the binary probit.
    pub(crate) fn probit_diff_sd(var0: f64, var1: f64, cov: f64) -> f64 {
        (var0 + var1 - 2.0 * cov).sqrt()
    }
}

/// Expected shock of `action` given that it is chosen with probability
/// `sigma_ijk`.
///
/// Logit: `σ_ε (γ_EM - ln σ)`. Binary probit:
/// `(var_j - cov) / sd(ε_1 - ε_0) * φ(Φ⁻¹(σ)) / σ`.
pub fn expected_shock(shock: &ShockSpec, sigma_ijk: f64, action: usize) -> Result<f64> {
    if !(sigma_ijk > 0.0 && sigma_ijk <= 1.0) {
        return Err(Error::InvalidProbability {
            what: "expected shock",
            value: sigma_ijk,
        });
    }
    Ok(match *shock {
        ShockSpec::Logit { scale } => scale * (EULER_GAMMA - sigma_ijk.ln()),
        ShockSpec::BinaryProbit { var0, var1, cov } => {
            let own = if action == 0 { var0 } else { var1 };
            let sd = ShockSpec::probit_diff_sd(var0, var1, cov);
            (own - cov) / sd * normal_pdf(normal_quantile(sigma_ijk)) / sigma_ijk
        }
    })
}

/// Raw ingredients of a [`GameSpec`], validated by [`GameSpec::new`].
#[derive(Debug, Clone)]
pub struct GameSpecParts {
    pub n_players: usize,
    pub n_actions: usize,
    pub rho: Vec<f64>,
    pub lambda: Vec<f64>,
    pub q0: IntensityMatrix,
    /// `l(i, j, k)`, flat `(i * K + k) * J + j`.
    pub transitions: Vec<usize>,
    /// `u_ik`, flat `i * K + k`.
    pub flow: Vec<f64>,
    /// `ψ_ijk`, same layout as `transitions`.
    pub psi: Vec<f64>,
    pub shock: ShockSpec,
    /// `(i, j, k)` triples whose action is allowed to coincide with
    /// continuation (`l(i, j, k) = k`).
    pub inert: Vec<(usize, usize, usize)>,
}

/// A continuous-time dynamic discrete choice game.
#[derive(Debug, Clone)]
pub struct GameSpec {
    n_players: usize,
    n_actions: usize,
    n_states: usize,
    rho: Vec<f64>,
    lambda: Vec<f64>,
    q0: IntensityMatrix,
    transitions: Vec<usize>,
    flow: Vec<f64>,
    psi: Vec<f64>,
    shock: ShockSpec,
    inert: BTreeSet<(usize, usize, usize)>,
}

impl GameSpec {
    pub fn new(parts: GameSpecParts) -> Result<Self> {
        let GameSpecParts {
            n_players,
            n_actions,
            rho,
            lambda,
            q0,
            transitions,
            flow,
            psi,
            shock,
            inert,
        } = parts;
        let k = q0.n_states();
        if n_players == 0 || n_actions == 0 || k == 0 {
            return Err(Error::InvalidModel(
                "players, actions and states must all be nonzero".into(),
            ));
        }
        let njk = n_players * n_actions * k;
        for (name, len, want) in [
            ("rho", rho.len(), n_players),
            ("lambda", lambda.len(), n_players),
            ("transition map", transitions.len(), njk),
            ("flow payoffs", flow.len(), n_players * k),
            ("instantaneous payoffs", psi.len(), njk),
        ] {
            if len != want {
                return Err(Error::InvalidModel(format!(
                    "{name} has length {len}, expected {want}"
                )));
            }
        }
        if let Some(r) = rho.iter().find(|r| !(r.is_finite() && **r > 0.0)) {
            return Err(Error::InvalidModel(format!("discount rate must be positive, got {r}")));
        }
        if let Some(l) = lambda.iter().find(|l| !(l.is_finite() && **l > 0.0)) {
            return Err(Error::InvalidModel(format!("move rate must be positive, got {l}")));
        }
        if flow.iter().chain(&psi).any(|x| !x.is_finite()) {
            return Err(Error::InvalidModel("payoffs must be finite".into()));
        }
        shock.validate(n_actions)?;
        let inert: BTreeSet<_> = inert.into_iter().collect();
        for i in 0..n_players {
            for s in 0..k {
                let base = (i * k + s) * n_actions;
                let targets = &transitions[base..base + n_actions];
                if let Some(&t) = targets.iter().find(|&&t| t >= k) {
                    return Err(Error::IndexOutOfRange { index: t, bound: k });
                }
                if targets[0] != s || psi[base] != 0.0 {
                    return Err(Error::InvalidModel(format!(
                        "action 0 of player {i} in state {s} must be costless continuation"
                    )));
                }
                for a in 0..n_actions {
                    for b in a + 1..n_actions {
                        let exempt = targets[a] == s
                            && (inert.contains(&(i, a, s)) || inert.contains(&(i, b, s)));
                        if targets[a] == targets[b] && !exempt {
                            return Err(Error::InvalidModel(format!(
                                "actions {a} and {b} of player {i} in state {s} lead to the same state"
                            )));
                        }
                    }
                }
            }
        }
        Ok(Self {
            n_players,
            n_actions,
            n_states: k,
            rho,
            lambda,
            q0,
            transitions,
            flow,
            psi,
            shock,
            inert,
        })
    }

    pub fn n_players(&self) -> usize {
        self.n_players
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn rho(&self, i: usize) -> f64 {
        self.rho[i]
    }

    pub fn lambda(&self, i: usize) -> f64 {
        self.lambda[i]
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambda
    }

    pub fn q0(&self) -> &IntensityMatrix {
        &self.q0
    }

    pub fn shock(&self) -> &ShockSpec {
        &self.shock
    }

    /// `l(i, j, k)`.
    pub fn transition(&self, i: usize, j: usize, k: usize) -> usize {
        self.transitions[self.index(i, j, k)]
    }

    pub fn flow(&self, i: usize, k: usize) -> f64 {
        self.flow[i * self.n_states + k]
    }

    pub fn psi(&self, i: usize, j: usize, k: usize) -> f64 {
        self.psi[self.index(i, j, k)]
    }

    pub fn is_inert(&self, i: usize, j: usize, k: usize) -> bool {
        self.inert.contains(&(i, j, k))
    }

    /// Total nature exit rate `Σ_{l≠k} q0_kl`.
    pub fn nature_out_rate(&self, k: usize) -> f64 {
        let (cols, vals) = self.q0.as_csr().row(k);
        cols.iter()
            .zip(vals)
            .filter(|(&c, _)| c != k)
            .map(|(_, v)| v)
            .sum()
    }

    /// `η̄ = Σ_m λ_m + max_k out_k` and `η̲ = Σ_m λ_m + min_k out_k`.
    pub fn eta_bounds(&self) -> (f64, f64) {
        let total: f64 = self.lambda.iter().sum();
        let (lo, hi) = (0..self.n_states).map(|k| self.nature_out_rate(k)).fold(
            (f64::INFINITY, f64::NEG_INFINITY),
            |(lo, hi), o| (lo.min(o), hi.max(o)),
        );
        (total + hi, total + lo)
    }

    /// Value-iteration modulus `η̄ / (ρ_i + η̲)`.
    pub fn beta_lower(&self, i: usize) -> f64 {
        let (hi, lo) = self.eta_bounds();
        hi / (self.rho[i] + lo)
    }

    /// Uniform discount factor `η̄ / (ρ_i + η̄)`.
    pub fn beta_bar(&self, i: usize) -> f64 {
        let (hi, _) = self.eta_bounds();
        hi / (self.rho[i] + hi)
    }

    /// Returns a copy with every discount rate replaced by `rho`.
    pub fn with_discount_rate(mut self, rho: f64) -> Result<Self> {
        if !(rho.is_finite() && rho > 0.0) {
            return Err(Error::InvalidModel(format!("discount rate must be positive, got {rho}")));
        }
        self.rho.iter_mut().for_each(|r| *r = rho);
        Ok(self)
    }

    /// Returns a copy with the shock distribution replaced.
    pub fn with_shock(mut self, shock: ShockSpec) -> Result<Self> {
        shock.validate(self.n_actions)?;
        self.shock = shock;
        Ok(self)
    }

    pub(crate) fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.n_states + k) * self.n_actions + j
    }

    /// Off-diagonal transitions of the aggregate generator, in the order
    /// nature then players.
    fn transition_entries(&self) -> Vec<(usize, usize, TransitionId)> {
        let mut out = Vec::new();
        for (r, c, _) in self.q0.as_csr().iter() {
            if r != c {
                out.push((r, c, TransitionId::Nature { from: r, to: c }));
            }
        }
        for i in 0..self.n_players {
            for k in 0..self.n_states {
                for j in 1..self.n_actions {
                    let l = self.transition(i, j, k);
                    if l != k {
                        out.push((
                            k,
                            l,
                            TransitionId::Action {
                                player: i,
                                action: j,
                                state: k,
                            },
                        ));
                    }
                }
            }
        }
        out
    }

    /// Sparsity pattern of `Q(σ)` for this game's topology.
    pub fn generator_pattern(&self) -> Result<SparsityPattern> {
        SparsityPattern::build(self.n_states, self.transition_entries())
    }
}

/// Conditional choice probabilities `σ_ijk`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CcpProfile {
    n_players: usize,
    n_actions: usize,
    n_states: usize,
    probs: Vec<f64>,
}

/// Tolerance on `|Σ_j σ_ijk - 1|`.
pub const CCP_SUM_TOL: f64 = 1e-10;

impl CcpProfile {
    /// Validates that every `(i, k)` slice is a distribution with entries in
    /// `(0, 1]`.
    pub fn new(n_players: usize, n_actions: usize, n_states: usize, probs: Vec<f64>) -> Result<Self> {
        let want = n_players * n_actions * n_states;
        if probs.len() != want {
            return Err(Error::Dimension {
                context: "CCP profile",
                expected: want,
                found: probs.len(),
            });
        }
        if n_actions > 0 {
            for slice in probs.chunks(n_actions) {
                if let Some(&p) = slice.iter().find(|p| !(**p > 0.0 && **p <= 1.0)) {
                    return Err(Error::InvalidProbability { what: "CCP", value: p });
                }
                let s: f64 = slice.iter().sum();
                if (s - 1.0).abs() > CCP_SUM_TOL {
                    return Err(Error::InvalidProbability {
                        what: "CCP row sum",
                        value: s,
                    });
                }
            }
        }
        Ok(Self {
            n_players,
            n_actions,
            n_states,
            probs,
        })
    }

    /// Uniform `1/J` everywhere.
    pub fn uniform(n_players: usize, n_actions: usize, n_states: usize) -> Self {
        let p = 1.0 / n_actions as f64;
        Self {
            n_players,
            n_actions,
            n_states,
            probs: vec![p; n_players * n_actions * n_states],
        }
    }

    pub fn for_spec(spec: &GameSpec, probs: Vec<f64>) -> Result<Self> {
        Self::new(spec.n_players, spec.n_actions, spec.n_states, probs)
    }

    pub fn n_players(&self) -> usize {
        self.n_players
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.probs[(i * self.n_states + k) * self.n_actions + j]
    }

    /// `σ_i·k`, the distribution over actions.
    pub fn slice(&self, i: usize, k: usize) -> &[f64] {
        let base = (i * self.n_states + k) * self.n_actions;
        &self.probs[base..base + self.n_actions]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.probs
    }

    /// Replaces player `i`'s probabilities; `probs` has layout `k * J + j`.
    pub fn set_player(&mut self, i: usize, probs: &[f64]) -> Result<()> {
        let len = self.n_states * self.n_actions;
        if probs.len() != len {
            return Err(Error::Dimension {
                context: "player CCPs",
                expected: len,
                found: probs.len(),
            });
        }
        let checked = CcpProfile::new(1, self.n_actions, self.n_states, probs.to_vec())?;
        self.probs[i * len..(i + 1) * len].copy_from_slice(&checked.probs);
        Ok(())
    }

    fn check_against(&self, spec: &GameSpec) -> Result<()> {
        if (self.n_players, self.n_actions, self.n_states)
            != (spec.n_players, spec.n_actions, spec.n_states)
        {
            return Err(Error::Dimension {
                context: "CCP profile vs game",
                expected: spec.n_players * spec.n_actions * spec.n_states,
                found: self.probs.len(),
            });
        }
        Ok(())
    }
}

/// Named parameters with box bounds.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ParameterVector {
    pub names: Vec<String>,
    pub values: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl ParameterVector {
    /// Unbounded parameters.
    pub fn new(names: &[&str], values: &[f64]) -> Result<Self> {
        if names.len() != values.len() {
            return Err(Error::Dimension {
                context: "parameter values",
                expected: names.len(),
                found: values.len(),
            });
        }
        Ok(Self {
            names: names.iter().map(|s| String::from(*s)).collect(),
            values: values.to_vec(),
            lower: vec![f64::NEG_INFINITY; names.len()],
            upper: vec![f64::INFINITY; names.len()],
        })
    }

    pub fn with_bounds(mut self, bounds: &[(f64, f64)]) -> Result<Self> {
        if bounds.len() != self.names.len() {
            return Err(Error::Dimension {
                context: "parameter bounds",
                expected: self.names.len(),
                found: bounds.len(),
            });
        }
        for &(lo, hi) in bounds {
            if lo > hi || lo.is_nan() || hi.is_nan() {
                return Err(Error::InvalidArgument(format!("empty bound interval [{lo}, {hi}]")));
            }
        }
        self.lower = bounds.iter().map(|b| b.0).collect();
        self.upper = bounds.iter().map(|b| b.1).collect();
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::UnknownParameter(name.into()))
    }

    pub fn get(&self, name: &str) -> Result<f64> {
        Ok(self.values[self.index_of(name)?])
    }

    pub fn set(&mut self, name: &str, value: f64) -> Result<()> {
        let i = self.index_of(name)?;
        self.values[i] = value;
        Ok(())
    }

    pub fn in_bounds(&self) -> bool {
        self.values
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
    }
}

/// Derivatives of the generator's building blocks with respect to one
/// parameter.
#[derive(Debug, Clone, Default)]
pub struct ParameterSensitivity {
    /// `∂Q₀/∂α`; only off-diagonal entries are read.
    pub dq0: Option<CsrMatrix>,
    /// `∂λ_i/∂α` per player (empty means all zero).
    pub dlambda: Vec<f64>,
    /// `∂σ_ijk/∂α`, CCP layout (empty means all zero).
    pub dsigma: Vec<f64>,
}

fn resolve_pattern(spec: &GameSpec, pattern: Option<&SparsityPattern>) -> Result<SparsityPattern> {
    match pattern {
        Some(p) if p.n_states() != spec.n_states => Err(Error::PatternMismatch),
        Some(p) => Ok(p.clone()),
        None => spec.generator_pattern(),
    }
}

fn fill_diagonal(m: &mut CsrMatrix) {
    let structure = m.structure().clone();
    let values = m.values_mut();
    for r in 0..structure.n_rows() {
        let (lo, hi) = (structure.row_ptr()[r], structure.row_ptr()[r + 1]);
        let mut off = 0.0;
        let mut diag = None;
        for p in lo..hi {
            if structure.col_idx()[p] == r {
                diag = Some(p);
            } else {
                off += values[p];
            }
        }
        if let Some(p) = diag {
            values[p] = -off;
        }
    }
}

/// Writes `Q(σ) = Q₀ + Σ_i Q_i` into the value array of `pattern`, building
/// the pattern first when none is given.
pub fn assemble_q(
    spec: &GameSpec,
    sigma: &CcpProfile,
    pattern: Option<&SparsityPattern>,
) -> Result<(IntensityMatrix, SparsityPattern)> {
    sigma.check_against(spec)?;
    let pattern = resolve_pattern(spec, pattern)?;
    let q = assemble_on(spec, &pattern, |id| match id {
        Rate::Nature(v) => v,
        Rate::Action(i, j, k) => spec.lambda[i] * sigma.get(i, j, k),
    })?;
    Ok((validate_generator(q)?, pattern))
}

enum Rate {
    Nature(f64),
    Action(usize, usize, usize),
}

fn assemble_on(
    spec: &GameSpec,
    pattern: &SparsityPattern,
    rate: impl Fn(Rate) -> f64,
) -> Result<CsrMatrix> {
    let mut q = pattern.zeros();
    {
        let values = q.values_mut();
        for (r, c, v) in spec.q0.as_csr().iter() {
            if r != c {
                let pos = pattern
                    .address(TransitionId::Nature { from: r, to: c })
                    .ok_or(Error::PatternMismatch)?;
                values[pos] = rate(Rate::Nature(v));
            }
        }
        for i in 0..spec.n_players {
            for k in 0..spec.n_states {
                for j in 1..spec.n_actions {
                    if spec.transition(i, j, k) == k {
                        continue;
                    }
                    let pos = pattern
                        .address(TransitionId::Action {
                            player: i,
                            action: j,
                            state: k,
                        })
                        .ok_or(Error::PatternMismatch)?;
                    values[pos] = rate(Rate::Action(i, j, k));
                }
            }
        }
    }
    fill_diagonal(&mut q);
    Ok(q)
}

/// `∂Q/∂α` for each sensitivity, on the same pattern as `Q`.
pub fn assemble_q_derivatives(
    spec: &GameSpec,
    sigma: &CcpProfile,
    sensitivities: &[ParameterSensitivity],
    pattern: &SparsityPattern,
) -> Result<Vec<CsrMatrix>> {
    sigma.check_against(spec)?;
    if pattern.n_states() != spec.n_states {
        return Err(Error::PatternMismatch);
    }
    let njk = spec.n_players * spec.n_actions * spec.n_states;
    sensitivities
        .iter()
        .map(|s| {
            if !s.dlambda.is_empty() && s.dlambda.len() != spec.n_players {
                return Err(Error::Dimension {
                    context: "rate sensitivity",
                    expected: spec.n_players,
                    found: s.dlambda.len(),
                });
            }
            if !s.dsigma.is_empty() && s.dsigma.len() != njk {
                return Err(Error::Dimension {
                    context: "CCP sensitivity",
                    expected: njk,
                    found: s.dsigma.len(),
                });
            }
            let mut m = assemble_on(spec, pattern, |id| match id {
                Rate::Nature(_) => 0.0,
                Rate::Action(i, j, k) => {
                    let dl = s.dlambda.get(i).copied().unwrap_or(0.0);
                    let ds = s.dsigma.get(spec.index(i, j, k)).copied().unwrap_or(0.0);
                    dl * sigma.get(i, j, k) + spec.lambda[i] * ds
                }
            })?;
            if let Some(dq0) = &s.dq0 {
                if dq0.n_rows() != spec.n_states || dq0.n_cols() != spec.n_states {
                    return Err(Error::Dimension {
                        context: "nature sensitivity",
                        expected: spec.n_states,
                        found: dq0.n_rows(),
                    });
                }
                let values = m.values_mut();
                for (r, c, v) in dq0.iter() {
                    if r != c {
                        let pos = pattern
                            .address(TransitionId::Nature { from: r, to: c })
                            .ok_or(Error::PatternMismatch)?;
                        values[pos] += v;
                    }
                }
                fill_diagonal(&mut m);
            }
            Ok(m)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expected_shock_values() {
        let logit = ShockSpec::default();
        assert!((expected_shock(&logit, 1.0, 0).unwrap() - 0.577_215_664_901_532_9).abs() < 1e-15);
        assert!((expected_shock(&logit, 0.5, 1).unwrap() - 1.270_362_845_461_478).abs() < 1e-12);
        let probit = ShockSpec::BinaryProbit {
            var0: 1.0,
            var1: 1.0,
            cov: 0.0,
        };
        let e = expected_shock(&probit, 0.5, 1).unwrap();
        assert!((e - 0.564_189_583_547_756_3).abs() < 1e-12);
        assert!(expected_shock(&logit, 0.0, 0).is_err());
    }

    #[test]
    fn ccp_validation() {
        assert!(CcpProfile::new(1, 2, 1, vec![0.3, 0.7]).is_ok());
        assert!(CcpProfile::new(1, 2, 1, vec![0.3, 0.6]).is_err());
        assert!(CcpProfile::new(1, 2, 1, vec![0.0, 1.0]).is_err());
        assert!(CcpProfile::new(1, 1, 1, vec![1.0]).is_ok());
    }

    #[test]
    fn parameter_lookup() {
        let mut p = ParameterVector::new(&["a", "b"], &[1.0, 2.0]).unwrap();
        assert_eq!(p.get("b").unwrap(), 2.0);
        p.set("a", 3.0).unwrap();
        assert_eq!(p.values, vec![3.0, 2.0]);
        assert_eq!(p.get("c"), Err(Error::UnknownParameter("c".into())));
    }
}
