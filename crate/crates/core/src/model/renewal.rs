//! Single-agent engine-replacement (renewal) model.
//!
//! State `k` (0-based) is mileage `k + 1`. Nature raises mileage by one at
//! rate `γ` up to the last state; action 1 (replace) resets to state 0 at
//! cost `μ`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::ctmc::validate_generator;
use crate::model::{CcpProfile, GameSpec, GameSpecParts, ParameterSensitivity, ShockSpec};
use crate::sparse::{CooMatrix, CsrMatrix};
use crate::{Error, Result};

/// Parameters of the renewal model.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RenewalModel {
    pub n_states: usize,
    pub gamma: f64,
    pub lambda: f64,
    /// Per-mileage operating cost coefficient (negative for a cost).
    pub beta_cost: f64,
    pub mu_cost: f64,
    pub rho: f64,
    pub sigma_eps: f64,
}

impl RenewalModel {
    pub fn spec(&self) -> Result<GameSpec> {
        build_renewal(
            self.n_states,
            self.gamma,
            self.lambda,
            self.beta_cost,
            self.mu_cost,
            self.rho,
            self.sigma_eps,
        )
    }
}

/// Mileage generator: `γ` on the super-diagonal, `-γ` on the diagonal of all
/// but the last (absorbing) row.
pub fn renewal_q0(n_states: usize, gamma: f64) -> Result<CsrMatrix> {
    let mut coo = CooMatrix::new(n_states, n_states);
    for k in 0..n_states.saturating_sub(1) {
        coo.push(k, k, -gamma)?;
        coo.push(k, k + 1, gamma)?;
    }
    coo.to_csr()
}

/// Builds the renewal game. Flow payoff in state `k` is `β (k + 1)`;
/// replacing costs `μ`. Replacement in state 0 is kept as an action that is
/// equivalent to continuation.
pub fn build_renewal(
    n_states: usize,
    gamma: f64,
    lambda: f64,
    beta_cost: f64,
    mu_cost: f64,
    rho: f64,
    sigma_eps: f64,
) -> Result<GameSpec> {
    if n_states < 2 {
        return Err(Error::InvalidModel(format!(
            "renewal model needs at least 2 states, got {n_states}"
        )));
    }
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(Error::InvalidModel(format!("gamma must be positive, got {gamma}")));
    }
    let q0 = validate_generator(renewal_q0(n_states, gamma)?)?;
    let mut transitions = Vec::with_capacity(2 * n_states);
    let mut psi = Vec::with_capacity(2 * n_states);
    for k in 0..n_states {
        transitions.extend([k, 0]);
        psi.extend([0.0, -mu_cost]);
    }
    GameSpec::new(GameSpecParts {
        n_players: 1,
        n_actions: 2,
        rho: vec![rho],
        lambda: vec![lambda],
        q0,
        transitions,
        flow: (0..n_states).map(|k| beta_cost * (k + 1) as f64).collect(),
        psi,
        shock: ShockSpec::Logit { scale: sigma_eps },
        inert: vec![(0, 1, 0)],
    })
}

/// CCP profile from replacement probabilities `σ_1k`.
pub fn renewal_ccps(replace: &[f64]) -> Result<CcpProfile> {
    let probs = replace.iter().flat_map(|&r| [1.0 - r, r]).collect();
    CcpProfile::new(1, 2, replace.len(), probs)
}

/// Sensitivity of `Q` to `γ` at fixed CCPs.
pub fn gamma_sensitivity(n_states: usize) -> Result<ParameterSensitivity> {
    Ok(ParameterSensitivity {
        dq0: Some(renewal_q0(n_states, 1.0)?),
        ..ParameterSensitivity::default()
    })
}

/// Sensitivity of `Q` to `λ` at fixed CCPs.
pub fn lambda_sensitivity() -> ParameterSensitivity {
    ParameterSensitivity {
        dlambda: vec![1.0],
        ..ParameterSensitivity::default()
    }
}
