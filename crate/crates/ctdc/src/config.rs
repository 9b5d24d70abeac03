//! JSON model configurations.

use std::path::Path;

use ctdc_core::model::entry_exit::{build_entry_exit, myopic_ccps, EntryExitParams, DEFAULT_RHO};
use ctdc_core::model::family::{EntryExitFamily, GeneratorFamily, RenewalFamily};
use ctdc_core::model::renewal::{build_renewal, renewal_ccps};
use ctdc_core::model::{CcpProfile, GameSpec, ShockSpec};
use ctdc_core::solver::{ccp_from_value, newton_kantorovich_warm, SolveOptions, ValueFunction};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn default_rho() -> f64 {
    DEFAULT_RHO
}

fn default_shock_scale() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RenewalParameters {
    /// Mileage accrual rate.
    pub gamma: f64,
    /// Decision rate.
    pub lambda: f64,
    /// Flow payoff per mileage unit; negative for a cost.
    pub beta_cost: f64,
    /// Replacement cost.
    pub mu_cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RenewalConfig {
    pub n_states: usize,
    pub parameters: RenewalParameters,
    #[serde(default = "default_rho")]
    pub rho: f64,
    #[serde(default = "default_shock_scale")]
    pub shock_scale: f64,
    /// Replacement probability per state. When absent the generator uses
    /// the optimal policy of the configured model.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ccp: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntryExitParameters {
    pub theta_ec: f64,
    pub theta_rn: f64,
    pub theta_d: f64,
    pub lambda: f64,
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntryExitConfig {
    pub n_firms: usize,
    pub n_demand: usize,
    pub parameters: EntryExitParameters,
    #[serde(default = "default_rho")]
    pub rho: f64,
    #[serde(default = "default_shock_scale")]
    pub shock_scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum ModelConfig {
    Renewal(RenewalConfig),
    EntryExit(EntryExitConfig),
}

impl ModelConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(Error::config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model configs serialize")
    }

    /// Builds the game, the CCPs driving its generator and the estimable
    /// generator family.
    pub fn build(&self) -> Result<Model> {
        match self {
            ModelConfig::Renewal(c) => build_renewal_model(c),
            ModelConfig::EntryExit(c) => build_entry_exit_model(c),
        }
    }
}

fn build_renewal_model(c: &RenewalConfig) -> Result<Model> {
    let p = &c.parameters;
    let spec = build_renewal(c.n_states, p.gamma, p.lambda, p.beta_cost, p.mu_cost, c.rho, c.shock_scale)
        .map_err(Error::config)?;
    let replace = match &c.ccp {
        Some(r) => {
            if r.len() != c.n_states {
                return Err(Error::Config(format!(
                    "ccp has {} entries, expected n_states = {}",
                    r.len(),
                    c.n_states
                )));
            }
            r.clone()
        }
        None => optimal_replacement(&spec)?,
    };
    let beliefs = renewal_ccps(&replace).map_err(Error::config)?;
    let family = RenewalFamily::new(&replace).map_err(Error::config)?;
    Ok(Model {
        spec,
        beliefs,
        family: ModelFamily::Renewal(family),
        theta: vec![p.gamma, p.lambda],
    })
}

/// Replacement probabilities of the optimal renewal policy.
fn optimal_replacement(spec: &GameSpec) -> Result<Vec<f64>> {
    let beliefs = CcpProfile::uniform(1, 2, spec.n_states());
    let v0 = ValueFunction::zeros(spec.n_states());
    let (v, _) = newton_kantorovich_warm(spec, &beliefs, 0, &v0, 20, &SolveOptions::with_tol(1e-12))?;
    let probs = ccp_from_value(spec, 0, &v)?;
    Ok(probs.chunks(2).map(|c| c[1]).collect())
}

fn build_entry_exit_model(c: &EntryExitConfig) -> Result<Model> {
    let p = &c.parameters;
    let params = EntryExitParams {
        theta_ec: p.theta_ec,
        theta_rn: p.theta_rn,
        theta_d: p.theta_d,
        lambda: p.lambda,
        gamma: p.gamma,
    };
    let spec = build_entry_exit(c.n_firms, c.n_demand, &params.to_parameters())
        .and_then(|s| s.with_discount_rate(c.rho))
        .and_then(|s| s.with_shock(ShockSpec::Logit { scale: c.shock_scale }))
        .map_err(Error::config)?;
    let family = EntryExitFamily::new(c.n_firms, c.n_demand).map_err(Error::config)?;
    let beliefs = myopic_ccps(family.layout(), &params).map_err(Error::config)?;
    Ok(Model {
        spec,
        beliefs,
        family: ModelFamily::EntryExit(family),
        theta: params.to_array().to_vec(),
    })
}

#[derive(Debug, Clone)]
pub enum ModelFamily {
    Renewal(RenewalFamily),
    EntryExit(EntryExitFamily),
}

impl ModelFamily {
    pub fn as_dyn(&self) -> &dyn GeneratorFamily {
        match self {
            ModelFamily::Renewal(f) => f,
            ModelFamily::EntryExit(f) => f,
        }
    }
}

/// A configured model ready for the commands.
#[derive(Debug, Clone)]
pub struct Model {
    pub spec: GameSpec,
    /// CCP profile generating the state process.
    pub beliefs: CcpProfile,
    pub family: ModelFamily,
    /// Family parameters at the configured values.
    pub theta: Vec<f64>,
}

impl Model {
    pub fn family(&self) -> &dyn GeneratorFamily {
        self.family.as_dyn()
    }

    pub fn parameter_names(&self) -> &[&'static str] {
        self.family().parameter_names()
    }

    pub fn parameter_index(&self, name: &str) -> Result<usize> {
        self.parameter_names()
            .iter()
            .position(|&n| n == name)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown parameter `{name}`; expected one of {}",
                    self.parameter_names().join(", ")
                ))
            })
    }
}
