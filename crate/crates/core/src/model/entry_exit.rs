//! Symmetric, myopic N-firm entry/exit model.
//!
//! State `k = a * D + d` where bit `i` of `a` is firm `i`'s activity and
//! `d ∈ {0, …, D-1}` is the demand level (covariate value `d + 1`). Demand
//! moves up or down one level at rate `γ` with reflecting boundaries. A
//! firm's only non-trivial action toggles its own activity.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::ctmc::validate_generator;
use crate::model::{
    CcpProfile, GameSpec, GameSpecParts, ParameterSensitivity, ParameterVector, ShockSpec,
};
use crate::sparse::{CooMatrix, CsrMatrix};
use crate::special::logistic;
use crate::{Error, Result};

/// Parameter names in canonical order.
pub const PARAMETER_NAMES: [&str; 5] = ["theta_ec", "theta_rn", "theta_d", "lambda", "gamma"];

/// Data-generating values used in the Monte Carlo experiment.
pub const TRUE_THETA: [f64; 5] = [-0.5, -0.05, 0.1, 1.0, 0.3];

/// Default discount rate for the payoff side of the game.
pub const DEFAULT_RHO: f64 = 0.05;

/// Largest supported number of firms.
pub const MAX_FIRMS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EntryExitParams {
    pub theta_ec: f64,
    pub theta_rn: f64,
    pub theta_d: f64,
    pub lambda: f64,
    pub gamma: f64,
}

impl EntryExitParams {
    pub fn from_slice(theta: &[f64]) -> Result<Self> {
        if theta.len() != 5 {
            return Err(Error::Dimension {
                context: "entry/exit parameters",
                expected: 5,
                found: theta.len(),
            });
        }
        Ok(Self {
            theta_ec: theta[0],
            theta_rn: theta[1],
            theta_d: theta[2],
            lambda: theta[3],
            gamma: theta[4],
        })
    }

    pub fn from_parameters(p: &ParameterVector) -> Result<Self> {
        Ok(Self {
            theta_ec: p.get("theta_ec")?,
            theta_rn: p.get("theta_rn")?,
            theta_d: p.get("theta_d")?,
            lambda: p.get("lambda")?,
            gamma: p.get("gamma")?,
        })
    }

    pub fn to_array(&self) -> [f64; 5] {
        [self.theta_ec, self.theta_rn, self.theta_d, self.lambda, self.gamma]
    }

    pub fn to_parameters(&self) -> ParameterVector {
        ParameterVector::new(&PARAMETER_NAMES, &self.to_array()).expect("five names, five values")
    }

    pub fn truth() -> Self {
        Self::from_slice(&TRUE_THETA).expect("five values")
    }

    fn check_rates(&self) -> Result<()> {
        for (name, v) in [("lambda", self.lambda), ("gamma", self.gamma)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidModel(format!("{name} must be positive, got {v}")));
            }
        }
        if [self.theta_ec, self.theta_rn, self.theta_d]
            .iter()
            .any(|v| !v.is_finite())
        {
            return Err(Error::InvalidModel("coefficients must be finite".into()));
        }
        Ok(())
    }
}

/// Probability that a firm is active: `logistic(θ_EC + θ_RN n + θ_D demand)`.
pub fn activity_probability(
    theta: &EntryExitParams,
    n_active: usize,
    demand_level: usize,
) -> f64 {
    logistic(theta.theta_ec + theta.theta_rn * n_active as f64 + theta.theta_d * demand_level as f64)
}

/// State-space bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EntryExitLayout {
    pub n_firms: usize,
    pub n_demand: usize,
}

impl EntryExitLayout {
    pub fn new(n_firms: usize, n_demand: usize) -> Result<Self> {
        if n_firms == 0 || n_demand == 0 || n_firms > MAX_FIRMS {
            return Err(Error::InvalidModel(format!(
                "need 1 <= N <= {MAX_FIRMS} firms and D >= 1 demand levels, got N={n_firms}, D={n_demand}"
            )));
        }
        Ok(Self { n_firms, n_demand })
    }

    /// `K = 2^N D`.
    pub fn n_states(&self) -> usize {
        (1usize << self.n_firms) * self.n_demand
    }

    pub fn encode(&self, active_mask: usize, demand: usize) -> usize {
        active_mask * self.n_demand + demand
    }

    /// `(active_mask, demand)` of state `k`.
    pub fn decode(&self, k: usize) -> (usize, usize) {
        (k / self.n_demand, k % self.n_demand)
    }

    pub fn is_active(&self, k: usize, firm: usize) -> bool {
        (self.decode(k).0 >> firm) & 1 == 1
    }

    pub fn n_active(&self, k: usize) -> usize {
        self.decode(k).0.count_ones() as usize
    }

    /// State after firm `firm` toggles its activity.
    pub fn toggle(&self, k: usize, firm: usize) -> usize {
        let (a, d) = self.decode(k);
        self.encode(a ^ (1 << firm), d)
    }

    /// Demand birth-death generator with rate `gamma`, lifted to all
    /// activity configurations.
    pub fn demand_generator(&self, gamma: f64) -> Result<CsrMatrix> {
        let k = self.n_states();
        let mut coo = CooMatrix::new(k, k);
        for s in 0..k {
            let (a, d) = self.decode(s);
            let mut out = 0.0;
            if d > 0 {
                coo.push(s, self.encode(a, d - 1), gamma)?;
                out += gamma;
            }
            if d + 1 < self.n_demand {
                coo.push(s, self.encode(a, d + 1), gamma)?;
                out += gamma;
            }
            if out > 0.0 {
                coo.push(s, s, -out)?;
            }
        }
        coo.to_csr()
    }

    /// Probability that a decision by `firm` in state `k` toggles its status.
    fn toggle_probability(&self, theta: &EntryExitParams, k: usize, firm: usize) -> (f64, f64) {
        let p = activity_probability(theta, self.n_active(k), self.decode(k).1 + 1);
        if self.is_active(k, firm) {
            (1.0 - p, -1.0)
        } else {
            (p, 1.0)
        }
    }
}

/// Builds the game. Flow payoff of an active firm is
/// `θ_RN n_active + θ_D demand`; entering pays `θ_EC`.
pub fn build_entry_exit(n_firms: usize, n_demand: usize, theta: &ParameterVector) -> Result<GameSpec> {
    let layout = EntryExitLayout::new(n_firms, n_demand)?;
    let params = EntryExitParams::from_parameters(theta)?;
    build_with(&layout, &params, DEFAULT_RHO)
}

pub(crate) fn build_with(
    layout: &EntryExitLayout,
    params: &EntryExitParams,
    rho: f64,
) -> Result<GameSpec> {
    params.check_rates()?;
    let k = layout.n_states();
    let n = layout.n_firms;
    let q0 = validate_generator(layout.demand_generator(params.gamma)?)?;
    let mut transitions = Vec::with_capacity(2 * n * k);
    let mut psi = Vec::with_capacity(2 * n * k);
    let mut flow = Vec::with_capacity(n * k);
    for i in 0..n {
        for s in 0..k {
            transitions.extend([s, layout.toggle(s, i)]);
            let entry_cost = if layout.is_active(s, i) { 0.0 } else { params.theta_ec };
            psi.extend([0.0, entry_cost]);
            let payoff = if layout.is_active(s, i) {
                params.theta_rn * layout.n_active(s) as f64
                    + params.theta_d * (layout.decode(s).1 + 1) as f64
            } else {
                0.0
            };
            flow.push(payoff);
        }
    }
    GameSpec::new(GameSpecParts {
        n_players: n,
        n_actions: 2,
        rho: vec![rho; n],
        lambda: vec![params.lambda; n],
        q0,
        transitions,
        flow,
        psi,
        shock: ShockSpec::default(),
        inert: Vec::new(),
    })
}

/// CCPs of myopic firms: an inactive firm enters with probability `p`, an
/// active one exits with probability `1 - p`.
pub fn myopic_ccps(layout: &EntryExitLayout, theta: &EntryExitParams) -> Result<CcpProfile> {
    let k = layout.n_states();
    let mut probs = Vec::with_capacity(2 * layout.n_firms * k);
    for i in 0..layout.n_firms {
        for s in 0..k {
            let (t, _) = layout.toggle_probability(theta, s, i);
            probs.extend([1.0 - t, t]);
        }
    }
    CcpProfile::new(layout.n_firms, 2, k, probs)
}

/// Generator sensitivities for the named parameters at `theta`.
pub fn sensitivities(
    layout: &EntryExitLayout,
    theta: &EntryExitParams,
    names: &[&str],
) -> Result<Vec<ParameterSensitivity>> {
    let k = layout.n_states();
    let n = layout.n_firms;
    names
        .iter()
        .map(|&name| {
            let covariate: fn(&EntryExitLayout, usize) -> f64 = match name {
                "theta_ec" => |_, _| 1.0,
                "theta_rn" => |l, s| l.n_active(s) as f64,
                "theta_d" => |l, s| (l.decode(s).1 + 1) as f64,
                "lambda" => {
                    return Ok(ParameterSensitivity {
                        dlambda: vec![1.0; n],
                        ..ParameterSensitivity::default()
                    })
                }
                "gamma" => {
                    return Ok(ParameterSensitivity {
                        dq0: Some(layout.demand_generator(1.0)?),
                        ..ParameterSensitivity::default()
                    })
                }
                other => return Err(Error::UnknownParameter(other.into())),
            };
            let mut dsigma = vec![0.0; 2 * n * k];
            for i in 0..n {
                for s in 0..k {
                    let p = activity_probability(theta, layout.n_active(s), layout.decode(s).1 + 1);
                    let (_, sign) = layout.toggle_probability(theta, s, i);
                    let d = sign * p * (1.0 - p) * covariate(layout, s);
                    let base = (i * k + s) * 2;
                    dsigma[base] = -d;
                    dsigma[base + 1] = d;
                }
            }
            Ok(ParameterSensitivity {
                dsigma,
                ..ParameterSensitivity::default()
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn state_counts() {
        assert_eq!(EntryExitLayout::new(5, 5).unwrap().n_states(), 160);
        assert_eq!(EntryExitLayout::new(1, 1).unwrap().n_states(), 2);
        assert!(EntryExitLayout::new(0, 1).is_err());
    }

    #[test]
    fn activity_probability_values() {
        let t = EntryExitParams::truth();
        assert!((activity_probability(&t, 0, 1) - 0.401_312_339_887_548_3).abs() < 1e-15);
        let zero = EntryExitParams::from_slice(&[0.0, 0.0, 0.0, 1.0, 1.0]).unwrap();
        assert_eq!(activity_probability(&zero, 3, 2), 0.5);
    }

    #[test]
    fn toggle_roundtrip() {
        let l = EntryExitLayout::new(3, 2).unwrap();
        for k in 0..l.n_states() {
            for i in 0..3 {
                assert_eq!(l.toggle(l.toggle(k, i), i), k);
                assert_ne!(l.is_active(k, i), l.is_active(l.toggle(k, i), i));
            }
        }
    }
}
