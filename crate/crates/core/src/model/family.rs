//! Parametric generator families `θ ↦ Q(θ)` with analytic `∂Q/∂θ`, the
//! interface the likelihood works against.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::ctmc::{validate_generator, IntensityMatrix};
use crate::model::entry_exit::{
    self, myopic_ccps, EntryExitLayout, EntryExitParams, DEFAULT_RHO, PARAMETER_NAMES,
};
use crate::model::renewal::{build_renewal, gamma_sensitivity, lambda_sensitivity, renewal_ccps};
use crate::model::{assemble_q, assemble_q_derivatives, CcpProfile};
use crate::sparse::{CsrMatrix, CsrStructure, SparsityPattern};
use crate::{Error, Result};

/// Default bounds for regression coefficients.
pub const COEF_BOUNDS: (f64, f64) = (-10.0, 10.0);
/// Default bounds for rate parameters.
pub const RATE_BOUNDS: (f64, f64) = (1e-4, 100.0);

pub trait GeneratorFamily {
    fn n_states(&self) -> usize;

    fn parameter_names(&self) -> &[&'static str];

    fn n_params(&self) -> usize {
        self.parameter_names().len()
    }

    /// Box bounds per parameter, in [`GeneratorFamily::parameter_names`] order.
    fn default_bounds(&self) -> Vec<(f64, f64)>;

    fn generator(&self, theta: &[f64]) -> Result<IntensityMatrix>;

    /// `Q(θ)` and `∂Q/∂θ_p` for every parameter, all on `Q`'s pattern.
    fn generator_and_derivatives(&self, theta: &[f64]) -> Result<(IntensityMatrix, Vec<CsrMatrix>)>;
}

fn check_len(theta: &[f64], n: usize) -> Result<()> {
    if theta.len() == n {
        Ok(())
    } else {
        Err(Error::Dimension {
            context: "parameter vector",
            expected: n,
            found: theta.len(),
        })
    }
}

/// Entry/exit model with myopic CCPs, parameters
/// `(theta_ec, theta_rn, theta_d, lambda, gamma)`.
#[derive(Debug, Clone)]
pub struct EntryExitFamily {
    layout: EntryExitLayout,
    pattern: SparsityPattern,
}

impl EntryExitFamily {
    pub fn new(n_firms: usize, n_demand: usize) -> Result<Self> {
        let layout = EntryExitLayout::new(n_firms, n_demand)?;
        let spec = entry_exit::build_with(&layout, &EntryExitParams::truth(), DEFAULT_RHO)?;
        let pattern = spec.generator_pattern()?;
        Ok(Self { layout, pattern })
    }

    pub fn layout(&self) -> &EntryExitLayout {
        &self.layout
    }

    pub fn pattern(&self) -> &SparsityPattern {
        &self.pattern
    }

    fn parts(&self, theta: &[f64]) -> Result<(crate::model::GameSpec, EntryExitParams, CcpProfile)> {
        check_len(theta, 5)?;
        let params = EntryExitParams::from_slice(theta)?;
        let spec = entry_exit::build_with(&self.layout, &params, DEFAULT_RHO)?;
        let sigma = myopic_ccps(&self.layout, &params)?;
        Ok((spec, params, sigma))
    }
}

impl GeneratorFamily for EntryExitFamily {
    fn n_states(&self) -> usize {
        self.layout.n_states()
    }

    fn parameter_names(&self) -> &[&'static str] {
        &PARAMETER_NAMES
    }

    fn default_bounds(&self) -> Vec<(f64, f64)> {
        vec![COEF_BOUNDS, COEF_BOUNDS, COEF_BOUNDS, RATE_BOUNDS, RATE_BOUNDS]
    }

    fn generator(&self, theta: &[f64]) -> Result<IntensityMatrix> {
        let (spec, _, sigma) = self.parts(theta)?;
        Ok(assemble_q(&spec, &sigma, Some(&self.pattern))?.0)
    }

    fn generator_and_derivatives(&self, theta: &[f64]) -> Result<(IntensityMatrix, Vec<CsrMatrix>)> {
        let (spec, params, sigma) = self.parts(theta)?;
        let (q, _) = assemble_q(&spec, &sigma, Some(&self.pattern))?;
        let sens = entry_exit::sensitivities(&self.layout, &params, &PARAMETER_NAMES)?;
        let dq = assemble_q_derivatives(&spec, &sigma, &sens, &self.pattern)?;
        Ok((q, dq))
    }
}

/// Renewal model with fixed replacement probabilities, parameters
/// `(gamma, lambda)`.
#[derive(Debug, Clone)]
pub struct RenewalFamily {
    sigma: CcpProfile,
    pattern: SparsityPattern,
}

const RENEWAL_NAMES: [&str; 2] = ["gamma", "lambda"];

impl RenewalFamily {
    /// `replace[k]` is the probability of replacing in state `k`.
    pub fn new(replace: &[f64]) -> Result<Self> {
        let sigma = renewal_ccps(replace)?;
        let spec = build_renewal(replace.len(), 1.0, 1.0, 0.0, 0.0, 1.0, 1.0)?;
        let pattern = spec.generator_pattern()?;
        Ok(Self { sigma, pattern })
    }

    pub fn pattern(&self) -> &SparsityPattern {
        &self.pattern
    }

    fn spec(&self, theta: &[f64]) -> Result<crate::model::GameSpec> {
        check_len(theta, 2)?;
        build_renewal(self.sigma.n_states(), theta[0], theta[1], 0.0, 0.0, 1.0, 1.0)
    }
}

impl GeneratorFamily for RenewalFamily {
    fn n_states(&self) -> usize {
        self.sigma.n_states()
    }

    fn parameter_names(&self) -> &[&'static str] {
        &RENEWAL_NAMES
    }

    fn default_bounds(&self) -> Vec<(f64, f64)> {
        vec![RATE_BOUNDS, RATE_BOUNDS]
    }

    fn generator(&self, theta: &[f64]) -> Result<IntensityMatrix> {
        let spec = self.spec(theta)?;
        Ok(assemble_q(&spec, &self.sigma, Some(&self.pattern))?.0)
    }

    fn generator_and_derivatives(&self, theta: &[f64]) -> Result<(IntensityMatrix, Vec<CsrMatrix>)> {
        let spec = self.spec(theta)?;
        let (q, _) = assemble_q(&spec, &self.sigma, Some(&self.pattern))?;
        let sens = [gamma_sensitivity(self.n_states())?, lambda_sensitivity()];
        let dq = assemble_q_derivatives(&spec, &self.sigma, &sens, &self.pattern)?;
        Ok((q, dq))
    }
}

/// `Q = [[-α, α], [β, -β]]`, parameters `(alpha, beta)`.
#[derive(Debug, Clone)]
pub struct TwoStateFamily {
    structure: Arc<CsrStructure>,
}

const TWO_STATE_NAMES: [&str; 2] = ["alpha", "beta"];

impl TwoStateFamily {
    pub fn new() -> Self {
        let structure = CsrStructure::new(2, 2, vec![0, 2, 4], vec![0, 1, 0, 1])
            .expect("static 2x2 pattern");
        Self {
            structure: Arc::new(structure),
        }
    }

    fn matrix(&self, values: [f64; 4]) -> CsrMatrix {
        CsrMatrix::with_structure(self.structure.clone(), values.to_vec()).expect("four values")
    }
}

impl Default for TwoStateFamily {
    fn default() -> Self {
        Self::new()
    }
}

impl GeneratorFamily for TwoStateFamily {
    fn n_states(&self) -> usize {
        2
    }

    fn parameter_names(&self) -> &[&'static str] {
        &TWO_STATE_NAMES
    }

    fn default_bounds(&self) -> Vec<(f64, f64)> {
        vec![RATE_BOUNDS, RATE_BOUNDS]
    }

    fn generator(&self, theta: &[f64]) -> Result<IntensityMatrix> {
        check_len(theta, 2)?;
        let (a, b) = (theta[0], theta[1]);
        validate_generator(self.matrix([-a, a, b, -b]))
    }

    fn generator_and_derivatives(&self, theta: &[f64]) -> Result<(IntensityMatrix, Vec<CsrMatrix>)> {
        let q = self.generator(theta)?;
        let da = self.matrix([-1.0, 1.0, 0.0, 0.0]);
        let db = self.matrix([0.0, 0.0, 1.0, -1.0]);
        Ok((q, vec![da, db]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn entry_exit_family_reuses_pattern() {
        let f = EntryExitFamily::new(2, 2).unwrap();
        let q1 = f.generator(&[-0.5, -0.05, 0.1, 1.0, 0.3]).unwrap();
        let q2 = f.generator(&[0.2, 0.1, -0.3, 2.0, 0.7]).unwrap();
        assert!(q1.as_csr().shares_structure(q2.as_csr()));
        assert_ne!(q1.as_csr().values(), q2.as_csr().values());
    }

    #[test]
    fn families_reject_wrong_lengths() {
        assert!(TwoStateFamily::new().generator(&[1.0]).is_err());
        assert!(EntryExitFamily::new(1, 1).unwrap().generator(&[0.0; 4]).is_err());
        assert!(RenewalFamily::new(&[0.5, 0.5]).unwrap().generator(&[0.1, 0.2, 0.3]).is_err());
    }
}
