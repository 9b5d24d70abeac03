mod common;

use common::*;
use ctdc_core::ctmc::uniformize;
use ctdc_core::linalg::{span, sup_dist, sup_norm};
use ctdc_core::model::entry_exit::{build_entry_exit, myopic_ccps, EntryExitLayout, EntryExitParams};
use ctdc_core::model::renewal::{build_renewal, renewal_ccps, renewal_q0};
use ctdc_core::model::*;
use ctdc_core::solver::*;
use ctdc_core::special::EULER_GAMMA;
use nalgebra::DMatrix;

const GAMMA: f64 = 0.5;
const LAMBDA: f64 = 1.0;
const BETA_COST: f64 = -1.0;
const MU_COST: f64 = 4.0;

fn renewal(rho: f64) -> GameSpec {
    build_renewal(5, GAMMA, LAMBDA, BETA_COST, MU_COST, rho, 1.0).unwrap()
}

fn entry_exit() -> (GameSpec, CcpProfile) {
    let params = EntryExitParams::truth();
    let spec = build_entry_exit(2, 2, &params.to_parameters()).unwrap();
    let beliefs = myopic_ccps(&EntryExitLayout::new(2, 2).unwrap(), &params).unwrap();
    (spec, beliefs)
}

fn test_models() -> Vec<(&'static str, GameSpec, CcpProfile)> {
    let spec = renewal(0.05);
    let beliefs = CcpProfile::uniform(1, 2, 5);
    let (ee, ee_beliefs) = entry_exit();
    vec![("renewal", spec, beliefs), ("entry_exit", ee, ee_beliefs)]
}

/// Scalar transcription of the renewal Bellman equation.
fn renewal_bellman_reference(v: &[f64], rho: f64) -> Vec<f64> {
    let k = v.len();
    (0..k)
        .map(|s| {
            let up = if s + 1 < k { GAMMA } else { 0.0 };
            let next = if s + 1 < k { v[s + 1] } else { 0.0 };
            let a = v[s];
            let b = v[0] - MU_COST;
            let m = a.max(b);
            let emax = m + ((a - m).exp() + (b - m).exp()).ln() + EULER_GAMMA;
            (BETA_COST * (s + 1) as f64 + up * next + LAMBDA * emax) / (rho + up + LAMBDA)
        })
        .collect()
}

#[test]
fn bellman_matches_scalar_reference() {
    let spec = renewal(0.05);
    let beliefs = CcpProfile::uniform(1, 2, 5);
    let mut rng = rng(21);
    for _ in 0..20 {
        let v: Vec<f64> = (0..5).map(|_| uniform(&mut rng, -30.0, 10.0)).collect();
        let got = bellman_apply(&spec, &beliefs, 0, &ValueFunction::new(v.clone()).unwrap()).unwrap();
        let want = renewal_bellman_reference(&v, 0.05);
        assert!(sup_dist(&got, &want) < 1e-12);
    }
}

#[test]
fn bellman_is_a_contraction_with_the_stated_modulus() {
    let mut rng = rng(22);
    for (name, spec, beliefs) in test_models() {
        let k = spec.n_states();
        let beta_low = spec.beta_lower(0);
        let beta_bar = spec.beta_bar(0);
        for _ in 0..1000 {
            let v: Vec<f64> = (0..k).map(|_| uniform(&mut rng, -50.0, 50.0)).collect();
            let w: Vec<f64> = (0..k).map(|_| uniform(&mut rng, -50.0, 50.0)).collect();
            let tv = bellman_apply(&spec, &beliefs, 0, &ValueFunction::new(v.clone()).unwrap()).unwrap();
            let tw = bellman_apply(&spec, &beliefs, 0, &ValueFunction::new(w.clone()).unwrap()).unwrap();
            let lhs = sup_dist(&tv, &tw);
            let d = sup_dist(&v, &w);
            assert!(lhs <= beta_low * d + 1e-12, "{name}");
            assert!(lhs <= beta_bar * d + 1e-12, "{name}");
        }
    }
}

#[test]
fn value_iteration_ratios_respect_the_modulus() {
    for (name, spec, beliefs) in test_models() {
        let (v, report) =
            value_iterate(&spec, &beliefs, 0, &ValueFunction::zeros(spec.n_states()), &SolveOptions::with_tol(1e-10))
                .unwrap();
        assert!(report.iterations >= 50, "{name}: {}", report.iterations);
        let beta = spec.beta_lower(0);
        let noise = 8.0 * f64::EPSILON * sup_norm(&v);
        for w in report.residuals.windows(2) {
            assert!(w[1] <= beta * w[0] + noise, "{name}: ratio {}", w[1] / w[0]);
        }
    }
}

#[test]
fn value_iteration_converges_from_different_starts() {
    let spec = renewal(0.05);
    let beliefs = CcpProfile::uniform(1, 2, 5);
    let opts = SolveOptions::with_tol(1e-9);
    let (a, _) = value_iterate(&spec, &beliefs, 0, &ValueFunction::zeros(5), &opts).unwrap();
    let (b, _) = value_iterate(&spec, &beliefs, 0, &ValueFunction::new(vec![-500.0, 30.0, 0.0, 2.0, 9.0]).unwrap(), &opts)
        .unwrap();
    assert!(sup_dist(&a, &b) <= 2e-9);
    let (_, again) = value_iterate(&spec, &beliefs, 0, &a, &opts).unwrap();
    assert_eq!(again.iterations, 1);
}

#[test]
fn policy_evaluation_ratios_respect_beta_bar() {
    for (name, spec, beliefs) in test_models() {
        let k = spec.n_states();
        let (v, _) = value_iterate(&spec, &beliefs, 0, &ValueFunction::zeros(k), &SolveOptions::with_tol(1e-10)).unwrap();
        let sigma = best_response_profile(&spec, &beliefs, 0, &v).unwrap();
        let rep = uniform_representation(&spec, &sigma, 0).unwrap();
        let (_, report) = policy_evaluate(&rep, EvaluationMethod::Iterative, &SolveOptions::with_tol(1e-10)).unwrap();
        assert!(report.iterations >= 50);
        let noise = 8.0 * f64::EPSILON * sup_norm(&v);
        for w in report.residuals.windows(2) {
            assert!(w[1] <= rep.beta_bar * w[0] + noise, "{name}: ratio {}", w[1] / w[0]);
        }
    }
}

#[test]
fn fixed_points_agree_across_methods() {
    for (name, spec, beliefs) in test_models() {
        let k = spec.n_states();
        let opts = SolveOptions::with_tol(1e-11);
        let (vi, _) = value_iterate(&spec, &beliefs, 0, &ValueFunction::zeros(k), &opts).unwrap();
        let (nk, _) = newton_kantorovich_warm(&spec, &beliefs, 0, &ValueFunction::zeros(k), 20, &opts).unwrap();
        let sigma = best_response_profile(&spec, &beliefs, 0, &vi).unwrap();
        let rep = uniform_representation(&spec, &sigma, 0).unwrap();
        let (direct, _) = policy_evaluate(&rep, EvaluationMethod::Direct, &opts).unwrap();
        let (iter, _) = policy_evaluate(&rep, EvaluationMethod::Iterative, &opts).unwrap();
        let (rvi, _) = relative_value_iterate(&rep, &ValueFunction::zeros(k), &SolveOptions::with_tol(1e-12)).unwrap();
        for (label, other) in [("nk", &nk), ("direct", &direct), ("iterative", &iter), ("rvi", &rvi)] {
            assert!(sup_dist(&vi, other) <= 1e-8, "{name} {label}: {}", sup_dist(&vi, other));
        }
        assert!(sup_dist(&direct, &iter) <= 1e-10);
    }
}

#[test]
fn newton_kantorovich_converges_quadratically() {
    let spec = renewal(0.05);
    let beliefs = CcpProfile::uniform(1, 2, 5);
    let opts = SolveOptions::with_tol(1e-10);
    let (v, report) = newton_kantorovich_warm(&spec, &beliefs, 0, &ValueFunction::zeros(5), 20, &opts).unwrap();
    assert!(report.iterations <= 10);
    let (vi, _) = value_iterate(&spec, &beliefs, 0, &ValueFunction::zeros(5), &SolveOptions::with_tol(1e-12)).unwrap();
    assert!(sup_dist(&v, &vi) <= 1e-10);
    let scale = sup_norm(&v);
    let logs: Vec<f64> = report.residuals.iter().map(|r| (r / scale).ln()).collect();
    let slopes: Vec<f64> = logs
        .windows(2)
        .filter(|w| w[0] < 0.0 && w[1] > (1e-14f64).ln())
        .map(|w| w[1] / w[0])
        .collect();
    assert!(!slopes.is_empty(), "{:?}", report.residuals);
    assert!(slopes.last().unwrap() >= &1.7, "{slopes:?}");
}

#[test]
fn newton_kantorovich_is_exact_on_one_state() {
    let q0 = ctdc_core::ctmc::validate_generator(ctdc_core::sparse::CsrMatrix::zeros(1, 1)).unwrap();
    let spec = GameSpec::new(GameSpecParts {
        n_players: 1,
        n_actions: 1,
        rho: vec![0.05],
        lambda: vec![1.0],
        q0,
        transitions: vec![0],
        flow: vec![1.0],
        psi: vec![0.0],
        shock: ShockSpec::default(),
        inert: vec![],
    })
    .unwrap();
    let beliefs = CcpProfile::uniform(1, 1, 1);
    let (v, report) =
        newton_kantorovich(&spec, &beliefs, 0, &ValueFunction::zeros(1), &SolveOptions::with_tol(1e-12)).unwrap();
    assert!((v[0] - (1.0 + EULER_GAMMA) / 0.05).abs() < 1e-10);
    assert_eq!(report.iterations, 2);
}

#[test]
fn uniform_representation_decomposes_into_nature_and_agent_parts() {
    let spec = renewal(0.05);
    let replace = [0.1, 0.2, 0.3, 0.4, 0.5];
    let sigma = renewal_ccps(&replace).unwrap();
    let rep = uniform_representation(&spec, &sigma, 0).unwrap();
    let (eta0, eta1) = (GAMMA, LAMBDA);
    assert!((rep.eta_bar - (eta0 + eta1)).abs() < 1e-15);
    let q0 = renewal_q0(5, GAMMA).unwrap().to_dense();
    let sigma_matrix = rep.sigma_matrix.to_dense();
    for r in 0..5 {
        for c in 0..5 {
            let id = if r == c { 1.0 } else { 0.0 };
            let s0 = id + q0[r * 5 + c] / eta0;
            let mut q1 = 0.0;
            if r > 0 {
                if c == 0 {
                    q1 = LAMBDA * replace[r];
                }
                if c == r {
                    q1 = -LAMBDA * replace[r];
                }
            }
            let s1 = id + q1 / eta1;
            let want = eta0 / (eta0 + eta1) * s0 + eta1 / (eta0 + eta1) * s1;
            assert!((sigma_matrix[r * 5 + c] - want).abs() < 1e-15, "({r},{c})");
        }
        let row: f64 = (0..5).map(|c| sigma_matrix[r * 5 + c]).sum();
        assert!((row - 1.0).abs() < 1e-12);
    }
}

#[test]
fn expected_payoff_under_uniform_ccps() {
    let spec = build_renewal(3, GAMMA, LAMBDA, 0.0, 0.0, 0.05, 1.0).unwrap();
    let sigma = CcpProfile::uniform(1, 2, 3);
    let rep = uniform_representation(&spec, &sigma, 0).unwrap();
    let c = EULER_GAMMA + std::f64::consts::LN_2;
    for u in &rep.u_eff {
        assert!((u - LAMBDA * c / (0.05 + rep.eta_bar)).abs() < 1e-14);
    }
}

#[test]
fn large_discount_rate_limit() {
    let spec = renewal(1e6);
    let sigma = renewal_ccps(&[0.1, 0.2, 0.3, 0.4, 0.5]).unwrap();
    let rep = uniform_representation(&spec, &sigma, 0).unwrap();
    assert!(rep.beta_bar < 2e-6);
    let (v, _) = policy_evaluate(&rep, EvaluationMethod::Direct, &SolveOptions::default()).unwrap();
    for (vi, u) in v.iter().zip(&rep.u_eff) {
        assert!((vi - u).abs() <= 1e-5 * u.abs().max(1e-12));
    }
}

fn second_eigenvalue_modulus(sigma: &[f64], k: usize) -> f64 {
    let m = DMatrix::from_row_slice(k, k, sigma);
    let mut mods: Vec<f64> = m.complex_eigenvalues().iter().map(|z| z.norm()).collect();
    mods.sort_by(|a, b| b.total_cmp(a));
    assert!((mods[0] - 1.0).abs() < 1e-10);
    mods[1]
}

/// `(r_m / r_n)^(1 / (m - n))` over the residuals inside `[lo, hi]`. Per-step
/// ratios oscillate when the subdominant eigenvalue is complex.
fn root_convergence_factor(residuals: &[f64], hi: f64, lo: f64) -> f64 {
    let first = residuals.iter().position(|&r| r <= hi).unwrap();
    let last = residuals.iter().rposition(|&r| r >= lo).unwrap();
    assert!(last > first + 10);
    (residuals[last] / residuals[first]).powf(1.0 / (last - first) as f64)
}

#[test]
fn relative_value_iteration_rate() {
    let spec = renewal(0.05);
    let sigma = renewal_ccps(&[0.1, 0.2, 0.3, 0.4, 0.5]).unwrap();
    let rep = uniform_representation(&spec, &sigma, 0).unwrap();
    let gamma2 = second_eigenvalue_modulus(&rep.sigma_matrix.to_dense(), 5);
    let (_, report) = relative_value_iterate(&rep, &ValueFunction::zeros(5), &SolveOptions::with_tol(1e-13)).unwrap();
    let observed = root_convergence_factor(&report.residuals, 1e-3, 1e-10);
    assert!(observed <= rep.beta_bar * gamma2 + 0.01, "{observed} vs {}", rep.beta_bar * gamma2);
}

#[test]
fn relative_value_iteration_beats_plain_evaluation_when_patient() {
    let spec = renewal(1e-4);
    let sigma = renewal_ccps(&[0.1, 0.2, 0.3, 0.4, 0.5]).unwrap();
    let rep = uniform_representation(&spec, &sigma, 0).unwrap();
    let opts = SolveOptions::with_tol(1e-6);
    let (v_pe, pe) = policy_evaluate(&rep, EvaluationMethod::Iterative, &opts).unwrap();
    let (v_rvi, rvi) = relative_value_iterate(&rep, &ValueFunction::zeros(5), &opts).unwrap();
    assert!(rvi.iterations < pe.iterations, "{} vs {}", rvi.iterations, pe.iterations);
    let (v_direct, _) = policy_evaluate(&rep, EvaluationMethod::Direct, &opts).unwrap();
    assert!(sup_dist(&v_rvi, &v_direct) <= 1e-5 * sup_norm(&v_direct).max(1.0));
    assert!(sup_dist(&v_pe, &v_direct) <= 1e-5 * sup_norm(&v_direct).max(1.0));
    let (_, at_fixed) = relative_value_iterate(&rep, &v_direct, &opts).unwrap();
    assert_eq!(at_fixed.iterations, 1);
}

#[test]
fn sigma_matrix_keeps_q_pattern_with_full_diagonal() {
    let (spec, beliefs) = entry_exit();
    let rep = uniform_representation(&spec, &beliefs, 0).unwrap();
    let (q, _) = assemble_q(&spec, &beliefs, None).unwrap();
    let chain = uniformize(&q, Some(rep.eta_bar)).unwrap();
    assert_eq!(chain.sigma.row_ptr(), rep.sigma_matrix.row_ptr());
    assert!(rep.sigma_matrix.structure().has_full_diagonal());
    for (r, c, _) in q.as_csr().iter() {
        assert!(rep.sigma_matrix.structure().position(r, c).is_some());
    }
    let _ = span(&rep.u_eff);
}

#[test]
fn ccps_from_equal_values_are_uniform() {
    let spec = build_renewal(3, GAMMA, LAMBDA, 0.0, 0.0, 0.05, 1.0).unwrap();
    let v = ValueFunction::new(vec![2.0; 3]).unwrap();
    let ccp = ccp_from_value(&spec, 0, &v).unwrap();
    for p in ccp {
        assert!((p - 0.5).abs() < 1e-15);
    }
    let spec = renewal(0.05);
    let v = ValueFunction::new(vec![0.0, -1.0, -2.0, -3.0, -4.0]).unwrap();
    let ccp = ccp_from_value(&spec, 0, &v).unwrap();
    for k in 1..5 {
        let gap = (0.0 - MU_COST) - v[k];
        assert!((ccp[2 * k + 1] - 1.0 / (1.0 + (-gap).exp())).abs() < 1e-15);
    }
}
