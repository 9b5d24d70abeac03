#![allow(dead_code)]

use ctdc_core::ctmc::{validate_generator, IntensityMatrix};
use ctdc_core::inference::uniform_open01;
use ctdc_core::sparse::{CooMatrix, CsrMatrix};
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * uniform_open01(rng)
}

pub fn below(rng: &mut ChaCha8Rng, n: usize) -> usize {
    (rng.next_u64() % n as u64) as usize
}

/// Random sparse nonnegative off-diagonal rates, roughly `density` filled.
pub fn random_rates(rng: &mut ChaCha8Rng, k: usize, density: f64, max_rate: f64) -> Vec<(usize, usize, f64)> {
    let mut out = Vec::new();
    for r in 0..k {
        for c in 0..k {
            if r != c && uniform_open01(rng) < density {
                out.push((r, c, uniform(rng, 0.0, max_rate)));
            }
        }
    }
    out
}

/// Generator with the given off-diagonal rates and a stored diagonal.
pub fn generator_from_rates(k: usize, rates: &[(usize, usize, f64)]) -> IntensityMatrix {
    let mut coo = CooMatrix::new(k, k);
    let mut diag = vec![0.0; k];
    for &(r, c, v) in rates {
        coo.push(r, c, v).unwrap();
        diag[r] -= v;
    }
    for (r, d) in diag.into_iter().enumerate() {
        coo.push(r, r, d).unwrap();
    }
    validate_generator(coo.to_csr().unwrap()).unwrap()
}

pub fn random_generator(rng: &mut ChaCha8Rng, k: usize) -> IntensityMatrix {
    let density = uniform(rng, 0.05, 0.6);
    let max_rate = uniform(rng, 0.1, 5.0);
    let rates = random_rates(rng, k, density, max_rate);
    generator_from_rates(k, &rates)
}

pub fn random_probability(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..k).map(|_| -uniform_open01(rng).ln()).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|x| x / s).collect()
}

pub fn dense_matvec(a: &[f64], n: usize, v: &[f64]) -> Vec<f64> {
    (0..n).map(|r| (0..n).map(|c| a[r * n + c] * v[c]).sum()).collect()
}

pub fn dense_vecmat(a: &[f64], n: usize, v: &[f64]) -> Vec<f64> {
    (0..n).map(|c| (0..n).map(|r| v[r] * a[r * n + c]).sum()).collect()
}

pub fn l1_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// `max(rel · |b|, abs)` check used for finite-difference comparisons.
pub fn close(a: f64, b: f64, rel: f64, abs: f64) -> bool {
    (a - b).abs() <= (rel * b.abs()).max(abs)
}

/// Linear family `Q(θ) = Σ_p θ_p B_p` over random generators `B_p`, all on
/// one pattern; `∂Q/∂θ_p = B_p`.
pub struct LinearFamily {
    pub k: usize,
    pub basis: Vec<CsrMatrix>,
}

impl LinearFamily {
    pub fn random(rng: &mut ChaCha8Rng, k: usize, n_params: usize) -> Self {
        let mut rates = Vec::new();
        let mut parts: Vec<Vec<(usize, usize, f64)>> = vec![Vec::new(); n_params];
        for r in 0..k {
            for c in 0..k {
                if r != c && (c == (r + 1) % k || uniform_open01(rng) < 0.3) {
                    rates.push((r, c));
                }
            }
        }
        for &(r, c) in &rates {
            for part in parts.iter_mut() {
                part.push((r, c, uniform(rng, 0.0, 1.0)));
            }
        }
        let basis = parts
            .iter()
            .map(|p| generator_from_rates(k, p).into_csr())
            .collect();
        Self { k, basis }
    }

    pub fn matrix(&self, theta: &[f64]) -> CsrMatrix {
        let mut vals = vec![0.0; self.basis[0].nnz()];
        for (b, t) in self.basis.iter().zip(theta) {
            for (v, x) in vals.iter_mut().zip(b.values()) {
                *v += t * x;
            }
        }
        CsrMatrix::with_structure(self.basis[0].structure().clone(), vals).unwrap()
    }

    pub fn generator(&self, theta: &[f64]) -> IntensityMatrix {
        validate_generator(self.matrix(theta)).unwrap()
    }
}
