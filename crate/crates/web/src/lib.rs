//! WebAssembly bindings for the browser demo in `www/`.
//!
//! The plain functions return JSON strings and are usable natively; the
//! `#[wasm_bindgen]` wrappers only translate errors into JS exceptions.

use cuthmm::diagnostics::{self, EmConfig};
use cuthmm::histogram::{self, DirichletHyper, Pi1Config};
use cuthmm::hmm::{self, EmissionLaw, TransitionMatrix};
use cuthmm::partition::{build_partition, DyadicPartition, TransformG0};
use cuthmm::spectral::{self, SpectralConfig};
use cuthmm::{stats, Result};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use wasm_bindgen::prelude::*;

const LAWS: [EmissionLaw; 2] = [EmissionLaw::Normal { mean: -1.0, sd: 1.0 }, EmissionLaw::Normal { mean: 1.0, sd: 1.0 }];

#[derive(Serialize)]
pub struct Simulated {
    pub x: Vec<usize>,
    pub y: Vec<f64>,
}

#[derive(Serialize)]
pub struct QSummary {
    pub kappa: usize,
    pub mean: Vec<Vec<f64>>,
    pub sd: Vec<Vec<f64>>,
    /// Draws of `Q[0][0]` and `Q[1][1]`.
    pub diagonal: [Vec<f64>; 2],
    /// Posterior-mean bin probabilities, one column per state.
    pub omega: Vec<Vec<f64>>,
    /// Finite bin edges.
    pub edges: Vec<f64>,
}

#[derive(Serialize)]
pub struct SpectralSummary {
    pub q_hat: Vec<Vec<f64>>,
    pub omega_hat: Vec<Vec<f64>>,
}

fn partition(m: u32) -> Result<DyadicPartition> {
    build_partition(TransformG0::sigmoid_linear(), m)
}

/// Two-state HMM with N(−1, 1) and N(1, 1) emissions.
pub fn simulate_series(n: usize, q00: f64, q11: f64, seed: u64) -> Result<Simulated> {
    let q = TransitionMatrix::from_rows(&[vec![q00, 1.0 - q00], vec![1.0 - q11, q11]])?;
    let (x, y) = hmm::simulate_hmm(&q, &LAWS, n, &mut ChaCha8Rng::seed_from_u64(seed))?;
    Ok(Simulated { x: x.0, y })
}

/// Histogram-prior posterior for `Q` on `2^m` bins, states ordered by the
/// mean bin of their emission weights.
pub fn fit_q_summary(y: &[f64], m: u32, iterations: usize, seed: u64) -> Result<QSummary> {
    let part = partition(m)?;
    let kappa = part.kappa();
    let bins = part.coarsen(y);
    let config = Pi1Config { iterations, burn_in: iterations / 5, thin: 1, seed };
    let store = histogram::run_chain(&bins, &DirichletHyper::uniform(2, kappa), &config, 2, Some(&part))?;
    let omega: Vec<Vec<f64>> = (0..2)
        .map(|s| {
            (0..kappa)
                .map(|b| stats::mean(&store.draws.iter().map(|d| d.omega.as_ref().map_or(0.0, |o| o.weight(b, s))).collect::<Vec<_>>()))
                .collect()
        })
        .collect();
    let centre = |col: &Vec<f64>| col.iter().enumerate().map(|(b, w)| b as f64 * w).sum::<f64>();
    let order = if centre(&omega[0]) <= centre(&omega[1]) { [0, 1] } else { [1, 0] };
    let entry = |i: usize, j: usize| store.q_entry(order[i], order[j]);
    Ok(QSummary {
        kappa,
        mean: (0..2).map(|i| (0..2).map(|j| stats::mean(&entry(i, j))).collect()).collect(),
        sd: (0..2).map(|i| (0..2).map(|j| stats::std_dev(&entry(i, j))).collect()).collect(),
        diagonal: [entry(0, 0), entry(1, 1)],
        omega: order.iter().map(|&s| omega[s].clone()).collect(),
        edges: part.edges().iter().copied().filter(|e| e.is_finite()).collect(),
    })
}

/// Spectral estimate on `2^m` bins, labelled against a short EM run and
/// ordered like [`fit_q_summary`].
pub fn spectral_summary(y: &[f64], m: u32, seed: u64) -> Result<SpectralSummary> {
    let part = partition(m)?;
    let bins = part.coarsen(y);
    let reference = diagnostics::baum_welch(&bins, 2, None, &EmConfig { tol: 1e-6, max_iter: 300 })?;
    let omega_ref = DMatrix::from_fn(part.kappa(), 2, |b, s| reference.omega_hat.weight(b, s));
    let est = spectral::spectral_estimate(&bins, 2, &reference.q_hat, &omega_ref, &SpectralConfig { seed, ..SpectralConfig::default() })?;
    let centre = |s: usize| est.omega_hat.iter().enumerate().map(|(b, row)| b as f64 * row[s]).sum::<f64>();
    if centre(0) <= centre(1) {
        return Ok(SpectralSummary { q_hat: est.q_hat.to_rows(), omega_hat: est.omega_hat });
    }
    Ok(SpectralSummary {
        q_hat: est.q_hat.permuted(&[1, 0]).to_rows(),
        omega_hat: est.omega_hat.iter().map(|row| vec![row[1], row[0]]).collect(),
    })
}

fn to_js<T: Serialize>(value: Result<T>) -> std::result::Result<String, JsError> {
    let value = value.map_err(|e| JsError::new(&e.to_string()))?;
    serde_json::to_string(&value).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen]
pub fn simulate(n: usize, q00: f64, q11: f64, seed: u64) -> std::result::Result<String, JsError> {
    to_js(simulate_series(n, q00, q11, seed))
}

#[wasm_bindgen]
pub fn fit_q(y: &[f64], m: u32, iterations: usize, seed: u64) -> std::result::Result<String, JsError> {
    to_js(fit_q_summary(y, m, iterations, seed))
}

#[wasm_bindgen]
pub fn spectral_fit(y: &[f64], m: u32, seed: u64) -> std::result::Result<String, JsError> {
    to_js(spectral_summary(y, m, seed))
}
