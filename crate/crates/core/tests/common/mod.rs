//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use cuthmm::hmm::{EmissionLaw, EmissionLogDensityTable, StateDistribution, TransitionMatrix};
use cuthmm::partition::{build_partition, CoarsenedSeries, DyadicPartition, TransformG0};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn q_star() -> TransitionMatrix {
    TransitionMatrix::from_rows(&[vec![0.7, 0.3], vec![0.2, 0.8]]).unwrap()
}

pub fn true_laws() -> Vec<EmissionLaw> {
    vec![EmissionLaw::Normal { mean: -1.0, sd: 1.0 }, EmissionLaw::Normal { mean: 1.0, sd: 1.0 }]
}

pub fn partition(level: u32) -> DyadicPartition {
    build_partition(TransformG0::sigmoid_linear(), level).unwrap()
}

/// One long series from the two-state normal study; shorter samples are prefixes.
pub fn study_data(n: usize, seed: u64) -> (Vec<usize>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (x, y) = cuthmm::hmm::simulate_hmm(&q_star(), &true_laws(), n, &mut rng).unwrap();
    (x.0, y)
}

/// Every length-`n` path over `r` states, first coordinate slowest.
pub fn all_paths(n: usize, r: usize) -> Vec<Vec<usize>> {
    let total = r.pow(n as u32);
    (0..total)
        .map(|mut code| {
            let mut p = vec![0; n];
            for t in (0..n).rev() {
                p[t] = code % r;
                code /= r;
            }
            p
        })
        .collect()
}

/// Joint probability of a path and the data, computed term by term.
pub fn path_joint(q: &TransitionMatrix, p0: &StateDistribution, e: &EmissionLogDensityTable, path: &[usize]) -> f64 {
    let mut p = p0.probs()[path[0]] * e.row(0)[path[0]].exp();
    for t in 1..path.len() {
        p *= q.get(path[t - 1], path[t]) * e.row(t)[path[t]].exp();
    }
    p
}

/// Brute-force likelihood and smoothing marginals by enumeration.
pub fn enumerate(q: &TransitionMatrix, p0: &StateDistribution, e: &EmissionLogDensityTable) -> (f64, Vec<Vec<f64>>) {
    let (n, r) = (e.len(), e.states());
    let mut z = 0.0;
    let mut marg = vec![vec![0.0; r]; n];
    for path in all_paths(n, r) {
        let p = path_joint(q, p0, e, &path);
        z += p;
        for (t, &s) in path.iter().enumerate() {
            marg[t][s] += p;
        }
    }
    for row in &mut marg {
        row.iter_mut().for_each(|v| *v /= z);
    }
    (z.ln(), marg)
}

pub fn random_simplex<G: Rng>(k: usize, rng: &mut G) -> Vec<f64> {
    // Bounded away from zero so brute-force products stay well scaled.
    let raw: Vec<f64> = (0..k).map(|_| 0.05 + rng.random::<f64>()).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / s).collect()
}

pub fn random_q<G: Rng>(r: usize, rng: &mut G) -> TransitionMatrix {
    let rows: Vec<Vec<f64>> = (0..r).map(|_| random_simplex(r, rng)).collect();
    TransitionMatrix::from_rows(&rows).unwrap()
}

/// Posterior mean of Q[0][0] for the two-state, two-bin toy model with
/// Dirichlet(`gamma` row) priors on Q (row-major), flat priors on ω and a
/// uniform initial law, by midpoint quadrature over
/// (Q00, Q11, ω(bin 0 | state 0), ω(bin 0 | state 1)).
pub fn toy_posterior_mean_q00(bins: &[usize], gamma: [f64; 4], points: usize) -> f64 {
    let h = 1.0 / points as f64;
    let grid: Vec<f64> = (0..points).map(|i| (i as f64 + 0.5) * h).collect();
    let paths = all_paths(bins.len(), 2);
    let (mut num, mut den) = (0.0, 0.0);
    for &a in &grid {
        for &d in &grid {
            let q = [[a, 1.0 - a], [1.0 - d, d]];
            let prior = q[0][0].powf(gamma[0] - 1.0)
                * q[0][1].powf(gamma[1] - 1.0)
                * q[1][0].powf(gamma[2] - 1.0)
                * q[1][1].powf(gamma[3] - 1.0);
            for &w0 in &grid {
                for &w1 in &grid {
                    let w = [[w0, w1], [1.0 - w0, 1.0 - w1]];
                    let mut lik = 0.0;
                    for p in &paths {
                        let mut v = 0.5 * w[bins[0]][p[0]];
                        for t in 1..p.len() {
                            v *= q[p[t - 1]][p[t]] * w[bins[t]][p[t]];
                        }
                        lik += v;
                    }
                    num += a * prior * lik;
                    den += prior * lik;
                }
            }
        }
    }
    num / den
}

/// Posterior moments of (μ, v) for `y_i ~ N(μ, v)`, `μ ~ N(m, s2)`,
/// `v ~ InvGamma(a, b)` with μ integrated analytically and v by quadrature
/// on a log grid. Returns (E μ, Var μ, E v, Var v).
pub fn semi_conjugate_moments(y: &[f64], m: f64, s2: f64, a: f64, b: f64) -> (f64, f64, f64, f64) {
    let n = y.len() as f64;
    let sum: f64 = y.iter().map(|v| v - m).sum();
    let ss: f64 = y.iter().map(|v| (v - m).powi(2)).sum();
    let log_post = |v: f64| {
        let c = v + n * s2;
        let quad = (ss - s2 * sum * sum / c) / v;
        let ln_lik = -0.5 * ((n - 1.0) * v.ln() + c.ln()) - 0.5 * quad;
        ln_lik - (a + 1.0) * v.ln() - b / v
    };
    let k = 200_000;
    let (lo, hi) = (-12.0f64, 8.0f64);
    let step = (hi - lo) / k as f64;
    let us: Vec<f64> = (0..=k).map(|i| lo + step * i as f64).collect();
    // Density in u = ln v carries the Jacobian v.
    let lw: Vec<f64> = us.iter().map(|&u| log_post(u.exp()) + u).collect();
    let max = lw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = lw.iter().map(|l| (l - max).exp()).collect();
    let mut acc = [0.0f64; 6];
    for (i, (&u, &wi)) in us.iter().zip(&w).enumerate() {
        let tw = if i == 0 || i == k { 0.5 * wi } else { wi };
        let v = u.exp();
        let prec = 1.0 / s2 + n / v;
        let pm = (m / s2 + (sum + n * m) / v) / prec;
        let pv = 1.0 / prec;
        acc[0] += tw;
        acc[1] += tw * pm;
        acc[2] += tw * (pv + pm * pm);
        acc[3] += tw * v;
        acc[4] += tw * v * v;
    }
    let e_mu = acc[1] / acc[0];
    let e_v = acc[3] / acc[0];
    (e_mu, acc[2] / acc[0] - e_mu * e_mu, e_v, acc[4] / acc[0] - e_v * e_v)
}

pub fn coarsened(bins: &[usize], kappa: usize) -> CoarsenedSeries {
    CoarsenedSeries::new(kappa, bins.to_vec()).unwrap()
}
