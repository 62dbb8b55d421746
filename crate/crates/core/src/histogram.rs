//! Gibbs sampler for the transition matrix under the histogram prior.
//!
//! The sampler works on the coarsened series only: given a partition, each
//! observation is replaced by its bin index and the emissions become
//! multinomial with per-state bin weights `ω`. Conjugate Dirichlet priors on
//! the rows of `Q` and on every column of `ω` make all three Gibbs blocks exact:
//!
//! * `Q[i, ·] | X ~ Dir(γ[i, ·] + n[i, ·])` with `n` the transition counts,
//! * `ω[·, s] | X, Y ~ Dir(β[·, s] + N[·, s])` with `N` the per-state bin counts,
//! * `X | Q, ω, Y` by forward-filtering backward-sampling.
//!
//! The latent chain starts from a fixed uniform law so that the first block
//! is exactly Dirichlet. Draws are relabelled after the run against the draw
//! with the largest log posterior.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hmm::{self, EmissionLogDensityTable, LatentPath, StateDistribution, TransitionMatrix};
use crate::partition::{CoarsenedSeries, DyadicPartition};
use crate::stats;

/// Per-state bin weights; column `s` is the weight vector of state `s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramEmissions {
    kappa: usize,
    r: usize,
    /// State-major: `weights[s * kappa + m] = ω[m, s]`.
    weights: Vec<f64>,
}

impl HistogramEmissions {
    pub fn new(kappa: usize, r: usize, weights: Vec<f64>) -> Result<Self> {
        if kappa == 0 || r == 0 || weights.len() != kappa * r {
            return Err(Error::invalid("bin weights must be a kappa x R matrix"));
        }
        for s in 0..r {
            let col = &weights[s * kappa..(s + 1) * kappa];
            if col.iter().any(|w| !w.is_finite() || *w < 0.0) {
                return Err(Error::invalid(format!("state {s} has a negative bin weight")));
            }
            let total: f64 = col.iter().sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(Error::invalid(format!("state {s} bin weights sum to {total}")));
            }
        }
        Ok(Self { kappa, r, weights })
    }

    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self> {
        let r = columns.len();
        let kappa = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != kappa) {
            return Err(Error::invalid("bin weight columns differ in length"));
        }
        Self::new(kappa, r, columns.concat())
    }

    pub fn uniform(kappa: usize, r: usize) -> Self {
        Self { kappa, r, weights: vec![1.0 / kappa as f64; kappa * r] }
    }

    pub fn kappa(&self) -> usize {
        self.kappa
    }

    pub fn states(&self) -> usize {
        self.r
    }

    #[inline]
    pub fn weight(&self, m: usize, s: usize) -> f64 {
        self.weights[s * self.kappa + m]
    }

    pub fn column(&self, s: usize) -> &[f64] {
        &self.weights[s * self.kappa..(s + 1) * self.kappa]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.weights
    }

    pub fn permuted(&self, perm: &[usize]) -> Self {
        let weights = perm.iter().flat_map(|&p| self.column(p).to_vec()).collect();
        Self { kappa: self.kappa, r: self.r, weights }
    }

    /// Free coordinates `ω[m, s]` for `m < κ - 1`, state by state.
    pub fn free_coordinates(&self) -> Vec<f64> {
        (0..self.r).flat_map(|s| self.column(s)[..self.kappa - 1].to_vec()).collect()
    }

    /// Multinomial emission table `log ω[bin_t, s]` for a coarsened series.
    pub fn log_table(&self, data: &CoarsenedSeries) -> Result<EmissionLogDensityTable> {
        if data.kappa != self.kappa {
            return Err(Error::invalid("series and bin weights use different partitions"));
        }
        EmissionLogDensityTable::from_fn(data.len(), self.r, |t, s| self.weight(data.bins[t], s).ln())
    }

    /// Piecewise-constant density table `log(ω[m, s] / |I_m|)` for raw
    /// observations, with bin widths measured in transformed space.
    pub fn histogram_log_table(&self, y: &[f64], partition: &DyadicPartition) -> Result<EmissionLogDensityTable> {
        if partition.kappa() != self.kappa {
            return Err(Error::invalid("partition and bin weights disagree on kappa"));
        }
        let ln_width = partition.unit_width().ln();
        EmissionLogDensityTable::from_fn(y.len(), self.r, |t, s| {
            self.weight(partition.bin_of(y[t]), s).ln() - ln_width
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirichletHyper {
    pub r: usize,
    pub kappa: usize,
    /// R×R row-major.
    pub gamma: Vec<f64>,
    /// State-major like [`HistogramEmissions`].
    pub beta: Vec<f64>,
}

impl DirichletHyper {
    pub fn uniform(r: usize, kappa: usize) -> Self {
        Self::constant(r, kappa, 1.0, 1.0)
    }

    pub fn constant(r: usize, kappa: usize, gamma: f64, beta: f64) -> Self {
        Self { r, kappa, gamma: vec![gamma; r * r], beta: vec![beta; kappa * r] }
    }

    pub fn validate(&self) -> Result<()> {
        if self.gamma.len() != self.r * self.r || self.beta.len() != self.r * self.kappa {
            return Err(Error::invalid("Dirichlet hyperparameters have the wrong shape"));
        }
        if self.gamma.iter().chain(&self.beta).any(|a| !(*a > 0.0) || !a.is_finite()) {
            return Err(Error::invalid("Dirichlet hyperparameters must be positive"));
        }
        Ok(())
    }

    pub fn gamma_row(&self, i: usize) -> &[f64] {
        &self.gamma[i * self.r..(i + 1) * self.r]
    }

    pub fn beta_column(&self, s: usize) -> &[f64] {
        &self.beta[s * self.kappa..(s + 1) * self.kappa]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pi1Config {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
}

impl Default for Pi1Config {
    fn default() -> Self {
        Self { iterations: 150_000, burn_in: 10_000, thin: 20, seed: 0 }
    }
}

impl Pi1Config {
    pub fn validate(&self) -> Result<()> {
        if self.iterations <= self.burn_in {
            return Err(Error::invalid("iterations must exceed burn_in"));
        }
        if self.thin == 0 {
            return Err(Error::invalid("thin must be at least 1"));
        }
        Ok(())
    }

    pub fn retained(&self) -> usize {
        (self.iterations - self.burn_in) / self.thin
    }

    pub fn keeps(&self, iteration: usize) -> bool {
        iteration >= self.burn_in && (iteration - self.burn_in + 1).is_multiple_of(self.thin)
    }
}

/// Transition counts `n[i][j]` (R×R row-major) and per-state bin counts
/// `N[m][s]` (state-major).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SufficientCounts {
    pub transitions: Vec<usize>,
    pub bins: Vec<usize>,
}

pub fn sufficient_counts(x: &LatentPath, data: &CoarsenedSeries, r: usize) -> Result<SufficientCounts> {
    if x.len() != data.len() {
        return Err(Error::invalid("latent path and series lengths differ"));
    }
    let kappa = data.kappa;
    let mut transitions = vec![0; r * r];
    let mut bins = vec![0; kappa * r];
    for (t, (&s, &m)) in x.states().iter().zip(&data.bins).enumerate() {
        if s >= r {
            return Err(Error::invalid(format!("latent state {s} out of range")));
        }
        bins[s * kappa + m] += 1;
        if t > 0 {
            transitions[x.states()[t - 1] * r + s] += 1;
        }
    }
    Ok(SufficientCounts { transitions, bins })
}

/// `Q[i, ·] ~ Dir(γ[i, ·] + n[i, ·])` for every row.
pub fn sample_q_given_counts<R: Rng + ?Sized>(
    counts: &[usize],
    hyper: &DirichletHyper,
    rng: &mut R,
) -> TransitionMatrix {
    let r = hyper.r;
    let mut entries = vec![0.0; r * r];
    let mut alpha = vec![0.0; r];
    for i in 0..r {
        for j in 0..r {
            alpha[j] = hyper.gamma[i * r + j] + counts[i * r + j] as f64;
        }
        stats::sample_dirichlet_into(&alpha, rng, &mut entries[i * r..(i + 1) * r]);
    }
    TransitionMatrix::new(r, entries).expect("Dirichlet rows are stochastic")
}

/// `ω[·, s] ~ Dir(β[·, s] + N[·, s])` for every state.
pub fn sample_omega_given_counts<R: Rng + ?Sized>(
    counts: &[usize],
    hyper: &DirichletHyper,
    rng: &mut R,
) -> HistogramEmissions {
    let (r, kappa) = (hyper.r, hyper.kappa);
    let mut weights = vec![0.0; kappa * r];
    let mut alpha = vec![0.0; kappa];
    for s in 0..r {
        for m in 0..kappa {
            alpha[m] = hyper.beta[s * kappa + m] + counts[s * kappa + m] as f64;
        }
        stats::sample_dirichlet_into(&alpha, rng, &mut weights[s * kappa..(s + 1) * kappa]);
    }
    HistogramEmissions { kappa, r, weights }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pi1State {
    pub q: TransitionMatrix,
    pub omega: HistogramEmissions,
    pub path: LatentPath,
}

/// Initial latent path: observations are split into R groups by bin
/// quantiles, and each X_t is drawn from the (slightly smoothed) group
/// frequencies of its bin. Low bins map to low state labels.
pub fn initial_path<R: Rng + ?Sized>(data: &CoarsenedSeries, r: usize, rng: &mut R) -> LatentPath {
    let n = data.len();
    let kappa = data.kappa;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&t| data.bins[t]);
    let mut freq = vec![0.0; kappa * r];
    for (rank, &t) in order.iter().enumerate() {
        let group = (rank * r / n.max(1)).min(r - 1);
        freq[data.bins[t] * r + group] += 1.0;
    }
    let states = data
        .bins
        .iter()
        .map(|&m| {
            let row: Vec<f64> = freq[m * r..(m + 1) * r].iter().map(|c| c + 0.01).collect();
            stats::sample_categorical(&row, rng)
        })
        .collect();
    LatentPath(states)
}

/// One Gibbs sweep: Q and ω given the current path, then a fresh path.
pub fn gibbs_sweep<R: Rng + ?Sized>(
    state: &mut Pi1State,
    data: &CoarsenedSeries,
    hyper: &DirichletHyper,
    rng: &mut R,
) -> Result<()> {
    let r = hyper.r;
    let counts = sufficient_counts(&state.path, data, r)?;
    state.q = sample_q_given_counts(&counts.transitions, hyper, rng);
    state.omega = sample_omega_given_counts(&counts.bins, hyper, rng);
    if !data.is_empty() {
        let table = state.omega.log_table(data)?;
        state.path = hmm::sample_latent_path(&state.q, &StateDistribution::uniform(r), &table, rng)?;
    }
    Ok(())
}

fn ln_dirichlet_prior(x: &[f64], alpha: &[f64]) -> f64 {
    // Treats 0 · ln 0 as 0 so flat priors accept boundary points.
    use statrs::function::gamma::ln_gamma;
    let a0: f64 = alpha.iter().sum();
    let mut out = ln_gamma(a0);
    for (&xi, &ai) in x.iter().zip(alpha) {
        out -= ln_gamma(ai);
        if ai != 1.0 {
            out += (ai - 1.0) * xi.ln();
        }
    }
    out
}

/// Unnormalised log posterior of (Q, ω) given the coarsened series.
pub fn log_posterior(
    q: &TransitionMatrix,
    omega: &HistogramEmissions,
    data: &CoarsenedSeries,
    hyper: &DirichletHyper,
) -> Result<f64> {
    let r = hyper.r;
    let mut lp = if data.is_empty() {
        0.0
    } else {
        hmm::log_likelihood(q, &StateDistribution::uniform(r), &omega.log_table(data)?)?
    };
    for i in 0..r {
        lp += ln_dirichlet_prior(q.row(i), hyper.gamma_row(i));
    }
    for s in 0..r {
        lp += ln_dirichlet_prior(omega.column(s), hyper.beta_column(s));
    }
    Ok(lp)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Draw {
    pub q: TransitionMatrix,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<HistogramEmissions>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreMeta {
    pub seed: u64,
    pub config: Pi1Config,
    pub partition: Option<DyadicPartition>,
    pub relabel_reference_index: Option<usize>,
}

/// Ordered posterior draws with their log posteriors and the relabelling
/// permutation applied to each draw.
#[derive(Debug, Clone, PartialEq)]
pub struct DrawStore {
    pub r: usize,
    pub draws: Vec<Draw>,
    /// Sweep index (0-based) that produced each draw.
    pub iterations: Vec<usize>,
    pub log_posteriors: Vec<f64>,
    pub relabeling: Vec<Vec<usize>>,
    pub meta: StoreMeta,
}

impl DrawStore {
    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    pub fn kappa(&self) -> Option<usize> {
        self.draws.first().and_then(|d| d.omega.as_ref()).map(HistogramEmissions::kappa)
    }

    /// Draws of entry (i, j) of Q.
    pub fn q_entry(&self, i: usize, j: usize) -> Vec<f64> {
        self.draws.iter().map(|d| d.q.get(i, j)).collect()
    }

    /// Draws of the free coordinates of Q, one vector per draw.
    pub fn q_free(&self) -> Vec<Vec<f64>> {
        self.draws.iter().map(|d| d.q.free_coordinates()).collect()
    }

    pub fn q_draws(&self) -> Vec<TransitionMatrix> {
        self.draws.iter().map(|d| d.q.clone()).collect()
    }
}

/// Run the histogram-prior Gibbs sampler and return relabelled draws.
pub fn run_chain(
    data: &CoarsenedSeries,
    hyper: &DirichletHyper,
    config: &Pi1Config,
    r: usize,
    partition: Option<&DyadicPartition>,
) -> Result<DrawStore> {
    let store = run_chain_raw(data, hyper, config, r, partition)?;
    Ok(relabel_draws(&store))
}

/// As [`run_chain`] without the relabelling pass.
pub fn run_chain_raw(
    data: &CoarsenedSeries,
    hyper: &DirichletHyper,
    config: &Pi1Config,
    r: usize,
    partition: Option<&DyadicPartition>,
) -> Result<DrawStore> {
    config.validate()?;
    hyper.validate()?;
    if hyper.r != r || hyper.kappa != data.kappa {
        return Err(Error::invalid("hyperparameter shape does not match R and kappa"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut state = Pi1State {
        q: TransitionMatrix::uniform(r),
        omega: HistogramEmissions::uniform(data.kappa, r),
        path: initial_path(data, r, &mut rng),
    };
    let capacity = config.retained();
    let mut draws = Vec::with_capacity(capacity);
    let mut iterations = Vec::with_capacity(capacity);
    let mut log_posteriors = Vec::with_capacity(capacity);
    for it in 0..config.iterations {
        gibbs_sweep(&mut state, data, hyper, &mut rng)?;
        if config.keeps(it) {
            log_posteriors.push(log_posterior(&state.q, &state.omega, data, hyper)?);
            draws.push(Draw { q: state.q.clone(), omega: Some(state.omega.clone()) });
            iterations.push(it);
        }
    }
    let identity: Vec<usize> = (0..r).collect();
    Ok(DrawStore {
        r,
        relabeling: vec![identity; draws.len()],
        draws,
        iterations,
        log_posteriors,
        meta: StoreMeta {
            seed: config.seed,
            config: *config,
            partition: partition.cloned(),
            relabel_reference_index: None,
        },
    })
}

fn squared_distance(a: &Draw, b: &Draw) -> f64 {
    let mut d: f64 = a.q.entries().iter().zip(b.q.entries()).map(|(x, y)| (x - y).powi(2)).sum();
    if let (Some(wa), Some(wb)) = (&a.omega, &b.omega) {
        d += wa.as_slice().iter().zip(wb.as_slice()).map(|(x, y)| (x - y).powi(2)).sum::<f64>();
    }
    d
}

pub fn permute_draw(draw: &Draw, perm: &[usize]) -> Draw {
    Draw { q: draw.q.permuted(perm), omega: draw.omega.as_ref().map(|w| w.permuted(perm)) }
}

/// Permutation (lexicographically first among ties) that brings `draw`
/// closest to `reference` in summed squared distance over Q and ω entries.
pub fn best_permutation(draw: &Draw, reference: &Draw, perms: &[Vec<usize>]) -> Vec<usize> {
    let mut best = perms[0].clone();
    let mut best_d = f64::INFINITY;
    for p in perms {
        let d = squared_distance(&permute_draw(draw, p), reference);
        if d < best_d {
            best_d = d;
            best = p.clone();
        }
    }
    best
}

/// Relabel every draw against the maximum-a-posteriori draw.
pub fn relabel_draws(store: &DrawStore) -> DrawStore {
    let mut out = store.clone();
    if store.is_empty() {
        return out;
    }
    let reference_index = store
        .log_posteriors
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, &lp)| if lp > acc.1 { (i, lp) } else { acc })
        .0;
    let perms = stats::permutations(store.r);
    let reference = store.draws[reference_index].clone();
    for (k, draw) in store.draws.iter().enumerate() {
        let tau = best_permutation(draw, &reference, &perms);
        out.draws[k] = permute_draw(draw, &tau);
        let prev = &store.relabeling[k];
        out.relabeling[k] = tau.iter().map(|&t| prev[t]).collect();
    }
    out.meta.relabel_reference_index = Some(reference_index);
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QSummary {
    pub alpha: f64,
    /// R×R row-major posterior means.
    pub mean: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

pub fn summarize(store: &DrawStore, alpha: f64) -> Result<QSummary> {
    if store.is_empty() {
        return Err(Error::invalid("cannot summarise an empty draw store"));
    }
    let r = store.r;
    let mut mean = Vec::with_capacity(r * r);
    let mut lower = Vec::with_capacity(r * r);
    let mut upper = Vec::with_capacity(r * r);
    for i in 0..r {
        for j in 0..r {
            let xs = store.q_entry(i, j);
            mean.push(stats::mean(&xs));
            let (lo, hi) = stats::equal_tailed_interval(&xs, alpha);
            lower.push(lo);
            upper.push(hi);
        }
    }
    Ok(QSummary { alpha, mean, lower, upper })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeuristicReport {
    pub reference_kappa: usize,
    pub recommended_kappa: usize,
    /// (kappa, accepted) for every supplied store, in increasing kappa.
    pub checks: Vec<(usize, bool)>,
}

/// Pick the largest bin count whose credible sets still comfortably contain
/// the posterior mean of a coarse reference fit.
///
/// A bin count `κ` passes when, for every `α` in `alphas` and every entry of
/// Q, the reference mean lies strictly inside the central `1 − 2α` interval of
/// the `κ` draws. The recommendation is the largest `κ` such that it and every
/// finer-than-reference bin count below it pass.
pub fn bin_tuning_heuristic(
    stores: &[(usize, &DrawStore)],
    reference_kappa: usize,
    alphas: &[f64],
) -> Result<HeuristicReport> {
    let mut sorted: Vec<(usize, &DrawStore)> = stores.to_vec();
    sorted.sort_by_key(|(k, _)| *k);
    sorted.dedup_by_key(|(k, _)| *k);
    if sorted.len() < 2 {
        return Err(Error::InsufficientStores(sorted.len()));
    }
    let reference = sorted
        .iter()
        .find(|(k, _)| *k == reference_kappa)
        .ok_or_else(|| Error::invalid(format!("no store for reference kappa {reference_kappa}")))?
        .1;
    let q0 = summarize(reference, 0.1)?.mean;
    let mut checks = Vec::with_capacity(sorted.len());
    let mut recommended = reference_kappa;
    let mut still_ok = true;
    for (kappa, store) in &sorted {
        let pass = if *kappa <= reference_kappa {
            true
        } else {
            alphas.iter().all(|&a| {
                summarize(store, 2.0 * a)
                    .map(|s| (0..q0.len()).all(|e| s.lower[e] < q0[e] && q0[e] < s.upper[e]))
                    .unwrap_or(false)
            })
        };
        checks.push((*kappa, pass));
        if *kappa > reference_kappa {
            still_ok &= pass;
            if still_ok {
                recommended = *kappa;
            }
        }
    }
    Ok(HeuristicReport { reference_kappa, recommended_kappa: recommended, checks })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(kappa: usize, bins: &[usize]) -> CoarsenedSeries {
        CoarsenedSeries::new(kappa, bins.to_vec()).unwrap()
    }

    #[test]
    fn sufficient_count_examples() {
        let c = sufficient_counts(&LatentPath(vec![0, 0, 1]), &series(2, &[0, 1, 1]), 2).unwrap();
        assert_eq!(c.transitions, vec![1, 1, 0, 0]);
        // N[m][s]: state 0 saw bins {0, 1}, state 1 saw bin 1.
        assert_eq!(c.bins, vec![1, 1, 0, 1]);

        let c = sufficient_counts(&LatentPath(vec![1; 6]), &series(3, &[0, 1, 2, 0, 1, 2]), 2).unwrap();
        assert_eq!(c.transitions, vec![0, 0, 0, 5]);
        assert_eq!(c.bins.iter().sum::<usize>(), 6);

        let c = sufficient_counts(&LatentPath(vec![0]), &series(2, &[1]), 2).unwrap();
        assert!(c.transitions.iter().all(|&x| x == 0));
        assert!(sufficient_counts(&LatentPath(vec![0, 1]), &series(2, &[1]), 2).is_err());
    }

    #[test]
    fn q_conditional_is_the_dirichlet_update() {
        // γ = 1 and counts (3, 0) in row 0: Q[0, ·] ~ Dir(4, 1).
        let hyper = DirichletHyper::uniform(2, 2);
        let counts = [3, 0, 1, 1];
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let draws: Vec<f64> = (0..n).map(|_| sample_q_given_counts(&counts, &hyper, &mut rng).get(0, 0)).collect();
        let m = stats::mean(&draws);
        let v = stats::variance(&draws);
        let (em, ev) = (0.8, 0.8 * 0.2 / 6.0);
        assert!((m - em).abs() < 3.0 * (ev / n as f64).sqrt());
        // Var of (x - m)^2 for a Beta(4, 1) is below 0.01; 3 SE band.
        assert!((v - ev).abs() < 3.0 * (0.01 / n as f64).sqrt());
    }

    #[test]
    fn empty_series_sweeps_draw_from_the_prior() {
        let data = series(3, &[]);
        let hyper = DirichletHyper::constant(2, 3, 2.0, 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut state = Pi1State {
            q: TransitionMatrix::uniform(2),
            omega: HistogramEmissions::uniform(3, 2),
            path: LatentPath(vec![]),
        };
        let n = 50_000;
        let mut q00 = Vec::with_capacity(n);
        let mut w0 = Vec::with_capacity(n);
        for _ in 0..n {
            gibbs_sweep(&mut state, &data, &hyper, &mut rng).unwrap();
            q00.push(state.q.get(0, 0));
            w0.push(state.omega.weight(0, 1));
        }
        // Dir(2, 2) and Dir(0.5, 0.5, 0.5) marginal means.
        assert!((stats::mean(&q00) - 0.5).abs() < 3.0 * (0.05 / n as f64).sqrt());
        assert!((stats::mean(&w0) - 1.0 / 3.0).abs() < 3.0 * ((2.0 / 9.0) / 2.5 / n as f64).sqrt());
    }

    fn toy_store() -> (CoarsenedSeries, DrawStore) {
        let data = series(4, &[0, 0, 1, 3, 3, 2, 3, 0, 0, 1, 3, 3, 3, 2, 0, 0]);
        let cfg = Pi1Config { iterations: 400, burn_in: 100, thin: 3, seed: 9 };
        let store = run_chain(&data, &DirichletHyper::uniform(2, 4), &cfg, 2, None).unwrap();
        (data, store)
    }

    #[test]
    fn run_chain_retains_the_expected_draws() {
        assert_eq!(Pi1Config::default().retained(), 7000);
        let (_, store) = toy_store();
        assert_eq!(store.len(), 100);
        assert_eq!(store.relabeling.len(), store.len());
        assert!(store.meta.relabel_reference_index.is_some());
        for d in &store.draws {
            for i in 0..2 {
                assert!((d.q.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
        let data = series(2, &[0, 1, 1, 0]);
        let cfg = Pi1Config { iterations: 7, burn_in: 4, thin: 3, seed: 1 };
        let one = run_chain(&data, &DirichletHyper::uniform(2, 2), &cfg, 2, None).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one.iterations, vec![6]);
    }

    #[test]
    fn fixed_seed_is_deterministic() {
        let (_, a) = toy_store();
        let (_, b) = toy_store();
        assert_eq!(a, b);
    }

    #[test]
    fn config_validation() {
        let bad = Pi1Config { iterations: 10, burn_in: 10, thin: 1, seed: 0 };
        assert!(bad.validate().is_err());
        let bad = Pi1Config { iterations: 10, burn_in: 0, thin: 0, seed: 0 };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn relabelling_preserves_log_posterior_and_multiset() {
        let (data, store) = toy_store();
        let hyper = DirichletHyper::uniform(2, 4);
        for (k, d) in store.draws.iter().enumerate() {
            let lp = log_posterior(&d.q, d.omega.as_ref().unwrap(), &data, &hyper).unwrap();
            assert!((lp - store.log_posteriors[k]).abs() < 1e-10);
            let swapped = permute_draw(d, &[1, 0]);
            let lp2 = log_posterior(&swapped.q, swapped.omega.as_ref().unwrap(), &data, &hyper).unwrap();
            assert!((lp - lp2).abs() < 1e-10);
        }
        let again = relabel_draws(&store);
        assert!(again.relabeling.iter().zip(&store.relabeling).all(|(a, b)| a == b));
        assert_eq!(again.draws, store.draws);
    }

    #[test]
    fn relabel_examples() {
        let q = TransitionMatrix::from_rows(&[vec![0.9, 0.1], vec![0.3, 0.7]]).unwrap();
        let omega = HistogramEmissions::from_columns(&[vec![0.8, 0.2], vec![0.1, 0.9]]).unwrap();
        let mut draws = Vec::new();
        let mut lps = Vec::new();
        for k in 0..40 {
            let jitter = 0.001 * (k as f64 % 7.0);
            let qk = TransitionMatrix::from_rows(&[vec![0.9 - jitter, 0.1 + jitter], vec![0.3, 0.7]]).unwrap();
            let d = Draw { q: qk, omega: Some(omega.clone()) };
            draws.push(if k % 2 == 1 { permute_draw(&d, &[1, 0]) } else { d });
            lps.push(-(k as f64));
        }
        let store = DrawStore {
            r: 2,
            iterations: (0..40).collect(),
            relabeling: vec![vec![0, 1]; 40],
            draws,
            log_posteriors: lps,
            meta: StoreMeta { seed: 0, config: Pi1Config::default(), partition: None, relabel_reference_index: None },
        };
        let out = relabel_draws(&store);
        assert_eq!(out.meta.relabel_reference_index, Some(0));
        for (k, p) in out.relabeling.iter().enumerate() {
            assert_eq!(p, &if k % 2 == 1 { vec![1, 0] } else { vec![0, 1] });
        }
        let even: Vec<f64> = out.draws.iter().step_by(2).map(|d| d.q.get(0, 0)).collect();
        let odd: Vec<f64> = out.draws.iter().skip(1).step_by(2).map(|d| d.q.get(0, 0)).collect();
        assert!((stats::mean(&even) - stats::mean(&odd)).abs() < 0.002);
        assert!((out.draws[1].q.get(1, 1) - q.get(1, 1)).abs() < 1e-12);

        let single = DrawStore { draws: vec![store.draws[0].clone()], ..store.clone() };
        let single = DrawStore {
            iterations: vec![0],
            relabeling: vec![vec![0, 1]],
            log_posteriors: vec![0.0],
            ..single
        };
        assert_eq!(relabel_draws(&single).relabeling, vec![vec![0, 1]]);
    }

    fn store_from_q(values: &[f64]) -> DrawStore {
        let draws: Vec<Draw> = values
            .iter()
            .map(|&v| Draw {
                q: TransitionMatrix::from_rows(&[vec![v, 1.0 - v], vec![1.0 - v, v]]).unwrap(),
                omega: None,
            })
            .collect();
        let n = draws.len();
        DrawStore {
            r: 2,
            draws,
            iterations: (0..n).collect(),
            log_posteriors: vec![0.0; n],
            relabeling: vec![vec![0, 1]; n],
            meta: StoreMeta { seed: 0, config: Pi1Config::default(), partition: None, relabel_reference_index: None },
        }
    }

    #[test]
    fn summarize_examples() {
        let s = summarize(&store_from_q(&[0.7; 10]), 0.1).unwrap();
        assert!((s.mean[0] - 0.7).abs() < 1e-15);
        assert_eq!(s.lower[0], s.upper[0]);
        let s = summarize(&store_from_q(&[0.1, 0.5, 0.9]), 1.0).unwrap();
        assert_eq!((s.lower[0], s.upper[0]), (0.5, 0.5));
        assert!(summarize(&store_from_q(&[]), 0.1).is_err());
    }

    #[test]
    fn heuristic_examples() {
        let tight = store_from_q(&[0.69, 0.695, 0.7, 0.705, 0.71]);
        let stores = [(2, &tight), (4, &tight), (8, &tight)];
        let rep = bin_tuning_heuristic(&stores, 4, &[0.05, 0.1]).unwrap();
        assert_eq!(rep.recommended_kappa, 8);

        let biased = store_from_q(&[0.80, 0.81, 0.82, 0.83, 0.84]);
        let stores = [(2, &tight), (4, &tight), (8, &tight), (16, &biased), (32, &tight)];
        let rep = bin_tuning_heuristic(&stores, 4, &[0.05, 0.1]).unwrap();
        assert_eq!(rep.recommended_kappa, 8);
        assert!(rep.checks.contains(&(16, false)));

        assert!(matches!(
            bin_tuning_heuristic(&[(4, &tight)], 4, &[0.05]),
            Err(Error::InsufficientStores(1))
        ));
    }

    #[test]
    fn initial_path_prefers_low_states_for_low_bins() {
        let bins: Vec<usize> = (0..200).map(|t| t % 8).collect();
        let data = series(8, &bins);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let path = initial_path(&data, 2, &mut rng);
        let low = path.states().iter().zip(&bins).filter(|(_, &b)| b < 4).filter(|(&s, _)| s == 0).count();
        assert!(low > 90);
    }
}
