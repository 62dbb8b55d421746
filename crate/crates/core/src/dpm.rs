//! Emission densities under truncated Dirichlet-process mixtures of normals.
//!
//! Each state carries `S_max` normal components sharing one variance:
//! `f_r(y) = Σ_j W[r, j] φ(y; μ[r, j], v[r])` with priors
//! `μ ~ N(μ_c, σ_c²)`, `v ~ InvGamma(α_σ, β_σ)` and
//! `W[r, ·] ~ Dir(M0/S_max, …, M0/S_max)`.
//!
//! The cut posterior fixes the transition matrix at each Π₁ draw and runs a
//! short interior Gibbs chain for the emissions (nested MCMC). The fully
//! Bayesian comparison resamples Q inside the same sweep instead.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::histogram::{self, DirichletHyper, Draw, DrawStore, Pi1Config, StoreMeta};
use crate::hmm::{self, EmissionLogDensityTable, LatentPath, StateDistribution, TransitionMatrix};
use crate::stats::{self, LN_SQRT_2PI};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DpmHyper {
    #[serde(rename = "M0")]
    pub m0: f64,
    pub mu_c: f64,
    pub sigma_c2: f64,
    pub alpha_sigma: f64,
    pub beta_sigma: f64,
    #[serde(rename = "S_max")]
    pub s_max: usize,
}

impl DpmHyper {
    /// Defaults with the truncation `⌊√n⌋`.
    pub fn for_length(n: usize) -> Self {
        Self {
            m0: 1.0,
            mu_c: 0.0,
            sigma_c2: 1.0,
            alpha_sigma: 1.0,
            beta_sigma: 1.0,
            s_max: default_truncation(n),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [self.m0, self.sigma_c2, self.alpha_sigma, self.beta_sigma];
        if positive.iter().any(|x| !(*x > 0.0) || !x.is_finite()) || !self.mu_c.is_finite() {
            return Err(Error::invalid("DPM hyperparameters must be finite and positive"));
        }
        if self.s_max == 0 {
            return Err(Error::invalid("S_max must be at least 1"));
        }
        Ok(())
    }
}

pub fn default_truncation(n: usize) -> usize {
    ((n as f64).sqrt().floor() as usize).max(1)
}

/// Mixture parameters for every state, stored state-major:
/// `mu[r * S_max + j]`, `w[r * S_max + j]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureParams {
    pub r: usize,
    pub s_max: usize,
    pub mu: Vec<f64>,
    pub v: Vec<f64>,
    pub w: Vec<f64>,
}

impl MixtureParams {
    pub fn new(r: usize, s_max: usize, mu: Vec<f64>, v: Vec<f64>, w: Vec<f64>) -> Result<Self> {
        if r == 0 || s_max == 0 || mu.len() != r * s_max || w.len() != r * s_max || v.len() != r {
            return Err(Error::invalid("mixture parameter shapes do not match R and S_max"));
        }
        if v.iter().any(|x| !(*x > 0.0) || !x.is_finite()) || mu.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("variances must be positive and locations finite"));
        }
        for row in w.chunks(s_max) {
            let s: f64 = row.iter().sum();
            if row.iter().any(|x| *x < 0.0) || (s - 1.0).abs() > 1e-9 {
                return Err(Error::invalid("mixture weights must lie on the simplex"));
            }
        }
        Ok(Self { r, s_max, mu, v, w })
    }

    #[inline]
    pub fn location(&self, r: usize, j: usize) -> f64 {
        self.mu[r * self.s_max + j]
    }

    #[inline]
    pub fn weight(&self, r: usize, j: usize) -> f64 {
        self.w[r * self.s_max + j]
    }

    pub fn ln_pdf(&self, r: usize, y: f64) -> f64 {
        let v = self.v[r];
        let base = -LN_SQRT_2PI - 0.5 * v.ln();
        let terms: Vec<f64> = (0..self.s_max)
            .map(|j| self.weight(r, j).ln() + base - 0.5 * (y - self.location(r, j)).powi(2) / v)
            .collect();
        stats::log_sum_exp(&terms)
    }

    pub fn pdf(&self, r: usize, y: f64) -> f64 {
        let v = self.v[r];
        let norm = 1.0 / (2.0 * std::f64::consts::PI * v).sqrt();
        (0..self.s_max)
            .map(|j| self.weight(r, j) * norm * (-0.5 * (y - self.location(r, j)).powi(2) / v).exp())
            .sum()
    }

    pub fn mean(&self, r: usize) -> f64 {
        (0..self.s_max).map(|j| self.weight(r, j) * self.location(r, j)).sum()
    }

    pub fn sd(&self, r: usize) -> f64 {
        let m = self.mean(r);
        let second: f64 = (0..self.s_max).map(|j| self.weight(r, j) * self.location(r, j).powi(2)).sum();
        (self.v[r] + second - m * m).max(0.0).sqrt()
    }

    /// State `i` of the result is state `perm[i]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let s = self.s_max;
        let mut out = self.clone();
        for (i, &p) in perm.iter().enumerate() {
            out.mu[i * s..(i + 1) * s].copy_from_slice(&self.mu[p * s..(p + 1) * s]);
            out.w[i * s..(i + 1) * s].copy_from_slice(&self.w[p * s..(p + 1) * s]);
            out.v[i] = self.v[p];
        }
        out
    }

    /// `log f_r(y_t)` for every observation.
    pub fn log_table(&self, y: &[f64]) -> Result<EmissionLogDensityTable> {
        let comps = ComponentTable::new(self, y);
        comps.mixture_table()
    }
}

/// Per-state density values on `grid`.
pub fn density_eval(params: &MixtureParams, grid: &[f64]) -> Vec<Vec<f64>> {
    (0..params.r).map(|r| grid.iter().map(|&y| params.pdf(r, y)).collect()).collect()
}

/// `ln W[r, j] + ln φ(y_t; μ[r, j], v[r])` for all t, r, j.
struct ComponentTable {
    n: usize,
    r: usize,
    s: usize,
    values: Vec<f64>,
}

impl ComponentTable {
    fn new(p: &MixtureParams, y: &[f64]) -> Self {
        let (r, s) = (p.r, p.s_max);
        let mut values = vec![0.0; y.len() * r * s];
        let ln_w: Vec<f64> = p.w.iter().map(|w| w.ln()).collect();
        for st in 0..r {
            let v = p.v[st];
            let base = -LN_SQRT_2PI - 0.5 * v.ln();
            let half_prec = 0.5 / v;
            for (t, &yt) in y.iter().enumerate() {
                let out = &mut values[(t * r + st) * s..(t * r + st + 1) * s];
                for j in 0..s {
                    let d = yt - p.mu[st * s + j];
                    out[j] = ln_w[st * s + j] + base - half_prec * d * d;
                }
            }
        }
        Self { n: y.len(), r, s, values }
    }

    #[inline]
    fn row(&self, t: usize, st: usize) -> &[f64] {
        &self.values[(t * self.r + st) * self.s..(t * self.r + st + 1) * self.s]
    }

    fn mixture_table(&self) -> Result<EmissionLogDensityTable> {
        EmissionLogDensityTable::from_fn(self.n, self.r, |t, st| stats::log_sum_exp(self.row(t, st)))
    }

    /// Mixture table, leaving each row as `exp(value - row max)`: unnormalised
    /// component probabilities given the state.
    fn exponentiate(&mut self) -> Result<EmissionLogDensityTable> {
        let mut out = Vec::with_capacity(self.n * self.r);
        for row in self.values.chunks_mut(self.s) {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                sum += *v;
            }
            out.push(max + sum.ln());
        }
        EmissionLogDensityTable::new(self.n, self.r, out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DpmEmissionState {
    pub params: MixtureParams,
    /// Component of each observation within its state.
    pub s: Vec<usize>,
    pub x: LatentPath,
}

impl DpmEmissionState {
    /// Parameters from the prior and a given latent path; allocations uniform.
    pub fn from_prior<G: Rng + ?Sized>(r: usize, x: LatentPath, hyper: &DpmHyper, rng: &mut G) -> Result<Self> {
        hyper.validate()?;
        let s_max = hyper.s_max;
        let sd = hyper.sigma_c2.sqrt();
        let mu = (0..r * s_max).map(|_| stats::sample_normal(hyper.mu_c, sd, rng)).collect();
        let v = (0..r).map(|_| stats::sample_inv_gamma(hyper.alpha_sigma, hyper.beta_sigma, rng)).collect();
        let alpha = vec![hyper.m0 / s_max as f64; s_max];
        let w = (0..r).flat_map(|_| stats::sample_dirichlet(&alpha, rng)).collect();
        let s = (0..x.len()).map(|_| rng.random_range(0..s_max)).collect();
        Ok(Self { params: MixtureParams::new(r, s_max, mu, v, w)?, s, x })
    }
}

fn check_state(state: &DpmEmissionState, y: &[f64], hyper: &DpmHyper) -> Result<()> {
    hyper.validate()?;
    if state.params.s_max != hyper.s_max {
        return Err(Error::invalid("state truncation differs from S_max in the hyperparameters"));
    }
    if state.s.len() != y.len() || state.x.len() != y.len() {
        return Err(Error::invalid("allocations and latent path must match the data length"));
    }
    if y.is_empty() {
        return Err(Error::invalid("need at least one observation"));
    }
    Ok(())
}

/// Draw μ, v and W given the current allocations.
fn update_parameters<G: Rng + ?Sized>(state: &mut DpmEmissionState, y: &[f64], hyper: &DpmHyper, rng: &mut G) {
    let (r, s) = (state.params.r, state.params.s_max);
    let mut counts = vec![0usize; r * s];
    let mut sums = vec![0.0; r * s];
    for (t, &yt) in y.iter().enumerate() {
        let cell = state.x.0[t] * s + state.s[t];
        counts[cell] += 1;
        sums[cell] += yt;
    }
    let prior_prec = 1.0 / hyper.sigma_c2;
    for st in 0..r {
        let v = state.params.v[st];
        for j in 0..s {
            let cell = st * s + j;
            let prec = prior_prec + counts[cell] as f64 / v;
            let mean = (hyper.mu_c * prior_prec + sums[cell] / v) / prec;
            state.params.mu[cell] = stats::sample_normal(mean, prec.recip().sqrt(), rng);
        }
    }
    let mut n_state = vec![0usize; r];
    let mut ss = vec![0.0; r];
    for (t, &yt) in y.iter().enumerate() {
        let st = state.x.0[t];
        n_state[st] += 1;
        ss[st] += (yt - state.params.mu[st * s + state.s[t]]).powi(2);
    }
    for st in 0..r {
        state.params.v[st] = stats::sample_inv_gamma(
            hyper.alpha_sigma + 0.5 * n_state[st] as f64,
            hyper.beta_sigma + 0.5 * ss[st],
            rng,
        );
    }
    let base = hyper.m0 / s as f64;
    let mut alpha = vec![0.0; s];
    for st in 0..r {
        for j in 0..s {
            alpha[j] = base + counts[st * s + j] as f64;
        }
        stats::sample_dirichlet_into(&alpha, rng, &mut state.params.w[st * s..(st + 1) * s]);
    }
}

/// Joint draw of (x, s): forward–backward on the R mixture densities, then
/// each allocation from its conditional given the sampled state.
fn update_allocations<G: Rng + ?Sized>(
    state: &mut DpmEmissionState,
    q: &TransitionMatrix,
    p0: &StateDistribution,
    y: &[f64],
    rng: &mut G,
) -> Result<()> {
    let mut comps = ComponentTable::new(&state.params, y);
    let table = comps.exponentiate()?;
    state.x = hmm::sample_latent_path(q, p0, &table, rng)?;
    for t in 0..y.len() {
        state.s[t] = stats::sample_categorical(comps.row(t, state.x.0[t]), rng);
    }
    Ok(())
}

/// One interior Gibbs sweep at fixed Q: locations, variances, weights, then
/// (s, x) jointly. The hidden chain starts from the stationary law of Q.
pub fn interior_sweep<G: Rng + ?Sized>(
    state: &mut DpmEmissionState,
    q: &TransitionMatrix,
    y: &[f64],
    hyper: &DpmHyper,
    rng: &mut G,
) -> Result<()> {
    check_state(state, y, hyper)?;
    if q.states() != state.params.r {
        return Err(Error::invalid("transition matrix and emission state disagree on R"));
    }
    let p0 = hmm::stationary_distribution(q)?;
    update_parameters(state, y, hyper, rng);
    update_allocations(state, q, &p0, y, rng)
}

/// Hidden chain over composite states `(r, j)` indexed `r * S_max + j`:
/// transition `Q[r, r'] W[r', j']`, emission `φ(y; μ[r, j], v[r])`.
/// Quadratic in `R · S_max`; used to check the factorised sampler.
pub fn composite_model(
    params: &MixtureParams,
    q: &TransitionMatrix,
    p0: &StateDistribution,
    y: &[f64],
) -> Result<(TransitionMatrix, StateDistribution, EmissionLogDensityTable)> {
    let (r, s) = (params.r, params.s_max);
    let big = r * s;
    let mut entries = vec![0.0; big * big];
    for a in 0..big {
        for b in 0..big {
            entries[a * big + b] = q.get(a / s, b / s) * params.w[b];
        }
    }
    let init = (0..big).map(|b| p0.probs()[b / s] * params.w[b]).collect();
    let table = EmissionLogDensityTable::from_fn(y.len(), big, |t, b| {
        let st = b / s;
        stats::ln_normal_pdf(y[t], params.mu[b], params.v[st])
    })?;
    Ok((TransitionMatrix::new(big, entries)?, StateDistribution::new(init)?, table))
}

/// Factorised smoothing marginals `P(x_t = r, s_t = j | y)` laid out like the
/// composite states.
pub fn factorized_joint_smoothing(
    params: &MixtureParams,
    q: &TransitionMatrix,
    p0: &StateDistribution,
    y: &[f64],
) -> Result<(f64, Vec<f64>)> {
    let comps = ComponentTable::new(params, y);
    let table = comps.mixture_table()?;
    let filter = hmm::forward_filter(q, p0, &table)?;
    let smooth = hmm::smoothing_from_filter(q, &table, &filter);
    let (r, s) = (params.r, params.s_max);
    let mut out = vec![0.0; y.len() * r * s];
    for t in 0..y.len() {
        for st in 0..r {
            let row = comps.row(t, st);
            let lse = table.row(t)[st];
            for j in 0..s {
                out[(t * r + st) * s + j] = smooth.row(t)[st] * (row[j] - lse).exp();
            }
        }
    }
    Ok((filter.log_likelihood, out))
}

/// Latent path used to start the very first interior chain. Mixture
/// parameters always start from the prior.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NestedInit {
    /// Markov chain under the first Q draw, started at its stationary law.
    Prior,
    /// FFBS under the first Π₁ draw's histogram weights when the store has
    /// them, so emission labels start aligned with the labels of Q.
    #[default]
    Histogram,
}

/// Interior-chain settings for the nested sampler.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NestedConfig {
    #[serde(rename = "C")]
    pub c: usize,
    pub seed: u64,
    pub grid_points: usize,
    #[serde(default)]
    pub init: NestedInit,
    /// Explicit evaluation grid; the default spans the data ± 3 sd.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<Vec<f64>>,
}

impl Default for NestedConfig {
    fn default() -> Self {
        Self { c: 10, seed: 0, grid_points: 512, init: NestedInit::default(), grid: None }
    }
}

pub fn default_grid(y: &[f64], points: usize) -> Vec<f64> {
    let lo = y.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = y.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sd = stats::std_dev(y);
    stats::linspace(lo - 3.0 * sd, hi + 3.0 * sd, points.max(2))
}

/// Density values of many draws on one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityGridDraws {
    pub grid: Vec<f64>,
    pub r: usize,
    /// `values[(d * R + r) * G + g]`.
    pub values: Vec<f64>,
}

impl DensityGridDraws {
    pub fn new(grid: Vec<f64>, r: usize) -> Self {
        Self { grid, r, values: Vec::new() }
    }

    pub fn from_params(grid: Vec<f64>, draws: &[MixtureParams]) -> Self {
        let r = draws.first().map_or(1, |d| d.r);
        let mut out = Self::new(grid, r);
        for d in draws {
            out.push(d);
        }
        out
    }

    pub fn push(&mut self, params: &MixtureParams) {
        for curve in density_eval(params, &self.grid) {
            self.values.extend(curve);
        }
    }

    pub fn len(&self) -> usize {
        self.values.len() / (self.r * self.grid.len()).max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn curve(&self, d: usize, r: usize) -> &[f64] {
        let g = self.grid.len();
        &self.values[(d * self.r + r) * g..(d * self.r + r + 1) * g]
    }

    /// Values at grid point `g` of state `r`, one per draw.
    pub fn column(&self, r: usize, g: usize) -> Vec<f64> {
        (0..self.len()).map(|d| self.curve(d, r)[g]).collect()
    }

    pub fn mean_curves(&self) -> Vec<Vec<f64>> {
        let g = self.grid.len();
        let m = self.len() as f64;
        (0..self.r)
            .map(|r| {
                let mut acc = vec![0.0; g];
                for d in 0..self.len() {
                    for (a, v) in acc.iter_mut().zip(self.curve(d, r)) {
                        *a += v / m;
                    }
                }
                acc
            })
            .collect()
    }

    /// Batch-means Monte Carlo standard error of the posterior-mean curve.
    pub fn mean_mc_se(&self, batches: usize) -> Vec<Vec<f64>> {
        (0..self.r)
            .map(|r| (0..self.grid.len()).map(|g| stats::batch_means_se(&self.column(r, g), batches)).collect())
            .collect()
    }

    /// Trapezoid integral of every stored curve.
    pub fn integrals(&self) -> Vec<f64> {
        (0..self.len())
            .flat_map(|d| (0..self.r).map(move |r| (d, r)))
            .map(|(d, r)| stats::trapezoid(&self.grid, self.curve(d, r)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bands {
    pub level: f64,
    pub grid: Vec<f64>,
    /// One curve per state.
    pub mean: Vec<Vec<f64>>,
    pub lower: Vec<Vec<f64>>,
    pub upper: Vec<Vec<f64>>,
}

impl Bands {
    /// Fraction of grid points in `[lo, hi]` where every state's band holds
    /// `truth`, given per state.
    pub fn coverage(&self, truth: &[Vec<f64>], lo: f64, hi: f64) -> Vec<f64> {
        (0..self.mean.len())
            .map(|r| {
                let idx: Vec<usize> = (0..self.grid.len()).filter(|&g| self.grid[g] >= lo && self.grid[g] <= hi).collect();
                let hit = idx
                    .iter()
                    .filter(|&&g| self.lower[r][g] <= truth[r][g] && truth[r][g] <= self.upper[r][g])
                    .count();
                hit as f64 / idx.len().max(1) as f64
            })
            .collect()
    }
}

/// Pointwise posterior means and equal-tailed `level` bands.
pub fn pointwise_bands(draws: &DensityGridDraws, level: f64) -> Result<Bands> {
    if draws.len() < 2 {
        return Err(Error::invalid("pointwise bands need at least two draws"));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::invalid("band level must lie in (0, 1)"));
    }
    let alpha = 1.0 - level;
    let g = draws.grid.len();
    let mut lower = vec![vec![0.0; g]; draws.r];
    let mut upper = vec![vec![0.0; g]; draws.r];
    for r in 0..draws.r {
        for k in 0..g {
            let (lo, hi) = stats::equal_tailed_interval(&draws.column(r, k), alpha);
            lower[r][k] = lo;
            upper[r][k] = hi;
        }
    }
    Ok(Bands { level, grid: draws.grid.clone(), mean: draws.mean_curves(), lower, upper })
}

#[derive(Debug, Clone, PartialEq)]
pub struct NestedOutput {
    /// Emission parameters aligned 1:1 with the exterior Q draws.
    pub draws: Vec<MixtureParams>,
    pub densities: DensityGridDraws,
}

fn initial_latent_path<G: Rng + ?Sized>(
    store: &DrawStore,
    y: &[f64],
    init: NestedInit,
    rng: &mut G,
) -> Result<LatentPath> {
    let first = &store.draws[0];
    if init == NestedInit::Prior {
        return markov_path(&first.q, y.len(), rng);
    }
    if let (Some(omega), Some(partition)) = (&first.omega, &store.meta.partition) {
        if omega.kappa() == partition.kappa() {
            let data = partition.coarsen(y);
            let table = omega.log_table(&data)?;
            return hmm::sample_latent_path(&first.q, &hmm::stationary_distribution(&first.q)?, &table, rng);
        }
    }
    Ok(quantile_path(y, store.r))
}

fn markov_path<G: Rng + ?Sized>(q: &TransitionMatrix, n: usize, rng: &mut G) -> Result<LatentPath> {
    let p0 = hmm::stationary_distribution(q)?;
    let mut x = Vec::with_capacity(n);
    let mut cur = stats::sample_categorical(p0.probs(), rng);
    for _ in 0..n {
        x.push(cur);
        cur = stats::sample_categorical(q.row(cur), rng);
    }
    Ok(LatentPath(x))
}

fn quantile_path(y: &[f64], r: usize) -> LatentPath {
    let mut order: Vec<usize> = (0..y.len()).collect();
    order.sort_by(|&a, &b| y[a].total_cmp(&y[b]));
    let mut x = vec![0; y.len()];
    for (rank, &t) in order.iter().enumerate() {
        x[t] = (rank * r / y.len()).min(r - 1);
    }
    LatentPath(x)
}

/// Nested MCMC for the cut posterior of the emissions: for each exterior Q
/// draw, `C` interior sweeps warm-started from the previous exterior index.
pub fn nested_run(q_draws: &DrawStore, y: &[f64], hyper: &DpmHyper, config: &NestedConfig) -> Result<NestedOutput> {
    hyper.validate()?;
    if config.c == 0 {
        return Err(Error::invalid("C must be at least 1"));
    }
    if q_draws.is_empty() {
        return Err(Error::invalid("nested run needs at least one transition draw"));
    }
    if y.is_empty() {
        return Err(Error::invalid("need at least one observation"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let grid = config.grid.clone().unwrap_or_else(|| default_grid(y, config.grid_points));
    let x0 = initial_latent_path(q_draws, y, config.init, &mut rng)?;
    let mut state = DpmEmissionState::from_prior(q_draws.r, x0, hyper, &mut rng)?;
    let mut draws = Vec::with_capacity(q_draws.len());
    let mut densities = DensityGridDraws::new(grid, q_draws.r);
    for draw in &q_draws.draws {
        for _ in 0..config.c {
            interior_sweep(&mut state, &draw.q, y, hyper, &mut rng)?;
        }
        densities.push(&state.params);
        draws.push(state.params.clone());
    }
    Ok(NestedOutput { draws, densities })
}

/// Defaults for the fully Bayesian comparison chain.
pub fn full_bayes_default_config(seed: u64) -> Pi1Config {
    Pi1Config { iterations: 70_000, burn_in: 10_000, thin: 10, seed }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FullBayesOutput {
    /// Q draws (no histogram weights), relabelled.
    pub store: DrawStore,
    pub draws: Vec<MixtureParams>,
    pub densities: DensityGridDraws,
}

fn ln_normal_prior(x: f64, hyper: &DpmHyper) -> f64 {
    stats::ln_normal_pdf(x, hyper.mu_c, hyper.sigma_c2)
}

fn ln_inv_gamma(v: f64, a: f64, b: f64) -> f64 {
    a * b.ln() - ln_gamma(a) - (a + 1.0) * v.ln() - b / v
}

/// Unnormalised log posterior of (Q, μ, v, W) with x and s summed out.
pub fn full_log_posterior(
    q: &TransitionMatrix,
    params: &MixtureParams,
    y: &[f64],
    hyper: &DpmHyper,
    gamma: &DirichletHyper,
) -> Result<f64> {
    let mut lp = hmm::log_likelihood(q, &StateDistribution::uniform(q.states()), &params.log_table(y)?)?;
    for i in 0..q.states() {
        lp += stats::ln_dirichlet_pdf(q.row(i), gamma.gamma_row(i));
    }
    let alpha = vec![hyper.m0 / params.s_max as f64; params.s_max];
    for r in 0..params.r {
        lp += ln_inv_gamma(params.v[r], hyper.alpha_sigma, hyper.beta_sigma);
        lp += stats::ln_dirichlet_pdf(&params.w[r * params.s_max..(r + 1) * params.s_max], &alpha);
        for j in 0..params.s_max {
            lp += ln_normal_prior(params.location(r, j), hyper);
        }
    }
    Ok(lp)
}

fn relabel_distance(qa: &TransitionMatrix, pa: &MixtureParams, qb: &TransitionMatrix, pb: &MixtureParams) -> f64 {
    let mut d: f64 = qa.entries().iter().zip(qb.entries()).map(|(x, y)| (x - y).powi(2)).sum();
    for r in 0..pa.r {
        d += (pa.mean(r) - pb.mean(r)).powi(2) + (pa.sd(r) - pb.sd(r)).powi(2);
    }
    d
}

/// Fully Bayesian sampler: each sweep redraws Q from its Dirichlet
/// conditional given the path, then the emission blocks as in
/// [`interior_sweep`]. The hidden chain starts from a uniform law so the Q
/// block stays conjugate. Draws are relabelled against the maximum-posterior
/// draw using Q entries and per-state mixture means and sds.
pub fn full_bayes_run(
    y: &[f64],
    hyper: &DpmHyper,
    dirichlet: &DirichletHyper,
    config: &Pi1Config,
    grid: Option<Vec<f64>>,
) -> Result<FullBayesOutput> {
    hyper.validate()?;
    dirichlet.validate()?;
    config.validate()?;
    if y.is_empty() {
        return Err(Error::invalid("need at least one observation"));
    }
    let r = dirichlet.r;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let grid = grid.unwrap_or_else(|| default_grid(y, 512));
    let mut state = DpmEmissionState::from_prior(r, quantile_path(y, r), hyper, &mut rng)?;
    let p0 = StateDistribution::uniform(r);
    let mut q = TransitionMatrix::uniform(r);
    let mut qs = Vec::with_capacity(config.retained());
    let mut params = Vec::with_capacity(config.retained());
    let mut iterations = Vec::with_capacity(config.retained());
    let mut log_posteriors = Vec::with_capacity(config.retained());
    for it in 0..config.iterations {
        let mut counts = vec![0usize; r * r];
        for w in state.x.0.windows(2) {
            counts[w[0] * r + w[1]] += 1;
        }
        q = histogram::sample_q_given_counts(&counts, dirichlet, &mut rng);
        update_parameters(&mut state, y, hyper, &mut rng);
        update_allocations(&mut state, &q, &p0, y, &mut rng)?;
        if config.keeps(it) {
            log_posteriors.push(full_log_posterior(&q, &state.params, y, hyper, dirichlet)?);
            qs.push(q.clone());
            params.push(state.params.clone());
            iterations.push(it);
        }
    }
    let _ = q;

    let reference_index = log_posteriors
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, &lp)| if lp > acc.1 { (i, lp) } else { acc })
        .0;
    let perms = stats::permutations(r);
    let (q_ref, p_ref) = (qs[reference_index].clone(), params[reference_index].clone());
    let mut relabeling = Vec::with_capacity(qs.len());
    for (qd, pd) in qs.iter_mut().zip(params.iter_mut()) {
        let mut best = (f64::INFINITY, perms[0].clone());
        for p in &perms {
            let d = relabel_distance(&qd.permuted(p), &pd.permuted(p), &q_ref, &p_ref);
            if d < best.0 {
                best = (d, p.clone());
            }
        }
        *qd = qd.permuted(&best.1);
        *pd = pd.permuted(&best.1);
        relabeling.push(best.1);
    }
    let densities = DensityGridDraws::from_params(grid, &params);
    let store = DrawStore {
        r,
        draws: qs.into_iter().map(|q| Draw { q, omega: None }).collect(),
        iterations,
        log_posteriors,
        relabeling,
        meta: StoreMeta { seed: config.seed, config: *config, partition: None, relabel_reference_index: Some(reference_index) },
    };
    Ok(FullBayesOutput { store, draws: params, densities })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hmm::EmissionLaw;

    fn q_star() -> TransitionMatrix {
        TransitionMatrix::from_rows(&[vec![0.7, 0.3], vec![0.2, 0.8]]).unwrap()
    }

    fn simulate(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let laws = [EmissionLaw::Normal { mean: -1.0, sd: 1.0 }, EmissionLaw::Normal { mean: 1.0, sd: 1.0 }];
        hmm::simulate_hmm(&q_star(), &laws, n, &mut rng).unwrap().1
    }

    #[test]
    fn truncation_default() {
        assert_eq!(default_truncation(1000), 31);
        assert_eq!(default_truncation(2500), 50);
        assert_eq!(default_truncation(1), 1);
        assert_eq!(DpmHyper::for_length(10_000).s_max, 100);
    }

    #[test]
    fn density_eval_examples() {
        let grid = stats::linspace(-10.0, 10.0, 2001);
        let single = MixtureParams::new(1, 3, vec![0.0, 5.0, -5.0], vec![1.0], vec![1.0, 0.0, 0.0]).unwrap();
        let d = density_eval(&single, &grid);
        for (y, f) in grid.iter().zip(&d[0]) {
            assert!((f - EmissionLaw::Normal { mean: 0.0, sd: 1.0 }.pdf(*y)).abs() < 1e-15);
        }
        let two = MixtureParams::new(1, 2, vec![-1.0, 1.0], vec![0.5], vec![0.5, 0.5]).unwrap();
        for y in [0.3, 1.7, 4.0] {
            assert!((two.pdf(0, y) - two.pdf(0, -y)).abs() < 1e-12);
        }
        let skew = MixtureParams::new(1, 2, vec![-1.0, 2.0], vec![0.7], vec![0.3, 0.7]).unwrap();
        let f = &density_eval(&skew, &grid)[0];
        assert!((stats::trapezoid(&grid, f) - 1.0).abs() < 1e-3);
        let m: Vec<f64> = grid.iter().zip(f).map(|(y, v)| y * v).collect();
        assert!((stats::trapezoid(&grid, &m) - skew.mean(0)).abs() < 1e-3);
        assert!((skew.ln_pdf(0, 0.4) - skew.pdf(0, 0.4).ln()).abs() < 1e-12);
    }

    #[test]
    fn factorised_and_composite_agree() {
        let y = simulate(40, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let hyper = DpmHyper { s_max: 4, ..DpmHyper::for_length(40) };
        let state = DpmEmissionState::from_prior(2, LatentPath(vec![0; 40]), &hyper, &mut rng).unwrap();
        let p0 = hmm::stationary_distribution(&q_star()).unwrap();
        let (cq, cp0, ct) = composite_model(&state.params, &q_star(), &p0, &y).unwrap();
        let composite = hmm::smoothing_probabilities(&cq, &cp0, &ct).unwrap();
        let cll = hmm::log_likelihood(&cq, &cp0, &ct).unwrap();
        let (ll, joint) = factorized_joint_smoothing(&state.params, &q_star(), &p0, &y).unwrap();
        assert!((ll - cll).abs() < 1e-10);
        for (a, b) in joint.iter().zip(&composite.probs) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn empty_components_refresh_from_base_measure() {
        // All observations in component 0 of state 0: the other cells see no data.
        let y = vec![0.5; 10];
        let hyper = DpmHyper { s_max: 3, mu_c: 2.0, sigma_c2: 0.25, ..DpmHyper::for_length(10) };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut draws = Vec::new();
        for _ in 0..20_000 {
            let mut state = DpmEmissionState::from_prior(1, LatentPath(vec![0; 10]), &hyper, &mut rng).unwrap();
            state.s = vec![0; 10];
            update_parameters(&mut state, &y, &hyper, &mut rng);
            draws.push(state.params.location(0, 2));
        }
        let se = (0.25f64 / draws.len() as f64).sqrt();
        assert!((stats::mean(&draws) - 2.0).abs() < 4.0 * se);
        assert!((stats::variance(&draws) - 0.25).abs() < 0.02);
    }

    #[test]
    fn variance_conditional_is_inverse_gamma() {
        let y: [f64; 5] = [0.3, -1.2, 2.0, 0.7, 1.1];
        let mu = 0.4;
        let hyper = DpmHyper { s_max: 1, ..DpmHyper::for_length(5) };
        let a = hyper.alpha_sigma + 2.5;
        let b = hyper.beta_sigma + 0.5 * y.iter().map(|v| (v - mu).powi(2)).sum::<f64>();
        // Quadrature of the unnormalised conditional on a log grid.
        let grid: Vec<f64> = (0..20_000).map(|i| (-8.0 + 16.0 * i as f64 / 19_999.0f64).exp()).collect();
        let dens: Vec<f64> = grid
            .iter()
            .map(|&v| {
                let ll: f64 = y.iter().map(|yi| stats::ln_normal_pdf(*yi, mu, v)).sum();
                (ll + ln_inv_gamma(v, hyper.alpha_sigma, hyper.beta_sigma)).exp()
            })
            .collect();
        let z = stats::trapezoid(&grid, &dens);
        let m1 = stats::trapezoid(&grid, &grid.iter().zip(&dens).map(|(v, d)| v * d).collect::<Vec<_>>()) / z;
        assert!((m1 - b / (a - 1.0)).abs() < 1e-4 * m1);

        // The sampler's v draw given μ matches the same law.
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut vs = Vec::new();
        for _ in 0..100_000 {
            let mut state = DpmEmissionState::from_prior(1, LatentPath(vec![0; 5]), &hyper, &mut rng).unwrap();
            state.params.mu[0] = mu;
            // Infinite prior precision pins μ at its current value.
            let pinned = DpmHyper { mu_c: mu, sigma_c2: 1e-300, ..hyper };
            update_parameters(&mut state, &y, &pinned, &mut rng);
            vs.push(state.params.v[0]);
        }
        let sd = (b * b / ((a - 1.0).powi(2) * (a - 2.0))).sqrt();
        assert!((stats::mean(&vs) - m1).abs() < 4.0 * sd / (vs.len() as f64).sqrt());
    }

    #[test]
    fn nested_run_is_deterministic_and_normalised() {
        let y = simulate(300, 5);
        let data_store = {
            let part = crate::partition::build_partition(crate::partition::TransformG0::sigmoid_linear(), 2).unwrap();
            let bins = part.coarsen(&y);
            let hyper = DirichletHyper::uniform(2, bins.kappa);
            let cfg = Pi1Config { iterations: 400, burn_in: 200, thin: 10, seed: 6 };
            histogram::run_chain(&bins, &hyper, &cfg, 2, Some(&part)).unwrap()
        };
        let hyper = DpmHyper::for_length(y.len());
        let config = NestedConfig { c: 2, seed: 7, grid_points: 256, grid: Some(stats::linspace(-9.0, 9.0, 721)), ..NestedConfig::default() };
        let a = nested_run(&data_store, &y, &hyper, &config).unwrap();
        let b = nested_run(&data_store, &y, &hyper, &config).unwrap();
        assert_eq!(a.draws, b.draws);
        assert_eq!(a.draws.len(), data_store.len());
        for integral in a.densities.integrals() {
            assert!((integral - 1.0).abs() < 1e-3, "{integral}");
        }
        let bands = pointwise_bands(&a.densities, 0.9).unwrap();
        let narrow = pointwise_bands(&a.densities, 0.5).unwrap();
        for r in 0..2 {
            for g in 0..bands.grid.len() {
                assert!(bands.lower[r][g] <= narrow.lower[r][g] && narrow.upper[r][g] <= bands.upper[r][g]);
            }
        }
    }

    #[test]
    fn c1_with_constant_q_is_a_plain_gibbs_chain() {
        let y = simulate(120, 8);
        let hyper = DpmHyper::for_length(y.len());
        let n_draws = 5;
        let store = DrawStore {
            r: 2,
            draws: vec![Draw { q: q_star(), omega: None }; n_draws],
            iterations: (0..n_draws).collect(),
            log_posteriors: vec![0.0; n_draws],
            relabeling: vec![vec![0, 1]; n_draws],
            meta: StoreMeta { seed: 0, config: Pi1Config::default(), partition: None, relabel_reference_index: None },
        };
        let config = NestedConfig { c: 1, seed: 9, ..NestedConfig::default() };
        let out = nested_run(&store, &y, &hyper, &config).unwrap();

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut state = DpmEmissionState::from_prior(2, quantile_path(&y, 2), &hyper, &mut rng).unwrap();
        for d in &out.draws {
            interior_sweep(&mut state, &q_star(), &y, &hyper, &mut rng).unwrap();
            assert_eq!(&state.params, d);
        }
    }

    #[test]
    fn bands_of_identical_draws_collapse() {
        let p = MixtureParams::new(1, 1, vec![0.0], vec![1.0], vec![1.0]).unwrap();
        let d = DensityGridDraws::from_params(stats::linspace(-3.0, 3.0, 11), &[p.clone(), p.clone(), p]);
        let b = pointwise_bands(&d, 0.9).unwrap();
        assert_eq!(b.lower, b.upper);
        for (lo, m) in b.lower[0].iter().zip(&b.mean[0]) {
            assert!((lo - m).abs() < 1e-15);
        }
        assert!(pointwise_bands(&DensityGridDraws::new(vec![0.0], 1), 0.9).is_err());
    }

    #[test]
    fn band_width_matches_normal_quantiles() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let grid = vec![0.0, 1.0, 2.0];
        let mut d = DensityGridDraws::new(grid, 1);
        for _ in 0..20_000 {
            for base in [1.0, 2.0, 3.0] {
                d.values.push(base + stats::sample_normal(0.0, 0.1, &mut rng));
            }
        }
        let b = pointwise_bands(&d, 0.9).unwrap();
        for g in 0..3 {
            let half = 0.5 * (b.upper[0][g] - b.lower[0][g]);
            assert!((half - 1.645 * 0.1).abs() < 0.005, "{half}");
        }
    }

    #[test]
    fn full_bayes_draw_count_and_single_state() {
        assert_eq!(full_bayes_default_config(0).retained(), 6000);
        let y = simulate(60, 11);
        let hyper = DpmHyper::for_length(y.len());
        let config = Pi1Config { iterations: 50, burn_in: 10, thin: 5, seed: 12 };
        let out = full_bayes_run(&y, &hyper, &DirichletHyper::uniform(1, 1), &config, None).unwrap();
        assert_eq!(out.store.len(), 8);
        assert!(out.store.draws.iter().all(|d| d.q.get(0, 0) == 1.0));
        let out = full_bayes_run(&y, &hyper, &DirichletHyper::uniform(2, 1), &config, None).unwrap();
        assert_eq!(out.draws.len(), 8);
        assert_eq!(out.store.relabeling.len(), 8);
    }
}
