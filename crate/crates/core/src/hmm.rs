//! Exact finite-state HMM computations: stationary law, scaled forward
//! filtering, smoothing, forward-filtering backward-sampling and simulation.
//!
//! Transition matrices are stored row-major with `Q[i][j] = P(X_{t+1} = j | X_t = i)`.
//! State labels are 0-based throughout the crate.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats;

const ROW_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct TransitionMatrix {
    r: usize,
    entries: Vec<f64>,
}

impl TransitionMatrix {
    /// Validates a row-major R×R matrix. Rows are renormalised when they are
    /// within 1e-9 of summing to one so that sampled rows are exact.
    pub fn new(r: usize, entries: Vec<f64>) -> Result<Self> {
        if r == 0 {
            return Err(Error::invalid("transition matrix needs at least one state"));
        }
        if entries.len() != r * r {
            return Err(Error::invalid(format!(
                "expected {} entries for a {r}x{r} matrix, got {}",
                r * r,
                entries.len()
            )));
        }
        let mut entries = entries;
        for i in 0..r {
            let row = &mut entries[i * r..(i + 1) * r];
            if row.iter().any(|x| !x.is_finite() || *x < 0.0) {
                return Err(Error::invalid(format!("row {i} has a negative or non-finite entry")));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-9 {
                return Err(Error::invalid(format!("row {i} sums to {s}, not 1")));
            }
            if (s - 1.0).abs() > ROW_SUM_TOL {
                row.iter_mut().for_each(|x| *x /= s);
            }
        }
        Ok(Self { r, entries })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        if rows.iter().any(|row| row.len() != r) {
            return Err(Error::invalid("transition matrix must be square"));
        }
        Self::new(r, rows.concat())
    }

    pub fn identity(r: usize) -> Self {
        let mut entries = vec![0.0; r * r];
        for i in 0..r {
            entries[i * r + i] = 1.0;
        }
        Self { r, entries }
    }

    pub fn uniform(r: usize) -> Self {
        Self { r, entries: vec![1.0 / r as f64; r * r] }
    }

    #[inline]
    pub fn states(&self) -> usize {
        self.r
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.r + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.r..(i + 1) * self.r]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.entries.chunks(self.r).map(<[f64]>::to_vec).collect()
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.r, self.r, &self.entries)
    }

    /// Relabel states: entry (r, s) of the result is `Q[perm[r]][perm[s]]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let r = self.r;
        let mut entries = vec![0.0; r * r];
        for i in 0..r {
            for j in 0..r {
                entries[i * r + j] = self.get(perm[i], perm[j]);
            }
        }
        Self { r, entries }
    }

    /// Free coordinates `Q[r][s]` for `s < R - 1`, row by row.
    pub fn free_coordinates(&self) -> Vec<f64> {
        (0..self.r)
            .flat_map(|i| self.row(i)[..self.r - 1].to_vec())
            .collect()
    }
}

impl TryFrom<Vec<Vec<f64>>> for TransitionMatrix {
    type Error = Error;
    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::from_rows(&rows)
    }
}

impl From<TransitionMatrix> for Vec<Vec<f64>> {
    fn from(q: TransitionMatrix) -> Self {
        q.to_rows()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StateDistribution {
    probs: Vec<f64>,
}

impl StateDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() || probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::invalid("state distribution must be a nonempty nonnegative vector"));
        }
        let s: f64 = probs.iter().sum();
        if (s - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("state distribution sums to {s}")));
        }
        Ok(Self { probs: probs.iter().map(|p| p / s).collect() })
    }

    pub fn uniform(r: usize) -> Self {
        Self { probs: vec![1.0 / r as f64; r] }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn states(&self) -> usize {
        self.probs.len()
    }
}

/// n×R table of `log f_r(y_t)`, row-major by time.
#[derive(Debug, Clone, PartialEq)]
pub struct EmissionLogDensityTable {
    n: usize,
    r: usize,
    values: Vec<f64>,
}

impl EmissionLogDensityTable {
    pub fn new(n: usize, r: usize, values: Vec<f64>) -> Result<Self> {
        if n == 0 || r == 0 {
            return Err(Error::invalid("emission table must have n >= 1 and R >= 1"));
        }
        if values.len() != n * r {
            return Err(Error::invalid("emission table size does not match n x R"));
        }
        if values.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
            return Err(Error::invalid("emission log densities must be finite or -inf"));
        }
        Ok(Self { n, r, values })
    }

    pub fn from_fn(n: usize, r: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut values = Vec::with_capacity(n * r);
        for t in 0..n {
            for s in 0..r {
                values.push(f(t, s));
            }
        }
        Self::new(n, r, values)
    }

    /// Table for observations under per-state emission laws.
    pub fn from_laws(y: &[f64], laws: &[EmissionLaw]) -> Result<Self> {
        Self::from_fn(y.len(), laws.len(), |t, s| laws[s].ln_pdf(y[t]))
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn states(&self) -> usize {
        self.r
    }

    #[inline]
    pub fn row(&self, t: usize) -> &[f64] {
        &self.values[t * self.r..(t + 1) * self.r]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Reorder columns so that column s of the result is column `perm[s]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let values = (0..self.n)
            .flat_map(|t| perm.iter().map(move |&p| (t, p)))
            .map(|(t, p)| self.values[t * self.r + p])
            .collect();
        Self { n: self.n, r: self.r, values }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterResult {
    r: usize,
    /// n×R row-major, row t is P(X_t = · | Y_{1:t}).
    pub filtered: Vec<f64>,
    pub log_norm_constants: Vec<f64>,
    pub log_likelihood: f64,
}

impl FilterResult {
    pub fn filtered_row(&self, t: usize) -> &[f64] {
        &self.filtered[t * self.r..(t + 1) * self.r]
    }

    pub fn len(&self) -> usize {
        self.log_norm_constants.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_norm_constants.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LatentPath(pub Vec<usize>);

impl LatentPath {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn states(&self) -> &[usize] {
        &self.0
    }
}

/// n×R matrix of smoothing probabilities, row-major by time.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothingMatrix {
    pub r: usize,
    pub probs: Vec<f64>,
}

impl SmoothingMatrix {
    pub fn row(&self, t: usize) -> &[f64] {
        &self.probs[t * self.r..(t + 1) * self.r]
    }

    pub fn len(&self) -> usize {
        self.probs.len() / self.r
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
}

/// Whether the support graph of `q` is irreducible and aperiodic, i.e. some
/// power of the matrix is entrywise positive.
pub fn is_primitive(q: &TransitionMatrix) -> bool {
    let r = q.states();
    let adj: Vec<bool> = q.entries().iter().map(|&x| x > 0.0).collect();
    if adj.iter().all(|&b| b) {
        return true;
    }
    // Wielandt: a primitive matrix has A^k > 0 for k = (r - 1)^2 + 1.
    let k = (r - 1) * (r - 1) + 1;
    let mut pow = adj.clone();
    for _ in 1..k {
        let mut next = vec![false; r * r];
        for i in 0..r {
            for l in 0..r {
                if pow[i * r + l] {
                    for j in 0..r {
                        next[i * r + j] |= adj[l * r + j];
                    }
                }
            }
        }
        pow = next;
    }
    pow.iter().all(|&b| b)
}

/// Invariant distribution p with pᵀQ = pᵀ.
pub fn stationary_distribution(q: &TransitionMatrix) -> Result<StateDistribution> {
    let r = q.states();
    if r == 1 {
        return Ok(StateDistribution { probs: vec![1.0] });
    }
    if !is_primitive(q) {
        return Err(Error::NonErgodic("support graph is reducible or periodic".into()));
    }
    let mut a = q.to_dmatrix().transpose() - DMatrix::<f64>::identity(r, r);
    for j in 0..r {
        a[(r - 1, j)] = 1.0;
    }
    let mut b = DVector::zeros(r);
    b[r - 1] = 1.0;
    let p = a
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::NonErgodic("stationary system is singular".into()))?;
    if p.iter().any(|x| !x.is_finite() || *x < -1e-10) {
        return Err(Error::NonErgodic("stationary solution is not a distribution".into()));
    }
    let probs: Vec<f64> = p.iter().map(|x| x.max(0.0)).collect();
    let s: f64 = probs.iter().sum();
    Ok(StateDistribution { probs: probs.into_iter().map(|x| x / s).collect() })
}

fn check_dims(q: &TransitionMatrix, p0: &StateDistribution, e: &EmissionLogDensityTable) -> Result<()> {
    if q.states() != p0.states() || q.states() != e.states() {
        return Err(Error::invalid(format!(
            "state counts disagree: Q has {}, p0 has {}, emissions have {}",
            q.states(),
            p0.states(),
            e.states()
        )));
    }
    Ok(())
}

/// Scaled forward recursion. `log_likelihood` is the log of the HMM
/// likelihood with initial law `p0`.
pub fn forward_filter(
    q: &TransitionMatrix,
    p0: &StateDistribution,
    e: &EmissionLogDensityTable,
) -> Result<FilterResult> {
    check_dims(q, p0, e)?;
    let (n, r) = (e.len(), e.states());
    let mut filtered = vec![0.0; n * r];
    let mut log_norm = Vec::with_capacity(n);
    let mut pred = p0.probs().to_vec();
    for t in 0..n {
        if t > 0 {
            let prev = &filtered[(t - 1) * r..t * r];
            for (j, pj) in pred.iter_mut().enumerate() {
                *pj = (0..r).map(|i| prev[i] * q.get(i, j)).sum();
            }
        }
        let row = e.row(t);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return Err(Error::ZeroLikelihood { t });
        }
        let out = &mut filtered[t * r..(t + 1) * r];
        let mut c = 0.0;
        for s in 0..r {
            out[s] = pred[s] * (row[s] - max).exp();
            c += out[s];
        }
        if !(c > 0.0) || !c.is_finite() {
            return Err(Error::ZeroLikelihood { t });
        }
        out.iter_mut().for_each(|x| *x /= c);
        log_norm.push(c.ln() + max);
    }
    let log_likelihood = log_norm.iter().sum();
    Ok(FilterResult { r, filtered, log_norm_constants: log_norm, log_likelihood })
}

/// Log-likelihood only.
pub fn log_likelihood(
    q: &TransitionMatrix,
    p0: &StateDistribution,
    e: &EmissionLogDensityTable,
) -> Result<f64> {
    forward_filter(q, p0, e).map(|f| f.log_likelihood)
}

/// P(X_t = · | Y_{1:n}) for every t, from a completed forward pass.
pub fn smoothing_from_filter(
    q: &TransitionMatrix,
    e: &EmissionLogDensityTable,
    filter: &FilterResult,
) -> SmoothingMatrix {
    let (n, r) = (e.len(), e.states());
    let mut probs = filter.filtered.clone();
    let mut beta = vec![1.0; r];
    let mut next = vec![0.0; r];
    let mut weighted = vec![0.0; r];
    for t in (0..n.saturating_sub(1)).rev() {
        let row = e.row(t + 1);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        // exp(log_norm - max) is the scaling constant c_{t+1} of the forward pass.
        let c = (filter.log_norm_constants[t + 1] - max).exp();
        for j in 0..r {
            weighted[j] = (row[j] - max).exp() * beta[j];
        }
        for (i, ni) in next.iter_mut().enumerate() {
            *ni = q.row(i).iter().zip(&weighted).map(|(a, b)| a * b).sum::<f64>() / c;
        }
        std::mem::swap(&mut beta, &mut next);
        let out = &mut probs[t * r..(t + 1) * r];
        let mut s = 0.0;
        for i in 0..r {
            out[i] *= beta[i];
            s += out[i];
        }
        out.iter_mut().for_each(|x| *x /= s);
    }
    SmoothingMatrix { r, probs }
}

pub fn smoothing_probabilities(
    q: &TransitionMatrix,
    p0: &StateDistribution,
    e: &EmissionLogDensityTable,
) -> Result<SmoothingMatrix> {
    let filter = forward_filter(q, p0, e)?;
    Ok(smoothing_from_filter(q, e, &filter))
}

/// Backward sampling pass given a completed forward filter.
pub fn sample_path_from_filter<R: Rng + ?Sized>(
    q: &TransitionMatrix,
    filter: &FilterResult,
    rng: &mut R,
) -> LatentPath {
    let n = filter.len();
    let r = q.states();
    let mut states = vec![0usize; n];
    if n == 0 {
        return LatentPath(states);
    }
    states[n - 1] = stats::sample_categorical(filter.filtered_row(n - 1), rng);
    let mut w = vec![0.0; r];
    for t in (0..n - 1).rev() {
        let next = states[t + 1];
        let f = filter.filtered_row(t);
        for i in 0..r {
            w[i] = f[i] * q.get(i, next);
        }
        states[t] = stats::sample_categorical(&w, rng);
    }
    LatentPath(states)
}

/// Exact draw of X_{1:n} given Y_{1:n} (forward-filtering backward-sampling).
pub fn sample_latent_path<R: Rng + ?Sized>(
    q: &TransitionMatrix,
    p0: &StateDistribution,
    e: &EmissionLogDensityTable,
    rng: &mut R,
) -> Result<LatentPath> {
    let filter = forward_filter(q, p0, e)?;
    Ok(sample_path_from_filter(q, &filter, rng))
}

/// Parametric emission law used for simulation and as a known truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EmissionLaw {
    Normal { mean: f64, sd: f64 },
    /// Finite mixture of normals.
    NormalMixture { weights: Vec<f64>, means: Vec<f64>, sds: Vec<f64> },
    /// Degenerate law; its "density" is taken with respect to counting measure.
    PointMass { at: f64 },
}

impl EmissionLaw {
    pub fn validate(&self) -> Result<()> {
        match self {
            EmissionLaw::Normal { mean, sd } => {
                if !mean.is_finite() || !(*sd > 0.0) {
                    return Err(Error::invalid("normal emission needs finite mean and sd > 0"));
                }
            }
            EmissionLaw::NormalMixture { weights, means, sds } => {
                if weights.is_empty() || weights.len() != means.len() || weights.len() != sds.len() {
                    return Err(Error::invalid("mixture components have mismatched lengths"));
                }
                if weights.iter().any(|w| *w < 0.0) || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                    return Err(Error::invalid("mixture weights must be a probability vector"));
                }
                if sds.iter().any(|s| !(*s > 0.0)) {
                    return Err(Error::invalid("mixture sds must be positive"));
                }
            }
            EmissionLaw::PointMass { at } => {
                if !at.is_finite() {
                    return Err(Error::invalid("point mass location must be finite"));
                }
            }
        }
        Ok(())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            EmissionLaw::Normal { mean, sd } => stats::sample_normal(*mean, *sd, rng),
            EmissionLaw::NormalMixture { weights, means, sds } => {
                let j = stats::sample_categorical(weights, rng);
                stats::sample_normal(means[j], sds[j], rng)
            }
            EmissionLaw::PointMass { at } => *at,
        }
    }

    pub fn ln_pdf(&self, y: f64) -> f64 {
        match self {
            EmissionLaw::Normal { mean, sd } => stats::ln_normal_pdf(y, *mean, sd * sd),
            EmissionLaw::NormalMixture { weights, means, sds } => {
                let terms: Vec<f64> = weights
                    .iter()
                    .zip(means.iter().zip(sds))
                    .map(|(w, (m, s))| w.ln() + stats::ln_normal_pdf(y, *m, s * s))
                    .collect();
                stats::log_sum_exp(&terms)
            }
            EmissionLaw::PointMass { at } => {
                if y == *at {
                    0.0
                } else {
                    f64::NEG_INFINITY
                }
            }
        }
    }

    pub fn pdf(&self, y: f64) -> f64 {
        self.ln_pdf(y).exp()
    }

    pub fn cdf(&self, y: f64) -> f64 {
        match self {
            EmissionLaw::Normal { mean, sd } => stats::std_normal_cdf((y - mean) / sd),
            EmissionLaw::NormalMixture { weights, means, sds } => weights
                .iter()
                .zip(means.iter().zip(sds))
                .map(|(w, (m, s))| w * stats::std_normal_cdf((y - m) / s))
                .sum(),
            EmissionLaw::PointMass { at } => {
                if y >= *at {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Simulate a stationary HMM: X_1 ~ p_Q, X_{t+1} ~ Q[X_t], Y_t ~ F_{X_t}.
pub fn simulate_hmm<R: Rng + ?Sized>(
    q: &TransitionMatrix,
    emissions: &[EmissionLaw],
    n: usize,
    rng: &mut R,
) -> Result<(LatentPath, Vec<f64>)> {
    if emissions.len() != q.states() {
        return Err(Error::invalid("need one emission law per hidden state"));
    }
    if n == 0 {
        return Err(Error::invalid("cannot simulate an empty series"));
    }
    let p = stationary_distribution(q)?;
    let mut states = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    let mut x = stats::sample_categorical(p.probs(), rng);
    for t in 0..n {
        if t > 0 {
            x = stats::sample_categorical(q.row(x), rng);
        }
        states.push(x);
        y.push(emissions[x].sample(rng));
    }
    Ok((LatentPath(states), y))
}
