//! Frequentist reference quantities for checking the posterior at desk scale.
//!
//! Baum–Welch gives the maximum-likelihood estimate of the coarsened model,
//! a central-difference Hessian gives its observed information, and the
//! remaining helpers compare posterior draws against those references.

use nalgebra::{Cholesky, DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::histogram::{DrawStore, HistogramEmissions};
use crate::hmm::{self, EmissionLogDensityTable, SmoothingMatrix, StateDistribution, TransitionMatrix};
use crate::partition::CoarsenedSeries;
use crate::stats;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MleResult {
    pub q_hat: TransitionMatrix,
    pub omega_hat: HistogramEmissions,
    /// Fitted law of the first hidden state.
    pub initial: StateDistribution,
    pub log_likelihood: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Log-likelihood before each EM update, then at the returned iterate.
    pub trace: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmConfig {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 5000 }
    }
}

impl MleResult {
    /// Relabel so that new state `i` is old state `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let p0 = self.initial.probs();
        Self {
            q_hat: self.q_hat.permuted(perm),
            omega_hat: self.omega_hat.permuted(perm),
            initial: StateDistribution::new(perm.iter().map(|&i| p0[i]).collect()).expect("permuted law"),
            ..self.clone()
        }
    }
}

/// Starting point for EM: sticky transitions and per-state bin weights from
/// a quantile split of the bin indices.
pub fn default_em_init(data: &CoarsenedSeries, r: usize) -> Result<(TransitionMatrix, HistogramEmissions)> {
    if r == 0 || data.is_empty() {
        return Err(Error::invalid("EM needs R >= 1 and a nonempty series"));
    }
    let q = if r == 1 {
        TransitionMatrix::identity(1)
    } else {
        let off = 0.3 / (r - 1) as f64;
        let entries = (0..r * r).map(|k| if k / r == k % r { 0.7 } else { off }).collect();
        TransitionMatrix::new(r, entries)?
    };
    let k = data.kappa;
    let mut sorted = data.bins.clone();
    sorted.sort_unstable();
    let n = sorted.len();
    let mut counts = vec![1.0; k * r];
    for (idx, &m) in sorted.iter().enumerate() {
        let s = (idx * r / n).min(r - 1);
        counts[s * k + m] += 1.0;
    }
    let columns: Vec<Vec<f64>> = counts
        .chunks(k)
        .map(|c| {
            let total: f64 = c.iter().sum();
            c.iter().map(|x| x / total).collect()
        })
        .collect();
    Ok((q, HistogramEmissions::from_columns(&columns)?))
}

struct Expectations {
    log_likelihood: f64,
    /// Σ_t P(X_t = i, X_{t+1} = j | Y), row-major.
    transitions: Vec<f64>,
    /// Σ_t P(X_t = s | Y) 1{Y_t = m}, state-major like the emission weights.
    emissions: Vec<f64>,
    first: Vec<f64>,
}

fn e_step(
    q: &TransitionMatrix,
    omega: &HistogramEmissions,
    initial: &StateDistribution,
    data: &CoarsenedSeries,
) -> Result<Expectations> {
    let r = q.states();
    let k = data.kappa;
    let table = omega.log_table(data)?;
    let filter = hmm::forward_filter(q, initial, &table)?;
    let smooth = hmm::smoothing_from_filter(q, &table, &filter);
    let n = data.len();
    let mut transitions = vec![0.0; r * r];
    let mut xi = vec![0.0; r * r];
    for t in 0..n.saturating_sub(1) {
        let a = filter.filtered_row(t);
        let b = smooth.row(t + 1);
        // P(X_t = i, X_{t+1} = j | Y) ∝ α_t(i) Q_ij ω_m(j) · γ_{t+1}(j) / pred_{t+1}(j).
        let mut total = 0.0;
        for j in 0..r {
            let pred: f64 = (0..r).map(|i| a[i] * q.get(i, j)).sum();
            let w = if pred > 0.0 { b[j] / pred } else { 0.0 };
            for i in 0..r {
                let v = a[i] * q.get(i, j) * w;
                xi[i * r + j] = v;
                total += v;
            }
        }
        if total > 0.0 {
            for (acc, v) in transitions.iter_mut().zip(&xi) {
                *acc += v / total;
            }
        }
    }
    let mut emissions = vec![0.0; k * r];
    for t in 0..n {
        let g = smooth.row(t);
        let m = data.bins[t];
        for s in 0..r {
            emissions[s * k + m] += g[s];
        }
    }
    Ok(Expectations {
        log_likelihood: filter.log_likelihood,
        transitions,
        emissions,
        first: smooth.row(0).to_vec(),
    })
}

fn normalise_rows(values: &[f64], width: usize, fallback: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    for (row, old) in values.chunks(width).zip(fallback.chunks(width)) {
        let s: f64 = row.iter().sum();
        if s > 0.0 {
            out.extend(row.iter().map(|x| x / s));
        } else {
            out.extend_from_slice(old);
        }
    }
    out
}

/// Baum–Welch for the multinomial HMM on the coarsened series, with a free
/// initial law. Stops when the log-likelihood gain drops below `tol`;
/// reaching `max_iter` returns the last iterate with `converged = false`.
pub fn baum_welch(
    data: &CoarsenedSeries,
    r: usize,
    init: Option<(TransitionMatrix, HistogramEmissions)>,
    config: &EmConfig,
) -> Result<MleResult> {
    let (mut q, mut omega) = match init {
        Some(pair) => pair,
        None => default_em_init(data, r)?,
    };
    if q.states() != r || omega.states() != r || omega.kappa() != data.kappa {
        return Err(Error::invalid("EM initial values do not match R and kappa"));
    }
    let k = data.kappa;
    let mut initial = StateDistribution::uniform(r);
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let mut ex = e_step(&q, &omega, &initial, data)?;
    while iterations < config.max_iter {
        trace.push(ex.log_likelihood);
        q = TransitionMatrix::new(r, normalise_rows(&ex.transitions, r, q.entries()))?;
        omega = HistogramEmissions::new(k, r, normalise_rows(&ex.emissions, k, omega.as_slice()))?;
        initial = StateDistribution::new(ex.first.clone())?;
        iterations += 1;
        let next = e_step(&q, &omega, &initial, data)?;
        let gain = next.log_likelihood - ex.log_likelihood;
        ex = next;
        if gain < config.tol {
            converged = true;
            break;
        }
    }
    trace.push(ex.log_likelihood);
    Ok(MleResult { q_hat: q, omega_hat: omega, initial, log_likelihood: ex.log_likelihood, iterations, converged, trace })
}

/// Observed information over free coordinates: `Q[r][s]` for `s < R − 1`
/// row by row, then for each state every bin weight except its largest and
/// those the MLE puts on the boundary. The `(J⁻¹)[Q, Q]` block does not depend on how ω is parametrised; dropping
/// the largest weight keeps finite-difference steps away from the boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FisherEstimate {
    pub dim_q: usize,
    /// Row-major `J = −H / n`.
    pub j: Vec<f64>,
    /// Row-major `(J⁻¹)[Q, Q]`.
    pub j_tilde_inv: Vec<f64>,
    /// Bin whose weight is implied by the others, per state.
    pub omega_dropped: Vec<usize>,
    /// Bins per state held at a boundary (numerically zero) MLE weight.
    #[serde(default)]
    pub omega_fixed: Vec<Vec<usize>>,
    /// Largest finite-difference step used.
    pub step: f64,
    pub n: usize,
}

impl FisherEstimate {
    pub fn dim(&self) -> usize {
        (self.j.len() as f64).sqrt().round() as usize
    }

    pub fn j_matrix(&self) -> DMatrix<f64> {
        let d = self.dim();
        DMatrix::from_row_slice(d, d, &self.j)
    }

    pub fn j_tilde_inv_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.dim_q, self.dim_q, &self.j_tilde_inv)
    }
}

/// Maps free coordinates to parameters. ω column `s` omits bin `dropped[s]`,
/// which absorbs the remaining mass, and holds the bins not listed in
/// `free[s]` at their values in `base`.
struct FreeParametrisation {
    r: usize,
    dropped: Vec<usize>,
    free: Vec<Vec<usize>>,
    base: HistogramEmissions,
}

impl FreeParametrisation {
    fn encode(&self, q: &TransitionMatrix, omega: &HistogramEmissions) -> Vec<f64> {
        let mut theta = q.free_coordinates();
        for s in 0..self.r {
            theta.extend(self.free[s].iter().map(|&m| omega.weight(m, s)));
        }
        theta
    }

    fn decode(&self, theta: &[f64]) -> Option<(TransitionMatrix, HistogramEmissions)> {
        let r = self.r;
        let k = self.base.kappa();
        let dq = r * (r - 1);
        let mut q = Vec::with_capacity(r * r);
        for i in 0..r {
            let row = &theta[i * (r - 1)..(i + 1) * (r - 1)];
            q.extend_from_slice(row);
            q.push(1.0 - row.iter().sum::<f64>());
        }
        let mut w = self.base.as_slice().to_vec();
        let mut it = theta[dq..].iter();
        for s in 0..r {
            let col = &mut w[s * k..(s + 1) * k];
            for &m in &self.free[s] {
                col[m] = *it.next()?;
            }
            col[self.dropped[s]] = 0.0;
            col[self.dropped[s]] = 1.0 - col.iter().sum::<f64>();
            // Entries held on the boundary may be exactly zero.
            if col.iter().any(|x| !(*x >= 0.0)) || self.free[s].iter().chain([&self.dropped[s]]).any(|&m| !(col[m] > 0.0)) {
                return None;
            }
        }
        if q.iter().any(|x| !(*x > 0.0)) {
            return None;
        }
        Some((TransitionMatrix::new(r, q).ok()?, HistogramEmissions::new(k, r, w).ok()?))
    }

    fn state_of(&self, a: usize) -> usize {
        let mut rest = a - self.r * (self.r - 1);
        for (s, f) in self.free.iter().enumerate() {
            if rest < f.len() {
                return s;
            }
            rest -= f.len();
        }
        unreachable!("coordinate out of range")
    }

    /// Largest entry change that keeps coordinate `a` and the entry it is
    /// traded against comfortably positive.
    fn room(&self, theta: &[f64], a: usize, q: &TransitionMatrix) -> f64 {
        let dq = self.r * (self.r - 1);
        let partner = if a < dq {
            q.get(a / (self.r - 1), self.r - 1)
        } else {
            let s = self.state_of(a);
            self.base.weight(self.dropped[s], s)
        };
        theta[a].min(partner)
    }
}

fn decode_or_err(param: &FreeParametrisation, theta: &[f64]) -> Result<(TransitionMatrix, HistogramEmissions)> {
    param.decode(theta).ok_or_else(|| Error::invalid("finite-difference point left the simplex"))
}

/// Score of the stationary-start log-likelihood in free coordinates. By
/// Fisher's identity it is the smoothed complete-data score, chained through
/// the entries each row or column trades against; the stationary law's
/// dependence on `Q` is differenced with `steps`.
fn stationary_score(param: &FreeParametrisation, theta: &[f64], data: &CoarsenedSeries, steps: &[f64]) -> Result<Vec<f64>> {
    let (q, omega) = decode_or_err(param, theta)?;
    let p0 = hmm::stationary_distribution(&q)?;
    let ex = e_step(&q, &omega, &p0, data)?;
    let r = param.r;
    let k = data.kappa;
    let dq = r * (r - 1);
    let ratio = |count: f64, p: f64| if count == 0.0 { 0.0 } else { count / p };
    let g_q = |i: usize, j: usize| ratio(ex.transitions[i * r + j], q.get(i, j));
    let g_p0: Vec<f64> = (0..r).map(|s| ratio(ex.first[s], p0.probs()[s])).collect();
    let mut score = Vec::with_capacity(theta.len());
    let mut buf = theta.to_vec();
    for a in 0..dq {
        let (i, j) = (a / (r - 1), a % (r - 1));
        buf[a] = theta[a] + steps[a];
        let up = hmm::stationary_distribution(&decode_or_err(param, &buf)?.0)?;
        buf[a] = theta[a] - steps[a];
        let down = hmm::stationary_distribution(&decode_or_err(param, &buf)?.0)?;
        buf[a] = theta[a];
        let dp0: f64 =
            (0..r).map(|s| g_p0[s] * (up.probs()[s] - down.probs()[s]) / (2.0 * steps[a])).sum();
        score.push(g_q(i, j) - g_q(i, r - 1) + dp0);
    }
    for s in 0..r {
        let m0 = param.dropped[s];
        let g0 = ratio(ex.emissions[s * k + m0], omega.weight(m0, s));
        score.extend(param.free[s].iter().map(|&m| ratio(ex.emissions[s * k + m], omega.weight(m, s)) - g0));
    }
    Ok(score)
}

/// Observed information at the MLE from central differences of the score.
/// Each coordinate uses the step `min(step, room / 10)` so perturbed points
/// stay in the simplex.
pub fn observed_information(data: &CoarsenedSeries, mle: &MleResult, step: f64) -> Result<FisherEstimate> {
    if !(step > 0.0) {
        return Err(Error::invalid("finite-difference step must be positive"));
    }
    let r = mle.q_hat.states();
    let k = data.kappa;
    let n = data.len();
    if r < 1 || k < 2 || n == 0 {
        return Err(Error::invalid("observed information needs kappa >= 2 and data"));
    }
    let dropped: Vec<usize> = (0..r)
        .map(|s| {
            let col = mle.omega_hat.column(s);
            (0..k).fold(0, |best, m| if col[m] > col[best] { m } else { best })
        })
        .collect();
    // Weights EM has driven to the boundary (expected count below 1e-3) sit
    // on a face of the simplex; the information is taken along that face.
    let on_boundary = |m: usize, s: usize| n as f64 * mle.omega_hat.weight(m, s) < 1e-3;
    let free: Vec<Vec<usize>> =
        (0..r).map(|s| (0..k).filter(|&m| m != dropped[s] && !on_boundary(m, s)).collect()).collect();
    let omega_fixed = (0..r).map(|s| (0..k).filter(|&m| m != dropped[s] && on_boundary(m, s)).collect()).collect();
    let param = FreeParametrisation { r, dropped, free, base: mle.omega_hat.clone() };
    let theta = param.encode(&mle.q_hat, &mle.omega_hat);
    let dim_q = r * (r - 1);
    let d = theta.len();
    let steps: Vec<f64> = (0..d).map(|a| step.min(0.1 * param.room(&theta, a, &mle.q_hat))).collect();
    if steps.iter().any(|h| !(*h > 0.0)) {
        return Err(Error::invalid("MLE lies on the boundary of the parameter space"));
    }
    let mut hess = DMatrix::zeros(d, d);
    let mut buf = theta.clone();
    for a in 0..d {
        buf[a] = theta[a] + steps[a];
        let up = stationary_score(&param, &buf, data, &steps)?;
        buf[a] = theta[a] - steps[a];
        let down = stationary_score(&param, &buf, data, &steps)?;
        buf[a] = theta[a];
        for b in 0..d {
            hess[(b, a)] = (up[b] - down[b]) / (2.0 * steps[a]);
        }
    }
    let hess = (&hess + hess.transpose()) * 0.5;
    let j = hess * (-1.0 / n as f64);
    let eig = SymmetricEigen::new(j.clone());
    let max = eig.eigenvalues.iter().map(|x| x.abs()).fold(0.0, f64::max);
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    let condition = if min > 0.0 { max / min } else { f64::INFINITY };
    if !(condition <= 1e10) {
        return Err(Error::SingularInformation { condition });
    }
    let inv = j.clone().try_inverse().ok_or(Error::SingularInformation { condition })?;
    let block = inv.view((0, 0), (dim_q, dim_q)).into_owned();
    let block = (&block + block.transpose()) * 0.5;
    Ok(FisherEstimate {
        dim_q,
        j: j.transpose().iter().copied().collect(),
        j_tilde_inv: block.transpose().iter().copied().collect(),
        omega_dropped: param.dropped,
        omega_fixed,
        step: steps.iter().cloned().fold(0.0, f64::max),
        n,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BvmReport {
    /// KS statistic per free Q coordinate.
    pub ks: Vec<f64>,
    /// Standard deviations used for the standardisation, on the √n scale.
    pub scale: Vec<f64>,
    /// Eigenvalues of `J̃^{1/2} (n Σ_post) J̃^{1/2}`; all near 1 under BvM.
    pub cov_eigenvalues: Option<Vec<f64>>,
    pub cov_ratio_min: Option<f64>,
    pub cov_ratio_max: Option<f64>,
}

/// KS distances of `√n (Q − Q̂) / sd` against N(0, 1) per free coordinate,
/// with `sd` from `J̃⁻¹` when `fisher` is given and from the draws otherwise.
pub fn bvm_compare(
    store: &DrawStore,
    q_hat: &TransitionMatrix,
    n: usize,
    fisher: Option<&FisherEstimate>,
) -> Result<BvmReport> {
    if store.len() < 2 {
        return Err(Error::invalid("need at least two draws"));
    }
    let free = store.q_free();
    let centre = q_hat.free_coordinates();
    let d = centre.len();
    let sqrt_n = (n as f64).sqrt();
    let columns: Vec<Vec<f64>> = (0..d).map(|c| free.iter().map(|v| sqrt_n * (v[c] - centre[c])).collect()).collect();
    let scale: Vec<f64> = match fisher {
        Some(f) => {
            if f.dim_q != d {
                return Err(Error::invalid("Fisher block does not match the number of free Q coordinates"));
            }
            (0..d).map(|c| f.j_tilde_inv[c * d + c].sqrt()).collect()
        }
        None => columns.iter().map(|c| stats::std_dev(c)).collect(),
    };
    let ks = columns
        .iter()
        .zip(&scale)
        .map(|(c, s)| stats::ks_std_normal(&c.iter().map(|x| x / s).collect::<Vec<_>>()))
        .collect();
    let cov_eigenvalues = match fisher {
        Some(f) => Some(covariance_ratio_eigenvalues(&columns, &f.j_tilde_inv_matrix())?),
        None => None,
    };
    Ok(BvmReport {
        ks,
        scale,
        cov_ratio_min: cov_eigenvalues.as_ref().map(|e| e.iter().cloned().fold(f64::INFINITY, f64::min)),
        cov_ratio_max: cov_eigenvalues.as_ref().map(|e| e.iter().cloned().fold(f64::NEG_INFINITY, f64::max)),
        cov_eigenvalues,
    })
}

/// Eigenvalues of `L⁻¹ C L⁻ᵀ` where `L Lᵀ = J̃⁻¹` and `C` is the sample
/// covariance of the √n-scaled draws.
fn covariance_ratio_eigenvalues(columns: &[Vec<f64>], j_tilde_inv: &DMatrix<f64>) -> Result<Vec<f64>> {
    let d = columns.len();
    let m = columns[0].len() as f64;
    let means: Vec<f64> = columns.iter().map(|c| stats::mean(c)).collect();
    let cov = DMatrix::from_fn(d, d, |a, b| {
        columns[a].iter().zip(&columns[b]).map(|(x, y)| (x - means[a]) * (y - means[b])).sum::<f64>() / (m - 1.0)
    });
    let chol = Cholesky::new(j_tilde_inv.clone())
        .ok_or(Error::SingularInformation { condition: f64::INFINITY })?;
    let l_inv = chol.l().try_inverse().ok_or(Error::SingularInformation { condition: f64::INFINITY })?;
    let s = &l_inv * cov * l_inv.transpose();
    let s = (&s + s.transpose()) * 0.5;
    let mut ev: Vec<f64> = SymmetricEigen::new(s).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    Ok(ev)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityReport {
    pub kappas: Vec<usize>,
    /// Posterior sd of every free Q coordinate, one vector per κ.
    pub sds: Vec<Vec<f64>>,
    pub slack: f64,
    pub monotone: bool,
}

/// Checks that posterior sds do not grow as the partition is refined,
/// allowing each step a relative increase of `slack`.
pub fn refinement_monotonicity(stores: &[(usize, &DrawStore)], slack: f64) -> Result<MonotonicityReport> {
    let mut sorted = stores.to_vec();
    sorted.sort_by_key(|(k, _)| *k);
    let mut sds = Vec::with_capacity(sorted.len());
    for (_, store) in &sorted {
        if store.len() < 2 {
            return Err(Error::invalid("every store needs at least two draws"));
        }
        let free = store.q_free();
        let d = free[0].len();
        sds.push((0..d).map(|c| stats::std_dev(&free.iter().map(|v| v[c]).collect::<Vec<_>>())).collect::<Vec<_>>());
    }
    let monotone = sds
        .windows(2)
        .all(|w| w[0].iter().zip(&w[1]).all(|(a, b)| *b <= (1.0 + slack) * a));
    Ok(MonotonicityReport { kappas: sorted.iter().map(|(k, _)| *k).collect(), sds, slack, monotone })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct L1Report {
    /// Distance for each true state after matching.
    pub per_state: Vec<f64>,
    /// `permutation[s]` is the estimated curve matched to true state `s`.
    pub permutation: Vec<usize>,
}

pub fn l1_distance(grid: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| (x - y).abs()).collect();
    stats::trapezoid(grid, &diff)
}

/// Trapezoid-rule L¹ distances between estimated and true per-state curves,
/// after the state matching that minimises the total distance.
pub fn l1_density_error(grid: &[f64], estimates: &[Vec<f64>], truth: &[Vec<f64>]) -> Result<L1Report> {
    let r = truth.len();
    if estimates.len() != r || r == 0 {
        return Err(Error::invalid("need one estimated curve per true state"));
    }
    if estimates.iter().chain(truth).any(|c| c.len() != grid.len()) {
        return Err(Error::invalid("curves must be evaluated on the grid"));
    }
    let dist: Vec<Vec<f64>> = (0..r)
        .map(|s| (0..r).map(|e| l1_distance(grid, &estimates[e], &truth[s])).collect())
        .collect();
    let mut best = (f64::INFINITY, Vec::new());
    for p in stats::permutations(r) {
        let total: f64 = (0..r).map(|s| dist[s][p[s]]).sum();
        if total < best.0 {
            best = (total, p);
        }
    }
    let permutation = best.1;
    Ok(L1Report { per_state: (0..r).map(|s| dist[s][permutation[s]]).collect(), permutation })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothingReport {
    /// Mean-over-t TV distance of each draw's smoothing matrix to the oracle.
    pub per_draw_mean_tv: Vec<f64>,
    /// Mean-over-t TV distance of the averaged smoothing matrix.
    pub posterior_mean_tv: f64,
    pub posterior_mean_max_tv: f64,
    /// State permutation applied to the averaged matrix.
    pub permutation: Vec<usize>,
}

fn tv_rows(a: &SmoothingMatrix, b: &SmoothingMatrix, perm: &[usize]) -> (f64, f64) {
    let n = a.len();
    let mut total = 0.0;
    let mut max: f64 = 0.0;
    for t in 0..n {
        let (ra, rb) = (a.row(t), b.row(t));
        let tv = 0.5 * (0..rb.len()).map(|s| (ra[perm[s]] - rb[s]).abs()).sum::<f64>();
        total += tv;
        max = max.max(tv);
    }
    (total / n as f64, max)
}

/// Smoothing error of posterior draws against the oracle parameters. Each
/// draw uses the stationary law of its own Q as the initial law.
pub fn smoothing_error(
    draws: &[(TransitionMatrix, EmissionLogDensityTable)],
    oracle_q: &TransitionMatrix,
    oracle_table: &EmissionLogDensityTable,
) -> Result<SmoothingReport> {
    if draws.is_empty() {
        return Err(Error::invalid("need at least one draw"));
    }
    let oracle = hmm::smoothing_probabilities(oracle_q, &hmm::stationary_distribution(oracle_q)?, oracle_table)?;
    let r = oracle.r;
    let identity: Vec<usize> = (0..r).collect();
    let mut mean = SmoothingMatrix { r, probs: vec![0.0; oracle.probs.len()] };
    let mut per_draw = Vec::with_capacity(draws.len());
    for (q, table) in draws {
        let s = hmm::smoothing_probabilities(q, &hmm::stationary_distribution(q)?, table)?;
        if s.probs.len() != oracle.probs.len() {
            return Err(Error::invalid("draw and oracle tables have different shapes"));
        }
        per_draw.push(tv_rows(&s, &oracle, &identity).0);
        for (m, v) in mean.probs.iter_mut().zip(&s.probs) {
            *m += v / draws.len() as f64;
        }
    }
    let mut best = (f64::INFINITY, 0.0, identity);
    for p in stats::permutations(r) {
        let (avg, max) = tv_rows(&mean, &oracle, &p);
        if avg < best.0 {
            best = (avg, max, p);
        }
    }
    Ok(SmoothingReport {
        per_draw_mean_tv: per_draw,
        posterior_mean_tv: best.0,
        posterior_mean_max_tv: best.1,
        permutation: best.2,
    })
}
