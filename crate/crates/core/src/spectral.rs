//! Method-of-moments estimator for multinomial HMMs.
//!
//! Three consecutive observations are conditionally independent given the
//! middle hidden state, so the triple moment is a weighted sum of rank-one
//! tensors `Σ_b p_b μ1_b ⊗ μ2_b ⊗ μ3_b` where
//!
//! * `μ2_b = Ω[·, b]`,
//! * `μ3_b = (Ω Qᵀ)[·, b]`,
//! * `μ1_b = (Ω diag(p) Q diag(p)⁻¹)[·, b]`.
//!
//! Two views are linearly mapped onto the remaining one (symmetrisation),
//! the pair moment whitens the triple moment into an orthogonally decomposable
//! R×R×R tensor and the tensor power method extracts its components.
//! Symmetrising about the third view recovers `Ξ3 = Ω Qᵀ`; about the second
//! view it recovers `Ξ2 = Ω`. Labels are fixed against a reference estimate
//! and `Q̂ᵀ = Ω̂⁺ Ξ̂3`.
//!
//! The transforms are estimated on the first `⌈n/2⌉` observations and the
//! symmetrised moments on the rest.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hmm::{self, TransitionMatrix};
use crate::partition::CoarsenedSeries;
use crate::stats;

const MAX_MOMENT_CONDITION: f64 = 1e8;
const MIN_WHITENING_RATIO: f64 = 1e-8;
const MIN_OMEGA_RATIO: f64 = 1e-8;
const POWER_TOL: f64 = 1e-6;

/// Pair and triple moments of consecutive one-hot observations.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentTensors {
    pub kappa: usize,
    /// `E12[i, j] = P(Y_t = i, Y_{t+1} = j)`.
    pub e12: DMatrix<f64>,
    pub e13: DMatrix<f64>,
    pub e23: DMatrix<f64>,
    /// `e123[(i * κ + j) * κ + k] = P(Y_t = i, Y_{t+1} = j, Y_{t+2} = k)`.
    pub e123: Vec<f64>,
}

/// Sliding-window moment estimates. `E12` averages over the n − 1 pairs; the
/// other moments average over the n − 2 triples.
pub fn empirical_tensors(bins: &CoarsenedSeries) -> Result<MomentTensors> {
    let n = bins.len();
    if n < 3 {
        return Err(Error::TooShort { n, min: 3 });
    }
    let k = bins.kappa;
    let y = &bins.bins;
    let mut e12 = DMatrix::zeros(k, k);
    let mut e13 = DMatrix::zeros(k, k);
    let mut e23 = DMatrix::zeros(k, k);
    let mut e123 = vec![0.0; k * k * k];
    let pair_w = 1.0 / (n - 1) as f64;
    let triple_w = 1.0 / (n - 2) as f64;
    for w in y.windows(2) {
        e12[(w[0], w[1])] += pair_w;
    }
    for w in y.windows(3) {
        e13[(w[0], w[2])] += triple_w;
        e23[(w[1], w[2])] += triple_w;
        e123[(w[0] * k + w[1]) * k + w[2]] += triple_w;
    }
    Ok(MomentTensors { kappa: k, e12, e13, e23, e123 })
}

/// View means `(μ1, μ2, μ3)`, each κ×R, for a stationary chain.
fn view_means(q: &TransitionMatrix, omega: &DMatrix<f64>) -> Result<(DVector<f64>, [DMatrix<f64>; 3])> {
    let r = q.states();
    if omega.ncols() != r {
        return Err(Error::invalid("emission matrix must have one column per state"));
    }
    let p = DVector::from_vec(hmm::stationary_distribution(q)?.probs().to_vec());
    let qm = q.to_dmatrix();
    let mut backward = DMatrix::zeros(r, r);
    for a in 0..r {
        for b in 0..r {
            backward[(a, b)] = p[a] * qm[(a, b)] / p[b];
        }
    }
    let mu1 = omega * backward;
    let mu2 = omega.clone();
    let mu3 = omega * qm.transpose();
    Ok((p, [mu1, mu2, mu3]))
}

/// Exact moments of the stationary chain with transition matrix `q` and
/// κ×R emission matrix `omega`.
pub fn population_tensors(q: &TransitionMatrix, omega: &DMatrix<f64>) -> Result<MomentTensors> {
    let (p, [mu1, mu2, mu3]) = view_means(q, omega)?;
    let k = omega.nrows();
    let d = DMatrix::from_diagonal(&p);
    let e12 = &mu1 * &d * mu2.transpose();
    let e13 = &mu1 * &d * mu3.transpose();
    let e23 = &mu2 * &d * mu3.transpose();
    let mut e123 = vec![0.0; k * k * k];
    for b in 0..p.len() {
        for i in 0..k {
            let a = p[b] * mu1[(i, b)];
            for j in 0..k {
                let ab = a * mu2[(j, b)];
                for l in 0..k {
                    e123[(i * k + j) * k + l] += ab * mu3[(l, b)];
                }
            }
        }
    }
    Ok(MomentTensors { kappa: k, e12, e13, e23, e123 })
}

/// Which view the other two are mapped onto.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum View {
    Second,
    Third,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SymmetrizedMoments {
    pub view: View,
    pub kappa: usize,
    /// κ×κ pair moment of the two transformed views.
    pub pair: DMatrix<f64>,
    /// κ³ triple moment, same layout as [`MomentTensors::e123`].
    pub triple: Vec<f64>,
    /// Top-R singular values of the moments inverted by the two transforms.
    pub singular_values: Vec<f64>,
}

/// `E_cb V Σ⁻¹ Uᵀ` with `E_ab ≈ U Σ Vᵀ` the rank-R truncation. Maps the
/// conditional means of view a onto those of view c.
fn view_transform(e_cb: &DMatrix<f64>, e_ab: &DMatrix<f64>, r: usize) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let (u, s, v) = top_svd(e_ab, r);
    let condition = s[0] / s[r - 1];
    if !(condition <= MAX_MOMENT_CONDITION) {
        return Err(Error::SingularMoment { condition });
    }
    let inv = DMatrix::from_diagonal(&DVector::from_iterator(r, s.iter().map(|x| 1.0 / x)));
    Ok((e_cb * v * inv * u.transpose(), s))
}

/// Top-r singular triplets, sorted by decreasing singular value.
fn top_svd(m: &DMatrix<f64>, r: usize) -> (DMatrix<f64>, Vec<f64>, DMatrix<f64>) {
    let svd = m.clone().svd(true, true);
    let u = svd.u.expect("requested U");
    let vt = svd.v_t.expect("requested V^T");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    order.truncate(r);
    let s = order.iter().map(|&i| svd.singular_values[i]).collect();
    let uc = DMatrix::from_columns(&order.iter().map(|&i| u.column(i).into_owned()).collect::<Vec<_>>());
    let vc = DMatrix::from_columns(&order.iter().map(|&i| vt.row(i).transpose()).collect::<Vec<_>>());
    (uc, s, vc)
}

/// `out[i, j, l] = Σ a[i, x] b[j, y] c[l, z] t[x, y, z]` for κ×κ factors;
/// `None` leaves that mode untouched.
fn mode_products(t: &[f64], k: usize, mats: [Option<&DMatrix<f64>>; 3]) -> Vec<f64> {
    let mut cur = t.to_vec();
    for (mode, m) in mats.iter().enumerate() {
        let Some(m) = m else { continue };
        let mut next = vec![0.0; k * k * k];
        for i in 0..k {
            for j in 0..k {
                for l in 0..k {
                    let src = cur[(i * k + j) * k + l];
                    if src == 0.0 {
                        continue;
                    }
                    for o in 0..k {
                        let idx = match mode {
                            0 => (o * k + j) * k + l,
                            1 => (i * k + o) * k + l,
                            _ => (i * k + j) * k + o,
                        };
                        let src_idx = match mode {
                            0 => i,
                            1 => j,
                            _ => l,
                        };
                        next[idx] += m[(o, src_idx)] * src;
                    }
                }
            }
        }
        cur = next;
    }
    cur
}

/// Transforms estimated from `first`, moments formed on `second`.
pub fn symmetrize(
    first: &MomentTensors,
    second: &MomentTensors,
    r: usize,
    view: View,
) -> Result<SymmetrizedMoments> {
    if first.kappa != second.kappa {
        return Err(Error::invalid("moment tensors have different alphabets"));
    }
    if r == 0 || r > first.kappa {
        return Err(Error::invalid(format!("need 1 <= R <= kappa, got R = {r}")));
    }
    let k = first.kappa;
    let (pair, triple, s) = match view {
        View::Third => {
            let (a, s1) = view_transform(&first.e23.transpose(), &first.e12, r)?;
            let (b, s2) = view_transform(&first.e13.transpose(), &first.e12.transpose(), r)?;
            let pair = &a * &second.e12 * b.transpose();
            let triple = mode_products(&second.e123, k, [Some(&a), Some(&b), None]);
            (pair, triple, merge_singular(s1, s2))
        }
        View::Second => {
            let (a, s1) = view_transform(&first.e23, &first.e13, r)?;
            let (b, s2) = view_transform(&first.e12.transpose(), &first.e13.transpose(), r)?;
            let pair = &a * &second.e13 * b.transpose();
            let triple = mode_products(&second.e123, k, [Some(&a), None, Some(&b)]);
            (pair, triple, merge_singular(s1, s2))
        }
    };
    Ok(SymmetrizedMoments { view, kappa: k, pair, triple, singular_values: s })
}

fn merge_singular(a: Vec<f64>, b: Vec<f64>) -> Vec<f64> {
    a.iter().zip(&b).map(|(x, y)| x.min(*y)).collect()
}

/// Whitened R×R×R tensor together with the κ×R whitening matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct WhitenedTensor {
    pub r: usize,
    /// `t[(i * R + j) * R + l]`, symmetrised over mode permutations.
    pub t: Vec<f64>,
    pub w: DMatrix<f64>,
    /// Top-R eigenvectors of the symmetrised pair moment (κ×R).
    pub basis: DMatrix<f64>,
    /// Matching eigenvalues, decreasing.
    pub eigenvalues: Vec<f64>,
}

/// `W = U Λ^{-1/2}` from the top-R eigenpairs of the symmetric part of the
/// pair moment, and `T = triple(W, W, W)`.
pub fn whiten(pair: &DMatrix<f64>, triple: &[f64], r: usize) -> Result<WhitenedTensor> {
    let k = pair.nrows();
    if pair.ncols() != k || triple.len() != k * k * k {
        return Err(Error::invalid("pair and triple moments have inconsistent sizes"));
    }
    if r == 0 || r > k {
        return Err(Error::invalid(format!("need 1 <= R <= kappa, got R = {r}")));
    }
    let sym = (pair + pair.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    order.truncate(r);
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let ratio = eigenvalues[r - 1] / eigenvalues[0];
    if !(eigenvalues[0] > 0.0) || !(ratio >= MIN_WHITENING_RATIO) {
        return Err(Error::RankDeficient { ratio });
    }
    let basis = DMatrix::from_columns(
        &order.iter().map(|&i| eig.eigenvectors.column(i).into_owned()).collect::<Vec<_>>(),
    );
    let mut w = basis.clone();
    for (c, lam) in eigenvalues.iter().enumerate() {
        w.column_mut(c).scale_mut(1.0 / lam.sqrt());
    }
    let t = symmetrize_tensor(&contract_all(triple, k, &w), r);
    Ok(WhitenedTensor { r, t, w, basis, eigenvalues })
}

/// `T(W, W, W)` for a κ³ tensor and κ×R matrix.
fn contract_all(t: &[f64], k: usize, w: &DMatrix<f64>) -> Vec<f64> {
    let r = w.ncols();
    // Contract the last mode, then the middle one, then the first.
    let mut s1 = vec![0.0; k * k * r];
    for ij in 0..k * k {
        for l in 0..k {
            let v = t[ij * k + l];
            if v == 0.0 {
                continue;
            }
            for c in 0..r {
                s1[ij * r + c] += v * w[(l, c)];
            }
        }
    }
    let mut s2 = vec![0.0; k * r * r];
    for i in 0..k {
        for j in 0..k {
            for c in 0..r {
                let v = s1[(i * k + j) * r + c];
                for b in 0..r {
                    s2[(i * r + b) * r + c] += v * w[(j, b)];
                }
            }
        }
    }
    let mut out = vec![0.0; r * r * r];
    for i in 0..k {
        for bc in 0..r * r {
            let v = s2[i * r * r + bc];
            for a in 0..r {
                out[a * r * r + bc] += v * w[(i, a)];
            }
        }
    }
    out
}

fn symmetrize_tensor(t: &[f64], r: usize) -> Vec<f64> {
    let idx = |i: usize, j: usize, l: usize| (i * r + j) * r + l;
    let mut out = vec![0.0; r * r * r];
    for i in 0..r {
        for j in 0..r {
            for l in 0..r {
                out[idx(i, j, l)] = (t[idx(i, j, l)]
                    + t[idx(i, l, j)]
                    + t[idx(j, i, l)]
                    + t[idx(j, l, i)]
                    + t[idx(l, i, j)]
                    + t[idx(l, j, i)])
                    / 6.0;
            }
        }
    }
    out
}

/// `T(I, u, u)`.
fn apply_pair(t: &[f64], r: usize, u: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; r];
    for (i, o) in out.iter_mut().enumerate() {
        let mut s = 0.0;
        for j in 0..r {
            for l in 0..r {
                s += t[(i * r + j) * r + l] * u[j] * u[l];
            }
        }
        *o = s;
    }
    out
}

fn apply_triple(t: &[f64], r: usize, u: &[f64]) -> f64 {
    apply_pair(t, r, u).iter().zip(u).map(|(a, b)| a * b).sum()
}

fn normalize(v: &mut [f64]) -> f64 {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    norm
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerConfig {
    pub restarts: usize,
    pub iterations: usize,
}

impl Default for PowerConfig {
    fn default() -> Self {
        Self { restarts: 50, iterations: 100 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Eigenpairs {
    /// In extraction order (decreasing up to noise).
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
    /// Frobenius norm of the tensor left after all deflation rounds.
    pub deflation_residual: f64,
}

/// Power iterations from one start; returns the final iterate and the size
/// of the last move.
fn power_run(t: &[f64], r: usize, mut u: Vec<f64>, iterations: usize) -> (Vec<f64>, f64) {
    let mut last_move = f64::INFINITY;
    for _ in 0..iterations {
        let mut next = apply_pair(t, r, &u);
        if normalize(&mut next) == 0.0 {
            return (u, f64::INFINITY);
        }
        last_move = next.iter().zip(&u).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        u = next;
        if last_move == 0.0 {
            break;
        }
    }
    (u, last_move)
}

/// Robust tensor power method with deflation: R rounds, each keeping the
/// restart with the largest `T(u, u, u)` among those that converged.
pub fn tensor_power_method<G: Rng + ?Sized>(
    t: &[f64],
    r: usize,
    config: &PowerConfig,
    rng: &mut G,
) -> Result<Eigenpairs> {
    if t.len() != r * r * r || r == 0 {
        return Err(Error::invalid("tensor must be R x R x R with R >= 1"));
    }
    if config.restarts == 0 || config.iterations == 0 {
        return Err(Error::invalid("power method needs at least one restart and one iteration"));
    }
    let mut work = t.to_vec();
    let mut values = Vec::with_capacity(r);
    let mut vectors = Vec::with_capacity(r);
    for _ in 0..r {
        let mut best: Option<(f64, Vec<f64>)> = None;
        let mut smallest_move = f64::INFINITY;
        for _ in 0..config.restarts {
            let mut u: Vec<f64> = (0..r).map(|_| StandardNormal.sample(rng)).collect();
            normalize(&mut u);
            let (u, mv) = power_run(&work, r, u, config.iterations);
            smallest_move = smallest_move.min(mv);
            if mv > POWER_TOL {
                continue;
            }
            let lam = apply_triple(&work, r, &u);
            if best.as_ref().is_none_or(|(b, _)| lam > *b) {
                best = Some((lam, u));
            }
        }
        let Some((_, u)) = best else {
            return Err(Error::NonConvergence { last_move: smallest_move });
        };
        let (u, _) = power_run(&work, r, u, config.iterations);
        let lam = apply_triple(&work, r, &u);
        for i in 0..r {
            for j in 0..r {
                for l in 0..r {
                    work[(i * r + j) * r + l] -= lam * u[i] * u[j] * u[l];
                }
            }
        }
        values.push(lam);
        vectors.push(u);
    }
    let deflation_residual = work.iter().map(|x| x * x).sum::<f64>().sqrt();
    Ok(Eigenpairs { values, vectors, deflation_residual })
}

/// `μ_i = λ_i (Wᵀ)⁺ u_i = λ_i U Λ^{1/2} u_i`, one column per component.
pub fn dewhiten(w: &WhitenedTensor, pairs: &Eigenpairs) -> DMatrix<f64> {
    let k = w.basis.nrows();
    let mut scaled = w.basis.clone();
    for (c, lam) in w.eigenvalues.iter().enumerate() {
        scaled.column_mut(c).scale_mut(lam.sqrt());
    }
    let mut out = DMatrix::zeros(k, pairs.values.len());
    for (i, (lam, u)) in pairs.values.iter().zip(&pairs.vectors).enumerate() {
        let col = &scaled * DVector::from_column_slice(u) * *lam;
        out.set_column(i, &col);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralDiagnostics {
    /// Top-R singular values of the moments inverted during symmetrisation.
    pub singular_values: Vec<f64>,
    /// Power-method eigenvalues of the third-view run.
    pub eigenvalues: Vec<f64>,
    pub deflation_residual: f64,
    /// Label permutation applied to the third-view components.
    pub third_view_permutation: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralEstimate {
    #[serde(rename = "Q_hat")]
    pub q_hat: TransitionMatrix,
    /// κ rows of R emission probabilities.
    #[serde(rename = "Omega_hat")]
    pub omega_hat: Vec<Vec<f64>>,
    /// Component assigned to each state for the emission matrix.
    pub permutation: Vec<usize>,
    pub diagnostics: SpectralDiagnostics,
}

impl SpectralEstimate {
    pub fn omega_matrix(&self) -> DMatrix<f64> {
        let k = self.omega_hat.len();
        let r = self.q_hat.states();
        DMatrix::from_fn(k, r, |m, s| self.omega_hat[m][s])
    }
}

/// Column permutation `τ` (lexicographically first on ties) minimising
/// `max_i ‖x[·, τ(i)] − reference[·, i]‖²`.
pub fn match_columns(x: &DMatrix<f64>, reference: &DMatrix<f64>) -> Vec<usize> {
    let r = reference.ncols();
    let mut best = (0..r).collect();
    let mut best_d = f64::INFINITY;
    for p in stats::permutations(r) {
        let d = (0..r)
            .map(|i| (x.column(p[i]) - reference.column(i)).norm_squared())
            .fold(0.0, f64::max);
        if d < best_d {
            best_d = d;
            best = p;
        }
    }
    best
}

fn permute_columns(x: &DMatrix<f64>, perm: &[usize]) -> DMatrix<f64> {
    DMatrix::from_columns(&perm.iter().map(|&p| x.column(p).into_owned()).collect::<Vec<_>>())
}

fn clip_to_simplex(v: &mut [f64]) {
    v.iter_mut().for_each(|x| *x = x.max(0.0));
    let s: f64 = v.iter().sum();
    if s > 0.0 {
        v.iter_mut().for_each(|x| *x /= s);
    } else {
        let u = 1.0 / v.len() as f64;
        v.iter_mut().for_each(|x| *x = u);
    }
}

/// Label-fix the recovered components against a reference `(Q, Ω)` and
/// solve for `Q̂`.
pub fn recover_parameters(
    xi2: &DMatrix<f64>,
    xi3: &DMatrix<f64>,
    reference_q: &TransitionMatrix,
    reference_omega: &DMatrix<f64>,
) -> Result<(TransitionMatrix, DMatrix<f64>, Vec<usize>, Vec<usize>)> {
    let r = reference_q.states();
    if xi2.ncols() != r || xi3.ncols() != r || reference_omega.ncols() != r {
        return Err(Error::invalid("component matrices must have R columns"));
    }
    let tau2 = match_columns(xi2, reference_omega);
    let tau3 = match_columns(xi3, &(reference_omega * reference_q.to_dmatrix().transpose()));
    let omega = permute_columns(xi2, &tau2);
    let xi3 = permute_columns(xi3, &tau3);

    let svd = omega.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let ratio = smin / smax;
    if !(ratio >= MIN_OMEGA_RATIO) {
        return Err(Error::SingularOmega { ratio });
    }
    let pinv = svd.pseudo_inverse(smax * MIN_OMEGA_RATIO).map_err(|e| Error::invalid(e.to_string()))?;
    let qt = pinv * xi3;
    let mut entries = Vec::with_capacity(r * r);
    for i in 0..r {
        let mut row: Vec<f64> = (0..r).map(|j| qt[(j, i)]).collect();
        clip_to_simplex(&mut row);
        entries.extend(row);
    }
    let mut omega = omega;
    for c in 0..r {
        let mut col: Vec<f64> = omega.column(c).iter().copied().collect();
        clip_to_simplex(&mut col);
        omega.set_column(c, &DVector::from_vec(col));
    }
    Ok((TransitionMatrix::new(r, entries)?, omega, tau2, tau3))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[derive(Default)]
pub struct SpectralConfig {
    pub power: PowerConfig,
    pub seed: u64,
}


/// Full pipeline from moment tensors of the two halves.
pub fn estimate_from_tensors(
    first: &MomentTensors,
    second: &MomentTensors,
    r: usize,
    reference_q: &TransitionMatrix,
    reference_omega: &DMatrix<f64>,
    config: &SpectralConfig,
) -> Result<SpectralEstimate> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let sym3 = symmetrize(first, second, r, View::Third)?;
    let w3 = whiten(&sym3.pair, &sym3.triple, r)?;
    let pairs3 = tensor_power_method(&w3.t, r, &config.power, &mut rng)?;
    let xi3 = dewhiten(&w3, &pairs3);

    let sym2 = symmetrize(first, second, r, View::Second)?;
    let w2 = whiten(&sym2.pair, &sym2.triple, r)?;
    let pairs2 = tensor_power_method(&w2.t, r, &config.power, &mut rng)?;
    let xi2 = dewhiten(&w2, &pairs2);

    let (q_hat, omega, tau2, tau3) = recover_parameters(&xi2, &xi3, reference_q, reference_omega)?;
    let omega_hat = (0..omega.nrows()).map(|m| omega.row(m).iter().copied().collect()).collect();
    Ok(SpectralEstimate {
        q_hat,
        omega_hat,
        permutation: tau2,
        diagnostics: SpectralDiagnostics {
            singular_values: merge_singular(sym3.singular_values, sym2.singular_values),
            eigenvalues: pairs3.values,
            deflation_residual: pairs3.deflation_residual.max(pairs2.deflation_residual),
            third_view_permutation: tau3,
        },
    })
}

/// Spectral estimate from a coarsened series, splitting it at `⌈n/2⌉`.
pub fn spectral_estimate(
    bins: &CoarsenedSeries,
    r: usize,
    reference_q: &TransitionMatrix,
    reference_omega: &DMatrix<f64>,
    config: &SpectralConfig,
) -> Result<SpectralEstimate> {
    let n = bins.len();
    if n < 6 {
        return Err(Error::TooShort { n, min: 6 });
    }
    let split = n.div_ceil(2);
    let first = empirical_tensors(&CoarsenedSeries { kappa: bins.kappa, bins: bins.bins[..split].to_vec() })?;
    let second = empirical_tensors(&CoarsenedSeries { kappa: bins.kappa, bins: bins.bins[split..].to_vec() })?;
    estimate_from_tensors(&first, &second, r, reference_q, reference_omega, config)
}
