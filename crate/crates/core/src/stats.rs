//! Small numerical and sampling helpers shared by the samplers and diagnostics.

use itertools::Itertools;
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use statrs::distribution::{ContinuousCDF, Normal};

pub const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Log of a Gamma(shape, 1) draw. Stays finite for tiny shapes where the
/// draw itself would underflow to zero.
pub fn ln_gamma_draw<R: Rng + ?Sized>(shape: f64, rng: &mut R) -> f64 {
    debug_assert!(shape > 0.0);
    if shape >= 1.0 {
        let g = Gamma::new(shape, 1.0).expect("positive shape");
        g.sample(rng).ln()
    } else {
        // G(a) = G(a + 1) * U^(1/a)
        let g = Gamma::new(shape + 1.0, 1.0).expect("positive shape");
        let u: f64 = rng.random::<f64>();
        g.sample(rng).ln() + u.max(f64::MIN_POSITIVE).ln() / shape
    }
}

/// Draw from Dirichlet(alpha) into `out`.
pub fn sample_dirichlet_into<R: Rng + ?Sized>(alpha: &[f64], rng: &mut R, out: &mut [f64]) {
    assert_eq!(alpha.len(), out.len());
    for (o, &a) in out.iter_mut().zip(alpha) {
        *o = ln_gamma_draw(a, rng);
    }
    let max = out.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for o in out.iter_mut() {
        *o = (*o - max).exp();
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
}

pub fn sample_dirichlet<R: Rng + ?Sized>(alpha: &[f64], rng: &mut R) -> Vec<f64> {
    let mut out = vec![0.0; alpha.len()];
    sample_dirichlet_into(alpha, rng, &mut out);
    out
}

/// Inverse-gamma draw with shape `a` and scale `b` (density ∝ x^{-a-1} e^{-b/x}).
pub fn sample_inv_gamma<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> f64 {
    b / ln_gamma_draw(a, rng).exp()
}

pub fn sample_normal<R: Rng + ?Sized>(mean: f64, sd: f64, rng: &mut R) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    mean + sd * z
}

/// Index drawn proportionally to the nonnegative `weights`.
pub fn sample_categorical<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, &w) in weights.iter().enumerate() {
        if u < w {
            return i;
        }
        u -= w;
    }
    // Rounding left u marginally above the last cumulative weight.
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(weights.len() - 1)
}

pub fn ln_normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -LN_SQRT_2PI - 0.5 * var.ln() - 0.5 * d * d / var
}

pub fn std_normal_cdf(x: f64) -> f64 {
    Normal::standard().cdf(x)
}

pub fn std_normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample variance with the n − 1 denominator; zero for fewer than two values.
pub fn variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

pub fn std_dev(xs: &[f64]) -> f64 {
    variance(xs).sqrt()
}

/// Empirical quantile with linear interpolation between order statistics.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn quantile(xs: &[f64], p: f64) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, p)
}

pub fn median(xs: &[f64]) -> f64 {
    quantile(xs, 0.5)
}

/// Equal-tailed interval holding `1 − alpha` of the mass.
pub fn equal_tailed_interval(xs: &[f64], alpha: f64) -> (f64, f64) {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    (
        quantile_sorted(&v, alpha / 2.0),
        quantile_sorted(&v, 1.0 - alpha / 2.0),
    )
}

/// Kolmogorov–Smirnov distance between the empirical law of `xs` and N(0, 1).
pub fn ks_std_normal(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = std_normal_cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Monte Carlo standard error of the mean of an autocorrelated series by
/// non-overlapping batch means.
pub fn batch_means_se(xs: &[f64], batches: usize) -> f64 {
    let batches = batches.clamp(2, xs.len().max(2));
    let size = xs.len() / batches;
    if size == 0 {
        return (variance(xs) / xs.len() as f64).sqrt();
    }
    let means: Vec<f64> = (0..batches)
        .map(|b| mean(&xs[b * size..(b + 1) * size]))
        .collect();
    (variance(&means) / batches as f64).sqrt()
}

/// All permutations of `0..r` in lexicographic order.
pub fn permutations(r: usize) -> Vec<Vec<usize>> {
    (0..r).permutations(r).collect()
}

/// Trapezoid rule over a (not necessarily uniform) grid.
pub fn trapezoid(grid: &[f64], values: &[f64]) -> f64 {
    grid.windows(2)
        .zip(values.windows(2))
        .map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1]))
        .sum()
}

pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let step = (hi - lo) / (n - 1) as f64;
    (0..n).map(|i| lo + step * i as f64).collect()
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Log density of Dirichlet(alpha) at `x`.
pub fn ln_dirichlet_pdf(x: &[f64], alpha: &[f64]) -> f64 {
    use statrs::function::gamma::ln_gamma;
    let a0: f64 = alpha.iter().sum();
    let mut out = ln_gamma(a0);
    for (&xi, &ai) in x.iter().zip(alpha) {
        out += (ai - 1.0) * xi.ln() - ln_gamma(ai);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn dirichlet_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let alpha = [4.0, 1.0, 2.5];
        let a0: f64 = alpha.iter().sum();
        let n = 100_000;
        let mut sum = [0.0; 3];
        let mut sq = [0.0; 3];
        for _ in 0..n {
            let d = sample_dirichlet(&alpha, &mut rng);
            assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for i in 0..3 {
                sum[i] += d[i];
                sq[i] += d[i] * d[i];
            }
        }
        for i in 0..3 {
            let m = alpha[i] / a0;
            let var = m * (1.0 - m) / (a0 + 1.0);
            let se = (var / n as f64).sqrt();
            assert!((sum[i] / n as f64 - m).abs() < 3.0 * se, "mean {i}");
            let emp_var = sq[i] / n as f64 - (sum[i] / n as f64).powi(2);
            // Var of the squared draw is bounded by E[x^4] <= E[x^2].
            let se_var = ((m * m + var) / n as f64).sqrt();
            assert!((emp_var - var).abs() < 3.0 * se_var, "var {i}");
        }
    }

    #[test]
    fn dirichlet_tiny_shapes_stay_normalised() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let alpha = vec![0.01; 40];
        for _ in 0..1000 {
            let d = sample_dirichlet(&alpha, &mut rng);
            assert!(d.iter().all(|x| x.is_finite() && *x >= 0.0));
            assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn inv_gamma_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (a, b) = (5.0, 2.0);
        let n = 200_000;
        let m: f64 = (0..n).map(|_| sample_inv_gamma(a, b, &mut rng)).sum::<f64>() / n as f64;
        let exact = b / (a - 1.0);
        let sd = (b * b / ((a - 1.0).powi(2) * (a - 2.0))).sqrt();
        assert!((m - exact).abs() < 3.0 * sd / (n as f64).sqrt());
    }

    #[test]
    fn quantiles_interpolate() {
        let xs = [3.0, 1.0, 2.0, 4.0];
        assert_eq!(quantile(&xs, 0.0), 1.0);
        assert_eq!(quantile(&xs, 1.0), 4.0);
        assert!((quantile(&xs, 0.5) - 2.5).abs() < 1e-15);
        let (lo, hi) = equal_tailed_interval(&xs, 1.0);
        assert_eq!(lo, hi);
    }

    #[test]
    fn ks_of_normal_quantiles_is_small() {
        let n = 1000;
        let xs: Vec<f64> = (0..n)
            .map(|i| std_normal_quantile((i as f64 + 0.5) / n as f64))
            .collect();
        let d = ks_std_normal(&xs);
        assert!(d <= 0.5 / n as f64 + 1e-9, "{d}");
        let shifted: Vec<f64> = xs.iter().map(|x| x + 1.0).collect();
        assert!(ks_std_normal(&shifted) > 0.3);
    }

    #[test]
    fn permutations_are_lexicographic() {
        assert_eq!(
            permutations(3),
            vec![
                vec![0, 1, 2],
                vec![0, 2, 1],
                vec![1, 0, 2],
                vec![1, 2, 0],
                vec![2, 0, 1],
                vec![2, 1, 0]
            ]
        );
    }

    #[test]
    fn categorical_frequencies() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let w = [0.2, 0.0, 0.8];
        let mut counts = [0usize; 3];
        for _ in 0..50_000 {
            counts[sample_categorical(&w, &mut rng)] += 1;
        }
        assert_eq!(counts[1], 0);
        assert!((counts[0] as f64 / 50_000.0 - 0.2).abs() < 0.01);
    }
}
