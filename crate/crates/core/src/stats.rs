//! Summary statistics and MCMC diagnostics.

use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return f64::NAN;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64
}

pub fn std_dev(xs: &[f64]) -> f64 {
    variance(xs).sqrt()
}

/// Linear-interpolation quantile of already sorted data (R's type 7).
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 0 {
        return f64::NAN;
    }
    let h = (n - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn sorted(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

pub fn quantile(xs: &[f64], p: f64) -> f64 {
    quantile_sorted(&sorted(xs), p)
}

pub fn median(xs: &[f64]) -> f64 {
    quantile(xs, 0.5)
}

/// `log(sum(exp(xs)))`, returning `-inf` when every entry is `-inf`.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY || m.is_nan() {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Effective sample size using Geyer's initial monotone sequence estimator.
pub fn effective_sample_size(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 4 {
        return n as f64;
    }
    let m = mean(xs);
    let centered: Vec<f64> = xs.iter().map(|x| x - m).collect();
    let gamma0 = centered.iter().map(|x| x * x).sum::<f64>() / n as f64;
    if gamma0 <= 0.0 {
        return n as f64;
    }
    let autocov = |lag: usize| -> f64 {
        centered[..n - lag]
            .iter()
            .zip(&centered[lag..])
            .map(|(a, b)| a * b)
            .sum::<f64>()
            / n as f64
    };
    // Sum of adjacent pairs Gamma_k = gamma(2k) + gamma(2k+1), truncated at
    // the first non-positive pair and forced to be non-increasing.
    let mut sum = 0.0;
    let mut prev_pair = f64::INFINITY;
    let mut k = 0;
    while 2 * k + 1 < n {
        let g0 = if k == 0 { gamma0 } else { autocov(2 * k) };
        let pair = g0 + autocov(2 * k + 1);
        if pair <= 0.0 {
            break;
        }
        let pair = pair.min(prev_pair);
        sum += pair;
        prev_pair = pair;
        k += 1;
    }
    let tau = (2.0 * sum / gamma0 - 1.0).max(1.0 / n as f64);
    (n as f64 / tau).min(n as f64 * (n as f64).log10().max(1.0))
}

/// Monte Carlo standard error of the mean of a correlated chain.
pub fn mc_standard_error(xs: &[f64]) -> f64 {
    std_dev(xs) / effective_sample_size(xs).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_distr::StandardNormal;

    #[test]
    fn quantile_type7() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&xs, 0.0), 1.0);
        assert_eq!(quantile_sorted(&xs, 1.0), 4.0);
        assert!((quantile_sorted(&xs, 0.5) - 2.5).abs() < 1e-15);
        assert!((quantile_sorted(&xs, 0.25) - 1.75).abs() < 1e-15);
    }

    #[test]
    fn log_sum_exp_handles_extremes() {
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY; 3]), f64::NEG_INFINITY);
        assert!((log_sum_exp(&[1000.0, 1000.0]) - (1000.0 + 2f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn ess_of_ar1_matches_theory() {
        // AR(1) with coefficient rho has integrated autocorrelation (1+rho)/(1-rho).
        let rho: f64 = 0.8;
        let n = 200_000;
        let mut rng = rand_xoshiro::Xoshiro256PlusPlus::seed_from_u64(3);
        let mut x = 0.0;
        let mut xs = Vec::with_capacity(n);
        for _ in 0..n {
            let z: f64 = rng.sample(StandardNormal);
            x = rho * x + (1.0 - rho * rho).sqrt() * z;
            xs.push(x);
        }
        let expected = n as f64 * (1.0 - rho) / (1.0 + rho);
        let ess = effective_sample_size(&xs);
        assert!(
            (ess / expected - 1.0).abs() < 0.1,
            "ess {ess} vs {expected}"
        );
    }
}
