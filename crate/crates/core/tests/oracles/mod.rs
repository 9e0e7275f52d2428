//! Closed-form references for the log-linear (biased Gompertz) model:
//! `D_t = a + c D_{t-1} + N(0, q)`, `log Y_t = D_t + N(0, r)`.
#![allow(dead_code)]

use std::f64::consts::PI;

#[derive(Debug, Clone)]
pub struct KalmanOutput {
    pub loglik: f64,
    /// Filtered mean and variance of `D_t`, `t = 1..=T`.
    pub filtered: Vec<(f64, f64)>,
    /// Smoothed mean and variance of `D_t`, `t = 0..=T`.
    pub smoothed: Vec<(f64, f64)>,
}

/// Kalman filter and RTS smoother. `f[t - 1]` is `log y_t` or `None`.
/// The prior is on `D_0` with mean `m0`, variance `p0`.
pub fn kalman(a: f64, c: f64, q: f64, r: f64, m0: f64, p0: f64, f: &[Option<f64>]) -> KalmanOutput {
    let n = f.len();
    let mut pred = Vec::with_capacity(n);
    let mut filt = vec![(m0, p0)];
    let mut loglik = 0.0;
    let (mut m, mut p) = (m0, p0);
    for ft in f {
        let (mp, pp) = (a + c * m, c * c * p + q);
        pred.push((mp, pp));
        match ft {
            Some(y) => {
                let s = pp + r;
                let e = y - mp;
                loglik += -0.5 * ((2.0 * PI * s).ln() + e * e / s);
                let k = pp / s;
                m = mp + k * e;
                p = (1.0 - k) * pp;
            }
            None => {
                m = mp;
                p = pp;
            }
        }
        filt.push((m, p));
    }
    let mut smoothed = filt.clone();
    for t in (0..n).rev() {
        let (mf, pf) = filt[t];
        let (mp, pp) = pred[t];
        let (ms, ps) = smoothed[t + 1];
        let g = pf * c / pp;
        smoothed[t] = (mf + g * (ms - mp), pf + g * g * (ps - pp));
    }
    KalmanOutput {
        loglik,
        filtered: filt[1..].to_vec(),
        smoothed,
    }
}

/// Trapezoid rule on `n` equal intervals.
pub fn trapezoid(f: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> f64 {
    let h = (hi - lo) / n as f64;
    let inner: f64 = (1..n).map(|i| f(lo + i as f64 * h)).sum();
    h * (0.5 * (f(lo) + f(hi)) + inner)
}

/// Two-sided Kolmogorov-Smirnov statistic against a continuous cdf.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &x)| {
            let u = cdf(x);
            (u - i as f64 / n).abs().max(((i + 1) as f64 / n - u).abs())
        })
        .fold(0.0, f64::max)
}

/// Asymptotic 5% critical value of the KS statistic.
pub fn ks_critical_5pct(n: usize) -> f64 {
    1.358 / (n as f64).sqrt()
}

/// Mean and its standard error.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, (v / n).sqrt())
}
