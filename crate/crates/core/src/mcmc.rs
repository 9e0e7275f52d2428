//! Posterior sampling for the six benchmark models.
//!
//! The sampler works on the log states `D_t = log X_t`, `t = 0..=T`, with
//! `D_0 ~ N(mu0, prec0)`. Each iteration runs
//!
//! 1. a latent sweep: exact Gibbs for the biased Gompertz model (linear
//!    Gaussian on the log scale), single-site random-walk Metropolis otherwise;
//! 2. a joint random-walk update of `(a, b)` under their uniform priors;
//! 3. log-scale random-walk updates of `phi` and (unless fixed) `tau` under
//!    half-Cauchy priors.
//!
//! Iterations `[0, n_adapt)` tune proposal scales, `[n_adapt, n_adapt + n_burn)`
//! run with frozen scales and are discarded, and the rest are kept.
//!
//! Gibbs full conditionals with `c = 1 + b` and `1_k` the observation
//! indicator:
//!
//! ```text
//! 0 < k < T:  P = phi (1 + c^2) + tau 1_k
//!             m = [phi (a + c D_{k-1}) + phi c (D_{k+1} - a) + tau F_k 1_k] / P
//! k = T:      P = phi + tau 1_T
//!             m = [phi (a + c D_{T-1}) + tau F_T 1_T] / P
//! k = 0:      P = prec0 + phi c^2
//!             m = [prec0 mu0 + phi c (D_1 - a)] / P
//! ```

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;

#[cfg(not(feature = "std"))]
use num_traits::Float;

use crate::dist::{halfcauchy_logpdf, normal_logpdf, normal_sample, HalfCauchy};
use crate::error::{Error, Result};
use crate::models::{
    obs_term_log, observe, process_term_log, step, Embedding, ModelKind, ModelParams,
    ObservationSeries, ProcessFamily, Trajectory,
};
use crate::scoring::ForecastEnsemble;
use crate::stats;

const PREC_FLOOR: f64 = 1e-8;
const PREC_CEIL: f64 = 1e12;

/// Priors on the static parameters and the initial log state.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PriorSet {
    pub a_bounds: (f64, f64),
    pub b_bounds: (f64, f64),
    pub phi_prior: HalfCauchy,
    pub tau_prior: HalfCauchy,
    /// Mean of the normal prior on `log X_0`.
    pub init_mu0: f64,
    /// Precision of the normal prior on `log X_0`.
    pub init_prec0: f64,
}

impl PriorSet {
    /// Default priors for a model: uniform `a`, `b`, half-Cauchy(100) precisions.
    pub fn for_model(kind: ModelKind, init_mu0: f64, init_prec0: f64) -> Self {
        let hc = HalfCauchy::new(100.0).expect("positive scale");
        Self {
            a_bounds: kind.a_bounds(),
            b_bounds: (-10.0, 10.0),
            phi_prior: hc,
            tau_prior: hc,
            init_mu0,
            init_prec0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |(lo, hi): (f64, f64)| lo.is_finite() && hi.is_finite() && lo < hi;
        if !ok(self.a_bounds) || !ok(self.b_bounds) {
            return Err(Error::Config(String::from(
                "prior bounds must be finite with lo < hi",
            )));
        }
        if !self.init_mu0.is_finite() || !(self.init_prec0 > 0.0) {
            return Err(Error::Config(String::from(
                "initial-state prior must have finite mean and positive precision",
            )));
        }
        Ok(())
    }

    fn ab_inside(&self, a: f64, b: f64) -> bool {
        a >= self.a_bounds.0 && a <= self.a_bounds.1 && b >= self.b_bounds.0 && b <= self.b_bounds.1
    }
}

/// Latent-state update used by [`run_chain`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum LatentSampler {
    /// Gibbs where a closed form exists (biased Gompertz), Metropolis otherwise.
    #[default]
    Auto,
    Gibbs,
    Metropolis,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct McmcConfig {
    pub n_iter: usize,
    pub n_burn: usize,
    pub n_adapt: usize,
    pub seed: u64,
    pub thin: usize,
    pub latent: LatentSampler,
    /// Keep full latent trajectories for every kept draw.
    pub keep_states: bool,
}

impl Default for McmcConfig {
    fn default() -> Self {
        Self {
            n_iter: 10_000,
            n_burn: 2_000,
            n_adapt: 1_000,
            seed: 0,
            thin: 1,
            latent: LatentSampler::Auto,
            keep_states: true,
        }
    }
}

impl McmcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_burn + self.n_adapt >= self.n_iter {
            return Err(Error::Config(String::from(
                "n_burn + n_adapt must be below n_iter",
            )));
        }
        if self.thin == 0 {
            return Err(Error::Config(String::from("thin must be at least 1")));
        }
        Ok(())
    }

    /// Number of draws kept.
    pub fn n_kept(&self) -> usize {
        (self.n_iter - self.n_adapt - self.n_burn).div_ceil(self.thin)
    }
}

/// Observation-precision scenario.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Scenario {
    TauFixed(f64),
    TauEstimated,
}

impl Scenario {
    pub fn label(&self) -> &'static str {
        match self {
            Scenario::TauFixed(_) => "tau_fixed",
            Scenario::TauEstimated => "tau_estimated",
        }
    }

    pub fn is_fixed(&self) -> bool {
        matches!(self, Scenario::TauFixed(_))
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Diagnostics {
    /// Acceptance rate per block over the kept phase.
    pub acceptance: BTreeMap<String, f64>,
    /// Effective sample size per scalar parameter.
    pub ess: BTreeMap<String, f64>,
    pub warnings: Vec<String>,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PosteriorSamples {
    pub kind: ModelKind,
    pub params: Vec<ModelParams>,
    /// Full trajectories, present when `keep_states` was set.
    pub states: Vec<Trajectory>,
    /// `X_T` for each kept draw; forecasts start here.
    pub final_states: Vec<f64>,
    pub diagnostics: Diagnostics,
}

impl PosteriorSamples {
    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Draws of a named scalar: `a`, `b`, `phi` or `tau`.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let get: fn(&ModelParams) -> f64 = match name {
            "a" => |p| p.a,
            "b" => |p| p.b,
            "phi" => |p| p.proc_prec,
            "tau" => |p| p.obs_prec,
            _ => return None,
        };
        Some(self.params.iter().map(get).collect())
    }

    /// Draws of `log X_t` from stored trajectories.
    pub fn log_state_column(&self, t: usize) -> Vec<f64> {
        self.states.iter().map(|s| s.at(t).ln()).collect()
    }
}

fn term_or_neg_inf(r: Result<f64>) -> f64 {
    match r {
        Ok(v) if !v.is_nan() => v,
        _ => f64::NEG_INFINITY,
    }
}

/// Log-scale transition density sum; `-inf` when any term is invalid.
fn process_ll(kind: ModelKind, d: &[f64], p: &ModelParams) -> f64 {
    let mut s = 0.0;
    for t in 1..d.len() {
        s += term_or_neg_inf(process_term_log(kind, d[t - 1], d[t], p));
        if s == f64::NEG_INFINITY {
            break;
        }
    }
    s
}

fn obs_ll(kind: ModelKind, d: &[f64], f: &[Option<f64>], p: &ModelParams) -> f64 {
    let mut s = 0.0;
    for (t, fv) in f.iter().enumerate() {
        if let Some(fv) = fv {
            s += term_or_neg_inf(obs_term_log(kind, d[t], *fv, p));
            if s == f64::NEG_INFINITY {
                break;
            }
        }
    }
    s
}

fn accept<R: Rng + ?Sized>(log_ratio: f64, rng: &mut R) -> bool {
    if log_ratio.is_nan() {
        return false;
    }
    log_ratio >= 0.0 || rng.random::<f64>().ln() < log_ratio
}

/// Mean and precision of the normal full conditional of `D_k` for the
/// biased Gompertz model.
pub fn gompertz_conditional(
    d: &[f64],
    f: &[Option<f64>],
    k: usize,
    params: &ModelParams,
    priors: &PriorSet,
) -> Result<(f64, f64)> {
    let (a, c, phi, tau) = (params.a, 1.0 + params.b, params.proc_prec, params.obs_prec);
    let (mut prec, mut num) = if k == 0 {
        (priors.init_prec0, priors.init_prec0 * priors.init_mu0)
    } else {
        (phi, phi * (a + c * d[k - 1]))
    };
    if k + 1 < d.len() {
        prec += phi * c * c;
        num += phi * c * (d[k + 1] - a);
    }
    if let Some(fk) = f[k] {
        prec += tau;
        num += tau * fk;
    }
    if !(prec > 0.0) || !prec.is_finite() {
        return Err(Error::Internal(alloc::format!(
            "full conditional precision {prec} at state {k}"
        )));
    }
    Ok((num / prec, prec))
}

/// One Gibbs sweep over `D_0..=D_T` for the biased Gompertz model.
///
/// `f` is the dense log-observation lookup of length `T + 1`.
pub fn gibbs_latent_gompertz<R: Rng + ?Sized>(
    d: &mut [f64],
    f: &[Option<f64>],
    params: &ModelParams,
    priors: &PriorSet,
    rng: &mut R,
) -> Result<()> {
    if f.len() != d.len() {
        return Err(Error::Internal(String::from(
            "latent and observation lengths differ",
        )));
    }
    for k in 0..d.len() {
        let (mean, prec) = gompertz_conditional(d, f, k, params, priors)?;
        d[k] = normal_sample(mean, prec, rng);
    }
    Ok(())
}

/// Log posterior factors that involve `D_k`, evaluated at `dk`.
fn site_log_target(
    kind: ModelKind,
    d: &[f64],
    f: &[Option<f64>],
    k: usize,
    dk: f64,
    params: &ModelParams,
    priors: &PriorSet,
) -> f64 {
    let mut s = 0.0;
    if k == 0 {
        s += normal_logpdf(dk, priors.init_mu0, priors.init_prec0);
    } else {
        s += term_or_neg_inf(process_term_log(kind, d[k - 1], dk, params));
    }
    if k + 1 < d.len() {
        s += term_or_neg_inf(process_term_log(kind, dk, d[k + 1], params));
    }
    if let Some(fk) = f[k] {
        s += term_or_neg_inf(obs_term_log(kind, dk, fk, params));
    }
    s
}

/// Single-site random-walk Metropolis sweep over `D_0..=D_T`.
///
/// `step_scale[k]` is the proposal standard deviation for `D_k`; per-site
/// acceptance flags are written to `accepted`. Returns the number accepted.
#[allow(clippy::too_many_arguments)]
pub fn mh_latent_block<R: Rng + ?Sized>(
    kind: ModelKind,
    d: &mut [f64],
    f: &[Option<f64>],
    params: &ModelParams,
    priors: &PriorSet,
    step_scale: &[f64],
    accepted: &mut [bool],
    rng: &mut R,
) -> usize {
    let mut n_acc = 0;
    for k in 0..d.len() {
        let cur = site_log_target(kind, d, f, k, d[k], params, priors);
        let z: f64 = rng.sample(StandardNormal);
        let prop = d[k] + step_scale[k] * z;
        let new = site_log_target(kind, d, f, k, prop, params, priors);
        let ok = new > f64::NEG_INFINITY && accept(new - cur, rng);
        if ok {
            d[k] = prop;
            n_acc += 1;
        }
        accepted[k] = ok;
    }
    n_acc
}

/// Proposal state for the static-parameter blocks.
#[derive(Debug, Clone)]
pub struct StaticSampler {
    ab_base: [[f64; 2]; 2],
    ab_log_scale: f64,
    ab_mean: [f64; 2],
    ab_m2: [[f64; 2]; 2],
    ab_n: usize,
    phi_log_sd: f64,
    tau_log_sd: f64,
    pub adapting: bool,
    adapt_iter: usize,
}

/// Acceptance flags from one static update.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StaticAccepts {
    pub ab: bool,
    pub phi: bool,
    pub tau: bool,
}

const AB_TARGET: f64 = 0.35;
const SCALAR_TARGET: f64 = 0.44;
const AB_EMPIRICAL_AFTER: usize = 200;

impl StaticSampler {
    /// `ab_cov` seeds the `(a, b)` proposal covariance.
    pub fn new(ab_cov: [[f64; 2]; 2]) -> Self {
        Self {
            ab_base: ab_cov,
            ab_log_scale: 0.0,
            ab_mean: [0.0; 2],
            ab_m2: [[0.0; 2]; 2],
            ab_n: 0,
            phi_log_sd: 0.3,
            tau_log_sd: 0.3,
            adapting: true,
            adapt_iter: 0,
        }
    }

    fn ab_cov(&self) -> [[f64; 2]; 2] {
        let base = if self.ab_n >= AB_EMPIRICAL_AFTER {
            let n = (self.ab_n - 1) as f64;
            let s = 2.38 * 2.38 / 2.0;
            let mut c = [[0.0; 2]; 2];
            for i in 0..2 {
                for j in 0..2 {
                    c[i][j] = s * self.ab_m2[i][j] / n;
                }
                c[i][i] += 1e-12;
            }
            c
        } else {
            self.ab_base
        };
        let g = (2.0 * self.ab_log_scale).exp();
        [
            [g * base[0][0], g * base[0][1]],
            [g * base[1][0], g * base[1][1]],
        ]
    }

    fn record_ab(&mut self, a: f64, b: f64) {
        self.ab_n += 1;
        let x = [a, b];
        let n = self.ab_n as f64;
        let delta = [x[0] - self.ab_mean[0], x[1] - self.ab_mean[1]];
        self.ab_mean[0] += delta[0] / n;
        self.ab_mean[1] += delta[1] / n;
        for i in 0..2 {
            for j in 0..2 {
                self.ab_m2[i][j] += delta[i] * (x[j] - self.ab_mean[j]);
            }
        }
    }

    fn gain(&self) -> f64 {
        (1.0 / ((self.adapt_iter + 1) as f64).sqrt()).min(0.5)
    }

    /// One sweep over `(a, b)`, `phi` and (unless fixed) `tau`.
    pub fn update<R: Rng + ?Sized>(
        &mut self,
        kind: ModelKind,
        d: &[f64],
        f: &[Option<f64>],
        params: &mut ModelParams,
        priors: &PriorSet,
        rng: &mut R,
    ) -> StaticAccepts {
        let mut acc = StaticAccepts::default();
        let mut cur_proc = process_ll(kind, d, params);

        // (a, b): symmetric Gaussian walk, uniform prior.
        let cov = self.ab_cov();
        let l00 = cov[0][0].max(0.0).sqrt();
        let l10 = if l00 > 0.0 { cov[1][0] / l00 } else { 0.0 };
        let l11 = (cov[1][1] - l10 * l10).max(0.0).sqrt();
        let z0: f64 = rng.sample(StandardNormal);
        let z1: f64 = rng.sample(StandardNormal);
        let mut prop = *params;
        prop.a += l00 * z0;
        prop.b += l10 * z0 + l11 * z1;
        if priors.ab_inside(prop.a, prop.b) {
            let new_proc = process_ll(kind, d, &prop);
            if new_proc > f64::NEG_INFINITY && accept(new_proc - cur_proc, rng) {
                *params = prop;
                cur_proc = new_proc;
                acc.ab = true;
            }
        }

        // phi on the log scale, half-Cauchy prior plus Jacobian.
        let z: f64 = rng.sample(StandardNormal);
        let new_phi = params.proc_prec * (self.phi_log_sd * z).exp();
        if (PREC_FLOOR..=PREC_CEIL).contains(&new_phi) {
            let mut prop = *params;
            prop.proc_prec = new_phi;
            let new_proc = process_ll(kind, d, &prop);
            let lr = new_proc - cur_proc + log_prec_prior(new_phi, priors.phi_prior)
                - log_prec_prior(params.proc_prec, priors.phi_prior);
            if new_proc > f64::NEG_INFINITY && accept(lr, rng) {
                *params = prop;
                acc.phi = true;
            }
        }

        if !params.obs_prec_fixed {
            let z: f64 = rng.sample(StandardNormal);
            let new_tau = params.obs_prec * (self.tau_log_sd * z).exp();
            if (PREC_FLOOR..=PREC_CEIL).contains(&new_tau) {
                let cur_obs = obs_ll(kind, d, f, params);
                let mut prop = *params;
                prop.obs_prec = new_tau;
                let new_obs = obs_ll(kind, d, f, &prop);
                let lr = new_obs - cur_obs + log_prec_prior(new_tau, priors.tau_prior)
                    - log_prec_prior(params.obs_prec, priors.tau_prior);
                if new_obs > f64::NEG_INFINITY && accept(lr, rng) {
                    *params = prop;
                    acc.tau = true;
                }
            }
        }

        if self.adapting {
            let g = self.gain();
            self.ab_log_scale += g * (f64::from(u8::from(acc.ab)) - AB_TARGET);
            self.phi_log_sd *= (g * (f64::from(u8::from(acc.phi)) - SCALAR_TARGET)).exp();
            if !params.obs_prec_fixed {
                self.tau_log_sd *= (g * (f64::from(u8::from(acc.tau)) - SCALAR_TARGET)).exp();
            }
            self.record_ab(params.a, params.b);
            if self.ab_n == AB_EMPIRICAL_AFTER {
                self.ab_log_scale = 0.0;
            }
            self.adapt_iter += 1;
        }
        acc
    }
}

/// Half-Cauchy log prior on a precision plus the log-scale Jacobian.
fn log_prec_prior(x: f64, h: HalfCauchy) -> f64 {
    halfcauchy_logpdf(x, h)
        .map(|v| v + x.ln())
        .unwrap_or(f64::NEG_INFINITY)
}

/// One static-parameter update with fixed default proposal scales.
pub fn update_static_params<R: Rng + ?Sized>(
    kind: ModelKind,
    traj: &Trajectory,
    obs: &ObservationSeries,
    params: &ModelParams,
    priors: &PriorSet,
    rng: &mut R,
) -> Result<ModelParams> {
    let d = traj.log_states();
    let f = obs.dense_log();
    if f.len() != d.len() {
        return Err(Error::Internal(String::from(
            "trajectory and observation horizon differ",
        )));
    }
    let mut sampler = StaticSampler::new([[1e-4, 0.0], [0.0, 1e-4]]);
    sampler.adapting = false;
    let mut p = *params;
    sampler.update(kind, &d, &f, &mut p, priors, rng);
    Ok(p)
}

/// Log states interpolated linearly between observations; the prior mean
/// where nothing is observed.
fn initial_log_states(obs: &ObservationSeries, mu0: f64) -> Vec<f64> {
    let n = obs.n_steps + 1;
    if obs.is_empty() {
        return vec![mu0; n];
    }
    let pts: Vec<(usize, f64)> = obs
        .indices
        .iter()
        .zip(&obs.values)
        .map(|(&i, &y)| (i, y.ln()))
        .collect();
    let mut d = vec![0.0; n];
    for (t, slot) in d.iter_mut().enumerate() {
        *slot = match pts.binary_search_by(|p| p.0.cmp(&t)) {
            Ok(k) => pts[k].1,
            Err(0) => pts[0].1,
            Err(k) if k == pts.len() => pts[k - 1].1,
            Err(k) => {
                let (t0, v0) = pts[k - 1];
                let (t1, v1) = pts[k];
                v0 + (v1 - v0) * (t - t0) as f64 / (t1 - t0) as f64
            }
        };
    }
    d
}

/// Least-squares start for `(a, b, phi)` from an initial log path, with the
/// OLS covariance of `(a, b)` to seed the proposal.
fn regression_start(
    kind: ModelKind,
    d: &[f64],
    priors: &PriorSet,
) -> (f64, f64, f64, [[f64; 2]; 2]) {
    let mid = |(lo, hi): (f64, f64)| 0.5 * (lo + hi);
    let width = |(lo, hi): (f64, f64)| hi - lo;
    let fallback_cov = [
        [(0.001 * width(priors.a_bounds)).powi(2), 0.0],
        [0.0, (0.001 * width(priors.b_bounds)).powi(2)],
    ];
    let fallback = (
        mid(priors.a_bounds),
        mid(priors.b_bounds),
        1.0,
        fallback_cov,
    );
    let n = d.len().saturating_sub(1);
    if n < 3 {
        return fallback;
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = (1..d.len())
        .map(|t| match kind.family() {
            ProcessFamily::Gompertz => (d[t - 1], d[t]),
            ProcessFamily::Ricker => (d[t - 1].exp(), d[t] - d[t - 1]),
        })
        .unzip();
    let mx = stats::mean(&xs);
    let my = stats::mean(&ys);
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if !(sxx > 1e-12) || !sxx.is_finite() {
        return fallback;
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let resid: Vec<f64> = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| y - intercept - slope * x)
        .collect();
    let s2 = (resid.iter().map(|r| r * r).sum::<f64>() / (n as f64 - 2.0)).max(1e-8);
    let (a_raw, b_raw) = match kind.family() {
        ProcessFamily::Gompertz => (intercept, slope - 1.0),
        ProcessFamily::Ricker => (intercept, slope),
    };
    let clamp = |v: f64, (lo, hi): (f64, f64)| {
        let eps = 1e-6 * (hi - lo);
        v.clamp(lo + eps, hi - eps)
    };
    let a = clamp(a_raw, priors.a_bounds);
    let b = clamp(b_raw, priors.b_bounds);
    let cov = [
        [s2 * (1.0 / n as f64 + mx * mx / sxx), -s2 * mx / sxx],
        [-s2 * mx / sxx, s2 / sxx],
    ];
    let phi = match kind.embedding() {
        Embedding::Biased => 1.0 / s2,
        Embedding::MomentDensity => 1.0 / s2.exp_m1(),
        Embedding::MomentConstant => {
            let p = ModelParams {
                a,
                b,
                proc_prec: 1.0,
                obs_prec: 1.0,
                obs_prec_fixed: false,
            };
            let v: f64 = (1..d.len())
                .map(|t| {
                    let lc = kind
                        .family()
                        .log_center(d[t - 1], p.a, p.b)
                        .unwrap_or(d[t - 1]);
                    let r = d[t].exp() - lc.exp();
                    r * r
                })
                .sum::<f64>()
                / n as f64;
            1.0 / v.max(1e-8)
        }
    };
    let phi = if phi.is_finite() {
        phi.clamp(1e-2, 1e5)
    } else {
        1.0
    };
    let cov =
        if cov[0][0].is_finite() && cov[1][1].is_finite() && cov[0][0] > 0.0 && cov[1][1] > 0.0 {
            cov
        } else {
            fallback_cov
        };
    (a, b, phi, cov)
}

/// Runs one chain. Randomness comes only from `rng`.
pub fn run_chain<R: Rng + ?Sized>(
    kind: ModelKind,
    obs: &ObservationSeries,
    priors: &PriorSet,
    config: &McmcConfig,
    scenario: Scenario,
    rng: &mut R,
) -> Result<PosteriorSamples> {
    config.validate()?;
    priors.validate()?;
    obs.validate()?;
    let use_gibbs = match config.latent {
        LatentSampler::Auto => kind == ModelKind::Gompertz,
        LatentSampler::Gibbs => {
            if kind != ModelKind::Gompertz {
                return Err(Error::Config(alloc::format!(
                    "no closed-form latent update for {kind}"
                )));
            }
            true
        }
        LatentSampler::Metropolis => false,
    };

    let f = obs.dense_log();
    let mut d = initial_log_states(obs, priors.init_mu0);
    let (a0, b0, phi0, ab_cov) = regression_start(kind, &d, priors);
    let (tau0, tau_fixed) = match scenario {
        Scenario::TauFixed(v) => {
            if !(v > 0.0) {
                return Err(Error::Config(String::from(
                    "fixed observation precision must be positive",
                )));
            }
            (v, true)
        }
        Scenario::TauEstimated => (phi0, false),
    };
    let mut params = ModelParams {
        a: a0,
        b: b0,
        proc_prec: phi0,
        obs_prec: tau0,
        obs_prec_fixed: tau_fixed,
    };
    let initial_target = process_ll(kind, &d, &params) + obs_ll(kind, &d, &f, &params);
    if !initial_target.is_finite() {
        return Err(Error::Config(String::from(
            "initial state has zero posterior density",
        )));
    }

    let n_sites = d.len();
    let mut site_log_scale = vec![(0.1f64).ln(); n_sites];
    let mut site_scale = vec![0.1; n_sites];
    let mut site_acc = vec![false; n_sites];
    let mut statics = StaticSampler::new(ab_cov);

    let keep_from = config.n_adapt + config.n_burn;
    let n_keep = config.n_kept();
    let mut draws = Vec::with_capacity(n_keep);
    let mut finals = Vec::with_capacity(n_keep);
    let mut states = Vec::with_capacity(if config.keep_states { n_keep } else { 0 });
    let (mut acc_lat, mut n_lat, mut acc_ab, mut acc_phi, mut acc_tau, mut n_kept_iters) =
        (0usize, 0usize, 0usize, 0usize, 0usize, 0usize);

    for iter in 0..config.n_iter {
        let adapting = iter < config.n_adapt;
        statics.adapting = adapting;

        if use_gibbs {
            gibbs_latent_gompertz(&mut d, &f, &params, priors, rng)?;
        } else {
            let n_acc = mh_latent_block(
                kind,
                &mut d,
                &f,
                &params,
                priors,
                &site_scale,
                &mut site_acc,
                rng,
            );
            if adapting {
                let g = (1.0 / ((iter + 1) as f64).sqrt()).min(0.5);
                for k in 0..n_sites {
                    site_log_scale[k] += g * (f64::from(u8::from(site_acc[k])) - SCALAR_TARGET);
                    site_log_scale[k] = site_log_scale[k].clamp(-12.0, 3.0);
                    site_scale[k] = site_log_scale[k].exp();
                }
            }
            if iter >= keep_from {
                acc_lat += n_acc;
                n_lat += n_sites;
            }
        }

        let acc = statics.update(kind, &d, &f, &mut params, priors, rng);
        if d.iter().any(|v| !v.is_finite()) {
            return Err(Error::ChainAborted {
                iteration: iter,
                source: alloc::boxed::Box::new(Error::NonFinite {
                    t: d.iter().position(|v| !v.is_finite()).unwrap_or(0),
                }),
            });
        }

        if iter >= keep_from {
            n_kept_iters += 1;
            acc_ab += usize::from(acc.ab);
            acc_phi += usize::from(acc.phi);
            acc_tau += usize::from(acc.tau);
            if (iter - keep_from).is_multiple_of(config.thin) {
                draws.push(params);
                finals.push(d[n_sites - 1].exp());
                if config.keep_states {
                    states.push(Trajectory::from_log_states(&d));
                }
            }
        }
    }

    let mut diag = Diagnostics {
        iterations: config.n_iter,
        ..Default::default()
    };
    let rate = |k: usize, n: usize| {
        if n == 0 {
            f64::NAN
        } else {
            k as f64 / n as f64
        }
    };
    diag.acceptance
        .insert("ab".to_string(), rate(acc_ab, n_kept_iters));
    diag.acceptance
        .insert("phi".to_string(), rate(acc_phi, n_kept_iters));
    if !tau_fixed {
        diag.acceptance
            .insert("tau".to_string(), rate(acc_tau, n_kept_iters));
    }
    if !use_gibbs {
        diag.acceptance
            .insert("latent".to_string(), rate(acc_lat, n_lat));
    }
    let mut post = PosteriorSamples {
        kind,
        params: draws,
        states,
        final_states: finals,
        diagnostics: diag,
    };
    let mut names = vec!["a", "b", "phi"];
    if !tau_fixed {
        names.push("tau");
    }
    for name in names {
        let col = post.column(name).unwrap_or_default();
        post.diagnostics
            .ess
            .insert(name.to_string(), stats::effective_sample_size(&col));
    }
    for (block, r) in post.diagnostics.acceptance.clone() {
        if r == 0.0 {
            post.diagnostics.warnings.push(alloc::format!(
                "block `{block}` accepted no proposals after burn-in"
            ));
        }
    }
    Ok(post)
}

/// Posterior-predictive observations for `T+1..=T+horizon`, one path per
/// kept draw, started from that draw's `X_T`.
pub fn forecast<R: Rng + ?Sized>(
    posterior: &PosteriorSamples,
    horizon: usize,
    rng: &mut R,
) -> Result<ForecastEnsemble> {
    if horizon == 0 {
        return Err(Error::Config(String::from(
            "forecast horizon must be at least 1",
        )));
    }
    let kind = posterior.kind;
    let mut samples = Vec::with_capacity(posterior.len());
    for (p, &x_last) in posterior.params.iter().zip(&posterior.final_states) {
        let mut x = x_last;
        let mut row = Vec::with_capacity(horizon);
        for _ in 0..horizon {
            x = step(kind, x, p, rng)?;
            row.push(observe(kind, x, p, rng)?);
        }
        samples.push(row);
    }
    ForecastEnsemble::new(horizon, samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::simulate;
    use crate::rng::stream;

    fn gompertz_truth() -> ModelParams {
        ModelParams::new(0.82f64.ln(), -0.658, 70.2, 188.7).unwrap()
    }

    /// Mean and precision of `exp(q(x))` for a quadratic `q`, from three
    /// evaluations of the unnormalised log density.
    fn quadratic_fit(q: impl Fn(f64) -> f64, x0: f64) -> (f64, f64) {
        let h = 0.37;
        let (l, c, r) = (q(x0 - h), q(x0), q(x0 + h));
        let second = (l - 2.0 * c + r) / (h * h);
        let first = (r - l) / (2.0 * h);
        let prec = -second;
        (x0 + first / prec, prec)
    }

    #[test]
    fn gibbs_conditionals_match_quadratic_form() {
        let p = ModelParams::new(0.3, -0.4, 5.0, 20.0).unwrap();
        let priors = PriorSet::for_model(ModelKind::Gompertz, 0.2, 3.0);
        let d = [0.1, 0.5, -0.2, 0.4, 0.7];
        let f = [None, Some(0.45), None, Some(0.3), Some(0.9)];
        let c = 1.0 + p.b;
        let joint = |d: &[f64]| -> f64 {
            let mut s = -0.5 * priors.init_prec0 * (d[0] - priors.init_mu0).powi(2);
            for t in 1..d.len() {
                s -= 0.5 * p.proc_prec * (d[t] - p.a - c * d[t - 1]).powi(2);
            }
            for t in 0..d.len() {
                if let Some(fv) = f[t] {
                    s -= 0.5 * p.obs_prec * (fv - d[t]).powi(2);
                }
            }
            s
        };
        for k in 0..d.len() {
            let (m_oracle, p_oracle) = quadratic_fit(
                |x| {
                    let mut dd = d;
                    dd[k] = x;
                    joint(&dd)
                },
                d[k],
            );
            let (m, prec) = gompertz_conditional(&d, &f, k, &p, &priors).unwrap();
            assert!(
                (m - m_oracle).abs() < 1e-9,
                "site {k}: mean {m} vs {m_oracle}"
            );
            assert!(
                (prec - p_oracle).abs() < 1e-8 * p_oracle,
                "site {k}: precision {prec} vs {p_oracle}"
            );
        }
    }

    #[test]
    fn gibbs_unit_slope_collapse_and_pinning() {
        // b = -1: no dependence on the neighbours beyond the intercept.
        let p = ModelParams::new(0.4, -1.0, 2.0, 1.0).unwrap();
        let priors = PriorSet::for_model(ModelKind::Gompertz, 0.0, 1.0);
        let d = [3.0, -1.0, 5.0];
        let f = [None, None, None];
        let (m, prec) = gompertz_conditional(&d, &f, 1, &p, &priors).unwrap();
        assert!((m - 0.4).abs() < 1e-15 && (prec - 2.0).abs() < 1e-15);
        // Very precise observation pins the state.
        let p = ModelParams::new(0.4, -0.5, 2.0, 1e12).unwrap();
        let f = [None, Some(1.234), None];
        let (m, _) = gompertz_conditional(&d, &f, 1, &p, &priors).unwrap();
        assert!((m - 1.234).abs() < 1e-9);
    }

    #[test]
    fn mh_latent_with_tiny_steps_accepts_everything() {
        let p = gompertz_truth();
        let priors = PriorSet::for_model(ModelKind::Lgc, 0.0, 1.0);
        let mut d = vec![0.0, -0.1, 0.05, -0.2];
        let f = vec![None, Some(-0.1), Some(0.0), None];
        let scales = vec![1e-12; 4];
        let mut flags = vec![false; 4];
        let mut rng = stream(2, "mh", &[]);
        for _ in 0..50 {
            let n = mh_latent_block(
                ModelKind::Lgd,
                &mut d,
                &f,
                &p,
                &priors,
                &scales,
                &mut flags,
                &mut rng,
            );
            assert_eq!(n, 4);
        }
    }

    #[test]
    fn out_of_bounds_ab_is_never_accepted() {
        let priors = PriorSet::for_model(ModelKind::Lgc, 0.0, 1.0);
        let d = vec![0.0, 0.1, 0.2];
        let f = vec![None, Some(0.1), Some(0.2)];
        // a sits on the lower bound; a huge proposal spread puts half the
        // proposals below it.
        let mut sampler = StaticSampler::new([[1e6, 0.0], [0.0, 1e-12]]);
        sampler.adapting = false;
        let mut rng = stream(3, "ab", &[]);
        let mut p = ModelParams::new(0.0, -0.1, 4.0, 4.0).unwrap();
        for _ in 0..200 {
            let before = p;
            let acc = sampler.update(ModelKind::Lgc, &d, &f, &mut p, &priors, &mut rng);
            assert!(p.a >= 0.0 && p.a <= 10.0);
            if acc.ab {
                assert!(p.a != before.a);
            }
        }
    }

    #[test]
    fn fixed_tau_is_constant() {
        let truth = gompertz_truth();
        let idx: Vec<usize> = (1..=40).collect();
        let (_, obs) = simulate(
            ModelKind::Lgd,
            &truth,
            0.7,
            40,
            &idx,
            &mut stream(5, "d", &[]),
        )
        .unwrap();
        let cfg = McmcConfig {
            n_iter: 600,
            n_burn: 100,
            n_adapt: 100,
            ..Default::default()
        };
        let priors = PriorSet::for_model(ModelKind::Lgd, 0.7f64.ln(), 1.0);
        let post = run_chain(
            ModelKind::Lgd,
            &obs,
            &priors,
            &cfg,
            Scenario::TauFixed(188.7),
            &mut stream(5, "c", &[]),
        )
        .unwrap();
        assert_eq!(post.len(), 400);
        assert!(post.params.iter().all(|p| p.obs_prec == 188.7));
        assert!(post.params.iter().all(|p| p.proc_prec > 0.0));
        assert!(!post.diagnostics.acceptance.contains_key("tau"));
    }

    #[test]
    fn chain_is_reproducible() {
        let truth = gompertz_truth();
        let idx: Vec<usize> = (1..=30).step_by(2).collect();
        let (_, obs) = simulate(
            ModelKind::Gompertz,
            &truth,
            0.74,
            30,
            &idx,
            &mut stream(9, "d", &[]),
        )
        .unwrap();
        let cfg = McmcConfig {
            n_iter: 300,
            n_burn: 50,
            n_adapt: 50,
            thin: 3,
            ..Default::default()
        };
        let priors = PriorSet::for_model(ModelKind::Gompertz, 0.74f64.ln(), 1.0);
        let run = || {
            run_chain(
                ModelKind::Gompertz,
                &obs,
                &priors,
                &cfg,
                Scenario::TauEstimated,
                &mut stream(1, "c", &[]),
            )
            .unwrap()
        };
        let a = run();
        let b = run();
        assert_eq!(a, b);
        assert_eq!(a.len(), cfg.n_kept());
        assert_eq!(a.states.len(), a.len());
        assert_eq!(a.states[0].len(), 30);
    }

    #[test]
    fn config_validation() {
        assert!(McmcConfig {
            n_iter: 10,
            n_burn: 5,
            n_adapt: 5,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(McmcConfig {
            thin: 0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert_eq!(McmcConfig::default().n_kept(), 7000);
    }

    #[test]
    fn degenerate_forecast_is_mean_map() {
        let p = ModelParams::new(0.1, -0.2, f64::INFINITY, f64::INFINITY).unwrap();
        let post = PosteriorSamples {
            kind: ModelKind::Lgc,
            params: vec![p; 3],
            states: Vec::new(),
            final_states: vec![2.0; 3],
            diagnostics: Diagnostics::default(),
        };
        let e = forecast(&post, 1, &mut stream(0, "f", &[])).unwrap();
        let f = crate::models::process_mean(ModelKind::Lgc, 2.0, &p).unwrap();
        assert_eq!(e.n_draws(), 3);
        assert!(e.samples.iter().all(|r| (r[0] - f).abs() < 1e-12));
    }
}
