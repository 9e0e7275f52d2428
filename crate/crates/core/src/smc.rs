//! Bootstrap particle filter and particle marginal Metropolis-Hastings.
//!
//! Every random draw inside the filter comes from a counter-based substream
//! keyed by `(filter key, time, particle)`, so results do not depend on the
//! order in which particles are processed.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;

#[cfg(not(feature = "std"))]
use num_traits::Float;

use crate::dist::{normal_logpdf, normal_sample};
use crate::error::{Error, Result};
use crate::models::{
    obs_term_log, observation_kernel, step, ModelKind, ModelParams, ObservationSeries,
};
use crate::rng::{substream, Substream};
use crate::stats::log_sum_exp;

/// A state space model the filter can run.
pub trait StateSpace {
    type State: Clone;

    /// Draw `X_0`.
    fn initial(&self, rng: &mut Substream) -> Result<Self::State>;

    /// Draw `X_t` given `X_{t-1}`.
    fn transition(&self, prev: &Self::State, t: usize, rng: &mut Substream) -> Result<Self::State>;

    /// `log p(y_t | X_t)`; `-inf` is allowed.
    fn obs_log_density(&self, state: &Self::State, t: usize, y: f64) -> f64;

    /// Scalar summary reported in the filtered means.
    fn summary(&self, state: &Self::State) -> f64;
}

/// One of the six benchmark models as a particle-filter target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchmarkSsm {
    pub kind: ModelKind,
    pub params: ModelParams,
    /// Normal prior on `log X_0`.
    pub init_mu0: f64,
    pub init_prec0: f64,
    /// Score observations by the density of `log Y` rather than `Y`.
    pub log_space: bool,
}

impl StateSpace for BenchmarkSsm {
    type State = f64;

    fn initial(&self, rng: &mut Substream) -> Result<f64> {
        Ok(normal_sample(self.init_mu0, self.init_prec0, rng).exp())
    }

    fn transition(&self, prev: &f64, _t: usize, rng: &mut Substream) -> Result<f64> {
        step(self.kind, *prev, &self.params, rng)
    }

    fn obs_log_density(&self, state: &f64, _t: usize, y: f64) -> f64 {
        let ly = y.ln();
        let lp = obs_term_log(self.kind, state.ln(), ly, &self.params).unwrap_or(f64::NEG_INFINITY);
        if self.log_space {
            lp
        } else {
            lp - ly
        }
    }

    fn summary(&self, state: &f64) -> f64 {
        *state
    }
}

impl BenchmarkSsm {
    /// Natural-scale observation kernel, for callers that need it directly.
    pub fn observation_kernel(&self, x: f64) -> Result<crate::dist::LogNormalParams> {
        observation_kernel(self.kind, x, &self.params)
    }
}

/// Filter output.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterOutput<S> {
    /// Log of the product of mean weights over observation times.
    pub loglik: f64,
    /// Weighted mean of [`StateSpace::summary`] at `t = 1..=T`.
    pub filtered_means: Vec<f64>,
    /// One ancestral trajectory `X_0..=X_T`, when requested.
    pub path: Option<Vec<S>>,
}

/// Systematic resampling with offset `u` in `[0, 1)` on normalised weights.
pub fn systematic_indices(weights: &[f64], u: f64, n_out: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(n_out);
    let mut cum = 0.0;
    let mut i = 0;
    let last = weights.len() - 1;
    for j in 0..n_out {
        let pos = (u + j as f64) / n_out as f64;
        while i < last && cum + weights[i] <= pos {
            cum += weights[i];
            i += 1;
        }
        out.push(i);
    }
    out
}

fn normalise(log_weights: &[f64]) -> Result<(Vec<f64>, f64)> {
    let lse = log_sum_exp(log_weights);
    if !lse.is_finite() {
        return Err(Error::DegenerateWeights(String::from(
            "weights are not normalisable",
        )));
    }
    Ok((log_weights.iter().map(|w| (w - lse).exp()).collect(), lse))
}

/// Systematic resampling from log weights with one uniform offset.
pub fn systematic_resample<R: Rng + ?Sized>(
    log_weights: &[f64],
    rng: &mut R,
) -> Result<Vec<usize>> {
    if log_weights.is_empty() {
        return Err(Error::DegenerateWeights(String::from("no weights")));
    }
    let (w, _) = normalise(log_weights)?;
    let u: f64 = rng.random();
    Ok(systematic_indices(&w, u, w.len()))
}

/// Bootstrap particle filter, resampling at every observation time.
///
/// `key` seeds the per-particle substreams; the same key reproduces the
/// same run.
pub fn bootstrap_filter<M: StateSpace>(
    model: &M,
    obs: &ObservationSeries,
    n_particles: usize,
    key: u64,
    keep_path: bool,
) -> Result<FilterOutput<M::State>> {
    if n_particles < 2 {
        return Err(Error::Config(String::from(
            "at least two particles are required",
        )));
    }
    let n_steps = obs.n_steps;
    let mut particles: Vec<M::State> = (0..n_particles)
        .map(|i| model.initial(&mut substream(key, 0, i as u64)))
        .collect::<Result<_>>()?;
    let mut history: Vec<Vec<M::State>> = Vec::new();
    let mut ancestry: Vec<Vec<usize>> = Vec::new();
    if keep_path {
        history.reserve(n_steps + 1);
        ancestry.reserve(n_steps + 1);
        history.push(particles.clone());
        ancestry.push((0..n_particles).collect());
    }
    let mut loglik = 0.0;
    let mut means = Vec::with_capacity(n_steps);
    let mut next_obs = 0;
    let mut log_w = vec![0.0; n_particles];
    let ln_n = (n_particles as f64).ln();

    for t in 1..=n_steps {
        let mut moved = Vec::with_capacity(n_particles);
        for (i, p) in particles.iter().enumerate() {
            moved.push(model.transition(p, t, &mut substream(key, t as u64, i as u64))?);
        }
        particles = moved;
        let observed = next_obs < obs.indices.len() && obs.indices[next_obs] == t;
        if observed {
            let y = obs.values[next_obs];
            next_obs += 1;
            for (w, p) in log_w.iter_mut().zip(&particles) {
                let v = model.obs_log_density(p, t, y);
                *w = if v.is_nan() { f64::NEG_INFINITY } else { v };
            }
            let (w, lse) = normalise(&log_w).map_err(|_| Error::ParticleDegeneracy { t })?;
            loglik += lse - ln_n;
            means.push(
                w.iter()
                    .zip(&particles)
                    .map(|(wi, p)| wi * model.summary(p))
                    .sum(),
            );
            let u: f64 = substream(key, t as u64, u64::MAX).random();
            let idx = systematic_indices(&w, u, n_particles);
            let resampled: Vec<M::State> = idx.iter().map(|&j| particles[j].clone()).collect();
            if keep_path {
                history.push(core::mem::replace(&mut particles, resampled));
                ancestry.push(idx);
            } else {
                particles = resampled;
            }
        } else {
            means
                .push(particles.iter().map(|p| model.summary(p)).sum::<f64>() / n_particles as f64);
            if keep_path {
                history.push(particles.clone());
                ancestry.push((0..n_particles).collect());
            }
        }
    }

    let path = if keep_path {
        // Post-resampling particles carry uniform weights: pick one, then
        // follow its ancestors back.
        let u: f64 = substream(key, n_steps as u64 + 1, u64::MAX).random();
        let mut cur = ((u * n_particles as f64) as usize).min(n_particles - 1);
        let mut path = Vec::with_capacity(n_steps + 1);
        for t in (0..=n_steps).rev() {
            cur = ancestry[t][cur];
            path.push(history[t][cur].clone());
        }
        path.reverse();
        Some(path)
    } else {
        None
    };
    Ok(FilterOutput {
        loglik,
        filtered_means: means,
        path,
    })
}

/// A parametric family of state space models with a box-bounded prior.
pub trait ModelFamily {
    type Model: StateSpace;

    fn names(&self) -> Vec<String>;

    /// Prior support, one `(lo, hi)` per parameter.
    fn bounds(&self) -> Vec<(f64, f64)>;

    /// Log prior density; `-inf` outside the support.
    fn log_prior(&self, theta: &[f64]) -> f64 {
        let inside = theta
            .iter()
            .zip(self.bounds())
            .all(|(v, (lo, hi))| *v >= lo && *v <= hi);
        if inside {
            0.0
        } else {
            f64::NEG_INFINITY
        }
    }

    fn build(&self, theta: &[f64]) -> Result<Self::Model>;

    fn dim(&self) -> usize {
        self.bounds().len()
    }

    fn midpoint(&self) -> Vec<f64> {
        self.bounds()
            .iter()
            .map(|(lo, hi)| 0.5 * (lo + hi))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct PmcmcConfig {
    pub n_iter: usize,
    pub n_burn: usize,
    pub n_particles: usize,
    /// Acceptances before the proposal switches to the empirical covariance.
    pub adapt_start_accepts: usize,
    /// Initial proposal sd as a fraction of each prior-box width.
    pub proposal_scale: f64,
    pub seed: u64,
    pub thin: usize,
    /// Keep the sampled latent path for every kept draw.
    pub keep_paths: bool,
}

impl Default for PmcmcConfig {
    fn default() -> Self {
        Self {
            n_iter: 100_000,
            n_burn: 50_000,
            n_particles: 500,
            adapt_start_accepts: 1_000,
            proposal_scale: 0.01,
            seed: 0,
            thin: 1,
            keep_paths: false,
        }
    }
}

impl PmcmcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_burn >= self.n_iter {
            return Err(Error::Config(String::from("n_burn must be below n_iter")));
        }
        if self.n_particles < 2 {
            return Err(Error::Config(String::from(
                "n_particles must be at least 2",
            )));
        }
        if !(self.proposal_scale > 0.0) || self.thin == 0 {
            return Err(Error::Config(String::from(
                "proposal_scale must be positive and thin at least 1",
            )));
        }
        Ok(())
    }
}

/// pMCMC output.
#[derive(Debug, Clone, PartialEq)]
pub struct PmcmcSamples<S> {
    pub names: Vec<String>,
    /// Kept parameter draws.
    pub draws: Vec<Vec<f64>>,
    /// Log-likelihood estimate attached to each kept draw.
    pub logliks: Vec<f64>,
    /// Final latent state of each kept draw's ancestral path.
    pub final_states: Vec<S>,
    /// Full ancestral paths, when `keep_paths` was set.
    pub paths: Vec<Vec<S>>,
    pub acceptance_rate: f64,
    pub warnings: Vec<String>,
}

impl<S> PmcmcSamples<S> {
    pub fn column(&self, j: usize) -> Vec<f64> {
        self.draws.iter().map(|d| d[j]).collect()
    }
}

fn cholesky(a: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = a.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                let v = a[i][i] - s;
                if !(v > 0.0) {
                    return None;
                }
                l[i][j] = v.sqrt();
            } else {
                l[i][j] = (a[i][j] - s) / l[j][j];
            }
        }
    }
    Some(l)
}

/// Running mean and scatter matrix.
#[derive(Debug, Clone)]
struct RunningCov {
    n: usize,
    mean: Vec<f64>,
    m2: Vec<Vec<f64>>,
}

impl RunningCov {
    fn new(d: usize) -> Self {
        Self {
            n: 0,
            mean: vec![0.0; d],
            m2: vec![vec![0.0; d]; d],
        }
    }

    fn push(&mut self, x: &[f64]) {
        self.n += 1;
        let n = self.n as f64;
        let delta: Vec<f64> = x.iter().zip(&self.mean).map(|(a, m)| a - m).collect();
        for (m, dl) in self.mean.iter_mut().zip(&delta) {
            *m += dl / n;
        }
        for i in 0..x.len() {
            for j in 0..x.len() {
                self.m2[i][j] += delta[i] * (x[j] - self.mean[j]);
            }
        }
    }

    fn cov(&self) -> Vec<Vec<f64>> {
        let n = (self.n.max(2) - 1) as f64;
        self.m2
            .iter()
            .map(|r| r.iter().map(|v| v / n).collect())
            .collect()
    }
}

/// Particle marginal Metropolis-Hastings from `theta0`.
pub fn pmcmc_run<F: ModelFamily, R: Rng + ?Sized>(
    family: &F,
    obs: &ObservationSeries,
    theta0: &[f64],
    config: &PmcmcConfig,
    rng: &mut R,
) -> Result<PmcmcSamples<<F::Model as StateSpace>::State>> {
    config.validate()?;
    let bounds = family.bounds();
    let d = bounds.len();
    if theta0.len() != d {
        return Err(Error::Config(String::from(
            "initial point has the wrong dimension",
        )));
    }
    let mut theta = theta0.to_vec();
    let mut lp = family.log_prior(&theta);
    if !lp.is_finite() {
        return Err(Error::Config(String::from(
            "initial point lies outside the prior support",
        )));
    }
    let run = |th: &[f64], key: u64| -> Result<FilterOutput<<F::Model as StateSpace>::State>> {
        let m = family.build(th)?;
        bootstrap_filter(&m, obs, config.n_particles, key, true)
    };
    let first = run(&theta, rng.next_u64())?;
    let mut ll = first.loglik;
    let mut path = first.path.unwrap_or_default();

    let widths: Vec<f64> = bounds.iter().map(|(lo, hi)| hi - lo).collect();
    let mut chol: Vec<Vec<f64>> = (0..d)
        .map(|i| {
            (0..d)
                .map(|j| {
                    if i == j {
                        config.proposal_scale * widths[i]
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();
    let mut running = RunningCov::new(d);
    let mut n_accepted = 0usize;
    let mut adaptive = false;
    let mut since_accept = 0usize;
    let mut warned = false;
    let mut accepted_kept = 0usize;
    let mut out = PmcmcSamples {
        names: family.names(),
        draws: Vec::new(),
        logliks: Vec::new(),
        final_states: Vec::new(),
        paths: Vec::new(),
        acceptance_rate: 0.0,
        warnings: Vec::new(),
    };
    let scale = 2.38 * 2.38 / d as f64;

    for iter in 0..config.n_iter {
        let z: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let prop: Vec<f64> = (0..d)
            .map(|i| theta[i] + (0..=i).map(|j| chol[i][j] * z[j]).sum::<f64>())
            .collect();
        let key = rng.next_u64();
        let u: f64 = rng.random();
        let lp_new = family.log_prior(&prop);
        let mut accepted = false;
        if lp_new.is_finite() {
            // Degenerate filters and invalid models are rejections.
            if let Ok(res) = run(&prop, key) {
                let ratio = res.loglik + lp_new - ll - lp;
                if ratio.is_finite() && u.ln() < ratio {
                    theta = prop;
                    lp = lp_new;
                    ll = res.loglik;
                    path = res.path.unwrap_or_default();
                    accepted = true;
                }
            }
        }
        if accepted {
            n_accepted += 1;
            since_accept = 0;
        } else {
            since_accept += 1;
            if since_accept >= 5_000 && !warned {
                out.warnings.push(alloc::format!(
                    "no proposal accepted in 5000 iterations (at iteration {iter})"
                ));
                warned = true;
            }
        }

        if iter < config.n_burn {
            running.push(&theta);
            if n_accepted >= config.adapt_start_accepts && running.n > d + 1 {
                let mut c = running.cov();
                for (i, row) in c.iter_mut().enumerate() {
                    for v in row.iter_mut() {
                        *v *= scale;
                    }
                    row[i] += 1e-10 * widths[i] * widths[i];
                }
                if let Some(l) = cholesky(&c) {
                    chol = l;
                    adaptive = true;
                }
            }
        } else {
            if accepted {
                accepted_kept += 1;
            }
            if (iter - config.n_burn).is_multiple_of(config.thin) {
                out.draws.push(theta.clone());
                out.logliks.push(ll);
                if let Some(last) = path.last() {
                    out.final_states.push(last.clone());
                }
                if config.keep_paths {
                    out.paths.push(path.clone());
                }
            }
        }
    }
    out.acceptance_rate = accepted_kept as f64 / (config.n_iter - config.n_burn) as f64;
    if !adaptive {
        out.warnings.push(alloc::format!(
            "proposal never switched to the empirical covariance ({n_accepted} acceptances during burn-in)"
        ));
    }
    Ok(out)
}

/// Latin-hypercube multi-start: scores the prior midpoint and `budget - 1`
/// stratified points with a low-particle filter and returns the best point
/// and its log posterior. With `budget == 1` the single stratified point is
/// returned unscored.
pub fn init_search<F: ModelFamily, R: Rng + ?Sized>(
    family: &F,
    obs: &ObservationSeries,
    budget: usize,
    n_particles: usize,
    rng: &mut R,
) -> Result<(Vec<f64>, f64)> {
    if budget == 0 {
        return Err(Error::Config(String::from(
            "search budget must be at least 1",
        )));
    }
    let bounds = family.bounds();
    let n_lhs = if budget == 1 { 1 } else { budget - 1 };
    // One random permutation of strata per dimension.
    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(bounds.len());
    for (lo, hi) in &bounds {
        let mut strata: Vec<usize> = (0..n_lhs).collect();
        for i in (1..n_lhs).rev() {
            let j = rng.random_range(0..=i);
            strata.swap(i, j);
        }
        columns.push(
            strata
                .iter()
                .map(|&s| lo + (hi - lo) * (s as f64 + rng.random::<f64>()) / n_lhs as f64)
                .collect(),
        );
    }
    let lhs: Vec<Vec<f64>> = (0..n_lhs)
        .map(|k| columns.iter().map(|c| c[k]).collect())
        .collect();
    if budget == 1 {
        return Ok((lhs[0].clone(), f64::NAN));
    }
    let key = rng.next_u64();
    let mut best: Option<(Vec<f64>, f64)> = None;
    for cand in core::iter::once(family.midpoint()).chain(lhs) {
        let lp = family.log_prior(&cand);
        if !lp.is_finite() {
            continue;
        }
        let score = match family
            .build(&cand)
            .and_then(|m| bootstrap_filter(&m, obs, n_particles, key, false))
        {
            Ok(r) => r.loglik + lp,
            Err(_) => continue,
        };
        if score.is_finite() && best.as_ref().is_none_or(|(_, s)| score > *s) {
            best = Some((cand, score));
        }
    }
    best.ok_or_else(|| {
        Error::DegenerateWeights(String::from("every starting candidate failed to filter"))
    })
}

/// Benchmark models as a pMCMC family over `(a, b, log phi)` with `tau` fixed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchmarkFamily {
    pub kind: ModelKind,
    pub obs_prec: f64,
    pub init_mu0: f64,
    pub init_prec0: f64,
    pub a_bounds: (f64, f64),
    pub b_bounds: (f64, f64),
    pub log_phi_bounds: (f64, f64),
}

impl ModelFamily for BenchmarkFamily {
    type Model = BenchmarkSsm;

    fn names(&self) -> Vec<String> {
        ["a", "b", "log_phi"]
            .iter()
            .map(|s| String::from(*s))
            .collect()
    }

    fn bounds(&self) -> Vec<(f64, f64)> {
        vec![self.a_bounds, self.b_bounds, self.log_phi_bounds]
    }

    fn build(&self, theta: &[f64]) -> Result<BenchmarkSsm> {
        let params = ModelParams::new(theta[0], theta[1], theta[2].exp(), self.obs_prec)?;
        Ok(BenchmarkSsm {
            kind: self.kind,
            params,
            init_mu0: self.init_mu0,
            init_prec0: self.init_prec0,
            log_space: false,
        })
    }
}

/// Density of `N(mean, prec)`; re-exported for oracles in tests.
pub fn gaussian_log_density(x: f64, mean: f64, prec: f64) -> f64 {
    normal_logpdf(x, mean, prec)
}
