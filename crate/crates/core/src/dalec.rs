//! Reduced two-pool DALEC2: foliage and labile carbon driven by daily
//! weather, observed through leaf area index.
//!
//! ```text
//! c_f'   = (1 - phi_f(t)) c_f + phi_o(t) c_lab + G(t) f_f
//! c_lab' = (1 - phi_o(t)) c_lab               + G(t) f_lab
//! LAI    = c_f / c_lma
//! ```
//!
//! Two lognormal embeddings with density-dependent variance are provided.
//! The biased one multiplies each pool by `exp(eps)`, `eps ~ N(0, omega^2)`,
//! and keeps the median at the deterministic step. The moment-matched one
//! uses log-variance `log(1 + omega^2)` with the matching location shift,
//! and keeps the mean there.

use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;

#[cfg(not(feature = "std"))]
use num_traits::Float;

use crate::dist::{lognormal_logpdf, LogNormalParams};
use crate::error::{domain, Error, Result};
use crate::rng::Substream;
use crate::scoring::ForecastEnsemble;
use crate::smc::{ModelFamily, PmcmcSamples, StateSpace};

/// Length of the seasonal cycle in days.
pub const YEAR: f64 = 365.25;
const SEASON_SCALE: f64 = YEAR / PI;
const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;

/// Principal branch of the Lambert W function.
pub fn lambert_w0(x: f64) -> Result<f64> {
    let branch = -(-1.0f64).exp();
    if x.is_nan() || x < branch {
        return Err(domain(
            "lambert_w0",
            alloc::format!("argument {x} is below -1/e"),
        ));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x == branch {
        return Ok(-1.0);
    }
    if x.is_infinite() {
        return Ok(f64::INFINITY);
    }
    let mut w = if x < -0.32 {
        let p = (2.0 * (core::f64::consts::E * x + 1.0)).sqrt();
        -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p * p * p
    } else if x < 3.0 {
        let l = x.ln_1p();
        l * (1.0 - l.ln_1p() / (2.0 + l))
    } else {
        let l = x.ln();
        l - l.ln()
    };
    for _ in 0..64 {
        let ew = w.exp();
        let f = w * ew - x;
        let wp1 = w + 1.0;
        if wp1 == 0.0 {
            break;
        }
        let denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1);
        let dw = f / denom;
        w -= dw;
        if dw.abs() <= 1e-15 * (1.0 + w.abs()) {
            break;
        }
    }
    Ok(w)
}

/// Names of the ten estimated parameters, in vector order.
pub const PARAM_NAMES: [&str; 10] = [
    "f_lab",
    "f_f",
    "d_o",
    "d_f",
    "c_eff",
    "c_lf",
    "c_ro",
    "c_rf",
    "omega_f",
    "omega_lab",
];

/// Uniform prior box for the ten estimated parameters.
pub const PARAM_BOUNDS: [(f64, f64); 10] = [
    (0.01, 0.5),
    (0.01, 0.5),
    (1.0, 365.0),
    (1.0, 365.0),
    (10.0, 100.0),
    (0.125, 1.0),
    (10.0, 100.0),
    (20.0, 150.0),
    (0.0, 1.0),
    (0.0, 1.0),
];

/// Default leaf mass per area (gC m^-2 per unit LAI).
pub const DEFAULT_C_LMA: f64 = 75.0;

/// Embedding of the carbon model in a lognormal state space model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum DalecEmbedding {
    Biased,
    MomentMatched,
}

impl DalecEmbedding {
    /// Observation precision fixed from historical LAI summaries.
    pub fn default_obs_prec(self) -> f64 {
        match self {
            DalecEmbedding::Biased => 4.18,
            DalecEmbedding::MomentMatched => 4.0,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            DalecEmbedding::Biased => "biased",
            DalecEmbedding::MomentMatched => "moment_matched",
        }
    }

    /// Log-scale variance of the process noise for coefficient `omega`.
    fn process_log_variance(self, omega: f64) -> f64 {
        match self {
            DalecEmbedding::Biased => omega * omega,
            DalecEmbedding::MomentMatched => (omega * omega).ln_1p(),
        }
    }

    /// LAI observation kernel around `lai`.
    pub fn lai_kernel(self, lai: f64, obs_prec: f64) -> Result<LogNormalParams> {
        if !(lai > 0.0) {
            return Err(domain("lai_kernel", "LAI must be positive"));
        }
        match self {
            DalecEmbedding::Biased => LogNormalParams::new(lai.ln(), obs_prec),
            DalecEmbedding::MomentMatched => {
                let s2 = obs_prec.recip().ln_1p();
                LogNormalParams::from_log_variance(lai.ln() - 0.5 * s2, s2)
            }
        }
    }
}

/// The ten estimated parameters plus the fixed ones.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DalecParams {
    pub f_lab: f64,
    pub f_f: f64,
    pub d_o: f64,
    pub d_f: f64,
    pub c_eff: f64,
    pub c_lf: f64,
    pub c_ro: f64,
    pub c_rf: f64,
    pub omega_f: f64,
    pub omega_lab: f64,
    pub c_lma: f64,
    pub obs_prec: f64,
}

impl DalecParams {
    pub fn from_slice(theta: &[f64], c_lma: f64, obs_prec: f64) -> Result<Self> {
        if theta.len() != 10 {
            return Err(Error::Config(alloc::format!(
                "expected 10 parameters, got {}",
                theta.len()
            )));
        }
        Ok(Self {
            f_lab: theta[0],
            f_f: theta[1],
            d_o: theta[2],
            d_f: theta[3],
            c_eff: theta[4],
            c_lf: theta[5],
            c_ro: theta[6],
            c_rf: theta[7],
            omega_f: theta[8],
            omega_lab: theta[9],
            c_lma,
            obs_prec,
        })
    }

    pub fn to_vec(&self) -> Vec<f64> {
        alloc::vec![
            self.f_lab,
            self.f_f,
            self.d_o,
            self.d_f,
            self.c_eff,
            self.c_lf,
            self.c_ro,
            self.c_rf,
            self.omega_f,
            self.omega_lab
        ]
    }

    /// Checks the parameters against the prior box.
    pub fn validate(&self) -> Result<()> {
        for ((v, (lo, hi)), name) in self.to_vec().iter().zip(PARAM_BOUNDS).zip(PARAM_NAMES) {
            if !(*v >= lo && *v <= hi) {
                return Err(domain(
                    "DalecParams",
                    alloc::format!("{name} = {v} outside [{lo}, {hi}]"),
                ));
            }
        }
        if !(self.c_lma > 0.0) || !(self.obs_prec > 0.0) {
            return Err(domain("DalecParams", "c_lma and obs_prec must be positive"));
        }
        Ok(())
    }
}

/// Carbon pools (gC m^-2).
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DalecState {
    pub c_f: f64,
    pub c_lab: f64,
}

impl DalecState {
    pub fn new(c_f: f64, c_lab: f64) -> Result<Self> {
        if !(c_f > 0.0 && c_lab > 0.0) || !c_f.is_finite() || !c_lab.is_finite() {
            return Err(Error::Positivity(alloc::format!(
                "pools must be positive, got ({c_f}, {c_lab})"
            )));
        }
        Ok(Self { c_f, c_lab })
    }
}

/// One day of meteorological drivers.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DriverDay {
    /// Continuous day number: day of year of the first day, counting on
    /// across year ends.
    pub day: f64,
    pub t_min: f64,
    pub t_max: f64,
    /// Shortwave radiation (MJ m^-2 day^-1).
    pub swrad: f64,
    /// Atmospheric CO2 (ppm).
    pub co2: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DriverSeries {
    pub days: Vec<DriverDay>,
}

impl DriverSeries {
    pub fn validate(&self) -> Result<()> {
        for (i, d) in self.days.iter().enumerate() {
            let vals = [d.day, d.t_min, d.t_max, d.swrad, d.co2];
            if vals.iter().any(|v| !v.is_finite()) {
                return Err(domain(
                    "DriverSeries",
                    alloc::format!("non-finite driver on day {}", i + 1),
                ));
            }
            if d.t_min > d.t_max {
                return Err(domain(
                    "DriverSeries",
                    alloc::format!("t_min > t_max on day {}", i + 1),
                ));
            }
            if d.swrad < 0.0 {
                return Err(domain(
                    "DriverSeries",
                    alloc::format!("negative radiation on day {}", i + 1),
                ));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.days.len()
    }

    pub fn is_empty(&self) -> bool {
        self.days.is_empty()
    }
}

/// Fills interior gaps by linear interpolation between the nearest present
/// neighbours. Gaps at either end are errors.
pub fn impute_linear(values: &[Option<f64>]) -> Result<Vec<f64>> {
    let present: Vec<usize> = values
        .iter()
        .enumerate()
        .filter(|(_, v)| v.is_some())
        .map(|(i, _)| i)
        .collect();
    let (first, last) = match (present.first(), present.last()) {
        (Some(&f), Some(&l)) => (f, l),
        _ => return Err(domain("impute_linear", "series has no values")),
    };
    if first != 0 || last != values.len() - 1 {
        return Err(domain(
            "impute_linear",
            "gap at the start or end has no neighbour on one side",
        ));
    }
    let mut out: Vec<f64> = values.iter().map(|v| v.unwrap_or(f64::NAN)).collect();
    for w in present.windows(2) {
        let (i0, i1) = (w[0], w[1]);
        let (v0, v1) = (out[i0], out[i1]);
        for (i, slot) in out.iter_mut().enumerate().take(i1).skip(i0 + 1) {
            *slot = v0 + (v1 - v0) * (i - i0) as f64 / (i1 - i0) as f64;
        }
    }
    Ok(out)
}

/// Leaf-fall phase offset from the Lambert-W expression.
pub fn leaf_fall_offset(c_lf: f64) -> Result<f64> {
    if !(c_lf > 0.0 && c_lf < 1.0) {
        return Err(domain(
            "phi_f",
            alloc::format!("c_lf must lie in (0, 1), got {c_lf}"),
        ));
    }
    let l = (1.0 - c_lf).ln();
    let w = lambert_w0(1.0 / (2.0 * PI * l * l))?;
    Ok(-w.sqrt() / core::f64::consts::SQRT_2)
}

fn seasonal_pulse(t: f64, shift: f64, width: f64) -> f64 {
    let s = ((t + shift) / SEASON_SCALE).sin() * core::f64::consts::SQRT_2 * SEASON_SCALE / width;
    (-s * s).exp()
}

/// Daily leaf-fall fraction.
pub fn phi_f(t: f64, p: &DalecParams) -> Result<f64> {
    let psi = leaf_fall_offset(p.c_lf)?;
    Ok(SQRT_2_OVER_PI * (-(1.0 - p.c_lf).ln() / p.c_rf) * seasonal_pulse(t, -p.d_f + psi, p.c_rf))
}

/// Daily labile-to-foliage transfer fraction.
pub fn phi_o(t: f64, p: &DalecParams) -> f64 {
    SQRT_2_OVER_PI * (6.9088 / p.c_ro) * seasonal_pulse(t, -p.d_o + 0.6245 * p.c_ro, p.c_ro)
}

/// Gross primary production model.
pub trait GppModel {
    /// Daily GPP (gC m^-2 day^-1).
    fn gpp(&self, day: &DriverDay, c_lma: f64, c_eff: f64) -> Result<f64>;
}

/// Light-use-efficiency GPP with a CO2- and temperature-dependent canopy
/// capacity, co-limited as `light cap / (light + cap)` and switched off by a
/// linear cold ramp on the daily mean temperature.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SimplifiedAcm {
    /// gC per MJ of shortwave radiation.
    pub light_efficiency: f64,
    /// Capacity per unit `c_eff / c_lma` at 0 C and saturating CO2.
    pub capacity_ref: f64,
    /// Exponential temperature response of the capacity (per C of t_max).
    pub temp_coef: f64,
    /// CO2 half-saturation (ppm).
    pub co2_half: f64,
    /// Mean temperature at which production starts and reaches full rate.
    pub cold_ramp: (f64, f64),
}

impl Default for SimplifiedAcm {
    fn default() -> Self {
        Self {
            light_efficiency: 1.0,
            capacity_ref: 10.0,
            temp_coef: 0.0156,
            co2_half: 150.0,
            cold_ramp: (-2.0, 8.0),
        }
    }
}

impl GppModel for SimplifiedAcm {
    fn gpp(&self, day: &DriverDay, c_lma: f64, c_eff: f64) -> Result<f64> {
        if day.swrad < 0.0 || !day.swrad.is_finite() {
            return Err(domain(
                "gpp",
                alloc::format!("radiation must be non-negative, got {}", day.swrad),
            ));
        }
        if !(c_lma > 0.0) || !(c_eff >= 0.0) {
            return Err(domain(
                "gpp",
                "c_lma must be positive and c_eff non-negative",
            ));
        }
        let light = self.light_efficiency * day.swrad;
        let cap =
            (c_eff / c_lma) * self.capacity_ref * (self.temp_coef * day.t_max).exp() * day.co2
                / (day.co2 + self.co2_half);
        let t_mean = 0.5 * (day.t_min + day.t_max);
        let (lo, hi) = self.cold_ramp;
        let gate = ((t_mean - lo) / (hi - lo)).clamp(0.0, 1.0);
        if light <= 0.0 || cap <= 0.0 || gate == 0.0 {
            return Ok(0.0);
        }
        Ok(gate * light * cap / (light + cap))
    }
}

/// Daily rates that do not depend on the state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DailyRates {
    pub phi_f: f64,
    pub phi_o: f64,
    pub gpp: f64,
}

pub fn daily_rates<G: GppModel>(day: &DriverDay, p: &DalecParams, gpp: &G) -> Result<DailyRates> {
    Ok(DailyRates {
        phi_f: phi_f(day.day, p)?,
        phi_o: phi_o(day.day, p),
        gpp: gpp.gpp(day, p.c_lma, p.c_eff)?,
    })
}

/// Pool update from precomputed rates.
pub fn advance(state: &DalecState, r: &DailyRates, p: &DalecParams) -> Result<DalecState> {
    let c_f = (1.0 - r.phi_f) * state.c_f + r.phi_o * state.c_lab + r.gpp * p.f_f;
    let c_lab = (1.0 - r.phi_o) * state.c_lab + r.gpp * p.f_lab;
    DalecState::new(c_f, c_lab)
}

/// Deterministic one-day step.
pub fn step_deterministic<G: GppModel>(
    state: &DalecState,
    day: &DriverDay,
    p: &DalecParams,
    gpp: &G,
) -> Result<DalecState> {
    advance(state, &daily_rates(day, p, gpp)?, p)
}

pub fn lai(state: &DalecState, c_lma: f64) -> f64 {
    state.c_f / c_lma
}

fn perturb<R: Rng + ?Sized>(
    mean: f64,
    log_var: f64,
    embedding: DalecEmbedding,
    rng: &mut R,
) -> f64 {
    if log_var == 0.0 {
        return mean;
    }
    let z: f64 = rng.sample(StandardNormal);
    let shift = match embedding {
        DalecEmbedding::Biased => 0.0,
        DalecEmbedding::MomentMatched => -0.5 * log_var,
    };
    mean * (shift + log_var.sqrt() * z).exp()
}

/// Stochastic step around precomputed deterministic rates.
pub fn advance_stochastic<R: Rng + ?Sized>(
    embedding: DalecEmbedding,
    state: &DalecState,
    r: &DailyRates,
    p: &DalecParams,
    rng: &mut R,
) -> Result<DalecState> {
    let m = advance(state, r, p)?;
    let c_f = perturb(
        m.c_f,
        embedding.process_log_variance(p.omega_f),
        embedding,
        rng,
    );
    let c_lab = perturb(
        m.c_lab,
        embedding.process_log_variance(p.omega_lab),
        embedding,
        rng,
    );
    DalecState::new(c_f, c_lab)
}

pub fn step_stochastic<G: GppModel, R: Rng + ?Sized>(
    embedding: DalecEmbedding,
    state: &DalecState,
    day: &DriverDay,
    p: &DalecParams,
    gpp: &G,
    rng: &mut R,
) -> Result<DalecState> {
    advance_stochastic(embedding, state, &daily_rates(day, p, gpp)?, p, rng)
}

/// One LAI observation of the state.
pub fn observe_lai<R: Rng + ?Sized>(
    embedding: DalecEmbedding,
    state: &DalecState,
    p: &DalecParams,
    rng: &mut R,
) -> Result<f64> {
    let k = embedding.lai_kernel(lai(state, p.c_lma), p.obs_prec)?;
    Ok(crate::dist::lognormal_sample(k, rng))
}

/// Smooth synthetic weather for a mid-latitude site, starting on day of
/// year `start_day`.
pub fn synthetic_drivers<R: Rng + ?Sized>(
    n_days: usize,
    start_day: f64,
    rng: &mut R,
) -> DriverSeries {
    let two_pi = 2.0 * PI;
    let days = (0..n_days)
        .map(|i| {
            let day = start_day + i as f64;
            let season = (two_pi * (day - 110.0) / YEAR).sin();
            let e1: f64 = rng.sample(StandardNormal);
            let e2: f64 = rng.sample(StandardNormal);
            let t_max = 11.0 + 15.0 * season + 3.0 * e1;
            let t_min = t_max - 9.0 - 2.0 * e2.abs();
            let clear = 15.0 + 11.0 * (two_pi * (day - 80.0) / YEAR).sin();
            let cloud: f64 = 0.55 + 0.45 * rng.random::<f64>();
            let year = ((day - 1.0) / YEAR).floor();
            let co2 = 412.0 + 2.4 * year + 3.0 * (two_pi * (day - 130.0) / YEAR).cos();
            DriverDay {
                day,
                t_min,
                t_max,
                swrad: (clear * cloud).max(0.0),
                co2,
            }
        })
        .collect();
    DriverSeries { days }
}

/// Simulates `drivers.len()` days and observes LAI on `obs_days`
/// (1-based, increasing).
#[allow(clippy::type_complexity)]
pub fn simulate_lai<G: GppModel, R: Rng + ?Sized>(
    embedding: DalecEmbedding,
    init: DalecState,
    drivers: &DriverSeries,
    p: &DalecParams,
    gpp: &G,
    obs_days: &[usize],
    rng: &mut R,
) -> Result<(Vec<DalecState>, Vec<f64>)> {
    let mut states = Vec::with_capacity(drivers.len());
    let mut lai_obs = Vec::with_capacity(obs_days.len());
    let mut next = obs_days.iter().peekable();
    let mut s = init;
    for (i, day) in drivers.days.iter().enumerate() {
        s = step_stochastic(embedding, &s, day, p, gpp, rng)?;
        states.push(s);
        if next.peek() == Some(&&(i + 1)) {
            next.next();
            lai_obs.push(observe_lai(embedding, &s, p, rng)?);
        }
    }
    Ok((states, lai_obs))
}

/// Particle-filter view of the carbon model for one parameter vector.
#[derive(Debug, Clone)]
pub struct DalecSsm {
    pub embedding: DalecEmbedding,
    pub params: DalecParams,
    pub init: DalecState,
    /// Log-scale spread of the initial pools.
    pub init_log_sd: f64,
    /// `rates[t - 1]` drives the step into day `t`.
    pub rates: Vec<DailyRates>,
}

impl DalecSsm {
    pub fn new<G: GppModel>(
        embedding: DalecEmbedding,
        params: DalecParams,
        init: DalecState,
        init_log_sd: f64,
        drivers: &DriverSeries,
        gpp: &G,
    ) -> Result<Self> {
        let rates = drivers
            .days
            .iter()
            .map(|d| daily_rates(d, &params, gpp))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            embedding,
            params,
            init,
            init_log_sd,
            rates,
        })
    }
}

impl StateSpace for DalecSsm {
    type State = DalecState;

    fn initial(&self, rng: &mut Substream) -> Result<DalecState> {
        if self.init_log_sd == 0.0 {
            return Ok(self.init);
        }
        let z1: f64 = rng.sample(StandardNormal);
        let z2: f64 = rng.sample(StandardNormal);
        DalecState::new(
            self.init.c_f * (self.init_log_sd * z1).exp(),
            self.init.c_lab * (self.init_log_sd * z2).exp(),
        )
    }

    fn transition(&self, prev: &DalecState, t: usize, rng: &mut Substream) -> Result<DalecState> {
        let r = self
            .rates
            .get(t - 1)
            .ok_or_else(|| Error::Config(alloc::format!("no driver data for day {t}")))?;
        advance_stochastic(self.embedding, prev, r, &self.params, rng)
    }

    fn obs_log_density(&self, state: &DalecState, _t: usize, y: f64) -> f64 {
        self.embedding
            .lai_kernel(lai(state, self.params.c_lma), self.params.obs_prec)
            .and_then(|k| lognormal_logpdf(y, k))
            .unwrap_or(f64::NEG_INFINITY)
    }

    fn summary(&self, state: &DalecState) -> f64 {
        lai(state, self.params.c_lma)
    }
}

/// The ten-parameter family over the prior box of [`PARAM_BOUNDS`].
#[derive(Debug, Clone)]
pub struct DalecFamily<'a, G: GppModel> {
    pub embedding: DalecEmbedding,
    pub drivers: &'a DriverSeries,
    pub gpp: G,
    pub c_lma: f64,
    pub obs_prec: f64,
    pub init: DalecState,
    pub init_log_sd: f64,
}

impl<G: GppModel> ModelFamily for DalecFamily<'_, G> {
    type Model = DalecSsm;

    fn names(&self) -> Vec<String> {
        PARAM_NAMES.iter().map(|s| String::from(*s)).collect()
    }

    fn bounds(&self) -> Vec<(f64, f64)> {
        PARAM_BOUNDS.to_vec()
    }

    fn log_prior(&self, theta: &[f64]) -> f64 {
        // c_lf = 1 has no leaf-fall phase.
        let inside = theta
            .iter()
            .zip(PARAM_BOUNDS)
            .all(|(v, (lo, hi))| *v >= lo && *v <= hi);
        if inside && theta[5] < 1.0 {
            0.0
        } else {
            f64::NEG_INFINITY
        }
    }

    fn build(&self, theta: &[f64]) -> Result<DalecSsm> {
        let p = DalecParams::from_slice(theta, self.c_lma, self.obs_prec)?;
        DalecSsm::new(
            self.embedding,
            p,
            self.init,
            self.init_log_sd,
            self.drivers,
            &self.gpp,
        )
    }
}

/// LAI predictive ensemble on `obs_days` (1-based day numbers after the fit
/// window, within the family's drivers), one path per kept pMCMC draw,
/// started from that draw's final state on day `fit_days`.
pub fn forecast_lai<G: GppModel, R: Rng + ?Sized>(
    family: &DalecFamily<'_, G>,
    samples: &PmcmcSamples<DalecState>,
    fit_days: usize,
    obs_days: &[usize],
    rng: &mut R,
) -> Result<ForecastEnsemble> {
    let horizon_end = *obs_days
        .last()
        .ok_or_else(|| Error::Config(String::from("no forecast days")))?;
    if obs_days.iter().any(|&d| d <= fit_days) || horizon_end > family.drivers.len() {
        return Err(Error::Config(String::from(
            "forecast days must follow the fit window and have drivers",
        )));
    }
    let mut rows = Vec::with_capacity(samples.draws.len());
    for (theta, start) in samples.draws.iter().zip(&samples.final_states) {
        let p = DalecParams::from_slice(theta, family.c_lma, family.obs_prec)?;
        let mut s = *start;
        let mut row = Vec::with_capacity(obs_days.len());
        let mut next = obs_days.iter().peekable();
        for t in fit_days + 1..=horizon_end {
            s = step_stochastic(
                family.embedding,
                &s,
                &family.drivers.days[t - 1],
                &p,
                &family.gpp,
                rng,
            )?;
            if next.peek() == Some(&&t) {
                next.next();
                row.push(observe_lai(family.embedding, &s, &p, rng)?);
            }
        }
        rows.push(row);
    }
    ForecastEnsemble::new(obs_days.len(), rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    pub(crate) fn truth() -> DalecParams {
        DalecParams::from_slice(
            &[0.2, 0.1, 120.0, 280.0, 50.0, 0.6, 40.0, 60.0, 0.1, 0.1],
            75.0,
            4.0,
        )
        .unwrap()
    }

    #[test]
    fn lambert_reference_points() {
        assert_eq!(lambert_w0(0.0).unwrap(), 0.0);
        assert!((lambert_w0(core::f64::consts::E).unwrap() - 1.0).abs() < 1e-15);
        assert!((lambert_w0(1.0).unwrap() - 0.567_143_290_409_783_8).abs() < 1e-15);
        assert!(lambert_w0(-0.4).is_err());
        for &x in &[-0.367, -0.3, -0.1, 1e-6, 0.5, 2.0, 10.0, 1e3] {
            let w = lambert_w0(x).unwrap();
            assert!(
                (w * w.exp() - x).abs() < 1e-12 * x.abs().max(1.0),
                "x = {x}"
            );
        }
    }

    #[test]
    fn phenology_maxima_and_period() {
        let p = truth();
        let max_o = SQRT_2_OVER_PI * 6.9088 / p.c_ro;
        let max_f = SQRT_2_OVER_PI * -(1.0 - p.c_lf).ln() / p.c_rf;
        for k in 0..800 {
            let t = k as f64 * 0.7;
            let o = phi_o(t, &p);
            let f = phi_f(t, &p).unwrap();
            assert!((0.0..=max_o + 1e-15).contains(&o));
            assert!((0.0..=max_f + 1e-15).contains(&f));
            for shift in [1.0, -2.0, 3.0] {
                assert!((phi_o(t + shift * YEAR, &p) - o).abs() < 1e-12);
                assert!((phi_f(t + shift * YEAR, &p).unwrap() - f).abs() < 1e-12);
            }
        }
        // Sine argument is zero at t = d_o - 0.6245 c_ro.
        assert!((phi_o(p.d_o - 0.6245 * p.c_ro, &p) - max_o).abs() < 1e-15);
        assert!((SQRT_2_OVER_PI * 6.9088 / 30.0 - 0.183_747_5).abs() < 1e-7);
        let mut bad = p;
        bad.c_lf = 1.0;
        assert!(phi_f(0.0, &bad).is_err());
    }

    #[test]
    fn annual_leaf_loss() {
        let mut p = truth();
        p.c_lf = 0.5;
        p.c_rf = 60.0;
        let survive: f64 = (0..365)
            .map(|t| 1.0 - phi_f(t as f64, &p).unwrap())
            .product();
        assert!(((survive - 0.5) / 0.5).abs() < 0.05, "{survive}");
    }

    #[test]
    fn gpp_contract() {
        let acm = SimplifiedAcm::default();
        let day = DriverDay {
            day: 180.0,
            t_min: 12.0,
            t_max: 25.0,
            swrad: 20.0,
            co2: 415.0,
        };
        let dark = DriverDay { swrad: 0.0, ..day };
        assert_eq!(acm.gpp(&dark, 75.0, 50.0).unwrap(), 0.0);
        let g = acm.gpp(&day, 75.0, 50.0).unwrap();
        assert!(g > 0.0 && acm.gpp(&day, 75.0, 100.0).unwrap() >= g);
        assert!(
            acm.gpp(&DriverDay { swrad: 25.0, ..day }, 75.0, 50.0)
                .unwrap()
                >= g
        );
        assert!(acm
            .gpp(&DriverDay { swrad: -1.0, ..day }, 75.0, 50.0)
            .is_err());
        // light 20, capacity (50/75) * 10 * exp(0.39) * 415/565
        let cap = 50.0 / 75.0 * 10.0 * (0.0156f64 * 25.0).exp() * 415.0 / 565.0;
        assert!((g - 20.0 * cap / (20.0 + cap)).abs() < 1e-12);
        assert!((g - 5.311_621_294_9).abs() < 1e-9, "{g}");
    }

    #[test]
    fn deterministic_step_identities() {
        let p = truth();
        let s = DalecState::new(150.0, 50.0).unwrap();
        let none = DailyRates {
            phi_f: 0.0,
            phi_o: 0.0,
            gpp: 0.0,
        };
        assert_eq!(advance(&s, &none, &p).unwrap(), s);
        let all = DailyRates {
            phi_f: 0.0,
            phi_o: 1.0,
            gpp: 0.0,
        };
        assert!(advance(&s, &all, &p).is_err());
        let almost = DailyRates {
            phi_f: 0.0,
            phi_o: 1.0 - 1e-12,
            gpp: 0.0,
        };
        let n = advance(&s, &almost, &p).unwrap();
        assert!((n.c_f - 200.0).abs() < 1e-9 && n.c_lab < 1e-9);
        let r = DailyRates {
            phi_f: 0.03,
            phi_o: 0.02,
            gpp: 4.0,
        };
        let n = advance(&s, &r, &p).unwrap();
        let change = n.c_f + n.c_lab - s.c_f - s.c_lab;
        assert!((change - (r.gpp * (p.f_f + p.f_lab) - r.phi_f * s.c_f)).abs() < 1e-12);
        assert_eq!(lai(&DalecState::new(75.0, 1.0).unwrap(), 75.0), 1.0);
        assert_eq!(lai(&DalecState::new(225.0, 1.0).unwrap(), 75.0), 3.0);
    }

    #[test]
    fn zero_noise_is_deterministic() {
        let mut p = truth();
        p.omega_f = 0.0;
        p.omega_lab = 0.0;
        let s = DalecState::new(150.0, 50.0).unwrap();
        let day = DriverDay {
            day: 130.0,
            t_min: 5.0,
            t_max: 18.0,
            swrad: 15.0,
            co2: 415.0,
        };
        let acm = SimplifiedAcm::default();
        let d = step_deterministic(&s, &day, &p, &acm).unwrap();
        for e in [DalecEmbedding::Biased, DalecEmbedding::MomentMatched] {
            assert_eq!(
                step_stochastic(e, &s, &day, &p, &acm, &mut stream(0, "z", &[])).unwrap(),
                d
            );
        }
    }

    #[test]
    fn impute_examples() {
        assert_eq!(
            impute_linear(&[Some(1.0), Some(2.0)]).unwrap(),
            vec![1.0, 2.0]
        );
        assert_eq!(
            impute_linear(&[Some(10.0), None, Some(14.0)]).unwrap(),
            vec![10.0, 12.0, 14.0]
        );
        assert_eq!(
            impute_linear(&[Some(10.0), None, None, Some(16.0)]).unwrap(),
            vec![10.0, 12.0, 14.0, 16.0]
        );
        assert!(impute_linear(&[None, Some(1.0)]).is_err());
        assert!(impute_linear(&[Some(1.0), None]).is_err());
    }

    #[test]
    fn synthetic_run_stays_positive_and_seasonal() {
        let drivers = synthetic_drivers(881, 245.0, &mut stream(1, "drv", &[]));
        drivers.validate().unwrap();
        let p = truth();
        let obs_days: Vec<usize> = (4..=881).step_by(4).collect();
        let (states, lai_obs) = simulate_lai(
            DalecEmbedding::MomentMatched,
            DalecState::new(150.0, 50.0).unwrap(),
            &drivers,
            &p,
            &SimplifiedAcm::default(),
            &obs_days,
            &mut stream(1, "sim", &[]),
        )
        .unwrap();
        assert_eq!(lai_obs.len(), obs_days.len());
        let lai_path: Vec<f64> = states.iter().map(|s| lai(s, 75.0)).collect();
        let max = lai_path.iter().copied().fold(0.0, f64::max);
        let min = lai_path.iter().copied().fold(f64::INFINITY, f64::min);
        assert!(min > 0.0 && max / min > 2.0, "min {min} max {max}");
    }
}
