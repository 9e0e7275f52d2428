//! One synthetic or file-driven DALEC fit: data, pMCMC, held-out LAI scores.

use lnssm_core::dalec::{
    forecast_lai, simulate_lai, synthetic_drivers, DalecEmbedding, DalecFamily, DalecState,
    SimplifiedAcm, PARAM_NAMES,
};
use lnssm_core::models::ObservationSeries;
use lnssm_core::rng::stream;
use lnssm_core::scoring::{hpd_interval, Bandwidth, ForecastEnsemble};
use lnssm_core::smc::{init_search, pmcmc_run, PmcmcConfig, PmcmcSamples};
use serde::Serialize;

use crate::config::DalecConfig;
use crate::error::{CliError, Result};
use crate::io::DriverTable;

/// Inputs shared by every embedding of one replicate.
#[derive(Debug, Clone)]
pub struct ReplicateData {
    pub drivers: DriverTable,
    /// `(day, lai)` pairs over the full record, per embedding when simulated.
    pub lai: Vec<(usize, f64)>,
    pub synthetic: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ParamInterval {
    pub name: &'static str,
    pub lo: f64,
    pub hi: f64,
    pub truth: Option<f64>,
    pub covered: Option<bool>,
}

#[derive(Debug, Clone)]
pub struct ReplicateFit {
    pub embedding: DalecEmbedding,
    pub replicate: usize,
    pub samples: PmcmcSamples<DalecState>,
    pub intervals: Vec<ParamInterval>,
    pub forecast_days: Vec<usize>,
    pub held_out: Vec<f64>,
    pub ensemble: ForecastEnsemble,
    /// `(crps, ign)` per held-out observation.
    pub scores: Vec<(f64, f64)>,
}

impl ReplicateFit {
    pub fn n_covered(&self) -> usize {
        self.intervals
            .iter()
            .filter(|i| i.covered == Some(true))
            .count()
    }

    pub fn mean_scores(&self) -> (f64, f64) {
        let n = self.scores.len() as f64;
        let (c, i) = self
            .scores
            .iter()
            .fold((0.0, 0.0), |a, s| (a.0 + s.0, a.1 + s.1));
        (c / n, i / n)
    }
}

/// Drivers for replicate `r`: from file when configured, else synthetic.
pub fn drivers_for(cfg: &DalecConfig, r: usize, file: Option<&DriverTable>) -> DriverTable {
    match file {
        Some(t) => t.clone(),
        None => {
            let n = cfg.fit_days + cfg.forecast_days;
            let series = synthetic_drivers(
                n,
                cfg.start_day,
                &mut stream(cfg.seed, "dalec-drivers", &[r as u64]),
            );
            DriverTable {
                series,
                dates: None,
            }
        }
    }
}

/// LAI simulated from the configured truth under `embedding`.
pub fn simulate_observations(
    cfg: &DalecConfig,
    embedding: DalecEmbedding,
    r: usize,
    drivers: &DriverTable,
) -> Result<Vec<(usize, f64)>> {
    if cfg.obs_every == 0 {
        return Err(CliError::Usage("obs_every must be positive".into()));
    }
    let p = cfg.truth_params(embedding)?;
    let days: Vec<usize> = (cfg.obs_every..=drivers.series.len())
        .step_by(cfg.obs_every)
        .collect();
    let mut rng = stream(cfg.seed, "dalec-lai", &[r as u64, embedding as u64]);
    let (_, lai) = simulate_lai(
        embedding,
        cfg.init,
        &drivers.series,
        &p,
        &SimplifiedAcm::default(),
        &days,
        &mut rng,
    )?;
    Ok(days.into_iter().zip(lai).collect())
}

/// Fits days `1..=fit_days` and scores the held-out observations after.
pub fn fit_replicate(
    cfg: &DalecConfig,
    embedding: DalecEmbedding,
    r: usize,
    data: &ReplicateData,
    pmcmc: &PmcmcConfig,
) -> Result<ReplicateFit> {
    let n_days = data.drivers.series.len();
    if cfg.fit_days == 0 || cfg.fit_days >= n_days {
        return Err(CliError::Usage(format!("fit_days must lie in 1..{n_days}")));
    }
    let end = (cfg.fit_days + cfg.forecast_days).min(n_days);
    let (fit, rest): (Vec<_>, Vec<_>) = data.lai.iter().partition(|(d, _)| *d <= cfg.fit_days);
    let held: Vec<(usize, f64)> = rest.into_iter().filter(|(d, _)| *d <= end).collect();
    if held.is_empty() {
        return Err(CliError::Usage(
            "no LAI observations in the forecast window".into(),
        ));
    }
    let obs = ObservationSeries::new(
        cfg.fit_days,
        fit.iter().map(|p| p.0).collect(),
        fit.iter().map(|p| p.1).collect(),
    )?;
    let family = DalecFamily {
        embedding,
        drivers: &data.drivers.series,
        gpp: SimplifiedAcm::default(),
        c_lma: cfg.c_lma,
        obs_prec: cfg.obs_prec_for(embedding),
        init: cfg.init,
        init_log_sd: cfg.init_log_sd,
    };
    let tag = [r as u64, embedding as u64];
    let (theta0, _) = init_search(
        &family,
        &obs,
        cfg.init_budget,
        cfg.init_particles,
        &mut stream(cfg.seed, "dalec-init", &tag),
    )?;
    let config = PmcmcConfig {
        seed: cfg.seed,
        ..*pmcmc
    };
    let samples = pmcmc_run(
        &family,
        &obs,
        &theta0,
        &config,
        &mut stream(cfg.seed, "dalec-pmcmc", &tag),
    )?;
    let truth = data.synthetic.then_some(&cfg.truth);
    let mut intervals = Vec::with_capacity(PARAM_NAMES.len());
    for (j, name) in PARAM_NAMES.iter().enumerate() {
        let (lo, hi) = hpd_interval(&samples.column(j), 0.95)?;
        let t = truth.map(|t| t[j]);
        intervals.push(ParamInterval {
            name,
            lo,
            hi,
            truth: t,
            covered: t.map(|v| lo <= v && v <= hi),
        });
    }
    let forecast_days: Vec<usize> = held.iter().map(|p| p.0).collect();
    let held_out: Vec<f64> = held.iter().map(|p| p.1).collect();
    let ensemble = forecast_lai(
        &family,
        &samples,
        cfg.fit_days,
        &forecast_days,
        &mut stream(cfg.seed, "dalec-forecast", &tag),
    )?;
    let scores = ensemble.score(&held_out, Bandwidth::default())?;
    Ok(ReplicateFit {
        embedding,
        replicate: r,
        samples,
        intervals,
        forecast_days,
        held_out,
        ensemble,
        scores,
    })
}
