//! Subcommand configuration files (JSON). Every field has a default, so an
//! empty object is a valid config; unknown fields are rejected.

use std::path::{Path, PathBuf};

use lnssm_core::dalec::{DalecEmbedding, DalecParams, DalecState, DEFAULT_C_LMA};
use lnssm_core::demo::DemoConfig;
use lnssm_core::mcmc::{LatentSampler, McmcConfig};
use lnssm_core::models::{ModelKind, ModelParams};
use lnssm_core::scoring::Bandwidth;
use lnssm_core::simstudy::{table2, GeneratorSpec, ScenarioKind, StudyDesign};
use lnssm_core::smc::PmcmcConfig;
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::error::{CliError, Result};

/// Scale of the default sampler settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Paper,
    #[default]
    Desk,
}

/// A parsed config together with the file text it came from.
#[derive(Debug, Clone)]
pub struct Loaded<T> {
    pub value: T,
    pub text: Option<String>,
}

pub fn load<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<Loaded<T>> {
    let Some(path) = path else {
        return Ok(Loaded {
            value: T::default(),
            text: None,
        });
    };
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let value = serde_json::from_str(&text)
        .map_err(|e| CliError::parse(path, e.line() as u64, e.to_string()))?;
    Ok(Loaded {
        value,
        text: Some(text),
    })
}

/// Reference parameters of a model kind.
pub fn reference_params(kind: ModelKind) -> ModelParams {
    table2()
        .into_iter()
        .find(|g| g.kind == kind)
        .expect("every kind has reference values")
        .params
}

pub fn mcmc_for(preset: Preset) -> McmcConfig {
    match preset {
        Preset::Paper => McmcConfig::default(),
        Preset::Desk => McmcConfig {
            n_iter: 3_000,
            n_burn: 1_000,
            n_adapt: 500,
            ..McmcConfig::default()
        },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub model: ModelKind,
    /// Defaults to the model's reference values.
    pub params: Option<ModelParams>,
    /// Defaults to the fixed point of the mean map.
    pub x0: Option<f64>,
    pub n_steps: usize,
    /// Observe every `obs_every`-th step.
    pub obs_every: usize,
    pub seed: u64,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            model: ModelKind::Gompertz,
            params: None,
            x0: None,
            n_steps: 575,
            obs_every: 1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub model: ModelKind,
    pub data: PathBuf,
    /// Fit only steps `1..=fit_end`.
    pub fit_end: Option<usize>,
    /// Fixed observation precision; estimated when absent.
    pub tau_fixed: Option<f64>,
    pub latent: LatentSampler,
    /// Overrides the preset's sampler settings.
    pub mcmc: Option<McmcConfig>,
    /// Prior mean of `log X_0`; defaults to the log of the first observation.
    pub init_mu0: Option<f64>,
    pub init_prec0: f64,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            model: ModelKind::Gompertz,
            data: PathBuf::from("series.csv"),
            fit_end: None,
            tau_fixed: None,
            latent: LatentSampler::Auto,
            mcmc: None,
            init_mu0: None,
            init_prec0: 1.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForecastConfig {
    /// Output directory of a `fit` run.
    pub fit_dir: PathBuf,
    pub horizon: usize,
    pub seed: u64,
}

impl Default for ForecastConfig {
    fn default() -> Self {
        Self {
            fit_dir: PathBuf::from("fit"),
            horizon: 7,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoreConfig {
    /// Output directory of a `forecast` run.
    pub forecast_dir: PathBuf,
    /// Series holding the held-out observations.
    pub data: PathBuf,
    pub bandwidth: Bandwidth,
}

impl Default for ScoreConfig {
    fn default() -> Self {
        Self {
            forecast_dir: PathBuf::from("forecast"),
            data: PathBuf::from("series.csv"),
            bandwidth: Bandwidth::default(),
        }
    }
}

/// Study settings on top of a preset; present fields override it.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimstudyConfig {
    pub preset: Option<Preset>,
    pub generators: Option<Vec<GeneratorSpec>>,
    pub fitters: Option<Vec<ModelKind>>,
    pub n_datasets: Option<usize>,
    pub series_length: Option<usize>,
    pub initial_window: Option<usize>,
    pub horizon: Option<usize>,
    pub max_windows: Option<usize>,
    pub scenarios: Option<Vec<ScenarioKind>>,
    pub mcmc: Option<McmcConfig>,
    pub init_prec0: Option<f64>,
    pub seed: Option<u64>,
    /// Family-wise level of the paired tests.
    pub alpha: Option<f64>,
}

impl SimstudyConfig {
    pub fn design(&self, preset: Preset) -> StudyDesign {
        let mut d = match self.preset.unwrap_or(preset) {
            Preset::Paper => StudyDesign::paper(),
            Preset::Desk => StudyDesign::desk(),
        };
        if let Some(v) = &self.generators {
            d.generators = v.clone();
        }
        if let Some(v) = &self.fitters {
            d.fitters = v.clone();
        }
        if let Some(v) = &self.scenarios {
            d.scenarios = v.clone();
        }
        d.n_datasets = self.n_datasets.unwrap_or(d.n_datasets);
        d.series_length = self.series_length.unwrap_or(d.series_length);
        d.initial_window = self.initial_window.unwrap_or(d.initial_window);
        d.horizon = self.horizon.unwrap_or(d.horizon);
        d.max_windows = self.max_windows.or(d.max_windows);
        d.mcmc = self.mcmc.unwrap_or(d.mcmc);
        d.init_prec0 = self.init_prec0.unwrap_or(d.init_prec0);
        d.seed = self.seed.unwrap_or(d.seed);
        d
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DalecConfig {
    pub embeddings: Vec<DalecEmbedding>,
    /// Driver CSV; synthetic weather when absent.
    pub drivers: Option<PathBuf>,
    /// LAI CSV; simulated from `truth` when absent.
    pub lai: Option<PathBuf>,
    /// Parameters used to simulate LAI, in the order of the parameter names.
    pub truth: Vec<f64>,
    pub init: DalecState,
    pub init_log_sd: f64,
    /// Day of year of the first synthetic driver day.
    pub start_day: f64,
    pub fit_days: usize,
    pub forecast_days: usize,
    /// Spacing of simulated LAI observations.
    pub obs_every: usize,
    pub c_lma: f64,
    /// Per-embedding default when absent.
    pub obs_prec: Option<f64>,
    /// Overrides the preset's sampler settings.
    pub pmcmc: Option<PmcmcConfig>,
    pub init_budget: usize,
    pub init_particles: usize,
    pub replicates: usize,
    pub seed: u64,
}

impl Default for DalecConfig {
    fn default() -> Self {
        Self {
            embeddings: vec![DalecEmbedding::Biased, DalecEmbedding::MomentMatched],
            drivers: None,
            lai: None,
            truth: vec![0.2, 0.1, 120.0, 280.0, 50.0, 0.6, 40.0, 60.0, 0.1, 0.1],
            init: DalecState {
                c_f: 150.0,
                c_lab: 50.0,
            },
            init_log_sd: 0.1,
            start_day: 245.0,
            fit_days: 365,
            forecast_days: 151,
            obs_every: 4,
            c_lma: DEFAULT_C_LMA,
            obs_prec: None,
            pmcmc: None,
            init_budget: 200,
            init_particles: 100,
            replicates: 1,
            seed: 0,
        }
    }
}

impl DalecConfig {
    pub fn pmcmc_for(&self, preset: Preset) -> PmcmcConfig {
        self.pmcmc.unwrap_or(match preset {
            Preset::Paper => PmcmcConfig::default(),
            Preset::Desk => PmcmcConfig {
                n_iter: 5_000,
                n_burn: 2_500,
                n_particles: 200,
                adapt_start_accepts: 100,
                ..PmcmcConfig::default()
            },
        })
    }

    pub fn obs_prec_for(&self, embedding: DalecEmbedding) -> f64 {
        self.obs_prec
            .unwrap_or_else(|| embedding.default_obs_prec())
    }

    pub fn truth_params(&self, embedding: DalecEmbedding) -> lnssm_core::Result<DalecParams> {
        let p = DalecParams::from_slice(&self.truth, self.c_lma, self.obs_prec_for(embedding))?;
        p.validate()?;
        Ok(p)
    }
}

pub type DemoSettings = DemoConfig;
