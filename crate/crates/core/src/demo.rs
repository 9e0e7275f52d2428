//! Toy positive processes forecast under a lognormal law and under the
//! Gaussian law with the same conditional mean and variance.
//!
//! `RandomWalk` keeps the conditional mean at `X_{t-1}` with variance
//! `sigma2`. `Decay` shrinks the log-location by `decay` per step with
//! log-variance `log((1 + sigma2 / |X|)^2)`; its Gaussian analogue uses the
//! lognormal's mean and variance evaluated at `|X_{t-1}|`.

use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;

#[cfg(not(feature = "std"))]
use num_traits::Float;

use crate::dist::{lognormal_sample, LogNormalParams};
use crate::error::{domain, Result};
use crate::rng::stream;
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum DemoSystem {
    RandomWalk,
    Decay,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum DemoLaw {
    Lognormal,
    Gaussian,
}

impl DemoSystem {
    pub fn label(self) -> &'static str {
        match self {
            DemoSystem::RandomWalk => "random_walk",
            DemoSystem::Decay => "decay",
        }
    }
}

impl DemoLaw {
    pub fn label(self) -> &'static str {
        match self {
            DemoLaw::Lognormal => "lognormal",
            DemoLaw::Gaussian => "gaussian",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct DemoConfig {
    pub sigma2: f64,
    pub decay: f64,
    pub horizon: usize,
    pub n_paths: usize,
    pub starts: Vec<f64>,
    pub seed: u64,
}

impl Default for DemoConfig {
    fn default() -> Self {
        Self {
            sigma2: 1.0,
            decay: 0.1,
            horizon: 10,
            n_paths: 10_000,
            starts: alloc::vec![50.0, 2.0],
            seed: 0,
        }
    }
}

/// Quantile bands of one panel; index 0 is the start value.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FanChart {
    pub system: DemoSystem,
    pub law: DemoLaw,
    pub x0: f64,
    pub lower: Vec<f64>,
    pub median: Vec<f64>,
    pub upper: Vec<f64>,
    /// One trajectory of the lognormal system from the same start.
    pub sample_path: Vec<f64>,
}

/// Lognormal transition from `x`.
pub fn lognormal_kernel(system: DemoSystem, x: f64, cfg: &DemoConfig) -> Result<LogNormalParams> {
    match system {
        DemoSystem::RandomWalk => {
            if !(x > 0.0) {
                return Err(domain("demo", "random-walk state must be positive"));
            }
            let r = cfg.sigma2 / (x * x);
            let s2 = if r.is_finite() {
                r.ln_1p()
            } else {
                cfg.sigma2.ln() - 2.0 * x.ln()
            };
            LogNormalParams::from_log_variance(x.ln() - 0.5 * s2, s2)
        }
        DemoSystem::Decay => {
            let ax = x.abs();
            if !(ax > 0.0) {
                return Err(domain("demo", "decay state must be nonzero"));
            }
            let r = cfg.sigma2 / ax;
            let s2 = 2.0
                * if r.is_finite() {
                    r.ln_1p()
                } else {
                    cfg.sigma2.ln() - ax.ln()
                };
            LogNormalParams::from_log_variance(ax.ln() - cfg.decay, s2)
        }
    }
}

/// Mean and variance of the Gaussian analogue from `x`.
pub fn gaussian_moments(system: DemoSystem, x: f64, cfg: &DemoConfig) -> Result<(f64, f64)> {
    match system {
        DemoSystem::RandomWalk => Ok((x, cfg.sigma2)),
        DemoSystem::Decay => {
            let k = lognormal_kernel(system, x, cfg)?;
            let s2 = k.log_variance();
            Ok((
                (k.mu() + 0.5 * s2).exp(),
                s2.exp_m1() * (2.0 * k.mu() + s2).exp(),
            ))
        }
    }
}

fn step<R: Rng + ?Sized>(
    system: DemoSystem,
    law: DemoLaw,
    x: f64,
    cfg: &DemoConfig,
    rng: &mut R,
) -> Result<f64> {
    match law {
        // Paths that underflow to zero stay there.
        DemoLaw::Lognormal if x == 0.0 => Ok(0.0),
        DemoLaw::Lognormal => Ok(lognormal_sample(lognormal_kernel(system, x, cfg)?, rng)),
        DemoLaw::Gaussian => {
            let (m, v) = gaussian_moments(system, x, cfg)?;
            let z: f64 = rng.sample(StandardNormal);
            Ok(m + v.sqrt() * z)
        }
    }
}

/// 2.5/50/97.5% bands over `cfg.n_paths` forecast paths from `x0`.
pub fn fan_chart(system: DemoSystem, law: DemoLaw, x0: f64, cfg: &DemoConfig) -> Result<FanChart> {
    if cfg.n_paths < 2 || cfg.horizon == 0 || !(cfg.sigma2 > 0.0) {
        return Err(domain(
            "demo",
            "need n_paths >= 2, horizon >= 1 and sigma2 > 0",
        ));
    }
    let tag = [system as u64, law as u64, x0.to_bits()];
    let mut rng = stream(cfg.seed, "demo", &tag);
    let mut paths: Vec<f64> = alloc::vec![x0; cfg.n_paths];
    let (mut lower, mut median, mut upper) = (alloc::vec![x0], alloc::vec![x0], alloc::vec![x0]);
    for _ in 0..cfg.horizon {
        for x in paths.iter_mut() {
            *x = step(system, law, *x, cfg, &mut rng)?;
        }
        let s = stats::sorted(&paths);
        lower.push(stats::quantile_sorted(&s, 0.025));
        median.push(stats::quantile_sorted(&s, 0.5));
        upper.push(stats::quantile_sorted(&s, 0.975));
    }
    let mut truth_rng = stream(cfg.seed, "demo-path", &[system as u64, x0.to_bits()]);
    let mut sample_path = alloc::vec![x0];
    for _ in 0..cfg.horizon {
        let prev = *sample_path.last().expect("nonempty");
        sample_path.push(step(system, DemoLaw::Lognormal, prev, cfg, &mut truth_rng)?);
    }
    Ok(FanChart {
        system,
        law,
        x0,
        lower,
        median,
        upper,
        sample_path,
    })
}

/// Every (system, start, law) panel.
pub fn demo_panels(cfg: &DemoConfig) -> Result<Vec<FanChart>> {
    let mut out = Vec::new();
    for system in [DemoSystem::RandomWalk, DemoSystem::Decay] {
        for &x0 in &cfg.starts {
            for law in [DemoLaw::Lognormal, DemoLaw::Gaussian] {
                out.push(fan_chart(system, law, x0, cfg)?);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_walk_kernel_preserves_moments() {
        let cfg = DemoConfig::default();
        for x in [0.5, 2.0, 50.0] {
            let k = lognormal_kernel(DemoSystem::RandomWalk, x, &cfg).unwrap();
            let s2 = k.log_variance();
            assert!(((k.mu() + 0.5 * s2).exp() - x).abs() < 1e-12 * x);
            let var = s2.exp_m1() * (2.0 * k.mu() + s2).exp();
            assert!((var - cfg.sigma2).abs() < 1e-10);
        }
    }

    #[test]
    fn low_start_contrast() {
        let cfg = DemoConfig::default();
        let ln = fan_chart(DemoSystem::RandomWalk, DemoLaw::Lognormal, 2.0, &cfg).unwrap();
        let g = fan_chart(DemoSystem::RandomWalk, DemoLaw::Gaussian, 2.0, &cfg).unwrap();
        assert!(ln.lower.iter().all(|v| *v >= 0.0));
        assert!(g.lower[10] < 0.0);
        let hi_ln = fan_chart(DemoSystem::RandomWalk, DemoLaw::Lognormal, 50.0, &cfg).unwrap();
        let hi_g = fan_chart(DemoSystem::RandomWalk, DemoLaw::Gaussian, 50.0, &cfg).unwrap();
        assert!((hi_ln.median[1] / hi_g.median[1] - 1.0).abs() < 0.02);
        assert_eq!(demo_panels(&cfg).unwrap().len(), 8);
    }
}
