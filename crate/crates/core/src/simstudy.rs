//! Rolling-origin simulation study: synthetic datasets from six generators,
//! every fitter refit on each window under both observation-precision
//! scenarios, forecasts scored against held-out data.
//!
//! Cells are independent. Each one draws from its own stream keyed by the
//! study seed and the cell key, so any execution order gives the same
//! results and [`aggregate`] folds them in key order.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::mcmc::{forecast, run_chain, McmcConfig, PriorSet, Scenario};
use crate::models::{simulate, ModelKind, ModelParams, ObservationSeries};
use crate::rng::{stream, RandomStream};
use crate::scoring::{hpd_interval, paired_t_holm, Bandwidth, PairedTestRow, ScoreTable};

/// A generating model and its true parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GeneratorSpec {
    pub kind: ModelKind,
    pub params: ModelParams,
}

/// The six generators at their reference parameter values.
pub fn table2() -> Vec<GeneratorSpec> {
    let g = |kind, growth: f64, b, phi, tau| GeneratorSpec {
        kind,
        params: ModelParams::new(growth.ln(), b, phi, tau).expect("reference values are valid"),
    };
    alloc::vec![
        g(ModelKind::MoranRicker, 1.26, -0.034, 51.9, 188.7),
        g(ModelKind::Gompertz, 0.82, -0.658, 70.2, 188.7),
        g(ModelKind::Lmrc, 1.11, -0.014, 4.0, 4.0),
        g(ModelKind::Lgc, 1.21, -0.099, 4.0, 4.0),
        g(ModelKind::Lmrd, 1.11, -0.014, 70.2, 188.7),
        g(ModelKind::Lgd, 1.21, -0.099, 70.2, 188.7),
    ]
}

/// Observation-precision scenario of a cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ScenarioKind {
    TauFixed,
    TauEstimated,
}

impl ScenarioKind {
    pub const BOTH: [ScenarioKind; 2] = [ScenarioKind::TauFixed, ScenarioKind::TauEstimated];

    pub fn label(self) -> &'static str {
        match self {
            ScenarioKind::TauFixed => "tau_fixed",
            ScenarioKind::TauEstimated => "tau_estimated",
        }
    }

    /// Concrete scenario, fixing the precision at the generator's value.
    pub fn resolve(self, generator: &GeneratorSpec) -> Scenario {
        match self {
            ScenarioKind::TauFixed => Scenario::TauFixed(generator.params.obs_prec),
            ScenarioKind::TauEstimated => Scenario::TauEstimated,
        }
    }
}

impl core::fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.label())
    }
}

/// Study layout and sampler settings.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StudyDesign {
    pub generators: Vec<GeneratorSpec>,
    pub fitters: Vec<ModelKind>,
    pub n_datasets: usize,
    pub series_length: usize,
    pub initial_window: usize,
    pub horizon: usize,
    /// Cap on the number of windows; `None` runs until the data are used up.
    pub max_windows: Option<usize>,
    pub scenarios: Vec<ScenarioKind>,
    pub mcmc: McmcConfig,
    /// Prior precision of `log X_0` used when fitting.
    pub init_prec0: f64,
    pub seed: u64,
}

impl StudyDesign {
    /// 30 datasets of length 575, 30 windows of 7 days, 10 000 iterations.
    pub fn paper() -> Self {
        Self {
            generators: table2(),
            fitters: ModelKind::ALL.to_vec(),
            n_datasets: 30,
            series_length: 575,
            initial_window: 365,
            horizon: 7,
            max_windows: None,
            scenarios: ScenarioKind::BOTH.to_vec(),
            mcmc: McmcConfig {
                keep_states: false,
                ..McmcConfig::default()
            },
            init_prec0: 1.0,
            seed: 0,
        }
    }

    /// 5 datasets of length 200, 4 windows from day 120, 3 000 iterations.
    pub fn desk() -> Self {
        Self {
            n_datasets: 5,
            series_length: 200,
            initial_window: 120,
            max_windows: Some(4),
            mcmc: McmcConfig {
                n_iter: 3_000,
                n_burn: 1_000,
                n_adapt: 500,
                keep_states: false,
                ..McmcConfig::default()
            },
            ..Self::paper()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.generators.is_empty() || self.fitters.is_empty() || self.scenarios.is_empty() {
            return Err(Error::Config(String::from(
                "generators, fitters and scenarios must be nonempty",
            )));
        }
        if self.n_datasets == 0 || self.horizon == 0 || self.initial_window == 0 {
            return Err(Error::Config(String::from(
                "n_datasets, horizon and initial_window must be positive",
            )));
        }
        if self.initial_window + self.horizon > self.series_length {
            return Err(Error::Config(String::from(
                "initial_window + horizon exceeds series_length",
            )));
        }
        if self.max_windows == Some(0) {
            return Err(Error::Config(String::from("max_windows must be positive")));
        }
        for g in &self.generators {
            g.params.validate()?;
            if g.params.fixed_point(g.kind).is_none() {
                return Err(Error::Config(alloc::format!(
                    "{} has no positive fixed point",
                    g.kind
                )));
            }
        }
        if !(self.init_prec0 > 0.0) {
            return Err(Error::Config(String::from("init_prec0 must be positive")));
        }
        self.mcmc.validate()
    }

    pub fn n_windows(&self) -> usize {
        let available = (self.series_length - self.initial_window) / self.horizon;
        self.max_windows.map_or(available, |m| m.min(available))
    }

    /// Last fitted day of a 1-based window.
    pub fn window_end(&self, window: usize) -> usize {
        self.initial_window + self.horizon * (window - 1)
    }

    /// Every cell of the grid in key order.
    pub fn cell_keys(&self) -> Vec<CellKey> {
        let mut keys = Vec::new();
        for generator in 0..self.generators.len() {
            for dataset in 0..self.n_datasets {
                for fitter in 0..self.fitters.len() {
                    for &scenario in &self.scenarios {
                        for window in 1..=self.n_windows() {
                            keys.push(CellKey {
                                generator,
                                dataset,
                                fitter,
                                scenario,
                                window,
                            });
                        }
                    }
                }
            }
        }
        keys
    }
}

/// One synthetic series.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Dataset {
    pub generator: GeneratorSpec,
    pub index: usize,
    pub x0: f64,
    pub latent: Vec<f64>,
    pub obs: ObservationSeries,
}

/// `n_datasets` series per generator, started at the generator's fixed
/// point and observed at every step. Indexed `[generator][dataset]`.
pub fn generate_datasets(design: &StudyDesign) -> Result<Vec<Vec<Dataset>>> {
    design.validate()?;
    let indices: Vec<usize> = (1..=design.series_length).collect();
    design
        .generators
        .iter()
        .enumerate()
        .map(|(gi, g)| {
            let x0 = g.params.fixed_point(g.kind).expect("validated");
            (0..design.n_datasets)
                .map(|di| {
                    let mut rng = stream(design.seed, "dataset", &[gi as u64, di as u64]);
                    let (traj, obs) = simulate(
                        g.kind,
                        &g.params,
                        x0,
                        design.series_length,
                        &indices,
                        &mut rng,
                    )?;
                    Ok(Dataset {
                        generator: *g,
                        index: di,
                        x0,
                        latent: traj.values,
                        obs,
                    })
                })
                .collect()
        })
        .collect()
}

/// Position of a cell in the study grid. Indices refer to the design's
/// generator and fitter lists; windows are 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CellKey {
    pub generator: usize,
    pub dataset: usize,
    pub fitter: usize,
    pub scenario: ScenarioKind,
    pub window: usize,
}

impl CellKey {
    pub fn stream(&self, seed: u64) -> RandomStream {
        let scenario = match self.scenario {
            ScenarioKind::TauFixed => 0,
            ScenarioKind::TauEstimated => 1,
        };
        stream(
            seed,
            "cell",
            &[
                self.generator as u64,
                self.dataset as u64,
                self.fitter as u64,
                scenario,
                self.window as u64,
            ],
        )
    }
}

/// Scores and intervals from one fit/forecast cycle.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CellScores {
    /// Mean over the horizon.
    pub crps: f64,
    pub ign: f64,
    /// `(crps, ign)` per forecast day.
    pub per_day: Vec<(f64, f64)>,
    pub phi_hpd: (f64, f64),
    pub tau_hpd: Option<(f64, f64)>,
}

/// Fits `fitter` to the first `window_end` observations, forecasts the
/// next `horizon` days and scores them.
pub fn run_cell(
    dataset: &Dataset,
    fitter: ModelKind,
    scenario: ScenarioKind,
    window: usize,
    design: &StudyDesign,
    rng: &mut RandomStream,
) -> Result<CellScores> {
    if window == 0 {
        return Err(Error::Config(String::from("windows are numbered from 1")));
    }
    let end = design.window_end(window);
    if end + design.horizon > dataset.obs.n_steps {
        return Err(Error::Config(alloc::format!(
            "window {window} runs past the end of the series"
        )));
    }
    let train = dataset.obs.truncate(end);
    let held_out: Vec<f64> = (end + 1..=end + design.horizon)
        .map(|t| {
            dataset
                .obs
                .get(t)
                .ok_or_else(|| Error::Config(alloc::format!("no observation on day {t}")))
        })
        .collect::<Result<_>>()?;
    let priors = PriorSet::for_model(fitter, dataset.x0.ln(), design.init_prec0);
    let post = run_chain(
        fitter,
        &train,
        &priors,
        &design.mcmc,
        scenario.resolve(&dataset.generator),
        rng,
    )?;
    let ens = forecast(&post, design.horizon, rng)?;
    let per_day = ens.score(&held_out, Bandwidth::default())?;
    let h = per_day.len() as f64;
    let crps = per_day.iter().map(|s| s.0).sum::<f64>() / h;
    let ign = per_day.iter().map(|s| s.1).sum::<f64>() / h;
    let phi_hpd = hpd_interval(&post.column("phi").unwrap_or_default(), 0.95)?;
    let tau_hpd = match scenario {
        ScenarioKind::TauFixed => None,
        ScenarioKind::TauEstimated => {
            Some(hpd_interval(&post.column("tau").unwrap_or_default(), 0.95)?)
        }
    };
    Ok(CellScores {
        crps,
        ign,
        per_day,
        phi_hpd,
        tau_hpd,
    })
}

/// A cell's result, or the reason it failed.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CellOutcome {
    pub key: CellKey,
    pub generator: ModelKind,
    pub fitter: ModelKind,
    pub result: core::result::Result<CellScores, String>,
}

/// Runs the cell at `key` on its own stream. Errors become failure markers.
pub fn run_key(datasets: &[Vec<Dataset>], design: &StudyDesign, key: CellKey) -> CellOutcome {
    let ds = &datasets[key.generator][key.dataset];
    let fitter = design.fitters[key.fitter];
    let mut rng = key.stream(design.seed);
    let result =
        run_cell(ds, fitter, key.scenario, key.window, design, &mut rng).map_err(|e| e.to_string());
    CellOutcome {
        key,
        generator: ds.generator.kind,
        fitter,
        result,
    }
}

/// HPD coverage of one parameter for one generator and scenario.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CoverageRow {
    pub generator: ModelKind,
    pub scenario: ScenarioKind,
    pub parameter: String,
    pub covered: usize,
    pub total: usize,
}

impl CoverageRow {
    pub fn rate(&self) -> f64 {
        if self.total == 0 {
            f64::NAN
        } else {
            self.covered as f64 / self.total as f64
        }
    }
}

/// Aggregated study output.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StudyReport {
    pub crps: BTreeMap<ScenarioKind, ScoreTable>,
    pub ign: BTreeMap<ScenarioKind, ScoreTable>,
    /// Coverage from self-fits, where the truth is the generator's value.
    pub coverage: Vec<CoverageRow>,
    /// `tau_fixed` against `tau_estimated`, per fitter and metric.
    pub ttests: Vec<PairedTestRow>,
    pub failures: Vec<(CellKey, String)>,
    /// Pairs left out of the tests, with the reason.
    pub skipped_tests: Vec<(String, String)>,
    pub n_cells: usize,
}

impl StudyReport {
    /// Coverage pooled over generators.
    pub fn pooled_coverage(&self, scenario: ScenarioKind, parameter: &str) -> f64 {
        let (c, n) = self
            .coverage
            .iter()
            .filter(|r| r.scenario == scenario && r.parameter == parameter)
            .fold((0, 0), |(c, n), r| (c + r.covered, n + r.total));
        if n == 0 {
            f64::NAN
        } else {
            c as f64 / n as f64
        }
    }
}

/// Per-scenario scores keyed by (generator, dataset, window).
type PairedSites = BTreeMap<(usize, usize, usize), [Option<f64>; 2]>;

/// Folds outcomes in key order into score tables, coverage and paired tests.
pub fn aggregate(
    outcomes: &[CellOutcome],
    design: &StudyDesign,
    alpha: f64,
) -> Result<StudyReport> {
    if outcomes.is_empty() {
        return Err(Error::Config(String::from("no cell results to aggregate")));
    }
    let mut sorted: Vec<&CellOutcome> = outcomes.iter().collect();
    sorted.sort_by_key(|o| o.key);
    let mut report = StudyReport {
        n_cells: sorted.len(),
        ..Default::default()
    };
    let mut cover: BTreeMap<(ModelKind, ScenarioKind, &'static str), (usize, usize)> =
        BTreeMap::new();
    let mut pairs: BTreeMap<(ModelKind, &'static str), PairedSites> = BTreeMap::new();

    for o in sorted {
        let s = match &o.result {
            Ok(s) => s,
            Err(reason) => {
                report.failures.push((o.key, reason.clone()));
                continue;
            }
        };
        let sc = o.key.scenario;
        report
            .crps
            .entry(sc)
            .or_default()
            .push(o.generator, o.fitter, s.crps);
        report
            .ign
            .entry(sc)
            .or_default()
            .push(o.generator, o.fitter, s.ign);
        if o.generator == o.fitter {
            let truth = &design.generators[o.key.generator].params;
            let mut tally = |name, hpd: (f64, f64), value: f64| {
                let e = cover.entry((o.generator, sc, name)).or_default();
                e.0 += usize::from(hpd.0 <= value && value <= hpd.1);
                e.1 += 1;
            };
            tally("phi", s.phi_hpd, truth.proc_prec);
            if let Some(t) = s.tau_hpd {
                tally("tau", t, truth.obs_prec);
            }
        }
        let slot = usize::from(sc == ScenarioKind::TauEstimated);
        let site = (o.key.generator, o.key.dataset, o.key.window);
        for (metric, v) in [("crps", s.crps), ("ign", s.ign)] {
            pairs
                .entry((o.fitter, metric))
                .or_default()
                .entry(site)
                .or_insert([None, None])[slot] = Some(v);
        }
    }

    report.coverage = cover
        .into_iter()
        .map(
            |((generator, scenario, name), (covered, total))| CoverageRow {
                generator,
                scenario,
                parameter: name.to_string(),
                covered,
                total,
            },
        )
        .collect();

    let mut family = Vec::new();
    for ((fitter, metric), sites) in pairs {
        let label = alloc::format!("{}:{metric}", fitter.label());
        let (fixed, estimated): (Vec<f64>, Vec<f64>) =
            sites.values().filter_map(|p| Some((p[0]?, p[1]?))).unzip();
        if fixed.len() < 2 {
            report
                .skipped_tests
                .push((label, String::from("fewer than two paired cells")));
            continue;
        }
        if fixed
            .iter()
            .zip(&estimated)
            .all(|(a, b)| a - b == fixed[0] - estimated[0])
        {
            report
                .skipped_tests
                .push((label, String::from("paired differences have zero variance")));
            continue;
        }
        family.push((label, fixed, estimated));
    }
    if !family.is_empty() {
        report.ttests = paired_t_holm(&family, alpha)?;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> StudyDesign {
        StudyDesign {
            n_datasets: 2,
            series_length: 40,
            initial_window: 30,
            horizon: 3,
            max_windows: Some(2),
            fitters: alloc::vec![ModelKind::Gompertz, ModelKind::Lgd],
            generators: table2()[1..2].to_vec(),
            mcmc: McmcConfig {
                n_iter: 300,
                n_burn: 100,
                n_adapt: 100,
                keep_states: false,
                ..McmcConfig::default()
            },
            ..StudyDesign::desk()
        }
    }

    #[test]
    fn reference_generators() {
        let t = table2();
        assert_eq!(t.len(), 6);
        let lmrd = t.iter().find(|g| g.kind == ModelKind::Lmrd).unwrap();
        assert!((lmrd.params.a.exp() - 1.11).abs() < 1e-12);
        assert_eq!(
            (lmrd.params.b, lmrd.params.proc_prec, lmrd.params.obs_prec),
            (-0.014, 70.2, 188.7)
        );
        let lgc = t.iter().find(|g| g.kind == ModelKind::Lgc).unwrap();
        assert_eq!((lgc.params.proc_prec, lgc.params.obs_prec), (4.0, 4.0));
    }

    #[test]
    fn window_layout() {
        let p = StudyDesign::paper();
        assert_eq!(p.n_windows(), 30);
        assert_eq!(p.window_end(1), 365);
        assert_eq!(p.window_end(30) + p.horizon, 575);
        let d = StudyDesign::desk();
        assert_eq!(d.n_windows(), 4);
        assert_eq!(d.cell_keys().len(), 6 * 5 * 6 * 2 * 4);
        let mut bad = d.clone();
        bad.initial_window = 199;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn datasets_are_reproducible_and_positive() {
        let d = tiny();
        let a = generate_datasets(&d).unwrap();
        let b = generate_datasets(&d).unwrap();
        assert_eq!(a, b);
        assert_ne!(a[0][0].obs.values, a[0][1].obs.values);
        assert!(a
            .iter()
            .flatten()
            .all(|s| s.obs.values.iter().chain(&s.latent).all(|v| *v > 0.0)));
        assert_eq!(a[0][0].obs.indices.len(), 40);
    }

    #[test]
    fn grid_runs_and_aggregates() {
        let d = tiny();
        let data = generate_datasets(&d).unwrap();
        let keys = d.cell_keys();
        let out: Vec<CellOutcome> = keys.iter().map(|&k| run_key(&data, &d, k)).collect();
        assert!(
            out.iter().all(|o| o.result.is_ok()),
            "{:?}",
            out.iter().find(|o| o.result.is_err())
        );
        let fixed = out
            .iter()
            .find(|o| o.key.scenario == ScenarioKind::TauFixed)
            .unwrap();
        assert!(fixed.result.as_ref().unwrap().tau_hpd.is_none());
        assert_eq!(run_key(&data, &d, keys[3]), out[3]);

        let mut reversed = out.clone();
        reversed.reverse();
        let r = aggregate(&out, &d, 0.05).unwrap();
        assert_eq!(r, aggregate(&reversed, &d, 0.05).unwrap());
        assert_eq!(r.n_cells, keys.len());
        assert!(r.failures.is_empty());
        assert_eq!(r.ttests.len() + r.skipped_tests.len(), 4);
        let c = &r.crps[&ScenarioKind::TauFixed];
        assert_eq!(c.cells[&(ModelKind::Gompertz, ModelKind::Lgd)].count, 4);
        let phi = r
            .coverage
            .iter()
            .find(|c| c.scenario == ScenarioKind::TauFixed && c.parameter == "phi")
            .unwrap();
        assert_eq!(phi.total, 4);
    }

    #[test]
    fn single_cell_and_failures() {
        let d = tiny();
        let key = CellKey {
            generator: 0,
            dataset: 0,
            fitter: 0,
            scenario: ScenarioKind::TauFixed,
            window: 1,
        };
        let s = CellScores {
            crps: 0.3,
            ign: 1.2,
            per_day: alloc::vec![],
            phi_hpd: (0.0, 1e9),
            tau_hpd: None,
        };
        let ok = CellOutcome {
            key,
            generator: ModelKind::Gompertz,
            fitter: ModelKind::Gompertz,
            result: Ok(s),
        };
        let bad = CellOutcome {
            key: CellKey { window: 2, ..key },
            result: Err("boom".into()),
            ..ok.clone()
        };
        let r = aggregate(&[ok, bad], &d, 0.05).unwrap();
        assert_eq!(
            r.crps[&ScenarioKind::TauFixed].mean(ModelKind::Gompertz, ModelKind::Gompertz),
            Some(0.3)
        );
        assert_eq!(
            r.ign[&ScenarioKind::TauFixed].mean(ModelKind::Gompertz, ModelKind::Gompertz),
            Some(1.2)
        );
        assert_eq!(r.pooled_coverage(ScenarioKind::TauFixed, "phi"), 1.0);
        assert_eq!(r.failures.len(), 1);
        assert!(aggregate(&[], &d, 0.05).is_err());
    }
}
