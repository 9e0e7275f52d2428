//! Subcommands. Each reads its config, writes its outputs into the output
//! directory and finishes with `manifest.json`.

use std::path::{Path, PathBuf};
use std::time::Instant;

use lnssm_core::dalec::{DalecEmbedding, PARAM_NAMES};
use lnssm_core::demo::demo_panels;
use lnssm_core::mcmc::{forecast, run_chain, Diagnostics, PriorSet, Scenario};
use lnssm_core::models::{simulate, ModelKind};
use lnssm_core::rng::stream;
use lnssm_core::scoring::RankMark;
use lnssm_core::simstudy::{aggregate, generate_datasets, run_key, CellOutcome, StudyReport};
use serde::{Deserialize, Serialize};

use crate::config::{
    load, mcmc_for, reference_params, DalecConfig, DemoSettings, FitConfig, ForecastConfig, Preset,
    ScoreConfig, SimstudyConfig, SimulateConfig,
};
use crate::dalec_study::{
    drivers_for, fit_replicate, simulate_observations, ReplicateData, ReplicateFit,
};
use crate::error::{CliError, Result};
use crate::io::{self, fmt, fmt_opt, write_csv, write_json};
use crate::manifest::Manifest;
use crate::pool::{map_ordered, worker_count};

/// Global options shared by all subcommands.
#[derive(Debug, Clone)]
pub struct Context {
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub out: PathBuf,
    pub preset: Preset,
    pub workers: usize,
}

impl Context {
    pub fn new(out: impl Into<PathBuf>) -> Self {
        Self {
            config: None,
            seed: None,
            out: out.into(),
            preset: Preset::Desk,
            workers: worker_count(),
        }
    }

    fn prepare(&self) -> Result<()> {
        std::fs::create_dir_all(&self.out).map_err(|e| CliError::io(&self.out, e))
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn finish<T: Serialize>(
        &self,
        command: &str,
        seed: u64,
        text: Option<String>,
        resolved: &T,
        outputs: Vec<String>,
        started: Instant,
    ) -> Result<Vec<String>> {
        let m = Manifest {
            command: command.into(),
            version: env!("CARGO_PKG_VERSION"),
            seed,
            preset: format!("{:?}", self.preset).to_lowercase(),
            config_text: text,
            config: serde_json::to_value(resolved).expect("serialisable"),
            outputs: outputs.clone(),
            wall_time_secs: started.elapsed().as_secs_f64(),
        };
        m.write(&self.out)?;
        Ok(outputs)
    }
}

/// Simulates one series from a benchmark model.
pub fn cmd_simulate(ctx: &Context) -> Result<Vec<String>> {
    let started = Instant::now();
    let loaded = load::<SimulateConfig>(ctx.config.as_deref())?;
    let mut cfg = loaded.value;
    cfg.seed = ctx.seed.unwrap_or(cfg.seed);
    let params = cfg.params.unwrap_or_else(|| reference_params(cfg.model));
    params.validate()?;
    let x0 = match cfg.x0 {
        Some(v) => v,
        None => params.fixed_point(cfg.model).ok_or_else(|| {
            CliError::Usage(format!("{} has no positive fixed point; set x0", cfg.model))
        })?,
    };
    if cfg.obs_every == 0 || cfg.n_steps == 0 {
        return Err(CliError::Usage(
            "n_steps and obs_every must be positive".into(),
        ));
    }
    ctx.prepare()?;
    let idx: Vec<usize> = (cfg.obs_every..=cfg.n_steps)
        .step_by(cfg.obs_every)
        .collect();
    let (traj, obs) = simulate(
        cfg.model,
        &params,
        x0,
        cfg.n_steps,
        &idx,
        &mut stream(cfg.seed, "simulate", &[]),
    )?;
    io::write_series(&ctx.path("series.csv"), x0, &traj.values, &obs)?;
    cfg.params = Some(params);
    cfg.x0 = Some(x0);
    ctx.finish(
        "simulate",
        cfg.seed,
        loaded.text,
        &cfg,
        vec!["series.csv".into()],
        started,
    )
}

/// What a fit run records besides its draws.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitRecord {
    pub model: ModelKind,
    pub tau_fixed: Option<f64>,
    pub fit_end: usize,
    pub diagnostics: Diagnostics,
}

/// Fits one model by MCMC.
pub fn cmd_fit(ctx: &Context) -> Result<Vec<String>> {
    let started = Instant::now();
    let loaded = load::<FitConfig>(ctx.config.as_deref())?;
    let mut cfg = loaded.value;
    cfg.seed = ctx.seed.unwrap_or(cfg.seed);
    let series = io::read_series(&cfg.data)?;
    let fit_end = cfg.fit_end.unwrap_or(series.n_steps);
    if fit_end == 0 || fit_end > series.n_steps {
        return Err(CliError::Usage(format!(
            "fit_end must lie in 1..={}",
            series.n_steps
        )));
    }
    let train = series.truncate(fit_end);
    let first = *train
        .values
        .first()
        .ok_or_else(|| CliError::Usage("no observations to fit".into()))?;
    let mu0 = cfg.init_mu0.unwrap_or(first.ln());
    let mut mcmc = cfg.mcmc.unwrap_or_else(|| mcmc_for(ctx.preset));
    mcmc.seed = cfg.seed;
    mcmc.latent = cfg.latent;
    mcmc.keep_states = false;
    let scenario = cfg
        .tau_fixed
        .map_or(Scenario::TauEstimated, Scenario::TauFixed);
    let priors = PriorSet::for_model(cfg.model, mu0, cfg.init_prec0);
    ctx.prepare()?;
    let post = run_chain(
        cfg.model,
        &train,
        &priors,
        &mcmc,
        scenario,
        &mut stream(cfg.seed, "fit", &[]),
    )?;
    io::write_posterior(&ctx.path("posterior.csv"), &post)?;
    let rec = FitRecord {
        model: cfg.model,
        tau_fixed: cfg.tau_fixed,
        fit_end,
        diagnostics: post.diagnostics,
    };
    write_json(&ctx.path("fit.json"), &rec)?;
    cfg.mcmc = Some(mcmc);
    cfg.init_mu0 = Some(mu0);
    ctx.finish(
        "fit",
        cfg.seed,
        loaded.text,
        &cfg,
        vec!["posterior.csv".into(), "fit.json".into()],
        started,
    )
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ForecastRecord {
    pub model: ModelKind,
    /// Step of the first forecast column.
    pub start: usize,
    pub horizon: usize,
}

/// Posterior-predictive ensemble from a fit directory.
pub fn cmd_forecast(ctx: &Context) -> Result<Vec<String>> {
    let started = Instant::now();
    let loaded = load::<ForecastConfig>(ctx.config.as_deref())?;
    let mut cfg = loaded.value;
    cfg.seed = ctx.seed.unwrap_or(cfg.seed);
    let rec: FitRecord = io::read_json(&cfg.fit_dir.join("fit.json"))?;
    let post = io::read_posterior(
        &cfg.fit_dir.join("posterior.csv"),
        rec.model,
        rec.tau_fixed.is_some(),
    )?;
    ctx.prepare()?;
    let ens = forecast(&post, cfg.horizon, &mut stream(cfg.seed, "forecast", &[]))?;
    io::write_ensemble(&ctx.path("forecast.csv"), &ens)?;
    let out = ForecastRecord {
        model: rec.model,
        start: rec.fit_end + 1,
        horizon: cfg.horizon,
    };
    write_json(&ctx.path("forecast.json"), &out)?;
    ctx.finish(
        "forecast",
        cfg.seed,
        loaded.text,
        &cfg,
        vec!["forecast.csv".into(), "forecast.json".into()],
        started,
    )
}

#[derive(Debug, Clone, Serialize)]
pub struct ScoreSummary {
    pub n: usize,
    pub mean_crps: f64,
    pub mean_ign: f64,
}

/// Scores a forecast against held-out observations, one row per day.
pub fn cmd_score(ctx: &Context) -> Result<Vec<String>> {
    let started = Instant::now();
    let loaded = load::<ScoreConfig>(ctx.config.as_deref())?;
    let cfg = loaded.value;
    let rec: ForecastRecord = io::read_json(&cfg.forecast_dir.join("forecast.json"))?;
    let ens = io::read_ensemble(&cfg.forecast_dir.join("forecast.csv"))?;
    let series = io::read_series(&cfg.data)?;
    let mut rows = Vec::new();
    let (mut sc, mut si) = (0.0, 0.0);
    for h in 1..=ens.horizon {
        let day = rec.start + h - 1;
        let Some(y) = series.get(day) else { continue };
        let draws = ens.at_horizon(h);
        let crps = lnssm_core::scoring::crps_sample(&draws, y)?;
        let ign = lnssm_core::scoring::ign_sample(&draws, y, cfg.bandwidth)?;
        sc += crps;
        si += ign;
        rows.push(vec![
            day.to_string(),
            h.to_string(),
            fmt(y),
            fmt(crps),
            fmt(ign),
        ]);
    }
    if rows.is_empty() {
        return Err(CliError::Usage(
            "no observations fall inside the forecast window".into(),
        ));
    }
    ctx.prepare()?;
    let n = rows.len();
    write_csv(
        &ctx.path("scores.csv"),
        &["day", "horizon", "y", "crps", "ign"],
        rows,
    )?;
    write_json(
        &ctx.path("score_summary.json"),
        &ScoreSummary {
            n,
            mean_crps: sc / n as f64,
            mean_ign: si / n as f64,
        },
    )?;
    let seed = ctx.seed.unwrap_or(0);
    ctx.finish(
        "score",
        seed,
        loaded.text,
        &cfg,
        vec!["scores.csv".into(), "score_summary.json".into()],
        started,
    )
}

/// Runs the rolling-origin simulation study.
pub fn cmd_simstudy(ctx: &Context) -> Result<Vec<String>> {
    let started = Instant::now();
    let loaded = load::<SimstudyConfig>(ctx.config.as_deref())?;
    let cfg = loaded.value;
    let mut design = cfg.design(ctx.preset);
    design.seed = ctx.seed.unwrap_or(design.seed);
    design.mcmc.keep_states = false;
    let alpha = cfg.alpha.unwrap_or(0.05);
    let datasets = generate_datasets(&design)?;
    let keys = design.cell_keys();
    let outcomes: Vec<CellOutcome> =
        map_ordered(&keys, ctx.workers, |&k| run_key(&datasets, &design, k));
    let report = aggregate(&outcomes, &design, alpha)?;
    ctx.prepare()?;

    let mut data_rows = Vec::new();
    for (gi, per) in datasets.iter().enumerate() {
        for ds in per {
            for (t, x) in ds.latent.iter().enumerate() {
                let t = t + 1;
                data_rows.push(vec![
                    design.generators[gi].kind.label().into(),
                    ds.index.to_string(),
                    t.to_string(),
                    fmt(*x),
                    fmt_opt(ds.obs.get(t)),
                ]);
            }
        }
    }
    write_csv(
        &ctx.path("datasets.csv"),
        &["generator", "dataset", "t", "x", "y"],
        data_rows,
    )?;
    write_cells(&ctx.path("scores.csv"), &outcomes)?;
    write_coverage(&ctx.path("coverage.csv"), &report)?;
    write_ttests(&ctx.path("ttests.csv"), &report)?;
    let mut outputs: Vec<String> = ["datasets.csv", "scores.csv", "coverage.csv", "ttests.csv"]
        .map(String::from)
        .to_vec();
    outputs.extend(write_score_tables(
        ctx,
        &report,
        &design.generators.iter().map(|g| g.kind).collect::<Vec<_>>(),
    )?);
    ctx.finish(
        "simstudy",
        design.seed,
        loaded.text,
        &design,
        outputs,
        started,
    )
}

fn write_cells(path: &Path, outcomes: &[CellOutcome]) -> Result<()> {
    let rows = outcomes.iter().map(|o| {
        let k = o.key;
        let mut r = vec![
            o.generator.label().to_string(),
            k.dataset.to_string(),
            o.fitter.label().to_string(),
            k.scenario.label().to_string(),
            k.window.to_string(),
        ];
        match &o.result {
            Ok(s) => r.extend([
                "ok".into(),
                fmt(s.crps),
                fmt(s.ign),
                fmt(s.phi_hpd.0),
                fmt(s.phi_hpd.1),
                fmt_opt(s.tau_hpd.map(|t| t.0)),
                fmt_opt(s.tau_hpd.map(|t| t.1)),
                String::new(),
            ]),
            Err(e) => {
                r.push("failed".into());
                r.extend(std::iter::repeat_n(String::new(), 6));
                r.push(e.clone());
            }
        }
        r
    });
    let header = [
        "generator",
        "dataset",
        "fitter",
        "scenario",
        "window",
        "status",
        "crps",
        "ign",
        "phi_lo",
        "phi_hi",
        "tau_lo",
        "tau_hi",
        "error",
    ];
    write_csv(path, &header, rows)
}

fn write_coverage(path: &Path, report: &StudyReport) -> Result<()> {
    let rows = report.coverage.iter().map(|c| {
        vec![
            c.generator.label().into(),
            c.scenario.label().into(),
            c.parameter.clone(),
            c.covered.to_string(),
            c.total.to_string(),
            fmt(c.rate()),
        ]
    });
    write_csv(
        path,
        &[
            "generator",
            "scenario",
            "parameter",
            "covered",
            "total",
            "rate",
        ],
        rows,
    )
}

fn write_ttests(path: &Path, report: &StudyReport) -> Result<()> {
    let rows = report
        .ttests
        .iter()
        .map(|t| {
            vec![
                t.label.clone(),
                t.n.to_string(),
                fmt(t.mean_diff),
                fmt(t.t),
                fmt(t.p_raw),
                fmt(t.p_adjusted),
                t.significant.to_string(),
                String::new(),
            ]
        })
        .chain(report.skipped_tests.iter().map(|(label, why)| {
            let mut r = vec![label.clone()];
            r.extend(std::iter::repeat_n(String::new(), 6));
            r.push(why.clone());
            r
        }));
    write_csv(
        path,
        &[
            "pair",
            "n",
            "mean_diff",
            "t",
            "p_raw",
            "p_adjusted",
            "significant",
            "note",
        ],
        rows,
    )
}

#[derive(Serialize)]
struct TableCell {
    metric: &'static str,
    scenario: &'static str,
    generator: &'static str,
    fitter: &'static str,
    mean: f64,
    std_error: f64,
    count: usize,
    mark: &'static str,
}

/// Wide tables (fitter rows, generator columns) per scenario, plus JSON
/// with counts, standard errors and rank marks.
fn write_score_tables(
    ctx: &Context,
    report: &StudyReport,
    generators: &[ModelKind],
) -> Result<Vec<String>> {
    let mut outputs = Vec::new();
    let mut cells = Vec::new();
    let mut header = vec!["metric", "fitter"];
    header.extend(generators.iter().map(|g| g.label()));
    for (&scenario, crps) in &report.crps {
        let ign = &report.ign[&scenario];
        let mut rows = Vec::new();
        for (metric, table) in [("crps", crps), ("ign", ign)] {
            for fitter in table.fitters() {
                let mut row = vec![metric.to_string(), fitter.label().to_string()];
                for &g in generators {
                    row.push(fmt_opt(table.mean(g, fitter)));
                    if let Some(c) = table.cells.get(&(g, fitter)) {
                        let mark = match table.mark(g, fitter) {
                            RankMark::Lowest => "lowest",
                            RankMark::SecondLowest => "second",
                            RankMark::None => "",
                        };
                        cells.push(TableCell {
                            metric,
                            scenario: scenario.label(),
                            generator: g.label(),
                            fitter: fitter.label(),
                            mean: c.mean(),
                            std_error: c.std_error(),
                            count: c.count,
                            mark,
                        });
                    }
                }
                rows.push(row);
            }
        }
        let name = format!("table_{}.csv", scenario.label());
        write_csv(&ctx.path(&name), &header, rows)?;
        outputs.push(name);
    }
    write_json(&ctx.path("tables.json"), &cells)?;
    outputs.push("tables.json".into());
    Ok(outputs)
}

#[derive(Serialize)]
struct DalecSummary {
    embedding: DalecEmbedding,
    replicate: usize,
    acceptance_rate: f64,
    n_draws: usize,
    covered: usize,
    mean_crps: f64,
    mean_ign: f64,
    warnings: Vec<String>,
}

/// Fits the carbon model under each embedding and scores held-out LAI.
pub fn cmd_dalec(ctx: &Context) -> Result<Vec<String>> {
    let started = Instant::now();
    let loaded = load::<DalecConfig>(ctx.config.as_deref())?;
    let mut cfg = loaded.value;
    cfg.seed = ctx.seed.unwrap_or(cfg.seed);
    if cfg.replicates == 0 || cfg.embeddings.is_empty() {
        return Err(CliError::Usage(
            "replicates and embeddings must be nonempty".into(),
        ));
    }
    let pmcmc = cfg.pmcmc_for(ctx.preset);
    pmcmc.validate()?;
    let file_drivers = cfg.drivers.as_deref().map(io::read_drivers).transpose()?;
    ctx.prepare()?;

    let mut jobs = Vec::new();
    let mut outputs = Vec::new();
    for r in 0..cfg.replicates {
        let drivers = drivers_for(&cfg, r, file_drivers.as_ref());
        if file_drivers.is_none() {
            let name = format!("drivers_r{r}.csv");
            io::write_drivers(&ctx.path(&name), &drivers.series)?;
            outputs.push(name);
        }
        for &emb in &cfg.embeddings {
            let (lai, synthetic) = match &cfg.lai {
                Some(p) => (io::read_lai(p, &drivers)?, false),
                None => {
                    let lai = simulate_observations(&cfg, emb, r, &drivers)?;
                    let name = format!("lai_{}_r{r}.csv", emb.label());
                    io::write_lai(&ctx.path(&name), &lai)?;
                    outputs.push(name);
                    (lai, true)
                }
            };
            jobs.push((
                emb,
                r,
                ReplicateData {
                    drivers: drivers.clone(),
                    lai,
                    synthetic,
                },
            ));
        }
    }
    let fits: Vec<Result<ReplicateFit>> = map_ordered(&jobs, ctx.workers, |(emb, r, data)| {
        fit_replicate(&cfg, *emb, *r, data, &pmcmc)
    });

    let mut summary = Vec::new();
    let mut interval_rows = Vec::new();
    for fit in fits {
        let fit = fit?;
        let tag = format!("{}_r{}", fit.embedding.label(), fit.replicate);
        let mut header: Vec<&str> = vec!["draw"];
        header.extend(PARAM_NAMES);
        header.push("loglik");
        let rows = fit
            .samples
            .draws
            .iter()
            .zip(&fit.samples.logliks)
            .enumerate()
            .map(|(i, (d, ll))| {
                std::iter::once(i.to_string())
                    .chain(d.iter().map(|v| fmt(*v)))
                    .chain([fmt(*ll)])
                    .collect()
            });
        let name = format!("posterior_{tag}.csv");
        write_csv(&ctx.path(&name), &header, rows)?;
        outputs.push(name);

        let name = format!("forecast_{tag}.csv");
        let mut fheader = vec!["draw".to_string()];
        fheader.extend(fit.forecast_days.iter().map(|d| format!("day{d}")));
        let fheader: Vec<&str> = fheader.iter().map(String::as_str).collect();
        let rows = fit.ensemble.samples.iter().enumerate().map(|(i, s)| {
            std::iter::once(i.to_string())
                .chain(s.iter().map(|v| fmt(*v)))
                .collect()
        });
        write_csv(&ctx.path(&name), &fheader, rows)?;
        outputs.push(name);

        let name = format!("scores_{tag}.csv");
        let rows = fit
            .forecast_days
            .iter()
            .zip(&fit.held_out)
            .zip(&fit.scores)
            .map(|((d, y), s)| vec![d.to_string(), fmt(*y), fmt(s.0), fmt(s.1)]);
        write_csv(&ctx.path(&name), &["day", "lai", "crps", "ign"], rows)?;
        outputs.push(name);

        for iv in &fit.intervals {
            interval_rows.push(vec![
                fit.embedding.label().to_string(),
                fit.replicate.to_string(),
                iv.name.to_string(),
                fmt_opt(iv.truth),
                fmt(iv.lo),
                fmt(iv.hi),
                iv.covered.map(|c| c.to_string()).unwrap_or_default(),
            ]);
        }
        let (mean_crps, mean_ign) = fit.mean_scores();
        summary.push(DalecSummary {
            embedding: fit.embedding,
            replicate: fit.replicate,
            acceptance_rate: fit.samples.acceptance_rate,
            n_draws: fit.samples.draws.len(),
            covered: fit.n_covered(),
            mean_crps,
            mean_ign,
            warnings: fit.samples.warnings.clone(),
        });
    }
    write_csv(
        &ctx.path("intervals.csv"),
        &[
            "embedding",
            "replicate",
            "parameter",
            "truth",
            "hpd_lo",
            "hpd_hi",
            "covered",
        ],
        interval_rows,
    )?;
    write_json(&ctx.path("summary.json"), &summary)?;
    outputs.extend(["intervals.csv".into(), "summary.json".into()]);
    cfg.pmcmc = Some(pmcmc);
    ctx.finish("dalec", cfg.seed, loaded.text, &cfg, outputs, started)
}

/// Fan-chart CSVs for the toy systems, one per panel.
pub fn cmd_demo(ctx: &Context) -> Result<Vec<String>> {
    let started = Instant::now();
    let loaded = load::<DemoSettings>(ctx.config.as_deref())?;
    let mut cfg = loaded.value;
    cfg.seed = ctx.seed.unwrap_or(cfg.seed);
    let panels = demo_panels(&cfg)?;
    ctx.prepare()?;
    let mut outputs = Vec::new();
    for p in &panels {
        let name = format!(
            "demo_{}_{}_x0_{}.csv",
            p.system.label(),
            p.law.label(),
            fmt(p.x0)
        );
        let rows = (0..p.lower.len()).map(|h| {
            vec![
                h.to_string(),
                fmt(p.lower[h]),
                fmt(p.median[h]),
                fmt(p.upper[h]),
                fmt(p.sample_path[h]),
            ]
        });
        write_csv(
            &ctx.path(&name),
            &["horizon", "lower", "median", "upper", "sample_path"],
            rows,
        )?;
        outputs.push(name);
    }
    ctx.finish("demo", cfg.seed, loaded.text, &cfg, outputs, started)
}
