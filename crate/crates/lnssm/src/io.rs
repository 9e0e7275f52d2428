//! CSV and JSON file formats.
//!
//! Missing values are empty cells. Floats are written in Rust's shortest
//! round-trip form, so identical inputs give identical bytes.

use std::fs;
use std::path::Path;

use chrono::{Datelike, NaiveDate};
use lnssm_core::dalec::{impute_linear, DriverDay, DriverSeries};
use lnssm_core::mcmc::PosteriorSamples;
use lnssm_core::models::{ModelKind, ModelParams, ObservationSeries};
use lnssm_core::scoring::ForecastEnsemble;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{CliError, Result};

/// A CSV file read into string cells with header lookup.
pub struct Table {
    path: std::path::PathBuf,
    headers: Vec<String>,
    rows: Vec<(u64, Vec<String>)>,
}

impl Table {
    pub fn read(path: &Path) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_path(path)
            .map_err(|e| csv_error(path, e))?;
        let headers = rdr
            .headers()
            .map_err(|e| csv_error(path, e))?
            .iter()
            .map(str::to_owned)
            .collect();
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| csv_error(path, e))?;
            let line = rec.position().map_or(0, |p| p.line());
            rows.push((line, rec.iter().map(str::to_owned).collect()));
        }
        Ok(Self {
            path: path.to_path_buf(),
            headers,
            rows,
        })
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.headers.iter().position(|h| h == name)
    }

    pub fn require(&self, name: &str) -> Result<usize> {
        self.column(name)
            .ok_or_else(|| CliError::parse(&self.path, 1, format!("missing column `{name}`")))
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn headers(&self) -> &[String] {
        &self.headers
    }

    /// Optional float in `col` of row `i`; empty cells are `None`.
    pub fn float(&self, i: usize, col: usize) -> Result<Option<f64>> {
        let (line, cells) = &self.rows[i];
        let s = cells.get(col).map_or("", String::as_str);
        if s.is_empty() || s.eq_ignore_ascii_case("na") {
            return Ok(None);
        }
        s.parse::<f64>()
            .map(Some)
            .map_err(|_| CliError::parse(&self.path, *line, format!("`{s}` is not a number")))
    }

    pub fn required_float(&self, i: usize, col: usize) -> Result<f64> {
        self.float(i, col)?.ok_or_else(|| {
            CliError::parse(
                &self.path,
                self.rows[i].0,
                format!("empty `{}`", self.headers[col]),
            )
        })
    }

    pub fn usize(&self, i: usize, col: usize) -> Result<usize> {
        let (line, cells) = &self.rows[i];
        let s = cells.get(col).map_or("", String::as_str);
        s.parse::<usize>().map_err(|_| {
            CliError::parse(
                &self.path,
                *line,
                format!("`{s}` is not a non-negative integer"),
            )
        })
    }

    pub fn text(&self, i: usize, col: usize) -> &str {
        self.rows[i].1.get(col).map_or("", String::as_str)
    }

    pub fn line(&self, i: usize) -> u64 {
        self.rows[i].0
    }

    pub fn error(&self, i: usize, message: impl Into<String>) -> CliError {
        CliError::parse(&self.path, self.rows[i].0, message)
    }
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    let line = e.position().map_or(0, csv::Position::line);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => CliError::io(path, io),
        other => CliError::parse(path, line, format!("{other:?}")),
    }
}

/// Writes rows of already-formatted cells.
pub fn write_csv(
    path: &Path,
    header: &[&str],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(header).map_err(|e| csv_error(path, e))?;
    for r in rows {
        w.write_record(&r).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn fmt(v: f64) -> String {
    format!("{v}")
}

pub fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt).unwrap_or_default()
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::parse(path, e.line() as u64, e.to_string()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serialisable");
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// Reads a `t,y` series (extra columns ignored). Empty `y` cells are gaps;
/// the series length is the largest `t`.
pub fn read_series(path: &Path) -> Result<ObservationSeries> {
    let t = Table::read(path)?;
    let (ct, cy) = (t.require("t")?, t.require("y")?);
    let (mut idx, mut vals, mut n_steps) = (Vec::new(), Vec::new(), 0);
    for i in 0..t.len() {
        let step = t.usize(i, ct)?;
        n_steps = n_steps.max(step);
        if let Some(y) = t.float(i, cy)? {
            if step == 0 {
                return Err(t.error(i, "no observation is allowed at t = 0"));
            }
            if !(y > 0.0) || !y.is_finite() {
                return Err(t.error(i, format!("observation {y} is not positive")));
            }
            if idx.last().is_some_and(|&p| p >= step) {
                return Err(t.error(i, "t must be strictly increasing"));
            }
            idx.push(step);
            vals.push(y);
        }
    }
    Ok(ObservationSeries::new(n_steps, idx, vals)?)
}

/// Writes `t,x,y` with `t = 0` holding the initial state.
pub fn write_series(path: &Path, x0: f64, latent: &[f64], obs: &ObservationSeries) -> Result<()> {
    let rows = std::iter::once(vec!["0".into(), fmt(x0), String::new()]).chain(
        latent
            .iter()
            .enumerate()
            .map(|(i, x)| vec![(i + 1).to_string(), fmt(*x), fmt_opt(obs.get(i + 1))]),
    );
    write_csv(path, &["t", "x", "y"], rows)
}

pub fn write_posterior(path: &Path, post: &PosteriorSamples) -> Result<()> {
    let rows = post
        .params
        .iter()
        .zip(&post.final_states)
        .enumerate()
        .map(|(i, (p, x))| {
            vec![
                i.to_string(),
                fmt(p.a),
                fmt(p.b),
                fmt(p.proc_prec),
                fmt(p.obs_prec),
                fmt(*x),
            ]
        });
    write_csv(path, &["draw", "a", "b", "phi", "tau", "x_last"], rows)
}

pub fn read_posterior(path: &Path, kind: ModelKind, tau_fixed: bool) -> Result<PosteriorSamples> {
    let t = Table::read(path)?;
    let [ca, cb, cp, ct, cx] = ["a", "b", "phi", "tau", "x_last"].map(|c| t.require(c));
    let (ca, cb, cp, ct, cx) = (ca?, cb?, cp?, ct?, cx?);
    let mut params = Vec::with_capacity(t.len());
    let mut finals = Vec::with_capacity(t.len());
    for i in 0..t.len() {
        let p = ModelParams {
            a: t.required_float(i, ca)?,
            b: t.required_float(i, cb)?,
            proc_prec: t.required_float(i, cp)?,
            obs_prec: t.required_float(i, ct)?,
            obs_prec_fixed: tau_fixed,
        };
        p.validate().map_err(|e| t.error(i, e.to_string()))?;
        let x = t.required_float(i, cx)?;
        if !(x > 0.0) {
            return Err(t.error(i, "x_last must be positive"));
        }
        params.push(p);
        finals.push(x);
    }
    Ok(PosteriorSamples {
        kind,
        params,
        states: Vec::new(),
        final_states: finals,
        diagnostics: Default::default(),
    })
}

/// Writes `draw,h1..hH`.
pub fn write_ensemble(path: &Path, ens: &ForecastEnsemble) -> Result<()> {
    let header: Vec<String> = std::iter::once("draw".to_string())
        .chain((1..=ens.horizon).map(|h| format!("h{h}")))
        .collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows = ens.samples.iter().enumerate().map(|(i, r)| {
        std::iter::once(i.to_string())
            .chain(r.iter().map(|v| fmt(*v)))
            .collect()
    });
    write_csv(path, &header, rows)
}

pub fn read_ensemble(path: &Path) -> Result<ForecastEnsemble> {
    let t = Table::read(path)?;
    let cols: Vec<usize> = t
        .headers()
        .iter()
        .enumerate()
        .filter(|(_, h)| h.starts_with('h') && h[1..].parse::<usize>().is_ok())
        .map(|(i, _)| i)
        .collect();
    if cols.is_empty() {
        return Err(CliError::parse(path, 1, "no horizon columns h1..hH"));
    }
    let mut samples = Vec::with_capacity(t.len());
    for i in 0..t.len() {
        samples.push(
            cols.iter()
                .map(|&c| t.required_float(i, c))
                .collect::<Result<Vec<_>>>()?,
        );
    }
    Ok(ForecastEnsemble::new(cols.len(), samples)?)
}

/// Daily drivers with the calendar dates they came from, when known.
#[derive(Debug, Clone)]
pub struct DriverTable {
    pub series: DriverSeries,
    pub dates: Option<Vec<NaiveDate>>,
}

impl DriverTable {
    /// 1-based day index of `date`.
    pub fn day_of(&self, date: NaiveDate) -> Option<usize> {
        self.dates
            .as_ref()?
            .binary_search(&date)
            .ok()
            .map(|i| i + 1)
    }
}

/// Reads `date|day,t_min,t_max,swrad,co2`. Interior gaps are filled
/// linearly; CO2 gaps first take any value from the same calendar month.
pub fn read_drivers(path: &Path) -> Result<DriverTable> {
    let t = Table::read(path)?;
    if t.is_empty() {
        return Err(CliError::parse(path, 1, "no driver rows"));
    }
    let names = ["t_min", "t_max", "swrad", "co2"];
    let cols: Vec<usize> = names.iter().map(|n| t.require(n)).collect::<Result<_>>()?;
    let mut raw: Vec<Vec<Option<f64>>> = (0..4).map(|_| Vec::with_capacity(t.len())).collect();
    for i in 0..t.len() {
        for (k, &c) in cols.iter().enumerate() {
            raw[k].push(t.float(i, c)?);
        }
    }
    let (days, dates) = if let Some(cd) = t.column("date") {
        let mut dates = Vec::with_capacity(t.len());
        for i in 0..t.len() {
            let d = NaiveDate::parse_from_str(t.text(i, cd), "%Y-%m-%d")
                .map_err(|_| t.error(i, format!("`{}` is not a YYYY-MM-DD date", t.text(i, cd))))?;
            if let Some(prev) = dates.last() {
                if d != *prev + chrono::Days::new(1) {
                    return Err(t.error(i, "dates must be consecutive days"));
                }
            }
            dates.push(d);
        }
        broadcast_monthly(&mut raw[3], &dates);
        let first = f64::from(dates[0].ordinal());
        (
            (0..t.len()).map(|i| first + i as f64).collect::<Vec<_>>(),
            Some(dates),
        )
    } else {
        let cd = t.require("day")?;
        let mut days = Vec::with_capacity(t.len());
        for i in 0..t.len() {
            let d = t.required_float(i, cd)?;
            if days
                .last()
                .is_some_and(|&p: &f64| (d - p - 1.0).abs() > 1e-9)
            {
                return Err(t.error(i, "day must increase by one per row"));
            }
            days.push(d);
        }
        (days, None)
    };
    let mut filled = Vec::with_capacity(4);
    for (k, col) in raw.iter().enumerate() {
        filled.push(
            impute_linear(col)
                .map_err(|e| CliError::config(path, format!("column `{}`: {e}", names[k])))?,
        );
    }
    let series = DriverSeries {
        days: (0..t.len())
            .map(|i| DriverDay {
                day: days[i],
                t_min: filled[0][i],
                t_max: filled[1][i],
                swrad: filled[2][i],
                co2: filled[3][i],
            })
            .collect(),
    };
    series
        .validate()
        .map_err(|e| CliError::config(path, e.to_string()))?;
    Ok(DriverTable { series, dates })
}

fn broadcast_monthly(values: &mut [Option<f64>], dates: &[NaiveDate]) {
    let month = |d: &NaiveDate| (d.year(), d.month());
    let known: std::collections::BTreeMap<(i32, u32), f64> = values
        .iter()
        .zip(dates)
        .filter_map(|(v, d)| v.map(|v| (month(d), v)))
        .collect();
    for (v, d) in values.iter_mut().zip(dates) {
        if v.is_none() {
            *v = known.get(&month(d)).copied();
        }
    }
}

pub fn write_drivers(path: &Path, drivers: &DriverSeries) -> Result<()> {
    let rows = drivers.days.iter().map(|d| {
        vec![
            fmt(d.day),
            fmt(d.t_min),
            fmt(d.t_max),
            fmt(d.swrad),
            fmt(d.co2),
        ]
    });
    write_csv(path, &["day", "t_min", "t_max", "swrad", "co2"], rows)
}

/// Reads LAI observations as `(day index, lai)` with `day` (1-based index
/// into the drivers) or `date` columns.
pub fn read_lai(path: &Path, drivers: &DriverTable) -> Result<Vec<(usize, f64)>> {
    let t = Table::read(path)?;
    let cl = t.require("lai")?;
    let mut out: Vec<(usize, f64)> = Vec::with_capacity(t.len());
    for i in 0..t.len() {
        let Some(v) = t.float(i, cl)? else { continue };
        let day = if let Some(cd) = t.column("date") {
            let d = NaiveDate::parse_from_str(t.text(i, cd), "%Y-%m-%d")
                .map_err(|_| t.error(i, format!("`{}` is not a YYYY-MM-DD date", t.text(i, cd))))?;
            drivers
                .day_of(d)
                .ok_or_else(|| t.error(i, "date is outside the driver record"))?
        } else {
            t.usize(i, t.require("day")?)?
        };
        if day == 0 || day > drivers.series.len() {
            return Err(t.error(i, "day is outside the driver record"));
        }
        if !(v > 0.0) {
            return Err(t.error(i, format!("LAI {v} is not positive")));
        }
        if out.last().is_some_and(|&(p, _)| p >= day) {
            return Err(t.error(i, "days must be strictly increasing"));
        }
        out.push((day, v));
    }
    Ok(out)
}

pub fn write_lai(path: &Path, obs: &[(usize, f64)]) -> Result<()> {
    write_csv(
        path,
        &["day", "lai"],
        obs.iter().map(|(d, v)| vec![d.to_string(), fmt(*v)]),
    )
}
