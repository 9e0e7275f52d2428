//! Forecast verification: CRPS, ignorance, HPD intervals, coverage and
//! paired t-tests with Holm step-down adjustment.
//!
//! All scores are oriented so that lower is better.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;

use crate::error::{domain, Error, Result};
use crate::models::ModelKind;
use crate::special::student_t_two_sided;
use crate::stats;

/// Posterior-predictive samples for horizons `1..=h`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ForecastEnsemble {
    pub horizon: usize,
    /// `samples[draw][h - 1]`.
    pub samples: Vec<Vec<f64>>,
}

impl ForecastEnsemble {
    pub fn new(horizon: usize, samples: Vec<Vec<f64>>) -> Result<Self> {
        let e = Self { horizon, samples };
        e.validate()?;
        Ok(e)
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples.len() < 2 {
            return Err(Error::TooFewSamples {
                need: 2,
                got: self.samples.len(),
            });
        }
        for row in &self.samples {
            if row.len() != self.horizon {
                return Err(domain(
                    "ForecastEnsemble",
                    "every draw must cover the full horizon",
                ));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(domain("ForecastEnsemble", "non-finite forecast sample"));
            }
        }
        Ok(())
    }

    pub fn n_draws(&self) -> usize {
        self.samples.len()
    }

    /// Samples for horizon `h` (1-based).
    pub fn at_horizon(&self, h: usize) -> Vec<f64> {
        self.samples.iter().map(|row| row[h - 1]).collect()
    }

    /// CRPS and IGN for each horizon against realized values.
    pub fn score(&self, observed: &[f64], rule: Bandwidth) -> Result<Vec<(f64, f64)>> {
        if observed.len() != self.horizon {
            return Err(domain(
                "ForecastEnsemble::score",
                "observed length differs from horizon",
            ));
        }
        (1..=self.horizon)
            .map(|h| {
                let ens = self.at_horizon(h);
                let y = observed[h - 1];
                Ok((crps_sample(&ens, y)?, ign_sample(&ens, y, rule)?))
            })
            .collect()
    }
}

/// Sample CRPS: `mean|x_i - y| - (1 / 2m^2) sum_ij |x_i - x_j|`.
pub fn crps_sample(ensemble: &[f64], y: f64) -> Result<f64> {
    let m = ensemble.len();
    if m < 2 {
        return Err(Error::TooFewSamples { need: 2, got: m });
    }
    if !y.is_finite() || ensemble.iter().any(|v| !v.is_finite()) {
        return Err(domain("crps_sample", "inputs must be finite"));
    }
    let xs = stats::sorted(ensemble);
    let mf = m as f64;
    let abs_err: f64 = xs.iter().map(|x| (x - y).abs()).sum::<f64>() / mf;
    // sum_ij |x_i - x_j| = 2 sum_j x_(j) (2j - m + 1), j zero-based
    let pair: f64 = xs
        .iter()
        .enumerate()
        .map(|(j, x)| x * (2.0 * j as f64 - mf + 1.0))
        .sum::<f64>()
        * 2.0;
    Ok((abs_err - pair / (2.0 * mf * mf)).max(0.0))
}

/// Kernel bandwidth rule for [`ign_sample`].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Bandwidth {
    /// `0.9 min(sd, IQR/1.34) m^(-1/5)` on the natural scale.
    #[default]
    Silverman,
    /// Silverman's rule applied to `log x`; the density is mapped back to
    /// the natural scale. Requires positive samples and observation.
    SilvermanLog,
    /// Fixed bandwidth on the natural scale.
    Fixed(f64),
}

/// Silverman's rule of thumb, falling back to the standard deviation (then
/// the IQR) when the robust spread is zero.
pub fn silverman_bandwidth(xs: &[f64]) -> f64 {
    let sd = stats::std_dev(xs);
    let s = stats::sorted(xs);
    let iqr = (stats::quantile_sorted(&s, 0.75) - stats::quantile_sorted(&s, 0.25)) / 1.34;
    let mut lo = sd.min(iqr);
    if !(lo > 0.0) {
        lo = if sd > 0.0 { sd } else { iqr };
    }
    0.9 * lo * (xs.len() as f64).powf(-0.2)
}

/// Ignorance score `-log f(y)` with `f` a Gaussian kernel density estimate.
pub fn ign_sample(ensemble: &[f64], y: f64, rule: Bandwidth) -> Result<f64> {
    let m = ensemble.len();
    if m < 2 {
        return Err(Error::TooFewSamples { need: 2, got: m });
    }
    if !y.is_finite() || ensemble.iter().any(|v| !v.is_finite()) {
        return Err(domain("ign_sample", "inputs must be finite"));
    }
    let (pts, at, jac) = match rule {
        Bandwidth::SilvermanLog => {
            if y <= 0.0 || ensemble.iter().any(|&v| v <= 0.0) {
                return Err(domain(
                    "ign_sample",
                    "log-scale bandwidth needs positive values",
                ));
            }
            (
                stats::sorted(&ensemble.iter().map(|v| v.ln()).collect::<Vec<_>>()),
                y.ln(),
                y.ln(),
            )
        }
        _ => (stats::sorted(ensemble), y, 0.0),
    };
    let bw = match rule {
        Bandwidth::Fixed(h) => h,
        _ => silverman_bandwidth(&pts),
    };
    if !(bw > 0.0) || !bw.is_finite() {
        return Err(Error::ZeroVariance(String::from(
            "ensemble has no spread; kernel bandwidth is zero",
        )));
    }
    let log_k: Vec<f64> = pts
        .iter()
        .map(|x| {
            let z = (at - x) / bw;
            -0.5 * z * z
        })
        .collect();
    let lse = stats::log_sum_exp(&log_k);
    let log_f = lse - (m as f64).ln() - bw.ln() - 0.5 * (2.0 * core::f64::consts::PI).ln() - jac;
    if !log_f.is_finite() {
        return Err(Error::NonFinite { t: 0 });
    }
    Ok(-log_f)
}

/// Shortest interval spanning `ceil(level m)` sorted samples; ties go to the
/// lowest start.
pub fn hpd_interval(samples: &[f64], level: f64) -> Result<(f64, f64)> {
    if samples.is_empty() {
        return Err(Error::TooFewSamples { need: 1, got: 0 });
    }
    if !(level > 0.0 && level <= 1.0) {
        return Err(domain("hpd_interval", "level must be in (0, 1]"));
    }
    let s = stats::sorted(samples);
    let m = s.len();
    let k = ((level * m as f64 - 1e-9).ceil() as usize).clamp(1, m);
    let mut best = (s[0], s[k - 1]);
    for i in 1..=(m - k) {
        let w = s[i + k - 1] - s[i];
        if w < best.1 - best.0 {
            best = (s[i], s[i + k - 1]);
        }
    }
    Ok(best)
}

/// Fraction of intervals containing `truth`.
pub fn coverage(intervals: &[(f64, f64)], truth: f64) -> Result<f64> {
    if intervals.is_empty() {
        return Err(Error::TooFewSamples { need: 1, got: 0 });
    }
    let hit = intervals
        .iter()
        .filter(|(lo, hi)| *lo <= truth && truth <= *hi)
        .count();
    Ok(hit as f64 / intervals.len() as f64)
}

/// Paired t statistic, its degrees of freedom and two-sided p-value.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PairedT {
    pub t: f64,
    pub df: f64,
    pub p: f64,
    pub mean_diff: f64,
}

pub fn paired_t(a: &[f64], b: &[f64]) -> Result<PairedT> {
    if a.len() != b.len() {
        return Err(domain("paired_t", "score vectors are not aligned"));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    paired_t_from_differences(&d)
}

pub fn paired_t_from_differences(d: &[f64]) -> Result<PairedT> {
    let n = d.len();
    if n < 2 {
        return Err(Error::TooFewSamples { need: 2, got: n });
    }
    let mean = stats::mean(d);
    let sd = stats::std_dev(d);
    if !(sd > 0.0) {
        return Err(Error::ZeroVariance(String::from(
            "paired differences are constant",
        )));
    }
    let df = (n - 1) as f64;
    let t = mean / (sd / (n as f64).sqrt());
    Ok(PairedT {
        t,
        df,
        p: student_t_two_sided(t, df),
        mean_diff: mean,
    })
}

/// Holm step-down adjusted p-values, returned in input order.
pub fn holm_adjust(p: &[f64]) -> Vec<f64> {
    let m = p.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| p[i].total_cmp(&p[j]).then(i.cmp(&j)));
    let mut adj = alloc::vec![0.0; m];
    let mut running: f64 = 0.0;
    for (rank, &i) in order.iter().enumerate() {
        let v = ((m - rank) as f64 * p[i]).min(1.0);
        running = running.max(v);
        adj[i] = running;
    }
    adj
}

/// One row of a paired-test report.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PairedTestRow {
    pub label: String,
    pub n: usize,
    pub mean_diff: f64,
    pub t: f64,
    pub p_raw: f64,
    pub p_adjusted: f64,
    pub significant: bool,
}

/// Paired t-tests across a family of `(label, scores_a, scores_b)` comparisons
/// with Holm adjustment over the whole family.
pub fn paired_t_holm(
    family: &[(String, Vec<f64>, Vec<f64>)],
    alpha: f64,
) -> Result<Vec<PairedTestRow>> {
    let mut tests = Vec::with_capacity(family.len());
    for (label, a, b) in family {
        let r = paired_t(a, b).map_err(|e| match e {
            Error::ZeroVariance(_) => {
                Error::ZeroVariance(alloc::format!("{label}: paired differences are constant"))
            }
            other => other,
        })?;
        tests.push(r);
    }
    let raw: Vec<f64> = tests.iter().map(|t| t.p).collect();
    let adj = holm_adjust(&raw);
    Ok(family
        .iter()
        .zip(tests)
        .zip(adj)
        .map(|(((label, a, _), r), pa)| PairedTestRow {
            label: label.clone(),
            n: a.len(),
            mean_diff: r.mean_diff,
            t: r.t,
            p_raw: r.p,
            p_adjusted: pa,
            significant: pa < alpha,
        })
        .collect())
}

/// Running mean and spread of one table cell.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CellStats {
    pub count: usize,
    pub sum: f64,
    pub sum_sq: f64,
}

impl CellStats {
    pub fn push(&mut self, v: f64) {
        self.count += 1;
        self.sum += v;
        self.sum_sq += v * v;
    }

    pub fn mean(&self) -> f64 {
        self.sum / self.count as f64
    }

    pub fn std_error(&self) -> f64 {
        if self.count < 2 {
            return f64::NAN;
        }
        let n = self.count as f64;
        let var = ((self.sum_sq - self.sum * self.sum / n) / (n - 1.0)).max(0.0);
        (var / n).sqrt()
    }
}

/// Rank annotation of a cell within its generator column.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RankMark {
    Lowest,
    SecondLowest,
    None,
}

/// Mean scores keyed by `(generator, fitter)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoreTable {
    pub cells: BTreeMap<(ModelKind, ModelKind), CellStats>,
}

impl ScoreTable {
    pub fn push(&mut self, generator: ModelKind, fitter: ModelKind, value: f64) {
        self.cells
            .entry((generator, fitter))
            .or_default()
            .push(value);
    }

    pub fn mean(&self, generator: ModelKind, fitter: ModelKind) -> Option<f64> {
        self.cells.get(&(generator, fitter)).map(CellStats::mean)
    }

    pub fn generators(&self) -> Vec<ModelKind> {
        let mut g: Vec<ModelKind> = self.cells.keys().map(|k| k.0).collect();
        g.dedup();
        g
    }

    pub fn fitters(&self) -> Vec<ModelKind> {
        let mut f: Vec<ModelKind> = self.cells.keys().map(|k| k.1).collect();
        f.sort();
        f.dedup();
        f
    }

    /// Fitters ordered by mean score for one generator, best first.
    pub fn ranking(&self, generator: ModelKind) -> Vec<(ModelKind, f64)> {
        let mut r: Vec<(ModelKind, f64)> = self
            .cells
            .iter()
            .filter(|((g, _), _)| *g == generator)
            .map(|((_, f), c)| (*f, c.mean()))
            .collect();
        r.sort_by(|x, y| x.1.total_cmp(&y.1).then(x.0.cmp(&y.0)));
        r
    }

    pub fn mark(&self, generator: ModelKind, fitter: ModelKind) -> RankMark {
        let r = self.ranking(generator);
        match r.iter().position(|(f, _)| *f == fitter) {
            Some(0) => RankMark::Lowest,
            Some(1) => RankMark::SecondLowest,
            _ => RankMark::None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn crps_hand_examples() {
        assert_eq!(crps_sample(&[0.0, 1.0], 0.5).unwrap(), 0.25);
        assert_eq!(crps_sample(&[0.0, 1.0], 2.0).unwrap(), 1.25);
        assert_eq!(crps_sample(&[3.0, 3.0, 3.0], 3.0).unwrap(), 0.0);
        assert!(crps_sample(&[1.0], 1.0).is_err());
    }

    #[test]
    fn crps_matches_double_sum() {
        let xs: [f64; 6] = [0.3, -1.2, 2.5, 0.3, 7.0, -0.4];
        let y = 0.9f64;
        let m = xs.len() as f64;
        let a: f64 = xs.iter().map(|x| (x - y).abs()).sum::<f64>() / m;
        let b: f64 = xs
            .iter()
            .flat_map(|x| xs.iter().map(move |z| (x - z).abs()))
            .sum::<f64>();
        let direct = a - b / (2.0 * m * m);
        assert!((crps_sample(&xs, y).unwrap() - direct).abs() < 1e-14);
    }

    #[test]
    fn ign_is_symmetric_and_tail_larger() {
        let xs = [0.1, 0.5, 0.9, 1.3, 2.0, 2.2, 2.9];
        let mut perm = xs;
        perm.reverse();
        let a = ign_sample(&xs, 1.0, Bandwidth::Silverman).unwrap();
        assert_eq!(a, ign_sample(&perm, 1.0, Bandwidth::Silverman).unwrap());
        let med = stats::median(&xs);
        assert!(
            ign_sample(&xs, 9.0, Bandwidth::Silverman).unwrap()
                > ign_sample(&xs, med, Bandwidth::Silverman).unwrap()
        );
        assert!(ign_sample(&[2.0, 2.0, 2.0], 2.0, Bandwidth::Silverman).is_err());
        assert!(ign_sample(&xs, 1.0, Bandwidth::SilvermanLog)
            .unwrap()
            .is_finite());
    }

    #[test]
    fn silverman_matches_r_default() {
        // bw.nrd0(c(1, 2, 3, 4, 10)) in R = 1.1613...
        let bw = silverman_bandwidth(&[1.0, 2.0, 3.0, 4.0, 10.0]);
        let sd = stats::std_dev(&[1.0, 2.0, 3.0, 4.0, 10.0]);
        let expected = 0.9 * sd.min(2.0 / 1.34) * 5f64.powf(-0.2);
        assert!((bw - expected).abs() < 1e-15);
    }

    #[test]
    fn hpd_examples() {
        let s: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(hpd_interval(&s, 0.95).unwrap(), (1.0, 95.0));
        assert_eq!(hpd_interval(&[4.0; 10], 0.9).unwrap(), (4.0, 4.0));
        assert!(hpd_interval(&[], 0.9).is_err());
        let skew = [0.0, 0.1, 0.2, 0.3, 5.0];
        assert_eq!(hpd_interval(&skew, 0.8).unwrap(), (0.0, 0.3));
    }

    #[test]
    fn coverage_examples() {
        let iv = [(0.0, 1.0), (2.0, 3.0)];
        assert_eq!(coverage(&iv, 0.5).unwrap(), 0.5);
        assert_eq!(coverage(&iv[..1], 0.5).unwrap(), 1.0);
        assert_eq!(coverage(&iv, 9.0).unwrap(), 0.0);
    }

    #[test]
    fn paired_t_examples() {
        let r = paired_t_from_differences(&[1.0, -1.0, 1.0, -1.0]).unwrap();
        assert_eq!(r.t, 0.0);
        assert!((r.p - 1.0).abs() < 1e-15);
        let r = paired_t_from_differences(&[1.0, 2.0, 3.0]).unwrap();
        assert!((r.t - 2.0 * 3f64.sqrt()).abs() < 1e-14);
        assert_eq!(r.df, 2.0);
        // two-sided p for df = 2: 1 - |t| / sqrt(2 + t^2)
        let exact = 1.0 - r.t / (2.0 + r.t * r.t).sqrt();
        assert!((r.p - exact).abs() < 1e-13);
        assert!((r.p - 0.0742).abs() < 5e-5);
        assert!(matches!(
            paired_t_from_differences(&[2.0, 2.0]),
            Err(Error::ZeroVariance(_))
        ));
    }

    #[test]
    fn holm_examples() {
        let adj = holm_adjust(&[0.01, 0.04]);
        assert!((adj[0] - 0.02).abs() < 1e-15 && (adj[1] - 0.04).abs() < 1e-15);
        let adj = holm_adjust(&[0.04, 0.01, 0.03]);
        assert!((adj[1] - 0.03).abs() < 1e-15);
        assert!((adj[2] - 0.06).abs() < 1e-15);
        assert!((adj[0] - 0.06).abs() < 1e-15);
        assert_eq!(holm_adjust(&[0.9, 0.8]), vec![1.0, 1.0]);
        assert_eq!(holm_adjust(&[0.3, 0.2]), vec![0.4, 0.4]);
    }

    #[test]
    fn paired_family_names_failing_pair() {
        let fam = vec![
            (String::from("ok"), vec![1.0, 2.0, 3.0], vec![0.0, 0.0, 0.0]),
            (String::from("flat"), vec![1.0, 1.0], vec![0.0, 0.0]),
        ];
        match paired_t_holm(&fam, 0.05) {
            Err(Error::ZeroVariance(msg)) => assert!(msg.contains("flat")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn score_table_ranks() {
        let mut t = ScoreTable::default();
        t.push(ModelKind::Lgc, ModelKind::Lgc, 1.0);
        t.push(ModelKind::Lgc, ModelKind::Lmrc, 2.0);
        t.push(ModelKind::Lgc, ModelKind::Gompertz, 3.0);
        t.push(ModelKind::Lgc, ModelKind::Gompertz, 5.0);
        assert_eq!(t.mean(ModelKind::Lgc, ModelKind::Gompertz), Some(4.0));
        assert_eq!(t.mark(ModelKind::Lgc, ModelKind::Lgc), RankMark::Lowest);
        assert_eq!(
            t.mark(ModelKind::Lgc, ModelKind::Lmrc),
            RankMark::SecondLowest
        );
        assert_eq!(t.mark(ModelKind::Lgc, ModelKind::Gompertz), RankMark::None);
    }
}
