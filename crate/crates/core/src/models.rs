//! The six benchmark lognormal state space models.
//!
//! Every model is a pair of lognormal kernels, one for the latent transition
//! and one for the observation. A kernel is built from a positive center
//! (`f*(x_prev)` for the process, `g*(x) = x` for observations) and a
//! precision, according to an [`Embedding`]:
//!
//! | embedding        | log-scale location            | log-scale variance        |
//! |------------------|-------------------------------|---------------------------|
//! | `Biased`         | `log c`                       | `1/prec`                  |
//! | `MomentConstant` | `log c - s2/2`                | `log1p(1/(prec c^2))`     |
//! | `MomentDensity`  | `log c - s2/2`                | `log1p(1/prec)`           |
//!
//! The biased class keeps the median at the center; the two moment-matched
//! classes keep the mean at the center, with variance `1/prec` (constant) or
//! `c^2/prec` (density dependent).

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::Rng;

#[cfg(not(feature = "std"))]
use num_traits::Float;

use crate::dist::{lognormal_sample, normal_logpdf, LogNormalParams};
use crate::error::{checked_exp, domain, Error, Result, EXP_LIMIT};

/// Median-unbiased or mean-unbiased placement of a lognormal kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Embedding {
    Biased,
    MomentConstant,
    MomentDensity,
}

impl Embedding {
    /// Kernel around a positive center.
    pub fn kernel(self, center: f64, prec: f64) -> Result<LogNormalParams> {
        if !(center > 0.0) || !center.is_finite() {
            return Err(domain(
                "Embedding::kernel",
                alloc::format!("center must be positive, got {center}"),
            ));
        }
        self.kernel_from_log(center.ln(), prec)
    }

    /// Kernel around `exp(log_center)`; never exponentiates the center.
    pub fn kernel_from_log(self, log_center: f64, prec: f64) -> Result<LogNormalParams> {
        if !log_center.is_finite() {
            return Err(Error::Overflow {
                op: "Embedding::kernel",
                exponent: log_center,
            });
        }
        if prec.is_nan() || prec <= 0.0 {
            return Err(domain(
                "Embedding::kernel",
                alloc::format!("precision must be positive, got {prec}"),
            ));
        }
        match self {
            Embedding::Biased => LogNormalParams::new(log_center, prec),
            Embedding::MomentConstant => {
                // 1/(prec c^2) = exp(-2 log c - log prec)
                let e = -2.0 * log_center - prec.ln();
                if e > EXP_LIMIT {
                    return Err(Error::Overflow {
                        op: "Embedding::kernel",
                        exponent: e,
                    });
                }
                let s2 = e.exp().ln_1p();
                LogNormalParams::from_log_variance(log_center - 0.5 * s2, s2)
            }
            Embedding::MomentDensity => {
                let s2 = prec.recip().ln_1p();
                LogNormalParams::from_log_variance(log_center - 0.5 * s2, s2)
            }
        }
    }
}

/// Shape of the deterministic mean map `f*`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ProcessFamily {
    /// `f*(x) = exp(a) x^(b+1)`
    Gompertz,
    /// `f*(x) = x exp(a + b x)`
    Ricker,
}

impl ProcessFamily {
    /// `log f*(exp(d_prev))`.
    pub fn log_center(self, d_prev: f64, a: f64, b: f64) -> Result<f64> {
        let lc = match self {
            ProcessFamily::Gompertz => a + (1.0 + b) * d_prev,
            ProcessFamily::Ricker => {
                if d_prev > EXP_LIMIT {
                    return Err(Error::Overflow {
                        op: "process_mean",
                        exponent: d_prev,
                    });
                }
                a + d_prev + b * d_prev.exp()
            }
        };
        if !lc.is_finite() || lc.abs() > EXP_LIMIT {
            return Err(Error::Overflow {
                op: "process_mean",
                exponent: lc,
            });
        }
        Ok(lc)
    }
}

/// The six benchmark models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(
    feature = "serde",
    serde(try_from = "alloc::string::String", into = "&'static str")
)]
pub enum ModelKind {
    Gompertz,
    MoranRicker,
    Lgc,
    Lmrc,
    Lgd,
    Lmrd,
}

impl ModelKind {
    /// Column order used by the published score tables.
    pub const ALL: [ModelKind; 6] = [
        ModelKind::MoranRicker,
        ModelKind::Gompertz,
        ModelKind::Lmrc,
        ModelKind::Lgc,
        ModelKind::Lmrd,
        ModelKind::Lgd,
    ];

    pub fn family(self) -> ProcessFamily {
        match self {
            ModelKind::Gompertz | ModelKind::Lgc | ModelKind::Lgd => ProcessFamily::Gompertz,
            ModelKind::MoranRicker | ModelKind::Lmrc | ModelKind::Lmrd => ProcessFamily::Ricker,
        }
    }

    pub fn embedding(self) -> Embedding {
        match self {
            ModelKind::Gompertz | ModelKind::MoranRicker => Embedding::Biased,
            ModelKind::Lgc | ModelKind::Lmrc => Embedding::MomentConstant,
            ModelKind::Lgd | ModelKind::Lmrd => Embedding::MomentDensity,
        }
    }

    pub fn is_constant_variance(self) -> bool {
        self.embedding() == Embedding::MomentConstant
    }

    /// Short label as used in the score tables.
    pub fn label(self) -> &'static str {
        match self {
            ModelKind::Gompertz => "Gomp",
            ModelKind::MoranRicker => "MR",
            ModelKind::Lgc => "LGC",
            ModelKind::Lmrc => "LMRC",
            ModelKind::Lgd => "LGD",
            ModelKind::Lmrd => "LMRD",
        }
    }

    /// Support of the uniform prior on `a`.
    pub fn a_bounds(self) -> (f64, f64) {
        if self.is_constant_variance() {
            (0.0, 10.0)
        } else {
            (-10.0, 10.0)
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        Ok(match lower.as_str() {
            "gompertz" | "gomp" => ModelKind::Gompertz,
            "moranricker" | "moran-ricker" | "moran_ricker" | "mr" => ModelKind::MoranRicker,
            "lgc" => ModelKind::Lgc,
            "lmrc" => ModelKind::Lmrc,
            "lgd" => ModelKind::Lgd,
            "lmrd" => ModelKind::Lmrd,
            _ => return Err(Error::Config(alloc::format!("unknown model kind `{s}`"))),
        })
    }
}

impl TryFrom<alloc::string::String> for ModelKind {
    type Error = Error;

    fn try_from(s: alloc::string::String) -> Result<Self> {
        s.parse()
    }
}

impl From<ModelKind> for &'static str {
    fn from(k: ModelKind) -> Self {
        k.label()
    }
}

/// Static parameters `a`, `b`, process precision `phi` and observation
/// precision `tau`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ModelParams {
    pub a: f64,
    pub b: f64,
    #[cfg_attr(feature = "serde", serde(rename = "phi"))]
    pub proc_prec: f64,
    #[cfg_attr(feature = "serde", serde(rename = "tau"))]
    pub obs_prec: f64,
    #[cfg_attr(feature = "serde", serde(default))]
    pub obs_prec_fixed: bool,
}

impl ModelParams {
    pub fn new(a: f64, b: f64, proc_prec: f64, obs_prec: f64) -> Result<Self> {
        let p = Self {
            a,
            b,
            proc_prec,
            obs_prec,
            obs_prec_fixed: false,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.a.is_finite() || !self.b.is_finite() {
            return Err(domain("ModelParams", "a and b must be finite"));
        }
        if !(self.proc_prec > 0.0) || !(self.obs_prec > 0.0) {
            return Err(domain("ModelParams", "precisions must be positive"));
        }
        Ok(())
    }

    /// Deterministic fixed point of the mean map, when one exists.
    pub fn fixed_point(&self, kind: ModelKind) -> Option<f64> {
        if self.b == 0.0 {
            return None;
        }
        let x = match kind.family() {
            ProcessFamily::Gompertz => (-self.a / self.b).exp(),
            ProcessFamily::Ricker => -self.a / self.b,
        };
        (x > 0.0 && x.is_finite()).then_some(x)
    }
}

/// Mean map `f*(x_prev)`.
pub fn process_mean(kind: ModelKind, x_prev: f64, params: &ModelParams) -> Result<f64> {
    positive("process_mean", x_prev)?;
    let lc = kind.family().log_center(x_prev.ln(), params.a, params.b)?;
    checked_exp("process_mean", lc)
}

pub fn transition_kernel(
    kind: ModelKind,
    x_prev: f64,
    params: &ModelParams,
) -> Result<LogNormalParams> {
    positive("transition_kernel", x_prev)?;
    transition_kernel_log(kind, x_prev.ln(), params)
}

/// Transition kernel given `d_prev = log x_prev`.
pub fn transition_kernel_log(
    kind: ModelKind,
    d_prev: f64,
    params: &ModelParams,
) -> Result<LogNormalParams> {
    let lc = kind.family().log_center(d_prev, params.a, params.b)?;
    kind.embedding().kernel_from_log(lc, params.proc_prec)
}

pub fn observation_kernel(
    kind: ModelKind,
    x: f64,
    params: &ModelParams,
) -> Result<LogNormalParams> {
    positive("observation_kernel", x)?;
    kind.embedding().kernel_from_log(x.ln(), params.obs_prec)
}

pub fn observation_kernel_log(
    kind: ModelKind,
    d: f64,
    params: &ModelParams,
) -> Result<LogNormalParams> {
    kind.embedding().kernel_from_log(d, params.obs_prec)
}

/// One stochastic transition `X_t | X_{t-1}`.
pub fn step<R: Rng + ?Sized>(
    kind: ModelKind,
    x_prev: f64,
    params: &ModelParams,
    rng: &mut R,
) -> Result<f64> {
    let k = transition_kernel(kind, x_prev, params)?;
    positive_draw("step", lognormal_sample(k, rng))
}

/// One observation `Y | X = x`; `g*(x) = x` for all six models.
pub fn observe<R: Rng + ?Sized>(
    kind: ModelKind,
    x: f64,
    params: &ModelParams,
    rng: &mut R,
) -> Result<f64> {
    let k = observation_kernel(kind, x, params)?;
    positive_draw("observe", lognormal_sample(k, rng))
}

fn positive(op: &'static str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(domain(
            op,
            alloc::format!("state must be positive and finite, got {x}"),
        ))
    }
}

fn positive_draw(op: &'static str, x: f64) -> Result<f64> {
    if x > 0.0 && x.is_finite() {
        Ok(x)
    } else {
        Err(Error::Positivity(alloc::format!("{op} produced {x}")))
    }
}

/// Latent path `X_0, X_1, ..., X_T` on the natural scale.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Trajectory {
    pub x0: f64,
    /// `values[t - 1] = X_t`.
    pub values: Vec<f64>,
}

impl Trajectory {
    pub fn new(x0: f64, values: Vec<f64>) -> Result<Self> {
        let t = Self { x0, values };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        positive("Trajectory", self.x0)?;
        for &v in &self.values {
            positive("Trajectory", v)?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `X_t` for `t` in `0..=T`.
    pub fn at(&self, t: usize) -> f64 {
        if t == 0 {
            self.x0
        } else {
            self.values[t - 1]
        }
    }

    pub fn last(&self) -> f64 {
        self.values.last().copied().unwrap_or(self.x0)
    }

    /// `log X_0, ..., log X_T`.
    pub fn log_states(&self) -> Vec<f64> {
        core::iter::once(self.x0)
            .chain(self.values.iter().copied())
            .map(f64::ln)
            .collect()
    }

    pub fn from_log_states(d: &[f64]) -> Self {
        Self {
            x0: d[0].exp(),
            values: d[1..].iter().map(|v| v.exp()).collect(),
        }
    }
}

/// Observations `Y_i` at a strictly increasing index set `I` within `1..=T`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ObservationSeries {
    /// Length `T` of the latent series the indices refer to.
    pub n_steps: usize,
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl ObservationSeries {
    pub fn new(n_steps: usize, indices: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        let s = Self {
            n_steps,
            indices,
            values,
        };
        s.validate()?;
        Ok(s)
    }

    /// Observations at every step `1..=T`.
    pub fn complete(values: Vec<f64>) -> Result<Self> {
        let n = values.len();
        Self::new(n, (1..=n).collect(), values)
    }

    pub fn validate(&self) -> Result<()> {
        if self.indices.len() != self.values.len() {
            return Err(domain(
                "ObservationSeries",
                "indices and values differ in length",
            ));
        }
        let mut prev = 0;
        for &i in &self.indices {
            if i <= prev || i > self.n_steps {
                return Err(domain(
                    "ObservationSeries",
                    alloc::format!(
                        "indices must be strictly increasing within 1..={}",
                        self.n_steps
                    ),
                ));
            }
            prev = i;
        }
        for &v in &self.values {
            positive("ObservationSeries", v)?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Dense `log Y_t` lookup indexed by `t` in `0..=T` (`None` where absent).
    pub fn dense_log(&self) -> Vec<Option<f64>> {
        let mut f = alloc::vec![None; self.n_steps + 1];
        for (&i, &y) in self.indices.iter().zip(&self.values) {
            f[i] = Some(y.ln());
        }
        f
    }

    /// Observations with index `<= t_end`, on a latent series of length `t_end`.
    pub fn truncate(&self, t_end: usize) -> Self {
        let keep = self.indices.iter().take_while(|&&i| i <= t_end).count();
        Self {
            n_steps: t_end,
            indices: self.indices[..keep].to_vec(),
            values: self.values[..keep].to_vec(),
        }
    }

    /// Value observed at step `t`, if any.
    pub fn get(&self, t: usize) -> Option<f64> {
        self.indices.binary_search(&t).ok().map(|k| self.values[k])
    }
}

/// Simulates `X_1..X_T` and observes at `obs_indices`.
///
/// Random draws are consumed in time order: the transition at `t`, then the
/// observation at `t` when `t` is observed.
pub fn simulate<R: Rng + ?Sized>(
    kind: ModelKind,
    params: &ModelParams,
    x0: f64,
    n_steps: usize,
    obs_indices: &[usize],
    rng: &mut R,
) -> Result<(Trajectory, ObservationSeries)> {
    if n_steps == 0 {
        return Err(Error::Config(String::from(
            "simulation length must be at least 1",
        )));
    }
    positive("simulate", x0)?;
    params.validate()?;
    let mut values = Vec::with_capacity(n_steps);
    let mut obs = Vec::with_capacity(obs_indices.len());
    let mut next_obs = obs_indices.iter().peekable();
    let mut x = x0;
    for t in 1..=n_steps {
        x = step(kind, x, params, rng)?;
        values.push(x);
        if next_obs.peek() == Some(&&t) {
            next_obs.next();
            obs.push(observe(kind, x, params, rng)?);
        }
    }
    let series = ObservationSeries::new(n_steps, obs_indices.to_vec(), obs)?;
    Ok((Trajectory { x0, values }, series))
}

/// Log density of the transition `D_{t-1} -> D_t` on the log scale.
pub fn process_term_log(kind: ModelKind, d_prev: f64, d: f64, params: &ModelParams) -> Result<f64> {
    let k = transition_kernel_log(kind, d_prev, params)?;
    Ok(normal_logpdf(d, k.mu(), k.prec()))
}

/// Log density of the observation `F = log Y` given `D = log X`.
pub fn obs_term_log(kind: ModelKind, d: f64, f: f64, params: &ModelParams) -> Result<f64> {
    let k = observation_kernel_log(kind, d, params)?;
    Ok(normal_logpdf(f, k.mu(), k.prec()))
}

/// Sum of log-scale transition densities for `t = 1..=T`.
pub fn process_loglik_log(kind: ModelKind, d: &[f64], params: &ModelParams) -> Result<f64> {
    let mut total = 0.0;
    for t in 1..d.len() {
        let v = process_term_log(kind, d[t - 1], d[t], params)?;
        if !v.is_finite() {
            return Err(Error::NonFinite { t });
        }
        total += v;
    }
    Ok(total)
}

/// Sum of log-scale observation densities over the observed steps.
pub fn obs_loglik_log(
    kind: ModelKind,
    d: &[f64],
    f: &[Option<f64>],
    params: &ModelParams,
) -> Result<f64> {
    let mut total = 0.0;
    for (t, fv) in f.iter().enumerate() {
        if let Some(fv) = fv {
            let v = obs_term_log(kind, d[t], *fv, params)?;
            if !v.is_finite() {
                return Err(Error::NonFinite { t });
            }
            total += v;
        }
    }
    Ok(total)
}

/// Joint log density of `(D_{1:T}, F_I)` given `D_0`, on the log scale.
///
/// `d` holds `D_0..=D_T` and `f` is the dense lookup from
/// [`ObservationSeries::dense_log`].
pub fn loglik_log_space(
    kind: ModelKind,
    d: &[f64],
    f: &[Option<f64>],
    params: &ModelParams,
) -> Result<f64> {
    Ok(process_loglik_log(kind, d, params)? + obs_loglik_log(kind, d, f, params)?)
}

/// Joint log density of `(X_{1:T}, Y_I)` given `X_0`, on the natural scale.
///
/// Computed from the log-scale density with the change-of-variables term
/// `- sum_t log X_t - sum_{i in I} log Y_i`, so all six models are reported
/// on the same measure.
pub fn loglik_joint(
    kind: ModelKind,
    traj: &Trajectory,
    obs: &ObservationSeries,
    params: &ModelParams,
) -> Result<f64> {
    traj.validate()?;
    obs.validate()?;
    if obs.n_steps != traj.len() {
        return Err(domain(
            "loglik_joint",
            alloc::format!(
                "observation horizon {} differs from trajectory length {}",
                obs.n_steps,
                traj.len()
            ),
        ));
    }
    let d = traj.log_states();
    let f = obs.dense_log();
    let log_space = loglik_log_space(kind, &d, &f, params)?;
    let jacobian: f64 = d[1..].iter().sum::<f64>() + f.iter().flatten().sum::<f64>();
    let total = log_space - jacobian;
    if !total.is_finite() {
        return Err(Error::NonFinite { t: traj.len() });
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::{lognormal_logpdf, mm_transform, MomentPair};
    use crate::rng::stream;

    fn p(a: f64, b: f64, phi: f64, tau: f64) -> ModelParams {
        ModelParams::new(a, b, phi, tau).unwrap()
    }

    #[test]
    fn process_mean_reference_points() {
        let g = p(0.82f64.ln(), -0.658, 70.2, 188.7);
        assert!((process_mean(ModelKind::Gompertz, 1.0, &g).unwrap() - 0.82).abs() < 1e-14);
        let a = 1.26f64.ln();
        let b = -0.034;
        let fp = -a / b;
        assert!((fp - 6.797_4).abs() < 1e-4);
        let mr = p(a, b, 51.9, 188.7);
        assert!((process_mean(ModelKind::MoranRicker, fp, &mr).unwrap() - fp).abs() < 1e-12);
        let id = p(0.0, 0.0, 1.0, 1.0);
        for kind in ModelKind::ALL {
            for &x in &[0.1, 1.0, 7.5] {
                assert!((process_mean(kind, x, &id).unwrap() - x).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn overflow_is_an_error() {
        let wild = p(5.0, 3.0, 1.0, 1.0);
        let err = process_mean(ModelKind::MoranRicker, 300.0, &wild).unwrap_err();
        assert!(matches!(err, Error::Overflow { .. }));
        assert!(process_mean(ModelKind::Gompertz, 1e300, &p(0.0, 10.0, 1.0, 1.0)).is_err());
    }

    #[test]
    fn infinite_precision_steps_are_deterministic() {
        let params = p(0.1, -0.05, f64::INFINITY, f64::INFINITY);
        let mut rng = stream(1, "t", &[]);
        for kind in ModelKind::ALL {
            let f = process_mean(kind, 2.0, &params).unwrap();
            let x = step(kind, 2.0, &params, &mut rng).unwrap();
            assert!((x - f).abs() <= 1e-12 * f, "{kind}: {x} vs {f}");
            assert!((observe(kind, 3.0, &params, &mut rng).unwrap() - 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn kernels_match_moment_transform() {
        // Constant variance: mean f, variance 1/phi.
        let params = p(0.2, -0.1, 4.0, 9.0);
        let f = process_mean(ModelKind::Lgc, 2.0, &params).unwrap();
        let k = transition_kernel(ModelKind::Lgc, 2.0, &params).unwrap();
        let m = mm_transform(MomentPair::new(f, 0.25).unwrap()).unwrap();
        assert!((k.mu() - m.mu()).abs() < 1e-13 && (k.prec() / m.prec() - 1.0).abs() < 1e-12);
        // Density dependent: mean f, variance f^2/phi.
        let k = transition_kernel(ModelKind::Lgd, 2.0, &params).unwrap();
        let m = mm_transform(MomentPair::new(f, f * f / 4.0).unwrap()).unwrap();
        assert!((k.mu() - m.mu()).abs() < 1e-13 && (k.prec() / m.prec() - 1.0).abs() < 1e-12);
        // Observations: mean x, variance x^2/tau.
        let k = observation_kernel(ModelKind::Lmrd, 3.0, &params).unwrap();
        let m = mm_transform(MomentPair::new(3.0, 1.0).unwrap()).unwrap();
        assert!((k.mu() - m.mu()).abs() < 1e-13);
    }

    #[test]
    fn single_step_loglik_is_composition() {
        let params = p(0.1, -0.2, 3.0, 5.0);
        let traj = Trajectory::new(1.5, alloc::vec![1.8]).unwrap();
        let obs = ObservationSeries::complete(alloc::vec![2.1]).unwrap();
        for kind in ModelKind::ALL {
            let expected = lognormal_logpdf(1.8, transition_kernel(kind, 1.5, &params).unwrap())
                .unwrap()
                + lognormal_logpdf(2.1, observation_kernel(kind, 1.8, &params).unwrap()).unwrap();
            let got = loglik_joint(kind, &traj, &obs, &params).unwrap();
            assert!((got - expected).abs() < 1e-12, "{kind}");
        }
    }

    #[test]
    fn simulation_is_reproducible_and_positive() {
        let params = p(0.82f64.ln(), -0.658, 70.2, 188.7);
        let idx: Vec<usize> = (1..=575).collect();
        let run = |seed| {
            simulate(
                ModelKind::Gompertz,
                &params,
                0.74,
                575,
                &idx,
                &mut stream(seed, "sim", &[]),
            )
            .unwrap()
        };
        let (t1, o1) = run(4);
        let (t2, o2) = run(4);
        assert_eq!(t1, t2);
        assert_eq!(o1, o2);
        assert!(t1
            .values
            .iter()
            .chain(&o1.values)
            .all(|v| *v > 0.0 && v.is_finite()));
    }

    #[test]
    fn simulate_single_step_noiseless() {
        let params = p(0.3, -0.1, f64::INFINITY, f64::INFINITY);
        let (t, o) = simulate(
            ModelKind::Lmrc,
            &params,
            2.0,
            1,
            &[1],
            &mut stream(0, "s", &[]),
        )
        .unwrap();
        let f = process_mean(ModelKind::Lmrc, 2.0, &params).unwrap();
        assert!((t.values[0] - f).abs() < 1e-12);
        assert!((o.values[0] - t.values[0]).abs() < 1e-12);
    }

    #[test]
    fn observation_series_validation() {
        assert!(ObservationSeries::new(5, alloc::vec![1, 1], alloc::vec![1.0, 1.0]).is_err());
        assert!(ObservationSeries::new(5, alloc::vec![0], alloc::vec![1.0]).is_err());
        assert!(ObservationSeries::new(5, alloc::vec![6], alloc::vec![1.0]).is_err());
        assert!(ObservationSeries::new(5, alloc::vec![2], alloc::vec![-1.0]).is_err());
        let s =
            ObservationSeries::new(5, alloc::vec![1, 3, 5], alloc::vec![1.0, 2.0, 3.0]).unwrap();
        let t = s.truncate(3);
        assert_eq!(t.indices, alloc::vec![1, 3]);
        assert_eq!(t.n_steps, 3);
        assert_eq!(s.get(3), Some(2.0));
        assert_eq!(s.get(2), None);
    }

    #[test]
    fn parse_kinds() {
        for kind in ModelKind::ALL {
            assert_eq!(kind.label().parse::<ModelKind>().unwrap(), kind);
        }
        assert_eq!(
            "moran-ricker".parse::<ModelKind>().unwrap(),
            ModelKind::MoranRicker
        );
        assert!("nope".parse::<ModelKind>().is_err());
    }
}
