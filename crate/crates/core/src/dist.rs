//! Lognormal (precision parameterization), half-Cauchy and the
//! moment-matching transform pair.
//!
//! Log-scale spreads are carried as precisions everywhere; `prec = +inf` is
//! the point-mass limit and is accepted by the samplers but has no density.

use core::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;

#[cfg(not(feature = "std"))]
use num_traits::Float;

use crate::error::{domain, Error, Result};

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

/// Lognormal parameters: log-scale location and log-scale precision.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LogNormalParams {
    mu: f64,
    prec: f64,
}

impl LogNormalParams {
    pub fn new(mu: f64, prec: f64) -> Result<Self> {
        if !mu.is_finite() {
            return Err(domain(
                "LogNormalParams",
                "log-scale location must be finite",
            ));
        }
        if prec.is_nan() || prec <= 0.0 {
            return Err(domain(
                "LogNormalParams",
                alloc::format!("log-scale precision must be positive, got {prec}"),
            ));
        }
        Ok(Self { mu, prec })
    }

    /// Builds the parameters from a log-scale variance.
    pub fn from_log_variance(mu: f64, log_variance: f64) -> Result<Self> {
        if log_variance.is_nan() || log_variance < 0.0 {
            return Err(domain(
                "LogNormalParams",
                "log-scale variance must be non-negative",
            ));
        }
        Self::new(mu, 1.0 / log_variance)
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn prec(&self) -> f64 {
        self.prec
    }

    pub fn log_variance(&self) -> f64 {
        1.0 / self.prec
    }

    /// Median `exp(mu)`.
    pub fn median(&self) -> f64 {
        self.mu.exp()
    }
}

/// Mean and variance of a positive random variable.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MomentPair {
    pub mean: f64,
    pub variance: f64,
}

impl MomentPair {
    pub fn new(mean: f64, variance: f64) -> Result<Self> {
        let m = Self { mean, variance };
        m.validate()?;
        Ok(m)
    }

    fn validate(&self) -> Result<()> {
        if !(self.mean > 0.0) || !self.mean.is_finite() {
            return Err(domain(
                "MomentPair",
                alloc::format!("mean must be positive, got {}", self.mean),
            ));
        }
        if !(self.variance > 0.0) || !self.variance.is_finite() {
            return Err(domain(
                "MomentPair",
                alloc::format!("variance must be positive, got {}", self.variance),
            ));
        }
        Ok(())
    }
}

/// Central half-Cauchy distribution with scale `gamma`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct HalfCauchy {
    scale: f64,
}

impl HalfCauchy {
    pub fn new(scale: f64) -> Result<Self> {
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(domain(
                "HalfCauchy",
                alloc::format!("scale must be positive, got {scale}"),
            ));
        }
        Ok(Self { scale })
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// The distribution of `1/S` when `S` has this distribution.
    pub fn reciprocal(&self) -> Self {
        Self {
            scale: 1.0 / self.scale,
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            0.0
        } else {
            2.0 / PI * (x / self.scale).atan()
        }
    }

    pub fn quantile(&self, p: f64) -> f64 {
        self.scale * (0.5 * PI * p).tan()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        self.quantile(u)
    }
}

/// Lognormal parameters with the given mean and variance.
///
/// `log_variance = log1p(variance / mean^2)` and
/// `mu = log(mean) - log_variance / 2`, which equals
/// `log(mean^2 / sqrt(mean^2 + variance))` without the cancellation.
pub fn mm_transform(m: MomentPair) -> Result<LogNormalParams> {
    m.validate()?;
    let log_variance = (m.variance / (m.mean * m.mean)).ln_1p();
    let mu = m.mean.ln() - 0.5 * log_variance;
    LogNormalParams::new(mu, 1.0 / log_variance)
}

/// Mean and variance of a lognormal.
pub fn mm_inverse(p: LogNormalParams) -> MomentPair {
    let s2 = p.log_variance();
    MomentPair {
        mean: (p.mu + 0.5 * s2).exp(),
        variance: s2.exp_m1() * (2.0 * p.mu + s2).exp(),
    }
}

/// Log density of a normal with the given mean and precision.
pub fn normal_logpdf(x: f64, mean: f64, prec: f64) -> f64 {
    let z = x - mean;
    0.5 * prec.ln() - HALF_LN_2PI - 0.5 * prec * z * z
}

pub fn lognormal_logpdf(x: f64, p: LogNormalParams) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(domain(
            "lognormal_logpdf",
            alloc::format!("x must be positive, got {x}"),
        ));
    }
    if p.prec.is_infinite() {
        return Err(domain("lognormal_logpdf", "point mass has no density"));
    }
    let lx = x.ln();
    Ok(normal_logpdf(lx, p.mu, p.prec) - lx)
}

/// Draws `exp(Z)` with `Z ~ N(mu, 1/prec)`.
pub fn lognormal_sample<R: Rng + ?Sized>(p: LogNormalParams, rng: &mut R) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    (p.mu + z / p.prec.sqrt()).exp()
}

/// Draws from `N(mean, 1/prec)`.
pub fn normal_sample<R: Rng + ?Sized>(mean: f64, prec: f64, rng: &mut R) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    mean + z / prec.sqrt()
}

pub fn halfcauchy_logpdf(x: f64, h: HalfCauchy) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(domain(
            "halfcauchy_logpdf",
            alloc::format!("x must be positive, got {x}"),
        ));
    }
    let r = x / h.scale;
    Ok((2.0 / PI).ln() - h.scale.ln() - (r * r).ln_1p())
}

/// Conditional mean, variance and median of `f_star * exp(eps)`,
/// `eps ~ N(0, 1/prec)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassMoments {
    pub mean: f64,
    pub variance: f64,
    pub median: f64,
}

pub fn biased_class_moments(f_star: f64, prec: f64) -> Result<ClassMoments> {
    if !(f_star > 0.0) {
        return Err(domain("biased_class_moments", "f_star must be positive"));
    }
    if !(prec > 0.0) {
        return Err(domain("biased_class_moments", "precision must be positive"));
    }
    let s2 = 1.0 / prec;
    Ok(ClassMoments {
        mean: f_star * (0.5 * s2).exp(),
        variance: f_star * f_star * s2.exp() * s2.exp_m1(),
        median: f_star,
    })
}

impl From<LogNormalParams> for MomentPair {
    fn from(p: LogNormalParams) -> Self {
        mm_inverse(p)
    }
}

impl TryFrom<MomentPair> for LogNormalParams {
    type Error = Error;

    fn try_from(m: MomentPair) -> Result<Self> {
        mm_transform(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn transform_reference_points() {
        let p = mm_transform(MomentPair::new(2.0, 1.0).unwrap()).unwrap();
        assert!(close(p.mu(), 0.581_575_404_902_840_4, 1e-12));
        assert!(close(p.log_variance(), 1.25f64.ln(), 1e-15));
        let p = mm_transform(MomentPair::new(1.0, 0.25).unwrap()).unwrap();
        assert!(close(p.mu(), -0.111_571_775_657_104_9, 1e-12));
        assert!(close(p.log_variance(), 1.25f64.ln(), 1e-15));
    }

    #[test]
    fn transform_degenerate_limit() {
        let p = mm_transform(MomentPair::new(1.0, 1e-300).unwrap()).unwrap();
        assert!(p.mu().abs() < 1e-299);
        assert!(p.log_variance() < 1e-299);
        let m = mm_inverse(LogNormalParams::new(0.0, f64::INFINITY).unwrap());
        assert_eq!(m.mean, 1.0);
        assert_eq!(m.variance, 0.0);
    }

    #[test]
    fn inverse_reference_point() {
        let p = LogNormalParams::from_log_variance(0.581_575_404_902_840_4, 1.25f64.ln()).unwrap();
        let m = mm_inverse(p);
        assert!(close(m.mean, 2.0, 1e-12));
        assert!(close(m.variance, 1.0, 1e-12));
    }

    #[test]
    fn domain_errors() {
        assert!(MomentPair::new(0.0, 1.0).is_err());
        assert!(MomentPair::new(1.0, -1.0).is_err());
        assert!(mm_transform(MomentPair {
            mean: -1.0,
            variance: 1.0
        })
        .is_err());
        let p = LogNormalParams::new(0.0, 1.0).unwrap();
        assert!(lognormal_logpdf(0.0, p).is_err());
        assert!(lognormal_logpdf(-2.0, p).is_err());
        assert!(halfcauchy_logpdf(0.0, HalfCauchy::new(1.0).unwrap()).is_err());
        assert!(LogNormalParams::new(0.0, 0.0).is_err());
        assert!(LogNormalParams::new(f64::NAN, 1.0).is_err());
        assert!(HalfCauchy::new(0.0).is_err());
    }

    #[test]
    fn lognormal_logpdf_reference_points() {
        let unit = LogNormalParams::new(0.0, 1.0).unwrap();
        assert!(close(
            lognormal_logpdf(1.0, unit).unwrap(),
            -HALF_LN_2PI,
            1e-15
        ));
        let shifted = LogNormalParams::new(1.0, 1.0).unwrap();
        assert!(close(
            lognormal_logpdf(core::f64::consts::E, shifted).unwrap(),
            -HALF_LN_2PI - 1.0,
            1e-14
        ));
        let l2 = 2f64.ln();
        let expected = -l2 - HALF_LN_2PI - 0.5 * l2 * l2;
        assert!(close(lognormal_logpdf(2.0, unit).unwrap(), expected, 1e-14));
        assert!(close(expected, -1.852_312_2, 1e-7));
    }

    #[test]
    fn halfcauchy_reference_points() {
        let h = HalfCauchy::new(1.0).unwrap();
        assert!(close(
            halfcauchy_logpdf(1e-12, h).unwrap(),
            (2.0 / PI).ln(),
            1e-12
        ));
        assert!(close((2.0 / PI).ln(), -0.451_58, 1e-5));
        let h3 = HalfCauchy::new(3.0).unwrap();
        assert!(close(
            halfcauchy_logpdf(3.0, h3).unwrap(),
            (1.0 / (3.0 * PI)).ln(),
            1e-14
        ));
        assert!(close(
            halfcauchy_logpdf(2.0, h).unwrap(),
            (2.0 / (5.0 * PI)).ln(),
            1e-14
        ));
        assert!(close((2.0 / (5.0 * PI)).ln(), -2.061_020_6, 1e-7));
    }

    #[test]
    fn biased_moments_reference_points() {
        let m = biased_class_moments(1.0, 1.0).unwrap();
        let e = core::f64::consts::E;
        assert!(close(m.mean, 0.5f64.exp(), 1e-15));
        assert!(close(m.variance, e * (e - 1.0), 1e-13));
        assert_eq!(m.median, 1.0);
        let lim = biased_class_moments(3.0, 1e300).unwrap();
        assert!(close(lim.mean, 3.0, 1e-12) && lim.variance < 1e-290 && lim.median == 3.0);
        for &prec in &[0.1, 1.0, 37.0] {
            assert_eq!(biased_class_moments(2.5, prec).unwrap().median, 2.5);
        }
    }

    #[test]
    fn point_mass_sample_is_exact() {
        let mut rng = stream(1, "t", &[]);
        let p = LogNormalParams::new(0.3, f64::INFINITY).unwrap();
        for _ in 0..10 {
            assert_eq!(lognormal_sample(p, &mut rng), 0.3f64.exp());
        }
    }

    #[test]
    fn sampling_is_deterministic_given_stream_state() {
        let p = LogNormalParams::new(0.0, 1.0).unwrap();
        let a = lognormal_sample(p, &mut stream(9, "x", &[]));
        let b = lognormal_sample(p, &mut stream(9, "x", &[]));
        assert_eq!(a, b);
    }

    #[test]
    fn halfcauchy_quantile_inverts_cdf() {
        let h = HalfCauchy::new(2.5).unwrap();
        for &p in &[0.01, 0.25, 0.5, 0.75, 0.99] {
            assert!(close(h.cdf(h.quantile(p)), p, 1e-12));
        }
        assert!(close(h.quantile(0.5), 2.5, 1e-12));
    }
}
