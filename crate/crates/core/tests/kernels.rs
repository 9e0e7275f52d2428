mod oracles;

use lnssm_core::dist::{
    biased_class_moments, halfcauchy_logpdf, lognormal_logpdf, lognormal_sample, mm_inverse,
    mm_transform, HalfCauchy, LogNormalParams, MomentPair,
};
use lnssm_core::models::Embedding;
use lnssm_core::rng::stream;
use oracles::{ks_critical_5pct, ks_statistic, mean_se, trapezoid};
use proptest::prelude::*;

const N: usize = 200_000;

fn draws(k: LogNormalParams, seed: u64) -> Vec<f64> {
    let mut rng = stream(seed, "kernels", &[]);
    (0..N).map(|_| lognormal_sample(k, &mut rng)).collect()
}

fn sample_variance(xs: &[f64]) -> f64 {
    let (m, _) = mean_se(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

#[test]
fn moment_matched_kernels_hit_target_moments() {
    for (i, &(center, prec)) in [(0.7, 50.0), (2.0, 5.0), (10.0, 0.5)].iter().enumerate() {
        for (emb, var) in [
            (Embedding::MomentConstant, 1.0 / prec),
            (Embedding::MomentDensity, center * center / prec),
        ] {
            let xs = draws(emb.kernel(center, prec).unwrap(), i as u64);
            let (m, se) = mean_se(&xs);
            assert!(
                (m - center).abs() < 4.5 * se,
                "{emb:?} mean {m} vs {center}"
            );
            let v = sample_variance(&xs);
            assert!(
                (v / var - 1.0).abs() < 0.08,
                "{emb:?} variance {v} vs {var}"
            );
        }
    }
}

#[test]
fn biased_kernel_keeps_the_median() {
    let (center, prec) = (3.0, 2.0);
    let mut xs = draws(Embedding::Biased.kernel(center, prec).unwrap(), 9);
    xs.sort_by(f64::total_cmp);
    let med = xs[N / 2];
    assert!((med / center - 1.0).abs() < 0.01);
    let want = biased_class_moments(center, prec).unwrap();
    let (m, se) = mean_se(&xs);
    assert!((m - want.mean).abs() < 4.5 * se);
    assert!(
        (m - center).abs() > 10.0 * se,
        "biased kernel should not be mean unbiased"
    );
}

#[test]
fn lognormal_density_integrates_to_one_with_known_mean() {
    let k = LogNormalParams::new(0.3, 4.0).unwrap();
    // Substitute x = exp(u) so the grid follows the mass.
    let pdf_u = |u: f64| (lognormal_logpdf(u.exp(), k).unwrap() + u).exp();
    let mass = trapezoid(pdf_u, -5.0, 5.0, 20_000);
    assert!((mass - 1.0).abs() < 1e-9);
    let mean = trapezoid(|u| u.exp() * pdf_u(u), -5.0, 5.0, 20_000);
    assert!((mean - (0.3f64 + 0.5 / 4.0).exp()).abs() < 1e-9);
}

#[test]
fn half_cauchy_draws_pass_ks() {
    let h = HalfCauchy::new(100.0).unwrap();
    let mut rng = stream(3, "half-cauchy", &[]);
    let xs: Vec<f64> = (0..20_000).map(|_| h.sample(&mut rng)).collect();
    let d = ks_statistic(&xs, |x| 2.0 / std::f64::consts::PI * (x / 100.0).atan());
    assert!(d < ks_critical_5pct(xs.len()), "KS {d}");
}

#[test]
fn half_cauchy_density_integrates_to_one() {
    let h = HalfCauchy::new(2.5).unwrap();
    // x = 2.5 tan(theta) maps [0, inf) onto [0, pi/2).
    let mass = trapezoid(
        |th: f64| {
            let x = 2.5 * th.tan();
            halfcauchy_logpdf(x, h).unwrap().exp() * 2.5 / th.cos().powi(2)
        },
        1e-12,
        std::f64::consts::FRAC_PI_2 - 1e-9,
        50_000,
    );
    assert!((mass - 1.0).abs() < 1e-6);
}

proptest! {
    #[test]
    fn moment_transform_round_trips(mean in 1e-3f64..1e3, cv in 1e-3f64..5.0) {
        let var = (cv * mean).powi(2);
        let back = mm_inverse(mm_transform(MomentPair::new(mean, var).unwrap()).unwrap());
        prop_assert!((back.mean / mean - 1.0).abs() < 1e-10);
        prop_assert!((back.variance / var - 1.0).abs() < 1e-9);
    }

    #[test]
    fn moment_matched_kernel_mean_is_center(center in 1e-3f64..1e3, prec in 1e-2f64..1e3) {
        for emb in [Embedding::MomentConstant, Embedding::MomentDensity] {
            let m = mm_inverse(emb.kernel(center, prec).unwrap());
            prop_assert!((m.mean / center - 1.0).abs() < 1e-9);
        }
        let b = Embedding::Biased.kernel(center, prec).unwrap();
        prop_assert!((b.median() / center - 1.0).abs() < 1e-12);
    }

    #[test]
    fn half_cauchy_quantile_inverts_cdf(p in 1e-6f64..0.999_999, scale in 1e-2f64..1e3) {
        let h = HalfCauchy::new(scale).unwrap();
        prop_assert!((h.cdf(h.quantile(p)) - p).abs() < 1e-9);
    }
}
