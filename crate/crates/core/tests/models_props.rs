use lnssm_core::dist::{lognormal_logpdf, mm_inverse};
use lnssm_core::models::{
    loglik_joint, observation_kernel, process_mean, simulate, transition_kernel, ModelKind,
    ModelParams,
};
use lnssm_core::rng::stream;
use proptest::prelude::*;

fn kind() -> impl Strategy<Value = ModelKind> {
    prop::sample::select(ModelKind::ALL.to_vec())
}

#[test]
fn labels_round_trip() {
    for k in ModelKind::ALL {
        assert_eq!(k.label().parse::<ModelKind>().unwrap(), k);
        assert_eq!(k.to_string(), k.label());
    }
    assert!("logistic".parse::<ModelKind>().is_err());
}

proptest! {
    #[test]
    fn fixed_point_is_fixed(k in kind(), a in 0.05f64..3.0, b in -2.0f64..-0.01) {
        let p = ModelParams::new(a, b, 10.0, 10.0).unwrap();
        let x = p.fixed_point(k).unwrap();
        let fx = process_mean(k, x, &p).unwrap();
        prop_assert!((fx / x - 1.0).abs() < 1e-10);
    }

    #[test]
    fn moment_classes_center_the_mean_biased_the_median(
        k in kind(), x in 0.05f64..20.0, a in -1.0f64..1.0, b in -0.5f64..0.0, phi in 1.0f64..500.0,
    ) {
        let p = ModelParams::new(a, b, phi, 10.0).unwrap();
        let Ok(center) = process_mean(k, x, &p) else { return Ok(()) };
        let kern = transition_kernel(k, x, &p).unwrap();
        if k.embedding() == lnssm_core::models::Embedding::Biased {
            prop_assert!((kern.median() / center - 1.0).abs() < 1e-10);
        } else {
            let m = mm_inverse(kern);
            prop_assert!((m.mean / center - 1.0).abs() < 1e-9);
            let want_var = if k.is_constant_variance() { 1.0 / phi } else { center * center / phi };
            prop_assert!((m.variance / want_var - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn joint_likelihood_sums_kernel_densities(k in kind(), seed in 0u64..1000) {
        let p = ModelParams::new(0.4, -0.3, 40.0, 60.0).unwrap();
        let x0 = p.fixed_point(k).unwrap();
        let idx: Vec<usize> = (1..=30).step_by(2).collect();
        let (traj, obs) = simulate(k, &p, x0, 30, &idx, &mut stream(seed, "props", &[])).unwrap();
        let natural = loglik_joint(k, &traj, &obs, &p).unwrap();
        let mut direct = 0.0;
        for t in 1..=30 {
            direct += lognormal_logpdf(traj.at(t), transition_kernel(k, traj.at(t - 1), &p).unwrap()).unwrap();
        }
        for (&t, &y) in obs.indices.iter().zip(&obs.values) {
            direct += lognormal_logpdf(y, observation_kernel(k, traj.at(t), &p).unwrap()).unwrap();
        }
        prop_assert!((natural - direct).abs() < 1e-8 * (1.0 + natural.abs()));
    }

    #[test]
    fn simulation_is_reproducible(k in kind(), seed in 0u64..1000) {
        let p = ModelParams::new(0.4, -0.3, 40.0, 60.0).unwrap();
        let idx: Vec<usize> = (1..=20).collect();
        let a = simulate(k, &p, 1.0, 20, &idx, &mut stream(seed, "props", &[])).unwrap();
        let b = simulate(k, &p, 1.0, 20, &idx, &mut stream(seed, "props", &[])).unwrap();
        prop_assert_eq!(a, b);
    }
}
