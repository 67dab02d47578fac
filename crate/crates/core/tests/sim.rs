use sped::estimator::dke_estimate;
use sped::fourier::{BenchmarkSetting, ErrorFamily, ErrorModel, NamedKernel, PilotEstimate, TargetDensity, UniformGrid};
use sped::mise::{mise_error_free, mise_sped, MiseEstimator, MiseSetting};
use sped::sim::{
    contaminate, default_grid, ise, run_mise_sim, sample_error, sample_target, stream_rng, tune_alpha, AlphaRule,
    SimMethod, SimPlan, TuneMode, TuningConfig,
};
use sped::spline::SplineSpace;

fn moments(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

#[test]
fn target_samples_have_the_right_moments() {
    let n = 200_000;
    for b in BenchmarkSetting::ALL {
        let t = b.target();
        let xs = sample_target(&t, n, &mut stream_rng(11, 0));
        let (mean, var) = moments(&xs);
        // Five standard errors on the mean; variance within 3%.
        assert!((mean - t.mean()).abs() < 5.0 * (t.variance() / n as f64).sqrt(), "{b}: mean {mean}");
        assert!((var / t.variance() - 1.0).abs() < 0.03, "{b}: var {var} vs {}", t.variance());
    }
}

#[test]
fn error_samples_have_the_right_spread() {
    let n = 200_000;
    for e in [ErrorModel::gaussian(0.7).unwrap(), ErrorModel::laplace(0.5).unwrap(), ErrorModel::uniform(2.0).unwrap()] {
        let mut rng = stream_rng(5, 2);
        let es: Vec<f64> = (0..n).map(|_| sample_error(&e, &mut rng)).collect();
        let (mean, var) = moments(&es);
        let v = e.variance().unwrap();
        assert!(mean.abs() < 5.0 * (v / n as f64).sqrt(), "{e:?}: mean {mean}");
        assert!((var / v - 1.0).abs() < 0.03, "{e:?}: var {var} vs {v}");
    }
    // Cauchy: the sample median absolute value estimates the scale.
    let c = ErrorModel::cauchy(1.5).unwrap();
    let mut rng = stream_rng(5, 3);
    let mut abs: Vec<f64> = (0..n).map(|_| sample_error(&c, &mut rng).abs()).collect();
    abs.sort_by(f64::total_cmp);
    assert!((abs[n / 2] / 1.5 - 1.0).abs() < 0.02);
}

#[test]
fn contaminated_variance_adds() {
    let t = BenchmarkSetting::III.target();
    let e = ErrorModel::calibrated(ErrorFamily::Laplace, 0.3, t.variance()).unwrap().unwrap();
    let xs = sample_target(&t, 200_000, &mut stream_rng(8, 0));
    let ys = contaminate(&xs, &e, &mut stream_rng(8, 1));
    let (_, vy) = moments(&ys);
    assert!((vy / (t.variance() + e.variance().unwrap()) - 1.0).abs() < 0.03);
}

#[test]
fn simulation_is_deterministic() {
    let setting =
        MiseSetting::calibrated(BenchmarkSetting::I.target(), 0.1, ErrorFamily::Gaussian, 80, MiseEstimator::Sped { m: 2 })
            .unwrap();
    let plan = SimPlan::new(setting, 6, 42, AlphaRule::Fixed(1e-2)).unwrap();
    let a = run_mise_sim(&plan).unwrap();
    let b = run_mise_sim(&plan).unwrap();
    assert_eq!(a, b);
    let other = run_mise_sim(&SimPlan { seed: 43, ..plan }).unwrap();
    assert_ne!(a.per_rep, other.per_rep);
}

#[test]
fn error_free_kde_matches_closed_form_mise() {
    let t = BenchmarkSetting::I.target();
    let n = 10_000;
    let lambda = 0.25;
    let kernel = NamedKernel::DkeDefault;
    let grid = UniformGrid::new(-8.0, 8.0, 1024).unwrap();
    let reps = 60;
    let ises: Vec<f64> = (0..reps)
        .map(|r| {
            let xs = sample_target(&t, n, &mut stream_rng(17, r));
            let pilot = PilotEstimate::kde(xs, kernel.clone(), lambda).unwrap();
            ise(&dke_estimate(&pilot, None, &grid).unwrap(), &t)
        })
        .collect();
    let (mean, var) = moments(&ises);
    let se = (var / reps as f64).sqrt();
    let theory = mise_error_free(&t, n as u64, lambda, &kernel).unwrap();
    assert!((mean - theory).abs() < 3.0 * se, "{mean} ± {se} vs {theory}");
}

#[test]
fn sped_simulation_matches_closed_form_mise() {
    let setting =
        MiseSetting::calibrated(BenchmarkSetting::IV.target(), 0.1, ErrorFamily::Gaussian, 200, MiseEstimator::Sped { m: 2 })
            .unwrap();
    let alpha = 0.5;
    let plan = SimPlan::new(setting.clone(), 200, 7, AlphaRule::Fixed(alpha)).unwrap();
    let r = run_mise_sim(&plan).unwrap();
    let theory = mise_sped(&setting, alpha).unwrap();
    let se = r.se.unwrap();
    assert!((r.mean_ise - theory).abs() < 3.0 * se, "{} ± {se} vs {theory}", r.mean_ise);
}

#[test]
fn projection_does_not_hurt_spline_estimates() {
    let setting =
        MiseSetting::calibrated(BenchmarkSetting::II.target(), 0.2, ErrorFamily::Gaussian, 100, MiseEstimator::Sped { m: 2 })
            .unwrap();
    let plan = SimPlan::new(setting, 20, 3, AlphaRule::Fixed(1e-3)).unwrap();
    let raw = run_mise_sim(&plan.clone().with_method(SimMethod::Spline { q: 40, project: false })).unwrap();
    let projected = run_mise_sim(&plan.with_method(SimMethod::Spline { q: 40, project: true })).unwrap();
    assert!(projected.mean_ise <= 1.05 * raw.mean_ise, "{} vs {}", projected.mean_ise, raw.mean_ise);
}

#[test]
fn tuning_converges_from_different_starts() {
    let t = BenchmarkSetting::I.target();
    let e = ErrorModel::calibrated(ErrorFamily::Gaussian, 0.045, t.variance()).unwrap().unwrap();
    let xs = sample_target(&t, 313, &mut stream_rng(23, 0));
    let ys = contaminate(&xs, &e, &mut stream_rng(23, 1));
    let mut finals = Vec::new();
    for alpha0 in [1e-4, 1e-1] {
        let config = TuningConfig { alpha0, tol: 1e-3, max_iter: 20 };
        let r = tune_alpha(&ys, &e, 2, TuneMode::Exact, &config).unwrap();
        assert!(r.converged, "from {alpha0}: {:?}", r.path);
        assert!(r.iterations <= 20);
        finals.push(r.alpha);
    }
    assert!((finals[0] / finals[1] - 1.0).abs() < 0.05, "{finals:?}");

    let grid = default_grid(&t, Some(&e));
    let space = SplineSpace::new(grid.start, grid.end(), 40).unwrap();
    let config = TuningConfig { alpha0: 1e-2, tol: 1e-3, max_iter: 20 };
    let r = tune_alpha(&ys, &e, 2, TuneMode::Spline { space, project: true }, &config).unwrap();
    assert!(r.converged, "{:?}", r.path);
    assert_eq!(r.surrogate, "projected spline");
}

#[test]
fn plans_reject_bad_input() {
    let t = TargetDensity::StdNormal;
    let kde = MiseSetting::new(t.clone(), None, 50, MiseEstimator::ErrorFreeKde { kernel: NamedKernel::ErrorFree }).unwrap();
    assert!(SimPlan::new(kde, 5, 1, AlphaRule::Fixed(1e-2)).is_err());
    let s = MiseSetting::new(t, Some(ErrorModel::gaussian(0.2).unwrap()), 50, MiseEstimator::Sped { m: 2 }).unwrap();
    assert!(SimPlan::new(s.clone(), 0, 1, AlphaRule::Fixed(1e-2)).is_err());
    assert!(SimPlan::new(s.clone(), 5, 1, AlphaRule::Fixed(-1.0)).is_err());
    let bad = TuningConfig { alpha0: 1e-2, tol: 1e-3, max_iter: 101 };
    assert!(SimPlan::new(s, 5, 1, AlphaRule::Tuned(bad)).is_err());
}
