use sped::fourier::{BenchmarkSetting, ErrorFamily, ErrorModel};
use sped::theory::{
    check_bandlimited_pilot_rate, check_consistency_schedule, check_laplace_sharpened, check_source_condition_rate,
    check_upper_bound, default_suite, log_spaced, BandwidthSchedule, BoundReport, CheckStatus, SuiteOptions,
};

fn setting_one() -> (sped::fourier::TargetDensity, ErrorModel) {
    let t = BenchmarkSetting::I.target();
    let e = ErrorModel::calibrated(ErrorFamily::Gaussian, 0.1, t.variance()).unwrap().unwrap();
    (t, e)
}

#[test]
fn default_suite_behaves_as_expected() {
    let reports = default_suite(&SuiteOptions::default()).unwrap();
    let unexpected: Vec<&BoundReport> = reports.iter().filter(|r| !r.as_expected()).collect();
    assert!(unexpected.is_empty(), "{unexpected:#?}");
    // Every family of checks has at least one negative control.
    for prefix in ["upper_bound", "consistency", "laplace_sharpened", "source_condition", "bandlimited", "laplace_rate"] {
        assert!(
            reports.iter().any(|r| r.name.starts_with(prefix) && r.expect == sped::theory::Expectation::Violated),
            "{prefix} has no negative control"
        );
    }
}

#[test]
fn broken_supremum_is_caught() {
    let reports = default_suite(&SuiteOptions { sup_phi_scale: 0.5 }).unwrap();
    assert!(reports.iter().any(|r| !r.as_expected()));
}

#[test]
fn reports_round_trip_through_json_lines() {
    let reports = default_suite(&SuiteOptions::default()).unwrap();
    let text: String = reports.iter().map(|r| serde_json::to_string(r).unwrap() + "\n").collect();
    let back: Vec<BoundReport> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(back, reports);
}

#[test]
fn upper_bound_examples() {
    let (t, e) = setting_one();
    assert!(check_upper_bound(&t, &e, 2, 100, 1e-2, 1.0).unwrap().satisfied);
    assert!(check_upper_bound(&t, &e, 2, 10_000, 1e-4, 1.0).unwrap().satisfied);
    assert!(!check_upper_bound(&t, &e, 2, 100, 1e-4, 0.5).unwrap().satisfied);
}

#[test]
fn consistency_examples() {
    let (t, e) = setting_one();
    let ns = [100, 1_000, 10_000, 100_000];
    let good = check_consistency_schedule(&t, &e, 2, &ns, |n| n.powf(-0.5), "sqrt").unwrap();
    assert!(good.iter().all(|r| r.satisfied));
    for bad in [
        check_consistency_schedule(&t, &e, 2, &ns, |_| 1.0, "constant").unwrap(),
        check_consistency_schedule(&t, &e, 2, &ns, |n| n.powi(-2), "inverse_square").unwrap(),
    ] {
        assert!(!bad.last().unwrap().satisfied);
    }
    let one = check_consistency_schedule(&t, &e, 2, &[100], |n| n.powf(-0.5), "x").unwrap();
    assert_eq!(one[0].status, CheckStatus::InsufficientPoints);
}

#[test]
fn laplace_sharpened_examples() {
    let r = check_laplace_sharpened(2, &[1e-3, 1e-6, 0.125]).unwrap();
    assert!(r[0].satisfied && r[1].satisfied);
    assert!((r[0].rhs - 2.0 * 0.016f64.powf(-0.25)).abs() < 1e-12);
    assert_eq!(r[2].status, CheckStatus::PreconditionFailed);
}

#[test]
fn source_condition_examples() {
    let alphas = [1e-1, 1e-2, 1e-3, 1e-4, 1e-5];
    assert!(check_source_condition_rate(0.25, 0.1, 2, &alphas, 2).unwrap().iter().all(|r| r.satisfied));
    // A very smooth ψ makes the bound nearly tight.
    let tight = &check_source_condition_rate(0.25, 100.0, 2, &[1e-3], 2).unwrap()[0];
    assert!(tight.satisfied && tight.context["ratio"] > 0.99);
    assert!(check_source_condition_rate(0.25, 0.0, 2, &alphas, 2).is_err());
}

#[test]
fn unit_bandwidth_constant_is_bias_dominated() {
    // With c₀ = 1 on n ∈ [10³, 10⁷] the λ⁴ kernel bias of a smooth target
    // dominates, so the slope is near −4/7 rather than −2/7.
    let r = check_bandlimited_pilot_rate(1.0, 2, &log_spaced(3.0, 7.0, 2), BandwidthSchedule::SeventhRoot).unwrap();
    let slope = r.context["slope"];
    assert!(!r.satisfied);
    assert!(slope < -0.45 && slope > -4.0 / 7.0 - 0.05, "{slope}");
    // Past n = 10¹² the variance takes over and the rate appears.
    let r = check_bandlimited_pilot_rate(1.0, 2, &log_spaced(12.0, 13.0, 2), BandwidthSchedule::SeventhRoot).unwrap();
    assert!(r.context["slope"] > -0.4, "{}", r.context["slope"]);
}
