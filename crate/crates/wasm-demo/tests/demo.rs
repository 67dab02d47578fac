use sped::fourier::{BenchmarkSetting, ErrorFamily, ErrorModel};
use sped::mise::{min_mise, MiseEstimator, MiseSetting};
use sped::sim::{contaminate, sample_target, stream_rng};
use sped_wasm_demo::{estimate, estimate_density, mise_curve, mise_table, multiplier_curve, multiplier_table, parse_sample};

fn sample_text(n: usize) -> String {
    let t = BenchmarkSetting::I.target();
    let e = ErrorModel::gaussian(0.3).unwrap();
    let ys = contaminate(&sample_target(&t, n, &mut stream_rng(4, 0)), &e, &mut stream_rng(4, 1));
    ys.iter().map(|y| format!("{y:.6}")).collect::<Vec<_>>().join(", ")
}

#[test]
fn parses_loose_number_lists() {
    assert_eq!(parse_sample("1, 2\n3\t4  5").unwrap(), vec![1.0, 2.0, 3.0, 4.0, 5.0]);
    assert!(parse_sample("1 two 3").is_err());
    assert!(parse_sample("7").is_err());
}

#[test]
fn estimate_is_a_density() {
    let sample = parse_sample(&sample_text(313)).unwrap();
    let r = estimate(&sample, 0.3, 1e-3, 30).unwrap();
    assert_eq!(r.x.len(), r.density.len());
    assert!((r.integral - 1.0).abs() < 0.01, "{}", r.integral);
    assert_eq!(r.x[0], r.interval[0]);
    assert!(estimate(&sample, 0.3, 0.0, 30).is_err());
    assert!(estimate(&sample, -1.0, 1e-3, 30).is_err());

    let json: serde_json::Value = serde_json::from_str(&estimate_density(&sample_text(100), 0.3, 1e-2, 20).unwrap()).unwrap();
    assert_eq!(json["density"].as_array().unwrap().len(), 256);
}

#[test]
fn mise_curve_brackets_the_library_minimum() {
    let r = mise_table("ii", 0.2, 200, 50).unwrap();
    let s = MiseSetting::calibrated(BenchmarkSetting::II.target(), 0.2, ErrorFamily::Gaussian, 200, MiseEstimator::Sped { m: 2 })
        .unwrap();
    let lib = min_mise(&s).unwrap();
    assert_eq!((r.argmin, r.min), (lib.argmin, lib.value));
    assert!(r.mise.iter().all(|v| *v >= r.min * (1.0 - 1e-9)));
    assert!(mise_table("vii", 0.2, 200, 50).is_err());
    assert!(mise_curve("i", 0.1, 100, 10).is_ok());
}

#[test]
fn multiplier_curve_shapes() {
    let r = multiplier_table(0.5, 1e-2, 2, 24.0, 200).unwrap();
    assert_eq!(r.omega.len(), 200);
    assert!((r.transfer[0] - 1.0).abs() < 1e-15);
    for k in 0..r.omega.len() {
        assert!((0.0..=1.0).contains(&r.transfer[k]));
        if r.error_cf[k] > 1e-300 {
            assert!((r.multiplier[k] * r.error_cf[k] - r.transfer[k]).abs() <= 1e-12 * r.transfer[k].max(1e-300) + 1e-300);
        }
    }
    assert!(multiplier_table(0.5, 1e-2, 2, -1.0, 10).is_err());
    assert!(multiplier_curve(0.5, 1e-2, 2, 10.0, 10).is_ok());
}
