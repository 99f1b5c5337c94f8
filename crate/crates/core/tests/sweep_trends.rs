//! Hit rate against SNR over the default 13-point sweep.

use dtek::eval::{monte_carlo, Experiment};
use dtek::{EstimatorSettings, Method, SystemConfig};

#[test]
fn hit_rate_non_decreasing_in_snr() {
    let exp = Experiment::default();
    assert_eq!((exp.snr_db.len(), exp.trials), (13, 200));
    let rows = monte_carlo(
        &SystemConfig::default(),
        &[Method::Rotation, Method::Omp2d],
        &EstimatorSettings::default(),
        &exp,
    )
    .unwrap();
    let n = (exp.trials * exp.num_paths) as f64;
    for method in [Method::Rotation, Method::Omp2d] {
        let rates: Vec<f64> = rows.iter().filter(|m| m.method == method).map(|m| m.hit_rate).collect();
        println!("{method:?}: {rates:.3?}");
        for (k, w) in rates.windows(2).enumerate() {
            let sigma = |p: f64| p * (1.0 - p) / n;
            let tol = 2.0 * (sigma(w[0]) + sigma(w[1])).sqrt();
            assert!(
                w[1] >= w[0] - tol,
                "{method:?} hit rate drops from {:.3} to {:.3} at {} dB (2-sigma {tol:.3})",
                w[0],
                w[1],
                exp.snr_db[k + 1]
            );
        }
    }
}
