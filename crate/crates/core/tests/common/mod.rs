#![allow(dead_code)]

use dtek::channel::synthesize_channel;
use dtek::{ChannelMatrix, Scatterer, Scene, SystemConfig};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn system(r: usize, s: usize) -> SystemConfig {
    SystemConfig::new(73e9, 1e9, r, s).unwrap()
}

pub fn scene(paths: &[(Complex64, f64, f64)]) -> Scene {
    Scene::new(paths.iter().map(|&(g, t, u)| Scatterer::new(g, t, u)).collect()).unwrap()
}

pub fn channel(r: usize, s: usize, paths: &[(Complex64, f64, f64)]) -> ChannelMatrix {
    synthesize_channel(&scene(paths), &system(r, s)).unwrap()
}

/// The 32x32 two-path scene with fractional bins (15.25, 10.37) and (25.35, 25.43).
pub fn two_path_scene() -> ChannelMatrix {
    let g = c(0.5, 0.5);
    channel(32, 32, &[(g, 15.25 / 32.0, 10.37 / 32.0), (g, 25.35 / 32.0, 25.43 / 32.0)])
}

/// Unit-variance circular complex Gaussian entries.
pub fn gaussian_matrix(r: usize, s: usize, seed: u64) -> ChannelMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    ChannelMatrix::noiseless(ndarray::Array2::from_shape_fn((r, s), |_| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        c(re * scale, im * scale)
    }))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn unit_phasor(rng: &mut ChaCha8Rng) -> Complex64 {
    Complex64::from_polar(1.0, rng.random::<f64>() * std::f64::consts::TAU)
}

/// Log-log least-squares slope of `y` against `x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let cov: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let var: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    cov / var
}

/// Median wall time of `reps` calls.
pub fn median_time(reps: usize, mut f: impl FnMut()) -> f64 {
    let mut t: Vec<f64> = (0..reps)
        .map(|_| {
            let start = std::time::Instant::now();
            f();
            start.elapsed().as_secs_f64()
        })
        .collect();
    t.sort_by(f64::total_cmp);
    t[reps / 2]
}
