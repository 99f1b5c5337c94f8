//! Baseline 2D-MUSIC with forward spatial-spectral smoothing.

use std::f64::consts::PI;

use faer::Mat;
use ndarray::{s, Array2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::{angle_steering, delay_steering, unit_phasor, ChannelMatrix};
use crate::error::{Error, Result};
use crate::estimate::{Method, PathEstimate, SignatureEstimate};
use crate::omp::DEFAULT_MEMORY_CAP;
use crate::linalg::{dominant_eigenvectors, from_faer, hermitian_eigen, solve_gram, SampleCovariance};
use crate::spectral::local_maxima;

/// Subarray size used for smoothing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmoothingSpec {
    pub sub_r: usize,
    pub sub_s: usize,
}

impl SmoothingSpec {
    /// `ceil(R/2) x ceil(S/2)` subarrays.
    pub fn default_for(r: usize, s: usize) -> Self {
        SmoothingSpec {
            sub_r: r.div_ceil(2).max(2).min(r),
            sub_s: s.div_ceil(2).max(2).min(s),
        }
    }

    pub fn num_subarrays(&self, r: usize, s: usize) -> usize {
        (r + 1).saturating_sub(self.sub_r) * (s + 1).saturating_sub(self.sub_s)
    }

    pub fn dim(&self) -> usize {
        self.sub_r * self.sub_s
    }

    pub fn validate(&self, r: usize, s: usize, expected_paths: usize) -> Result<()> {
        if !(1 < self.sub_r && self.sub_r <= r && 1 < self.sub_s && self.sub_s <= s) {
            return Err(Error::config(format!(
                "subarray {}x{} does not fit a {r}x{s} channel",
                self.sub_r, self.sub_s
            )));
        }
        let l = self.num_subarrays(r, s);
        if l <= expected_paths {
            return Err(Error::config(format!(
                "{l} subarrays cannot decorrelate {expected_paths} paths"
            )));
        }
        Ok(())
    }
}

/// Bytes of the `dim x L` subarray data matrix.
pub fn subarray_bytes(r: usize, s: usize, spec: &SmoothingSpec) -> u64 {
    (spec.dim() as u64)
        .saturating_mul(spec.num_subarrays(r, s) as u64)
        .saturating_mul(std::mem::size_of::<Complex64>() as u64)
}

fn subarray_matrix(h: &ChannelMatrix, spec: &SmoothingSpec, cap: u64) -> Result<Mat<Complex64>> {
    let (r, s) = h.entries.dim();
    spec.validate(r, s, 0)?;
    let required = subarray_bytes(r, s, spec);
    if required > cap {
        return Err(Error::MemoryCap { required, cap });
    }
    let (lr, ls) = (r - spec.sub_r + 1, s - spec.sub_s + 1);
    let sub_r = spec.sub_r;
    Ok(Mat::from_fn(spec.dim(), lr * ls, |row, col| {
        let (dr, ds) = (row % sub_r, row / sub_r);
        let (u, v) = (col % lr, col / lr);
        h.entries[[u + dr, v + ds]]
    }))
}

/// Average of `vec(P) vec(P)^H` over all subarray patches `P`, with
/// column-major `vec` so that a path contributes `b_sub kron a_sub`.
pub fn smoothed_covariance(h: &ChannelMatrix, spec: &SmoothingSpec) -> Result<Array2<Complex64>> {
    Ok(from_faer(covariance_faer(h, spec)?.as_ref()))
}

fn covariance_faer(h: &ChannelMatrix, spec: &SmoothingSpec) -> Result<Mat<Complex64>> {
    let y = subarray_matrix(h, spec, DEFAULT_MEMORY_CAP)?;
    Ok(SampleCovariance::new(y.as_ref()).dense())
}

/// Orthonormal eigenvectors of the `dim - q_hat` smallest eigenvalues.
pub fn noise_subspace(c: &Array2<Complex64>, q_hat: usize) -> Result<Array2<Complex64>> {
    let dim = c.nrows();
    if q_hat >= dim {
        return Err(Error::Rank { requested: q_hat, dim });
    }
    let (_, vectors) = hermitian_eigen(c)?;
    Ok(vectors.slice(s![.., ..dim - q_hat]).to_owned())
}

/// `1 / ||E_n^H (b_sub(tau) kron a_sub(theta))||^2` on a `grid_p x grid_p`
/// grid over `[0, 1)^2`, rows indexed by angle.
///
/// The noise-space norm is evaluated as `||v||^2 - ||E_s^H v||^2`, which
/// only needs the `q_hat` signal eigenvectors.
pub fn music_pseudospectrum(
    h: &ChannelMatrix,
    spec: &SmoothingSpec,
    q_hat: usize,
    grid_p: usize,
) -> Result<Array2<f64>> {
    pseudospectrum_with_cap(h, spec, q_hat, grid_p, DEFAULT_MEMORY_CAP)
}

fn pseudospectrum_with_cap(
    h: &ChannelMatrix,
    spec: &SmoothingSpec,
    q_hat: usize,
    grid_p: usize,
    cap: u64,
) -> Result<Array2<f64>> {
    let y = subarray_matrix(h, spec, cap)?;
    let dim = spec.dim();
    if q_hat >= dim {
        return Err(Error::Rank { requested: q_hat, dim });
    }
    if grid_p < 2 {
        return Err(Error::config("MUSIC grid needs at least 2 points"));
    }
    let signal = dominant_eigenvectors(&SampleCovariance::new(y.as_ref()), q_hat)?;
    let grid: Vec<f64> = (0..grid_p).map(|k| k as f64 / grid_p as f64).collect();
    let a_t = Mat::<Complex64>::from_fn(grid_p, spec.sub_r, |p, r| {
        unit_phasor(-2.0 * PI * r as f64 * grid[p])
    });
    let b = Mat::<Complex64>::from_fn(spec.sub_s, grid_p, |s, q| {
        unit_phasor(-2.0 * PI * s as f64 * grid[q])
    });

    let mut signal_energy = Array2::<f64>::zeros((grid_p, grid_p));
    for k in 0..q_hat {
        let e = Mat::<Complex64>::from_fn(spec.sub_r, spec.sub_s, |r, s| {
            signal[[r + spec.sub_r * s, k]].conj()
        });
        let proj = &a_t * &e * &b;
        for ((p, q), v) in signal_energy.indexed_iter_mut() {
            *v += proj[(p, q)].norm_sqr();
        }
    }
    let total = dim as f64;
    let floor = total * 1e-15;
    Ok(signal_energy.mapv(|se| 1.0 / (total - se).max(floor)))
}

/// Peaks of the pseudospectrum with gains fitted by least squares on the
/// full-aperture model.
pub fn estimate_music(
    h: &ChannelMatrix,
    spec: &SmoothingSpec,
    q_hat: usize,
    grid_p: usize,
) -> Result<SignatureEstimate> {
    estimate_music_with_cap(h, spec, q_hat, grid_p, DEFAULT_MEMORY_CAP)
}

/// [`estimate_music`] with an explicit limit on the subarray data matrix,
/// failing with [`Error::MemoryCap`] before allocating.
pub fn estimate_music_with_cap(
    h: &ChannelMatrix,
    spec: &SmoothingSpec,
    q_hat: usize,
    grid_p: usize,
    cap: u64,
) -> Result<SignatureEstimate> {
    let (r, s) = h.entries.dim();
    spec.validate(r, s, q_hat)?;
    if q_hat == 0 {
        return Ok(SignatureEstimate::new(Method::Music, Vec::new()));
    }
    let spectrum = pseudospectrum_with_cap(h, spec, q_hat, grid_p, cap)?;
    let mut peaks = local_maxima(&spectrum);
    peaks.sort_by(|x, y| spectrum[[y.0, y.1]].total_cmp(&spectrum[[x.0, x.1]]).then(x.cmp(y)));
    peaks.truncate(q_hat);

    let params: Vec<(f64, f64)> = peaks
        .iter()
        .map(|&(p, q)| (p as f64 / grid_p as f64, q as f64 / grid_p as f64))
        .collect();
    let gains = fit_gains(h, &params)?;
    let paths = params
        .into_iter()
        .zip(gains)
        .map(|((theta_norm, tau_norm), gain)| PathEstimate {
            gain,
            theta_norm,
            tau_norm,
        })
        .collect();
    Ok(SignatureEstimate::new(Method::Music, paths))
}

/// Least-squares gains of `H ~ sum_k g_k a(theta_k) b(tau_k)^T`.
pub fn fit_gains(h: &ChannelMatrix, params: &[(f64, f64)]) -> Result<Vec<Complex64>> {
    if params.is_empty() {
        return Ok(Vec::new());
    }
    let (r, s) = h.entries.dim();
    let atoms: Vec<_> = params
        .iter()
        .map(|&(t, u)| (angle_steering(t, r), delay_steering(u, s)))
        .collect();
    let dot = |x: &ndarray::Array1<Complex64>, y: &ndarray::Array1<Complex64>| -> Complex64 {
        x.iter().zip(y).map(|(p, q)| p.conj() * q).sum()
    };
    let n = atoms.len();
    let gram = Array2::from_shape_fn((n, n), |(k, l)| {
        dot(&atoms[k].0, &atoms[l].0) * dot(&atoms[k].1, &atoms[l].1)
    });
    let rhs: Vec<Complex64> = atoms
        .iter()
        .map(|(a, b)| {
            let mut acc = Complex64::new(0.0, 0.0);
            for (row, ar) in h.entries.rows().into_iter().zip(a) {
                let t: Complex64 = row.iter().zip(b).map(|(hv, bv)| hv * bv.conj()).sum();
                acc += ar.conj() * t;
            }
            acc
        })
        .collect();
    solve_gram(&gram, &rhs)
}
