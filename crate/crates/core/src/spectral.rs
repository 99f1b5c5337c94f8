//! Angle-delay transform, Dirichlet leakage kernel and coarse peak picking.

use std::f64::consts::PI;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use ndarray::{Array1, Array2, Axis};
use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::channel::{unit_phasor, ChannelMatrix};
use crate::error::{Error, Result};

/// Orthonormal DFT vector `f_i[n] = e^{-j2 pi n i / N} / sqrt(N)`.
pub fn dft_vector(i: usize, n: usize) -> Result<Array1<Complex64>> {
    if i >= n {
        return Err(Error::Index { index: i, len: n });
    }
    let scale = 1.0 / (n as f64).sqrt();
    Ok(Array1::from_shape_fn(n, |k| {
        unit_phasor(-2.0 * PI * ((k * i) % n) as f64 / n as f64) * scale
    }))
}

/// Unitary 2D inverse DFT of a channel matrix. Row index is the angle bin,
/// column index the delay bin.
#[derive(Debug, Clone, PartialEq)]
pub struct AngleDelayMap {
    pub entries: Array2<Complex64>,
}

impl AngleDelayMap {
    pub fn magnitude(&self) -> Array2<f64> {
        self.entries.mapv(|z| z.norm())
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.entries.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// `|G|` as CSV, one line per angle bin.
    pub fn write_magnitude_csv<W: Write>(&self, mut w: W) -> Result<()> {
        for row in self.entries.rows() {
            let line: Vec<String> = row.iter().map(|z| format!("{:.12e}", z.norm())).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    }
}

/// `G(i,j) = (RS)^{-1/2} sum_{r,s} H(r,s) e^{+j2 pi r i / R} e^{+j2 pi s j / S}`.
pub fn idft2(h: &ChannelMatrix) -> AngleDelayMap {
    let (r, s) = h.entries.dim();
    let mut g = h.entries.as_standard_layout().into_owned();
    let mut planner = FftPlanner::<f64>::new();

    let fft_s = planner.plan_fft_inverse(s);
    for mut row in g.axis_iter_mut(Axis(0)) {
        let slice = row.as_slice_mut().expect("standard layout");
        fft_s.process(slice);
    }

    let fft_r = planner.plan_fft_inverse(r);
    let mut column = vec![Complex64::new(0.0, 0.0); r];
    for j in 0..s {
        for (dst, src) in column.iter_mut().zip(g.column(j)) {
            *dst = *src;
        }
        fft_r.process(&mut column);
        for (dst, src) in g.column_mut(j).iter_mut().zip(&column) {
            *dst = *src;
        }
    }

    let scale = 1.0 / ((r * s) as f64).sqrt();
    g.mapv_inplace(|z| z * scale);
    AngleDelayMap { entries: g }
}

/// Dirichlet kernel `sin(pi N x) / sin(pi x)`, continuous through integer `x`.
pub fn dirichlet(x: f64, n: usize) -> f64 {
    let nf = n as f64;
    let k = x.round();
    let den = (PI * x).sin();
    if (x - k).abs() < 1e-12 || den == 0.0 {
        // limit N cos(pi N k) / cos(pi k)
        let parity = (k as i64).rem_euclid(2) * ((n as i64 - 1).rem_euclid(2));
        return if parity == 0 { nf } else { -nf };
    }
    (PI * nf * x).sin() / den
}

/// Relative level below which map entries are treated as numerically zero.
pub const ROUNDOFF_FLOOR: f64 = 1e-9;

/// Detection threshold on `|G|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ThresholdPolicy {
    /// `ratio * max |G|`.
    Relative { ratio: f64 },
    /// Rayleigh-noise threshold giving probability `p_fa` that a pure-noise
    /// map yields any detection. Noise scale is estimated as
    /// `median(|G|) / sqrt(ln 4)`.
    Cfar { p_fa: f64 },
    /// The larger of the `Cfar` and `Relative` thresholds. The relative part
    /// rejects local maxima created where the leakage tails of several strong
    /// paths interfere; those are deterministic and therefore not controlled
    /// by a noise-calibrated threshold.
    Hybrid { p_fa: f64, ratio: f64 },
}

fn check_ratio(ratio: f64) -> Result<()> {
    if (0.0..1.0).contains(&ratio) {
        Ok(())
    } else {
        Err(Error::config(format!("relative threshold {ratio} outside [0, 1)")))
    }
}

fn check_p_fa(p_fa: f64) -> Result<()> {
    if p_fa > 0.0 && p_fa < 1.0 {
        Ok(())
    } else {
        Err(Error::config(format!("false-alarm probability {p_fa} outside (0, 1)")))
    }
}

fn cfar_threshold(magnitude: &Array2<f64>, p_fa: f64) -> f64 {
    let sigma = median(magnitude.iter().cloned()) / 4f64.ln().sqrt();
    let n = magnitude.len().max(1) as f64;
    // per-bin exceedance so that P(max over n bins > t) = p_fa
    let per_bin = -((-p_fa).ln_1p() / n).exp_m1();
    sigma * (-2.0 * per_bin.ln()).sqrt()
}

impl ThresholdPolicy {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ThresholdPolicy::Relative { ratio } => check_ratio(ratio),
            ThresholdPolicy::Cfar { p_fa } => check_p_fa(p_fa),
            ThresholdPolicy::Hybrid { p_fa, ratio } => check_p_fa(p_fa).and(check_ratio(ratio)),
        }
    }

    /// Detection threshold, never below [`ROUNDOFF_FLOOR`] times the peak
    /// magnitude so that transform roundoff in noiseless maps is not detected.
    pub fn threshold(&self, magnitude: &Array2<f64>) -> f64 {
        let peak = magnitude.iter().cloned().fold(0.0, f64::max);
        let t = match *self {
            ThresholdPolicy::Relative { ratio } => ratio * peak,
            ThresholdPolicy::Cfar { p_fa } => cfar_threshold(magnitude, p_fa),
            ThresholdPolicy::Hybrid { p_fa, ratio } => cfar_threshold(magnitude, p_fa).max(ratio * peak),
        };
        t.max(ROUNDOFF_FLOOR * peak)
    }
}

impl Default for ThresholdPolicy {
    fn default() -> Self {
        ThresholdPolicy::Hybrid { p_fa: 0.01, ratio: 0.2 }
    }
}

impl fmt::Display for ThresholdPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ThresholdPolicy::Relative { ratio } => write!(f, "relative:{ratio}"),
            ThresholdPolicy::Cfar { p_fa } => write!(f, "cfar:{p_fa}"),
            ThresholdPolicy::Hybrid { p_fa, ratio } => write!(f, "hybrid:{p_fa}:{ratio}"),
        }
    }
}

/// Parses `relative:<ratio>`, `cfar:<p_fa>` or `hybrid:<p_fa>:<ratio>`.
impl FromStr for ThresholdPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').map(str::trim).collect();
        let num = |v: &str| -> Result<f64> {
            v.parse()
                .map_err(|_| Error::config(format!("threshold `{s}`: bad number `{v}`")))
        };
        let policy = match parts.as_slice() {
            ["relative", v] => ThresholdPolicy::Relative { ratio: num(v)? },
            ["cfar", v] => ThresholdPolicy::Cfar { p_fa: num(v)? },
            ["hybrid", p, r] => ThresholdPolicy::Hybrid {
                p_fa: num(p)?,
                ratio: num(r)?,
            },
            _ => {
                return Err(Error::config(format!(
                    "threshold `{s}`: expected relative:<r>, cfar:<p> or hybrid:<p>:<r>"
                )))
            }
        };
        policy.validate()?;
        Ok(policy)
    }
}

fn median(values: impl Iterator<Item = f64>) -> f64 {
    let mut v: Vec<f64> = values.collect();
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoarseBin {
    pub i: usize,
    pub j: usize,
    pub value: Complex64,
}

/// Strict local maxima of `|G|` over the cyclic 8-neighbourhood that exceed
/// the policy threshold, strongest first.
pub fn detect_peaks(g: &AngleDelayMap, policy: &ThresholdPolicy) -> Vec<CoarseBin> {
    let mag = g.magnitude();
    let threshold = policy.threshold(&mag);
    let mut peaks: Vec<CoarseBin> = local_maxima(&mag)
        .into_iter()
        .filter(|&(i, j)| mag[[i, j]] > threshold)
        .map(|(i, j)| CoarseBin {
            i,
            j,
            value: g.entries[[i, j]],
        })
        .collect();
    peaks.sort_by(|a, b| {
        b.value
            .norm()
            .total_cmp(&a.value.norm())
            .then(a.i.cmp(&b.i))
            .then(a.j.cmp(&b.j))
    });
    peaks
}

/// Strict local maxima on a torus, in row-major order.
pub(crate) fn local_maxima(values: &Array2<f64>) -> Vec<(usize, usize)> {
    let (r, s) = values.dim();
    let mut out = Vec::new();
    for i in 0..r {
        for j in 0..s {
            let v = values[[i, j]];
            let mut is_max = true;
            'nb: for di in [r - 1, 0, 1] {
                for dj in [s - 1, 0, 1] {
                    let (ni, nj) = ((i + di) % r, (j + dj) % s);
                    if (ni, nj) == (i, j) {
                        continue;
                    }
                    if values[[ni, nj]] >= v {
                        is_max = false;
                        break 'nb;
                    }
                }
            }
            if is_max {
                out.push((i, j));
            }
        }
    }
    out
}

/// `f_i^H R(theta_off) H R(tau_off) conj(f_j)`, evaluated in `O(RS)`.
pub fn bin_power(h: &ChannelMatrix, i: usize, j: usize, theta_off: f64, tau_off: f64) -> Complex64 {
    let (r, s) = h.entries.dim();
    let u = bin_weights(i, r, theta_off);
    let w = bin_weights(j, s, tau_off);
    weighted_sum(h, &u, &w)
}

/// `conj(f_i) .* rotation_phasors(offset)`: entry n is
/// `e^{+j2 pi n (i/N + offset)} / sqrt(N)`.
pub(crate) fn bin_weights(i: usize, n: usize, offset: f64) -> Vec<Complex64> {
    let scale = 1.0 / (n as f64).sqrt();
    let freq = i as f64 / n as f64 + offset;
    (0..n)
        .map(|k| unit_phasor(2.0 * PI * k as f64 * freq) * scale)
        .collect()
}

/// `u^T H w`.
pub(crate) fn weighted_sum(h: &ChannelMatrix, u: &[Complex64], w: &[Complex64]) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for (row, &ur) in h.entries.rows().into_iter().zip(u) {
        let mut inner = Complex64::new(0.0, 0.0);
        for (&hv, &ws) in row.iter().zip(w) {
            inner += hv * ws;
        }
        acc += ur * inner;
    }
    acc
}

/// Split real/imaginary copy of `H` for the refinement inner loop.
pub(crate) struct PlanarMatrix {
    re: Vec<f64>,
    im: Vec<f64>,
    cols: usize,
}

/// Split real/imaginary weight vector.
pub(crate) struct PlanarVector {
    re: Vec<f64>,
    im: Vec<f64>,
}

impl PlanarVector {
    pub(crate) fn new(v: &[Complex64]) -> Self {
        PlanarVector {
            re: v.iter().map(|z| z.re).collect(),
            im: v.iter().map(|z| z.im).collect(),
        }
    }
}

impl PlanarMatrix {
    pub(crate) fn new(h: &ChannelMatrix) -> Self {
        PlanarMatrix {
            re: h.entries.iter().map(|z| z.re).collect(),
            im: h.entries.iter().map(|z| z.im).collect(),
            cols: h.entries.ncols(),
        }
    }

    /// `u^T H w`, same value as [`weighted_sum`] up to summation order.
    #[cfg(test)]
    pub(crate) fn weighted_sum(&self, u: &[Complex64], w: &PlanarVector) -> Complex64 {
        self.weighted_sums(u, &[w])[0]
    }

    /// `u^T H w` for every `w` in `ws`. Each row of `H` is read once and
    /// reused for all weight vectors, which keeps the inner loop in L1.
    pub(crate) fn weighted_sums(&self, u: &[Complex64], ws: &[&PlanarVector]) -> Vec<Complex64> {
        assert_eq!(u.len() * self.cols, self.re.len());
        assert!(ws.iter().all(|w| w.re.len() == self.cols && w.im.len() == self.cols));
        #[cfg(target_arch = "x86_64")]
        if std::arch::is_x86_feature_detected!("avx2") {
            // SAFETY: AVX2 was detected at runtime; the asserts above fix
            // every slice length the kernel reads.
            return unsafe { planar_sums_avx2(self, u, ws) };
        }
        planar_sums(self, u, ws)
    }
}

const LANES: usize = 8;

/// Lane-wise accumulators of one weight vector.
#[derive(Clone, Copy)]
struct LaneSums {
    re: [f64; LANES],
    im: [f64; LANES],
    tail: Complex64,
}

impl LaneSums {
    const ZERO: LaneSums = LaneSums { re: [0.0; LANES], im: [0.0; LANES], tail: Complex64::new(0.0, 0.0) };

    fn total(&self) -> Complex64 {
        let re: f64 = self.re.iter().sum();
        let im: f64 = self.im.iter().sum();
        Complex64::new(re + self.tail.re, im + self.tail.im)
    }
}

/// Per-row complex dot products kept in `LANES` partial sums for each real
/// term, folded into lane-wise accumulators weighted by `u`, and reduced
/// across lanes once at the end. [`planar_sums_avx2`] performs the identical
/// operations in the identical order, so both give bit-identical results.
fn planar_sums(h: &PlanarMatrix, u: &[Complex64], ws: &[&PlanarVector]) -> Vec<Complex64> {
    let cols = h.cols;
    let full = cols - cols % LANES;
    let mut sums = vec![LaneSums::ZERO; ws.len()];
    for (row, ur) in u.iter().enumerate() {
        let (hr, hi) = (&h.re[row * cols..(row + 1) * cols], &h.im[row * cols..(row + 1) * cols]);
        for (w, g) in ws.iter().zip(sums.iter_mut()) {
            let (wr, wi) = (&w.re, &w.im);
            let (mut rr, mut ii, mut ri, mut ir) = ([0.0; LANES], [0.0; LANES], [0.0; LANES], [0.0; LANES]);
            for base in (0..full).step_by(LANES) {
                for k in 0..LANES {
                    let (a, b, x, y) = (hr[base + k], hi[base + k], wr[base + k], wi[base + k]);
                    rr[k] += a * x;
                    ii[k] += b * y;
                    ri[k] += a * y;
                    ir[k] += b * x;
                }
            }
            for k in 0..LANES {
                let (tr, ti) = (rr[k] - ii[k], ri[k] + ir[k]);
                g.re[k] += ur.re * tr - ur.im * ti;
                g.im[k] += ur.re * ti + ur.im * tr;
            }
            g.tail += *ur * row_tail(hr, hi, wr, wi, full);
        }
    }
    sums.iter().map(LaneSums::total).collect()
}

fn row_tail(hr: &[f64], hi: &[f64], wr: &[f64], wi: &[f64], full: usize) -> Complex64 {
    let (mut re, mut im) = (0.0, 0.0);
    for k in full..hr.len() {
        re += hr[k] * wr[k] - hi[k] * wi[k];
        im += hr[k] * wi[k] + hi[k] * wr[k];
    }
    Complex64::new(re, im)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn planar_sums_avx2(h: &PlanarMatrix, u: &[Complex64], ws: &[&PlanarVector]) -> Vec<Complex64> {
    use std::arch::x86_64::*;
    let cols = h.cols;
    let full = cols - cols % LANES;
    let zero = _mm256_setzero_pd();
    // per weight vector: [re lanes 0-3, re lanes 4-7, im lanes 0-3, im lanes 4-7]
    let mut acc_g = vec![[zero; 4]; ws.len()];
    let mut tails = vec![Complex64::new(0.0, 0.0); ws.len()];
    for (row, ur) in u.iter().enumerate() {
        let (hr, hi) = (&h.re[row * cols..(row + 1) * cols], &h.im[row * cols..(row + 1) * cols]);
        let (ure, uim) = (_mm256_set1_pd(ur.re), _mm256_set1_pd(ur.im));
        for ((w, g), tail) in ws.iter().zip(acc_g.iter_mut()).zip(tails.iter_mut()) {
            let (wr, wi) = (&w.re, &w.im);
            // [term][half]: terms re*re, im*im, re*im, im*re
            let mut acc = [[zero; 2]; 4];
            let mut k = 0;
            while k < full {
                for half in 0..2 {
                    let off = k + 4 * half;
                    let a = _mm256_loadu_pd(hr.as_ptr().add(off));
                    let b = _mm256_loadu_pd(hi.as_ptr().add(off));
                    let x = _mm256_loadu_pd(wr.as_ptr().add(off));
                    let y = _mm256_loadu_pd(wi.as_ptr().add(off));
                    acc[0][half] = _mm256_add_pd(acc[0][half], _mm256_mul_pd(a, x));
                    acc[1][half] = _mm256_add_pd(acc[1][half], _mm256_mul_pd(b, y));
                    acc[2][half] = _mm256_add_pd(acc[2][half], _mm256_mul_pd(a, y));
                    acc[3][half] = _mm256_add_pd(acc[3][half], _mm256_mul_pd(b, x));
                }
                k += LANES;
            }
            for half in 0..2 {
                let tr = _mm256_sub_pd(acc[0][half], acc[1][half]);
                let ti = _mm256_add_pd(acc[2][half], acc[3][half]);
                let re = _mm256_sub_pd(_mm256_mul_pd(ure, tr), _mm256_mul_pd(uim, ti));
                let im = _mm256_add_pd(_mm256_mul_pd(ure, ti), _mm256_mul_pd(uim, tr));
                g[half] = _mm256_add_pd(g[half], re);
                g[2 + half] = _mm256_add_pd(g[2 + half], im);
            }
            *tail += *ur * row_tail(hr, hi, wr, wi, full);
        }
    }
    acc_g
        .iter()
        .zip(tails)
        .map(|(g, tail)| {
            let mut s = LaneSums { tail, ..LaneSums::ZERO };
            _mm256_storeu_pd(s.re.as_mut_ptr(), g[0]);
            _mm256_storeu_pd(s.re.as_mut_ptr().add(4), g[1]);
            _mm256_storeu_pd(s.im.as_mut_ptr(), g[2]);
            _mm256_storeu_pd(s.im.as_mut_ptr().add(4), g[3]);
            s.total()
        })
        .collect()
}
