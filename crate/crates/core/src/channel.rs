//! System geometry, ground-truth scenes and synthesis of the space-frequency
//! channel matrix `H = sum_q alpha_q a(theta_q) b(tau_q)^T + E`.
//!
//! All path parameters are carried in normalized form: `theta_norm` is the
//! spatial frequency `f_c d sin(doa) / c` and `tau_norm` is the temporal
//! frequency `delta_f toa`, both reduced modulo 1.

use std::f64::consts::PI;
use std::io::{Read, Write};

use ndarray::{Array1, Array2};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SPEED_OF_LIGHT: f64 = 2.997_924_58e8;

/// Magic bytes of the binary channel file.
pub const CHANNEL_MAGIC: &[u8; 5] = b"DTEK1";

/// Reduces `x` into `[0, 1)`.
pub fn wrap_unit(x: f64) -> f64 {
    let r = x.rem_euclid(1.0);
    // rem_euclid rounds tiny negatives up to exactly 1.0
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

/// Maps a normalized frequency in `[0, 1)` onto `[-0.5, 0.5)`.
pub fn wrap_centered(x: f64) -> f64 {
    let w = wrap_unit(x);
    if w >= 0.5 {
        w - 1.0
    } else {
        w
    }
}

/// Distance between two normalized frequencies on the unit circle.
pub fn circular_distance(a: f64, b: f64) -> f64 {
    wrap_centered(a - b).abs()
}

/// Array and waveform geometry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSystemConfig", into = "RawSystemConfig")]
pub struct SystemConfig {
    carrier_freq_hz: f64,
    bandwidth_hz: f64,
    num_antennas: usize,
    num_subcarriers: usize,
    element_spacing_m: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSystemConfig {
    carrier_freq_hz: f64,
    bandwidth_hz: f64,
    num_antennas: usize,
    num_subcarriers: usize,
    #[serde(default)]
    element_spacing_m: Option<f64>,
}

impl TryFrom<RawSystemConfig> for SystemConfig {
    type Error = Error;

    fn try_from(raw: RawSystemConfig) -> Result<Self> {
        let cfg = SystemConfig::new(
            raw.carrier_freq_hz,
            raw.bandwidth_hz,
            raw.num_antennas,
            raw.num_subcarriers,
        )?;
        match raw.element_spacing_m {
            Some(d) => cfg.with_element_spacing(d),
            None => Ok(cfg),
        }
    }
}

impl From<SystemConfig> for RawSystemConfig {
    fn from(cfg: SystemConfig) -> Self {
        RawSystemConfig {
            carrier_freq_hz: cfg.carrier_freq_hz,
            bandwidth_hz: cfg.bandwidth_hz,
            num_antennas: cfg.num_antennas,
            num_subcarriers: cfg.num_subcarriers,
            element_spacing_m: Some(cfg.element_spacing_m),
        }
    }
}

impl SystemConfig {
    /// Creates a configuration with half-wavelength element spacing.
    pub fn new(
        carrier_freq_hz: f64,
        bandwidth_hz: f64,
        num_antennas: usize,
        num_subcarriers: usize,
    ) -> Result<Self> {
        if !(carrier_freq_hz.is_finite() && carrier_freq_hz > 0.0) {
            return Err(Error::config("carrier_freq_hz must be positive"));
        }
        if !(bandwidth_hz.is_finite() && bandwidth_hz > 0.0) {
            return Err(Error::config("bandwidth_hz must be positive"));
        }
        if num_antennas < 2 {
            return Err(Error::config("num_antennas must be at least 2"));
        }
        if num_subcarriers < 2 {
            return Err(Error::config("num_subcarriers must be at least 2"));
        }
        Ok(SystemConfig {
            carrier_freq_hz,
            bandwidth_hz,
            num_antennas,
            num_subcarriers,
            element_spacing_m: SPEED_OF_LIGHT / (2.0 * carrier_freq_hz),
        })
    }

    pub fn with_element_spacing(mut self, spacing_m: f64) -> Result<Self> {
        if !(spacing_m.is_finite() && spacing_m > 0.0) {
            return Err(Error::config("element_spacing_m must be positive"));
        }
        self.element_spacing_m = spacing_m;
        Ok(self)
    }

    /// Same waveform with a different array/subcarrier grid.
    pub fn with_grid(&self, num_antennas: usize, num_subcarriers: usize) -> Result<Self> {
        SystemConfig::new(
            self.carrier_freq_hz,
            self.bandwidth_hz,
            num_antennas,
            num_subcarriers,
        )?
        .with_element_spacing(self.element_spacing_m)
    }

    pub fn carrier_freq_hz(&self) -> f64 {
        self.carrier_freq_hz
    }

    pub fn bandwidth_hz(&self) -> f64 {
        self.bandwidth_hz
    }

    pub fn num_antennas(&self) -> usize {
        self.num_antennas
    }

    pub fn num_subcarriers(&self) -> usize {
        self.num_subcarriers
    }

    pub fn element_spacing_m(&self) -> f64 {
        self.element_spacing_m
    }

    pub fn subcarrier_spacing_hz(&self) -> f64 {
        self.bandwidth_hz / self.num_subcarriers as f64
    }

    pub fn wavelength_m(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_freq_hz
    }

    /// Largest delay that does not alias, `1 / delta_f`.
    pub fn unambiguous_delay_s(&self) -> f64 {
        1.0 / self.subcarrier_spacing_hz()
    }
}

impl Default for SystemConfig {
    /// 73 GHz carrier, 1 GHz bandwidth, 64 antennas, 64 subcarriers.
    fn default() -> Self {
        SystemConfig::new(73e9, 1e9, 64, 64).expect("valid default config")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scatterer {
    pub gain: Complex64,
    pub theta_norm: f64,
    pub tau_norm: f64,
}

impl Scatterer {
    pub fn new(gain: Complex64, theta_norm: f64, tau_norm: f64) -> Self {
        Scatterer {
            gain,
            theta_norm: wrap_unit(theta_norm),
            tau_norm: wrap_unit(tau_norm),
        }
    }
}

/// Scatterers closer than this on both axes count as duplicates.
const DUPLICATE_TOL: f64 = 1e-12;

/// Ground-truth list of point scatterers.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "RawScene")]
pub struct Scene {
    scatterers: Vec<Scatterer>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScene {
    #[serde(default)]
    scatterers: Vec<Scatterer>,
}

impl TryFrom<RawScene> for Scene {
    type Error = Error;

    fn try_from(raw: RawScene) -> Result<Self> {
        Scene::new(raw.scatterers)
    }
}

impl Scene {
    /// Wraps parameters modulo 1 and rejects duplicated `(theta, tau)` pairs.
    pub fn new(scatterers: Vec<Scatterer>) -> Result<Self> {
        let scatterers: Vec<Scatterer> = scatterers
            .into_iter()
            .map(|s| Scatterer::new(s.gain, s.theta_norm, s.tau_norm))
            .collect();
        for s in &scatterers {
            if !(s.gain.re.is_finite()
                && s.gain.im.is_finite()
                && s.theta_norm.is_finite()
                && s.tau_norm.is_finite())
            {
                return Err(Error::config("scatterer parameters must be finite"));
            }
        }
        for (a, sa) in scatterers.iter().enumerate() {
            for sb in &scatterers[a + 1..] {
                if circular_distance(sa.theta_norm, sb.theta_norm) < DUPLICATE_TOL
                    && circular_distance(sa.tau_norm, sb.tau_norm) < DUPLICATE_TOL
                {
                    return Err(Error::config(format!(
                        "duplicate scatterer at ({}, {})",
                        sa.theta_norm, sa.tau_norm
                    )));
                }
            }
        }
        Ok(Scene { scatterers })
    }

    pub fn scatterers(&self) -> &[Scatterer] {
        &self.scatterers
    }

    pub fn len(&self) -> usize {
        self.scatterers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scatterers.is_empty()
    }
}

/// R x S complex space-frequency response.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMatrix {
    pub entries: Array2<Complex64>,
    /// Per-entry complex noise variance; 0 when noiseless.
    pub noise_variance: f64,
}

impl ChannelMatrix {
    pub fn noiseless(entries: Array2<Complex64>) -> Self {
        ChannelMatrix {
            entries,
            noise_variance: 0.0,
        }
    }

    pub fn num_antennas(&self) -> usize {
        self.entries.nrows()
    }

    pub fn num_subcarriers(&self) -> usize {
        self.entries.ncols()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.entries.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn mean_power(&self) -> f64 {
        let n = self.entries.len().max(1) as f64;
        self.entries.iter().map(|z| z.norm_sqr()).sum::<f64>() / n
    }

    pub fn scaled(&self, c: Complex64) -> ChannelMatrix {
        ChannelMatrix {
            entries: self.entries.mapv(|z| z * c),
            noise_variance: self.noise_variance * c.norm_sqr(),
        }
    }

    /// Writes the binary channel format: magic, `u32` R, `u32` S,
    /// `f64` noise variance, then row-major `(re, im)` `f64` pairs.
    /// All fields are little-endian.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let (r, s) = self.entries.dim();
        let r32 = u32::try_from(r).map_err(|_| Error::Format("too many rows".into()))?;
        let s32 = u32::try_from(s).map_err(|_| Error::Format("too many columns".into()))?;
        let mut buf = Vec::with_capacity(5 + 8 + 8 + r * s * 16);
        buf.extend_from_slice(CHANNEL_MAGIC);
        buf.extend_from_slice(&r32.to_le_bytes());
        buf.extend_from_slice(&s32.to_le_bytes());
        buf.extend_from_slice(&self.noise_variance.to_le_bytes());
        for z in self.entries.iter() {
            buf.extend_from_slice(&z.re.to_le_bytes());
            buf.extend_from_slice(&z.im.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_from<Rd: Read>(mut rd: Rd) -> Result<Self> {
        let mut magic = [0u8; 5];
        rd.read_exact(&mut magic)
            .map_err(|_| Error::Format("truncated header".into()))?;
        if &magic != CHANNEL_MAGIC {
            return Err(Error::Format(format!(
                "bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(&magic),
                std::str::from_utf8(CHANNEL_MAGIC).unwrap()
            )));
        }
        let mut head = [0u8; 16];
        rd.read_exact(&mut head)
            .map_err(|_| Error::Format("truncated header".into()))?;
        let r = u32::from_le_bytes(head[0..4].try_into().unwrap()) as usize;
        let s = u32::from_le_bytes(head[4..8].try_into().unwrap()) as usize;
        let noise_variance = f64::from_le_bytes(head[8..16].try_into().unwrap());
        if r == 0 || s == 0 {
            return Err(Error::Format(format!("empty matrix {r}x{s}")));
        }
        let mut body = Vec::new();
        rd.read_to_end(&mut body)?;
        if body.len() != r * s * 16 {
            return Err(Error::Format(format!(
                "payload is {} bytes, expected {} for {r}x{s}",
                body.len(),
                r * s * 16
            )));
        }
        let values: Vec<Complex64> = body
            .chunks_exact(16)
            .map(|c| {
                Complex64::new(
                    f64::from_le_bytes(c[0..8].try_into().unwrap()),
                    f64::from_le_bytes(c[8..16].try_into().unwrap()),
                )
            })
            .collect();
        let entries = Array2::from_shape_vec((r, s), values)
            .map_err(|e| Error::Format(e.to_string()))?;
        Ok(ChannelMatrix {
            entries,
            noise_variance,
        })
    }
}

/// `[1, e^{-j2 pi theta}, ..., e^{-j2 pi (n-1) theta}]`.
pub fn angle_steering(theta_norm: f64, n: usize) -> Array1<Complex64> {
    Array1::from_shape_fn(n, |r| unit_phasor(-2.0 * PI * r as f64 * theta_norm))
}

/// Delay steering vector; same form as [`angle_steering`] over subcarriers.
pub fn delay_steering(tau_norm: f64, n: usize) -> Array1<Complex64> {
    angle_steering(tau_norm, n)
}

#[inline]
pub(crate) fn unit_phasor(phase: f64) -> Complex64 {
    let (s, c) = phase.sin_cos();
    Complex64::new(c, s)
}

/// Physical DoA (degrees) and ToA (seconds) to normalized frequencies in `[0, 1)`.
pub fn normalize_physical(doa_deg: f64, toa_s: f64, cfg: &SystemConfig) -> Result<(f64, f64)> {
    if !(doa_deg.abs() < 90.0) {
        return Err(Error::domain(format!("DoA {doa_deg} deg outside (-90, 90)")));
    }
    if !(toa_s >= 0.0 && toa_s.is_finite()) {
        return Err(Error::domain(format!("ToA {toa_s} s must be non-negative")));
    }
    let theta = cfg.carrier_freq_hz * cfg.element_spacing_m * doa_deg.to_radians().sin()
        / SPEED_OF_LIGHT;
    let tau = cfg.subcarrier_spacing_hz() * toa_s;
    Ok((wrap_unit(theta), wrap_unit(tau)))
}

/// Inverse of [`normalize_physical`] on the unambiguous domain.
pub fn denormalize(theta_norm: f64, tau_norm: f64, cfg: &SystemConfig) -> Result<(f64, f64)> {
    let arg = SPEED_OF_LIGHT * wrap_centered(theta_norm)
        / (cfg.carrier_freq_hz * cfg.element_spacing_m);
    if !(arg.abs() <= 1.0) {
        return Err(Error::domain(format!(
            "normalized DoA {theta_norm} has no real angle for this spacing"
        )));
    }
    Ok((arg.asin().to_degrees(), tau_norm / cfg.subcarrier_spacing_hz()))
}

/// Noiseless `H(r, s) = sum_q alpha_q e^{-j2 pi r theta_q} e^{-j2 pi s tau_q}`.
pub fn synthesize_channel(scene: &Scene, cfg: &SystemConfig) -> Result<ChannelMatrix> {
    synthesize(scene, cfg.num_antennas, cfg.num_subcarriers)
}

pub(crate) fn synthesize(scene: &Scene, r: usize, s: usize) -> Result<ChannelMatrix> {
    if r < 1 || s < 1 {
        return Err(Error::Dimension(format!("cannot synthesize a {r}x{s} channel")));
    }
    let mut h = Array2::<Complex64>::zeros((r, s));
    for sc in scene.scatterers() {
        let a = angle_steering(sc.theta_norm, r);
        let b = delay_steering(sc.tau_norm, s);
        for (ri, &ar) in a.iter().enumerate() {
            let ga = sc.gain * ar;
            for (hv, &bs) in h.row_mut(ri).iter_mut().zip(b.iter()) {
                *hv += ga * bs;
            }
        }
    }
    Ok(ChannelMatrix::noiseless(h))
}

/// Adds i.i.d. circularly-symmetric complex Gaussian noise with per-entry
/// variance `mean(|H|^2) / 10^(snr_db / 10)`. `snr_db = +inf` returns `H`
/// unchanged.
pub fn add_awgn(h: &ChannelMatrix, snr_db: f64, seed: u64) -> Result<ChannelMatrix> {
    if snr_db.is_nan() {
        return Err(Error::domain("SNR is NaN"));
    }
    if h.entries.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
        return Err(Error::domain("channel contains non-finite entries"));
    }
    if snr_db == f64::INFINITY {
        return Ok(ChannelMatrix {
            entries: h.entries.clone(),
            noise_variance: 0.0,
        });
    }
    let signal = h.mean_power();
    if signal == 0.0 {
        return Err(Error::domain("SNR undefined for an all-zero channel"));
    }
    let variance = signal / 10f64.powf(snr_db / 10.0);
    let scale = (variance / 2.0).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let entries = h.entries.mapv(|z| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        z + Complex64::new(re * scale, im * scale)
    });
    Ok(ChannelMatrix {
        entries,
        noise_variance: variance,
    })
}

/// Sampling ranges for [`random_scene_with`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneRanges {
    pub doa_min_deg: f64,
    pub doa_max_deg: f64,
    pub max_toa_s: f64,
    /// Draw delays over the full `[0, max_toa_s]` even past `1 / delta_f`.
    pub allow_delay_wrap: bool,
}

impl Default for SceneRanges {
    fn default() -> Self {
        SceneRanges {
            doa_min_deg: 10.0,
            doa_max_deg: 80.0,
            max_toa_s: 333e-9,
            allow_delay_wrap: false,
        }
    }
}

impl SceneRanges {
    /// Upper end of the delay draw for a given configuration.
    pub fn delay_cap_s(&self, cfg: &SystemConfig) -> f64 {
        if self.allow_delay_wrap {
            self.max_toa_s
        } else {
            self.max_toa_s.min(0.95 * cfg.unambiguous_delay_s())
        }
    }
}

const MIN_SEPARATION: f64 = 1e-6;

/// Unit-modulus gains with uniform phase, DoA uniform in degrees and ToA
/// uniform up to the delay cap.
pub fn random_scene(q: usize, cfg: &SystemConfig, seed: u64) -> Result<Scene> {
    random_scene_with(q, cfg, seed, &SceneRanges::default())
}

pub fn random_scene_with(
    q: usize,
    cfg: &SystemConfig,
    seed: u64,
    ranges: &SceneRanges,
) -> Result<Scene> {
    if q < 1 {
        return Err(Error::config("scene needs at least one scatterer"));
    }
    let limit = cfg.num_antennas * cfg.num_subcarriers / 4;
    if q > limit {
        return Err(Error::config(format!(
            "{q} scatterers exceed the density limit R*S/4 = {limit}"
        )));
    }
    if !(ranges.doa_min_deg > -90.0
        && ranges.doa_max_deg < 90.0
        && ranges.doa_min_deg <= ranges.doa_max_deg
        && ranges.max_toa_s >= 0.0)
    {
        return Err(Error::config("invalid scene sampling ranges"));
    }
    let toa_cap = ranges.delay_cap_s(cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out: Vec<Scatterer> = Vec::with_capacity(q);
    while out.len() < q {
        let phase = rng.random::<f64>() * 2.0 * PI;
        let doa = ranges.doa_min_deg + rng.random::<f64>() * (ranges.doa_max_deg - ranges.doa_min_deg);
        let toa = rng.random::<f64>() * toa_cap;
        let (theta, tau) = normalize_physical(doa, toa, cfg)?;
        let candidate = Scatterer::new(unit_phasor(phase), theta, tau);
        let separated = out.iter().all(|s| {
            circular_distance(s.theta_norm, candidate.theta_norm) > MIN_SEPARATION
                || circular_distance(s.tau_norm, candidate.tau_norm) > MIN_SEPARATION
        });
        if separated {
            out.push(candidate);
        }
    }
    Scene::new(out)
}
