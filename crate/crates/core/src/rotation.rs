//! Leakage correction by diagonal phase rotation.
//!
//! A path whose normalized frequency falls between DFT bins spreads its
//! energy over neighbouring bins. Multiplying `H` on the left and right by
//! diagonal phasor matrices shifts the path by a fractional offset; the offset
//! that maximizes the energy collected at the coarse bin is the fractional
//! part of the path's frequency. The search runs over a grid of offsets inside
//! half a bin, either in a single pass or as successive zooms around the
//! running best.

use std::f64::consts::PI;

use ndarray::Array1;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::{unit_phasor, wrap_unit, ChannelMatrix};
use crate::error::{Error, Result};
use crate::estimate::{Method, PathEstimate, SignatureEstimate};
use crate::spectral::{bin_weights, detect_peaks, idft2, CoarseBin, PlanarMatrix, PlanarVector, ThresholdPolicy};

/// Diagonal of the rotation matrix, `e^{+j2 pi n offset}`.
pub fn rotation_phasors(offset: f64, n: usize) -> Array1<Complex64> {
    Array1::from_shape_fn(n, |k| unit_phasor(2.0 * PI * k as f64 * offset))
}

/// `n_points` evenly spaced offsets covering `[-halfwidth, halfwidth]`
/// inclusively. The middle point is exactly zero.
pub fn stage_offsets(halfwidth: f64, n_points: usize) -> Result<Vec<f64>> {
    if !(halfwidth > 0.0 && halfwidth.is_finite()) {
        return Err(Error::domain(format!("halfwidth {halfwidth} must be positive")));
    }
    if n_points < 3 || n_points % 2 == 0 {
        return Err(Error::domain(format!(
            "stage point count {n_points} must be odd and at least 3"
        )));
    }
    let mid = (n_points / 2) as f64;
    let step = 2.0 * halfwidth / (n_points - 1) as f64;
    Ok((0..n_points).map(|k| (k as f64 - mid) * step).collect())
}

/// Point counts of one refinement stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StagePoints {
    pub theta: usize,
    pub tau: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
enum RawStage {
    Uniform(usize),
    Separable([usize; 2]),
}

/// Per-stage search grid sizes. A single stage is the direct method.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<RawStage>", into = "Vec<RawStage>")]
pub struct RotationGridSpec {
    stages: Vec<StagePoints>,
}

impl TryFrom<Vec<RawStage>> for RotationGridSpec {
    type Error = Error;

    fn try_from(raw: Vec<RawStage>) -> Result<Self> {
        RotationGridSpec::separable(
            raw.into_iter()
                .map(|s| match s {
                    RawStage::Uniform(n) => (n, n),
                    RawStage::Separable([a, b]) => (a, b),
                })
                .collect(),
        )
    }
}

impl From<RotationGridSpec> for Vec<RawStage> {
    fn from(spec: RotationGridSpec) -> Self {
        spec.stages
            .into_iter()
            .map(|s| {
                if s.theta == s.tau {
                    RawStage::Uniform(s.theta)
                } else {
                    RawStage::Separable([s.theta, s.tau])
                }
            })
            .collect()
    }
}

impl RotationGridSpec {
    /// Same point count on both axes for every stage.
    pub fn new(stage_points: &[usize]) -> Result<Self> {
        Self::separable(stage_points.iter().map(|&n| (n, n)).collect())
    }

    pub fn direct(n: usize) -> Result<Self> {
        Self::new(&[n])
    }

    /// `(theta_points, tau_points)` per stage.
    pub fn separable(stages: Vec<(usize, usize)>) -> Result<Self> {
        if stages.is_empty() {
            return Err(Error::config("rotation grid needs at least one stage"));
        }
        for &(a, b) in &stages {
            for n in [a, b] {
                if n < 3 || n % 2 == 0 {
                    return Err(Error::config(format!(
                        "stage point count {n} must be odd and at least 3"
                    )));
                }
            }
        }
        Ok(RotationGridSpec {
            stages: stages
                .into_iter()
                .map(|(theta, tau)| StagePoints { theta, tau })
                .collect(),
        })
    }

    pub fn stages(&self) -> &[StagePoints] {
        &self.stages
    }

    /// Final angle-axis resolution as a fraction of a bin.
    pub fn final_step_bins(&self) -> (f64, f64) {
        self.stages.iter().fold((1.0, 1.0), |(a, b), s| {
            (a / (s.theta - 1) as f64, b / (s.tau - 1) as f64)
        })
    }
}

impl Default for RotationGridSpec {
    fn default() -> Self {
        RotationGridSpec::new(&[11, 5]).expect("valid default stages")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefinedPath {
    pub theta_norm: f64,
    pub tau_norm: f64,
    pub gain: Complex64,
    pub source_bin: CoarseBin,
}

/// Single-pass search over `n_theta x n_tau` offsets inside the bin.
pub fn refine_direct(h: &ChannelMatrix, bin: &CoarseBin, n_theta: usize, n_tau: usize) -> Result<RefinedPath> {
    let spec = RotationGridSpec::separable(vec![(n_theta, n_tau)])?;
    Ok(refine_multistage(h, bin, &spec))
}

#[derive(Clone, Copy)]
struct Candidate {
    value: f64,
    power: Complex64,
    theta: f64,
    tau: f64,
    rank: (usize, isize, isize),
}

impl Candidate {
    fn beats(&self, other: &Candidate) -> bool {
        self.value > other.value || (self.value == other.value && self.rank < other.rank)
    }
}

/// Multistage refinement: stage 1 covers half a bin on each side, each later
/// stage covers half the previous step around the running best. Candidates
/// outside the coarse bin are skipped.
pub fn refine_multistage(h: &ChannelMatrix, bin: &CoarseBin, spec: &RotationGridSpec) -> RefinedPath {
    let (r, s) = h.entries.dim();
    refine_planar(&PlanarMatrix::new(h), r, s, bin, spec)
}

fn refine_planar(h: &PlanarMatrix, r: usize, s: usize, bin: &CoarseBin, spec: &RotationGridSpec) -> RefinedPath {
    let bin_half = (0.5 / r as f64, 0.5 / s as f64);
    let mut halfwidth = bin_half;
    let mut center = (0.0, 0.0);
    let mut best: Option<Candidate> = None;

    for stage in spec.stages() {
        let theta_grid = stage_offsets(halfwidth.0, stage.theta).expect("validated stage");
        let tau_grid = stage_offsets(halfwidth.1, stage.tau).expect("validated stage");
        let (mid_t, mid_u) = ((stage.theta / 2) as isize, (stage.tau / 2) as isize);

        let tau_weights: Vec<Option<(f64, PlanarVector)>> = tau_grid
            .iter()
            .map(|&d| {
                let off = center.1 + d;
                (off.abs() <= bin_half.1 + 1e-12).then(|| (off, PlanarVector::new(&bin_weights(bin.j, s, off))))
            })
            .collect();

        let in_bin: Vec<&PlanarVector> = tau_weights.iter().flatten().map(|(_, w)| w).collect();

        let mut stage_best: Option<Candidate> = None;
        for (kt, &dt) in theta_grid.iter().enumerate() {
            let theta_off = center.0 + dt;
            if theta_off.abs() > bin_half.0 + 1e-12 {
                continue;
            }
            let u = bin_weights(bin.i, r, theta_off);
            let powers = h.weighted_sums(&u, &in_bin);
            let mut powers = powers.into_iter();
            for (ku, tw) in tau_weights.iter().enumerate() {
                let Some((tau_off, _)) = tw else { continue };
                let power = powers.next().expect("one power per in-bin delay offset");
                let (it, iu) = (kt as isize - mid_t, ku as isize - mid_u);
                let cand = Candidate {
                    value: power.norm_sqr(),
                    power,
                    theta: theta_off,
                    tau: *tau_off,
                    rank: ((it.abs() + iu.abs()) as usize, it, iu),
                };
                if stage_best.as_ref().is_none_or(|b| cand.beats(b)) {
                    stage_best = Some(cand);
                }
            }
        }
        // the stage center is always in-bin, so every stage has a candidate
        let sb = stage_best.expect("stage center lies inside the bin");
        center = (sb.theta, sb.tau);
        halfwidth = (
            halfwidth.0 / (stage.theta - 1) as f64,
            halfwidth.1 / (stage.tau - 1) as f64,
        );
        best = Some(sb);
    }

    let best = best.expect("at least one stage");
    let norm = ((r * s) as f64).sqrt();
    RefinedPath {
        theta_norm: wrap_unit(bin.i as f64 / r as f64 + best.theta),
        tau_norm: wrap_unit(bin.j as f64 / s as f64 + best.tau),
        gain: best.power / norm,
        source_bin: *bin,
    }
}

/// Coarse DFT estimate: bin centers with leaked bin values as gains.
pub fn estimate_dft(h: &ChannelMatrix, policy: &ThresholdPolicy) -> SignatureEstimate {
    let (r, s) = h.entries.dim();
    let norm = ((r * s) as f64).sqrt();
    let g = idft2(h);
    let paths = detect_peaks(&g, policy)
        .into_iter()
        .map(|b| PathEstimate {
            gain: b.value / norm,
            theta_norm: b.i as f64 / r as f64,
            tau_norm: b.j as f64 / s as f64,
        })
        .collect();
    SignatureEstimate::new(Method::Dft, paths)
}

/// Coarse peaks followed by independent rotation refinement of each bin.
pub fn estimate_rotation(
    h: &ChannelMatrix,
    policy: &ThresholdPolicy,
    spec: &RotationGridSpec,
) -> SignatureEstimate {
    let (r, s) = h.entries.dim();
    let planar = PlanarMatrix::new(h);
    let paths = detect_peaks(&idft2(h), policy)
        .iter()
        .map(|bin| {
            let p = refine_planar(&planar, r, s, bin, spec);
            PathEstimate {
                gain: p.gain,
                theta_norm: p.theta_norm,
                tau_norm: p.tau_norm,
            }
        })
        .collect();
    SignatureEstimate::new(Method::Rotation, paths)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{angle_steering, synthesize, Scatterer, Scene};
    use crate::spectral::bin_power;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn phasor_algebra() {
        assert!(rotation_phasors(0.0, 7).iter().all(|z| *z == c(1.0, 0.0)));
        let shifted = &rotation_phasors(0.013, 9) * &angle_steering(0.37, 9);
        let direct = angle_steering(0.37 - 0.013, 9);
        for (a, b) in shifted.iter().zip(&direct) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn offsets_grid() {
        let g = stage_offsets(1.0 / 64.0, 11).unwrap();
        assert_eq!(g.len(), 11);
        assert_eq!(g[5], 0.0);
        assert!((g[0] + 0.015625).abs() < 1e-15 && (g[10] - 0.015625).abs() < 1e-15);
        for w in g.windows(2) {
            assert!((w[1] - w[0] - 0.003125).abs() < 1e-15);
        }
        assert_eq!(stage_offsets(0.5, 3).unwrap(), vec![-0.5, 0.0, 0.5]);
        assert!(matches!(stage_offsets(0.1, 10), Err(Error::Domain(_))));
        assert!(stage_offsets(0.0, 11).is_err());
    }

    #[test]
    fn grid_spec_validation() {
        assert!(RotationGridSpec::new(&[11, 4]).is_err());
        assert!(RotationGridSpec::new(&[]).is_err());
        assert!(RotationGridSpec::new(&[1]).is_err());
        let spec = RotationGridSpec::new(&[11, 5]).unwrap();
        let (a, _) = spec.final_step_bins();
        assert!((a - 1.0 / 40.0).abs() < 1e-15);
        let json = serde_json::to_string(&spec).unwrap();
        assert_eq!(json, "[11,5]");
        let sep: RotationGridSpec = serde_json::from_str("[[11, 7], 5]").unwrap();
        assert_eq!(sep.stages()[0], StagePoints { theta: 11, tau: 7 });
    }

    #[test]
    fn on_grid_path_keeps_zero_offset() {
        let alpha = c(-0.4, 0.9);
        let h = synthesize(&Scene::new(vec![Scatterer::new(alpha, 3.0 / 16.0, 9.0 / 16.0)]).unwrap(), 16, 16)
            .unwrap();
        let bin = CoarseBin { i: 3, j: 9, value: bin_power(&h, 3, 9, 0.0, 0.0) };
        for n in [3, 11, 21] {
            let p = refine_direct(&h, &bin, n, n).unwrap();
            assert_eq!(p.theta_norm, 3.0 / 16.0);
            assert_eq!(p.tau_norm, 9.0 / 16.0);
            assert!((p.gain - alpha).norm() < 1e-10);
        }
    }

    #[test]
    fn single_stage_matches_direct() {
        let h = synthesize(
            &Scene::new(vec![Scatterer::new(c(1.0, 0.2), 0.2031, 0.6712)]).unwrap(),
            16,
            8,
        )
        .unwrap();
        let bin = CoarseBin { i: 3, j: 5, value: bin_power(&h, 3, 5, 0.0, 0.0) };
        let a = refine_direct(&h, &bin, 9, 9).unwrap();
        let b = refine_multistage(&h, &bin, &RotationGridSpec::new(&[9]).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn refinement_stays_in_bin() {
        // path exactly at a bin edge drives stage 2 against the boundary
        let h = synthesize(
            &Scene::new(vec![Scatterer::new(c(1.0, 0.0), 3.5 / 16.0, 4.5 / 16.0)]).unwrap(),
            16,
            16,
        )
        .unwrap();
        let bin = CoarseBin { i: 3, j: 4, value: bin_power(&h, 3, 4, 0.0, 0.0) };
        let p = refine_multistage(&h, &bin, &RotationGridSpec::new(&[5, 5, 5]).unwrap());
        assert!((p.theta_norm - 3.0 / 16.0).abs() <= 0.5 / 16.0 + 1e-12);
        assert!((p.tau_norm - 4.0 / 16.0).abs() <= 0.5 / 16.0 + 1e-12);
    }

    #[test]
    fn empty_channel_gives_no_paths() {
        let h = ChannelMatrix::noiseless(ndarray::Array2::zeros((8, 8)));
        let est = estimate_rotation(&h, &ThresholdPolicy::default(), &RotationGridSpec::default());
        assert!(est.paths.is_empty());
        assert!(estimate_dft(&h, &ThresholdPolicy::default()).paths.is_empty());
    }
}
