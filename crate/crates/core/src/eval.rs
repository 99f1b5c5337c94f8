//! Ground-truth matching, error statistics, seeded Monte-Carlo sweeps and
//! runtime benchmarking.

use std::io::Write;
use std::time::Instant;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::{
    add_awgn, circular_distance, denormalize, random_scene_with, synthesize_channel, wrap_centered,
    ChannelMatrix, Scene, SceneRanges, SystemConfig, SPEED_OF_LIGHT,
};
use crate::error::{Error, Result};
use crate::estimate::{Method, SignatureEstimate};
use crate::music::{estimate_music_with_cap, SmoothingSpec};
use crate::omp::{OmpDictionaries, StopRule, DEFAULT_MEMORY_CAP};
use crate::rotation::{estimate_dft, estimate_rotation, RotationGridSpec};
use crate::spectral::{detect_peaks, idft2, ThresholdPolicy};

/// Outcome of matching one estimate against the ground truth.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MatchResult {
    /// `(truth_index, estimate_index)`.
    pub hits: Vec<(usize, usize)>,
    pub false_alarms: Vec<usize>,
    pub misses: Vec<usize>,
}

/// Greedy matching in descending estimate-gain order. An estimate hits the
/// nearest unmatched truth whose circular distance is within `1/R` in angle
/// and `1/S` in delay.
pub fn match_estimates(truth: &Scene, est: &SignatureEstimate, r: usize, s: usize) -> MatchResult {
    let (tol_t, tol_u) = (1.0 / r as f64, 1.0 / s as f64);
    let mut order: Vec<usize> = (0..est.paths.len()).collect();
    order.sort_by(|&a, &b| est.paths[b].gain.norm().total_cmp(&est.paths[a].gain.norm()));

    let mut taken = vec![false; truth.len()];
    let mut result = MatchResult::default();
    for k in order {
        let e = &est.paths[k];
        let mut best: Option<(f64, usize)> = None;
        for (q, t) in truth.scatterers().iter().enumerate() {
            if taken[q] {
                continue;
            }
            let dt = circular_distance(e.theta_norm, t.theta_norm);
            let du = circular_distance(e.tau_norm, t.tau_norm);
            if dt <= tol_t && du <= tol_u {
                // distance in bin units
                let d = (dt * r as f64).hypot(du * s as f64);
                if best.is_none_or(|(bd, _)| d < bd) {
                    best = Some((d, q));
                }
            }
        }
        match best {
            Some((_, q)) => {
                taken[q] = true;
                result.hits.push((q, k));
            }
            None => result.false_alarms.push(k),
        }
    }
    result.hits.sort_unstable();
    result.false_alarms.sort_unstable();
    result.misses = (0..truth.len()).filter(|&q| !taken[q]).collect();
    result
}

/// Per-hit parameter errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HitError {
    pub theta_norm: f64,
    pub tau_norm: f64,
    pub doa_deg: f64,
    pub toa_s: f64,
    pub gain: Complex64,
}

/// DoA in degrees with the arcsine argument clamped to `[-1, 1]`.
fn doa_deg(theta_norm: f64, cfg: &SystemConfig) -> f64 {
    let arg = SPEED_OF_LIGHT * wrap_centered(theta_norm) / (cfg.carrier_freq_hz() * cfg.element_spacing_m());
    arg.clamp(-1.0, 1.0).asin().to_degrees()
}

pub fn hit_errors(truth: &Scene, est: &SignatureEstimate, m: &MatchResult, cfg: &SystemConfig) -> Vec<HitError> {
    m.hits
        .iter()
        .map(|&(q, k)| {
            let t = truth.scatterers()[q];
            let e = est.paths[k];
            let dtheta = wrap_centered(e.theta_norm - t.theta_norm);
            let dtau = wrap_centered(e.tau_norm - t.tau_norm);
            let doa_err = match (
                denormalize(e.theta_norm, 0.0, cfg),
                denormalize(t.theta_norm, 0.0, cfg),
            ) {
                (Ok((a, _)), Ok((b, _))) => a - b,
                _ => doa_deg(e.theta_norm, cfg) - doa_deg(t.theta_norm, cfg),
            };
            HitError {
                theta_norm: dtheta,
                tau_norm: dtau,
                doa_deg: doa_err,
                toa_s: dtau / cfg.subcarrier_spacing_hz(),
                gain: e.gain - t.gain,
            }
        })
        .collect()
}

/// One trial of one method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub num_paths: usize,
    pub num_estimates: usize,
    pub hits: usize,
    pub false_alarms: usize,
    pub misses: usize,
    pub errors: Vec<HitError>,
    pub runtime_s: f64,
}

impl TrialOutcome {
    pub fn evaluate(truth: &Scene, est: &SignatureEstimate, cfg: &SystemConfig) -> Self {
        let m = match_estimates(truth, est, cfg.num_antennas(), cfg.num_subcarriers());
        TrialOutcome {
            num_paths: truth.len(),
            num_estimates: est.paths.len(),
            hits: m.hits.len(),
            false_alarms: m.false_alarms.len(),
            misses: m.misses.len(),
            errors: hit_errors(truth, est, &m, cfg),
            runtime_s: est.runtime_s,
        }
    }

    pub fn hit_rate(&self) -> f64 {
        if self.num_paths == 0 {
            1.0
        } else {
            self.hits as f64 / self.num_paths as f64
        }
    }

    /// False alarms over `max(Q_hat, 1)`.
    pub fn false_rate(&self) -> f64 {
        self.false_alarms as f64 / self.num_estimates.max(1) as f64
    }
}

/// Aggregated metrics of one method at one SNR. RMSEs are over hit pairs of
/// all trials and absent when there are no hits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub method: Method,
    pub snr_db: f64,
    pub trials: usize,
    pub failed_trials: usize,
    pub seed_base: u64,
    pub hits: usize,
    pub hit_rate: f64,
    pub false_rate: f64,
    pub rmse_doa_deg: Option<f64>,
    /// Delta-method standard error of `rmse_doa_deg`.
    pub rmse_doa_se_deg: Option<f64>,
    pub rmse_toa_s: Option<f64>,
    pub rmse_gain: Option<f64>,
    pub rmse_theta_norm: Option<f64>,
    pub rmse_tau_norm: Option<f64>,
    pub mean_runtime_s: f64,
}

impl MetricsSummary {
    pub const CSV_HEADER: &'static str = "method,snr_db,trials,failed_trials,seed_base,hits,hit_rate,false_rate,\
rmse_doa_deg,rmse_doa_se_deg,rmse_toa_s,rmse_gain,rmse_theta_norm,rmse_tau_norm";

    /// CSV row without the wall-clock column, so reruns are byte-identical.
    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.method,
            self.snr_db,
            self.trials,
            self.failed_trials,
            self.seed_base,
            self.hits,
            self.hit_rate,
            self.false_rate,
            opt(self.rmse_doa_deg),
            opt(self.rmse_doa_se_deg),
            opt(self.rmse_toa_s),
            opt(self.rmse_gain),
            opt(self.rmse_theta_norm),
            opt(self.rmse_tau_norm),
        )
    }

    /// Equality ignoring wall-clock time.
    pub fn same_statistics(&self, other: &MetricsSummary) -> bool {
        let mut a = self.clone();
        a.mean_runtime_s = other.mean_runtime_s;
        a == *other
    }
}

pub fn write_metrics_csv<W: Write>(rows: &[MetricsSummary], mut w: W) -> Result<()> {
    writeln!(w, "{}", MetricsSummary::CSV_HEADER)?;
    for r in rows {
        writeln!(w, "{}", r.csv_row())?;
    }
    Ok(())
}

fn rms(values: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    let sq: Vec<f64> = values.map(|v| v * v).collect();
    if sq.is_empty() {
        return None;
    }
    let n = sq.len() as f64;
    let mse = sq.iter().sum::<f64>() / n;
    let var = if sq.len() > 1 {
        sq.iter().map(|v| (v - mse).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    let rmse = mse.sqrt();
    let se = if rmse > 0.0 { (var / n).sqrt() / (2.0 * rmse) } else { 0.0 };
    Some((rmse, se))
}

/// Aggregates trial outcomes. Returns [`Error::NoHits`] when no trial has a
/// hit.
pub fn rmse_metrics(method: Method, snr_db: f64, seed_base: u64, outcomes: &[TrialOutcome]) -> Result<MetricsSummary> {
    let s = summarize(method, snr_db, seed_base, outcomes, 0);
    if s.hits == 0 {
        return Err(Error::NoHits);
    }
    Ok(s)
}

pub fn summarize(
    method: Method,
    snr_db: f64,
    seed_base: u64,
    outcomes: &[TrialOutcome],
    failed_trials: usize,
) -> MetricsSummary {
    let n = outcomes.len().max(1) as f64;
    let errors = || outcomes.iter().flat_map(|o| o.errors.iter());
    let doa = rms(errors().map(|e| e.doa_deg));
    MetricsSummary {
        method,
        snr_db,
        trials: outcomes.len(),
        failed_trials,
        seed_base,
        hits: outcomes.iter().map(|o| o.hits).sum(),
        hit_rate: outcomes.iter().map(TrialOutcome::hit_rate).sum::<f64>() / n,
        false_rate: outcomes.iter().map(TrialOutcome::false_rate).sum::<f64>() / n,
        rmse_doa_deg: doa.map(|x| x.0),
        rmse_doa_se_deg: doa.map(|x| x.1),
        rmse_toa_s: rms(errors().map(|e| e.toa_s)).map(|x| x.0),
        rmse_gain: rms(errors().map(|e| e.gain.norm())).map(|x| x.0),
        rmse_theta_norm: rms(errors().map(|e| e.theta_norm)).map(|x| x.0),
        rmse_tau_norm: rms(errors().map(|e| e.tau_norm)).map(|x| x.0),
        mean_runtime_s: outcomes.iter().map(|o| o.runtime_s).sum::<f64>() / n,
    }
}

/// Knobs shared by all estimators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimatorSettings {
    pub threshold: ThresholdPolicy,
    pub stages: RotationGridSpec,
    /// `P_theta = P_tau` for the OMP dictionaries.
    pub dict_points: usize,
    pub music_grid: usize,
    /// `None` selects `ceil(R/2) x ceil(S/2)`.
    pub smoothing: Option<SmoothingSpec>,
    pub memory_cap: u64,
    /// Overrides the OMP stop rule; otherwise the path count is used.
    pub omp_stop: Option<StopRule>,
    /// Fixed path count for OMP and MUSIC when none is supplied per call.
    pub paths: Option<usize>,
}

impl Default for EstimatorSettings {
    fn default() -> Self {
        EstimatorSettings {
            threshold: ThresholdPolicy::default(),
            stages: RotationGridSpec::default(),
            dict_points: 200,
            music_grid: 200,
            smoothing: None,
            memory_cap: DEFAULT_MEMORY_CAP,
            omp_stop: None,
            paths: None,
        }
    }
}

impl EstimatorSettings {
    pub fn validate(&self) -> Result<()> {
        self.threshold.validate()?;
        if self.dict_points < 2 {
            return Err(Error::config("dict_points must be at least 2"));
        }
        if self.music_grid < 2 {
            return Err(Error::config("music_grid must be at least 2"));
        }
        if let Some(stop) = &self.omp_stop {
            stop.validate()?;
        }
        if self.paths == Some(0) {
            return Err(Error::config("paths must be at least 1"));
        }
        Ok(())
    }
}

/// An estimator with its size-dependent state (dictionaries) built up front.
#[derive(Debug)]
pub struct Estimator {
    method: Method,
    settings: EstimatorSettings,
    dictionaries: Option<OmpDictionaries>,
    smoothing: SmoothingSpec,
}

impl Estimator {
    pub fn prepare(method: Method, settings: &EstimatorSettings, r: usize, s: usize) -> Result<Self> {
        settings.validate()?;
        let dictionaries = match method {
            Method::Omp1d | Method::Omp2d => Some(OmpDictionaries::new(
                r,
                s,
                settings.dict_points,
                settings.dict_points,
            )?),
            _ => None,
        };
        let smoothing = settings.smoothing.unwrap_or_else(|| SmoothingSpec::default_for(r, s));
        if method == Method::Music {
            smoothing.validate(r, s, 0)?;
        }
        Ok(Estimator {
            method,
            settings: settings.clone(),
            dictionaries,
            smoothing,
        })
    }

    pub fn method(&self) -> Method {
        self.method
    }

    /// Runs the estimator and records its wall time. `num_paths` fixes the
    /// sparsity for OMP and the signal dimension for MUSIC; when absent it
    /// is taken from coarse peak detection.
    pub fn run(&self, h: &ChannelMatrix, num_paths: Option<usize>) -> Result<SignatureEstimate> {
        let start = Instant::now();
        let q = || {
            num_paths
                .or(self.settings.paths)
                .unwrap_or_else(|| detect_peaks(&idft2(h), &self.settings.threshold).len())
        };
        let est = match self.method {
            Method::Dft => estimate_dft(h, &self.settings.threshold),
            Method::Rotation => estimate_rotation(h, &self.settings.threshold, &self.settings.stages),
            Method::Omp2d | Method::Omp1d => {
                let dicts = self.dictionaries.as_ref().expect("prepared for OMP");
                let stop = match self.settings.omp_stop {
                    Some(rule) => Some(rule),
                    None => Some(q()).filter(|&q| q > 0).map(|paths| StopRule::KnownSparsity { paths }),
                };
                if let Some(stop) = stop {
                    if self.method == Method::Omp2d {
                        dicts.estimate(h, stop)?
                    } else {
                        dicts.estimate_1d(h, stop, self.settings.memory_cap)?
                    }
                } else {
                    SignatureEstimate::new(self.method, Vec::new())
                }
            }
            Method::Music => estimate_music_with_cap(h, &self.smoothing, q(), self.settings.music_grid, self.settings.memory_cap)?,
        };
        Ok(est.with_runtime(start.elapsed().as_secs_f64()))
    }
}

/// Seeded Monte-Carlo protocol.
#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub snr_db: Vec<f64>,
    pub trials: usize,
    pub seed_base: u64,
    pub num_paths: usize,
    pub ranges: SceneRanges,
    pub threads: usize,
}

impl Default for Experiment {
    fn default() -> Self {
        Experiment {
            snr_db: (0..13).map(|k| -25.0 + 5.0 * k as f64).collect(),
            trials: 200,
            seed_base: 0,
            num_paths: 5,
            ranges: SceneRanges::default(),
            threads: 1,
        }
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Noise seed shared by every method at a given `(scene seed, SNR)`.
pub fn noise_seed(scene_seed: u64, snr_db: f64) -> u64 {
    splitmix64(scene_seed ^ splitmix64(snr_db.to_bits()))
}

/// Scene and noisy channel of trial `t` at one SNR.
pub fn trial_input(
    cfg: &SystemConfig,
    exp: &Experiment,
    snr_db: f64,
    t: usize,
) -> Result<(Scene, ChannelMatrix)> {
    let seed = exp.seed_base.wrapping_add(t as u64);
    let scene = random_scene_with(exp.num_paths, cfg, seed, &exp.ranges)?;
    let clean = synthesize_channel(&scene, cfg)?;
    let noisy = add_awgn(&clean, snr_db, noise_seed(seed, snr_db))?;
    Ok((scene, noisy))
}

type TrialResults = Vec<Vec<Result<TrialOutcome>>>;

fn run_trials(
    cfg: &SystemConfig,
    exp: &Experiment,
    estimators: &[Estimator],
    snr_db: f64,
    trials: std::ops::Range<usize>,
) -> Result<TrialResults> {
    let mut out: TrialResults = estimators.iter().map(|_| Vec::new()).collect();
    for t in trials {
        let (scene, h) = trial_input(cfg, exp, snr_db, t)?;
        for (slot, est) in out.iter_mut().zip(estimators) {
            slot.push(
                est.run(&h, Some(scene.len()))
                    .map(|e| TrialOutcome::evaluate(&scene, &e, cfg)),
            );
        }
    }
    Ok(out)
}

/// Runs every method on identical seeded scenes and noise at each SNR.
/// Output is ordered by method, then SNR. Estimator failures are counted in
/// `failed_trials` and excluded from the aggregates.
pub fn monte_carlo(
    cfg: &SystemConfig,
    methods: &[Method],
    settings: &EstimatorSettings,
    exp: &Experiment,
) -> Result<Vec<MetricsSummary>> {
    if exp.trials == 0 {
        return Err(Error::config("trials must be at least 1"));
    }
    let estimators = methods
        .iter()
        .map(|&m| Estimator::prepare(m, settings, cfg.num_antennas(), cfg.num_subcarriers()))
        .collect::<Result<Vec<_>>>()?;
    let threads = exp.threads.clamp(1, exp.trials);

    let mut per_method: Vec<Vec<MetricsSummary>> = methods.iter().map(|_| Vec::new()).collect();
    for &snr in &exp.snr_db {
        let chunk = exp.trials.div_ceil(threads);
        let parts: Vec<Result<TrialResults>> = if threads == 1 {
            vec![run_trials(cfg, exp, &estimators, snr, 0..exp.trials)]
        } else {
            std::thread::scope(|scope| {
                let handles: Vec<_> = (0..threads)
                    .map(|k| {
                        let range = (k * chunk)..((k + 1) * chunk).min(exp.trials);
                        let estimators = &estimators;
                        scope.spawn(move || run_trials(cfg, exp, estimators, snr, range))
                    })
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("trial worker panicked"))
                    .collect()
            })
        };
        let mut merged: TrialResults = methods.iter().map(|_| Vec::new()).collect();
        for part in parts {
            for (dst, src) in merged.iter_mut().zip(part?) {
                dst.extend(src);
            }
        }
        for ((slot, &method), results) in per_method.iter_mut().zip(methods).zip(merged) {
            let total = results.len();
            let ok: Vec<TrialOutcome> = results.into_iter().filter_map(|r| r.ok()).collect();
            let failed = total - ok.len();
            slot.push(summarize(method, snr, exp.seed_base, &ok, failed));
        }
    }
    Ok(per_method.into_iter().flatten().collect())
}

/// One cell of the runtime table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuntimeCell {
    pub method: Method,
    pub size: usize,
    pub num_paths: usize,
    pub median_s: Option<f64>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuntimeTable {
    pub sizes: Vec<usize>,
    pub q_list: Vec<usize>,
    pub methods: Vec<Method>,
    pub cells: Vec<RuntimeCell>,
}

impl RuntimeTable {
    pub fn get(&self, method: Method, size: usize, q: usize) -> Option<f64> {
        self.cells
            .iter()
            .find(|c| c.method == method && c.size == size && c.num_paths == q)
            .and_then(|c| c.median_s)
    }

    /// One row per method, one column per `(Q, size)`; absent cells empty.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let mut header = vec!["method".to_string()];
        for q in &self.q_list {
            for n in &self.sizes {
                header.push(format!("q{q}_{n}x{n}"));
            }
        }
        writeln!(w, "{}", header.join(","))?;
        for &m in &self.methods {
            let mut row = vec![m.to_string()];
            for &q in &self.q_list {
                for &n in &self.sizes {
                    row.push(self.get(m, n, q).map(|v| format!("{v:.6}")).unwrap_or_default());
                }
            }
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Runtime benchmark settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RuntimeSpec {
    pub sizes: Vec<usize>,
    pub q_list: Vec<usize>,
    pub methods: Vec<Method>,
    pub repetitions: usize,
    pub seed: u64,
    pub snr_db: f64,
    /// Cells whose projected single-run time exceeds this are skipped.
    pub max_projected_s: f64,
}

impl Default for RuntimeSpec {
    fn default() -> Self {
        RuntimeSpec {
            sizes: vec![64, 128, 256],
            q_list: vec![5, 10],
            methods: vec![Method::Rotation, Method::Omp2d, Method::Music],
            repetitions: 5,
            seed: 0,
            snr_db: 20.0,
            max_projected_s: 300.0,
        }
    }
}

/// Scaling exponent in the grid side `N` used to project run time from a
/// smaller size. MUSIC eigen-decomposes an `(N/2)^2`-dimensional covariance.
fn projection_exponent(method: Method) -> i32 {
    match method {
        Method::Music | Method::Omp1d => 6,
        _ => 2,
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Median-of-`repetitions` wall times per `(method, size, Q)` on fixed
/// seeded inputs, run sequentially. Dictionary construction and channel
/// synthesis are excluded from the timings.
pub fn runtime_table(cfg: &SystemConfig, spec: &RuntimeSpec, settings: &EstimatorSettings) -> Result<RuntimeTable> {
    if spec.repetitions == 0 {
        return Err(Error::config("repetitions must be at least 1"));
    }
    let mut cells = Vec::new();
    for &method in &spec.methods {
        let mut last: Option<(usize, f64)> = None;
        for &n in &spec.sizes {
            let sized = cfg.with_grid(n, n)?;
            let projected = last.map(|(n0, t0)| t0 * (n as f64 / n0 as f64).powi(projection_exponent(method)));
            let estimator = if projected.is_some_and(|p| p > spec.max_projected_s) {
                Err(format!(
                    "skipped: projected {:.0} s exceeds {:.0} s",
                    projected.unwrap(),
                    spec.max_projected_s
                ))
            } else {
                Estimator::prepare(method, settings, n, n).map_err(|e| e.to_string())
            };
            for &q in &spec.q_list {
                let cell = |median_s, note| RuntimeCell {
                    method,
                    size: n,
                    num_paths: q,
                    median_s,
                    note,
                };
                let est = match &estimator {
                    Ok(e) => e,
                    Err(note) => {
                        cells.push(cell(None, Some(note.clone())));
                        continue;
                    }
                };
                let exp = Experiment {
                    snr_db: vec![spec.snr_db],
                    trials: 1,
                    seed_base: spec.seed,
                    num_paths: q,
                    ranges: SceneRanges::default(),
                    threads: 1,
                };
                let (scene, h) = trial_input(&sized, &exp, spec.snr_db, 0)?;
                let mut times = Vec::with_capacity(spec.repetitions);
                let mut failure = None;
                for _ in 0..spec.repetitions {
                    match est.run(&h, Some(scene.len())) {
                        Ok(e) => times.push(e.runtime_s),
                        Err(e) => {
                            failure = Some(e.to_string());
                            break;
                        }
                    }
                }
                match failure {
                    Some(note) => cells.push(cell(None, Some(note))),
                    None => {
                        let m = median(times);
                        last = Some((n, last.map_or(m, |(n0, t0)| if n0 == n { t0.max(m) } else { m })));
                        cells.push(cell(Some(m), None));
                    }
                }
            }
        }
    }
    Ok(RuntimeTable {
        sizes: spec.sizes.clone(),
        q_list: spec.q_list.clone(),
        methods: spec.methods.clone(),
        cells,
    })
}
