//! `dtek` command-line front end: scene synthesis, single-shot estimation,
//! SNR sweeps and the runtime table.
//!
//! Precedence for every setting is: command-line flag, then config file,
//! then the library default. The fully resolved configuration is written
//! next to every file output as `<name>.manifest.json`.
//!
//! Exit codes: 0 success, 2 configuration / input error, 3 numerical
//! failure, 4 resource cap exceeded.

mod output;

use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use dtek::channel::{add_awgn, denormalize, synthesize_channel};
use dtek::config::{SceneConfig, SnrList};
use dtek::eval::{monte_carlo, noise_seed, runtime_table, write_metrics_csv, Estimator};
use dtek::{ChannelMatrix, Error, Method, RotationGridSpec, RunConfig, ThresholdPolicy};

use output::{manifest_path, provenance, write_atomic, write_json};

#[derive(Parser)]
#[command(name = "dtek", version, about = "Joint DoA/ToA signature estimation for multi-antenna OFDM channels")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a channel matrix file from the config's scene, or from a
    /// seeded random scene when the config has no `[scene]` section.
    Synth {
        config: PathBuf,
        /// Output channel file; defaults to `[output] channel`.
        #[arg(short, long)]
        out: Option<PathBuf>,
        /// Noise seed, and random-scene seed when no scene is given.
        #[arg(long)]
        seed: Option<u64>,
        /// Add white noise at this SNR (dB).
        #[arg(long, allow_hyphen_values = true)]
        snr_db: Option<f64>,
        /// Draw random delays over the full configured range, past 1/delta_f.
        #[arg(long)]
        allow_delay_wrap: bool,
    },
    /// Estimate the signature of a channel file; prints JSON to stdout.
    Estimate {
        channel: PathBuf,
        /// Config supplying `[system]` and `[method]`; the system's grid
        /// must match the channel file.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        method: Option<Method>,
        /// Fixed path count for OMP and MUSIC; default is the number of
        /// coarse peaks above the threshold.
        #[arg(long)]
        paths: Option<usize>,
        #[command(flatten)]
        est: EstimatorFlags,
    },
    /// Seeded Monte-Carlo sweep over SNR; writes one CSV row per (method, SNR).
    Sweep {
        config: PathBuf,
        /// Output CSV; defaults to `[output] sweep_csv`.
        #[arg(short, long)]
        out: Option<PathBuf>,
        /// Comma-separated methods.
        #[arg(long, value_delimiter = ',')]
        method: Vec<Method>,
        #[command(flatten)]
        exp: ExperimentFlags,
        #[command(flatten)]
        est: EstimatorFlags,
    },
    /// Median wall time per (method, size, Q) on fixed seeded inputs.
    RuntimeTable {
        config: PathBuf,
        /// Output CSV; defaults to `[output] runtime_csv`.
        #[arg(short, long)]
        out: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        method: Vec<Method>,
        /// Comma-separated grid sides N (N x N channels).
        #[arg(long, value_delimiter = ',')]
        sizes: Vec<usize>,
        /// Comma-separated path counts.
        #[arg(long, value_delimiter = ',')]
        q: Vec<usize>,
        #[arg(long)]
        repetitions: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        est: EstimatorFlags,
    },
}

#[derive(Args, Default)]
struct EstimatorFlags {
    /// Rotation stage grid sizes, e.g. `11,5`.
    #[arg(long, value_delimiter = ',')]
    stages: Vec<usize>,
    /// OMP dictionary points per axis.
    #[arg(long)]
    dict_points: Option<usize>,
    /// MUSIC search grid points per axis.
    #[arg(long)]
    music_grid: Option<usize>,
    /// `relative:R`, `cfar:P` or `hybrid:P:R`.
    #[arg(long)]
    threshold: Option<ThresholdPolicy>,
}

#[derive(Args, Default)]
struct ExperimentFlags {
    /// SNR range `lo:hi:step` in dB.
    #[arg(long, allow_hyphen_values = true)]
    snr: Option<String>,
    #[arg(long)]
    trials: Option<usize>,
    /// Worker threads; default is all host cores.
    #[arg(long)]
    threads: Option<usize>,
    /// Seed of trial 0; trial t uses seed + t.
    #[arg(long)]
    seed: Option<u64>,
    /// Paths per random scene.
    #[arg(long)]
    num_paths: Option<usize>,
    #[arg(long)]
    allow_delay_wrap: bool,
}

impl EstimatorFlags {
    fn apply(&self, cfg: &mut RunConfig) -> dtek::Result<()> {
        let s = &mut cfg.method.settings;
        if !self.stages.is_empty() {
            s.stages = RotationGridSpec::new(&self.stages)?;
        }
        if let Some(p) = self.dict_points {
            s.dict_points = p;
        }
        if let Some(p) = self.music_grid {
            s.music_grid = p;
        }
        if let Some(t) = self.threshold {
            s.threshold = t;
        }
        Ok(())
    }
}

impl ExperimentFlags {
    fn apply(&self, cfg: &mut RunConfig) {
        let e = &mut cfg.experiment;
        if let Some(snr) = &self.snr {
            e.snr_db = SnrList::Range(snr.clone());
        }
        if let Some(t) = self.trials {
            e.trials = t;
        }
        if let Some(t) = self.threads {
            e.threads = Some(t);
        }
        if let Some(s) = self.seed {
            e.seed_base = s;
        }
        if let Some(q) = self.num_paths {
            e.num_paths = q;
        }
        if self.allow_delay_wrap {
            e.ranges.allow_delay_wrap = true;
        }
    }
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::MemoryCap { .. } => 4,
        Error::SingularGram { .. } | Error::Rank { .. } | Error::NoHits => 3,
        _ => 2,
    }
}

fn output_path(flag: Option<PathBuf>, configured: &Option<PathBuf>, key: &str) -> dtek::Result<PathBuf> {
    flag.or_else(|| configured.clone())
        .ok_or_else(|| Error::Config(format!("no output path: pass --out or set [output] {key}")))
}

fn config_json(cfg: &RunConfig) -> dtek::Result<Value> {
    serde_json::to_value(cfg).map_err(|e| Error::Format(e.to_string()))
}

fn cmd_synth(
    config: &Path,
    out: Option<PathBuf>,
    seed: Option<u64>,
    snr_db: Option<f64>,
    allow_delay_wrap: bool,
) -> dtek::Result<()> {
    let mut cfg = RunConfig::from_path(config)?;
    if allow_delay_wrap {
        cfg.experiment.ranges.allow_delay_wrap = true;
    }
    let out = output_path(out, &cfg.output.channel, "channel")?;
    // Resolve a random scene into an explicit one so the manifest records it.
    let resolved = match cfg.scene.take() {
        Some(mut sc) => {
            if let Some(s) = seed {
                sc.seed = s;
            }
            sc.snr_db = snr_db.or(sc.snr_db);
            sc
        }
        None => {
            let s = seed.unwrap_or(cfg.experiment.seed_base);
            SceneConfig {
                scene: cfg.scene_or_random(s)?,
                snr_db,
                seed: s,
            }
        }
    };
    cfg.scene = Some(resolved.clone());
    cfg.validate()?;

    let clean = synthesize_channel(&resolved.scene, &cfg.system)?;
    let h = match resolved.snr_db {
        Some(snr) => add_awgn(&clean, snr, noise_seed(resolved.seed, snr))?,
        None => clean,
    };
    write_atomic(&out, |w| h.write_to(w))?;
    let mut manifest = provenance("synth");
    manifest["config"] = config_json(&cfg)?;
    manifest["seed"] = json!(resolved.seed);
    manifest["noise_variance"] = json!(h.noise_variance);
    write_json(&manifest_path(&out), &manifest)?;
    eprintln!(
        "wrote {} ({}x{}, {} scatterers)",
        out.display(),
        h.num_antennas(),
        h.num_subcarriers(),
        resolved.scene.len()
    );
    Ok(())
}

fn cmd_estimate(
    channel: &Path,
    config: Option<&Path>,
    method: Option<Method>,
    paths: Option<usize>,
    flags: &EstimatorFlags,
) -> dtek::Result<()> {
    let h = ChannelMatrix::read_from(BufReader::new(File::open(channel)?))?;
    let (r, s) = (h.num_antennas(), h.num_subcarriers());
    let mut cfg = match config {
        Some(p) => {
            let cfg = RunConfig::from_path(p)?;
            if (cfg.system.num_antennas(), cfg.system.num_subcarriers()) != (r, s) {
                return Err(Error::Dimension(format!(
                    "config grid {}x{} does not match channel {r}x{s}",
                    cfg.system.num_antennas(),
                    cfg.system.num_subcarriers()
                )));
            }
            cfg
        }
        None => {
            let mut cfg = RunConfig::default();
            cfg.system = cfg.system.with_grid(r, s)?;
            cfg
        }
    };
    if let Some(m) = method {
        cfg.method.kind = m;
    }
    if paths.is_some() {
        cfg.method.settings.paths = paths;
    }
    flags.apply(&mut cfg)?;
    cfg.validate()?;

    let estimator = Estimator::prepare(cfg.method.kind, &cfg.method.settings, r, s)?;
    let est = estimator.run(&h, None)?;
    let paths: Vec<Value> = est
        .paths
        .iter()
        .map(|p| {
            let physical = denormalize(p.theta_norm, p.tau_norm, &cfg.system).ok();
            json!({
                "gain": [p.gain.re, p.gain.im],
                "theta_norm": p.theta_norm,
                "tau_norm": p.tau_norm,
                "doa_deg": physical.map(|x| x.0),
                "toa_s": physical.map(|x| x.1),
            })
        })
        .collect();
    let doc = json!({
        "method": est.method,
        "runtime_s": est.runtime_s,
        "num_paths": est.num_paths(),
        "paths": paths,
        "channel": {
            "path": channel,
            "num_antennas": r,
            "num_subcarriers": s,
            "noise_variance": h.noise_variance,
        },
        "system": cfg.system,
        "settings": cfg.method.settings,
        "provenance": provenance("estimate"),
    });
    let mut stdout = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut stdout, &doc).map_err(|e| Error::Format(e.to_string()))?;
    writeln!(stdout)?;
    Ok(())
}

fn cmd_sweep(
    config: &Path,
    out: Option<PathBuf>,
    methods: Vec<Method>,
    exp_flags: &ExperimentFlags,
    est_flags: &EstimatorFlags,
) -> dtek::Result<()> {
    let mut cfg = RunConfig::from_path(config)?;
    exp_flags.apply(&mut cfg);
    est_flags.apply(&mut cfg)?;
    if !methods.is_empty() {
        cfg.experiment.methods = methods;
    }
    let out = output_path(out, &cfg.output.sweep_csv, "sweep_csv")?;
    cfg.validate()?;
    let exp = cfg.experiment.resolve()?;
    cfg.experiment.threads = Some(exp.threads);

    let start = Instant::now();
    let rows = monte_carlo(&cfg.system, &cfg.experiment.methods, &cfg.method.settings, &exp)?;
    let wall = start.elapsed().as_secs_f64();
    write_atomic(&out, |w| write_metrics_csv(&rows, w))?;

    let mut manifest = provenance("sweep");
    manifest["config"] = config_json(&cfg)?;
    manifest["seeds"] = json!({
        "seed_base": exp.seed_base,
        "trials": exp.trials,
        "scene_seed": "seed_base + trial",
        "noise_seed": "splitmix64(scene_seed ^ splitmix64(bits(snr_db)))",
    });
    manifest["timing"] = json!({
        "wall_time_s": wall,
        "note": "per-trial runtimes exclude scene synthesis, noise and dictionary construction",
    });
    manifest["runtimes"] = rows
        .iter()
        .map(|r| {
            json!({
                "method": r.method,
                "snr_db": r.snr_db,
                "mean_runtime_s": r.mean_runtime_s,
                "failed_trials": r.failed_trials,
            })
        })
        .collect();
    write_json(&manifest_path(&out), &manifest)?;
    let failed: usize = rows.iter().map(|r| r.failed_trials).sum();
    if failed > 0 {
        eprintln!("warning: {failed} trial runs failed and were excluded");
    }
    eprintln!("wrote {} ({} rows, {wall:.1} s)", out.display(), rows.len());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_runtime_table(
    config: &Path,
    out: Option<PathBuf>,
    methods: Vec<Method>,
    sizes: Vec<usize>,
    q: Vec<usize>,
    repetitions: Option<usize>,
    seed: Option<u64>,
    flags: &EstimatorFlags,
) -> dtek::Result<()> {
    let mut cfg = RunConfig::from_path(config)?;
    flags.apply(&mut cfg)?;
    let spec = &mut cfg.runtime;
    if !methods.is_empty() {
        spec.methods = methods;
    }
    if !sizes.is_empty() {
        spec.sizes = sizes;
    }
    if !q.is_empty() {
        spec.q_list = q;
    }
    if let Some(r) = repetitions {
        spec.repetitions = r;
    }
    if let Some(s) = seed {
        spec.seed = s;
    }
    let out = output_path(out, &cfg.output.runtime_csv, "runtime_csv")?;
    cfg.validate()?;

    let table = runtime_table(&cfg.system, &cfg.runtime, &cfg.method.settings)?;
    write_atomic(&out, |w| table.write_csv(w))?;
    let mut manifest = provenance("runtime-table");
    manifest["config"] = config_json(&cfg)?;
    manifest["seed"] = json!(cfg.runtime.seed);
    manifest["cells"] = serde_json::to_value(&table.cells).map_err(|e| Error::Format(e.to_string()))?;
    manifest["timing"] = json!({
        "statistic": "median",
        "note": "wall time of the estimator call only, run sequentially",
    });
    write_json(&manifest_path(&out), &manifest)?;
    for cell in table.cells.iter().filter(|c| c.median_s.is_none()) {
        eprintln!(
            "{} {}x{} Q={}: {}",
            cell.method,
            cell.size,
            cell.size,
            cell.num_paths,
            cell.note.as_deref().unwrap_or("absent")
        );
    }
    eprintln!("wrote {}", out.display());
    Ok(())
}

fn run(cli: Cli) -> dtek::Result<()> {
    match cli.command {
        Command::Synth {
            config,
            out,
            seed,
            snr_db,
            allow_delay_wrap,
        } => cmd_synth(&config, out, seed, snr_db, allow_delay_wrap),
        Command::Estimate {
            channel,
            config,
            method,
            paths,
            est,
        } => cmd_estimate(&channel, config.as_deref(), method, paths, &est),
        Command::Sweep {
            config,
            out,
            method,
            exp,
            est,
        } => cmd_sweep(&config, out, method, &exp, &est),
        Command::RuntimeTable {
            config,
            out,
            method,
            sizes,
            q,
            repetitions,
            seed,
            est,
        } => cmd_runtime_table(&config, out, method, sizes, q, repetitions, seed, &est),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::MemoryCap { required: 2, cap: 1 }), 4);
        assert_eq!(exit_code(&Error::Rank { requested: 3, dim: 2 }), 3);
        assert_eq!(exit_code(&Error::SingularGram { cond: 1e20 }), 3);
        assert_eq!(exit_code(&Error::Config("x".into())), 2);
        assert_eq!(exit_code(&Error::Format("x".into())), 2);
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }

    #[test]
    fn flags_override_config() {
        let mut cfg = RunConfig::default();
        let flags = EstimatorFlags {
            stages: vec![11, 11],
            dict_points: Some(64),
            ..Default::default()
        };
        flags.apply(&mut cfg).unwrap();
        assert_eq!(cfg.method.settings.stages, RotationGridSpec::new(&[11, 11]).unwrap());
        assert_eq!(cfg.method.settings.dict_points, 64);
        let exp = ExperimentFlags {
            snr: Some("0:10:5".into()),
            trials: Some(3),
            ..Default::default()
        };
        exp.apply(&mut cfg);
        assert_eq!(cfg.experiment.resolve().unwrap().snr_db, vec![0.0, 5.0, 10.0]);
        assert_eq!(cfg.experiment.trials, 3);
    }
}
