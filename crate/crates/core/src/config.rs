//! TOML run configuration shared by the command-line tools.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::channel::{random_scene_with, Scene, SceneRanges, SystemConfig};
use crate::error::{Error, Result};
use crate::estimate::Method;
use crate::eval::{EstimatorSettings, Experiment, RuntimeSpec};

/// SNR points given either as a list or as an inclusive `"lo:hi:step"` range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SnrList {
    Values(Vec<f64>),
    Range(String),
}

impl Default for SnrList {
    fn default() -> Self {
        SnrList::Range("-25:35:5".into())
    }
}

impl SnrList {
    pub fn resolve(&self) -> Result<Vec<f64>> {
        let values = match self {
            SnrList::Values(v) => v.clone(),
            SnrList::Range(text) => parse_snr_range(text)?,
        };
        if values.is_empty() {
            return Err(Error::config("SNR list is empty"));
        }
        if values.iter().any(|v| v.is_nan()) {
            return Err(Error::config("SNR values must not be NaN"));
        }
        Ok(values)
    }
}

/// Parses `lo:hi:step` into `lo, lo + step, ...` up to and including `hi`.
pub fn parse_snr_range(text: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = text.split(':').map(str::trim).collect();
    let bad = || Error::config(format!("SNR range {text:?} is not lo:hi:step"));
    let [lo, hi, step] = parts.as_slice() else {
        return Err(bad());
    };
    let (lo, hi, step): (f64, f64, f64) = (
        lo.parse().map_err(|_| bad())?,
        hi.parse().map_err(|_| bad())?,
        step.parse().map_err(|_| bad())?,
    );
    if !(lo.is_finite() && hi.is_finite() && step.is_finite() && step > 0.0 && hi >= lo) {
        return Err(bad());
    }
    let count = ((hi - lo) / step + 1e-9).floor() as usize + 1;
    Ok((0..count).map(|k| lo + step * k as f64).collect())
}

/// Explicit scene for `synth`; absent means a random scene from `[experiment]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "toml::Table")]
pub struct SceneConfig {
    #[serde(flatten)]
    pub scene: Scene,
    /// Noise added after synthesis; absent means noiseless.
    pub snr_db: Option<f64>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "toml::Table")]
pub struct MethodConfig {
    pub kind: Method,
    #[serde(flatten)]
    pub settings: EstimatorSettings,
}

// `deny_unknown_fields` is ignored on flattened structs, so the sections
// above split off their own keys and hand the remainder to a strict
// deserializer.
fn take<T: serde::de::DeserializeOwned>(t: &mut toml::Table, key: &str) -> Result<Option<T>> {
    t.remove(key)
        .map(|v| v.try_into().map_err(|e: toml::de::Error| Error::config(format!("`{key}`: {e}"))))
        .transpose()
}

fn rest<T: serde::de::DeserializeOwned>(t: toml::Table, section: &str) -> Result<T> {
    toml::Value::Table(t)
        .try_into()
        .map_err(|e: toml::de::Error| Error::config(format!("[{section}]: {e}")))
}

impl TryFrom<toml::Table> for SceneConfig {
    type Error = Error;

    fn try_from(mut t: toml::Table) -> Result<Self> {
        Ok(SceneConfig {
            snr_db: take(&mut t, "snr_db")?,
            seed: take(&mut t, "seed")?.unwrap_or(0),
            scene: rest(t, "scene")?,
        })
    }
}

impl TryFrom<toml::Table> for MethodConfig {
    type Error = Error;

    fn try_from(mut t: toml::Table) -> Result<Self> {
        Ok(MethodConfig {
            kind: take(&mut t, "kind")?.unwrap_or(Method::Rotation),
            settings: rest(t, "method")?,
        })
    }
}

impl Default for MethodConfig {
    fn default() -> Self {
        MethodConfig {
            kind: Method::Rotation,
            settings: EstimatorSettings::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub snr_db: SnrList,
    pub trials: usize,
    pub seed_base: u64,
    pub num_paths: usize,
    pub methods: Vec<Method>,
    pub ranges: SceneRanges,
    /// Worker threads; absent means all host cores.
    pub threads: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            snr_db: SnrList::default(),
            trials: 200,
            seed_base: 0,
            num_paths: 5,
            methods: vec![Method::Dft, Method::Rotation, Method::Omp2d, Method::Music],
            ranges: SceneRanges::default(),
            threads: None,
        }
    }
}

impl ExperimentConfig {
    pub fn resolve(&self) -> Result<Experiment> {
        if self.trials == 0 {
            return Err(Error::config("trials must be at least 1"));
        }
        if self.num_paths == 0 {
            return Err(Error::config("num_paths must be at least 1"));
        }
        if self.methods.is_empty() {
            return Err(Error::config("no methods selected"));
        }
        let threads = match self.threads {
            Some(0) => return Err(Error::config("threads must be at least 1")),
            Some(t) => t,
            None => std::thread::available_parallelism().map_or(1, |n| n.get()),
        };
        Ok(Experiment {
            snr_db: self.snr_db.resolve()?,
            trials: self.trials,
            seed_base: self.seed_base,
            num_paths: self.num_paths,
            ranges: self.ranges.clone(),
            threads,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub channel: Option<PathBuf>,
    pub sweep_csv: Option<PathBuf>,
    pub runtime_csv: Option<PathBuf>,
}

/// Complete run description. Every section except `[system]` is optional.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub system: SystemConfig,
    #[serde(default)]
    pub scene: Option<SceneConfig>,
    #[serde(default)]
    pub method: MethodConfig,
    #[serde(default)]
    pub experiment: ExperimentConfig,
    #[serde(default)]
    pub runtime: RuntimeSpec,
    #[serde(default)]
    pub output: OutputConfig,
}

impl RunConfig {
    /// Parses and validates; parse errors carry line and column.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.method.settings.validate()?;
        self.experiment.resolve()?;
        let (r, s) = (self.system.num_antennas(), self.system.num_subcarriers());
        if let Some(sm) = &self.method.settings.smoothing {
            sm.validate(r, s, 0)?;
        }
        if let Some(sc) = &self.scene {
            if sc.snr_db.is_some_and(f64::is_nan) {
                return Err(Error::config("scene snr_db must not be NaN"));
            }
        }
        if self.runtime.repetitions == 0 || self.runtime.sizes.iter().any(|&n| n < 2) {
            return Err(Error::config("runtime table needs repetitions >= 1 and sizes >= 2"));
        }
        if self.runtime.q_list.contains(&0) {
            return Err(Error::config("runtime q_list entries must be at least 1"));
        }
        Ok(())
    }

    /// The explicit scene, or a seeded random one drawn with `[experiment]`'s
    /// path count and ranges.
    pub fn scene_or_random(&self, seed: u64) -> Result<Scene> {
        match &self.scene {
            Some(sc) => Ok(sc.scene.clone()),
            None => random_scene_with(self.experiment.num_paths, &self.system, seed, &self.experiment.ranges),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn snr_range_parsing() {
        assert_eq!(parse_snr_range("-25:35:5").unwrap().len(), 13);
        assert_eq!(parse_snr_range("0:1:0.5").unwrap(), vec![0.0, 0.5, 1.0]);
        assert_eq!(parse_snr_range("3:3:1").unwrap(), vec![3.0]);
        for bad in ["1:0:1", "0:1:0", "0:1", "a:b:c", "0:1:-1"] {
            assert!(parse_snr_range(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = RunConfig::from_toml_str(
            "[system]\ncarrier_freq_hz = 73e9\nbandwidth_hz = 1e9\nnum_antennas = 32\nnum_subcarriers = 32\n",
        )
        .unwrap();
        assert_eq!(cfg.system.num_antennas(), 32);
        assert_eq!(cfg.experiment.trials, 200);
        assert_eq!(cfg.experiment.resolve().unwrap().snr_db.len(), 13);
        assert!(cfg.scene.is_none());
    }

    #[test]
    fn full_config_round_trips() {
        let text = r#"
[system]
carrier_freq_hz = 73e9
bandwidth_hz = 1e9
num_antennas = 32
num_subcarriers = 32

[scene]
seed = 4
scatterers = [
  { gain = [0.5, 0.5], theta_norm = 0.25, tau_norm = 0.5 },
]

[method]
kind = "omp2d"
dict_points = 64
stages = [11, [7, 5]]
threshold = { kind = "relative", ratio = 0.2 }
omp_stop = { kind = "residual_ratio", ratio = 0.01 }

[experiment]
snr_db = [0.0, 10.0]
trials = 3
methods = ["dft", "rotation"]
threads = 1
"#;
        let cfg = RunConfig::from_toml_str(text).unwrap();
        assert_eq!(cfg.method.kind, Method::Omp2d);
        assert_eq!(cfg.method.settings.dict_points, 64);
        assert_eq!(cfg.scene.as_ref().unwrap().scene.len(), 1);
        let again = RunConfig::from_toml_str(&cfg.to_toml_string().unwrap()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn unknown_keys_rejected_with_location() {
        let err = RunConfig::from_toml_str("[system]\ncarrier_freq_hz = 73e9\nbandwith_hz = 1e9\n").unwrap_err();
        let msg = err.to_string();
        assert!(matches!(err, Error::Config(_)));
        assert!(msg.contains("line"), "{msg}");
        assert!(RunConfig::from_toml_str("[bogus]\nx = 1\n").is_err());
        assert!(RunConfig::from_toml_str("[experiment]\ntrials = 0\n").is_err());
        // Flattened sections must still reject typos.
        let err = RunConfig::from_toml_str("[method]\nknid = \"dft\"\n").unwrap_err();
        assert!(err.to_string().contains("knid"), "{err}");
        let err = RunConfig::from_toml_str("[scene]\nscaterers = []\n").unwrap_err();
        assert!(err.to_string().contains("scaterers"), "{err}");
        assert!(RunConfig::from_toml_str("[method]\nkind = \"fft\"\n").is_err());
    }
}
