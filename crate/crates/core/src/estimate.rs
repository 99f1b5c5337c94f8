use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Dft,
    Rotation,
    Omp2d,
    Omp1d,
    Music,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Dft,
        Method::Rotation,
        Method::Omp2d,
        Method::Omp1d,
        Method::Music,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Dft => "dft",
            Method::Rotation => "rotation",
            Method::Omp2d => "omp2d",
            Method::Omp1d => "omp1d",
            Method::Music => "music",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::config(format!("unknown method `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathEstimate {
    pub gain: Complex64,
    pub theta_norm: f64,
    pub tau_norm: f64,
}

/// Estimated signature: `Q_hat` paths, strongest first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignatureEstimate {
    pub method: Method,
    pub paths: Vec<PathEstimate>,
    pub runtime_s: f64,
}

impl SignatureEstimate {
    /// Sorts paths by descending `|gain|`; ties keep the input order.
    pub fn new(method: Method, mut paths: Vec<PathEstimate>) -> Self {
        paths.sort_by(|a, b| b.gain.norm().total_cmp(&a.gain.norm()));
        SignatureEstimate {
            method,
            paths,
            runtime_s: 0.0,
        }
    }

    pub fn num_paths(&self) -> usize {
        self.paths.len()
    }

    pub fn with_runtime(mut self, runtime_s: f64) -> Self {
        self.runtime_s = runtime_s.max(0.0);
        self
    }
}
