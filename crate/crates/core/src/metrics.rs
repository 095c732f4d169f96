//! Phase-aware recovery error and the success rule.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::datagen::SignalMatrix;
use crate::error::{Error, Result};
use crate::init::InitKind;
use crate::linalg::CVector;

/// Default success threshold on the relative error.
pub const SUCCESS_THRESHOLD: f64 = 0.1;

/// `min_φ ‖x - e^{jφ} x̂‖² = ‖x‖² + ‖x̂‖² - 2|x^H x̂|`.
pub fn phase_aligned_sqerror(x: &CVector, xhat: &CVector) -> f64 {
    assert_eq!(x.len(), xhat.len(), "vectors must have equal length");
    let v = x.norm_squared() + xhat.norm_squared() - 2.0 * x.dotc(xhat).norm();
    v.max(0.0)
}

/// The rotation `φ* = -arg(x^H x̂)` that attains [`phase_aligned_sqerror`].
pub fn best_alignment_phase(x: &CVector, xhat: &CVector) -> f64 {
    -x.dotc(xhat).arg()
}

/// Column-wise phase-aligned squared error over `‖X‖_F²`.
pub fn relative_error(x: &SignalMatrix, xhat: &SignalMatrix) -> Result<f64> {
    if x.x.shape() != xhat.x.shape() {
        return Err(Error::DimensionMismatch(format!(
            "truth is {:?}, estimate is {:?}",
            x.x.shape(),
            xhat.x.shape()
        )));
    }
    let denom = x.x.norm_squared();
    if denom == 0.0 {
        return Err(Error::ZeroTruth);
    }
    let num: f64 = (0..x.m())
        .map(|m| phase_aligned_sqerror(&x.column(m), &xhat.column(m)))
        .sum();
    Ok(num / denom)
}

/// Strict: `re < threshold`.
pub fn is_success(re: f64, threshold: f64) -> bool {
    re < threshold
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algo {
    /// Variational EM under the Gaussian-Wishart prior.
    Vbl,
    /// Alternating-minimization baseline.
    Am,
}

impl Algo {
    pub fn as_str(self) -> &'static str {
        match self {
            Algo::Vbl => "vbl",
            Algo::Am => "am",
        }
    }
}

impl fmt::Display for Algo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algo {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vbl" => Ok(Algo::Vbl),
            "am" => Ok(Algo::Am),
            other => Err(Error::InvalidConfig(format!("unknown algorithm `{other}`"))),
        }
    }
}

/// One experiment outcome. Serializes to one row of the results CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub algo: Algo,
    pub init: InitKind,
    pub seed: u64,
    pub trial: u64,
    pub n: usize,
    pub m: usize,
    pub p: usize,
    pub r: usize,
    pub iters: usize,
    pub converged: bool,
    /// `None` when the algorithm failed numerically; written as an empty field.
    pub re: Option<f64>,
    pub success: bool,
    pub runtime_ms: f64,
    #[serde(skip, default = "default_threshold")]
    pub threshold: f64,
    #[serde(skip)]
    pub failure: Option<String>,
}

fn default_threshold() -> f64 {
    SUCCESS_THRESHOLD
}

/// Exact results-CSV header.
pub const CSV_HEADER: [&str; 13] = [
    "algo",
    "init",
    "seed",
    "trial",
    "n",
    "m",
    "p",
    "r",
    "iters",
    "converged",
    "re",
    "success",
    "runtime_ms",
];

impl TrialRecord {
    /// Same record with `runtime_ms` cleared, for reproducibility comparisons.
    pub fn without_runtime(&self) -> TrialRecord {
        TrialRecord {
            runtime_ms: 0.0,
            ..self.clone()
        }
    }
}
