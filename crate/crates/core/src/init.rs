//! Starting points: joint spectral initialization and random initialization.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::datagen::{MeasurementSet, SignalMatrix};
use crate::error::{Error, Result};
use crate::linalg::{sample_cnormal, top_eigpairs, CMatrix, SeededRng, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitKind {
    Spectral,
    /// i.i.d. CN(0, 1) entries.
    Random,
}

impl InitKind {
    pub fn as_str(self) -> &'static str {
        match self {
            InitKind::Spectral => "spectral",
            InitKind::Random => "random",
        }
    }
}

impl fmt::Display for InitKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for InitKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "spectral" => Ok(InitKind::Spectral),
            "random" => Ok(InitKind::Random),
            other => Err(Error::InvalidConfig(format!("unknown init kind `{other}`"))),
        }
    }
}

/// Distribution used by [`random_init`], recorded alongside sweep output.
pub const RANDOM_INIT_DISTRIBUTION: &str = "iid CN(0,1) entries";

/// Output of [`spectral_init`].
#[derive(Debug, Clone)]
pub struct SpectralInit {
    pub estimate: SignalMatrix,
    /// Shared `N x r` subspace estimate `Û`.
    pub subspace: CMatrix,
    /// Set when every magnitude is zero; the estimate is then the zero matrix.
    pub degenerate: bool,
}

/// `(1/P) Σ_p y²_{p,m} a_{p,m} a_{p,m}^H = (1/P) A_m^H diag(y_m²) A_m`.
fn weighted_outer(ms: &MeasurementSet, m: usize) -> CMatrix {
    let a = ms.a(m);
    let y = ms.y().column(m);
    let mut weighted = a.clone();
    for (p, &yp) in y.iter().enumerate() {
        let w = C64::new(yp * yp, 0.0);
        for v in weighted.row_mut(p).iter_mut() {
            *v *= w;
        }
    }
    a.ad_mul(&weighted) / C64::new(ms.p() as f64, 0.0)
}

/// Joint spectral initialization.
///
/// `Û` holds the top-`r` eigenvectors of `S = (1/(MP)) Σ_{m,p} y² a a^H`. Each column is
/// then `s_m Û ĝ_m`, where `ĝ_m` is the top eigenvector of `Û^H T_m Û` with
/// `T_m = (1/P) Σ_p y²_{p,m} a_{p,m} a_{p,m}^H`, and `s_m = sqrt(mean_p y²_{p,m})`.
pub fn spectral_init(ms: &MeasurementSet, r: usize) -> Result<SpectralInit> {
    let (n, m) = (ms.n(), ms.m());
    if r == 0 || r > n {
        return Err(Error::InvalidRank { rank: r, max: n });
    }
    if ms.y().iter().all(|&v| v == 0.0) {
        return Ok(SpectralInit {
            estimate: SignalMatrix::new(CMatrix::zeros(n, m), Some(r)),
            subspace: CMatrix::zeros(n, r),
            degenerate: true,
        });
    }
    let per_column: Vec<CMatrix> = (0..m).map(|col| weighted_outer(ms, col)).collect();
    let mut s = CMatrix::zeros(n, n);
    for t in &per_column {
        s += t;
    }
    s /= C64::new(m as f64, 0.0);
    let u = top_eigpairs(&s, r)?.vectors;

    let mut x0 = CMatrix::zeros(n, m);
    for (col, t) in per_column.iter().enumerate() {
        let scale = {
            let y = ms.y().column(col);
            (y.iter().map(|v| v * v).sum::<f64>() / ms.p() as f64).max(0.0).sqrt()
        };
        let projected = u.ad_mul(&(t * &u));
        let g = top_eigpairs(&projected, 1)?.vectors;
        let xm = &u * g * C64::new(scale, 0.0);
        x0.set_column(col, &xm.column(0));
    }
    Ok(SpectralInit {
        estimate: SignalMatrix::new(x0, Some(r)),
        subspace: u,
        degenerate: false,
    })
}

/// `n x m` matrix of i.i.d. CN(0, 1) entries.
pub fn random_init(rng: &mut SeededRng, n: usize, m: usize) -> SignalMatrix {
    SignalMatrix::new(sample_cnormal(rng, n, m), None)
}
