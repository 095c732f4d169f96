//! Variational EM for low-rank phase retrieval.
//!
//! The hidden variables are the columns `x_m`, the shared prior precision `Σ`
//! (Wishart hyperprior) and the noise precision `β` (Gamma hyperprior). The missing
//! measurement phases `θ_{p,m}` are deterministic parameters. Each iteration runs
//! the E-step factor updates `q_x`, `q_Σ`, `q_β` in that order, then the M-step
//! phase update.
//!
//! Moments consumed by the updates:
//!
//! ```text
//! <β> = â / b̂      <Σ> = ν̂ Ŵ      <X X^H> = Σ_m (μ_m μ_m^H + Q_m)
//! <‖D_m^{-1} y_m - A_m x_m‖²> = ‖D_m^{-1} y_m - A_m μ_m‖² + tr(A_m Q_m A_m^H)
//! ```

mod elbo;

pub use elbo::{elbo, elbo_terms, ElboTerms};

use crate::datagen::{MeasurementSet, SignalMatrix};
use crate::error::{Error, Result};
use crate::linalg::{
    hpd_inverse, trace_of_product, wrap_phase, CMatrix, CVector, HermitianPd, RMatrix, C64,
};

/// Scale matrix `W` of the Wishart hyperprior.
#[derive(Debug, Clone, PartialEq)]
pub enum WishartScale {
    /// `c I`.
    Scaled(f64),
    Matrix(HermitianPd),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hyperparameters {
    /// Gamma shape for the noise precision.
    pub a: f64,
    /// Gamma rate for the noise precision.
    pub b: f64,
    /// Wishart degrees of freedom. Any `ν > 0` is accepted (improper prior allowed).
    pub nu: f64,
    pub w_scale: WishartScale,
}

impl Default for Hyperparameters {
    /// Non-informative settings: `a = b = ν = 1e-10`, `W = 1e10 I`.
    fn default() -> Self {
        Hyperparameters {
            a: 1e-10,
            b: 1e-10,
            nu: 1e-10,
            w_scale: WishartScale::Scaled(1e10),
        }
    }
}

impl Hyperparameters {
    pub fn validate(&self, n: usize) -> Result<()> {
        for (name, v) in [("a", self.a), ("b", self.b), ("nu", self.nu)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        match &self.w_scale {
            WishartScale::Scaled(c) if !(*c > 0.0 && c.is_finite()) => Err(Error::InvalidConfig(
                format!("Wishart scale must be positive, got {c}"),
            )),
            WishartScale::Matrix(w) if w.dim() != n => Err(Error::DimensionMismatch(format!(
                "Wishart scale is {0}x{0}, signal dimension is {n}",
                w.dim()
            ))),
            WishartScale::Matrix(w) => w.cholesky().map(|_| ()),
            _ => Ok(()),
        }
    }

    /// `W^{-1}` as an `n x n` matrix.
    pub fn w_inverse(&self, n: usize) -> Result<CMatrix> {
        match &self.w_scale {
            WishartScale::Scaled(c) => Ok(CMatrix::from_diagonal_element(n, n, C64::new(1.0 / c, 0.0))),
            WishartScale::Matrix(w) => Ok(hpd_inverse(w)?.into_matrix()),
        }
    }

    /// `ln |W|`.
    pub fn w_ln_det(&self, n: usize) -> Result<f64> {
        match &self.w_scale {
            WishartScale::Scaled(c) => Ok(n as f64 * c.ln()),
            WishartScale::Matrix(w) => w.ln_det(),
        }
    }
}

/// `q(x_m) = CN(μ_m, Q_m)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnPosterior {
    pub mu: CVector,
    pub q: CMatrix,
}

/// `q(Σ) = Wishart(Ŵ, ν̂)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WishartPosterior {
    pub w_hat: HermitianPd,
    pub nu_hat: f64,
}

impl WishartPosterior {
    /// `<Σ> = ν̂ Ŵ`.
    pub fn mean(&self) -> CMatrix {
        self.w_hat.matrix() * C64::new(self.nu_hat, 0.0)
    }
}

/// `q(β) = Gamma(â, b̂)` (shape, rate).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaPosterior {
    pub a_hat: f64,
    pub b_hat: f64,
}

impl GammaPosterior {
    pub fn mean(&self) -> f64 {
        self.a_hat / self.b_hat
    }
}

/// Phase parameters `θ_{p,m} ∈ [0, 2π)`, stored `P x M`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseEstimate {
    pub theta: RMatrix,
}

impl PhaseEstimate {
    pub fn zeros(p: usize, m: usize) -> Self {
        PhaseEstimate {
            theta: RMatrix::zeros(p, m),
        }
    }

    /// `D_m^{-1} y_m = e^{jθ_{·,m}} ⊙ y_m`.
    pub fn rotate(&self, ms: &MeasurementSet, m: usize) -> CVector {
        CVector::from_iterator(
            ms.p(),
            self.theta
                .column(m)
                .iter()
                .zip(ms.y().column(m).iter())
                .map(|(&t, &y)| C64::from_polar(y, t)),
        )
    }

    /// Diagonal of `D_m = diag(e^{-jθ_{1,m}}, ..., e^{-jθ_{P,m}})`.
    pub fn d_diagonal(&self, m: usize) -> CVector {
        CVector::from_iterator(
            self.theta.nrows(),
            self.theta.column(m).iter().map(|&t| C64::from_polar(1.0, -t)),
        )
    }
}

/// All variational factors plus the phase parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorState {
    pub columns: Vec<ColumnPosterior>,
    pub sigma: WishartPosterior,
    pub beta: GammaPosterior,
    pub phase: PhaseEstimate,
    pub iteration: usize,
}

impl PosteriorState {
    /// Current estimate `[μ_1 .. μ_M]`.
    pub fn estimate(&self) -> SignalMatrix {
        let cols: Vec<CVector> = self.columns.iter().map(|c| c.mu.clone()).collect();
        SignalMatrix::new(CMatrix::from_columns(&cols), None)
    }

    fn check_against(&self, ms: &MeasurementSet) -> Result<()> {
        let ok = self.columns.len() == ms.m()
            && self
                .columns
                .iter()
                .all(|c| c.mu.len() == ms.n() && c.q.shape() == (ms.n(), ms.n()))
            && self.sigma.w_hat.dim() == ms.n()
            && self.phase.theta.shape() == (ms.p(), ms.m());
        if ok {
            Ok(())
        } else {
            Err(Error::DimensionMismatch(
                "posterior state does not match the measurement set".into(),
            ))
        }
    }
}

#[derive(Debug, Clone)]
pub struct Moments {
    pub beta_mean: f64,
    pub sigma_mean: HermitianPd,
    pub xx_mean: HermitianPd,
}

/// `Σ_m (μ_m μ_m^H + Q_m)`.
pub fn xx_mean(columns: &[ColumnPosterior]) -> CMatrix {
    let n = columns.first().map_or(0, |c| c.mu.len());
    let mut acc = CMatrix::zeros(n, n);
    for c in columns {
        acc += &c.q;
        acc.ger(C64::new(1.0, 0.0), &c.mu, &c.mu.conjugate(), C64::new(1.0, 0.0));
    }
    acc
}

pub fn moments(state: &PosteriorState) -> Moments {
    Moments {
        beta_mean: state.beta.mean(),
        sigma_mean: HermitianPd::from_hermitian_part(&state.sigma.mean()),
        xx_mean: HermitianPd::from_hermitian_part(&xx_mean(&state.columns)),
    }
}

/// `<‖D_m^{-1} y_m - A_m x_m‖²>` under `q(x_m)` and the given phases.
pub fn expected_residual(
    ms: &MeasurementSet,
    m: usize,
    column: &ColumnPosterior,
    phase: &PhaseEstimate,
) -> f64 {
    let fit = (phase.rotate(ms, m) - ms.a(m) * &column.mu).norm_squared();
    fit + trace_of_product(&column.q, ms.gram(m)).re
}

/// `Q_m = (<β> A_m^H A_m + <Σ>)^{-1}`, `μ_m = <β> Q_m A_m^H D_m^{-1} y_m`.
pub fn update_qx(ms: &MeasurementSet, state: &PosteriorState) -> Result<Vec<ColumnPosterior>> {
    state.check_against(ms)?;
    let beta = state.beta.mean();
    let sigma = state.sigma.mean();
    (0..ms.m())
        .map(|m| {
            let precision = ms.gram(m) * C64::new(beta, 0.0) + &sigma;
            let q = hpd_inverse(&HermitianPd::from_hermitian_part(&precision))?.into_matrix();
            let rhs = ms.a(m).ad_mul(&state.phase.rotate(ms, m));
            let mu = &q * rhs * C64::new(beta, 0.0);
            Ok(ColumnPosterior { mu, q })
        })
        .collect()
}

/// `Ŵ = (W^{-1} + <X X^H>)^{-1}`, `ν̂ = ν + M`.
pub fn update_qsigma(hyper: &Hyperparameters, state: &PosteriorState) -> Result<WishartPosterior> {
    let n = state.sigma.w_hat.dim();
    let total = hyper.w_inverse(n)? + xx_mean(&state.columns);
    let w_hat = hpd_inverse(&HermitianPd::from_hermitian_part(&total))?;
    Ok(WishartPosterior {
        w_hat,
        nu_hat: hyper.nu + state.columns.len() as f64,
    })
}

/// `â = P M + a`, `b̂ = Σ_m <‖D_m^{-1} y_m - A_m x_m‖²> + b`.
pub fn update_qbeta(
    hyper: &Hyperparameters,
    ms: &MeasurementSet,
    state: &PosteriorState,
) -> GammaPosterior {
    let residual: f64 = state
        .columns
        .iter()
        .enumerate()
        .map(|(m, c)| expected_residual(ms, m, c, &state.phase))
        .sum();
    GammaPosterior {
        a_hat: (ms.p() * ms.m()) as f64 + hyper.a,
        b_hat: residual + hyper.b,
    }
}

/// `θ_{p,m} = arg(a_{p,m}^H μ_m)`, the root of `e^{2jθ} = a^H μ / μ^H a` that minimizes
/// the expected residual. Zero where `y_{p,m} = 0` or `a^H μ = 0`.
pub fn update_theta(ms: &MeasurementSet, state: &PosteriorState) -> PhaseEstimate {
    let (p, m_count) = (ms.p(), ms.m());
    let mut theta = RMatrix::zeros(p, m_count);
    for (m, col) in state.columns.iter().enumerate() {
        let proj = ms.a(m) * &col.mu;
        for (row, z) in proj.iter().enumerate() {
            theta[(row, m)] = optimal_phase(ms.y()[(row, m)], *z);
        }
    }
    PhaseEstimate { theta }
}

/// Phase that minimizes `|y e^{jθ} - z|²`.
pub fn optimal_phase(y: f64, z: C64) -> f64 {
    if y == 0.0 || z == C64::new(0.0, 0.0) {
        0.0
    } else {
        wrap_phase(z.arg())
    }
}

/// Isotropic covariance given to the starting columns: the mean per-entry power of `X₀`
/// (1 when `X₀ = 0`).
pub fn warm_start_variance(x0: &SignalMatrix) -> f64 {
    let power = x0.x.norm_squared() / (x0.n() * x0.m()) as f64;
    if power > 0.0 && power.is_finite() {
        power
    } else {
        1.0
    }
}

/// Starting state built from a point estimate `X₀`. The columns start as
/// `q(x_m) = CN(x₀_m, s² I)` with `s²` from [`warm_start_variance`]; phases are
/// `arg(A_m x₀_m)`, and `q(Σ)`, `q(β)` are their exact updates given those columns.
pub fn warm_start(
    ms: &MeasurementSet,
    hyper: &Hyperparameters,
    x0: &SignalMatrix,
) -> Result<PosteriorState> {
    let (n, m, p) = (ms.n(), ms.m(), ms.p());
    if x0.x.shape() != (n, m) {
        return Err(Error::DimensionMismatch(format!(
            "initial point is {:?}, expected ({n}, {m})",
            x0.x.shape()
        )));
    }
    hyper.validate(n)?;
    let spread = C64::new(warm_start_variance(x0), 0.0);
    let columns: Vec<ColumnPosterior> = (0..m)
        .map(|col| ColumnPosterior {
            mu: x0.column(col),
            q: CMatrix::identity(n, n) * spread,
        })
        .collect();
    let mut state = PosteriorState {
        columns,
        sigma: WishartPosterior {
            w_hat: HermitianPd::identity(n),
            nu_hat: hyper.nu + m as f64,
        },
        beta: GammaPosterior {
            a_hat: (p * m) as f64 + hyper.a,
            b_hat: hyper.b,
        },
        phase: PhaseEstimate::zeros(p, m),
        iteration: 0,
    };
    state.phase = update_theta(ms, &state);
    state.sigma = update_qsigma(hyper, &state)?;
    state.beta = update_qbeta(hyper, ms, &state);
    Ok(state)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VemOptions {
    pub max_iter: usize,
    pub tol: f64,
    pub compute_elbo: bool,
}

impl Default for VemOptions {
    fn default() -> Self {
        VemOptions {
            max_iter: 300,
            tol: 1e-6,
            compute_elbo: false,
        }
    }
}

impl VemOptions {
    pub fn validate(&self) -> Result<()> {
        if self.max_iter == 0 {
            return Err(Error::InvalidConfig("max_iter must be at least 1".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidConfig(format!("tol must be positive, got {}", self.tol)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationLog {
    pub iteration: usize,
    /// `max_m ‖μ_m^{(t)} - μ_m^{(t-1)}‖ / max(‖μ_m^{(t-1)}‖, 1e-12)`.
    pub change: f64,
    pub beta_mean: f64,
    pub elbo: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct VemRun {
    pub estimate: SignalMatrix,
    pub state: PosteriorState,
    pub trace: Vec<IterationLog>,
    pub converged: bool,
}

/// Largest per-column relative change between two column sets.
pub fn relative_change<'a>(
    before: impl IntoIterator<Item = &'a CVector>,
    after: impl IntoIterator<Item = &'a CVector>,
) -> f64 {
    before
        .into_iter()
        .zip(after)
        .map(|(b, a)| (a - b).norm() / b.norm().max(1e-12))
        .fold(0.0, f64::max)
}

/// One full iteration (E-step then M-step) in place. Returns the column change.
pub fn step(ms: &MeasurementSet, hyper: &Hyperparameters, state: &mut PosteriorState) -> Result<f64> {
    let columns = update_qx(ms, state)?;
    let change = relative_change(
        state.columns.iter().map(|c| &c.mu),
        columns.iter().map(|c| &c.mu),
    );
    state.columns = columns;
    state.sigma = update_qsigma(hyper, state)?;
    state.beta = update_qbeta(hyper, ms, state);
    state.phase = update_theta(ms, state);
    state.iteration += 1;
    Ok(change)
}

/// Runs the variational EM loop from `x0` until the column change drops below
/// `opts.tol` or `opts.max_iter` iterations have run.
pub fn run_vem(
    ms: &MeasurementSet,
    hyper: &Hyperparameters,
    x0: &SignalMatrix,
    opts: &VemOptions,
) -> Result<VemRun> {
    opts.validate()?;
    let mut state = warm_start(ms, hyper, x0)?;
    let mut trace = Vec::with_capacity(opts.max_iter.min(1024));
    let mut converged = false;
    for _ in 0..opts.max_iter {
        let change = step(ms, hyper, &mut state)?;
        // a failed diagnostic is dropped, not fatal
        let elbo = if opts.compute_elbo {
            elbo(hyper, ms, &state).ok()
        } else {
            None
        };
        trace.push(IterationLog {
            iteration: state.iteration,
            change,
            beta_mean: state.beta.mean(),
            elbo,
        });
        if change < opts.tol {
            converged = true;
            break;
        }
    }
    Ok(VemRun {
        estimate: state.estimate(),
        state,
        trace,
        converged,
    })
}

#[cfg(test)]
mod tests;
