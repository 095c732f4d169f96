//! Evidence lower bound `L(q; θ) = <ln p(Y, X, Σ, β; θ)>_q + H[q]`.
//!
//! Complex conventions: `CN(μ, Q)` has density `π^{-N} |Q|^{-1} exp(-(x-μ)^H Q^{-1} (x-μ))`,
//! and the complex Wishart `CW(ν, W)` has density
//! `|Σ|^{ν-N} exp(-tr(W^{-1} Σ)) / (Γ̃_N(ν) |W|^ν)` with mean `ν W`. These are the
//! conventions under which the factor updates are exact coordinate ascent steps.
//! The Wishart prior normaliser is included only when the prior is proper (`ν > N - 1`);
//! otherwise it is an undefined additive constant and is dropped.

use std::f64::consts::PI;

use statrs::function::gamma::{digamma, ln_gamma};

use super::{expected_residual, ColumnPosterior, Hyperparameters, PosteriorState};
use crate::datagen::MeasurementSet;
use crate::error::{Error, Result};
use crate::linalg::{trace_of_product, CMatrix, HermitianPd};

/// Per-block contributions to the bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElboTerms {
    pub likelihood: f64,
    pub prior_x: f64,
    pub prior_sigma: f64,
    pub prior_beta: f64,
    pub entropy_x: f64,
    pub entropy_sigma: f64,
    pub entropy_beta: f64,
}

impl ElboTerms {
    pub fn total(&self) -> f64 {
        self.likelihood
            + self.prior_x
            + self.prior_sigma
            + self.prior_beta
            + self.entropy_x
            + self.entropy_sigma
            + self.entropy_beta
    }
}

/// `ln Γ̃_N(ν) = N(N-1)/2 ln π + Σ_{i=1}^N ln Γ(ν - i + 1)`.
pub(crate) fn ln_complex_mvgamma(n: usize, nu: f64) -> f64 {
    let nf = n as f64;
    nf * (nf - 1.0) / 2.0 * PI.ln() + (1..=n).map(|i| ln_gamma(nu - (i - 1) as f64)).sum::<f64>()
}

/// `<ln |Σ|>` under `CW(ν, W)`.
pub(crate) fn wishart_ln_det_mean(n: usize, nu: f64, ln_det_w: f64) -> f64 {
    (1..=n).map(|i| digamma(nu - (i - 1) as f64)).sum::<f64>() + ln_det_w
}

pub(crate) fn wishart_entropy(n: usize, nu: f64, ln_det_w: f64) -> f64 {
    let nf = n as f64;
    -(nu - nf) * wishart_ln_det_mean(n, nu, ln_det_w) + nu * nf + nu * ln_det_w + ln_complex_mvgamma(n, nu)
}

pub(crate) fn gamma_entropy(a: f64, b: f64) -> f64 {
    a - b.ln() + ln_gamma(a) + (1.0 - a) * digamma(a)
}

/// Entropy of `CN(μ, Q)` given `ln |Q|`.
pub(crate) fn gaussian_entropy(n: usize, ln_det_q: f64) -> f64 {
    n as f64 * (PI.ln() + 1.0) + ln_det_q
}

/// `<ln p(x | Σ)>` for one column: `<ln|Σ|> - N ln π - tr(<Σ> (μμ^H + Q))`.
pub(crate) fn column_prior(column: &ColumnPosterior, sigma_mean: &CMatrix, ln_det_sigma_mean: f64) -> f64 {
    let n = column.mu.len();
    let quad = column.mu.dotc(&(sigma_mean * &column.mu)).re + trace_of_product(sigma_mean, &column.q).re;
    ln_det_sigma_mean - n as f64 * PI.ln() - quad
}

/// `<ln p(y | x, β)>` for one column of `P` measurements.
pub(crate) fn column_likelihood(p: usize, beta_mean: f64, ln_beta_mean: f64, residual: f64) -> f64 {
    p as f64 * (ln_beta_mean - PI.ln()) - beta_mean * residual
}

/// The bound split into prior, likelihood and entropy blocks.
pub fn elbo_terms(
    hyper: &Hyperparameters,
    ms: &MeasurementSet,
    state: &PosteriorState,
) -> Result<ElboTerms> {
    let (n, p) = (ms.n(), ms.p());
    let nf = n as f64;
    let nu_hat = state.sigma.nu_hat;
    if nu_hat <= nf - 1.0 {
        return Err(Error::NumericalOverflow(format!(
            "posterior Wishart is improper (nu_hat = {nu_hat} <= N - 1 = {})",
            nf - 1.0
        )));
    }
    let (a_hat, b_hat) = (state.beta.a_hat, state.beta.b_hat);
    let beta_mean = a_hat / b_hat;
    let ln_beta_mean = digamma(a_hat) - b_hat.ln();

    let ln_det_w_hat = state.sigma.w_hat.ln_det()?;
    let ln_det_sigma = wishart_ln_det_mean(n, nu_hat, ln_det_w_hat);
    let sigma_mean = state.sigma.mean();

    let mut likelihood = 0.0;
    let mut prior_x = 0.0;
    let mut entropy_x = 0.0;
    for (col, c) in state.columns.iter().enumerate() {
        let residual = expected_residual(ms, col, c, &state.phase);
        likelihood += column_likelihood(p, beta_mean, ln_beta_mean, residual);
        prior_x += column_prior(c, &sigma_mean, ln_det_sigma);
        let ln_det_q = HermitianPd::from_hermitian_part(&c.q).ln_det()?;
        entropy_x += gaussian_entropy(n, ln_det_q);
    }

    let nu = hyper.nu;
    let w_inv = hyper.w_inverse(n)?;
    let mut prior_sigma = (nu - nf) * ln_det_sigma - trace_of_product(&w_inv, &sigma_mean).re;
    if nu > nf - 1.0 {
        prior_sigma -= nu * hyper.w_ln_det(n)? + ln_complex_mvgamma(n, nu);
    }

    let (a, b) = (hyper.a, hyper.b);
    let prior_beta = a * b.ln() - ln_gamma(a) + (a - 1.0) * ln_beta_mean - b * beta_mean;

    let terms = ElboTerms {
        likelihood,
        prior_x,
        prior_sigma,
        prior_beta,
        entropy_x,
        entropy_sigma: wishart_entropy(n, nu_hat, ln_det_w_hat),
        entropy_beta: gamma_entropy(a_hat, b_hat),
    };
    if terms.total().is_finite() {
        Ok(terms)
    } else {
        Err(Error::NumericalOverflow(format!("non-finite bound: {terms:?}")))
    }
}

/// Evidence lower bound of the current state.
pub fn elbo(hyper: &Hyperparameters, ms: &MeasurementSet, state: &PosteriorState) -> Result<f64> {
    elbo_terms(hyper, ms, state).map(|t| t.total())
}
