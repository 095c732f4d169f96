use std::f64::consts::{PI, TAU};

use super::*;
use crate::datagen::{gen_lowrank, gen_measurements};
use crate::init::spectral_init;
use crate::linalg::{hermitian_defect, sample_cnormal, SeededRng};
use crate::metrics::relative_error;

fn random_hpd(rng: &mut SeededRng, n: usize, ridge: f64) -> CMatrix {
    let g = sample_cnormal(rng, n, n);
    &g * g.adjoint() + CMatrix::identity(n, n) * C64::new(ridge, 0.0)
}

fn random_phase(rng: &mut SeededRng, p: usize, m: usize) -> PhaseEstimate {
    let z = sample_cnormal(rng, p, m);
    PhaseEstimate {
        theta: z.map(|v| wrap_phase(v.arg())),
    }
}

/// A state with arbitrary (valid) factors for a random measurement set.
fn random_instance(seed: u64, n: usize, m: usize, p: usize) -> (MeasurementSet, PosteriorState) {
    let mut rng = SeededRng::new(seed);
    let x = gen_lowrank(&mut rng, n, m, 1.min(n)).unwrap();
    let ms = gen_measurements(&mut rng, &x, p, None).unwrap();
    let columns = (0..m)
        .map(|_| ColumnPosterior {
            mu: sample_cnormal(&mut rng, n, 1).column(0).into_owned(),
            q: random_hpd(&mut rng, n, 0.2) * C64::new(0.1, 0.0),
        })
        .collect();
    let state = PosteriorState {
        columns,
        sigma: WishartPosterior {
            w_hat: HermitianPd::from_hermitian_part(&(random_hpd(&mut rng, n, 0.5) * C64::new(0.2, 0.0))),
            nu_hat: n as f64 + m as f64,
        },
        beta: GammaPosterior {
            a_hat: 3.0,
            b_hat: 1.5,
        },
        phase: random_phase(&mut rng, p, m),
        iteration: 0,
    };
    (ms, state)
}

/// Stacked least squares `[sqrt(β) A; L^H] x ≈ [sqrt(β) r; 0]` with `Σ = L L^H`, by QR.
fn ridge_oracle(a: &CMatrix, r: &CVector, beta: f64, sigma: &CMatrix) -> CVector {
    let (p, n) = a.shape();
    let l = sigma.clone().cholesky().expect("sigma must be PD").l();
    let mut stacked = CMatrix::zeros(p + n, n);
    stacked.view_mut((0, 0), (p, n)).copy_from(&(a * C64::new(beta.sqrt(), 0.0)));
    stacked.view_mut((p, 0), (n, n)).copy_from(&l.adjoint());
    let mut rhs = CVector::zeros(p + n);
    rhs.rows_mut(0, p).copy_from(&(r * C64::new(beta.sqrt(), 0.0)));
    let qr = stacked.qr();
    let qtb = qr.q().adjoint() * rhs;
    qr.r().solve_upper_triangular(&qtb).unwrap()
}

/// Draws from CN(μ, Q).
fn sample_column(rng: &mut SeededRng, col: &ColumnPosterior) -> CVector {
    let l = col.q.clone().cholesky().unwrap().l();
    let z = sample_cnormal(rng, col.mu.len(), 1).column(0).into_owned();
    &col.mu + l * z
}

#[test]
fn gamma_and_gaussian_moments() {
    let g = GammaPosterior { a_hat: 2.0, b_hat: 4.0 };
    assert_eq!(g.mean(), 0.5);
    let cols = vec![ColumnPosterior {
        mu: CVector::zeros(3),
        q: CMatrix::identity(3, 3),
    }];
    assert_eq!(xx_mean(&cols), CMatrix::identity(3, 3));
}

#[test]
fn xx_moment_matches_sampling() {
    let (_, state) = random_instance(1, 3, 2, 4);
    let exact = moments(&state).xx_mean.into_matrix();
    let mut rng = SeededRng::new(2);
    let draws = 100_000;
    let mut acc = CMatrix::zeros(3, 3);
    for _ in 0..draws {
        for c in &state.columns {
            let x = sample_column(&mut rng, c);
            acc += &x * x.adjoint();
        }
    }
    acc /= C64::new(draws as f64, 0.0);
    let rel = (acc - &exact).norm() / exact.norm();
    assert!(rel <= 0.02, "{rel}");
}

#[test]
fn wishart_mean_is_nu_hat_times_scale() {
    let (_, state) = random_instance(3, 3, 2, 4);
    let m = moments(&state);
    let expected = state.sigma.w_hat.matrix() * C64::new(state.sigma.nu_hat, 0.0);
    assert!((m.sigma_mean.matrix() - expected).norm() < 1e-12);
}

#[test]
fn qx_identity_sensing() {
    let ms = MeasurementSet::new(
        vec![CMatrix::identity(2, 2)],
        RMatrix::from_element(2, 1, 1.0),
        None,
    )
    .unwrap();
    let state = PosteriorState {
        columns: vec![ColumnPosterior {
            mu: CVector::zeros(2),
            q: CMatrix::zeros(2, 2),
        }],
        sigma: WishartPosterior {
            w_hat: HermitianPd::identity(2),
            nu_hat: 1.0,
        },
        beta: GammaPosterior { a_hat: 1.0, b_hat: 1.0 },
        phase: PhaseEstimate::zeros(2, 1),
        iteration: 0,
    };
    let cols = update_qx(&ms, &state).unwrap();
    let half = C64::new(0.5, 0.0);
    assert!((&cols[0].q - CMatrix::identity(2, 2) * half).norm() < 1e-15);
    assert!((&cols[0].mu - CVector::from_element(2, half)).norm() < 1e-15);
}

#[test]
fn qx_mean_is_the_ridge_solution() {
    for seed in 0..20 {
        let (ms, state) = random_instance(100 + seed, 1 + (seed as usize % 6), 3, 2 + seed as usize % 9);
        let cols = update_qx(&ms, &state).unwrap();
        let beta = state.beta.mean();
        let sigma = state.sigma.mean();
        for (m, c) in cols.iter().enumerate() {
            let oracle = ridge_oracle(ms.a(m), &state.phase.rotate(&ms, m), beta, &sigma);
            let rel = (&c.mu - &oracle).norm() / oracle.norm();
            assert!(rel <= 1e-8, "seed {seed} column {m}: {rel}");
            assert_eq!(hermitian_defect(&c.q), 0.0);
            assert!(HermitianPd::from_hermitian_part(&c.q).cholesky().is_ok());
        }
    }
}

#[test]
fn dominant_prior_shrinks_the_mean() {
    let (ms, mut state) = random_instance(7, 4, 2, 8);
    state.sigma = WishartPosterior {
        w_hat: HermitianPd::scaled_identity(4, 1e12 / 2.0),
        nu_hat: 2.0,
    };
    let cols = update_qx(&ms, &state).unwrap();
    for (m, c) in cols.iter().enumerate() {
        let bound = ms.a(m).ad_mul(&ms.y_column(m)).norm();
        assert!(c.mu.norm() <= 1e-3 * bound);
    }
}

#[test]
fn qsigma_closed_forms() {
    let hyper = Hyperparameters::default();
    let (_, mut state) = random_instance(8, 3, 100, 4);
    let w = update_qsigma(&hyper, &state).unwrap();
    assert_eq!(w.nu_hat, 100.0 + 1e-10);

    let total = hyper.w_inverse(3).unwrap() + xx_mean(&state.columns);
    let prod = w.w_hat.matrix() * total;
    let err = (prod - CMatrix::identity(3, 3)).norm();
    assert!(err <= 1e-8, "{err}");

    for c in &mut state.columns {
        c.mu.fill(C64::new(0.0, 0.0));
        c.q.fill(C64::new(0.0, 0.0));
    }
    let w = update_qsigma(&hyper, &state).unwrap();
    let rel = (w.w_hat.matrix() - CMatrix::identity(3, 3) * C64::new(1e10, 0.0)).norm() / 1e10;
    assert!(rel < 1e-14);
}

#[test]
fn qbeta_shape_is_data_independent() {
    let hyper = Hyperparameters::default();
    let mut rng = SeededRng::new(9);
    let x = gen_lowrank(&mut rng, 2, 100, 1).unwrap();
    let ms = gen_measurements(&mut rng, &x, 500, None).unwrap();
    let state = warm_start(&ms, &hyper, &x).unwrap();
    let g = update_qbeta(&hyper, &ms, &state);
    assert_eq!(g.a_hat, 50_000.0 + 1e-10);
}

#[test]
fn qbeta_rate_approaches_prior_on_exact_fit() {
    let hyper = Hyperparameters::default();
    let mut rng = SeededRng::new(10);
    let x = gen_lowrank(&mut rng, 3, 2, 1).unwrap();
    let ms = gen_measurements(&mut rng, &x, 6, None).unwrap();
    let mut state = warm_start(&ms, &hyper, &x).unwrap();
    // phases from the truth make D^{-1} y = A x exactly up to round-off
    for eps in [1e-20, 1e-30] {
        for c in &mut state.columns {
            c.q = CMatrix::identity(3, 3) * C64::new(eps, 0.0);
        }
        let g = update_qbeta(&hyper, &ms, &state);
        assert!(g.b_hat >= hyper.b);
        assert!(g.b_hat - hyper.b <= 1e-18, "{}", g.b_hat);
    }
}

#[test]
fn qbeta_rate_matches_sampling() {
    let hyper = Hyperparameters::default();
    let (ms, state) = random_instance(11, 3, 1, 5);
    let g = update_qbeta(&hyper, &ms, &state);
    let mut rng = SeededRng::new(12);
    let draws = 100_000;
    let target = state.phase.rotate(&ms, 0);
    let mc: f64 = (0..draws)
        .map(|_| (&target - ms.a(0) * sample_column(&mut rng, &state.columns[0])).norm_squared())
        .sum::<f64>()
        / draws as f64;
    let exact = g.b_hat - hyper.b;
    assert!(((exact - mc) / exact).abs() <= 0.02, "{exact} vs {mc}");
}

#[test]
fn theta_examples() {
    assert_eq!(optimal_phase(1.0, C64::new(2.0, 0.0)), 0.0);
    let z = C64::new(1.0, 1.0);
    let theta = optimal_phase(1.0, z);
    assert!((theta - PI / 4.0).abs() < 1e-15);
    let upsilon = z / z.conj();
    assert!((upsilon - C64::new(0.0, 1.0)).norm() < 1e-15);
    assert!((C64::from_polar(1.0, 2.0 * theta) - upsilon).norm() < 1e-15);
    assert_eq!(optimal_phase(0.0, z), 0.0);
    assert_eq!(optimal_phase(1.0, C64::new(0.0, 0.0)), 0.0);
    assert!((optimal_phase(1.0, C64::new(-1.0, -1e-300)) - PI).abs() < 1e-12);
}

#[test]
fn theta_minimizes_expected_residual_on_a_grid() {
    let mut rng = SeededRng::new(13);
    for _ in 0..50 {
        let y = sample_cnormal(&mut rng, 1, 1)[(0, 0)].norm();
        let z = sample_cnormal(&mut rng, 1, 1)[(0, 0)];
        let beta = 0.1 + sample_cnormal(&mut rng, 1, 1)[(0, 0)].norm();
        let theta = optimal_phase(y, z);
        let obj = |t: f64| beta * (C64::from_polar(y, t) - z).norm_sqr();
        let best = (0..100_000)
            .map(|k| TAU * k as f64 / 100_000.0)
            .min_by(|a, b| obj(*a).total_cmp(&obj(*b)))
            .unwrap();
        let dist = (theta - best).abs().min(TAU - (theta - best).abs());
        assert!(dist <= TAU * 1e-5, "{theta} vs {best}");
        assert!(obj(theta) <= obj(best) + 1e-12);
    }
}

#[test]
fn update_theta_wraps_into_range() {
    let (ms, state) = random_instance(14, 3, 4, 6);
    let phase = update_theta(&ms, &state);
    assert!(phase.theta.iter().all(|t| (0.0..TAU).contains(t)));
    let d = phase.d_diagonal(0);
    let rotated = phase.rotate(&ms, 0);
    for p in 0..ms.p() {
        assert!((d[p] * rotated[p] - C64::new(ms.y()[(p, 0)], 0.0)).norm() < 1e-14);
        assert!((d[p].norm() - 1.0).abs() < 1e-15);
    }
}

fn small_problem(seed: u64, n: usize, m: usize, r: usize, p: usize) -> (SignalMatrix, MeasurementSet) {
    let mut rng = SeededRng::new(seed);
    let x = gen_lowrank(&mut rng, n, m, r).unwrap();
    let ms = gen_measurements(&mut rng, &x, p, None).unwrap();
    (x, ms)
}

#[test]
fn recovers_an_easy_instance() {
    let (x, ms) = small_problem(20, 10, 10, 1, 60);
    let x0 = spectral_init(&ms, 1).unwrap().estimate;
    let run = run_vem(&ms, &Hyperparameters::default(), &x0, &VemOptions::default()).unwrap();
    let re = relative_error(&x, &run.estimate).unwrap();
    assert!(re < 1e-3, "re = {re}");
    assert_eq!(run.state.beta.a_hat, (60 * 10) as f64 + 1e-10);
    assert_eq!(run.state.sigma.nu_hat, 10.0 + 1e-10);
}

#[test]
fn single_column_is_plain_phase_retrieval() {
    let (x, ms) = small_problem(21, 6, 1, 1, 40);
    let x0 = spectral_init(&ms, 1).unwrap().estimate;
    let run = run_vem(&ms, &Hyperparameters::default(), &x0, &VemOptions::default()).unwrap();
    assert!(relative_error(&x, &run.estimate).unwrap() < 1e-2);
}

#[test]
fn identical_inputs_give_identical_traces() {
    let (_, ms) = small_problem(22, 8, 6, 2, 40);
    let x0 = spectral_init(&ms, 2).unwrap().estimate;
    let opts = VemOptions {
        max_iter: 30,
        compute_elbo: true,
        ..VemOptions::default()
    };
    let a = run_vem(&ms, &Hyperparameters::default(), &x0, &opts).unwrap();
    let b = run_vem(&ms, &Hyperparameters::default(), &x0, &opts).unwrap();
    assert_eq!(a.trace, b.trace);
    assert_eq!(a.state, b.state);
}

#[test]
fn factors_stay_valid_every_iteration() {
    let (_, ms) = small_problem(23, 8, 8, 2, 48);
    let hyper = Hyperparameters::default();
    let x0 = spectral_init(&ms, 2).unwrap().estimate;
    let mut state = warm_start(&ms, &hyper, &x0).unwrap();
    for _ in 0..40 {
        step(&ms, &hyper, &mut state).unwrap();
        assert_eq!(state.beta.a_hat, (48 * 8) as f64 + hyper.a);
        assert_eq!(state.sigma.nu_hat, 8.0 + hyper.nu);
        assert!(state.beta.b_hat >= hyper.b);
        assert!(state.sigma.w_hat.cholesky().is_ok());
        for c in &state.columns {
            assert_eq!(hermitian_defect(&c.q), 0.0);
            assert!(HermitianPd::from_hermitian_part(&c.q).cholesky().is_ok());
        }
    }
}

#[test]
fn elbo_never_decreases_across_sub_steps() {
    let (_, ms) = small_problem(24, 6, 6, 2, 30);
    let hyper = Hyperparameters::default();
    let x0 = spectral_init(&ms, 2).unwrap().estimate;
    let mut state = warm_start(&ms, &hyper, &x0).unwrap();
    // first q_x update leaves the point-mass start
    state.columns = update_qx(&ms, &state).unwrap();
    let mut last = elbo(&hyper, &ms, &state).unwrap();
    let check = |label: &str, last: &mut f64, now: f64| {
        assert!(now >= *last - 1e-6 * last.abs(), "{label}: {last} -> {now}");
        *last = now;
    };
    for _ in 0..25 {
        state.sigma = update_qsigma(&hyper, &state).unwrap();
        check("q_sigma", &mut last, elbo(&hyper, &ms, &state).unwrap());
        state.beta = update_qbeta(&hyper, &ms, &state);
        check("q_beta", &mut last, elbo(&hyper, &ms, &state).unwrap());
        state.phase = update_theta(&ms, &state);
        check("theta", &mut last, elbo(&hyper, &ms, &state).unwrap());
        state.columns = update_qx(&ms, &state).unwrap();
        check("q_x", &mut last, elbo(&hyper, &ms, &state).unwrap());
    }
}

#[test]
fn fixed_point_is_phase_equivariant() {
    let (_, ms) = small_problem(25, 8, 4, 1, 48);
    let hyper = Hyperparameters::default();
    let x0 = spectral_init(&ms, 1).unwrap().estimate;
    let opts = VemOptions {
        max_iter: 500,
        tol: 1e-12,
        compute_elbo: false,
    };
    let run = run_vem(&ms, &hyper, &x0, &opts).unwrap();
    let rot = C64::from_polar(1.0, 0.77);
    let mut rotated = run.state.clone();
    for c in &mut rotated.columns {
        c.mu *= rot;
    }
    rotated.phase = update_theta(&ms, &rotated);
    let cols = update_qx(&ms, &rotated).unwrap();
    let baseline = update_qx(&ms, &run.state).unwrap();
    for (c, b) in cols.iter().zip(&baseline) {
        let rel = (&c.mu - &b.mu * rot).norm() / b.mu.norm();
        assert!(rel <= 1e-8, "{rel}");
    }
}

#[test]
fn options_and_hyperparameters_are_validated() {
    assert!(VemOptions { max_iter: 0, ..Default::default() }.validate().is_err());
    assert!(VemOptions { tol: 0.0, ..Default::default() }.validate().is_err());
    let bad = Hyperparameters {
        a: -1.0,
        ..Default::default()
    };
    assert!(bad.validate(3).is_err());
    let wrong_dim = Hyperparameters {
        w_scale: WishartScale::Matrix(HermitianPd::identity(2)),
        ..Default::default()
    };
    assert!(wrong_dim.validate(3).is_err());
    assert!(wrong_dim.validate(2).is_ok());
}

#[test]
fn wrong_initial_shape_is_rejected() {
    let (_, ms) = small_problem(26, 4, 3, 1, 10);
    let x0 = SignalMatrix::zeros(3, 3);
    assert!(run_vem(&ms, &Hyperparameters::default(), &x0, &VemOptions::default()).is_err());
}
