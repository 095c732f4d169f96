//! With additive noise the posterior mean of the noise precision tracks the true value.
//!
//! cargo run --release --example noisy_measurements

use lrpr::init::spectral_init;
use lrpr::{gen_lowrank, gen_measurements, relative_error, run_vem, Hyperparameters, SeededRng, VemOptions};

fn main() -> lrpr::Result<()> {
    let (n, m, r, p) = (24, 24, 2, 192);
    println!("{:>10} {:>12} {:>10}", "beta", "<beta>", "RE");
    for beta in [1e1, 1e2, 1e3, 1e4] {
        let mut rng = SeededRng::new(5);
        let x = gen_lowrank(&mut rng, n, m, r)?;
        let ms = gen_measurements(&mut rng, &x, p, Some(beta))?;
        let x0 = spectral_init(&ms, r)?.estimate;
        let run = run_vem(&ms, &Hyperparameters::default(), &x0, &VemOptions::default())?;
        println!(
            "{beta:>10.0e} {:>12.4e} {:>10.3e}",
            run.state.beta.mean(),
            relative_error(&x, &run.estimate)?
        );
    }
    Ok(())
}
