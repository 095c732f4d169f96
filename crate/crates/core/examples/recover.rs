//! Draw a rank-2 instance, start from the spectral estimate and recover it with the
//! variational EM loop.
//!
//! cargo run --release --example recover

use lrpr::init::spectral_init;
use lrpr::{gen_lowrank, gen_measurements, relative_error, run_vem, Hyperparameters, SeededRng, VemOptions};

fn main() -> lrpr::Result<()> {
    let (n, m, r, p) = (40, 40, 2, 320);
    let mut rng = SeededRng::new(7);
    let x = gen_lowrank(&mut rng, n, m, r)?;
    let ms = gen_measurements(&mut rng, &x, p, None)?;

    let x0 = spectral_init(&ms, r)?.estimate;
    println!("spectral start: RE = {:.3e}", relative_error(&x, &x0)?);

    let run = run_vem(&ms, &Hyperparameters::default(), &x0, &VemOptions::default())?;
    let re = relative_error(&x, &run.estimate)?;
    println!(
        "after {} iterations (converged: {}): RE = {re:.3e}, <beta> = {:.3e}",
        run.trace.len(),
        run.converged,
        run.state.beta.mean()
    );
    Ok(())
}
