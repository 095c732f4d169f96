//! The alternating-minimization baseline: objective after each phase, B and U step.
//!
//! cargo run --release --example alternating_baseline

use lrpr::baseline::{run_am, AmOptions};
use lrpr::init::spectral_init;
use lrpr::{gen_lowrank, gen_measurements, relative_error, SeededRng};

fn main() -> lrpr::Result<()> {
    let (n, m, r, p) = (20, 20, 2, 160);
    let mut rng = SeededRng::new(3);
    let x = gen_lowrank(&mut rng, n, m, r)?;
    let ms = gen_measurements(&mut rng, &x, p, None)?;
    let x0 = spectral_init(&ms, r)?.estimate;

    let run = run_am(&ms, r, &x0, &AmOptions::default())?;
    println!("{:>4} {:>12} {:>12} {:>12} {:>10}", "iter", "phase", "B", "U", "change");
    for log in run.trace.iter().take(10) {
        let [a, b, c] = log.objective;
        println!("{:>4} {a:>12.4e} {b:>12.4e} {c:>12.4e} {:>10.2e}", log.iteration, log.change);
    }
    println!(
        "{} iterations, converged: {}, RE = {:.3e}, orthonormality defect {:.1e}",
        run.trace.len(),
        run.converged,
        relative_error(&x, &run.estimate)?,
        run.factors.orthonormality_defect()
    );
    Ok(())
}
