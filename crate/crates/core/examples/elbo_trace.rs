//! Evidence lower bound per iteration, with its block decomposition at the end.
//!
//! cargo run --release --example elbo_trace

use lrpr::init::spectral_init;
use lrpr::vem::elbo_terms;
use lrpr::{gen_lowrank, gen_measurements, run_vem, Hyperparameters, SeededRng, VemOptions};

fn main() -> lrpr::Result<()> {
    let (n, m, r, p) = (16, 16, 2, 96);
    let mut rng = SeededRng::new(11);
    let x = gen_lowrank(&mut rng, n, m, r)?;
    let ms = gen_measurements(&mut rng, &x, p, Some(1e3))?;
    let x0 = spectral_init(&ms, r)?.estimate;
    let hyper = Hyperparameters::default();
    let opts = VemOptions {
        max_iter: 40,
        compute_elbo: true,
        ..VemOptions::default()
    };

    let run = run_vem(&ms, &hyper, &x0, &opts)?;
    println!("{:>4} {:>16} {:>10} {:>10}", "iter", "elbo", "change", "<beta>");
    for t in &run.trace {
        let elbo = t.elbo.map_or("-".into(), |v| format!("{v:.6e}"));
        println!("{:>4} {elbo:>16} {:>10.2e} {:>10.3e}", t.iteration, t.change, t.beta_mean);
    }
    println!("{:#?}", elbo_terms(&hyper, &ms, &run.state)?);
    Ok(())
}
