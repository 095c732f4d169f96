//! Both algorithms from the same random starting point.
//!
//! cargo run --release --example random_start

use lrpr::experiment::{run_trial, TrialSpec};
use lrpr::init::InitKind;
use lrpr::metrics::Algo;
use lrpr::{gen_lowrank, gen_measurements, SeededRng};

fn main() -> lrpr::Result<()> {
    let (n, m, r, p) = (24, 24, 1, 288);
    for seed in 0..4u64 {
        let mut rng = SeededRng::new(seed);
        let x = gen_lowrank(&mut rng, n, m, r)?;
        let ms = gen_measurements(&mut rng, &x, p, None)?;
        for algo in [Algo::Vbl, Algo::Am] {
            let record = run_trial(&ms, &x, &TrialSpec::new(algo, InitKind::Random, seed, r))?;
            println!(
                "seed {seed} {algo:>3}: iters {:>3} converged {:<5} RE {:.3e} success {}",
                record.iters,
                record.converged,
                record.re.unwrap_or(f64::NAN),
                record.success
            );
        }
    }
    Ok(())
}
