//! How close the joint spectral estimate gets as the number of measurements grows.
//!
//! cargo run --release --example spectral_start

use lrpr::init::spectral_init;
use lrpr::{gen_lowrank, gen_measurements, relative_error, SeededRng};

fn main() -> lrpr::Result<()> {
    let (n, m, r) = (32, 32, 2);
    println!("{:>6} {:>10} {:>10}", "P", "RE", "top sv");
    for p in [64, 128, 256, 512, 1024] {
        let mut rng = SeededRng::new(p as u64);
        let x = gen_lowrank(&mut rng, n, m, r)?;
        let ms = gen_measurements(&mut rng, &x, p, None)?;
        let init = spectral_init(&ms, r)?;
        let sv = init.estimate.singular_values();
        println!("{p:>6} {:>10.4} {:>10.3}", relative_error(&x, &init.estimate)?, sv[0]);
    }
    Ok(())
}
