//! Write a dataset to disk, read it back and check the round trip.
//!
//! cargo run --release --example dataset_files -- [DIR]

use std::path::PathBuf;

use lrpr::dataset::{read_dataset, write_dataset};
use lrpr::{gen_lowrank, gen_measurements, SeededRng};

fn main() -> lrpr::Result<()> {
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("lrpr-dataset"));
    let seed = 42;
    let mut rng = SeededRng::new(seed);
    let x = gen_lowrank(&mut rng, 8, 6, 2)?;
    let ms = gen_measurements(&mut rng, &x, 48, Some(500.0))?;

    let manifest = write_dataset(&dir, &ms, Some(&x), seed)?;
    println!("{}", std::fs::read_to_string(&manifest).unwrap_or_default());
    let back = read_dataset(&dir)?;
    println!("measurements identical: {}", back.ms == ms);
    println!("ground truth identical: {}", back.x.as_ref() == Some(&x));
    Ok(())
}
