//! A small success-rate sweep over the rank, then the aggregated chart.
//!
//! cargo run --release --example sweep_and_report -- [OUT_DIR]

use std::path::PathBuf;

use lrpr::experiment::{run_sweep, SweepConfig};
use lrpr::init::InitKind;
use lrpr::metrics::{Algo, SUCCESS_THRESHOLD};
use lrpr::report::{aggregate_path, report, Axis};

fn main() -> lrpr::Result<()> {
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("lrpr-sweep"));
    let config = SweepConfig {
        n: 16,
        m: 16,
        ranks: vec![1, 2, 3, 4],
        measurements: vec![48],
        trials: 5,
        algos: vec![Algo::Vbl, Algo::Am],
        inits: vec![InitKind::Spectral],
        threshold: SUCCESS_THRESHOLD,
        seed: 2024,
        beta: None,
        max_iter: 200,
        tol: 1e-6,
        output: None,
    };
    let csv = dir.join("results.csv");
    let rows = run_sweep(&config, &csv, 1)?;
    println!("{} rows in {}", rows.len(), csv.display());

    let svg = dir.join("rank.svg");
    for row in report(&csv, Axis::Rank, &svg)? {
        println!("r={} {:>3}/{:<8} {:.2}", row.cell, row.algo, row.init, row.success_rate);
    }
    println!("{} and {}", svg.display(), aggregate_path(&svg).display());
    Ok(())
}
