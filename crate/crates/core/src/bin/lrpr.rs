use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use lrpr::dataset::{read_dataset, write_dataset};
use lrpr::experiment::{run_sweep, run_trial_traced, SweepConfig, TrialSpec};
use lrpr::init::InitKind;
use lrpr::metrics::{Algo, TrialRecord, CSV_HEADER, SUCCESS_THRESHOLD};
use lrpr::report::{aggregate_path, report, Axis};
use lrpr::{gen_lowrank, gen_measurements, Error, Result, SeededRng};

#[derive(Parser)]
#[command(name = "lrpr", version, about = "Low-rank phase retrieval experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a random low-rank instance and its magnitude measurements.
    Synth {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        m: usize,
        #[arg(long)]
        p: usize,
        #[arg(long)]
        r: usize,
        #[arg(long)]
        seed: u64,
        /// Noise precision; noiseless when omitted.
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one algorithm on a stored dataset and write a one-row results CSV.
    Run {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        algo: Algo,
        #[arg(long)]
        init: InitKind,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        #[arg(long, default_value_t = 300)]
        max_iter: usize,
        /// Rank used by the spectral start and the baseline; defaults to the manifest's r_true.
        #[arg(long)]
        rank: Option<usize>,
        /// Also write a per-iteration trace (with the bound for vbl) next to the output.
        #[arg(long)]
        elbo: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a grid of trials described by a JSON config.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Results CSV; falls back to the config's `output`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Aggregate a results CSV into success rates and an SVG chart.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        axis: Axis,
        #[arg(long)]
        out: PathBuf,
    },
}

fn trace_path(out: &Path) -> PathBuf {
    let mut name = out.file_stem().map(|s| s.to_os_string()).unwrap_or_default();
    name.push(".trace.csv");
    out.with_file_name(name)
}

fn write_csv<T: serde::Serialize>(path: &Path, header: &[&str], rows: &[T]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::Io {
            path: parent.to_path_buf(),
            source: e,
        })?;
    }
    let mut writer = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    writer.write_record(header)?;
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush().map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn summary(record: &TrialRecord) -> String {
    let re = record.re.map_or("-".to_string(), |v| format!("{v:.3e}"));
    format!(
        "{} {} r={} p={} iters={} converged={} re={re} success={}",
        record.algo, record.init, record.r, record.p, record.iters, record.converged, record.success
    )
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Synth {
            n,
            m,
            p,
            r,
            seed,
            beta,
            out,
        } => {
            let mut rng = SeededRng::new(seed);
            let x = gen_lowrank(&mut rng, n, m, r)?;
            let ms = gen_measurements(&mut rng, &x, p, beta)?;
            let manifest = write_dataset(&out, &ms, Some(&x), seed)?;
            println!("{}", manifest.display());
        }
        Command::Run {
            dataset,
            algo,
            init,
            seed,
            tol,
            max_iter,
            rank,
            elbo,
            out,
        } => {
            let data = read_dataset(&dataset)?;
            let x = data.x.ok_or_else(|| {
                Error::DimensionMismatch(format!("{}: dataset has no ground truth", dataset.display()))
            })?;
            let r = rank
                .or(data.manifest.r_true)
                .ok_or_else(|| Error::InvalidConfig("no --rank given and the manifest has no r_true".into()))?;
            let spec = TrialSpec {
                algo,
                init,
                seed,
                trial: 0,
                r,
                max_iter,
                tol,
                threshold: SUCCESS_THRESHOLD,
            };
            let (record, trace) = run_trial_traced(&data.ms, &x, &spec, elbo)?;
            write_csv(&out, &CSV_HEADER, std::slice::from_ref(&record))?;
            if elbo {
                let value = match algo {
                    Algo::Vbl => "elbo",
                    Algo::Am => "objective",
                };
                write_csv(&trace_path(&out), &["iteration", "change", value], &trace)?;
            }
            println!("{}", summary(&record));
            if let Some(reason) = record.failure {
                return Err(Error::NumericalOverflow(reason));
            }
        }
        Command::Sweep { config, out, jobs } => {
            let cfg = SweepConfig::from_json_file(&config)?;
            let out = out
                .or_else(|| cfg.output.clone())
                .ok_or_else(|| Error::InvalidConfig("no --out given and the config has no output".into()))?;
            let rows = run_sweep(&cfg, &out, jobs)?;
            let wins = rows.iter().filter(|r| r.success).count();
            println!("{} rows, {wins} successes -> {}", rows.len(), out.display());
        }
        Command::Report { input, axis, out } => {
            let rows = report(&input, axis, &out)?;
            for row in &rows {
                println!(
                    "{:>5} {:>4} {:>9} {:.3} ({} trials)",
                    row.cell, row.algo, row.init, row.success_rate, row.n_trials
                );
            }
            println!("{} and {}", out.display(), aggregate_path(&out).display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
