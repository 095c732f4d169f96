//! Trials and parameter sweeps.
//!
//! A sweep walks a grid of ranks and measurement counts. Every `(cell, trial)` unit
//! draws one dataset from a seed derived from the master seed, the cell index and the
//! trial index, and runs every configured `(algo, init)` pair on it. Rows reach the CSV
//! in unit order no matter how many workers run, so the output (minus `runtime_ms`) is a
//! deterministic function of the configuration.

use std::collections::{BTreeMap, HashSet};
use std::fs::{self, File, OpenOptions};
use std::path::{Path, PathBuf};
use std::sync::mpsc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baseline::{run_am, AmOptions};
use crate::datagen::{gen_lowrank, gen_measurements, MeasurementSet, SignalMatrix};
use crate::error::{Error, Result};
use crate::init::{random_init, spectral_init, InitKind, RANDOM_INIT_DISTRIBUTION};
use crate::linalg::{derive_seed, SeededRng};
use crate::metrics::{is_success, relative_error, Algo, TrialRecord, CSV_HEADER, SUCCESS_THRESHOLD};
use crate::vem::{run_vem, Hyperparameters, VemOptions};

/// Substream of a trial seed used for random starting points.
const INIT_STREAM: u64 = 1;

/// Everything a single trial needs besides the data.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialSpec {
    pub algo: Algo,
    pub init: InitKind,
    pub seed: u64,
    pub trial: u64,
    /// Rank handed to the spectral start and to the factored baseline.
    pub r: usize,
    pub max_iter: usize,
    pub tol: f64,
    pub threshold: f64,
}

impl TrialSpec {
    pub fn new(algo: Algo, init: InitKind, seed: u64, r: usize) -> Self {
        TrialSpec {
            algo,
            init,
            seed,
            trial: 0,
            r,
            max_iter: VemOptions::default().max_iter,
            tol: VemOptions::default().tol,
            threshold: SUCCESS_THRESHOLD,
        }
    }
}

/// Starting point for a trial. Random starts come from a substream of the trial seed,
/// so both algorithms see the same point.
pub fn starting_point(ms: &MeasurementSet, init: InitKind, seed: u64, r: usize) -> Result<SignalMatrix> {
    match init {
        InitKind::Spectral => Ok(spectral_init(ms, r)?.estimate),
        InitKind::Random => {
            let mut rng = SeededRng::new(seed).substream(&[INIT_STREAM]);
            Ok(random_init(&mut rng, ms.n(), ms.m()))
        }
    }
}

/// One iteration of a traced run. `value` is the bound for the variational algorithm
/// (when requested) and the least-squares objective for the baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub change: f64,
    pub value: Option<f64>,
}

struct Solved {
    estimate: SignalMatrix,
    trace: Vec<TraceRow>,
    converged: bool,
}

fn solve(ms: &MeasurementSet, spec: &TrialSpec, compute_elbo: bool) -> Result<Solved> {
    let x0 = starting_point(ms, spec.init, spec.seed, spec.r)?;
    match spec.algo {
        Algo::Vbl => {
            let opts = VemOptions {
                max_iter: spec.max_iter,
                tol: spec.tol,
                compute_elbo,
            };
            let run = run_vem(ms, &Hyperparameters::default(), &x0, &opts)?;
            let trace = run
                .trace
                .iter()
                .map(|t| TraceRow {
                    iteration: t.iteration,
                    change: t.change,
                    value: t.elbo,
                })
                .collect();
            Ok(Solved {
                estimate: run.estimate,
                trace,
                converged: run.converged,
            })
        }
        Algo::Am => {
            let opts = AmOptions {
                max_iter: spec.max_iter,
                tol: spec.tol,
            };
            let run = run_am(ms, spec.r, &x0, &opts)?;
            let trace = run
                .trace
                .iter()
                .map(|t| TraceRow {
                    iteration: t.iteration,
                    change: t.change,
                    value: Some(t.objective[2]),
                })
                .collect();
            Ok(Solved {
                estimate: run.estimate,
                trace,
                converged: run.converged,
            })
        }
    }
}

/// Runs one algorithm on one dataset against the ground truth `x`. Algorithm failures
/// become a row with no error value, `converged = false` and `success = false`.
pub fn run_trial(ms: &MeasurementSet, x: &SignalMatrix, spec: &TrialSpec) -> Result<TrialRecord> {
    run_trial_traced(ms, x, spec, false).map(|(record, _)| record)
}

/// [`run_trial`] that also returns the per-iteration trace.
pub fn run_trial_traced(
    ms: &MeasurementSet,
    x: &SignalMatrix,
    spec: &TrialSpec,
    compute_elbo: bool,
) -> Result<(TrialRecord, Vec<TraceRow>)> {
    if x.x.shape() != (ms.n(), ms.m()) {
        return Err(Error::DimensionMismatch(format!(
            "ground truth is {:?}, measurements imply ({}, {})",
            x.x.shape(),
            ms.n(),
            ms.m()
        )));
    }
    if x.x.norm_squared() == 0.0 {
        return Err(Error::ZeroTruth);
    }
    let start = Instant::now();
    let outcome = solve(ms, spec, compute_elbo);
    let runtime_ms = start.elapsed().as_secs_f64() * 1e3;
    let mut record = TrialRecord {
        algo: spec.algo,
        init: spec.init,
        seed: spec.seed,
        trial: spec.trial,
        n: ms.n(),
        m: ms.m(),
        p: ms.p(),
        r: spec.r,
        iters: 0,
        converged: false,
        re: None,
        success: false,
        runtime_ms,
        threshold: spec.threshold,
        failure: None,
    };
    let mut trace = Vec::new();
    match outcome {
        Ok(solved) => {
            let re = relative_error(x, &solved.estimate)?;
            record.iters = solved.trace.len();
            record.converged = solved.converged;
            record.re = Some(re);
            record.success = is_success(re, spec.threshold);
            trace = solved.trace;
        }
        Err(e) if matches!(e, Error::InvalidRank { .. } | Error::InvalidConfig(_)) => return Err(e),
        Err(e) => record.failure = Some(e.to_string()),
    }
    Ok((record, trace))
}

fn default_threshold() -> f64 {
    SUCCESS_THRESHOLD
}

fn default_max_iter() -> usize {
    VemOptions::default().max_iter
}

fn default_tol() -> f64 {
    VemOptions::default().tol
}

/// Sweep description, read from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub n: usize,
    pub m: usize,
    pub ranks: Vec<usize>,
    pub measurements: Vec<usize>,
    pub trials: u64,
    pub algos: Vec<Algo>,
    pub inits: Vec<InitKind>,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    pub seed: u64,
    /// Noise precision; `None` for noiseless magnitudes.
    #[serde(default)]
    pub beta: Option<f64>,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    /// Default destination; a path given on the command line wins.
    #[serde(default)]
    pub output: Option<PathBuf>,
}

impl SweepConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.n == 0 || self.m == 0 {
            return bad(format!("n and m must be positive (n={}, m={})", self.n, self.m));
        }
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        for (name, empty) in [
            ("ranks", self.ranks.is_empty()),
            ("measurements", self.measurements.is_empty()),
            ("algos", self.algos.is_empty()),
            ("inits", self.inits.is_empty()),
        ] {
            if empty {
                return bad(format!("`{name}` must not be empty"));
            }
        }
        let max = self.n.min(self.m);
        if let Some(&r) = self.ranks.iter().find(|&&r| r == 0 || r > max) {
            return Err(Error::InvalidRank { rank: r, max });
        }
        if self.measurements.contains(&0) {
            return bad("measurement counts must be positive".into());
        }
        if !(self.threshold > 0.0) {
            return bad(format!("threshold must be positive, got {}", self.threshold));
        }
        if let Some(beta) = self.beta {
            if !(beta > 0.0 && beta.is_finite()) {
                return bad(format!("beta must be positive, got {beta}"));
            }
        }
        AmOptions {
            max_iter: self.max_iter,
            tol: self.tol,
        }
        .validate()
    }

    /// Grid cells `(r, p)`, rank-major.
    pub fn cells(&self) -> Vec<(usize, usize)> {
        self.ranks
            .iter()
            .flat_map(|&r| self.measurements.iter().map(move |&p| (r, p)))
            .collect()
    }

    /// Seed of the dataset for `(cell, trial)`.
    pub fn unit_seed(&self, cell: usize, trial: u64) -> u64 {
        derive_seed(self.seed, &[cell as u64, trial])
    }

    pub fn rows_per_unit(&self) -> usize {
        self.algos.len() * self.inits.len()
    }

    /// Total number of CSV rows a complete sweep produces.
    pub fn total_rows(&self) -> usize {
        self.cells().len() * self.trials as usize * self.rows_per_unit()
    }
}

/// Draws the dataset of one unit.
pub fn unit_dataset(config: &SweepConfig, cell: usize, trial: u64) -> Result<(SignalMatrix, MeasurementSet)> {
    let (r, p) = config.cells()[cell];
    let mut rng = SeededRng::new(config.unit_seed(cell, trial));
    let x = gen_lowrank(&mut rng, config.n, config.m, r)?;
    let ms = gen_measurements(&mut rng, &x, p, config.beta)?;
    Ok((x, ms))
}

/// All rows of one `(cell, trial)` unit, in `algos` then `inits` order.
pub fn run_unit(config: &SweepConfig, cell: usize, trial: u64) -> Result<Vec<TrialRecord>> {
    let (x, ms) = unit_dataset(config, cell, trial)?;
    let (r, _) = config.cells()[cell];
    let seed = config.unit_seed(cell, trial);
    let mut rows = Vec::with_capacity(config.rows_per_unit());
    for &algo in &config.algos {
        for &init in &config.inits {
            let spec = TrialSpec {
                algo,
                init,
                seed,
                trial,
                r,
                max_iter: config.max_iter,
                tol: config.tol,
                threshold: config.threshold,
            };
            rows.push(run_trial(&ms, &x, &spec)?);
        }
    }
    Ok(rows)
}

/// Sidecar written next to the results CSV: the configuration plus the choices that
/// the fixed CSV columns cannot carry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepMeta {
    pub config: SweepConfig,
    pub random_init: String,
    pub am_order: String,
    pub stopping_rule: String,
    pub vbl_hyperparameters: String,
}

impl SweepMeta {
    pub fn new(config: &SweepConfig) -> Self {
        let mut config = config.clone();
        config.output = None;
        SweepMeta {
            random_init: RANDOM_INIT_DISTRIBUTION.into(),
            am_order: "phase, B least squares, U least squares with QR re-orthonormalization".into(),
            stopping_rule: format!(
                "max_m |x_m(t) - x_m(t-1)| / max(|x_m(t-1)|, 1e-12) < {} or {} iterations",
                config.tol, config.max_iter
            ),
            vbl_hyperparameters: "a = b = nu = 1e-10, W = 1e10 I".into(),
            config,
        }
    }
}

/// Path of the sidecar for a results CSV.
pub fn meta_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|s| s.to_os_string()).unwrap_or_default();
    name.push(".meta.json");
    out.with_file_name(name)
}

/// Reads a results CSV written by [`run_sweep`].
pub fn read_records(path: &Path) -> Result<Vec<TrialRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(false).from_reader(file);
    let mut rows = reader.records();
    match rows.next() {
        Some(header) => check_header(&header?)?,
        None => {
            return Err(Error::Schema {
                column: CSV_HEADER[0].to_string(),
                detail: "file has no header".into(),
            })
        }
    }
    let header = csv::StringRecord::from(CSV_HEADER.to_vec());
    rows.map(|row| {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        check_row(&row, line)?;
        row.deserialize(Some(&header)).map_err(|e| Error::Schema {
            column: "?".into(),
            detail: format!("line {line}: {e}"),
        })
    })
    .collect()
}

pub(crate) fn check_header(headers: &csv::StringRecord) -> Result<()> {
    for (idx, expected) in CSV_HEADER.iter().enumerate() {
        match headers.get(idx) {
            Some(found) if found == *expected => {}
            Some(found) => {
                return Err(Error::Schema {
                    column: found.to_string(),
                    detail: format!("expected `{expected}` at position {}", idx + 1),
                })
            }
            None => {
                return Err(Error::Schema {
                    column: expected.to_string(),
                    detail: "missing".into(),
                })
            }
        }
    }
    if let Some(extra) = headers.get(CSV_HEADER.len()) {
        return Err(Error::Schema {
            column: extra.to_string(),
            detail: "unexpected column".into(),
        });
    }
    Ok(())
}

fn check_field(column: &str, value: &str) -> std::result::Result<(), String> {
    fn parse<T: std::str::FromStr>(v: &str) -> std::result::Result<(), String> {
        v.parse::<T>().map(|_| ()).map_err(|_| format!("cannot parse `{v}`"))
    }
    match column {
        "algo" => value.parse::<Algo>().map(|_| ()).map_err(|e| e.to_string()),
        "init" => value.parse::<InitKind>().map(|_| ()).map_err(|e| e.to_string()),
        "seed" | "trial" => parse::<u64>(value),
        "n" | "m" | "p" | "r" | "iters" => parse::<usize>(value),
        "converged" | "success" => parse::<bool>(value),
        "re" if value.is_empty() => Ok(()),
        "re" | "runtime_ms" => {
            let v: f64 = value.parse().map_err(|_| format!("cannot parse `{value}`"))?;
            if v >= 0.0 {
                Ok(())
            } else {
                Err(format!("`{value}` is not a nonnegative number"))
            }
        }
        _ => Ok(()),
    }
}

fn check_row(row: &csv::StringRecord, line: u64) -> Result<()> {
    if row.len() != CSV_HEADER.len() {
        let column = CSV_HEADER.get(row.len()).unwrap_or(&CSV_HEADER[CSV_HEADER.len() - 1]);
        return Err(Error::Schema {
            column: column.to_string(),
            detail: format!("line {line}: row has {} fields, expected {}", row.len(), CSV_HEADER.len()),
        });
    }
    for (column, value) in CSV_HEADER.iter().zip(row.iter()) {
        check_field(column, value).map_err(|detail| Error::Schema {
            column: column.to_string(),
            detail: format!("line {line}: {detail}"),
        })?;
    }
    Ok(())
}

fn unit_key(record: &TrialRecord) -> (usize, usize, u64) {
    (record.r, record.p, record.trial)
}

/// Units of a previous partial run that already have every row.
fn completed_units(config: &SweepConfig, out: &Path) -> Result<(Vec<TrialRecord>, HashSet<(usize, usize, u64)>)> {
    let meta = meta_path(out);
    if !out.exists() {
        return Ok((Vec::new(), HashSet::new()));
    }
    let previous: SweepMeta = match fs::read_to_string(&meta) {
        Ok(text) => serde_json::from_str(&text).map_err(|source| Error::Json {
            path: meta.clone(),
            source,
        })?,
        Err(_) => {
            return Err(Error::InvalidConfig(format!(
                "{} exists without {}; remove it or choose another output",
                out.display(),
                meta.display()
            )))
        }
    };
    if previous != SweepMeta::new(config) {
        return Err(Error::InvalidConfig(format!(
            "{} was produced by a different sweep configuration",
            out.display()
        )));
    }
    let records = read_records(out)?;
    let mut counts: BTreeMap<(usize, usize, u64), usize> = BTreeMap::new();
    for r in &records {
        *counts.entry(unit_key(r)).or_default() += 1;
    }
    let done: HashSet<_> = counts
        .into_iter()
        .filter(|&(_, c)| c == config.rows_per_unit())
        .map(|(k, _)| k)
        .collect();
    let kept = records.into_iter().filter(|r| done.contains(&unit_key(r))).collect();
    Ok((kept, done))
}

fn csv_writer(path: &Path, append: bool) -> Result<csv::Writer<File>> {
    let file = OpenOptions::new()
        .create(true)
        .write(true)
        .append(append)
        .truncate(!append)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    Ok(csv::WriterBuilder::new().has_headers(false).from_writer(file))
}

fn write_header(writer: &mut csv::Writer<File>) -> Result<()> {
    writer.write_record(CSV_HEADER)?;
    Ok(())
}

fn write_rows(writer: &mut csv::Writer<File>, rows: &[TrialRecord], path: &Path) -> Result<()> {
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

/// Runs the sweep on `jobs` worker threads, writing rows to `out` as units finish.
///
/// If `out` already holds a partial run of the same configuration, completed units are
/// kept and only the missing ones are computed; the file is then rewritten in unit order.
pub fn run_sweep(config: &SweepConfig, out: &Path, jobs: usize) -> Result<Vec<TrialRecord>> {
    config.validate()?;
    if jobs == 0 {
        return Err(Error::InvalidConfig("jobs must be at least 1".into()));
    }
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let cells = config.cells();
    let (kept, done) = completed_units(config, out)?;
    let resumed = !kept.is_empty();

    let meta = meta_path(out);
    let meta_text = serde_json::to_string_pretty(&SweepMeta::new(config)).map_err(|source| Error::Json {
        path: meta.clone(),
        source,
    })?;
    fs::write(&meta, meta_text + "\n").map_err(|e| Error::io(&meta, e))?;

    let units: Vec<(usize, u64)> = (0..cells.len())
        .flat_map(|c| (0..config.trials).map(move |t| (c, t)))
        .collect();
    let pending: Vec<(usize, usize, u64)> = units
        .iter()
        .enumerate()
        .filter(|(_, &(c, t))| !done.contains(&(cells[c].0, cells[c].1, t)))
        .map(|(i, &(c, t))| (i, c, t))
        .collect();

    let mut writer = csv_writer(out, resumed)?;
    if !resumed {
        write_header(&mut writer)?;
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let (tx, rx) = mpsc::channel::<(usize, Result<Vec<TrialRecord>>)>();
    let mut fresh: BTreeMap<usize, Vec<TrialRecord>> = BTreeMap::new();
    let order: Vec<usize> = pending.iter().map(|&(i, _, _)| i).collect();

    std::thread::scope(|scope| -> Result<()> {
        scope.spawn(|| {
            pool.install(|| {
                pending.par_iter().for_each_with(tx, |tx, &(i, c, t)| {
                    let _ = tx.send((i, run_unit(config, c, t)));
                });
            });
        });
        // reorder buffer: rows are appended strictly in unit order
        let mut buffer: BTreeMap<usize, Vec<TrialRecord>> = BTreeMap::new();
        let mut next = 0;
        for (i, rows) in rx {
            buffer.insert(i, rows?);
            while next < order.len() {
                let Some(rows) = buffer.remove(&order[next]) else { break };
                write_rows(&mut writer, &rows, out)?;
                fresh.insert(order[next], rows);
                next += 1;
            }
        }
        Ok(())
    })?;

    let mut by_unit: BTreeMap<usize, Vec<TrialRecord>> = fresh;
    if resumed {
        let index: BTreeMap<(usize, usize, u64), usize> = units
            .iter()
            .enumerate()
            .map(|(i, &(c, t))| ((cells[c].0, cells[c].1, t), i))
            .collect();
        for row in kept {
            by_unit.entry(index[&unit_key(&row)]).or_default().push(row);
        }
    }
    let all: Vec<TrialRecord> = by_unit.into_values().flatten().collect();
    if resumed {
        let mut writer = csv_writer(out, false)?;
        write_header(&mut writer)?;
        write_rows(&mut writer, &all, out)?;
    }
    Ok(all)
}
