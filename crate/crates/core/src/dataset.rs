//! On-disk datasets: a JSON manifest next to raw little-endian `f64` blobs.
//!
//! All matrices are column-major and complex entries are interleaved `(re, im)`.
//! The `A` blob holds the `M` sensing matrices as consecutive `P x N` blocks, the `Y`
//! blob is the real `P x M` magnitude matrix and the optional `X` blob is the complex
//! `N x M` ground truth.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::datagen::{MeasurementSet, SignalMatrix};
use crate::error::{Error, Result};
use crate::linalg::{CMatrix, RMatrix, C64};

pub const FORMAT_VERSION: u32 = 1;

/// File name used when a dataset is addressed by its directory.
pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetFiles {
    pub a: String,
    pub y: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub n: usize,
    pub m: usize,
    pub p: usize,
    #[serde(default)]
    pub r_true: Option<usize>,
    pub seed: u64,
    #[serde(default)]
    pub beta_true: Option<f64>,
    /// Blob paths, relative to the manifest's directory.
    pub files: DatasetFiles,
}

impl DatasetManifest {
    fn expected_len(&self, blob: Blob) -> u64 {
        let (n, m, p) = (self.n as u64, self.m as u64, self.p as u64);
        match blob {
            Blob::A => m * p * n * 16,
            Blob::Y => p * m * 8,
            Blob::X => n * m * 16,
        }
    }
}

#[derive(Clone, Copy)]
enum Blob {
    A,
    Y,
    X,
}

/// A dataset as loaded from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub ms: MeasurementSet,
    pub x: Option<SignalMatrix>,
}

fn manifest_path(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join(MANIFEST_NAME)
    } else {
        path.to_path_buf()
    }
}

fn push_complex(buf: &mut Vec<u8>, z: &C64) {
    buf.extend_from_slice(&z.re.to_le_bytes());
    buf.extend_from_slice(&z.im.to_le_bytes());
}

fn encode_complex<'a>(values: impl IntoIterator<Item = &'a C64>) -> Vec<u8> {
    let mut buf = Vec::new();
    for z in values {
        push_complex(&mut buf, z);
    }
    buf
}

fn decode_f64(bytes: &[u8]) -> impl Iterator<Item = f64> + '_ {
    bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
}

fn decode_complex(bytes: &[u8]) -> Vec<C64> {
    let reals: Vec<f64> = decode_f64(bytes).collect();
    reals.chunks_exact(2).map(|c| C64::new(c[0], c[1])).collect()
}

fn write_blob(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read_blob(path: &Path, expected: u64) -> Result<Vec<u8>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() as u64 != expected {
        return Err(Error::LengthMismatch {
            path: path.to_path_buf(),
            expected,
            actual: bytes.len() as u64,
        });
    }
    Ok(bytes)
}

/// Writes `manifest.json`, `a.bin`, `y.bin` and (when `x` is given) `x.bin` into `dir`.
/// Returns the manifest path.
pub fn write_dataset(
    dir: &Path,
    ms: &MeasurementSet,
    x: Option<&SignalMatrix>,
    seed: u64,
) -> Result<PathBuf> {
    if let Some(x) = x {
        if x.x.shape() != (ms.n(), ms.m()) {
            return Err(Error::DimensionMismatch(format!(
                "ground truth is {:?}, measurements imply ({}, {})",
                x.x.shape(),
                ms.n(),
                ms.m()
            )));
        }
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let manifest = DatasetManifest {
        format_version: FORMAT_VERSION,
        n: ms.n(),
        m: ms.m(),
        p: ms.p(),
        r_true: x.and_then(|x| x.rank_hint),
        seed,
        beta_true: ms.beta_true(),
        files: DatasetFiles {
            a: "a.bin".into(),
            y: "y.bin".into(),
            x: x.map(|_| "x.bin".into()),
        },
    };

    write_blob(
        &dir.join(&manifest.files.a),
        &encode_complex(ms.sensing().iter().flat_map(|am| am.iter())),
    )?;
    let y_bytes: Vec<u8> = ms.y().iter().flat_map(|v| v.to_le_bytes()).collect();
    write_blob(&dir.join(&manifest.files.y), &y_bytes)?;
    if let (Some(x), Some(name)) = (x, &manifest.files.x) {
        write_blob(&dir.join(name), &encode_complex(x.x.iter()))?;
    }

    let path = dir.join(MANIFEST_NAME);
    let text = serde_json::to_string_pretty(&manifest).map_err(|source| Error::Json {
        path: path.clone(),
        source,
    })?;
    fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Reads a dataset from its manifest file or the directory holding `manifest.json`.
pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let path = manifest_path(path);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: DatasetManifest = serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.clone(),
        source,
    })?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(Error::UnsupportedVersion(manifest.format_version));
    }
    let (n, m, p) = (manifest.n, manifest.m, manifest.p);
    if n == 0 || m == 0 || p == 0 {
        return Err(Error::DimensionMismatch(format!(
            "{}: dimensions must be positive (n={n}, m={m}, p={p})",
            path.display()
        )));
    }
    let base = path.parent().unwrap_or(Path::new("."));

    let a_bytes = read_blob(&base.join(&manifest.files.a), manifest.expected_len(Blob::A))?;
    let a_values = decode_complex(&a_bytes);
    let a: Vec<CMatrix> = a_values
        .chunks_exact(p * n)
        .map(|block| CMatrix::from_column_slice(p, n, block))
        .collect();

    let y_bytes = read_blob(&base.join(&manifest.files.y), manifest.expected_len(Blob::Y))?;
    let y = RMatrix::from_iterator(p, m, decode_f64(&y_bytes));

    let x = match &manifest.files.x {
        Some(name) => {
            let bytes = read_blob(&base.join(name), manifest.expected_len(Blob::X))?;
            Some(SignalMatrix::new(
                CMatrix::from_column_slice(n, m, &decode_complex(&bytes)),
                manifest.r_true,
            ))
        }
        None => None,
    };

    let ms = MeasurementSet::new(a, y, manifest.beta_true)?;
    Ok(Dataset { manifest, ms, x })
}
