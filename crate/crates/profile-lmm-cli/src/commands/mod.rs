//! Subcommand implementations.

pub mod fit;
pub mod postprocess;
pub mod simulate;
pub mod study;
pub mod validate;

use std::fs;
use std::path::Path;

use profile_lmm::Error;
use serde::Serialize;

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Error> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    fs::write(path, text)?;
    Ok(())
}

pub fn ensure_dir(path: &Path) -> Result<(), Error> {
    fs::create_dir_all(path)?;
    Ok(())
}

/// Sorted-sample quantile (type 1: smallest value at cumulative p).
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let target = (p * n as f64).ceil() as usize;
    sorted[target.clamp(1, n) - 1]
}

/// Evenly spaced observation subset.
pub fn evenly_spaced(n: usize, size: usize) -> Vec<usize> {
    if size == 0 || size >= n {
        (0..n).collect()
    } else {
        (0..size).map(|k| k * n / size).collect()
    }
}
