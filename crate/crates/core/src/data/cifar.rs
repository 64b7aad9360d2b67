//! CIFAR-10 binary batches: records of one label byte and 3072 pixel bytes
//! (1024 red, 1024 green, 1024 blue).

use std::path::{Path, PathBuf};

use ndarray::Array2;

use super::{read_maybe_gz, Dataset};
use crate::error::{Error, Result};

const PIXELS: usize = 3072;
const RECORD: usize = PIXELS + 1;

/// Read one batch file, or every `*.bin` file of a directory in name order.
pub fn load_cifar10(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let files: Vec<PathBuf> = if path.is_dir() {
        let mut v: Vec<PathBuf> = std::fs::read_dir(path)
            .map_err(|e| Error::io(path, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "bin"))
            .collect();
        v.sort();
        if v.is_empty() {
            return Err(Error::Malformed {
                path: path.into(),
                detail: "no .bin batch files".into(),
            });
        }
        v
    } else {
        vec![path.to_path_buf()]
    };
    let mut pixels = Vec::new();
    let mut labels = Vec::new();
    for f in &files {
        let raw = read_maybe_gz(f)?;
        if raw.is_empty() || raw.len() % RECORD != 0 {
            return Err(Error::Truncated {
                path: f.clone(),
                detail: format!(
                    "{} bytes is not a multiple of the {RECORD}-byte record",
                    raw.len()
                ),
            });
        }
        for rec in raw.chunks_exact(RECORD) {
            if rec[0] >= 10 {
                return Err(Error::Malformed {
                    path: f.clone(),
                    detail: format!("label {} outside 0..10", rec[0]),
                });
            }
            labels.push(rec[0] as usize);
            pixels.extend(rec[1..].iter().map(|&p| p as f64 / 255.0));
        }
    }
    let n = labels.len();
    Dataset::new(
        Array2::from_shape_vec((n, PIXELS), pixels).expect("cifar shape"),
        labels,
        10,
        format!("cifar10:{}", path.display()),
    )
}
