//! Datasets: MNIST IDX and CIFAR-10 binary readers, a little-endian cache
//! format, synthetic Gaussian inputs and seeded pair sampling.

mod cache;
mod cifar;
mod idx;

pub use cache::{load_cache, save_cache, CACHE_MAGIC};
pub use cifar::load_cifar10;
pub use idx::load_idx;

use std::fs::File;
use std::io::{BufReader, Read};
use std::path::Path;

use flate2::read::GzDecoder;
use ndarray::{Array2, ArrayView1};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng;

/// `n x d` inputs with class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    inputs: Array2<f64>,
    labels: Vec<usize>,
    classes: usize,
    provenance: String,
}

impl Dataset {
    pub fn new(
        inputs: Array2<f64>,
        labels: Vec<usize>,
        classes: usize,
        provenance: impl Into<String>,
    ) -> Result<Self> {
        if inputs.nrows() == 0 || inputs.ncols() == 0 {
            return Err(Error::InvalidArgument(
                "dataset must have n >= 1 and d >= 1".into(),
            ));
        }
        if labels.len() != inputs.nrows() {
            return Err(Error::CountMismatch {
                images: inputs.nrows(),
                labels: labels.len(),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::OutOfRange {
                index: bad,
                limit: classes,
            });
        }
        if inputs.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("dataset input"));
        }
        Ok(Dataset {
            inputs,
            labels,
            classes,
            provenance: provenance.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn inputs(&self) -> &Array2<f64> {
        &self.inputs
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.inputs.row(i)
    }

    /// The first `n` samples (all of them if `n >= len`).
    pub fn head(&self, n: usize) -> Dataset {
        let n = n.min(self.len());
        Dataset {
            inputs: self.inputs.slice(ndarray::s![..n, ..]).to_owned(),
            labels: self.labels[..n].to_vec(),
            classes: self.classes,
            provenance: format!("{}[..{n}]", self.provenance),
        }
    }
}

/// `n x d` i.i.d. standard normal entries; every label is 0.
pub fn synth_gaussian(n: usize, d: usize, seed: u64) -> Result<Dataset> {
    if n == 0 || d == 0 {
        return Err(Error::InvalidArgument(
            "synthetic data needs n >= 1 and d >= 1".into(),
        ));
    }
    let mut r = rng::stream(seed, rng::domain::SYNTH, 0);
    let data: Vec<f64> = (0..n * d).map(|_| r.sample(StandardNormal)).collect();
    Dataset::new(
        Array2::from_shape_vec((n, d), data).expect("synthetic shape"),
        vec![0; n],
        1,
        format!("gaussian(n={n}, d={d}, seed={seed})"),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PairMode {
    #[default]
    Any,
    WithinClass,
}

impl std::str::FromStr for PairMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "any" => Ok(PairMode::Any),
            "within-class" => Ok(PairMode::WithinClass),
            _ => Err(Error::InvalidArgument(format!("unknown pair mode `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairSample {
    pub i: usize,
    pub j: usize,
    pub x_i: Vec<f64>,
    pub x_j: Vec<f64>,
}

const MAX_DRAWS: usize = 10_000;

/// `count` pairs of distinct indices with distinct vectors. Pair `k` uses
/// its own stream, so any prefix of the list is stable in `count`.
pub fn sample_pairs(
    data: &Dataset,
    count: usize,
    seed: u64,
    mode: PairMode,
) -> Result<Vec<PairSample>> {
    let n = data.len();
    if n < 2 {
        return Err(Error::InvalidArgument(
            "pair sampling needs at least two samples".into(),
        ));
    }
    let by_class: Vec<Vec<usize>> = match mode {
        PairMode::Any => Vec::new(),
        PairMode::WithinClass => {
            let mut v = vec![Vec::new(); data.classes()];
            for (i, &l) in data.labels().iter().enumerate() {
                v[l].push(i);
            }
            if v.iter().all(|c| c.len() < 2) {
                return Err(Error::InvalidArgument("no class has two samples".into()));
            }
            v
        }
    };
    (0..count)
        .map(|k| {
            let mut r = rng::stream(seed, rng::domain::PAIRS, k as u64);
            for _ in 0..MAX_DRAWS {
                let (i, j) = match mode {
                    PairMode::Any => {
                        let i = r.random_range(0..n);
                        let j = r.random_range(0..n - 1);
                        (i, if j >= i { j + 1 } else { j })
                    }
                    PairMode::WithinClass => {
                        let i = r.random_range(0..n);
                        let members = &by_class[data.labels()[i]];
                        if members.len() < 2 {
                            continue;
                        }
                        let pos = members.binary_search(&i).expect("member of own class");
                        let j = r.random_range(0..members.len() - 1);
                        (i, members[if j >= pos { j + 1 } else { j }])
                    }
                };
                if data.row(i) != data.row(j) {
                    return Ok(PairSample {
                        i,
                        j,
                        x_i: data.row(i).to_vec(),
                        x_j: data.row(j).to_vec(),
                    });
                }
            }
            Err(Error::InvalidArgument(
                "could not draw a pair of distinct vectors".into(),
            ))
        })
        .collect()
}

/// Read a whole file, transparently gunzipping when it starts with the gzip
/// magic bytes.
pub(crate) fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut raw = Vec::new();
    BufReader::new(file)
        .read_to_end(&mut raw)
        .map_err(|e| Error::io(path, e))?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| Error::Malformed {
                path: path.into(),
                detail: format!("gzip: {e}"),
            })?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_moments() {
        let ds = synth_gaussian(10_000, 64, 3).unwrap();
        let n = (10_000 * 64) as f64;
        let mean = ds.inputs().sum() / n;
        let var = ds.inputs().mapv(|v| (v - mean).powi(2)).sum() / (n - 1.0);
        assert!(mean.abs() < 3.0 / n.sqrt());
        assert!((var - 1.0).abs() < 0.05);
        assert_eq!(ds, synth_gaussian(10_000, 64, 3).unwrap());
        assert!(synth_gaussian(0, 4, 1).is_err());
        assert!(synth_gaussian(4, 0, 1).is_err());
    }

    fn toy() -> Dataset {
        let x = Array2::from_shape_fn((12, 3), |(i, j)| ((i % 6) * 3 + j) as f64);
        Dataset::new(x, (0..12).map(|i| i % 3).collect(), 3, "toy").unwrap()
    }

    #[test]
    fn pairs_are_distinct_and_deterministic() {
        let ds = toy();
        for mode in [PairMode::Any, PairMode::WithinClass] {
            let a = sample_pairs(&ds, 200, 9, mode).unwrap();
            assert_eq!(a, sample_pairs(&ds, 200, 9, mode).unwrap());
            for p in &a {
                assert_ne!(p.i, p.j);
                assert_ne!(p.x_i, p.x_j);
                if mode == PairMode::WithinClass {
                    assert_eq!(ds.labels()[p.i], ds.labels()[p.j]);
                }
            }
            assert_eq!(&sample_pairs(&ds, 50, 9, mode).unwrap()[..], &a[..50]);
        }
        assert!(sample_pairs(&ds, 0, 1, PairMode::Any).unwrap().is_empty());
        assert!(sample_pairs(&ds.head(1), 3, 1, PairMode::Any).is_err());
    }

    #[test]
    fn identical_rows_are_redrawn() {
        // Rows 0 and 6 coincide; rows 0..6 are distinct.
        let ds = toy();
        assert_eq!(ds.row(0), ds.row(6));
        for p in sample_pairs(&ds, 500, 4, PairMode::Any).unwrap() {
            assert_ne!(p.x_i, p.x_j);
        }
    }

    #[test]
    fn invalid_datasets() {
        let x = Array2::zeros((2, 2));
        assert!(Dataset::new(x.clone(), vec![0], 2, "").is_err());
        assert!(Dataset::new(x.clone(), vec![0, 2], 2, "").is_err());
        let mut y = x.clone();
        y[[0, 0]] = f64::NAN;
        assert!(Dataset::new(y, vec![0, 1], 2, "").is_err());
    }
}
