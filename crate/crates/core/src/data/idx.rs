//! MNIST IDX files (optionally gzipped).

use std::path::Path;

use ndarray::Array2;

use super::{read_maybe_gz, Dataset};
use crate::error::{Error, Result};

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

fn be_u32(buf: &[u8], at: usize, path: &Path) -> Result<u32> {
    buf.get(at..at + 4)
        .map(|b| u32::from_be_bytes(b.try_into().expect("4 bytes")))
        .ok_or_else(|| Error::Truncated {
            path: path.into(),
            detail: "header".into(),
        })
}

fn check_magic(buf: &[u8], expected: u32, path: &Path) -> Result<()> {
    let found = be_u32(buf, 0, path)?;
    if found != expected {
        return Err(Error::BadMagic {
            path: path.into(),
            found,
            expected,
        });
    }
    Ok(())
}

/// Images scaled to `[0, 1]` and flattened to `rows * cols`. The class
/// count is 10.
pub fn load_idx(images_file: impl AsRef<Path>, labels_file: impl AsRef<Path>) -> Result<Dataset> {
    let (ipath, lpath) = (images_file.as_ref(), labels_file.as_ref());
    let img = read_maybe_gz(ipath)?;
    let lab = read_maybe_gz(lpath)?;
    check_magic(&img, IMAGES_MAGIC, ipath)?;
    check_magic(&lab, LABELS_MAGIC, lpath)?;

    let n = be_u32(&img, 4, ipath)? as usize;
    let rows = be_u32(&img, 8, ipath)? as usize;
    let cols = be_u32(&img, 12, ipath)? as usize;
    let d = rows * cols;
    let pixels = &img[16..];
    if pixels.len() < n * d {
        return Err(Error::Truncated {
            path: ipath.into(),
            detail: format!(
                "{} pixel bytes for {n} images of {rows}x{cols}",
                pixels.len()
            ),
        });
    }
    let nl = be_u32(&lab, 4, lpath)? as usize;
    let labels = &lab[8..];
    if labels.len() < nl {
        return Err(Error::Truncated {
            path: lpath.into(),
            detail: format!("{} label bytes for {nl} labels", labels.len()),
        });
    }
    if n != nl {
        return Err(Error::CountMismatch {
            images: n,
            labels: nl,
        });
    }
    if let Some(&bad) = labels[..n].iter().find(|&&l| l >= 10) {
        return Err(Error::Malformed {
            path: lpath.into(),
            detail: format!("label {bad} outside 0..10"),
        });
    }
    let inputs = Array2::from_shape_vec(
        (n, d),
        pixels[..n * d].iter().map(|&p| p as f64 / 255.0).collect(),
    )
    .expect("idx shape");
    Dataset::new(
        inputs,
        labels[..n].iter().map(|&l| l as usize).collect(),
        10,
        format!("idx:{}", ipath.display()),
    )
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use std::io::Write;

    pub(crate) fn write_idx(
        dir: &Path,
        n: usize,
        rows: usize,
        cols: usize,
    ) -> (std::path::PathBuf, std::path::PathBuf) {
        let ip = dir.join("img.idx");
        let lp = dir.join("lab.idx");
        let mut img = Vec::new();
        img.extend(IMAGES_MAGIC.to_be_bytes());
        for v in [n, rows, cols] {
            img.extend((v as u32).to_be_bytes());
        }
        img.extend((0..n * rows * cols).map(|i| (i * 37 % 256) as u8));
        let mut lab = Vec::new();
        lab.extend(LABELS_MAGIC.to_be_bytes());
        lab.extend((n as u32).to_be_bytes());
        lab.extend((0..n).map(|i| (i % 10) as u8));
        std::fs::write(&ip, img).unwrap();
        std::fs::write(&lp, lab).unwrap();
        (ip, lp)
    }

    #[test]
    fn reads_plain_and_gzip() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = write_idx(dir.path(), 7, 3, 2);
        let ds = load_idx(&ip, &lp).unwrap();
        assert_eq!((ds.len(), ds.dim(), ds.classes()), (7, 6, 10));
        assert_eq!(ds.inputs()[[0, 1]], 37.0 / 255.0);
        assert!(ds.inputs().iter().all(|&v| (0.0..=1.0).contains(&v)));

        let gz = dir.path().join("img.idx.gz");
        let mut enc = flate2::write::GzEncoder::new(Vec::new(), flate2::Compression::default());
        enc.write_all(&std::fs::read(&ip).unwrap()).unwrap();
        std::fs::write(&gz, enc.finish().unwrap()).unwrap();
        assert_eq!(load_idx(&gz, &lp).unwrap().inputs(), ds.inputs());
    }

    #[test]
    fn distinct_errors() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = write_idx(dir.path(), 4, 2, 2);
        assert!(matches!(load_idx(&lp, &lp), Err(Error::BadMagic { .. })));
        assert!(matches!(load_idx(&ip, &ip), Err(Error::BadMagic { .. })));

        let bytes = std::fs::read(&ip).unwrap();
        std::fs::write(&ip, &bytes[..bytes.len() - 1]).unwrap();
        assert!(matches!(load_idx(&ip, &lp), Err(Error::Truncated { .. })));
        std::fs::write(&ip, &bytes[..10]).unwrap();
        assert!(matches!(load_idx(&ip, &lp), Err(Error::Truncated { .. })));

        let (ip, _) = write_idx(dir.path(), 4, 2, 2);
        let other = tempfile::tempdir().unwrap();
        let (_, lp5) = write_idx(other.path(), 5, 2, 2);
        assert!(matches!(
            load_idx(&ip, &lp5),
            Err(Error::CountMismatch {
                images: 4,
                labels: 5
            })
        ));
        assert!(matches!(
            load_idx(dir.path().join("missing"), &lp5),
            Err(Error::Io { .. })
        ));
    }
}
