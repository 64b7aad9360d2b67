//! Network checkpoints.
//!
//! Layout (little-endian): magic `RPLN1`, `u32` layer count, then per layer
//! a `u8` kind followed by its dimensions as `u32`s and its weights as f64
//! row-major:
//!
//! - kind 0, dense: `out, in`, `out * in` weights;
//! - kind 1, conv: `in_c, in_h, in_w, out_c, kernel_h, kernel_w, stride, pad`,
//!   `out_c * in_c * kernel_h * kernel_w` weights;
//! - kind 2, residual: `branch_len`, then that many dense/conv records.

use std::path::Path;

use relubridge::network::{Affine, Conv2d, Dense, Layer, LayerGraph, Residual, Shape3};
use relubridge::Error;

use crate::CliError;

pub const MAGIC: &[u8; 5] = b"RPLN1";

const DENSE: u8 = 0;
const CONV: u8 = 1;
const RESIDUAL: u8 = 2;

fn put_u32(buf: &mut Vec<u8>, v: usize) {
    buf.extend((v as u32).to_le_bytes());
}

fn put_affine(buf: &mut Vec<u8>, a: &Affine) {
    match a {
        Affine::Dense(d) => {
            buf.push(DENSE);
            put_u32(buf, d.weights().nrows());
            put_u32(buf, d.weights().ncols());
        }
        Affine::Conv2d(c) => {
            buf.push(CONV);
            let i = c.input_shape();
            let (kh, kw) = c.kernel_size();
            for v in [
                i.channels,
                i.height,
                i.width,
                c.output_shape().channels,
                kh,
                kw,
                c.stride(),
                c.pad(),
            ] {
                put_u32(buf, v);
            }
        }
    }
    for w in a.weights() {
        buf.extend(w.to_le_bytes());
    }
}

pub fn encode(net: &LayerGraph) -> Vec<u8> {
    let mut buf = MAGIC.to_vec();
    put_u32(&mut buf, net.layers().len());
    for layer in net.layers() {
        match layer {
            Layer::Affine(a) => put_affine(&mut buf, a),
            Layer::Residual(r) => {
                buf.push(RESIDUAL);
                put_u32(&mut buf, r.branch().len());
                for a in r.branch() {
                    put_affine(&mut buf, a);
                }
            }
        }
    }
    buf
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl Reader<'_> {
    fn take(&mut self, n: usize, what: &str) -> Result<&[u8], Error> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let Some(end) = end else {
            return Err(Error::Truncated {
                path: self.path.into(),
                detail: format!("{what} at byte {}", self.pos),
            });
        };
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8, Error> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &str) -> Result<usize, Error> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")) as usize)
    }

    fn weights(&mut self, n: usize) -> Result<Vec<f64>, Error> {
        let bytes = n
            .checked_mul(8)
            .ok_or_else(|| self.malformed("weight count overflows"))?;
        Ok(self
            .take(bytes, "weights")?
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
            .collect())
    }

    fn malformed(&self, detail: impl Into<String>) -> Error {
        Error::Malformed {
            path: self.path.into(),
            detail: detail.into(),
        }
    }

    fn affine(&mut self, kind: u8) -> Result<Affine, Error> {
        match kind {
            DENSE => {
                let out = self.u32("dense rows")?;
                let inp = self.u32("dense cols")?;
                let w = self.weights(out.saturating_mul(inp))?;
                Ok(Affine::Dense(
                    Dense::from_vec(out, inp, w).map_err(|e| self.malformed(e.to_string()))?,
                ))
            }
            CONV => {
                let mut d = [0usize; 8];
                for v in d.iter_mut() {
                    *v = self.u32("conv header")?;
                }
                let [ic, ih, iw, oc, kh, kw, stride, pad] = d;
                let n = oc.saturating_mul(ic).saturating_mul(kh).saturating_mul(kw);
                let w = self.weights(n)?;
                let conv = Conv2d::new(Shape3::new(ic, ih, iw), oc, kh, kw, stride, pad, w)
                    .map_err(|e| self.malformed(e.to_string()))?;
                Ok(Affine::Conv2d(conv))
            }
            k => Err(self.malformed(format!("unknown layer kind {k}"))),
        }
    }
}

pub fn decode(buf: &[u8], path: &Path) -> Result<LayerGraph, Error> {
    if buf.len() < MAGIC.len() || &buf[..MAGIC.len()] != MAGIC {
        let mut head = [0u8; 4];
        for (h, b) in head.iter_mut().zip(buf) {
            *h = *b;
        }
        return Err(Error::BadMagic {
            path: path.into(),
            found: u32::from_be_bytes(head),
            expected: u32::from_be_bytes(*b"RPLN"),
        });
    }
    let mut r = Reader {
        buf,
        pos: MAGIC.len(),
        path,
    };
    let count = r.u32("layer count")?;
    let mut layers = Vec::new();
    for _ in 0..count {
        let kind = r.u8("layer kind")?;
        if kind == RESIDUAL {
            let n = r.u32("branch length")?;
            let mut branch = Vec::new();
            for _ in 0..n {
                let k = r.u8("branch layer kind")?;
                branch.push(r.affine(k)?);
            }
            layers.push(Layer::Residual(
                Residual::new(branch).map_err(|e| r.malformed(e.to_string()))?,
            ));
        } else {
            layers.push(Layer::Affine(r.affine(kind)?));
        }
    }
    if r.pos != buf.len() {
        return Err(r.malformed(format!("{} trailing bytes", buf.len() - r.pos)));
    }
    let input_dim = layers.first().map_or(0, Layer::in_dim);
    LayerGraph::new(input_dim, layers).map_err(|e| r.malformed(e.to_string()))
}

pub fn save_checkpoint(net: &LayerGraph, path: impl AsRef<Path>) -> Result<(), CliError> {
    let path = path.as_ref();
    std::fs::write(path, encode(net)).map_err(|e| CliError::output(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<LayerGraph, Error> {
    let path = path.as_ref();
    let buf = std::fs::read(path).map_err(|e| Error::Io {
        path: path.into(),
        source: e,
    })?;
    decode(&buf, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use relubridge::network::{he_init, Architecture};

    fn nets() -> Vec<LayerGraph> {
        vec![
            he_init(&Architecture::mlp(7, &[5, 4], 3), 1).unwrap(),
            he_init(
                &"2x5x5 | conv:3:3:2:1 res[conv:3:3:1:1 conv:3:3:1:1] dense:4"
                    .parse()
                    .unwrap(),
                2,
            )
            .unwrap(),
        ]
    }

    #[test]
    fn round_trip_bit_exact() {
        for net in nets() {
            let bytes = encode(&net);
            let back = decode(&bytes, Path::new("mem")).unwrap();
            let bits = |n: &LayerGraph| {
                n.weights()
                    .iter()
                    .flat_map(|w| w.iter().map(|v| v.to_bits()))
                    .collect::<Vec<_>>()
            };
            assert_eq!(bits(&net), bits(&back));
            assert_eq!(net.widths(), back.widths());
            assert_eq!(encode(&back), bytes);
        }
    }

    #[test]
    fn corrupt_inputs() {
        let net = &nets()[0];
        let bytes = encode(net);
        let p = Path::new("mem");
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode(&bad, p), Err(Error::BadMagic { .. })));
        assert!(matches!(
            decode(&bytes[..bytes.len() - 8], p),
            Err(Error::Truncated { .. })
        ));
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(matches!(decode(&extra, p), Err(Error::Malformed { .. })));
        // Claim 6 rows in the first dense layer instead of 5.
        let mut dims = bytes.clone();
        dims[10] = 6;
        assert!(decode(&dims, p).is_err());
        let mut kind = bytes.clone();
        kind[9] = 7;
        assert!(matches!(decode(&kind, p), Err(Error::Malformed { .. })));
    }
}
