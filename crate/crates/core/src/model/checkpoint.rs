//! Checkpoint format: magic `LGCK`, u32 LE version, u64 LE config hash,
//! f64 LE leaky slope, u32 LE graph-layer count, then one `(u64 rows,
//! u64 cols)` pair per graph layer followed by the head's pair, then every
//! weight matrix (row-major) and bias vector as f64 LE in layer order.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};

use super::{GcnParams, Linear};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"LGCK";
const VERSION: u32 = 1;

pub fn save_checkpoint(params: &GcnParams, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::with_capacity(64 + params.param_count() * 8);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&params.config_hash.to_le_bytes());
    buf.extend_from_slice(&params.leaky_slope.to_le_bytes());
    buf.extend_from_slice(&(params.layers.len() as u32).to_le_bytes());
    for l in params.layers.iter().chain(std::iter::once(&params.head)) {
        let (r, c) = l.shape();
        buf.extend_from_slice(&(r as u64).to_le_bytes());
        buf.extend_from_slice(&(c as u64).to_le_bytes());
    }
    for v in params.to_flat() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl Reader<'_> {
    fn take(&mut self, n: usize, what: &str) -> Result<&[u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Malformed {
                path: self.path.to_owned(),
                reason: format!("truncated while reading {what} at byte {}", self.pos),
            });
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

fn layer_name(i: usize, count: usize) -> String {
    if i == count {
        "head".into()
    } else {
        format!("layer {i}")
    }
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<GcnParams> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut rd = Reader {
        bytes: &bytes,
        pos: 0,
        path,
    };
    if rd.bytes.len() < 4 || rd.take(4, "magic")? != MAGIC {
        return Err(Error::BadMagic {
            path: path.to_owned(),
            expected: "LGCK",
        });
    }
    let version = rd.u32("version")?;
    if version != VERSION {
        return Err(Error::UnsupportedVersion {
            path: path.to_owned(),
            found: version,
        });
    }
    let config_hash = rd.u64("config hash")?;
    let leaky_slope = rd.f64("leaky slope")?;
    let count = rd.u32("layer count")? as usize;
    if count == 0 {
        return Err(Error::Malformed {
            path: path.to_owned(),
            reason: "no graph layers".into(),
        });
    }
    let mut shapes = Vec::with_capacity(count + 1);
    for i in 0..=count {
        let name = layer_name(i, count);
        let r = rd.u64(&format!("{name} rows"))? as usize;
        let c = rd.u64(&format!("{name} cols"))? as usize;
        shapes.push((r, c));
    }
    // Graph layer l maps 2·width_l → width_{l+1}; the head maps width_L → 2.
    let mut width = shapes[0].0 / 2;
    for (i, &(r, c)) in shapes.iter().enumerate() {
        let expected_rows = if i == count { width } else { 2 * width };
        let bad_head = i == count && c != 2;
        if r != expected_rows || r == 0 || c == 0 || bad_head {
            return Err(Error::Shape {
                layer: layer_name(i, count),
                reason: format!("stored shape {r}×{c} inconsistent with input width {width}"),
            });
        }
        width = c;
    }

    let mut read_linear = |i: usize, (r, c): (usize, usize)| -> Result<Linear> {
        let name = layer_name(i, count);
        let raw = rd.take(r * c * 8, &format!("{name} weights"))?;
        let w: Vec<f64> = raw.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect();
        let raw = rd.take(c * 8, &format!("{name} bias"))?;
        let b: Vec<f64> = raw.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect();
        Ok(Linear {
            weight: Array2::from_shape_vec((r, c), w).expect("shape checked"),
            bias: Array1::from(b),
        })
    };
    let mut layers = Vec::with_capacity(count);
    for (i, &shape) in shapes[..count].iter().enumerate() {
        layers.push(read_linear(i, shape)?);
    }
    let head = read_linear(count, shapes[count])?;
    if rd.pos != bytes.len() {
        return Err(Error::Malformed {
            path: path.to_owned(),
            reason: format!("{} trailing bytes", bytes.len() - rd.pos),
        });
    }
    Ok(GcnParams::from_parts(layers, head, leaky_slope, config_hash))
}
