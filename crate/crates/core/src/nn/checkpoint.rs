//! Binary parameter checkpoints.
//!
//! All integers are little-endian `u32`, all reals little-endian `f64`.
//!
//! ```text
//! magic        8 bytes  "FSOCNN01"
//! arch         u8       0 = MLP, 1 = RNN, 2 = LSTM
//! input_dim    u32
//! output_dim   u32
//! window_len   u32
//! n_hidden     u32
//! hidden_dims  u32 x n_hidden
//! n_tensors    u32
//! per tensor, in layout order:
//!   rows u32, cols u32, values f64 x rows*cols (row-major)
//! has_norm     u8       0 or 1
//! if has_norm: min f64 x 3, max f64 x 3 (voltage, current, temperature)
//! ```

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use super::{Arch, NetworkConfig, NetworkParams};
use crate::data::Normalizer;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"FSOCNN01";

/// Parameters plus the input normalization they were trained with.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: NetworkParams,
    pub normalizer: Option<Normalizer>,
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

fn put_u32(out: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| bad(format!("dimension {v} does not fit in u32")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

pub fn write_checkpoint(w: &mut impl Write, params: &NetworkParams, normalizer: Option<&Normalizer>) -> Result<()> {
    let c = params.config();
    let mut out = Vec::with_capacity(64 + 8 * params.len());
    out.extend_from_slice(MAGIC);
    out.push(c.arch.code());
    put_u32(&mut out, c.input_dim)?;
    put_u32(&mut out, c.output_dim)?;
    put_u32(&mut out, c.window_len)?;
    put_u32(&mut out, c.hidden_dims.len())?;
    for &h in &c.hidden_dims {
        put_u32(&mut out, h)?;
    }
    put_u32(&mut out, params.layout().tensors().len())?;
    for t in params.layout().tensors() {
        put_u32(&mut out, t.rows)?;
        put_u32(&mut out, t.cols)?;
        for v in &params.values()[t.range()] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    match normalizer {
        None => out.push(0),
        Some(n) => {
            out.push(1);
            for v in n.min.iter().chain(&n.max) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    w.write_all(&out)?;
    Ok(())
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| bad(format!("truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<usize> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")) as usize)
    }

    fn f64(&mut self) -> Result<f64> {
        let b = self.take(8)?;
        Ok(f64::from_le_bytes(b.try_into().expect("8 bytes")))
    }
}

pub fn read_checkpoint(r: &mut impl Read) -> Result<Checkpoint> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    let mut cur = Cursor { buf: &buf, pos: 0 };
    if cur.take(MAGIC.len())? != MAGIC {
        return Err(bad("bad magic"));
    }
    let code = cur.u8()?;
    let arch = Arch::from_code(code).ok_or_else(|| bad(format!("unknown architecture code {code}")))?;
    let input_dim = cur.u32()?;
    let output_dim = cur.u32()?;
    let window_len = cur.u32()?;
    let n_hidden = cur.u32()?;
    if n_hidden > 1024 {
        return Err(bad(format!("implausible layer count {n_hidden}")));
    }
    let hidden_dims = (0..n_hidden).map(|_| cur.u32()).collect::<Result<Vec<_>>>()?;
    let config = NetworkConfig {
        arch,
        input_dim,
        hidden_dims,
        output_dim,
        window_len,
    };
    let mut params = NetworkParams::zeros(&config).map_err(|e| bad(e.to_string()))?;
    let tensors = params.layout().tensors().to_vec();
    let n_tensors = cur.u32()?;
    if n_tensors != tensors.len() {
        return Err(bad(format!("expected {} tensors, found {n_tensors}", tensors.len())));
    }
    let values = params.values_mut();
    for t in &tensors {
        let (rows, cols) = (cur.u32()?, cur.u32()?);
        if (rows, cols) != (t.rows, t.cols) {
            return Err(bad(format!(
                "{}: expected {}x{}, found {rows}x{cols}",
                t.name, t.rows, t.cols
            )));
        }
        for v in &mut values[t.range()] {
            *v = cur.f64()?;
        }
    }
    let normalizer = match cur.u8()? {
        0 => None,
        1 => {
            let mut n = Normalizer { min: [0.0; 3], max: [0.0; 3] };
            for v in n.min.iter_mut().chain(n.max.iter_mut()) {
                *v = cur.f64()?;
            }
            Some(n)
        }
        other => return Err(bad(format!("bad normalizer flag {other}"))),
    };
    if cur.pos != buf.len() {
        return Err(bad(format!("{} trailing bytes", buf.len() - cur.pos)));
    }
    Ok(Checkpoint { params, normalizer })
}

pub fn save_checkpoint(path: impl AsRef<Path>, params: &NetworkParams, normalizer: Option<&Normalizer>) -> Result<()> {
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    write_checkpoint(&mut f, params, normalizer)?;
    f.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    read_checkpoint(&mut fs::File::open(path)?)
}
