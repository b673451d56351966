//! Binary checkpoint format for training state.
//!
//! Layout, all integers little-endian: magic `TEMD`, version u16, the seven
//! architecture fields as u32s (n_fps, n_proxy, k_edge, d_model, n_heads,
//! n_layers, q), the parameter tensors, the optimizer moment tensors (the
//! same set prefixed `m.` then `v.`), the step counter u64, and the run
//! seed u64. Each tensor is (name length u32, name bytes, rank u32, dims as
//! u32s, 32-bit float data). Values are stored in 32 bits; the in-memory
//! state is kept rounded to f32 precision, so save and load are exact
//! inverses.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::model::{ModelConfig, ModelParams, TrainState};
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"TEMD";
const VERSION: u16 = 1;

fn write_u32<W: Write>(w: &mut W, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn write_tensors<W: Write>(w: &mut W, params: &ModelParams, prefix: &str) -> Result<()> {
    for (name, tensor) in params.named() {
        let full = format!("{prefix}{name}");
        write_u32(w, full.len() as u32)?;
        w.write_all(full.as_bytes())?;
        let dims = tensor.dims();
        write_u32(w, dims.len() as u32)?;
        for d in &dims {
            write_u32(w, *d as u32)?;
        }
        for &v in tensor.as_slice() {
            w.write_all(&(v as f32).to_le_bytes())?;
        }
    }
    Ok(())
}

/// Writes the full training state to `path`.
pub fn save_checkpoint(state: &TrainState, path: &Path) -> Result<()> {
    state.validate()?;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    let c = &state.config;
    for v in [c.n_fps, c.n_proxy, c.k_edge, c.d_model, c.n_heads, c.n_layers, c.q] {
        write_u32(&mut w, v as u32)?;
    }
    write_u32(&mut w, state.params.named().len() as u32)?;
    write_tensors(&mut w, &state.params, "")?;
    write_u32(&mut w, 2 * state.params.named().len() as u32)?;
    write_tensors(&mut w, &state.m, "m.")?;
    write_tensors(&mut w, &state.v, "v.")?;
    w.write_all(&state.step.to_le_bytes())?;
    w.write_all(&state.seed.to_le_bytes())?;
    w.flush()?;
    Ok(())
}

struct Reader<R: Read> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn u16(&mut self) -> Result<u16> {
        let mut buf = [0u8; 2];
        self.read(&mut buf)?;
        Ok(u16::from_le_bytes(buf))
    }

    fn u32(&mut self) -> Result<u32> {
        let mut buf = [0u8; 4];
        self.read(&mut buf)?;
        Ok(u32::from_le_bytes(buf))
    }

    fn u64(&mut self) -> Result<u64> {
        let mut buf = [0u8; 8];
        self.read(&mut buf)?;
        Ok(u64::from_le_bytes(buf))
    }

    fn f32(&mut self) -> Result<f32> {
        let mut buf = [0u8; 4];
        self.read(&mut buf)?;
        Ok(f32::from_le_bytes(buf))
    }

    fn read(&mut self, buf: &mut [u8]) -> Result<()> {
        self.inner
            .read_exact(buf)
            .map_err(|_| Error::Format("checkpoint file is truncated".into()))
    }
}

/// Reads the tensors of one section in canonical order into `params`,
/// verifying every name and shape against the expectation.
fn read_tensors<R: Read>(r: &mut Reader<R>, params: &mut ModelParams, prefix: &str) -> Result<()> {
    for (name, tensor) in params.named_mut() {
        let expect = format!("{prefix}{name}");
        let name_len = r.u32()? as usize;
        if name_len > 4096 {
            return Err(Error::Format(format!("implausible tensor name length {name_len}")));
        }
        let mut name_buf = vec![0u8; name_len];
        r.read(&mut name_buf)?;
        let got = String::from_utf8(name_buf)
            .map_err(|_| Error::Format("tensor name is not UTF-8".into()))?;
        if got != expect {
            return Err(Error::Format(format!(
                "unexpected tensor {got:?} where {expect:?} belongs"
            )));
        }
        let rank = r.u32()? as usize;
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(r.u32()? as usize);
        }
        if dims != tensor.dims() {
            return Err(Error::Shape(format!(
                "tensor {expect:?} has dims {dims:?}, expected {:?}",
                tensor.dims()
            )));
        }
        let slice = tensor.into_slice_mut();
        for v in slice.iter_mut() {
            let raw = r.f32()?;
            if !raw.is_finite() {
                return Err(Error::Format(format!("tensor {expect:?} contains non-finite values")));
            }
            *v = raw as f64;
        }
    }
    Ok(())
}

/// Reads a checkpoint back into a training state.
pub fn load_checkpoint(path: &Path) -> Result<TrainState> {
    let mut r = Reader { inner: BufReader::new(File::open(path)?) };
    let mut magic = [0u8; 4];
    r.read(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format(format!("bad checkpoint magic {magic:?}")));
    }
    let version = r.u16()?;
    if version != VERSION {
        return Err(Error::Format(format!(
            "unsupported checkpoint version {version}, expected {VERSION}"
        )));
    }
    let fields: Vec<usize> = (0..7).map(|_| r.u32().map(|v| v as usize)).collect::<Result<_>>()?;
    let config = ModelConfig {
        n_fps: fields[0],
        n_proxy: fields[1],
        k_edge: fields[2],
        d_model: fields[3],
        n_heads: fields[4],
        n_layers: fields[5],
        q: fields[6],
    };
    config.validate()?;

    let n_tensors = r.u32()? as usize;
    let mut params = ModelParams::zeros(&config);
    let expected = params.named().len();
    if n_tensors != expected {
        return Err(Error::Format(format!(
            "checkpoint lists {n_tensors} parameter tensors, expected {expected}"
        )));
    }
    read_tensors(&mut r, &mut params, "")?;

    let n_moments = r.u32()? as usize;
    if n_moments != 2 * expected {
        return Err(Error::Format(format!(
            "checkpoint lists {n_moments} moment tensors, expected {}",
            2 * expected
        )));
    }
    let mut m = ModelParams::zeros(&config);
    let mut v = ModelParams::zeros(&config);
    read_tensors(&mut r, &mut m, "m.")?;
    read_tensors(&mut r, &mut v, "v.")?;

    let step = r.u64()?;
    let seed = r.u64()?;
    let mut trailing = [0u8; 1];
    if r.inner.read(&mut trailing).map_err(Error::Io)? != 0 {
        return Err(Error::Format("trailing bytes after checkpoint payload".into()));
    }
    Ok(TrainState { config, params, m, v, step, seed })
}
