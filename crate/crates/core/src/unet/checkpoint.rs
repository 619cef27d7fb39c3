//! `CKPT1` checkpoint files.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! b"CKPT1"
//! u32 layer mode (0 standard, 1 complex), u32 in_channels, u32 out_channels, u32 base_width
//! u32 fold, u32 epoch, f64 validation_loss, u64 config fingerprint
//! u32 array count, then per array: u32 name length, UTF-8 name, u32 ndim, ndim × u32 dims
//! f32 parameter data for every array, in manifest order
//! ```

use std::io::{Read, Write};
use std::path::Path;

use super::params::{LayerMode, UNetParams};
use crate::error::{Error, Result};

pub const CKPT_MAGIC: &[u8; 5] = b"CKPT1";

/// Trained parameters and where in training they came from.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: UNetParams<f32>,
    pub fold: u32,
    pub epoch: u32,
    pub validation_loss: f64,
    pub fingerprint: u64,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let p = &self.params;
        let mut out = Vec::with_capacity(64 + 4 * p.param_count());
        out.extend_from_slice(CKPT_MAGIC);
        for v in [
            p.mode.tag(),
            p.in_channels as u32,
            p.out_channels as u32,
            p.base_width as u32,
            self.fold,
            self.epoch,
        ] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&self.validation_loss.to_le_bytes());
        out.extend_from_slice(&self.fingerprint.to_le_bytes());
        let arrays = p.arrays();
        out.extend_from_slice(&(arrays.len() as u32).to_le_bytes());
        for a in &arrays {
            out.extend_from_slice(&(a.name.len() as u32).to_le_bytes());
            out.extend_from_slice(a.name.as_bytes());
            out.extend_from_slice(&(a.shape.len() as u32).to_le_bytes());
            for &d in &a.shape {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
        }
        for a in &arrays {
            for v in a.values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], origin: &Path) -> Result<Self> {
        let mut r = ByteReader { bytes, pos: 0, origin };
        if r.take(5)? != CKPT_MAGIC {
            return Err(Error::format(origin, "missing CKPT1 magic"));
        }
        let mode_tag = r.u32()?;
        let mode = LayerMode::from_tag(mode_tag)
            .ok_or_else(|| Error::format(origin, format!("unknown layer mode tag {mode_tag}")))?;
        let (in_ch, out_ch, width) = (r.u32()? as usize, r.u32()? as usize, r.u32()? as usize);
        let (fold, epoch) = (r.u32()?, r.u32()?);
        let validation_loss = f64::from_le_bytes(r.take(8)?.try_into().expect("8 bytes"));
        let fingerprint = u64::from_le_bytes(r.take(8)?.try_into().expect("8 bytes"));

        let mut params = UNetParams::<f32>::zeros(mode, in_ch, out_ch, width)
            .map_err(|e| Error::format(origin, e.to_string()))?;
        let expected: Vec<(String, Vec<usize>)> = params
            .arrays()
            .into_iter()
            .map(|a| (a.name, a.shape))
            .collect();
        let count = r.u32()? as usize;
        if count != expected.len() {
            return Err(Error::format(
                origin,
                format!("{count} arrays, layout expects {}", expected.len()),
            ));
        }
        for (name, shape) in &expected {
            let len = r.u32()? as usize;
            let got_name = std::str::from_utf8(r.take(len)?)
                .map_err(|_| Error::format(origin, "array name is not UTF-8"))?;
            let ndim = r.u32()? as usize;
            let mut dims = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                dims.push(r.u32()? as usize);
            }
            if got_name != name || &dims != shape {
                return Err(Error::format(
                    origin,
                    format!("manifest entry {got_name} {dims:?} does not match {name} {shape:?}"),
                ));
            }
        }
        for arr in params.arrays_mut() {
            for v in arr.iter_mut() {
                *v = f32::from_le_bytes(r.take(4)?.try_into().expect("4 bytes"));
            }
        }
        if r.pos != bytes.len() {
            return Err(Error::format(origin, "trailing bytes after parameter data"));
        }
        if !params.is_finite() || !validation_loss.is_finite() {
            return Err(Error::format(origin, "non-finite values in checkpoint"));
        }
        Ok(Self {
            params,
            fold,
            epoch,
            validation_loss,
            fingerprint,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }
}

struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
    origin: &'a Path,
}

impl<'a> ByteReader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::format(self.origin, "unexpected end of file"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}
