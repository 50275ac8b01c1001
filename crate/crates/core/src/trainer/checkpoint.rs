//! Binary checkpoint container; the byte layout is documented in `docs/checkpoint.md`.

use std::fs;
use std::path::Path;

use crate::data::write_atomic;
use crate::error::{PceError, Result};
use crate::tensor::Tensor4;

pub const MAGIC: &[u8; 8] = b"PCECKPT\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub step: u64,
    /// Configuration snapshot in `key = value` form.
    pub config: String,
    pub tensors: Vec<(String, Tensor4<f32>)>,
    pub scalars: Vec<(String, u64)>,
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    put_u32(out, s.len() as u32);
    out.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(PceError::Checkpoint(format!(
                "truncated while reading {what} at byte {}",
                self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn string(&mut self, what: &str) -> Result<String> {
        let n = self.u32(what)? as usize;
        let at = self.pos;
        String::from_utf8(self.take(n, what)?.to_vec())
            .map_err(|_| PceError::Checkpoint(format!("{what} at byte {at} is not UTF-8")))
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        put_u32(&mut out, FORMAT_VERSION);
        out.extend_from_slice(&self.step.to_le_bytes());
        put_str(&mut out, &self.config);
        put_u32(&mut out, self.tensors.len() as u32);
        for (name, t) in &self.tensors {
            put_str(&mut out, name);
            put_u32(&mut out, 4);
            for d in t.shape() {
                put_u32(&mut out, d as u32);
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        put_u32(&mut out, self.scalars.len() as u32);
        for (name, v) in &self.scalars {
            put_str(&mut out, name);
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8, "magic")? != MAGIC {
            return Err(PceError::Checkpoint(
                "not a checkpoint file (bad magic)".into(),
            ));
        }
        let version = r.u32("version")?;
        if version != FORMAT_VERSION {
            return Err(PceError::Checkpoint(format!(
                "format version {version} unsupported (expected {FORMAT_VERSION})"
            )));
        }
        let step = r.u64("step")?;
        let config = r.string("config")?;
        let n = r.u32("tensor count")?;
        let mut tensors = Vec::with_capacity(n as usize);
        for _ in 0..n {
            let name = r.string("tensor name")?;
            let rank = r.u32("rank")?;
            if rank != 4 {
                return Err(PceError::Checkpoint(format!(
                    "{name}: rank {rank}, expected 4"
                )));
            }
            let mut shape = [0usize; 4];
            for d in &mut shape {
                *d = r.u32("dimension")? as usize;
            }
            let len = shape
                .iter()
                .try_fold(1usize, |a, &d| a.checked_mul(d))
                .and_then(|l| l.checked_mul(4))
                .ok_or_else(|| PceError::Checkpoint(format!("{name}: dimensions overflow")))?;
            let data = r
                .take(len, &name)?
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            tensors.push((name, Tensor4::from_vec(shape, data)?));
        }
        let n = r.u32("scalar count")?;
        let mut scalars = Vec::with_capacity(n as usize);
        for _ in 0..n {
            let name = r.string("scalar name")?;
            let v = r.u64(&name)?;
            scalars.push((name, v));
        }
        if r.pos != bytes.len() {
            return Err(PceError::Checkpoint(format!(
                "{} trailing bytes after byte {}",
                bytes.len() - r.pos,
                r.pos
            )));
        }
        Ok(Checkpoint {
            step,
            config,
            tensors,
            scalars,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path.as_ref(), &self.to_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| PceError::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            PceError::Checkpoint(m) => PceError::Checkpoint(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor4<f32>> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn scalar(&self, name: &str) -> Option<u64> {
        self.scalars
            .iter()
            .find(|(n, _)| n == name)
            .map(|&(_, v)| v)
    }
}
