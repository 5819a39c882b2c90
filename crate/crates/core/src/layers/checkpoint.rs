//! Flat checkpoint archive: a header line, a config echo and a list of
//! `path → (shape, little-endian f64 payload)` entries.
//!
//! ```text
//! SPLINECL-CKPT-1\n
//! u64 echo_len, echo bytes (UTF-8)
//! u64 entry_count
//! per entry: u32 path_len, path, u32 ndim, ndim × u64 dims, f64 × len
//! ```

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::layers::model::Model;
use crate::numerics::Tensor;

pub const CHECKPOINT_HEADER: &str = "SPLINECL-CKPT-1";

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    pub config_echo: String,
    pub entries: BTreeMap<String, Tensor>,
}

impl Checkpoint {
    pub fn from_model(model: &Model, config_echo: impl Into<String>) -> Self {
        let entries = model
            .paths()
            .iter()
            .cloned()
            .zip(model.params().into_iter().cloned())
            .collect();
        Self {
            config_echo: config_echo.into(),
            entries,
        }
    }

    /// Copies every registry tensor of `model` from the archive.
    pub fn restore_model(&self, model: &mut Model) -> Result<()> {
        let paths = model.paths().to_vec();
        for (path, p) in paths.iter().zip(model.params_mut()) {
            let t = self
                .entries
                .get(path)
                .ok_or_else(|| Error::Contract(format!("checkpoint lacks `{path}`")))?;
            if t.shape() != p.shape() {
                return Err(Error::Contract(format!(
                    "checkpoint `{path}` has shape {:?}, model {:?}",
                    t.shape(),
                    p.shape()
                )));
            }
            *p = t.clone();
        }
        Ok(())
    }

    /// Adds `prefix.path` entries (e.g. `kancl.S.head.kan0.coeffs`).
    pub fn insert_prefixed<'a>(&mut self, prefix: &str, items: impl IntoIterator<Item = (&'a String, &'a Tensor)>) {
        for (k, v) in items {
            self.entries.insert(format!("{prefix}.{k}"), v.clone());
        }
    }

    /// Entries under `prefix.`, with the prefix stripped.
    pub fn with_prefix(&self, prefix: &str) -> BTreeMap<String, Tensor> {
        let p = format!("{prefix}.");
        self.entries
            .iter()
            .filter_map(|(k, v)| k.strip_prefix(&p).map(|s| (s.to_string(), v.clone())))
            .collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_HEADER.as_bytes());
        out.push(b'\n');
        out.extend_from_slice(&(self.config_echo.len() as u64).to_le_bytes());
        out.extend_from_slice(self.config_echo.as_bytes());
        out.extend_from_slice(&(self.entries.len() as u64).to_le_bytes());
        for (path, t) in &self.entries {
            out.extend_from_slice(&(path.len() as u32).to_le_bytes());
            out.extend_from_slice(path.as_bytes());
            out.extend_from_slice(&(t.ndim() as u32).to_le_bytes());
            for &d in t.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Cursor { bytes, pos: 0 };
        let header = r.take(CHECKPOINT_HEADER.len() + 1)?;
        if &header[..CHECKPOINT_HEADER.len()] != CHECKPOINT_HEADER.as_bytes()
            || header[CHECKPOINT_HEADER.len()] != b'\n'
        {
            return Err(Error::Parse {
                offset: 0,
                msg: format!("missing `{CHECKPOINT_HEADER}` header"),
            });
        }
        let echo_len = r.u64()? as usize;
        let at = r.pos;
        let config_echo = String::from_utf8(r.take(echo_len)?.to_vec()).map_err(|_| Error::Parse {
            offset: at as u64,
            msg: "config echo is not UTF-8".into(),
        })?;
        let count = r.u64()?;
        let mut entries = BTreeMap::new();
        for _ in 0..count {
            let len = r.u32()? as usize;
            let at = r.pos;
            let path = String::from_utf8(r.take(len)?.to_vec()).map_err(|_| Error::Parse {
                offset: at as u64,
                msg: "entry path is not UTF-8".into(),
            })?;
            let ndim = r.u32()? as usize;
            let mut shape = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                shape.push(r.u64()? as usize);
            }
            let n: usize = shape.iter().product();
            let at = r.pos;
            let raw = r.take(n.checked_mul(8).ok_or_else(|| Error::Parse {
                offset: at as u64,
                msg: "entry size overflows".into(),
            })?)?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            let t = Tensor::new(shape, data).map_err(|e| Error::Parse {
                offset: at as u64,
                msg: e.to_string(),
            })?;
            entries.insert(path, t);
        }
        if r.pos != bytes.len() {
            return Err(Error::Parse {
                offset: r.pos as u64,
                msg: "trailing bytes after last entry".into(),
            });
        }
        Ok(Self { config_echo, entries })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut buf = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut buf))
            .map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&buf)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Parse {
                offset: self.pos as u64,
                msg: format!("truncated: need {n} bytes, {} left", self.bytes.len() - self.pos),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}
