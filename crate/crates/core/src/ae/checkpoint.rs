//! Versioned binary checkpoint container for trained models.
//!
//! Layout (little-endian):
//!
//! ```text
//! magic "FAEC" | u32 version | u64 config_hash | u32 n_sections
//! per section: u32 name_len | name bytes | u64 rows | u64 cols | rows*cols f64
//! ```
//!
//! Sections hold the model parameters, the Adam moments and the step
//! counter. Loading verifies magic, version and the config hash; a mismatch
//! refuses to resume rather than silently mixing configurations. Writes go
//! through a temporary file renamed into place.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::autodiff::{AdamState, Tensor};
use crate::error::{Error, Result};

use super::{AeModel, TrainConfig};

const MAGIC: &[u8; 4] = b"FAEC";
const VERSION: u32 = 1;

/// FNV-1a hash of a byte string; used for config fingerprints and run ids.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x1000_0000_01b3);
    }
    h
}

pub fn config_hash(cfg: &TrainConfig) -> u64 {
    fnv1a64(cfg.canonical_string().as_bytes())
}

fn write_section(buf: &mut Vec<u8>, name: &str, t: &Tensor) {
    buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
    buf.extend_from_slice(name.as_bytes());
    buf.extend_from_slice(&(t.rows as u64).to_le_bytes());
    buf.extend_from_slice(&(t.cols as u64).to_le_bytes());
    for v in &t.data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

/// Serialize model and optimizer state to `path` atomically.
pub fn save(
    path: &Path,
    cfg: &TrainConfig,
    model: &AeModel,
    state: Option<&AdamState>,
) -> Result<()> {
    let mut sections: Vec<(String, Tensor)> = Vec::new();
    for (i, p) in model.params.iter().enumerate() {
        sections.push((format!("param_{i}"), p.clone()));
    }
    if let Some(s) = state {
        for (i, m) in s.m.iter().enumerate() {
            sections.push((format!("adam_m_{i}"), m.clone()));
        }
        for (i, v) in s.v.iter().enumerate() {
            sections.push((format!("adam_v_{i}"), v.clone()));
        }
        sections.push(("adam_t".to_string(), Tensor::scalar(s.t as f64)));
    }

    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&config_hash(cfg).to_le_bytes());
    buf.extend_from_slice(&(sections.len() as u32).to_le_bytes());
    for (name, t) in &sections {
        write_section(&mut buf, name, t);
    }

    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&buf)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Checkpoint("truncated checkpoint".into()));
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Load a checkpoint saved for exactly this configuration.
pub fn load(path: &Path, cfg: &TrainConfig) -> Result<(AeModel, Option<AdamState>)> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    let mut r = Reader {
        buf: &bytes,
        pos: 0,
    };

    if r.take(4)? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let hash = r.u64()?;
    let want = config_hash(cfg);
    if hash != want {
        return Err(Error::Checkpoint(format!(
            "config hash mismatch: checkpoint {hash:016x}, config {want:016x}"
        )));
    }

    let n_sections = r.u32()? as usize;
    let mut sections = Vec::with_capacity(n_sections);
    for _ in 0..n_sections {
        let name_len = r.u32()? as usize;
        let name = String::from_utf8(r.take(name_len)?.to_vec())
            .map_err(|_| Error::Checkpoint("bad section name".into()))?;
        let rows = r.u64()? as usize;
        let cols = r.u64()? as usize;
        let raw = r.take(rows * cols * 8)?;
        let data: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        sections.push((name, Tensor::from_vec(data, rows, cols)));
    }

    let find = |name: &str| -> Option<Tensor> {
        sections
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t.clone())
    };

    let reference = AeModel::init(cfg)?;
    let mut params = Vec::with_capacity(reference.params.len());
    for i in 0..reference.params.len() {
        let t = find(&format!("param_{i}"))
            .ok_or_else(|| Error::Checkpoint(format!("missing param_{i}")))?;
        if t.shape() != reference.params[i].shape() {
            return Err(Error::Checkpoint(format!("param_{i} has unexpected shape")));
        }
        params.push(t);
    }
    let model = AeModel {
        params,
        m: reference.m,
        n_adj: reference.n_adj,
        rx_dims: reference.rx_dims.clone(),
    };

    let state = if find("adam_t").is_some() {
        let n = model.params.len();
        let mut m = Vec::with_capacity(n);
        let mut v = Vec::with_capacity(n);
        for i in 0..n {
            m.push(
                find(&format!("adam_m_{i}"))
                    .ok_or_else(|| Error::Checkpoint(format!("missing adam_m_{i}")))?,
            );
            v.push(
                find(&format!("adam_v_{i}"))
                    .ok_or_else(|| Error::Checkpoint(format!("missing adam_v_{i}")))?,
            );
        }
        let mut st = AdamState::new(&model.params);
        st.m = m;
        st.v = v;
        st.t = find("adam_t").unwrap().item() as u64;
        Some(st)
    } else {
        None
    };

    Ok((model, state))
}
