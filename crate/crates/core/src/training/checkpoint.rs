//! Binary checkpoint file.
//!
//! ```text
//! "TRECCKPT"  u32 version  u64 payload length  payload  sha256(all preceding bytes)
//! ```
//!
//! The payload holds the hyperparameters as TOML, the catalog sizes, the
//! epoch count, every named tensor as little-endian `f64`, and optionally
//! the optimizer moments. All integers are little-endian.

use std::path::Path;

use sha2::{Digest, Sha256};

use super::optimizer::{OptimizerKind, OptimizerState};
use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::model::{Hyperparams, ModelParams};
use crate::numerics::{Matrix, ParamStore};

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"TRECCKPT";
const HEADER_LEN: usize = 8 + 4 + 8;
const DIGEST_LEN: usize = 32;

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub hp: Hyperparams,
    pub epochs_completed: usize,
    pub optimizer: Option<OptimizerState>,
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn bytes(&mut self, b: &[u8]) {
        self.u64(b.len() as u64);
        self.0.extend_from_slice(b);
    }
    fn matrix(&mut self, m: &Matrix) {
        self.u64(m.rows() as u64);
        self.u64(m.cols() as u64);
        for x in m.as_slice() {
            self.0.extend_from_slice(&x.to_le_bytes());
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Checkpoint("payload ends early".into()))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::Checkpoint("size out of range".into()))
    }
    fn bytes(&mut self) -> Result<&'a [u8]> {
        let n = self.usize()?;
        self.take(n)
    }
    fn matrix(&mut self) -> Result<Matrix> {
        let rows = self.usize()?;
        let cols = self.usize()?;
        let n = rows
            .checked_mul(cols)
            .and_then(|n| n.checked_mul(8))
            .ok_or_else(|| Error::Checkpoint("tensor size overflows".into()))?;
        let raw = self.take(n)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Matrix::from_vec(rows, cols, data)
    }
}

pub fn encode_checkpoint(
    params: &ModelParams,
    hp: &Hyperparams,
    epochs_completed: usize,
    optimizer: Option<&OptimizerState>,
) -> Result<Vec<u8>> {
    let hp_text = toml::to_string(hp).map_err(|e| Error::Checkpoint(e.to_string()))?;
    let mut w = Writer(Vec::new());
    w.bytes(hp_text.as_bytes());
    w.u64(params.num_users as u64);
    w.u64(params.num_items as u64);
    w.u64(epochs_completed as u64);
    w.u64(params.store.len() as u64);
    for (_, p) in params.store.iter() {
        w.bytes(p.name().as_bytes());
        w.matrix(p.value());
    }
    match optimizer {
        None => w.u8(0),
        Some(opt) => {
            opt.check_matches(&params.store)?;
            w.u8(match opt.kind {
                OptimizerKind::Sgd => 1,
                OptimizerKind::Adam => 2,
            });
            w.u64(opt.step);
            for (m, v) in opt.first.iter().zip(&opt.second) {
                w.matrix(m);
                w.matrix(v);
            }
        }
    }
    let payload = w.0;
    let mut out = Vec::with_capacity(HEADER_LEN + payload.len() + DIGEST_LEN);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    out.extend_from_slice(&payload);
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    Ok(out)
}

pub fn decode_checkpoint(bytes: &[u8], path: &Path) -> Result<Checkpoint> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(Error::Checkpoint(format!(
            "{} is not a checkpoint file",
            path.display()
        )));
    }
    if bytes.len() < HEADER_LEN + DIGEST_LEN {
        return Err(Error::Checksum(path.to_path_buf()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(Error::Version {
            path: path.to_path_buf(),
            expected: CHECKPOINT_VERSION.to_string(),
            found: version.to_string(),
        });
    }
    let payload_len = u64::from_le_bytes(bytes[12..20].try_into().unwrap());
    if payload_len != (bytes.len() - HEADER_LEN - DIGEST_LEN) as u64 {
        return Err(Error::Checksum(path.to_path_buf()));
    }
    let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
    if Sha256::digest(body).as_slice() != digest {
        return Err(Error::Checksum(path.to_path_buf()));
    }

    let mut r = Reader {
        buf: &body[HEADER_LEN..],
        pos: 0,
    };
    let hp_text = std::str::from_utf8(r.bytes()?).map_err(|e| Error::Checkpoint(e.to_string()))?;
    let hp: Hyperparams = toml::from_str(hp_text).map_err(|e| Error::Checkpoint(e.to_string()))?;
    let num_users = r.usize()?;
    let num_items = r.usize()?;
    let epochs_completed = r.usize()?;
    let count = r.usize()?;
    let mut store = ParamStore::new();
    for _ in 0..count {
        let name = std::str::from_utf8(r.bytes()?)
            .map_err(|e| Error::Checkpoint(e.to_string()))?
            .to_string();
        store.add(name, r.matrix()?);
    }
    let optimizer = match r.u8()? {
        0 => None,
        tag @ (1 | 2) => {
            let kind = if tag == 1 {
                OptimizerKind::Sgd
            } else {
                OptimizerKind::Adam
            };
            let step = r.u64()?;
            let mut first = Vec::new();
            let mut second = Vec::new();
            if kind == OptimizerKind::Adam {
                for _ in 0..count {
                    first.push(r.matrix()?);
                    second.push(r.matrix()?);
                }
            }
            Some(OptimizerState {
                kind,
                step,
                first,
                second,
            })
        }
        other => return Err(Error::Checkpoint(format!("unknown optimizer tag {other}"))),
    };
    if r.pos != r.buf.len() {
        return Err(Error::Checkpoint("trailing bytes after payload".into()));
    }
    let params = ModelParams::from_store(store)?;
    if (params.num_users, params.num_items) != (num_users, num_items) || params.d != hp.d {
        return Err(Error::Checkpoint(
            "tensor shapes disagree with the recorded catalog sizes or dimension".into(),
        ));
    }
    if let Some(opt) = &optimizer {
        opt.check_matches(&params.store)?;
    }
    Ok(Checkpoint {
        params,
        hp,
        epochs_completed,
        optimizer,
    })
}

pub fn save_checkpoint(
    path: impl AsRef<Path>,
    params: &ModelParams,
    hp: &Hyperparams,
    epochs_completed: usize,
    optimizer: Option<&OptimizerState>,
) -> Result<()> {
    let bytes = encode_checkpoint(params, hp, epochs_completed, optimizer)?;
    write_atomic(path.as_ref(), &bytes)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes, path)
}
