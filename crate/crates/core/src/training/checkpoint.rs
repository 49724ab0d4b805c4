//! Binary checkpoint: magic `PFCK`, u32 version, length-prefixed config
//! text, a tensor table, optimizer groups and the rng state. Integers and
//! floats are little-endian; tensor values are stored as f32.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::autograd::Tensor;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"PFCK";
pub const VERSION: u32 = 1;

/// Adam state of one parameter group; moments keyed by parameter name.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimGroup {
    pub name: String,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub first_moments: BTreeMap<String, Tensor>,
    pub second_moments: BTreeMap<String, Tensor>,
}

/// Where the deterministic streams stand: every per-item stream is derived
/// from `(seed, epoch, position)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RngState {
    pub seed: u64,
    /// Completed epochs.
    pub epoch: u64,
    /// Completed optimizer steps.
    pub step: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: String,
    pub tensors: BTreeMap<String, Tensor>,
    pub optim: Vec<OptimGroup>,
    pub rng: RngState,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.config.len() as u64).to_le_bytes());
        out.extend_from_slice(self.config.as_bytes());
        write_table(&mut out, &self.tensors);
        out.extend_from_slice(&(self.optim.len() as u32).to_le_bytes());
        for g in &self.optim {
            write_str(&mut out, &g.name);
            out.extend_from_slice(&g.step.to_le_bytes());
            for v in [g.beta1, g.beta2, g.eps] {
                out.extend_from_slice(&v.to_le_bytes());
            }
            write_table(&mut out, &g.first_moments);
            write_table(&mut out, &g.second_moments);
        }
        for v in [self.rng.seed, self.rng.epoch, self.rng.step] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::parse(0, "not a checkpoint (bad magic)"));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::parse(4, format!("unsupported checkpoint version {version}")));
        }
        let len = r.u64()? as usize;
        let at = r.pos;
        let config =
            String::from_utf8(r.take(len)?.to_vec()).map_err(|_| Error::parse(at, "config block is not UTF-8"))?;
        let tensors = r.table()?;
        let groups = r.u32()?;
        let mut optim = Vec::new();
        for _ in 0..groups {
            optim.push(OptimGroup {
                name: r.string()?,
                step: r.u64()?,
                beta1: r.f64()?,
                beta2: r.f64()?,
                eps: r.f64()?,
                first_moments: r.table()?,
                second_moments: r.table()?,
            });
        }
        let rng = RngState {
            seed: r.u64()?,
            epoch: r.u64()?,
            step: r.u64()?,
        };
        if r.pos != bytes.len() {
            return Err(Error::parse(r.pos, "trailing bytes after checkpoint"));
        }
        Ok(Checkpoint {
            config,
            tensors,
            optim,
            rng,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        // write-then-rename so an interrupted save never clobbers a good file
        let tmp = path.with_extension("pfck.tmp");
        fs::write(&tmp, self.to_bytes()).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path).map_err(|e| Error::io(path, e))?)
    }

    /// Tensors whose name starts with `prefix`, prefix kept.
    pub fn tensors_with_prefix(&self, prefix: &str) -> BTreeMap<String, Tensor> {
        self.tensors
            .iter()
            .filter(|(k, _)| k.starts_with(prefix))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect()
    }

    /// Drops every tensor and optimizer group belonging to `prefix`.
    pub fn without_prefix(mut self, prefix: &str) -> Self {
        self.tensors.retain(|k, _| !k.starts_with(prefix));
        let group = prefix.trim_end_matches('.');
        self.optim.retain(|g| g.name != group);
        self
    }

    pub fn has_prefix(&self, prefix: &str) -> bool {
        self.tensors.keys().any(|k| k.starts_with(prefix))
    }

    /// Short stable fingerprint of the serialized bytes.
    pub fn fingerprint(bytes: &[u8]) -> String {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for &b in bytes {
            h ^= b as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
        format!("{h:016x}")
    }
}

fn write_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

fn write_table(out: &mut Vec<u8>, table: &BTreeMap<String, Tensor>) {
    out.extend_from_slice(&(table.len() as u32).to_le_bytes());
    for (name, t) in table {
        write_str(out, name);
        out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &v in t.data() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::parse(self.pos, format!("truncated: needed {n} more bytes")))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn string(&mut self) -> Result<String> {
        let len = self.u32()? as usize;
        let at = self.pos;
        String::from_utf8(self.take(len)?.to_vec()).map_err(|_| Error::parse(at, "name is not UTF-8"))
    }

    fn table(&mut self) -> Result<BTreeMap<String, Tensor>> {
        let count = self.u32()?;
        let mut out = BTreeMap::new();
        for _ in 0..count {
            let at = self.pos;
            let name = self.string()?;
            let rank = self.u32()? as usize;
            if rank > 8 {
                return Err(Error::parse(at, format!("tensor {name} has implausible rank {rank}")));
            }
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(self.u64()? as usize);
            }
            let numel = shape
                .iter()
                .try_fold(1usize, |a, &d| a.checked_mul(d))
                .filter(|&n| n <= (self.bytes.len() - self.pos) / 4)
                .ok_or_else(|| Error::parse(self.pos, format!("truncated: tensor {name} data")))?;
            let raw = self.take(numel * 4)?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
                .collect();
            if out.contains_key(&name) {
                return Err(Error::parse(at, format!("duplicate tensor {name}")));
            }
            out.insert(name, Tensor::new(shape, data)?);
        }
        Ok(out)
    }
}
