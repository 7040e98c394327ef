//! TMKC v1 tensor checkpoints.
//!
//! Layout (little-endian): `b"TMKC"`, u32 version = 1, u32 tensor count, then per
//! tensor `u16 name_len, name (UTF-8), u8 rank, rank × u32 dims, f64 payload`.

use std::path::Path;

use indexmap::IndexMap;

use super::layers::{Linear, Module};
use super::mlp::{MlpNet, Role};
use crate::numcore::Tensor;

pub const MAGIC: &[u8; 4] = b"TMKC";
pub const VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("checkpoint offset {offset}: {detail}")]
    Parse { offset: usize, detail: String },
    #[error("checkpoint tensor {name}: {detail}")]
    Layout { name: String, detail: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, CheckpointError>;

fn parse(offset: usize, detail: impl Into<String>) -> CheckpointError {
    CheckpointError::Parse {
        offset,
        detail: detail.into(),
    }
}

/// Named tensors in file order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Checkpoint {
    pub tensors: IndexMap<String, Tensor>,
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(parse(self.bytes.len(), format!("truncated {what}"))),
        }
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

impl Checkpoint {
    pub fn from_module(m: &impl Module) -> Self {
        let tensors = m
            .named_params()
            .into_iter()
            .map(|(name, t)| {
                (name, Tensor::new(t.shape().to_vec(), t.data().to_vec()).unwrap())
            })
            .collect();
        Self { tensors }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, t) in &self.tensors {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(t.shape().len() as u8);
            for &d in t.shape() {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.get(..4) != Some(MAGIC.as_slice()) {
            return Err(parse(0, "bad magic"));
        }
        let mut r = Reader { bytes, pos: 4 };
        let version = r.u32("header")?;
        if version != VERSION {
            return Err(parse(4, format!("unsupported version {version}")));
        }
        let count = r.u32("header")?;
        let mut tensors = IndexMap::new();
        for i in 0..count {
            let what = format!("tensor {i}");
            let name_at = r.pos;
            let len = u16::from_le_bytes(r.take(2, &what)?.try_into().unwrap()) as usize;
            let name = std::str::from_utf8(r.take(len, &what)?)
                .map_err(|e| parse(name_at + 2, format!("name is not UTF-8: {e}")))?
                .to_string();
            let rank = r.take(1, &what)?[0] as usize;
            if rank == 0 {
                return Err(parse(r.pos - 1, format!("tensor {name} has rank 0")));
            }
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(r.u32(&what)? as usize);
            }
            let numel = shape
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .and_then(|n| n.checked_mul(8).map(|_| n))
                .ok_or_else(|| parse(r.pos, format!("tensor {name} shape overflows")))?;
            let payload = r.take(numel * 8, &what)?;
            let data = payload
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            if tensors.contains_key(&name) {
                return Err(parse(name_at, format!("duplicate tensor {name}")));
            }
            let tensor = Tensor::new(shape, data).map_err(|e| parse(name_at, format!("tensor {name}: {e}")))?;
            tensors.insert(name, tensor);
        }
        if r.pos != bytes.len() {
            return Err(parse(r.pos, format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(Self { tensors })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    fn linear(&self, prefix: &str) -> Result<Linear> {
        let get = |suffix: &str| {
            let name = format!("{prefix}.{suffix}");
            self.tensors.get(&name).cloned().ok_or_else(|| CheckpointError::Layout {
                name,
                detail: "missing".into(),
            })
        };
        let weight = get("weight")?;
        let bias = get("bias")?;
        if weight.shape().len() != 2 || bias.shape() != [weight.shape()[0]] {
            return Err(CheckpointError::Layout {
                name: prefix.into(),
                detail: format!("weight {:?} and bias {:?} do not form a layer", weight.shape(), bias.shape()),
            });
        }
        Ok(Linear {
            weight: weight.with_grad(),
            bias: bias.with_grad(),
        })
    }

    /// Rebuilds an MLP from `layers.N.*` and `classifier.*` tensors.
    pub fn to_mlp(&self, role: Role) -> Result<MlpNet> {
        let mut layers = Vec::new();
        while self.tensors.contains_key(&format!("layers.{}.weight", layers.len())) {
            layers.push(self.linear(&format!("layers.{}", layers.len()))?);
        }
        if layers.is_empty() {
            return Err(CheckpointError::Layout {
                name: "layers.0.weight".into(),
                detail: "missing".into(),
            });
        }
        let classifier = self.linear("classifier")?;
        let net = MlpNet {
            role,
            layers,
            classifier,
        };
        let expected = net.named_params().len();
        if expected != self.tensors.len() {
            return Err(CheckpointError::Layout {
                name: "<checkpoint>".into(),
                detail: format!("{} tensors, an MLP of this depth has {expected}", self.tensors.len()),
            });
        }
        for (pair, l) in net.layers.windows(2).zip(1..) {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(CheckpointError::Layout {
                    name: format!("layers.{l}.weight"),
                    detail: format!("input {} does not match previous output {}", pair[1].in_dim(), pair[0].out_dim()),
                });
            }
        }
        if net.layers.last().unwrap().out_dim() != net.classifier.in_dim() {
            return Err(CheckpointError::Layout {
                name: "classifier.weight".into(),
                detail: "input does not match the last hidden layer".into(),
            });
        }
        Ok(net)
    }
}
