//! Binary checkpoint files.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic "UIRPKCKP" | u32 version | u32 len + network config text
//! u64 epoch | u32 count | count × (u32 len + name, 4 × u32 shape, f32 data)
//! u8 has_optimizer [| u64 step | 4 × f64 hyper | per param: m data, v data]
//! ```

use std::path::Path;

use crate::arch::{Network, NetworkConfig, ParameterStore};
use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

use super::optim::{AdamW, OptimState};

const MAGIC: &[u8; 8] = b"UIRPKCKP";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: NetworkConfig,
    pub epoch: u64,
    pub params: ParameterStore,
    pub optim: Option<OptimState>,
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_f32s(out: &mut Vec<u8>, t: &Tensor) {
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        put_u32(&mut out, FORMAT_VERSION);
        let cfg = self.config.to_text();
        put_u32(&mut out, cfg.len() as u32);
        out.extend_from_slice(cfg.as_bytes());
        out.extend_from_slice(&self.epoch.to_le_bytes());
        put_u32(&mut out, self.params.len() as u32);
        for (name, t) in self.params.iter() {
            put_u32(&mut out, name.len() as u32);
            out.extend_from_slice(name.as_bytes());
            for d in t.shape().0 {
                put_u32(&mut out, d as u32);
            }
            put_f32s(&mut out, t);
        }
        match &self.optim {
            None => out.push(0),
            Some(o) => {
                out.push(1);
                out.extend_from_slice(&o.step.to_le_bytes());
                for h in [o.hyper.beta1, o.hyper.beta2, o.hyper.eps, o.hyper.weight_decay] {
                    out.extend_from_slice(&h.to_le_bytes());
                }
                for (m, v) in o.m.iter().zip(&o.v) {
                    put_f32s(&mut out, m);
                    put_f32s(&mut out, v);
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Checkpoint("not a checkpoint file (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format version {version} (expected {FORMAT_VERSION})"
            )));
        }
        let cfg_len = r.u32()? as usize;
        let cfg_text =
            std::str::from_utf8(r.take(cfg_len)?).map_err(|_| Error::Checkpoint("config block is not UTF-8".into()))?;
        let config = NetworkConfig::from_text(cfg_text)?;
        let epoch = r.u64()?;
        let count = r.u32()? as usize;
        let mut params = ParameterStore::new();
        for _ in 0..count {
            let len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(len)?)
                .map_err(|_| Error::Checkpoint("parameter name is not UTF-8".into()))?
                .to_string();
            let dims = [r.u32()?, r.u32()?, r.u32()?, r.u32()?].map(|d| d as usize);
            let t = r.tensor(Shape(dims))?;
            params.insert(name, t).map_err(|e| Error::Checkpoint(e.to_string()))?;
        }
        let optim = match r.take(1)?[0] {
            0 => None,
            1 => {
                let step = r.u64()?;
                let hyper = AdamW {
                    beta1: r.f64()?,
                    beta2: r.f64()?,
                    eps: r.f64()?,
                    weight_decay: r.f64()?,
                };
                let (mut m, mut v) = (Vec::new(), Vec::new());
                for (_, p) in params.iter() {
                    m.push(r.tensor(p.shape())?);
                    v.push(r.tensor(p.shape())?);
                }
                Some(OptimState { hyper, step, m, v })
            }
            other => return Err(Error::Checkpoint(format!("bad optimizer flag {other}"))),
        };
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(Checkpoint {
            config,
            epoch,
            params,
            optim,
        })
    }

    /// Write via a temporary file and rename, so readers never see a
    /// partial checkpoint.
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("ckpt.tmp");
        std::fs::write(&tmp, self.to_bytes()).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            Error::Checkpoint(msg) => Error::Checkpoint(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Load and require the stored network to match `expected` exactly,
    /// parameter names and shapes included.
    pub fn load_compatible(path: &Path, expected: &NetworkConfig) -> Result<Self> {
        let ck = Self::load(path)?;
        if &ck.config != expected {
            let diffs: Vec<String> = ck
                .config
                .entries()
                .into_iter()
                .zip(expected.entries())
                .filter(|(a, b)| a.1 != b.1)
                .map(|(a, b)| format!("{}: checkpoint {} vs requested {}", a.0, a.1, b.1))
                .collect();
            return Err(Error::Incompatible(diffs.join(", ")));
        }
        let fresh = Network::new(expected)?.init_params(0)?;
        let same = fresh.len() == ck.params.len()
            && fresh
                .iter()
                .zip(ck.params.iter())
                .all(|((n1, t1), (n2, t2))| n1 == n2 && t1.shape() == t2.shape());
        if !same {
            return Err(Error::Incompatible(
                "parameter layout differs from the configured network".into(),
            ));
        }
        Ok(ck)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Checkpoint(format!("truncated file at byte {}", self.pos)))?;
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

    fn tensor(&mut self, shape: Shape) -> Result<Tensor> {
        let n = shape.numel();
        let raw = self.take(
            n.checked_mul(4)
                .ok_or_else(|| Error::Checkpoint("tensor too large".into()))?,
        )?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        Tensor::from_vec(shape, data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let config = NetworkConfig {
            base_channels: 4,
            ..Default::default()
        };
        let params = Network::new(&config).unwrap().init_params(3).unwrap();
        let mut optim = OptimState::new(&params, AdamW::default());
        optim.step = 7;
        optim.m[0].data_mut()[0] = 0.25;
        Checkpoint {
            config,
            epoch: 12,
            params,
            optim: Some(optim),
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.ckpt");
        let ck = sample();
        ck.save(&path).unwrap();
        let back = Checkpoint::load_compatible(&path, &ck.config).unwrap();
        assert_eq!(back, ck);
        for ((_, a), (_, b)) in back.params.iter().zip(ck.params.iter()) {
            let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(a), bits(b));
        }
    }

    #[test]
    fn truncated_and_corrupt_files_fail() {
        let bytes = sample().to_bytes();
        for cut in [0, 7, 20, bytes.len() / 2, bytes.len() - 1] {
            assert!(
                matches!(Checkpoint::from_bytes(&bytes[..cut]), Err(Error::Checkpoint(_))),
                "cut {cut}"
            );
        }
        let mut bad = bytes.clone();
        bad[8] = 9;
        assert!(matches!(Checkpoint::from_bytes(&bad), Err(Error::Checkpoint(_))));
        let mut long = bytes;
        long.push(0);
        assert!(Checkpoint::from_bytes(&long).is_err());
    }

    #[test]
    fn config_mismatch_is_incompatible() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.ckpt");
        let ck = sample();
        ck.save(&path).unwrap();
        let other = NetworkConfig {
            base_channels: 8,
            ..Default::default()
        };
        let err = Checkpoint::load_compatible(&path, &other).unwrap_err();
        assert!(matches!(err, Error::Incompatible(_)));
        assert!(err.to_string().contains("base_channels"));
    }
}
