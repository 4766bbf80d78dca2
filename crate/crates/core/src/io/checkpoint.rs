//! Binary checkpoint: magic, version, schedule, UNet shape, step counter,
//! then the live and EMA tables. All integers and floats little-endian;
//! tensors are stored name-sorted so equal models give equal bytes.

use std::io::Write;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::IoError;
use crate::denoiser::{DenoiserModel, UNetConfig};
use crate::diffusion::DiffusionConfig;
use crate::tensor::{Dims, ParamSet, Tensor};

pub const MAGIC: &[u8; 4] = b"DGDF";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub t_total: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    pub unet: UNetConfig,
    pub step: u64,
    pub live: ParamSet<f32>,
    pub ema: ParamSet<f32>,
}

impl Checkpoint {
    pub fn new(model: &DenoiserModel, diffusion: &DiffusionConfig, step: u64) -> Self {
        Checkpoint {
            t_total: diffusion.t_total,
            beta_start: diffusion.beta_start,
            beta_end: diffusion.beta_end,
            unet: model.config().clone(),
            step,
            live: model.params().clone(),
            ema: model.ema_params().clone(),
        }
    }

    /// Default diffusion settings with the stored schedule endpoints.
    pub fn diffusion(&self) -> DiffusionConfig {
        DiffusionConfig {
            t_total: self.t_total,
            beta_start: self.beta_start,
            beta_end: self.beta_end,
            ..DiffusionConfig::default()
        }
    }

    pub fn model(&self) -> Result<DenoiserModel, IoError> {
        Ok(DenoiserModel::from_parts(
            self.unet.clone(),
            self.live.clone(),
            self.ema.clone(),
        )?)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        put_u32(&mut out, FORMAT_VERSION);
        put_u32(&mut out, self.t_total as u32);
        out.extend_from_slice(&self.beta_start.to_le_bytes());
        out.extend_from_slice(&self.beta_end.to_le_bytes());
        let c = &self.unet;
        put_u32(&mut out, c.in_channels as u32);
        put_u32(&mut out, c.base_channels as u32);
        put_u32(&mut out, c.channel_mults.len() as u32);
        for &m in &c.channel_mults {
            put_u32(&mut out, m as u32);
        }
        put_u32(&mut out, c.res_blocks_per_level as u32);
        put_u32(&mut out, c.time_embed_dim as u32);
        put_u32(&mut out, c.norm_groups as u32);
        out.extend_from_slice(&self.step.to_le_bytes());
        for table in [&self.live, &self.ema] {
            put_u32(&mut out, table.len() as u32);
            for (name, t) in table.iter() {
                put_u32(&mut out, name.len() as u32);
                out.extend_from_slice(name.as_bytes());
                for d in t.dims().as_array() {
                    put_u32(&mut out, d as u32);
                }
                for v in t.data() {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, IoError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(IoError::BadMagic);
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(IoError::Version {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        let t_total = r.u32()? as usize;
        let beta_start = r.f64()?;
        let beta_end = r.f64()?;
        let in_channels = r.u32()? as usize;
        let base_channels = r.u32()? as usize;
        let n_mults = r.u32()? as usize;
        if n_mults > 16 {
            return Err(IoError::Corrupt(format!("{n_mults} UNet levels")));
        }
        let channel_mults = (0..n_mults)
            .map(|_| r.u32().map(|m| m as usize))
            .collect::<Result<_, _>>()?;
        let unet = UNetConfig {
            in_channels,
            base_channels,
            channel_mults,
            res_blocks_per_level: r.u32()? as usize,
            time_embed_dim: r.u32()? as usize,
            norm_groups: r.u32()? as usize,
        };
        let step = u64::from_le_bytes(r.take(8)?.try_into().expect("8 bytes"));
        let live = r.table()?;
        let ema = r.table()?;
        if r.pos != bytes.len() {
            return Err(IoError::Corrupt(format!(
                "{} trailing bytes",
                bytes.len() - r.pos
            )));
        }
        let ck = Checkpoint {
            t_total,
            beta_start,
            beta_end,
            unet,
            step,
            live,
            ema,
        };
        ck.model()?;
        Ok(ck)
    }

    /// Writes to a temporary sibling and renames it into place. Returns the
    /// SHA-256 of the written bytes.
    pub fn save(&self, path: &Path) -> Result<String, IoError> {
        let bytes = self.to_bytes();
        let dir = match path.parent() {
            Some(p) if !p.as_os_str().is_empty() => p,
            _ => Path::new("."),
        };
        std::fs::create_dir_all(dir).map_err(|e| IoError::io(dir, e))?;
        let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| IoError::io(dir, e))?;
        tmp.write_all(&bytes).map_err(|e| IoError::io(path, e))?;
        tmp.as_file().sync_all().map_err(|e| IoError::io(path, e))?;
        tmp.persist(path).map_err(|e| IoError::io(path, e.error))?;
        Ok(sha256_hex(&bytes))
    }

    pub fn load(path: &Path) -> Result<(Self, String), IoError> {
        let bytes = std::fs::read(path).map_err(|e| IoError::io(path, e))?;
        Ok((Self::from_bytes(&bytes)?, sha256_hex(&bytes)))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], IoError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| IoError::Corrupt(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, IoError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f64(&mut self) -> Result<f64, IoError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn table(&mut self) -> Result<ParamSet<f32>, IoError> {
        let count = self.u32()?;
        let mut set = ParamSet::new();
        for _ in 0..count {
            let len = self.u32()? as usize;
            let name = std::str::from_utf8(self.take(len)?)
                .map_err(|_| IoError::Corrupt("parameter name is not UTF-8".into()))?
                .to_string();
            let d: Vec<usize> = (0..4)
                .map(|_| self.u32().map(|v| v as usize))
                .collect::<Result<_, _>>()?;
            let dims = Dims::new(d[0], d[1], d[2], d[3]);
            let n = dims.numel();
            let raw = self.take(n.checked_mul(4).ok_or_else(|| IoError::Corrupt("tensor too large".into()))?)?;
            let data = raw
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
                .collect();
            set.insert(name, Tensor::from_vec(dims, data)?)?;
        }
        Ok(set)
    }
}
