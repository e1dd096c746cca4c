//! Denoiser checkpoint file.
//!
//! Little endian: magic `DDPM`, `u16` version, `u32` T, `T` x `f64` betas,
//! `u32` x 6 config (visual, hidden, attn, depth, ffn, token count), `u32`
//! per token width, `u32` tensor count, then per tensor `u16` name length,
//! name bytes, `u8` rank, `u32` per dimension and `f32` data. A trailing
//! `u8` flags optional optimizer state (`u64` step, `f64` lr, `f32` first
//! and second moments in parameter order).

use std::path::Path;

use super::network::{DenoiserConfig, DenoiserNetwork};
use super::schedule::NoiseSchedule;
use crate::error::{Error, Result};
use crate::nn::Adam;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"DDPM";
pub const CHECKPOINT_VERSION: u16 = 1;

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub schedule: NoiseSchedule,
    pub net: DenoiserNetwork,
    pub optimizer: Option<Adam>,
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Truncated {
                path: self.path.to_path_buf(),
                detail: format!("needed {n} bytes at offset {}", self.pos),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f64>> {
        Ok(self
            .take(n * 4)?
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())))
            .collect())
    }
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

fn put_f32s(out: &mut Vec<u8>, v: &[f64]) {
    for &x in v {
        out.extend_from_slice(&(x as f32).to_le_bytes());
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        put_u32(&mut out, self.schedule.steps());
        for b in self.schedule.betas() {
            out.extend_from_slice(&b.to_le_bytes());
        }
        let c = self.net.config();
        for v in [c.visual_width, c.hidden, c.attn_width, c.depth, c.ffn_width, c.token_widths.len()] {
            put_u32(&mut out, v);
        }
        for &w in &c.token_widths {
            put_u32(&mut out, w);
        }
        let entries = self.net.layout().entries();
        put_u32(&mut out, entries.len());
        for e in entries {
            out.extend_from_slice(&(e.name.len() as u16).to_le_bytes());
            out.extend_from_slice(e.name.as_bytes());
            out.push(2);
            put_u32(&mut out, e.rows);
            put_u32(&mut out, e.cols);
            put_f32s(&mut out, &self.net.params[e.range()]);
        }
        match &self.optimizer {
            None => out.push(0),
            Some(opt) => {
                out.push(1);
                out.extend_from_slice(&opt.t.to_le_bytes());
                out.extend_from_slice(&opt.lr.to_le_bytes());
                put_f32s(&mut out, &opt.m);
                put_f32s(&mut out, &opt.v);
            }
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(path, &bytes)
    }

    /// Loads and checks the visual width and the text-token width.
    pub fn load_expecting(path: impl AsRef<Path>, visual_width: usize, text_width: usize) -> Result<Self> {
        let ck = Self::load(path)?;
        let c = ck.net.config();
        if c.visual_width != visual_width {
            return Err(Error::WidthMismatch {
                expected: visual_width,
                actual: c.visual_width,
            });
        }
        if c.token_widths[0] != text_width {
            return Err(Error::WidthMismatch {
                expected: text_width,
                actual: c.token_widths[0],
            });
        }
        Ok(ck)
    }

    pub fn from_bytes(path: &Path, bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 || &bytes[..4] != CHECKPOINT_MAGIC {
            return Err(Error::BadMagic {
                path: path.to_path_buf(),
                expected: "DDPM",
            });
        }
        let mut r = Reader { bytes, pos: 4, path };
        let version = r.u16()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::invalid(format!(
                "{}: unsupported checkpoint version {version}",
                path.display()
            )));
        }
        let steps = r.u32()?;
        let betas = (0..steps).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        let schedule = NoiseSchedule::from_betas(betas)?;
        let mut dims = [0usize; 6];
        for d in &mut dims {
            *d = r.u32()?;
        }
        let token_widths = (0..dims[5]).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
        let config = DenoiserConfig {
            visual_width: dims[0],
            hidden: dims[1],
            attn_width: dims[2],
            depth: dims[3],
            ffn_width: dims[4],
            token_widths,
        };
        config.validate()?;
        let layout = config.layout();
        let n_tensors = r.u32()?;
        if n_tensors != layout.entries().len() {
            return Err(Error::invalid(format!(
                "{}: {n_tensors} tensors, layout expects {}",
                path.display(),
                layout.entries().len()
            )));
        }
        let mut params = vec![0.0; layout.total()];
        for e in layout.entries() {
            let name_len = r.u16()? as usize;
            let name = String::from_utf8_lossy(r.take(name_len)?).into_owned();
            let rank = r.u8()? as usize;
            let shape = (0..rank).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
            if name != e.name || shape != [e.rows, e.cols] {
                return Err(Error::invalid(format!(
                    "{}: tensor `{name}` {shape:?} where `{}` [{}, {}] was expected",
                    path.display(),
                    e.name,
                    e.rows,
                    e.cols
                )));
            }
            params[e.range()].copy_from_slice(&r.f32s(e.len())?);
        }
        let optimizer = match r.u8()? {
            0 => None,
            _ => {
                let t = r.u64()?;
                let lr = r.f64()?;
                let mut opt = Adam::new(params.len(), lr);
                opt.t = t;
                opt.m = r.f32s(params.len())?;
                opt.v = r.f32s(params.len())?;
                Some(opt)
            }
        };
        Ok(Self {
            schedule,
            net: DenoiserNetwork::from_params(config, params),
            optimizer,
        })
    }
}
