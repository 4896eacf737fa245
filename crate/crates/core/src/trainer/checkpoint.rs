//! Versioned binary checkpoints.
//!
//! Layout, integers little-endian:
//!
//! ```text
//! magic     8 bytes "COREFCKP"
//! version   u32 1
//! seed      u64
//! step      u64   optimizer updates taken
//! epoch     u64   epochs completed
//! config    u32 length + UTF-8 JSON of the training config
//! tensors   u32 count, then { u32 name_len, name, u8 group, u32 rows, u32 cols, f64 values }
//! optimizer u8 flag; if 1: u64 step, then first and second moments per tensor in order
//! ```

use std::path::Path;

use super::config::TrainConfig;
use crate::error::{Error, Result};
use crate::model::CorefModel;
use crate::nn::{Adam, Matrix, ParamGroup};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"COREFCKP";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub group: ParamGroup,
    pub value: Matrix,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub seed: u64,
    pub step: u64,
    pub epoch: u64,
    pub config: TrainConfig,
    pub tensors: Vec<Tensor>,
    pub optimizer: Option<Adam>,
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

fn put_matrix(out: &mut Vec<u8>, m: &Matrix) {
    for &x in m.iter() {
        out.extend_from_slice(&x.to_le_bytes());
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
            .ok_or_else(|| Error::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn matrix(&mut self, rows: usize, cols: usize) -> Result<Matrix> {
        let raw = self.take(rows * cols * 8)?;
        let values = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        Ok(Matrix::from_shape_vec((rows, cols), values).expect("sized"))
    }
}

impl Checkpoint {
    pub fn capture(model: &CorefModel, optimizer: Option<&Adam>, config: &TrainConfig, epoch: u64) -> Self {
        Self {
            seed: config.seed,
            step: optimizer.map_or(0, Adam::steps_taken),
            epoch,
            config: config.clone(),
            tensors: model
                .store
                .iter()
                .map(|(_, p)| Tensor {
                    name: p.name.clone(),
                    group: p.group,
                    value: p.value.clone(),
                })
                .collect(),
            optimizer: optimizer.cloned(),
        }
    }

    /// Rebuilds the model described by the stored config and tensors.
    pub fn model(&self) -> Result<CorefModel> {
        let params = self.tensors.iter().map(|t| (t.name.clone(), t.value.clone())).collect();
        CorefModel::with_parameters(self.config.model.clone(), params)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&self.seed.to_le_bytes());
        out.extend_from_slice(&self.step.to_le_bytes());
        out.extend_from_slice(&self.epoch.to_le_bytes());
        let config = serde_json::to_vec(&self.config).expect("config serializes");
        put_u32(&mut out, config.len());
        out.extend_from_slice(&config);
        put_u32(&mut out, self.tensors.len());
        for t in &self.tensors {
            put_u32(&mut out, t.name.len());
            out.extend_from_slice(t.name.as_bytes());
            out.push(match t.group {
                ParamGroup::Task => 0,
                ParamGroup::Encoder => 1,
            });
            put_u32(&mut out, t.value.nrows());
            put_u32(&mut out, t.value.ncols());
            put_matrix(&mut out, &t.value);
        }
        match &self.optimizer {
            None => out.push(0),
            Some(adam) => {
                out.push(1);
                out.extend_from_slice(&adam.step.to_le_bytes());
                for (m, v) in adam.first.iter().zip(&adam.second) {
                    put_matrix(&mut out, m);
                    put_matrix(&mut out, v);
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if !bytes.starts_with(CHECKPOINT_MAGIC) {
            return Err(Error::Checkpoint("not a checkpoint file".into()));
        }
        let mut r = Reader { bytes, pos: CHECKPOINT_MAGIC.len() };
        let version = r.u32()? as u32;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let seed = r.u64()?;
        let step = r.u64()?;
        let epoch = r.u64()?;
        let len = r.u32()?;
        let config: TrainConfig = serde_json::from_slice(r.take(len)?).map_err(|e| Error::Checkpoint(format!("config: {e}")))?;
        let count = r.u32()?;
        let mut tensors = Vec::with_capacity(count);
        for _ in 0..count {
            let len = r.u32()?;
            let name = String::from_utf8(r.take(len)?.to_vec()).map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?;
            let group = match r.u8()? {
                0 => ParamGroup::Task,
                1 => ParamGroup::Encoder,
                g => return Err(Error::Checkpoint(format!("tensor {name} has unknown group {g}"))),
            };
            let (rows, cols) = (r.u32()?, r.u32()?);
            let value = r.matrix(rows, cols)?;
            tensors.push(Tensor { name, group, value });
        }
        let optimizer = match r.u8()? {
            0 => None,
            1 => {
                let step = r.u64()?;
                let mut first = Vec::with_capacity(count);
                let mut second = Vec::with_capacity(count);
                for t in &tensors {
                    let (rows, cols) = t.value.dim();
                    first.push(r.matrix(rows, cols)?);
                    second.push(r.matrix(rows, cols)?);
                }
                Some(Adam { step, first, second })
            }
            f => return Err(Error::Checkpoint(format!("bad optimizer flag {f}"))),
        };
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(Self {
            seed,
            step,
            epoch,
            config,
            tensors,
            optimizer,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::file(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_bytes(&std::fs::read(path).map_err(|e| Error::file(path, e))?)
    }
}
