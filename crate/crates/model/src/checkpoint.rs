//! Binary checkpoint: magic, format version, a JSON header with the
//! configs, progress and RNG state, then named f32 tensors and the Adam
//! moments, all little-endian.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use autosame_tensor::ParamStore;
use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};
use ndarray::{ArrayD, IxDyn};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::ModelConfig;
use crate::optim::{Adam, AdamConfig, Moments};
use crate::train::TrainConfig;

pub const MAGIC: &[u8; 8] = b"ASMECKPT";
pub const VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: not a checkpoint file")]
    BadMagic { path: PathBuf },
    #[error("{path}: format version {found}, this build reads {VERSION}")]
    Version { path: PathBuf, found: u32 },
    #[error("{path}: malformed header: {msg}")]
    Header { path: PathBuf, msg: String },
    #[error("{path}: malformed tensor {name}: {msg}")]
    Tensor { path: PathBuf, name: String, msg: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub model: ModelConfig,
    pub train: TrainConfig,
    /// Epochs completed.
    pub epoch: usize,
    /// Optimizer steps completed.
    pub step: u64,
    pub adam: AdamConfig,
    /// Shuffling/augmentation stream, positioned at the next epoch.
    pub rng: ChaCha8Rng,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub header: Header,
    pub params: ParamStore<f32>,
    pub adam: Adam<f32>,
}

fn write_tensor<W: Write>(w: &mut W, name: &str, a: &ArrayD<f32>) -> std::io::Result<()> {
    w.write_u32::<LE>(name.len() as u32)?;
    w.write_all(name.as_bytes())?;
    w.write_u32::<LE>(a.ndim() as u32)?;
    for &d in a.shape() {
        w.write_u64::<LE>(d as u64)?;
    }
    for &v in a.iter() {
        w.write_f32::<LE>(v)?;
    }
    Ok(())
}

fn read_tensor<R: Read>(r: &mut R) -> std::io::Result<(String, Result<ArrayD<f32>, String>)> {
    let len = r.read_u32::<LE>()? as usize;
    let mut name = vec![0; len];
    r.read_exact(&mut name)?;
    let name = String::from_utf8_lossy(&name).into_owned();
    let ndim = r.read_u32::<LE>()? as usize;
    let mut shape = Vec::with_capacity(ndim);
    for _ in 0..ndim {
        shape.push(r.read_u64::<LE>()? as usize);
    }
    let n: usize = shape.iter().product();
    let mut data = vec![0f32; n];
    r.read_f32_into::<LE>(&mut data)?;
    let a = ArrayD::from_shape_vec(IxDyn(&shape), data).map_err(|e| e.to_string());
    Ok((name, a))
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        let io = |source| CheckpointError::Io {
            path: path.to_path_buf(),
            source,
        };
        let header = serde_json::to_vec(&self.header).map_err(|e| CheckpointError::Header {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })?;
        // Written next to the target and renamed, so a crash never leaves a
        // truncated checkpoint behind.
        let tmp = path.with_extension("tmp");
        let mut w = BufWriter::new(File::create(&tmp).map_err(io)?);
        let body = (|| -> std::io::Result<()> {
            w.write_all(MAGIC)?;
            w.write_u32::<LE>(VERSION)?;
            w.write_u64::<LE>(header.len() as u64)?;
            w.write_all(&header)?;
            w.write_u32::<LE>(self.params.len() as u32)?;
            for (name, p) in self.params.iter() {
                w.write_u8(p.trainable as u8)?;
                write_tensor(&mut w, name, &p.value)?;
            }
            w.write_u64::<LE>(self.adam.step)?;
            w.write_u32::<LE>(self.adam.moments.len() as u32)?;
            for (name, m) in &self.adam.moments {
                write_tensor(&mut w, name, &m.m)?;
                write_tensor(&mut w, name, &m.v)?;
            }
            w.flush()
        })();
        body.map_err(io)?;
        drop(w);
        std::fs::rename(&tmp, path).map_err(io)
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        let p = path.to_path_buf();
        let io = |source| CheckpointError::Io { path: p.clone(), source };
        let mut r = BufReader::new(File::open(path).map_err(io)?);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(io)?;
        if &magic != MAGIC {
            return Err(CheckpointError::BadMagic { path: p });
        }
        let found = r.read_u32::<LE>().map_err(io)?;
        if found != VERSION {
            return Err(CheckpointError::Version { path: p, found });
        }
        let len = r.read_u64::<LE>().map_err(io)? as usize;
        let mut header = vec![0; len];
        r.read_exact(&mut header).map_err(io)?;
        let header: Header = serde_json::from_slice(&header).map_err(|e| CheckpointError::Header {
            path: p.clone(),
            msg: e.to_string(),
        })?;
        let tensor = |r: &mut BufReader<File>| -> Result<(String, ArrayD<f32>), CheckpointError> {
            let (name, a) = read_tensor(r).map_err(io)?;
            match a {
                Ok(a) => Ok((name, a)),
                Err(msg) => Err(CheckpointError::Tensor { path: p.clone(), name, msg }),
            }
        };
        let mut params = ParamStore::new();
        for _ in 0..r.read_u32::<LE>().map_err(io)? {
            let trainable = r.read_u8().map_err(io)? != 0;
            let (name, a) = tensor(&mut r)?;
            params.insert(name.clone(), a, trainable).map_err(|e| CheckpointError::Tensor {
                path: p.clone(),
                name,
                msg: e.to_string(),
            })?;
        }
        let mut adam = Adam::new(header.adam);
        adam.step = r.read_u64::<LE>().map_err(io)?;
        for _ in 0..r.read_u32::<LE>().map_err(io)? {
            let (name, m) = tensor(&mut r)?;
            let (_, v) = tensor(&mut r)?;
            adam.moments.insert(name, Moments { m, v });
        }
        Ok(Self { header, params, adam })
    }
}
