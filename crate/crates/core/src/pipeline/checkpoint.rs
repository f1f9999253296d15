//! Parameter dumps.
//!
//! Binary layout, all integers and floats little-endian:
//!
//! ```text
//! b"GTCK" u32 version=1 u32 entry_count
//! per entry: u32 name_len, name (utf-8), u32 ndim, ndim × u32 dims, f32 × product(dims)
//! ```
//!
//! Entries appear in the order `patch_embed, pos_embed, proj1, proj1_bias,
//! proj2, proj2_bias, position_table`. The JSON form carries the same named
//! entries with their shapes and row-major data.

use std::collections::HashMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelParams, ParamGroup};
use crate::config::PipelineConfig;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"GTCK";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckpointFormat {
    Binary,
    Json,
}

impl CheckpointFormat {
    /// `.json` files are JSON, everything else binary.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("json") => CheckpointFormat::Json,
            _ => CheckpointFormat::Binary,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub entries: Vec<TensorEntry>,
}

impl Checkpoint {
    pub fn from_params(params: &ModelParams<f32>, config: &PipelineConfig) -> Self {
        Self {
            entries: ParamGroup::ALL
                .iter()
                .map(|&g| TensorEntry {
                    name: g.name().to_string(),
                    shape: g.shape(config),
                    data: params.group(g).to_vec(),
                })
                .collect(),
        }
    }

    /// Rebuilds parameters, checking every named entry against `config`.
    pub fn into_params(self, config: &PipelineConfig) -> Result<ModelParams<f32>> {
        let mut by_name: HashMap<String, TensorEntry> = HashMap::new();
        for e in self.entries {
            if ParamGroup::from_name(&e.name).is_none() {
                return Err(Error::Checkpoint(format!("unknown entry {:?}", e.name)));
            }
            by_name.insert(e.name.clone(), e);
        }
        let mut missing = None;
        let mut bad_shape = None;
        let params = ModelParams::from_flat(config, |g| match by_name.remove(g.name()) {
            Some(e) if e.shape == g.shape(config) => e.data,
            Some(e) => {
                bad_shape.get_or_insert((g.name(), e.shape));
                Vec::new()
            }
            None => {
                missing.get_or_insert(g.name());
                Vec::new()
            }
        });
        if let Some(name) = missing {
            return Err(Error::Checkpoint(format!("missing entry {name}")));
        }
        if let Some((name, shape)) = bad_shape {
            return Err(Error::Checkpoint(format!(
                "{name} has shape {shape:?}, expected {:?}",
                ParamGroup::from_name(name).unwrap().shape(config)
            )));
        }
        let params = params?;
        params.validate(config)?;
        Ok(params)
    }

    pub fn write_binary<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(MAGIC)?;
        out.write_all(&VERSION.to_le_bytes())?;
        out.write_all(&(self.entries.len() as u32).to_le_bytes())?;
        for e in &self.entries {
            out.write_all(&(e.name.len() as u32).to_le_bytes())?;
            out.write_all(e.name.as_bytes())?;
            out.write_all(&(e.shape.len() as u32).to_le_bytes())?;
            for &d in &e.shape {
                out.write_all(&(d as u32).to_le_bytes())?;
            }
            for &v in &e.data {
                out.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut input: R) -> Result<Self> {
        fn u32_le<R: Read>(r: &mut R) -> Result<u32> {
            let mut b = [0u8; 4];
            r.read_exact(&mut b)?;
            Ok(u32::from_le_bytes(b))
        }
        let mut magic = [0u8; 4];
        input.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Checkpoint("not a checkpoint file".into()));
        }
        let version = u32_le(&mut input)?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let count = u32_le(&mut input)?;
        let mut entries = Vec::new();
        for _ in 0..count {
            let len = u32_le(&mut input)? as usize;
            let mut name = vec![0u8; len];
            input.read_exact(&mut name)?;
            let name = String::from_utf8(name).map_err(|_| Error::Checkpoint("entry name is not utf-8".into()))?;
            let ndim = u32_le(&mut input)?;
            let shape = (0..ndim).map(|_| u32_le(&mut input).map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let n: usize = shape.iter().product();
            let mut raw = vec![0u8; n * 4];
            input.read_exact(&mut raw)?;
            let data = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
            entries.push(TensorEntry { name, shape, data });
        }
        Ok(Self { entries })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

pub fn save(params: &ModelParams<f32>, config: &PipelineConfig, path: &Path) -> Result<()> {
    let ckpt = Checkpoint::from_params(params, config);
    match CheckpointFormat::from_path(path) {
        CheckpointFormat::Json => fs::write(path, ckpt.to_json())?,
        CheckpointFormat::Binary => {
            let mut buf = Vec::new();
            ckpt.write_binary(&mut buf)?;
            fs::write(path, buf)?;
        }
    }
    Ok(())
}

pub fn load(config: &PipelineConfig, path: &Path) -> Result<ModelParams<f32>> {
    let ckpt = match CheckpointFormat::from_path(path) {
        CheckpointFormat::Json => Checkpoint::from_json(&fs::read_to_string(path)?)?,
        CheckpointFormat::Binary => Checkpoint::read_binary(fs::read(path)?.as_slice())?,
    };
    ckpt.into_params(config)
}
