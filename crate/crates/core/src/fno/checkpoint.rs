//! `FNOCKPT1` checkpoint files plus a JSON sidecar.
//!
//! Binary layout, little-endian: the 8-byte magic, then `u32` in_channels,
//! width, out_channels, depth, mx, my, mz, then every parameter as `f64` in
//! [`super::ParamLayout`] order. The projection hidden width is not in the
//! header; it follows from the payload length and is cross-checked against
//! the sidecar, which also carries the activation, the normalization
//! constants and the training configuration.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};

use super::model::{Activation, FnoConfig, FnoModel, ParamLayout};
use super::spectral::ModeSet;
use super::train::TrainConfig;
use crate::error::{Error, Result};
use crate::windowing::Normalization;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"FNOCKPT1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub format: String,
    pub model: FnoConfig,
    pub param_count: usize,
    pub normalization: Normalization,
    pub window_edge: usize,
    pub training: Option<TrainConfig>,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("meta.json")
}

pub fn write_checkpoint<W: Write>(mut w: W, model: &FnoModel) -> Result<()> {
    let c = &model.config;
    w.write_all(CHECKPOINT_MAGIC)?;
    for v in [c.in_channels, c.width, c.out_channels, c.depth, c.modes.mx, c.modes.my, c.modes.mz] {
        let v = u32::try_from(v).map_err(|_| Error::Format(format!("hyperparameter {v} exceeds u32")))?;
        w.write_u32::<LittleEndian>(v)?;
    }
    for &p in &model.params {
        w.write_f64::<LittleEndian>(p)?;
    }
    Ok(())
}

/// Reads a checkpoint. `activation` is taken from the sidecar when known.
pub fn read_checkpoint<R: Read>(mut r: R, activation: Activation) -> Result<FnoModel> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(|_| Error::Format("checkpoint too short".into()))?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::Format("not an FNOCKPT1 checkpoint".into()));
    }
    let mut h = [0usize; 7];
    for v in &mut h {
        *v = r.read_u32::<LittleEndian>().map_err(|_| Error::Format("truncated checkpoint header".into()))? as usize;
    }
    let mut payload = Vec::new();
    r.read_to_end(&mut payload)?;
    if payload.len() % 8 != 0 {
        return Err(Error::Format("checkpoint payload is not a whole number of f64 values".into()));
    }
    let total = payload.len() / 8;
    let [da, dv, du, depth, mx, my, mz] = h;
    let modes = ModeSet::new(mx, my, mz)?;
    // total = base + dh * (dv + 1 + du) + du
    let probe = FnoConfig { in_channels: da, width: dv, out_channels: du, depth, modes, proj_hidden: 0, activation };
    let base = ParamLayout::new(&probe).total;
    let per_hidden = dv + 1 + du;
    if total < base || (total - base) % per_hidden != 0 || total == base {
        return Err(Error::Format(format!("payload of {total} parameters does not fit the header")));
    }
    let proj_hidden = (total - base) / per_hidden;
    let config = FnoConfig { proj_hidden, ..probe };
    let mut params = vec![0.0; total];
    (&payload[..]).read_f64_into::<LittleEndian>(&mut params)?;
    FnoModel::from_params(config, params)
}

pub fn save_checkpoint(
    path: &Path,
    model: &FnoModel,
    normalization: Normalization,
    window_edge: usize,
    training: Option<TrainConfig>,
) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_checkpoint(&mut w, model)?;
    w.flush()?;
    let meta = CheckpointMeta {
        format: "FNOCKPT1".into(),
        model: model.config.clone(),
        param_count: model.param_count(),
        normalization,
        window_edge,
        training,
    };
    std::fs::write(sidecar_path(path), serde_json::to_string_pretty(&meta)?)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(FnoModel, CheckpointMeta)> {
    let meta: CheckpointMeta = serde_json::from_str(&std::fs::read_to_string(sidecar_path(path))?)?;
    let model = read_checkpoint(BufReader::new(File::open(path)?), meta.model.activation)?;
    if model.config != meta.model || model.param_count() != meta.param_count {
        return Err(Error::Format("checkpoint and sidecar disagree on the model shape".into()));
    }
    Ok((model, meta))
}
