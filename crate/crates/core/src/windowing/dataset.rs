//! Binary window dataset plus its JSON manifest sidecar.
//!
//! Layout (little-endian): magic `AMWIN01\0`, u16 schema version, u16 window
//! edge, u16 total channel count (8 input + T_out + mask), u32 sample count,
//! then per sample: u32 geometry id, u32 event index, 3 x u16 anchor, and
//! the ten f32 channel blocks in [`Channel`] order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::extract::{Channel, GeometryProvenance, Normalization, WindowDataset, WindowSample, CHANNEL_SCHEMA_VERSION};

const DATASET_MAGIC: &[u8; 8] = b"AMWIN01\0";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub schema_version: u16,
    pub window_edge: usize,
    pub channels: Vec<String>,
    pub sample_count: usize,
    pub provenance: Vec<GeometryProvenance>,
    pub normalization: Normalization,
}

impl Manifest {
    pub fn for_dataset(ds: &WindowDataset) -> Self {
        Self {
            format: "AMWIN01".into(),
            schema_version: ds.schema_version,
            window_edge: ds.edge,
            channels: Channel::ALL.iter().map(|c| c.name().to_string()).collect(),
            sample_count: ds.len(),
            provenance: ds.provenance.clone(),
            normalization: ds.normalization,
        }
    }
}

/// `dir/name.amwin` -> `dir/name.manifest.json`
pub fn manifest_path(path: &Path) -> PathBuf {
    path.with_extension("manifest.json")
}

pub fn save_dataset(ds: &WindowDataset, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_dataset(ds, &mut w)?;
    w.flush()?;
    let manifest = serde_json::to_string_pretty(&Manifest::for_dataset(ds))?;
    std::fs::write(manifest_path(path), manifest)?;
    Ok(())
}

pub fn load_dataset(path: &Path) -> Result<WindowDataset> {
    let manifest: Manifest = serde_json::from_str(&std::fs::read_to_string(manifest_path(path))?)?;
    let (edge, schema_version, samples) = read_dataset(BufReader::new(File::open(path)?))?;
    if manifest.window_edge != edge || manifest.sample_count != samples.len() {
        return Err(Error::Format("dataset manifest does not match the binary payload".into()));
    }
    Ok(WindowDataset {
        edge,
        schema_version,
        samples,
        provenance: manifest.provenance,
        normalization: manifest.normalization,
    })
}

pub(crate) fn write_dataset<W: Write>(ds: &WindowDataset, w: &mut W) -> Result<()> {
    let n = ds.edge.pow(3);
    w.write_all(DATASET_MAGIC)?;
    w.write_u16::<LittleEndian>(ds.schema_version)?;
    w.write_u16::<LittleEndian>(ds.edge as u16)?;
    w.write_u16::<LittleEndian>(Channel::COUNT as u16)?;
    w.write_u32::<LittleEndian>(ds.samples.len() as u32)?;
    for s in &ds.samples {
        if s.data.len() != Channel::COUNT * n {
            return Err(Error::Shape(format!("sample has {} values, expected {}", s.data.len(), Channel::COUNT * n)));
        }
        w.write_u32::<LittleEndian>(s.geometry_id)?;
        w.write_u32::<LittleEndian>(s.event)?;
        for a in s.anchor {
            w.write_u16::<LittleEndian>(a)?;
        }
        for &v in &s.data {
            w.write_f32::<LittleEndian>(v)?;
        }
    }
    Ok(())
}

pub(crate) fn read_dataset<R: Read>(mut r: R) -> Result<(usize, u16, Vec<WindowSample>)> {
    let truncated = |what: &str| Error::Format(format!("dataset truncated in {what}"));
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(|_| truncated("magic"))?;
    if &magic != DATASET_MAGIC {
        return Err(Error::Format("bad dataset magic".into()));
    }
    let version = r.read_u16::<LittleEndian>().map_err(|_| truncated("header"))?;
    if version != CHANNEL_SCHEMA_VERSION {
        return Err(Error::Format(format!("unsupported dataset schema version {version}")));
    }
    let edge = r.read_u16::<LittleEndian>().map_err(|_| truncated("header"))? as usize;
    let channels = r.read_u16::<LittleEndian>().map_err(|_| truncated("header"))? as usize;
    if channels != Channel::COUNT {
        return Err(Error::Format(format!("expected {} channels, found {channels}", Channel::COUNT)));
    }
    let count = r.read_u32::<LittleEndian>().map_err(|_| truncated("header"))? as usize;
    let n = edge.pow(3);
    let mut samples = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let geometry_id = r.read_u32::<LittleEndian>().map_err(|_| truncated("sample header"))?;
        let event = r.read_u32::<LittleEndian>().map_err(|_| truncated("sample header"))?;
        let mut anchor = [0u16; 3];
        r.read_u16_into::<LittleEndian>(&mut anchor)
            .map_err(|_| truncated("sample header"))?;
        let mut data = vec![0f32; Channel::COUNT * n];
        r.read_f32_into::<LittleEndian>(&mut data)
            .map_err(|_| truncated("sample payload"))?;
        samples.push(WindowSample {
            geometry_id,
            event,
            anchor,
            data,
        });
    }
    Ok((edge, version, samples))
}
