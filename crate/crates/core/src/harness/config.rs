//! Run configuration, stored as versioned JSON.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fno::{FnoConfig, TrainConfig};
use crate::geometry::ShapeFamily;
use crate::thermal::{MaterialModel, PiecewiseLinear};
use crate::windowing::{DEFAULT_K_RECENT, DEFAULT_WINDOW_EDGE};

pub const CONFIG_SCHEMA: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometrySpec {
    pub seed: u64,
    pub family: ShapeFamily,
    pub dims: [usize; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProcessParams {
    pub element_size_mm: f64,
    pub tool_speed_mm_s: f64,
    pub activation_c: f64,
    pub ambient_c: f64,
    pub substrate_layers: usize,
}

impl Default for ProcessParams {
    fn default() -> Self {
        ProcessParams {
            element_size_mm: 2.0,
            tool_speed_mm_s: 5.0,
            activation_c: 1750.0,
            ambient_c: 25.0,
            substrate_layers: 2,
        }
    }
}

/// Optional replacements for the default material; constants only.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub specific_heat: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conductivity: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub enhanced_cp: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solidus_c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub emissivity: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h_inf: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowParams {
    pub edge: usize,
    pub k_recent: usize,
    /// Seeded subsample cap per geometry; `None` keeps every window.
    #[serde(default)]
    pub max_per_geometry: Option<usize>,
}

impl Default for WindowParams {
    fn default() -> Self {
        WindowParams { edge: DEFAULT_WINDOW_EDGE, k_recent: DEFAULT_K_RECENT, max_per_geometry: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema: u32,
    /// Model initialization and window subsampling.
    pub seed: u64,
    pub geometries: Vec<GeometrySpec>,
    #[serde(default)]
    pub process: ProcessParams,
    #[serde(default)]
    pub material: MaterialOverrides,
    #[serde(default)]
    pub windows: WindowParams,
    #[serde(default)]
    pub model: FnoConfig,
    #[serde(default)]
    pub training: TrainConfig,
    /// Rows in each fold's worst-window table.
    #[serde(default = "default_worst_k")]
    pub worst_k: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<String>,
}

fn default_worst_k() -> usize {
    5
}

impl RunConfig {
    /// Desk-scale run over the given geometries with every other value at
    /// its default.
    pub fn with_geometries(geometries: Vec<GeometrySpec>) -> Self {
        RunConfig {
            schema: CONFIG_SCHEMA,
            seed: 0,
            geometries,
            process: ProcessParams::default(),
            material: MaterialOverrides::default(),
            windows: WindowParams::default(),
            model: FnoConfig::default(),
            training: TrainConfig::default(),
            worst_k: default_worst_k(),
            out_dir: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    /// Replaces every seed with values derived from `seed`.
    pub fn reseed(&mut self, seed: u64) {
        self.seed = seed;
        self.training.split_seed = seed;
        self.training.shuffle_seed = seed.wrapping_add(1);
    }

    pub fn material_model(&self) -> Result<MaterialModel> {
        let mut m = MaterialModel { activation_c: self.process.activation_c, ..MaterialModel::default() };
        let o = &self.material;
        if let Some(v) = o.density {
            m.density = PiecewiseLinear::constant(v);
        }
        if let Some(v) = o.specific_heat {
            m.specific_heat = PiecewiseLinear::constant(v);
        }
        if let Some(v) = o.conductivity {
            m.conductivity = PiecewiseLinear::constant(v);
        }
        if let Some(v) = o.enhanced_cp {
            m.enhanced_cp = v;
        }
        if let Some(v) = o.solidus_c {
            m.solidus_c = v;
        }
        if let Some(v) = o.emissivity {
            m.emissivity = v;
        }
        if let Some(v) = o.h_inf {
            m.h_inf = v;
        }
        m.validate(self.process.ambient_c)?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.schema != CONFIG_SCHEMA {
            return bad(format!("unsupported config schema {}, expected {CONFIG_SCHEMA}", self.schema));
        }
        if self.geometries.is_empty() {
            return bad("at least one geometry is required".into());
        }
        for (i, g) in self.geometries.iter().enumerate() {
            if g.dims.iter().any(|&d| !(4..=64).contains(&d)) {
                return bad(format!("geometry {i}: dims {:?} outside 4..=64", g.dims));
            }
        }
        let p = &self.process;
        if !(p.element_size_mm > 0.0 && p.element_size_mm.is_finite()) {
            return bad(format!("element size {} must be positive", p.element_size_mm));
        }
        if !(p.tool_speed_mm_s > 0.0 && p.tool_speed_mm_s.is_finite()) {
            return bad(format!("tool speed {} must be positive", p.tool_speed_mm_s));
        }
        if !(p.activation_c > p.ambient_c) {
            return bad("activation temperature must exceed ambient".into());
        }
        if !(1..=16).contains(&p.substrate_layers) {
            return bad(format!("substrate layers {} outside 1..=16", p.substrate_layers));
        }
        let w = &self.windows;
        if w.edge < 3 || w.edge % 2 == 0 || w.k_recent == 0 {
            return bad("window edge must be odd and >= 3, k_recent positive".into());
        }
        if w.max_per_geometry == Some(0) {
            return bad("max_per_geometry must be positive when set".into());
        }
        self.model.validate().map_err(|e| Error::Config(e.to_string()))?;
        let need = self.model.modes.min_grid();
        if need.iter().any(|&n| n > w.edge) {
            return bad(format!("modes {:?} need windows of at least {need:?}", self.model.modes.as_array()));
        }
        self.training.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.material_model().map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }
}
