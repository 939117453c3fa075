//! Geometry to window dataset, one geometry at a time.

use crate::error::Result;
use crate::geometry::{attach_substrate, generate_shape, BuildDomain, VoxelPart};
use crate::grid::Dims;
use crate::thermal::{simulate, MaterialModel, TemperatureHistory};
use crate::toolpath::{plan_zigzag, ActivationSchedule};
use crate::windowing::{extract_windows, ExtractOptions, WindowDataset};

use super::config::{GeometrySpec, RunConfig};

/// Everything produced for one geometry.
pub struct GeometryRun {
    pub part: VoxelPart,
    pub domain: BuildDomain,
    pub schedule: ActivationSchedule,
    pub history: TemperatureHistory,
    pub windows: WindowDataset,
}

/// Procedural part at the configured element size.
pub fn build_part(spec: &GeometrySpec, cfg: &RunConfig) -> Result<VoxelPart> {
    let [nx, ny, nz] = spec.dims;
    let shape = generate_shape(spec.seed, spec.family, Dims::new(nx, ny, nz))?;
    VoxelPart::new(shape.dims(), shape.occupancy().to_vec(), cfg.process.element_size_mm)
}

pub fn build_domain(part: &VoxelPart, cfg: &RunConfig) -> Result<BuildDomain> {
    let mut domain = attach_substrate(part, cfg.process.substrate_layers)?;
    domain.ambient_c = cfg.process.ambient_c;
    domain.dirichlet_c = cfg.process.ambient_c;
    Ok(domain)
}

pub fn extract_options(cfg: &RunConfig, geometry_id: u32) -> ExtractOptions {
    ExtractOptions {
        edge: cfg.windows.edge,
        k_recent: cfg.windows.k_recent,
        max_windows: cfg.windows.max_per_geometry,
        sample_seed: cfg.seed.wrapping_add(geometry_id as u64),
        activation_c: cfg.process.activation_c,
    }
}

/// Runs the full pipeline for geometry `geometry_id` of `cfg`.
pub fn run_geometry(cfg: &RunConfig, geometry_id: u32, material: &MaterialModel) -> Result<GeometryRun> {
    let spec = &cfg.geometries[geometry_id as usize];
    let part = build_part(spec, cfg)?;
    let domain = build_domain(&part, cfg)?;
    let schedule = plan_zigzag(&domain, cfg.process.tool_speed_mm_s)?;
    let history = simulate(&domain, &schedule, material)?;
    let windows = extract_windows(&history, &domain, &schedule, geometry_id, &extract_options(cfg, geometry_id))?;
    log::info!(
        "geometry {geometry_id}: {} voxels, {} events, {} windows",
        part.voxel_count(),
        schedule.len(),
        windows.len()
    );
    Ok(GeometryRun { part, domain, schedule, history, windows })
}

/// Window datasets for every configured geometry, in order.
pub fn build_datasets(cfg: &RunConfig) -> Result<Vec<WindowDataset>> {
    let material = cfg.material_model()?;
    (0..cfg.geometries.len())
        .map(|g| run_geometry(cfg, g as u32, &material).map(|r| r.windows))
        .collect()
}
