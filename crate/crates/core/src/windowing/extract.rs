use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BuildDomain;
use crate::grid::Coord;
use crate::thermal::{Snapshot, TemperatureHistory};
use crate::toolpath::ActivationSchedule;

use super::distance::boundary_impact;

pub const DEFAULT_WINDOW_EDGE: usize = 11;
pub const DEFAULT_K_RECENT: usize = 10;
pub const CHANNEL_SCHEMA_VERSION: u16 = 1;
/// Channels the network consumes (everything before `TOut`).
pub const INPUT_CHANNELS: usize = 8;

/// Channel blocks in storage order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(usize)]
pub enum Channel {
    TIn = 0,
    RhoAct,
    Power,
    DeltaX,
    DeltaY,
    DeltaZ,
    DConv,
    DDirichlet,
    TOut,
    Mask,
}

impl Channel {
    pub const COUNT: usize = 10;
    pub const ALL: [Channel; Self::COUNT] = [
        Channel::TIn,
        Channel::RhoAct,
        Channel::Power,
        Channel::DeltaX,
        Channel::DeltaY,
        Channel::DeltaZ,
        Channel::DConv,
        Channel::DDirichlet,
        Channel::TOut,
        Channel::Mask,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Channel::TIn => "T_in",
            Channel::RhoAct => "rho_act",
            Channel::Power => "power",
            Channel::DeltaX => "delta_x",
            Channel::DeltaY => "delta_y",
            Channel::DeltaZ => "delta_z",
            Channel::DConv => "d_conv",
            Channel::DDirichlet => "d_dirichlet",
            Channel::TOut => "T_out",
            Channel::Mask => "mask",
        }
    }
}

/// Diffusion length over one activation interval, `sqrt(alpha * dt)`.
pub fn characteristic_radius(alpha_mm2_s: f64, dt_s: f64) -> Result<f64> {
    if !(alpha_mm2_s > 0.0 && dt_s > 0.0) || !alpha_mm2_s.is_finite() || !dt_s.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "diffusivity and time step must be positive, got {alpha_mm2_s} and {dt_s}"
        )));
    }
    Ok((alpha_mm2_s * dt_s).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct WindowRef {
    /// Event whose step the window describes (input before, target after).
    pub event: usize,
    /// Event that deposited the window's centre element.
    pub anchor_event: usize,
}

/// Windows for every event around its `k_recent` most recent deposits
/// (the current one included), in event order.
pub fn plan_windows(event_count: usize, k_recent: usize) -> Vec<WindowRef> {
    let mut refs = Vec::with_capacity(window_count(event_count, k_recent));
    for event in 0..event_count {
        for anchor_event in (event + 1).saturating_sub(k_recent)..=event {
            refs.push(WindowRef { event, anchor_event });
        }
    }
    refs
}

pub fn window_count(event_count: usize, k_recent: usize) -> usize {
    (0..event_count).map(|i| (i + 1).min(k_recent)).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractOptions {
    pub edge: usize,
    pub k_recent: usize,
    /// Keep a seeded random subset of at most this many windows.
    pub max_windows: Option<usize>,
    pub sample_seed: u64,
    pub activation_c: f64,
}

impl Default for ExtractOptions {
    fn default() -> Self {
        Self {
            edge: DEFAULT_WINDOW_EDGE,
            k_recent: DEFAULT_K_RECENT,
            max_windows: None,
            sample_seed: 0,
            activation_c: 1750.0,
        }
    }
}

/// Scales that map raw channels to network units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub t_ambient_c: f64,
    pub t_activation_c: f64,
    /// Distance channels are divided by this (window half-width in mm).
    pub distance_scale_mm: f64,
}

impl Normalization {
    #[inline]
    pub fn temperature(&self, t: f64) -> f64 {
        (t - self.t_ambient_c) / (self.t_activation_c - self.t_ambient_c)
    }

    #[inline]
    pub fn temperature_inv(&self, u: f64) -> f64 {
        u * (self.t_activation_c - self.t_ambient_c) + self.t_ambient_c
    }

    pub fn temperature_span(&self) -> f64 {
        self.t_activation_c - self.t_ambient_c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometryProvenance {
    pub geometry_id: u32,
    pub schedule_hash: String,
    pub element_size_mm: f64,
    pub event_count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowSample {
    pub geometry_id: u32,
    pub event: u32,
    pub anchor: [u16; 3],
    /// `Channel::COUNT` blocks of `edge^3` values, x-fastest.
    pub data: Vec<f32>,
}

impl WindowSample {
    pub fn voxels(&self) -> usize {
        self.data.len() / Channel::COUNT
    }

    pub fn channel(&self, ch: Channel) -> &[f32] {
        let n = self.voxels();
        &self.data[ch as usize * n..(ch as usize + 1) * n]
    }

    fn channel_mut(&mut self, ch: Channel) -> &mut [f32] {
        let n = self.voxels();
        &mut self.data[ch as usize * n..(ch as usize + 1) * n]
    }

    pub fn mask(&self) -> Vec<bool> {
        self.channel(Channel::Mask).iter().map(|&m| m != 0.0).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowDataset {
    pub edge: usize,
    pub schema_version: u16,
    pub samples: Vec<WindowSample>,
    pub provenance: Vec<GeometryProvenance>,
    pub normalization: Normalization,
}

impl WindowDataset {
    pub fn empty(edge: usize, normalization: Normalization) -> Self {
        Self {
            edge,
            schema_version: CHANNEL_SCHEMA_VERSION,
            samples: Vec::new(),
            provenance: Vec::new(),
            normalization,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Concatenate datasets that share a window size and schema. The
    /// distance scale becomes the largest of the inputs.
    pub fn merge(parts: Vec<WindowDataset>) -> Result<Self> {
        let mut iter = parts.into_iter();
        let mut out = iter
            .next()
            .ok_or_else(|| Error::InvalidArgument("nothing to merge".into()))?;
        for ds in iter {
            if ds.edge != out.edge || ds.schema_version != out.schema_version {
                return Err(Error::Shape("datasets differ in window size or schema".into()));
            }
            out.normalization.distance_scale_mm =
                out.normalization.distance_scale_mm.max(ds.normalization.distance_scale_mm);
            out.samples.extend(ds.samples);
            out.provenance.extend(ds.provenance);
        }
        Ok(out)
    }
}

/// Cut windows for every planned (event, anchor) pair.
///
/// The input block is the state right after event `i` deposits its element
/// (snapshot `i` plus that activation), the target is snapshot `i + 1`, so
/// both share one activation set and `mask == rho_act` in every sample.
pub fn extract_windows(
    history: &TemperatureHistory,
    domain: &BuildDomain,
    schedule: &ActivationSchedule,
    geometry_id: u32,
    opts: &ExtractOptions,
) -> Result<WindowDataset> {
    let d = domain.dims();
    if opts.edge == 0 || opts.edge % 2 == 0 {
        return Err(Error::InvalidArgument(format!("window edge must be odd, got {}", opts.edge)));
    }
    if opts.k_recent == 0 {
        return Err(Error::InvalidArgument("k_recent must be at least 1".into()));
    }
    if history.element_count() != d.len() {
        return Err(Error::Shape(format!(
            "history has {} elements, domain has {}",
            history.element_count(),
            d.len()
        )));
    }
    if history.event_count() != schedule.len() {
        return Err(Error::Shape(format!(
            "history covers {} events, schedule has {}",
            history.event_count(),
            schedule.len()
        )));
    }
    schedule.validate(domain)?;

    let mut refs = plan_windows(schedule.len(), opts.k_recent);
    if let Some(limit) = opts.max_windows {
        if limit < refs.len() {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.sample_seed);
            let mut keep = sample(&mut rng, refs.len(), limit).into_vec();
            keep.sort_unstable();
            refs = keep.into_iter().map(|i| refs[i]).collect();
        }
    }
    refs.dedup();

    // group by event so each snapshot's distance fields are computed once
    let mut groups: Vec<(usize, Vec<usize>)> = Vec::new();
    for r in &refs {
        match groups.last_mut() {
            Some((e, anchors)) if *e == r.event => anchors.push(r.anchor_event),
            _ => groups.push((r.event, vec![r.anchor_event])),
        }
    }

    let half_width = (opts.edge / 2) as f64;
    let normalization = Normalization {
        t_ambient_c: domain.ambient_c,
        t_activation_c: opts.activation_c,
        distance_scale_mm: half_width * domain.element_size_mm(),
    };
    let cutter = Cutter {
        domain,
        schedule,
        edge: opts.edge,
        activation_c: opts.activation_c,
        geometry_id,
    };
    let samples: Vec<WindowSample> = groups
        .par_iter()
        .map(|(event, anchors)| {
            let snaps = history.snapshots();
            cutter.cut_event(*event, anchors, &snaps[*event], &snaps[*event + 1])
        })
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect();

    Ok(WindowDataset {
        edge: opts.edge,
        schema_version: CHANNEL_SCHEMA_VERSION,
        samples,
        provenance: vec![GeometryProvenance {
            geometry_id,
            schedule_hash: schedule.content_hash(),
            element_size_mm: domain.element_size_mm(),
            event_count: schedule.len(),
        }],
        normalization,
    })
}

struct Cutter<'a> {
    domain: &'a BuildDomain,
    schedule: &'a ActivationSchedule,
    edge: usize,
    activation_c: f64,
    geometry_id: u32,
}

impl Cutter<'_> {
    fn cut_event(&self, event: usize, anchors: &[usize], before: &Snapshot, after: &Snapshot) -> Vec<WindowSample> {
        let d = self.domain.dims();
        let deposit = self.schedule.events[event].element;
        let mut active = before.active.clone();
        let mut t_in = before.temperature.clone();
        let dep_idx = d.index(deposit);
        active[dep_idx] = true;
        t_in[dep_idx] = self.activation_c as f32;
        let bif = boundary_impact(self.domain, &active);

        let ambient = self.domain.ambient_c as f32;
        let edge = self.edge;
        let half = (edge / 2) as isize;
        let clamp = (edge - 1) as f32;
        let n = edge * edge * edge;

        anchors
            .iter()
            .map(|&a| {
                let anchor = self.schedule.events[a].element;
                let mut s = WindowSample {
                    geometry_id: self.geometry_id,
                    event: event as u32,
                    anchor: [anchor.i as u16, anchor.j as u16, anchor.k as u16],
                    data: vec![0.0; Channel::COUNT * n],
                };
                for w in 0..n {
                    let wi = (w % edge) as isize - half;
                    let wj = ((w / edge) % edge) as isize - half;
                    let wk = (w / (edge * edge)) as isize - half;
                    let pos = [anchor.i as isize + wi, anchor.j as isize + wj, anchor.k as isize + wk];
                    let delta = [
                        deposit.i as isize - pos[0],
                        deposit.j as isize - pos[1],
                        deposit.k as isize - pos[2],
                    ];
                    s.channel_mut(Channel::Power)[w] = 1.0;
                    s.channel_mut(Channel::DeltaX)[w] = (delta[0] as f32).clamp(-clamp, clamp);
                    s.channel_mut(Channel::DeltaY)[w] = (delta[1] as f32).clamp(-clamp, clamp);
                    s.channel_mut(Channel::DeltaZ)[w] = (delta[2] as f32).clamp(-clamp, clamp);
                    let idx = d
                        .offset(Coord::new(0, 0, 0), pos)
                        .map(|c| d.index(c))
                        .filter(|&i| active[i]);
                    match idx {
                        Some(i) => {
                            s.channel_mut(Channel::TIn)[w] = t_in[i];
                            s.channel_mut(Channel::TOut)[w] = after.temperature[i];
                            s.channel_mut(Channel::RhoAct)[w] = 1.0;
                            s.channel_mut(Channel::Mask)[w] = 1.0;
                            s.channel_mut(Channel::DConv)[w] = finite_or_zero(bif.d_conv[i]);
                            s.channel_mut(Channel::DDirichlet)[w] = finite_or_zero(bif.d_dirichlet[i]);
                        }
                        None => {
                            s.channel_mut(Channel::TIn)[w] = ambient;
                            s.channel_mut(Channel::TOut)[w] = ambient;
                        }
                    }
                }
                s
            })
            .collect()
    }
}

fn finite_or_zero(v: f64) -> f32 {
    if v.is_finite() {
        v as f32
    } else {
        0.0
    }
}
