//! Serpentine deposition planning.
//!
//! Even part layers scan x-fastest, odd layers y-fastest; the scan direction
//! flips with the parity of the row index. Empty cells are skipped and cost no
//! time, so successive activations are a uniform `dt` apart.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::geometry::BuildDomain;
use crate::grid::Coord;

pub const DEFAULT_TOOL_SPEED_MM_S: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActivationEvent {
    /// Element coordinates in the domain grid (substrate included).
    pub element: Coord,
    pub time_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActivationSchedule {
    pub events: Vec<ActivationEvent>,
    pub dt: f64,
    pub tool_speed_mm_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleStats {
    pub count: usize,
    pub duration_s: f64,
    pub dt: f64,
}

pub fn plan_zigzag(domain: &BuildDomain, tool_speed_mm_s: f64) -> Result<ActivationSchedule> {
    if !(tool_speed_mm_s.is_finite() && tool_speed_mm_s > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "tool speed must be positive, got {tool_speed_mm_s}"
        )));
    }
    let d = domain.dims();
    let base = domain.substrate_layers();
    let dt = domain.element_size_mm() / tool_speed_mm_s;
    let mut cells = Vec::with_capacity(domain.part_voxel_count());
    for k in base..d.nz {
        let layer = k - base;
        let (rows, cols) = if layer % 2 == 0 { (d.ny, d.nx) } else { (d.nx, d.ny) };
        for row in 0..rows {
            for step in 0..cols {
                let col = if row % 2 == 0 { step } else { cols - 1 - step };
                let c = if layer % 2 == 0 {
                    Coord::new(col, row, k)
                } else {
                    Coord::new(row, col, k)
                };
                if domain.is_part(d.index(c)) {
                    cells.push(c);
                }
            }
        }
    }
    if cells.is_empty() {
        return Err(Error::Toolpath("part has no voxels to deposit".into()));
    }
    let events = cells
        .into_iter()
        .enumerate()
        .map(|(n, element)| ActivationEvent {
            element,
            time_s: n as f64 * dt,
        })
        .collect();
    Ok(ActivationSchedule {
        events,
        dt,
        tool_speed_mm_s,
    })
}

impl ActivationSchedule {
    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn stats(&self) -> ScheduleStats {
        schedule_stats(self)
    }

    /// Check the schedule against a domain: every part voxel exactly once,
    /// uniform times and non-decreasing layers.
    pub fn validate(&self, domain: &BuildDomain) -> Result<()> {
        if self.events.is_empty() {
            return Err(Error::Toolpath("empty schedule".into()));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::Toolpath(format!("invalid dt {}", self.dt)));
        }
        let d = domain.dims();
        let mut seen = vec![false; d.len()];
        for (n, ev) in self.events.iter().enumerate() {
            if !d.contains(ev.element) {
                return Err(Error::Toolpath(format!("event {n} outside the domain")));
            }
            let idx = d.index(ev.element);
            if !domain.is_part(idx) {
                return Err(Error::Toolpath(format!("event {n} targets a non-part voxel")));
            }
            if std::mem::replace(&mut seen[idx], true) {
                return Err(Error::Toolpath(format!("event {n} deposits a voxel twice")));
            }
            let expected = n as f64 * self.dt;
            if (ev.time_s - expected).abs() > 1e-9 * expected.max(1.0) {
                return Err(Error::Toolpath(format!(
                    "event {n} at t = {} s, expected {expected} s",
                    ev.time_s
                )));
            }
            if n > 0 && ev.element.k < self.events[n - 1].element.k {
                return Err(Error::Toolpath(format!("event {n} moves down a layer")));
            }
        }
        if self.events.len() != domain.part_voxel_count() {
            return Err(Error::Toolpath(format!(
                "schedule covers {} of {} part voxels",
                self.events.len(),
                domain.part_voxel_count()
            )));
        }
        Ok(())
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# zigzag v1 dt={}", self.dt)?;
        for ev in &self.events {
            writeln!(w, "{} {} {} {}", ev.time_s, ev.element.i, ev.element.j, ev.element.k)?;
        }
        Ok(())
    }

    /// Parse a toolpath file. The speed is not stored in the file and is
    /// recovered from the element size.
    pub fn read_from<R: BufRead>(r: R, element_size_mm: f64) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Format("empty toolpath file".into()))??;
        let dt: f64 = header
            .strip_prefix("# zigzag v1 dt=")
            .ok_or_else(|| Error::Format(format!("bad toolpath header {header:?}")))?
            .trim()
            .parse()
            .map_err(|_| Error::Format(format!("bad dt in header {header:?}")))?;
        let mut events = Vec::new();
        for (n, line) in lines.enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let bad = || Error::Format(format!("bad toolpath line {}: {line:?}", n + 2));
            if fields.len() != 4 {
                return Err(bad());
            }
            let time_s: f64 = fields[0].parse().map_err(|_| bad())?;
            let idx: Vec<usize> = fields[1..]
                .iter()
                .map(|f| f.parse().map_err(|_| bad()))
                .collect::<Result<_>>()?;
            events.push(ActivationEvent {
                element: Coord::new(idx[0], idx[1], idx[2]),
                time_s,
            });
        }
        Ok(Self {
            events,
            dt,
            tool_speed_mm_s: element_size_mm / dt,
        })
    }

    /// Hex SHA-256 of the toolpath file form; used as dataset provenance.
    pub fn content_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to a Vec cannot fail");
        Sha256::digest(&buf).iter().map(|b| format!("{b:02x}")).collect()
    }
}

pub fn schedule_stats(schedule: &ActivationSchedule) -> ScheduleStats {
    let count = schedule.events.len();
    ScheduleStats {
        count,
        duration_s: count as f64 * schedule.dt,
        dt: schedule.dt,
    }
}
