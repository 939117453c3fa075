use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Stefan-Boltzmann constant, W/(m^2 K^4).
pub const STEFAN_BOLTZMANN: f64 = 5.670374419e-8;
pub const KELVIN_OFFSET: f64 = 273.15;
/// Fraction of the explicit stability limit used for sub-steps.
pub const STABILITY_SAFETY: f64 = 0.5;

/// A property tabulated against temperature in degrees Celsius, linearly
/// interpolated and held constant beyond the end points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseLinear {
    points: Vec<(f64, f64)>,
}

impl PiecewiseLinear {
    pub fn constant(value: f64) -> Self {
        Self {
            points: vec![(0.0, value)],
        }
    }

    pub fn new(mut points: Vec<(f64, f64)>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidArgument("property table is empty".into()));
        }
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        if points.iter().any(|p| !p.0.is_finite() || !p.1.is_finite()) {
            return Err(Error::InvalidArgument("property table has non-finite entries".into()));
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    #[inline]
    pub fn eval(&self, t: f64) -> f64 {
        let p = &self.points;
        if p.len() == 1 || t <= p[0].0 {
            return p[0].1;
        }
        let last = p[p.len() - 1];
        if t >= last.0 {
            return last.1;
        }
        let hi = p.partition_point(|q| q.0 <= t);
        let (t0, v0) = p[hi - 1];
        let (t1, v1) = p[hi];
        v0 + (v1 - v0) * (t - t0) / (t1 - t0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaterialModel {
    /// kg/m^3
    pub density: PiecewiseLinear,
    /// J/(kg K)
    pub specific_heat: PiecewiseLinear,
    /// W/(m K)
    pub conductivity: PiecewiseLinear,
    /// Heat capacity used by fresh deposits until they first cool below solidus.
    pub enhanced_cp: f64,
    pub activation_c: f64,
    pub solidus_c: f64,
    pub emissivity: f64,
    /// Free-convection coefficient, W/(m^2 K).
    pub h_inf: f64,
    pub stefan_boltzmann: f64,
}

impl Default for MaterialModel {
    /// Constant-property S355-like steel with the deposition settings used
    /// for the reference DED runs.
    fn default() -> Self {
        Self {
            density: PiecewiseLinear::constant(7850.0),
            specific_heat: PiecewiseLinear::constant(600.0),
            conductivity: PiecewiseLinear::constant(45.0),
            enhanced_cp: 4537.9,
            activation_c: 1750.0,
            solidus_c: 1450.0,
            emissivity: 0.35,
            h_inf: 15.0,
            stefan_boltzmann: STEFAN_BOLTZMANN,
        }
    }
}

impl MaterialModel {
    /// Thermal diffusivity k/(rho c_p) at `t`, in mm^2/s.
    pub fn diffusivity_mm2_s(&self, t: f64) -> f64 {
        1e6 * self.conductivity.eval(t) / (self.density.eval(t) * self.specific_heat.eval(t))
    }

    pub fn validate(&self, ambient_c: f64) -> Result<()> {
        if !(self.activation_c > self.solidus_c && self.solidus_c > ambient_c) {
            return Err(Error::InvalidArgument(format!(
                "need activation ({}) > solidus ({}) > ambient ({ambient_c})",
                self.activation_c, self.solidus_c
            )));
        }
        for t in sample_temperatures(self, ambient_c) {
            for (name, v) in [
                ("density", self.density.eval(t)),
                ("specific heat", self.specific_heat.eval(t)),
                ("conductivity", self.conductivity.eval(t)),
            ] {
                if !(v > 0.0) {
                    return Err(Error::InvalidArgument(format!("{name} is {v} at {t} C")));
                }
            }
        }
        if !(self.enhanced_cp > 0.0) {
            return Err(Error::InvalidArgument("enhanced heat capacity must be positive".into()));
        }
        if self.emissivity < 0.0 || self.h_inf < 0.0 || self.stefan_boltzmann < 0.0 {
            return Err(Error::InvalidArgument("negative boundary coefficient".into()));
        }
        Ok(())
    }
}

/// Temperatures at which to probe tabulated properties over
/// `[ambient, activation]`: table breakpoints plus a uniform sweep.
fn sample_temperatures(model: &MaterialModel, ambient_c: f64) -> Vec<f64> {
    let (lo, hi) = (ambient_c, model.activation_c.max(ambient_c));
    let mut ts: Vec<f64> = (0..=256).map(|n| lo + (hi - lo) * n as f64 / 256.0).collect();
    for table in [&model.density, &model.specific_heat, &model.conductivity] {
        ts.extend(table.points().iter().map(|p| p.0).filter(|&t| t >= lo && t <= hi));
    }
    ts
}

/// Combined convection and linearized radiation coefficient, W/(m^2 K).
#[inline]
pub fn h_c(t_c: f64, model: &MaterialModel, ambient_c: f64) -> f64 {
    let t = t_c + KELVIN_OFFSET;
    let ta = ambient_c + KELVIN_OFFSET;
    model.h_inf + model.emissivity * model.stefan_boltzmann * (t * t * t + t * t * ta + t * ta * ta + ta * ta * ta)
}

/// Largest sub-step for the explicit scheme, in seconds: the safety factor
/// times `rho c_p dx^2 / (6 k)` minimized over `[ambient, activation]`.
pub fn stable_dt(model: &MaterialModel, element_size_mm: f64, ambient_c: f64) -> f64 {
    let dx = element_size_mm * 1e-3;
    sample_temperatures(model, ambient_c)
        .into_iter()
        .map(|t| {
            model.density.eval(t) * model.specific_heat.eval(t) * dx * dx / (6.0 * model.conductivity.eval(t))
        })
        .fold(f64::INFINITY, f64::min)
        * STABILITY_SAFETY
}
