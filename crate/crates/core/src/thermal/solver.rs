//! Cell-centred finite volumes on the voxel grid, explicit Euler in time.
//!
//! Per active element the update is
//! `T += dt / (rho c V) * sum(face fluxes)`, with conduction between active
//! neighbors through the harmonic-mean conductivity, convection/radiation on
//! every other exterior face, and a ghost value `T_D` half a cell below the
//! bottom substrate faces.

use crate::error::{Error, Result};
use crate::geometry::BuildDomain;
use crate::grid::{Coord, FACE_DIRS};
use crate::toolpath::ActivationSchedule;

use super::history::{Snapshot, TemperatureHistory};
use super::material::{h_c, stable_dt, MaterialModel};

/// Default sub-step as a fraction of the stability limit. Explicit Euler is
/// first order, and right after a 1750 C activation the stability limit alone
/// leaves a ~0.2% sub-step sensitivity in the temperature field.
pub const ACCURACY_FRACTION: f64 = 0.25;

#[derive(Debug, Clone, PartialEq)]
pub struct ThermalState {
    pub temperature: Vec<f64>,
    pub active: Vec<bool>,
    pub solidified: Vec<bool>,
    pub time: f64,
}

impl ThermalState {
    /// Substrate active and solid at ambient; all part voxels inactive.
    pub fn initial(domain: &BuildDomain) -> Self {
        let active = domain.initial_active();
        Self {
            temperature: vec![domain.ambient_c; active.len()],
            solidified: active.clone(),
            active,
            time: 0.0,
        }
    }

    /// Total enthalpy `sum(rho c_eff V T)` in J, with T in Celsius.
    pub fn enthalpy(&self, domain: &BuildDomain, model: &MaterialModel) -> f64 {
        let v = domain.element_size_m().powi(3);
        self.active_indices()
            .map(|i| {
                let t = self.temperature[i];
                model.density.eval(t) * effective_cp(model, t, self.solidified[i]) * v * t
            })
            .sum()
    }

    pub fn active_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.active.iter().enumerate().filter(|(_, &a)| a).map(|(i, _)| i)
    }

    pub fn snapshot(&self) -> Snapshot {
        Snapshot {
            time: self.time,
            temperature: self.temperature.iter().map(|&t| t as f32).collect(),
            active: self.active.clone(),
        }
    }
}

#[inline]
fn effective_cp(model: &MaterialModel, t: f64, solidified: bool) -> f64 {
    if solidified {
        model.specific_heat.eval(t)
    } else {
        model.enhanced_cp
    }
}

/// Switch an element on at the activation temperature.
pub fn activate(state: &mut ThermalState, domain: &BuildDomain, element: Coord, model: &MaterialModel) -> Result<()> {
    let d = domain.dims();
    if !d.contains(element) {
        return Err(Error::Activation(format!("element {element:?} is outside the domain")));
    }
    let idx = d.index(element);
    if !domain.is_occupied(idx) {
        return Err(Error::Activation(format!("element {element:?} is not part of the build")));
    }
    if state.active[idx] {
        return Err(Error::Activation(format!("element {element:?} is already active")));
    }
    state.active[idx] = true;
    state.temperature[idx] = model.activation_c;
    state.solidified[idx] = false;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    pub substeps: usize,
    /// Net heat that entered through boundary faces, in J.
    pub boundary_heat_j: f64,
}

/// Reusable stepping context for one domain and material.
pub struct ThermalSolver<'a> {
    domain: &'a BuildDomain,
    model: &'a MaterialModel,
    max_substep: f64,
    heat: Vec<f64>,
    capacity: Vec<f64>,
    conductivity: Vec<f64>,
    active_list: Vec<usize>,
}

impl<'a> ThermalSolver<'a> {
    pub fn new(domain: &'a BuildDomain, model: &'a MaterialModel) -> Self {
        let max_substep = ACCURACY_FRACTION * stable_dt(model, domain.element_size_mm(), domain.ambient_c);
        let n = domain.dims().len();
        Self {
            domain,
            model,
            max_substep,
            heat: vec![0.0; n],
            capacity: vec![0.0; n],
            conductivity: vec![0.0; n],
            active_list: Vec::new(),
        }
    }

    /// Tighten the sub-step bound.
    pub fn with_max_substep(mut self, dt: f64) -> Self {
        self.max_substep = self.max_substep.min(dt);
        self
    }

    pub fn max_substep(&self) -> f64 {
        self.max_substep
    }

    /// Advance by `dt_macro` seconds using equal sub-steps no larger than the bound.
    pub fn step(&mut self, state: &mut ThermalState, dt_macro: f64) -> Result<StepReport> {
        if !(dt_macro.is_finite() && dt_macro > 0.0) {
            return Err(Error::InvalidArgument(format!("macro step must be positive, got {dt_macro}")));
        }
        let substeps = (dt_macro / self.max_substep).ceil().max(1.0) as usize;
        let dt = dt_macro / substeps as f64;
        self.active_list.clear();
        self.active_list.extend(state.active_indices());
        let t0 = state.time;
        let mut boundary_heat_j = 0.0;
        for s in 0..substeps {
            boundary_heat_j += dt * self.accumulate_fluxes(state);
            self.apply(state, dt, t0 + (s + 1) as f64 * dt, s)?;
        }
        state.time = t0 + dt_macro;
        Ok(StepReport {
            substeps,
            boundary_heat_j,
        })
    }

    /// Fill `self.heat` with the net face flux into each active element (W)
    /// and return the net boundary inflow.
    fn accumulate_fluxes(&mut self, state: &ThermalState) -> f64 {
        let d = self.domain.dims();
        let dx = self.domain.element_size_m();
        let area = dx * dx;
        let vol = area * dx;
        let model = self.model;
        let ambient = self.domain.ambient_c;
        let t_d = self.domain.dirichlet_c;
        let temp = &state.temperature;

        for &i in &self.active_list {
            let t = temp[i];
            self.heat[i] = 0.0;
            self.conductivity[i] = model.conductivity.eval(t);
            self.capacity[i] = model.density.eval(t) * effective_cp(model, t, state.solidified[i]) * vol;
        }

        let mut boundary = 0.0;
        for &i in &self.active_list {
            let c = d.coord(i);
            let t = temp[i];
            let k_i = self.conductivity[i];
            let mut h = None;
            for (dir, off) in FACE_DIRS.iter().enumerate() {
                let neighbor = d.offset(c, *off).map(|n| d.index(n)).filter(|&n| state.active[n]);
                match neighbor {
                    Some(n) => {
                        // each interior face once, from its lower-index side
                        if dir % 2 == 1 {
                            let k_n = self.conductivity[n];
                            let k_face = 2.0 * k_i * k_n / (k_i + k_n);
                            let q = k_face * area * (temp[n] - t) / dx;
                            self.heat[i] += q;
                            self.heat[n] -= q;
                        }
                    }
                    None => {
                        let q = if self.domain.is_dirichlet_face(c, dir) {
                            k_i * area * (t_d - t) / (0.5 * dx)
                        } else {
                            let h = *h.get_or_insert_with(|| h_c(t, model, ambient));
                            -h * area * (t - ambient)
                        };
                        self.heat[i] += q;
                        boundary += q;
                    }
                }
            }
        }
        boundary
    }

    fn apply(&mut self, state: &mut ThermalState, dt: f64, time: f64, substep: usize) -> Result<()> {
        let solidus = self.model.solidus_c;
        for &i in &self.active_list {
                        let mut t = state.temperature[i] + dt * self.heat[i] / self.capacity[i];
            if !state.solidified[i] && t < solidus && t.is_finite() {
                // heat released below solidus is taken at the standard capacity
                let below = (solidus - t) * self.capacity[i];
                let standard = self.standard_capacity(solidus);
                t = solidus - below / standard;
                state.solidified[i] = true;
            }
            if !t.is_finite() {
                return Err(Error::NonFinite {
                    time,
                    substep,
                    element: i,
                    detail: format!(
                        "temperature {t} (previous {}, net flux {} W)",
                        state.temperature[i],
                        self.heat[i]
                    ),
                });
            }
            state.temperature[i] = t;
        }
        Ok(())
    }

    fn standard_capacity(&self, t: f64) -> f64 {
        let v = self.domain.element_size_m().powi(3);
        self.model.density.eval(t) * self.model.specific_heat.eval(t) * v
    }
}

/// One macro step; see [`ThermalSolver::step`].
pub fn step(state: &mut ThermalState, domain: &BuildDomain, model: &MaterialModel, dt_macro: f64) -> Result<StepReport> {
    ThermalSolver::new(domain, model).step(state, dt_macro)
}

/// Run the whole build: snapshot, activate, advance `schedule.dt`, for every
/// event, then a final snapshot.
pub fn simulate(domain: &BuildDomain, schedule: &ActivationSchedule, model: &MaterialModel) -> Result<TemperatureHistory> {
    model.validate(domain.ambient_c)?;
    schedule.validate(domain)?;
    let mut solver = ThermalSolver::new(domain, model);
    let mut state = ThermalState::initial(domain);
    let mut snapshots = Vec::with_capacity(schedule.len() + 1);
    for (n, ev) in schedule.events.iter().enumerate() {
        state.time = ev.time_s;
        snapshots.push(state.snapshot());
        activate(&mut state, domain, ev.element, model)?;
        solver.step(&mut state, schedule.dt)?;
        if n % 1000 == 999 {
            log::debug!("simulated {} of {} events", n + 1, schedule.len());
        }
    }
    snapshots.push(state.snapshot());
    Ok(TemperatureHistory::new(domain.dims().len(), snapshots))
}
