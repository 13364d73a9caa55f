//! Finite-volume Godunov solver for one- and two-class LWR models.
//!
//! Cells hold averaged densities per vehicle class and are advanced with the
//! conservative update
//!
//! ```text
//! rho_j <- rho_j - dt/dx (F_{j+1/2} - F_{j-1/2})
//! ```
//!
//! Two-class runs compute every class's interface flux from the same
//! pre-step state (Jacobi style), freezing the other class at the mean of the
//! two neighbouring cells so the flux of each class is a single number per
//! interface and mass stays conserved class by class.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fundamental_diagram::{
    velocity_from, DiagramError, FluxFunction, Regime, Section, SingleClassFD, TwoClassFD,
    VehicleKind,
};

pub const MAX_CLASSES: usize = 2;

/// Densities of one cell, one entry per class. Unused entries stay zero.
pub type CellDensities = [f64; MAX_CLASSES];

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("time step {dt} exceeds the CFL limit {limit}")]
    CflViolation { dt: f64, limit: f64 },
    #[error("density {rho} outside [0, {rho_max}]")]
    DensityOutOfRange { rho: f64, rho_max: f64 },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("boundary series ends at t={ends} but the run needs data up to t={needed}")]
    SeriesTooShort { ends: f64, needed: f64 },
    #[error(transparent)]
    Diagram(#[from] DiagramError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub x_min: f64,
    pub x_max: f64,
    pub dx: f64,
    pub cells: usize,
}

impl Grid {
    pub fn new(x_min: f64, x_max: f64, cells: usize) -> Result<Self, SolverError> {
        if cells < 2 {
            return Err(SolverError::InvalidGrid(format!("need at least 2 cells, got {cells}")));
        }
        if !(x_max > x_min) || !x_min.is_finite() || !x_max.is_finite() {
            return Err(SolverError::InvalidGrid(format!("[{x_min}, {x_max}]")));
        }
        Ok(Self { x_min, x_max, dx: (x_max - x_min) / cells as f64, cells })
    }

    /// Grid whose spacing is `dx` up to rounding of the cell count.
    pub fn with_spacing(x_min: f64, x_max: f64, dx: f64) -> Result<Self, SolverError> {
        if !(dx > 0.0) {
            return Err(SolverError::InvalidGrid(format!("dx = {dx}")));
        }
        let cells = ((x_max - x_min) / dx).round() as usize;
        Self::new(x_min, x_max, cells)
    }

    pub fn length(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn center(&self, j: usize) -> f64 {
        self.x_min + (j as f64 + 0.5) * self.dx
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.cells).map(|j| self.center(j)).collect()
    }

    /// Interface index (0 = left boundary, `cells` = right boundary) nearest to `x`.
    pub fn interface_index(&self, x: f64) -> usize {
        let k = ((x - self.x_min) / self.dx).round();
        k.clamp(0.0, self.cells as f64) as usize
    }

    pub fn interface_position(&self, k: usize) -> f64 {
        self.x_min + k as f64 * self.dx
    }

    /// Cell containing `x`, clamped to the grid.
    pub fn cell_index(&self, x: f64) -> usize {
        let j = ((x - self.x_min) / self.dx).floor();
        j.clamp(0.0, (self.cells - 1) as f64) as usize
    }
}

/// Cell-averaged densities per class at a given time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoadState {
    pub time: f64,
    /// `densities[class][cell]`.
    pub densities: Vec<Vec<f64>>,
}

impl RoadState {
    pub fn empty(classes: usize, cells: usize, time: f64) -> Self {
        Self { time, densities: vec![vec![0.0; cells]; classes] }
    }

    pub fn uniform(values: &[f64], cells: usize, time: f64) -> Self {
        Self { time, densities: values.iter().map(|&v| vec![v; cells]).collect() }
    }

    pub fn classes(&self) -> usize {
        self.densities.len()
    }

    pub fn cells(&self) -> usize {
        self.densities.first().map_or(0, Vec::len)
    }

    pub fn cell(&self, j: usize) -> CellDensities {
        let mut out = [0.0; MAX_CLASSES];
        for (c, col) in self.densities.iter().enumerate() {
            out[c] = col[j];
        }
        out
    }

    pub fn mass(&self, class: usize, dx: f64) -> f64 {
        self.densities[class].iter().sum::<f64>() * dx
    }

    pub fn min_density(&self) -> f64 {
        self.densities.iter().flatten().copied().fold(f64::INFINITY, f64::min)
    }

    /// Whether every density lies in `[0, class max]`.
    pub fn is_physical<M: TrafficModel>(&self, model: &M) -> bool {
        self.densities.iter().enumerate().all(|(c, col)| {
            let max = model.max_density(c);
            col.iter().all(|&r| r.is_finite() && (0.0..=max).contains(&r))
        })
    }

    /// Concatenate states defined on adjacent grids.
    pub fn concat(parts: &[RoadState]) -> RoadState {
        let classes = parts.first().map_or(0, RoadState::classes);
        let time = parts.first().map_or(0.0, |p| p.time);
        let mut densities = vec![Vec::new(); classes];
        for part in parts {
            for (c, col) in part.densities.iter().enumerate() {
                densities[c].extend_from_slice(col);
            }
        }
        RoadState { time, densities }
    }
}

/// Traffic model seen by the scheme: per-class sections at interfaces and
/// ghost-density reconstruction from sensor fluxes.
pub trait TrafficModel {
    fn classes(&self) -> usize;
    fn max_density(&self, class: usize) -> f64;
    /// Largest characteristic speed, used for the CFL bound.
    fn max_speed(&self) -> f64;
    /// Section of `class` with every other class frozen at `frozen`.
    fn section(&self, class: usize, frozen: &CellDensities) -> Section;
    fn velocity(&self, class: usize, cell: &CellDensities) -> f64;

    /// Section used at an interface between `left` and `right`.
    fn interface_section(&self, class: usize, left: &CellDensities, right: &CellDensities) -> Section {
        let mut mean = [0.0; MAX_CLASSES];
        for (m, (l, r)) in mean.iter_mut().zip(left.iter().zip(right)) {
            *m = 0.5 * (l + r);
        }
        self.section(class, &mean)
    }

    fn flux(&self, class: usize, cell: &CellDensities) -> f64 {
        self.section(class, cell).eval(cell[class])
    }

    /// Ghost densities reproducing measured fluxes on the requested branches.
    /// Fluxes above the sectional capacity are first clamped to it.
    fn ghost_from_flux(&self, fluxes: &[f64], regimes: &[Regime]) -> Result<CellDensities, DiagramError>;
}

impl TrafficModel for SingleClassFD {
    fn classes(&self) -> usize {
        1
    }

    fn max_density(&self, _class: usize) -> f64 {
        self.rho_max
    }

    fn max_speed(&self) -> f64 {
        self.v_max
    }

    fn section(&self, _class: usize, _frozen: &CellDensities) -> Section {
        Section { v_max: self.v_max, rho_max: self.rho_max, offset: 0.0 }
    }

    fn velocity(&self, _class: usize, cell: &CellDensities) -> f64 {
        SingleClassFD::velocity(self, cell[0])
    }

    fn ghost_from_flux(&self, fluxes: &[f64], regimes: &[Regime]) -> Result<CellDensities, DiagramError> {
        let f = fluxes[0].clamp(0.0, self.capacity());
        Ok([self.invert(f, regimes[0])?, 0.0])
    }
}

impl TrafficModel for TwoClassFD {
    fn classes(&self) -> usize {
        2
    }

    fn max_density(&self, class: usize) -> f64 {
        TwoClassFD::max_density(self, VehicleKind::from_index(class))
    }

    fn max_speed(&self) -> f64 {
        self.light_free_speed.max(self.heavy_free_speed)
    }

    fn section(&self, class: usize, frozen: &CellDensities) -> Section {
        match VehicleKind::from_index(class) {
            VehicleKind::Light => self.light_section(frozen[1]),
            VehicleKind::Heavy => self.heavy_section(frozen[0]),
        }
    }

    fn velocity(&self, class: usize, cell: &CellDensities) -> f64 {
        TwoClassFD::velocity(self, VehicleKind::from_index(class), cell[0], cell[1])
    }

    /// Light first at a heavy guess taken from the uncoupled heavy section,
    /// then heavy at the updated light density.
    fn ghost_from_flux(&self, fluxes: &[f64], regimes: &[Regime]) -> Result<CellDensities, DiagramError> {
        let invert = |sec: Section, f: f64, regime: Regime| sec.invert(f.clamp(0.0, sec.capacity()), regime);
        let heavy_guess = invert(self.heavy_section(0.0), fluxes[1], regimes[1])?;
        let light = invert(self.light_section(heavy_guess), fluxes[0], regimes[0])?;
        let heavy = invert(self.heavy_section(light), fluxes[1], regimes[1])?;
        Ok([light, heavy])
    }
}

/// Godunov interface flux for a unimodal diagram.
pub fn godunov_flux<F: FluxFunction>(fd: &F, rho_minus: f64, rho_plus: f64) -> Result<f64, SolverError> {
    let rho_max = fd.max_density();
    for rho in [rho_minus, rho_plus] {
        if !(0.0..=rho_max).contains(&rho) {
            return Err(SolverError::DensityOutOfRange { rho, rho_max });
        }
    }
    Ok(godunov_flux_unchecked(fd, rho_minus, rho_plus))
}

/// [`godunov_flux`] without range checks; used inside the scheme, where
/// flux injection may legitimately drive densities negative.
pub fn godunov_flux_unchecked<F: FluxFunction>(fd: &F, rho_minus: f64, rho_plus: f64) -> f64 {
    let sigma = fd.critical_density();
    if rho_minus <= rho_plus {
        fd.eval(rho_minus).min(fd.eval(rho_plus))
    } else if rho_minus < sigma {
        fd.eval(rho_minus)
    } else if rho_plus > sigma {
        fd.eval(rho_plus)
    } else {
        fd.eval(sigma)
    }
}

/// `safety * dx / max|f'|`.
pub fn cfl_dt<M: TrafficModel>(model: &M, dx: f64, safety: f64) -> f64 {
    safety * dx / model.max_speed()
}

/// Piecewise-constant series sampled every `period` starting at `start`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series<T> {
    pub start: f64,
    pub period: f64,
    pub values: Vec<T>,
}

impl<T: Copy> Series<T> {
    pub fn new(start: f64, period: f64, values: Vec<T>) -> Self {
        Self { start, period, values }
    }

    /// Same value for all time.
    pub fn constant(value: T) -> Self {
        Self { start: f64::NEG_INFINITY, period: f64::INFINITY, values: vec![value] }
    }

    pub fn end(&self) -> f64 {
        if self.period.is_infinite() {
            f64::INFINITY
        } else {
            self.start + self.period * self.values.len() as f64
        }
    }

    pub fn value_at(&self, t: f64) -> T {
        if self.period.is_infinite() {
            return self.values[0];
        }
        let k = ((t - self.start) / self.period + 1e-9).floor();
        let k = k.clamp(0.0, (self.values.len() - 1) as f64) as usize;
        self.values[k]
    }

    fn check_covers(&self, t_end: f64) -> Result<(), SolverError> {
        if self.values.is_empty() {
            return Err(SolverError::InvalidConfig("empty boundary series".into()));
        }
        let end = self.end();
        if end + 1e-9 * self.period.min(1.0) < t_end {
            return Err(SolverError::SeriesTooShort { ends: end, needed: t_end });
        }
        Ok(())
    }
}

/// How a road end talks to the outside world. Series vectors hold one entry
/// per class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Boundary {
    DirichletDensity(Vec<Series<f64>>),
    /// Sensor flux replaces the boundary interface flux, optionally clamped
    /// into the admissible set first.
    FluxInjection { flux: Vec<Series<f64>>, project: bool },
    /// Sensor flux turned into a ghost density through the diagram, on the
    /// branch given by the regime series.
    DensityFromSensor { flux: Vec<Series<f64>>, regime: Vec<Series<Regime>> },
    FreeOutflow,
    Closed,
}

impl Boundary {
    fn check(&self, classes: usize, t_end: f64) -> Result<(), SolverError> {
        let check_len = |n: usize| {
            if n == classes {
                Ok(())
            } else {
                Err(SolverError::InvalidConfig(format!("boundary has {n} series for {classes} classes")))
            }
        };
        match self {
            Boundary::DirichletDensity(s) | Boundary::FluxInjection { flux: s, .. } => {
                check_len(s.len())?;
                s.iter().try_for_each(|x| x.check_covers(t_end))
            }
            Boundary::DensityFromSensor { flux, regime } => {
                check_len(flux.len())?;
                check_len(regime.len())?;
                flux.iter().try_for_each(|x| x.check_covers(t_end))?;
                regime.iter().try_for_each(|x| x.check_covers(t_end))
            }
            Boundary::FreeOutflow | Boundary::Closed => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bottleneck {
    pub position: f64,
    /// Fraction of the interface capacity left open, in `[0, 1]`.
    pub capacity_factor: f64,
    pub active_from: f64,
    pub active_until: f64,
}

impl Bottleneck {
    pub fn permanent(position: f64, capacity_factor: f64) -> Self {
        Self { position, capacity_factor, active_from: f64::NEG_INFINITY, active_until: f64::INFINITY }
    }

    pub fn is_active(&self, t: f64) -> bool {
        t >= self.active_from && t < self.active_until
    }

    fn validate(&self, grid: &Grid) -> Result<(), SolverError> {
        if !(grid.x_min < self.position && self.position < grid.x_max) {
            return Err(SolverError::InvalidConfig(format!(
                "bottleneck at {} outside ({}, {})",
                self.position, grid.x_min, grid.x_max
            )));
        }
        if !(0.0..=1.0).contains(&self.capacity_factor) {
            return Err(SolverError::InvalidConfig(format!(
                "capacity factor {} outside [0, 1]",
                self.capacity_factor
            )));
        }
        Ok(())
    }
}

enum Side {
    Left,
    Right,
}

fn boundary_fluxes<M: TrafficModel>(
    model: &M,
    boundary: &Boundary,
    side: Side,
    inner: &CellDensities,
    t: f64,
) -> Result<CellDensities, SolverError> {
    let classes = model.classes();
    let mut out = [0.0; MAX_CLASSES];
    let ghost = match boundary {
        Boundary::Closed => return Ok(out),
        Boundary::FluxInjection { flux, project } => {
            for c in 0..classes {
                let f = flux[c].value_at(t);
                out[c] = if *project {
                    let sec = model.section(c, inner);
                    match side {
                        Side::Left => sec.supply(inner[c]).max(0.0).min(f).max(0.0),
                        Side::Right => sec.demand(inner[c]).max(0.0).min(f).max(0.0),
                    }
                } else {
                    f
                };
            }
            return Ok(out);
        }
        Boundary::FreeOutflow => [0.0; MAX_CLASSES],
        Boundary::DirichletDensity(series) => {
            let mut g = [0.0; MAX_CLASSES];
            for c in 0..classes {
                g[c] = series[c].value_at(t);
            }
            g
        }
        Boundary::DensityFromSensor { flux, regime } => {
            let mut f = [0.0; MAX_CLASSES];
            let mut r = [Regime::Free; MAX_CLASSES];
            for c in 0..classes {
                f[c] = flux[c].value_at(t);
                r[c] = regime[c].value_at(t);
            }
            model.ghost_from_flux(&f[..classes], &r[..classes])?
        }
    };
    let (left, right) = match side {
        Side::Left => (&ghost, inner),
        Side::Right => (inner, &ghost),
    };
    for c in 0..classes {
        let sec = model.interface_section(c, left, right);
        out[c] = godunov_flux_unchecked(&sec, left[c], right[c]);
    }
    Ok(out)
}

/// Fill `fluxes[class][k]` for every interface `k = 0..=cells` at time `t`.
fn interface_fluxes<M: TrafficModel>(
    model: &M,
    grid: &Grid,
    state: &RoadState,
    left: &Boundary,
    right: &Boundary,
    bottlenecks: &[Bottleneck],
    fluxes: &mut [Vec<f64>],
) -> Result<(), SolverError> {
    let n = grid.cells;
    let classes = model.classes();
    let t = state.time;
    let mut prev = state.cell(0);
    for k in 1..n {
        let next = state.cell(k);
        for c in 0..classes {
            let sec = model.interface_section(c, &prev, &next);
            fluxes[c][k] = godunov_flux_unchecked(&sec, prev[c], next[c]);
        }
        prev = next;
    }
    let lf = boundary_fluxes(model, left, Side::Left, &state.cell(0), t)?;
    let rf = boundary_fluxes(model, right, Side::Right, &state.cell(n - 1), t)?;
    for c in 0..classes {
        fluxes[c][0] = lf[c];
        fluxes[c][n] = rf[c];
    }
    for b in bottlenecks.iter().filter(|b| b.is_active(t)) {
        let k = grid.interface_index(b.position);
        if k == 0 || k == n {
            continue;
        }
        let (l, r) = (state.cell(k - 1), state.cell(k));
        for c in 0..classes {
            let cap = b.capacity_factor * model.interface_section(c, &l, &r).capacity();
            fluxes[c][k] = fluxes[c][k].min(cap);
        }
    }
    Ok(())
}

fn check_cfl<M: TrafficModel>(model: &M, grid: &Grid, dt: f64) -> Result<(), SolverError> {
    let limit = cfl_dt(model, grid.dx, 1.0);
    if !(dt > 0.0) || dt > limit * (1.0 + 1e-12) {
        return Err(SolverError::CflViolation { dt, limit });
    }
    Ok(())
}

fn apply_update(grid: &Grid, state: &mut RoadState, fluxes: &[Vec<f64>], dt: f64) {
    let ratio = dt / grid.dx;
    for (col, f) in state.densities.iter_mut().zip(fluxes) {
        for (j, rho) in col.iter_mut().enumerate() {
            *rho -= ratio * (f[j + 1] - f[j]);
        }
    }
    state.time += dt;
}

/// One conservative step of the single-class scheme.
#[allow(clippy::too_many_arguments)]
pub fn step(
    state: &RoadState,
    fd: &SingleClassFD,
    grid: &Grid,
    left: &Boundary,
    right: &Boundary,
    bottlenecks: &[Bottleneck],
    dt: f64,
) -> Result<RoadState, SolverError> {
    advance(fd, state, grid, left, right, bottlenecks, dt)
}

/// One Jacobi-style step of the two-class scheme.
#[allow(clippy::too_many_arguments)]
pub fn step_two_class(
    state: &RoadState,
    fd: &TwoClassFD,
    grid: &Grid,
    left: &Boundary,
    right: &Boundary,
    bottlenecks: &[Bottleneck],
    dt: f64,
) -> Result<RoadState, SolverError> {
    advance(fd, state, grid, left, right, bottlenecks, dt)
}

/// Model-generic step behind [`step`] and [`step_two_class`].
pub fn advance<M: TrafficModel>(
    model: &M,
    state: &RoadState,
    grid: &Grid,
    left: &Boundary,
    right: &Boundary,
    bottlenecks: &[Bottleneck],
    dt: f64,
) -> Result<RoadState, SolverError> {
    check_state_shape(model, grid, state)?;
    check_cfl(model, grid, dt)?;
    let mut fluxes = vec![vec![0.0; grid.cells + 1]; model.classes()];
    interface_fluxes(model, grid, state, left, right, bottlenecks, &mut fluxes)?;
    let mut next = state.clone();
    apply_update(grid, &mut next, &fluxes, dt);
    Ok(next)
}

fn check_state_shape<M: TrafficModel>(model: &M, grid: &Grid, state: &RoadState) -> Result<(), SolverError> {
    if state.classes() != model.classes() || state.densities.iter().any(|c| c.len() != grid.cells) {
        return Err(SolverError::InvalidConfig(format!(
            "state has {} classes x {} cells, model/grid expect {} x {}",
            state.classes(),
            state.cells(),
            model.classes(),
            grid.cells
        )));
    }
    Ok(())
}

/// Stateful stepping with flux bookkeeping, for callers that need interface
/// fluxes as they happen (sensor read-outs, mass budgets).
pub struct Simulation<'m, M: TrafficModel> {
    model: &'m M,
    grid: Grid,
    state: RoadState,
    left: Boundary,
    right: Boundary,
    bottlenecks: Vec<Bottleneck>,
    fluxes: Vec<Vec<f64>>,
    min_density: f64,
    cell_minima: Vec<f64>,
    max_overshoot: f64,
    inflow_mass: Vec<f64>,
    outflow_mass: Vec<f64>,
    steps: usize,
}

impl<'m, M: TrafficModel> Simulation<'m, M> {
    pub fn new(
        model: &'m M,
        grid: Grid,
        initial: RoadState,
        left: Boundary,
        right: Boundary,
        bottlenecks: Vec<Bottleneck>,
    ) -> Result<Self, SolverError> {
        check_state_shape(model, &grid, &initial)?;
        for b in &bottlenecks {
            b.validate(&grid)?;
        }
        let classes = model.classes();
        let min_density = initial.min_density();
        let cell_minima = (0..grid.cells)
            .map(|j| initial.densities.iter().map(|c| c[j]).fold(f64::INFINITY, f64::min))
            .collect();
        let max_overshoot = overshoot(model, &initial);
        Ok(Self {
            model,
            fluxes: vec![vec![0.0; grid.cells + 1]; classes],
            grid,
            state: initial,
            left,
            right,
            bottlenecks,
            min_density,
            cell_minima,
            max_overshoot,
            inflow_mass: vec![0.0; classes],
            outflow_mass: vec![0.0; classes],
            steps: 0,
        })
    }

    pub fn model(&self) -> &'m M {
        self.model
    }

    pub fn state(&self) -> &RoadState {
        &self.state
    }

    pub fn into_state(self) -> RoadState {
        self.state
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn time(&self) -> f64 {
        self.state.time
    }

    /// Interface fluxes used by the most recent step.
    pub fn last_fluxes(&self) -> &[Vec<f64>] {
        &self.fluxes
    }

    /// Lowest density seen in any cell since the start of the run.
    pub fn min_density(&self) -> f64 {
        self.min_density
    }

    /// Lowest density seen in each cell over all classes since the start.
    pub fn cell_minima(&self) -> &[f64] {
        &self.cell_minima
    }

    /// Largest excess of any density over its class maximum seen so far.
    pub fn max_overshoot(&self) -> f64 {
        self.max_overshoot
    }

    pub fn inflow_mass(&self) -> &[f64] {
        &self.inflow_mass
    }

    pub fn outflow_mass(&self) -> &[f64] {
        &self.outflow_mass
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn check_boundaries(&self, t_end: f64) -> Result<(), SolverError> {
        let classes = self.model.classes();
        self.left.check(classes, t_end)?;
        self.right.check(classes, t_end)
    }

    pub fn step(&mut self, dt: f64) -> Result<(), SolverError> {
        check_cfl(self.model, &self.grid, dt)?;
        interface_fluxes(
            self.model,
            &self.grid,
            &self.state,
            &self.left,
            &self.right,
            &self.bottlenecks,
            &mut self.fluxes,
        )?;
        let n = self.grid.cells;
        for c in 0..self.model.classes() {
            self.inflow_mass[c] += self.fluxes[c][0] * dt;
            self.outflow_mass[c] += self.fluxes[c][n] * dt;
        }
        apply_update(&self.grid, &mut self.state, &self.fluxes, dt);
        for col in &self.state.densities {
            for (m, &r) in self.cell_minima.iter_mut().zip(col) {
                *m = m.min(r);
            }
        }
        self.min_density = self.cell_minima.iter().copied().fold(self.min_density, f64::min);
        self.max_overshoot = self.max_overshoot.max(overshoot(self.model, &self.state));
        self.steps += 1;
        Ok(())
    }

    /// Step until `t_end`, shortening the final step to land on it exactly.
    pub fn run_until(&mut self, t_end: f64, dt: f64) -> Result<(), SolverError> {
        self.run_until_observed(t_end, dt, |_, _| {})
    }

    /// As [`Simulation::run_until`], calling `observe(self, h)` after every
    /// step of length `h`; `last_fluxes` then holds that step's fluxes.
    pub fn run_until_observed<F: FnMut(&Self, f64)>(&mut self, t_end: f64, dt: f64, mut observe: F) -> Result<(), SolverError> {
        let t0 = self.state.time;
        let span = t_end - t0;
        if span <= 0.0 {
            return Ok(());
        }
        let n = (span / dt - 1e-9).ceil().max(1.0) as usize;
        for k in 0..n {
            let target = if k + 1 == n { t_end } else { t0 + (k + 1) as f64 * dt };
            let h = target - self.state.time;
            self.step(h)?;
            self.state.time = target;
            observe(self, h);
        }
        Ok(())
    }
}

fn overshoot<M: TrafficModel>(model: &M, state: &RoadState) -> f64 {
    state
        .densities
        .iter()
        .enumerate()
        .flat_map(|(c, col)| {
            let max = model.max_density(c);
            col.iter().map(move |&r| r - max)
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TimeStep {
    Fixed(f64),
    /// Fraction of the CFL limit.
    Cfl(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub horizon: f64,
    pub time_step: TimeStep,
    /// Snapshot spacing; `None` keeps only the initial and final states.
    pub record_every: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub snapshots: Vec<RoadState>,
    pub min_density: f64,
    pub max_overshoot: f64,
    pub inflow_mass: Vec<f64>,
    pub outflow_mass: Vec<f64>,
    pub steps: usize,
}

impl Trajectory {
    pub fn final_state(&self) -> &RoadState {
        self.snapshots.last().expect("trajectory always holds the initial state")
    }

    /// True when no density ever left `[0, class max]`.
    pub fn stayed_physical(&self) -> bool {
        self.min_density >= 0.0 && self.max_overshoot <= 0.0
    }
}

/// Repeated stepping from `initial` over `config.horizon`.
#[allow(clippy::too_many_arguments)]
pub fn run<M: TrafficModel>(
    model: &M,
    grid: &Grid,
    initial: RoadState,
    left: Boundary,
    right: Boundary,
    bottlenecks: Vec<Bottleneck>,
    config: &RunConfig,
) -> Result<Trajectory, SolverError> {
    if !(config.horizon >= 0.0) {
        return Err(SolverError::InvalidConfig(format!("horizon {}", config.horizon)));
    }
    let dt = match config.time_step {
        TimeStep::Fixed(dt) => dt,
        TimeStep::Cfl(safety) => {
            if !(safety > 0.0 && safety <= 1.0) {
                return Err(SolverError::InvalidConfig(format!("CFL safety {safety}")));
            }
            cfl_dt(model, grid.dx, safety)
        }
    };
    check_cfl(model, grid, dt)?;
    let t0 = initial.time;
    let t_end = t0 + config.horizon;
    let mut sim = Simulation::new(model, grid.clone(), initial, left, right, bottlenecks)?;
    sim.check_boundaries(t_end)?;
    let mut snapshots = vec![sim.state().clone()];
    if config.horizon > 0.0 {
        match config.record_every {
            Some(every) if every > 0.0 => {
                let n = (config.horizon / every - 1e-9).ceil() as usize;
                for k in 1..=n {
                    let target = (t0 + k as f64 * every).min(t_end);
                    sim.run_until(target, dt)?;
                    snapshots.push(sim.state().clone());
                }
            }
            _ => {
                sim.run_until(t_end, dt)?;
                snapshots.push(sim.state().clone());
            }
        }
    }
    Ok(Trajectory {
        min_density: sim.min_density(),
        max_overshoot: sim.max_overshoot(),
        inflow_mass: sim.inflow_mass().to_vec(),
        outflow_mass: sim.outflow_mass().to_vec(),
        steps: sim.steps(),
        snapshots,
    })
}

/// Write snapshots as `t,x,rho_light,rho_heavy,v_light,v_heavy`.
///
/// Velocities are multiplied by `speed_scale` (60 turns km/min into km/h).
/// Single-class runs report their density as light with a zero heavy column.
pub fn write_trajectory_csv<M: TrafficModel, W: Write>(
    out: W,
    model: &M,
    grid: &Grid,
    snapshots: &[RoadState],
    speed_scale: f64,
) -> Result<(), SolverError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "x", "rho_light", "rho_heavy", "v_light", "v_heavy"])
        .map_err(csv_io)?;
    for state in snapshots {
        for j in 0..state.cells() {
            let cell = state.cell(j);
            let v_light = model.velocity(0, &cell) * speed_scale;
            let v_heavy = if model.classes() > 1 {
                model.velocity(1, &cell) * speed_scale
            } else {
                0.0
            };
            w.write_record(&[
                state.time.to_string(),
                grid.center(j).to_string(),
                cell[0].to_string(),
                cell[1].to_string(),
                v_light.to_string(),
                v_heavy.to_string(),
            ])
            .map_err(csv_io)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn csv_io(e: csv::Error) -> SolverError {
    SolverError::Io(std::io::Error::other(e))
}

/// Velocity of class `kind` in a two-class cell, with the free-speed fallback.
pub fn class_velocity(fd: &TwoClassFD, kind: VehicleKind, cell: &CellDensities) -> f64 {
    let own = cell[kind.index()];
    velocity_from(fd.flux(kind, cell[0], cell[1]), own, fd.free_speed(kind))
}
