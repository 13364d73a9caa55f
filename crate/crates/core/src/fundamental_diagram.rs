//! Concave flux-density relations and their inversion.
//!
//! Every diagram in this module belongs to the quadratic family
//!
//! ```text
//! f(rho) = v_max * rho * max(0, 1 - (rho + offset) / rho_max)
//! ```
//!
//! The single-class Greenshields diagram is the `offset = 0` member. The
//! two-class model freezes the density of the other class and reads off a
//! member of the same family for the class being advanced, which is what
//! makes closed-form inversion possible in both settings.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum DiagramError {
    #[error("density {rho} outside [0, {rho_max}]")]
    DensityOutOfRange { rho: f64, rho_max: f64 },
    #[error("flux exceeds capacity: {flux} > {capacity}")]
    FluxExceedsCapacity { flux: f64, capacity: f64 },
    #[error("negative flux {0}")]
    NegativeFlux(f64),
    #[error("invalid diagram parameter: {0}")]
    InvalidParameter(String),
}

/// Branch of a concave diagram.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Regime {
    Free,
    Congested,
}

impl Regime {
    pub fn from_congested(congested: bool) -> Self {
        if congested {
            Regime::Congested
        } else {
            Regime::Free
        }
    }
}

/// A unimodal flux function on `[0, max_density]`.
///
/// The Godunov flux and the admissible-flux projections are written against
/// this trait so that single-class diagrams and two-class sections share them.
pub trait FluxFunction {
    /// Flux without range checks. Negative densities produce negative flux,
    /// which the flux-based boundary strategy relies on to expose infeasible
    /// sensor data instead of hiding it.
    fn eval(&self, rho: f64) -> f64;
    fn critical_density(&self) -> f64;
    fn max_density(&self) -> f64;
    /// Upper bound on `|f'(rho)|` over the domain.
    fn max_speed(&self) -> f64;

    fn capacity(&self) -> f64 {
        self.eval(self.critical_density())
    }

    /// Largest flux a cell at density `rho` can send downstream.
    fn demand(&self, rho: f64) -> f64 {
        self.eval(rho.min(self.critical_density()))
    }

    /// Largest flux a cell at density `rho` can receive from upstream.
    fn supply(&self, rho: f64) -> f64 {
        self.eval(rho.max(self.critical_density()))
    }
}

/// Member of the quadratic family. Used directly as the frozen-coefficient
/// section of a two-class diagram.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Section {
    pub v_max: f64,
    pub rho_max: f64,
    pub offset: f64,
}

impl Section {
    /// Density at which the flux reaches zero again.
    pub fn jam_density(&self) -> f64 {
        (self.rho_max - self.offset).max(0.0)
    }

    pub fn flux(&self, rho: f64) -> Result<f64, DiagramError> {
        check_density(rho, self.rho_max)?;
        Ok(self.eval(rho))
    }

    /// Root of `f(rho) = flux` on the requested branch.
    pub fn invert(&self, flux: f64, regime: Regime) -> Result<f64, DiagramError> {
        if flux < 0.0 || flux.is_nan() {
            return Err(DiagramError::NegativeFlux(flux));
        }
        let capacity = self.capacity();
        if flux > capacity {
            return Err(DiagramError::FluxExceedsCapacity { flux, capacity });
        }
        let jam = self.jam_density();
        if jam == 0.0 {
            // Closed section: only zero flux is admissible.
            return Ok(match regime {
                Regime::Free => 0.0,
                Regime::Congested => self.rho_max,
            });
        }
        // v/M rho^2 - v (jam/M) rho + flux = 0, rewritten as
        // rho^2 - jam rho + flux M / v = 0.
        let scaled = flux * self.rho_max / self.v_max;
        let disc = (jam * jam - 4.0 * scaled).max(0.0).sqrt();
        Ok(match regime {
            // Stable form of (jam - disc) / 2.
            Regime::Free => 2.0 * scaled / (jam + disc),
            Regime::Congested => 0.5 * (jam + disc),
        })
    }
}

impl FluxFunction for Section {
    fn eval(&self, rho: f64) -> f64 {
        self.v_max * rho * (1.0 - (rho + self.offset) / self.rho_max).max(0.0)
    }

    fn critical_density(&self) -> f64 {
        0.5 * self.jam_density()
    }

    fn max_density(&self) -> f64 {
        self.rho_max
    }

    fn max_speed(&self) -> f64 {
        self.v_max
    }
}

/// Greenshields diagram `f(rho) = v_max rho (1 - rho / rho_max)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SingleClassFD {
    pub rho_max: f64,
    pub v_max: f64,
}

impl SingleClassFD {
    pub fn new(rho_max: f64, v_max: f64) -> Result<Self, DiagramError> {
        if !(rho_max > 0.0 && rho_max.is_finite()) {
            return Err(DiagramError::InvalidParameter(format!("rho_max = {rho_max}")));
        }
        if !(v_max > 0.0 && v_max.is_finite()) {
            return Err(DiagramError::InvalidParameter(format!("v_max = {v_max}")));
        }
        Ok(Self { rho_max, v_max })
    }

    /// `f(rho) = rho (1 - rho)`.
    pub fn normalized() -> Self {
        Self { rho_max: 1.0, v_max: 1.0 }
    }

    fn section(&self) -> Section {
        Section { v_max: self.v_max, rho_max: self.rho_max, offset: 0.0 }
    }

    pub fn flux(&self, rho: f64) -> Result<f64, DiagramError> {
        self.section().flux(rho)
    }

    pub fn invert(&self, flux: f64, regime: Regime) -> Result<f64, DiagramError> {
        self.section().invert(flux, regime)
    }

    /// Velocity from `f = rho v`, with the free-flow speed on an empty road.
    pub fn velocity(&self, rho: f64) -> f64 {
        velocity_from(self.eval(rho), rho, self.v_max)
    }
}

impl FluxFunction for SingleClassFD {
    fn eval(&self, rho: f64) -> f64 {
        self.v_max * rho * (1.0 - rho / self.rho_max)
    }

    fn critical_density(&self) -> f64 {
        0.5 * self.rho_max
    }

    fn max_density(&self) -> f64 {
        self.rho_max
    }

    fn max_speed(&self) -> f64 {
        self.v_max
    }
}

/// Clamp a measured outflow into the set of fluxes the scheme can realize at
/// the last cell, `{F(rho_upwind, rho) : rho in [0, rho_max]}`, which for a
/// unimodal diagram is `[0, demand(rho_upwind)]`.
pub fn admissible_flux_projection<F: FluxFunction>(fd: &F, flux: f64, rho_upwind: f64) -> f64 {
    flux.clamp(0.0, fd.demand(rho_upwind).max(0.0))
}

/// Inflow counterpart of [`admissible_flux_projection`]: the left boundary
/// interface can carry at most the supply of the first cell.
pub fn admissible_inflow_projection<F: FluxFunction>(fd: &F, flux: f64, rho_downwind: f64) -> f64 {
    flux.clamp(0.0, fd.supply(rho_downwind).max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VehicleKind {
    Light,
    Heavy,
}

impl VehicleKind {
    pub fn index(self) -> usize {
        match self {
            VehicleKind::Light => 0,
            VehicleKind::Heavy => 1,
        }
    }

    pub fn from_index(index: usize) -> Self {
        if index == 0 {
            VehicleKind::Light
        } else {
            VehicleKind::Heavy
        }
    }
}

/// Light/heavy diagram with a phase transition on the light density.
///
/// ```text
/// f_L = vL rho_L max(0, 1 - (rho_L + eta rho_H) / ML)
/// f_H = vH rho_H max(0, 1 - (rho_H + max(0, rho_L - rho_tr)) / MH)
/// ```
///
/// Below `rho_tr` light vehicles stay in the fast lane and heavy vehicles do
/// not feel them (partial coupling); above it they spill into the slow lanes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoClassFD {
    pub light_max_density: f64,
    pub heavy_max_density: f64,
    pub light_free_speed: f64,
    pub heavy_free_speed: f64,
    pub transition: f64,
    pub heavy_occupancy: f64,
}

impl TwoClassFD {
    pub const DEFAULT_OCCUPANCY: f64 = 2.0;
    pub const DEFAULT_TRANSITION_FRACTION: f64 = 0.4;

    /// Diagram with the default occupancy factor and transition level.
    pub fn new(
        light_max_density: f64,
        heavy_max_density: f64,
        light_free_speed: f64,
        heavy_free_speed: f64,
    ) -> Result<Self, DiagramError> {
        let fd = Self {
            light_max_density,
            heavy_max_density,
            light_free_speed,
            heavy_free_speed,
            transition: Self::DEFAULT_TRANSITION_FRACTION * light_max_density,
            heavy_occupancy: Self::DEFAULT_OCCUPANCY,
        };
        fd.validate()?;
        Ok(fd)
    }

    pub fn validate(&self) -> Result<(), DiagramError> {
        let positive = [
            ("light_max_density", self.light_max_density),
            ("heavy_max_density", self.heavy_max_density),
            ("light_free_speed", self.light_free_speed),
            ("heavy_free_speed", self.heavy_free_speed),
        ];
        for (name, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(DiagramError::InvalidParameter(format!("{name} = {value}")));
            }
        }
        if !(0.0..=self.light_max_density).contains(&self.transition) {
            return Err(DiagramError::InvalidParameter(format!("transition = {}", self.transition)));
        }
        if !(self.heavy_occupancy >= 0.0 && self.heavy_occupancy.is_finite()) {
            return Err(DiagramError::InvalidParameter(format!(
                "heavy_occupancy = {}",
                self.heavy_occupancy
            )));
        }
        Ok(())
    }

    pub fn max_density(&self, kind: VehicleKind) -> f64 {
        match kind {
            VehicleKind::Light => self.light_max_density,
            VehicleKind::Heavy => self.heavy_max_density,
        }
    }

    pub fn free_speed(&self, kind: VehicleKind) -> f64 {
        match kind {
            VehicleKind::Light => self.light_free_speed,
            VehicleKind::Heavy => self.heavy_free_speed,
        }
    }

    pub fn flux_light(&self, rho_l: f64, rho_h: f64) -> f64 {
        self.light_section(rho_h).eval(rho_l)
    }

    pub fn flux_heavy(&self, rho_l: f64, rho_h: f64) -> f64 {
        self.heavy_section(rho_l).eval(rho_h)
    }

    pub fn flux(&self, kind: VehicleKind, rho_l: f64, rho_h: f64) -> f64 {
        match kind {
            VehicleKind::Light => self.flux_light(rho_l, rho_h),
            VehicleKind::Heavy => self.flux_heavy(rho_l, rho_h),
        }
    }

    /// `rho_L -> f_L(rho_L, rho_h)`.
    pub fn light_section(&self, rho_h: f64) -> Section {
        Section {
            v_max: self.light_free_speed,
            rho_max: self.light_max_density,
            offset: self.heavy_occupancy * rho_h.max(0.0),
        }
    }

    /// `rho_H -> f_H(rho_l, rho_H)`.
    pub fn heavy_section(&self, rho_l: f64) -> Section {
        Section {
            v_max: self.heavy_free_speed,
            rho_max: self.heavy_max_density,
            offset: (rho_l - self.transition).max(0.0),
        }
    }

    /// Section of `kind` with the other class frozen at `other`.
    pub fn section(&self, kind: VehicleKind, other: f64) -> Section {
        match kind {
            VehicleKind::Light => self.light_section(other),
            VehicleKind::Heavy => self.heavy_section(other),
        }
    }

    pub fn is_partially_coupled(&self, rho_l: f64) -> bool {
        rho_l < self.transition
    }

    /// Own-class density producing `flux` with the other class frozen.
    pub fn invert_class(
        &self,
        kind: VehicleKind,
        flux: f64,
        other: f64,
        regime: Regime,
    ) -> Result<f64, DiagramError> {
        self.section(kind, other).invert(flux, regime)
    }

    pub fn velocity(&self, kind: VehicleKind, rho_l: f64, rho_h: f64) -> f64 {
        let own = match kind {
            VehicleKind::Light => rho_l,
            VehicleKind::Heavy => rho_h,
        };
        velocity_from(self.flux(kind, rho_l, rho_h), own, self.free_speed(kind))
    }
}

/// `v = f / rho`, falling back to `free_speed` for `rho < 1e-9`.
pub fn velocity_from(flux: f64, rho: f64, free_speed: f64) -> f64 {
    if rho < 1e-9 {
        free_speed
    } else {
        flux / rho
    }
}

fn check_density(rho: f64, rho_max: f64) -> Result<(), DiagramError> {
    if (0.0..=rho_max).contains(&rho) {
        Ok(())
    } else {
        Err(DiagramError::DensityOutOfRange { rho, rho_max })
    }
}
