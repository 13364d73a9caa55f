//! Nowcast and forecast of road density driven by sensor streams and
//! learned boundary data, plus the error metric and the reference
//! experiments built on them.

pub mod academic;
pub mod experiment;
pub mod forecast;
pub mod nowcast;

use thiserror::Error;

use crate::fundamental_diagram::{FluxFunction, Regime};
use crate::godunov::{Grid, RoadState, Series, Simulation, SolverError, TrafficModel, MAX_CLASSES};
use crate::neural::{classify_with_confidence, NeuralError, Network};

pub use academic::{experiment_academic, AcademicReport, AcademicSignatures};
pub use experiment::{experiment_forecast_error, ErrorCurves, ForecastExperiment};
pub use forecast::{forecast, last_value_inflow, predicted_inflow, ForecastConfig, InflowSource};
pub use nowcast::{nowcast, BoundaryApproach, Nowcast, NowcastConfig};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid layout: {0}")]
    InvalidLayout(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("sensor history starts at minute {earliest} but the warm-up needs minute {needed}")]
    InsufficientHistory { earliest: f64, needed: f64 },
    #[error("sensor history ends at minute {ends} before t0 = {t0}")]
    HistoryEndsEarly { ends: f64, t0: f64 },
    #[error("initial state has negative density {0}")]
    NegativeInitialState(f64),
    #[error("predictor horizon {model:?} differs from forecast horizon {requested}")]
    HorizonMismatch { model: Option<usize>, requested: usize },
    #[error("reference density is identically zero for class {0}")]
    ZeroReference(usize),
    #[error("states differ in shape: {0}")]
    ShapeMismatch(String),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Neural(#[from] NeuralError),
}

/// Per-class flux and regime streams of one sensor.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorStream {
    pub position: f64,
    pub flux: Vec<Series<f64>>,
    pub regime: Vec<Series<Regime>>,
}

impl SensorStream {
    /// Per-minute series starting at minute 0, one vector per class.
    pub fn from_minutes(position: f64, flux: Vec<Vec<f64>>, regime: Vec<Vec<Regime>>) -> Self {
        Self {
            position,
            flux: flux.into_iter().map(|v| Series::new(0.0, 1.0, v)).collect(),
            regime: regime.into_iter().map(|v| Series::new(0.0, 1.0, v)).collect(),
        }
    }

    pub fn classes(&self) -> usize {
        self.flux.len()
    }

    /// First and last instants covered by every series of the sensor.
    pub fn coverage(&self) -> (f64, f64) {
        let starts = self.flux.iter().map(|s| s.start).chain(self.regime.iter().map(|s| s.start));
        let ends = self.flux.iter().map(Series::end).chain(self.regime.iter().map(Series::end));
        (starts.fold(f64::NEG_INFINITY, f64::max), ends.fold(f64::INFINITY, f64::min))
    }
}

/// Sensors bounding consecutive road segments.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentLayout {
    sensors: Vec<SensorStream>,
}

impl SegmentLayout {
    pub fn new(sensors: Vec<SensorStream>) -> Result<Self, PipelineError> {
        if sensors.len() < 2 {
            return Err(PipelineError::InvalidLayout("need at least two sensors".into()));
        }
        if sensors.windows(2).any(|w| !(w[0].position < w[1].position)) {
            return Err(PipelineError::InvalidLayout("sensor positions must increase strictly".into()));
        }
        let classes = sensors[0].classes();
        if classes == 0 || classes > MAX_CLASSES {
            return Err(PipelineError::InvalidLayout(format!("{classes} classes")));
        }
        if sensors.iter().any(|s| s.classes() != classes || s.regime.len() != classes) {
            return Err(PipelineError::InvalidLayout("sensors disagree on the number of classes".into()));
        }
        Ok(Self { sensors })
    }

    pub fn sensors(&self) -> &[SensorStream] {
        &self.sensors
    }

    pub fn segments(&self) -> usize {
        self.sensors.len() - 1
    }

    pub fn classes(&self) -> usize {
        self.sensors[0].classes()
    }

    pub fn start(&self) -> f64 {
        self.sensors[0].position
    }

    pub fn end(&self) -> f64 {
        self.sensors[self.sensors.len() - 1].position
    }

    /// Cell counts of each segment at spacing `dx`. Every segment length must
    /// be a whole number of cells so the concatenated road has one spacing.
    pub fn cells_per_segment(&self, dx: f64) -> Result<Vec<usize>, PipelineError> {
        if !(dx > 0.0) {
            return Err(PipelineError::InvalidConfig(format!("cell size {dx}")));
        }
        self.sensors
            .windows(2)
            .map(|w| {
                let len = w[1].position - w[0].position;
                let n = (len / dx).round();
                if n < 2.0 || (n * dx - len).abs() > 1e-6 * len {
                    Err(PipelineError::InvalidLayout(format!(
                        "segment ({}, {}) is not a whole number of cells of size {dx}",
                        w[0].position, w[1].position
                    )))
                } else {
                    Ok(n as usize)
                }
            })
            .collect()
    }

    /// Whole-road grid at spacing `dx`.
    pub fn grid(&self, dx: f64) -> Result<Grid, PipelineError> {
        let cells = self.cells_per_segment(dx)?.iter().sum();
        Ok(Grid::new(self.start(), self.end(), cells)?)
    }
}

/// Relative L1 distance per class, `|F - N|_1 / |N|_1` with cell-width
/// weights.
pub fn relative_l1_error(forecast: &RoadState, reference: &RoadState, dx: f64) -> Result<Vec<f64>, PipelineError> {
    if forecast.classes() != reference.classes() || forecast.cells() != reference.cells() {
        return Err(PipelineError::ShapeMismatch(format!(
            "{}x{} against {}x{}",
            forecast.classes(),
            forecast.cells(),
            reference.classes(),
            reference.cells()
        )));
    }
    forecast
        .densities
        .iter()
        .zip(&reference.densities)
        .enumerate()
        .map(|(c, (f, n))| {
            let norm: f64 = n.iter().map(|v| v.abs() * dx).sum();
            if norm == 0.0 {
                return Err(PipelineError::ZeroReference(c));
            }
            let diff: f64 = f.iter().zip(n).map(|(a, b)| (a - b).abs() * dx).sum();
            Ok(diff / norm)
        })
        .collect()
}

/// Constant-regime series covering all time.
pub fn constant_regime(classes: usize, regime: Regime) -> Vec<Series<Regime>> {
    vec![Series::constant(regime); classes]
}

/// Per-minute regimes from congestion labels.
pub fn regimes_from_labels(labels: &[bool]) -> Series<Regime> {
    Series::new(0.0, 1.0, labels.iter().map(|&b| Regime::from_congested(b)).collect())
}

/// Per-minute regimes from a trained congestion classifier.
pub fn regimes_from_classifier(net: &Network, rows: &[Vec<Option<f64>>]) -> Result<Series<Regime>, PipelineError> {
    let labels: Vec<bool> = classify_with_confidence(net, rows)?.into_iter().map(|(b, _)| b).collect();
    Ok(regimes_from_labels(&labels))
}

/// Run `sim` to `t_end` while sensors at `positions` average the interface
/// flux over windows of length `period`. A window is congested for a class
/// when the time-averaged density next to the sensor exceeds the critical
/// density of the local section.
pub fn record_sensors<M: TrafficModel>(
    sim: &mut Simulation<'_, M>,
    t_end: f64,
    dt: f64,
    positions: &[f64],
    period: f64,
) -> Result<Vec<SensorStream>, PipelineError> {
    if !(period > 0.0) {
        return Err(PipelineError::InvalidConfig(format!("sampling period {period}")));
    }
    let classes = sim.state().classes();
    let cells = sim.grid().cells;
    let interfaces: Vec<usize> = positions.iter().map(|&x| sim.grid().interface_index(x)).collect();
    let start = sim.time();
    let windows = ((t_end - start) / period - 1e-9).ceil().max(0.0) as usize;
    let mut flux = vec![vec![vec![0.0; windows]; classes]; positions.len()];
    let mut regime = vec![vec![vec![Regime::Free; windows]; classes]; positions.len()];
    let mut density = vec![[0.0; MAX_CLASSES]; positions.len()];
    for w in 0..windows {
        let w_end = (start + (w + 1) as f64 * period).min(t_end);
        let w_len = w_end - sim.time();
        density.iter_mut().for_each(|d| *d = [0.0; MAX_CLASSES]);
        sim.run_until_observed(w_end, dt, |s, h| {
            let state = s.state();
            for (p, &k) in interfaces.iter().enumerate() {
                let (l, r) = (k.saturating_sub(1), k.min(cells - 1));
                for c in 0..classes {
                    flux[p][c][w] += s.last_fluxes()[c][k] * h;
                    density[p][c] += 0.5 * (state.densities[c][l] + state.densities[c][r]) * h;
                }
            }
        })?;
        for p in 0..positions.len() {
            let mean = density[p].map(|d| d / w_len);
            for c in 0..classes {
                flux[p][c][w] /= w_len;
                let sec = sim_section(sim, c, &mean);
                regime[p][c][w] = Regime::from_congested(mean[c] > sec);
            }
        }
    }
    Ok(positions
        .iter()
        .zip(flux.into_iter().zip(regime))
        .map(|(&x, (f, r))| SensorStream {
            position: x,
            flux: f.into_iter().map(|v| Series::new(start, period, v)).collect(),
            regime: r.into_iter().map(|v| Series::new(start, period, v)).collect(),
        })
        .collect())
}

fn sim_section<M: TrafficModel>(sim: &Simulation<'_, M>, class: usize, cell: &[f64; MAX_CLASSES]) -> f64 {
    sim.model().section(class, cell).critical_density()
}
