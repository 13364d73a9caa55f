//! Segment-wise warm-up from an empty road up to the present.

use serde::{Deserialize, Serialize};

use super::{PipelineError, SegmentLayout, SensorStream};
use crate::godunov::{cfl_dt, Boundary, Grid, RoadState, Simulation, TimeStep, TrafficModel};

/// How sensor data enter a segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoundaryApproach {
    /// Sensor flux is the boundary interface flux. With `project` it is first
    /// clamped into the flux the neighbouring cell can send or receive.
    FluxBased { project: bool },
    /// Sensor flux is inverted into a ghost density on the branch given by
    /// the regime series.
    DensityBased,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NowcastConfig {
    /// Length of the warm-up window before `t0`.
    pub warm_up: f64,
    pub approach: BoundaryApproach,
    pub dx: f64,
    pub time_step: TimeStep,
    /// Snapshot spacing for the returned trajectory, if any.
    pub record_every: Option<f64>,
}

impl NowcastConfig {
    /// Two hours of warm-up with density-based boundaries.
    pub fn new(dx: f64, time_step: TimeStep) -> Self {
        Self { warm_up: 120.0, approach: BoundaryApproach::DensityBased, dx, time_step, record_every: None }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if !(self.warm_up > 0.0) {
            return Err(PipelineError::InvalidConfig(format!("warm-up {}", self.warm_up)));
        }
        if matches!(self.record_every, Some(e) if !(e > 0.0)) {
            return Err(PipelineError::InvalidConfig("snapshot spacing must be positive".into()));
        }
        Ok(())
    }
}

/// Road state at `t0` and what happened on the way there.
#[derive(Debug, Clone, PartialEq)]
pub struct Nowcast {
    pub state: RoadState,
    pub grid: Grid,
    /// Whole-road snapshots at the configured spacing, ending at `t0`.
    pub snapshots: Vec<RoadState>,
    /// Lowest density each cell reached during the warm-up.
    pub cell_minima: Vec<f64>,
    pub min_density: f64,
    pub max_overshoot: f64,
}

impl Nowcast {
    pub fn stayed_physical(&self) -> bool {
        self.min_density >= 0.0 && self.max_overshoot <= 0.0
    }
}

struct SegmentRun {
    snapshots: Vec<RoadState>,
    cell_minima: Vec<f64>,
    min_density: f64,
    max_overshoot: f64,
}

fn boundary(sensor: &SensorStream, approach: BoundaryApproach) -> Boundary {
    match approach {
        BoundaryApproach::FluxBased { project } => Boundary::FluxInjection { flux: sensor.flux.clone(), project },
        BoundaryApproach::DensityBased => {
            Boundary::DensityFromSensor { flux: sensor.flux.clone(), regime: sensor.regime.clone() }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn run_segment<M: TrafficModel>(
    model: &M,
    left: &SensorStream,
    right: &SensorStream,
    cells: usize,
    config: &NowcastConfig,
    dt: f64,
    t_start: f64,
    t0: f64,
) -> Result<SegmentRun, PipelineError> {
    let grid = Grid::new(left.position, right.position, cells)?;
    let initial = RoadState::empty(model.classes(), cells, t_start);
    let mut sim = Simulation::new(
        model,
        grid,
        initial,
        boundary(left, config.approach),
        boundary(right, config.approach),
        Vec::new(),
    )?;
    sim.check_boundaries(t0)?;
    let mut snapshots = vec![sim.state().clone()];
    if let Some(every) = config.record_every {
        let n = ((t0 - t_start) / every - 1e-9).ceil() as usize;
        for k in 1..=n {
            sim.run_until((t_start + k as f64 * every).min(t0), dt)?;
            snapshots.push(sim.state().clone());
        }
    } else {
        sim.run_until(t0, dt)?;
        snapshots.push(sim.state().clone());
    }
    Ok(SegmentRun {
        snapshots,
        cell_minima: sim.cell_minima().to_vec(),
        min_density: sim.min_density(),
        max_overshoot: sim.max_overshoot(),
    })
}

/// Density over the whole road at `t0`, each segment warmed up independently
/// from an empty road over `[t0 - warm_up, t0]` between its two sensors.
pub fn nowcast<M: TrafficModel + Sync>(
    layout: &SegmentLayout,
    config: &NowcastConfig,
    model: &M,
    t0: f64,
) -> Result<Nowcast, PipelineError> {
    config.validate()?;
    if layout.classes() != model.classes() {
        return Err(PipelineError::InvalidLayout(format!(
            "layout has {} classes, model {}",
            layout.classes(),
            model.classes()
        )));
    }
    let t_start = t0 - config.warm_up;
    for s in layout.sensors() {
        let (first, last) = s.coverage();
        if first > t_start + 1e-9 {
            return Err(PipelineError::InsufficientHistory { earliest: first, needed: t_start });
        }
        if last < t0 - 1e-9 {
            return Err(PipelineError::HistoryEndsEarly { ends: last, t0 });
        }
    }
    let cells = layout.cells_per_segment(config.dx)?;
    let grid = layout.grid(config.dx)?;
    let dt = match config.time_step {
        TimeStep::Fixed(dt) => dt,
        TimeStep::Cfl(safety) => cfl_dt(model, grid.dx, safety),
    };
    let sensors = layout.sensors();
    let runs: Vec<Result<SegmentRun, PipelineError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..layout.segments())
            .map(|k| {
                let (l, r, n) = (&sensors[k], &sensors[k + 1], cells[k]);
                scope.spawn(move || run_segment(model, l, r, n, config, dt, t_start, t0))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("segment worker panicked")).collect()
    });
    let runs = runs.into_iter().collect::<Result<Vec<_>, _>>()?;
    let frames = runs[0].snapshots.len();
    let snapshots: Vec<RoadState> = (0..frames)
        .map(|i| RoadState::concat(&runs.iter().map(|r| r.snapshots[i].clone()).collect::<Vec<_>>()))
        .collect();
    Ok(Nowcast {
        state: snapshots.last().expect("at least one snapshot").clone(),
        grid,
        snapshots,
        cell_minima: runs.iter().flat_map(|r| r.cell_minima.iter().copied()).collect(),
        min_density: runs.iter().map(|r| r.min_density).fold(f64::INFINITY, f64::min),
        max_overshoot: runs.iter().map(|r| r.max_overshoot).fold(f64::NEG_INFINITY, f64::max),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fundamental_diagram::{Regime, SingleClassFD, TwoClassFD};
    use crate::pipeline::SensorStream;

    fn stream(x: f64, flux: Vec<f64>, congested: bool) -> SensorStream {
        let n = flux.len();
        SensorStream::from_minutes(x, vec![flux], vec![vec![Regime::from_congested(congested); n]])
    }

    fn config() -> NowcastConfig {
        NowcastConfig { warm_up: 60.0, ..NowcastConfig::new(0.1, TimeStep::Cfl(0.9)) }
    }

    #[test]
    fn zero_fluxes_leave_the_road_empty() {
        let fd = SingleClassFD::new(1.0, 0.5).unwrap();
        let layout = SegmentLayout::new(vec![stream(0.0, vec![0.0; 100], false), stream(2.0, vec![0.0; 100], false)]).unwrap();
        let now = nowcast(&layout, &config(), &fd, 80.0).unwrap();
        assert!(now.state.densities[0].iter().all(|r| *r == 0.0));
        assert_eq!(now.state.time, 80.0);
    }

    #[test]
    fn short_history_names_the_first_minute() {
        let fd = SingleClassFD::new(1.0, 0.5).unwrap();
        let mut late = stream(0.0, vec![0.0; 100], false);
        late.flux[0].start = 30.0;
        late.regime[0].start = 30.0;
        let layout = SegmentLayout::new(vec![late, stream(1.0, vec![0.0; 100], false)]).unwrap();
        match nowcast(&layout, &config(), &fd, 80.0) {
            Err(PipelineError::InsufficientHistory { earliest, needed }) => {
                assert_eq!(earliest, 30.0);
                assert_eq!(needed, 20.0);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn steady_free_flow_fills_the_road() {
        let fd = SingleClassFD::new(1.0, 0.5).unwrap();
        let q = fd.flux(0.2).unwrap();
        let layout = SegmentLayout::new(vec![
            stream(0.0, vec![q; 100], false),
            stream(1.0, vec![q; 100], false),
            stream(2.0, vec![q; 100], false),
        ])
        .unwrap();
        let now = nowcast(&layout, &config(), &fd, 80.0).unwrap();
        for r in &now.state.densities[0] {
            assert!((r - 0.2).abs() < 1e-9, "{r}");
        }
        assert!(now.stayed_physical());
    }

    #[test]
    fn segments_are_independent() {
        let fd = SingleClassFD::new(1.0, 0.5).unwrap();
        let q = fd.flux(0.2).unwrap();
        let base = |last: Vec<f64>, congested: bool| {
            SegmentLayout::new(vec![
                stream(0.0, vec![q; 100], false),
                stream(1.0, vec![q; 100], false),
                stream(2.0, last, congested),
            ])
            .unwrap()
        };
        let a = nowcast(&base(vec![q; 100], false), &config(), &fd, 80.0).unwrap();
        let b = nowcast(&base(vec![0.3 * q; 100], true), &config(), &fd, 80.0).unwrap();
        assert_eq!(a.state.densities[0][..10], b.state.densities[0][..10]);
        assert_ne!(a.state.densities[0][10..], b.state.densities[0][10..]);
    }

    #[test]
    fn density_based_two_class_stays_in_range() {
        let fd = TwoClassFD::new(250.0, 70.0, 130.0 / 60.0, 90.0 / 60.0).unwrap();
        let two = |x: f64, l: f64, h: f64, congested: bool| {
            SensorStream::from_minutes(
                x,
                vec![vec![l; 100], vec![h; 100]],
                vec![vec![Regime::from_congested(congested); 100]; 2],
            )
        };
        let layout = SegmentLayout::new(vec![two(0.0, 60.0, 10.0, false), two(4.0, 30.0, 4.0, true)]).unwrap();
        let cfg = NowcastConfig { warm_up: 60.0, ..NowcastConfig::new(0.2, TimeStep::Cfl(0.9)) };
        let now = nowcast(&layout, &cfg, &fd, 70.0).unwrap();
        assert!(now.stayed_physical(), "{} {}", now.min_density, now.max_overshoot);
    }
}
