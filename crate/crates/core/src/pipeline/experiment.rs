//! Forecast error against the nowcast that later becomes available, on a
//! synthetic two-class road fed by a group's per-minute counts.

use serde::{Deserialize, Serialize};

use super::{
    forecast, last_value_inflow, nowcast, predicted_inflow, record_sensors, relative_l1_error, ForecastConfig,
    InflowSource, NowcastConfig, PipelineError, SegmentLayout, SensorStream,
};
use crate::fundamental_diagram::TwoClassFD;
use crate::godunov::{Boundary, Grid, RoadState, Series, Simulation, TimeStep};
use crate::neural::Network;
use crate::sensor_data::{DaySequence, MINUTES_PER_DAY};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastExperiment {
    pub diagram: TwoClassFD,
    /// Sensor positions in km; the first one is the road entrance.
    pub sensors: Vec<f64>,
    pub dx: f64,
    /// Time step in minutes.
    pub dt: f64,
    pub warm_up: f64,
    pub horizon: usize,
    /// Forecast start minutes, applied to every day.
    pub start_minutes: Vec<usize>,
}

impl Default for ForecastExperiment {
    /// A 16 km road with sensors every 8 km, speeds in km/min.
    fn default() -> Self {
        Self {
            diagram: TwoClassFD::new(250.0, 70.0, 130.0 / 60.0, 90.0 / 60.0).expect("valid default diagram"),
            sensors: vec![0.0, 8.0, 16.0],
            dx: 0.2,
            dt: 1.0 / 12.0,
            warm_up: 120.0,
            horizon: 30,
            start_minutes: vec![480, 600, 720, 840, 960],
        }
    }
}

/// Mean relative L1 error per forecast minute and class, averaged over all
/// start instants. `predicted` is present when a predictor was supplied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorCurves {
    pub minutes: Vec<usize>,
    pub predicted: Option<Vec<[f64; 2]>>,
    pub last_value: Vec<[f64; 2]>,
    pub null: Vec<[f64; 2]>,
    pub runs: usize,
}

/// Sensor streams produced by driving the road with a day's group counts.
pub fn simulate_day_sensors(setup: &ForecastExperiment, day: &DaySequence) -> Result<SegmentLayout, PipelineError> {
    let inflow: Vec<Series<f64>> = (0..2).map(|c| Series::new(0.0, 1.0, day.dense(c, 0.0))).collect();
    let start = setup.sensors[0];
    let end = *setup.sensors.last().expect("sensors");
    let cells = ((end - start) / setup.dx).round() as usize;
    let grid = Grid::new(start, end, cells)?;
    let mut sim = Simulation::new(
        &setup.diagram,
        grid,
        RoadState::empty(2, cells, 0.0),
        Boundary::FluxInjection { flux: inflow, project: true },
        Boundary::FreeOutflow,
        Vec::new(),
    )?;
    let streams = record_sensors(&mut sim, MINUTES_PER_DAY as f64, setup.dt, &setup.sensors, 1.0)?;
    SegmentLayout::new(streams)
}

fn add(acc: &mut [[f64; 2]], at: usize, e: &[f64]) {
    acc[at][0] += e[0];
    acc[at][1] += e[1];
}

/// Forecast from each start minute of each day with predicted, last-value and
/// null inflow, scoring every minute of the horizon against a fresh nowcast.
pub fn experiment_forecast_error(
    setup: &ForecastExperiment,
    days: &[DaySequence],
    predictor: Option<&Network>,
) -> Result<ErrorCurves, PipelineError> {
    if days.is_empty() || setup.start_minutes.is_empty() {
        return Err(PipelineError::InvalidConfig("no days or start minutes".into()));
    }
    let h = setup.horizon;
    for &t0 in &setup.start_minutes {
        if (t0 as f64) < setup.warm_up || t0 + h > MINUTES_PER_DAY {
            return Err(PipelineError::InvalidConfig(format!("start minute {t0} leaves no room")));
        }
    }
    let now_cfg = NowcastConfig {
        warm_up: setup.warm_up,
        ..NowcastConfig::new(setup.dx, TimeStep::Fixed(setup.dt))
    };
    let mut predicted = predictor.map(|_| vec![[0.0; 2]; h + 1]);
    let mut last_value = vec![[0.0; 2]; h + 1];
    let mut null = vec![[0.0; 2]; h + 1];
    let mut runs = 0;
    for day in days {
        let layout = simulate_day_sensors(setup, day)?;
        let rows = day.rows();
        for &t0 in &setup.start_minutes {
            let start = nowcast(&layout, &now_cfg, &setup.diagram, t0 as f64)?;
            let references: Vec<RoadState> = (1..=h)
                .map(|d| nowcast(&layout, &now_cfg, &setup.diagram, (t0 + d) as f64).map(|n| n.state))
                .collect::<Result<_, _>>()?;
            let entrance: &SensorStream = &layout.sensors()[0];
            let mut sources = vec![
                (InflowSource::LastValue(last_value_inflow(&entrance.flux, t0 as f64)), &mut last_value),
                (InflowSource::Null, &mut null),
            ];
            if let (Some(net), Some(acc)) = (predictor, predicted.as_mut()) {
                let q = predicted_inflow(net, &rows[..t0], h)?;
                sources.push((InflowSource::PredictedConstant(q), acc));
            }
            for (inflow, acc) in sources {
                let cfg = ForecastConfig {
                    horizon: h as f64,
                    inflow,
                    time_step: TimeStep::Fixed(setup.dt),
                    record_every: Some(1.0),
                };
                let traj = forecast(&start.state, &start.grid, &setup.diagram, &cfg)?;
                for (d, reference) in references.iter().enumerate() {
                    add(acc, d + 1, &relative_l1_error(&traj.snapshots[d + 1], reference, start.grid.dx)?);
                }
            }
            runs += 1;
        }
    }
    let mean = |v: Vec<[f64; 2]>| v.into_iter().map(|e| e.map(|x| x / runs as f64)).collect();
    Ok(ErrorCurves {
        minutes: (0..=h).collect(),
        predicted: predicted.map(mean),
        last_value: mean(last_value),
        null: mean(null),
        runs,
    })
}
