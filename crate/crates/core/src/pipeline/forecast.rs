//! Whole-road forecast with a constant inflow and free outflow.

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::godunov::{run, Boundary, Grid, RoadState, RunConfig, Series, TimeStep, TrafficModel, Trajectory};
use crate::neural::Network;

/// Upstream flux held constant over the forecast, one entry per class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum InflowSource {
    PredictedConstant(Vec<f64>),
    LastValue(Vec<f64>),
    Null,
}

impl InflowSource {
    pub fn fluxes(&self, classes: usize) -> Vec<f64> {
        match self {
            InflowSource::PredictedConstant(v) | InflowSource::LastValue(v) => v.clone(),
            InflowSource::Null => vec![0.0; classes],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastConfig {
    pub horizon: f64,
    pub inflow: InflowSource,
    pub time_step: TimeStep,
    pub record_every: Option<f64>,
}

impl ForecastConfig {
    /// Thirty minutes, recorded every minute.
    pub fn new(inflow: InflowSource, time_step: TimeStep) -> Self {
        Self { horizon: 30.0, inflow, time_step, record_every: Some(1.0) }
    }
}

/// Evolve `initial` over the horizon. The inflow is injected after
/// projection onto what the first cell can receive; the right end lets
/// traffic leave freely.
pub fn forecast<M: TrafficModel>(
    initial: &RoadState,
    grid: &Grid,
    model: &M,
    config: &ForecastConfig,
) -> Result<Trajectory, PipelineError> {
    let min = initial.min_density();
    if min < 0.0 {
        return Err(PipelineError::NegativeInitialState(min));
    }
    if !(config.horizon >= 0.0) {
        return Err(PipelineError::InvalidConfig(format!("horizon {}", config.horizon)));
    }
    let q = config.inflow.fluxes(model.classes());
    if q.len() != model.classes() || q.iter().any(|v| !v.is_finite()) {
        return Err(PipelineError::InvalidConfig(format!("inflow {q:?} for {} classes", model.classes())));
    }
    let left = Boundary::FluxInjection { flux: q.iter().map(|&v| Series::constant(v.max(0.0))).collect(), project: true };
    let run_config = RunConfig { horizon: config.horizon, time_step: config.time_step, record_every: config.record_every };
    Ok(run(model, grid, initial.clone(), left, Boundary::FreeOutflow, Vec::new(), &run_config)?)
}

/// Predicted mean inflow per class over the next `horizon` minutes, read at
/// the last row of `history` (all rows of the day up to `t0`).
pub fn predicted_inflow(net: &Network, history: &[Vec<Option<f64>>], horizon: usize) -> Result<Vec<f64>, PipelineError> {
    if net.metadata.horizon != Some(horizon) {
        return Err(PipelineError::HorizonMismatch { model: net.metadata.horizon, requested: horizon });
    }
    if history.is_empty() {
        return Err(PipelineError::InvalidConfig("empty predictor history".into()));
    }
    let out = net.forward(history)?;
    Ok(out.last().expect("non-empty history").iter().map(|v| v.max(0.0)).collect())
}

/// Flux of the last complete sample before `t0`.
pub fn last_value_inflow(flux: &[Series<f64>], t0: f64) -> Vec<f64> {
    flux.iter().map(|s| s.value_at(t0 - 0.5 * s.period.min(1.0))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fundamental_diagram::SingleClassFD;
    use crate::godunov::TrafficModel;
    use crate::neural::NetworkConfig;
    use crate::neural::NormalizationStats;

    fn setup() -> (SingleClassFD, Grid) {
        (SingleClassFD::new(1.0, 0.5).unwrap(), Grid::new(0.0, 2.0, 40).unwrap())
    }

    #[test]
    fn null_inflow_drains_monotonically() {
        let (fd, grid) = setup();
        let init = RoadState::uniform(&[0.3], 40, 0.0);
        let cfg = ForecastConfig::new(InflowSource::Null, TimeStep::Cfl(0.9));
        let traj = forecast(&init, &grid, &fd, &cfg).unwrap();
        let masses: Vec<f64> = traj.snapshots.iter().map(|s| s.mass(0, grid.dx)).collect();
        assert!(masses.windows(2).all(|w| w[1] <= w[0] + 1e-12));
        assert!(*masses.last().unwrap() < 1e-9);
    }

    #[test]
    fn zero_horizon_returns_the_initial_state() {
        let (fd, grid) = setup();
        let init = RoadState::uniform(&[0.3], 40, 5.0);
        let cfg = ForecastConfig { horizon: 0.0, ..ForecastConfig::new(InflowSource::Null, TimeStep::Cfl(0.9)) };
        let traj = forecast(&init, &grid, &fd, &cfg).unwrap();
        assert_eq!(traj.final_state(), &init);
    }

    #[test]
    fn steady_inflow_keeps_steady_mass() {
        let (fd, grid) = setup();
        let rho = 0.2;
        let q = fd.flux(rho).unwrap();
        let init = RoadState::uniform(&[rho], 40, 0.0);
        let cfg = ForecastConfig::new(InflowSource::PredictedConstant(vec![q]), TimeStep::Cfl(0.9));
        let traj = forecast(&init, &grid, &fd, &cfg).unwrap();
        let (m0, m1) = (init.mass(0, grid.dx), traj.final_state().mass(0, grid.dx));
        assert!((m1 - m0).abs() < 0.05 * m0);
    }

    #[test]
    fn mass_budget_telescopes() {
        let (fd, grid) = setup();
        let init = RoadState { time: 0.0, densities: vec![(0..40).map(|j| 0.02 * (j % 7) as f64).collect()] };
        let cfg = ForecastConfig::new(InflowSource::PredictedConstant(vec![0.1]), TimeStep::Cfl(0.8));
        let traj = forecast(&init, &grid, &fd, &cfg).unwrap();
        let lhs = traj.final_state().mass(0, grid.dx) - init.mass(0, grid.dx);
        let rhs = traj.inflow_mass[0] - traj.outflow_mass[0];
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn negative_initial_state_is_rejected() {
        let (fd, grid) = setup();
        let mut init = RoadState::uniform(&[0.3], 40, 0.0);
        init.densities[0][3] = -1e-3;
        let cfg = ForecastConfig::new(InflowSource::Null, TimeStep::Cfl(0.9));
        assert!(matches!(forecast(&init, &grid, &fd, &cfg), Err(PipelineError::NegativeInitialState(_))));
        assert_eq!(fd.classes(), 1);
    }

    #[test]
    fn predictor_horizon_must_match() {
        let mut net = Network::new(&NetworkConfig::predictor(2, 0), NormalizationStats::identity(2), None).unwrap();
        net.metadata.horizon = Some(15);
        let rows = vec![vec![Some(1.0), Some(2.0)]; 3];
        assert!(matches!(predicted_inflow(&net, &rows, 30), Err(PipelineError::HorizonMismatch { .. })));
        net.metadata.horizon = Some(30);
        let q = predicted_inflow(&net, &rows, 30).unwrap();
        assert_eq!(q.len(), 2);
        assert!(q.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn last_value_reads_previous_minute() {
        let s = vec![Series::new(0.0, 1.0, vec![1.0, 2.0, 3.0, 4.0])];
        assert_eq!(last_value_inflow(&s, 3.0), vec![3.0]);
    }
}
