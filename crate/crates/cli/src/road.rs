//! Nowcast, forecast, error evaluation and the academic demonstration.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use flowcast::fundamental_diagram::{Regime, SingleClassFD, TwoClassFD};
use flowcast::godunov::{write_trajectory_csv, Grid, RoadState, TimeStep, TrafficModel};
use flowcast::labeling::build_labels;
use flowcast::neural::{classify_with_confidence, HeadMode, Network};
use flowcast::pipeline::{
    experiment_academic, experiment_forecast_error, forecast, last_value_inflow, nowcast, predicted_inflow,
    relative_l1_error, BoundaryApproach, ForecastConfig, ForecastExperiment, InflowSource, Nowcast, NowcastConfig,
    PipelineError, SegmentLayout, SensorStream,
};
use flowcast::sensor_data::{
    aggregate_group, aggregate_lane, flag3t_series, has_flag3t, DaySequence, SensorRecord, MINUTES_PER_DAY,
};
use flowcast::signal::SmoothingKernel;

use crate::config::{parse_list, Config};
use crate::error::{invalid, runtime, Result};
use crate::files::{ensure_parent, read_records_at};
use crate::models::{group_sequences, load_model};

/// Speeds are given in km/h and simulated in km/min.
const MINUTES_PER_HOUR: f64 = 60.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ApproachArg {
    Density,
    Flux,
    FluxProjected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RegimeArg {
    Free,
    Heuristic,
    Classifier,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InflowArg {
    Null,
    Last,
    Predicted,
}

macro_rules! value_enum_from_str {
    ($($t:ty),*) => {$(
        impl std::str::FromStr for $t {
            type Err = String;
            fn from_str(s: &str) -> std::result::Result<Self, String> {
                <Self as ValueEnum>::from_str(s, true)
            }
        }
    )*};
}
value_enum_from_str!(ApproachArg, RegimeArg, InflowArg);

#[derive(Debug, Args)]
pub struct DiagramArgs {
    /// Jam density of light vehicles, veh/km.
    #[arg(long)]
    pub rho_max_light: Option<f64>,
    /// Jam density of heavy vehicles, veh/km.
    #[arg(long)]
    pub rho_max_heavy: Option<f64>,
    /// Free speed of light vehicles, km/h.
    #[arg(long)]
    pub v_light: Option<f64>,
    /// Free speed of heavy vehicles, km/h.
    #[arg(long)]
    pub v_heavy: Option<f64>,
    /// Cell length, km.
    #[arg(long)]
    pub dx: Option<f64>,
    /// Fixed time step, minutes; otherwise a fraction of the CFL limit.
    #[arg(long)]
    pub dt: Option<f64>,
    /// Fraction of the CFL limit used when `--dt` is absent.
    #[arg(long)]
    pub cfl: Option<f64>,
    /// Warm-up before the nowcast instant, minutes.
    #[arg(long)]
    pub warm_up: Option<f64>,
}

struct Numerics {
    diagram: TwoClassFD,
    dx: f64,
    time_step: TimeStep,
    warm_up: f64,
}

fn numerics(args: DiagramArgs, cfg: &Config) -> Result<Numerics> {
    let diagram = TwoClassFD::new(
        cfg.pick_or(args.rho_max_light, "rho-max-light", 250.0)?,
        cfg.pick_or(args.rho_max_heavy, "rho-max-heavy", 70.0)?,
        cfg.pick_or(args.v_light, "v-light", 130.0)? / MINUTES_PER_HOUR,
        cfg.pick_or(args.v_heavy, "v-heavy", 90.0)? / MINUTES_PER_HOUR,
    )
    .map_err(|e| invalid(e.to_string()))?;
    let dx = cfg.pick_or(args.dx, "dx", 0.2)?;
    if !(dx > 0.0) {
        return Err(invalid(format!("--dx {dx} must be positive")));
    }
    let time_step = match cfg.pick(args.dt, "dt")? {
        Some(dt) if dt > 0.0 => TimeStep::Fixed(dt),
        Some(dt) => return Err(invalid(format!("--dt {dt} must be positive"))),
        None => {
            let cfl = cfg.pick_or(args.cfl, "cfl", 0.9)?;
            if !(cfl > 0.0 && cfl <= 1.0) {
                return Err(invalid(format!("--cfl {cfl} outside (0, 1]")));
            }
            TimeStep::Cfl(cfl)
        }
    };
    let warm_up = cfg.pick_or(args.warm_up, "warm-up", 120.0)?;
    if !(warm_up > 0.0) {
        return Err(invalid(format!("--warm-up {warm_up} must be positive")));
    }
    Ok(Numerics { diagram, dx, time_step, warm_up })
}

#[derive(Debug, Args)]
pub struct RoadArgs {
    /// Sensor CSV file or directory.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Detector groups along the road, `G1@0,G2@8,G3@16` (km).
    #[arg(long)]
    pub sensors: Option<String>,
    /// Day to use when the data hold several.
    #[arg(long)]
    pub day: Option<String>,
    /// Present instant, minute of the day.
    #[arg(long)]
    pub at: Option<usize>,
    /// Sensor boundary conditions: ghost densities or injected fluxes.
    #[arg(long)]
    pub approach: Option<ApproachArg>,
    /// Source of the free/congested branch at each sensor; defaults to the
    /// classifier given by `--detector`, or the heuristic labels without one.
    #[arg(long)]
    pub regime: Option<RegimeArg>,
    /// Congestion classifier for `--regime classifier`.
    #[arg(long)]
    pub detector: Option<PathBuf>,
    #[command(flatten)]
    pub numerics: DiagramArgs,
}

struct Road {
    layout: SegmentLayout,
    /// Group sequence at the road entrance.
    entrance: DaySequence,
    numerics: Numerics,
    config: NowcastConfig,
    t0: usize,
}

fn parse_sensors(spec: &str) -> Result<Vec<(String, f64)>> {
    spec.split(',')
        .map(|item| {
            let (group, x) =
                item.trim().split_once('@').ok_or_else(|| invalid(format!("--sensors item {item:?} is not GROUP@KM")))?;
            let x: f64 = x.parse().map_err(|_| invalid(format!("--sensors position {x:?}")))?;
            Ok((group.to_string(), x))
        })
        .collect()
}

fn pick_day(records: &[SensorRecord], requested: Option<String>) -> Result<String> {
    let days: std::collections::BTreeSet<&str> = records.iter().map(|r| r.day.as_str()).collect();
    match requested {
        Some(day) if days.contains(day.as_str()) => Ok(day),
        Some(day) => Err(invalid(format!("no records for day {day}"))),
        None if days.len() == 1 => Ok(days.into_iter().next().expect("one day").to_string()),
        None => Err(invalid(format!("data hold {} days; choose one with --day", days.len()))),
    }
}

/// Congested minutes at a group: any of its lanes congested.
fn group_regime(records: &[SensorRecord], mode: RegimeArg, detector: Option<&Network>) -> Result<Vec<Regime>> {
    let mut congested = vec![false; MINUTES_PER_DAY];
    if mode == RegimeArg::Free {
        return Ok(vec![Regime::Free; MINUTES_PER_DAY]);
    }
    let sensors: std::collections::BTreeSet<&str> = records.iter().map(|r| r.sensor_id.as_str()).collect();
    let kernel = SmoothingKernel::default();
    for sensor in sensors {
        let own: Vec<SensorRecord> = records.iter().filter(|r| r.sensor_id == sensor).cloned().collect();
        let seq = aggregate_lane(&own, sensor, &own[0].day)?;
        let lane: Vec<bool> = match (mode, detector) {
            (RegimeArg::Classifier, Some(net)) => {
                classify_with_confidence(net, &seq.rows())?.into_iter().map(|(b, _)| b).collect()
            }
            (RegimeArg::Classifier, None) => unreachable!("detector checked when the road is built"),
            _ => {
                let flag = if has_flag3t(&own) { flag3t_series(&own) } else { vec![false; MINUTES_PER_DAY] };
                build_labels(&seq, &flag, &kernel)?.target
            }
        };
        congested.iter_mut().zip(lane).for_each(|(c, l)| *c |= l);
    }
    Ok(congested.into_iter().map(Regime::from_congested).collect())
}

fn road(args: RoadArgs, cfg: &Config) -> Result<Road> {
    let numerics = numerics(args.numerics, cfg)?;
    let records = read_records_at(&cfg.require::<PathBuf>(args.data, "data")?)?;
    let day = pick_day(&records, cfg.pick(args.day, "day")?)?;
    let sensors = parse_sensors(&cfg.require::<String>(args.sensors, "sensors")?)?;
    let t0: usize = cfg.require(args.at, "at")?;
    let approach = match cfg.pick_or(args.approach, "approach", ApproachArg::Density)? {
        ApproachArg::Density => BoundaryApproach::DensityBased,
        ApproachArg::Flux => BoundaryApproach::FluxBased { project: false },
        ApproachArg::FluxProjected => BoundaryApproach::FluxBased { project: true },
    };
    let mode = cfg.pick_or(args.regime, "regime", RegimeArg::Classifier)?;
    let detector = match cfg.pick::<PathBuf>(args.detector, "detector")? {
        Some(path) => Some(load_model(&path, HeadMode::Classify)?),
        None => None,
    };
    // Without a trained detector the classifier regime falls back to the labels.
    let mode = match (mode, &detector) {
        (RegimeArg::Classifier, None) => {
            if approach == BoundaryApproach::DensityBased {
                eprintln!("no --detector given; using heuristic congestion labels");
            }
            RegimeArg::Heuristic
        }
        (mode, _) => mode,
    };
    let mut streams = Vec::new();
    let mut entrance = None;
    for (group, x) in &sensors {
        let own: Vec<SensorRecord> = records.iter().filter(|r| r.day == day && &r.group_id == group).cloned().collect();
        if own.is_empty() {
            return Err(invalid(format!("no records for group {group} on {day}")));
        }
        let seq = aggregate_group(&own, group, &day)?;
        let regime = group_regime(&own, mode, detector.as_ref())?;
        streams.push(SensorStream::from_minutes(*x, vec![seq.dense(0, 0.0), seq.dense(1, 0.0)], vec![regime.clone(), regime]));
        entrance.get_or_insert(seq);
    }
    let layout = SegmentLayout::new(streams)?;
    let config = NowcastConfig {
        warm_up: numerics.warm_up,
        approach,
        dx: numerics.dx,
        time_step: numerics.time_step,
        record_every: None,
    };
    Ok(Road { layout, entrance: entrance.ok_or_else(|| invalid("--sensors is empty"))?, numerics, config, t0 })
}

fn nowcast_at(road: &Road, t: usize, record_every: Option<f64>) -> Result<Nowcast> {
    let config = NowcastConfig { record_every, ..road.config.clone() };
    Ok(nowcast(&road.layout, &config, &road.numerics.diagram, t as f64)?)
}

fn write_states<M: TrafficModel>(path: &Path, model: &M, grid: &Grid, states: &[RoadState], speed_scale: f64) -> Result<()> {
    ensure_parent(path)?;
    write_trajectory_csv(std::fs::File::create(path)?, model, grid, states, speed_scale)?;
    Ok(())
}

#[derive(Debug, Args)]
pub struct NowcastArgs {
    #[command(flatten)]
    pub road: RoadArgs,
    /// Also write warm-up snapshots at this spacing, minutes.
    #[arg(long)]
    pub snapshot_every: Option<f64>,
    /// Output trajectory CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn nowcast_cmd(args: NowcastArgs, cfg: &Config) -> Result<()> {
    let out: PathBuf = cfg.require(args.out, "out")?;
    let every = cfg.pick(args.snapshot_every, "snapshot-every")?;
    if matches!(every, Some(e) if !(e > 0.0)) {
        return Err(invalid("--snapshot-every must be positive"));
    }
    let road = road(args.road, cfg)?;
    let now = nowcast_at(&road, road.t0, every)?;
    let states = if every.is_some() { now.snapshots.clone() } else { vec![now.state.clone()] };
    write_states(&out, &road.numerics.diagram, &now.grid, &states, MINUTES_PER_HOUR)?;
    println!(
        "nowcast at minute {}: {} cells, min density {:.4}, physical {} -> {}",
        road.t0,
        now.grid.cells,
        now.min_density,
        now.stayed_physical(),
        out.display()
    );
    Ok(())
}

#[derive(Debug, Args)]
pub struct ForecastArgs {
    #[command(flatten)]
    pub road: RoadArgs,
    /// Forecast length, minutes.
    #[arg(long)]
    pub horizon: Option<usize>,
    #[arg(long)]
    pub inflow: Option<InflowArg>,
    /// Volume predictor for `--inflow predicted`.
    #[arg(long)]
    pub predictor: Option<PathBuf>,
    /// Output trajectory CSV, one snapshot per minute.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Error curve against later nowcasts, `minute,error_light,error_heavy`.
    #[arg(long)]
    pub errors: Option<PathBuf>,
}

pub fn forecast_cmd(args: ForecastArgs, cfg: &Config) -> Result<()> {
    let out: PathBuf = cfg.require(args.out, "out")?;
    let horizon = cfg.pick_or(args.horizon, "horizon", 30)?;
    if horizon == 0 {
        return Err(invalid("--horizon must be positive"));
    }
    let inflow_kind = cfg.pick_or(args.inflow, "inflow", InflowArg::Predicted)?;
    let errors: Option<PathBuf> = cfg.pick(args.errors, "errors")?;
    let predictor = match inflow_kind {
        InflowArg::Predicted => {
            let path: PathBuf = cfg
                .pick(args.predictor, "predictor")?
                .ok_or_else(|| invalid("--inflow predicted needs --predictor"))?;
            Some(load_model(&path, HeadMode::Predict)?)
        }
        _ => None,
    };
    let road = road(args.road, cfg)?;
    if errors.is_some() && road.t0 + horizon > MINUTES_PER_DAY {
        return Err(invalid("the error curve needs data up to minute t0 + horizon"));
    }
    let start = nowcast_at(&road, road.t0, None)?;
    let inflow = match (inflow_kind, &predictor) {
        (InflowArg::Null, _) => InflowSource::Null,
        (InflowArg::Last, _) => InflowSource::LastValue(last_value_inflow(&road.layout.sensors()[0].flux, road.t0 as f64)),
        (InflowArg::Predicted, Some(net)) => {
            InflowSource::PredictedConstant(predicted_inflow(net, &road.entrance.rows()[..road.t0], horizon)?)
        }
        (InflowArg::Predicted, None) => unreachable!("predictor loaded above"),
    };
    let config = ForecastConfig {
        horizon: horizon as f64,
        inflow: inflow.clone(),
        time_step: road.numerics.time_step,
        record_every: Some(1.0),
    };
    let traj = forecast(&start.state, &start.grid, &road.numerics.diagram, &config)?;
    write_states(&out, &road.numerics.diagram, &start.grid, &traj.snapshots, MINUTES_PER_HOUR)?;
    println!("forecast from minute {} with inflow {:?} -> {}", road.t0, inflow.fluxes(2), out.display());
    if let Some(path) = errors {
        ensure_parent(&path)?;
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(["minute", "error_light", "error_heavy"])?;
        for (d, state) in traj.snapshots.iter().enumerate() {
            let reference = if d == 0 { start.state.clone() } else { nowcast_at(&road, road.t0 + d, None)?.state };
            let e = class_errors(state, &reference, start.grid.dx)?;
            w.write_record([d.to_string(), e[0].to_string(), e[1].to_string()])?;
        }
        w.flush()?;
        println!("error curve -> {}", path.display());
    }
    Ok(())
}

/// Relative L1 error per class; a class absent from both states scores 0.
fn class_errors(forecast: &RoadState, reference: &RoadState, dx: f64) -> Result<Vec<f64>> {
    if forecast.classes() != reference.classes() {
        return Err(invalid(format!("{} classes against {}", forecast.classes(), reference.classes())));
    }
    (0..forecast.classes())
        .map(|c| {
            let one = |s: &RoadState| RoadState { time: s.time, densities: vec![s.densities[c].clone()] };
            match relative_l1_error(&one(forecast), &one(reference), dx) {
                Ok(e) => Ok(e[0]),
                Err(PipelineError::ZeroReference(_)) if forecast.densities[c].iter().all(|v| *v == 0.0) => Ok(0.0),
                Err(e) => Err(e.into()),
            }
        })
        .collect()
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Forecast trajectory CSV to score against `--reference`.
    #[arg(long)]
    pub forecast: Option<PathBuf>,
    #[arg(long)]
    pub reference: Option<PathBuf>,
    /// Without trajectories: sensor data driving the forecast experiment.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub predictor: Option<PathBuf>,
    /// Forecast start minutes, comma separated.
    #[arg(long)]
    pub start_minutes: Option<String>,
    #[arg(long)]
    pub horizon: Option<usize>,
    #[command(flatten)]
    pub numerics: DiagramArgs,
    /// Output error-curve CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn read_trajectory(path: &Path) -> Result<Vec<(String, RoadState, Vec<f64>)>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header.get(..4) != Some(&["t".to_string(), "x".into(), "rho_light".into(), "rho_heavy".into()][..]) {
        return Err(invalid(format!("{}: not a trajectory file", path.display())));
    }
    let mut frames: Vec<(String, RoadState, Vec<f64>)> = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| invalid(format!("{}: {e}", path.display())))?;
        let num = |i: usize| -> Result<f64> {
            row[i].trim().parse().map_err(|_| invalid(format!("{}: bad number {:?}", path.display(), &row[i])))
        };
        let t = row[0].trim().to_string();
        if frames.last().is_none_or(|f| f.0 != t) {
            frames.push((t.clone(), RoadState { time: num(0)?, densities: vec![Vec::new(), Vec::new()] }, Vec::new()));
        }
        let frame = frames.last_mut().expect("frame pushed");
        frame.1.densities[0].push(num(2)?);
        frame.1.densities[1].push(num(3)?);
        frame.2.push(num(1)?);
    }
    if frames.is_empty() {
        return Err(invalid(format!("{}: no rows", path.display())));
    }
    Ok(frames)
}

pub fn eval(args: EvalArgs, cfg: &Config) -> Result<()> {
    let out: PathBuf = cfg.require(args.out, "out")?;
    match (cfg.pick::<PathBuf>(args.forecast, "forecast")?, cfg.pick::<PathBuf>(args.reference, "reference")?) {
        (Some(f), Some(r)) => eval_trajectories(&f, &r, &out),
        (None, None) => eval_experiment(args.data, args.predictor, args.start_minutes, args.horizon, args.numerics, cfg, &out),
        _ => Err(invalid("--forecast and --reference go together")),
    }
}

fn eval_trajectories(forecast: &Path, reference: &Path, out: &Path) -> Result<()> {
    let (f, r) = (read_trajectory(forecast)?, read_trajectory(reference)?);
    if f.len() != r.len() {
        return Err(invalid(format!("{} snapshots against {}", f.len(), r.len())));
    }
    ensure_parent(out)?;
    let mut w = csv::Writer::from_path(out)?;
    w.write_record(["t", "error_light", "error_heavy"])?;
    for ((tf, sf, xf), (tr, sr, xr)) in f.iter().zip(&r) {
        if tf != tr || xf != xr {
            return Err(invalid(format!("snapshot t={tf} does not match reference t={tr} on the same cells")));
        }
        let dx = if xf.len() > 1 { xf[1] - xf[0] } else { 1.0 };
        let e = class_errors(sf, sr, dx)?;
        w.write_record([tf.clone(), e[0].to_string(), e[1].to_string()])?;
    }
    w.flush()?;
    println!("{} snapshots scored -> {}", f.len(), out.display());
    Ok(())
}

fn eval_experiment(
    data: Option<PathBuf>,
    predictor: Option<PathBuf>,
    starts: Option<String>,
    horizon: Option<usize>,
    numerics_args: DiagramArgs,
    cfg: &Config,
    out: &Path,
) -> Result<()> {
    let base = ForecastExperiment::default();
    let dt = numerics_args.dt;
    let numerics = numerics(numerics_args, cfg)?;
    let setup = ForecastExperiment {
        diagram: numerics.diagram,
        dx: numerics.dx,
        dt: cfg.pick_or(dt, "dt", base.dt)?,
        warm_up: numerics.warm_up,
        horizon: cfg.pick_or(horizon, "horizon", base.horizon)?,
        start_minutes: match cfg.pick::<String>(starts, "start-minutes")? {
            Some(s) => parse_list(&s, "--start-minutes")?,
            None => base.start_minutes.clone(),
        },
        ..base
    };
    if setup.horizon == 0 {
        return Err(invalid("--horizon must be positive"));
    }
    let days = group_sequences(&read_records_at(&cfg.require::<PathBuf>(data, "data")?)?)?;
    let net = match cfg.pick::<PathBuf>(predictor, "predictor")? {
        Some(path) => Some(load_model(&path, HeadMode::Predict)?),
        None => None,
    };
    let curves = experiment_forecast_error(&setup, &days, net.as_ref())?;
    ensure_parent(out)?;
    let mut w = csv::Writer::from_path(out)?;
    w.write_record([
        "minute",
        "predicted_light",
        "predicted_heavy",
        "last_value_light",
        "last_value_heavy",
        "null_light",
        "null_heavy",
    ])?;
    for (i, minute) in curves.minutes.iter().enumerate() {
        let p = curves.predicted.as_ref().map(|c| [c[i][0].to_string(), c[i][1].to_string()]).unwrap_or_default();
        let (l, n) = (curves.last_value[i], curves.null[i]);
        w.write_record([
            minute.to_string(),
            p[0].clone(),
            p[1].clone(),
            l[0].to_string(),
            l[1].to_string(),
            n[0].to_string(),
            n[1].to_string(),
        ])?;
    }
    w.flush()?;
    println!("error curves over {} runs -> {}", curves.runs, out.display());
    Ok(())
}

#[derive(Debug, Args)]
pub struct DemoArgs {
    /// Cells per unit length.
    #[arg(long)]
    pub resolution: Option<usize>,
    /// Directory for the signature report and the three trajectories.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn demo_academic(args: DemoArgs, cfg: &Config) -> Result<()> {
    let resolution = cfg.pick_or(args.resolution, "resolution", 100)?;
    let report = experiment_academic(resolution)?;
    let json = serde_json::to_string_pretty(&report.signatures)?;
    if let Some(dir) = cfg.pick::<PathBuf>(args.out, "out")? {
        std::fs::create_dir_all(&dir)?;
        std::fs::write(dir.join("signatures.json"), format!("{json}\n"))?;
        let fd = SingleClassFD::normalized();
        write_states(&dir.join("reference.csv"), &fd, &report.grid, &report.reference, 1.0)?;
        write_states(&dir.join("density_based.csv"), &fd, &report.grid, &report.density_based, 1.0)?;
        write_states(&dir.join("flux_based.csv"), &fd, &report.grid, &report.flux_based, 1.0)?;
    }
    println!("{json}");
    if report.signatures.all_hold() {
        Ok(())
    } else {
        Err(runtime("academic test signatures do not all hold"))
    }
}
