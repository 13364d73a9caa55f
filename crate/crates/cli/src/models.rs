//! Training and inference commands.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use flowcast::labeling::{build_prealarm_targets, build_volume_targets, select_training_days, LabeledDay};
use flowcast::neural::train::positive_rate_of;
use flowcast::neural::{
    classify_with_confidence, train, Example, HeadMode, LossKind, Network, NetworkConfig, Targets, TrainingSchedule,
    TrainingTrace,
};
use flowcast::sensor_data::{aggregate_group, aggregate_lane, group_days, sensor_days, DaySequence, SensorRecord};

use crate::config::{parse_list, Config};
use crate::error::{invalid, Result};
use crate::files::{ensure_parent, read_labeled_dir, read_records_at, sibling};

#[derive(Debug, Args)]
pub struct TrainingArgs {
    /// Output model file (JSON).
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Per-epoch loss/accuracy trace; defaults to `<model>.trace.csv`.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    #[arg(long)]
    pub n_hid: Option<usize>,
    #[arg(long)]
    pub eras: Option<usize>,
    #[arg(long)]
    pub epochs_per_era: Option<usize>,
    /// Total epochs in a single era; overrides the era schedule.
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Learning-rate factor per era.
    #[arg(long)]
    pub decay: Option<f64>,
    /// Train one model per hidden size, e.g. `n_hid=15,30,60`.
    #[arg(long)]
    pub sweep: Option<String>,
}

struct Training {
    model: PathBuf,
    trace: PathBuf,
    sizes: Vec<usize>,
    sweep: bool,
    seed: u64,
    schedule: TrainingSchedule,
}

fn training(args: TrainingArgs, cfg: &Config, base: TrainingSchedule, default_hid: usize) -> Result<Training> {
    let model: PathBuf = cfg.require(args.model, "model")?;
    let trace = cfg.pick(args.trace, "trace")?.unwrap_or_else(|| sibling(&model, ".trace", "csv"));
    let seed = cfg.pick_or(args.seed, "seed", 0)?;
    let mut schedule = TrainingSchedule {
        eras: cfg.pick_or(args.eras, "eras", base.eras)?,
        epochs_per_era: cfg.pick_or(args.epochs_per_era, "epochs-per-era", base.epochs_per_era)?,
        batch_size: cfg.pick_or(args.batch_size, "batch-size", base.batch_size)?,
        base_learning_rate: cfg.pick_or(args.lr, "lr", base.base_learning_rate)?,
        decay: cfg.pick_or(args.decay, "decay", base.decay)?,
        shuffle_seed: seed,
        ..base
    };
    if let Some(epochs) = cfg.pick(args.epochs, "epochs")? {
        schedule.eras = 1;
        schedule.epochs_per_era = epochs;
    }
    if !(schedule.base_learning_rate > 0.0 && schedule.base_learning_rate <= 1.0) {
        return Err(invalid(format!("--lr {} outside (0, 1]", schedule.base_learning_rate)));
    }
    schedule.validate()?;
    let (sizes, sweep) = match cfg.pick(args.sweep, "sweep")? {
        Some(spec) => {
            let list = spec
                .strip_prefix("n_hid=")
                .or_else(|| spec.strip_prefix("n-hid="))
                .ok_or_else(|| invalid(format!("--sweep expects n_hid=a,b,c, found {spec:?}")))?;
            (parse_list(list, "--sweep")?, true)
        }
        None => (vec![cfg.pick_or(args.n_hid, "n-hid", default_hid)?], false),
    };
    if sizes.contains(&0) {
        return Err(invalid("hidden size must be positive"));
    }
    Ok(Training { model, trace, sizes, sweep, seed, schedule })
}

fn write_trace(path: &Path, trace: &TrainingTrace) -> Result<()> {
    ensure_parent(path)?;
    trace.write_csv(std::fs::File::create(path)?)?;
    Ok(())
}

/// Train one network per requested size, save models and traces, and print
/// a summary line for each.
fn run_training(
    plan: &Training,
    train_set: &[Example],
    validation: &[Example],
    mode: HeadMode,
    loss: LossKind,
    finish: impl Fn(&mut Network),
) -> Result<()> {
    let mut summary = Vec::new();
    for &n_hid in &plan.sizes {
        let config = match mode {
            HeadMode::Classify => NetworkConfig::classifier(n_hid, plan.seed),
            HeadMode::Predict => NetworkConfig::predictor(n_hid, plan.seed),
        };
        let (mut net, trace) = train(train_set, validation, &config, &plan.schedule, loss)?;
        finish(&mut net);
        let (model, trace_path) = if plan.sweep {
            let tag = format!(".nhid{n_hid}");
            (sibling(&plan.model, &tag, "json"), sibling(&plan.trace, &tag, "csv"))
        } else {
            (plan.model.clone(), plan.trace.clone())
        };
        ensure_parent(&model)?;
        net.save(&model)?;
        write_trace(&trace_path, &trace)?;
        let last = trace.epochs.last();
        let loss_text = last.map(|e| format!("{:.6}", e.train_loss)).unwrap_or_else(|| "untrained".into());
        println!("n_hid {n_hid}: {} epochs, final loss {loss_text} -> {}", trace.epochs.len(), model.display());
        summary.push((n_hid, last.map(|e| e.train_loss), last.and_then(|e| e.validation_loss)));
    }
    if plan.sweep {
        let path = sibling(&plan.model, ".sweep", "csv");
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(["n_hid", "final_train_loss", "final_validation_loss"])?;
        let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
        for (n, t, v) in summary {
            w.write_record([n.to_string(), opt(t), opt(v)])?;
        }
        w.flush()?;
    }
    Ok(())
}

fn class_examples(days: &[LabeledDay], targets: impl Fn(&LabeledDay) -> Result<Vec<bool>>) -> Result<Vec<Example>> {
    days.iter()
        .map(|d| Ok(Example { inputs: d.sequence.rows(), targets: Targets::Classes(targets(d)?) }))
        .collect()
}

fn training_days(labels: &Path, all_days: bool) -> Result<Vec<LabeledDay>> {
    let days = read_labeled_dir(labels)?;
    if all_days {
        return Ok(days);
    }
    let selected = select_training_days(days);
    if selected.is_empty() {
        return Err(invalid("no labeled day has enough flagged minutes; pass --all-days to use every day"));
    }
    Ok(selected)
}

fn weighted_loss(train_set: &[Example]) -> Result<LossKind> {
    Ok(LossKind::WeightedCrossEntropy { positive_rate: positive_rate_of(train_set)? })
}

#[derive(Debug, Args)]
pub struct TrainFcArgs {
    /// Directory of labeled days written by `label`.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Labeled days scored after every epoch.
    #[arg(long)]
    pub validation: Option<PathBuf>,
    /// Keep days with too few flagged minutes.
    #[arg(long)]
    pub all_days: bool,
    #[command(flatten)]
    pub training: TrainingArgs,
}

pub fn train_fc(args: TrainFcArgs, cfg: &Config) -> Result<()> {
    let labels: PathBuf = cfg.require(args.labels, "labels")?;
    let plan = training(args.training, cfg, TrainingSchedule::classifier(), 30)?;
    let days = training_days(&labels, cfg.switch(args.all_days, "all-days")?)?;
    let train_set = class_examples(&days, |d| Ok(d.target.clone()))?;
    let validation = match cfg.pick(args.validation, "validation")? {
        Some(dir) => class_examples(&read_labeled_dir(&dir)?, |d| Ok(d.target.clone()))?,
        None => Vec::new(),
    };
    let loss = weighted_loss(&train_set)?;
    run_training(&plan, &train_set, &validation, HeadMode::Classify, loss, |net| {
        net.metadata.role = "congestion".into();
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TargetSourceArg {
    Classifier,
    GroundTruth,
}

impl std::str::FromStr for TargetSourceArg {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        <Self as ValueEnum>::from_str(s, true)
    }
}

#[derive(Debug, Args)]
pub struct TrainFpArgs {
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long)]
    pub validation: Option<PathBuf>,
    #[arg(long)]
    pub all_days: bool,
    /// Minutes of anticipation.
    #[arg(long)]
    pub shift: Option<usize>,
    /// Shortest positive run kept in the source series.
    #[arg(long)]
    pub min_run: Option<usize>,
    #[arg(long)]
    pub target_source: Option<TargetSourceArg>,
    /// Congestion classifier providing the source series.
    #[arg(long)]
    pub detector: Option<PathBuf>,
    #[command(flatten)]
    pub training: TrainingArgs,
}

pub fn train_fp(args: TrainFpArgs, cfg: &Config) -> Result<()> {
    let labels: PathBuf = cfg.require(args.labels, "labels")?;
    let shift = cfg.pick_or(args.shift, "shift", 4)?;
    let min_run = cfg.pick_or(args.min_run, "min-run", 3)?;
    let source = cfg.pick_or(args.target_source, "target-source", TargetSourceArg::Classifier)?;
    let detector = match source {
        TargetSourceArg::Classifier => {
            let path: PathBuf = cfg
                .pick(args.detector, "detector")?
                .ok_or_else(|| invalid("--detector is required with --target-source classifier"))?;
            Some(load_model(&path, HeadMode::Classify)?)
        }
        TargetSourceArg::GroundTruth => None,
    };
    let plan = training(args.training, cfg, TrainingSchedule::classifier(), 30)?;
    let targets = |d: &LabeledDay| -> Result<Vec<bool>> {
        let base = match &detector {
            Some(net) => classify_with_confidence(net, &d.sequence.rows())?.into_iter().map(|(b, _)| b).collect(),
            None => d.target.clone(),
        };
        Ok(build_prealarm_targets(&base, shift, min_run))
    };
    let days = training_days(&labels, cfg.switch(args.all_days, "all-days")?)?;
    let train_set = class_examples(&days, targets)?;
    let validation = match cfg.pick(args.validation, "validation")? {
        Some(dir) => class_examples(&read_labeled_dir(&dir)?, targets)?,
        None => Vec::new(),
    };
    let loss = weighted_loss(&train_set)?;
    run_training(&plan, &train_set, &validation, HeadMode::Classify, loss, |net| {
        net.metadata.role = "prealarm".into();
        net.metadata.shift = Some(shift);
    })
}

#[derive(Debug, Args)]
pub struct TrainPArgs {
    /// Sensor CSV file or directory.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub validation: Option<PathBuf>,
    /// Minutes averaged by the volume target.
    #[arg(long)]
    pub horizon: Option<usize>,
    #[command(flatten)]
    pub training: TrainingArgs,
}

/// Per-class group sequences for every `(day, group)` in the records.
pub fn group_sequences(records: &[SensorRecord]) -> Result<Vec<DaySequence>> {
    group_days(records)
        .into_iter()
        .map(|(day, group)| {
            let own: Vec<SensorRecord> = records.iter().filter(|r| r.day == day && r.group_id == group).cloned().collect();
            Ok(aggregate_group(&own, &group, &day)?)
        })
        .collect()
}

fn volume_examples(data: &Path, horizon: usize) -> Result<Vec<Example>> {
    group_sequences(&read_records_at(data)?)?
        .iter()
        .map(|g| {
            let v = build_volume_targets(g, horizon)?;
            Ok(Example { inputs: g.rows(), targets: Targets::Values(v.values.iter().map(|x| x.to_vec()).collect()) })
        })
        .collect()
}

pub fn train_p(args: TrainPArgs, cfg: &Config) -> Result<()> {
    let data: PathBuf = cfg.require(args.data, "data")?;
    let horizon = cfg.pick_or(args.horizon, "horizon", 30)?;
    if horizon == 0 {
        return Err(invalid("--horizon must be positive"));
    }
    let plan = training(args.training, cfg, TrainingSchedule::predictor(), 27)?;
    let train_set = volume_examples(&data, horizon)?;
    let validation = match cfg.pick(args.validation, "validation")? {
        Some(path) => volume_examples(&path, horizon)?,
        None => Vec::new(),
    };
    run_training(&plan, &train_set, &validation, HeadMode::Predict, LossKind::MeanSquaredError, |net| {
        net.metadata.role = "volume".into();
        net.metadata.horizon = Some(horizon);
    })
}

pub fn load_model(path: &Path, mode: HeadMode) -> Result<Network> {
    let net = Network::load(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    if net.mode() != mode {
        return Err(invalid(format!("{} is a {:?} model, expected {mode:?}", path.display(), net.mode())));
    }
    Ok(net)
}

fn check_inputs(net: &Network, seq: &DaySequence) -> Result<()> {
    if net.n_in() != seq.features.len() {
        return Err(invalid(format!(
            "model expects {} inputs, {} of {} has {:?}",
            net.n_in(),
            seq.key,
            seq.day,
            seq.features
        )));
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Sensor CSV file or directory.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Output CSV `day,sensor_id,minute,label,confidence`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn detect(args: DetectArgs, cfg: &Config) -> Result<()> {
    let net = load_model(&cfg.require::<PathBuf>(args.model, "model")?, HeadMode::Classify)?;
    let records = read_records_at(&cfg.require::<PathBuf>(args.data, "data")?)?;
    let out: PathBuf = cfg.require(args.out, "out")?;
    ensure_parent(&out)?;
    let mut w = csv::Writer::from_path(&out)?;
    w.write_record(["day", "sensor_id", "minute", "label", "confidence"])?;
    let mut positives = 0;
    for (day, sensor) in sensor_days(&records) {
        let own: Vec<SensorRecord> = records.iter().filter(|r| r.day == day && r.sensor_id == sensor).cloned().collect();
        let seq = aggregate_lane(&own, &sensor, &day)?;
        check_inputs(&net, &seq)?;
        for (t, (label, confidence)) in classify_with_confidence(&net, &seq.rows())?.into_iter().enumerate() {
            positives += usize::from(label);
            w.write_record([day.clone(), sensor.clone(), t.to_string(), u8::from(label).to_string(), confidence.to_string()])?;
        }
    }
    w.flush()?;
    println!("{positives} congested minutes -> {}", out.display());
    Ok(())
}

#[derive(Debug, Args)]
pub struct PredictVolumeArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Output CSV `day,group_id,minute,light,heavy,target_light,target_heavy`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn predict_volume(args: PredictVolumeArgs, cfg: &Config) -> Result<()> {
    let net = load_model(&cfg.require::<PathBuf>(args.model, "model")?, HeadMode::Predict)?;
    let horizon = net.metadata.horizon.ok_or_else(|| invalid("model records no horizon"))?;
    let records = read_records_at(&cfg.require::<PathBuf>(args.data, "data")?)?;
    let out: PathBuf = cfg.require(args.out, "out")?;
    ensure_parent(&out)?;
    let mut w = csv::Writer::from_path(&out)?;
    w.write_record(["day", "group_id", "minute", "light", "heavy", "target_light", "target_heavy"])?;
    for seq in group_sequences(&records)? {
        check_inputs(&net, &seq)?;
        let group = seq.key.trim_end_matches("/group").to_string();
        let truth = build_volume_targets(&seq, horizon)?.values;
        for (t, y) in net.forward(&seq.rows())?.into_iter().enumerate() {
            let target = truth.get(t).map(|v| [v[0].to_string(), v[1].to_string()]).unwrap_or_default();
            w.write_record([
                seq.day.clone(),
                group.clone(),
                t.to_string(),
                y[0].to_string(),
                y[1].to_string(),
                target[0].clone(),
                target[1].clone(),
            ])?;
        }
    }
    w.flush()?;
    println!("volume forecasts over {horizon} minutes -> {}", out.display());
    Ok(())
}
