//! `synth` and `label`.

use std::path::PathBuf;

use clap::{Args, ValueEnum};
use flowcast::labeling::{build_labels, positive_rate, write_labeled_csv};
use flowcast::sensor_data::synthetic::{
    calendar_day, generate_corpus, generate_synthetic_day, Archetype, EventSampler, SyntheticDay, SyntheticScenario,
};
use flowcast::sensor_data::{aggregate_lane, flag3t_series, has_flag3t, sensor_days, write_records, SensorRecord};
use flowcast::signal::SmoothingKernel;

use crate::config::Config;
use crate::error::{invalid, Result};
use crate::files::{label_file_name, mask_path, read_mask, read_records_at, write_mask};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ArchetypeArg {
    VelocityLed,
    Simultaneous,
    FluxLed,
    PartialFlux,
}

impl std::str::FromStr for ArchetypeArg {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        <Self as ValueEnum>::from_str(s, true)
    }
}

impl From<ArchetypeArg> for Archetype {
    fn from(a: ArchetypeArg) -> Self {
        match a {
            ArchetypeArg::VelocityLed => Archetype::VelocityLed,
            ArchetypeArg::Simultaneous => Archetype::Simultaneous,
            ArchetypeArg::FluxLed => Archetype::FluxLed,
            ArchetypeArg::PartialFlux => Archetype::PartialFlux,
        }
    }
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output directory for `<day>.csv` and `<day>.mask.csv`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub days: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Exact number of random events per day.
    #[arg(long)]
    pub events: Option<usize>,
    /// Restrict random events to one shape.
    #[arg(long)]
    pub archetype: Option<ArchetypeArg>,
    /// JSON scenario used as the template; its events, if any, repeat daily.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
}

pub fn synth(args: SynthArgs, cfg: &Config) -> Result<()> {
    let out: PathBuf = cfg.require(args.out, "out")?;
    let days = cfg.pick_or(args.days, "days", 1)?;
    let seed = cfg.pick_or(args.seed, "seed", 0)?;
    let events = cfg.pick(args.events, "events")?;
    let archetype = cfg.pick(args.archetype, "archetype")?;
    if days == 0 {
        return Err(invalid("--days must be positive"));
    }
    let template = match cfg.pick(args.scenario, "scenario")? {
        Some(path) => {
            let text = std::fs::read_to_string(&path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
            serde_json::from_str::<SyntheticScenario>(&text)
                .map_err(|e| invalid(format!("{}: {e}", path.display())))?
        }
        None => SyntheticScenario::new("template", seed),
    };
    template.validate()?;

    let generated: Vec<SyntheticDay> = if template.events.is_empty() {
        let mut sampler = EventSampler::default();
        if let Some(k) = events {
            sampler.min_events = k;
            sampler.max_events = k;
        }
        if let Some(a) = archetype {
            sampler.archetypes = vec![a.into()];
        }
        generate_corpus(&template, &sampler, days, seed)?
    } else {
        if events.is_some() || archetype.is_some() {
            return Err(invalid("--events and --archetype only apply when the scenario lists no events"));
        }
        (0..days)
            .map(|d| {
                let scenario = SyntheticScenario { day: calendar_day(d), seed: seed.wrapping_add(d as u64), ..template.clone() };
                let (records, mask) = generate_synthetic_day(&scenario)?;
                Ok(SyntheticDay { scenario, records, mask })
            })
            .collect::<Result<_>>()?
    };

    std::fs::create_dir_all(&out)?;
    for day in &generated {
        let path = out.join(format!("{}.csv", day.scenario.day));
        write_records(std::fs::File::create(&path)?, &day.records)?;
        write_mask(&mask_path(&out, &day.scenario.day), &day.mask)?;
        let minutes = day.mask.iter().filter(|m| **m).count();
        let n = day.scenario.events.len();
        println!("{}: {n} event{}, {minutes} congested minutes", day.scenario.day, if n == 1 { "" } else { "s" });
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct LabelArgs {
    /// Sensor CSV file or directory; `<day>.mask.csv` files next to it
    /// replace the third-party flag.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Output directory for `<day>__<sensor>.csv`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub kernel_half_width: Option<usize>,
    #[arg(long)]
    pub kernel_passes: Option<usize>,
}

fn mask_dir(data: &std::path::Path) -> PathBuf {
    if data.is_dir() {
        data.to_path_buf()
    } else {
        data.parent().map(|p| p.to_path_buf()).unwrap_or_default()
    }
}

pub fn label(args: LabelArgs, cfg: &Config) -> Result<()> {
    let data: PathBuf = cfg.require(args.data, "data")?;
    let out: PathBuf = cfg.require(args.out, "out")?;
    let kernel = SmoothingKernel::with_passes(
        cfg.pick_or(args.kernel_half_width, "kernel-half-width", 10)?,
        cfg.pick_or(args.kernel_passes, "kernel-passes", 1)?,
    )?;
    if out.exists() && data.exists() && out.canonicalize()? == mask_dir(&data).canonicalize()? {
        return Err(invalid("--out must differ from the data directory"));
    }
    let records = read_records_at(&data)?;
    std::fs::create_dir_all(&out)?;
    let masks = mask_dir(&data);
    let mut targets = Vec::new();
    for (day, sensor) in sensor_days(&records) {
        let own: Vec<SensorRecord> =
            records.iter().filter(|r| r.day == day && r.sensor_id == sensor).cloned().collect();
        let sequence = aggregate_lane(&own, &sensor, &day)?;
        let mask = mask_path(&masks, &day);
        let flag3t = if mask.is_file() {
            read_mask(&mask)?
        } else if has_flag3t(&own) {
            flag3t_series(&own)
        } else {
            vec![false; sequence.len()]
        };
        let labeled = build_labels(&sequence, &flag3t, &kernel)?;
        write_labeled_csv(std::fs::File::create(out.join(label_file_name(&day, &sensor)))?, &labeled)?;
        targets.push(labeled.target);
    }
    let positives: usize = targets.iter().map(|t| t.iter().filter(|y| **y).count()).sum();
    let total: usize = targets.iter().map(Vec::len).sum();
    match positive_rate(targets.iter().map(Vec::as_slice)) {
        Ok(p) => println!("positive rate p_r = {p:.6} ({positives} of {total} minutes, {} sensor-days)", targets.len()),
        Err(_) => println!("positive rate undefined ({positives} of {total} minutes, {} sensor-days)", targets.len()),
    }
    Ok(())
}
