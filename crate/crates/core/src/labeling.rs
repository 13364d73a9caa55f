//! Supervised targets: congestion labels, pre-alarm shifts and future volumes.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sensor_data::{DaySequence, MINUTES_PER_DAY};
use crate::signal::{smooth, smooth_with_gaps, SignalError, SmoothingKernel};

/// Daytime window in which the heuristics may fire, inclusive.
pub const DAYTIME: std::ops::RangeInclusive<usize> = 300..=1200;

/// Minimum positive flag minutes for a day to enter a training set.
pub const MIN_POSITIVE_MINUTES: usize = 15;

pub const LABEL_CSV_HEADER: [&str; 7] = ["minute", "flux", "velocity", "b3t", "bf", "bv", "y"];

#[derive(Debug, Error)]
pub enum LabelingError {
    #[error("positive rate undefined: {positives} positives out of {total} minutes")]
    DegeneratePositiveRate { positives: usize, total: usize },
    #[error("expected {expected} values, found {found}")]
    Length { expected: usize, found: usize },
    #[error("missing feature {0:?}")]
    MissingFeature(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn is_daytime(t: usize) -> bool {
    DAYTIME.contains(&t)
}

/// Flux-drop heuristic: flux has nearly vanished after a busy hour.
pub fn heuristic_flux(flux: &[f64], smoothed: &[f64], t: usize) -> bool {
    if t < 60 || t >= flux.len() || !is_daytime(t) {
        return false;
    }
    let hour_mean = flux[t - 60..t].iter().sum::<f64>() / 60.0;
    flux[t - 1] < 2.0 && flux[t] < 2.0 && smoothed[t] < 2.0 && hour_mean - smoothed[t] > 2.0
}

/// Velocity-drop heuristic: a falling, slow speed well below the recent
/// smoothed speed.
pub fn heuristic_speed(velocity: &[Option<f64>], smoothed: &[Option<f64>], t: usize) -> bool {
    if t < 15 || t >= velocity.len() || !is_daytime(t) {
        return false;
    }
    let (Some(v), Some(prev)) = (velocity[t], velocity[t - 1]) else {
        return false;
    };
    if !(v < prev && v > 0.0 && v < 65.0) {
        return false;
    }
    smoothed[t - 15..t].iter().flatten().any(|&s| s - v >= 40.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledDay {
    /// Features `[flux, velocity]`.
    pub sequence: DaySequence,
    pub target: Vec<bool>,
    pub b3t: Vec<bool>,
    pub bf: Vec<bool>,
    pub bv: Vec<bool>,
}

impl LabeledDay {
    pub fn positives(&self) -> usize {
        self.target.iter().filter(|y| **y).count()
    }

    pub fn flag_positives(&self) -> usize {
        self.b3t.iter().filter(|y| **y).count()
    }
}

fn feature_index(day: &DaySequence, name: &str) -> Result<usize, LabelingError> {
    day.features
        .iter()
        .position(|f| f == name)
        .ok_or_else(|| LabelingError::MissingFeature(name.to_string()))
}

fn check_len(found: usize) -> Result<(), LabelingError> {
    if found == MINUTES_PER_DAY {
        Ok(())
    } else {
        Err(LabelingError::Length { expected: MINUTES_PER_DAY, found })
    }
}

/// Labels `y = b3t | bf | bv` for a `[flux, velocity]` day.
pub fn build_labels(day: &DaySequence, flag3t: &[bool], kernel: &SmoothingKernel) -> Result<LabeledDay, LabelingError> {
    check_len(day.len())?;
    check_len(flag3t.len())?;
    let flux = day.dense(feature_index(day, "flux")?, 0.0);
    let velocity = &day.columns[feature_index(day, "velocity")?];
    let flux_smooth = smooth(&flux, kernel)?;
    let velocity_smooth = smooth_with_gaps(velocity, kernel)?;
    let bf: Vec<bool> = (0..MINUTES_PER_DAY).map(|t| heuristic_flux(&flux, &flux_smooth, t)).collect();
    let bv: Vec<bool> = (0..MINUTES_PER_DAY).map(|t| heuristic_speed(velocity, &velocity_smooth, t)).collect();
    let target = (0..MINUTES_PER_DAY).map(|t| flag3t[t] || bf[t] || bv[t]).collect();
    Ok(LabeledDay { sequence: day.clone(), target, b3t: flag3t.to_vec(), bf, bv })
}

/// Days with at least [`MIN_POSITIVE_MINUTES`] flagged minutes.
pub fn select_training_days(days: Vec<LabeledDay>) -> Vec<LabeledDay> {
    days.into_iter().filter(|d| d.flag_positives() >= MIN_POSITIVE_MINUTES).collect()
}

/// Fraction of positive minutes over a set of target vectors.
pub fn positive_rate<'a, I: IntoIterator<Item = &'a [bool]>>(targets: I) -> Result<f64, LabelingError> {
    let (mut positives, mut total) = (0, 0);
    for t in targets {
        positives += t.iter().filter(|y| **y).count();
        total += t.len();
    }
    if positives == 0 || positives == total {
        return Err(LabelingError::DegeneratePositiveRate { positives, total });
    }
    Ok(positives as f64 / total as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TargetSource {
    GroundTruth,
    ClassifierOutput,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreAlarmConfig {
    pub shift: usize,
    pub min_run: usize,
    pub target_source: TargetSource,
}

impl Default for PreAlarmConfig {
    fn default() -> Self {
        Self { shift: 4, min_run: 3, target_source: TargetSource::ClassifierOutput }
    }
}

/// Clear positive runs shorter than `min_run`.
pub fn remove_short_runs(source: &[bool], min_run: usize) -> Vec<bool> {
    let mut out = source.to_vec();
    let mut t = 0;
    while t < out.len() {
        if !out[t] {
            t += 1;
            continue;
        }
        let start = t;
        while t < out.len() && out[t] {
            t += 1;
        }
        if t - start < min_run {
            out[start..t].iter_mut().for_each(|x| *x = false);
        }
    }
    out
}

/// `target[t] = filtered[t + shift]`, zero-padded at the end.
pub fn build_prealarm_targets(source: &[bool], shift: usize, min_run: usize) -> Vec<bool> {
    let filtered = remove_short_runs(source, min_run);
    (0..filtered.len()).map(|t| filtered.get(t + shift).copied().unwrap_or(false)).collect()
}

/// Mean future per-class flux over the next `horizon` minutes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeTarget {
    pub horizon: usize,
    /// `values[t] = [light, heavy]` averaged over minutes `t+1 ..= t+horizon`.
    pub values: Vec<[f64; 2]>,
}

pub fn build_volume_targets(day: &DaySequence, horizon: usize) -> Result<VolumeTarget, LabelingError> {
    check_len(day.len())?;
    if horizon == 0 || horizon >= MINUTES_PER_DAY {
        return Err(LabelingError::InvalidConfig(format!("horizon {horizon}")));
    }
    let light = day.dense(feature_index(day, "flux_light")?, 0.0);
    let heavy = day.dense(feature_index(day, "flux_heavy")?, 0.0);
    let prefix = |x: &[f64]| {
        let mut p = vec![0.0; x.len() + 1];
        for (i, v) in x.iter().enumerate() {
            p[i + 1] = p[i] + v;
        }
        p
    };
    let (pl, ph) = (prefix(&light), prefix(&heavy));
    let h = horizon as f64;
    let values = (0..MINUTES_PER_DAY - horizon)
        .map(|t| [(pl[t + 1 + horizon] - pl[t + 1]) / h, (ph[t + 1 + horizon] - ph[t + 1]) / h])
        .collect();
    Ok(VolumeTarget { horizon, values })
}

pub fn write_labeled_csv<W: Write>(writer: W, day: &LabeledDay) -> Result<(), LabelingError> {
    let flux = feature_index(&day.sequence, "flux")?;
    let velocity = feature_index(&day.sequence, "velocity")?;
    let bit = |b: bool| if b { "1" } else { "0" };
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(LABEL_CSV_HEADER)?;
    for t in 0..day.sequence.len() {
        let f = day.sequence.columns[flux][t].map(|v| v.to_string()).unwrap_or_default();
        let v = day.sequence.columns[velocity][t].map(|v| v.to_string()).unwrap_or_default();
        w.write_record([&t.to_string(), &f, &v, bit(day.b3t[t]), bit(day.bf[t]), bit(day.bv[t]), bit(day.target[t])])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_labeled_csv<R: Read>(reader: R, day: &str, key: &str) -> Result<LabeledDay, LabelingError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(|s| s.trim().to_string()).collect();
    if header != LABEL_CSV_HEADER {
        return Err(LabelingError::Parse { line: 1, message: format!("unexpected header {header:?}") });
    }
    let (mut flux, mut velocity) = (Vec::new(), Vec::new());
    let (mut b3t, mut bf, mut bv, mut y) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let err = |message: String| LabelingError::Parse { line, message };
        let opt = |s: &str| -> Result<Option<f64>, LabelingError> {
            match s.trim() {
                "" => Ok(None),
                s => s.parse().map(Some).map_err(|_| err(format!("bad number {s:?}"))),
            }
        };
        let bit = |s: &str| match s.trim() {
            "0" => Ok(false),
            "1" => Ok(true),
            other => Err(err(format!("bad flag {other:?}"))),
        };
        let minute: usize = row[0].trim().parse().map_err(|_| err("bad minute".into()))?;
        if minute != flux.len() {
            return Err(err(format!("minute {minute} out of order")));
        }
        flux.push(Some(opt(&row[1])?.unwrap_or(0.0)));
        velocity.push(opt(&row[2])?);
        b3t.push(bit(&row[3])?);
        bf.push(bit(&row[4])?);
        bv.push(bit(&row[5])?);
        y.push(bit(&row[6])?);
    }
    check_len(flux.len())?;
    let sequence = DaySequence::new(
        day.to_string(),
        key.to_string(),
        vec!["flux".into(), "velocity".into()],
        vec![flux, velocity],
    );
    Ok(LabeledDay { sequence, target: y, b3t, bf, bv })
}
