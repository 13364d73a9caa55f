//! Per-minute loop-detector records, their canonical CSV form, and the
//! aggregation into 1440-step day sequences.

pub mod synthetic;

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use crate::fundamental_diagram::VehicleKind;

pub const MINUTES_PER_DAY: usize = 1440;

/// Default mean daily volume separating high- from low-flux sensors.
pub const HF_THRESHOLD: f64 = 6000.0;

pub const CSV_HEADER: [&str; 9] = ["day", "minute", "sensor_id", "group_id", "lane", "class", "count", "speed", "flag3t"];

#[derive(Debug, Error)]
pub enum SensorDataError {
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("header mismatch: expected {expected:?}, found {found:?}")]
    Header { expected: String, found: String },
    #[error("negative count at line {line}")]
    NegativeCount { line: u64 },
    #[error("speed given for a zero count at line {line}")]
    SpeedWithoutVehicles { line: u64 },
    #[error("records do not all belong to {0}")]
    MixedRecords(String),
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("events overlap: [{0}, {1}) and [{2}, {3})")]
    OverlappingEvents(usize, usize, usize, usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorRecord {
    pub day: String,
    /// Minute of the day, `0..1440`.
    pub minute: u16,
    pub sensor_id: String,
    pub group_id: String,
    pub lane: u8,
    pub class: VehicleKind,
    pub count: u32,
    /// km/h; absent whenever `count == 0`.
    pub speed: Option<f64>,
    pub flag3t: Option<bool>,
}

fn class_code(kind: VehicleKind) -> &'static str {
    match kind {
        VehicleKind::Light => "L",
        VehicleKind::Heavy => "H",
    }
}

fn parse_record(row: &csv::StringRecord, line: u64) -> Result<SensorRecord, SensorDataError> {
    let err = |message: String| SensorDataError::Parse { line, message };
    if row.len() != CSV_HEADER.len() {
        return Err(err(format!("expected {} fields, found {}", CSV_HEADER.len(), row.len())));
    }
    let field = |i: usize| row[i].trim();
    let minute: u16 = field(1).parse().map_err(|_| err(format!("bad minute {:?}", field(1))))?;
    if minute as usize >= MINUTES_PER_DAY {
        return Err(err(format!("minute {minute} outside 0..1440")));
    }
    let lane: u8 = field(4).parse().map_err(|_| err(format!("bad lane {:?}", field(4))))?;
    if lane == 0 {
        return Err(err("lane numbers start at 1".into()));
    }
    let class = match field(5) {
        "L" => VehicleKind::Light,
        "H" => VehicleKind::Heavy,
        other => return Err(err(format!("unknown class {other:?}"))),
    };
    let count: i64 = field(6).parse().map_err(|_| err(format!("bad count {:?}", field(6))))?;
    if count < 0 {
        return Err(SensorDataError::NegativeCount { line });
    }
    let count = u32::try_from(count).map_err(|_| err(format!("count {count} too large")))?;
    let speed = match field(7) {
        "" => None,
        s => {
            let v: f64 = s.parse().map_err(|_| err(format!("bad speed {s:?}")))?;
            if !v.is_finite() || v < 0.0 {
                return Err(err(format!("speed {v} must be finite and non-negative")));
            }
            Some(v)
        }
    };
    if count == 0 && speed.is_some() {
        return Err(SensorDataError::SpeedWithoutVehicles { line });
    }
    let flag3t = match field(8) {
        "" => None,
        "0" => Some(false),
        "1" => Some(true),
        other => return Err(err(format!("bad flag3t {other:?}"))),
    };
    Ok(SensorRecord {
        day: field(0).to_string(),
        minute,
        sensor_id: field(2).to_string(),
        group_id: field(3).to_string(),
        lane,
        class,
        count,
        speed,
        flag3t,
    })
}

/// Parse canonical CSV from any reader.
pub fn read_records<R: Read>(reader: R) -> Result<Vec<SensorRecord>, SensorDataError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(reader);
    let header = rdr.headers()?.clone();
    let found: Vec<&str> = header.iter().map(str::trim).collect();
    if found != CSV_HEADER {
        return Err(SensorDataError::Header { expected: CSV_HEADER.join(","), found: found.join(",") });
    }
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        out.push(parse_record(&row, line)?);
    }
    Ok(out)
}

pub fn ingest_csv(path: &Path) -> Result<Vec<SensorRecord>, SensorDataError> {
    read_records(std::fs::File::open(path)?)
}

pub fn write_records<W: Write>(writer: W, records: &[SensorRecord]) -> Result<(), SensorDataError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(CSV_HEADER)?;
    for r in records {
        let speed = r.speed.map(|s| s.to_string()).unwrap_or_default();
        let flag = r.flag3t.map(|f| if f { "1" } else { "0" }).unwrap_or("");
        w.write_record([
            r.day.as_str(),
            &r.minute.to_string(),
            &r.sensor_id,
            &r.group_id,
            &r.lane.to_string(),
            class_code(r.class),
            &r.count.to_string(),
            &speed,
            flag,
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// 1440 feature vectors for one day, stored column-wise. Velocity entries are
/// `None` where no vehicle passed; flux entries are always present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DaySequence {
    pub day: String,
    pub key: String,
    pub features: Vec<String>,
    pub columns: Vec<Vec<Option<f64>>>,
}

impl DaySequence {
    pub fn new(day: String, key: String, features: Vec<String>, columns: Vec<Vec<Option<f64>>>) -> Self {
        debug_assert!(columns.iter().all(|c| c.len() == MINUTES_PER_DAY));
        Self { day, key, features, columns }
    }

    pub fn len(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn column(&self, name: &str) -> Option<&[Option<f64>]> {
        self.features.iter().position(|f| f == name).map(|i| self.columns[i].as_slice())
    }

    /// Column with missing entries replaced by `fill`.
    pub fn dense(&self, index: usize, fill: f64) -> Vec<f64> {
        self.columns[index].iter().map(|x| x.unwrap_or(fill)).collect()
    }

    /// Per-minute input vectors, `None` marking missing values.
    pub fn rows(&self) -> Vec<Vec<Option<f64>>> {
        (0..self.len()).map(|t| self.columns.iter().map(|c| c[t]).collect()).collect()
    }
}

fn check_all<F: Fn(&SensorRecord) -> bool>(records: &[SensorRecord], what: &str, pred: F) -> Result<(), SensorDataError> {
    if records.iter().all(pred) {
        Ok(())
    } else {
        Err(SensorDataError::MixedRecords(what.to_string()))
    }
}

/// Flux (all classes) and count-weighted velocity of one sensor on one day.
pub fn aggregate_lane(records: &[SensorRecord], sensor_id: &str, day: &str) -> Result<DaySequence, SensorDataError> {
    check_all(records, &format!("sensor {sensor_id} on {day}"), |r| r.sensor_id == sensor_id && r.day == day)?;
    let mut counts = [0u64; MINUTES_PER_DAY];
    let mut speed_weight = [0u64; MINUTES_PER_DAY];
    let mut speed_sum = [0.0f64; MINUTES_PER_DAY];
    for r in records {
        let m = r.minute as usize;
        counts[m] += r.count as u64;
        if let Some(s) = r.speed.filter(|_| r.count > 0) {
            speed_weight[m] += r.count as u64;
            speed_sum[m] += r.count as f64 * s;
        }
    }
    let flux = counts.iter().map(|&c| Some(c as f64)).collect();
    let velocity = speed_sum
        .iter()
        .zip(&speed_weight)
        .map(|(&s, &w)| (w > 0).then(|| s / w as f64))
        .collect();
    Ok(DaySequence::new(
        day.to_string(),
        format!("{sensor_id}/lane"),
        vec!["flux".into(), "velocity".into()],
        vec![flux, velocity],
    ))
}

/// Per-class flux summed over every lane of a group.
pub fn aggregate_group(records: &[SensorRecord], group_id: &str, day: &str) -> Result<DaySequence, SensorDataError> {
    check_all(records, &format!("group {group_id} on {day}"), |r| r.group_id == group_id && r.day == day)?;
    let mut flux = [[0u64; MINUTES_PER_DAY]; 2];
    for r in records {
        flux[r.class.index()][r.minute as usize] += r.count as u64;
    }
    let columns = flux.iter().map(|c| c.iter().map(|&x| Some(x as f64)).collect()).collect();
    Ok(DaySequence::new(
        day.to_string(),
        format!("{group_id}/group"),
        vec!["flux_light".into(), "flux_heavy".into()],
        columns,
    ))
}

/// Per-minute flag: true when any record of that minute carries a raised flag.
pub fn flag3t_series(records: &[SensorRecord]) -> Vec<bool> {
    let mut out = vec![false; MINUTES_PER_DAY];
    for r in records.iter().filter(|r| r.flag3t == Some(true)) {
        out[r.minute as usize] = true;
    }
    out
}

/// Whether any record carries a flag value at all.
pub fn has_flag3t(records: &[SensorRecord]) -> bool {
    records.iter().any(|r| r.flag3t.is_some())
}

/// Records grouped by `(day, key)` with `key` chosen by the caller.
pub fn partition_by<K: Ord, F: Fn(&SensorRecord) -> K>(
    records: &[SensorRecord],
    key: F,
) -> BTreeMap<K, Vec<&SensorRecord>> {
    let mut map: BTreeMap<K, Vec<&SensorRecord>> = BTreeMap::new();
    for r in records {
        map.entry(key(r)).or_default().push(r);
    }
    map
}

/// Sorted distinct `(day, sensor_id)` pairs.
pub fn sensor_days(records: &[SensorRecord]) -> BTreeSet<(String, String)> {
    records.iter().map(|r| (r.day.clone(), r.sensor_id.clone())).collect()
}

/// Sorted distinct `(day, group_id)` pairs.
pub fn group_days(records: &[SensorRecord]) -> BTreeSet<(String, String)> {
    records.iter().map(|r| (r.day.clone(), r.group_id.clone())).collect()
}

/// Total vehicles per `(sensor, day)`.
pub fn daily_volumes(records: &[SensorRecord]) -> BTreeMap<String, Vec<f64>> {
    let mut per: BTreeMap<(String, String), f64> = BTreeMap::new();
    for r in records {
        *per.entry((r.sensor_id.clone(), r.day.clone())).or_default() += r.count as f64;
    }
    let mut out: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for ((sensor, _), v) in per {
        out.entry(sensor).or_default().push(v);
    }
    out
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FluxPartition {
    pub high: Vec<String>,
    pub low: Vec<String>,
}

/// Sensors whose mean daily volume reaches `threshold` are high-flux.
pub fn split_hf_lf(daily: &BTreeMap<String, Vec<f64>>, threshold: f64) -> FluxPartition {
    let mut out = FluxPartition::default();
    for (sensor, days) in daily {
        if days.is_empty() {
            continue;
        }
        let mean = days.iter().sum::<f64>() / days.len() as f64;
        if mean >= threshold {
            out.high.push(sensor.clone());
        } else {
            out.low.push(sensor.clone());
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(minute: u16, lane: u8, class: VehicleKind, count: u32, speed: Option<f64>) -> SensorRecord {
        SensorRecord {
            day: "2021-03-01".into(),
            minute,
            sensor_id: format!("G1-{lane}"),
            group_id: "G1".into(),
            lane,
            class,
            count,
            speed,
            flag3t: None,
        }
    }

    const HEADER: &str = "day,minute,sensor_id,group_id,lane,class,count,speed,flag3t\n";

    #[test]
    fn parses_canonical_rows() {
        let text = format!("{HEADER}2021-03-01,712,S1,G1,1,L,12,104.3,0\n2021-03-01,713,S1,G1,1,H,0,,\n");
        let recs = read_records(text.as_bytes()).unwrap();
        assert_eq!(recs[0].count, 12);
        assert_eq!(recs[0].speed, Some(104.3));
        assert_eq!(recs[0].flag3t, Some(false));
        assert_eq!(recs[0].class, VehicleKind::Light);
        assert_eq!(recs[1].speed, None);
        assert_eq!(recs[1].flag3t, None);
    }

    #[test]
    fn rejects_bad_rows_with_line_numbers() {
        let text = format!("{HEADER}2021-03-01,1,S1,G1,1,L,3,90,\n2021-03-01,2,S1,G1,1,L,-3,,\n");
        let err = read_records(text.as_bytes()).unwrap_err();
        assert_eq!(err.to_string(), "negative count at line 3");
        let text = format!("{HEADER}2021-03-01,2,S1,G1,1,L,0,88,\n");
        assert!(matches!(read_records(text.as_bytes()), Err(SensorDataError::SpeedWithoutVehicles { line: 2 })));
        let text = format!("{HEADER}2021-03-01,1440,S1,G1,1,L,1,88,\n");
        assert!(matches!(read_records(text.as_bytes()), Err(SensorDataError::Parse { line: 2, .. })));
        assert!(matches!(read_records("a,b\n".as_bytes()), Err(SensorDataError::Header { .. })));
    }

    #[test]
    fn csv_round_trip() {
        let recs = vec![rec(5, 1, VehicleKind::Light, 4, Some(101.5)), rec(6, 1, VehicleKind::Heavy, 0, None)];
        let mut buf = Vec::new();
        write_records(&mut buf, &recs).unwrap();
        assert_eq!(read_records(buf.as_slice()).unwrap(), recs);
    }

    #[test]
    fn lane_aggregation_weights_speeds() {
        let recs = vec![rec(10, 1, VehicleKind::Light, 2, Some(100.0)), rec(10, 1, VehicleKind::Heavy, 3, Some(50.0))];
        let day = aggregate_lane(&recs, "G1-1", "2021-03-01").unwrap();
        assert_eq!(day.len(), MINUTES_PER_DAY);
        assert_eq!(day.columns[0][10], Some(5.0));
        assert!((day.columns[1][10].unwrap() - 70.0).abs() < 1e-12);
        assert_eq!(day.columns[0][11], Some(0.0));
        assert_eq!(day.columns[1][11], None);
        let single = aggregate_lane(&recs[..1], "G1-1", "2021-03-01").unwrap();
        assert_eq!(single.columns[1][10], Some(100.0));
    }

    #[test]
    fn group_aggregation_sums_lanes_per_class() {
        let recs = vec![
            rec(0, 1, VehicleKind::Light, 3, Some(100.0)),
            rec(0, 1, VehicleKind::Heavy, 1, Some(80.0)),
            rec(0, 2, VehicleKind::Light, 2, Some(100.0)),
            rec(0, 2, VehicleKind::Heavy, 5, Some(80.0)),
        ];
        let g = aggregate_group(&recs, "G1", "2021-03-01").unwrap();
        assert_eq!(g.columns[0][0], Some(5.0));
        assert_eq!(g.columns[1][0], Some(6.0));
        let light_only: Vec<_> = recs.iter().filter(|r| r.class == VehicleKind::Light).cloned().collect();
        let g = aggregate_group(&light_only, "G1", "2021-03-01").unwrap();
        assert!(g.columns[1].iter().all(|x| *x == Some(0.0)));
    }

    #[test]
    fn aggregation_rejects_foreign_records() {
        let recs = vec![rec(0, 1, VehicleKind::Light, 3, Some(100.0))];
        assert!(aggregate_lane(&recs, "G1-2", "2021-03-01").is_err());
        assert!(aggregate_group(&recs, "G1", "2021-03-02").is_err());
    }

    #[test]
    fn hf_lf_split() {
        let mut daily = BTreeMap::new();
        daily.insert("a".to_string(), vec![10000.0]);
        daily.insert("b".to_string(), vec![2000.0]);
        daily.insert("c".to_string(), vec![5000.0, 7000.0]);
        let p = split_hf_lf(&daily, HF_THRESHOLD);
        assert_eq!(p.high, vec!["a", "c"]);
        assert_eq!(p.low, vec!["b"]);
    }
}
