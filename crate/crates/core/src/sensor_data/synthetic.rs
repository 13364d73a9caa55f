//! Synthetic sensor days with injected congestion events.
//!
//! Per-minute counts are Poisson draws around a daily profile, split over
//! lanes and classes; mean speeds are Gaussian around a class free-flow
//! speed with spread shrinking as `1/sqrt(count)`. Inside an event the speed
//! is pulled toward a crawl speed by the event severity and the flux is
//! scaled down, with the two drops staggered according to the archetype.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use super::{aggregate_group, aggregate_lane, DaySequence, SensorDataError, SensorRecord, VehicleKind, MINUTES_PER_DAY};

/// Minutes by which the leading signal precedes the trailing one.
pub const ARCHETYPE_LAG: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FluxProfile {
    /// Linear interpolation between `(minute, veh/min)` knots, held flat
    /// beyond the first and last knot.
    Piecewise(Vec<(f64, f64)>),
    /// `base + amplitude * cos(2 pi (t - peak_minute) / 1440)`, floored at 0.
    Sinusoidal { base: f64, amplitude: f64, peak_minute: f64 },
}

impl FluxProfile {
    /// Two-peak weekday shape for a whole group, veh/min.
    pub fn commuter() -> Self {
        FluxProfile::Piecewise(vec![
            (0.0, 4.0),
            (300.0, 3.0),
            (420.0, 22.0),
            (480.0, 32.0),
            (600.0, 24.0),
            (780.0, 26.0),
            (1020.0, 34.0),
            (1140.0, 22.0),
            (1320.0, 8.0),
            (1439.0, 4.0),
        ])
    }

    pub fn at(&self, minute: f64) -> f64 {
        match self {
            FluxProfile::Piecewise(knots) => {
                let Some(first) = knots.first() else { return 0.0 };
                if minute <= first.0 {
                    return first.1;
                }
                for w in knots.windows(2) {
                    let ((x0, y0), (x1, y1)) = (w[0], w[1]);
                    if minute <= x1 {
                        return y0 + (y1 - y0) * (minute - x0) / (x1 - x0);
                    }
                }
                knots[knots.len() - 1].1
            }
            FluxProfile::Sinusoidal { base, amplitude, peak_minute } => {
                let phase = 2.0 * std::f64::consts::PI * (minute - peak_minute) / MINUTES_PER_DAY as f64;
                (base + amplitude * phase.cos()).max(0.0)
            }
        }
    }

    fn validate(&self) -> Result<(), SensorDataError> {
        let bad = |m: &str| Err(SensorDataError::InvalidScenario(m.to_string()));
        match self {
            FluxProfile::Piecewise(knots) => {
                if knots.is_empty() {
                    return bad("empty profile");
                }
                if knots.windows(2).any(|w| w[1].0 <= w[0].0) {
                    return bad("profile knots must have increasing minutes");
                }
                if knots.iter().any(|k| !(k.1 >= 0.0) || !k.0.is_finite()) {
                    return bad("profile values must be finite and non-negative");
                }
            }
            FluxProfile::Sinusoidal { base, amplitude, peak_minute } => {
                if ![base, amplitude, peak_minute].iter().all(|x| x.is_finite()) {
                    return bad("non-finite sinusoid parameter");
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Archetype {
    VelocityLed,
    Simultaneous,
    FluxLed,
    /// Velocity collapses while flux only drops halfway.
    PartialFlux,
}

impl Archetype {
    pub const ALL: [Archetype; 4] =
        [Archetype::VelocityLed, Archetype::Simultaneous, Archetype::FluxLed, Archetype::PartialFlux];
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CongestionEvent {
    pub start: usize,
    pub duration: usize,
    pub severity: f64,
    pub archetype: Archetype,
}

impl CongestionEvent {
    pub fn end(&self) -> usize {
        self.start + self.duration
    }

    fn lag(&self) -> usize {
        ARCHETYPE_LAG.min(self.duration.saturating_sub(1))
    }

    /// Minutes `[from, to)` during which speeds are depressed.
    fn velocity_window(&self) -> (usize, usize) {
        match self.archetype {
            Archetype::FluxLed => (self.start + self.lag(), self.end()),
            _ => (self.start, self.end()),
        }
    }

    /// Minutes `[from, to)` during which counts are depressed.
    fn flux_window(&self) -> (usize, usize) {
        match self.archetype {
            Archetype::VelocityLed => (self.start + self.lag(), self.end()),
            _ => (self.start, self.end()),
        }
    }

    fn flux_multiplier(&self) -> f64 {
        match self.archetype {
            Archetype::PartialFlux => 1.0 - 0.5 * self.severity,
            _ => 1.0 - self.severity,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticScenario {
    pub day: String,
    pub group_id: String,
    /// Share of the group flux carried by each lane; lane numbers are 1-based.
    pub lane_shares: Vec<f64>,
    /// Fraction of vehicles that are heavy.
    pub heavy_share: f64,
    /// Whole-group flux, veh/min.
    pub profile: FluxProfile,
    /// Multiplies the profile; lets a corpus vary day to day.
    pub volume_scale: f64,
    pub light_free_speed: f64,
    pub heavy_free_speed: f64,
    pub crawl_speed: f64,
    /// Spread of a single vehicle's speed around the class mean, km/h.
    pub speed_noise: f64,
    pub events: Vec<CongestionEvent>,
    pub seed: u64,
}

impl SyntheticScenario {
    pub fn new(day: impl Into<String>, seed: u64) -> Self {
        Self {
            day: day.into(),
            group_id: "G1".into(),
            lane_shares: vec![0.55, 0.45],
            heavy_share: 0.25,
            profile: FluxProfile::commuter(),
            volume_scale: 1.0,
            light_free_speed: 118.0,
            heavy_free_speed: 92.0,
            crawl_speed: 12.0,
            speed_noise: 8.0,
            events: Vec::new(),
            seed,
        }
    }

    pub fn with_events(mut self, events: Vec<CongestionEvent>) -> Self {
        self.events = events;
        self
    }

    pub fn validate(&self) -> Result<(), SensorDataError> {
        let bad = |m: String| Err(SensorDataError::InvalidScenario(m));
        if self.lane_shares.is_empty() || self.lane_shares.len() > u8::MAX as usize {
            return bad(format!("{} lanes", self.lane_shares.len()));
        }
        if self.lane_shares.iter().any(|s| !(*s >= 0.0)) {
            return bad("lane shares must be non-negative".into());
        }
        if !(0.0..=1.0).contains(&self.heavy_share) {
            return bad(format!("heavy share {}", self.heavy_share));
        }
        if !(self.volume_scale >= 0.0) {
            return bad(format!("volume scale {}", self.volume_scale));
        }
        for s in [self.light_free_speed, self.heavy_free_speed, self.crawl_speed, self.speed_noise] {
            if !(s >= 0.0) || !s.is_finite() {
                return bad(format!("speed parameter {s}"));
            }
        }
        self.profile.validate()?;
        let mut sorted = self.events.clone();
        sorted.sort_by_key(|e| e.start);
        for e in &sorted {
            if !(0.0..=1.0).contains(&e.severity) {
                return bad(format!("severity {}", e.severity));
            }
            if e.duration == 0 || e.end() > MINUTES_PER_DAY {
                return bad(format!("event [{}, {}) outside the day", e.start, e.end()));
            }
        }
        for w in sorted.windows(2) {
            if w[1].start < w[0].end() {
                return Err(SensorDataError::OverlappingEvents(w[0].start, w[0].end(), w[1].start, w[1].end()));
            }
        }
        Ok(())
    }

    pub fn sensor_id(&self, lane: u8) -> String {
        format!("{}-{}", self.group_id, lane)
    }
}

/// Minutes covered by an event, as a day-long mask.
pub fn event_mask(events: &[CongestionEvent]) -> Vec<bool> {
    let mut mask = vec![false; MINUTES_PER_DAY];
    for e in events {
        mask[e.start..e.end()].iter_mut().for_each(|m| *m = true);
    }
    mask
}

fn window_effect(events: &[CongestionEvent], minute: usize) -> (Option<f64>, f64) {
    let mut speed_severity = None;
    let mut flux_mult = 1.0;
    for e in events {
        let (a, b) = e.velocity_window();
        if (a..b).contains(&minute) {
            speed_severity = Some(e.severity);
        }
        let (a, b) = e.flux_window();
        if (a..b).contains(&minute) {
            flux_mult = e.flux_multiplier();
        }
    }
    (speed_severity, flux_mult)
}

/// Records for every lane, class and minute of the scenario's day, plus the
/// ground-truth event mask.
pub fn generate_synthetic_day(scenario: &SyntheticScenario) -> Result<(Vec<SensorRecord>, Vec<bool>), SensorDataError> {
    scenario.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    let lanes = scenario.lane_shares.len();
    let share_sum: f64 = scenario.lane_shares.iter().sum();
    let mut records = Vec::with_capacity(MINUTES_PER_DAY * lanes * 2);
    let sensor_ids: Vec<String> = (1..=lanes).map(|l| scenario.sensor_id(l as u8)).collect();
    for minute in 0..MINUTES_PER_DAY {
        let total = scenario.volume_scale * scenario.profile.at(minute as f64);
        let (speed_severity, flux_mult) = window_effect(&scenario.events, minute);
        for (lane_idx, share) in scenario.lane_shares.iter().enumerate() {
            let lane_flux = if share_sum > 0.0 { total * share / share_sum } else { 0.0 };
            for kind in [VehicleKind::Light, VehicleKind::Heavy] {
                let class_share = match kind {
                    VehicleKind::Light => 1.0 - scenario.heavy_share,
                    VehicleKind::Heavy => scenario.heavy_share,
                };
                let rate = lane_flux * class_share * flux_mult;
                let count = if rate > 0.0 {
                    Poisson::new(rate).expect("positive finite rate").sample(&mut rng) as u32
                } else {
                    0
                };
                let free = match kind {
                    VehicleKind::Light => scenario.light_free_speed,
                    VehicleKind::Heavy => scenario.heavy_free_speed,
                };
                let mean = match speed_severity {
                    Some(s) => scenario.crawl_speed + (free - scenario.crawl_speed) * (1.0 - s),
                    None => free,
                };
                // Draw even for empty minutes so the stream does not depend on counts.
                let z: f64 = rng.sample(rand_distr::StandardNormal);
                let speed = (count > 0).then(|| {
                    let v = mean + z * scenario.speed_noise / (count as f64).sqrt();
                    (v.max(0.0) * 10.0).round() / 10.0
                });
                records.push(SensorRecord {
                    day: scenario.day.clone(),
                    minute: minute as u16,
                    sensor_id: sensor_ids[lane_idx].clone(),
                    group_id: scenario.group_id.clone(),
                    lane: (lane_idx + 1) as u8,
                    class: kind,
                    count,
                    speed,
                    flag3t: None,
                });
            }
        }
    }
    Ok((records, event_mask(&scenario.events)))
}

/// Settings for drawing random non-overlapping daytime events.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventSampler {
    pub min_events: usize,
    pub max_events: usize,
    pub earliest_start: usize,
    pub latest_end: usize,
    pub min_duration: usize,
    pub max_duration: usize,
    pub min_severity: f64,
    pub max_severity: f64,
    /// Free minutes kept between consecutive events.
    pub min_gap: usize,
    pub archetypes: Vec<Archetype>,
}

impl Default for EventSampler {
    fn default() -> Self {
        Self {
            min_events: 1,
            max_events: 3,
            earliest_start: 360,
            latest_end: 1140,
            min_duration: 30,
            max_duration: 120,
            min_severity: 0.6,
            max_severity: 0.95,
            min_gap: 60,
            archetypes: Archetype::ALL.to_vec(),
        }
    }
}

impl EventSampler {
    pub fn sample<R: Rng>(&self, rng: &mut R) -> Vec<CongestionEvent> {
        let target = rng.random_range(self.min_events..=self.max_events);
        let mut events: Vec<CongestionEvent> = Vec::new();
        let mut attempts = 0;
        while events.len() < target && attempts < 200 {
            attempts += 1;
            let duration = rng.random_range(self.min_duration..=self.max_duration);
            if self.earliest_start + duration > self.latest_end {
                break;
            }
            let start = rng.random_range(self.earliest_start..=self.latest_end - duration);
            let clear = events
                .iter()
                .all(|e| start >= e.end() + self.min_gap || start + duration + self.min_gap <= e.start);
            if !clear {
                continue;
            }
            let severity = rng.random_range(self.min_severity..=self.max_severity);
            let archetype = self.archetypes[rng.random_range(0..self.archetypes.len())];
            events.push(CongestionEvent { start, duration, severity, archetype });
        }
        events.sort_by_key(|e| e.start);
        events
    }
}

/// One generated day with the scenario that produced it.
#[derive(Debug, Clone)]
pub struct SyntheticDay {
    pub scenario: SyntheticScenario,
    pub records: Vec<SensorRecord>,
    pub mask: Vec<bool>,
}

impl SyntheticDay {
    /// `[flux, velocity]` sequence of one lane.
    pub fn lane_sequence(&self, lane: u8) -> Result<DaySequence, SensorDataError> {
        let id = self.scenario.sensor_id(lane);
        let records: Vec<SensorRecord> = self.records.iter().filter(|r| r.sensor_id == id).cloned().collect();
        aggregate_lane(&records, &id, &self.scenario.day)
    }

    /// Per-class group flux `[flux_light, flux_heavy]`.
    pub fn group_sequence(&self) -> Result<DaySequence, SensorDataError> {
        aggregate_group(&self.records, &self.scenario.group_id, &self.scenario.day)
    }

    pub fn lanes(&self) -> u8 {
        self.scenario.lane_shares.len() as u8
    }
}

/// `days` consecutive calendar days starting 2021-03-01, each with its own
/// events and volume scale drawn from `seed`.
pub fn generate_corpus(
    template: &SyntheticScenario,
    sampler: &EventSampler,
    days: usize,
    seed: u64,
) -> Result<Vec<SyntheticDay>, SensorDataError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..days)
        .map(|d| {
            let mut scenario = template.clone();
            scenario.day = calendar_day(d);
            scenario.events = sampler.sample(&mut rng);
            scenario.volume_scale = template.volume_scale * rng.random_range(0.9..1.1);
            scenario.seed = rng.random();
            let (records, mask) = generate_synthetic_day(&scenario)?;
            Ok(SyntheticDay { scenario, records, mask })
        })
        .collect()
}

/// ISO date `offset` days after 2021-03-01.
pub fn calendar_day(offset: usize) -> String {
    const MONTH_DAYS: [usize; 12] = [31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31];
    let (mut year, mut month, mut day) = (2021usize, 3usize, 1 + offset);
    loop {
        let leap = year % 4 == 0 && (year % 100 != 0 || year % 400 == 0);
        let len = MONTH_DAYS[month - 1] + usize::from(month == 2 && leap);
        if day <= len {
            break;
        }
        day -= len;
        month += 1;
        if month > 12 {
            month = 1;
            year += 1;
        }
    }
    format!("{year:04}-{month:02}-{day:02}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sensor_data::{aggregate_lane, write_records};

    fn event(start: usize, duration: usize, severity: f64, archetype: Archetype) -> CongestionEvent {
        CongestionEvent { start, duration, severity, archetype }
    }

    #[test]
    fn no_events_gives_empty_mask() {
        let (records, mask) = generate_synthetic_day(&SyntheticScenario::new("2021-03-01", 1)).unwrap();
        assert!(mask.iter().all(|m| !m));
        assert_eq!(records.len(), MINUTES_PER_DAY * 2 * 2);
        assert!(records.iter().all(|r| (r.count == 0) == r.speed.is_none()));
    }

    #[test]
    fn severity_one_event_stops_traffic() {
        let s = SyntheticScenario::new("2021-03-01", 2).with_events(vec![event(600, 61, 1.0, Archetype::Simultaneous)]);
        let (records, mask) = generate_synthetic_day(&s).unwrap();
        assert_eq!(mask.iter().filter(|m| **m).count(), 61);
        assert!(mask[600] && mask[660] && !mask[599] && !mask[661]);
        let inside: u32 = records.iter().filter(|r| (600..=660).contains(&(r.minute as usize))).map(|r| r.count).sum();
        assert_eq!(inside, 0);
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let s = SyntheticScenario::new("2021-03-01", 7).with_events(vec![event(500, 40, 0.7, Archetype::FluxLed)]);
        let mut a = Vec::new();
        let mut b = Vec::new();
        write_records(&mut a, &generate_synthetic_day(&s).unwrap().0).unwrap();
        write_records(&mut b, &generate_synthetic_day(&s).unwrap().0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn overlapping_events_are_rejected() {
        let s = SyntheticScenario::new("d", 0).with_events(vec![
            event(600, 30, 0.5, Archetype::Simultaneous),
            event(620, 30, 0.5, Archetype::Simultaneous),
        ]);
        assert!(matches!(generate_synthetic_day(&s), Err(SensorDataError::OverlappingEvents(600, 630, 620, 650))));
        let s = SyntheticScenario::new("d", 0).with_events(vec![event(1430, 30, 0.5, Archetype::Simultaneous)]);
        assert!(generate_synthetic_day(&s).is_err());
    }

    #[test]
    fn velocity_led_drops_speed_before_flux() {
        let s = SyntheticScenario::new("2021-03-01", 3).with_events(vec![event(700, 60, 0.8, Archetype::VelocityLed)]);
        let (records, _) = generate_synthetic_day(&s).unwrap();
        let day = aggregate_lane(
            &records.iter().filter(|r| r.sensor_id == "G1-1").cloned().collect::<Vec<_>>(),
            "G1-1",
            "2021-03-01",
        )
        .unwrap();
        let v = |t: usize| day.columns[1][t].unwrap();
        assert!(v(700) < 60.0 && v(699) > 90.0);
        let f = |t: usize| day.columns[0][t].unwrap();
        let before: f64 = (690..700).map(f).sum::<f64>() / 10.0;
        let led: f64 = (700..703).map(f).sum::<f64>() / 3.0;
        let after: f64 = (710..740).map(f).sum::<f64>() / 30.0;
        assert!(led > 0.6 * before && after < 0.4 * before);
    }

    #[test]
    fn sampler_events_do_not_overlap() {
        let sampler = EventSampler { min_events: 3, max_events: 3, ..EventSampler::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let events = sampler.sample(&mut rng);
            for w in events.windows(2) {
                assert!(w[1].start >= w[0].end());
            }
            for e in &events {
                assert!(e.start >= 360 && e.end() <= 1140);
            }
        }
    }

    #[test]
    fn calendar_days_roll_over() {
        assert_eq!(calendar_day(0), "2021-03-01");
        assert_eq!(calendar_day(31), "2021-04-01");
        assert_eq!(calendar_day(306), "2022-01-01");
    }

    #[test]
    fn sinusoid_profile_peaks_where_asked() {
        let p = FluxProfile::Sinusoidal { base: 10.0, amplitude: 8.0, peak_minute: 900.0 };
        assert!((p.at(900.0) - 18.0).abs() < 1e-12);
        assert!((p.at(180.0) - 2.0).abs() < 1e-12);
    }
}
