use flowcast::labeling::{build_labels, LabeledDay};
use flowcast::sensor_data::synthetic::{generate_synthetic_day, Archetype, CongestionEvent, SyntheticScenario};
use flowcast::sensor_data::{aggregate_lane, MINUTES_PER_DAY};
use flowcast::signal::SmoothingKernel;

fn labeled_full_stop(archetype: Archetype, seed: u64, with_mask: bool) -> (LabeledDay, Vec<bool>) {
    let event = CongestionEvent { start: 600, duration: 61, severity: 1.0, archetype };
    let scenario = SyntheticScenario::new("2021-03-01", seed).with_events(vec![event]);
    let (records, mask) = generate_synthetic_day(&scenario).unwrap();
    let lane: Vec<_> = records.into_iter().filter(|r| r.sensor_id == "G1-1").collect();
    let day = aggregate_lane(&lane, "G1-1", "2021-03-01").unwrap();
    let flags = if with_mask { mask.clone() } else { vec![false; MINUTES_PER_DAY] };
    (build_labels(&day, &flags, &SmoothingKernel::default()).unwrap(), mask)
}

fn coverage(labels: &LabeledDay, mask: &[bool]) -> f64 {
    let hits = (0..MINUTES_PER_DAY).filter(|&t| mask[t] && labels.target[t]).count();
    hits as f64 / mask.iter().filter(|m| **m).count() as f64
}

#[test]
fn labels_with_mask_cover_every_event_minute() {
    for seed in 0..10 {
        let (labels, mask) = labeled_full_stop(Archetype::Simultaneous, seed, true);
        assert_eq!(coverage(&labels, &mask), 1.0);
    }
}

// Smoothing edges and the shrinking previous-hour mean cost roughly a fifth
// of a one-hour full stop.
#[test]
fn heuristics_alone_catch_most_of_a_full_stop() {
    for seed in 0..10 {
        for archetype in [Archetype::Simultaneous, Archetype::FluxLed] {
            let (labels, mask) = labeled_full_stop(archetype, seed, false);
            let cov = coverage(&labels, &mask);
            assert!(cov >= 0.7, "{archetype:?} seed {seed}: coverage {cov}");
            let outside = (0..MINUTES_PER_DAY).filter(|&t| !mask[t] && labels.target[t]).count();
            assert_eq!(outside, 0);
        }
    }
}

#[test]
fn heuristics_stay_quiet_on_free_days() {
    for seed in 0..20 {
        let (records, _) = generate_synthetic_day(&SyntheticScenario::new("2021-03-01", seed)).unwrap();
        for sensor in ["G1-1", "G1-2"] {
            let lane: Vec<_> = records.iter().filter(|r| r.sensor_id == sensor).cloned().collect();
            let day = aggregate_lane(&lane, sensor, "2021-03-01").unwrap();
            let labels = build_labels(&day, &[false; MINUTES_PER_DAY], &SmoothingKernel::default()).unwrap();
            assert_eq!(labels.positives(), 0, "seed {seed} sensor {sensor}");
        }
    }
}
