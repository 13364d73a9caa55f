//! End-to-end acceptance checks. Runs without the libtest harness so that
//! every criterion prints one PASS/FAIL line; exits non-zero if any fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use flowcast::fundamental_diagram::{FluxFunction, Regime, SingleClassFD, TwoClassFD};
use flowcast::godunov::{Boundary, Grid, RoadState, Series, Simulation, TrafficModel};
use flowcast::labeling::{build_labels, build_prealarm_targets, build_volume_targets, heuristic_flux, heuristic_speed};
use flowcast::neural::adam::AdamState;
use flowcast::neural::metrics::{rmse, skewness};
use flowcast::neural::network::{Gradients, TargetSeq, Workspace};
use flowcast::neural::train::positive_rate_of;
use flowcast::neural::{
    classify_with_confidence, evaluate, train, Example, LossKind, Network, NetworkConfig, NormalizationStats, Targets,
    TrainingSchedule,
};
use flowcast::pipeline::{experiment_academic, experiment_forecast_error, ForecastExperiment};
use flowcast::sensor_data::synthetic::{generate_corpus, EventSampler, SyntheticDay, SyntheticScenario};
use flowcast::sensor_data::MINUTES_PER_DAY;
use flowcast::signal::SmoothingKernel;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn sci(values: &[f64]) -> String {
    let parts: Vec<String> = values.iter().map(|v| format!("{v:.2e}")).collect();
    format!("[{}]", parts.join(", "))
}

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

// ---------------------------------------------------------------- solver --

/// Exact solution of the Riemann problem for `f = rho (1 - rho)`.
fn riemann_exact(left: f64, right: f64, x0: f64, t: f64, x: f64) -> f64 {
    let xi = (x - x0) / t;
    if left < right {
        let s = 1.0 - left - right;
        if xi < s {
            left
        } else {
            right
        }
    } else {
        let (a, b) = (1.0 - 2.0 * left, 1.0 - 2.0 * right);
        if xi <= a {
            left
        } else if xi >= b {
            right
        } else {
            0.5 * (1.0 - xi)
        }
    }
}

/// `int |u_h - u|` with `u_h` piecewise constant, integrating each cell
/// piecewise between the exact solution's breakpoints.
fn l1_distance(state: &[f64], grid: &Grid, exact: impl Fn(f64) -> f64, breaks: &[f64]) -> f64 {
    const SUB: usize = 64;
    let mut total = 0.0;
    for (j, &u) in state.iter().enumerate() {
        let (a, b) = (grid.x_min + j as f64 * grid.dx, grid.x_min + (j + 1) as f64 * grid.dx);
        let mut pts = vec![a];
        pts.extend(breaks.iter().copied().filter(|&p| p > a && p < b));
        pts.push(b);
        for w in pts.windows(2) {
            let h = (w[1] - w[0]) / SUB as f64;
            total += (0..SUB).map(|k| (u - exact(w[0] + (k as f64 + 0.5) * h)).abs() * h).sum::<f64>();
        }
    }
    total
}

fn riemann_error(left: f64, right: f64, cells: usize) -> Result<f64, String> {
    let fd = SingleClassFD::normalized();
    let (x0, t_end) = (0.5 + 1.0 / 300.0, 0.2);
    let grid = Grid::new(0.0, 1.0, cells).map_err(|e| e.to_string())?;
    let init: Vec<f64> = (0..cells)
        .map(|j| {
            let (a, b) = (j as f64 * grid.dx, (j + 1) as f64 * grid.dx);
            if b <= x0 {
                left
            } else if a >= x0 {
                right
            } else {
                (left * (x0 - a) + right * (b - x0)) / grid.dx
            }
        })
        .collect();
    let mut sim = Simulation::new(
        &fd,
        grid.clone(),
        RoadState { time: 0.0, densities: vec![init] },
        Boundary::DirichletDensity(vec![Series::constant(left)]),
        Boundary::DirichletDensity(vec![Series::constant(right)]),
        vec![],
    )
    .map_err(|e| e.to_string())?;
    sim.run_until(t_end, 0.5 * grid.dx).map_err(|e| e.to_string())?;
    let breaks = if left < right {
        vec![x0 + (1.0 - left - right) * t_end]
    } else {
        vec![x0 + (1.0 - 2.0 * left) * t_end, x0 + (1.0 - 2.0 * right) * t_end]
    };
    Ok(l1_distance(&sim.state().densities[0], &grid, |x| riemann_exact(left, right, x0, t_end, x), &breaks))
}

fn godunov_convergence() -> Check {
    let start = Instant::now();
    let mut detail = Vec::new();
    for (name, l, r, lo, hi) in [("shock", 0.2, 0.8, 1.7, 2.3), ("rarefaction", 0.8, 0.2, 1.4, f64::INFINITY)] {
        let errs = [100, 200, 400].map(|n| riemann_error(l, r, n));
        let errs: Vec<f64> = errs.into_iter().collect::<Result<_, _>>()?;
        let ratios = [errs[0] / errs[1], errs[1] / errs[2]];
        detail.push(format!("{name} errors {} ratios {ratios:.2?}", sci(&errs)));
        for q in ratios {
            ensure(q >= lo && q <= hi, format!("{name} ratio {q:.3} outside [{lo}, {hi}]; {errs:?}"))?;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 10.0, format!("took {secs:.1}s"))?;
    Ok(format!("{}; {secs:.2}s", detail.join("; ")))
}

fn closed_drift<M: TrafficModel>(model: &M, initial: RoadState, grid: Grid, dt: f64) -> Result<Vec<f64>, String> {
    let classes = initial.classes();
    let before: Vec<f64> = (0..classes).map(|c| initial.mass(c, grid.dx)).collect();
    let mut sim = Simulation::new(model, grid.clone(), initial, Boundary::Closed, Boundary::Closed, vec![])
        .map_err(|e| e.to_string())?;
    for _ in 0..10_000 {
        sim.step(dt).map_err(|e| e.to_string())?;
    }
    Ok((0..classes).map(|c| ((sim.state().mass(c, grid.dx) - before[c]) / before[c]).abs()).collect())
}

fn conservation() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let fd = SingleClassFD::normalized();
    let grid = Grid::new(0.0, 1.0, 100).map_err(|e| e.to_string())?;
    let init = RoadState { time: 0.0, densities: vec![(0..100).map(|_| rng.random_range(0.0..1.0)).collect()] };
    let single = closed_drift(&fd, init, grid, 0.009)?;

    let two = TwoClassFD::new(250.0, 70.0, 130.0 / 60.0, 90.0 / 60.0).map_err(|e| e.to_string())?;
    let grid = Grid::new(0.0, 16.0, 80).map_err(|e| e.to_string())?;
    let init = RoadState {
        time: 0.0,
        densities: vec![
            (0..80).map(|_| rng.random_range(0.0..120.0)).collect(),
            (0..80).map(|_| rng.random_range(0.0..20.0)).collect(),
        ],
    };
    let pair = closed_drift(&two, init, grid, 1.0 / 12.0)?;
    let worst = single.iter().chain(&pair).fold(0.0f64, |a, &b| a.max(b));
    ensure(worst < 1e-12, format!("drift single {single:?} two-class {pair:?}"))?;
    Ok(format!("relative drift single {} two-class {}", sci(&single), sci(&pair)))
}

fn inversion_round_trip() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let two = TwoClassFD::new(250.0, 70.0, 130.0 / 60.0, 90.0 / 60.0).map_err(|e| e.to_string())?;
    let sections = [
        SingleClassFD::normalized().section(0, &[0.0, 0.0]),
        SingleClassFD::new(180.0, 2.0).map_err(|e| e.to_string())?.section(0, &[0.0, 0.0]),
        two.light_section(12.0),
        two.heavy_section(150.0),
    ];
    let mut worst: f64 = 0.0;
    for sec in &sections {
        for _ in 0..10_000 {
            let f = rng.random_range(0.0..=sec.capacity());
            for regime in [Regime::Free, Regime::Congested] {
                let rho = sec.invert(f, regime).map_err(|e| e.to_string())?;
                let side_ok = match regime {
                    Regime::Free => rho <= sec.critical_density() + 1e-9,
                    Regime::Congested => rho >= sec.critical_density() - 1e-9,
                };
                ensure(side_ok, format!("{regime:?} root {rho} on the wrong branch"))?;
                worst = worst.max((sec.eval(rho) - f).abs() / sec.capacity().max(1.0));
            }
        }
        let jam = sec.invert(0.0, Regime::Congested).map_err(|e| e.to_string())?;
        let empty = sec.invert(0.0, Regime::Free).map_err(|e| e.to_string())?;
        ensure(jam == sec.jam_density(), format!("invert(0, congested) = {jam}, expected {}", sec.jam_density()))?;
        ensure(empty == 0.0, format!("invert(0, free) = {empty}"))?;
    }
    let unit = SingleClassFD::normalized().invert(0.0, Regime::Congested).map_err(|e| e.to_string())?;
    ensure(unit == 1.0, format!("normalized invert(0, congested) = {unit}"))?;
    ensure(worst < 1e-12, format!("round-trip error {worst:e}"))?;
    Ok(format!("max scaled round-trip error {worst:.1e} over 4 x 10^4 fluxes, both branches"))
}

fn academic_signatures() -> Check {
    let start = Instant::now();
    let report = experiment_academic(100).map_err(|e| e.to_string())?;
    let s = &report.signatures;
    let secs = start.elapsed().as_secs_f64();
    ensure(s.all_hold(), format!("{s:?}"))?;
    ensure(secs < 30.0, format!("took {secs:.1}s"))?;
    Ok(format!(
        "queue at bottleneck t={:?}, at sensor t={:?}; flux-based min {:.3} at x={:.3}; {secs:.2}s",
        s.queue_onset, s.queue_arrival, s.flux_based_min_density, s.flux_based_min_position
    ))
}

// ---------------------------------------------------------------- neural --

fn fd_gradient_error(net: &mut Network, xs: &[f64], target: &TargetSeq, loss: LossKind) -> f64 {
    let eval = |n: &Network| {
        let mut g = Gradients::zeros_like(n);
        n.loss_and_grad(xs, target, loss, &mut g, &mut Workspace::default()).expect("loss")
    };
    let mut grads = Gradients::zeros_like(net);
    net.loss_and_grad(xs, target, loss, &mut grads, &mut Workspace::default()).expect("loss");
    let analytic: Vec<Vec<f64>> = grads.blocks().iter().map(|b| b.to_vec()).collect();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for (bi, block) in analytic.iter().enumerate() {
        for (j, &a) in block.iter().enumerate() {
            let orig = net.blocks_mut()[bi][j];
            net.blocks_mut()[bi][j] = orig + h;
            let up = eval(net);
            net.blocks_mut()[bi][j] = orig - h;
            let down = eval(net);
            net.blocks_mut()[bi][j] = orig;
            let numeric = (up - down) / (2.0 * h);
            worst = worst.max((a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6));
        }
    }
    worst
}

fn lstm_gradient_check() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for case in 0..20u64 {
        let n_hid = rng.random_range(1..=4);
        let steps = rng.random_range(2..=7);
        let classify = case % 2 == 0;
        let cfg = if classify { NetworkConfig::classifier(n_hid, case) } else { NetworkConfig::predictor(n_hid, case) };
        let mut net = Network::new(&cfg, NormalizationStats::identity(2), None).map_err(|e| e.to_string())?;
        let xs: Vec<f64> = (0..2 * steps).map(|_| rng.random_range(-2.0..2.0)).collect();
        let (target, loss) = if classify {
            let ys = (0..steps).map(|_| rng.random_bool(0.4)).collect();
            (TargetSeq::Classes(ys), LossKind::WeightedCrossEntropy { positive_rate: rng.random_range(0.1..0.5) })
        } else {
            let supervised = rng.random_range(1..=steps);
            let ys = (0..2 * supervised).map(|_| rng.random_range(-1.0..1.0)).collect();
            (TargetSeq::Values(ys), LossKind::MeanSquaredError)
        };
        worst = worst.max(fd_gradient_error(&mut net, &xs, &target, loss));
    }
    ensure(worst < 1e-4, format!("max relative error {worst:e}"))?;
    Ok(format!("max relative error {worst:.2e} over 20 configurations"))
}

fn adam_first_step() -> Check {
    let mut adam = AdamState::new(&[1]);
    let mut theta = [0.0];
    adam.update(&mut [&mut theta[..]], &[&[1.0][..]], 0.1);
    ensure((theta[0] + 0.1).abs() < 1e-8, format!("first step {}", theta[0]))?;
    let mut still = AdamState::new(&[3]);
    let mut params = [0.3, -1.2, 4.0];
    for _ in 0..10 {
        still.update(&mut [&mut params[..]], &[&[0.0, 0.0, 0.0][..]], 0.1);
    }
    ensure(params == [0.3, -1.2, 4.0], format!("zero gradient moved parameters to {params:?}"))?;
    Ok(format!("first step {:.10}, zero gradient leaves parameters unchanged", theta[0]))
}

// -------------------------------------------------------------- training --

struct Corpus {
    train: Vec<SyntheticDay>,
    held_out: Vec<SyntheticDay>,
}

fn corpus() -> Corpus {
    let template = SyntheticScenario::new("template", 0);
    let mut days = generate_corpus(&template, &EventSampler::default(), 40, 42).expect("synthetic corpus");
    let held_out = days.split_off(30);
    Corpus { train: days, held_out }
}

fn lane_examples(days: &[SyntheticDay], relabel: impl Fn(&[Vec<Option<f64>>], Vec<bool>) -> Vec<bool>) -> Vec<Example> {
    let kernel = SmoothingKernel::default();
    let mut out = Vec::new();
    for d in days {
        for lane in 1..=d.lanes() {
            let seq = d.lane_sequence(lane).expect("lane sequence");
            let labels = build_labels(&seq, &d.mask, &kernel).expect("labels");
            let inputs = seq.rows();
            let targets = relabel(&inputs, labels.target);
            out.push(Example { inputs, targets: Targets::Classes(targets) });
        }
    }
    out
}

fn schedule(eras: usize, epochs: usize, seed: u64) -> TrainingSchedule {
    TrainingSchedule { eras, epochs_per_era: epochs, batch_size: 4, shuffle_seed: seed, ..TrainingSchedule::classifier() }
}

fn median3(mut v: [f64; 3]) -> f64 {
    v.sort_by(f64::total_cmp);
    v[1]
}

fn classifier(corpus: &Corpus, detector: &mut Option<Network>) -> Check {
    let start = Instant::now();
    let train_set = lane_examples(&corpus.train, |_, y| y);
    let test_set = lane_examples(&corpus.held_out, |_, y| y);
    let p = positive_rate_of(&train_set).map_err(|e| e.to_string())?;
    let loss = LossKind::WeightedCrossEntropy { positive_rate: p };
    let (net, _) = train(&train_set, &[], &NetworkConfig::classifier(24, 1), &schedule(4, 10, 1), loss)
        .map_err(|e| e.to_string())?;
    let acc = evaluate(&net, &test_set, loss).map_err(|e| e.to_string())?.accuracy.ok_or("no accuracy")?;
    let train_secs = start.elapsed().as_secs_f64();

    let sweep_days = &corpus.train[..10];
    let sweep_set = lane_examples(sweep_days, |_, y| y);
    let sweep_loss = LossKind::WeightedCrossEntropy { positive_rate: positive_rate_of(&sweep_set).map_err(|e| e.to_string())? };
    let mut medians = Vec::new();
    for n_hid in [15, 30, 60] {
        let mut finals = [0.0; 3];
        for (seed, slot) in finals.iter_mut().enumerate() {
            let cfg = NetworkConfig::classifier(n_hid, 100 + seed as u64);
            let (_, trace) = train(&sweep_set, &[], &cfg, &schedule(2, 10, seed as u64), sweep_loss).map_err(|e| e.to_string())?;
            *slot = trace.final_train_loss().ok_or("empty trace")?;
        }
        medians.push(median3(finals));
    }
    *detector = Some(net);
    ensure(acc.accuracy >= 0.95, format!("accuracy {:.4}", acc.accuracy))?;
    ensure(acc.weighted >= 0.97, format!("weighted accuracy {:.4}", acc.weighted))?;
    ensure(train_secs < 300.0, format!("training took {train_secs:.0}s"))?;
    ensure(medians.windows(2).all(|w| w[1] <= w[0]), format!("sweep losses {medians:?} not non-increasing"))?;
    Ok(format!(
        "n_hid 24, 30 days: accuracy {:.4}, weighted {:.4} on 10 held-out days ({train_secs:.0}s); median loss n_hid 15/30/60 {medians:.4?}",
        acc.accuracy, acc.weighted
    ))
}

fn prealarm(corpus: &Corpus, detector: Option<&Network>) -> Check {
    let detector = detector.ok_or("classifier unavailable")?;
    let source = |inputs: &[Vec<Option<f64>>], _: Vec<bool>| -> Vec<bool> {
        classify_with_confidence(detector, inputs).expect("detector").into_iter().map(|(b, _)| b).collect()
    };
    let train_days = &corpus.train[..20];
    let mut medians = Vec::new();
    for shift in [1usize, 4, 8, 15] {
        let shifted = |inputs: &[Vec<Option<f64>>], y: Vec<bool>| build_prealarm_targets(&source(inputs, y), shift, 3);
        let train_set = lane_examples(train_days, shifted);
        let test_set = lane_examples(&corpus.held_out, shifted);
        let p = positive_rate_of(&train_set).map_err(|e| e.to_string())?;
        let loss = LossKind::WeightedCrossEntropy { positive_rate: p };
        let mut accs = [0.0; 3];
        for (seed, slot) in accs.iter_mut().enumerate() {
            let cfg = NetworkConfig::classifier(16, 200 + seed as u64);
            let (net, _) = train(&train_set, &[], &cfg, &schedule(3, 10, seed as u64), loss).map_err(|e| e.to_string())?;
            *slot = evaluate(&net, &test_set, loss).map_err(|e| e.to_string())?.accuracy.ok_or("no accuracy")?.accuracy;
        }
        medians.push(median3(accs));
    }
    ensure(medians[1] >= 0.90, format!("accuracy at shift 4 is {:.4}", medians[1]))?;
    ensure(medians.windows(2).all(|w| w[1] <= w[0]), format!("accuracies {medians:?} do not degrade monotonically"))?;
    Ok(format!("median accuracy for shift 1/4/8/15: {medians:.4?}"))
}

fn volume_predictor(corpus: &Corpus, predictor: &mut Option<Network>) -> Check {
    const HORIZON: usize = 30;
    let to_example = |d: &SyntheticDay| {
        let g = d.group_sequence().expect("group sequence");
        let v = build_volume_targets(&g, HORIZON).expect("volume targets");
        let example = Example { inputs: g.rows(), targets: Targets::Values(v.values.iter().map(|x| x.to_vec()).collect()) };
        (example, v.values, [g.dense(0, 0.0), g.dense(1, 0.0)])
    };
    let train_set: Vec<Example> = corpus.train.iter().map(|d| to_example(d).0).collect();
    let sched = TrainingSchedule { eras: 3, epochs_per_era: 10, batch_size: 4, shuffle_seed: 7, ..TrainingSchedule::predictor() };
    let (mut net, _) = train(&train_set, &[], &NetworkConfig::predictor(27, 7), &sched, LossKind::MeanSquaredError)
        .map_err(|e| e.to_string())?;
    net.metadata.horizon = Some(HORIZON);
    net.metadata.role = "volume".into();

    let (mut residuals, mut baseline) = ([vec![], vec![]], [vec![], vec![]]);
    for d in &corpus.held_out {
        let (example, truth, flux) = to_example(d);
        let out = net.forward(&example.inputs).map_err(|e| e.to_string())?;
        for t in 60..MINUTES_PER_DAY - HORIZON {
            for c in 0..2 {
                residuals[c].push(out[t][c] - truth[t][c]);
                let recent = flux[c][t + 1 - HORIZON..=t].iter().sum::<f64>() / HORIZON as f64;
                baseline[c].push(recent - truth[t][c]);
            }
        }
    }
    let mut detail = Vec::new();
    let mut failures = Vec::new();
    for (c, name) in ["light", "heavy"].iter().enumerate() {
        let (r, b, s) = (rmse(&residuals[c]), rmse(&baseline[c]), skewness(&residuals[c]));
        detail.push(format!("{name} RMSE {r:.3} vs baseline {b:.3} ({:.0}% better), skew {s:.3}", 100.0 * (1.0 - r / b)));
        if r > 0.9 * b {
            failures.push(format!("{name} RMSE {r:.3} not 10% below {b:.3}"));
        }
        if s.abs() >= 0.5 {
            failures.push(format!("{name} skewness {s:.3}"));
        }
    }
    *predictor = Some(net);
    ensure(failures.is_empty(), failures.join("; "))?;
    Ok(detail.join("; "))
}

fn forecast_comparison(predictor: Option<&Network>) -> Check {
    let net = predictor.ok_or("predictor unavailable")?;
    // Ordinary days from the same daily pattern: a constant inflow cannot
    // anticipate an incident's flux collapse inside the window.
    let calm = EventSampler { min_events: 0, max_events: 0, ..EventSampler::default() };
    let template = SyntheticScenario::new("template", 0);
    let calm_days = generate_corpus(&template, &calm, 3, 9).map_err(|e| e.to_string())?;
    let days: Vec<_> = calm_days.iter().map(|d| d.group_sequence().expect("group")).collect();
    let setup = ForecastExperiment::default();
    let curves = experiment_forecast_error(&setup, &days, Some(net)).map_err(|e| e.to_string())?;
    let predicted = curves.predicted.as_ref().ok_or("no predicted curve")?;
    let h = setup.horizon;
    let mut failures = Vec::new();
    for c in 0..2 {
        if curves.null[h][c] <= 0.9 {
            failures.push(format!("class {c}: null-inflow error {:.3} at the horizon", curves.null[h][c]));
        }
        for t in 6..=h {
            if predicted[t][c] >= curves.null[t][c] {
                failures.push(format!("class {c}: predicted {:.3} >= null {:.3} at minute {t}", predicted[t][c], curves.null[t][c]));
            }
        }
    }
    let peak = [0, 1].map(|c| predicted.iter().map(|e| e[c]).fold(0.0, f64::max));
    for (c, p) in peak.iter().enumerate() {
        if *p > 0.45 {
            failures.push(format!("class {c}: predicted error peaks at {p:.3} (> 0.30 + 0.15)"));
        }
    }
    ensure(failures.is_empty(), failures.join("; "))?;
    Ok(format!(
        "{} runs; predicted peak light {:.3} heavy {:.3}; null at {h} min {:.3?}",
        curves.runs, peak[0], peak[1], curves.null[h]
    ))
}

// ------------------------------------------------------------- labeling --

fn heuristic_vectors() -> Check {
    let mut results = Vec::new();
    let flux = |t: usize, ft: f64| {
        let mut f = vec![10.0; MINUTES_PER_DAY];
        f[t - 1] = 1.0;
        f[t] = ft;
        let mut s = vec![10.0; MINUTES_PER_DAY];
        s[t] = 1.5;
        heuristic_flux(&f, &s, t)
    };
    results.push(("MLN day, drop after busy hour", flux(400, 0.0), true));
    results.push(("MLN night", flux(100, 0.0), false));
    results.push(("MLN f_t = 5", flux(400, 5.0), false));
    let speed = |prev: f64, now: f64| {
        let mut v = vec![Some(95.0); MINUTES_PER_DAY];
        v[599] = Some(prev);
        v[600] = Some(now);
        heuristic_speed(&v, &vec![Some(95.0); MINUTES_PER_DAY], 600)
    };
    results.push(("NDR 60 -> 50 under 95", speed(60.0, 50.0), true));
    results.push(("NDR v_t = 70", speed(80.0, 70.0), false));
    results.push(("NDR 45 -> 50", speed(45.0, 50.0), false));
    let wrong: Vec<&str> = results.iter().filter(|(_, got, want)| got != want).map(|(n, _, _)| *n).collect();
    ensure(wrong.is_empty(), format!("mismatched: {wrong:?}"))?;
    Ok("6 of 6 examples match".into())
}

fn main() {
    let mut failed = 0;
    let mut report = |id: usize, name: &str, f: &mut dyn FnMut() -> Check| {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {id:>2} {name}: {detail} [{secs:.1}s]"),
            Err(reason) => {
                failed += 1;
                println!("FAIL {id:>2} {name}: {reason} [{secs:.1}s]");
            }
        }
    };
    report(1, "godunov convergence", &mut godunov_convergence);
    report(2, "conservation", &mut conservation);
    report(3, "diagram inversion", &mut inversion_round_trip);
    report(4, "academic test signatures", &mut academic_signatures);
    report(5, "lstm gradient check", &mut lstm_gradient_check);
    report(6, "adam first step", &mut adam_first_step);
    let data = corpus();
    let (mut detector, mut predictor) = (None, None);
    report(7, "congestion classifier", &mut || classifier(&data, &mut detector));
    report(8, "pre-alarm", &mut || prealarm(&data, detector.as_ref()));
    report(9, "volume predictor", &mut || volume_predictor(&data, &mut predictor));
    report(10, "forecast comparison", &mut || forecast_comparison(predictor.as_ref()));
    report(11, "heuristic vectors", &mut heuristic_vectors);
    println!("{} of 11 criteria passed", 11 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
