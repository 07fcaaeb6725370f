use evcharge::model::{DemandModel, Matrix, ProblemInstance};
use evcharge::sim::{replay_decisions, simulate, summarize, EventKind, SimConfig};
use evcharge::spatial::{build_grid_instance, Region};
use proptest::prelude::*;

fn layout(seed_rate: f64) -> ProblemInstance {
    let region = Region {
        side: 1.0,
        grid: 10,
        crossing_time: 50.0,
    };
    build_grid_instance(&region, &[[0.2, 0.3], [0.8, 0.3], [0.5, 0.8]], &[15.0, 10.0, 20.0], seed_rate, 30.0, 0.5)
        .unwrap()
        .instance
}

fn config(seed: u64, rate: f64, horizon: f64) -> SimConfig {
    SimConfig {
        seed,
        horizon,
        warmup: horizon / 10.0,
        rate,
        sample_stride: horizon / 200.0,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn logs_are_deterministic_and_consistent(seed in any::<u64>(), rate in 0.1..2.0f64) {
        let inst = layout(rate);
        let cfg = config(seed, rate, 1500.0);
        let a = simulate(&inst, &cfg).unwrap();
        let b = simulate(&inst, &cfg).unwrap();
        prop_assert_eq!(format!("{a:?}"), format!("{b:?}"));
        prop_assert!(a.events.windows(2).all(|w| w[0].time <= w[1].time));
        prop_assert_eq!(replay_decisions(&a, &inst), None);
        for s in &a.snapshots {
            let total: u64 = s.occupancy.iter().map(|&q| u64::from(q)).sum();
            prop_assert_eq!(total, s.arrivals - s.departures);
        }
        let mut open = std::collections::HashMap::new();
        for e in &a.events {
            match e.kind {
                EventKind::Arrival => { open.insert(e.ev, (e.time, e.station, e.site)); }
                EventKind::Departure => {
                    let (t0, station, site) = open.remove(&e.ev).unwrap();
                    prop_assert!(e.time >= t0);
                    prop_assert_eq!((station, site), (e.station, e.site));
                }
            }
        }
    }
}

#[test]
fn interarrival_and_sojourn_means() {
    let inst = layout(1.5);
    let t = inst.sojourn();
    for seed in [1, 2, 3] {
        let log = simulate(&inst, &config(seed, 1.5, 20_000.0)).unwrap();
        let arrivals: Vec<f64> = log
            .events
            .iter()
            .filter(|e| e.kind == EventKind::Arrival)
            .map(|e| e.time)
            .collect();
        let gaps: Vec<f64> = std::iter::once(arrivals[0])
            .chain(arrivals.windows(2).map(|w| w[1] - w[0]))
            .collect();
        let mean_gap = gaps.iter().sum::<f64>() / gaps.len() as f64;
        // exponential: standard deviation equals the mean
        let se = (1.0 / 1.5) / (gaps.len() as f64).sqrt();
        assert!((mean_gap - 1.0 / 1.5).abs() <= 3.0 * se, "seed {seed}: mean gap {mean_gap}");

        let mut start = std::collections::HashMap::new();
        let mut sojourns = Vec::new();
        for e in &log.events {
            match e.kind {
                EventKind::Arrival => {
                    start.insert(e.ev, e.time);
                }
                EventKind::Departure => sojourns.push(e.time - start[&e.ev]),
            }
        }
        // EVs still present at the horizon would bias the mean downwards;
        // keep only those that arrived long before the end
        let early: Vec<f64> = log
            .events
            .iter()
            .filter(|e| e.kind == EventKind::Departure && start[&e.ev] < 20_000.0 - 30.0 * t)
            .map(|e| e.time - start[&e.ev])
            .collect();
        let mean = early.iter().sum::<f64>() / early.len() as f64;
        let se = t / (early.len() as f64).sqrt();
        assert!((mean - t).abs() <= 3.0 * se, "seed {seed}: mean sojourn {mean}");
        assert!(!sojourns.is_empty());
    }
}

#[test]
fn ample_single_station_matches_offered_load() {
    let inst = ProblemInstance::new(
        vec![500.0],
        Matrix::from_rows(&[vec![2.0]]).unwrap(),
        60.0,
        1.0,
        DemandModel::Inelastic { rates: vec![1.0] },
    )
    .unwrap();
    let horizon = 200.0 * 60.0;
    let log = simulate(&inst, &config(77, 2.0, horizon)).unwrap();
    let s = summarize(&log, &inst, None).unwrap();
    // Little's law from the log itself: arrivals in the window times T
    let little = s.effective_rate * 60.0;
    assert!((s.total_mean - little).abs() / little <= 0.05, "{} vs {little}", s.total_mean);
    assert!((s.total_mean - 120.0).abs() / 120.0 <= 0.05);
    assert!(s.little_residual <= 0.05);
    assert_eq!(s.mean_delay, vec![0.0]);
    // M/M/inf occupancy is Poisson: variance equals the mean
    assert!((s.total_variance / s.total_mean - 1.0).abs() <= 0.25);
}

#[test]
fn little_residual_is_small_on_long_runs() {
    let inst = layout(2.0);
    let horizon = 120.0 * inst.sojourn();
    for seed in [4, 5] {
        let log = simulate(&inst, &config(seed, 2.0, horizon)).unwrap();
        let s = summarize(&log, &inst, None).unwrap();
        assert!(s.little_residual <= 0.05, "seed {seed}: {}", s.little_residual);
        assert!(s.mean_delay.iter().all(|&d| d >= 0.0));
    }
}
