mod common;

use proptest::prelude::*;

use ridepool::model::{Request, TravelTimeMatrix, VehicleState};
use ridepool::realtime::{audit, run, EpochConfig, SolverKind};
use ridepool::report::{histogram, summarize, write_report, WAIT_BIN};

use common::scenario;

#[test]
fn first_static_solve_matches_oracle_mode() {
    for seed in 0..40 {
        let s = scenario(4, 120, 2, 4, seed);
        let cg = run(&s.matrix, &s.requests, &s.fleet, &EpochConfig::default()).unwrap();
        let oracle =
            run(&s.matrix, &s.requests, &s.fleet, &EpochConfig { solver: SolverKind::Oracle, ..EpochConfig::default() })
                .unwrap();
        let a = cg.epochs.iter().find(|e| e.requests > 0).unwrap();
        let b = oracle.epochs.iter().find(|e| e.requests > 0).unwrap();
        assert!((a.objective - b.objective).abs() <= 1e-6, "seed {seed}: {} vs {}", a.objective, b.objective);
        assert!(cg.all_completed() && oracle.all_completed());
        assert!(cg.violations.is_empty() && oracle.violations.is_empty());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn random_traces_are_feasible_and_complete(
        seed in any::<u64>(),
        n in 0usize..25,
        vehicles in 2usize..6,
        capacity in 2u32..5,
        epoch_len in prop::sample::select(vec![15i64, 30, 60]),
    ) {
        let s = scenario(n, 600, vehicles, capacity, seed);
        let config = EpochConfig { epoch_len, penalty: ridepool::model::PenaltyParams { delta: 420.0, epoch_len }, ..EpochConfig::default() };
        let rep = run(&s.matrix, &s.requests, &s.fleet, &config).unwrap();
        prop_assert!(audit(&s.matrix, &s.requests, &s.fleet, &rep.committed, &config).is_empty());
        prop_assert!(rep.violations.is_empty());
        prop_assert!(rep.chain_intact);
        prop_assert!(rep.conservation_ok);
        prop_assert!(rep.escalation_ok);
        prop_assert!(rep.all_completed());
        prop_assert_eq!(rep.riders.len(), s.requests.len());
        for r in &rep.riders {
            let ride = r.dropoff.unwrap() - r.pickup.unwrap() - config.service;
            prop_assert!(ride <= config.deviation.bound(r.direct));
            prop_assert!(r.pickup.unwrap() >= r.release);
        }
        for e in &rep.epochs {
            prop_assert!(e.rmp_monotone);
        }
    }
}

fn single_stop_trip(origin_is_vehicle: bool) -> (TravelTimeMatrix, Vec<Request>, Vec<VehicleState>) {
    let m = TravelTimeMatrix::from_fn(2, |i, j| if i == j { 0 } else { 45 }).unwrap();
    let requests = vec![Request::new(0, 0, 1, 1, 1, &m)];
    let start = if origin_is_vehicle { 1 } else { 0 };
    (m, requests, vec![VehicleState::idle(0, start, 0, 4)])
}

#[test]
fn zero_length_trip_completes_without_detour() {
    let (m, requests, fleet) = single_stop_trip(false);
    let rep = run(&m, &requests, &fleet, &EpochConfig::default()).unwrap();
    let r = &rep.riders[0];
    assert_eq!(r.direct, 0);
    assert_eq!(r.pickup, r.dropoff);
    assert_eq!(r.deviation(0), Some(0));
    assert!(rep.violations.is_empty());
}

#[test]
fn lone_rider_waits_until_the_next_boundary() {
    // released at 0, solved at epoch 1, the vehicle leaves at 60 from the origin
    let (m, requests, fleet) = single_stop_trip(true);
    let rep = run(&m, &requests, &fleet, &EpochConfig::default()).unwrap();
    let s = summarize(&rep);
    assert_eq!(s.wait_s.count, 1);
    assert_eq!(s.wait_s.mean, 60.0);
    assert_eq!(s.wait_s.std, 0.0);
}

#[test]
fn empty_trace_writes_headers_only() {
    let m = TravelTimeMatrix::from_fn(2, |i, j| if i == j { 0 } else { 45 }).unwrap();
    let fleet = vec![VehicleState::idle(0, 0, 0, 4)];
    let rep = run(&m, &[], &fleet, &EpochConfig::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let s = write_report(&rep, None, dir.path()).unwrap();
    assert_eq!((s.riders, s.wait_s.count), (0, 0));
    for name in ["wait_hist.csv", "deviation_hist.csv", "assignment_hist.csv", "riders.csv"] {
        let text = std::fs::read_to_string(dir.path().join(name)).unwrap();
        assert_eq!(text.lines().count(), 1, "{name}");
    }
    assert!(dir.path().join("summary.json").exists());
}

#[test]
fn histogram_mean_within_one_bin() {
    let s = scenario(300, 3600, 20, 5, 7);
    let rep = run(&s.matrix, &s.requests, &s.fleet, &EpochConfig::default()).unwrap();
    let waits: Vec<i64> = rep.riders.iter().filter_map(|r| r.wait()).collect();
    let hist = histogram(&waits, WAIT_BIN);
    let n: usize = hist.iter().map(|h| h.1).sum();
    assert_eq!(n, waits.len());
    let binned = hist.iter().map(|&(start, c)| (start as f64 + WAIT_BIN as f64 / 2.0) * c as f64).sum::<f64>() / n as f64;
    let mean = summarize(&rep).wait_s.mean;
    assert!((binned - mean).abs() <= WAIT_BIN as f64, "{binned} vs {mean}");
}
