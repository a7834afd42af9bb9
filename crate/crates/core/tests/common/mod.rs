#![allow(dead_code)]

use ridepool::io::{ingest, synth, RateProfile, RunConfig};
use ridepool::model::{Request, TravelTimeMatrix, VehicleState};
use ridepool::realtime::place_fleet;

pub struct Scenario {
    pub matrix: TravelTimeMatrix,
    pub requests: Vec<Request>,
    pub fleet: Vec<VehicleState>,
}

/// `n` flat-rate synthetic trips over `horizon` seconds on the default grid.
pub fn scenario(n: usize, horizon: i64, vehicles: usize, capacity: u32, seed: u64) -> Scenario {
    let cfg = RunConfig { vehicles, capacity, seed, ..RunConfig::default() };
    let s = synth(n, horizon, RateProfile::Flat, &cfg, seed);
    let grid = cfg.grid.build().unwrap();
    let requests = ingest(&s.trips, &grid, &cfg.projection, &s.matrix, capacity);
    let fleet = place_fleet(grid.len(), vehicles, capacity, seed);
    Scenario { matrix: s.matrix, requests, fleet }
}
