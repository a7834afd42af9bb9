//! Exhaustive reference solvers for tiny instances.
//!
//! Nothing here calls the production scheduler or pricing code: route
//! timing is recomputed along a depth-first enumeration of every
//! precedence-valid node order, onboard dropoffs included, and the static
//! optimum enumerates every assignment of requests to vehicles.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::colgen::{InstanceError, StaticInstance};
use crate::model::{
    DeviationPolicy, OnboardRider, PenaltyParams, Request, Seconds, StopId, TravelTimeMatrix, VehicleId,
    VehicleState,
};
use crate::schedule::{Node, NodeKind};

pub const MAX_VEHICLES: usize = 4;
pub const MAX_REQUESTS: usize = 6;
pub const MAX_ONBOARD: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OracleError {
    TooLarge { vehicles: usize, requests: usize, onboard: usize },
}

impl fmt::Display for OracleError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OracleError::TooLarge { vehicles, requests, onboard } => write!(
                f,
                "instance too large for exhaustive search: {vehicles} vehicles, {requests} requests, \
                 {onboard} onboard (limits {MAX_VEHICLES}, {MAX_REQUESTS}, {MAX_ONBOARD})"
            ),
        }
    }
}

impl std::error::Error for OracleError {}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSolution {
    pub objective: f64,
    /// Vehicle per request in instance order.
    pub assignment: Vec<Option<VehicleId>>,
    /// Node sequence per vehicle.
    pub routes: Vec<Vec<Node>>,
    pub wait: Seconds,
}

struct Search<'a> {
    matrix: &'a TravelTimeMatrix,
    policy: DeviationPolicy,
    service: Seconds,
    vehicle: &'a VehicleState,
    requests: Vec<&'a Request>,
    picked_at: Vec<Option<Seconds>>,
    dropped: Vec<bool>,
    onboard_done: Vec<bool>,
    path: Vec<Node>,
    best: Option<(Vec<Node>, Seconds)>,
}

impl Search<'_> {
    fn ride_ok(&self, ride: Seconds, direct: Seconds) -> bool {
        let cap = (self.policy.alpha * direct as f64).max((self.policy.beta + direct) as f64);
        ride as f64 <= cap + 1e-9
    }

    fn dfs(&mut self, stop: StopId, ready: Seconds, load: u32, wait: Seconds, placed: usize) {
        if let Some((_, w)) = &self.best {
            if wait >= *w {
                return;
            }
        }
        let total = 2 * self.requests.len() + self.vehicle.onboard.len();
        if placed == total {
            if ready <= self.vehicle.shift_end {
                self.best = Some((self.path.clone(), wait));
            }
            return;
        }
        for k in 0..self.vehicle.onboard.len() {
            if self.onboard_done[k] {
                continue;
            }
            let rider = &self.vehicle.onboard[k];
            let at = ready + self.matrix.get(stop, rider.dest);
            if !self.ride_ok(at - rider.picked_up_at - self.service, rider.direct) {
                continue;
            }
            self.onboard_done[k] = true;
            self.path.push(Node {
                kind: NodeKind::OnboardDropoff,
                request: rider.request,
                stop: rider.dest,
                size: rider.size,
                time_ref: rider.picked_up_at,
                direct: rider.direct,
            });
            self.dfs(rider.dest, at + self.service, load - rider.size, wait, placed + 1);
            self.path.pop();
            self.onboard_done[k] = false;
        }
        for k in 0..self.requests.len() {
            let r = self.requests[k];
            match self.picked_at[k] {
                None => {
                    if load + r.size > self.vehicle.capacity {
                        continue;
                    }
                    let at = (ready + self.matrix.get(stop, r.origin)).max(r.release);
                    self.picked_at[k] = Some(at);
                    self.path.push(Node {
                        kind: NodeKind::Pickup,
                        request: r.id,
                        stop: r.origin,
                        size: r.size,
                        time_ref: r.release,
                        direct: r.direct,
                    });
                    self.dfs(r.origin, at + self.service, load + r.size, wait + at - r.release, placed + 1);
                    self.path.pop();
                    self.picked_at[k] = None;
                }
                Some(p) if !self.dropped[k] => {
                    let at = ready + self.matrix.get(stop, r.dest);
                    if !self.ride_ok(at - p - self.service, r.direct) {
                        continue;
                    }
                    self.dropped[k] = true;
                    self.path.push(Node {
                        kind: NodeKind::Dropoff,
                        request: r.id,
                        stop: r.dest,
                        size: r.size,
                        time_ref: r.release,
                        direct: r.direct,
                    });
                    self.dfs(r.dest, at + self.service, load - r.size, wait, placed + 1);
                    self.path.pop();
                    self.dropped[k] = false;
                }
                Some(_) => {}
            }
        }
    }
}

/// Minimum-wait route serving exactly `requests` plus the onboard riders,
/// over every precedence-valid order (onboard dropoffs may be reordered).
pub fn oracle_route_optimum(
    matrix: &TravelTimeMatrix,
    policy: DeviationPolicy,
    service: Seconds,
    vehicle: &VehicleState,
    requests: &[&Request],
) -> Option<(Vec<Node>, Seconds)> {
    let load: u32 = vehicle.onboard.iter().map(|r| r.size).sum();
    if load > vehicle.capacity {
        return None;
    }
    let mut s = Search {
        matrix,
        policy,
        service,
        vehicle,
        requests: requests.to_vec(),
        picked_at: vec![None; requests.len()],
        dropped: vec![false; requests.len()],
        onboard_done: vec![false; vehicle.onboard.len()],
        path: Vec::new(),
        best: None,
    };
    s.dfs(vehicle.depart_stop, vehicle.depart_time, load, 0, 0);
    s.best
}

/// Exact optimum of the static problem: every assignment of requests to a
/// vehicle or to "unserved", each vehicle taking its best order. With
/// `prune`, a vehicle may only take requests whose least possible wait on
/// it does not exceed their penalty. Ties go to the lexicographically
/// smallest assignment (unserved sorts last).
pub fn oracle_static_optimum(inst: &StaticInstance<'_>, prune: bool) -> Result<OracleSolution, OracleError> {
    let nv = inst.vehicles.len();
    let np = inst.requests.len();
    let onboard = inst.vehicles.iter().map(|v| v.onboard.len()).max().unwrap_or(0);
    if nv > MAX_VEHICLES || np > MAX_REQUESTS || onboard > MAX_ONBOARD {
        return Err(OracleError::TooLarge { vehicles: nv, requests: np, onboard });
    }

    // best[v][mask]: cheapest route of v serving exactly the requests in mask
    let masks = 1usize << np;
    let mut best: Vec<Vec<Option<(Vec<Node>, Seconds)>>> = Vec::with_capacity(nv);
    for v in &inst.vehicles {
        let allowed: usize = (0..np)
            .filter(|&i| {
                let r = &inst.requests[i];
                !prune
                    || (v.depart_time + inst.matrix.get(v.depart_stop, r.origin) - r.release) as f64
                        <= inst.penalties[i]
            })
            .fold(0, |m, i| m | (1 << i));
        let row = (0..masks)
            .map(|mask| {
                if mask & !allowed != 0 {
                    return None;
                }
                let set: Vec<&Request> = (0..np).filter(|i| mask >> i & 1 == 1).map(|i| &inst.requests[i]).collect();
                oracle_route_optimum(inst.matrix, inst.policy, inst.service, v, &set)
            })
            .collect();
        best.push(row);
    }

    let mut choice = vec![0usize; np];
    let mut winner: Option<(f64, Vec<usize>)> = None;
    loop {
        let mut vehicle_mask = vec![0usize; nv];
        for (i, &c) in choice.iter().enumerate() {
            if c < nv {
                vehicle_mask[c] |= 1 << i;
            }
        }
        let mut wait = 0;
        let mut ok = true;
        for v in 0..nv {
            match &best[v][vehicle_mask[v]] {
                Some((_, w)) => wait += w,
                None => {
                    ok = false;
                    break;
                }
            }
        }
        if ok {
            let dropped: f64 = (0..np).filter(|&i| choice[i] == nv).map(|i| inst.penalties[i]).sum();
            let cost = wait as f64 + dropped;
            if winner.as_ref().is_none_or(|(c, _)| cost < *c) {
                winner = Some((cost, choice.clone()));
            }
        }
        // next assignment in lexicographic order
        let mut i = np;
        loop {
            if i == 0 {
                let (objective, choice) = winner.expect("all-unserved assignment is always feasible");
                return Ok(assemble(inst, &best, objective, &choice));
            }
            i -= 1;
            if choice[i] < nv {
                choice[i] += 1;
                for c in &mut choice[i + 1..] {
                    *c = 0;
                }
                break;
            }
        }
    }
}

fn assemble(
    inst: &StaticInstance<'_>,
    best: &[Vec<Option<(Vec<Node>, Seconds)>>],
    objective: f64,
    choice: &[usize],
) -> OracleSolution {
    let nv = inst.vehicles.len();
    let mut routes = Vec::with_capacity(nv);
    let mut wait = 0;
    for (v, row) in best.iter().enumerate() {
        let mask = choice.iter().enumerate().filter(|(_, &c)| c == v).fold(0, |m, (i, _)| m | (1 << i));
        let (nodes, w) = row[mask].clone().expect("winning assignment is feasible");
        wait += w;
        routes.push(nodes);
    }
    let assignment = choice.iter().map(|&c| (c < nv).then_some(c)).collect();
    OracleSolution { objective, assignment, routes, wait }
}

/// Owned tiny instance for exhaustive cross-checks.
#[derive(Debug, Clone)]
pub struct MicroInstance {
    pub matrix: TravelTimeMatrix,
    pub policy: DeviationPolicy,
    pub service: Seconds,
    pub vehicles: Vec<VehicleState>,
    pub requests: Vec<Request>,
    pub penalties: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct MicroSpec {
    pub vehicles: (usize, usize),
    pub requests: (usize, usize),
    pub stops: (usize, usize),
    /// Chance that a vehicle starts with one rider onboard.
    pub onboard_prob: f64,
}

impl Default for MicroSpec {
    fn default() -> Self {
        MicroSpec { vehicles: (2, 3), requests: (3, 5), stops: (6, 8), onboard_prob: 0.3 }
    }
}

impl MicroInstance {
    /// Random instance with a metric matrix (shortest-path closure of random
    /// arc times). Every request is released before any vehicle departs, as
    /// in the rolling horizon where only already-batched requests are
    /// optimized; penalties follow the escalation law for random ages.
    pub fn generate(seed: u64, spec: MicroSpec) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(spec.stops.0..=spec.stops.1);
        let arcs: Vec<Seconds> = (0..n * n).map(|_| rng.random_range(30..=300)).collect();
        let matrix = TravelTimeMatrix::metric_closure(n, arcs).expect("closure is metric");
        let policy = DeviationPolicy::default();
        let now: Seconds = 600;
        let params = PenaltyParams { delta: rng.random_range(150.0..=420.0_f64).round(), epoch_len: 30 };

        let nv = rng.random_range(spec.vehicles.0..=spec.vehicles.1);
        let mut vehicles = Vec::with_capacity(nv);
        for id in 0..nv {
            let stop = rng.random_range(0..n);
            let depart = now + rng.random_range(0..=60);
            let capacity = rng.random_range(3..=4);
            let mut v = VehicleState::idle(id, stop, depart, capacity);
            if rng.random_bool(spec.onboard_prob) {
                let dest = rng.random_range(0..n);
                let size = rng.random_range(1..=2);
                v.onboard.push(OnboardRider {
                    request: 1000 + id,
                    picked_up_at: depart - rng.random_range(0..=60),
                    dest,
                    size,
                    direct: matrix.get(stop, dest),
                });
                v.load = size;
            }
            vehicles.push(v);
        }

        let np = rng.random_range(spec.requests.0..=spec.requests.1);
        let mut requests = Vec::with_capacity(np);
        let mut penalties = Vec::with_capacity(np);
        for id in 0..np {
            let origin = rng.random_range(0..n);
            let dest = rng.random_range(0..n);
            let release = now - rng.random_range(0..=400);
            let size = if rng.random_bool(0.8) { 1 } else { 2 };
            requests.push(Request::new(id, release, origin, dest, size, &matrix));
            penalties.push(params.penalty(now, release));
        }
        MicroInstance { matrix, policy, service: 0, vehicles, requests, penalties }
    }

    pub fn instance(&self) -> Result<StaticInstance<'_>, InstanceError> {
        StaticInstance::new(
            &self.matrix,
            self.policy,
            self.service,
            self.vehicles.clone(),
            self.requests.clone(),
            self.penalties.clone(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::OnboardRider;

    fn line(points: &[i64]) -> TravelTimeMatrix {
        TravelTimeMatrix::from_fn(points.len(), |i, j| (points[i] - points[j]).abs()).unwrap()
    }

    fn single(m: &TravelTimeMatrix, r: Request) -> OracleSolution {
        let inst = StaticInstance::new(
            m,
            DeviationPolicy::default(),
            0,
            vec![VehicleState::idle(0, 0, 0, 4)],
            vec![r],
            vec![420.0],
        )
        .unwrap();
        oracle_static_optimum(&inst, false).unwrap()
    }

    #[test]
    fn serve_beats_drop() {
        let m = line(&[0, 60, 300]);
        let s = single(&m, Request::new(0, 0, 1, 2, 1, &m));
        assert_eq!(s.objective, 60.0);
        assert_eq!(s.assignment, vec![Some(0)]);
    }

    #[test]
    fn drop_beats_long_wait() {
        let m = line(&[0, 500, 600]);
        let s = single(&m, Request::new(0, 0, 1, 2, 1, &m));
        assert_eq!(s.objective, 420.0);
        assert_eq!(s.assignment, vec![None]);
    }

    #[test]
    fn tight_beta_makes_set_infeasible() {
        // riders go opposite ways from the same origin: sharing makes one of
        // them ride 300 > max(1.5 * 100, 0 + 100), serving them one after the
        // other overruns the shift
        let m = line(&[0, 100, 0, 200]);
        let mut v = VehicleState::idle(0, 1, 0, 4);
        v.shift_end = 250;
        let a = Request::new(0, 0, 1, 2, 1, &m);
        let b = Request::new(1, 0, 1, 3, 1, &m);
        let p = DeviationPolicy { alpha: 1.5, beta: 0 };
        assert!(oracle_route_optimum(&m, p, 0, &v, &[&a, &b]).is_none());
        assert!(oracle_route_optimum(&m, p, 0, &v, &[&a]).is_some());
    }

    #[test]
    fn reorders_onboard_riders() {
        let m = line(&[0, 100, 200]);
        let mut v = VehicleState::idle(0, 0, 0, 4);
        // incumbent order far-then-near; the oracle may flip it
        for (req, dest) in [(8, 2), (9, 1)] {
            v.onboard.push(OnboardRider { request: req, picked_up_at: 0, dest, size: 1, direct: 1000 });
        }
        v.load = 2;
        let (nodes, wait) = oracle_route_optimum(&m, DeviationPolicy::default(), 0, &v, &[]).unwrap();
        assert_eq!(wait, 0);
        assert_eq!(nodes.len(), 2);
    }

    #[test]
    fn refuses_large_instances() {
        let m = line(&[0, 1]);
        let reqs: Vec<Request> = (0..7).map(|i| Request::new(i, 0, 0, 1, 1, &m)).collect();
        let inst = StaticInstance::new(
            &m,
            DeviationPolicy::default(),
            0,
            vec![VehicleState::idle(0, 0, 0, 4)],
            reqs,
            vec![1.0; 7],
        )
        .unwrap();
        assert!(matches!(oracle_static_optimum(&inst, true), Err(OracleError::TooLarge { .. })));
    }
}
