//! Route generation for the master problem.
//!
//! Columns are produced in waves of fixed size `k`. Size-one routes come from
//! exhaustive insertion of a request into the vehicle's onboard dropoff
//! sequence; larger routes extend each vehicle's few best routes of the
//! previous size (the beam) by one more request, again by exhaustive
//! insertion. Vehicles are visited by decreasing dual `sigma` and claim the
//! requests of every negative column they find, so columns within a wave
//! never overlap.

use std::collections::HashMap;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::colgen::StaticInstance;
use crate::model::{Request, RequestId, Seconds, TravelTimeMatrix, VehicleId, VehicleState};
use crate::schedule::{evaluate, feasible_wait, Node, Route, Schedule, SchedulingContext};

/// A column is only worth adding if its reduced cost is below this.
pub const REDUCED_COST_EPS: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualValues {
    /// Per request row of the master, in instance order.
    pub pi: Vec<f64>,
    /// Per vehicle.
    pub sigma: Vec<f64>,
}

impl DualValues {
    /// Duals of a master that holds seed columns only.
    pub fn initial(penalties: &[f64], n_vehicles: usize) -> Self {
        DualValues { pi: penalties.to_vec(), sigma: vec![0.0; n_vehicles] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub vehicle: VehicleId,
    pub route: Route,
    pub schedule: Schedule,
    /// Total pickup wait of the route.
    pub cost: f64,
    /// Requests picked up on the route, sorted by id.
    pub served: Vec<RequestId>,
}

impl Column {
    pub fn new(ctx: &SchedulingContext<'_>, vehicle: &VehicleState, nodes: Vec<Node>) -> Self {
        let route = Route { vehicle: vehicle.id, nodes };
        let schedule = evaluate(ctx, vehicle, &route.nodes);
        debug_assert!(schedule.feasible());
        Column {
            vehicle: vehicle.id,
            served: route.served(),
            cost: schedule.wait_cost as f64,
            route,
            schedule,
        }
    }

    pub fn seed(ctx: &SchedulingContext<'_>, vehicle: &VehicleState) -> Self {
        Self::new(ctx, vehicle, Route::seed(vehicle).nodes)
    }

    pub fn reduced_cost(&self, inst: &StaticInstance<'_>, duals: &DualValues) -> f64 {
        let pi: f64 = self.served.iter().map(|&r| duals.pi[inst.local(r)]).sum();
        self.cost - pi - duals.sigma[self.vehicle]
    }
}

/// Requests that may be picked up by `vehicle`: a rider whose earliest
/// possible wait on this vehicle already exceeds her penalty is never served
/// by it in an optimal solution. Returns indices into `requests`.
pub fn prune_requests(
    matrix: &TravelTimeMatrix,
    vehicle: &VehicleState,
    requests: &[Request],
    penalties: &[f64],
) -> Vec<usize> {
    requests
        .iter()
        .zip(penalties)
        .enumerate()
        .filter(|(_, (r, &p))| {
            let least = vehicle.depart_time + matrix.get(vehicle.depart_stop, r.origin) - r.release;
            least as f64 <= p
        })
        .map(|(i, _)| i)
        .collect()
}

/// Cheapest feasible insertion of `request`'s pickup and dropoff into
/// `base`, trying every position pair. Ties keep the earliest positions.
pub fn insert_request(
    ctx: &SchedulingContext<'_>,
    vehicle: &VehicleState,
    base: &[Node],
    request: &Request,
) -> Option<(Vec<Node>, Seconds)> {
    let n = base.len();
    let pick = Node::pickup(request);
    let drop = Node::dropoff(request);
    let mut buf: Vec<Node> = Vec::with_capacity(n + 2);
    let mut best: Option<(usize, usize, Seconds)> = None;
    for p in 0..=n {
        for d in p..=n {
            buf.clear();
            buf.extend_from_slice(&base[..p]);
            buf.push(pick);
            buf.extend_from_slice(&base[p..d]);
            buf.push(drop);
            buf.extend_from_slice(&base[d..]);
            if let Some(w) = feasible_wait(ctx, vehicle, &buf) {
                if best.is_none_or(|(_, _, bw)| w < bw) {
                    best = Some((p, d, w));
                }
            }
        }
    }
    best.map(|(p, d, w)| {
        let mut nodes = Vec::with_capacity(n + 2);
        nodes.extend_from_slice(&base[..p]);
        nodes.push(pick);
        nodes.extend_from_slice(&base[p..d]);
        nodes.push(drop);
        nodes.extend_from_slice(&base[d..]);
        (nodes, w)
    })
}

/// A priced partial route for one vehicle.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub vehicle: VehicleId,
    /// Local request indices, sorted.
    pub requests: Vec<usize>,
    pub nodes: Vec<Node>,
    pub wait: Seconds,
    pub reduced_cost: f64,
}

fn better(a: &Candidate, b: &Candidate) -> bool {
    a.reduced_cost
        .total_cmp(&b.reduced_cost)
        .then_with(|| a.requests.cmp(&b.requests))
        .then_with(|| a.nodes.cmp(&b.nodes))
        .is_lt()
}

/// Best route serving exactly `set` (local indices) plus the onboard riders.
/// Size one is exhaustive over insertion positions; larger sets extend the
/// best route of every subset one element smaller. Past the deadline the
/// best route found so far is returned.
pub fn best_route_for_set(
    inst: &StaticInstance<'_>,
    vehicle: VehicleId,
    set: &[usize],
    duals: &DualValues,
    deadline: Option<Instant>,
) -> Option<(Route, Seconds, f64)> {
    let veh = &inst.vehicles[vehicle];
    let ctx = inst.ctx();
    let mut sorted = set.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    assert!(!sorted.is_empty(), "request set must not be empty");

    let mut memo: HashMap<Vec<usize>, Option<(Vec<Node>, Seconds)>> = HashMap::new();
    memo.insert(Vec::new(), Some((Route::seed(veh).nodes, 0)));
    let best = subset_route(inst, &ctx, veh, &sorted, &mut memo, deadline)?;
    let pi: f64 = sorted.iter().map(|&i| duals.pi[i]).sum();
    let reduced = best.1 as f64 - pi - duals.sigma[vehicle];
    Some((Route { vehicle, nodes: best.0 }, best.1, reduced))
}

fn subset_route(
    inst: &StaticInstance<'_>,
    ctx: &SchedulingContext<'_>,
    veh: &VehicleState,
    set: &[usize],
    memo: &mut HashMap<Vec<usize>, Option<(Vec<Node>, Seconds)>>,
    deadline: Option<Instant>,
) -> Option<(Vec<Node>, Seconds)> {
    if let Some(hit) = memo.get(set) {
        return hit.clone();
    }
    let mut best: Option<(Vec<Node>, Seconds)> = None;
    for (k, &last) in set.iter().enumerate() {
        if best.is_some() && deadline.is_some_and(|d| Instant::now() >= d) {
            break;
        }
        let rest: Vec<usize> = set.iter().enumerate().filter(|&(j, _)| j != k).map(|(_, &r)| r).collect();
        let Some((base, _)) = subset_route(inst, ctx, veh, &rest, memo, deadline) else { continue };
        if let Some((nodes, w)) = insert_request(ctx, veh, &base, &inst.requests[last]) {
            if best.as_ref().is_none_or(|(bn, bw)| w < *bw || (w == *bw && nodes < *bn)) {
                best = Some((nodes, w));
            }
        }
    }
    memo.insert(set.to_vec(), best.clone());
    best
}

/// Result of one call to [`Pricer::generate_columns`].
#[derive(Debug, Clone, Default)]
pub struct ColumnBatch {
    pub columns: Vec<Column>,
    /// Size of the wave that produced the columns.
    pub size: usize,
    pub deadline_hit: bool,
}

pub struct Pricer<'i, 'm> {
    inst: &'i StaticInstance<'m>,
    /// Local request indices each vehicle may pick up.
    admissible: Vec<Vec<usize>>,
    /// Routes of each size kept per vehicle as bases for the next size.
    beam: usize,
}

impl<'i, 'm> Pricer<'i, 'm> {
    /// Pricer that extends only the single best route of each size.
    pub fn new(inst: &'i StaticInstance<'m>, prune: bool) -> Self {
        Self::with_beam(inst, prune, 1)
    }

    pub fn with_beam(inst: &'i StaticInstance<'m>, prune: bool, beam: usize) -> Self {
        let admissible = inst
            .vehicles
            .iter()
            .map(|v| {
                if prune {
                    prune_requests(inst.matrix, v, &inst.requests, &inst.penalties)
                } else {
                    (0..inst.requests.len()).collect()
                }
            })
            .collect();
        Pricer { inst, admissible, beam: beam.max(1) }
    }

    pub fn admissible(&self, vehicle: VehicleId) -> &[usize] {
        &self.admissible[vehicle]
    }

    /// Vehicles by decreasing sigma. Among equal sigmas the vehicle with the
    /// cheaper best candidate goes first, then the lower id. Sigmas are
    /// compared at 1e-6 resolution to absorb LP round-off.
    fn vehicle_order(&self, duals: &DualValues, best: &[Option<f64>]) -> Vec<VehicleId> {
        let key = |v: VehicleId| (duals.sigma[v] * 1e6).round() as i64;
        let mut order: Vec<VehicleId> = (0..self.inst.vehicles.len()).collect();
        order.sort_by(|&a, &b| {
            key(b)
                .cmp(&key(a))
                .then_with(|| best[a].unwrap_or(f64::INFINITY).total_cmp(&best[b].unwrap_or(f64::INFINITY)))
                .then(a.cmp(&b))
        });
        order
    }

    /// One wave of size `k`. `bases[v]` must hold vehicle `v`'s best routes
    /// of size `k - 1` (ignored for `k == 1`); on return it holds the best
    /// routes of size `k` found for `v`, negative or not, best first.
    pub fn generate_sized_columns(
        &self,
        k: usize,
        duals: &DualValues,
        bases: &mut [Vec<Candidate>],
        deadline: Option<Instant>,
    ) -> (Vec<Column>, bool) {
        let inst = self.inst;
        let ctx = inst.ctx();
        let n_vehicles = inst.vehicles.len();
        let expired = || deadline.is_some_and(|d| Instant::now() >= d);
        let seeds: Vec<Candidate> = inst
            .vehicles
            .iter()
            .map(|v| Candidate {
                vehicle: v.id,
                requests: Vec::new(),
                nodes: Route::seed(v).nodes,
                wait: 0,
                reduced_cost: 0.0,
            })
            .collect();

        // Every (vehicle, base, request) extension is independent of the
        // claims made during the wave, so evaluate them all up front.
        let jobs: Vec<(&Candidate, usize)> = (0..n_vehicles)
            .flat_map(|v| {
                let from: &[Candidate] = if k == 1 { std::slice::from_ref(&seeds[v]) } else { &bases[v] };
                let adm = &self.admissible[v];
                from.iter().flat_map(move |base| {
                    adm.iter().copied().filter(move |r| !base.requests.contains(r)).map(move |r| (base, r))
                })
            })
            .collect();
        let evaluated: Vec<Option<Candidate>> = jobs
            .par_iter()
            .map(|&(base, r)| {
                if expired() {
                    return None;
                }
                let v = base.vehicle;
                let (nodes, wait) = insert_request(&ctx, &inst.vehicles[v], &base.nodes, &inst.requests[r])?;
                let mut requests = base.requests.clone();
                requests.push(r);
                requests.sort_unstable();
                let pi: f64 = requests.iter().map(|&i| duals.pi[i]).sum();
                let reduced_cost = wait as f64 - pi - duals.sigma[v];
                Some(Candidate { vehicle: v, requests, nodes, wait, reduced_cost })
            })
            .collect();
        let deadline_hit = expired();

        // best candidate per (vehicle, request set), then sorted best first
        let mut per_vehicle: Vec<Vec<Candidate>> = vec![Vec::new(); n_vehicles];
        for cand in evaluated.into_iter().flatten() {
            per_vehicle[cand.vehicle].push(cand);
        }
        for cands in &mut per_vehicle {
            cands.sort_by(|a, b| {
                a.requests.cmp(&b.requests).then_with(|| {
                    if better(a, b) {
                        std::cmp::Ordering::Less
                    } else if better(b, a) {
                        std::cmp::Ordering::Greater
                    } else {
                        std::cmp::Ordering::Equal
                    }
                })
            });
            cands.dedup_by(|later, first| later.requests == first.requests);
            cands.sort_by(|a, b| {
                if better(a, b) {
                    std::cmp::Ordering::Less
                } else if better(b, a) {
                    std::cmp::Ordering::Greater
                } else {
                    std::cmp::Ordering::Equal
                }
            });
        }

        let mut claimed = vec![false; inst.requests.len()];
        let mut columns = Vec::new();
        let best_rc: Vec<Option<f64>> = per_vehicle.iter().map(|c| c.first().map(|c| c.reduced_cost)).collect();
        for v in self.vehicle_order(duals, &best_rc) {
            let cands = std::mem::take(&mut per_vehicle[v]);
            let best = cands.iter().find(|c| c.requests.iter().all(|&r| !claimed[r]));
            if let Some(c) = best {
                if c.reduced_cost < -REDUCED_COST_EPS {
                    for &r in &c.requests {
                        claimed[r] = true;
                    }
                    columns.push(Column::new(&ctx, &inst.vehicles[v], c.nodes.clone()));
                }
            }
            bases[v] = cands.into_iter().take(self.beam).collect();
        }
        (columns, deadline_hit)
    }

    /// Waves of increasing size until one yields a negative column.
    pub fn generate_columns(&self, duals: &DualValues, deadline: Option<Instant>) -> ColumnBatch {
        let n_vehicles = self.inst.vehicles.len();
        let mut bases: Vec<Vec<Candidate>> = vec![Vec::new(); n_vehicles];
        for k in 1..=self.inst.requests.len() {
            let (columns, deadline_hit) = self.generate_sized_columns(k, duals, &mut bases, deadline);
            if !columns.is_empty() || deadline_hit {
                return ColumnBatch { columns, size: k, deadline_hit };
            }
            if bases.iter().all(Vec::is_empty) {
                break;
            }
        }
        ColumnBatch::default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::DeviationPolicy;

    fn line(points: &[i64]) -> TravelTimeMatrix {
        TravelTimeMatrix::from_fn(points.len(), |i, j| (points[i] - points[j]).abs()).unwrap()
    }

    fn instance<'a>(m: &'a TravelTimeMatrix, vehicles: Vec<VehicleState>, requests: Vec<Request>) -> StaticInstance<'a> {
        let penalties = vec![420.0; requests.len()];
        StaticInstance::new(m, DeviationPolicy::default(), 0, vehicles, requests, penalties).unwrap()
    }

    #[test]
    fn prune_examples() {
        let m = line(&[0, 50, 10]);
        let v = VehicleState::idle(0, 0, 100, 4);
        let r = Request::new(0, 0, 1, 2, 1, &m);
        assert!(prune_requests(&m, &v, &[r.clone()], &[120.0]).is_empty());
        assert_eq!(prune_requests(&m, &v, &[r], &[150.0]), vec![0]);
        let v0 = VehicleState::idle(0, 0, 0, 4);
        assert_eq!(prune_requests(&m, &v0, &[Request::new(0, 0, 2, 1, 1, &m)], &[420.0]), vec![0]);
    }

    #[test]
    fn single_request_reduced_cost() {
        // depart 0, origin 120 away, release 60: wait 60
        let m = line(&[0, 120, 420]);
        let inst = instance(&m, vec![VehicleState::idle(0, 0, 0, 4)], vec![Request::new(0, 60, 1, 2, 1, &m)]);
        let duals = DualValues { pi: vec![100.0], sigma: vec![10.0] };
        let (route, wait, rc) = best_route_for_set(&inst, 0, &[0], &duals, None).unwrap();
        assert_eq!(wait, 60);
        assert_eq!(rc, -50.0);
        assert_eq!(route.nodes.len(), 2);
    }

    #[test]
    fn unreachable_request_has_no_route() {
        let m = line(&[0, 100, 5000]);
        let mut v = VehicleState::idle(0, 0, 0, 4);
        v.shift_end = 1000;
        let inst = instance(&m, vec![v], vec![Request::new(0, 0, 1, 2, 1, &m)]);
        let duals = DualValues::initial(&inst.penalties, 1);
        assert!(best_route_for_set(&inst, 0, &[0], &duals, None).is_none());
    }

    #[test]
    fn no_negative_column_means_empty_wave() {
        let m = line(&[0, 100, 200]);
        let inst = instance(&m, vec![VehicleState::idle(0, 0, 0, 4)], vec![Request::new(0, 0, 1, 2, 1, &m)]);
        let pricer = Pricer::new(&inst, true);
        // pi below the wait of 100
        let duals = DualValues { pi: vec![50.0], sigma: vec![0.0] };
        let mut bases = vec![Vec::new()];
        let (cols, _) = pricer.generate_sized_columns(1, &duals, &mut bases, None);
        assert!(cols.is_empty());
        assert_eq!(bases[0][0].wait, 100);
        assert!(pricer.generate_columns(&duals, None).columns.is_empty());
    }

    #[test]
    fn larger_sigma_claims_shared_request() {
        let m = line(&[0, 10, 20]);
        let vehicles = vec![VehicleState::idle(0, 0, 0, 4), VehicleState::idle(1, 0, 0, 4)];
        let inst = instance(&m, vehicles, vec![Request::new(0, 0, 1, 2, 1, &m)]);
        let pricer = Pricer::new(&inst, true);
        let duals = DualValues { pi: vec![400.0], sigma: vec![-5.0, -1.0] };
        let mut bases = vec![Vec::new(), Vec::new()];
        let (cols, _) = pricer.generate_sized_columns(1, &duals, &mut bases, None);
        assert_eq!(cols.len(), 1);
        assert_eq!(cols[0].vehicle, 1);
        assert!(cols[0].reduced_cost(&inst, &duals) < 0.0);
    }

    #[test]
    fn first_wave_exits_early() {
        let m = line(&[0, 10, 20, 30]);
        let inst = instance(
            &m,
            vec![VehicleState::idle(0, 0, 0, 4)],
            vec![Request::new(0, 0, 1, 2, 1, &m), Request::new(1, 0, 2, 3, 1, &m)],
        );
        let pricer = Pricer::new(&inst, true);
        let batch = pricer.generate_columns(&DualValues::initial(&inst.penalties, 1), None);
        assert_eq!(batch.size, 1);
        assert_eq!(batch.columns.len(), 1);
    }

    #[test]
    fn equal_sigma_goes_to_cheaper_vehicle() {
        let m = line(&[0, 10, 20, 30]);
        // vehicle 1 sits on the origin, vehicle 0 is 30 s away
        let vehicles = vec![VehicleState::idle(0, 0, 0, 4), VehicleState::idle(1, 3, 0, 4)];
        let inst = instance(&m, vehicles, vec![Request::new(0, 0, 3, 1, 1, &m)]);
        let pricer = Pricer::new(&inst, true);
        let duals = DualValues::initial(&inst.penalties, 2);
        let mut bases = vec![Vec::new(), Vec::new()];
        let (cols, _) = pricer.generate_sized_columns(1, &duals, &mut bases, None);
        assert_eq!(cols.len(), 1);
        assert_eq!((cols[0].vehicle, cols[0].cost), (1, 0.0));
    }
}
