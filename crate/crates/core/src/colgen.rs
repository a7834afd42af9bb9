//! One static dispatch problem and its column-generation solve: alternate
//! pricing waves with restricted-master re-solves until no negative column
//! is found, then select integral routes over the generated columns.

use std::fmt;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::master::MasterProblem;
use crate::model::{DeviationPolicy, Request, RequestId, Seconds, TravelTimeMatrix, VehicleId, VehicleState};
use crate::pricing::{Column, DualValues, Pricer};
use crate::schedule::{Route, Schedule, SchedulingContext};

#[derive(Debug, Clone, PartialEq)]
pub enum InstanceError {
    VehicleOrder { position: usize, id: VehicleId },
    Vehicle(String),
    UnsortedRequests,
    PenaltyCount { requests: usize, penalties: usize },
    InfeasibleSeed(VehicleId),
    UnknownStop(usize),
}

impl fmt::Display for InstanceError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InstanceError::VehicleOrder { position, id } => {
                write!(f, "vehicle at position {position} has id {id}; ids must equal positions")
            }
            InstanceError::Vehicle(msg) => f.write_str(msg),
            InstanceError::UnsortedRequests => f.write_str("requests must be sorted by unique id"),
            InstanceError::PenaltyCount { requests, penalties } => {
                write!(f, "{requests} requests but {penalties} penalties")
            }
            InstanceError::InfeasibleSeed(v) => {
                write!(f, "vehicle {v} cannot drop off its onboard riders in incumbent order")
            }
            InstanceError::UnknownStop(s) => write!(f, "stop {s} is outside the travel-time matrix"),
        }
    }
}

impl std::error::Error for InstanceError {}

/// Inputs of one static solve. Vehicle ids equal their positions; requests
/// are sorted by id and `penalties` is parallel to `requests`.
#[derive(Debug, Clone)]
pub struct StaticInstance<'m> {
    pub matrix: &'m TravelTimeMatrix,
    pub policy: DeviationPolicy,
    pub service: Seconds,
    pub vehicles: Vec<VehicleState>,
    pub requests: Vec<Request>,
    pub penalties: Vec<f64>,
}

impl<'m> StaticInstance<'m> {
    pub fn new(
        matrix: &'m TravelTimeMatrix,
        policy: DeviationPolicy,
        service: Seconds,
        vehicles: Vec<VehicleState>,
        requests: Vec<Request>,
        penalties: Vec<f64>,
    ) -> Result<Self, InstanceError> {
        for (position, v) in vehicles.iter().enumerate() {
            if v.id != position {
                return Err(InstanceError::VehicleOrder { position, id: v.id });
            }
            v.check().map_err(InstanceError::Vehicle)?;
            let stops = std::iter::once(v.depart_stop).chain(v.onboard.iter().map(|r| r.dest));
            if let Some(s) = stops.into_iter().find(|&s| s >= matrix.n()) {
                return Err(InstanceError::UnknownStop(s));
            }
        }
        if requests.windows(2).any(|w| w[0].id >= w[1].id) {
            return Err(InstanceError::UnsortedRequests);
        }
        if let Some(r) = requests.iter().find(|r| r.origin >= matrix.n() || r.dest >= matrix.n()) {
            return Err(InstanceError::UnknownStop(r.origin.max(r.dest)));
        }
        if penalties.len() != requests.len() {
            return Err(InstanceError::PenaltyCount { requests: requests.len(), penalties: penalties.len() });
        }
        let inst = StaticInstance { matrix, policy, service, vehicles, requests, penalties };
        let ctx = inst.ctx();
        for v in &inst.vehicles {
            if !crate::schedule::evaluate(&ctx, v, &Route::seed(v).nodes).feasible() {
                return Err(InstanceError::InfeasibleSeed(v.id));
            }
        }
        Ok(inst)
    }

    pub fn ctx(&self) -> SchedulingContext<'m> {
        SchedulingContext { matrix: self.matrix, policy: self.policy, service: self.service }
    }

    /// Position of a request id in `requests`.
    pub fn local(&self, id: RequestId) -> usize {
        self.requests
            .binary_search_by_key(&id, |r| r.id)
            .unwrap_or_else(|_| panic!("request {id} not in instance"))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    pub prune: bool,
    /// Wall-clock budget for the whole solve; `None` runs to completion.
    pub budget: Option<Duration>,
    /// Share of the budget granted to column generation; the final integer
    /// selection gets the rest.
    pub cg_share: f64,
    pub max_iterations: usize,
    pub node_limit: usize,
    /// Routes kept per vehicle and size when extending to the next size.
    pub beam: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { prune: true, budget: None, cg_share: 0.8, max_iterations: 10_000, node_limit: 200_000, beam: 8 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StaticSolution {
    /// Selected route and schedule per vehicle.
    pub routes: Vec<Route>,
    pub schedules: Vec<Schedule>,
    /// Serving vehicle per request (instance order), `None` if unserved.
    pub assignment: Vec<Option<VehicleId>>,
    pub objective: f64,
    /// Objective of the last restricted-master LP.
    pub lp_bound: f64,
    /// RMP objective after every solve, in order.
    pub rmp_trace: Vec<f64>,
    pub rmp_monotone: bool,
    /// Generated columns, seeds excluded.
    pub columns_generated: usize,
    pub iterations: usize,
    pub deadline_hit: bool,
    pub proven_optimal: bool,
}

/// Seeds-only solution: nobody new is served.
pub fn idle_solution(inst: &StaticInstance<'_>) -> StaticSolution {
    let ctx = inst.ctx();
    let routes: Vec<Route> = inst.vehicles.iter().map(Route::seed).collect();
    let schedules = inst.vehicles.iter().zip(&routes).map(|(v, r)| crate::schedule::evaluate(&ctx, v, &r.nodes)).collect();
    let objective = inst.penalties.iter().sum();
    StaticSolution {
        routes,
        schedules,
        assignment: vec![None; inst.requests.len()],
        objective,
        lp_bound: objective,
        rmp_trace: vec![objective],
        rmp_monotone: true,
        columns_generated: 0,
        iterations: 0,
        deadline_hit: false,
        proven_optimal: true,
    }
}

pub fn solve_static(inst: &StaticInstance<'_>, opts: &SolveOptions) -> StaticSolution {
    let start = Instant::now();
    let cg_deadline = opts.budget.map(|b| start + b.mul_f64(opts.cg_share.clamp(0.0, 1.0)));
    let final_deadline = opts.budget.map(|b| start + b);
    let ctx = inst.ctx();

    let seeds: Vec<Column> = inst.vehicles.iter().map(|v| Column::seed(&ctx, v)).collect();
    let ids: Vec<RequestId> = inst.requests.iter().map(|r| r.id).collect();
    let mut master = MasterProblem::new(ids, inst.penalties.clone(), seeds);
    let pricer = Pricer::with_beam(inst, opts.prune, opts.beam);

    let mut rmp = master.solve_rmp();
    let mut trace = vec![rmp.objective];
    let mut monotone = true;
    let mut generated = 0;
    let mut iterations = 0;
    let mut deadline_hit = false;

    while iterations < opts.max_iterations {
        if cg_deadline.is_some_and(|d| Instant::now() >= d) {
            deadline_hit = true;
            break;
        }
        let duals: &DualValues = rmp.duals.as_ref().expect("LP solve returns duals");
        let batch = pricer.generate_columns(duals, cg_deadline);
        deadline_hit |= batch.deadline_hit;
        let mut added = 0;
        for col in batch.columns {
            if master.add_column(col) {
                added += 1;
            }
        }
        if added == 0 {
            break;
        }
        generated += added;
        iterations += 1;
        let next = master.solve_rmp();
        let prev = rmp.objective;
        if next.objective > prev + 1e-7 * prev.abs().max(1.0) {
            monotone = false;
        }
        debug_assert!(monotone, "RMP objective increased from {prev} to {}", next.objective);
        trace.push(next.objective);
        rmp = next;
        if deadline_hit {
            break;
        }
    }

    let lp_bound = rmp.objective;
    let mut fin = master.solve_final(opts.node_limit, final_deadline);
    // anytime fallback: a conflict-free rounding of the LP may beat the
    // incumbent when branching was cut short
    if !fin.proven_optimal {
        if let Some((sel, sol)) = round_lp(&master, &rmp.y) {
            if sol.objective < fin.solution.objective - 1e-9 {
                fin.selected = sel;
                fin.solution = sol;
            }
        }
    }
    if fin.solution.objective < lp_bound - 1e-6 * lp_bound.abs().max(1.0) {
        debug_assert!(false, "integral objective {} below LP bound {lp_bound}", fin.solution.objective);
    }

    let mut assignment = vec![None; inst.requests.len()];
    let mut routes = Vec::with_capacity(inst.vehicles.len());
    let mut schedules = Vec::with_capacity(inst.vehicles.len());
    for (v, &c) in fin.selected.iter().enumerate() {
        let col = &master.columns()[c];
        debug_assert_eq!(col.vehicle, v);
        for &r in &col.served {
            assignment[inst.local(r)] = Some(v);
        }
        routes.push(col.route.clone());
        schedules.push(col.schedule.clone());
    }

    StaticSolution {
        routes,
        schedules,
        assignment,
        objective: fin.solution.objective,
        lp_bound,
        rmp_trace: trace,
        rmp_monotone: monotone,
        columns_generated: generated,
        iterations,
        deadline_hit: deadline_hit || !fin.proven_optimal,
        proven_optimal: fin.proven_optimal,
    }
}

/// Greedy rounding: vehicles take their heaviest LP column that does not
/// overlap columns already taken, falling back to the seed.
fn round_lp(master: &MasterProblem, y: &[f64]) -> Option<(Vec<usize>, crate::master::MasterSolution)> {
    let cols = master.columns();
    let mut taken = std::collections::HashSet::new();
    let mut selected = Vec::with_capacity(master.n_vehicles());
    for v in 0..master.n_vehicles() {
        let mut mine: Vec<usize> = (0..cols.len()).filter(|&c| cols[c].vehicle == v).collect();
        mine.sort_by(|&a, &b| y[b].total_cmp(&y[a]).then(a.cmp(&b)));
        let pick = mine
            .iter()
            .copied()
            .find(|&c| cols[c].served.iter().all(|r| !taken.contains(r)))
            .unwrap_or(mine[0]);
        taken.extend(cols[pick].served.iter().copied());
        selected.push(pick);
    }
    master.evaluate_selection(&selected).map(|s| (selected, s))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(points: &[i64]) -> TravelTimeMatrix {
        TravelTimeMatrix::from_fn(points.len(), |i, j| (points[i] - points[j]).abs()).unwrap()
    }

    #[test]
    fn serves_cheap_request() {
        let m = line(&[0, 60, 300]);
        let inst = StaticInstance::new(
            &m,
            DeviationPolicy::default(),
            0,
            vec![VehicleState::idle(0, 0, 0, 4)],
            vec![Request::new(0, 0, 1, 2, 1, &m)],
            vec![420.0],
        )
        .unwrap();
        let sol = solve_static(&inst, &SolveOptions::default());
        assert_eq!(sol.assignment, vec![Some(0)]);
        assert_eq!(sol.objective, 60.0);
        assert!(sol.rmp_monotone);
        assert!(sol.proven_optimal);
    }

    #[test]
    fn drops_expensive_request() {
        let m = line(&[0, 500, 600]);
        let inst = StaticInstance::new(
            &m,
            DeviationPolicy::default(),
            0,
            vec![VehicleState::idle(0, 0, 0, 4)],
            vec![Request::new(0, 0, 1, 2, 1, &m)],
            vec![420.0],
        )
        .unwrap();
        let sol = solve_static(&inst, &SolveOptions::default());
        assert_eq!(sol.assignment, vec![None]);
        assert_eq!(sol.objective, 420.0);
        assert_eq!(sol.columns_generated, 0);
    }

    #[test]
    fn rejects_malformed_instances() {
        let m = line(&[0, 10]);
        let r = |id| Request::new(id, 0, 0, 1, 1, &m);
        let p = DeviationPolicy::default();
        assert!(matches!(
            StaticInstance::new(&m, p, 0, vec![VehicleState::idle(3, 0, 0, 4)], vec![], vec![]),
            Err(InstanceError::VehicleOrder { .. })
        ));
        assert_eq!(
            StaticInstance::new(&m, p, 0, vec![], vec![r(2), r(1)], vec![1.0, 1.0]).unwrap_err(),
            InstanceError::UnsortedRequests
        );
        assert!(matches!(
            StaticInstance::new(&m, p, 0, vec![], vec![r(1)], vec![]),
            Err(InstanceError::PenaltyCount { .. })
        ));
    }
}
