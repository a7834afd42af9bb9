//! Rolling-horizon dispatch.
//!
//! Time is cut into epochs of `epoch_len` seconds. Requests released during
//! epoch `tau - 1` are batched and optimized in epoch `tau`, together with
//! every earlier request not yet picked up. The plan computed in epoch `tau`
//! takes effect at `(tau + 1) * epoch_len`; each vehicle keeps everything it
//! does up to its first stop at or after that instant, and the rest of its
//! route is re-optimized.

use std::fmt;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::colgen::{solve_static, InstanceError, SolveOptions, StaticInstance};
use crate::model::{
    DeviationPolicy, OnboardRider, PenaltyParams, Request, RequestId, Seconds, StopId, TravelTimeMatrix,
    VehicleId, VehicleState,
};
use crate::oracle::{oracle_static_optimum, OracleError};
use crate::schedule::{evaluate, Node, NodeKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolverKind {
    ColumnGeneration,
    /// Exhaustive search; micro traces only.
    Oracle,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochConfig {
    pub epoch_len: Seconds,
    /// Wall-clock budget of one epoch's solve; `None` lets every solve finish.
    pub deadline: Option<Duration>,
    pub penalty: PenaltyParams,
    pub deviation: DeviationPolicy,
    pub service: Seconds,
    pub solver: SolverKind,
    pub prune: bool,
    pub beam: usize,
    /// Safety stop for runaway simulations.
    pub max_epochs: i64,
}

impl Default for EpochConfig {
    fn default() -> Self {
        EpochConfig {
            epoch_len: 30,
            deadline: None,
            penalty: PenaltyParams::default(),
            deviation: DeviationPolicy::default(),
            service: 0,
            solver: SolverKind::ColumnGeneration,
            prune: true,
            beam: SolveOptions::default().beam,
            max_epochs: 1_000_000,
        }
    }
}

impl EpochConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.epoch_len <= 0 {
            return Err(SimError::Config(format!("epoch length must be positive, got {}", self.epoch_len)));
        }
        if self.penalty.epoch_len != self.epoch_len {
            return Err(SimError::Config("penalty epoch length differs from the epoch length".into()));
        }
        if !(self.penalty.delta > 0.0) {
            return Err(SimError::Config("delta must be positive".into()));
        }
        if self.deviation.alpha < 1.0 || self.deviation.beta < 0 {
            return Err(SimError::Config("deviation policy needs alpha >= 1 and beta >= 0".into()));
        }
        if self.service < 0 {
            return Err(SimError::Config("service time must be non-negative".into()));
        }
        if let Some(d) = self.deadline {
            if d > Duration::from_secs(self.epoch_len as u64) {
                return Err(SimError::Config("deadline exceeds the epoch length".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug)]
pub enum SimError {
    Config(String),
    Input(String),
    OutOfEpoch { request: RequestId, release: Seconds, epoch: i64 },
    Instance(InstanceError),
    Oracle(OracleError),
    EpochLimit(i64),
}

impl fmt::Display for SimError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SimError::Config(m) => write!(f, "invalid configuration: {m}"),
            SimError::Input(m) => write!(f, "invalid input: {m}"),
            SimError::OutOfEpoch { request, release, epoch } => {
                write!(f, "request {request} released at {release} does not belong to epoch {epoch}")
            }
            SimError::Instance(e) => write!(f, "static instance rejected: {e}"),
            SimError::Oracle(e) => write!(f, "oracle solver: {e}"),
            SimError::EpochLimit(n) => write!(f, "simulation did not finish within {n} epochs"),
        }
    }
}

impl std::error::Error for SimError {}

impl From<InstanceError> for SimError {
    fn from(e: InstanceError) -> Self {
        SimError::Instance(e)
    }
}

impl From<OracleError> for SimError {
    fn from(e: OracleError) -> Self {
        SimError::Oracle(e)
    }
}

/// Epoch index of a release time; epochs are half-open `[k*len, (k+1)*len)`.
pub fn epoch_of(time: Seconds, epoch_len: Seconds) -> i64 {
    time.div_euclid(epoch_len)
}

/// Requests of epoch `tau`, unmodified. Any request released outside
/// `[tau*len, (tau+1)*len)` is rejected.
pub fn batch(requests: &[Request], tau: i64, epoch_len: Seconds) -> Result<Vec<Request>, SimError> {
    if let Some(r) = requests.iter().find(|r| epoch_of(r.release, epoch_len) != tau) {
        return Err(SimError::OutOfEpoch { request: r.id, release: r.release, epoch: tau });
    }
    Ok(requests.to_vec())
}

/// Idle vehicles spread evenly over the stops, starting at a seeded offset.
pub fn place_fleet(n_stops: usize, count: usize, capacity: u32, seed: u64) -> Vec<VehicleState> {
    assert!(n_stops > 0, "no stops to place vehicles on");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let offset = rng.random_range(0..n_stops);
    (0..count)
        .map(|i| {
            let stop = (offset + i * n_stops / count.max(1)) % n_stops;
            VehicleState::idle(i, stop, 0, capacity)
        })
        .collect()
}

/// What a vehicle is doing: the state it departed from at the last solve and
/// the route it follows from there.
#[derive(Debug, Clone, PartialEq)]
pub struct VehiclePlan {
    pub anchor: VehicleState,
    pub nodes: Vec<Node>,
    pub arrival: Vec<Seconds>,
}

impl VehiclePlan {
    pub fn idle(anchor: VehicleState) -> Self {
        VehiclePlan { anchor, nodes: Vec::new(), arrival: Vec::new() }
    }
}

/// A served node, fixed forever.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StopEvent {
    pub kind: NodeKind,
    pub request: RequestId,
    pub stop: StopId,
    pub time: Seconds,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Extraction {
    pub state: VehicleState,
    /// Nodes of the plan executed before the vehicle leaves its departing stop.
    pub committed: Vec<StopEvent>,
    /// Requests the plan would pick up later; they are re-optimized.
    pub released: Vec<RequestId>,
}

/// Departing state of a vehicle for the solve of epoch `tau`. The departing
/// stop is the first planned stop reached at or after `(tau + 1) * len`;
/// that stop and everything before it are committed, and the vehicle leaves
/// it once service there is complete. A vehicle with nothing planned past
/// the boundary waits at its last stop until the boundary.
pub fn extract_vehicle_state(plan: &VehiclePlan, tau: i64, epoch_len: Seconds, service: Seconds) -> Extraction {
    let boundary = (tau + 1) * epoch_len;
    let anchor = &plan.anchor;
    let first = plan.arrival.iter().position(|&a| a >= boundary);
    let cut = first.map_or(plan.nodes.len(), |j| j + 1);

    let mut onboard = anchor.onboard.clone();
    let mut committed = Vec::with_capacity(cut);
    for (node, &time) in plan.nodes[..cut].iter().zip(&plan.arrival[..cut]) {
        match node.kind {
            NodeKind::Pickup => onboard.push(OnboardRider {
                request: node.request,
                picked_up_at: time,
                dest: 0,
                size: node.size,
                direct: node.direct,
            }),
            NodeKind::Dropoff | NodeKind::OnboardDropoff => onboard.retain(|r| r.request != node.request),
        }
        committed.push(StopEvent { kind: node.kind, request: node.request, stop: node.stop, time });
    }

    let rest = &plan.nodes[cut..];
    // keep the planned dropoff order for riders still in the vehicle
    let mut ordered = Vec::with_capacity(onboard.len());
    for node in rest.iter().filter(|n| n.kind != NodeKind::Pickup) {
        if let Some(r) = onboard.iter().find(|r| r.request == node.request) {
            ordered.push(OnboardRider { dest: node.stop, ..r.clone() });
        }
    }
    debug_assert_eq!(ordered.len(), onboard.len(), "onboard rider without a planned dropoff");
    let released = rest.iter().filter(|n| n.kind == NodeKind::Pickup).map(|n| n.request).collect();

    let (stop, time) = match cut.checked_sub(1) {
        Some(last) if first.is_some() => (plan.nodes[last].stop, plan.arrival[last] + service),
        Some(last) => (plan.nodes[last].stop, boundary.max(plan.arrival[last] + service)),
        None => (anchor.depart_stop, boundary.max(anchor.depart_time)),
    };
    let state = VehicleState {
        id: anchor.id,
        depart_stop: stop,
        depart_time: time,
        load: ordered.iter().map(|r| r.size).sum(),
        onboard: ordered,
        capacity: anchor.capacity,
        shift_start: anchor.shift_start,
        shift_end: anchor.shift_end,
    };
    Extraction { state, committed, released }
}

/// Requests of the static problem of epoch `tau` and their penalties:
/// everything not yet picked up plus the batch of epoch `tau - 1`, sorted by
/// id. Penalties are evaluated at the start of the batching epoch, so a
/// fresh request costs exactly `delta`.
pub fn assemble_static_instance(
    pending: &[Request],
    fresh: &[Request],
    tau: i64,
    params: &PenaltyParams,
) -> (Vec<Request>, Vec<f64>) {
    let mut requests: Vec<Request> = pending.iter().chain(fresh).cloned().collect();
    requests.sort_by_key(|r| r.id);
    requests.dedup_by_key(|r| r.id);
    let now = penalty_clock(tau, params.epoch_len);
    let penalties = requests.iter().map(|r| params.penalty(now, r.release)).collect();
    (requests, penalties)
}

pub fn penalty_clock(tau: i64, epoch_len: Seconds) -> Seconds {
    (tau - 1) * epoch_len
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiderRecord {
    pub id: RequestId,
    pub release: Seconds,
    pub origin: StopId,
    pub dest: StopId,
    pub size: u32,
    pub direct: Seconds,
    pub vehicle: Option<VehicleId>,
    pub pickup: Option<Seconds>,
    pub dropoff: Option<Seconds>,
    /// Activation time of the last plan that changed the rider's vehicle.
    pub last_assignment_change: Option<Seconds>,
    /// Whether a plan ever moved the rider away from an assigned vehicle.
    pub reassigned: bool,
    /// Number of solves the rider took part in.
    pub solves: u32,
}

impl RiderRecord {
    pub fn wait(&self) -> Option<Seconds> {
        self.pickup.map(|p| p - self.release)
    }

    pub fn deviation(&self, service: Seconds) -> Option<Seconds> {
        Some(self.dropoff? - self.pickup? - service - self.direct)
    }

    pub fn final_assignment_time(&self) -> Option<Seconds> {
        self.last_assignment_change.map(|t| t - self.release)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: i64,
    /// Start of the epoch.
    pub clock: Seconds,
    pub new_requests: usize,
    /// Requests in the static problem.
    pub requests: usize,
    pub vehicles: usize,
    pub columns: usize,
    /// Generated columns over `V * (P + P(P-1)/2)`, the count of all
    /// single and pair routes.
    pub column_ratio: f64,
    pub objective: f64,
    pub lp_bound: f64,
    pub rmp_monotone: bool,
    pub iterations: usize,
    pub deadline_hit: bool,
    /// Vehicles driving a committed leg, carrying riders or holding a
    /// planned route after the solve.
    pub busy_vehicles: usize,
    pub onboard_riders: usize,
    pub onboard_load: u32,
    pub completed: usize,
    pub pending: usize,
}

/// Size of the space of single and pair routes per epoch.
pub fn column_space(vehicles: usize, requests: usize) -> usize {
    vehicles * (requests + requests * requests.saturating_sub(1) / 2)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub epoch_len: Seconds,
    pub service: Seconds,
    pub deviation: DeviationPolicy,
    pub vehicles: usize,
    pub riders: Vec<RiderRecord>,
    pub epochs: Vec<EpochRecord>,
    /// Wall time of every epoch's solve in milliseconds; not reproducible.
    #[serde(skip)]
    pub solve_ms: Vec<f64>,
    pub committed: Vec<Vec<StopEvent>>,
    pub chain_heads: Vec<String>,
    pub chain_intact: bool,
    pub conservation_ok: bool,
    pub escalation_ok: bool,
    pub violations: Vec<String>,
    pub final_clock: Seconds,
}

impl SimulationReport {
    pub fn all_completed(&self) -> bool {
        self.riders.iter().all(|r| r.dropoff.is_some())
    }

    pub fn deadline_overruns(&self, deadline: Option<Duration>) -> usize {
        let limit = deadline.map(|d| d.as_secs_f64() * 1e3);
        self.epochs
            .iter()
            .zip(self.solve_ms.iter().copied().chain(std::iter::repeat(0.0)))
            .filter(|(e, ms)| e.deadline_hit || limit.is_some_and(|l| *ms > l))
            .count()
    }
}

/// Append-only log of one vehicle's committed events, hash-chained so that
/// rewriting any earlier entry is detectable.
#[derive(Debug, Clone, Default)]
struct CommitLog {
    events: Vec<StopEvent>,
    head: [u8; 32],
    /// (length, head) after every epoch.
    checkpoints: Vec<(usize, [u8; 32])>,
}

fn chain(head: &[u8; 32], e: &StopEvent) -> [u8; 32] {
    let kind: u8 = match e.kind {
        NodeKind::Pickup => 0,
        NodeKind::Dropoff => 1,
        NodeKind::OnboardDropoff => 2,
    };
    let mut h = Sha256::new();
    h.update(head);
    h.update([kind]);
    h.update((e.request as u64).to_le_bytes());
    h.update((e.stop as u64).to_le_bytes());
    h.update(e.time.to_le_bytes());
    h.finalize().into()
}

impl CommitLog {
    fn append(&mut self, e: StopEvent) {
        self.head = chain(&self.head, &e);
        self.events.push(e);
    }

    fn checkpoint(&mut self) {
        self.checkpoints.push((self.events.len(), self.head));
    }

    /// Recomputes the chain and checks every recorded checkpoint.
    fn verify(&self) -> bool {
        let mut head = [0u8; 32];
        let mut marks = self.checkpoints.iter().peekable();
        while marks.peek().is_some_and(|(len, _)| *len == 0) {
            if marks.next().is_some_and(|(_, h)| *h != head) {
                return false;
            }
        }
        for (i, e) in self.events.iter().enumerate() {
            head = chain(&head, e);
            while marks.peek().is_some_and(|(len, _)| *len == i + 1) {
                if marks.next().is_some_and(|(_, h)| *h != head) {
                    return false;
                }
            }
        }
        marks.next().is_none() && head == self.head
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

struct PlanOutcome {
    routes: Vec<Vec<Node>>,
    assignment: Vec<Option<VehicleId>>,
    objective: f64,
    lp_bound: f64,
    columns: usize,
    iterations: usize,
    rmp_monotone: bool,
    deadline_hit: bool,
}

fn solve_epoch(inst: &StaticInstance<'_>, config: &EpochConfig) -> Result<PlanOutcome, SimError> {
    match config.solver {
        SolverKind::ColumnGeneration => {
            let opts = SolveOptions {
                prune: config.prune,
                budget: config.deadline,
                beam: config.beam,
                ..SolveOptions::default()
            };
            let sol = solve_static(inst, &opts);
            Ok(PlanOutcome {
                routes: sol.routes.into_iter().map(|r| r.nodes).collect(),
                assignment: sol.assignment,
                objective: sol.objective,
                lp_bound: sol.lp_bound,
                columns: sol.columns_generated,
                iterations: sol.iterations,
                rmp_monotone: sol.rmp_monotone,
                deadline_hit: sol.deadline_hit,
            })
        }
        SolverKind::Oracle => {
            let sol = oracle_static_optimum(inst, config.prune)?;
            Ok(PlanOutcome {
                routes: sol.routes,
                assignment: sol.assignment,
                objective: sol.objective,
                lp_bound: sol.objective,
                columns: 0,
                iterations: 0,
                rmp_monotone: true,
                deadline_hit: false,
            })
        }
    }
}

fn check_inputs(matrix: &TravelTimeMatrix, requests: &[Request], fleet: &[VehicleState]) -> Result<(), SimError> {
    let n = matrix.n();
    for (i, v) in fleet.iter().enumerate() {
        if v.id != i {
            return Err(SimError::Input(format!("vehicle at position {i} has id {}", v.id)));
        }
        if v.depart_stop >= n {
            return Err(SimError::Input(format!("vehicle {i} starts at unknown stop {}", v.depart_stop)));
        }
        if !v.onboard.is_empty() || v.load != 0 {
            return Err(SimError::Input(format!("vehicle {i} must start empty")));
        }
        if v.shift_end != Seconds::MAX {
            return Err(SimError::Input(format!("vehicle {i} has a finite shift end")));
        }
    }
    let max_cap = fleet.iter().map(|v| v.capacity).max().unwrap_or(0);
    let mut ids: Vec<RequestId> = requests.iter().map(|r| r.id).collect();
    ids.sort_unstable();
    if ids.windows(2).any(|w| w[0] == w[1]) {
        return Err(SimError::Input("duplicate request id".into()));
    }
    for r in requests {
        if r.origin >= n || r.dest >= n {
            return Err(SimError::Input(format!("request {} uses an unknown stop", r.id)));
        }
        if r.release < 0 {
            return Err(SimError::Input(format!("request {} released before time zero", r.id)));
        }
        if r.size == 0 || r.size > max_cap {
            return Err(SimError::Input(format!("request {} of size {} fits no vehicle", r.id, r.size)));
        }
        if r.direct != matrix.get(r.origin, r.dest) {
            return Err(SimError::Input(format!("request {} has a stale direct time", r.id)));
        }
    }
    Ok(())
}

/// Replays `requests` through the dispatcher until every rider has been
/// dropped off and every vehicle is empty.
pub fn run(
    matrix: &TravelTimeMatrix,
    requests: &[Request],
    fleet: &[VehicleState],
    config: &EpochConfig,
) -> Result<SimulationReport, SimError> {
    config.validate()?;
    check_inputs(matrix, requests, fleet)?;
    let len = config.epoch_len;

    let mut by_release: Vec<Request> = requests.to_vec();
    by_release.sort_by_key(|r| (r.release, r.id));
    let mut riders: Vec<RiderRecord> = requests
        .iter()
        .map(|r| RiderRecord {
            id: r.id,
            release: r.release,
            origin: r.origin,
            dest: r.dest,
            size: r.size,
            direct: r.direct,
            vehicle: None,
            pickup: None,
            dropoff: None,
            last_assignment_change: None,
            reassigned: false,
            solves: 0,
        })
        .collect();
    riders.sort_by_key(|r| r.id);
    let ids: Vec<RequestId> = riders.iter().map(|r| r.id).collect();
    let slot = |id: RequestId| ids.binary_search(&id).expect("known request");
    let last_epoch = by_release.last().map_or(-1, |r| epoch_of(r.release, len));

    let mut plans: Vec<VehiclePlan> = fleet.iter().cloned().map(VehiclePlan::idle).collect();
    let mut logs: Vec<CommitLog> = vec![CommitLog::default(); fleet.len()];
    let mut pending: Vec<Request> = Vec::new();
    let mut last_penalty: Vec<f64> = vec![0.0; riders.len()];
    let mut next_batch = 0usize;
    let mut ingested = 0usize;
    let mut completed = 0usize;
    let mut epochs = Vec::new();
    let mut solve_ms = Vec::new();
    let mut conservation_ok = true;
    let mut escalation_ok = true;

    let mut tau: i64 = 1;
    loop {
        if tau > config.max_epochs {
            return Err(SimError::EpochLimit(config.max_epochs));
        }
        let mut states = Vec::with_capacity(plans.len());
        for (v, plan) in plans.iter().enumerate() {
            let ex = extract_vehicle_state(plan, tau, len, config.service);
            for e in &ex.committed {
                let rider = &mut riders[slot(e.request)];
                match e.kind {
                    NodeKind::Pickup => {
                        rider.pickup = Some(e.time);
                        rider.vehicle = Some(v);
                        pending.retain(|r| r.id != e.request);
                    }
                    NodeKind::Dropoff | NodeKind::OnboardDropoff => {
                        rider.dropoff = Some(e.time);
                        completed += 1;
                    }
                }
                logs[v].append(*e);
            }
            logs[v].checkpoint();
            states.push(ex.state);
        }

        let fresh = if tau - 1 <= last_epoch {
            let start = next_batch;
            while next_batch < by_release.len() && epoch_of(by_release[next_batch].release, len) == tau - 1 {
                next_batch += 1;
            }
            batch(&by_release[start..next_batch], tau - 1, len)?
        } else {
            Vec::new()
        };
        ingested += fresh.len();

        let onboard: usize = states.iter().map(|s| s.onboard.len()).sum();
        if completed + onboard + pending.len() + fresh.len() != ingested {
            conservation_ok = false;
        }
        if tau - 1 >= last_epoch && pending.is_empty() && fresh.is_empty() && onboard == 0 {
            for (plan, state) in plans.iter_mut().zip(states) {
                *plan = VehiclePlan::idle(state);
            }
            break;
        }

        let (reqs, penalties) = assemble_static_instance(&pending, &fresh, tau, &config.penalty);
        for (r, &p) in reqs.iter().zip(&penalties) {
            let s = slot(r.id);
            if riders[s].solves > 0 && p <= last_penalty[s] {
                escalation_ok = false;
            }
            last_penalty[s] = p;
            riders[s].solves += 1;
        }
        let inst = StaticInstance::new(
            matrix,
            config.deviation,
            config.service,
            states.clone(),
            reqs.clone(),
            penalties,
        )?;
        let started = Instant::now();
        let outcome = solve_epoch(&inst, config)?;
        solve_ms.push(started.elapsed().as_secs_f64() * 1e3);

        let activation = (tau + 1) * len;
        for (r, &a) in reqs.iter().zip(&outcome.assignment) {
            let rider = &mut riders[slot(r.id)];
            if a != rider.vehicle {
                if rider.vehicle.is_some() {
                    rider.reassigned = true;
                }
                if a.is_some() {
                    rider.last_assignment_change = Some(activation);
                }
                rider.vehicle = a;
            }
        }

        let ctx = inst.ctx();
        let mut busy = 0;
        for ((plan, state), nodes) in plans.iter_mut().zip(&states).zip(outcome.routes) {
            let schedule = evaluate(&ctx, state, &nodes);
            debug_assert!(schedule.feasible(), "selected route is infeasible");
            if !nodes.is_empty() || !state.onboard.is_empty() || state.depart_time > activation {
                busy += 1;
            }
            *plan = VehiclePlan { anchor: state.clone(), nodes, arrival: schedule.arrival };
        }
        pending = reqs;

        let p = inst.requests.len();
        let space = column_space(fleet.len(), p);
        epochs.push(EpochRecord {
            epoch: tau,
            clock: tau * len,
            new_requests: fresh.len(),
            requests: p,
            vehicles: fleet.len(),
            columns: outcome.columns,
            column_ratio: if space == 0 { 0.0 } else { outcome.columns as f64 / space as f64 },
            objective: outcome.objective,
            lp_bound: outcome.lp_bound,
            rmp_monotone: outcome.rmp_monotone,
            iterations: outcome.iterations,
            deadline_hit: outcome.deadline_hit,
            busy_vehicles: busy,
            onboard_riders: onboard,
            onboard_load: states.iter().map(|s| s.load).sum(),
            completed,
            pending: pending.len(),
        });
        tau += 1;
    }

    let committed: Vec<Vec<StopEvent>> = logs.iter().map(|l| l.events.clone()).collect();
    let chain_intact = logs.iter().all(CommitLog::verify);
    let violations = audit(matrix, requests, fleet, &committed, config);
    Ok(SimulationReport {
        epoch_len: len,
        service: config.service,
        deviation: config.deviation,
        vehicles: fleet.len(),
        riders,
        epochs,
        solve_ms,
        chain_heads: logs.iter().map(|l| hex(&l.head)).collect(),
        committed,
        chain_intact,
        conservation_ok,
        escalation_ok,
        violations,
        final_clock: tau * len,
    })
}

/// Replays every vehicle's committed events against the inputs and lists
/// anything physically or contractually impossible.
pub fn audit(
    matrix: &TravelTimeMatrix,
    requests: &[Request],
    fleet: &[VehicleState],
    committed: &[Vec<StopEvent>],
    config: &EpochConfig,
) -> Vec<String> {
    let mut out = Vec::new();
    let by_id: std::collections::HashMap<RequestId, &Request> = requests.iter().map(|r| (r.id, r)).collect();
    let mut picked: std::collections::HashMap<RequestId, (VehicleId, Seconds)> = Default::default();
    let mut dropped: std::collections::HashSet<RequestId> = Default::default();
    for (v, events) in committed.iter().enumerate() {
        let veh = &fleet[v];
        let mut at = veh.depart_stop;
        let mut free = veh.depart_time;
        let mut load: i64 = 0;
        for e in events {
            let Some(r) = by_id.get(&e.request) else {
                out.push(format!("vehicle {v}: unknown request {}", e.request));
                continue;
            };
            if e.time < free + matrix.get(at, e.stop) {
                out.push(format!("vehicle {v}: reaches stop {} at {} too early", e.stop, e.time));
            }
            if e.time < veh.shift_start || e.time > veh.shift_end {
                out.push(format!("vehicle {v}: event at {} outside its shift", e.time));
            }
            match e.kind {
                NodeKind::Pickup => {
                    if e.stop != r.origin {
                        out.push(format!("request {}: picked up away from its origin", r.id));
                    }
                    if e.time < r.release {
                        out.push(format!("request {}: picked up at {} before release {}", r.id, e.time, r.release));
                    }
                    if picked.insert(r.id, (v, e.time)).is_some() {
                        out.push(format!("request {}: picked up twice", r.id));
                    }
                    load += r.size as i64;
                }
                NodeKind::Dropoff | NodeKind::OnboardDropoff => {
                    if e.stop != r.dest {
                        out.push(format!("request {}: dropped off away from its destination", r.id));
                    }
                    match picked.get(&r.id) {
                        Some(&(pv, pt)) if pv == v => {
                            let ride = e.time - pt - config.service;
                            if ride > config.deviation.bound(r.direct) {
                                out.push(format!("request {}: ride of {ride}s exceeds its bound", r.id));
                            }
                        }
                        _ => out.push(format!("request {}: dropped off by a vehicle that never picked it up", r.id)),
                    }
                    if !dropped.insert(r.id) {
                        out.push(format!("request {}: dropped off twice", r.id));
                    }
                    load -= r.size as i64;
                }
            }
            if load < 0 || load > veh.capacity as i64 {
                out.push(format!("vehicle {v}: load {load} outside [0, {}]", veh.capacity));
            }
            at = e.stop;
            free = e.time + config.service;
        }
        if load != 0 {
            out.push(format!("vehicle {v}: ends with load {load}"));
        }
    }
    out
}
