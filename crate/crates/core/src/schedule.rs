//! Earliest-arrival scheduling of a fixed node sequence for one vehicle.
//!
//! A route is stored without its source and sink: the source is the
//! vehicle's departing stop at `depart_time` and the sink is a dummy node
//! reached at no travel cost after the last service completes.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::model::{
    OnboardRider, Request, RequestId, Seconds, StopId, TravelTimeMatrix, VehicleId, VehicleState,
    DeviationPolicy,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NodeKind {
    Pickup,
    Dropoff,
    /// Dropoff of a rider who was already in the vehicle at the departing stop.
    OnboardDropoff,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Node {
    pub kind: NodeKind,
    pub request: RequestId,
    pub stop: StopId,
    pub size: u32,
    /// Release time for pickups and dropoffs, pickup time for onboard dropoffs.
    pub time_ref: Seconds,
    pub direct: Seconds,
}

impl Node {
    pub fn pickup(r: &Request) -> Self {
        Node {
            kind: NodeKind::Pickup,
            request: r.id,
            stop: r.origin,
            size: r.size,
            time_ref: r.release,
            direct: r.direct,
        }
    }

    pub fn dropoff(r: &Request) -> Self {
        Node {
            kind: NodeKind::Dropoff,
            request: r.id,
            stop: r.dest,
            size: r.size,
            time_ref: r.release,
            direct: r.direct,
        }
    }

    pub fn onboard(r: &OnboardRider) -> Self {
        Node {
            kind: NodeKind::OnboardDropoff,
            request: r.request,
            stop: r.dest,
            size: r.size,
            time_ref: r.picked_up_at,
            direct: r.direct,
        }
    }

    /// Signed load change when the node is served.
    pub fn load_delta(&self) -> i64 {
        match self.kind {
            NodeKind::Pickup => self.size as i64,
            NodeKind::Dropoff | NodeKind::OnboardDropoff => -(self.size as i64),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Route {
    pub vehicle: VehicleId,
    pub nodes: Vec<Node>,
}

impl Route {
    /// Route that only drops off the riders already onboard, in incumbent order.
    pub fn seed(vehicle: &VehicleState) -> Self {
        Route { vehicle: vehicle.id, nodes: vehicle.onboard.iter().map(Node::onboard).collect() }
    }

    /// Requests picked up on this route, sorted.
    pub fn served(&self) -> Vec<RequestId> {
        let mut ids: Vec<RequestId> = self
            .nodes
            .iter()
            .filter(|n| n.kind == NodeKind::Pickup)
            .map(|n| n.request)
            .collect();
        ids.sort_unstable();
        ids
    }
}

pub struct SchedulingContext<'a> {
    pub matrix: &'a TravelTimeMatrix,
    pub policy: DeviationPolicy,
    /// Service duration applied at every pickup and dropoff.
    pub service: Seconds,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Violation {
    Capacity { position: usize },
    Deviation { request: RequestId },
    ShiftEnd,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RouteError {
    DuplicateNode(RequestId),
    DropoffBeforePickup(RequestId),
    MissingDropoff(RequestId),
    MissingOnboard(RequestId),
    UnknownOnboard(RequestId),
    SizeMismatch(RequestId),
    WrongVehicle { expected: VehicleId, found: VehicleId },
}

impl fmt::Display for RouteError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RouteError::DuplicateNode(r) => write!(f, "request {r} visited twice"),
            RouteError::DropoffBeforePickup(r) => write!(f, "request {r} dropped off before pickup"),
            RouteError::MissingDropoff(r) => write!(f, "request {r} picked up but never dropped off"),
            RouteError::MissingOnboard(r) => write!(f, "onboard rider {r} is never dropped off"),
            RouteError::UnknownOnboard(r) => write!(f, "request {r} is not onboard this vehicle"),
            RouteError::SizeMismatch(r) => write!(f, "request {r} has inconsistent party sizes"),
            RouteError::WrongVehicle { expected, found } => {
                write!(f, "route for vehicle {found} scheduled on vehicle {expected}")
            }
        }
    }
}

impl std::error::Error for RouteError {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub start: Seconds,
    /// Arrival (service start) time per route node.
    pub arrival: Vec<Seconds>,
    /// Load after serving each route node.
    pub load: Vec<u32>,
    /// Sink time: completion of the last service.
    pub end: Seconds,
    pub wait_cost: Seconds,
    pub violation: Option<Violation>,
}

impl Schedule {
    pub fn feasible(&self) -> bool {
        self.violation.is_none()
    }
}

/// Structural checks independent of timing.
pub fn validate_route(vehicle: &VehicleState, route: &Route) -> Result<(), RouteError> {
    if route.vehicle != vehicle.id {
        return Err(RouteError::WrongVehicle { expected: vehicle.id, found: route.vehicle });
    }
    for (pos, node) in route.nodes.iter().enumerate() {
        let earlier = &route.nodes[..pos];
        if earlier.iter().any(|n| n.kind == node.kind && n.request == node.request) {
            return Err(RouteError::DuplicateNode(node.request));
        }
        match node.kind {
            NodeKind::Pickup => {
                if earlier.iter().any(|n| n.request == node.request) {
                    return Err(RouteError::DropoffBeforePickup(node.request));
                }
                let drop = route.nodes[pos + 1..]
                    .iter()
                    .find(|n| n.request == node.request && n.kind == NodeKind::Dropoff);
                match drop {
                    None => return Err(RouteError::MissingDropoff(node.request)),
                    Some(d) if d.size != node.size => return Err(RouteError::SizeMismatch(node.request)),
                    Some(_) => {}
                }
            }
            NodeKind::Dropoff => {
                if !earlier.iter().any(|n| n.request == node.request && n.kind == NodeKind::Pickup) {
                    return Err(RouteError::DropoffBeforePickup(node.request));
                }
            }
            NodeKind::OnboardDropoff => {
                match vehicle.onboard.iter().find(|r| r.request == node.request) {
                    None => return Err(RouteError::UnknownOnboard(node.request)),
                    Some(r) if r.size != node.size => return Err(RouteError::SizeMismatch(node.request)),
                    Some(_) => {}
                }
            }
        }
    }
    for rider in &vehicle.onboard {
        let count = route
            .nodes
            .iter()
            .filter(|n| n.kind == NodeKind::OnboardDropoff && n.request == rider.request)
            .count();
        if count != 1 {
            return Err(RouteError::MissingOnboard(rider.request));
        }
    }
    Ok(())
}

/// Validates the route's structure, then computes its earliest-arrival
/// schedule. Infeasibility is reported in `Schedule::violation`, structural
/// problems as an error.
pub fn schedule_route(
    ctx: &SchedulingContext<'_>,
    vehicle: &VehicleState,
    route: &Route,
) -> Result<Schedule, RouteError> {
    validate_route(vehicle, route)?;
    Ok(evaluate(ctx, vehicle, &route.nodes))
}

/// Earliest-arrival schedule for a structurally valid node sequence. Every
/// node is timed even after a violation is found; the first violation wins.
pub fn evaluate(ctx: &SchedulingContext<'_>, vehicle: &VehicleState, nodes: &[Node]) -> Schedule {
    let mut arrival = Vec::with_capacity(nodes.len());
    let mut load = Vec::with_capacity(nodes.len());
    let mut violation = None;
    let mut wait_cost = 0;
    let mut time = vehicle.depart_time;
    let mut at = vehicle.depart_stop;
    let mut w = vehicle.load as i64;
    let mut leave = time;

    for (pos, node) in nodes.iter().enumerate() {
        let reach = leave + ctx.matrix.get(at, node.stop);
        time = match node.kind {
            NodeKind::Pickup => reach.max(node.time_ref),
            _ => reach,
        };
        w += node.load_delta();
        if violation.is_none() && (w < 0 || w > vehicle.capacity as i64) {
            violation = Some(Violation::Capacity { position: pos });
        }
        match node.kind {
            NodeKind::Pickup => wait_cost += time - node.time_ref,
            NodeKind::Dropoff => {
                let picked = pickup_time(nodes, &arrival, pos, node.request);
                let ride = time - (picked + ctx.service);
                debug_assert!(ride >= node.direct, "ride shorter than direct trip");
                if violation.is_none() && ride > ctx.policy.bound(node.direct) {
                    violation = Some(Violation::Deviation { request: node.request });
                }
            }
            NodeKind::OnboardDropoff => {
                let ride = time - (node.time_ref + ctx.service);
                if violation.is_none() && ride > ctx.policy.bound(node.direct) {
                    violation = Some(Violation::Deviation { request: node.request });
                }
            }
        }
        arrival.push(time);
        load.push(w.clamp(0, u32::MAX as i64) as u32);
        at = node.stop;
        leave = time + ctx.service;
    }
    let end = if nodes.is_empty() { vehicle.depart_time } else { leave };
    if violation.is_none() && end > vehicle.shift_end {
        violation = Some(Violation::ShiftEnd);
    }
    Schedule { start: vehicle.depart_time, arrival, load, end, wait_cost, violation }
}

fn pickup_time(nodes: &[Node], arrival: &[Seconds], before: usize, request: RequestId) -> Seconds {
    nodes[..before]
        .iter()
        .rposition(|n| n.kind == NodeKind::Pickup && n.request == request)
        .map(|p| arrival[p])
        .expect("dropoff without preceding pickup")
}

/// Wait cost of a node sequence, or `None` as soon as it turns infeasible.
/// Allocation-free counterpart of [`evaluate`] for the pricing hot loop.
pub fn feasible_wait(ctx: &SchedulingContext<'_>, vehicle: &VehicleState, nodes: &[Node]) -> Option<Seconds> {
    // Routes in pricing are short; pickup times live on the stack.
    const INLINE: usize = 64;
    let mut picked: [(RequestId, Seconds); INLINE] = [(usize::MAX, 0); INLINE];
    let mut n_picked = 0usize;
    let mut spill: Vec<(RequestId, Seconds)> = Vec::new();

    let mut wait = 0;
    let mut leave = vehicle.depart_time;
    let mut at = vehicle.depart_stop;
    let mut w = vehicle.load as i64;
    for node in nodes {
        let reach = leave + ctx.matrix.get(at, node.stop);
        w += node.load_delta();
        if w < 0 || w > vehicle.capacity as i64 {
            return None;
        }
        let time = match node.kind {
            NodeKind::Pickup => {
                let t = reach.max(node.time_ref);
                wait += t - node.time_ref;
                if n_picked < INLINE {
                    picked[n_picked] = (node.request, t);
                    n_picked += 1;
                } else {
                    spill.push((node.request, t));
                }
                t
            }
            NodeKind::Dropoff => {
                let p = picked[..n_picked]
                    .iter()
                    .chain(spill.iter())
                    .find(|(r, _)| *r == node.request)
                    .map(|&(_, t)| t)?;
                if reach - (p + ctx.service) > ctx.policy.bound(node.direct) {
                    return None;
                }
                reach
            }
            NodeKind::OnboardDropoff => {
                if reach - (node.time_ref + ctx.service) > ctx.policy.bound(node.direct) {
                    return None;
                }
                reach
            }
        };
        at = node.stop;
        leave = time + ctx.service;
    }
    let end = if nodes.is_empty() { vehicle.depart_time } else { leave };
    if end > vehicle.shift_end {
        return None;
    }
    Some(wait)
}

/// Least wait a request can incur on a vehicle: reach its origin straight
/// from the departing stop.
pub fn wait_cost_lower_bound(matrix: &TravelTimeMatrix, vehicle: &VehicleState, request: &Request) -> Seconds {
    (vehicle.depart_time + matrix.get(vehicle.depart_stop, request.origin) - request.release).max(0)
}
