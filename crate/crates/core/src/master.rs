//! Set-partitioning master problem over generated routes.
//!
//! Rows `0..|P|` say each request is served by one selected route or marked
//! unserved; rows `|P|..|P|+|V|` pick exactly one route per vehicle. Every
//! vehicle owns a zero-cost seed column that only drops off its onboard
//! riders, so the problem is always feasible.

use std::collections::HashSet;
use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::lp::{DenseSimplex, LinearProgram, LpSolver, LpStatus};
use crate::model::RequestId;
use crate::pricing::{Column, DualValues};

/// A value this close to 0 or 1 counts as integral.
pub const INTEGER_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MasterSolution {
    /// Selection per column, in column order.
    pub y: Vec<f64>,
    /// Unserved indicator per request row.
    pub z: Vec<f64>,
    pub objective: f64,
    pub duals: Option<DualValues>,
}

impl MasterSolution {
    pub fn is_integral(&self) -> bool {
        self.y.iter().all(|&v| v.min(1.0 - v).abs() <= INTEGER_TOLERANCE)
    }
}

#[derive(Debug, Clone)]
pub struct FinalSolution {
    pub solution: MasterSolution,
    /// Selected column index per vehicle.
    pub selected: Vec<usize>,
    /// False when the node limit or deadline cut the search short.
    pub proven_optimal: bool,
    pub nodes: usize,
}

pub struct MasterProblem {
    requests: Vec<RequestId>,
    penalties: Vec<f64>,
    n_vehicles: usize,
    columns: Vec<Column>,
    by_vehicle: Vec<Vec<usize>>,
    seen: HashSet<(usize, Vec<crate::schedule::Node>)>,
    solver: Box<dyn LpSolver>,
}

impl MasterProblem {
    /// `seeds[v]` must be vehicle `v`'s onboard-only column.
    pub fn new(requests: Vec<RequestId>, penalties: Vec<f64>, seeds: Vec<Column>) -> Self {
        Self::with_solver(requests, penalties, seeds, Box::new(DenseSimplex::default()))
    }

    pub fn with_solver(
        requests: Vec<RequestId>,
        penalties: Vec<f64>,
        seeds: Vec<Column>,
        solver: Box<dyn LpSolver>,
    ) -> Self {
        assert_eq!(requests.len(), penalties.len());
        assert!(requests.windows(2).all(|w| w[0] < w[1]), "request ids must be sorted and unique");
        let n_vehicles = seeds.len();
        let mut master = MasterProblem {
            requests,
            penalties,
            n_vehicles,
            columns: Vec::new(),
            by_vehicle: vec![Vec::new(); n_vehicles],
            seen: HashSet::new(),
            solver,
        };
        for (v, seed) in seeds.into_iter().enumerate() {
            assert_eq!(seed.vehicle, v, "seed columns must be given in vehicle order");
            assert!(seed.served.is_empty(), "seed column serves no new request");
            master.add_column(seed);
        }
        master
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn n_vehicles(&self) -> usize {
        self.n_vehicles
    }

    pub fn requests(&self) -> &[RequestId] {
        &self.requests
    }

    pub fn penalties(&self) -> &[f64] {
        &self.penalties
    }

    /// Adds a column unless the same route is already present. Returns
    /// whether it was new.
    pub fn add_column(&mut self, column: Column) -> bool {
        let key = (column.vehicle, column.route.nodes.clone());
        if !self.seen.insert(key) {
            return false;
        }
        self.by_vehicle[column.vehicle].push(self.columns.len());
        self.columns.push(column);
        true
    }

    fn row_of(&self, request: RequestId) -> usize {
        self.requests
            .binary_search(&request)
            .unwrap_or_else(|_| panic!("request {request} is not in the master problem"))
    }

    /// LP over the given active columns. The z variables come first so that
    /// ratio-test ties, which go to the lowest index, drive them out of the
    /// basis; the duals then price requests at the best route found rather
    /// than at their penalty.
    fn build_lp(&self, active: &[usize]) -> LinearProgram {
        let p = self.requests.len();
        let mut lp = LinearProgram::new(vec![1.0; p + self.n_vehicles]);
        for (i, &pen) in self.penalties.iter().enumerate() {
            lp.push(pen, vec![(i, 1.0)]);
        }
        for &c in active {
            let col = &self.columns[c];
            let mut entries: Vec<(usize, f64)> = col.served.iter().map(|&r| (self.row_of(r), 1.0)).collect();
            entries.push((p + col.vehicle, 1.0));
            lp.push(col.cost, entries);
        }
        lp
    }

    fn expand(&self, active: &[usize], x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let p = self.requests.len();
        let mut y = vec![0.0; self.columns.len()];
        for (k, &c) in active.iter().enumerate() {
            y[c] = x[p + k];
        }
        (y, x[..p].to_vec())
    }

    /// LP relaxation over all columns, with duals.
    pub fn solve_rmp(&self) -> MasterSolution {
        let active: Vec<usize> = (0..self.columns.len()).collect();
        let lp = self.build_lp(&active);
        let sol = self.solver.solve(&lp);
        assert_eq!(sol.status, LpStatus::Optimal, "restricted master must be solvable");
        let (y, z) = self.expand(&active, &sol.x);
        let p = self.requests.len();
        let duals = DualValues { pi: sol.duals[..p].to_vec(), sigma: sol.duals[p..].to_vec() };
        MasterSolution { y, z, objective: sol.objective, duals: Some(duals) }
    }

    /// Objective of an integral choice of one column per vehicle, or `None`
    /// if two chosen columns serve the same request.
    pub fn evaluate_selection(&self, selected: &[usize]) -> Option<MasterSolution> {
        let mut y = vec![0.0; self.columns.len()];
        let mut z = vec![1.0; self.requests.len()];
        let mut objective = 0.0;
        for &c in selected {
            y[c] = 1.0;
            objective += self.columns[c].cost;
            for &r in &self.columns[c].served {
                let row = self.row_of(r);
                if z[row] == 0.0 {
                    return None;
                }
                z[row] = 0.0;
            }
        }
        for (zi, p) in z.iter().zip(&self.penalties) {
            objective += zi * p;
        }
        Some(MasterSolution { y, z, objective, duals: None })
    }

    /// Integral selection by LP-based branch and bound over the current
    /// columns. Stops early (keeping the incumbent) at `node_limit` nodes
    /// or at the deadline.
    pub fn solve_final(&self, node_limit: usize, deadline: Option<Instant>) -> FinalSolution {
        let seeds: Vec<usize> = (0..self.n_vehicles).map(|v| self.by_vehicle[v][0]).collect();
        let mut best_sel = seeds.clone();
        let mut best = self.evaluate_selection(&seeds).expect("seed columns never overlap");

        // a branch node fixes columns in (per vehicle) or out
        struct Branch {
            fixed: Vec<Option<usize>>,
            excluded: Vec<bool>,
        }
        let mut stack = vec![Branch { fixed: vec![None; self.n_vehicles], excluded: vec![false; self.columns.len()] }];
        let mut nodes = 0;
        let mut complete = true;

        while let Some(node) = stack.pop() {
            if nodes >= node_limit || deadline.is_some_and(|d| Instant::now() >= d) {
                complete = false;
                break;
            }
            nodes += 1;
            let active: Vec<usize> = (0..self.n_vehicles)
                .flat_map(|v| match node.fixed[v] {
                    Some(c) => vec![c],
                    None => self.by_vehicle[v].iter().copied().filter(|&c| !node.excluded[c]).collect(),
                })
                .collect();
            if (0..self.n_vehicles).any(|v| !active.iter().any(|&c| self.columns[c].vehicle == v)) {
                continue;
            }
            let lp = self.build_lp(&active);
            let sol = self.solver.solve(&lp);
            if sol.status != LpStatus::Optimal || sol.objective >= best.objective - 1e-9 {
                continue;
            }
            let (y, _) = self.expand(&active, &sol.x);

            // vehicle whose selection is most spread out
            let mut branch_vehicle = None;
            let mut best_entropy = 0.0;
            for v in 0..self.n_vehicles {
                let fractional = self.by_vehicle[v].iter().any(|&c| {
                    let f = y[c];
                    f > INTEGER_TOLERANCE && f < 1.0 - INTEGER_TOLERANCE
                });
                if !fractional {
                    continue;
                }
                let h: f64 = self.by_vehicle[v]
                    .iter()
                    .map(|&c| y[c])
                    .filter(|&f| f > INTEGER_TOLERANCE)
                    .map(|f| -f * f.ln())
                    .sum();
                if branch_vehicle.is_none() || h > best_entropy + 1e-12 {
                    branch_vehicle = Some(v);
                    best_entropy = h;
                }
            }

            match branch_vehicle {
                None => {
                    let selected: Vec<usize> = (0..self.n_vehicles)
                        .map(|v| {
                            *self.by_vehicle[v]
                                .iter()
                                .find(|&&c| y[c] > 0.5)
                                .expect("integral LP selects one column per vehicle")
                        })
                        .collect();
                    if let Some(exact) = self.evaluate_selection(&selected) {
                        if exact.objective < best.objective - 1e-9 {
                            best = exact;
                            best_sel = selected;
                        }
                    }
                }
                Some(v) => {
                    let col = self.by_vehicle[v]
                        .iter()
                        .copied()
                        .filter(|&c| y[c] > INTEGER_TOLERANCE && y[c] < 1.0 - INTEGER_TOLERANCE)
                        .min_by(|&a, &b| (y[a] - 0.5).abs().total_cmp(&(y[b] - 0.5).abs()).then(a.cmp(&b)))
                        .expect("fractional vehicle has a fractional column");
                    let mut out = Branch { fixed: node.fixed.clone(), excluded: node.excluded.clone() };
                    out.excluded[col] = true;
                    let mut fixed_in = node.fixed;
                    fixed_in[v] = Some(col);
                    // depth first, "in" branch explored first
                    stack.push(out);
                    stack.push(Branch { fixed: fixed_in, excluded: node.excluded });
                }
            }
        }

        FinalSolution { solution: best, selected: best_sel, proven_optimal: complete, nodes }
    }

    /// Dumps the current relaxation in LP text format.
    pub fn write_lp<W: Write>(&self, w: W) -> std::io::Result<()> {
        let active: Vec<usize> = (0..self.columns.len()).collect();
        let lp = self.build_lp(&active);
        let mut names: Vec<String> = self.requests.iter().map(|r| format!("z_{r}")).collect();
        names.extend(self.columns.iter().enumerate().map(|(c, col)| format!("y_v{}_c{c}", col.vehicle)));
        let mut rows: Vec<String> = self.requests.iter().map(|r| format!("serve_{r}")).collect();
        rows.extend((0..self.n_vehicles).map(|v| format!("vehicle_{v}")));
        lp.write_lp(w, &names, &rows)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Seconds, TravelTimeMatrix, VehicleState};
    use crate::schedule::{evaluate, Node, NodeKind, Route, SchedulingContext};

    /// Column with a made-up cost; the route only needs to be unique.
    fn column(vehicle: usize, served: &[RequestId], cost: f64) -> Column {
        let nodes = served
            .iter()
            .flat_map(|&r| {
                let n = Node { kind: NodeKind::Pickup, request: r, stop: 0, size: 1, time_ref: 0, direct: 0 };
                [n, Node { kind: NodeKind::Dropoff, ..n }]
            })
            .collect();
        Column {
            vehicle,
            route: Route { vehicle, nodes },
            schedule: crate::schedule::Schedule {
                start: 0,
                arrival: vec![],
                load: vec![],
                end: 0,
                wait_cost: cost as Seconds,
                violation: None,
            },
            cost,
            served: served.to_vec(),
        }
    }

    fn seeds(n: usize) -> Vec<Column> {
        let m = TravelTimeMatrix::new(1, vec![0]).unwrap();
        let ctx = SchedulingContext { matrix: &m, policy: Default::default(), service: 0 };
        (0..n)
            .map(|v| {
                let veh = VehicleState::idle(v, 0, 0, 4);
                let route = Route::seed(&veh);
                let schedule = evaluate(&ctx, &veh, &route.nodes);
                Column { vehicle: v, route, schedule, cost: 0.0, served: vec![] }
            })
            .collect()
    }

    #[test]
    fn seeds_only() {
        let m = MasterProblem::new(vec![1, 2], vec![420.0, 420.0], seeds(1));
        let s = m.solve_rmp();
        assert_eq!(s.z, vec![1.0, 1.0]);
        assert!((s.objective - 840.0).abs() < 1e-9);
        let f = m.solve_final(1000, None);
        assert!((f.solution.objective - 840.0).abs() < 1e-9);
        assert_eq!(f.selected, vec![0]);
    }

    #[test]
    fn cheap_column_dominates() {
        let mut m = MasterProblem::new(vec![1, 2], vec![420.0, 420.0], seeds(1));
        assert!(m.add_column(column(0, &[1], 60.0)));
        assert!(!m.add_column(column(0, &[1], 60.0)));
        let s = m.solve_rmp();
        assert!((s.y[1] - 1.0).abs() < 1e-9);
        assert!(s.z[0].abs() < 1e-9 && (s.z[1] - 1.0).abs() < 1e-9);
        assert!((s.objective - 480.0).abs() < 1e-9);
        let duals = s.duals.unwrap();
        // complementary slackness on the chosen column and z_2
        assert!((60.0 - duals.pi[0] - duals.sigma[0]).abs() < 1e-9);
        assert!((420.0 - duals.pi[1]).abs() < 1e-9);
    }

    #[test]
    fn fractional_lp_branches_to_integer() {
        // Three requests, two vehicles; every column serves two of them, so
        // the LP mixes three pair columns at 1/2.
        let mut m = MasterProblem::new(vec![0, 1, 2], vec![100.0; 3], seeds(2));
        m.add_column(column(0, &[0, 1], 10.0));
        m.add_column(column(0, &[1, 2], 10.0));
        m.add_column(column(1, &[0, 2], 10.0));
        m.add_column(column(1, &[0, 1], 10.0));
        let lp = m.solve_rmp();
        let f = m.solve_final(10_000, None);
        assert!(f.proven_optimal);
        assert!(f.solution.is_integral());
        assert!(f.solution.objective >= lp.objective - 1e-9);
        // brute force over one column per vehicle
        let mut best = f64::INFINITY;
        for &a in &m.by_vehicle[0] {
            for &b in &m.by_vehicle[1] {
                if let Some(s) = m.evaluate_selection(&[a, b]) {
                    best = best.min(s.objective);
                }
            }
        }
        assert!((f.solution.objective - best).abs() < 1e-9);
        for (i, zi) in f.solution.z.iter().enumerate() {
            let covered: f64 = m
                .columns()
                .iter()
                .zip(&f.solution.y)
                .filter(|(c, _)| c.served.contains(&m.requests()[i]))
                .map(|(_, y)| y)
                .sum();
            assert!((covered + zi - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn overlapping_selection_is_rejected() {
        let mut m = MasterProblem::new(vec![0], vec![50.0], seeds(2));
        m.add_column(column(0, &[0], 1.0));
        m.add_column(column(1, &[0], 1.0));
        assert!(m.evaluate_selection(&[2, 3]).is_none());
        assert_eq!(m.evaluate_selection(&[2, 1]).unwrap().objective, 1.0);
    }

    #[test]
    fn lp_dump_names_rows() {
        let mut m = MasterProblem::new(vec![5], vec![420.0], seeds(1));
        m.add_column(column(0, &[5], 30.0));
        let mut buf = Vec::new();
        m.write_lp(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("serve_5:"));
        assert!(text.contains("vehicle_0:"));
        assert!(text.contains("420 z_5"));
    }
}
