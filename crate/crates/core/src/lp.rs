//! Small dense linear programs in equality form: `min c'x  s.t.  Ax = b, x >= 0`.
//!
//! The master problem only ever needs primal values and row duals of a few
//! hundred columns over `|P| + |V|` rows, so a dense two-phase tableau is
//! plenty. Anything else can plug in through [`LpSolver`].

use std::io::Write;

#[derive(Debug, Clone, PartialEq)]
pub struct LpColumn {
    pub cost: f64,
    /// (row, coefficient) pairs; rows not listed are zero.
    pub entries: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub rhs: Vec<f64>,
    pub columns: Vec<LpColumn>,
}

impl LinearProgram {
    pub fn new(rhs: Vec<f64>) -> Self {
        LinearProgram { rhs, columns: Vec::new() }
    }

    pub fn n_rows(&self) -> usize {
        self.rhs.len()
    }

    pub fn push(&mut self, cost: f64, entries: Vec<(usize, f64)>) -> usize {
        self.columns.push(LpColumn { cost, entries });
        self.columns.len() - 1
    }

    /// CPLEX-style LP text, for inspecting a problem with an external solver.
    pub fn write_lp<W: Write>(&self, mut w: W, col_names: &[String], row_names: &[String]) -> std::io::Result<()> {
        let name = |j: usize| col_names.get(j).cloned().unwrap_or_else(|| format!("x{j}"));
        writeln!(w, "Minimize")?;
        write!(w, " obj:")?;
        for (j, c) in self.columns.iter().enumerate() {
            write!(w, " {} {} {}", if c.cost < 0.0 { "-" } else { "+" }, c.cost.abs(), name(j))?;
        }
        writeln!(w)?;
        writeln!(w, "Subject To")?;
        for (i, b) in self.rhs.iter().enumerate() {
            let row = row_names.get(i).cloned().unwrap_or_else(|| format!("r{i}"));
            write!(w, " {row}:")?;
            for (j, c) in self.columns.iter().enumerate() {
                for &(r, a) in &c.entries {
                    if r == i {
                        write!(w, " {} {} {}", if a < 0.0 { "-" } else { "+" }, a.abs(), name(j))?;
                    }
                }
            }
            writeln!(w, " = {b}")?;
        }
        writeln!(w, "End")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    /// One dual per row, such that `c_j - duals' A_j >= 0` at optimality.
    pub duals: Vec<f64>,
}

pub trait LpSolver: Sync {
    fn solve(&self, lp: &LinearProgram) -> LpSolution;
}

#[derive(Debug, Clone, Copy)]
pub struct DenseSimplex {
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Degenerate pivots in a row before switching to Bland's rule.
    pub bland_after: usize,
}

impl Default for DenseSimplex {
    fn default() -> Self {
        DenseSimplex { tolerance: 1e-9, max_iterations: 50_000, bland_after: 30 }
    }
}

struct Tableau {
    rows: usize,
    /// structural + artificial columns
    cols: usize,
    n_struct: usize,
    /// rows x (cols + 1), last entry of each row is the rhs
    a: Vec<f64>,
    /// reduced costs, last entry is minus the objective
    obj: Vec<f64>,
    basis: Vec<usize>,
}

impl Tableau {
    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.a[i * (self.cols + 1) + j]
    }

    #[inline]
    fn rhs(&self, i: usize) -> f64 {
        self.a[i * (self.cols + 1) + self.cols]
    }

    fn pivot(&mut self, r: usize, s: usize) {
        let w = self.cols + 1;
        let p = self.a[r * w + s];
        for v in &mut self.a[r * w..(r + 1) * w] {
            *v /= p;
        }
        let pivot_row: Vec<f64> = self.a[r * w..(r + 1) * w].to_vec();
        for i in 0..self.rows {
            if i == r {
                continue;
            }
            let f = self.a[i * w + s];
            if f != 0.0 {
                for (v, pr) in self.a[i * w..(i + 1) * w].iter_mut().zip(&pivot_row) {
                    *v -= f * pr;
                }
            }
        }
        let f = self.obj[s];
        if f != 0.0 {
            for (v, pr) in self.obj.iter_mut().zip(&pivot_row) {
                *v -= f * pr;
            }
        }
        self.basis[r] = s;
    }

    /// Rebuilds the reduced-cost row for `costs` under the current basis.
    fn price_out(&mut self, costs: &[f64]) {
        self.obj = costs.to_vec();
        self.obj.push(0.0);
        for i in 0..self.rows {
            let cb = costs[self.basis[i]];
            if cb != 0.0 {
                let w = self.cols + 1;
                for (v, a) in self.obj.iter_mut().zip(&self.a[i * w..(i + 1) * w]) {
                    *v -= cb * a;
                }
            }
        }
    }
}

enum Outcome {
    Optimal,
    Unbounded,
    IterationLimit,
}

impl DenseSimplex {
    fn iterate(&self, t: &mut Tableau, allowed: usize, iterations: &mut usize) -> Outcome {
        let tol = self.tolerance;
        let mut degenerate = 0usize;
        loop {
            if *iterations >= self.max_iterations {
                return Outcome::IterationLimit;
            }
            let bland = degenerate >= self.bland_after;
            let mut enter = None;
            let mut best = -tol;
            for j in 0..allowed {
                let d = t.obj[j];
                if d < best {
                    enter = Some(j);
                    if bland {
                        break;
                    }
                    best = d;
                }
            }
            let Some(s) = enter else { return Outcome::Optimal };

            let mut leave: Option<(usize, f64)> = None;
            for i in 0..t.rows {
                let a = t.at(i, s);
                if a > tol {
                    let ratio = t.rhs(i) / a;
                    match leave {
                        None => leave = Some((i, ratio)),
                        Some((r, best_ratio)) => {
                            if ratio < best_ratio - tol
                                || (ratio <= best_ratio + tol && t.basis[i] < t.basis[r])
                            {
                                leave = Some((i, ratio));
                            }
                        }
                    }
                }
            }
            let Some((r, ratio)) = leave else { return Outcome::Unbounded };
            if ratio <= tol {
                degenerate += 1;
            } else {
                degenerate = 0;
            }
            t.pivot(r, s);
            *iterations += 1;
        }
    }
}

impl LpSolver for DenseSimplex {
    fn solve(&self, lp: &LinearProgram) -> LpSolution {
        let m = lp.n_rows();
        let n = lp.columns.len();
        let cols = n + m;
        let w = cols + 1;
        let sign: Vec<f64> = lp.rhs.iter().map(|&b| if b < 0.0 { -1.0 } else { 1.0 }).collect();

        let mut a = vec![0.0; m * w];
        for (j, col) in lp.columns.iter().enumerate() {
            for &(i, v) in &col.entries {
                a[i * w + j] += sign[i] * v;
            }
        }
        for i in 0..m {
            a[i * w + n + i] = 1.0;
            a[i * w + cols] = sign[i] * lp.rhs[i];
        }
        let mut t = Tableau { rows: m, cols, n_struct: n, a, obj: Vec::new(), basis: (n..n + m).collect() };

        // phase one: drive the artificials to zero
        let mut phase1 = vec![0.0; cols];
        for c in &mut phase1[n..] {
            *c = 1.0;
        }
        t.price_out(&phase1);
        let mut iterations = 0;
        match self.iterate(&mut t, cols, &mut iterations) {
            Outcome::Optimal => {}
            Outcome::Unbounded => unreachable!("phase one is bounded below by zero"),
            Outcome::IterationLimit => {
                return LpSolution {
                    status: LpStatus::IterationLimit,
                    x: vec![0.0; n],
                    objective: f64::INFINITY,
                    duals: vec![0.0; m],
                }
            }
        }
        let scale = 1.0 + lp.rhs.iter().map(|b| b.abs()).sum::<f64>();
        if -t.obj[cols] > 1e-7 * scale {
            return LpSolution {
                status: LpStatus::Infeasible,
                x: vec![0.0; n],
                objective: f64::INFINITY,
                duals: vec![0.0; m],
            };
        }
        // pivot zero-level artificials out where a structural column allows it
        for i in 0..m {
            if t.basis[i] >= n {
                if let Some(j) = (0..n).find(|&j| t.at(i, j).abs() > 1e-7) {
                    t.pivot(i, j);
                }
            }
        }

        // phase two: artificials may stay basic at zero but never re-enter
        let mut costs: Vec<f64> = lp.columns.iter().map(|c| c.cost).collect();
        costs.resize(cols, 0.0);
        t.price_out(&costs);
        let allowed = t.n_struct;
        let status = match self.iterate(&mut t, allowed, &mut iterations) {
            Outcome::Optimal => LpStatus::Optimal,
            Outcome::Unbounded => LpStatus::Unbounded,
            Outcome::IterationLimit => LpStatus::IterationLimit,
        };

        let mut x = vec![0.0; n];
        for i in 0..m {
            let j = t.basis[i];
            if j < n {
                x[j] = t.rhs(i).max(0.0);
            }
        }
        // columns n..n+m of the tableau hold B^-1 of the sign-adjusted rows
        let duals: Vec<f64> = (0..m)
            .map(|k| {
                let y: f64 = (0..m).map(|i| costs[t.basis[i]] * t.at(i, n + k)).sum();
                y * sign[k]
            })
            .collect();
        let objective = lp.columns.iter().zip(&x).map(|(c, v)| c.cost * v).sum();
        LpSolution { status, x, objective, duals }
    }
}
