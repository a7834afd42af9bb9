//! Domain types shared by every stage of the dispatcher: stops on a metric
//! grid, the travel-time matrix, requests, vehicle states and the two cost
//! knobs (ride-time deviation and the unserved penalty).

use std::fmt;
use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Integer seconds. Every clock value in the crate uses this unit.
pub type Seconds = i64;
pub type StopId = usize;
pub type RequestId = usize;
pub type VehicleId = usize;

/// Matrices up to this size are checked for the triangle inequality
/// exhaustively; larger ones are sampled.
pub const EXHAUSTIVE_TRIANGLE_LIMIT: usize = 200;
const TRIANGLE_SAMPLES: usize = 2_000_000;

#[derive(Debug, Clone, PartialEq)]
pub enum ModelError {
    InvalidGrid(String),
    MatrixShape { expected: usize, found: usize },
    NegativeTime { from: StopId, to: StopId },
    NonZeroDiagonal(StopId),
    Triangle { i: StopId, j: StopId, k: StopId },
    Parse(String),
    Io(String),
}

impl fmt::Display for ModelError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelError::InvalidGrid(msg) => write!(f, "invalid grid: {msg}"),
            ModelError::MatrixShape { expected, found } => {
                write!(f, "matrix shape mismatch: expected {expected} entries, found {found}")
            }
            ModelError::NegativeTime { from, to } => {
                write!(f, "negative travel time from {from} to {to}")
            }
            ModelError::NonZeroDiagonal(i) => write!(f, "t[{i}][{i}] must be zero"),
            ModelError::Triangle { i, j, k } => write!(
                f,
                "triangle inequality violated: t[{i}][{k}] > t[{i}][{j}] + t[{j}][{k}]"
            ),
            ModelError::Parse(msg) => write!(f, "parse error: {msg}"),
            ModelError::Io(msg) => write!(f, "io error: {msg}"),
        }
    }
}

impl std::error::Error for ModelError {}

impl From<std::io::Error> for ModelError {
    fn from(e: std::io::Error) -> Self {
        ModelError::Io(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stop {
    pub id: StopId,
    /// (row, col) of the grid cell.
    pub cell: (usize, usize),
    /// Cell center in planar meters.
    pub position: (f64, f64),
}

/// Uniform square grid over a planar region. Every cell carries one virtual
/// stop at its center; stop ids are row-major.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub rows: usize,
    pub cols: usize,
    pub cell_m: f64,
}

impl Grid {
    pub fn new(width_m: f64, height_m: f64, cell_m: f64) -> Result<Self, ModelError> {
        if !(cell_m > 0.0) || !cell_m.is_finite() {
            return Err(ModelError::InvalidGrid(format!("cell size {cell_m} must be positive")));
        }
        if !(width_m > 0.0) || !(height_m > 0.0) {
            return Err(ModelError::InvalidGrid(format!(
                "region {width_m}x{height_m} must have positive extent"
            )));
        }
        let cols = (width_m / cell_m).ceil() as usize;
        let rows = (height_m / cell_m).ceil() as usize;
        Ok(Grid { rows, cols, cell_m })
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn width_m(&self) -> f64 {
        self.cols as f64 * self.cell_m
    }

    pub fn height_m(&self) -> f64 {
        self.rows as f64 * self.cell_m
    }

    pub fn stop_id(&self, row: usize, col: usize) -> StopId {
        row * self.cols + col
    }

    pub fn stop(&self, id: StopId) -> Stop {
        let (row, col) = (id / self.cols, id % self.cols);
        Stop {
            id,
            cell: (row, col),
            position: ((col as f64 + 0.5) * self.cell_m, (row as f64 + 0.5) * self.cell_m),
        }
    }

    pub fn stops(&self) -> Vec<Stop> {
        (0..self.len()).map(|id| self.stop(id)).collect()
    }

    /// Cell containing a planar point. Points outside the region are clamped
    /// to the nearest boundary cell.
    pub fn cell_of(&self, x: f64, y: f64) -> (usize, usize) {
        let clamp = |v: f64, n: usize| -> usize {
            if !v.is_finite() || v < 0.0 {
                0
            } else {
                ((v / self.cell_m).floor() as usize).min(n - 1)
            }
        };
        (clamp(y, self.rows), clamp(x, self.cols))
    }

    pub fn snap(&self, x: f64, y: f64) -> StopId {
        let (row, col) = self.cell_of(x, y);
        self.stop_id(row, col)
    }

    /// Manhattan travel times between cell centers at a constant speed,
    /// rounded to whole seconds. Rounding a scaled L1 metric keeps it a
    /// metric only when every per-cell time is an integer, so the per-cell
    /// time is rounded first.
    pub fn manhattan_matrix(&self, speed_mps: f64) -> TravelTimeMatrix {
        let per_cell = (self.cell_m / speed_mps).round().max(1.0) as Seconds;
        let n = self.len();
        let mut t = vec![0; n * n];
        for a in 0..n {
            let (ra, ca) = (a / self.cols, a % self.cols);
            for b in 0..n {
                let (rb, cb) = (b / self.cols, b % self.cols);
                let cells = ra.abs_diff(rb) + ca.abs_diff(cb);
                t[a * n + b] = cells as Seconds * per_cell;
            }
        }
        TravelTimeMatrix { n, t }
    }
}

/// Convenience wrapper returning the stops and the grid used to snap points.
pub fn build_grid(width_m: f64, height_m: f64, cell_m: f64) -> Result<(Vec<Stop>, Grid), ModelError> {
    let grid = Grid::new(width_m, height_m, cell_m)?;
    Ok((grid.stops(), grid))
}

/// Dense all-pairs travel times in seconds. Construction validates that the
/// matrix is a quasi-metric (zero diagonal, nonnegative, triangle inequality).
#[derive(Debug, Clone, PartialEq)]
pub struct TravelTimeMatrix {
    n: usize,
    t: Vec<Seconds>,
}

impl TravelTimeMatrix {
    pub fn new(n: usize, t: Vec<Seconds>) -> Result<Self, ModelError> {
        if t.len() != n * n {
            return Err(ModelError::MatrixShape { expected: n * n, found: t.len() });
        }
        let m = TravelTimeMatrix { n, t };
        m.validate()?;
        Ok(m)
    }

    pub fn from_fn(n: usize, f: impl Fn(StopId, StopId) -> Seconds) -> Result<Self, ModelError> {
        let t = (0..n * n).map(|k| f(k / n, k % n)).collect();
        Self::new(n, t)
    }

    /// Shortest-path closure of arbitrary nonnegative arc times. The result
    /// always satisfies the triangle inequality.
    pub fn metric_closure(n: usize, mut t: Vec<Seconds>) -> Result<Self, ModelError> {
        if t.len() != n * n {
            return Err(ModelError::MatrixShape { expected: n * n, found: t.len() });
        }
        for i in 0..n {
            t[i * n + i] = 0;
        }
        for k in 0..n {
            for i in 0..n {
                let ik = t[i * n + k];
                for j in 0..n {
                    let via = ik + t[k * n + j];
                    if via < t[i * n + j] {
                        t[i * n + j] = via;
                    }
                }
            }
        }
        Self::new(n, t)
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, from: StopId, to: StopId) -> Seconds {
        self.t[from * self.n + to]
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let n = self.n;
        for i in 0..n {
            if self.get(i, i) != 0 {
                return Err(ModelError::NonZeroDiagonal(i));
            }
            for j in 0..n {
                if self.get(i, j) < 0 {
                    return Err(ModelError::NegativeTime { from: i, to: j });
                }
            }
        }
        if n <= EXHAUSTIVE_TRIANGLE_LIMIT {
            for i in 0..n {
                for j in 0..n {
                    let ij = self.get(i, j);
                    for k in 0..n {
                        if self.get(i, k) > ij + self.get(j, k) {
                            return Err(ModelError::Triangle { i, j, k });
                        }
                    }
                }
            }
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(0x7472_6961);
            for _ in 0..TRIANGLE_SAMPLES {
                let (i, j, k) = (rng.random_range(0..n), rng.random_range(0..n), rng.random_range(0..n));
                if self.get(i, k) > self.get(i, j) + self.get(j, k) {
                    return Err(ModelError::Triangle { i, j, k });
                }
            }
        }
        Ok(())
    }

    /// Reads the CSV layout: first line `n`, then `n` rows of `n` integers.
    pub fn read_csv<R: BufRead>(reader: R) -> Result<Self, ModelError> {
        let mut lines = reader.lines();
        let header = lines
            .next()
            .ok_or_else(|| ModelError::Parse("empty matrix file".into()))??;
        let n: usize = header
            .trim()
            .parse()
            .map_err(|_| ModelError::Parse(format!("bad size line {header:?}")))?;
        let mut t = Vec::with_capacity(n * n);
        for (row, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let before = t.len();
            for cell in line.split(',') {
                let v: Seconds = cell
                    .trim()
                    .parse()
                    .map_err(|_| ModelError::Parse(format!("row {row}: bad entry {cell:?}")))?;
                t.push(v);
            }
            if t.len() - before != n {
                return Err(ModelError::Parse(format!(
                    "row {row}: expected {n} entries, found {}",
                    t.len() - before
                )));
            }
        }
        Self::new(n, t)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{}", self.n)?;
        for i in 0..self.n {
            let row = &self.t[i * self.n..(i + 1) * self.n];
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    }
}

/// One rider group asking to travel from `origin` to `dest`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Request {
    pub id: RequestId,
    /// Earliest pickup time (release).
    pub release: Seconds,
    pub origin: StopId,
    pub dest: StopId,
    pub size: u32,
    /// Shortest travel time origin -> dest.
    pub direct: Seconds,
}

impl Request {
    pub fn new(
        id: RequestId,
        release: Seconds,
        origin: StopId,
        dest: StopId,
        size: u32,
        matrix: &TravelTimeMatrix,
    ) -> Self {
        Request { id, release, origin, dest, size, direct: matrix.get(origin, dest) }
    }
}

/// A rider already in a vehicle at its departing stop.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OnboardRider {
    pub request: RequestId,
    pub picked_up_at: Seconds,
    pub dest: StopId,
    pub size: u32,
    pub direct: Seconds,
}

/// Vehicle as seen by one static solve. `onboard` is kept in the order the
/// incumbent plan drops riders off.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub id: VehicleId,
    pub depart_stop: StopId,
    pub depart_time: Seconds,
    pub load: u32,
    pub onboard: Vec<OnboardRider>,
    pub capacity: u32,
    pub shift_start: Seconds,
    pub shift_end: Seconds,
}

impl VehicleState {
    pub fn idle(id: VehicleId, stop: StopId, time: Seconds, capacity: u32) -> Self {
        VehicleState {
            id,
            depart_stop: stop,
            depart_time: time,
            load: 0,
            onboard: Vec::new(),
            capacity,
            shift_start: Seconds::MIN,
            shift_end: Seconds::MAX,
        }
    }

    pub fn check(&self) -> Result<(), String> {
        let sum: u32 = self.onboard.iter().map(|r| r.size).sum();
        if sum != self.load {
            return Err(format!("vehicle {}: load {} != onboard sum {sum}", self.id, self.load));
        }
        if self.load > self.capacity {
            return Err(format!("vehicle {}: load {} exceeds capacity {}", self.id, self.load, self.capacity));
        }
        if self.depart_time < self.shift_start {
            return Err(format!("vehicle {}: departs before its shift", self.id));
        }
        Ok(())
    }
}

/// Ride-time allowance: a rider may spend up to `max(alpha * t, beta + t)`
/// in the vehicle, where `t` is the direct trip time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviationPolicy {
    pub alpha: f64,
    pub beta: Seconds,
}

impl Default for DeviationPolicy {
    fn default() -> Self {
        DeviationPolicy { alpha: 1.5, beta: 240 }
    }
}

impl DeviationPolicy {
    /// Largest admissible in-vehicle time, floored to whole seconds (ride
    /// times are integers, so `ride <= floor(x)` iff `ride <= x`).
    pub fn bound(&self, direct: Seconds) -> Seconds {
        let scaled = (self.alpha * direct as f64 + 1e-9).floor() as Seconds;
        scaled.max(self.beta + direct)
    }
}

pub fn deviation_bound(policy: &DeviationPolicy, direct: Seconds) -> Seconds {
    policy.bound(direct)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltyParams {
    pub delta: f64,
    pub epoch_len: Seconds,
}

impl Default for PenaltyParams {
    fn default() -> Self {
        PenaltyParams { delta: 420.0, epoch_len: 30 }
    }
}

impl PenaltyParams {
    /// Cost of leaving a request released at `release` unserved when the
    /// clock reads `now`. Doubles every ten epochs of waiting; never below
    /// `delta`.
    pub fn penalty(&self, now: Seconds, release: Seconds) -> f64 {
        let elapsed = (now - release).max(0) as f64;
        self.delta * (elapsed / (10.0 * self.epoch_len as f64)).exp2()
    }
}

pub fn penalty(params: &PenaltyParams, now: Seconds, release: Seconds) -> f64 {
    params.penalty(now, release)
}
