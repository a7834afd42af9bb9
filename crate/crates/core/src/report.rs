//! Summary statistics and CSV outputs of a simulation.
//!
//! `summary.json` holds only quantities that are a function of the inputs,
//! so identical runs write identical bytes. Wall-clock measurements go to
//! `timing.json` and `timing.csv`.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Duration;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use crate::realtime::SimulationReport;

pub const WAIT_BIN: i64 = 30;
pub const DEVIATION_BIN: i64 = 15;
pub const ASSIGNMENT_BIN: i64 = 30;

/// How the column ratio is normalized, spelled out in every summary.
pub const COLUMN_RATIO_DENOMINATOR: &str =
    "vehicles * (P + P*(P-1)/2) per epoch, P = requests in the epoch's static problem; epochs with P = 0 excluded";

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Moments {
    pub count: usize,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub max: f64,
}

impl Moments {
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Moments::default();
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Moments { count: values.len(), mean, std: var.sqrt(), max }
    }
}

fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub riders: usize,
    pub completed: usize,
    pub vehicles: usize,
    pub epochs: usize,
    pub final_clock: i64,
    pub wait_s: Moments,
    pub deviation_s: Moments,
    pub final_assignment_s: Moments,
    pub pct_reassigned: f64,
    pub columns_total: usize,
    pub column_ratio_denominator: String,
    pub column_ratio_mean: f64,
    pub column_ratio_median: f64,
    pub column_ratio_max: f64,
    pub mean_busy_vehicles: f64,
    pub mean_onboard_load: f64,
    pub rmp_monotone: bool,
    pub solver_deadline_epochs: usize,
    pub chain_intact: bool,
    pub conservation_ok: bool,
    pub escalation_ok: bool,
    pub violations: usize,
}

pub fn summarize(report: &SimulationReport) -> Summary {
    let waits: Vec<f64> = report.riders.iter().filter_map(|r| r.wait()).map(|w| w as f64).collect();
    let devs: Vec<f64> =
        report.riders.iter().filter_map(|r| r.deviation(report.service)).map(|d| d as f64).collect();
    let assign: Vec<f64> =
        report.riders.iter().filter_map(|r| r.final_assignment_time()).map(|t| t as f64).collect();
    // the ratio is undefined for epochs without requests
    let ratios: Vec<f64> = report.epochs.iter().filter(|e| e.requests > 0).map(|e| e.column_ratio).collect();
    let n_epochs = report.epochs.len().max(1) as f64;
    let reassigned = report.riders.iter().filter(|r| r.reassigned).count();
    Summary {
        riders: report.riders.len(),
        completed: report.riders.iter().filter(|r| r.dropoff.is_some()).count(),
        vehicles: report.vehicles,
        epochs: report.epochs.len(),
        final_clock: report.final_clock,
        wait_s: Moments::of(&waits),
        deviation_s: Moments::of(&devs),
        final_assignment_s: Moments::of(&assign),
        pct_reassigned: if report.riders.is_empty() {
            0.0
        } else {
            100.0 * reassigned as f64 / report.riders.len() as f64
        },
        columns_total: report.epochs.iter().map(|e| e.columns).sum(),
        column_ratio_denominator: COLUMN_RATIO_DENOMINATOR.to_string(),
        column_ratio_mean: ratios.iter().sum::<f64>() / ratios.len().max(1) as f64,
        column_ratio_median: median(&ratios),
        column_ratio_max: ratios.iter().copied().fold(0.0, f64::max),
        mean_busy_vehicles: report.epochs.iter().map(|e| e.busy_vehicles as f64).sum::<f64>() / n_epochs,
        mean_onboard_load: report.epochs.iter().map(|e| e.onboard_load as f64).sum::<f64>() / n_epochs,
        rmp_monotone: report.epochs.iter().all(|e| e.rmp_monotone),
        solver_deadline_epochs: report.epochs.iter().filter(|e| e.deadline_hit).count(),
        chain_intact: report.chain_intact,
        conservation_ok: report.conservation_ok,
        escalation_ok: report.escalation_ok,
        violations: report.violations.len(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub total_solve_ms: f64,
    pub max_solve_ms: f64,
    pub deadline_ms: Option<f64>,
    pub overrun_epochs: usize,
}

pub fn timing(report: &SimulationReport, deadline: Option<Duration>) -> Timing {
    Timing {
        total_solve_ms: report.solve_ms.iter().sum(),
        max_solve_ms: report.solve_ms.iter().copied().fold(0.0, f64::max),
        deadline_ms: deadline.map(|d| d.as_secs_f64() * 1e3),
        overrun_epochs: report.deadline_overruns(deadline),
    }
}

/// `(bin_start, count)` over fixed-width bins, empty bins inside the range
/// included.
pub fn histogram(values: &[i64], width: i64) -> Vec<(i64, usize)> {
    let Some(&lo) = values.iter().min() else { return Vec::new() };
    let hi = *values.iter().max().expect("non-empty");
    let first = lo.div_euclid(width);
    let last = hi.div_euclid(width);
    let mut counts = vec![0usize; (last - first + 1) as usize];
    for v in values {
        counts[(v.div_euclid(width) - first) as usize] += 1;
    }
    counts.into_iter().enumerate().map(|(i, c)| ((first + i as i64) * width, c)).collect()
}

fn write_histogram(path: &Path, values: &[i64], width: i64) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("cannot write {}", path.display()))?;
    w.write_record(["bin_start", "bin_end", "count"])?;
    for (start, count) in histogram(values, width) {
        w.write_record([start.to_string(), (start + width).to_string(), count.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes every output file into `dir`, creating it if needed.
pub fn write_report(report: &SimulationReport, deadline: Option<Duration>, dir: &Path) -> Result<Summary> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create output directory {}", dir.display()))?;
    let summary = summarize(report);
    let mut f = fs::File::create(dir.join("summary.json"))
        .with_context(|| format!("cannot write into {}", dir.display()))?;
    serde_json::to_writer_pretty(&mut f, &summary)?;
    writeln!(f)?;
    let mut f = fs::File::create(dir.join("timing.json"))?;
    serde_json::to_writer_pretty(&mut f, &timing(report, deadline))?;
    writeln!(f)?;

    let waits: Vec<i64> = report.riders.iter().filter_map(|r| r.wait()).collect();
    let devs: Vec<i64> = report.riders.iter().filter_map(|r| r.deviation(report.service)).collect();
    let assign: Vec<i64> = report.riders.iter().filter_map(|r| r.final_assignment_time()).collect();
    write_histogram(&dir.join("wait_hist.csv"), &waits, WAIT_BIN)?;
    write_histogram(&dir.join("deviation_hist.csv"), &devs, DEVIATION_BIN)?;
    write_histogram(&dir.join("assignment_hist.csv"), &assign, ASSIGNMENT_BIN)?;

    let mut w = csv::Writer::from_path(dir.join("epochs.csv"))?;
    w.write_record([
        "epoch", "clock", "new_requests", "requests", "columns", "column_ratio", "objective", "lp_bound",
        "iterations", "rmp_monotone", "deadline_hit", "busy_vehicles", "onboard_riders", "onboard_load",
        "completed", "pending",
    ])?;
    for e in &report.epochs {
        w.write_record([
            e.epoch.to_string(),
            e.clock.to_string(),
            e.new_requests.to_string(),
            e.requests.to_string(),
            e.columns.to_string(),
            e.column_ratio.to_string(),
            e.objective.to_string(),
            e.lp_bound.to_string(),
            e.iterations.to_string(),
            e.rmp_monotone.to_string(),
            e.deadline_hit.to_string(),
            e.busy_vehicles.to_string(),
            e.onboard_riders.to_string(),
            e.onboard_load.to_string(),
            e.completed.to_string(),
            e.pending.to_string(),
        ])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("timing.csv"))?;
    w.write_record(["epoch", "solve_ms"])?;
    for (e, ms) in report.epochs.iter().zip(&report.solve_ms) {
        w.write_record([e.epoch.to_string(), format!("{ms:.3}")])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("riders.csv"))?;
    w.write_record([
        "id", "release", "origin", "dest", "size", "direct", "vehicle", "pickup", "dropoff", "wait", "deviation",
        "final_assignment", "reassigned",
    ])?;
    let opt = |v: Option<i64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in &report.riders {
        w.write_record([
            r.id.to_string(),
            r.release.to_string(),
            r.origin.to_string(),
            r.dest.to_string(),
            r.size.to_string(),
            r.direct.to_string(),
            r.vehicle.map(|v| v.to_string()).unwrap_or_default(),
            opt(r.pickup),
            opt(r.dropoff),
            opt(r.wait()),
            opt(r.deviation(report.service)),
            opt(r.final_assignment_time()),
            r.reassigned.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(summary)
}
