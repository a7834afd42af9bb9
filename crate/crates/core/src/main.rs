use std::fs;
use std::io::BufReader;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{anyhow, Context, Result};
use clap::Parser;

use ridepool::io::{ingest, read_trips, synth, write_trips, GridSpec, Projection, RateProfile, RunConfig};
use ridepool::model::{DeviationPolicy, PenaltyParams, TravelTimeMatrix};
use ridepool::realtime::{place_fleet, run, EpochConfig, SolverKind};
use ridepool::report::write_report;

/// Replays ride requests through a rolling-horizon dispatcher and writes
/// wait, detour and solver statistics.
#[derive(Debug, Parser)]
#[command(name = "ridepool", version)]
struct Cli {
    /// Trip CSV: request_time,pickup_lon,pickup_lat,dropoff_lon,dropoff_lat,passengers
    #[arg(long, conflicts_with = "synth", required_unless_present = "synth")]
    trips: Option<PathBuf>,
    /// Generate N synthetic trips instead of reading a file.
    #[arg(long, value_name = "N")]
    synth: Option<usize>,
    /// Horizon of synthetic demand in seconds.
    #[arg(long, default_value_t = 3600)]
    horizon: i64,
    /// Synthetic demand peaks mid-horizon at this multiple of the base rate.
    #[arg(long, default_value_t = 1.0)]
    peak: f64,
    #[arg(long, default_value_t = 2000)]
    vehicles: usize,
    #[arg(long, default_value_t = 5)]
    capacity: u32,
    #[arg(long, default_value_t = 1.5)]
    alpha: f64,
    #[arg(long, default_value_t = 240)]
    beta: i64,
    #[arg(long, default_value_t = 420.0)]
    delta: f64,
    #[arg(long, default_value_t = 30)]
    epoch_len: i64,
    /// Seconds of wall clock allowed per epoch solve; defaults to the epoch length.
    #[arg(long)]
    deadline: Option<f64>,
    /// Travel-time matrix CSV (first line n, then n rows); defaults to Manhattan times on the grid.
    #[arg(long)]
    matrix: Option<PathBuf>,
    #[arg(long, default_value = "2000x2000:200", value_name = "WxH:CELL")]
    grid: GridSpec,
    /// Vehicle speed for grid travel times, m/s.
    #[arg(long, default_value_t = 5.0)]
    speed: f64,
    /// South-west corner of the grid as LON,LAT.
    #[arg(long, value_parser = parse_origin)]
    origin: Option<Projection>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Solve every epoch exhaustively; tiny traces only.
    #[arg(long)]
    oracle_mode: bool,
    /// Let every vehicle consider every request.
    #[arg(long)]
    no_prune: bool,
}

fn parse_origin(s: &str) -> Result<Projection, String> {
    let (lon, lat) = s.split_once(',').ok_or("origin must be LON,LAT")?;
    let lon0 = lon.trim().parse().map_err(|_| format!("bad longitude {lon:?}"))?;
    let lat0 = lat.trim().parse().map_err(|_| format!("bad latitude {lat:?}"))?;
    Ok(Projection { lon0, lat0 })
}

fn config(cli: &Cli) -> RunConfig {
    RunConfig {
        vehicles: cli.vehicles,
        capacity: cli.capacity,
        alpha: cli.alpha,
        beta: cli.beta,
        delta: cli.delta,
        epoch_len: cli.epoch_len,
        deadline: Some(cli.deadline.unwrap_or(cli.epoch_len as f64)),
        grid: cli.grid,
        speed_mps: cli.speed,
        projection: cli.origin.unwrap_or_default(),
        seed: cli.seed,
        prune: !cli.no_prune,
        oracle: cli.oracle_mode,
    }
}

/// `Ok(false)` when some epoch overran its deadline. Errors carry whether
/// they stem from the input.
fn execute(cli: &Cli) -> Result<bool, (bool, anyhow::Error)> {
    let input = |e: anyhow::Error| (true, e);
    let cfg = config(cli);
    if cfg.vehicles == 0 || cfg.capacity == 0 {
        return Err(input(anyhow!("need at least one vehicle of positive capacity")));
    }
    if !(cfg.speed_mps > 0.0) {
        return Err(input(anyhow!("speed must be positive")));
    }
    let grid = cfg.grid.build().map_err(|e| input(e.into()))?;
    fs::create_dir_all(&cli.out)
        .with_context(|| format!("cannot create output directory {}", cli.out.display()))
        .map_err(input)?;

    let (trips, mut matrix) = match (cli.synth, &cli.trips) {
        (Some(n), _) => {
            let profile = if cli.peak > 1.0 { RateProfile::Peak { ratio: cli.peak } } else { RateProfile::Flat };
            let s = synth(n, cli.horizon.max(1), profile, &cfg, cfg.seed);
            let write = || -> Result<()> {
                write_trips(fs::File::create(cli.out.join("trips.csv"))?, &s.trips)?;
                s.matrix.write_csv(fs::File::create(cli.out.join("matrix.csv"))?)?;
                Ok(())
            };
            write().map_err(|e| (false, e))?;
            (s.trips, Some(s.matrix))
        }
        (None, Some(path)) => {
            let file = fs::File::open(path).with_context(|| format!("cannot open {}", path.display())).map_err(input)?;
            let got = read_trips(BufReader::new(file)).map_err(|e| input(e.into()))?;
            for (line, why) in &got.skipped {
                eprintln!("skipped line {line}: {why}");
            }
            (got.trips, None)
        }
        (None, None) => return Err(input(anyhow!("either --trips or --synth is required"))),
    };
    if let Some(path) = &cli.matrix {
        let file = fs::File::open(path).with_context(|| format!("cannot open {}", path.display())).map_err(input)?;
        matrix = Some(TravelTimeMatrix::read_csv(BufReader::new(file)).map_err(|e| input(e.into()))?);
    }
    let matrix = matrix.unwrap_or_else(|| grid.manhattan_matrix(cfg.speed_mps));
    if matrix.n() != grid.len() {
        return Err(input(anyhow!(
            "matrix has {} stops but the grid has {}",
            matrix.n(),
            grid.len()
        )));
    }

    let requests = ingest(&trips, &grid, &cfg.projection, &matrix, cfg.capacity);
    let fleet = place_fleet(grid.len(), cfg.vehicles, cfg.capacity, cfg.seed);
    let deadline = cfg.deadline.map(Duration::from_secs_f64);
    let epoch = EpochConfig {
        epoch_len: cfg.epoch_len,
        deadline: if cfg.oracle { None } else { deadline },
        penalty: PenaltyParams { delta: cfg.delta, epoch_len: cfg.epoch_len },
        deviation: DeviationPolicy { alpha: cfg.alpha, beta: cfg.beta },
        solver: if cfg.oracle { SolverKind::Oracle } else { SolverKind::ColumnGeneration },
        prune: cfg.prune,
        ..EpochConfig::default()
    };
    epoch.validate().map_err(|e| input(e.into()))?;
    let report = run(&matrix, &requests, &fleet, &epoch).map_err(|e| input(e.into()))?;
    let summary = write_report(&report, epoch.deadline, &cli.out).map_err(|e| (false, e))?;
    eprintln!(
        "{} riders, mean wait {:.1}s, mean deviation {:.1}s, {} epochs; results in {}",
        summary.riders,
        summary.wait_s.mean,
        summary.deviation_s.mean,
        summary.epochs,
        cli.out.display()
    );
    if !report.violations.is_empty() || !report.chain_intact {
        return Err((false, anyhow!("audit failed: {:?}", report.violations)));
    }
    let overruns = report.deadline_overruns(epoch.deadline);
    if overruns > 0 {
        eprintln!("{overruns} epochs overran the solve deadline");
    }
    Ok(overruns == 0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(3),
        Err((input, e)) => {
            eprintln!("error: {e:#}");
            if input {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
