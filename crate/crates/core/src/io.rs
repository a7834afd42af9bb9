//! Trip files, request splitting, synthetic demand and run configuration.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use chrono::{DateTime, NaiveDateTime};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::model::{Grid, Request, Seconds, TravelTimeMatrix};

pub const TRIP_HEADER: [&str; 6] =
    ["request_time", "pickup_lon", "pickup_lat", "dropoff_lon", "dropoff_lat", "passengers"];

/// Largest share of malformed rows tolerated in a trip file.
pub const MAX_MALFORMED_SHARE: f64 = 0.01;

const EARTH_RADIUS_M: f64 = 6_371_000.0;

#[derive(Debug)]
pub enum IoError {
    Header(String),
    TooManyMalformed { malformed: usize, total: usize, first: String },
    Empty,
    Csv(csv::Error),
    Io(std::io::Error),
}

impl fmt::Display for IoError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IoError::Header(h) => write!(f, "unexpected trip header {h:?}; want {}", TRIP_HEADER.join(",")),
            IoError::TooManyMalformed { malformed, total, first } => {
                write!(f, "{malformed} of {total} rows malformed (first: {first})")
            }
            IoError::Empty => f.write_str("trip file has no rows"),
            IoError::Csv(e) => write!(f, "csv: {e}"),
            IoError::Io(e) => write!(f, "io: {e}"),
        }
    }
}

impl std::error::Error for IoError {}

impl From<csv::Error> for IoError {
    fn from(e: csv::Error) -> Self {
        IoError::Csv(e)
    }
}

impl From<std::io::Error> for IoError {
    fn from(e: std::io::Error) -> Self {
        IoError::Io(e)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripRecord {
    /// Seconds since the first request.
    pub request_time: Seconds,
    pub pickup_lon: f64,
    pub pickup_lat: f64,
    pub dropoff_lon: f64,
    pub dropoff_lat: f64,
    pub passengers: u32,
}

/// Equirectangular projection onto planar meters around a south-west origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    pub lon0: f64,
    pub lat0: f64,
}

impl Default for Projection {
    fn default() -> Self {
        // lower Manhattan
        Projection { lon0: -74.02, lat0: 40.70 }
    }
}

impl Projection {
    pub fn to_xy(&self, lon: f64, lat: f64) -> (f64, f64) {
        let k = EARTH_RADIUS_M * std::f64::consts::PI / 180.0;
        let x = (lon - self.lon0) * k * self.lat0.to_radians().cos();
        let y = (lat - self.lat0) * k;
        (x, y)
    }

    pub fn to_lonlat(&self, x: f64, y: f64) -> (f64, f64) {
        let k = EARTH_RADIUS_M * std::f64::consts::PI / 180.0;
        (self.lon0 + x / (k * self.lat0.to_radians().cos()), self.lat0 + y / k)
    }
}

/// `WxH:CELL` in meters, e.g. `4000x4000:200`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub width_m: f64,
    pub height_m: f64,
    pub cell_m: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { width_m: 2000.0, height_m: 2000.0, cell_m: 200.0 }
    }
}

impl FromStr for GridSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || format!("grid must look like WxH:CELL, got {s:?}");
        let (dims, cell) = s.split_once(':').ok_or_else(bad)?;
        let (w, h) = dims.split_once(['x', 'X']).ok_or_else(bad)?;
        let num = |t: &str| t.trim().parse::<f64>().map_err(|_| bad());
        let spec = GridSpec { width_m: num(w)?, height_m: num(h)?, cell_m: num(cell)? };
        if !(spec.width_m > 0.0 && spec.height_m > 0.0 && spec.cell_m > 0.0) {
            return Err(bad());
        }
        Ok(spec)
    }
}

impl fmt::Display for GridSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}:{}", self.width_m, self.height_m, self.cell_m)
    }
}

impl GridSpec {
    pub fn build(&self) -> Result<Grid, crate::model::ModelError> {
        Grid::new(self.width_m, self.height_m, self.cell_m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub vehicles: usize,
    pub capacity: u32,
    pub alpha: f64,
    pub beta: Seconds,
    pub delta: f64,
    pub epoch_len: Seconds,
    /// Seconds of wall clock per epoch solve.
    pub deadline: Option<f64>,
    pub grid: GridSpec,
    pub speed_mps: f64,
    pub projection: Projection,
    pub seed: u64,
    pub prune: bool,
    pub oracle: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            vehicles: 2000,
            capacity: 5,
            alpha: 1.5,
            beta: 240,
            delta: 420.0,
            epoch_len: 30,
            deadline: Some(30.0),
            grid: GridSpec::default(),
            speed_mps: 5.0,
            projection: Projection::default(),
            seed: 0,
            prune: true,
            oracle: false,
        }
    }
}

/// Chunks of at most `capacity` summing to `passengers`, largest first.
pub fn split_party(passengers: u32, capacity: u32) -> Vec<u32> {
    assert!(capacity > 0, "capacity must be positive");
    let mut left = passengers;
    let mut out = Vec::new();
    while left > 0 {
        let take = left.min(capacity);
        out.push(take);
        left -= take;
    }
    out
}

fn parse_time(field: &str) -> Option<Seconds> {
    let field = field.trim();
    if let Ok(s) = field.parse::<Seconds>() {
        return Some(s);
    }
    if let Ok(t) = DateTime::parse_from_rfc3339(field) {
        return Some(t.timestamp());
    }
    ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f"]
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(field, f).ok())
        .map(|t| t.and_utc().timestamp())
}

fn parse_row(row: &csv::StringRecord) -> Result<(Seconds, [f64; 4], u32), String> {
    if row.len() != TRIP_HEADER.len() {
        return Err(format!("expected {} fields, found {}", TRIP_HEADER.len(), row.len()));
    }
    let time = parse_time(&row[0]).ok_or_else(|| format!("bad timestamp {:?}", &row[0]))?;
    let mut coords = [0.0; 4];
    for (k, c) in coords.iter_mut().enumerate() {
        let v: f64 = row[k + 1].trim().parse().map_err(|_| format!("bad coordinate {:?}", &row[k + 1]))?;
        if !v.is_finite() {
            return Err(format!("bad coordinate {:?}", &row[k + 1]));
        }
        *c = v;
    }
    let passengers: u32 = row[5].trim().parse().map_err(|_| format!("bad passenger count {:?}", &row[5]))?;
    if passengers == 0 {
        return Err("zero passengers".into());
    }
    Ok((time, coords, passengers))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ingested {
    pub trips: Vec<TripRecord>,
    /// Malformed rows skipped, with the reason for each.
    pub skipped: Vec<(usize, String)>,
}

/// Reads a trip file. Timestamps may be ISO-8601 or integer seconds and are
/// rebased so the earliest request is at zero; trips come back sorted by
/// time, file order breaking ties.
pub fn read_trips<R: Read>(reader: R) -> Result<Ingested, IoError> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.iter().ne(TRIP_HEADER) {
        return Err(IoError::Header(header.iter().collect::<Vec<_>>().join(",")));
    }
    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    let mut total = 0;
    for (i, rec) in rdr.records().enumerate() {
        total += 1;
        let line = i + 2;
        match rec.map_err(|e| e.to_string()).and_then(|r| parse_row(&r)) {
            Ok(row) => rows.push(row),
            Err(why) => skipped.push((line, why)),
        }
    }
    if total == 0 {
        return Err(IoError::Empty);
    }
    if skipped.len() as f64 > MAX_MALFORMED_SHARE * total as f64 {
        let (line, why) = &skipped[0];
        return Err(IoError::TooManyMalformed {
            malformed: skipped.len(),
            total,
            first: format!("line {line}: {why}"),
        });
    }
    let first = rows.iter().map(|r| r.0).min().unwrap_or(0);
    let mut trips: Vec<TripRecord> = rows
        .into_iter()
        .map(|(t, c, q)| TripRecord {
            request_time: t - first,
            pickup_lon: c[0],
            pickup_lat: c[1],
            dropoff_lon: c[2],
            dropoff_lat: c[3],
            passengers: q,
        })
        .collect();
    trips.sort_by_key(|t| t.request_time);
    Ok(Ingested { trips, skipped })
}

pub fn write_trips<W: Write>(writer: W, trips: &[TripRecord]) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(TRIP_HEADER)?;
    for t in trips {
        w.write_record([
            t.request_time.to_string(),
            format!("{:.7}", t.pickup_lon),
            format!("{:.7}", t.pickup_lat),
            format!("{:.7}", t.dropoff_lon),
            format!("{:.7}", t.dropoff_lat),
            t.passengers.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Snaps trips to virtual stops and splits parties larger than `capacity`.
/// Ids follow trip order.
pub fn ingest(
    trips: &[TripRecord],
    grid: &Grid,
    projection: &Projection,
    matrix: &TravelTimeMatrix,
    capacity: u32,
) -> Vec<Request> {
    let mut out = Vec::with_capacity(trips.len());
    for t in trips {
        let (px, py) = projection.to_xy(t.pickup_lon, t.pickup_lat);
        let (dx, dy) = projection.to_xy(t.dropoff_lon, t.dropoff_lat);
        let origin = grid.snap(px, py);
        let dest = grid.snap(dx, dy);
        for size in split_party(t.passengers, capacity) {
            out.push(Request::new(out.len(), t.request_time, origin, dest, size, matrix));
        }
    }
    out
}

/// Trip rows that ingest back to exactly `requests` (one row per request,
/// at the stop centers). Requests must be sorted by release then id, with
/// ids counting from zero and the first release at zero.
pub fn requests_to_trips(requests: &[Request], grid: &Grid, projection: &Projection) -> Vec<TripRecord> {
    requests
        .iter()
        .map(|r| {
            let (ox, oy) = grid.stop(r.origin).position;
            let (dx, dy) = grid.stop(r.dest).position;
            let (plon, plat) = projection.to_lonlat(ox, oy);
            let (dlon, dlat) = projection.to_lonlat(dx, dy);
            TripRecord {
                request_time: r.release,
                pickup_lon: plon,
                pickup_lat: plat,
                dropoff_lon: dlon,
                dropoff_lat: dlat,
                passengers: r.size,
            }
        })
        .collect()
}

/// Shape of demand intensity over the horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum RateProfile {
    Flat,
    /// One smooth peak in the middle, `ratio` times the rate at the ends.
    Peak { ratio: f64 },
}

impl RateProfile {
    fn relative(&self, frac: f64) -> f64 {
        match *self {
            RateProfile::Flat => 1.0,
            RateProfile::Peak { ratio } => {
                let bump = 0.5 - 0.5 * (2.0 * std::f64::consts::PI * frac).cos();
                (1.0 + (ratio - 1.0) * bump) / ratio.max(1.0)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Synthetic {
    pub trips: Vec<TripRecord>,
    pub matrix: TravelTimeMatrix,
}

/// `n` trips over `horizon` seconds on the configured grid. Release times
/// are those of a Poisson process with the given intensity shape conditioned
/// on `n` arrivals, drawn by thinning; end points are uniform over the area.
pub fn synth(n: usize, horizon: Seconds, profile: RateProfile, config: &RunConfig, seed: u64) -> Synthetic {
    let grid = config.grid.build().expect("grid spec is validated on parse");
    let matrix = grid.manhattan_matrix(config.speed_mps);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut times: Vec<Seconds> = Vec::with_capacity(n);
    while times.len() < n {
        let u: f64 = rng.random();
        if rng.random::<f64>() <= profile.relative(u) {
            times.push(((u * horizon as f64) as Seconds).min(horizon.max(1) - 1));
        }
    }
    times.sort_unstable();
    let first = times.first().copied().unwrap_or(0);
    let (w, h) = (grid.width_m(), grid.height_m());
    let mut trips = Vec::with_capacity(n);
    for t in times {
        let (px, py) = (rng.random::<f64>() * w, rng.random::<f64>() * h);
        let (dx, dy) = (rng.random::<f64>() * w, rng.random::<f64>() * h);
        let passengers = match rng.random_range(0..100) {
            0..75 => 1,
            75..92 => 2,
            92..98 => 3,
            _ => 4,
        };
        let (plon, plat) = config.projection.to_lonlat(px, py);
        let (dlon, dlat) = config.projection.to_lonlat(dx, dy);
        trips.push(TripRecord {
            request_time: t - first,
            pickup_lon: plon,
            pickup_lat: plat,
            dropoff_lon: dlon,
            dropoff_lat: dlat,
            passengers,
        });
    }
    Synthetic { trips, matrix }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup() -> (Grid, TravelTimeMatrix) {
        let grid = Grid::new(2000.0, 2000.0, 200.0).unwrap();
        let m = grid.manhattan_matrix(5.0);
        (grid, m)
    }

    #[test]
    fn greedy_split() {
        assert_eq!(split_party(7, 4), vec![4, 3]);
        assert_eq!(split_party(4, 4), vec![4]);
        assert_eq!(split_party(9, 4), vec![4, 4, 1]);
    }

    #[test]
    fn split_parties_share_stops_and_time() {
        let (grid, m) = setup();
        let p = Projection::default();
        let (lon, lat) = p.to_lonlat(450.0, 650.0);
        let (lon2, lat2) = p.to_lonlat(1250.0, 150.0);
        let trip = TripRecord {
            request_time: 5,
            pickup_lon: lon,
            pickup_lat: lat,
            dropoff_lon: lon2,
            dropoff_lat: lat2,
            passengers: 7,
        };
        let reqs = ingest(&[trip], &grid, &p, &m, 4);
        assert_eq!(reqs.len(), 2);
        assert_eq!((reqs[0].size, reqs[1].size), (4, 3));
        assert_eq!(reqs[0].origin, grid.stop_id(3, 2));
        assert_eq!(reqs[0].dest, grid.stop_id(0, 6));
        assert_eq!((reqs[0].origin, reqs[0].dest, reqs[0].release), (reqs[1].origin, reqs[1].dest, reqs[1].release));
        assert_eq!(reqs[0].direct, m.get(reqs[0].origin, reqs[0].dest));
    }

    #[test]
    fn projection_round_trips() {
        let p = Projection::default();
        let (lon, lat) = p.to_lonlat(1234.5, 987.25);
        let (x, y) = p.to_xy(lon, lat);
        assert!((x - 1234.5).abs() < 1e-6 && (y - 987.25).abs() < 1e-6);
        // one degree of latitude is about 111 km
        let (_, y1) = p.to_xy(p.lon0, p.lat0 + 1.0);
        assert!((y1 - 111_195.0).abs() < 10.0);
    }

    #[test]
    fn mixed_timestamps_are_rebased() {
        let csv = "request_time,pickup_lon,pickup_lat,dropoff_lon,dropoff_lat,passengers\n\
                   2016-01-01 00:00:30,-74.0,40.71,-73.99,40.72,1\n\
                   2016-01-01T00:00:00Z,-74.0,40.71,-73.99,40.72,2\n";
        let got = read_trips(csv.as_bytes()).unwrap();
        assert_eq!(got.trips.iter().map(|t| t.request_time).collect::<Vec<_>>(), vec![0, 30]);
        assert_eq!(got.trips[0].passengers, 2);
        let ints = "request_time,pickup_lon,pickup_lat,dropoff_lon,dropoff_lat,passengers\n100,0,0,0,0,1\n160,0,0,0,0,1\n";
        let got = read_trips(ints.as_bytes()).unwrap();
        assert_eq!(got.trips[1].request_time, 60);
    }

    #[test]
    fn malformed_rows_are_counted_or_fatal() {
        let mut csv = String::from("request_time,pickup_lon,pickup_lat,dropoff_lon,dropoff_lat,passengers\n");
        for i in 0..200 {
            csv.push_str(&format!("{i},-74.0,40.71,-73.99,40.72,1\n"));
        }
        csv.push_str("oops,-74.0,40.71,-73.99,40.72,1\n");
        csv.push_str("5,-74.0,40.71,-73.99,40.72,0\n");
        let got = read_trips(csv.as_bytes()).unwrap();
        assert_eq!(got.skipped.len(), 2);
        assert_eq!(got.trips.len(), 200);
        csv.push_str("7,-74.0,40.71\n");
        assert!(matches!(read_trips(csv.as_bytes()), Err(IoError::TooManyMalformed { malformed: 3, .. })));
    }

    #[test]
    fn wrong_header_is_rejected() {
        assert!(matches!(read_trips("a,b\n1,2\n".as_bytes()), Err(IoError::Header(_))));
    }

    #[test]
    fn grid_spec_parses() {
        let g: GridSpec = "2000x1000:200".parse().unwrap();
        assert_eq!(g, GridSpec { width_m: 2000.0, height_m: 1000.0, cell_m: 200.0 });
        assert!("2000:200".parse::<GridSpec>().is_err());
        assert!("0x10:1".parse::<GridSpec>().is_err());
    }

    #[test]
    fn synth_is_deterministic_and_metric() {
        let cfg = RunConfig { grid: "2000x2000:200".parse().unwrap(), ..RunConfig::default() };
        let a = synth(50, 3600, RateProfile::Peak { ratio: 3.0 }, &cfg, 11);
        let b = synth(50, 3600, RateProfile::Peak { ratio: 3.0 }, &cfg, 11);
        assert_eq!(a, b);
        let mut buf_a = Vec::new();
        let mut buf_b = Vec::new();
        write_trips(&mut buf_a, &a.trips).unwrap();
        write_trips(&mut buf_b, &b.trips).unwrap();
        assert_eq!(buf_a, buf_b);
        assert_eq!(a.trips[0].request_time, 0);
        assert!(a.trips.windows(2).all(|w| w[0].request_time <= w[1].request_time));
        assert_eq!(a.matrix.get(0, 1), 40);
        assert!(a.matrix.validate().is_ok());
    }
}
