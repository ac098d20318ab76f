//! Vessel trajectories: AIS CSV ingestion, delta-feature windowing,
//! synthetic generators and geodesic helpers.
//!
//! A model sample covers `T` consecutive motion steps. Row `j` describes the
//! step that arrives at point `k` of the window:
//!
//! ```text
//! (Δlon, Δlat, Δt_curr, Δt_next) = (lon_k − lon_{k−1}, lat_k − lat_{k−1}, t_k − t_{k−1}, t_{k+1} − t_k)
//! ```
//!
//! so the final row's `Δt_next` is the forecast horizon and the target is the
//! next step `(lat_{i+1} − lat_i, lon_{i+1} − lon_i)`. Note the target keeps
//! (Δlat, Δlon) ordering while the inputs use (Δlon, Δlat).

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Matrix, RngStream};

pub const N_FEATURES: usize = 4;
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;
pub const DEFAULT_WINDOW: usize = 12;
pub const DEFAULT_MAX_GAP_S: f64 = 1800.0;
pub const STD_FLOOR: f64 = 1e-9;

/// Input feature columns, in matrix column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Feature {
    DLon,
    DLat,
    DtCurr,
    DtNext,
}

impl Feature {
    pub const ALL: [Feature; N_FEATURES] =
        [Feature::DLon, Feature::DLat, Feature::DtCurr, Feature::DtNext];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Feature::DLon => "dlon",
            Feature::DLat => "dlat",
            Feature::DtCurr => "dt_curr",
            Feature::DtNext => "dt_next",
        }
    }
}

/// Output component of a forecast; targets are ordered (Δlat, Δlon).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Component {
    #[default]
    Dlat,
    Dlon,
}

impl Component {
    pub const ALL: [Component; 2] = [Component::Dlat, Component::Dlon];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Component::Dlat => "dlat",
            Component::Dlon => "dlon",
        }
    }
}

impl FromStr for Component {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dlat" => Ok(Component::Dlat),
            "dlon" => Ok(Component::Dlon),
            other => Err(Error::InvalidArgument(format!(
                "unknown component `{other}` (expected dlat or dlon)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub lon: f64,
    pub lat: f64,
    pub t: f64,
}

impl TrajectoryPoint {
    pub fn new(lon: f64, lat: f64, t: f64) -> Result<Self> {
        if !(lon.is_finite() && lat.is_finite() && t.is_finite()) {
            return Err(Error::NonFinite("trajectory point".into()));
        }
        if !(-90.0..=90.0).contains(&lat) {
            return Err(Error::InvalidArgument(format!("latitude {lat} outside [-90, 90]")));
        }
        if !(-180.0..180.0).contains(&lon) {
            return Err(Error::InvalidArgument(format!(
                "longitude {lon} outside [-180, 180)"
            )));
        }
        Ok(Self { lon, lat, t })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub vessel_id: String,
    pub points: Vec<TrajectoryPoint>,
}

impl Trajectory {
    /// Validates non-emptiness and strictly increasing timestamps.
    pub fn new(vessel_id: impl Into<String>, points: Vec<TrajectoryPoint>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Empty("trajectory points"));
        }
        check_increasing(&points)?;
        Ok(Self {
            vessel_id: vessel_id.into(),
            points,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

fn check_increasing(points: &[TrajectoryPoint]) -> Result<()> {
    match points.windows(2).position(|w| !(w[1].t > w[0].t)) {
        Some(i) => Err(Error::NonIncreasingTime { index: i + 1 }),
        None => Ok(()),
    }
}

/// One model input window with its next-step target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaSample {
    /// `T × 4` raw deltas `(Δlon°, Δlat°, Δt_curr s, Δt_next s)`.
    pub inputs: Matrix,
    /// `(Δlat°, Δlon°)` to the next position.
    pub target: [f64; 2],
    /// Last observed absolute position.
    pub anchor: TrajectoryPoint,
    pub vessel_id: String,
}

impl DeltaSample {
    pub fn window(&self) -> usize {
        self.inputs.rows()
    }

    /// Time from the anchor to the target position.
    pub fn horizon(&self) -> f64 {
        self.inputs.get(self.window() - 1, Feature::DtNext.index())
    }

    /// The `T + 1` absolute points spanned by the window, oldest first,
    /// recovered by walking the deltas back from the anchor.
    pub fn window_points(&self) -> Vec<TrajectoryPoint> {
        let n = self.window();
        let mut pts = Vec::with_capacity(n + 1);
        let mut cur = self.anchor;
        pts.push(cur);
        for j in (0..n).rev() {
            let row = self.inputs.row(j);
            cur = TrajectoryPoint {
                lon: wrap_lon(cur.lon - row[0]),
                lat: cur.lat - row[1],
                t: cur.t - row[2],
            };
            pts.push(cur);
        }
        pts.reverse();
        pts
    }

    /// The absolute position the target points at.
    pub fn target_point(&self) -> Result<TrajectoryPoint> {
        reconstruct_position(&self.anchor, self.target, Some(self.horizon()))
    }
}

/// Wraps a longitude into `[-180, 180)`.
pub fn wrap_lon(lon: f64) -> f64 {
    if (-180.0..180.0).contains(&lon) {
        return lon;
    }
    let w = (lon + 180.0).rem_euclid(360.0) - 180.0;
    if w >= 180.0 {
        w - 360.0
    } else {
        w
    }
}

/// Column-name mapping for AIS CSV input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CsvSchema {
    pub vessel_id: String,
    pub t: String,
    pub lon: String,
    pub lat: String,
    /// Gaps longer than this (seconds) start a new trajectory.
    pub max_gap_s: f64,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            vessel_id: "vessel_id".into(),
            t: "t".into(),
            lon: "lon".into(),
            lat: "lat".into(),
            max_gap_s: DEFAULT_MAX_GAP_S,
        }
    }
}

impl CsvSchema {
    /// Parses `vessel_id=MMSI,t=BaseDateTime,...`; unspecified keys keep defaults.
    pub fn parse_mapping(spec: &str) -> Result<Self> {
        let mut schema = Self::default();
        for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (key, value) = part.split_once('=').ok_or_else(|| {
                Error::InvalidArgument(format!("schema entry `{part}` is not key=value"))
            })?;
            let value = value.trim().to_string();
            match key.trim() {
                "vessel_id" => schema.vessel_id = value,
                "t" => schema.t = value,
                "lon" => schema.lon = value,
                "lat" => schema.lat = value,
                "max_gap_s" => {
                    schema.max_gap_s = value.parse().map_err(|_| {
                        Error::InvalidArgument(format!("max_gap_s `{value}` is not a number"))
                    })?
                }
                other => {
                    return Err(Error::InvalidArgument(format!("unknown schema key `{other}`")))
                }
            }
        }
        Ok(schema)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum TimeFormat {
    Epoch,
    Iso,
}

fn parse_time(raw: &str, format: TimeFormat) -> Option<f64> {
    match format {
        TimeFormat::Epoch => raw.parse::<f64>().ok().filter(|t| t.is_finite()),
        TimeFormat::Iso => ["%Y-%m-%dT%H:%M:%SZ", "%Y-%m-%dT%H:%M:%S%.fZ"]
            .iter()
            .find_map(|fmt| NaiveDateTime::parse_from_str(raw, fmt).ok())
            .map(|dt| {
                let utc = dt.and_utc();
                utc.timestamp() as f64 + f64::from(utc.timestamp_subsec_nanos()) * 1e-9
            }),
    }
}

/// Reads AIS rows into per-vessel trajectories.
///
/// Rows are grouped by vessel (output ordered by vessel id), sorted by time,
/// deduplicated on exact timestamp keeping the first row in file order, and
/// split into segments wherever consecutive reports are more than
/// `schema.max_gap_s` apart.
pub fn parse_ais_csv<R: Read>(input: R, schema: &CsvSchema) -> Result<Vec<Trajectory>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let headers = reader.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let (id_col, t_col, lon_col, lat_col) =
        (col(&schema.vessel_id)?, col(&schema.t)?, col(&schema.lon)?, col(&schema.lat)?);

    let mut time_format = None;
    let mut by_vessel: BTreeMap<String, Vec<TrajectoryPoint>> = BTreeMap::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |idx: usize, what: &str| {
            record.get(idx).ok_or_else(|| Error::Parse {
                line,
                message: format!("missing {what} field"),
            })
        };
        let number = |idx: usize, what: &str| -> Result<f64> {
            let raw = field(idx, what)?;
            raw.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Parse {
                    line,
                    message: format!("{what} `{raw}` is not a finite number"),
                })
        };
        let id = field(id_col, "vessel id")?.to_string();
        let raw_t = field(t_col, "timestamp")?;
        let format = *time_format.get_or_insert_with(|| {
            if raw_t.parse::<f64>().is_ok() {
                TimeFormat::Epoch
            } else {
                TimeFormat::Iso
            }
        });
        let t = parse_time(raw_t, format).ok_or_else(|| Error::Parse {
            line,
            message: format!("timestamp `{raw_t}` is not valid"),
        })?;
        let lon = number(lon_col, "longitude")?;
        let lat = number(lat_col, "latitude")?;
        if !(-90.0..=90.0).contains(&lat) {
            return Err(Error::Parse {
                line,
                message: format!("latitude {lat} outside [-90, 90]"),
            });
        }
        if !(-180.0..=180.0).contains(&lon) {
            return Err(Error::Parse {
                line,
                message: format!("longitude {lon} outside [-180, 180]"),
            });
        }
        by_vessel.entry(id).or_default().push(TrajectoryPoint {
            lon: wrap_lon(lon),
            lat,
            t,
        });
    }

    let mut out = Vec::new();
    for (id, mut points) in by_vessel {
        // Stable sort keeps file order among equal timestamps, so dedup keeps the first.
        points.sort_by(|a, b| a.t.total_cmp(&b.t));
        points.dedup_by(|later, earlier| later.t == earlier.t);
        let mut segment: Vec<TrajectoryPoint> = Vec::new();
        for p in points {
            if let Some(last) = segment.last() {
                if p.t - last.t > schema.max_gap_s {
                    out.push(Trajectory::new(id.clone(), std::mem::take(&mut segment))?);
                }
            }
            segment.push(p);
        }
        if !segment.is_empty() {
            out.push(Trajectory::new(id.clone(), segment)?);
        }
    }
    Ok(out)
}

/// Writes trajectories with the default `vessel_id,t,lon,lat` header.
pub fn write_ais_csv<W: Write>(out: W, trajectories: &[Trajectory]) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(["vessel_id", "t", "lon", "lat"])?;
    for traj in trajectories {
        for p in &traj.points {
            writer.write_record([
                traj.vessel_id.as_str(),
                &p.t.to_string(),
                &p.lon.to_string(),
                &p.lat.to_string(),
            ])?;
        }
    }
    writer.flush()?;
    Ok(())
}

/// Cuts a trajectory into stride-1 windows of `window` motion steps.
pub fn to_delta_samples(traj: &Trajectory, window: usize) -> Result<Vec<DeltaSample>> {
    if window < 2 {
        return Err(Error::InvalidArgument(format!("window must be >= 2, got {window}")));
    }
    let pts = &traj.points;
    if pts.len() < window + 2 {
        return Err(Error::TooShort {
            needed: window + 2,
            found: pts.len(),
        });
    }
    check_increasing(pts)?;

    let mut samples = Vec::with_capacity(pts.len() - window - 1);
    for anchor in window..pts.len() - 1 {
        let mut inputs = Matrix::zeros(window, N_FEATURES);
        for (j, k) in (anchor + 1 - window..=anchor).enumerate() {
            let row = inputs.row_mut(j);
            row[0] = wrap_lon(pts[k].lon - pts[k - 1].lon);
            row[1] = pts[k].lat - pts[k - 1].lat;
            row[2] = pts[k].t - pts[k - 1].t;
            row[3] = pts[k + 1].t - pts[k].t;
        }
        let (cur, next) = (pts[anchor], pts[anchor + 1]);
        samples.push(DeltaSample {
            inputs,
            target: [next.lat - cur.lat, wrap_lon(next.lon - cur.lon)],
            anchor: cur,
            vessel_id: traj.vessel_id.clone(),
        });
    }
    Ok(samples)
}

/// Applies a `(Δlat, Δlon)` step to an anchor position.
pub fn reconstruct_position(
    anchor: &TrajectoryPoint,
    delta: [f64; 2],
    horizon: Option<f64>,
) -> Result<TrajectoryPoint> {
    if !delta.iter().all(|d| d.is_finite()) || !horizon.is_none_or(f64::is_finite) {
        return Err(Error::NonFinite("position delta".into()));
    }
    Ok(TrajectoryPoint {
        lon: wrap_lon(anchor.lon + delta[1]),
        lat: (anchor.lat + delta[0]).clamp(-90.0, 90.0),
        t: anchor.t + horizon.unwrap_or(0.0),
    })
}

/// Great-circle distance in meters on a sphere of radius 6 371 km.
pub fn haversine_m(a: &TrajectoryPoint, b: &TrajectoryPoint) -> f64 {
    let (phi1, phi2) = (a.lat.to_radians(), b.lat.to_radians());
    let dphi = phi2 - phi1;
    let dlambda = (b.lon - a.lon).to_radians();
    let h = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
    let h = h.clamp(0.0, 1.0);
    2.0 * EARTH_RADIUS_M * h.sqrt().atan2((1.0 - h).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthKind {
    Line,
    Arc,
    Zigzag,
    RandomWalk,
}

impl fmt::Display for SynthKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SynthKind::Line => "line",
            SynthKind::Arc => "arc",
            SynthKind::Zigzag => "zigzag",
            SynthKind::RandomWalk => "random_walk",
        })
    }
}

impl FromStr for SynthKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "line" => Ok(SynthKind::Line),
            "arc" => Ok(SynthKind::Arc),
            "zigzag" => Ok(SynthKind::Zigzag),
            "random_walk" | "random-walk" => Ok(SynthKind::RandomWalk),
            other => Err(Error::UnknownKind(other.to_string())),
        }
    }
}

/// Shape parameters for synthetic trajectories. Headings are compass
/// degrees (0 = north, 90 = east); distances are plate-carrée degrees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthParams {
    pub start_lon: f64,
    pub start_lat: f64,
    pub start_t: f64,
    /// Degrees travelled per step.
    pub speed: f64,
    pub heading: f64,
    /// Heading change per step (arc).
    pub turn_rate: f64,
    /// Steps between heading flips (zigzag).
    pub zigzag_period: usize,
    /// Heading offset either side of the base course (zigzag).
    pub zigzag_angle: f64,
    /// Per-step Gaussian perturbation std in degrees (random walk).
    pub step_noise: f64,
    /// Gaussian position jitter std in degrees, applied to every kind.
    pub position_noise: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            start_lon: 23.6,
            start_lat: 37.9,
            start_t: 1_700_000_000.0,
            speed: 0.001,
            heading: 45.0,
            turn_rate: 2.0,
            zigzag_period: 5,
            zigzag_angle: 30.0,
            step_noise: 0.0003,
            position_noise: 0.0,
        }
    }
}

/// Deterministic synthetic trajectory.
pub fn synth_trajectory(
    kind: SynthKind,
    params: &SynthParams,
    n_points: usize,
    dt: f64,
    seed: u64,
) -> Result<Trajectory> {
    if n_points < 2 {
        return Err(Error::InvalidArgument(format!("n_points must be >= 2, got {n_points}")));
    }
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    let root = RngStream::new(seed);
    let mut walk = root.derive("synth-walk");
    let mut jitter = root.derive("synth-jitter");

    let mut lon = params.start_lon;
    let mut lat = params.start_lat;
    let mut raw = Vec::with_capacity(n_points);
    raw.push((lon, lat));
    for step in 0..n_points - 1 {
        let heading = match kind {
            SynthKind::Line | SynthKind::RandomWalk => params.heading,
            SynthKind::Arc => params.heading + step as f64 * params.turn_rate,
            SynthKind::Zigzag => {
                let period = params.zigzag_period.max(1);
                if (step / period).is_multiple_of(2) {
                    params.heading + params.zigzag_angle
                } else {
                    params.heading - params.zigzag_angle
                }
            }
        };
        let h = heading.to_radians();
        let mut dlon = params.speed * h.sin();
        let mut dlat = params.speed * h.cos();
        if kind == SynthKind::RandomWalk {
            dlon += params.step_noise * walk.normal();
            dlat += params.step_noise * walk.normal();
        }
        lon += dlon;
        lat += dlat;
        raw.push((lon, lat));
    }

    let points = raw
        .into_iter()
        .enumerate()
        .map(|(k, (lon, lat))| {
            let (lon, lat) = if params.position_noise > 0.0 {
                (
                    lon + params.position_noise * jitter.normal(),
                    lat + params.position_noise * jitter.normal(),
                )
            } else {
                (lon, lat)
            };
            TrajectoryPoint {
                lon: wrap_lon(lon),
                lat: lat.clamp(-90.0, 90.0),
                t: params.start_t + k as f64 * dt,
            }
        })
        .collect();
    Trajectory::new(format!("synth-{kind}-{seed}"), points)
}

/// A fleet of `n` trajectories sharing a kind, with per-vessel heading drawn
/// uniformly, speed scaled by a factor in `[0.5, 1.5)` and start positions
/// jittered by up to ±0.05°.
pub fn synth_fleet(
    kind: SynthKind,
    base: &SynthParams,
    n: usize,
    n_points: usize,
    dt: f64,
    seed: u64,
) -> Result<Vec<Trajectory>> {
    let root = RngStream::new(seed);
    (0..n)
        .map(|v| {
            let mut r = root.derive_indexed("fleet-vessel", v as u64);
            let params = SynthParams {
                heading: r.uniform_range(0.0, 360.0),
                speed: base.speed * r.uniform_range(0.5, 1.5),
                start_lon: base.start_lon + r.uniform_range(-0.05, 0.05),
                start_lat: base.start_lat + r.uniform_range(-0.05, 0.05),
                ..base.clone()
            };
            let vessel_seed = rand::RngCore::next_u64(&mut r);
            let mut traj = synth_trajectory(kind, &params, n_points, dt, vessel_seed)?;
            traj.vessel_id = format!("synth-{kind}-{seed}-{v:04}");
            Ok(traj)
        })
        .collect()
}

/// Per-feature affine standardization fitted on training inputs. Targets
/// reuse the Δlat / Δlon column statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: [f64; N_FEATURES],
    pub std: [f64; N_FEATURES],
}

impl Standardization {
    pub fn identity() -> Self {
        Self {
            mean: [0.0; N_FEATURES],
            std: [1.0; N_FEATURES],
        }
    }

    /// Mean and population std over every row of every sample, std floored.
    pub fn fit<'a, I>(inputs: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a Matrix>,
    {
        let mut count = 0usize;
        let mut sum = [0.0; N_FEATURES];
        let mut sum_sq = [0.0; N_FEATURES];
        let rows: Vec<&[f64]> = inputs
            .into_iter()
            .flat_map(|m| (0..m.rows()).map(move |r| m.row(r)))
            .collect();
        for row in &rows {
            count += 1;
            for f in 0..N_FEATURES {
                sum[f] += row[f];
            }
        }
        if count == 0 {
            return Err(Error::Empty("standardization input"));
        }
        let mean = sum.map(|s| s / count as f64);
        for row in &rows {
            for f in 0..N_FEATURES {
                sum_sq[f] += (row[f] - mean[f]).powi(2);
            }
        }
        let std = std::array::from_fn(|f| (sum_sq[f] / count as f64).sqrt().max(STD_FLOOR));
        Ok(Self { mean, std })
    }

    pub fn apply(&self, raw: &Matrix) -> Matrix {
        let mut out = raw.clone();
        for r in 0..out.rows() {
            for (f, v) in out.row_mut(r).iter_mut().enumerate() {
                *v = (*v - self.mean[f]) / self.std[f];
            }
        }
        out
    }

    pub fn invert(&self, standardized: &Matrix) -> Matrix {
        let mut out = standardized.clone();
        for r in 0..out.rows() {
            for (f, v) in out.row_mut(r).iter_mut().enumerate() {
                *v = *v * self.std[f] + self.mean[f];
            }
        }
        out
    }

    fn target_stats(&self) -> [(f64, f64); 2] {
        let (lat, lon) = (Feature::DLat.index(), Feature::DLon.index());
        [(self.mean[lat], self.std[lat]), (self.mean[lon], self.std[lon])]
    }

    pub fn target_to_std(&self, target: [f64; 2]) -> [f64; 2] {
        let s = self.target_stats();
        [(target[0] - s[0].0) / s[0].1, (target[1] - s[1].0) / s[1].1]
    }

    pub fn target_from_std(&self, y: [f64; 2]) -> [f64; 2] {
        let s = self.target_stats();
        [y[0] * s[0].1 + s[0].0, y[1] * s[1].1 + s[1].0]
    }
}

/// Sample indices per split.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitName {
    Train,
    Validation,
    Test,
}

impl FromStr for SplitName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(SplitName::Train),
            "validation" | "val" => Ok(SplitName::Validation),
            "test" => Ok(SplitName::Test),
            other => Err(Error::InvalidArgument(format!("unknown split `{other}`"))),
        }
    }
}

impl Split {
    pub fn indices(&self, which: SplitName) -> &[usize] {
        match which {
            SplitName::Train => &self.train,
            SplitName::Validation => &self.validation,
            SplitName::Test => &self.test,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub samples: Vec<DeltaSample>,
    pub standardization: Standardization,
    pub split: Split,
    /// Index of the source trajectory for every sample.
    pub trajectory_of: Vec<usize>,
}

impl Dataset {
    pub fn window(&self) -> usize {
        self.samples.first().map_or(0, DeltaSample::window)
    }

    pub fn split_samples(&self, which: SplitName) -> Vec<&DeltaSample> {
        self.split
            .indices(which)
            .iter()
            .map(|&i| &self.samples[i])
            .collect()
    }
}

/// Pools windows from every trajectory long enough for `window`, assigns
/// whole trajectories to train/validation/test by seeded shuffle and fits
/// the standardization on training samples.
pub fn build_dataset(
    trajectories: &[Trajectory],
    window: usize,
    ratios: [f64; 3],
    seed: u64,
) -> Result<Dataset> {
    if ratios.iter().any(|r| !(*r > 0.0)) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "split ratios must be positive and sum to 1, got {ratios:?}"
        )));
    }
    let mut samples = Vec::new();
    let mut trajectory_of = Vec::new();
    let mut ranges = Vec::new();
    for (ti, traj) in trajectories.iter().enumerate() {
        if traj.len() < window + 2 {
            continue;
        }
        let start = samples.len();
        for s in to_delta_samples(traj, window)? {
            samples.push(s);
            trajectory_of.push(ti);
        }
        ranges.push(start..samples.len());
    }
    if samples.is_empty() {
        return Err(Error::Empty("sample pool"));
    }

    let n = ranges.len();
    let mut order: Vec<usize> = (0..n).collect();
    RngStream::new(seed).derive("dataset-split").shuffle(&mut order);
    let n_train = ((ratios[0] * n as f64).round() as usize).clamp(1, n);
    let n_val = ((ratios[1] * n as f64).round() as usize).min(n - n_train);

    let mut split = Split::default();
    for (pos, &which) in order.iter().enumerate() {
        let bucket = if pos < n_train {
            &mut split.train
        } else if pos < n_train + n_val {
            &mut split.validation
        } else {
            &mut split.test
        };
        bucket.extend(ranges[which].clone());
    }
    split.train.sort_unstable();
    split.validation.sort_unstable();
    split.test.sort_unstable();

    let standardization = Standardization::fit(split.train.iter().map(|&i| &samples[i].inputs))?;
    Ok(Dataset {
        samples,
        standardization,
        split,
        trajectory_of,
    })
}
