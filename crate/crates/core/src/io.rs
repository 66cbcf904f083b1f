//! Scenario configuration, trip-log ingestion and report files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use chrono::{DateTime, NaiveDateTime};
use sha2::{Digest, Sha256};

use crate::domain::{OrderId, Trip};
use crate::experiment::{hotspot_benchmark, mean_rows, Scenario, DESK_HOTSPOTS, DESK_RATE_PER_OD, DESK_SECOND_HOUR, DESK_SEEDS};
use crate::network::{Coord, NetworkError, NodeId, RoadNetwork};
use crate::oracle::{OfflineInstance, OraclePairing};
use crate::prediction::{DemandProfile, PredictionError};
use crate::simulator::{RunMetrics, SimConfig, TripRecord, METRICS_HEADER};
use crate::strategies::Strategy;

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Csv { path: String, source: csv::Error },
    #[error("{path}, line {line}: {msg}")]
    Parse { path: String, line: usize, msg: String },
    #[error("config key `{key}`: {msg}")]
    Key { key: String, msg: String },
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Prediction(#[from] PredictionError),
}

fn file_err(path: &Path) -> impl Fn(std::io::Error) -> IoError + '_ {
    move |source| IoError::File { path: path.display().to_string(), source }
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> IoError + '_ {
    move |source| IoError::Csv { path: path.display().to_string(), source }
}

fn key_err(key: &str, msg: impl Into<String>) -> IoError {
    IoError::Key { key: key.to_string(), msg: msg.into() }
}

/// Parses `key = value` lines. Blank lines and lines starting with `#` are
/// ignored; a later key replaces an earlier one.
pub fn parse_kv(text: &str, origin: &str) -> Result<BTreeMap<String, String>, IoError> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(IoError::Parse { path: origin.to_string(), line: i + 1, msg: format!("expected key=value, got `{line}`") });
        };
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}

/// Everything a command needs: where the network and demand come from,
/// the simulation parameters, and which strategies and seeds to run.
///
/// Demand comes from `profile` if set, else from `trip_log`, else from
/// Poisson rates on every ordered pair of `hotspots`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub sim: SimConfig,
    pub network_nodes: Option<PathBuf>,
    pub network_links: Option<PathBuf>,
    pub grid_rows: usize,
    pub grid_cols: usize,
    pub link_m: f64,
    pub hotspots: Vec<NodeId>,
    pub rate_per_od: f64,
    pub second_hour_factor: f64,
    pub profile: Option<PathBuf>,
    pub trip_log: Option<PathBuf>,
    /// Start of the study window of the trip log, epoch seconds.
    pub log_start: Option<f64>,
    pub snap_radius_m: f64,
    /// Replay the trip log order by order instead of drawing from its rates.
    pub replay: bool,
    pub tables: PathBuf,
    pub strategies: Vec<Strategy>,
    pub seeds: Vec<u64>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            sim: SimConfig::default(),
            network_nodes: None,
            network_links: None,
            grid_rows: 10,
            grid_cols: 10,
            link_m: 500.0,
            hotspots: DESK_HOTSPOTS.to_vec(),
            rate_per_od: DESK_RATE_PER_OD,
            second_hour_factor: DESK_SECOND_HOUR,
            profile: None,
            trip_log: None,
            log_start: None,
            snap_radius_m: 250.0,
            replay: false,
            tables: PathBuf::from("tables.csv"),
            strategies: Strategy::ALL.to_vec(),
            seeds: DESK_SEEDS.to_vec(),
        }
    }
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, IoError> {
    v.parse().map_err(|_| key_err(key, format!("cannot parse `{v}`")))
}

fn list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>, IoError> {
    v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(|s| num(key, s)).collect()
}

fn opt_path(v: &str) -> Option<PathBuf> {
    (!v.is_empty()).then(|| PathBuf::from(v))
}

/// Keys accepted by [`ScenarioConfig::set`].
pub const CONFIG_KEYS: &[&str] = &[
    "network_nodes",
    "network_links",
    "grid_rows",
    "grid_cols",
    "link_m",
    "hotspots",
    "rate_per_od",
    "second_hour_factor",
    "profile",
    "trip_log",
    "log_start",
    "snap_radius_m",
    "replay",
    "tables",
    "strategies",
    "strategy",
    "seeds",
    "seed",
    "horizon_s",
    "batch_interval_s",
    "drivers_per_100_orders",
    "speed_mps",
    "max_wait_mean_s",
    "max_wait_sd_s",
    "alpha",
    "r_w",
    "max_pickup_m",
    "max_detour_m",
    "l_bar_m",
    "solo_per_km",
    "shared_per_km",
    "driver_per_km",
    "drain_s",
];

impl ScenarioConfig {
    pub fn from_file(path: &Path) -> Result<Self, IoError> {
        let text = std::fs::read_to_string(path).map_err(file_err(path))?;
        let mut cfg = ScenarioConfig::default();
        for (k, v) in parse_kv(&text, &path.display().to_string())? {
            cfg.set(&k, &v)?;
        }
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<(), IoError> {
        let s = &mut self.sim;
        match key {
            "network_nodes" => self.network_nodes = opt_path(v),
            "network_links" => self.network_links = opt_path(v),
            "grid_rows" => self.grid_rows = num(key, v)?,
            "grid_cols" => self.grid_cols = num(key, v)?,
            "link_m" => self.link_m = num(key, v)?,
            "hotspots" => self.hotspots = list(key, v)?,
            "rate_per_od" => self.rate_per_od = num(key, v)?,
            "second_hour_factor" => self.second_hour_factor = num(key, v)?,
            "profile" => self.profile = opt_path(v),
            "trip_log" => self.trip_log = opt_path(v),
            "log_start" => {
                self.log_start = if v.is_empty() { None } else { Some(parse_time(v).map_err(|m| key_err(key, m))?) }
            }
            "snap_radius_m" => self.snap_radius_m = num(key, v)?,
            "replay" => self.replay = num(key, v)?,
            "tables" => self.tables = PathBuf::from(v),
            "strategies" | "strategy" => {
                self.strategies = v
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| s.parse().map_err(|_| key_err(key, format!("unknown strategy `{s}`"))))
                    .collect::<Result<_, _>>()?
            }
            "seeds" | "seed" => self.seeds = list(key, v)?,
            "horizon_s" => s.horizon_s = num(key, v)?,
            "batch_interval_s" => s.batch_interval_s = num(key, v)?,
            "drivers_per_100_orders" => s.drivers_per_100_orders = num(key, v)?,
            "speed_mps" => s.speed_mps = num(key, v)?,
            "max_wait_mean_s" => s.max_wait_mean_s = num(key, v)?,
            "max_wait_sd_s" => s.max_wait_sd_s = num(key, v)?,
            "alpha" => s.alpha = num(key, v)?,
            "r_w" => s.r_w = num(key, v)?,
            "max_pickup_m" => s.max_pickup_m = num(key, v)?,
            "max_detour_m" => s.max_detour_m = num(key, v)?,
            "l_bar_m" => s.l_bar_m = if v == "auto" || v.is_empty() { None } else { Some(num(key, v)?) },
            "solo_per_km" => s.pricing.solo_per_km = num(key, v)?,
            "shared_per_km" => s.pricing.shared_per_km = num(key, v)?,
            "driver_per_km" => s.pricing.driver_per_km = num(key, v)?,
            "drain_s" => s.drain_s = num(key, v)?,
            _ => return Err(key_err(key, format!("unknown key; expected one of {}", CONFIG_KEYS.join(", ")))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), IoError> {
        self.sim.validate().map_err(|e| key_err("sim", e.to_string()))?;
        if self.strategies.is_empty() {
            return Err(key_err("strategies", "at least one strategy is required"));
        }
        if self.seeds.is_empty() {
            return Err(key_err("seeds", "at least one seed is required"));
        }
        if self.network_nodes.is_some() != self.network_links.is_some() {
            return Err(key_err("network_nodes", "network_nodes and network_links go together"));
        }
        for (key, p) in [
            ("network_nodes", &self.network_nodes),
            ("network_links", &self.network_links),
            ("profile", &self.profile),
            ("trip_log", &self.trip_log),
        ] {
            if let Some(p) = p {
                if !p.exists() {
                    return Err(key_err(key, format!("file {} does not exist", p.display())));
                }
            }
        }
        if self.replay && self.trip_log.is_none() {
            return Err(key_err("replay", "replay needs a trip_log"));
        }
        if !(self.snap_radius_m >= 0.0) {
            return Err(key_err("snap_radius_m", "must be nonnegative"));
        }
        Ok(())
    }

    /// Digest of the network and demand inputs: file contents for files,
    /// values for the synthetic settings.
    pub fn digest(&self) -> Result<String, IoError> {
        let mut h = Sha256::new();
        let mut file = |key: &str, p: &Option<PathBuf>| -> Result<(), IoError> {
            if let Some(p) = p {
                let bytes = std::fs::read(p).map_err(file_err(p))?;
                h.update(format!("{key}={}\n", hex(&Sha256::digest(&bytes), 32)).as_bytes());
            }
            Ok(())
        };
        file("network_nodes", &self.network_nodes)?;
        file("network_links", &self.network_links)?;
        file("profile", &self.profile)?;
        file("trip_log", &self.trip_log)?;
        let hotspots: Vec<String> = self.hotspots.iter().map(|n| n.to_string()).collect();
        let log_start = self.log_start.map(|v| v.to_string()).unwrap_or_default();
        for (k, v) in [
            ("grid", format!("{}x{}x{}", self.grid_rows, self.grid_cols, self.link_m)),
            ("hotspots", hotspots.join(",")),
            ("rate_per_od", self.rate_per_od.to_string()),
            ("second_hour_factor", self.second_hour_factor.to_string()),
            ("log_start", log_start),
            ("snap_radius_m", self.snap_radius_m.to_string()),
            ("replay", self.replay.to_string()),
        ] {
            h.update(format!("{k}={v}\n").as_bytes());
        }
        Ok(hex(&h.finalize(), 16))
    }

    pub fn network(&self) -> Result<RoadNetwork, IoError> {
        Ok(match (&self.network_nodes, &self.network_links) {
            (Some(n), Some(l)) => RoadNetwork::from_csv(n, l, self.sim.speed_mps)?,
            _ => RoadNetwork::grid(self.grid_rows, self.grid_cols, self.link_m, self.sim.speed_mps)?,
        })
    }

    /// Loads the network and demand, and stamps the input digest on the
    /// simulation config. Ingest drops are returned for reporting.
    pub fn scenario(&self) -> Result<(Scenario, Option<IngestReport>), IoError> {
        self.validate()?;
        let net = self.network()?;
        let mut sim = self.sim.clone();
        sim.scenario_digest = self.digest()?;
        let hours = ((sim.horizon_s / 3600.0).ceil() as usize).max(1);
        let (profile, replay, report) = if let Some(p) = &self.profile {
            (read_profile(p)?, None, None)
        } else if let Some(log) = &self.trip_log {
            let opts = IngestOptions { window_start: self.log_start, hours, snap_radius_m: self.snap_radius_m };
            let report = ingest_demand(log, &net, &opts)?;
            let replay = self.replay.then(|| report.records.clone());
            (report.profile.clone(), replay, Some(report))
        } else {
            for &h in &self.hotspots {
                if !net.contains(h) {
                    return Err(key_err("hotspots", format!("node {h} is not on the network")));
                }
            }
            (hotspot_benchmark(&self.hotspots, self.rate_per_od, self.second_hour_factor).profile, None, None)
        };
        Ok((Scenario { net, profile, sim, replay }, report))
    }
}

fn hex(bytes: &[u8], digits: usize) -> String {
    bytes.iter().flat_map(|b| [b >> 4, b & 0xf]).take(digits).map(|n| char::from_digit(n as u32, 16).unwrap()).collect()
}

/// Accepts epoch seconds, RFC 3339, or `YYYY-MM-DD HH:MM:SS` read as UTC.
pub fn parse_time(s: &str) -> Result<f64, String> {
    let s = s.trim();
    if let Ok(v) = s.parse::<f64>() {
        return if v.is_finite() { Ok(v) } else { Err(format!("bad timestamp `{s}`")) };
    }
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Ok(t.timestamp_millis() as f64 / 1000.0);
    }
    for fmt in ["%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%dT%H:%M:%S%.f"] {
        if let Ok(t) = NaiveDateTime::parse_from_str(s, fmt) {
            return Ok(t.and_utc().timestamp_millis() as f64 / 1000.0);
        }
    }
    Err(format!("bad timestamp `{s}`"))
}

pub const TRIP_LOG_HEADER: &str = "order_id,pickup_time,origin_node,dest_node";

/// One trip-log row. Node columns may be empty when coordinates are given.
#[derive(Debug, Clone, PartialEq, serde::Deserialize)]
pub struct TripLogRow {
    pub order_id: OrderId,
    pub pickup_time: String,
    pub origin_node: Option<NodeId>,
    pub dest_node: Option<NodeId>,
    #[serde(default)]
    pub origin_x_m: Option<f64>,
    #[serde(default)]
    pub origin_y_m: Option<f64>,
    #[serde(default)]
    pub dest_x_m: Option<f64>,
    #[serde(default)]
    pub dest_y_m: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IngestOptions {
    /// Epoch seconds; `None` starts at the hour of the earliest row.
    pub window_start: Option<f64>,
    pub hours: usize,
    pub snap_radius_m: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IngestReport {
    pub profile: DemandProfile,
    /// Accepted rows with times relative to the window start.
    pub records: Vec<TripRecord>,
    pub window_start: f64,
    pub rows: usize,
    /// Rows whose node was missing or unknown and was found by coordinates.
    pub snapped: usize,
    /// Rows with no node within the snapping radius.
    pub dropped_unmatched: usize,
    pub dropped_outside_window: usize,
    /// Rows whose origin and destination resolve to the same node.
    pub dropped_same_node: usize,
}

fn resolve(net: &RoadNetwork, node: Option<NodeId>, x: Option<f64>, y: Option<f64>, radius: f64) -> Option<(NodeId, bool)> {
    if let Some(n) = node.filter(|&n| net.contains(n)) {
        return Some((n, false));
    }
    let at = Coord { x_m: x?, y_m: y? };
    net.nearest_node(at, radius).map(|n| (n, true))
}

/// Hourly rates per OD: rows of hour `h` for OD `w`, divided by 3600 s.
/// ODs are the distinct resolved pairs, sorted.
pub fn ingest_demand(path: &Path, net: &RoadNetwork, opts: &IngestOptions) -> Result<IngestReport, IoError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(csv_err(path))?;
    let mut parsed = Vec::new();
    for (i, row) in rdr.deserialize::<TripLogRow>().enumerate() {
        let row = row.map_err(csv_err(path))?;
        let t = parse_time(&row.pickup_time).map_err(|msg| IoError::Parse { path: path.display().to_string(), line: i + 2, msg })?;
        parsed.push((row, t));
    }
    let window_start = opts
        .window_start
        .unwrap_or_else(|| parsed.iter().map(|(_, t)| *t).reduce(f64::min).map_or(0.0, |t| (t / 3600.0).floor() * 3600.0));
    let window_end = window_start + opts.hours as f64 * 3600.0;

    let mut report = IngestReport {
        profile: DemandProfile { ods: Vec::new(), hourly: vec![Vec::new(); opts.hours] },
        records: Vec::new(),
        window_start,
        rows: parsed.len(),
        snapped: 0,
        dropped_unmatched: 0,
        dropped_outside_window: 0,
        dropped_same_node: 0,
    };
    let mut counts: BTreeMap<(NodeId, NodeId), Vec<u64>> = BTreeMap::new();
    for (row, t) in parsed {
        if t < window_start || t >= window_end {
            report.dropped_outside_window += 1;
            continue;
        }
        let o = resolve(net, row.origin_node, row.origin_x_m, row.origin_y_m, opts.snap_radius_m);
        let d = resolve(net, row.dest_node, row.dest_x_m, row.dest_y_m, opts.snap_radius_m);
        let (Some((o, so)), Some((d, sd))) = (o, d) else {
            report.dropped_unmatched += 1;
            continue;
        };
        if so || sd {
            report.snapped += 1;
        }
        if o == d {
            report.dropped_same_node += 1;
            continue;
        }
        let hour = (((t - window_start) / 3600.0) as usize).min(opts.hours - 1);
        counts.entry((o, d)).or_insert_with(|| vec![0; opts.hours])[hour] += 1;
        report.records.push(TripRecord { order_id: row.order_id, time_s: t - window_start, trip: Trip::new(o, d) });
    }
    let ods: Vec<Trip> = counts.keys().map(|&(o, d)| Trip::new(o, d)).collect();
    let hourly = (0..opts.hours).map(|h| counts.values().map(|c| c[h] as f64 / 3600.0).collect()).collect();
    report.profile = DemandProfile::new(ods, hourly)?;
    Ok(report)
}

/// Writes records as a trip log with epoch-second times from `window_start`.
pub fn write_trip_log(path: &Path, records: &[TripRecord], window_start: f64) -> Result<(), IoError> {
    let mut s = format!("{TRIP_LOG_HEADER}\n");
    for r in records {
        let _ = writeln!(s, "{},{},{},{}", r.order_id, window_start + r.time_s, r.trip.origin, r.trip.destination);
    }
    std::fs::write(path, s).map_err(file_err(path))
}

pub const PROFILE_HEADER: &str = "hour,origin,destination,rate_per_s";

pub fn write_profile(path: &Path, profile: &DemandProfile, comments: &[String]) -> Result<(), IoError> {
    std::fs::write(path, profile_csv(profile, comments)).map_err(file_err(path))
}

pub fn profile_csv(profile: &DemandProfile, comments: &[String]) -> String {
    let mut s = comment_block(comments);
    s.push_str(PROFILE_HEADER);
    s.push('\n');
    for (h, rates) in profile.hourly.iter().enumerate() {
        for (od, r) in profile.ods.iter().zip(rates) {
            let _ = writeln!(s, "{h},{},{},{r}", od.origin, od.destination);
        }
    }
    s
}

#[derive(serde::Deserialize)]
struct ProfileRow {
    hour: usize,
    origin: NodeId,
    destination: NodeId,
    rate_per_s: f64,
}

/// Reads [`PROFILE_HEADER`] rows. Missing (hour, OD) cells are zero.
pub fn read_profile(path: &Path) -> Result<DemandProfile, IoError> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_path(path).map_err(csv_err(path))?;
    let mut rows = Vec::new();
    for row in rdr.deserialize::<ProfileRow>() {
        rows.push(row.map_err(csv_err(path))?);
    }
    let mut ods: Vec<Trip> = Vec::new();
    let mut index = BTreeMap::new();
    for r in &rows {
        index.entry((r.origin, r.destination)).or_insert_with(|| {
            ods.push(Trip::new(r.origin, r.destination));
            ods.len() - 1
        });
    }
    let hours = rows.iter().map(|r| r.hour + 1).max().unwrap_or(0);
    let mut hourly = vec![vec![0.0; ods.len()]; hours];
    for r in &rows {
        hourly[r.hour][index[&(r.origin, r.destination)]] = r.rate_per_s;
    }
    Ok(DemandProfile::new(ods, hourly)?)
}

fn comment_block(comments: &[String]) -> String {
    comments.iter().map(|c| format!("# {c}\n")).collect()
}

/// Per-seed rows, then one mean row per strategy (seed column `mean`) when
/// there is more than one seed.
pub fn metrics_csv(rows: &[RunMetrics]) -> String {
    let mut s = format!("{METRICS_HEADER}\n");
    for r in rows {
        s.push_str(&r.csv_row());
        s.push('\n');
    }
    let seeds: std::collections::BTreeSet<u64> = rows.iter().map(|r| r.seed).collect();
    if seeds.len() > 1 {
        for (strategy, m) in mean_rows(rows) {
            let hash = rows.iter().find(|r| r.strategy == strategy).map_or("", |r| &r.config_hash);
            let nums: Vec<String> = m.iter().map(|v| v.to_string()).collect();
            let _ = writeln!(s, "{},{strategy},mean,{hash}", nums.join(","));
        }
    }
    s
}

pub fn sweep_header() -> String {
    format!("axis,value,{METRICS_HEADER}")
}

/// [`metrics_csv`] per axis value, prefixed with the axis and value.
pub fn sweep_csv(axis: &str, cells: &[(f64, Vec<RunMetrics>)]) -> String {
    let mut s = sweep_header();
    s.push('\n');
    for (v, rows) in cells {
        for line in metrics_csv(rows).lines().skip(1) {
            let _ = writeln!(s, "{axis},{v},{line}");
        }
    }
    s
}

pub const ORACLE_HEADER: &str = "order_i,order_j,saving_m";

/// Pairs by order id, smaller id first, in instance order.
pub fn oracle_csv(instance: &OfflineInstance, pairing: &OraclePairing, comments: &[String]) -> String {
    let mut s = comment_block(comments);
    s.push_str(ORACLE_HEADER);
    s.push('\n');
    for &(i, j) in &pairing.pairs {
        let (a, b) = (instance.orders[i].id, instance.orders[j].id);
        let _ = writeln!(s, "{},{},{}", a.min(b), a.max(b), instance.saving(i, j));
    }
    s
}

pub const ORACLE_SUMMARY_HEADER: &str = "oracle,orders,pairs,pairing_ratio,total_saving_m,seed,config_hash";

pub const PREDICT_HEADER: &str = "hour,iterations,residual,clipped,seeker_states,taker_states,config_hash,seed";
