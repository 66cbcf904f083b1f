//! Benchmark scenario, cross-strategy comparisons and parameter sweeps.

use rayon::prelude::*;

use crate::domain::Trip;
use crate::network::{NetworkError, NodeId, RoadNetwork};
use crate::prediction::{solve_fixed_point, DemandProfile, PredictionError, PredictionTables, SolverOptions, StateSpace};
use crate::simulator::{generate_demand, replay_demand, run, Demand, TripRecord, RunMetrics, SimConfig, SimError, NUMERIC_COLUMNS};
use crate::strategies::Strategy;

/// Hotspot nodes of the desk benchmark: two diagonal clusters of four on
/// the 10 x 10 grid.
pub const DESK_HOTSPOTS: [NodeId; 8] = [0, 11, 22, 33, 66, 77, 88, 99];
/// Arrivals per second of each hotspot OD in the first hour.
pub const DESK_RATE_PER_OD: f64 = 1.0 / 360.0;
/// Demand of the second hour relative to the first.
pub const DESK_SECOND_HOUR: f64 = 0.8;
pub const DESK_SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

#[derive(Debug, Clone)]
pub struct Scenario {
    pub net: RoadNetwork,
    pub profile: DemandProfile,
    pub sim: SimConfig,
    /// Orders to replay instead of drawing Poisson arrivals from `profile`.
    pub replay: Option<Vec<TripRecord>>,
}

impl Scenario {
    /// The order stream of one seed. Every strategy run on the seed gets
    /// this stream.
    pub fn demand(&self, seed: u64) -> Demand {
        let cfg = SimConfig { seed, ..self.sim.clone() };
        match &self.replay {
            Some(records) => replay_demand(records, &self.net, &cfg),
            None => generate_demand(&self.profile, &self.net, &cfg),
        }
    }
}

/// 10 x 10 grid with 500 m links at 30 km/h, every ordered pair of eight
/// hotspots as an OD, two hours of Poisson demand.
pub fn desk_benchmark() -> Scenario {
    hotspot_benchmark(&DESK_HOTSPOTS, DESK_RATE_PER_OD, DESK_SECOND_HOUR)
}

/// The desk grid with the given hotspots and first-hour rate per OD.
pub fn hotspot_benchmark(hotspots: &[NodeId], rate_per_od: f64, second_hour: f64) -> Scenario {
    let sim = SimConfig::default();
    let net = RoadNetwork::grid(10, 10, 500.0, sim.speed_mps).expect("valid grid");
    let mut ods = Vec::new();
    for &o in hotspots {
        for &d in hotspots {
            if o != d {
                ods.push(Trip::new(o, d));
            }
        }
    }
    let first = vec![rate_per_od; ods.len()];
    let second = first.iter().map(|r| r * second_hour).collect();
    let profile = DemandProfile::new(ods, vec![first, second]).expect("valid rates");
    Scenario { net, profile, sim, replay: None }
}

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Prediction(#[from] PredictionError),
    #[error(transparent)]
    Network(#[from] NetworkError),
}

/// Prediction tables for the scenario's profile and pairing limits.
pub fn solve_tables(s: &Scenario) -> Result<PredictionTables, ExperimentError> {
    let space = StateSpace::build(&s.net, &s.profile.ods, &s.sim.pairing())?;
    Ok(solve_fixed_point(&space, &s.profile, &SolverOptions::default())?.0)
}

/// Every strategy on one order stream per seed. Rows come seed by seed in
/// strategy order.
pub fn compare(
    s: &Scenario,
    strategies: &[Strategy],
    seeds: &[u64],
    tables: Option<&PredictionTables>,
) -> Result<Vec<RunMetrics>, ExperimentError> {
    let cells: Vec<(u64, Strategy)> = seeds.iter().flat_map(|&seed| strategies.iter().map(move |&st| (seed, st))).collect();
    let demands: Vec<(u64, Demand)> = seeds.iter().map(|&seed| (seed, s.demand(seed))).collect();
    cells
        .par_iter()
        .map(|&(seed, st)| {
            let cfg = SimConfig { seed, ..s.sim.clone() };
            let demand = &demands.iter().find(|(x, _)| *x == seed).expect("demand per seed").1;
            Ok(run(&s.net, demand, &cfg, st, tables)?.metrics)
        })
        .collect()
}

/// Per-strategy mean over seeds, in first-seen strategy order.
pub fn mean_rows(rows: &[RunMetrics]) -> Vec<(String, [f64; NUMERIC_COLUMNS])> {
    let mut out: Vec<(String, [f64; NUMERIC_COLUMNS], usize)> = Vec::new();
    for r in rows {
        let i = match out.iter().position(|(s, _, _)| *s == r.strategy) {
            Some(i) => i,
            None => {
                out.push((r.strategy.clone(), [0.0; NUMERIC_COLUMNS], 0));
                out.len() - 1
            }
        };
        for (acc, v) in out[i].1.iter_mut().zip(r.numeric()) {
            *acc += v;
        }
        out[i].2 += 1;
    }
    out.into_iter().map(|(s, sum, n)| (s, sum.map(|v| v / n as f64))).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    /// Mean of the maximum waiting time (s).
    K,
    RW,
    BatchInterval,
    /// Vehicles per 100 orders.
    Ratio,
}

impl SweepAxis {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepAxis::K => "K",
            SweepAxis::RW => "r_w",
            SweepAxis::BatchInterval => "dt",
            SweepAxis::Ratio => "ratio",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "K" | "k" | "max_wait_mean_s" => Some(SweepAxis::K),
            "r_w" | "rw" => Some(SweepAxis::RW),
            "dt" | "batch_interval_s" => Some(SweepAxis::BatchInterval),
            "ratio" | "drivers_per_100_orders" => Some(SweepAxis::Ratio),
            _ => None,
        }
    }

    pub fn apply(self, cfg: &SimConfig, value: f64) -> SimConfig {
        let mut c = cfg.clone();
        match self {
            SweepAxis::K => c.max_wait_mean_s = value,
            SweepAxis::RW => c.r_w = value,
            SweepAxis::BatchInterval => c.batch_interval_s = value,
            SweepAxis::Ratio => c.drivers_per_100_orders = value,
        }
        c
    }
}

/// One comparison per axis value. The tables depend only on the network,
/// the profile and the pairing limits, none of which the axes touch.
pub fn sweep(
    s: &Scenario,
    axis: SweepAxis,
    values: &[f64],
    strategies: &[Strategy],
    seeds: &[u64],
    tables: Option<&PredictionTables>,
) -> Result<Vec<(f64, Vec<RunMetrics>)>, ExperimentError> {
    values
        .iter()
        .map(|&v| {
            let cell = Scenario { sim: axis.apply(&s.sim, v), ..s.clone() };
            Ok((v, compare(&cell, strategies, seeds, tables)?))
        })
        .collect()
}
