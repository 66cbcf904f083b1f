use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};

use super::{rng_stream, SimConfig, Stream};
use crate::domain::{Order, OrderId, Trip};
use crate::network::RoadNetwork;
use crate::prediction::DemandProfile;

/// One row of a trip log, already resolved to network nodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TripRecord {
    pub order_id: OrderId,
    pub time_s: f64,
    pub trip: Trip,
}

/// Orders of a run, sorted by arrival time, plus the number of input
/// orders dropped because their OD is unusable on the network.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Demand {
    pub orders: Vec<Order>,
    pub skipped: usize,
}

fn usable(net: &RoadNetwork, trip: &Trip) -> bool {
    trip.origin != trip.destination && net.shortest_distance(trip.origin, trip.destination).is_ok()
}

/// Maximum waiting time, normal but redrawn below one batch interval.
fn draw_max_wait(rng: &mut ChaCha8Rng, cfg: &SimConfig) -> f64 {
    if cfg.max_wait_sd_s <= 0.0 {
        return cfg.max_wait_mean_s.max(cfg.batch_interval_s);
    }
    let normal = Normal::new(cfg.max_wait_mean_s, cfg.max_wait_sd_s).expect("valid wait distribution");
    for _ in 0..1000 {
        let w = normal.sample(rng);
        if w >= cfg.batch_interval_s {
            return w;
        }
    }
    cfg.batch_interval_s
}

/// Poisson arrivals per OD with hourly piecewise-constant rates over
/// `[0, cfg.horizon_s)`. Uses the demand stream only, so every strategy run
/// with the same seed sees the same orders.
pub fn generate_demand(profile: &DemandProfile, net: &RoadNetwork, cfg: &SimConfig) -> Demand {
    let mut rng = rng_stream(cfg.seed, Stream::Demand);
    let mut arrivals: Vec<(f64, usize)> = Vec::new();
    let mut skipped_ods = vec![false; profile.ods.len()];
    for (w, od) in profile.ods.iter().enumerate() {
        skipped_ods[w] = !usable(net, od);
    }
    for w in 0..profile.ods.len() {
        let mut start = 0.0;
        for rates in &profile.hourly {
            if start >= cfg.horizon_s {
                break;
            }
            let end = (start + 3600.0).min(cfg.horizon_s);
            let rate = rates[w];
            if rate > 0.0 {
                let exp = Exp::new(rate).expect("positive rate");
                let mut t = start;
                loop {
                    t += exp.sample(&mut rng);
                    if t >= end {
                        break;
                    }
                    arrivals.push((t, w));
                }
            }
            start = end;
        }
    }
    arrivals.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut demand = Demand::default();
    for (t, w) in arrivals {
        let wait = draw_max_wait(&mut rng, cfg);
        if skipped_ods[w] {
            demand.skipped += 1;
            continue;
        }
        let id = demand.orders.len() as OrderId;
        demand.orders.push(Order::new(id, profile.ods[w], t, wait));
    }
    demand
}

/// Exact replay of a trip log inside `[0, cfg.horizon_s)`. Waiting budgets
/// are drawn from the demand stream in log order.
pub fn replay_demand(records: &[TripRecord], net: &RoadNetwork, cfg: &SimConfig) -> Demand {
    let mut rng = rng_stream(cfg.seed, Stream::Demand);
    let mut rows: Vec<&TripRecord> = records.iter().filter(|r| r.time_s >= 0.0 && r.time_s < cfg.horizon_s).collect();
    rows.sort_by(|a, b| a.time_s.total_cmp(&b.time_s).then(a.order_id.cmp(&b.order_id)));
    let mut demand = Demand::default();
    for r in rows {
        let wait = draw_max_wait(&mut rng, cfg);
        if !usable(net, &r.trip) {
            demand.skipped += 1;
            continue;
        }
        demand.orders.push(Order::new(r.order_id, r.trip, r.time_s, wait));
    }
    demand
}

/// Uniformly random start nodes for `count` vehicles from the
/// initialisation stream.
pub fn initial_locations(net: &RoadNetwork, count: usize, seed: u64) -> Vec<crate::network::NodeId> {
    let mut rng = rng_stream(seed, Stream::Init);
    let nodes = net.node_ids();
    (0..count).map(|_| nodes[rng.random_range(0..nodes.len())]).collect()
}
