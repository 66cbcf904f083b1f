use std::collections::BTreeMap;

use super::events::{Event, EventKind};
use super::Pricing;
use crate::domain::OrderId;

pub const METRICS_HEADER: &str = "response_rate,pairing_ratio,profit,avg_resp_time_s,avg_pk_time_s,avg_detour_m,\
avg_share_m,dist_total_km,dist_save_km,avg_pk_dist_m,admitted,responded,cancelled,residual,paired,strategy,seed,config_hash";

/// Numeric columns of [`METRICS_HEADER`], in order.
pub const NUMERIC_COLUMNS: usize = 15;

/// Run summary. Averages are over responded riders, except pickup time
/// (riders picked up) and detour and share (paired riders delivered).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunMetrics {
    pub response_rate: f64,
    pub pairing_ratio: f64,
    pub profit: f64,
    pub avg_resp_time_s: f64,
    pub avg_pk_time_s: f64,
    pub avg_detour_m: f64,
    pub avg_share_m: f64,
    /// Distance driven with at least one rider aboard.
    pub dist_total_km: f64,
    pub dist_save_km: f64,
    /// Mean pickup distance at the assignment instant.
    pub avg_pk_dist_m: f64,
    pub admitted: usize,
    pub responded: usize,
    pub cancelled: usize,
    /// Still waiting when the drain period ends.
    pub residual: usize,
    pub paired: usize,
    pub strategy: String,
    pub seed: u64,
    pub config_hash: String,
}

impl RunMetrics {
    pub fn numeric(&self) -> [f64; NUMERIC_COLUMNS] {
        [
            self.response_rate,
            self.pairing_ratio,
            self.profit,
            self.avg_resp_time_s,
            self.avg_pk_time_s,
            self.avg_detour_m,
            self.avg_share_m,
            self.dist_total_km,
            self.dist_save_km,
            self.avg_pk_dist_m,
            self.admitted as f64,
            self.responded as f64,
            self.cancelled as f64,
            self.residual as f64,
            self.paired as f64,
        ]
    }

    pub fn csv_row(&self) -> String {
        let nums: Vec<String> = self.numeric().iter().map(|v| v.to_string()).collect();
        format!("{},{},{},{}", nums.join(","), self.strategy, self.seed, self.config_hash)
    }

    pub fn conserved(&self) -> bool {
        self.admitted == self.responded + self.cancelled + self.residual
    }
}

#[derive(Default)]
struct Rec {
    arrival: Option<f64>,
    assign: Option<f64>,
    pickup_plan_m: f64,
    picked: Option<f64>,
    pooled: bool,
    cancelled: bool,
    dropoff: Option<(f64, f64, f64)>,
}

fn field(e: &Event, key: &str) -> f64 {
    e.get_f64(key).unwrap_or_else(|| panic!("{} event at {} lacks `{key}`", e.kind, e.time_s))
}

/// Rider fares minus driver pay, from dropoff and trip-end events.
pub fn compute_profit(events: &[Event], pricing: &Pricing) -> f64 {
    let mut fares = 0.0;
    let mut occupied = 0.0;
    for e in events {
        match e.kind {
            EventKind::Dropoff => {
                let (ride, shared) = (field(e, "ride_m"), field(e, "shared_m"));
                fares += ((ride - shared) * pricing.solo_per_km + shared * pricing.shared_per_km) / 1000.0;
            }
            EventKind::TripEnd => occupied += field(e, "occupied_m"),
            _ => {}
        }
    }
    fares - occupied / 1000.0 * pricing.driver_per_km
}

fn trip_riders(e: &Event) -> Vec<OrderId> {
    e.get("riders")
        .unwrap_or("")
        .split('|')
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().expect("rider id"))
        .collect()
}

/// Rebuilds the metrics of a run from its event log alone. The saving is
/// taken from completed pooled trips: exclusive lengths minus the distance
/// driven occupied.
pub fn metrics_from_events(events: &[Event], pricing: &Pricing) -> RunMetrics {
    let mut recs: BTreeMap<OrderId, Rec> = BTreeMap::new();
    let mut occupied = 0.0;
    let mut saving = 0.0;
    let mut direct: BTreeMap<OrderId, f64> = BTreeMap::new();
    let mut trips = Vec::new();
    for e in events {
        let rec = e.order.map(|o| recs.entry(o).or_default());
        match (e.kind, rec) {
            (EventKind::Arrive, Some(r)) => r.arrival = Some(e.time_s),
            (EventKind::Assign, Some(r)) => {
                r.assign = Some(e.time_s);
                r.pickup_plan_m = field(e, "pickup_m");
                if let Some(p) = e.get("partner") {
                    r.pooled = true;
                    recs.entry(p.parse().expect("partner id")).or_default().pooled = true;
                }
            }
            (EventKind::Cancel, Some(r)) => r.cancelled = true,
            (EventKind::Pickup, Some(r)) => r.picked = Some(e.time_s),
            (EventKind::Dropoff, Some(r)) => {
                let d = field(e, "direct_m");
                r.dropoff = Some((field(e, "ride_m"), field(e, "shared_m"), d));
                direct.insert(e.order.expect("dropoff has an order"), d);
            }
            (EventKind::TripEnd, _) => {
                let occ = field(e, "occupied_m");
                occupied += occ;
                trips.push((occ, trip_riders(e)));
            }
            _ => {}
        }
    }
    for (occ, riders) in &trips {
        if riders.len() == 2 {
            saving += riders.iter().map(|r| direct[r]).sum::<f64>() - occ;
        }
    }

    let mut m = RunMetrics::default();
    let (mut resp, mut pk_dist) = (0.0, 0.0);
    let mut pk_time = (0.0, 0usize);
    let mut detour = (0.0, 0usize);
    let mut share = 0.0;
    for r in recs.values() {
        let Some(arrival) = r.arrival else { continue };
        m.admitted += 1;
        if r.cancelled {
            m.cancelled += 1;
        }
        let Some(a) = r.assign else { continue };
        m.responded += 1;
        resp += a - arrival;
        pk_dist += r.pickup_plan_m;
        if let Some(p) = r.picked {
            pk_time.0 += p - a;
            pk_time.1 += 1;
        }
        if r.pooled {
            m.paired += 1;
            if let Some((ride, shared, direct)) = r.dropoff {
                detour.0 += ride - direct;
                detour.1 += 1;
                share += shared;
            }
        }
    }
    m.residual = m.admitted - m.responded - m.cancelled;
    let ratio = |a: f64, b: usize| if b == 0 { 0.0 } else { a / b as f64 };
    m.response_rate = ratio(m.responded as f64, m.admitted);
    m.pairing_ratio = ratio(m.paired as f64, m.responded);
    m.avg_resp_time_s = ratio(resp, m.responded);
    m.avg_pk_time_s = ratio(pk_time.0, pk_time.1);
    m.avg_pk_dist_m = ratio(pk_dist, m.responded);
    m.avg_detour_m = ratio(detour.0, detour.1);
    m.avg_share_m = ratio(share, detour.1);
    m.dist_total_km = occupied / 1000.0;
    m.dist_save_km = saving / 1000.0;
    m.profit = compute_profit(events, pricing);
    m
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditViolation {
    pub order: OrderId,
    pub reason: String,
}

/// Realized detours may exceed the planned ones by accumulated rounding.
const DETOUR_SLACK_M: f64 = 1e-6;

/// Checks every rider of a pooled trip: assignment pickup strictly below
/// `max_pickup_m` and realized detour within `max_detour_m`.
pub fn audit_events(events: &[Event], max_pickup_m: f64, max_detour_m: f64) -> Vec<AuditViolation> {
    let mut pickup: BTreeMap<OrderId, f64> = BTreeMap::new();
    let mut drop: BTreeMap<OrderId, (f64, f64)> = BTreeMap::new();
    let mut out = Vec::new();
    for e in events {
        match (e.kind, e.order) {
            (EventKind::Assign, Some(o)) => {
                pickup.insert(o, field(e, "pickup_m"));
            }
            (EventKind::Dropoff, Some(o)) => {
                drop.insert(o, (field(e, "ride_m"), field(e, "direct_m")));
            }
            (EventKind::TripEnd, _) => {
                let riders = trip_riders(e);
                if riders.len() < 2 {
                    continue;
                }
                for o in riders {
                    match pickup.get(&o) {
                        Some(&p) if p < max_pickup_m => {}
                        Some(&p) => out.push(AuditViolation { order: o, reason: format!("pickup {p} m") }),
                        None => out.push(AuditViolation { order: o, reason: "no assignment".into() }),
                    }
                    match drop.get(&o) {
                        Some(&(ride, direct)) if ride - direct <= max_detour_m + DETOUR_SLACK_M => {}
                        Some(&(ride, direct)) => {
                            out.push(AuditViolation { order: o, reason: format!("detour {} m", ride - direct) })
                        }
                        None => out.push(AuditViolation { order: o, reason: "no dropoff".into() }),
                    }
                }
            }
            _ => {}
        }
    }
    out
}
