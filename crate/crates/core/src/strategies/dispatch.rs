use std::collections::HashMap;

use super::assignment::{solve_assignment, AssignmentProblem, Choice, Score};
use super::rtv::{rtv_assign, RtvRequest, RtvTrip, RtvVehicle};
use super::{utility, OptionValue, PassengerOutlook, Strategy, UtilityParams};
use crate::domain::{feasible_pairs, Occupancy, OrderId, PairingConfig, ServeMode, Trip, Vehicle, VehicleId};
use crate::network::{NetworkError, RoadNetwork};
use crate::prediction::{wait_factor, PredictionTables};

/// A passenger taking part in the current matching round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaitingPassenger {
    pub order: OrderId,
    pub trip: Trip,
    /// Rounds taken part in, counting this one (1 on the first round).
    pub k: u32,
    /// Rounds the passenger accepts before cancelling.
    pub k_budget: u32,
}

#[derive(Debug, Clone, Copy)]
pub struct Snapshot<'a> {
    pub net: &'a RoadNetwork,
    pub time_s: f64,
    pub round: u64,
    pub passengers: &'a [WaitingPassenger],
    pub vehicles: &'a [Vehicle],
}

#[derive(Debug, Clone, Copy)]
pub struct DispatchContext<'a> {
    pub strategy: Strategy,
    pub params: UtilityParams,
    pub cfg: PairingConfig,
    pub tables: Option<&'a PredictionTables>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Decision {
    /// Board a vacant vehicle alone.
    Solo { order: OrderId, vehicle: VehicleId, pickup_m: f64, utility: f64 },
    /// Join the passenger on board a partially occupied vehicle.
    Join {
        order: OrderId,
        vehicle: VehicleId,
        onboard: OrderId,
        pickup_m: f64,
        mode: ServeMode,
        saving_m: f64,
        utility: f64,
    },
    /// Two waiting passengers share a vacant vehicle; `first` is picked up
    /// first.
    Pair {
        first: OrderId,
        second: OrderId,
        vehicle: VehicleId,
        pickup_m: f64,
        second_pickup_m: f64,
        mode: ServeMode,
        saving_m: f64,
    },
    /// Deliberately kept for a later round.
    Wait { order: OrderId, utility: f64 },
    /// No option this round.
    Unassigned { order: OrderId },
}

impl Decision {
    pub fn vehicle(&self) -> Option<VehicleId> {
        match *self {
            Decision::Solo { vehicle, .. } | Decision::Join { vehicle, .. } | Decision::Pair { vehicle, .. } => {
                Some(vehicle)
            }
            _ => None,
        }
    }

    pub fn orders(&self) -> Vec<OrderId> {
        match *self {
            Decision::Solo { order, .. }
            | Decision::Join { order, .. }
            | Decision::Wait { order, .. }
            | Decision::Unassigned { order } => vec![order],
            Decision::Pair { first, second, .. } => vec![first, second],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchMatchResult {
    pub round: u64,
    pub decisions: Vec<Decision>,
    /// Sum of the chosen utilities (distance saving for RTV).
    pub objective: f64,
}

#[derive(Debug, thiserror::Error)]
pub enum DispatchError {
    #[error("strategy {0} needs prediction tables; run `predict` first")]
    MissingTables(Strategy),
    #[error(transparent)]
    Network(#[from] NetworkError),
}

impl BatchMatchResult {
    /// Every passenger decided exactly once and every vehicle used at most
    /// once.
    pub fn check(&self, passengers: &[WaitingPassenger]) {
        let mut seen: HashMap<OrderId, usize> = HashMap::new();
        let mut vehicles = std::collections::HashSet::new();
        for d in &self.decisions {
            for o in d.orders() {
                *seen.entry(o).or_default() += 1;
            }
            if let Some(v) = d.vehicle() {
                assert!(vehicles.insert(v), "vehicle {v} assigned twice in round {}", self.round);
            }
        }
        assert_eq!(seen.len(), passengers.len(), "round {}: decision count mismatch", self.round);
        for p in passengers {
            assert_eq!(seen.get(&p.order), Some(&1), "round {}: order {} not decided once", self.round, p.order);
        }
    }
}

/// Forward-looking inputs of a passenger from the tables of the current hour.
/// Unknown ODs predict nothing.
pub fn outlook(p: &WaitingPassenger, tables: Option<&PredictionTables>, params: &UtilityParams, time_s: f64) -> PassengerOutlook {
    let mut out = PassengerOutlook { k: p.k, e_vacant: 0.0, e_wait: 0.0 };
    let Some(tables) = tables else { return out };
    let (Some(hour), Some(w)) = (tables.hour_at(time_s), tables.od_of(&p.trip)) else {
        return out;
    };
    out.e_vacant = hour.e_vacant[w];
    let k_pop = params.k_rounds_pop;
    let p_s = hour.state.p_s[w];
    let factor = wait_factor(params.r_w, k_pop, p.k.min(k_pop)).unwrap_or(0.0);
    out.e_wait = factor * (p_s * hour.e_seeker[w] + (1.0 - p_s) * hour.e_vacant[w]);
    out
}

pub fn dispatch_round(snap: &Snapshot<'_>, ctx: &DispatchContext<'_>) -> Result<BatchMatchResult, DispatchError> {
    if ctx.strategy.needs_tables() && ctx.tables.is_none() {
        return Err(DispatchError::MissingTables(ctx.strategy));
    }
    let result = match ctx.strategy {
        Strategy::Rtv => dispatch_rtv(snap, ctx)?,
        _ => dispatch_batch(snap, ctx)?,
    };
    result.check(snap.passengers);
    Ok(result)
}

#[derive(Clone, Copy)]
enum Edge {
    Vacant { vehicle: VehicleId, pickup_m: f64 },
    Partial { vehicle: VehicleId, onboard: OrderId, pickup_m: f64, mode: ServeMode, saving_m: f64 },
}

fn dispatch_batch(snap: &Snapshot<'_>, ctx: &DispatchContext<'_>) -> Result<BatchMatchResult, DispatchError> {
    let index: HashMap<VehicleId, usize> = snap.vehicles.iter().enumerate().map(|(i, v)| (v.id, i)).collect();
    let mut problem = AssignmentProblem::new(snap.passengers.len(), snap.vehicles.len());
    let mut edges = Vec::new();
    // WAIT loses exact ties against every vehicle edge
    let wait_tiebreak = -(ctx.cfg.max_pickup_m + 1.0);
    let mut private_utility = vec![None; snap.passengers.len()];

    for (i, p) in snap.passengers.iter().enumerate() {
        let look = outlook(p, ctx.tables, &ctx.params, snap.time_s);
        let cands = feasible_pairs(snap.net, &p.trip, snap.vehicles.iter(), &ctx.cfg)?;
        for c in &cands.vacant {
            let opt = OptionValue::Vacant { pickup_m: c.pickup_m };
            if let Some(u) = utility(ctx.strategy, opt, &look, &ctx.params) {
                problem.add_edge(i, index[&c.vehicle], Score::new(1, u, -c.pickup_m));
                edges.push((Edge::Vacant { vehicle: c.vehicle, pickup_m: c.pickup_m }, u));
            }
        }
        for c in &cands.partial {
            let opt = OptionValue::Partial { pickup_m: c.pickup_m, saving_m: c.saving_m };
            if let Some(u) = utility(ctx.strategy, opt, &look, &ctx.params) {
                problem.add_edge(i, index[&c.vehicle], Score::new(1, u, -c.pickup_m));
                edges.push((
                    Edge::Partial {
                        vehicle: c.vehicle,
                        onboard: c.onboard,
                        pickup_m: c.pickup_m,
                        mode: c.mode,
                        saving_m: c.saving_m,
                    },
                    u,
                ));
            }
        }
        if ctx.strategy.has_wait_option() && p.k < p.k_budget {
            if let Some(u) = utility(ctx.strategy, OptionValue::Wait, &look, &ctx.params) {
                problem.private[i] = Score::new(1, u, wait_tiebreak);
                private_utility[i] = Some(u);
            }
        }
    }

    let a = solve_assignment(&problem);
    let mut decisions = Vec::with_capacity(snap.passengers.len());
    let mut objective = 0.0;
    for (i, p) in snap.passengers.iter().enumerate() {
        let d = match a.choices[i] {
            Choice::Vehicle(_) => {
                let (edge, u) = edges[a.edge_of[i].expect("vehicle choice has an edge")];
                objective += u;
                match edge {
                    Edge::Vacant { vehicle, pickup_m } => Decision::Solo { order: p.order, vehicle, pickup_m, utility: u },
                    Edge::Partial { vehicle, onboard, pickup_m, mode, saving_m } => {
                        Decision::Join { order: p.order, vehicle, onboard, pickup_m, mode, saving_m, utility: u }
                    }
                }
            }
            Choice::Private => match private_utility[i] {
                Some(u) => {
                    objective += u;
                    Decision::Wait { order: p.order, utility: u }
                }
                None => Decision::Unassigned { order: p.order },
            },
        };
        decisions.push(d);
    }
    Ok(BatchMatchResult { round: snap.round, decisions, objective })
}

fn dispatch_rtv(snap: &Snapshot<'_>, ctx: &DispatchContext<'_>) -> Result<BatchMatchResult, DispatchError> {
    let requests: Vec<RtvRequest> = snap.passengers.iter().map(|p| RtvRequest { trip: p.trip }).collect();
    let usable: Vec<&Vehicle> = snap
        .vehicles
        .iter()
        .filter(|v| matches!(v.occupancy, Occupancy::Vacant | Occupancy::Partial { .. }))
        .collect();
    let vehicles: Vec<RtvVehicle> = usable
        .iter()
        .map(|v| RtvVehicle {
            location: v.location,
            onboard: match v.occupancy {
                Occupancy::Partial { trip, .. } => Some(trip),
                _ => None,
            },
        })
        .collect();
    let sol = rtv_assign(snap.net, &requests, &vehicles, &ctx.cfg)?;

    let mut decided = vec![false; snap.passengers.len()];
    let mut decisions = Vec::new();
    let mut objective = 0.0;
    for t in &sol.trips {
        match *t {
            RtvTrip::Single { request, vehicle, pickup_m, mode, saving_m } => {
                decided[request] = true;
                let order = snap.passengers[request].order;
                let v = usable[vehicle];
                let utility = saving_m - pickup_m;
                decisions.push(match (v.occupancy, mode) {
                    (Occupancy::Partial { onboard, .. }, Some(mode)) => {
                        objective += saving_m;
                        Decision::Join { order, vehicle: v.id, onboard, pickup_m, mode, saving_m, utility }
                    }
                    _ => Decision::Solo { order, vehicle: v.id, pickup_m, utility },
                });
            }
            RtvTrip::Pair { first, second, vehicle, pickup_m, mode, saving_m } => {
                decided[first] = true;
                decided[second] = true;
                objective += saving_m;
                let a = snap.passengers[first].trip;
                let b = snap.passengers[second].trip;
                decisions.push(Decision::Pair {
                    first: snap.passengers[first].order,
                    second: snap.passengers[second].order,
                    vehicle: usable[vehicle].id,
                    pickup_m,
                    second_pickup_m: snap.net.shortest_distance(a.origin, b.origin)?,
                    mode,
                    saving_m,
                });
            }
        }
    }
    for (i, p) in snap.passengers.iter().enumerate() {
        if !decided[i] {
            decisions.push(Decision::Unassigned { order: p.order });
        }
    }
    Ok(BatchMatchResult { round: snap.round, decisions, objective })
}
