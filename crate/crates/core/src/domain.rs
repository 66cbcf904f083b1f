//! Orders, vehicles and the pairing geometry of a two-passenger pooled trip.

use std::fmt;

use thiserror::Error;

use crate::network::{NetworkError, NodeId, RoadNetwork};

pub type OrderId = u64;
pub type VehicleId = u32;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{name} must be strictly positive, got {value}")]
    NotPositive { name: &'static str, value: f64 },
    #[error("{name} must lie in [0, 1], got {value}")]
    NotProbability { name: &'static str, value: f64 },
    #[error("{0}")]
    Invalid(String),
}

pub(crate) fn positive(name: &'static str, value: f64) -> Result<(), ConfigError> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(ConfigError::NotPositive { name, value })
    }
}

/// Origin and destination of a single passenger trip.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Trip {
    pub origin: NodeId,
    pub destination: NodeId,
}

impl Trip {
    pub fn new(origin: NodeId, destination: NodeId) -> Self {
        Trip { origin, destination }
    }
}

impl fmt::Display for Trip {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}->{}", self.origin, self.destination)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OrderStatus {
    Waiting,
    /// Assigned to a vacant vehicle; rides alone unless a partner joins.
    Solo,
    Paired,
    Delivered,
    Cancelled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Order {
    pub id: OrderId,
    pub trip: Trip,
    pub arrival_s: f64,
    pub max_wait_s: f64,
    /// Matching rounds this order has taken part in, the current one
    /// included.
    pub rounds_waited: u32,
    pub status: OrderStatus,
}

impl Order {
    pub fn new(id: OrderId, trip: Trip, arrival_s: f64, max_wait_s: f64) -> Self {
        Order {
            id,
            trip,
            arrival_s,
            max_wait_s,
            rounds_waited: 0,
            status: OrderStatus::Waiting,
        }
    }

    /// Number of matching rounds the order can take part in before it
    /// cancels, `ceil(max_wait / batch_interval)`, at least one.
    pub fn rounds_budget(&self, batch_interval_s: f64) -> u32 {
        rounds_budget(self.max_wait_s, batch_interval_s)
    }
}

pub fn rounds_budget(wait_s: f64, batch_interval_s: f64) -> u32 {
    ((wait_s / batch_interval_s).ceil() as u32).max(1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ServeMode {
    /// First on, first off.
    Fofo,
    /// First on, last off.
    Folo,
}

impl ServeMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ServeMode::Fofo => "fofo",
            ServeMode::Folo => "folo",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Occupancy {
    Vacant,
    /// Driving to the first pickup; not available for matching.
    Committed,
    /// One passenger on board and room for one more.
    Partial { onboard: OrderId, trip: Trip },
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopAction {
    Pickup,
    Dropoff,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Stop {
    pub node: NodeId,
    pub order: OrderId,
    pub action: StopAction,
}

/// A vehicle as seen by the dispatcher: its decision location and what is
/// on board. Capacity is two passengers.
#[derive(Debug, Clone, PartialEq)]
pub struct Vehicle {
    pub id: VehicleId,
    pub location: NodeId,
    pub occupancy: Occupancy,
    pub stops: Vec<Stop>,
}

impl Vehicle {
    pub fn vacant(id: VehicleId, location: NodeId) -> Self {
        Vehicle {
            id,
            location,
            occupancy: Occupancy::Vacant,
            stops: Vec::new(),
        }
    }

    pub fn partial(id: VehicleId, location: NodeId, onboard: OrderId, trip: Trip) -> Self {
        Vehicle {
            id,
            location,
            occupancy: Occupancy::Partial { onboard, trip },
            stops: vec![Stop {
                node: trip.destination,
                order: onboard,
                action: StopAction::Dropoff,
            }],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairingConfig {
    /// Pickup distance must be strictly below this.
    pub max_pickup_m: f64,
    /// Each passenger's detour must not exceed this.
    pub max_detour_m: f64,
    pub batch_interval_s: f64,
}

impl Default for PairingConfig {
    fn default() -> Self {
        PairingConfig {
            max_pickup_m: 3000.0,
            max_detour_m: 3000.0,
            batch_interval_s: 10.0,
        }
    }
}

impl PairingConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        positive("max_pickup_m", self.max_pickup_m)?;
        positive("max_detour_m", self.max_detour_m)?;
        positive("batch_interval_s", self.batch_interval_s)
    }
}

pub fn pickup_distance(net: &RoadNetwork, vehicle_at: NodeId, trip: &Trip) -> Result<f64, NetworkError> {
    net.shortest_distance(vehicle_at, trip.origin)
}

/// Route lengths of a pooled trip for both serving orders. `first` is on
/// board, picked up at its origin, and the vehicle is now at `vehicle_at`.
/// The lengths run from the first pickup to the last dropoff.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairGeometry {
    pub first_direct_m: f64,
    pub second_direct_m: f64,
    /// Distance already driven with `first` aboard.
    pub driven_m: f64,
    pub pickup_m: f64,
    pub fofo_m: f64,
    pub folo_m: f64,
    // Legs used by the detour computation.
    second_to_first_dest: f64,
    dest_to_dest_first_then_second: f64,
}

impl PairGeometry {
    pub fn compute(net: &RoadNetwork, first: &Trip, second: &Trip, vehicle_at: NodeId) -> Result<Self, NetworkError> {
        let driven_m = net.shortest_distance(first.origin, vehicle_at)?;
        let pickup_m = net.shortest_distance(vehicle_at, second.origin)?;
        let second_to_first_dest = net.shortest_distance(second.origin, first.destination)?;
        let first_dest_to_second_dest = net.shortest_distance(first.destination, second.destination)?;
        let second_direct_m = net.shortest_distance(second.origin, second.destination)?;
        let second_dest_to_first_dest = net.shortest_distance(second.destination, first.destination)?;
        let first_direct_m = net.shortest_distance(first.origin, first.destination)?;
        let fofo_m = driven_m + pickup_m + second_to_first_dest + first_dest_to_second_dest;
        let folo_m = driven_m + pickup_m + second_direct_m + second_dest_to_first_dest;
        Ok(PairGeometry {
            first_direct_m,
            second_direct_m,
            driven_m,
            pickup_m,
            fofo_m,
            folo_m,
            second_to_first_dest,
            dest_to_dest_first_then_second: first_dest_to_second_dest,
        })
    }

    pub fn route_length(&self, mode: ServeMode) -> f64 {
        match mode {
            ServeMode::Fofo => self.fofo_m,
            ServeMode::Folo => self.folo_m,
        }
    }

    /// Serving order with the shorter route; FOFO on ties.
    pub fn shorter_mode(&self) -> ServeMode {
        if self.folo_m < self.fofo_m {
            ServeMode::Folo
        } else {
            ServeMode::Fofo
        }
    }

    /// Sum of exclusive lengths minus the shorter pooled route. May be
    /// negative.
    pub fn saving(&self) -> f64 {
        self.saving_for(self.shorter_mode())
    }

    pub fn saving_for(&self, mode: ServeMode) -> f64 {
        self.first_direct_m + self.second_direct_m - self.route_length(mode)
    }

    /// In-vehicle distance minus exclusive distance, for (first, second).
    pub fn detours(&self, mode: ServeMode) -> (f64, f64) {
        match mode {
            ServeMode::Fofo => {
                let first_ride = self.driven_m + self.pickup_m + self.second_to_first_dest;
                let second_ride = self.second_to_first_dest + self.dest_to_dest_first_then_second;
                (first_ride - self.first_direct_m, second_ride - self.second_direct_m)
            }
            ServeMode::Folo => (self.folo_m - self.first_direct_m, 0.0),
        }
    }

    /// The shortest serving order whose detours both stay within
    /// `max_detour_m`, if any.
    pub fn feasible_mode(&self, max_detour_m: f64) -> Option<ServeMode> {
        let ok = |mode| {
            let (a, b) = self.detours(mode);
            a <= max_detour_m && b <= max_detour_m
        };
        let preferred = self.shorter_mode();
        let other = match preferred {
            ServeMode::Fofo => ServeMode::Folo,
            ServeMode::Folo => ServeMode::Fofo,
        };
        [preferred, other].into_iter().find(|&m| ok(m))
    }
}

/// `(fofo, folo)` route lengths for adding `second` to a vehicle at
/// `vehicle_at` carrying `first`.
pub fn trip_lengths_fofo_folo(
    net: &RoadNetwork,
    first: &Trip,
    second: &Trip,
    vehicle_at: NodeId,
) -> Result<(f64, f64), NetworkError> {
    let g = PairGeometry::compute(net, first, second, vehicle_at)?;
    Ok((g.fofo_m, g.folo_m))
}

pub fn distance_saving(net: &RoadNetwork, first: &Trip, second: &Trip, vehicle_at: NodeId) -> Result<f64, NetworkError> {
    Ok(PairGeometry::compute(net, first, second, vehicle_at)?.saving())
}

pub fn detours(
    net: &RoadNetwork,
    first: &Trip,
    second: &Trip,
    vehicle_at: NodeId,
    mode: ServeMode,
) -> Result<(f64, f64), NetworkError> {
    Ok(PairGeometry::compute(net, first, second, vehicle_at)?.detours(mode))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VacantCandidate {
    pub vehicle: VehicleId,
    pub pickup_m: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PartialCandidate {
    pub vehicle: VehicleId,
    pub onboard: OrderId,
    pub pickup_m: f64,
    pub mode: ServeMode,
    /// Saving under `mode`.
    pub saving_m: f64,
    pub detours_m: (f64, f64),
}

/// Feasible vehicles for one waiting order: vacant ones within pickup range
/// and partially occupied ones that also respect both detour limits.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Candidates {
    pub vacant: Vec<VacantCandidate>,
    pub partial: Vec<PartialCandidate>,
}

impl Candidates {
    pub fn is_empty(&self) -> bool {
        self.vacant.is_empty() && self.partial.is_empty()
    }
}

pub fn feasible_pairs<'a>(
    net: &RoadNetwork,
    order: &Trip,
    vehicles: impl IntoIterator<Item = &'a Vehicle>,
    cfg: &PairingConfig,
) -> Result<Candidates, NetworkError> {
    let mut out = Candidates::default();
    for v in vehicles {
        match v.occupancy {
            Occupancy::Vacant => {
                let pickup_m = pickup_distance(net, v.location, order)?;
                if pickup_m < cfg.max_pickup_m {
                    out.vacant.push(VacantCandidate { vehicle: v.id, pickup_m });
                }
            }
            Occupancy::Partial { onboard, trip } => {
                let pickup_m = pickup_distance(net, v.location, order)?;
                if pickup_m >= cfg.max_pickup_m {
                    continue;
                }
                let g = PairGeometry::compute(net, &trip, order, v.location)?;
                if let Some(mode) = g.feasible_mode(cfg.max_detour_m) {
                    out.partial.push(PartialCandidate {
                        vehicle: v.id,
                        onboard,
                        pickup_m,
                        mode,
                        saving_m: g.saving_for(mode),
                        detours_m: g.detours(mode),
                    });
                }
            }
            Occupancy::Committed | Occupancy::Full => {}
        }
    }
    Ok(out)
}
