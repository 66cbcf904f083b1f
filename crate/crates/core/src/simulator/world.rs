use std::collections::{HashMap, VecDeque};

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::events::{Event, EventKind};
use super::metrics::RunMetrics;
use super::{initial_locations, rng_stream, Demand, SimConfig, Stream, RNG_ALGORITHM};
use crate::domain::{
    rounds_budget, ConfigError, Occupancy, Order, OrderId, OrderStatus, ServeMode, Stop, StopAction, Trip, Vehicle,
    VehicleId,
};
use crate::network::{LinkId, NetworkError, NodeId, RoadNetwork};
use crate::prediction::PredictionTables;
use crate::strategies::{dispatch_round, Decision, DispatchContext, DispatchError, Snapshot, Strategy, WaitingPassenger};

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Dispatch(#[from] DispatchError),
    #[error(transparent)]
    Network(#[from] NetworkError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub metrics: RunMetrics,
    pub events: Vec<Event>,
    /// Comment lines for the event log header.
    pub header: Vec<String>,
    /// Pickup distance charged against waiting by the forward-looking
    /// strategies (0 for the others).
    pub l_bar_m: f64,
    pub vehicles: usize,
}

pub fn fleet_size(orders: usize, drivers_per_100_orders: f64) -> usize {
    (orders as f64 * drivers_per_100_orders / 100.0).ceil() as usize
}

#[derive(Debug, Clone)]
struct Rider {
    order: Order,
    k_budget: u32,
    assigned_s: Option<f64>,
    pickup_plan_m: f64,
    picked_s: Option<f64>,
    pooled: bool,
    direct_m: f64,
    ride_m: f64,
    shared_m: f64,
}

#[derive(Debug, Clone)]
struct Car {
    id: VehicleId,
    /// Last node reached.
    node: NodeId,
    /// Link being driven and the metres covered on it.
    link: Option<(LinkId, f64)>,
    occupancy: Occupancy,
    stops: VecDeque<Stop>,
    onboard: Vec<usize>,
    trip_riders: Vec<usize>,
    trip_occupied_m: f64,
}

impl Car {
    /// Where the vehicle can next change course.
    fn decision_node(&self, net: &RoadNetwork) -> NodeId {
        match self.link {
            Some((l, _)) => net.link(l).head,
            None => self.node,
        }
    }

    fn view(&self, net: &RoadNetwork) -> Vehicle {
        Vehicle {
            id: self.id,
            location: self.decision_node(net),
            occupancy: self.occupancy,
            stops: self.stops.iter().copied().collect(),
        }
    }

    fn idle(&self) -> bool {
        self.stops.is_empty() && self.onboard.is_empty()
    }
}

struct World<'a> {
    net: &'a RoadNetwork,
    cfg: &'a SimConfig,
    ctx: DispatchContext<'a>,
    riders: Vec<Rider>,
    index: HashMap<OrderId, usize>,
    admitted: usize,
    waiting: Vec<usize>,
    cars: Vec<Car>,
    mobility: ChaCha8Rng,
    events: Vec<Event>,
    round: u64,
    dist_save_m: f64,
    finished_occupied_m: f64,
}

fn stop(node: NodeId, order: OrderId, action: StopAction) -> Stop {
    Stop { node, order, action }
}

/// Dropoffs of a pooled trip; `first` boarded first.
fn dropoffs(first: (OrderId, Trip), second: (OrderId, Trip), mode: ServeMode) -> [Stop; 2] {
    let a = stop(first.1.destination, first.0, StopAction::Dropoff);
    let b = stop(second.1.destination, second.0, StopAction::Dropoff);
    match mode {
        ServeMode::Fofo => [a, b],
        ServeMode::Folo => [b, a],
    }
}

impl<'a> World<'a> {
    fn new(
        net: &'a RoadNetwork,
        cfg: &'a SimConfig,
        ctx: DispatchContext<'a>,
        demand: &Demand,
        fleet: &[NodeId],
    ) -> Result<Self, SimError> {
        let mut riders = Vec::with_capacity(demand.orders.len());
        let mut index = HashMap::with_capacity(demand.orders.len());
        for o in &demand.orders {
            let direct_m = net.shortest_distance(o.trip.origin, o.trip.destination)?;
            assert!(index.insert(o.id, riders.len()).is_none(), "duplicate order id {}", o.id);
            riders.push(Rider {
                order: o.clone(),
                k_budget: rounds_budget(o.max_wait_s, cfg.batch_interval_s),
                assigned_s: None,
                pickup_plan_m: 0.0,
                picked_s: None,
                pooled: false,
                direct_m,
                ride_m: 0.0,
                shared_m: 0.0,
            });
        }
        let cars = fleet
            .iter()
            .enumerate()
            .map(|(i, &node)| Car {
                id: i as VehicleId,
                node,
                link: None,
                occupancy: Occupancy::Vacant,
                stops: VecDeque::new(),
                onboard: Vec::new(),
                trip_riders: Vec::new(),
                trip_occupied_m: 0.0,
            })
            .collect();
        Ok(World {
            net,
            cfg,
            ctx,
            riders,
            index,
            admitted: 0,
            waiting: Vec::new(),
            cars,
            mobility: rng_stream(cfg.seed, Stream::Mobility),
            events: Vec::new(),
            round: 0,
            dist_save_m: 0.0,
            finished_occupied_m: 0.0,
        })
    }

    fn emit(&mut self, time_s: f64, kind: EventKind, order: Option<OrderId>, vehicle: Option<VehicleId>, node: Option<NodeId>, detail: String) {
        self.events.push(Event { time_s, kind, order, vehicle, node, detail });
    }

    fn admit(&mut self, until_s: f64) {
        while self.admitted < self.riders.len() && self.riders[self.admitted].order.arrival_s <= until_s {
            let r = self.admitted;
            self.admitted += 1;
            self.waiting.push(r);
            let o = &self.riders[r].order;
            let detail = format!("dest={};max_wait_s={};rounds={}", o.trip.destination, o.max_wait_s, self.riders[r].k_budget);
            let (t, id, node) = (o.arrival_s, o.id, o.trip.origin);
            self.emit(t, EventKind::Arrive, Some(id), None, Some(node), detail);
        }
    }

    fn drive(&mut self, c: usize, d: f64) {
        let car = &mut self.cars[c];
        if car.onboard.is_empty() {
            return;
        }
        car.trip_occupied_m += d;
        let shared = car.onboard.len() == 2;
        for &r in &car.onboard {
            self.riders[r].ride_m += d;
            if shared {
                self.riders[r].shared_m += d;
            }
        }
    }

    /// Serves every stop at the current node.
    fn process_stops(&mut self, c: usize, time_s: f64) {
        loop {
            let car = &mut self.cars[c];
            if car.link.is_some() {
                return;
            }
            let Some(&s) = car.stops.front().filter(|s| s.node == car.node) else { return };
            car.stops.pop_front();
            let (vid, node) = (car.id, car.node);
            let r = self.index[&s.order];
            match s.action {
                StopAction::Pickup => {
                    if car.onboard.is_empty() {
                        car.trip_riders.clear();
                        car.trip_occupied_m = 0.0;
                    }
                    car.onboard.push(r);
                    car.trip_riders.push(r);
                    if car.occupancy == Occupancy::Committed {
                        let o = &self.riders[r].order;
                        car.occupancy = Occupancy::Partial { onboard: o.id, trip: o.trip };
                    }
                    self.riders[r].picked_s = Some(time_s);
                    self.emit(time_s, EventKind::Pickup, Some(s.order), Some(vid), Some(node), String::new());
                }
                StopAction::Dropoff => {
                    car.onboard.retain(|&x| x != r);
                    let rider = &mut self.riders[r];
                    rider.order.status = OrderStatus::Delivered;
                    let detail = format!("ride_m={};shared_m={};direct_m={}", rider.ride_m, rider.shared_m, rider.direct_m);
                    self.emit(time_s, EventKind::Dropoff, Some(s.order), Some(vid), Some(node), detail);
                    let car = &mut self.cars[c];
                    if car.onboard.is_empty() && car.stops.is_empty() {
                        car.occupancy = Occupancy::Vacant;
                        let riders: Vec<String> =
                            car.trip_riders.iter().map(|&x| self.riders[x].order.id.to_string()).collect();
                        let detail = format!("occupied_m={};riders={}", car.trip_occupied_m, riders.join("|"));
                        self.finished_occupied_m += car.trip_occupied_m;
                        car.trip_occupied_m = 0.0;
                        car.trip_riders.clear();
                        self.emit(time_s, EventKind::TripEnd, None, Some(vid), Some(node), detail);
                    }
                }
            }
        }
    }

    /// Moves a vehicle for `dt` seconds starting at `t0`.
    fn advance(&mut self, c: usize, t0: f64, dt: f64) -> Result<(), SimError> {
        let speed = self.cfg.speed_mps;
        let budget = speed * dt;
        let mut used = 0.0;
        loop {
            match self.cars[c].link {
                Some((l, prog)) => {
                    let link = self.net.link(l);
                    let (len, head) = (link.length_m, link.head);
                    let rem = len - prog;
                    if budget - used < rem {
                        let d = budget - used;
                        self.cars[c].link = Some((l, prog + d));
                        self.drive(c, d);
                        return Ok(());
                    }
                    self.drive(c, rem);
                    used += rem;
                    let car = &mut self.cars[c];
                    car.node = head;
                    car.link = None;
                    self.process_stops(c, t0 + used / speed);
                }
                None => {
                    if used >= budget {
                        return Ok(());
                    }
                    let car = &self.cars[c];
                    let next = match car.stops.front() {
                        Some(s) => self.net.next_link_towards(car.node, s.node)?,
                        None if car.occupancy == Occupancy::Vacant => {
                            let outs = self.net.out_links(car.node)?;
                            if outs.is_empty() {
                                None
                            } else {
                                Some(outs[self.mobility.random_range(0..outs.len())])
                            }
                        }
                        None => None,
                    };
                    match next {
                        Some(l) => self.cars[c].link = Some((l, 0.0)),
                        None => return Ok(()),
                    }
                }
            }
        }
    }

    fn assign_event(&mut self, time_s: f64, r: usize, vid: VehicleId, pickup_m: f64, detail: String) {
        let rider = &mut self.riders[r];
        rider.assigned_s = Some(time_s);
        rider.pickup_plan_m = pickup_m;
        rider.order.status = if rider.pooled { OrderStatus::Paired } else { OrderStatus::Solo };
        let (id, node) = (rider.order.id, rider.order.trip.origin);
        self.emit(time_s, EventKind::Assign, Some(id), Some(vid), Some(node), detail);
    }

    fn apply(&mut self, time_s: f64, d: &Decision) {
        match *d {
            Decision::Solo { order, vehicle, pickup_m, .. } => {
                let r = self.index[&order];
                let trip = self.riders[r].order.trip;
                let car = &mut self.cars[vehicle as usize];
                assert!(car.occupancy == Occupancy::Vacant && car.idle(), "vehicle {vehicle} is not vacant");
                car.occupancy = Occupancy::Committed;
                car.stops = VecDeque::from([
                    stop(trip.origin, order, StopAction::Pickup),
                    stop(trip.destination, order, StopAction::Dropoff),
                ]);
                self.assign_event(time_s, r, vehicle, pickup_m, format!("kind=solo;pickup_m={pickup_m}"));
            }
            Decision::Join { order, vehicle, onboard, pickup_m, mode, saving_m, .. } => {
                let r = self.index[&order];
                let o = self.index[&onboard];
                let trip = self.riders[r].order.trip;
                let car = &mut self.cars[vehicle as usize];
                let on_trip = match car.occupancy {
                    Occupancy::Partial { onboard: x, trip } if x == onboard => trip,
                    other => panic!("vehicle {vehicle} cannot take a second rider in state {other:?}"),
                };
                car.occupancy = Occupancy::Full;
                let [a, b] = dropoffs((onboard, on_trip), (order, trip), mode);
                car.stops = VecDeque::from([stop(trip.origin, order, StopAction::Pickup), a, b]);
                self.dist_save_m += saving_m;
                self.riders[r].pooled = true;
                self.riders[o].pooled = true;
                self.riders[o].order.status = OrderStatus::Paired;
                let detail = format!(
                    "kind=join;pickup_m={pickup_m};partner={onboard};mode={};saving_m={saving_m}",
                    mode.as_str()
                );
                self.assign_event(time_s, r, vehicle, pickup_m, detail);
            }
            Decision::Pair { first, second, vehicle, pickup_m, second_pickup_m, mode, saving_m } => {
                let (a, b) = (self.index[&first], self.index[&second]);
                let (ta, tb) = (self.riders[a].order.trip, self.riders[b].order.trip);
                let car = &mut self.cars[vehicle as usize];
                assert!(car.occupancy == Occupancy::Vacant && car.idle(), "vehicle {vehicle} is not vacant");
                car.occupancy = Occupancy::Full;
                let [d1, d2] = dropoffs((first, ta), (second, tb), mode);
                car.stops = VecDeque::from([
                    stop(ta.origin, first, StopAction::Pickup),
                    stop(tb.origin, second, StopAction::Pickup),
                    d1,
                    d2,
                ]);
                self.dist_save_m += saving_m;
                self.riders[a].pooled = true;
                self.riders[b].pooled = true;
                let m = mode.as_str();
                let da = format!("kind=pair;pickup_m={pickup_m};partner={second};mode={m};saving_m={saving_m};role=first");
                let db = format!(
                    "kind=pair;pickup_m={second_pickup_m};partner={first};mode={m};saving_m={saving_m};role=second"
                );
                self.assign_event(time_s, a, vehicle, pickup_m, da);
                self.assign_event(time_s, b, vehicle, second_pickup_m, db);
            }
            Decision::Wait { order, .. } => {
                let r = self.index[&order];
                let (k, node) = (self.riders[r].order.rounds_waited, self.riders[r].order.trip.origin);
                self.emit(time_s, EventKind::Wait, Some(order), None, Some(node), format!("k={k}"));
            }
            Decision::Unassigned { .. } => {}
        }
        if let Some(v) = d.vehicle() {
            self.process_stops(v as usize, time_s);
        }
    }

    fn dispatch(&mut self, time_s: f64) -> Result<(), SimError> {
        self.round += 1;
        for &r in &self.waiting {
            self.riders[r].order.rounds_waited += 1;
        }
        if self.waiting.is_empty() {
            return Ok(());
        }
        let passengers: Vec<WaitingPassenger> = self
            .waiting
            .iter()
            .map(|&r| {
                let x = &self.riders[r];
                WaitingPassenger { order: x.order.id, trip: x.order.trip, k: x.order.rounds_waited, k_budget: x.k_budget }
            })
            .collect();
        let vehicles: Vec<Vehicle> = self.cars.iter().map(|c| c.view(self.net)).collect();
        let snap = Snapshot { net: self.net, time_s, round: self.round, passengers: &passengers, vehicles: &vehicles };
        let result = dispatch_round(&snap, &self.ctx)?;
        for d in &result.decisions {
            self.apply(time_s, d);
        }
        let riders = &self.riders;
        let (still, done): (Vec<usize>, Vec<usize>) =
            self.waiting.iter().partition(|&&r| riders[r].order.status == OrderStatus::Waiting);
        debug_assert!(done.iter().all(|&r| riders[r].assigned_s.is_some()));
        self.waiting = Vec::with_capacity(still.len());
        for r in still {
            if self.riders[r].order.rounds_waited >= self.riders[r].k_budget {
                self.riders[r].order.status = OrderStatus::Cancelled;
                let o = &self.riders[r].order;
                let (id, node, k) = (o.id, o.trip.origin, o.rounds_waited);
                self.emit(time_s, EventKind::Cancel, Some(id), None, Some(node), format!("k={k}"));
            } else {
                self.waiting.push(r);
            }
        }
        Ok(())
    }

    fn advance_all(&mut self, t0: f64, dt: f64) -> Result<(), SimError> {
        for c in 0..self.cars.len() {
            self.advance(c, t0, dt)?;
        }
        Ok(())
    }

    fn online_metrics(&self) -> RunMetrics {
        let mut m = RunMetrics::default();
        let mut resp = 0.0;
        let mut pk_time = (0.0, 0usize);
        let mut pk_dist = 0.0;
        let mut detour = (0.0, 0usize);
        let mut share = 0.0;
        let mut fares = 0.0;
        let p = &self.cfg.pricing;
        for r in &self.riders[..self.admitted] {
            m.admitted += 1;
            match r.order.status {
                OrderStatus::Cancelled => m.cancelled += 1,
                OrderStatus::Waiting => m.residual += 1,
                _ => {}
            }
            let Some(a) = r.assigned_s else { continue };
            m.responded += 1;
            resp += a - r.order.arrival_s;
            pk_dist += r.pickup_plan_m;
            if let Some(pk) = r.picked_s {
                pk_time.0 += pk - a;
                pk_time.1 += 1;
            }
            if r.pooled {
                m.paired += 1;
                if r.order.status == OrderStatus::Delivered {
                    detour.0 += r.ride_m - r.direct_m;
                    detour.1 += 1;
                    share += r.shared_m;
                }
            }
            fares += ((r.ride_m - r.shared_m) * p.solo_per_km + r.shared_m * p.shared_per_km) / 1000.0;
        }
        let occupied = self.finished_occupied_m + self.cars.iter().map(|c| c.trip_occupied_m).sum::<f64>();
        let ratio = |a: f64, b: usize| if b == 0 { 0.0 } else { a / b as f64 };
        m.response_rate = ratio(m.responded as f64, m.admitted);
        m.pairing_ratio = ratio(m.paired as f64, m.responded);
        m.avg_resp_time_s = ratio(resp, m.responded);
        m.avg_pk_time_s = ratio(pk_time.0, pk_time.1);
        m.avg_pk_dist_m = ratio(pk_dist, m.responded);
        m.avg_detour_m = ratio(detour.0, detour.1);
        m.avg_share_m = ratio(share, detour.1);
        m.dist_total_km = occupied / 1000.0;
        m.dist_save_km = self.dist_save_m / 1000.0;
        m.profit = fares - occupied / 1000.0 * p.driver_per_km;
        m
    }
}

/// One run of `strategy` on a fixed order stream.
///
/// Forward-looking strategies without a configured `l_bar_m` first run the
/// myopic strategy on the same seed and use its mean assignment-time pickup
/// distance.
pub fn run(
    net: &RoadNetwork,
    demand: &Demand,
    cfg: &SimConfig,
    strategy: Strategy,
    tables: Option<&PredictionTables>,
) -> Result<RunOutput, SimError> {
    let fleet = initial_locations(net, fleet_size(demand.orders.len(), cfg.drivers_per_100_orders), cfg.seed);
    run_with_fleet(net, demand, cfg, strategy, tables, &fleet)
}

/// [`run`] with vehicles starting at the given nodes.
pub fn run_with_fleet(
    net: &RoadNetwork,
    demand: &Demand,
    cfg: &SimConfig,
    strategy: Strategy,
    tables: Option<&PredictionTables>,
    fleet: &[NodeId],
) -> Result<RunOutput, SimError> {
    cfg.validate()?;
    for &n in fleet {
        if !net.contains(n) {
            return Err(NetworkError::UnknownNode(n).into());
        }
    }
    if strategy.needs_tables() && tables.is_none() {
        return Err(DispatchError::MissingTables(strategy).into());
    }
    let l_bar_m = match (strategy.needs_tables(), cfg.l_bar_m) {
        (false, _) => 0.0,
        (true, Some(l)) => l,
        (true, None) => run_with_fleet(net, demand, cfg, Strategy::Mb, None, fleet)?.metrics.avg_pk_dist_m,
    };
    let ctx = DispatchContext { strategy, params: cfg.utility_params(l_bar_m), cfg: cfg.pairing(), tables };
    let mut w = World::new(net, cfg, ctx, demand, fleet)?;
    let dt = cfg.batch_interval_s;
    let steps = (cfg.horizon_s / dt).ceil() as u64;
    for i in 0..steps {
        let (t0, t1) = (i as f64 * dt, (i + 1) as f64 * dt);
        w.admit(t1);
        w.advance_all(t0, dt)?;
        w.dispatch(t1)?;
    }
    // No arrivals after the horizon; rounds continue until every admitted
    // rider is settled and every vehicle is empty.
    let cap = steps + (cfg.drain_s / dt).ceil() as u64;
    let mut i = steps;
    while i < cap && !(w.waiting.is_empty() && w.cars.iter().all(Car::idle)) {
        let (t0, t1) = (i as f64 * dt, (i + 1) as f64 * dt);
        w.advance_all(t0, dt)?;
        w.dispatch(t1)?;
        i += 1;
    }

    let mut metrics = w.online_metrics();
    metrics.strategy = strategy.as_str().to_string();
    metrics.seed = cfg.seed;
    metrics.config_hash = cfg.hash();
    let vehicles = w.cars.len();
    let mut events = std::mem::take(&mut w.events);
    events.sort_by(|a, b| a.time_s.total_cmp(&b.time_s));
    let header = vec![
        format!("rng={RNG_ALGORITHM};streams=demand:0,mobility:1,init:2"),
        format!("seed={};strategy={};config_hash={}", cfg.seed, strategy, metrics.config_hash),
        format!("vehicles={vehicles};l_bar_m={l_bar_m};residual={}", metrics.residual),
    ];
    Ok(RunOutput { metrics, events, header, l_bar_m, vehicles })
}
