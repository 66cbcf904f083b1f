use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ridepool::domain::{Order, Trip};
use ridepool::network::RoadNetwork;
use ridepool::prediction::{solve_fixed_point, DemandProfile, PredictionTables, SolverOptions, StateSpace};
use ridepool::simulator::{
    audit_events, compute_profit, fleet_size, generate_demand, metrics_from_events, read_events, replay_demand, run,
    run_with_fleet, write_events, Demand, Event, EventKind, Pricing, RunMetrics, SimConfig, TripRecord,
    METRICS_HEADER,
};
use ridepool::strategies::Strategy;

fn cfg(seed: u64, horizon_s: f64) -> SimConfig {
    SimConfig { seed, horizon_s, ..SimConfig::default() }
}

fn order(id: u64, o: u32, d: u32, t: f64) -> Order {
    Order::new(id, Trip::new(o, d), t, 90.0)
}

fn event(kind: EventKind, order: Option<u64>, detail: &str) -> Event {
    Event { time_s: 0.0, kind, order, vehicle: Some(0), node: Some(0), detail: detail.into() }
}

#[test]
fn zero_rate_gives_no_orders() {
    let net = RoadNetwork::grid(3, 3, 500.0, 8.0).unwrap();
    let profile = DemandProfile::new(vec![Trip::new(0, 8)], vec![vec![0.0]]).unwrap();
    assert!(generate_demand(&profile, &net, &cfg(1, 3600.0)).orders.is_empty());
}

#[test]
fn replay_keeps_the_log_in_time_order() {
    let net = RoadNetwork::grid(3, 3, 500.0, 8.0).unwrap();
    let rows = [
        TripRecord { order_id: 7, time_s: 30.0, trip: Trip::new(0, 8) },
        TripRecord { order_id: 3, time_s: 10.0, trip: Trip::new(1, 5) },
        TripRecord { order_id: 9, time_s: 20.0, trip: Trip::new(6, 2) },
    ];
    let d = replay_demand(&rows, &net, &cfg(1, 3600.0));
    let got: Vec<(u64, f64, Trip)> = d.orders.iter().map(|o| (o.id, o.arrival_s, o.trip)).collect();
    assert_eq!(got, vec![(3, 10.0, Trip::new(1, 5)), (9, 20.0, Trip::new(6, 2)), (7, 30.0, Trip::new(0, 8))]);
    assert_eq!(d.skipped, 0);
    assert!(d.orders.iter().all(|o| o.max_wait_s >= 10.0));
}

#[test]
fn replay_skips_unusable_ods() {
    let net = RoadNetwork::grid(2, 2, 500.0, 8.0).unwrap();
    let rows = [
        TripRecord { order_id: 0, time_s: 1.0, trip: Trip::new(0, 0) },
        TripRecord { order_id: 1, time_s: 2.0, trip: Trip::new(0, 99) },
        TripRecord { order_id: 2, time_s: 3.0, trip: Trip::new(0, 3) },
    ];
    let d = replay_demand(&rows, &net, &cfg(1, 3600.0));
    assert_eq!(d.orders.len(), 1);
    assert_eq!(d.skipped, 2);
}

#[test]
fn poisson_counts_match_the_rate() {
    let net = RoadNetwork::grid(2, 2, 500.0, 8.0).unwrap();
    let profile = DemandProfile::new(vec![Trip::new(0, 3)], vec![vec![1.0 / 60.0]]).unwrap();
    let counts: Vec<f64> =
        (0..100).map(|s| generate_demand(&profile, &net, &cfg(s, 3600.0)).orders.len() as f64).collect();
    let sigma = 60f64.sqrt();
    for &c in &counts {
        assert!((c - 60.0).abs() <= 3.0 * sigma, "count {c}");
    }
    let mean = counts.iter().sum::<f64>() / counts.len() as f64;
    assert!((mean - 60.0).abs() <= 3.0 * sigma / 10.0, "mean {mean}");
}

#[test]
fn generated_orders_are_sorted_and_patient_enough() {
    let net = RoadNetwork::grid(3, 3, 500.0, 8.0).unwrap();
    let ods = vec![Trip::new(0, 8), Trip::new(2, 6), Trip::new(4, 4)];
    let profile = DemandProfile::new(ods, vec![vec![0.02, 0.01, 0.05], vec![0.0, 0.03, 0.05]]).unwrap();
    let c = SimConfig { max_wait_sd_s: 60.0, ..cfg(3, 7200.0) };
    let d = generate_demand(&profile, &net, &c);
    assert!(d.skipped > 0, "self-loop OD is skipped");
    assert!(d.orders.windows(2).all(|w| w[0].arrival_s <= w[1].arrival_s));
    assert!(d.orders.iter().all(|o| o.max_wait_s >= c.batch_interval_s && o.arrival_s < 7200.0));
    assert!(d.orders.iter().filter(|o| o.arrival_s >= 3600.0).all(|o| o.trip == Trip::new(2, 6)));
    assert_eq!(d, generate_demand(&profile, &net, &c));
}

#[test]
fn fleet_is_rounded_up() {
    assert_eq!(fleet_size(0, 25.0), 0);
    assert_eq!(fleet_size(1, 25.0), 1);
    assert_eq!(fleet_size(100, 25.0), 25);
    assert_eq!(fleet_size(101, 25.0), 26);
}

#[test]
fn empty_world_only_advances_time() {
    let net = RoadNetwork::grid(3, 3, 500.0, 8.0).unwrap();
    let out = run(&net, &Demand::default(), &cfg(1, 600.0), Strategy::Mb, None).unwrap();
    assert!(out.events.is_empty());
    assert_eq!(out.vehicles, 0);
    let m = out.metrics;
    assert_eq!(m.numeric(), [0.0; 15]);
    assert_eq!(m.profit, 0.0);
}

#[test]
fn vehicle_at_the_origin_picks_up_in_the_first_round() {
    // a 40 m two-node line at 8 m/s: the vacant walk returns to node 0 at t = 10
    let net = RoadNetwork::grid(1, 2, 40.0, 8.0).unwrap();
    let demand = Demand { orders: vec![order(0, 0, 1, 3.0)], skipped: 0 };
    let c = SimConfig { speed_mps: 8.0, ..cfg(1, 600.0) };
    let out = run_with_fleet(&net, &demand, &c, Strategy::Np, None, &[0]).unwrap();
    let kinds: Vec<(EventKind, f64)> = out.events.iter().map(|e| (e.kind, e.time_s)).collect();
    assert_eq!(
        kinds,
        [
            (EventKind::Arrive, 3.0),
            (EventKind::Assign, 10.0),
            (EventKind::Pickup, 10.0),
            (EventKind::Dropoff, 15.0),
            (EventKind::TripEnd, 15.0)
        ]
    );
    let m = &out.metrics;
    assert_eq!((m.admitted, m.responded, m.paired), (1, 1, 0));
    assert_eq!((m.avg_resp_time_s, m.avg_pk_time_s, m.avg_pk_dist_m), (7.0, 0.0, 0.0));
    assert_eq!(m.dist_total_km, 0.04);
    assert!((m.profit - 0.04 * (5.0 - 2.0)).abs() < 1e-12);
}

#[test]
fn myopic_pairs_on_the_round_the_second_order_arrives() {
    // 0 - 1 - 2 - 3 - 4 with 500 m links at 50 m/s: the vehicle covers one
    // link per round. It walks to 1 and takes A there at t = 10, reaches 2 at
    // t = 20 where B has waited since t = 15.
    let net = RoadNetwork::grid(1, 5, 500.0, 50.0).unwrap();
    let demand = Demand { orders: vec![order(0, 1, 4, 1.0), order(1, 2, 4, 15.0)], skipped: 0 };
    let c = SimConfig { speed_mps: 50.0, ..cfg(1, 600.0) };
    let out = run_with_fleet(&net, &demand, &c, Strategy::Mb, None, &[0]).unwrap();
    let assign = |o| out.events.iter().find(|e| e.kind == EventKind::Assign && e.order == Some(o)).unwrap();
    assert_eq!((assign(0).time_s, assign(0).get("kind")), (10.0, Some("solo")));
    let b = assign(1);
    assert_eq!((b.time_s, b.get("kind"), b.get("partner")), (20.0, Some("join"), Some("0")));
    // exclusive 1500 + 1000 against a shared 1500 m route
    assert_eq!(b.get_f64("saving_m"), Some(1000.0));
    let m = &out.metrics;
    assert_eq!(m.dist_save_km, 1.0);
    assert_eq!(m.dist_total_km, 1.5);
    assert_eq!((m.paired, m.pairing_ratio), (2, 1.0));
    assert_eq!((m.avg_detour_m, m.avg_share_m), (0.0, 1000.0));
    // shared 1000 m each, A rides 500 m alone, driver paid for 1500 m
    assert!((m.profit - (0.5 * 5.0 + 2.0 * 3.5 - 1.5 * 2.0)).abs() < 1e-12);
    let re = metrics_from_events(&out.events, &c.pricing);
    assert_eq!(re.dist_save_km, m.dist_save_km);
    assert_eq!(re, RunMetrics { strategy: String::new(), seed: 0, config_hash: String::new(), ..m.clone() });
}

#[test]
fn profit_follows_the_tariff() {
    let p = Pricing::default();
    let solo = [
        event(EventKind::Dropoff, Some(0), "ride_m=10000;shared_m=0;direct_m=10000"),
        event(EventKind::TripEnd, None, "occupied_m=10000;riders=0"),
    ];
    assert!((compute_profit(&solo, &p) - 30.0).abs() < 1e-12);
    let pair = [
        event(EventKind::Dropoff, Some(0), "ride_m=10000;shared_m=10000;direct_m=10000"),
        event(EventKind::Dropoff, Some(1), "ride_m=10000;shared_m=10000;direct_m=10000"),
        event(EventKind::TripEnd, None, "occupied_m=10000;riders=0|1"),
    ];
    assert!((compute_profit(&pair, &p) - 50.0).abs() < 1e-12);
    assert_eq!(compute_profit(&[], &p), 0.0);
}

fn grid_case(seed: u64) -> (RoadNetwork, DemandProfile) {
    let net = RoadNetwork::grid(6, 6, 400.0, 30.0 / 3.6).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ods = Vec::new();
    while ods.len() < 12 {
        let t = Trip::new(rng.random_range(0..36), rng.random_range(0..36));
        if t.origin != t.destination && !ods.contains(&t) {
            ods.push(t);
        }
    }
    let rates = vec![1.0 / 200.0; ods.len()];
    (net, DemandProfile::new(ods, vec![rates]).unwrap())
}

fn tables(net: &RoadNetwork, profile: &DemandProfile, c: &SimConfig) -> PredictionTables {
    let space = StateSpace::build(net, &profile.ods, &c.pairing()).unwrap();
    solve_fixed_point(&space, profile, &SolverOptions::default()).unwrap().0
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

fn assert_same_metrics(online: &RunMetrics, offline: &RunMetrics) {
    assert_eq!(
        (online.admitted, online.responded, online.cancelled, online.residual, online.paired),
        (offline.admitted, offline.responded, offline.cancelled, offline.residual, offline.paired)
    );
    let (a, b) = (online.numeric(), offline.numeric());
    for (i, name) in METRICS_HEADER.split(',').take(10).enumerate() {
        assert!(close(a[i], b[i]), "{name}: online {} vs events {}", a[i], b[i]);
    }
    let (s, t) = (online.dist_save_km, offline.dist_save_km);
    assert!((s - t).abs() <= 1e-12 * s.abs().max(t.abs()), "saving {s} vs {t}");
}

#[test]
fn every_strategy_conserves_orders_and_passes_the_audit() {
    let (net, profile) = grid_case(2);
    let c = SimConfig { max_pickup_m: 1600.0, max_detour_m: 1200.0, ..cfg(4, 3600.0) };
    let demand = generate_demand(&profile, &net, &c);
    assert!(demand.orders.len() > 100);
    let t = tables(&net, &profile, &c);
    for s in Strategy::ALL {
        let out = run(&net, &demand, &c, s, Some(&t)).unwrap();
        let m = &out.metrics;
        assert!(m.conserved(), "{s}: {m:?}");
        assert!(m.responded > 0);
        assert!((0.0..=1.0).contains(&m.response_rate) && (0.0..=1.0).contains(&m.pairing_ratio));
        if s == Strategy::Np {
            assert_eq!(m.paired, 0);
        } else {
            assert!(m.paired > 0, "{s} never pooled");
        }
        assert_eq!(audit_events(&out.events, c.max_pickup_m, c.max_detour_m), vec![]);
        assert_same_metrics(m, &metrics_from_events(&out.events, &c.pricing));
        if s.needs_tables() {
            assert!(out.l_bar_m > 0.0);
        }
    }
}

#[test]
fn forward_looking_needs_tables() {
    let (net, profile) = grid_case(2);
    let c = cfg(1, 600.0);
    let demand = generate_demand(&profile, &net, &c);
    let err = run(&net, &demand, &c, Strategy::Fl, None).unwrap_err();
    assert!(err.to_string().contains("predict"));
}

#[test]
fn same_seed_same_run() {
    let (net, profile) = grid_case(5);
    let c = cfg(9, 1800.0);
    let demand = generate_demand(&profile, &net, &c);
    let t = tables(&net, &profile, &c);
    for s in [Strategy::Fl, Strategy::Rtv] {
        let a = run(&net, &demand, &c, s, Some(&t)).unwrap();
        let b = run(&net, &generate_demand(&profile, &net, &c), &c, s, Some(&t)).unwrap();
        assert_eq!(a.metrics.csv_row(), b.metrics.csv_row());
        assert_eq!(a.events, b.events);
    }
    let other = run(&net, &generate_demand(&profile, &net, &cfg(10, 1800.0)), &cfg(10, 1800.0), Strategy::Mb, None);
    assert_ne!(other.unwrap().metrics.csv_row(), run(&net, &demand, &c, Strategy::Mb, None).unwrap().metrics.csv_row());
}

#[test]
fn event_log_round_trips() {
    let (net, profile) = grid_case(6);
    let c = cfg(2, 900.0);
    let out = run(&net, &generate_demand(&profile, &net, &c), &c, Strategy::Mb, None).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("events.csv");
    write_events(&path, &out.header, &out.events).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("# rng=ChaCha8"));
    let back = read_events(&path).unwrap();
    assert_eq!(back, out.events);
    assert_eq!(metrics_from_events(&back, &c.pricing), metrics_from_events(&out.events, &c.pricing));
}

#[test]
fn riders_are_settled_after_the_horizon() {
    let net = RoadNetwork::grid(1, 4, 500.0, 8.0).unwrap();
    let demand = Demand { orders: vec![order(0, 0, 3, 55.0)], skipped: 0 };
    let out = run_with_fleet(&net, &demand, &cfg(1, 60.0), Strategy::Mb, None, &[]).unwrap();
    let m = &out.metrics;
    assert_eq!((m.admitted, m.responded, m.cancelled, m.residual), (1, 0, 1, 0));

    let no_drain = SimConfig { drain_s: 0.0, ..cfg(1, 60.0) };
    let out = run_with_fleet(&net, &demand, &no_drain, Strategy::Mb, None, &[]).unwrap();
    let m = &out.metrics;
    assert_eq!((m.admitted, m.responded, m.cancelled, m.residual), (1, 0, 0, 1));
    assert!(m.conserved());
    assert_eq!(metrics_from_events(&out.events, &Pricing::default()).residual, 1);
}

#[test]
fn unserved_riders_cancel_after_their_rounds() {
    let net = RoadNetwork::grid(1, 4, 500.0, 8.0).unwrap();
    let demand = Demand { orders: vec![Order::new(0, Trip::new(0, 3), 1.0, 35.0)], skipped: 0 };
    let out = run_with_fleet(&net, &demand, &cfg(1, 600.0), Strategy::Mb, None, &[]).unwrap();
    let cancel = out.events.iter().find(|e| e.kind == EventKind::Cancel).unwrap();
    assert_eq!((cancel.time_s, cancel.get("k")), (40.0, Some("4")));
    assert_eq!(out.metrics.cancelled, 1);
}
