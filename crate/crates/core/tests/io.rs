use std::path::Path;

use ridepool::domain::Trip;
use ridepool::io::{
    ingest_demand, metrics_csv, oracle_csv, parse_kv, parse_time, read_profile, sweep_csv, sweep_header, write_profile,
    write_trip_log, IngestOptions, IoError, ScenarioConfig, ORACLE_HEADER, ORACLE_SUMMARY_HEADER, PREDICT_HEADER,
    PROFILE_HEADER, TRIP_LOG_HEADER,
};
use ridepool::network::RoadNetwork;
use ridepool::oracle::{build_offline_instance, solve_oracle1, OracleConfig};
use ridepool::prediction::DemandProfile;
use ridepool::simulator::{generate_demand, RunMetrics, SimConfig, METRICS_HEADER};
use ridepool::strategies::Strategy;

fn grid() -> RoadNetwork {
    RoadNetwork::grid(3, 3, 500.0, 8.0).unwrap()
}

fn opts(hours: usize) -> IngestOptions {
    IngestOptions { window_start: Some(0.0), hours, snap_radius_m: 100.0 }
}

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn one_arrival_per_second_gives_unit_rate() {
    let dir = tempfile::tempdir().unwrap();
    let mut log = format!("{TRIP_LOG_HEADER}\n");
    for i in 0..3600 {
        log.push_str(&format!("{i},{i},0,8\n"));
    }
    let p = write(dir.path(), "log.csv", &log);
    let r = ingest_demand(&p, &grid(), &opts(1)).unwrap();
    assert_eq!(r.profile.ods, vec![Trip::new(0, 8)]);
    assert_eq!(r.profile.hourly, vec![vec![1.0]]);
    assert_eq!(r.records.len(), 3600);
}

#[test]
fn empty_log_gives_a_zero_profile() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "log.csv", &format!("{TRIP_LOG_HEADER}\n"));
    let r = ingest_demand(&p, &grid(), &opts(2)).unwrap();
    assert!(r.profile.ods.is_empty());
    assert_eq!(r.profile.hours(), 2);
    assert_eq!(r.rows, 0);
}

#[test]
fn rows_are_bucketed_by_hour() {
    let dir = tempfile::tempdir().unwrap();
    let log = format!("{TRIP_LOG_HEADER}\n1,10,0,8\n2,3700,0,8\n3,3800,8,0\n4,7300,0,8\n");
    let p = write(dir.path(), "log.csv", &log);
    let r = ingest_demand(&p, &grid(), &opts(2)).unwrap();
    assert_eq!(r.profile.ods, vec![Trip::new(0, 8), Trip::new(8, 0)]);
    assert_eq!(r.profile.hourly, vec![vec![1.0 / 3600.0, 0.0], vec![1.0 / 3600.0, 1.0 / 3600.0]]);
    assert_eq!(r.dropped_outside_window, 1);
}

#[test]
fn unknown_nodes_are_snapped_or_dropped() {
    let dir = tempfile::tempdir().unwrap();
    let log = "order_id,pickup_time,origin_node,dest_node,origin_x_m,origin_y_m,dest_x_m,dest_y_m\n\
               1,5,,8,40,-30,,\n\
               2,6,99,8,260,250,,\n\
               3,7,0,,,,990,1020\n\
               4,8,4,4,,,,\n\
               5,9,0,77,,,,\n";
    let p = write(dir.path(), "log.csv", log);
    let r = ingest_demand(&p, &grid(), &opts(1)).unwrap();
    // Row 1 snaps to node 0, row 3 to node 8; row 2 lies 354 m from the
    // nearest node and row 5 has no coordinates.
    assert_eq!(r.snapped, 2);
    assert_eq!(r.dropped_unmatched, 2);
    assert_eq!(r.dropped_same_node, 1);
    assert_eq!(r.profile.ods, vec![Trip::new(0, 8)]);
    assert_eq!(r.profile.hourly[0][0], 2.0 / 3600.0);
}

#[test]
fn timestamps_parse_in_every_accepted_form() {
    assert_eq!(parse_time("1700000000").unwrap(), 1_700_000_000.0);
    assert_eq!(parse_time("2017-05-01T08:00:00Z").unwrap(), 1_493_625_600.0);
    assert_eq!(parse_time("2017-05-01T10:00:00+02:00").unwrap(), 1_493_625_600.0);
    assert_eq!(parse_time("2017-05-01 08:00:30").unwrap(), 1_493_625_630.0);
    assert!(parse_time("yesterday").is_err());
}

#[test]
fn window_defaults_to_the_hour_of_the_first_row() {
    let dir = tempfile::tempdir().unwrap();
    let log = format!("{TRIP_LOG_HEADER}\n1,2017-05-01 08:20:00,0,8\n2,2017-05-01 09:10:00,0,8\n");
    let p = write(dir.path(), "log.csv", &log);
    let r = ingest_demand(&p, &grid(), &IngestOptions { window_start: None, hours: 2, snap_radius_m: 0.0 }).unwrap();
    assert_eq!(r.window_start, 1_493_625_600.0);
    assert_eq!(r.records[0].time_s, 1200.0);
    assert_eq!(r.profile.hourly, vec![vec![1.0 / 3600.0], vec![1.0 / 3600.0]]);
}

#[test]
fn generated_log_recovers_its_rates() {
    let net = RoadNetwork::grid(4, 4, 500.0, 8.0).unwrap();
    let ods = vec![Trip::new(0, 15), Trip::new(3, 12), Trip::new(5, 10)];
    let truth = vec![vec![0.05, 0.02, 0.1], vec![0.03, 0.08, 0.01]];
    let profile = DemandProfile::new(ods.clone(), truth.clone()).unwrap();
    let demand = generate_demand(&profile, &net, &SimConfig { seed: 11, horizon_s: 7200.0, ..SimConfig::default() });
    let records: Vec<_> = demand
        .orders
        .iter()
        .map(|o| ridepool::simulator::TripRecord { order_id: o.id, time_s: o.arrival_s, trip: o.trip })
        .collect();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("log.csv");
    write_trip_log(&p, &records, 1_500_000_000.0).unwrap();
    let r = ingest_demand(&p, &net, &IngestOptions { window_start: Some(1_500_000_000.0), hours: 2, snap_radius_m: 0.0 })
        .unwrap();
    for (w, od) in ods.iter().enumerate() {
        let got_w = r.profile.ods.iter().position(|x| x == od).unwrap();
        for h in 0..2 {
            let lambda = truth[h][w];
            let sigma = (lambda * 3600.0).sqrt() / 3600.0;
            let got = r.profile.hourly[h][got_w];
            assert!((got - lambda).abs() <= 3.0 * sigma, "od {w} hour {h}: {got} vs {lambda}");
        }
    }
}

#[test]
fn profile_file_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("profile.csv");
    let profile = DemandProfile::new(vec![Trip::new(0, 8), Trip::new(2, 6)], vec![vec![0.1, 0.0], vec![0.3, 1.0 / 3.0]]).unwrap();
    write_profile(&p, &profile, &["seed=1".into()]).unwrap();
    let text = std::fs::read_to_string(&p).unwrap();
    assert_eq!(text.lines().nth(1), Some(PROFILE_HEADER));
    assert_eq!(read_profile(&p).unwrap(), profile);
}

#[test]
fn config_file_sets_and_later_overrides_win() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "run.cfg", "# desk run\nseeds = 1,2\nstrategies = mb, fl\nK_ignored_comment=1\n");
    match ScenarioConfig::from_file(&p) {
        Err(IoError::Key { key, .. }) => assert_eq!(key, "K_ignored_comment"),
        other => panic!("expected an unknown-key error, got {other:?}"),
    }
    let p = write(dir.path(), "run.cfg", "seeds = 1,2\nstrategies = mb, fl\nr_w=0.5\nl_bar_m = auto\nmax_wait_mean_s=60\n");
    let mut cfg = ScenarioConfig::from_file(&p).unwrap();
    assert_eq!(cfg.seeds, vec![1, 2]);
    assert_eq!(cfg.strategies, vec![Strategy::Mb, Strategy::Fl]);
    assert_eq!(cfg.sim.r_w, 0.5);
    assert_eq!(cfg.sim.max_wait_mean_s, 60.0);
    assert_eq!(cfg.sim.l_bar_m, None);
    cfg.set("seed", "9").unwrap();
    cfg.set("r_w", "0.9").unwrap();
    assert_eq!((cfg.seeds.clone(), cfg.sim.r_w), (vec![9], 0.9));
    assert!(cfg.set("strategy", "greedy").is_err());
    assert!(cfg.set("alpha", "x").is_err());
}

#[test]
fn kv_rejects_lines_without_a_separator() {
    assert!(matches!(parse_kv("a=1\nnope\n", "x"), Err(IoError::Parse { line: 2, .. })));
    assert_eq!(parse_kv("a = 1 \n\n# c\nb=x=y", "x").unwrap().get("b").map(String::as_str), Some("x=y"));
}

#[test]
fn validation_names_missing_inputs() {
    let cfg = ScenarioConfig { trip_log: Some("/nonexistent/log.csv".into()), ..ScenarioConfig::default() };
    let err = cfg.validate().unwrap_err().to_string();
    assert!(err.contains("trip_log") && err.contains("does not exist"), "{err}");
}

#[test]
fn digest_follows_the_inputs() {
    let a = ScenarioConfig::default();
    let b = ScenarioConfig { hotspots: vec![0, 99], ..ScenarioConfig::default() };
    let c = ScenarioConfig { seeds: vec![42], ..ScenarioConfig::default() };
    assert_ne!(a.digest().unwrap(), b.digest().unwrap());
    assert_eq!(a.digest().unwrap(), c.digest().unwrap());
    assert_eq!(a.digest().unwrap().len(), 16);
}

#[test]
fn log_scenario_uses_the_ingested_profile() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "log.csv", &format!("{TRIP_LOG_HEADER}\n1,100,0,99\n2,200,11,88\n"));
    let cfg = ScenarioConfig { trip_log: Some(p), log_start: Some(0.0), replay: true, ..ScenarioConfig::default() };
    let (s, report) = cfg.scenario().unwrap();
    assert_eq!(report.unwrap().records.len(), 2);
    assert_eq!(s.profile.ods.len(), 2);
    assert_eq!(s.demand(1).orders.len(), 2);
    assert!(!s.sim.scenario_digest.is_empty());
}

fn row(strategy: &str, seed: u64, rate: f64) -> RunMetrics {
    RunMetrics { response_rate: rate, strategy: strategy.into(), seed, config_hash: "abc".into(), ..RunMetrics::default() }
}

#[test]
fn golden_headers() {
    assert_eq!(
        METRICS_HEADER,
        "response_rate,pairing_ratio,profit,avg_resp_time_s,avg_pk_time_s,avg_detour_m,avg_share_m,dist_total_km,\
         dist_save_km,avg_pk_dist_m,admitted,responded,cancelled,residual,paired,strategy,seed,config_hash"
    );
    assert_eq!(sweep_header(), format!("axis,value,{METRICS_HEADER}"));
    assert_eq!(ORACLE_HEADER, "order_i,order_j,saving_m");
    assert_eq!(ORACLE_SUMMARY_HEADER, "oracle,orders,pairs,pairing_ratio,total_saving_m,seed,config_hash");
    assert_eq!(PROFILE_HEADER, "hour,origin,destination,rate_per_s");
    assert_eq!(TRIP_LOG_HEADER, "order_id,pickup_time,origin_node,dest_node");
    assert_eq!(PREDICT_HEADER, "hour,iterations,residual,clipped,seeker_states,taker_states,config_hash,seed");
}

#[test]
fn mean_rows_follow_multi_seed_rows() {
    let rows = [row("mb", 1, 1.0), row("fl", 1, 0.5), row("mb", 2, 0.5), row("fl", 2, 0.5)];
    let csv = metrics_csv(&rows);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 1 + 4 + 2);
    assert!(lines[5].starts_with("0.75,") && lines[5].ends_with(",mb,mean,abc"), "{}", lines[5]);
    assert!(lines[6].ends_with(",fl,mean,abc"));
    let single = metrics_csv(&rows[..2]);
    assert_eq!(single.lines().count(), 3);
    assert_eq!(single.lines().nth(1).unwrap().split(',').count(), METRICS_HEADER.split(',').count());
}

#[test]
fn sweep_rows_carry_axis_and_value() {
    let csv = sweep_csv("K", &[(60.0, vec![row("mb", 1, 1.0)]), (120.0, vec![row("mb", 1, 1.0)])]);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("K,60,1,") && lines[2].starts_with("K,120,1,"));
}

#[test]
fn oracle_rows_list_pairs_by_order_id() {
    let net = RoadNetwork::grid(1, 4, 500.0, 8.0).unwrap();
    let orders = vec![
        ridepool::domain::Order::new(20, Trip::new(0, 3), 5.0, 90.0),
        ridepool::domain::Order::new(10, Trip::new(1, 3), 1.0, 90.0),
    ];
    let inst = build_offline_instance(&orders, &net, &OracleConfig { max_detour_m: 3000.0, max_arrival_gap_s: None }).unwrap();
    let csv = oracle_csv(&inst, &solve_oracle1(&inst), &["seed=1;config_hash=abc".into()]);
    // Order 10 arrives first: 1 -> 0 -> 1 -> 3 is 2000 m against 1000 + 1500.
    assert_eq!(csv, "# seed=1;config_hash=abc\norder_i,order_j,saving_m\n10,20,500\n");
}
