use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use ridepool::experiment::{compare, sweep, Scenario, SweepAxis};
use ridepool::io::{
    metrics_csv, oracle_csv, profile_csv, sweep_csv, ScenarioConfig, ORACLE_SUMMARY_HEADER, PREDICT_HEADER,
};
use ridepool::oracle::{build_offline_instance, solve_oracle1, solve_oracle2, OracleConfig};
use ridepool::prediction::{load_tables, save_tables, solve_fixed_point, PredictionTables, SolverOptions, StateSpace};
use ridepool::simulator::{run, write_events, SimConfig};
use ridepool::strategies::Strategy;

#[derive(Parser)]
#[command(name = "ridepool", version, about = "Ride-pooling dispatch experiments")]
struct Cli {
    /// Flat `key = value` scenario file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run this seed only.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Strategy, or a comma-separated list for compare and sweep.
    #[arg(long, global = true)]
    strategy: Option<String>,
    /// Output file, or directory for simulate and oracle. Defaults to stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Prediction tables file.
    #[arg(long, global = true)]
    tables: Option<PathBuf>,
    /// Any config key, as `key=value`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve the pairing model and save the prediction tables.
    Predict,
    /// Run one strategy on one seed and write its metrics and event log.
    Simulate,
    /// Offline pairings with full knowledge of the orders of one seed.
    Oracle,
    /// Every strategy on the same order stream per seed.
    Compare,
    /// Compare across the values of one parameter.
    Sweep {
        /// K (mean maximum wait, s), r_w, dt (batch interval, s) or ratio
        /// (vehicles per 100 orders).
        axis: String,
        #[arg(required = true)]
        values: Vec<f64>,
    },
    /// Turn the configured trip log into an hourly demand profile file.
    Ingest,
}

fn load_config(cli: &Cli) -> Result<ScenarioConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ScenarioConfig::from_file(p)?,
        None => ScenarioConfig::default(),
    };
    for kv in &cli.set {
        let Some((k, v)) = kv.split_once('=') else { bail!("--set expects key=value, got `{kv}`") };
        cfg.set(k.trim(), v.trim())?;
    }
    if let Some(s) = cli.seed {
        cfg.seeds = vec![s];
    }
    if let Some(s) = &cli.strategy {
        cfg.set("strategies", s)?;
    }
    if let Some(t) = &cli.tables {
        cfg.tables = t.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn scenario(cfg: &ScenarioConfig) -> Result<Scenario> {
    let (s, report) = cfg.scenario()?;
    if let Some(r) = report {
        eprintln!(
            "trip log: {} rows, {} snapped, dropped {} unmatched, {} outside the window, {} with origin = destination",
            r.rows, r.snapped, r.dropped_unmatched, r.dropped_outside_window, r.dropped_same_node
        );
    }
    if s.profile.ods.is_empty() || s.profile.hourly.iter().all(|h| h.iter().all(|&v| v == 0.0)) {
        eprintln!("warning: the demand profile is empty");
    }
    Ok(s)
}

fn tables_for(cfg: &ScenarioConfig, s: &Scenario, strategies: &[Strategy]) -> Result<Option<PredictionTables>> {
    if !strategies.iter().any(|st| st.needs_tables()) {
        return Ok(None);
    }
    let path = &cfg.tables;
    if !path.exists() {
        bail!(
            "prediction tables not found at {}; the forward-looking strategies need them. \
             Run `ridepool predict` with the same config first",
            path.display()
        );
    }
    let tables = load_tables(path)?;
    if tables.seekers != s.profile.ods {
        bail!(
            "prediction tables at {} were built for a different demand profile; rerun `ridepool predict`",
            path.display()
        );
    }
    Ok(Some(tables))
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn out_dir(out: Option<&Path>) -> Result<Option<&Path>> {
    if let Some(d) = out {
        std::fs::create_dir_all(d).with_context(|| format!("creating {}", d.display()))?;
    }
    Ok(out)
}

fn cmd_predict(cli: &Cli, cfg: &ScenarioConfig) -> Result<()> {
    let s = scenario(cfg)?;
    let space = StateSpace::build(&s.net, &s.profile.ods, &s.sim.pairing())?;
    let (tables, reports) = solve_fixed_point(&space, &s.profile, &SolverOptions::default())?;
    let path = cli.out.clone().unwrap_or_else(|| cfg.tables.clone());
    save_tables(&tables, &path)?;
    let mut text = format!("{PREDICT_HEADER}\n");
    let seed = SimConfig { seed: cfg.seeds[0], ..s.sim.clone() };
    for (h, r) in reports.iter().enumerate() {
        text.push_str(&format!(
            "{h},{},{},{},{},{},{},{}\n",
            r.iterations,
            r.final_residual(),
            r.clipped,
            tables.seekers.len(),
            tables.takers.len(),
            seed.hash(),
            seed.seed
        ));
    }
    print!("{text}");
    eprintln!("tables written to {}", path.display());
    Ok(())
}

fn single<T: Copy + std::fmt::Display>(what: &str, flag: &str, xs: &[T]) -> Result<T> {
    match xs {
        [x] => Ok(*x),
        _ => bail!("this command runs one {what}; pass {flag}"),
    }
}

fn cmd_simulate(cli: &Cli, cfg: &ScenarioConfig) -> Result<()> {
    let strategy = single("strategy", "--strategy", &cfg.strategies)?;
    let seed = *cfg.seeds.first().expect("validated");
    let s = scenario(cfg)?;
    let tables = tables_for(cfg, &s, &[strategy])?;
    let sim = SimConfig { seed, ..s.sim.clone() };
    let demand = s.demand(seed);
    let out = run(&s.net, &demand, &sim, strategy, tables.as_ref())?;
    let metrics = metrics_csv(std::slice::from_ref(&out.metrics));
    match out_dir(cli.out.as_deref())? {
        Some(d) => {
            std::fs::write(d.join("metrics.csv"), &metrics)?;
            write_events(&d.join("events.csv"), &out.header, &out.events)?;
        }
        None => print!("{metrics}"),
    }
    Ok(())
}

fn cmd_oracle(cli: &Cli, cfg: &ScenarioConfig) -> Result<()> {
    let seed = *cfg.seeds.first().expect("validated");
    let s = scenario(cfg)?;
    let sim = SimConfig { seed, ..s.sim.clone() };
    let demand = s.demand(seed);
    let ocfg = OracleConfig { max_detour_m: sim.max_detour_m, max_arrival_gap_s: None };
    let inst = build_offline_instance(&demand.orders, &s.net, &ocfg)?;
    let hash = sim.hash();
    let comments = [format!("seed={seed};config_hash={hash}")];
    let mut summary = format!("{ORACLE_SUMMARY_HEADER}\n");
    let dir = out_dir(cli.out.as_deref())?;
    for (name, pairing) in [("oracle1", solve_oracle1(&inst)), ("oracle2", solve_oracle2(&inst))] {
        summary.push_str(&format!(
            "{name},{},{},{},{},{seed},{hash}\n",
            inst.len(),
            pairing.pairs.len(),
            pairing.pairing_ratio(),
            pairing.total_saving_m
        ));
        if let Some(d) = dir {
            std::fs::write(d.join(format!("{name}.csv")), oracle_csv(&inst, &pairing, &comments))?;
        }
    }
    if let Some(d) = dir {
        std::fs::write(d.join("oracle_summary.csv"), &summary)?;
    }
    print!("{summary}");
    Ok(())
}

fn cmd_compare(cli: &Cli, cfg: &ScenarioConfig) -> Result<()> {
    let s = scenario(cfg)?;
    let tables = tables_for(cfg, &s, &cfg.strategies)?;
    let rows = compare(&s, &cfg.strategies, &cfg.seeds, tables.as_ref())?;
    emit(cli.out.as_deref(), &metrics_csv(&rows))
}

fn cmd_sweep(cli: &Cli, cfg: &ScenarioConfig, axis: &str, values: &[f64]) -> Result<()> {
    let Some(ax) = SweepAxis::parse(axis) else { bail!("unknown sweep axis `{axis}`; expected K, r_w, dt or ratio") };
    if let Some(v) = values.iter().find(|v| !(**v > 0.0)) {
        bail!("sweep values must be positive, got {v}");
    }
    let s = scenario(cfg)?;
    let tables = tables_for(cfg, &s, &cfg.strategies)?;
    let cells = sweep(&s, ax, values, &cfg.strategies, &cfg.seeds, tables.as_ref())?;
    emit(cli.out.as_deref(), &sweep_csv(ax.as_str(), &cells))
}

fn cmd_ingest(cli: &Cli, cfg: &ScenarioConfig) -> Result<()> {
    if cfg.trip_log.is_none() {
        bail!("ingest needs a trip log; set trip_log in the config or pass --set trip_log=PATH");
    }
    let s = scenario(cfg)?;
    let comments = [format!("config_hash={}", s.sim.hash())];
    emit(cli.out.as_deref(), &profile_csv(&s.profile, &comments))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = load_config(&cli).and_then(|cfg| match &cli.cmd {
        Cmd::Predict => cmd_predict(&cli, &cfg),
        Cmd::Simulate => cmd_simulate(&cli, &cfg),
        Cmd::Oracle => cmd_oracle(&cli, &cfg),
        Cmd::Compare => cmd_compare(&cli, &cfg),
        Cmd::Sweep { axis, values } => cmd_sweep(&cli, &cfg, axis, values),
        Cmd::Ingest => cmd_ingest(&cli, &cfg),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
