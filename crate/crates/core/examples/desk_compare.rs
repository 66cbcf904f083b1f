//! Every strategy on the desk benchmark: per-seed rows and seed means.

use std::time::Instant;

use ridepool::experiment::{compare, desk_benchmark, solve_tables, DESK_SEEDS};
use ridepool::io::metrics_csv;
use ridepool::strategies::Strategy;

fn main() {
    let s = desk_benchmark();
    let t0 = Instant::now();
    let tables = solve_tables(&s).expect("tables");
    let rows = compare(&s, &Strategy::ALL, &DESK_SEEDS, Some(&tables)).expect("runs");
    print!("{}", metrics_csv(&rows));
    eprintln!("{:.1?}", t0.elapsed());
}
