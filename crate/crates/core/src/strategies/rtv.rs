//! Request-trip-vehicle assignment for vehicles of capacity two.
//!
//! Trips are single requests or shareable request pairs. A pair may only go
//! to a vacant vehicle; a single may join a partially occupied one. Each
//! request is in at most one trip and each vehicle serves at most one trip.
//! The objective is lexicographic: requests served, then total distance
//! saving, then shorter pickups.

use super::assignment::{solve_assignment, AssignmentProblem, Choice, Score};
use crate::domain::{PairGeometry, PairingConfig, ServeMode, Trip};
use crate::network::{NetworkError, NodeId, RoadNetwork};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RtvRequest {
    pub trip: Trip,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RtvVehicle {
    pub location: NodeId,
    /// Trip of the passenger on board, if any.
    pub onboard: Option<Trip>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RtvTrip {
    Single {
        request: usize,
        vehicle: usize,
        pickup_m: f64,
        /// Serving order when joining an occupied vehicle.
        mode: Option<ServeMode>,
        saving_m: f64,
    },
    Pair {
        first: usize,
        second: usize,
        vehicle: usize,
        /// Vehicle to the first origin.
        pickup_m: f64,
        mode: ServeMode,
        saving_m: f64,
    },
}

impl RtvTrip {
    pub fn vehicle(&self) -> usize {
        match *self {
            RtvTrip::Single { vehicle, .. } | RtvTrip::Pair { vehicle, .. } => vehicle,
        }
    }

    pub fn score(&self) -> Score {
        match *self {
            RtvTrip::Single { pickup_m, saving_m, .. } => Score::new(1, saving_m, -pickup_m),
            RtvTrip::Pair { pickup_m, saving_m, .. } => Score::new(2, saving_m, -pickup_m),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RtvSolution {
    pub trips: Vec<RtvTrip>,
    pub score: Score,
    /// Whether every pairing configuration was examined.
    pub exhaustive: bool,
}

/// Pairing configurations examined before falling back to a greedy choice of
/// pairs.
pub const CONFIG_CAP: usize = 4096;

/// Pair trip of `a` then `b` from the first origin: the inter-pickup leg and
/// both detours must satisfy the limits.
fn pair_geometry(
    net: &RoadNetwork,
    a: &Trip,
    b: &Trip,
    cfg: &PairingConfig,
) -> Result<Option<(ServeMode, f64, f64)>, NetworkError> {
    let g = PairGeometry::compute(net, a, b, a.origin)?;
    if g.pickup_m >= cfg.max_pickup_m {
        return Ok(None);
    }
    Ok(g.feasible_mode(cfg.max_detour_m).map(|m| (m, g.saving_for(m), g.pickup_m)))
}

/// All single-trip options, `singles[r]`.
fn single_trips(
    net: &RoadNetwork,
    requests: &[RtvRequest],
    vehicles: &[RtvVehicle],
    cfg: &PairingConfig,
) -> Result<Vec<Vec<RtvTrip>>, NetworkError> {
    let mut out = vec![Vec::new(); requests.len()];
    for (r, req) in requests.iter().enumerate() {
        for (v, veh) in vehicles.iter().enumerate() {
            let pickup_m = net.shortest_distance(veh.location, req.trip.origin)?;
            if pickup_m >= cfg.max_pickup_m {
                continue;
            }
            match veh.onboard {
                None => out[r].push(RtvTrip::Single { request: r, vehicle: v, pickup_m, mode: None, saving_m: 0.0 }),
                Some(onboard) => {
                    let g = PairGeometry::compute(net, &onboard, &req.trip, veh.location)?;
                    if let Some(mode) = g.feasible_mode(cfg.max_detour_m) {
                        out[r].push(RtvTrip::Single {
                            request: r,
                            vehicle: v,
                            pickup_m,
                            mode: Some(mode),
                            saving_m: g.saving_for(mode),
                        });
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Best pair trip per vacant vehicle for each shareable pair `(r, s)`, r < s.
fn pair_trips(
    net: &RoadNetwork,
    requests: &[RtvRequest],
    vehicles: &[RtvVehicle],
    cfg: &PairingConfig,
) -> Result<Vec<((usize, usize), Vec<RtvTrip>)>, NetworkError> {
    let mut out = Vec::new();
    for r in 0..requests.len() {
        for s in r + 1..requests.len() {
            let orientations = [(r, s), (s, r)];
            let mut geo = Vec::new();
            for &(a, b) in &orientations {
                if let Some(x) = pair_geometry(net, &requests[a].trip, &requests[b].trip, cfg)? {
                    geo.push((a, b, x));
                }
            }
            if geo.is_empty() {
                continue;
            }
            let mut trips = Vec::new();
            for (v, veh) in vehicles.iter().enumerate() {
                if veh.onboard.is_some() {
                    continue;
                }
                let mut best: Option<RtvTrip> = None;
                for &(a, b, (mode, saving_m, _)) in &geo {
                    let pickup_m = net.shortest_distance(veh.location, requests[a].trip.origin)?;
                    if pickup_m >= cfg.max_pickup_m {
                        continue;
                    }
                    let t = RtvTrip::Pair { first: a, second: b, vehicle: v, pickup_m, mode, saving_m };
                    if best.is_none_or(|cur| t.score().cmp_lex(&cur.score()).is_gt()) {
                        best = Some(t);
                    }
                }
                trips.extend(best);
            }
            if !trips.is_empty() {
                out.push(((r, s), trips));
            }
        }
    }
    Ok(out)
}

/// Trip-to-vehicle assignment for a fixed set of pairs; requests outside the
/// pairs travel as singles.
fn assign_config(
    pairs: &[usize],
    pair_options: &[((usize, usize), Vec<RtvTrip>)],
    singles: &[Vec<RtvTrip>],
    n_requests: usize,
    n_vehicles: usize,
) -> (Vec<RtvTrip>, Score) {
    let mut in_pair = vec![false; n_requests];
    let mut rows: Vec<&[RtvTrip]> = Vec::new();
    for &p in pairs {
        let ((r, s), ref trips) = pair_options[p];
        in_pair[r] = true;
        in_pair[s] = true;
        rows.push(trips);
    }
    for r in 0..n_requests {
        if !in_pair[r] {
            rows.push(&singles[r]);
        }
    }
    let mut problem = AssignmentProblem::new(rows.len(), n_vehicles);
    let mut edge_trip = Vec::new();
    for (i, row) in rows.iter().enumerate() {
        for t in row.iter() {
            problem.add_edge(i, t.vehicle(), t.score());
            edge_trip.push(*t);
        }
    }
    let a = solve_assignment(&problem);
    let trips = a
        .choices
        .iter()
        .zip(&a.edge_of)
        .filter_map(|(c, e)| match c {
            Choice::Vehicle(_) => e.map(|id| edge_trip[id]),
            Choice::Private => None,
        })
        .collect();
    (trips, a.objective)
}

/// Enumerates sets of disjoint pairs; stops after `cap` sets.
fn enumerate_matchings(n: usize, pairs: &[(usize, usize)], cap: usize) -> Option<Vec<Vec<usize>>> {
    let mut by_first: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, &(r, _)) in pairs.iter().enumerate() {
        by_first[r].push(i);
    }
    let mut out = Vec::new();
    let mut used = vec![false; n];
    let mut cur = Vec::new();
    fn rec(
        r: usize,
        n: usize,
        pairs: &[(usize, usize)],
        by_first: &[Vec<usize>],
        used: &mut [bool],
        cur: &mut Vec<usize>,
        out: &mut Vec<Vec<usize>>,
        cap: usize,
    ) -> bool {
        if out.len() > cap {
            return false;
        }
        if r == n {
            out.push(cur.clone());
            return true;
        }
        if used[r] {
            return rec(r + 1, n, pairs, by_first, used, cur, out, cap);
        }
        if !rec(r + 1, n, pairs, by_first, used, cur, out, cap) {
            return false;
        }
        for &i in &by_first[r] {
            let s = pairs[i].1;
            if used[s] {
                continue;
            }
            used[s] = true;
            cur.push(i);
            let ok = rec(r + 1, n, pairs, by_first, used, cur, out, cap);
            cur.pop();
            used[s] = false;
            if !ok {
                return false;
            }
        }
        true
    }
    if rec(0, n, pairs, &by_first, &mut used, &mut cur, &mut out, cap) && out.len() <= cap {
        Some(out)
    } else {
        None
    }
}

/// Picks disjoint pairs by decreasing best saving.
fn greedy_pairs(pair_options: &[((usize, usize), Vec<RtvTrip>)], n: usize) -> Vec<usize> {
    let best = |i: usize| {
        pair_options[i]
            .1
            .iter()
            .map(|t| t.score())
            .max_by(|a, b| a.cmp_lex(b))
            .unwrap_or(Score::ZERO)
    };
    let mut order: Vec<usize> = (0..pair_options.len()).collect();
    order.sort_by(|&a, &b| best(b).cmp_lex(&best(a)).then(a.cmp(&b)));
    let mut used = vec![false; n];
    let mut chosen = Vec::new();
    for i in order {
        let (r, s) = pair_options[i].0;
        if !used[r] && !used[s] {
            used[r] = true;
            used[s] = true;
            chosen.push(i);
        }
    }
    chosen.sort_unstable();
    chosen
}

/// Best trip-vehicle assignment. Exact while the number of pair
/// configurations stays within [`CONFIG_CAP`]; otherwise the better of the
/// greedy pair set and no pairs at all.
pub fn rtv_assign(
    net: &RoadNetwork,
    requests: &[RtvRequest],
    vehicles: &[RtvVehicle],
    cfg: &PairingConfig,
) -> Result<RtvSolution, NetworkError> {
    let n = requests.len();
    let singles = single_trips(net, requests, vehicles, cfg)?;
    let pair_options = pair_trips(net, requests, vehicles, cfg)?;
    let keys: Vec<(usize, usize)> = pair_options.iter().map(|p| p.0).collect();

    let (configs, exhaustive) = match enumerate_matchings(n, &keys, CONFIG_CAP) {
        Some(all) => (all, true),
        None => (vec![Vec::new(), greedy_pairs(&pair_options, n)], false),
    };
    let mut best: Option<(Vec<RtvTrip>, Score)> = None;
    for cfg_pairs in &configs {
        let (trips, score) = assign_config(cfg_pairs, &pair_options, &singles, n, vehicles.len());
        if best.as_ref().is_none_or(|b| score.cmp_lex(&b.1).is_gt()) {
            best = Some((trips, score));
        }
    }
    let (trips, score) = best.unwrap_or((Vec::new(), Score::ZERO));
    Ok(RtvSolution { trips, score, exhaustive })
}
