//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ridepool::domain::Trip;
use ridepool::network::{LinkId, RoadNetwork};

/// All-pairs shortest distances by Floyd-Warshall over node positions in
/// `net.node_ids()`.
pub struct Apsp {
    ids: Vec<u32>,
    d: Vec<Vec<f64>>,
}

impl Apsp {
    pub fn new(net: &RoadNetwork) -> Self {
        let ids = net.node_ids().to_vec();
        let n = ids.len();
        let pos = |id: u32| ids.iter().position(|&x| x == id).unwrap();
        let mut d = vec![vec![f64::INFINITY; n]; n];
        for (i, row) in d.iter_mut().enumerate() {
            row[i] = 0.0;
        }
        for l in net.links() {
            let (a, b) = (pos(l.tail), pos(l.head));
            d[a][b] = d[a][b].min(l.length_m);
        }
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    let via = d[i][k] + d[k][j];
                    if via < d[i][j] {
                        d[i][j] = via;
                    }
                }
            }
        }
        Apsp { ids, d }
    }

    pub fn get(&self, a: u32, b: u32) -> f64 {
        let p = |id: u32| self.ids.iter().position(|&x| x == id).unwrap();
        self.d[p(a)][p(b)]
    }
}

/// Pairing of `second` into a vehicle at `v` that carries `first`:
/// returns the saving of the shortest serving order whose detours both stay
/// within `max_detour`, or `None`.
pub fn pair_saving(d: &Apsp, first: Trip, second: Trip, v: u32, max_detour: f64) -> Option<f64> {
    let l1 = d.get(first.origin, first.destination);
    let l2 = d.get(second.origin, second.destination);
    let head = d.get(first.origin, v) + d.get(v, second.origin);
    let fofo = head + d.get(second.origin, first.destination) + d.get(first.destination, second.destination);
    let folo = head + d.get(second.origin, second.destination) + d.get(second.destination, first.destination);
    let fofo_ok = fofo - d.get(first.destination, second.destination) - l1 <= max_detour
        && d.get(second.origin, first.destination) + d.get(first.destination, second.destination) - l2 <= max_detour;
    let folo_ok = folo - l1 <= max_detour;
    let best = match (fofo_ok, folo_ok) {
        (true, true) => fofo.min(folo),
        (true, false) => fofo,
        (false, true) => folo,
        (false, false) => return None,
    };
    Some(l1 + l2 - best)
}

/// Outcome counts of an event-driven first-come-first-serve simulation of
/// the seeker/taker system.
#[derive(Debug, Default, Clone)]
pub struct FcfsStats {
    pub arrivals: Vec<u64>,
    pub seeker_paired: Vec<u64>,
    /// Entries into each taker state.
    pub taker_entered: Vec<u64>,
    pub taker_paired: Vec<u64>,
    /// Sum of taker-side savings from en-route pairings, per OD.
    pub en_route_saving: Vec<f64>,
}

impl FcfsStats {
    pub fn p_s(&self, w: usize) -> f64 {
        self.seeker_paired[w] as f64 / self.arrivals[w] as f64
    }
    pub fn p_t(&self, t: usize) -> f64 {
        self.taker_paired[t] as f64 / self.taker_entered[t] as f64
    }
    /// Mean en-route saving per passenger of OD `w` who starts riding alone.
    pub fn vacant_saving(&self, w: usize) -> f64 {
        let riders = self.arrivals[w] - self.seeker_paired[w];
        self.en_route_saving[w] / riders as f64
    }
}

/// Per-OD passenger streams. A passenger arriving at its origin pairs with
/// the present unpaired taker offering the largest saving (earliest arrival
/// among equals); otherwise it rides alone along `paths[w]`, spending
/// `taus[w][i]` seconds on its i-th link, and can be picked as a taker.
///
/// `taker_ids[w][i]` is the taker id of link i of OD w, and
/// `saving(seeker_od, taker_id)` the saving when they can pair.
pub fn simulate_fcfs(
    rates: &[f64],
    taus: &[Vec<f64>],
    taker_ids: &[Vec<usize>],
    n_takers: usize,
    saving: &dyn Fn(usize, usize) -> Option<f64>,
    total_arrivals: u64,
    seed: u64,
) -> FcfsStats {
    let n = rates.len();
    let total_rate: f64 = rates.iter().sum();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stats = FcfsStats {
        arrivals: vec![0; n],
        seeker_paired: vec![0; n],
        taker_entered: vec![0; n_takers],
        taker_paired: vec![0; n_takers],
        en_route_saving: vec![0.0; n],
    };
    // (od, start time) of riders still alone
    let mut riding: Vec<(usize, f64)> = Vec::new();
    let mut now = 0.0;
    for _ in 0..total_arrivals {
        now += -(1.0 - rng.random::<f64>()).ln() / total_rate;
        let mut pick = rng.random::<f64>() * total_rate;
        let mut w = n - 1;
        for (i, r) in rates.iter().enumerate() {
            if pick < *r {
                w = i;
                break;
            }
            pick -= r;
        }
        stats.arrivals[w] += 1;

        // retire riders that reached their destination unpaired
        riding.retain(|&(od, start)| {
            let alive = now - start < taus[od].iter().sum::<f64>();
            if !alive {
                for &t in &taker_ids[od] {
                    stats.taker_entered[t] += 1;
                }
            }
            alive
        });

        let mut best: Option<(usize, usize, f64)> = None;
        for (idx, &(od, start)) in riding.iter().enumerate() {
            let mut elapsed = now - start;
            let mut link = 0;
            while link + 1 < taus[od].len() && elapsed >= taus[od][link] {
                elapsed -= taus[od][link];
                link += 1;
            }
            let t = taker_ids[od][link];
            if let Some(e) = saving(w, t) {
                if best.is_none_or(|b| e > b.2) {
                    best = Some((idx, t, e));
                }
            }
        }
        match best {
            Some((idx, t, e)) => {
                let (od, start) = riding.remove(idx);
                stats.seeker_paired[w] += 1;
                stats.taker_paired[t] += 1;
                stats.en_route_saving[od] += e;
                // count the entries of the states it passed through
                let mut elapsed = now - start;
                let mut link = 0;
                while link + 1 < taus[od].len() && elapsed >= taus[od][link] {
                    elapsed -= taus[od][link];
                    stats.taker_entered[taker_ids[od][link]] += 1;
                    link += 1;
                }
                stats.taker_entered[t] += 1;
            }
            None => riding.push((w, now)),
        }
    }
    stats
}

pub fn path_taus(net: &RoadNetwork, path: &[LinkId]) -> Vec<f64> {
    path.iter().map(|&l| net.travel_time_s(l)).collect()
}

/// Best total over all assignments of passengers to distinct vehicles or
/// their private option, by exhaustive search. `edge[p][v]` is the weight of
/// an existing edge, `private[p]` the private option.
pub fn brute_force_assignment(edge: &[Vec<Option<f64>>], private: &[f64]) -> f64 {
    fn rec(p: usize, edge: &[Vec<Option<f64>>], private: &[f64], used: &mut Vec<bool>, acc: f64, best: &mut f64) {
        if p == edge.len() {
            if acc > *best {
                *best = acc;
            }
            return;
        }
        rec(p + 1, edge, private, used, acc + private[p], best);
        for v in 0..used.len() {
            if let (false, Some(w)) = (used[v], edge[p][v]) {
                used[v] = true;
                rec(p + 1, edge, private, used, acc + w, best);
                used[v] = false;
            }
        }
    }
    let n_v = edge.first().map_or(0, |r| r.len());
    let mut best = f64::NEG_INFINITY;
    rec(0, edge, private, &mut vec![false; n_v], 0.0, &mut best);
    best
}

/// Lexicographic (requests served, saving, -pickup) total.
pub type Lex = (i64, f64, f64);

pub fn lex_gt(a: Lex, b: Lex) -> bool {
    (a.0, a.1, a.2).partial_cmp(&(b.0, b.1, b.2)) == Some(std::cmp::Ordering::Greater)
}

/// Best trip-vehicle assignment for capacity-two vehicles, by exhaustive
/// search over every way to serve, pair or skip each request.
pub fn brute_force_rtv(
    d: &Apsp,
    requests: &[Trip],
    vehicles: &[(u32, Option<Trip>)],
    max_pickup: f64,
    max_detour: f64,
) -> Lex {
    let single = |r: usize, v: usize| -> Option<Lex> {
        let (loc, onboard) = vehicles[v];
        let pk = d.get(loc, requests[r].origin);
        if pk >= max_pickup {
            return None;
        }
        match onboard {
            None => Some((1, 0.0, -pk)),
            Some(first) => pair_saving(d, first, requests[r], loc, max_detour).map(|e| (1, e, -pk)),
        }
    };
    let pair = |a: usize, b: usize, v: usize| -> Option<Lex> {
        let (loc, onboard) = vehicles[v];
        if onboard.is_some() {
            return None;
        }
        let mut best: Option<Lex> = None;
        for (x, y) in [(a, b), (b, a)] {
            let (rx, ry) = (requests[x], requests[y]);
            let pk = d.get(loc, rx.origin);
            if pk >= max_pickup || d.get(rx.origin, ry.origin) >= max_pickup {
                continue;
            }
            if let Some(e) = pair_saving(d, rx, ry, rx.origin, max_detour) {
                let cand = (2, e, -pk);
                if best.is_none_or(|b| lex_gt(cand, b)) {
                    best = Some(cand);
                }
            }
        }
        best
    };
    fn rec(
        i: usize,
        n: usize,
        done: &mut Vec<bool>,
        used: &mut Vec<bool>,
        acc: Lex,
        best: &mut Lex,
        single: &dyn Fn(usize, usize) -> Option<Lex>,
        pair: &dyn Fn(usize, usize, usize) -> Option<Lex>,
    ) {
        if i == n {
            if lex_gt(acc, *best) {
                *best = acc;
            }
            return;
        }
        if done[i] {
            return rec(i + 1, n, done, used, acc, best, single, pair);
        }
        rec(i + 1, n, done, used, acc, best, single, pair);
        for v in 0..used.len() {
            if used[v] {
                continue;
            }
            used[v] = true;
            if let Some(s) = single(i, v) {
                rec(i + 1, n, done, used, (acc.0 + s.0, acc.1 + s.1, acc.2 + s.2), best, single, pair);
            }
            for j in i + 1..n {
                if done[j] {
                    continue;
                }
                if let Some(s) = pair(i, j, v) {
                    done[j] = true;
                    rec(i + 1, n, done, used, (acc.0 + s.0, acc.1 + s.1, acc.2 + s.2), best, single, pair);
                    done[j] = false;
                }
            }
            used[v] = false;
        }
    }
    let mut best = (0, 0.0, 0.0);
    let n = requests.len();
    rec(0, n, &mut vec![false; n], &mut vec![false; vehicles.len()], (0, 0.0, 0.0), &mut best, &single, &pair);
    best
}
