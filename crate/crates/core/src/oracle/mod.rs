//! Offline pairing bounds over a fully known set of orders.
//!
//! Orders are paired without vehicles or pickups: the earlier arrival is
//! picked up first and the pair is evaluated from its origin. A pair is
//! eligible when both detours stay within the detour limit.

mod blossom;

pub use blossom::{max_weight_matching, WeightedEdge};

use rayon::prelude::*;

use crate::domain::{Order, PairGeometry};
use crate::network::{NetworkError, RoadNetwork};

/// Savings are matched as integers in units of 2^-20 m.
pub const WEIGHT_SCALE: f64 = (1u64 << 20) as f64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleConfig {
    pub max_detour_m: f64,
    /// Optional cap on the arrival gap of a pair (s). Off by default; the
    /// plain bound places no temporal constraint.
    pub max_arrival_gap_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OfflineInstance {
    pub orders: Vec<Order>,
    n: usize,
    /// Row-major saving matrix, 0 on the diagonal and for ineligible pairs.
    savings: Vec<f64>,
    eligible: Vec<bool>,
}

impl OfflineInstance {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn saving(&self, i: usize, j: usize) -> f64 {
        self.savings[i * self.n + j]
    }

    pub fn eligible(&self, i: usize, j: usize) -> bool {
        self.eligible[i * self.n + j]
    }

    /// Eligible pairs `(i, j, saving)` with `i < j`.
    pub fn eligible_pairs(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |i| {
            (i + 1..self.n).filter(move |&j| self.eligible(i, j)).map(move |j| (i, j, self.saving(i, j)))
        })
    }

    /// Builds an instance from explicit values; `eligible` defaults to
    /// `saving > 0`. Savings must be symmetric with a zero diagonal.
    pub fn from_matrix(orders: Vec<Order>, savings: Vec<Vec<f64>>, eligible: Option<Vec<Vec<bool>>>) -> Self {
        let n = orders.len();
        assert_eq!(savings.len(), n, "one saving row per order");
        let mut flat = Vec::with_capacity(n * n);
        let mut elig = Vec::with_capacity(n * n);
        for i in 0..n {
            assert_eq!(savings[i].len(), n);
            for j in 0..n {
                assert_eq!(savings[i][j], savings[j][i], "savings must be symmetric");
                let ok = i != j && eligible.as_ref().map_or(savings[i][j] > 0.0, |e| e[i][j]);
                flat.push(if i == j { 0.0 } else { savings[i][j] });
                elig.push(ok);
            }
        }
        OfflineInstance { orders, n, savings: flat, eligible: elig }
    }
}

/// Pair of `i` and `j`, earlier arrival first (ties by order id), evaluated
/// with the vehicle at the first origin. `None` when no serving order keeps
/// both detours within the limit.
pub fn pair_saving(net: &RoadNetwork, a: &Order, b: &Order, max_detour_m: f64) -> Result<Option<f64>, NetworkError> {
    let (first, second) = if (a.arrival_s, a.id) <= (b.arrival_s, b.id) { (a, b) } else { (b, a) };
    let g = PairGeometry::compute(net, &first.trip, &second.trip, first.trip.origin)?;
    Ok(g.feasible_mode(max_detour_m).map(|m| g.saving_for(m)))
}

pub fn build_offline_instance(
    orders: &[Order],
    net: &RoadNetwork,
    cfg: &OracleConfig,
) -> Result<OfflineInstance, NetworkError> {
    let n = orders.len();
    let rows: Vec<Vec<Option<f64>>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (0..n)
                .map(|j| {
                    if j <= i {
                        return Ok(None);
                    }
                    let (a, b) = (&orders[i], &orders[j]);
                    if cfg.max_arrival_gap_s.is_some_and(|gap| (a.arrival_s - b.arrival_s).abs() > gap) {
                        return Ok(None);
                    }
                    pair_saving(net, a, b, cfg.max_detour_m)
                })
                .collect::<Result<Vec<_>, NetworkError>>()
        })
        .collect::<Result<_, _>>()?;
    let mut savings = vec![0.0; n * n];
    let mut eligible = vec![false; n * n];
    for (i, row) in rows.iter().enumerate() {
        for (j, e) in row.iter().enumerate() {
            if let Some(e) = *e {
                savings[i * n + j] = e;
                savings[j * n + i] = e;
                eligible[i * n + j] = e >= 0.0;
                eligible[j * n + i] = e >= 0.0;
            }
        }
    }
    Ok(OfflineInstance { orders: orders.to_vec(), n, savings, eligible })
}

/// A set of disjoint pairs; every other order rides alone.
#[derive(Debug, Clone, PartialEq)]
pub struct OraclePairing {
    /// Pairs `(i, j)` of instance indices, `i < j`, sorted.
    pub pairs: Vec<(usize, usize)>,
    pub mate: Vec<Option<usize>>,
    pub total_saving_m: f64,
}

impl OraclePairing {
    fn from_mate(instance: &OfflineInstance, mate: Vec<Option<usize>>) -> Self {
        let mut pairs = Vec::new();
        let mut total = 0.0;
        for (i, m) in mate.iter().enumerate() {
            if let Some(j) = *m {
                assert_eq!(mate[j], Some(i), "matching is not symmetric");
                if i < j {
                    pairs.push((i, j));
                    total += instance.saving(i, j);
                }
            }
        }
        OraclePairing { pairs, mate, total_saving_m: total }
    }

    pub fn paired_count(&self) -> usize {
        2 * self.pairs.len()
    }

    /// Paired orders over all orders, 0 for an empty instance.
    pub fn pairing_ratio(&self) -> f64 {
        if self.mate.is_empty() {
            0.0
        } else {
            self.paired_count() as f64 / self.mate.len() as f64
        }
    }
}

fn scaled(e: f64) -> i64 {
    (e * WEIGHT_SCALE).round() as i64
}

/// Maximum total saving over pairs with positive saving.
pub fn solve_oracle1(instance: &OfflineInstance) -> OraclePairing {
    let edges: Vec<WeightedEdge> =
        instance.eligible_pairs().filter(|&(_, _, e)| e > 0.0).map(|(i, j, e)| (i, j, scaled(e))).collect();
    let mate = max_weight_matching(instance.len(), &edges, false);
    OraclePairing::from_mate(instance, mate)
}

/// Maximum number of paired orders over all eligible pairs; ties go to the
/// larger total saving.
pub fn solve_oracle2(instance: &OfflineInstance) -> OraclePairing {
    let edges: Vec<WeightedEdge> = instance.eligible_pairs().map(|(i, j, e)| (i, j, scaled(e))).collect();
    let mate = max_weight_matching(instance.len(), &edges, true);
    OraclePairing::from_mate(instance, mate)
}
