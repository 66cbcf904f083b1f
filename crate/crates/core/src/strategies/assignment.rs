//! Maximum-score assignment of passengers to options.
//!
//! Each passenger (row) takes exactly one option: a shared vehicle column or
//! its own private column (WAIT or "unassigned"). Vehicles take at most one
//! passenger. Missing edges are never chosen; there is no sentinel weight.

use std::cmp::Ordering;
use std::ops::{Add, Neg, Sub};

/// Lexicographic edge weight: more `tier` first, then more `utility`, then
/// more `tiebreak`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Score {
    pub tier: i64,
    pub utility: f64,
    pub tiebreak: f64,
}

impl Score {
    pub const ZERO: Score = Score { tier: 0, utility: 0.0, tiebreak: 0.0 };

    pub fn new(tier: i64, utility: f64, tiebreak: f64) -> Self {
        Score { tier, utility, tiebreak }
    }

    /// Signed zeros compare equal. Scores never hold NaN.
    pub fn cmp_lex(&self, other: &Self) -> Ordering {
        let num = |a: f64, b: f64| a.partial_cmp(&b).expect("score component is NaN");
        self.tier
            .cmp(&other.tier)
            .then(num(self.utility, other.utility))
            .then(num(self.tiebreak, other.tiebreak))
    }
}

impl Add for Score {
    type Output = Score;
    fn add(self, o: Score) -> Score {
        Score { tier: self.tier + o.tier, utility: self.utility + o.utility, tiebreak: self.tiebreak + o.tiebreak }
    }
}

impl Sub for Score {
    type Output = Score;
    fn sub(self, o: Score) -> Score {
        Score { tier: self.tier - o.tier, utility: self.utility - o.utility, tiebreak: self.tiebreak - o.tiebreak }
    }
}

impl Neg for Score {
    type Output = Score;
    fn neg(self) -> Score {
        Score { tier: -self.tier, utility: -self.utility, tiebreak: -self.tiebreak }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleEdge {
    pub passenger: usize,
    pub vehicle: usize,
    pub score: Score,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssignmentProblem {
    pub passengers: usize,
    pub vehicles: usize,
    pub edges: Vec<VehicleEdge>,
    /// Score of each passenger's private option.
    pub private: Vec<Score>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Choice {
    Vehicle(usize),
    Private,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub choices: Vec<Choice>,
    /// Index into `problem.edges` of each vehicle choice.
    pub edge_of: Vec<Option<usize>>,
    pub objective: Score,
}

impl AssignmentProblem {
    pub fn new(passengers: usize, vehicles: usize) -> Self {
        AssignmentProblem { passengers, vehicles, edges: Vec::new(), private: vec![Score::ZERO; passengers] }
    }

    pub fn add_edge(&mut self, passenger: usize, vehicle: usize, score: Score) {
        self.edges.push(VehicleEdge { passenger, vehicle, score });
    }

    /// Score total of a candidate assignment, or `None` if it reuses a vehicle
    /// or picks a missing edge.
    pub fn evaluate(&self, choices: &[Choice]) -> Option<Score> {
        let mut used = vec![false; self.vehicles];
        let mut total = Score::ZERO;
        for (p, c) in choices.iter().enumerate() {
            match *c {
                Choice::Private => total = total + self.private[p],
                Choice::Vehicle(v) => {
                    if std::mem::replace(&mut used[v], true) {
                        return None;
                    }
                    let e = self
                        .edges
                        .iter()
                        .filter(|e| e.passenger == p && e.vehicle == v)
                        .max_by(|a, b| a.score.cmp_lex(&b.score))?;
                    total = total + e.score;
                }
            }
        }
        Some(total)
    }
}

/// Exact solution by the Hungarian method on a passengers x (vehicles +
/// passengers) matrix. Each row keeps only its `passengers` best vehicle
/// edges: a row using a worse one could always trade it for a free better
/// one.
pub fn solve_assignment(problem: &AssignmentProblem) -> Assignment {
    let n = problem.passengers;
    if n == 0 {
        return Assignment { choices: Vec::new(), edge_of: Vec::new(), objective: Score::ZERO };
    }

    // best edge per (passenger, vehicle), then top-n per row
    let mut rows: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (id, e) in problem.edges.iter().enumerate() {
        assert!(e.passenger < n && e.vehicle < problem.vehicles, "edge out of range");
        rows[e.passenger].push(id);
    }
    let sc = |id: usize| problem.edges[id].score;
    for row in &mut rows {
        row.sort_by(|&a, &b| {
            problem.edges[a]
                .vehicle
                .cmp(&problem.edges[b].vehicle)
                .then(sc(b).cmp_lex(&sc(a)))
                .then(a.cmp(&b))
        });
        row.dedup_by_key(|id| problem.edges[*id].vehicle);
        row.sort_by(|&a, &b| sc(b).cmp_lex(&sc(a)).then(problem.edges[a].vehicle.cmp(&problem.edges[b].vehicle)));
        row.truncate(n);
    }

    // used vehicles become columns 0..k in id order, private columns follow
    let mut vehicle_of_col: Vec<usize> = rows.iter().flatten().map(|&id| problem.edges[id].vehicle).collect();
    vehicle_of_col.sort_unstable();
    vehicle_of_col.dedup();
    let col_of = |v: usize| vehicle_of_col.binary_search(&v).expect("vehicle has a column");
    let k = vehicle_of_col.len();
    let m = k + n;

    // cost[i][j] = -score, None where no edge
    let mut cost: Vec<Vec<Option<(Score, Option<usize>)>>> = vec![vec![None; m]; n];
    for (i, row) in rows.iter().enumerate() {
        for &id in row {
            let c = col_of(problem.edges[id].vehicle);
            cost[i][c] = Some((-sc(id), Some(id)));
        }
        cost[i][k + i] = Some((-problem.private[i], None));
    }

    let col_to_row = hungarian_min(&cost, n, m);

    let mut choices = vec![Choice::Private; n];
    let mut edge_of = vec![None; n];
    let mut objective = Score::ZERO;
    for (j, r) in col_to_row.iter().enumerate() {
        if let Some(i) = *r {
            let (c, id) = cost[i][j].expect("assigned cell exists");
            objective = objective - c;
            if j < k {
                choices[i] = Choice::Vehicle(vehicle_of_col[j]);
                edge_of[i] = id;
            }
        }
    }
    Assignment { choices, edge_of, objective }
}

/// Minimum-cost assignment of all `n` rows to distinct columns (n <= m),
/// skipping `None` cells. Returns the row of each column.
fn hungarian_min(cost: &[Vec<Option<(Score, Option<usize>)>>], n: usize, m: usize) -> Vec<Option<usize>> {
    let inf = Score::new(i64::MAX / 4, 0.0, 0.0);
    // 1-based potentials; column 0 is the virtual start
    let mut u = vec![Score::ZERO; n + 1];
    let mut v = vec![Score::ZERO; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = usize::MAX;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                if let Some((c, _)) = cost[i0 - 1][j - 1] {
                    let cur = c - u[i0] - v[j];
                    if cur.cmp_lex(&minv[j]) == Ordering::Less {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                }
                if minv[j].cmp_lex(&delta) == Ordering::Less {
                    delta = minv[j];
                    j1 = j;
                }
            }
            assert!(j1 != usize::MAX, "row {i0} has no reachable column");
            for j in 0..=m {
                if used[j] {
                    u[p[j]] = u[p[j]] + delta;
                    v[j] = v[j] - delta;
                } else if minv[j].tier < inf.tier {
                    minv[j] = minv[j] - delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    (1..=m).map(|j| if p[j] == 0 { None } else { Some(p[j] - 1) }).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn util(u: f64) -> Score {
        Score::new(1, u, 0.0)
    }

    #[test]
    fn singleton_is_assigned() {
        let mut pb = AssignmentProblem::new(1, 1);
        pb.add_edge(0, 0, util(5.0));
        let a = solve_assignment(&pb);
        assert_eq!(a.choices, vec![Choice::Vehicle(0)]);
        assert_eq!(a.objective.utility, 5.0);
    }

    #[test]
    fn vehicle_goes_to_the_better_passenger() {
        let mut pb = AssignmentProblem::new(2, 1);
        pb.add_edge(0, 0, util(5.0));
        pb.add_edge(1, 0, util(7.0));
        let a = solve_assignment(&pb);
        assert_eq!(a.choices, vec![Choice::Private, Choice::Vehicle(0)]);
        assert_eq!(a.objective.utility, 7.0);
    }

    #[test]
    fn tier_dominates_utility() {
        // a negative-utility vehicle still beats the tier-0 private option
        let mut pb = AssignmentProblem::new(1, 1);
        pb.add_edge(0, 0, util(-300.0));
        let a = solve_assignment(&pb);
        assert_eq!(a.choices, vec![Choice::Vehicle(0)]);
    }

    #[test]
    fn zero_utility_ties_fall_through_to_tiebreak() {
        let pickups = [[200.0, 100.0, 100.0], [300.0, 0.0, 0.0], [400.0, 100.0, 100.0], [300.0, 400.0, 400.0]];
        let mut pb = AssignmentProblem::new(4, 3);
        for (i, row) in pickups.iter().enumerate() {
            for (v, &pk) in row.iter().enumerate() {
                pb.add_edge(i, v, Score::new(1, 0.0, -pk));
            }
        }
        let a = solve_assignment(&pb);
        assert_eq!(a.objective, Score::new(3, 0.0, -300.0));
    }

    #[test]
    fn empty_problem() {
        let a = solve_assignment(&AssignmentProblem::new(0, 3));
        assert!(a.choices.is_empty());
    }

    #[test]
    fn duplicate_edges_use_the_best() {
        let mut pb = AssignmentProblem::new(1, 1);
        pb.add_edge(0, 0, util(1.0));
        pb.add_edge(0, 0, util(4.0));
        let a = solve_assignment(&pb);
        assert_eq!(a.edge_of, vec![Some(1)]);
        assert_eq!(pb.evaluate(&a.choices), Some(a.objective));
    }
}
