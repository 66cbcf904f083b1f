//! Seeker and taker states per OD pair, the seeker/taker matching relation
//! and the per-seeker priority order among matchable takers.

use std::collections::HashMap;

use crate::domain::{PairGeometry, PairingConfig, Trip};
use crate::network::{LinkId, NetworkError, NodeId, RoadNetwork};

/// Passengers of one OD waiting at the origin.
#[derive(Debug, Clone, PartialEq)]
pub struct SeekerState {
    pub trip: Trip,
}

/// Passengers of one OD riding alone on one link of the OD's path.
#[derive(Debug, Clone, PartialEq)]
pub struct TakerState {
    /// Index of the OD (and of its seeker state).
    pub od: usize,
    pub link: LinkId,
    /// Position of `link` along the OD path, starting at 0.
    pub position: usize,
    /// Node the taker reaches at the end of the link; pairing geometry is
    /// evaluated from here.
    pub head: NodeId,
    /// Time spent in the state: the link travel time.
    pub sojourn_s: f64,
}

/// One admissible (seeker, taker) pairing and its distance saving.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Match {
    pub seeker: usize,
    pub taker: usize,
    pub saving_m: f64,
}

/// How equally good takers rank against each other for a seeker.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TieBreak {
    /// Only strictly larger savings outrank; equal takers do not block each
    /// other.
    #[default]
    StrictOnly,
    /// Equal savings are ordered by taker state id, smaller first.
    StateId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    pub seekers: Vec<SeekerState>,
    pub takers: Vec<TakerState>,
    /// Taker ids of each OD, in path order.
    pub takers_of_od: Vec<Vec<usize>>,
    pub matches: Vec<Match>,
    /// Match ids per seeker (the takers a seeker can pair with), in
    /// priority order once `priority_sets` has run.
    pub seeker_matches: Vec<Vec<usize>>,
    /// Match ids per taker (the seekers a taker can pair with).
    pub taker_matches: Vec<Vec<usize>>,
    /// For each match, the length of the prefix of
    /// `seeker_matches[seeker]` that outranks it.
    pub outranked_by: Vec<usize>,
    pub tie_break: TieBreak,
    od_index: HashMap<Trip, usize>,
}

impl StateSpace {
    /// Builds seeker and taker states for `ods` and evaluates which pairs
    /// satisfy the pickup and detour conditions. A seeker of OD `w'` matches
    /// a taker on link `a` of OD `w` when the pickup distance from the head
    /// of `a` to the seeker's origin is below the pickup limit and a serving
    /// order keeps both detours within the detour limit. Repeated ODs get
    /// separate states.
    pub fn build(net: &RoadNetwork, ods: &[Trip], cfg: &PairingConfig) -> Result<Self, NetworkError> {
        let mut seekers = Vec::new();
        let mut od_index = HashMap::new();
        for trip in ods {
            od_index.entry(*trip).or_insert(seekers.len());
            seekers.push(SeekerState { trip: *trip });
        }

        let mut takers = Vec::new();
        let mut takers_of_od = vec![Vec::new(); seekers.len()];
        for (od, seeker) in seekers.iter().enumerate() {
            let path = net.shortest_path_links(seeker.trip.origin, seeker.trip.destination)?;
            for (position, &link) in path.iter().enumerate() {
                takers_of_od[od].push(takers.len());
                takers.push(TakerState {
                    od,
                    link,
                    position,
                    head: net.link(link).head,
                    sojourn_s: net.travel_time_s(link),
                });
            }
        }

        let mut matches = Vec::new();
        let mut seeker_matches = vec![Vec::new(); seekers.len()];
        let mut taker_matches = vec![Vec::new(); takers.len()];
        for (ti, taker) in takers.iter().enumerate() {
            let onboard = seekers[taker.od].trip;
            for (si, seeker) in seekers.iter().enumerate() {
                let pickup = net.shortest_distance(taker.head, seeker.trip.origin)?;
                if pickup >= cfg.max_pickup_m {
                    continue;
                }
                let g = PairGeometry::compute(net, &onboard, &seeker.trip, taker.head)?;
                if let Some(mode) = g.feasible_mode(cfg.max_detour_m) {
                    let id = matches.len();
                    matches.push(Match {
                        seeker: si,
                        taker: ti,
                        saving_m: g.saving_for(mode),
                    });
                    seeker_matches[si].push(id);
                    taker_matches[ti].push(id);
                }
            }
        }

        let mut space = StateSpace {
            outranked_by: vec![0; matches.len()],
            seekers,
            takers,
            takers_of_od,
            matches,
            seeker_matches,
            taker_matches,
            tie_break: TieBreak::default(),
            od_index,
        };
        space.priority_sets(TieBreak::default());
        Ok(space)
    }

    /// Orders each seeker's matchable takers by saving, best first, and
    /// records for every match how many of them outrank it.
    pub fn priority_sets(&mut self, tie_break: TieBreak) {
        self.tie_break = tie_break;
        for list in &mut self.seeker_matches {
            let m = &self.matches;
            list.sort_by(|&a, &b| {
                m[b].saving_m
                    .total_cmp(&m[a].saving_m)
                    .then(m[a].taker.cmp(&m[b].taker))
            });
            let mut group_start = 0;
            for (pos, &id) in list.iter().enumerate() {
                let outranked = match tie_break {
                    TieBreak::StateId => pos,
                    TieBreak::StrictOnly => {
                        if pos > 0 && m[list[pos - 1]].saving_m != m[id].saving_m {
                            group_start = pos;
                        }
                        group_start
                    }
                };
                self.outranked_by[id] = outranked;
            }
        }
    }

    /// Takers that outrank `taker` for `seeker`, or `None` when the two do
    /// not match.
    pub fn priority_set(&self, seeker: usize, taker: usize) -> Option<Vec<usize>> {
        let list = &self.seeker_matches[seeker];
        let id = *list.iter().find(|&&id| self.matches[id].taker == taker)?;
        Some(
            list[..self.outranked_by[id]]
                .iter()
                .map(|&j| self.matches[j].taker)
                .collect(),
        )
    }

    /// Takers a seeker can pair with.
    pub fn matchable_takers(&self, seeker: usize) -> impl Iterator<Item = usize> + '_ {
        self.seeker_matches[seeker].iter().map(|&id| self.matches[id].taker)
    }

    /// Seekers a taker can pair with.
    pub fn matchable_seekers(&self, taker: usize) -> impl Iterator<Item = usize> + '_ {
        self.taker_matches[taker].iter().map(|&id| self.matches[id].seeker)
    }

    pub fn saving(&self, seeker: usize, taker: usize) -> Option<f64> {
        self.seeker_matches[seeker]
            .iter()
            .map(|&id| &self.matches[id])
            .find(|m| m.taker == taker)
            .map(|m| m.saving_m)
    }

    /// First state index of `trip`.
    pub fn od_of(&self, trip: &Trip) -> Option<usize> {
        self.od_index.get(trip).copied()
    }

    pub fn od_count(&self) -> usize {
        self.seekers.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::Link;

    fn line(n: u32, len: f64) -> RoadNetwork {
        let mut links = Vec::new();
        for i in 0..n - 1 {
            links.push(Link { tail: i, head: i + 1, length_m: len });
            links.push(Link { tail: i + 1, head: i, length_m: len });
        }
        RoadNetwork::new((0..n).collect(), None, links, 10.0).unwrap()
    }

    #[test]
    fn lonely_od_has_no_partner() {
        let net = line(3, 100.0);
        let cfg = PairingConfig { max_pickup_m: 50.0, max_detour_m: 50.0, batch_interval_s: 10.0 };
        let space = StateSpace::build(&net, &[Trip::new(0, 2)], &cfg).unwrap();
        assert_eq!(space.takers.len(), 2);
        assert_eq!(space.matchable_takers(0).count(), 0);
        assert!(space.matches.is_empty());
    }

    #[test]
    fn identical_ods_match_each_other() {
        let net = line(2, 100.0);
        let cfg = PairingConfig { max_pickup_m: 1000.0, max_detour_m: 1000.0, batch_interval_s: 10.0 };
        let t = Trip::new(0, 1);
        let mut space = StateSpace::build(&net, &[t, t], &cfg).unwrap();
        assert_eq!(space.seekers.len(), 2);
        assert_eq!(space.takers.len(), 2);
        for s in 0..2 {
            assert_eq!(space.matchable_takers(s).collect::<Vec<_>>(), vec![0, 1]);
            // the taker already left the shared origin, so the pair costs a return trip
            assert_eq!(space.saving(s, 0), Some(-100.0));
        }
        for t in 0..2 {
            assert_eq!(space.matchable_seekers(t).collect::<Vec<_>>(), vec![0, 1]);
        }
        assert_eq!(space.priority_set(0, 1), Some(vec![]));
        space.priority_sets(TieBreak::StateId);
        assert_eq!(space.priority_set(0, 0), Some(vec![]));
        assert_eq!(space.priority_set(0, 1), Some(vec![0]));
        assert_eq!(space.od_of(&t), Some(0));
    }

    fn two_taker_space(savings: [f64; 2]) -> StateSpace {
        let matches = vec![
            Match { seeker: 0, taker: 0, saving_m: savings[0] },
            Match { seeker: 0, taker: 1, saving_m: savings[1] },
        ];
        StateSpace {
            seekers: vec![SeekerState { trip: Trip::new(0, 1) }],
            takers: vec![
                TakerState { od: 0, link: 0, position: 0, head: 1, sojourn_s: 1.0 },
                TakerState { od: 0, link: 1, position: 1, head: 2, sojourn_s: 1.0 },
            ],
            takers_of_od: vec![vec![0, 1]],
            outranked_by: vec![0; 2],
            seeker_matches: vec![vec![0, 1]],
            taker_matches: vec![vec![0], vec![1]],
            matches,
            tie_break: TieBreak::default(),
            od_index: HashMap::new(),
        }
    }

    #[test]
    fn priority_follows_saving() {
        let mut s = two_taker_space([3.0, 5.0]);
        s.priority_sets(TieBreak::StrictOnly);
        assert_eq!(s.priority_set(0, 0), Some(vec![1]));
        assert_eq!(s.priority_set(0, 1), Some(vec![]));
    }

    #[test]
    fn equal_savings_with_state_id_tie_break() {
        let mut s = two_taker_space([4.0, 4.0]);
        s.priority_sets(TieBreak::StateId);
        let a = s.priority_set(0, 0).unwrap();
        let b = s.priority_set(0, 1).unwrap();
        assert!(a.is_empty() ^ b.is_empty());
        assert_eq!(b, vec![0]);
        for t in 0..2 {
            assert!(!s.priority_set(0, t).unwrap().contains(&t));
        }
    }

    #[test]
    fn equal_savings_strict_only() {
        let mut s = two_taker_space([4.0, 4.0]);
        s.priority_sets(TieBreak::StrictOnly);
        assert_eq!(s.priority_set(0, 0), Some(vec![]));
        assert_eq!(s.priority_set(0, 1), Some(vec![]));
    }

    #[test]
    fn single_taker_has_empty_priority_set() {
        let mut s = two_taker_space([4.0, 4.0]);
        s.seeker_matches = vec![vec![0]];
        s.priority_sets(TieBreak::StateId);
        assert_eq!(s.priority_set(0, 0), Some(vec![]));
        assert_eq!(s.priority_set(0, 1), None);
    }
}
