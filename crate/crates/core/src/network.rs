//! Road network: directed links with constant travel times, all-pairs
//! shortest distances and canonical shortest paths.
//!
//! Every shortest path is canonical: among equal-length paths the one with
//! the lexicographically smallest node-id sequence is chosen, so paths are
//! reproducible across runs. All pairs are precomputed at construction; the
//! networks this crate targets have at most a few thousand nodes.

use std::collections::HashMap;
use std::path::Path;

use thiserror::Error;

pub type NodeId = u32;
pub type LinkId = usize;

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("node {0} is not part of the network")]
    UnknownNode(NodeId),
    #[error("node {to} is unreachable from node {from}")]
    Unreachable { from: NodeId, to: NodeId },
    #[error("link {tail}->{head} has non-positive length {length}")]
    NonPositiveLength { tail: NodeId, head: NodeId, length: f64 },
    #[error("speed must be positive, got {0}")]
    NonPositiveSpeed(f64),
    #[error("duplicate node id {0}")]
    DuplicateNode(NodeId),
    #[error("grid needs at least one row and one column")]
    EmptyGrid,
    #[error("{path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Link {
    pub tail: NodeId,
    pub head: NodeId,
    pub length_m: f64,
}

/// Planar coordinates in meters; optional, only used for snapping trip-log
/// locations onto nodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coord {
    pub x_m: f64,
    pub y_m: f64,
}

const NO_LINK: u32 = u32::MAX;

#[derive(Debug, Clone)]
pub struct RoadNetwork {
    node_ids: Vec<NodeId>,
    index: HashMap<NodeId, usize>,
    coords: Option<Vec<Coord>>,
    links: Vec<Link>,
    out_links: Vec<Vec<LinkId>>,
    speed_mps: f64,
    // Row-major n*n tables; `dist` is infinite where unreachable.
    dist: Vec<f64>,
    next_link: Vec<u32>,
}

impl RoadNetwork {
    pub fn new(
        nodes: Vec<NodeId>,
        coords: Option<Vec<Coord>>,
        links: Vec<Link>,
        speed_mps: f64,
    ) -> Result<Self, NetworkError> {
        if !(speed_mps > 0.0) {
            return Err(NetworkError::NonPositiveSpeed(speed_mps));
        }
        let mut node_ids = nodes;
        let mut coords = coords;
        if let Some(c) = &coords {
            assert_eq!(c.len(), node_ids.len(), "one coordinate per node");
        }
        // Sort nodes by id so internal indices preserve id order; the
        // tie-break below relies on it.
        let mut order: Vec<usize> = (0..node_ids.len()).collect();
        order.sort_by_key(|&i| node_ids[i]);
        node_ids = order.iter().map(|&i| node_ids[i]).collect();
        if let Some(c) = coords.take() {
            coords = Some(order.iter().map(|&i| c[i]).collect());
        }
        let mut index = HashMap::with_capacity(node_ids.len());
        for (i, &id) in node_ids.iter().enumerate() {
            if index.insert(id, i).is_some() {
                return Err(NetworkError::DuplicateNode(id));
            }
        }
        let mut out_links = vec![Vec::new(); node_ids.len()];
        for (li, link) in links.iter().enumerate() {
            if !(link.length_m > 0.0) || !link.length_m.is_finite() {
                return Err(NetworkError::NonPositiveLength {
                    tail: link.tail,
                    head: link.head,
                    length: link.length_m,
                });
            }
            let t = *index.get(&link.tail).ok_or(NetworkError::UnknownNode(link.tail))?;
            index.get(&link.head).ok_or(NetworkError::UnknownNode(link.head))?;
            out_links[t].push(li);
        }
        for outs in &mut out_links {
            outs.sort_by(|&a, &b| {
                links[a]
                    .head
                    .cmp(&links[b].head)
                    .then(links[a].length_m.total_cmp(&links[b].length_m))
                    .then(a.cmp(&b))
            });
        }
        let mut net = RoadNetwork {
            node_ids,
            index,
            coords,
            links,
            out_links,
            speed_mps,
            dist: Vec::new(),
            next_link: Vec::new(),
        };
        net.precompute();
        Ok(net)
    }

    /// Bidirectional `rows x cols` grid; node id is `row * cols + col`.
    pub fn grid(rows: usize, cols: usize, link_length_m: f64, speed_mps: f64) -> Result<Self, NetworkError> {
        if rows == 0 || cols == 0 {
            return Err(NetworkError::EmptyGrid);
        }
        let id = |r: usize, c: usize| (r * cols + c) as NodeId;
        let mut nodes = Vec::with_capacity(rows * cols);
        let mut coords = Vec::with_capacity(rows * cols);
        let mut links = Vec::new();
        for r in 0..rows {
            for c in 0..cols {
                nodes.push(id(r, c));
                coords.push(Coord {
                    x_m: c as f64 * link_length_m,
                    y_m: r as f64 * link_length_m,
                });
                let mut both = |a: NodeId, b: NodeId| {
                    links.push(Link { tail: a, head: b, length_m: link_length_m });
                    links.push(Link { tail: b, head: a, length_m: link_length_m });
                };
                if c + 1 < cols {
                    both(id(r, c), id(r, c + 1));
                }
                if r + 1 < rows {
                    both(id(r, c), id(r + 1, c));
                }
            }
        }
        Self::new(nodes, Some(coords), links, speed_mps)
    }

    /// Reads a `node_id[,x_m,y_m]` nodes file and a `tail,head,length_m`
    /// links file.
    pub fn from_csv(nodes_path: &Path, links_path: &Path, speed_mps: f64) -> Result<Self, NetworkError> {
        let csv_err = |p: &Path| {
            let path = p.display().to_string();
            move |source| NetworkError::Csv { path: path.clone(), source }
        };
        let mut rdr = csv::Reader::from_path(nodes_path).map_err(csv_err(nodes_path))?;
        let headers = rdr.headers().map_err(csv_err(nodes_path))?.clone();
        let has_coords = headers.iter().any(|h| h == "x_m") && headers.iter().any(|h| h == "y_m");
        let mut nodes = Vec::new();
        let mut coords = Vec::new();
        for row in rdr.deserialize::<NodeRow>() {
            let row = row.map_err(csv_err(nodes_path))?;
            nodes.push(row.node_id);
            if has_coords {
                coords.push(Coord {
                    x_m: row.x_m.unwrap_or(0.0),
                    y_m: row.y_m.unwrap_or(0.0),
                });
            }
        }
        let mut rdr = csv::Reader::from_path(links_path).map_err(csv_err(links_path))?;
        let mut links = Vec::new();
        for row in rdr.deserialize::<LinkRow>() {
            let row = row.map_err(csv_err(links_path))?;
            links.push(Link {
                tail: row.tail,
                head: row.head,
                length_m: row.length_m,
            });
        }
        Self::new(nodes, has_coords.then_some(coords), links, speed_mps)
    }

    pub fn write_csv(&self, nodes_path: &Path, links_path: &Path) -> Result<(), NetworkError> {
        let csv_err = |p: &Path| {
            let path = p.display().to_string();
            move |source| NetworkError::Csv { path: path.clone(), source }
        };
        let mut w = csv::Writer::from_path(nodes_path).map_err(csv_err(nodes_path))?;
        match &self.coords {
            Some(coords) => {
                w.write_record(["node_id", "x_m", "y_m"]).map_err(csv_err(nodes_path))?;
                for (id, c) in self.node_ids.iter().zip(coords) {
                    w.write_record([id.to_string(), c.x_m.to_string(), c.y_m.to_string()])
                        .map_err(csv_err(nodes_path))?;
                }
            }
            None => {
                w.write_record(["node_id"]).map_err(csv_err(nodes_path))?;
                for id in &self.node_ids {
                    w.write_record([id.to_string()]).map_err(csv_err(nodes_path))?;
                }
            }
        }
        w.flush().map_err(|e| csv_err(nodes_path)(e.into()))?;
        let mut w = csv::Writer::from_path(links_path).map_err(csv_err(links_path))?;
        w.write_record(["tail", "head", "length_m"]).map_err(csv_err(links_path))?;
        for l in &self.links {
            w.write_record([l.tail.to_string(), l.head.to_string(), l.length_m.to_string()])
                .map_err(csv_err(links_path))?;
        }
        w.flush().map_err(|e| csv_err(links_path)(e.into()))?;
        Ok(())
    }

    fn precompute(&mut self) {
        let n = self.node_ids.len();
        let mut in_links: Vec<Vec<LinkId>> = vec![Vec::new(); n];
        for (li, l) in self.links.iter().enumerate() {
            in_links[self.index[&l.head]].push(li);
        }
        self.next_link = vec![NO_LINK; n * n];
        self.dist = vec![f64::INFINITY; n * n];
        let mut to_target = vec![f64::INFINITY; n];
        for target in 0..n {
            reverse_dijkstra(self, &in_links, target, &mut to_target);
            for from in 0..n {
                if from == target || !to_target[from].is_finite() {
                    continue;
                }
                let here = to_target[from];
                let tol = 1e-9 * here.max(1.0);
                // out_links are sorted by head id, so the first link on a
                // shortest path gives the lexicographically smallest path.
                for &li in &self.out_links[from] {
                    let link = &self.links[li];
                    let h = self.index[&link.head];
                    if (link.length_m + to_target[h] - here).abs() <= tol {
                        self.next_link[from * n + target] = li as u32;
                        break;
                    }
                }
            }
        }
        // Distances are the left-to-right sum along the canonical path, the
        // same arithmetic `path_length` uses.
        for from in 0..n {
            for target in 0..n {
                if from == target {
                    self.dist[from * n + target] = 0.0;
                    continue;
                }
                if self.next_link[from * n + target] == NO_LINK {
                    continue;
                }
                let mut total = 0.0;
                let mut at = from;
                while at != target {
                    let li = self.next_link[at * n + target] as usize;
                    total += self.links[li].length_m;
                    at = self.index[&self.links[li].head];
                }
                self.dist[from * n + target] = total;
            }
        }
    }

    fn idx(&self, id: NodeId) -> Result<usize, NetworkError> {
        self.index.get(&id).copied().ok_or(NetworkError::UnknownNode(id))
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.index.contains_key(&id)
    }

    pub fn node_ids(&self) -> &[NodeId] {
        &self.node_ids
    }

    pub fn node_count(&self) -> usize {
        self.node_ids.len()
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn link(&self, id: LinkId) -> &Link {
        &self.links[id]
    }

    pub fn speed_mps(&self) -> f64 {
        self.speed_mps
    }

    pub fn coord(&self, id: NodeId) -> Option<Coord> {
        let i = *self.index.get(&id)?;
        self.coords.as_ref().map(|c| c[i])
    }

    pub fn coords(&self) -> Option<impl Iterator<Item = (NodeId, Coord)> + '_> {
        self.coords
            .as_ref()
            .map(|c| self.node_ids.iter().copied().zip(c.iter().copied()))
    }

    /// Outgoing links of `node`, ordered by head id.
    pub fn out_links(&self, node: NodeId) -> Result<&[LinkId], NetworkError> {
        Ok(&self.out_links[self.idx(node)?])
    }

    pub fn travel_time_s(&self, link: LinkId) -> f64 {
        self.links[link].length_m / self.speed_mps
    }

    pub fn shortest_distance(&self, from: NodeId, to: NodeId) -> Result<f64, NetworkError> {
        let n = self.node_ids.len();
        let d = self.dist[self.idx(from)? * n + self.idx(to)?];
        if d.is_finite() {
            Ok(d)
        } else {
            Err(NetworkError::Unreachable { from, to })
        }
    }

    /// The canonical shortest path from `from` to `to` as a link sequence;
    /// empty when `from == to`.
    pub fn shortest_path_links(&self, from: NodeId, to: NodeId) -> Result<Vec<LinkId>, NetworkError> {
        let n = self.node_ids.len();
        let (mut at, target) = (self.idx(from)?, self.idx(to)?);
        let mut path = Vec::new();
        while at != target {
            let li = self.next_link[at * n + target];
            if li == NO_LINK {
                return Err(NetworkError::Unreachable { from, to });
            }
            path.push(li as LinkId);
            at = self.index[&self.links[li as usize].head];
        }
        Ok(path)
    }

    /// First link of the canonical path, `None` when already at `to`.
    pub fn next_link_towards(&self, from: NodeId, to: NodeId) -> Result<Option<LinkId>, NetworkError> {
        let n = self.node_ids.len();
        let (a, b) = (self.idx(from)?, self.idx(to)?);
        if a == b {
            return Ok(None);
        }
        match self.next_link[a * n + b] {
            NO_LINK => Err(NetworkError::Unreachable { from, to }),
            li => Ok(Some(li as LinkId)),
        }
    }

    pub fn path_length(&self, path: &[LinkId]) -> f64 {
        path.iter().fold(0.0, |acc, &li| acc + self.links[li].length_m)
    }

    pub fn path_nodes(&self, from: NodeId, path: &[LinkId]) -> Vec<NodeId> {
        let mut nodes = Vec::with_capacity(path.len() + 1);
        nodes.push(from);
        nodes.extend(path.iter().map(|&li| self.links[li].head));
        nodes
    }

    /// Closest node by Euclidean distance within `radius_m`, if coordinates
    /// are known.
    pub fn nearest_node(&self, at: Coord, radius_m: f64) -> Option<NodeId> {
        let coords = self.coords.as_ref()?;
        let mut best: Option<(f64, NodeId)> = None;
        for (id, c) in self.node_ids.iter().zip(coords) {
            let d = ((c.x_m - at.x_m).powi(2) + (c.y_m - at.y_m).powi(2)).sqrt();
            if d <= radius_m && best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, *id));
            }
        }
        best.map(|(_, id)| id)
    }
}

fn reverse_dijkstra(net: &RoadNetwork, in_links: &[Vec<LinkId>], target: usize, out: &mut [f64]) {
    use std::cmp::Reverse;
    use std::collections::BinaryHeap;

    #[derive(PartialEq)]
    struct Key(f64);
    impl Eq for Key {}
    impl PartialOrd for Key {
        fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
            Some(self.cmp(o))
        }
    }
    impl Ord for Key {
        fn cmp(&self, o: &Self) -> std::cmp::Ordering {
            self.0.total_cmp(&o.0)
        }
    }

    out.iter_mut().for_each(|d| *d = f64::INFINITY);
    out[target] = 0.0;
    let mut heap = BinaryHeap::new();
    heap.push(Reverse((Key(0.0), target)));
    while let Some(Reverse((Key(d), u))) = heap.pop() {
        if d > out[u] {
            continue;
        }
        for &li in &in_links[u] {
            let link = &net.links[li];
            let t = net.index[&link.tail];
            let nd = d + link.length_m;
            if nd < out[t] {
                out[t] = nd;
                heap.push(Reverse((Key(nd), t)));
            }
        }
    }
}

#[derive(serde::Deserialize)]
struct NodeRow {
    node_id: NodeId,
    x_m: Option<f64>,
    y_m: Option<f64>,
}

#[derive(serde::Deserialize)]
struct LinkRow {
    tail: NodeId,
    head: NodeId,
    length_m: f64,
}
