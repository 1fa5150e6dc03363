//! Fat-tree backhaul: base stations grouped into rings, rings under
//! aggregation pods, pods under core switches. The serving DAG records which
//! nodes may serve a base station: the station itself or any ancestor.

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::fmt;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Maximum number of children grouped under one parent.
pub const GROUP_SIZE: usize = 10;
/// Number of uplinks per ring and per pod.
pub const FAN_OUT: usize = 2;

const KMEANS_MAX_ITERATIONS: usize = 50;

#[derive(Debug, Error)]
pub enum TopologyError {
    #[error("topology needs at least one base station")]
    Empty,
    #[error("duplicate node id `{0}`")]
    DuplicateId(String),
    #[error("unknown node `{0}`")]
    NotFound(String),
    #[error("`{node}` is not an ancestor of `{bs}`")]
    NotAncestor { bs: String, node: String },
    #[error("invalid topology: {0}")]
    Invalid(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = TopologyError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    BaseStation,
    Ring,
    Aggregation,
    Core,
}

impl Level {
    pub const ALL: [Level; 4] = [Level::BaseStation, Level::Ring, Level::Aggregation, Level::Core];

    pub fn rank(self) -> u8 {
        self as u8
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Level::BaseStation => "bs",
            Level::Ring => "ring",
            Level::Aggregation => "agg",
            Level::Core => "core",
        }
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Dense node handle, valid for the topology that issued it. Ordering follows
/// construction order: base stations first, then rings, pods and cores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: NodeId,
    pub name: String,
    pub level: Level,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone)]
pub struct Topology {
    nodes: Vec<Node>,
    by_name: HashMap<String, NodeId>,
    parents: Vec<Vec<NodeId>>,
    children: Vec<Vec<NodeId>>,
    ancestors: Vec<Vec<NodeId>>,
    g_edges: Vec<(NodeId, NodeId)>,
}

impl PartialEq for Topology {
    fn eq(&self, other: &Self) -> bool {
        self.nodes == other.nodes && self.parents == other.parents && self.g_edges == other.g_edges
    }
}

fn dist(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - b.0).hypot(a.1 - b.1)
}

fn centroid(points: impl Iterator<Item = (f64, f64)>) -> (f64, f64) {
    let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
    for (x, y) in points {
        sx += x;
        sy += y;
        n += 1;
    }
    (sx / n as f64, sy / n as f64)
}

/// Groups `points` into `ceil(n / capacity)` clusters of at most `capacity`
/// members each. Seeds are spread evenly over `points` in their given order;
/// assignment is a greedy nearest-first fill respecting capacity.
fn capacitated_kmeans(points: &[(f64, f64)], capacity: usize) -> Vec<Vec<usize>> {
    let n = points.len();
    let k = n.div_ceil(capacity);
    let mut centroids: Vec<(f64, f64)> = (0..k).map(|i| points[i * n / k]).collect();
    let mut assignment = vec![usize::MAX; n];

    for _ in 0..KMEANS_MAX_ITERATIONS {
        let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(n * k);
        for (p, &point) in points.iter().enumerate() {
            for (c, &center) in centroids.iter().enumerate() {
                pairs.push((dist(point, center), p, c));
            }
        }
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

        let mut next = vec![usize::MAX; n];
        let mut load = vec![0usize; k];
        let mut placed = 0;
        for (_, p, c) in pairs {
            if next[p] != usize::MAX || load[c] == capacity {
                continue;
            }
            next[p] = c;
            load[c] += 1;
            placed += 1;
            if placed == n {
                break;
            }
        }

        let stable = next == assignment;
        assignment = next;
        for (c, center) in centroids.iter_mut().enumerate() {
            if load[c] > 0 {
                *center = centroid((0..n).filter(|&p| assignment[p] == c).map(|p| points[p]));
            }
        }
        if stable {
            break;
        }
    }

    let mut groups = vec![Vec::new(); k];
    for (p, &c) in assignment.iter().enumerate() {
        groups[c].push(p);
    }
    groups.retain(|g| !g.is_empty());
    groups
}

/// The `own` group parent plus the nearest other candidates, up to `FAN_OUT`
/// in total. Ties go to the lower index.
fn uplinks(position: (f64, f64), own: usize, candidates: &[(f64, f64)]) -> Vec<usize> {
    let mut others: Vec<(f64, usize)> = candidates
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != own)
        .map(|(i, &c)| (dist(position, c), i))
        .collect();
    others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut out = vec![own];
    out.extend(others.into_iter().take(FAN_OUT - 1).map(|(_, i)| i));
    out
}

/// Input row for a node when assembling a topology from parts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub id: String,
    pub level: Level,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TopologyFile {
    nodes: Vec<NodeSpec>,
    f_edges: Vec<(String, String)>,
    g_edges: Vec<(String, String)>,
}

impl Topology {
    /// Builds the fat tree over the given base-station positions.
    ///
    /// Base stations are clustered geographically into rings of at most ten,
    /// rings into pods of at most ten and pods into cores of at most ten. Each
    /// ring links to its own pod and the nearest other pod; each pod to its own
    /// core and the nearest other core. Non-BS positions are the centroids of
    /// their grouped children.
    pub fn build_fat_tree(bs_positions: &[(String, f64, f64)]) -> Result<Topology> {
        if bs_positions.is_empty() {
            return Err(TopologyError::Empty);
        }
        let mut specs: Vec<NodeSpec> = bs_positions
            .iter()
            .map(|(id, x, y)| NodeSpec {
                id: id.clone(),
                level: Level::BaseStation,
                x: *x,
                y: *y,
            })
            .collect();

        // seeds are drawn in sorted-id order
        let mut order: Vec<usize> = (0..specs.len()).collect();
        order.sort_by(|&a, &b| specs[a].id.cmp(&specs[b].id));

        let mut f_edges: Vec<(usize, usize)> = Vec::new();
        let mut layer: Vec<usize> = order;
        for level in [Level::Ring, Level::Aggregation, Level::Core] {
            let points: Vec<(f64, f64)> = layer.iter().map(|&i| (specs[i].x, specs[i].y)).collect();
            let groups = capacitated_kmeans(&points, GROUP_SIZE);
            let first = specs.len();
            let mut group_of = vec![0usize; layer.len()];
            for (g, members) in groups.iter().enumerate() {
                let (x, y) = centroid(members.iter().map(|&m| points[m]));
                specs.push(NodeSpec {
                    id: format!("{}-{g:03}", level.as_str()),
                    level,
                    x,
                    y,
                });
                for &m in members {
                    group_of[m] = g;
                }
            }
            let parent_positions: Vec<(f64, f64)> = specs[first..].iter().map(|s| (s.x, s.y)).collect();
            for (m, &child) in layer.iter().enumerate() {
                let parents = if level == Level::Ring {
                    vec![group_of[m]]
                } else {
                    uplinks(points[m], group_of[m], &parent_positions)
                };
                for p in parents {
                    f_edges.push((first + p, child));
                }
            }
            layer = (first..specs.len()).collect();
        }

        let names = |(p, c): (usize, usize)| (specs[p].id.clone(), specs[c].id.clone());
        let f_edges: Vec<(String, String)> = f_edges.into_iter().map(names).collect();
        Topology::from_parts(specs, f_edges, None)
    }

    /// Assembles and validates a layered serving DAG. When `g_edges` is
    /// `None`, the physical graph is the undirected F edges plus a full mesh
    /// among cores.
    pub fn from_parts(
        specs: Vec<NodeSpec>,
        f_edges: Vec<(String, String)>,
        g_edges: Option<Vec<(String, String)>>,
    ) -> Result<Topology> {
        if !specs.iter().any(|s| s.level == Level::BaseStation) {
            return Err(TopologyError::Empty);
        }
        let mut by_name = HashMap::with_capacity(specs.len());
        let mut nodes = Vec::with_capacity(specs.len());
        for (i, spec) in specs.into_iter().enumerate() {
            if !(spec.x.is_finite() && spec.y.is_finite()) {
                return Err(TopologyError::Invalid(format!("non-finite position for `{}`", spec.id)));
            }
            let id = NodeId(i as u32);
            if by_name.insert(spec.id.clone(), id).is_some() {
                return Err(TopologyError::DuplicateId(spec.id));
            }
            nodes.push(Node {
                id,
                name: spec.id,
                level: spec.level,
                x: spec.x,
                y: spec.y,
            });
        }
        let lookup = |name: &str| {
            by_name
                .get(name)
                .copied()
                .ok_or_else(|| TopologyError::NotFound(name.to_string()))
        };

        let n = nodes.len();
        let mut parents = vec![Vec::new(); n];
        let mut children = vec![Vec::new(); n];
        let mut seen = BTreeSet::new();
        for (p, c) in &f_edges {
            let (p, c) = (lookup(p)?, lookup(c)?);
            let (pl, cl) = (nodes[p.index()].level, nodes[c.index()].level);
            if pl.rank() != cl.rank() + 1 {
                return Err(TopologyError::Invalid(format!(
                    "edge {} -> {} does not connect adjacent levels",
                    nodes[p.index()].name,
                    nodes[c.index()].name
                )));
            }
            if !seen.insert((p, c)) {
                return Err(TopologyError::Invalid(format!(
                    "duplicate edge {} -> {}",
                    nodes[p.index()].name,
                    nodes[c.index()].name
                )));
            }
            parents[c.index()].push(p);
            children[p.index()].push(c);
        }
        for node in &nodes {
            let i = node.id.index();
            parents[i].sort();
            children[i].sort();
            if node.level != Level::Core && parents[i].is_empty() {
                return Err(TopologyError::Invalid(format!("`{}` has no parent", node.name)));
            }
            if node.level != Level::BaseStation && children[i].is_empty() {
                return Err(TopologyError::Invalid(format!("`{}` has no children", node.name)));
            }
        }

        let mut edge_set: BTreeSet<(NodeId, NodeId)> = seen.iter().map(|&(p, c)| (p.min(c), p.max(c))).collect();
        match g_edges {
            None => {
                let cores: Vec<NodeId> = nodes.iter().filter(|n| n.level == Level::Core).map(|n| n.id).collect();
                for (i, &a) in cores.iter().enumerate() {
                    for &b in &cores[i + 1..] {
                        edge_set.insert((a, b));
                    }
                }
            }
            Some(g) => {
                let mut given = BTreeSet::new();
                for (a, b) in &g {
                    let (a, b) = (lookup(a)?, lookup(b)?);
                    if a == b {
                        return Err(TopologyError::Invalid(format!(
                            "self-loop at `{}`",
                            nodes[a.index()].name
                        )));
                    }
                    given.insert((a.min(b), a.max(b)));
                }
                if let Some(&(a, b)) = edge_set.difference(&given).next() {
                    return Err(TopologyError::Invalid(format!(
                        "serving edge {} - {} missing from physical graph",
                        nodes[a.index()].name,
                        nodes[b.index()].name
                    )));
                }
                edge_set = given;
            }
        }

        let ancestors = (0..n)
            .map(|i| {
                let mut found = BTreeSet::from([NodeId(i as u32)]);
                let mut queue = VecDeque::from([NodeId(i as u32)]);
                while let Some(v) = queue.pop_front() {
                    for &p in &parents[v.index()] {
                        if found.insert(p) {
                            queue.push_back(p);
                        }
                    }
                }
                let mut out: Vec<NodeId> = found.into_iter().collect();
                out.sort_by_key(|id| (nodes[id.index()].level, *id));
                out
            })
            .collect();

        Ok(Topology {
            nodes,
            by_name,
            parents,
            children,
            ancestors,
            g_edges: edge_set.into_iter().collect(),
        })
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id.index()]
    }

    pub fn name(&self, id: NodeId) -> &str {
        &self.nodes[id.index()].name
    }

    pub fn level(&self, id: NodeId) -> Level {
        self.nodes[id.index()].level
    }

    pub fn id(&self, name: &str) -> Result<NodeId> {
        self.by_name
            .get(name)
            .copied()
            .ok_or_else(|| TopologyError::NotFound(name.to_string()))
    }

    pub fn base_stations(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes_at(Level::BaseStation)
    }

    pub fn nodes_at(&self, level: Level) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes.iter().filter(move |n| n.level == level).map(|n| n.id)
    }

    pub fn count_at(&self, level: Level) -> usize {
        self.nodes_at(level).count()
    }

    pub fn parents(&self, id: NodeId) -> &[NodeId] {
        &self.parents[id.index()]
    }

    pub fn children(&self, id: NodeId) -> &[NodeId] {
        &self.children[id.index()]
    }

    pub fn is_parent(&self, parent: NodeId, child: NodeId) -> bool {
        self.parents[child.index()].binary_search(&parent).is_ok()
    }

    /// Parent→child serving edges.
    pub fn f_edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.parents
            .iter()
            .enumerate()
            .flat_map(|(c, ps)| ps.iter().map(move |&p| (p, NodeId(c as u32))))
    }

    /// Undirected physical links, each listed once with the lower id first.
    pub fn g_edges(&self) -> &[(NodeId, NodeId)] {
        &self.g_edges
    }

    /// The node itself and everything reachable through parent links, ordered
    /// by level and then id.
    pub fn ancestors(&self, id: NodeId) -> &[NodeId] {
        &self.ancestors[id.index()]
    }

    pub fn ancestors_of(&self, name: &str) -> Result<Vec<&str>> {
        let id = self.id(name)?;
        Ok(self.ancestors(id).iter().map(|&a| self.name(a)).collect())
    }

    pub fn is_ancestor(&self, node: NodeId, of: NodeId) -> bool {
        self.ancestors[of.index()].contains(&node)
    }

    pub fn distance(&self, a: NodeId, b: NodeId) -> f64 {
        let (a, b) = (self.node(a), self.node(b));
        dist((a.x, a.y), (b.x, b.y))
    }

    pub fn distance_between(&self, a: &str, b: &str) -> Result<f64> {
        Ok(self.distance(self.id(a)?, self.id(b)?))
    }

    /// Backhaul hops from `bs` up to `node`, which must be one of its ancestors.
    pub fn hop_count(&self, bs: NodeId, node: NodeId) -> Result<u32> {
        if !self.is_ancestor(node, bs) {
            return Err(TopologyError::NotAncestor {
                bs: self.name(bs).to_string(),
                node: self.name(node).to_string(),
            });
        }
        Ok(u32::from(self.level(node).rank() - self.level(bs).rank()))
    }

    pub fn to_json_writer(&self, writer: impl Write) -> Result<()> {
        let file = TopologyFile {
            nodes: self
                .nodes
                .iter()
                .map(|n| NodeSpec {
                    id: n.name.clone(),
                    level: n.level,
                    x: n.x,
                    y: n.y,
                })
                .collect(),
            f_edges: self
                .f_edges()
                .map(|(p, c)| (self.name(p).to_string(), self.name(c).to_string()))
                .collect(),
            g_edges: self
                .g_edges
                .iter()
                .map(|&(a, b)| (self.name(a).to_string(), self.name(b).to_string()))
                .collect(),
        };
        serde_json::to_writer_pretty(writer, &file)?;
        Ok(())
    }

    pub fn from_json_reader(reader: impl Read) -> Result<Topology> {
        let file: TopologyFile = serde_json::from_reader(reader)?;
        Topology::from_parts(file.nodes, file.f_edges, Some(file.g_edges))
    }
}

#[derive(Debug, Deserialize)]
struct PositionRow {
    bs_id: String,
    x: f64,
    y: f64,
}

/// Reads `bs_id,x,y` rows.
pub fn read_positions_csv(reader: impl Read) -> Result<Vec<(String, f64, f64)>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    rdr.deserialize::<PositionRow>()
        .map(|row| row.map(|r| (r.bs_id, r.x, r.y)).map_err(TopologyError::from))
        .collect()
}

pub fn write_positions_csv(positions: &[(String, f64, f64)], writer: impl Write) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["bs_id", "x", "y"])?;
    for (id, x, y) in positions {
        wtr.write_record([id.clone(), x.to_string(), y.to_string()])?;
    }
    wtr.flush().map_err(csv::Error::from)?;
    Ok(())
}
