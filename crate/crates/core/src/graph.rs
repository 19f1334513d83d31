//! Interference graphs, clusterings and the dependence structure they induce.
//!
//! Units are indexed `0..n`. Every neighborhood handed out by this module is a
//! *closed* neighborhood: it always contains the unit itself.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("edge ({0}, {1}) references a unit outside 0..{2}")]
    OutOfRange(usize, usize, usize),
    #[error("self-loop on unit {0}")]
    SelfLoop(usize),
    #[error("unit {0} appears in more than one cluster")]
    Overlap(usize),
    #[error("unit {0} is not covered by any cluster")]
    Uncovered(usize),
    #[error("cluster {0} is empty")]
    EmptyCluster(usize),
    #[error("clustering covers {found} units but the graph has {expected}")]
    SizeMismatch { expected: usize, found: usize },
    #[error("{0} must be at least 1")]
    ZeroSize(&'static str),
}

/// Undirected interference graph over `n` units.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "GraphDoc", into = "GraphDoc")]
pub struct InterferenceGraph {
    /// Sorted open neighborhoods.
    adjacency: Vec<Vec<usize>>,
    /// Sorted closed neighborhoods (adjacency plus self).
    closed: Vec<Vec<usize>>,
}

#[derive(Serialize, Deserialize)]
struct GraphDoc {
    n: usize,
    edges: Vec<[usize; 2]>,
}

impl TryFrom<GraphDoc> for InterferenceGraph {
    type Error = GraphError;

    fn try_from(doc: GraphDoc) -> Result<Self, Self::Error> {
        let edges: Vec<(usize, usize)> = doc.edges.iter().map(|e| (e[0], e[1])).collect();
        InterferenceGraph::new(doc.n, &edges)
    }
}

impl From<InterferenceGraph> for GraphDoc {
    fn from(g: InterferenceGraph) -> Self {
        GraphDoc {
            n: g.n_units(),
            edges: g.edges().into_iter().map(|(i, j)| [i, j]).collect(),
        }
    }
}

impl InterferenceGraph {
    /// Builds a graph from an undirected edge list. Duplicate edges (in either
    /// orientation) are collapsed.
    pub fn new(n_units: usize, edges: &[(usize, usize)]) -> Result<Self, GraphError> {
        let mut adjacency = vec![BTreeSet::new(); n_units];
        for &(i, j) in edges {
            if i >= n_units || j >= n_units {
                return Err(GraphError::OutOfRange(i, j, n_units));
            }
            if i == j {
                return Err(GraphError::SelfLoop(i));
            }
            adjacency[i].insert(j);
            adjacency[j].insert(i);
        }
        let adjacency: Vec<Vec<usize>> = adjacency
            .into_iter()
            .map(|s| s.into_iter().collect())
            .collect();
        Ok(Self::from_adjacency(adjacency))
    }

    fn from_adjacency(adjacency: Vec<Vec<usize>>) -> Self {
        let closed = adjacency
            .iter()
            .enumerate()
            .map(|(i, nbrs)| {
                let mut c = nbrs.clone();
                let pos = c.partition_point(|&j| j < i);
                c.insert(pos, i);
                c
            })
            .collect();
        Self { adjacency, closed }
    }

    /// Graph with no edges.
    pub fn empty(n_units: usize) -> Self {
        Self::from_adjacency(vec![Vec::new(); n_units])
    }

    pub fn complete(n_units: usize) -> Self {
        let adjacency = (0..n_units)
            .map(|i| (0..n_units).filter(|&j| j != i).collect())
            .collect();
        Self::from_adjacency(adjacency)
    }

    /// Units on a line; `i` and `j` interfere when `0 < |i - j| <= h`.
    pub fn line(n_units: usize, h: usize) -> Self {
        let adjacency = (0..n_units)
            .map(|i| {
                let lo = i.saturating_sub(h);
                let hi = (i + h).min(n_units.saturating_sub(1));
                (lo..=hi).filter(|&j| j != i).collect()
            })
            .collect();
        Self::from_adjacency(adjacency)
    }

    /// `side x side` lattice (unit `row * side + col`) with an edge between
    /// distinct units whose Manhattan distance is at most `h`.
    pub fn lattice(side: usize, h: usize) -> Self {
        let n = side * side;
        let adjacency = (0..n)
            .map(|u| {
                let (r, c) = (u / side, u % side);
                let mut nbrs = Vec::new();
                let r_lo = r.saturating_sub(h);
                let r_hi = (r + h).min(side - 1);
                for rr in r_lo..=r_hi {
                    let rest = h - r.abs_diff(rr);
                    let c_lo = c.saturating_sub(rest);
                    let c_hi = (c + rest).min(side - 1);
                    for cc in c_lo..=c_hi {
                        let v = rr * side + cc;
                        if v != u {
                            nbrs.push(v);
                        }
                    }
                }
                nbrs
            })
            .collect();
        Self::from_adjacency(adjacency)
    }

    pub fn n_units(&self) -> usize {
        self.adjacency.len()
    }

    /// Open neighborhood of `i`, sorted.
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adjacency[i]
    }

    /// Closed neighborhood `N(i)`, sorted; always contains `i`.
    pub fn closed_neighborhood(&self, i: usize) -> &[usize] {
        &self.closed[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adjacency[i].len()
    }

    pub fn max_degree(&self) -> usize {
        self.adjacency.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Edge list with `i < j`, lexicographically sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.adjacency
            .iter()
            .enumerate()
            .flat_map(|(i, nbrs)| nbrs.iter().filter(move |&&j| j > i).map(move |&j| (i, j)))
            .collect()
    }

    /// BFS hop distances from `source`; `None` for unreachable units.
    pub fn hop_distances(&self, source: usize) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.n_units()];
        let mut queue = VecDeque::new();
        dist[source] = Some(0);
        queue.push_back(source);
        while let Some(u) = queue.pop_front() {
            let d = dist[u].unwrap_or(0);
            for &v in &self.adjacency[u] {
                if dist[v].is_none() {
                    dist[v] = Some(d + 1);
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    /// `|N_r(i)|` for `r = 0, 1, ...` up to the eccentricity of `i` within
    /// its connected component (after which the balls stop growing).
    pub fn ball_sizes(&self, i: usize) -> Vec<usize> {
        let dist = self.hop_distances(i);
        let ecc = dist.iter().flatten().copied().max().unwrap_or(0);
        let mut counts = vec![0usize; ecc + 1];
        for d in dist.into_iter().flatten() {
            counts[d] += 1;
        }
        counts
            .iter()
            .scan(0usize, |acc, &c| {
                *acc += c;
                Some(*acc)
            })
            .collect()
    }
}

/// A partition of the units into disjoint nonempty clusters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "ClusteringDoc", into = "ClusteringDoc")]
pub struct Clustering {
    assignment: Vec<usize>,
    clusters: Vec<Vec<usize>>,
}

#[derive(Serialize, Deserialize)]
struct ClusteringDoc {
    clusters: Vec<Vec<usize>>,
}

impl TryFrom<ClusteringDoc> for Clustering {
    type Error = GraphError;

    fn try_from(doc: ClusteringDoc) -> Result<Self, Self::Error> {
        let n = doc.clusters.iter().map(Vec::len).sum();
        Clustering::from_clusters(n, doc.clusters)
    }
}

impl From<Clustering> for ClusteringDoc {
    fn from(c: Clustering) -> Self {
        ClusteringDoc {
            clusters: c.clusters,
        }
    }
}

impl Clustering {
    /// Validates an explicit list of clusters over units `0..n_units`.
    /// Cluster ids are list positions.
    pub fn from_clusters(n_units: usize, clusters: Vec<Vec<usize>>) -> Result<Self, GraphError> {
        let mut assignment = vec![usize::MAX; n_units];
        let mut clusters = clusters;
        for (c, members) in clusters.iter_mut().enumerate() {
            if members.is_empty() {
                return Err(GraphError::EmptyCluster(c));
            }
            members.sort_unstable();
            for &u in members.iter() {
                if u >= n_units {
                    return Err(GraphError::OutOfRange(u, u, n_units));
                }
                if assignment[u] != usize::MAX {
                    return Err(GraphError::Overlap(u));
                }
                assignment[u] = c;
            }
        }
        if let Some(u) = assignment.iter().position(|&c| c == usize::MAX) {
            return Err(GraphError::Uncovered(u));
        }
        Ok(Self {
            assignment,
            clusters,
        })
    }

    /// Builds a clustering from arbitrary labels. Ids are compacted in order
    /// of first appearance.
    pub fn from_labels(labels: &[usize]) -> Self {
        let mut remap = BTreeMap::new();
        let mut clusters: Vec<Vec<usize>> = Vec::new();
        let assignment = labels
            .iter()
            .enumerate()
            .map(|(u, &label)| {
                let id = *remap.entry(label).or_insert_with(|| {
                    clusters.push(Vec::new());
                    clusters.len() - 1
                });
                clusters[id].push(u);
                id
            })
            .collect();
        Self {
            assignment,
            clusters,
        }
    }

    /// Every unit in its own cluster.
    pub fn singleton(n_units: usize) -> Self {
        Self {
            assignment: (0..n_units).collect(),
            clusters: (0..n_units).map(|u| vec![u]).collect(),
        }
    }

    /// All units in one cluster.
    pub fn whole(n_units: usize) -> Self {
        Self {
            assignment: vec![0; n_units],
            clusters: if n_units == 0 {
                Vec::new()
            } else {
                vec![(0..n_units).collect()]
            },
        }
    }

    /// Axis-aligned `s x s` tiles of a `side x side` lattice; tiles on the
    /// right and bottom edges are clipped.
    pub fn lattice_uniform(side: usize, s: usize) -> Result<Self, GraphError> {
        if s == 0 {
            return Err(GraphError::ZeroSize("block side"));
        }
        let tiles_per_row = side.div_ceil(s);
        let labels: Vec<usize> = (0..side * side)
            .map(|u| (u / side / s) * tiles_per_row + (u % side) / s)
            .collect();
        Ok(Self::from_labels(&labels))
    }

    /// Contiguous segments of `width` units on a line (the last may be shorter).
    pub fn line_segments(n_units: usize, width: usize) -> Result<Self, GraphError> {
        if width == 0 {
            return Err(GraphError::ZeroSize("segment width"));
        }
        let labels: Vec<usize> = (0..n_units).map(|u| u / width).collect();
        Ok(Self::from_labels(&labels))
    }

    /// 1-hop-max random clustering: every unit draws an independent uniform
    /// value and joins the unit holding the largest value in its closed
    /// neighborhood.
    pub fn one_hop_max<R: Rng + ?Sized>(g: &InterferenceGraph, rng: &mut R) -> Self {
        let values: Vec<f64> = (0..g.n_units()).map(|_| rng.random::<f64>()).collect();
        Self::one_hop_max_with_values(g, &values)
    }

    /// Deterministic core of [`Clustering::one_hop_max`]. Ties go to the lower
    /// unit index.
    pub fn one_hop_max_with_values(g: &InterferenceGraph, values: &[f64]) -> Self {
        assert_eq!(values.len(), g.n_units(), "one value per unit");
        let labels: Vec<usize> = (0..g.n_units())
            .map(|i| {
                let mut best = i;
                for &j in g.closed_neighborhood(i) {
                    if values[j] > values[best] || (values[j] == values[best] && j < best) {
                        best = j;
                    }
                }
                best
            })
            .collect();
        Self::from_labels(&labels)
    }

    pub fn n_units(&self) -> usize {
        self.assignment.len()
    }

    pub fn n_clusters(&self) -> usize {
        self.clusters.len()
    }

    pub fn cluster_of(&self, unit: usize) -> usize {
        self.assignment[unit]
    }

    pub fn clusters(&self) -> &[Vec<usize>] {
        &self.clusters
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn check_compatible(&self, g: &InterferenceGraph) -> Result<(), GraphError> {
        if self.n_units() != g.n_units() {
            return Err(GraphError::SizeMismatch {
                expected: g.n_units(),
                found: self.n_units(),
            });
        }
        Ok(())
    }

    /// Clusters touching `N(i)` with the number of neighborhood members in each,
    /// ordered by cluster id.
    pub fn neighborhood_weights(&self, g: &InterferenceGraph, i: usize) -> Vec<(usize, usize)> {
        let mut weights = BTreeMap::new();
        for &j in g.closed_neighborhood(i) {
            *weights.entry(self.assignment[j]).or_insert(0usize) += 1;
        }
        weights.into_iter().collect()
    }

    /// Cluster degree: number of clusters intersecting `N(i)`.
    pub fn cluster_degree(&self, g: &InterferenceGraph, i: usize) -> usize {
        let mut ids: Vec<usize> = g
            .closed_neighborhood(i)
            .iter()
            .map(|&j| self.assignment[j])
            .collect();
        ids.sort_unstable();
        ids.dedup();
        ids.len()
    }
}

/// Unordered pairs `(i, i')`, `i <= i'`, whose neighborhoods touch a common
/// cluster. All self-pairs are present.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DependenceEdges {
    n_units: usize,
    pairs: BTreeSet<(usize, usize)>,
}

impl DependenceEdges {
    pub fn new(g: &InterferenceGraph, clustering: &Clustering) -> Self {
        let mut pairs = BTreeSet::new();
        for i in 0..g.n_units() {
            pairs.insert((i, i));
        }
        for members in clustering.clusters() {
            // N(i) meets C iff i is within one hop of some member of C.
            let mut touching: Vec<usize> = members
                .iter()
                .flat_map(|&u| g.closed_neighborhood(u).iter().copied())
                .collect();
            touching.sort_unstable();
            touching.dedup();
            for (a, &i) in touching.iter().enumerate() {
                for &j in &touching[a..] {
                    pairs.insert((i, j));
                }
            }
        }
        Self {
            n_units: g.n_units(),
            pairs,
        }
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.pairs.contains(&(i.min(j), i.max(j)))
    }

    /// Number of unordered pairs, self-pairs included.
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Number of ordered pairs `(i, i')` with `i` dependent on `i'`.
    pub fn ordered_len(&self) -> usize {
        2 * self.pairs.len() - self.n_units
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.pairs.iter().copied()
    }

    /// Sum of `f(i, i')` over ordered dependent pairs.
    pub fn ordered_sum(&self, mut f: impl FnMut(usize, usize) -> f64) -> f64 {
        self.pairs
            .iter()
            .map(|&(i, j)| if i == j { f(i, i) } else { f(i, j) + f(j, i) })
            .sum()
    }
}

/// Smallest `kappa >= 1` with `|N_{r+1}(i)| <= kappa |N_r(i)|` for all
/// `r >= 1` and all units. Balls saturate at the eccentricity, so the maximum
/// over finitely many ratios is exact.
pub fn restricted_growth_coefficient(g: &InterferenceGraph) -> f64 {
    (0..g.n_units())
        .flat_map(|i| {
            let balls = g.ball_sizes(i);
            (1..balls.len().saturating_sub(1))
                .map(|r| balls[r + 1] as f64 / balls[r] as f64)
                .collect::<Vec<_>>()
        })
        .fold(1.0, f64::max)
}
