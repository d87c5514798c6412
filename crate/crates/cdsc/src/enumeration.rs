//! Enumeration of all constrained dominant sets of a graph.
//!
//! Extraction never removes nodes from the graph: after each cluster the
//! constraint set is shrunk by the clustered members and the solve reruns,
//! so a node may legitimately belong to several clusters. Multiply-assigned
//! nodes are resolved afterwards by cardinality-weighted membership.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::graph::AffinityMatrix;
use crate::simplex::SimplexVector;
use crate::solver::{fast_cdsc, SolverConfig};

/// Minimum share of a cluster's mass a node must carry to count as a
/// member. KKT points of weakly-coupled subgraphs hold trace mass on nodes
/// that are not meaningfully part of the cluster; counting those as members
/// would mark them as already clustered and, worse, glue unrelated tracks
/// together during co-membership merging.
pub const MEMBERSHIP_FLOOR: f64 = 1e-3;

/// One extracted constrained dominant set.
#[derive(Debug, Clone)]
pub struct Cluster {
    /// Members, ascending vertex order.
    pub support: Vec<usize>,
    /// Per-member score, parallel to `support`; sums to 1.
    pub membership: Vec<f64>,
    pub objective: f64,
    /// Identifier of the constraint seed this cluster was extracted under.
    pub constraint_tag: u32,
    /// Set when the inner solve hit its iteration cap before certifying
    /// optimality. The cluster is kept; downstream refinement may still
    /// dissolve it.
    pub warning: bool,
}

impl Cluster {
    pub fn membership_of(&self, vertex: usize) -> Option<f64> {
        self.support
            .iter()
            .position(|&v| v == vertex)
            .map(|pos| self.membership[pos])
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    fn from_distribution(x: &SimplexVector, objective: f64, tag: u32, warning: bool) -> Cluster {
        let support = x.support();
        let mut membership: Vec<f64> = support.iter().map(|&i| x.get(i)).collect();
        SimplexVector::renormalize(&mut membership);
        let mut pairs: Vec<(usize, f64)> = support
            .into_iter()
            .zip(membership)
            .filter(|(_, d)| *d >= MEMBERSHIP_FLOOR)
            .collect();
        if pairs.is_empty() {
            // cannot happen for a normalized distribution at desk scale,
            // but keep the heaviest entry rather than an empty cluster
            let best = x
                .entries()
                .iter()
                .enumerate()
                .max_by(|(_, a), (_, b)| a.partial_cmp(b).unwrap())
                .map(|(i, _)| i)
                .unwrap_or(0);
            pairs.push((best, 1.0));
        }
        let mut membership: Vec<f64> = pairs.iter().map(|(_, d)| *d).collect();
        SimplexVector::renormalize(&mut membership);
        Cluster {
            support: pairs.into_iter().map(|(v, _)| v).collect(),
            membership,
            objective,
            constraint_tag: tag,
            warning,
        }
    }
}

/// Ordered clusters from one or more enumeration runs, grouped by the
/// constraint tag they were extracted under.
#[derive(Debug, Clone, Default)]
pub struct ClusterCollection {
    pub clusters: Vec<Cluster>,
    /// Every vertex that appeared in some constraint seed.
    constrained: BTreeSet<usize>,
}

impl ClusterCollection {
    pub fn new() -> Self {
        ClusterCollection::default()
    }

    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    pub fn constrained_vertices(&self) -> impl Iterator<Item = usize> + '_ {
        self.constrained.iter().copied()
    }

    /// Cluster indices extracted under `tag`, in extraction order.
    pub fn by_tag(&self, tag: u32) -> Vec<usize> {
        self.clusters
            .iter()
            .enumerate()
            .filter(|(_, c)| c.constraint_tag == tag)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn extend_from(&mut self, other: ClusterCollection) {
        self.clusters.extend(other.clusters);
        self.constrained.extend(other.constrained);
    }

    /// Line-oriented text form: "tag objective v0:d0 v1:d1 ...".
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for c in &self.clusters {
            let _ = write!(out, "{} {}", c.constraint_tag, c.objective);
            for (v, d) in c.support.iter().zip(c.membership.iter()) {
                let _ = write!(out, " {}:{}", v, d);
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str, path: &str) -> Result<Self> {
        let mut coll = ClusterCollection::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let mut fields = line.split_whitespace();
            let tag: u32 = fields
                .next()
                .ok_or_else(|| Error::parse(path, lineno + 1, "missing tag"))?
                .parse()
                .map_err(|e: std::num::ParseIntError| Error::parse(path, lineno + 1, e.to_string()))?;
            let objective: f64 = fields
                .next()
                .ok_or_else(|| Error::parse(path, lineno + 1, "missing objective"))?
                .parse()
                .map_err(|e: std::num::ParseFloatError| Error::parse(path, lineno + 1, e.to_string()))?;
            let mut support = Vec::new();
            let mut membership = Vec::new();
            for pair in fields {
                let (v, d) = pair
                    .split_once(':')
                    .ok_or_else(|| Error::parse(path, lineno + 1, format!("bad member '{}'", pair)))?;
                support.push(v.parse().map_err(|e: std::num::ParseIntError| {
                    Error::parse(path, lineno + 1, e.to_string())
                })?);
                membership.push(d.parse().map_err(|e: std::num::ParseFloatError| {
                    Error::parse(path, lineno + 1, e.to_string())
                })?);
            }
            if support.is_empty() {
                return Err(Error::parse(path, lineno + 1, "cluster has no members"));
            }
            coll.clusters.push(Cluster {
                support,
                membership,
                objective,
                constraint_tag: tag,
                warning: false,
            });
        }
        Ok(coll)
    }
}

/// Extracts constrained dominant sets until every member of the seed
/// constraint set has been clustered. The graph is never shrunk; only the
/// constraint set is. `tag` labels the extracted clusters.
pub fn enumerate_clusters_tagged(
    a: &AffinityMatrix,
    seed: &[usize],
    tag: u32,
    cfg: &SolverConfig,
) -> Result<ClusterCollection> {
    if seed.is_empty() {
        return Err(Error::Invalid("constraint seed must be nonempty".into()));
    }
    let mut remaining: BTreeSet<usize> = seed.iter().copied().collect();
    if let Some(&max) = remaining.iter().next_back() {
        if max >= a.len() {
            return Err(Error::Dimension(format!(
                "seed vertex {} out of range for n = {}",
                max,
                a.len()
            )));
        }
    }
    let mut coll = ClusterCollection::new();
    coll.constrained = remaining.clone();

    while !remaining.is_empty() {
        let q: Vec<usize> = remaining.iter().copied().collect();
        let report = fast_cdsc(a, &q, cfg)?;
        let cluster =
            Cluster::from_distribution(&report.distribution, report.objective, tag, !report.converged);
        let clustered: Vec<usize> = cluster
            .support
            .iter()
            .copied()
            .filter(|v| remaining.contains(v))
            .collect();
        if clustered.is_empty() {
            // cannot happen for a converged solve (the support theorem
            // guarantees intersection with q); peel one constraint vertex
            // as a flagged singleton so the loop always terminates
            let v = *remaining.iter().next().expect("nonempty");
            remaining.remove(&v);
            coll.clusters.push(Cluster {
                support: vec![v],
                membership: vec![1.0],
                objective: 0.0,
                constraint_tag: tag,
                warning: true,
            });
            continue;
        }
        for v in clustered {
            remaining.remove(&v);
        }
        coll.clusters.push(cluster);
    }
    Ok(coll)
}

/// [`enumerate_clusters_tagged`] with tag 0.
pub fn enumerate_clusters(
    a: &AffinityMatrix,
    seed: &[usize],
    cfg: &SolverConfig,
) -> Result<ClusterCollection> {
    enumerate_clusters_tagged(a, seed, 0, cfg)
}

/// The solution-listing form of enumeration: all local solutions whose
/// supports jointly exhaust the constraint set, as full-length membership
/// distributions in extraction order.
pub fn find_constrained_sets(
    q: &[usize],
    a: &AffinityMatrix,
    cfg: &SolverConfig,
) -> Result<Vec<SimplexVector>> {
    let coll = enumerate_clusters(a, q, cfg)?;
    Ok(coll
        .clusters
        .iter()
        .map(|c| {
            let mut entries = vec![0.0; a.len()];
            for (v, d) in c.support.iter().zip(c.membership.iter()) {
                entries[*v] = *d;
            }
            SimplexVector::from_raw(entries)
        })
        .collect())
}

/// Resolves multiply-assigned vertices: each covered vertex goes to the
/// containing cluster maximizing cardinality times membership score, with
/// ties won by the earlier-extracted cluster. Errors if some vertex of the
/// constraint universe is covered by no cluster.
pub fn assign_unique(collection: &ClusterCollection) -> Result<Vec<(usize, usize)>> {
    let mut best: std::collections::BTreeMap<usize, (f64, usize)> = Default::default();
    for (ci, cluster) in collection.clusters.iter().enumerate() {
        let card = cluster.len() as f64;
        for (v, d) in cluster.support.iter().zip(cluster.membership.iter()) {
            let score = card * d;
            match best.get(v) {
                Some(&(s, _)) if s >= score => {}
                _ => {
                    best.insert(*v, (score, ci));
                }
            }
        }
    }
    for v in collection.constrained.iter() {
        if !best.contains_key(v) {
            return Err(Error::Uncovered(*v));
        }
    }
    Ok(best.into_iter().map(|(v, (_, ci))| (v, ci)).collect())
}

/// Ranking order for [`rank_by_membership`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RankMode {
    /// Descending membership score in the extracted set.
    Membership,
    /// Ascending pairwise distance (descending affinity) to the query.
    PairwiseDistance,
}

/// Extracts the constrained dominant set containing `query` and ranks its
/// non-query members. Both modes rank the same member set; only the order
/// differs. An isolated query yields an empty ranking.
pub fn rank_by_membership(
    a: &AffinityMatrix,
    query: &[usize],
    mode: RankMode,
    cfg: &SolverConfig,
) -> Result<Vec<(usize, f64)>> {
    if query.is_empty() {
        return Err(Error::Invalid("query must be nonempty".into()));
    }
    let report = fast_cdsc(a, query, cfg)?;
    let in_query: BTreeSet<usize> = query.iter().copied().collect();
    let mut ranked: Vec<(usize, f64)> = report
        .distribution
        .support()
        .into_iter()
        .filter(|v| !in_query.contains(v))
        .map(|v| {
            let score = match mode {
                RankMode::Membership => report.distribution.get(v),
                RankMode::PairwiseDistance => {
                    // max affinity to any query vertex stands in for min
                    // kernel distance
                    query.iter().map(|&q| a.get(v, q)).fold(0.0, f64::max)
                }
            };
            (v, score)
        })
        .collect();
    ranked.sort_by(|x, y| y.1.partial_cmp(&x.1).unwrap().then(x.0.cmp(&y.0)));
    Ok(ranked)
}
