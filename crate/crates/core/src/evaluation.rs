//! Reconstruction metrics, nearest-neighbour inference and illness diagnostics.
//!
//! Neighbourhoods are undirected (parent plus children). Equal distances count
//! as "not closer"; argmins break ties by node id.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddingTable;
use crate::error::{Error, Result};
use crate::geometry;
use crate::graph::{HierarchyGraph, NodeId, TreeIndex};

/// |R_{A,B}|: `b` plus every other node strictly closer to `a` than `b` is.
pub fn rank_set(theta: &EmbeddingTable, a: NodeId, b: NodeId) -> usize {
    let ua = theta.row(a);
    let db = geometry::distance(ua, theta.row(b));
    1 + theta
        .rows()
        .enumerate()
        .filter(|&(x, ux)| x != a.index() && x != b.index() && geometry::distance(ua, ux) < db)
        .count()
}

/// Nearest other node; ties go to the smaller id.
pub fn infer_target(theta: &EmbeddingTable, a: NodeId) -> NodeId {
    let ua = theta.row(a);
    let mut best: Option<(f64, usize)> = None;
    for (x, ux) in theta.rows().enumerate() {
        if x == a.index() {
            continue;
        }
        let d = geometry::distance(ua, ux);
        if best.is_none_or(|(bd, _)| d < bd) {
            best = Some((d, x));
        }
    }
    NodeId::from(best.expect("at least two nodes").1)
}

/// Per-node contributions to the reconstruction metrics.
#[derive(Debug, Clone, Copy, Default)]
struct NodeTerms {
    average_precision: f64,
    /// Σ_i (|R_i| − i)
    paper_rank: i64,
    /// Σ_i (1 + non-neighbours strictly closer than B_i)
    conventional_rank: u64,
    pairs: u64,
}

fn node_terms(theta: &EmbeddingTable, g: &HierarchyGraph, a: NodeId, sorted: &mut Vec<f64>) -> NodeTerms {
    let ua = theta.row(a);
    sorted.clear();
    sorted.extend(
        theta
            .rows()
            .enumerate()
            .filter(|&(x, _)| x != a.index())
            .map(|(_, ux)| geometry::distance(ua, ux)),
    );
    sorted.sort_unstable_by(f64::total_cmp);

    let mut nbrs: Vec<(f64, NodeId)> = g
        .neighbors(a)
        .iter()
        .map(|&b| (geometry::distance(ua, theta.row(b)), b))
        .collect();
    nbrs.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));

    let mut t = NodeTerms::default();
    let mut precision_sum = 0.0;
    for (k, &(db, _)) in nbrs.iter().enumerate() {
        let closer = sorted.partition_point(|&d| d < db);
        let rank = 1 + closer;
        let nbrs_closer = nbrs.partition_point(|n| n.0 < db);
        precision_sum += (1 + nbrs_closer) as f64 / rank as f64;
        t.paper_rank += rank as i64 - (k as i64 + 1);
        t.conventional_rank += (rank - nbrs_closer) as u64;
    }
    t.average_precision = precision_sum / nbrs.len() as f64;
    t.pairs = nbrs.len() as u64;
    t
}

fn check_inputs(theta: &EmbeddingTable, g: &HierarchyGraph) -> Result<()> {
    if theta.len() != g.len() {
        return Err(Error::invalid(format!(
            "embedding has {} rows but the graph has {} nodes",
            theta.len(),
            g.len()
        )));
    }
    if g.len() < 2 {
        return Err(Error::invalid("metrics need at least two nodes"));
    }
    if let Some(v) = g.nodes().find(|&v| g.degree(v) == 0) {
        return Err(Error::invalid(format!("node `{}` is isolated", g.label(v))));
    }
    Ok(())
}

fn all_terms(theta: &EmbeddingTable, g: &HierarchyGraph) -> Result<Vec<NodeTerms>> {
    check_inputs(theta, g)?;
    let nodes: Vec<NodeId> = g.nodes().collect();
    Ok(nodes
        .par_iter()
        .map_init(Vec::new, |buf, &a| node_terms(theta, g, a, buf))
        .collect())
}

/// Mean average precision of the undirected neighbourhoods.
pub fn map_score(theta: &EmbeddingTable, g: &HierarchyGraph) -> Result<f64> {
    let terms = all_terms(theta, g)?;
    Ok(map_of(&terms))
}

/// `(mr_paper, mr_conventional)`.
pub fn mean_rank(theta: &EmbeddingTable, g: &HierarchyGraph) -> Result<(f64, f64)> {
    let terms = all_terms(theta, g)?;
    Ok(ranks_of(&terms))
}

fn map_of(terms: &[NodeTerms]) -> f64 {
    terms.iter().map(|t| t.average_precision).sum::<f64>() / terms.len() as f64
}

fn ranks_of(terms: &[NodeTerms]) -> (f64, f64) {
    let paper: i64 = terms.iter().map(|t| t.paper_rank).sum();
    let conv: u64 = terms.iter().map(|t| t.conventional_rank).sum();
    let pairs: u64 = terms.iter().map(|t| t.pairs).sum();
    (paper as f64 / terms.len() as f64, conv as f64 / pairs as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Illness {
    /// The inferred node is a child of the true parent.
    Capacity,
    /// The true parent is a deeper-than-parent ancestor of the inferred node.
    Intra,
    Inter,
}

impl Illness {
    pub fn as_str(self) -> &'static str {
        match self {
            Illness::Capacity => "capacity",
            Illness::Intra => "intra",
            Illness::Inter => "inter",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IllnessCase {
    pub source: NodeId,
    pub target: NodeId,
    pub inferred: NodeId,
    /// Nearest common ancestor of `target` and `inferred`.
    pub common_ancestor: NodeId,
    pub category: Illness,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IllnessCounts {
    pub capacity: usize,
    pub intra: usize,
    pub inter: usize,
}

impl IllnessCounts {
    pub fn total(&self) -> usize {
        self.capacity + self.intra + self.inter
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IllnessReport {
    pub counts: IllnessCounts,
    pub cases: Vec<IllnessCase>,
}

/// Category of a misinferred edge `A → B` where `B′ ≠ B` was inferred.
pub fn categorize(tree: &TreeIndex, target: NodeId, inferred: NodeId) -> Illness {
    if tree.parent(inferred) == Some(target) {
        Illness::Capacity
    } else if tree.is_ancestor(target, inferred) {
        Illness::Intra
    } else {
        Illness::Inter
    }
}

/// Infers every non-root node's parent and classifies the misses.
pub fn classify_illness(theta: &EmbeddingTable, g: &HierarchyGraph) -> Result<IllnessReport> {
    let tree = g.require_tree()?;
    if theta.len() != g.len() {
        return Err(Error::invalid(format!(
            "embedding has {} rows but the graph has {} nodes",
            theta.len(),
            g.len()
        )));
    }
    let nodes: Vec<NodeId> = g.nodes().collect();
    let cases: Vec<IllnessCase> = nodes
        .par_iter()
        .filter_map(|&a| {
            let b = tree.parent(a)?;
            let inferred = infer_target(theta, a);
            (inferred != b).then(|| IllnessCase {
                source: a,
                target: b,
                inferred,
                common_ancestor: tree.nca(b, inferred),
                category: categorize(tree, b, inferred),
            })
        })
        .collect();
    let mut counts = IllnessCounts::default();
    for c in &cases {
        match c.category {
            Illness::Capacity => counts.capacity += 1,
            Illness::Intra => counts.intra += 1,
            Illness::Inter => counts.inter += 1,
        }
    }
    Ok(IllnessReport { counts, cases })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub map: f64,
    pub mr_paper: f64,
    pub mr_conventional: f64,
    pub illness: IllnessCounts,
}

impl MetricsReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metrics serialize")
    }
}

/// `(map, mr_paper, mr_conventional)` from a single pass over the nodes.
pub fn reconstruction(theta: &EmbeddingTable, g: &HierarchyGraph) -> Result<(f64, f64, f64)> {
    let terms = all_terms(theta, g)?;
    let (mr_paper, mr_conventional) = ranks_of(&terms);
    Ok((map_of(&terms), mr_paper, mr_conventional))
}

/// Reconstruction metrics plus illness counts; `g` must be a tree.
pub fn evaluate(theta: &EmbeddingTable, g: &HierarchyGraph) -> Result<MetricsReport> {
    let (map, mr_paper, mr_conventional) = reconstruction(theta, g)?;
    let illness = classify_illness(theta, g)?.counts;
    Ok(MetricsReport {
        map,
        mr_paper,
        mr_conventional,
        illness,
    })
}
