//! Negative sampling and epoch batching.

use std::collections::HashSet;

use rand::seq::{index, SliceRandom};
use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::{HierarchyGraph, NodeId};

/// A positive pair with its loss weight (1 for tree edges, η for closure edges).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedEdge {
    pub source: NodeId,
    pub target: NodeId,
    pub weight: f64,
}

impl WeightedEdge {
    pub fn new(source: NodeId, target: NodeId, weight: f64) -> Self {
        Self {
            source,
            target,
            weight,
        }
    }
}

/// One minibatch: edges and, per edge, its negative set.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Batch {
    pub edges: Vec<WeightedEdge>,
    pub negatives: Vec<Vec<NodeId>>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&WeightedEdge, &[NodeId])> {
        self.edges
            .iter()
            .enumerate()
            .map(|(k, e)| (e, self.negatives.get(k).map_or(&[][..], Vec::as_slice)))
    }
}

/// Uniform sampler over `V \ ({i, j} ∪ neighbours(i))`.
#[derive(Debug, Clone)]
pub struct NegativeSampler {
    neighbors: Vec<Vec<NodeId>>,
}

impl NegativeSampler {
    /// Neighbourhoods from the tree edges, plus closure edges when
    /// `include_closure` is set and the graph carries them.
    pub fn new(g: &HierarchyGraph, include_closure: bool) -> Self {
        let extra = if include_closure {
            g.closure_edges().unwrap_or(&[])
        } else {
            &[]
        };
        Self::with_extra_edges(g, extra)
    }

    /// Neighbourhoods from the tree edges plus `extra` (treated as undirected).
    pub fn with_extra_edges(g: &HierarchyGraph, extra: &[(NodeId, NodeId)]) -> Self {
        let mut neighbors: Vec<Vec<NodeId>> = g.nodes().map(|v| g.neighbors(v).to_vec()).collect();
        if !extra.is_empty() {
            for &(u, w) in extra {
                neighbors[u.index()].push(w);
                neighbors[w.index()].push(u);
            }
            for list in &mut neighbors {
                list.sort_unstable();
                list.dedup();
            }
        }
        Self { neighbors }
    }

    pub fn node_count(&self) -> usize {
        self.neighbors.len()
    }

    fn excluded(&self, i: NodeId, j: NodeId, x: NodeId) -> bool {
        x == i || x == j || self.neighbors[i.index()].binary_search(&x).is_ok()
    }

    /// Up to `m` distinct negatives for the pair `(i, j)`, drawn without
    /// replacement. Returns every eligible node when there are at most `m`.
    pub fn sample<R: Rng + ?Sized>(&self, i: NodeId, j: NodeId, m: usize, rng: &mut R) -> Vec<NodeId> {
        let n = self.node_count();
        let nbrs = &self.neighbors[i.index()];
        let j_counted = j != i && nbrs.binary_search(&j).is_err();
        let excluded = 1 + nbrs.len() + usize::from(j_counted);
        let eligible = n.saturating_sub(excluded);
        if m == 0 || eligible == 0 {
            return Vec::new();
        }
        let enumerate = || {
            (0..n)
                .map(NodeId::from)
                .filter(|&x| !self.excluded(i, j, x))
                .collect::<Vec<_>>()
        };
        if eligible <= m {
            return enumerate();
        }
        if eligible * 2 >= n && m * 2 <= eligible {
            // Rejection sampling; acceptance is at least one half.
            let mut chosen = Vec::with_capacity(m);
            let mut seen = HashSet::with_capacity(m);
            while chosen.len() < m {
                let x = NodeId::from(rng.random_range(0..n));
                if !self.excluded(i, j, x) && seen.insert(x) {
                    chosen.push(x);
                }
            }
            chosen
        } else {
            let pool = enumerate();
            index::sample(rng, pool.len(), m).into_iter().map(|k| pool[k]).collect()
        }
    }

    /// Fills `batch.negatives` with `m` samples per edge.
    pub fn fill<R: Rng + ?Sized>(&self, batch: &mut Batch, m: usize, rng: &mut R) {
        batch.negatives = batch
            .edges
            .iter()
            .map(|e| self.sample(e.source, e.target, m, rng))
            .collect();
    }
}

/// Negatives for `(i, j)` excluding neighbours through tree and (if attached) closure edges.
pub fn sample_negatives<R: Rng + ?Sized>(
    g: &HierarchyGraph,
    i: NodeId,
    j: NodeId,
    m: usize,
    rng: &mut R,
) -> Vec<NodeId> {
    NegativeSampler::new(g, true).sample(i, j, m, rng)
}

/// Shuffles `edges` and cuts them into consecutive batches of `batch_size`
/// (the last may be shorter). Negatives are left empty.
pub fn make_batches<R: Rng + ?Sized>(
    edges: &[WeightedEdge],
    batch_size: usize,
    rng: &mut R,
) -> Result<Vec<Batch>> {
    if edges.is_empty() {
        return Err(Error::invalid("cannot batch an empty edge list"));
    }
    if batch_size == 0 {
        return Err(Error::invalid("batch size must be ≥ 1"));
    }
    let mut shuffled = edges.to_vec();
    shuffled.shuffle(rng);
    Ok(shuffled
        .chunks(batch_size)
        .map(|c| Batch {
            edges: c.to_vec(),
            negatives: Vec::new(),
        })
        .collect())
}
