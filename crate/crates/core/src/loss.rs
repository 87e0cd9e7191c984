//! Softmax ranking loss over Poincaré distances and its gradient.
//!
//! For a positive pair `(i, j)` with negatives `N`,
//! `L = d(i, j) + log Σ_{x ∈ N ∪ {j}} exp(−d(i, x))`, evaluated with a
//! min-distance shift so large distances never overflow.

use crate::embedding::EmbeddingTable;
use crate::geometry;
use crate::graph::NodeId;
use crate::sampling::Batch;

/// Loss of a single positive pair against its negatives. Zero when `negatives` is empty.
pub fn edge_loss(theta: &EmbeddingTable, i: NodeId, j: NodeId, negatives: &[NodeId]) -> f64 {
    if negatives.is_empty() {
        return 0.0;
    }
    let d_pos = theta.distance(i, j);
    let d_min = negatives
        .iter()
        .map(|&x| theta.distance(i, x))
        .fold(d_pos, f64::min);
    let sum: f64 = std::iter::once(d_pos)
        .chain(negatives.iter().map(|&x| theta.distance(i, x)))
        .map(|d| (d_min - d).exp())
        .sum();
    (d_pos - d_min + sum.ln()).max(0.0)
}

/// Weighted sum of edge losses over every batch.
pub fn total_loss(theta: &EmbeddingTable, batches: &[Batch]) -> f64 {
    batches
        .iter()
        .flat_map(Batch::iter)
        .map(|(e, negs)| e.weight * edge_loss(theta, e.source, e.target, negs))
        .sum()
}

/// Sparse gradient accumulator over a dense buffer, tracking touched rows.
#[derive(Debug, Clone)]
pub struct GradientBuffer {
    dim: usize,
    data: Vec<f64>,
    touched: Vec<NodeId>,
    mark: Vec<bool>,
}

impl GradientBuffer {
    pub fn new(len: usize, dim: usize) -> Self {
        Self {
            dim,
            data: vec![0.0; len * dim],
            touched: Vec::new(),
            mark: vec![false; len],
        }
    }

    #[inline]
    fn row_mut(&mut self, id: NodeId) -> &mut [f64] {
        if !self.mark[id.index()] {
            self.mark[id.index()] = true;
            self.touched.push(id);
        }
        let s = id.index() * self.dim;
        &mut self.data[s..s + self.dim]
    }

    pub fn row(&self, id: NodeId) -> &[f64] {
        let s = id.index() * self.dim;
        &self.data[s..s + self.dim]
    }

    /// Rows that received a contribution, in first-touch order.
    pub fn touched(&self) -> &[NodeId] {
        &self.touched
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn clear(&mut self) {
        for &id in &self.touched {
            let s = id.index() * self.dim;
            self.data[s..s + self.dim].fill(0.0);
            self.mark[id.index()] = false;
        }
        self.touched.clear();
    }
}

/// Per-edge scratch: gradient rows for the source and each candidate.
#[derive(Debug, Default)]
pub(crate) struct EdgeScratch {
    dists: Vec<f64>,
    source: Vec<f64>,
    others: Vec<f64>,
}

/// Anything that can hand out embedding rows.
pub(crate) trait RowSource {
    fn row_of(&self, id: NodeId) -> &[f64];
}

impl RowSource for EmbeddingTable {
    #[inline]
    fn row_of(&self, id: NodeId) -> &[f64] {
        self.row(id)
    }
}

/// Loss of one weighted edge; its gradient is left in `scratch`
/// (`source` row, then one row per candidate: target first, then negatives).
pub(crate) fn edge_loss_and_grad_with<S: RowSource + ?Sized>(
    rows: &S,
    dim: usize,
    i: NodeId,
    j: NodeId,
    negatives: &[NodeId],
    weight: f64,
    scratch: &mut EdgeScratch,
) -> f64 {
    let count = negatives.len() + 1;
    scratch.source.clear();
    scratch.source.resize(dim, 0.0);
    scratch.others.clear();
    scratch.others.resize(count * dim, 0.0);
    if negatives.is_empty() {
        return 0.0;
    }
    let ui = rows.row_of(i);
    scratch.dists.clear();
    scratch.dists.extend(
        std::iter::once(j)
            .chain(negatives.iter().copied())
            .map(|x| geometry::distance(ui, rows.row_of(x))),
    );
    let d_pos = scratch.dists[0];
    let d_min = scratch.dists.iter().copied().fold(f64::INFINITY, f64::min);
    let mut z = 0.0;
    for d in &mut scratch.dists {
        // unnormalised softmax weights from here on
        *d = (d_min - *d).exp();
        z += *d;
    }
    let loss = d_pos - d_min + z.ln();

    for (k, x) in std::iter::once(j).chain(negatives.iter().copied()).enumerate() {
        let p = scratch.dists[k] / z;
        // ∂L/∂d_x = [x = j] − p_x
        let coeff = weight * (if k == 0 { 1.0 } else { 0.0 } - p);
        if coeff == 0.0 {
            continue;
        }
        let (lo, hi) = (k * dim, (k + 1) * dim);
        geometry::accumulate_distance_gradient(
            ui,
            rows.row_of(x),
            coeff,
            &mut scratch.source,
            &mut scratch.others[lo..hi],
        );
    }
    weight * loss.max(0.0)
}

impl EdgeScratch {
    pub(crate) fn source(&self) -> &[f64] {
        &self.source
    }

    pub(crate) fn other(&self, k: usize) -> &[f64] {
        let dim = self.source.len();
        &self.others[k * dim..(k + 1) * dim]
    }

    pub(crate) fn is_finite(&self) -> bool {
        self.source.iter().chain(&self.others).all(|g| g.is_finite())
    }
}

/// Weighted loss of `batch` at `theta`; the Euclidean gradient is added into `grad`.
pub fn accumulate_batch_gradient(theta: &EmbeddingTable, batch: &Batch, grad: &mut GradientBuffer) -> f64 {
    let mut scratch = EdgeScratch::default();
    let mut loss = 0.0;
    for (e, negs) in batch.iter() {
        loss += edge_loss_and_grad_with(theta, theta.dim(), e.source, e.target, negs, e.weight, &mut scratch);
        scatter(&scratch, e.source, e.target, negs, grad);
    }
    loss
}

pub(crate) fn scatter(
    scratch: &EdgeScratch,
    source: NodeId,
    target: NodeId,
    negatives: &[NodeId],
    grad: &mut GradientBuffer,
) {
    add(grad.row_mut(source), scratch.source());
    for (k, x) in std::iter::once(target).chain(negatives.iter().copied()).enumerate() {
        add(grad.row_mut(x), scratch.other(k));
    }
}

#[inline]
fn add(dst: &mut [f64], src: &[f64]) {
    dst.iter_mut().zip(src).for_each(|(a, b)| *a += b);
}

/// Total loss and its dense Euclidean gradient (row-major, same layout as the table).
pub fn loss_gradient(theta: &EmbeddingTable, batches: &[Batch]) -> (f64, Vec<f64>) {
    let mut grad = GradientBuffer::new(theta.len(), theta.dim());
    let loss = batches
        .iter()
        .map(|b| accumulate_batch_gradient(theta, b, &mut grad))
        .sum();
    (loss, grad.data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::HierarchyGraph;
    use crate::rng::seeded;
    use crate::sampling::{make_batches, NegativeSampler, WeightedEdge};
    use rand::Rng;

    /// Points at the given hyperbolic norms along distinct axes from the origin.
    fn radial(norms: &[f64]) -> EmbeddingTable {
        let dim = norms.len().max(2);
        let rows = std::iter::once(vec![0.0; dim]).chain(norms.iter().enumerate().map(|(k, &h)| {
            let mut r = vec![0.0; dim];
            r[k] = (h / 2.0).tanh();
            r
        }));
        EmbeddingTable::from_rows(rows).unwrap()
    }

    #[test]
    fn edge_loss_examples() {
        let t = radial(&[1.3, 1.3]);
        assert!((edge_loss(&t, NodeId(0), NodeId(1), &[NodeId(2)]) - 2f64.ln()).abs() < 1e-12);
        let t = radial(&[1.0, 2.0]);
        let want = (1.0 + (-1f64).exp()).ln();
        assert!((edge_loss(&t, NodeId(0), NodeId(1), &[NodeId(2)]) - want).abs() < 1e-12);
        assert!((want - 0.31326).abs() < 1e-5);
        let t = radial(&[1.0, 30.0]);
        assert!(edge_loss(&t, NodeId(0), NodeId(1), &[NodeId(2)]) < 1e-11);
        assert_eq!(edge_loss(&t, NodeId(0), NodeId(1), &[]), 0.0);
    }

    #[test]
    fn weights_scale_total_loss() {
        let t = radial(&[1.0, 2.0, 0.5]);
        let mk = |w| Batch {
            edges: vec![WeightedEdge::new(NodeId(0), NodeId(1), 1.0), WeightedEdge::new(NodeId(0), NodeId(3), w)],
            negatives: vec![vec![NodeId(2)], vec![NodeId(2), NodeId(1)]],
        };
        let base = edge_loss(&t, NodeId(0), NodeId(1), &[NodeId(2)]);
        let tc = edge_loss(&t, NodeId(0), NodeId(3), &[NodeId(2), NodeId(1)]);
        assert_eq!(total_loss(&t, &[mk(0.0)]), base);
        assert_eq!(total_loss(&t, &[mk(1.0)]), base + tc);
        assert!((total_loss(&t, &[mk(0.2)]) - (base + 0.2 * tc)).abs() < 1e-15);
    }

    fn random_state(n: usize, dim: usize, seed: u64) -> EmbeddingTable {
        let mut rng = seeded(seed);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
                let s = rng.random_range(0.05..0.85) / norm_of(&v);
                v.iter().map(|x| x * s).collect()
            })
            .collect();
        EmbeddingTable::from_rows(rows).unwrap()
    }

    fn norm_of(v: &[f64]) -> f64 {
        geometry::norm_sq(v).sqrt()
    }

    /// Assembled gradient vs central differences, on a 10-node tree with
    /// closure edges at weight 0.2.
    pub(crate) fn gradient_check(dim: usize, seed: u64) -> f64 {
        let g = HierarchyGraph::from_index_edges(10, &[(1, 0), (2, 0), (3, 1), (4, 1), (5, 2), (6, 3), (7, 3), (8, 5), (9, 8)]).unwrap();
        let closure = g.transitive_closure().unwrap();
        let mut edges: Vec<WeightedEdge> = g.edges().iter().map(|&(c, p)| WeightedEdge::new(c, p, 1.0)).collect();
        edges.extend(closure.iter().map(|&(c, a)| WeightedEdge::new(c, a, 0.2)));
        let mut rng = seeded(seed);
        let mut batches = make_batches(&edges, 4, &mut rng).unwrap();
        let sampler = NegativeSampler::with_extra_edges(&g, &closure);
        for b in &mut batches {
            sampler.fill(b, 3, &mut rng);
        }
        let theta = random_state(10, dim, seed);
        let (_, grad) = loss_gradient(&theta, &batches);
        let h = 1e-6;
        let mut numeric = vec![0.0; grad.len()];
        for (k, slot) in numeric.iter_mut().enumerate() {
            let mut plus = theta.clone();
            plus.as_mut_slice()[k] += h;
            let mut minus = theta.clone();
            minus.as_mut_slice()[k] -= h;
            *slot = (total_loss(&plus, &batches) - total_loss(&minus, &batches)) / (2.0 * h);
        }
        let diff: Vec<f64> = grad.iter().zip(&numeric).map(|(a, b)| a - b).collect();
        norm_of(&diff) / norm_of(&numeric).max(1e-12)
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for dim in [2, 5] {
            for seed in 0..20 {
                let rel = gradient_check(dim, seed);
                assert!(rel <= 1e-4, "dim {dim} seed {seed}: {rel}");
            }
        }
    }
}
