//! Riemannian SGD and the geometry-aware training schedule.
//!
//! Each epoch `i` (1-based):
//! 1. when dilation is enabled, past its start epoch and out of cooldown, run
//!    the capacity check and dilate the whole table if any node is short of room;
//! 2. build batches from the tree edges, plus the closure edges at weight
//!    `eta_tc` while `i ≤ n_tc`;
//! 3. take one synchronous Riemannian step per batch (learning rate divided
//!    during burn-in).

use std::io::Write;
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::Mutex;

use crate::capacity;
use crate::config::TrainConfig;
use crate::embedding::EmbeddingTable;
use crate::error::{Error, Result};
use crate::geometry;
use crate::graph::{HierarchyGraph, NodeId};
use crate::loss::{self, EdgeScratch, GradientBuffer, RowSource};
use crate::rng::{seeded, TrainRng};
use crate::sampling::{make_batches, Batch, NegativeSampler, WeightedEdge};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Weighted loss per edge, evaluated before each batch's update.
    pub mean_loss: f64,
    pub dilation_applied: bool,
    /// Capacity offenders found this epoch; `None` when no check ran.
    pub offenders: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainTrace {
    pub records: Vec<EpochRecord>,
}

impl TrainTrace {
    /// CSV with header `epoch,loss,dilation_applied,offenders`; the last
    /// field is empty on epochs without a capacity check.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "epoch,loss,dilation_applied,offenders")?;
        for r in &self.records {
            let offenders = r.offenders.map(|o| o.to_string()).unwrap_or_default();
            writeln!(
                out,
                "{},{:.17e},{},{}",
                r.epoch, r.mean_loss, r.dilation_applied as u8, offenders
            )?;
        }
        Ok(())
    }

    pub fn dilations(&self) -> usize {
        self.records.iter().filter(|r| r.dilation_applied).count()
    }
}

fn update_row(row: &mut [f64], grad: &[f64], lr: f64, eps: f64) {
    let step = lr * geometry::riemannian_factor(row);
    row.iter_mut().zip(grad).for_each(|(t, g)| *t -= step * g);
    geometry::project_in_place(row, eps);
}

fn step_with_buffer(
    theta: &mut EmbeddingTable,
    batch: &Batch,
    lr: f64,
    eps: f64,
    grad: &mut GradientBuffer,
    scratch: &mut EdgeScratch,
) -> Result<f64> {
    grad.clear();
    let dim = theta.dim();
    let mut total = 0.0;
    for (e, negs) in batch.iter() {
        let l = loss::edge_loss_and_grad_with(&*theta, dim, e.source, e.target, negs, e.weight, scratch);
        if !l.is_finite() || !scratch.is_finite() {
            return Err(Error::NonFiniteGradient {
                source_node: e.source,
                target: e.target,
            });
        }
        loss::scatter(scratch, e.source, e.target, negs, grad);
        total += l;
    }
    // descend on the batch-mean loss
    let step = lr / batch.len().max(1) as f64;
    for &id in grad.touched() {
        update_row(theta.row_mut(id), grad.row(id), step, eps);
    }
    Ok(total)
}

/// One synchronous Riemannian SGD step on the mean weighted loss of `batch`.
/// Returns the summed batch loss evaluated before the update.
pub fn sgd_step(theta: &mut EmbeddingTable, batch: &Batch, lr: f64, eps: f64) -> Result<f64> {
    if lr.is_nan() || lr <= 0.0 {
        return Err(Error::invalid("learning rate must be > 0"));
    }
    let mut grad = GradientBuffer::new(theta.len(), theta.dim());
    step_with_buffer(theta, batch, lr, eps, &mut grad, &mut EdgeScratch::default())
}

/// Replaces every point by its `k`-dilation.
pub fn apply_dilation(theta: &mut EmbeddingTable, k: f64, eps: f64) -> Result<()> {
    if !k.is_finite() || k <= 0.0 {
        return Err(Error::invalid(format!("dilation factor must be > 0, got {k}")));
    }
    let dim = theta.dim();
    theta
        .as_mut_slice()
        .chunks_exact_mut(dim)
        .for_each(|row| geometry::dilate_in_place(row, k, eps));
    Ok(())
}

/// Epoch-by-epoch driver; [`train`] runs it to completion.
pub struct Trainer<'g> {
    graph: &'g HierarchyGraph,
    cfg: TrainConfig,
    table: EmbeddingTable,
    rng: TrainRng,
    tree_edges: Vec<WeightedEdge>,
    closure_edges: Vec<WeightedEdge>,
    tree_sampler: NegativeSampler,
    closure_sampler: Option<NegativeSampler>,
    grad: GradientBuffer,
    scratch: EdgeScratch,
    epoch: usize,
    last_dilation: Option<usize>,
    trace: TrainTrace,
}

impl<'g> Trainer<'g> {
    pub fn new(graph: &'g HierarchyGraph, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        if graph.len() < 2 || graph.edges().is_empty() {
            return Err(Error::invalid("training needs at least one edge"));
        }
        let closure = if cfg.uses_closure() {
            graph.validate_tree()?;
            graph.transitive_closure()?
        } else {
            Vec::new()
        };
        let tree_edges = graph
            .edges()
            .iter()
            .map(|&(c, p)| WeightedEdge::new(c, p, 1.0))
            .collect();
        let closure_edges = closure
            .iter()
            .map(|&(u, w)| WeightedEdge::new(u, w, cfg.eta_tc))
            .collect();
        let closure_sampler =
            (!closure.is_empty()).then(|| NegativeSampler::with_extra_edges(graph, &closure));
        let mut rng = seeded(cfg.seed);
        let table = EmbeddingTable::random(graph.len(), cfg.dim, cfg.init_radius, &mut rng);
        Ok(Self {
            graph,
            tree_sampler: NegativeSampler::new(graph, false),
            closure_sampler,
            grad: GradientBuffer::new(graph.len(), cfg.dim),
            scratch: EdgeScratch::default(),
            cfg,
            table,
            rng,
            tree_edges,
            closure_edges,
            epoch: 0,
            last_dilation: None,
            trace: TrainTrace::default(),
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    /// Number of completed epochs.
    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn table(&self) -> &EmbeddingTable {
        &self.table
    }

    pub fn trace(&self) -> &TrainTrace {
        &self.trace
    }

    pub fn closure_active(&self, epoch: usize) -> bool {
        epoch <= self.cfg.n_tc && !self.closure_edges.is_empty()
    }

    fn dilation_due(&self, epoch: usize) -> bool {
        self.cfg.dilation_enabled
            && epoch >= self.cfg.dilation_start_epoch
            && self
                .last_dilation
                .is_none_or(|last| epoch - last >= self.cfg.dilation_cooldown)
    }

    /// Shuffled batches with negatives for `epoch`, as the training loop would draw them.
    fn epoch_batches(&mut self, epoch: usize) -> Result<Vec<Batch>> {
        let (edges, sampler) = if self.closure_active(epoch) {
            let mut all = self.tree_edges.clone();
            all.extend_from_slice(&self.closure_edges);
            (all, self.closure_sampler.as_ref().expect("closure sampler"))
        } else {
            (self.tree_edges.clone(), &self.tree_sampler)
        };
        let mut batches = make_batches(&edges, self.cfg.batch_size, &mut self.rng)?;
        for b in &mut batches {
            sampler.fill(b, self.cfg.negatives, &mut self.rng);
        }
        Ok(batches)
    }

    pub fn run_epoch(&mut self) -> Result<EpochRecord> {
        let epoch = self.epoch + 1;
        let mut offenders = None;
        let mut dilation_applied = false;
        if self.dilation_due(epoch) {
            let found = capacity::capacity_check(&self.table, self.graph, self.cfg.dim)?;
            offenders = Some(found.len());
            if !found.is_empty() {
                apply_dilation(&mut self.table, self.cfg.dilation_k, self.cfg.eps)?;
                self.last_dilation = Some(epoch);
                dilation_applied = true;
            }
        }

        let batches = self.epoch_batches(epoch)?;
        let lr = if epoch <= self.cfg.burn_in_epochs {
            self.cfg.lr / self.cfg.burn_in_lr_divisor
        } else {
            self.cfg.lr
        };
        let edge_count: usize = batches.iter().map(Batch::len).sum();
        let total = if self.cfg.threads > 1 {
            hogwild_epoch(&mut self.table, &batches, lr, self.cfg.eps, self.cfg.threads)?
        } else {
            let mut total = 0.0;
            for b in &batches {
                total += step_with_buffer(&mut self.table, b, lr, self.cfg.eps, &mut self.grad, &mut self.scratch)?;
            }
            total
        };

        let record = EpochRecord {
            epoch,
            mean_loss: total / edge_count as f64,
            dilation_applied,
            offenders,
        };
        self.trace.records.push(record);
        self.epoch = epoch;
        Ok(record)
    }

    pub fn run(mut self) -> Result<(EmbeddingTable, TrainTrace)> {
        while self.epoch < self.cfg.epochs {
            self.run_epoch()?;
        }
        Ok((self.table, self.trace))
    }
}

/// Runs the geometry-aware schedule for `cfg.epochs` epochs.
pub fn train(g: &HierarchyGraph, cfg: &TrainConfig) -> Result<(EmbeddingTable, TrainTrace)> {
    Trainer::new(g, cfg.clone())?.run()
}

/// Embedding table shared between workers without locks. Coordinates are
/// stored as `f64` bit patterns; concurrent row updates may interleave.
struct SharedTable {
    dim: usize,
    cells: Vec<AtomicU64>,
}

impl SharedTable {
    fn new(table: &EmbeddingTable) -> Self {
        Self {
            dim: table.dim(),
            cells: table.as_slice().iter().map(|v| AtomicU64::new(v.to_bits())).collect(),
        }
    }

    fn load(&self, id: NodeId, out: &mut [f64]) {
        let s = id.index() * self.dim;
        for (o, c) in out.iter_mut().zip(&self.cells[s..s + self.dim]) {
            *o = f64::from_bits(c.load(Ordering::Relaxed));
        }
    }

    fn store(&self, id: NodeId, row: &[f64]) {
        let s = id.index() * self.dim;
        for (c, v) in self.cells[s..s + self.dim].iter().zip(row) {
            c.store(v.to_bits(), Ordering::Relaxed);
        }
    }

    fn write_back(&self, table: &mut EmbeddingTable) {
        for (t, c) in table.as_mut_slice().iter_mut().zip(&self.cells) {
            *t = f64::from_bits(c.load(Ordering::Relaxed));
        }
    }
}

/// Rows of the nodes one batch touches, copied out of the shared table.
struct Snapshot {
    dim: usize,
    slot: Vec<u32>,
    rows: Vec<f64>,
    ids: Vec<NodeId>,
}

impl Snapshot {
    fn new(len: usize, dim: usize) -> Self {
        Self {
            dim,
            slot: vec![u32::MAX; len],
            rows: Vec::new(),
            ids: Vec::new(),
        }
    }

    fn fill(&mut self, shared: &SharedTable, batch: &Batch) {
        for &id in &self.ids {
            self.slot[id.index()] = u32::MAX;
        }
        self.ids.clear();
        self.rows.clear();
        for (e, negs) in batch.iter() {
            for id in [e.source, e.target].into_iter().chain(negs.iter().copied()) {
                if self.slot[id.index()] == u32::MAX {
                    self.slot[id.index()] = self.ids.len() as u32;
                    self.ids.push(id);
                    let start = self.rows.len();
                    self.rows.resize(start + self.dim, 0.0);
                    shared.load(id, &mut self.rows[start..]);
                }
            }
        }
    }
}

impl RowSource for Snapshot {
    fn row_of(&self, id: NodeId) -> &[f64] {
        let s = self.slot[id.index()] as usize * self.dim;
        &self.rows[s..s + self.dim]
    }
}

/// Processes the epoch's batches on `threads` workers with unsynchronised
/// read-modify-write updates. Not deterministic.
fn hogwild_epoch(
    table: &mut EmbeddingTable,
    batches: &[Batch],
    lr: f64,
    eps: f64,
    threads: usize,
) -> Result<f64> {
    let shared = SharedTable::new(table);
    let next = AtomicUsize::new(0);
    let failure: Mutex<Option<Error>> = Mutex::new(None);
    let (len, dim) = (table.len(), table.dim());
    let total = std::thread::scope(|s| {
        let workers: Vec<_> = (0..threads)
            .map(|_| {
                s.spawn(|| {
                    let mut snap = Snapshot::new(len, dim);
                    let mut grad = GradientBuffer::new(len, dim);
                    let mut scratch = EdgeScratch::default();
                    let mut row = vec![0.0; dim];
                    let mut sum = 0.0;
                    loop {
                        let k = next.fetch_add(1, Ordering::Relaxed);
                        let Some(batch) = batches.get(k) else { break };
                        snap.fill(&shared, batch);
                        grad.clear();
                        for (e, negs) in batch.iter() {
                            let l = loss::edge_loss_and_grad_with(
                                &snap, dim, e.source, e.target, negs, e.weight, &mut scratch,
                            );
                            if !l.is_finite() || !scratch.is_finite() {
                                failure.lock().unwrap().get_or_insert(Error::NonFiniteGradient {
                                    source_node: e.source,
                                    target: e.target,
                                });
                                return sum;
                            }
                            loss::scatter(&scratch, e.source, e.target, negs, &mut grad);
                            sum += l;
                        }
                        let step = lr / batch.len().max(1) as f64;
                        for &id in grad.touched() {
                            shared.load(id, &mut row);
                            update_row(&mut row, grad.row(id), step, eps);
                            shared.store(id, &row);
                        }
                    }
                    sum
                })
            })
            .collect();
        workers.into_iter().map(|w| w.join().expect("worker panicked")).sum::<f64>()
    });
    if let Some(e) = failure.into_inner().unwrap() {
        return Err(e);
    }
    shared.write_back(table);
    Ok(total)
}
