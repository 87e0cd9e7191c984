//! Local-capacity estimates.
//!
//! Placing `k` points around `A` inside a geodesic ball of radius `r` so that
//! every pair is farther apart than either is from `A` amounts to a spherical
//! code with minimal angle `θ_r = 2·arcsin(1 / (2·cosh(r/2)))`. The bounds
//! below are the simplified exponential estimates of that code size; a node
//! whose degree exceeds the lower bound at its own neighbourhood radius is
//! reported as a capacity offender.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::embedding::EmbeddingTable;
use crate::error::{Error, Result};
use crate::graph::{HierarchyGraph, NodeId};

/// Dimensions above this use the large-`d` lower bound.
const SMALL_DIM_MAX: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CapacityEstimate {
    pub dim: usize,
    pub radius: f64,
    pub packing_angle: f64,
    pub lower_bound: f64,
    pub upper_bound: f64,
}

impl CapacityEstimate {
    pub fn new(dim: usize, radius: f64) -> Result<Self> {
        let est = Self {
            dim,
            radius,
            packing_angle: packing_angle(radius)?,
            lower_bound: capacity_lower_bound(dim, radius)?,
            upper_bound: capacity_upper_bound(dim, radius)?,
        };
        assert!(
            est.lower_bound <= est.upper_bound,
            "capacity bounds crossed at d = {dim}, r = {radius}"
        );
        Ok(est)
    }
}

/// A node with more tree neighbours than its local capacity guarantees room for.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CapacityOffender {
    pub node: NodeId,
    pub degree: usize,
    pub radius: f64,
    pub lower_bound: f64,
}

fn check_radius(r: f64) -> Result<()> {
    if r >= 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("radius must be ≥ 0, got {r}")))
    }
}

fn check_dim(d: usize) -> Result<()> {
    if d >= 2 {
        Ok(())
    } else {
        Err(Error::invalid(format!("dimension must be ≥ 2, got {d}")))
    }
}

/// Minimal angle at the centre between two radius-`r` points that are
/// farther from each other than from the centre.
pub fn packing_angle(r: f64) -> Result<f64> {
    check_radius(r)?;
    // clamp the one-ulp overshoot of 2·asin(½) at r = 0
    Ok((2.0 * (0.5 / (r / 2.0).cosh()).asin()).min(PI / 3.0))
}

pub fn capacity_lower_bound(d: usize, r: f64) -> Result<f64> {
    check_dim(d)?;
    check_radius(r)?;
    let df = d as f64;
    let growth = 2f64.powi(1 - d as i32) * ((df - 1.0) * r / 2.0).exp();
    Ok(match d {
        2 => PI * (r / 2.0).exp(),
        3..=SMALL_DIM_MAX => (2.0 * PI * df).sqrt() * growth,
        _ => (2.0 * PI).sqrt() * (2.0 / 3f64.sqrt()).ln() * df.powf(1.5) * growth,
    })
}

pub fn capacity_upper_bound(d: usize, r: f64) -> Result<f64> {
    check_dim(d)?;
    check_radius(r)?;
    Ok(match d {
        2 => PI * (r / 2.0).exp(),
        _ => 2f64.powi(d as i32) * (d as f64 * r / 2.0).exp(),
    })
}

/// Distance from `node` to its `deg(node)`-th nearest other embedding.
pub fn node_radius(node: NodeId, theta: &EmbeddingTable, graph: &HierarchyGraph) -> Result<f64> {
    graph.check_node(node)?;
    if graph.len() < 2 {
        return Err(Error::invalid("node radius needs at least two nodes"));
    }
    let mut scratch = Vec::with_capacity(graph.len());
    Ok(radius_with(node, graph.degree(node), theta, &mut scratch))
}

fn radius_with(node: NodeId, k: usize, theta: &EmbeddingTable, scratch: &mut Vec<f64>) -> f64 {
    if k == 0 {
        return 0.0;
    }
    let here = theta.row(node);
    scratch.clear();
    scratch.extend(
        (0..theta.len())
            .filter(|&i| i != node.index())
            .map(|i| crate::geometry::distance(here, theta.row(NodeId::from(i)))),
    );
    let k = k.min(scratch.len());
    let (_, kth, _) = scratch.select_nth_unstable_by(k - 1, f64::total_cmp);
    *kth
}

/// Every node whose tree degree exceeds the capacity lower bound at its own
/// neighbourhood radius, in ascending node order.
pub fn capacity_check(
    theta: &EmbeddingTable,
    graph: &HierarchyGraph,
    d: usize,
) -> Result<Vec<CapacityOffender>> {
    check_dim(d)?;
    if graph.len() < 2 {
        return Ok(Vec::new());
    }
    let offenders = (0..graph.len())
        .into_par_iter()
        .map_init(Vec::new, |scratch, i| {
            let node = NodeId::from(i);
            let degree = graph.degree(node);
            let radius = radius_with(node, degree, theta, scratch);
            let lower_bound = capacity_lower_bound(d, radius).expect("validated inputs");
            ((degree as f64) > lower_bound).then_some(CapacityOffender {
                node,
                degree,
                radius,
                lower_bound,
            })
        })
        .flatten()
        .collect();
    Ok(offenders)
}
