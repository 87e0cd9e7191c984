//! Poincaré-ball embeddings of hierarchies.
//!
//! Trains embeddings of tree-structured data with Riemannian SGD, optionally
//! adding transitive-closure edges as down-weighted positives and dilating the
//! whole embedding whenever some node lacks the local capacity to separate its
//! neighbours. Evaluation covers reconstruction MAP / mean rank and a
//! three-way classification of misreconstructed edges.

pub mod capacity;
pub mod checkpoint;
pub mod config;
pub mod embedding;
mod error;
pub mod evaluation;
pub mod geometry;
pub mod graph;
pub mod loss;
pub mod rng;
pub mod sampling;
pub mod training;

pub use config::TrainConfig;
pub use embedding::EmbeddingTable;
pub use error::{Error, ErrorKind, Result, TreeError};
pub use geometry::PoincarePoint;
pub use graph::{HierarchyGraph, NodeId};
pub use training::{train, TrainTrace, Trainer};
