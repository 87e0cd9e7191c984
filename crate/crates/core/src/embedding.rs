use rand::Rng;

use crate::error::{Error, Result};
use crate::geometry::{self, PoincarePoint};
use crate::graph::NodeId;

/// Node-indexed Poincaré embeddings stored row-major in one buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    data: Vec<f64>,
}

impl EmbeddingTable {
    pub fn zeros(len: usize, dim: usize) -> Self {
        Self {
            dim,
            data: vec![0.0; len * dim],
        }
    }

    /// Every coordinate uniform in `[-radius, radius]`.
    pub fn random<R: Rng>(len: usize, dim: usize, radius: f64, rng: &mut R) -> Self {
        let data = (0..len * dim)
            .map(|_| rng.random_range(-radius..=radius))
            .collect();
        Self { dim, data }
    }

    /// Builds a table from rows, checking that every row is a valid ball point.
    pub fn from_rows<I, V>(rows: I) -> Result<Self>
    where
        I: IntoIterator<Item = V>,
        V: AsRef<[f64]>,
    {
        let mut dim = None;
        let mut data = Vec::new();
        for row in rows {
            let row = row.as_ref();
            let d = *dim.get_or_insert(row.len());
            if row.len() != d {
                return Err(Error::DimensionMismatch {
                    left: d,
                    right: row.len(),
                });
            }
            PoincarePoint::new(row.to_vec())?;
            data.extend_from_slice(row);
        }
        let dim = dim.ok_or_else(|| Error::invalid("empty embedding table"))?;
        Ok(Self { dim, data })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len().checked_div(self.dim).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn row(&self, id: NodeId) -> &[f64] {
        let s = id.index() * self.dim;
        &self.data[s..s + self.dim]
    }

    #[inline]
    pub fn row_mut(&mut self, id: NodeId) -> &mut [f64] {
        let s = id.index() * self.dim;
        &mut self.data[s..s + self.dim]
    }

    pub fn point(&self, id: NodeId) -> Result<PoincarePoint> {
        PoincarePoint::new(self.row(id).to_vec())
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn distance(&self, a: NodeId, b: NodeId) -> f64 {
        geometry::distance(self.row(a), self.row(b))
    }

    /// Largest Euclidean norm over all rows.
    pub fn max_norm(&self) -> f64 {
        self.rows()
            .map(|r| geometry::norm_sq(r).sqrt())
            .fold(0.0, f64::max)
    }

    /// Applies `f` to every row, e.g. an isometry.
    pub fn map_rows<F>(&self, mut f: F) -> Result<Self>
    where
        F: FnMut(&[f64]) -> Result<Vec<f64>>,
    {
        let mut data = Vec::with_capacity(self.data.len());
        for r in self.rows() {
            let out = f(r)?;
            if out.len() != self.dim {
                return Err(Error::DimensionMismatch {
                    left: self.dim,
                    right: out.len(),
                });
            }
            data.extend(out);
        }
        Ok(Self {
            dim: self.dim,
            data,
        })
    }
}
