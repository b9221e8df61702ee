use rand::Rng;

use super::params::join;
use super::{Parameters, Tensor2D};
use crate::error::{Error, Result};

/// Learned lookup table; row `i` is the vector of id `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub table: Tensor2D,
}

impl Embedding {
    pub fn new<R: Rng + ?Sized>(rows: usize, dim: usize, rng: &mut R) -> Self {
        Self {
            table: Tensor2D::xavier_uniform(rows, dim, rng),
        }
    }

    pub fn rows(&self) -> usize {
        self.table.rows()
    }

    pub fn dim(&self) -> usize {
        self.table.cols()
    }

    fn check(&self, ids: &[usize]) -> Result<()> {
        match ids.iter().find(|&&id| id >= self.rows()) {
            Some(&id) => Err(Error::IdOutOfRange { id, rows: self.rows() }),
            None => Ok(()),
        }
    }

    pub fn lookup(&self, ids: &[usize]) -> Result<Tensor2D> {
        self.check(ids)?;
        let rows: Vec<&[f64]> = ids.iter().map(|&i| self.table.row(i)).collect();
        let mut out = Tensor2D::stack_rows(&rows);
        if ids.is_empty() {
            out = Tensor2D::zeros(0, self.dim());
        }
        Ok(out)
    }

    /// Scatter-adds `upstream` rows into the gradient table; duplicate ids sum.
    pub fn backward(&self, ids: &[usize], upstream: &Tensor2D, grads: &mut Embedding) -> Result<()> {
        self.check(ids)?;
        if upstream.rows() != ids.len() || upstream.cols() != self.dim() {
            return Err(Error::Shape {
                op: "Embedding::backward",
                left: (ids.len(), self.dim()),
                right: upstream.shape(),
            });
        }
        for (r, &id) in ids.iter().enumerate() {
            for (g, u) in grads.table.row_mut(id).iter_mut().zip(upstream.row(r)) {
                *g += u;
            }
        }
        Ok(())
    }
}

impl Parameters for Embedding {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor2D)) {
        f(&join(prefix, "table"), &self.table);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor2D)) {
        f(&join(prefix, "table"), &mut self.table);
    }
}
