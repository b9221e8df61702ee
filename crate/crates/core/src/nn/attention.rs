//! Multi-head scaled dot-product self-attention with a key mask.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::params::join;
use super::{Dense, Parameters, Tensor2D};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MhsaConfig {
    pub model_dim: usize,
    pub n_heads: usize,
}

impl MhsaConfig {
    pub fn new(model_dim: usize, n_heads: usize) -> Result<Self> {
        if model_dim == 0 || n_heads == 0 || model_dim % n_heads != 0 {
            return Err(Error::Config(format!(
                "model_dim {model_dim} must be a positive multiple of n_heads {n_heads}"
            )));
        }
        Ok(Self { model_dim, n_heads })
    }

    pub fn head_dim(&self) -> usize {
        self.model_dim / self.n_heads
    }
}

impl Default for MhsaConfig {
    fn default() -> Self {
        Self {
            model_dim: 32,
            n_heads: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiHeadSelfAttention {
    pub config: MhsaConfig,
    pub query: Dense,
    pub key: Dense,
    pub value: Dense,
    pub output: Dense,
}

#[derive(Debug, Clone)]
pub struct MhsaCache {
    input: Tensor2D,
    group: usize,
    q: Tensor2D,
    k: Tensor2D,
    v: Tensor2D,
    /// One `n × n` row-stochastic matrix per (group, head), group-major.
    weights: Vec<Tensor2D>,
    concat: Tensor2D,
}

impl MhsaCache {
    pub fn attention_weights(&self) -> &[Tensor2D] {
        &self.weights
    }
}

impl MultiHeadSelfAttention {
    pub fn new<R: Rng + ?Sized>(config: MhsaConfig, rng: &mut R) -> Self {
        let d = config.model_dim;
        Self {
            config,
            query: Dense::new(d, d, rng),
            key: Dense::new(d, d, rng),
            value: Dense::new(d, d, rng),
            output: Dense::new(d, d, rng),
        }
    }

    pub fn forward(&self, tokens: &Tensor2D, mask: &[bool]) -> Result<Tensor2D> {
        Ok(self.forward_cached(tokens, mask)?.0)
    }

    /// `tokens` is `n × model_dim`; `mask[j] == false` removes token `j` from
    /// every query's attention targets. Masked tokens still get output rows.
    pub fn forward_cached(&self, tokens: &Tensor2D, mask: &[bool]) -> Result<(Tensor2D, MhsaCache)> {
        self.forward_grouped(tokens, tokens.rows(), mask)
    }

    /// Attention over consecutive blocks of `group` rows, each block
    /// attending only within itself. Projections run over all rows at once.
    pub fn forward_grouped(&self, tokens: &Tensor2D, group: usize, mask: &[bool]) -> Result<(Tensor2D, MhsaCache)> {
        let rows = tokens.rows();
        if rows == 0 || group == 0 || rows % group != 0 || mask.len() != rows {
            return Err(Error::Shape {
                op: "MultiHeadSelfAttention::forward",
                left: tokens.shape(),
                right: (mask.len(), group),
            });
        }
        if mask.chunks(group).any(|m| !m.iter().any(|x| *x)) {
            return Err(Error::Data("every token is masked; attention has no targets".into()));
        }
        let q = self.query.forward(tokens)?;
        let k = self.key.forward(tokens)?;
        let v = self.value.forward(tokens)?;
        let hd = self.config.head_dim();
        let scale = 1.0 / (hd as f64).sqrt();
        let n = group;

        let mut weights = Vec::with_capacity(rows / n * self.config.n_heads);
        let mut concat = Tensor2D::zeros(rows, self.config.model_dim);
        for g in 0..rows / n {
            let base = g * n;
            let mask = &mask[base..base + n];
            for h in 0..self.config.n_heads {
                let off = h * hd;
                let mut a = Tensor2D::zeros(n, n);
                for i in 0..n {
                    let qi = &q.row(base + i)[off..off + hd];
                    let row = a.row_mut(i);
                    let mut max = f64::NEG_INFINITY;
                    for j in 0..n {
                        if mask[j] {
                            let kj = &k.row(base + j)[off..off + hd];
                            let s = qi.iter().zip(kj).map(|(x, y)| x * y).sum::<f64>() * scale;
                            row[j] = s;
                            max = max.max(s);
                        }
                    }
                    let mut z = 0.0;
                    for j in 0..n {
                        if mask[j] {
                            row[j] = (row[j] - max).exp();
                            z += row[j];
                        } else {
                            row[j] = 0.0;
                        }
                    }
                    row.iter_mut().for_each(|w| *w /= z);
                }
                for i in 0..n {
                    let out = &mut concat.row_mut(base + i)[off..off + hd];
                    for j in 0..n {
                        let w = a.get(i, j);
                        if w == 0.0 {
                            continue;
                        }
                        for (o, vj) in out.iter_mut().zip(&v.row(base + j)[off..off + hd]) {
                            *o += w * vj;
                        }
                    }
                }
                weights.push(a);
            }
        }
        let out = self.output.forward(&concat)?;
        Ok((
            out,
            MhsaCache {
                input: tokens.clone(),
                group,
                q,
                k,
                v,
                weights,
                concat,
            },
        ))
    }

    pub fn backward(&self, cache: &MhsaCache, upstream: &Tensor2D, grads: &mut MultiHeadSelfAttention) -> Result<Tensor2D> {
        let rows = cache.input.rows();
        let n = cache.group;
        let hd = self.config.head_dim();
        let scale = 1.0 / (hd as f64).sqrt();
        let d_concat = self.output.backward(&cache.concat, upstream, &mut grads.output)?;

        let mut dq = Tensor2D::zeros(rows, self.config.model_dim);
        let mut dk = Tensor2D::zeros(rows, self.config.model_dim);
        let mut dv = Tensor2D::zeros(rows, self.config.model_dim);
        let mut da = vec![0.0; n];
        for (idx, a) in cache.weights.iter().enumerate() {
            let base = idx / self.config.n_heads * n;
            let off = idx % self.config.n_heads * hd;
            for i in 0..n {
                let dh = &d_concat.row(base + i)[off..off + hd];
                // dA_ij = dH_i · V_j, dV_j += A_ij dH_i
                for j in 0..n {
                    let w = a.get(i, j);
                    da[j] = 0.0;
                    if w == 0.0 {
                        continue;
                    }
                    let vj = &cache.v.row(base + j)[off..off + hd];
                    da[j] = dh.iter().zip(vj).map(|(x, y)| x * y).sum();
                    for (g, x) in dv.row_mut(base + j)[off..off + hd].iter_mut().zip(dh) {
                        *g += w * x;
                    }
                }
                // softmax backward: dS_ij = A_ij (dA_ij − Σ_l A_il dA_il)
                let dot: f64 = (0..n).map(|j| a.get(i, j) * da[j]).sum();
                for j in 0..n {
                    let w = a.get(i, j);
                    if w == 0.0 {
                        continue;
                    }
                    let ds = w * (da[j] - dot) * scale;
                    if ds == 0.0 {
                        continue;
                    }
                    let kj = &cache.k.row(base + j)[off..off + hd];
                    let qi = &cache.q.row(base + i)[off..off + hd];
                    for (g, x) in dq.row_mut(base + i)[off..off + hd].iter_mut().zip(kj) {
                        *g += ds * x;
                    }
                    for (g, x) in dk.row_mut(base + j)[off..off + hd].iter_mut().zip(qi) {
                        *g += ds * x;
                    }
                }
            }
        }
        let mut dx = self.query.backward(&cache.input, &dq, &mut grads.query)?;
        dx.add_assign(&self.key.backward(&cache.input, &dk, &mut grads.key)?)?;
        dx.add_assign(&self.value.backward(&cache.input, &dv, &mut grads.value)?)?;
        Ok(dx)
    }
}

impl Parameters for MultiHeadSelfAttention {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor2D)) {
        self.query.visit(&join(prefix, "query"), f);
        self.key.visit(&join(prefix, "key"), f);
        self.value.visit(&join(prefix, "value"), f);
        self.output.visit(&join(prefix, "output"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor2D)) {
        self.query.visit_mut(&join(prefix, "query"), f);
        self.key.visit_mut(&join(prefix, "key"), f);
        self.value.visit_mut(&join(prefix, "value"), f);
        self.output.visit_mut(&join(prefix, "output"), f);
    }
}
