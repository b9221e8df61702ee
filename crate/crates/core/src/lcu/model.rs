use std::cell::Cell;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::features::{Example, COMMENT_FEATURE_DIM, USER_DENSE_DIM, VIDEO_FEATURE_DIM};
use super::EmbeddingTable;
use crate::error::{Error, Result};
use crate::nn::{Dense, Embedding, MhsaCache, MhsaConfig, Mlp, MlpCache, MultiHeadSelfAttention, Parameters, Tensor2D};

/// Token roles before the comment slots.
pub const FIXED_TOKENS: usize = 3;
const USER_TOKEN: usize = 0;
const VIDEO_FEATURE_TOKEN: usize = 1;
const VIDEO_LLM_TOKEN: usize = 2;

/// What to do when a video or comment id has no row in its embedding table.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissingPolicy {
    /// Use a zero vector and count the miss.
    #[default]
    Zero,
    Strict,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub user_embedding_dim: usize,
    pub model_dim: usize,
    pub n_heads: usize,
    /// Hidden width of the single-hidden-layer embedding projections.
    pub projection_hidden: usize,
    pub head_hidden: [usize; 2],
    pub aux_hidden: [usize; 2],
    /// Add the attention output to its input instead of replacing it.
    pub residual: bool,
    /// Build without the auxiliary heads.
    pub detach_aux: bool,
    pub missing: MissingPolicy,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            user_embedding_dim: 16,
            model_dim: 32,
            n_heads: 2,
            projection_hidden: 32,
            head_hidden: [64, 32],
            aux_hidden: [32, 16],
            residual: true,
            detach_aux: false,
            missing: MissingPolicy::Zero,
        }
    }
}

/// Embedding tables plus miss counters, shared read-only by a batch.
pub struct EmbeddingInputs<'a> {
    pub videos: &'a EmbeddingTable,
    pub comments: &'a EmbeddingTable,
    pub policy: MissingPolicy,
    missing_videos: Cell<usize>,
    missing_comments: Cell<usize>,
}

impl<'a> EmbeddingInputs<'a> {
    pub fn new(videos: &'a EmbeddingTable, comments: &'a EmbeddingTable, policy: MissingPolicy) -> Self {
        Self {
            videos,
            comments,
            policy,
            missing_videos: Cell::new(0),
            missing_comments: Cell::new(0),
        }
    }

    pub fn missing_videos(&self) -> usize {
        self.missing_videos.get()
    }

    pub fn missing_comments(&self) -> usize {
        self.missing_comments.get()
    }

    fn lookup(&self, table: &EmbeddingTable, id: u64, what: &str, counter: &Cell<usize>) -> Result<Vec<f64>> {
        match table.get(id) {
            Some(v) => Ok(v.to_vec()),
            None if self.policy == MissingPolicy::Zero => {
                counter.set(counter.get() + 1);
                if counter.get() == 1 {
                    log::warn!("no {what} embedding for id {id}; using zeros");
                }
                Ok(vec![0.0; table.dim()])
            }
            None => Err(Error::Data(format!("no {what} embedding for id {id}"))),
        }
    }
}

/// The embedding-fusion block: token projections and self-attention.
#[derive(Debug, Clone, PartialEq)]
pub struct Fusion {
    pub user_projection: Dense,
    pub video_projection: Dense,
    pub video_llm_projection: Mlp,
    pub comment_llm_projection: Mlp,
    pub comment_feature_projection: Dense,
    pub attention: MultiHeadSelfAttention,
}

impl Parameters for Fusion {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor2D)) {
        let p = |n: &str| crate::nn::join(prefix, n);
        self.user_projection.visit(&p("user_projection"), f);
        self.video_projection.visit(&p("video_projection"), f);
        self.video_llm_projection.visit(&p("video_llm_projection"), f);
        self.comment_llm_projection.visit(&p("comment_llm_projection"), f);
        self.comment_feature_projection.visit(&p("comment_feature_projection"), f);
        self.attention.visit(&p("attention"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor2D)) {
        let p = |n: &str| crate::nn::join(prefix, n);
        self.user_projection.visit_mut(&p("user_projection"), f);
        self.video_projection.visit_mut(&p("video_projection"), f);
        self.video_llm_projection.visit_mut(&p("video_llm_projection"), f);
        self.comment_llm_projection.visit_mut(&p("comment_llm_projection"), f);
        self.comment_feature_projection.visit_mut(&p("comment_feature_projection"), f);
        self.attention.visit_mut(&p("attention"), f);
    }
}

/// Shape facts a network needs beyond [`ModelConfig`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NetShape {
    pub n_users: usize,
    pub slots: usize,
    pub n_outputs: usize,
    /// `(E^V dim, E^C dim)` when the fusion block is present.
    pub llm_dims: Option<(usize, usize)>,
}

/// A staytime network: either the plain base model or the base model on
/// top of the fusion block, optionally with the two auxiliary heads.
#[derive(Debug, Clone, PartialEq)]
pub struct StaytimeNet {
    pub config: ModelConfig,
    pub shape: NetShape,
    pub user_embedding: Embedding,
    pub fusion: Option<Fusion>,
    pub head: Mlp,
    pub aux_popularity: Option<Mlp>,
    pub aux_interaction: Option<Mlp>,
}

impl Parameters for StaytimeNet {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor2D)) {
        let p = |n: &str| crate::nn::join(prefix, n);
        self.user_embedding.visit(&p("user_embedding"), f);
        self.fusion.visit(&p("fusion"), f);
        self.head.visit(&p("head"), f);
        self.aux_popularity.visit(&p("aux_popularity"), f);
        self.aux_interaction.visit(&p("aux_interaction"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor2D)) {
        let p = |n: &str| crate::nn::join(prefix, n);
        self.user_embedding.visit_mut(&p("user_embedding"), f);
        self.fusion.visit_mut(&p("fusion"), f);
        self.head.visit_mut(&p("head"), f);
        self.aux_popularity.visit_mut(&p("aux_popularity"), f);
        self.aux_interaction.visit_mut(&p("aux_interaction"), f);
    }
}

// Each component draws its initial weights from its own stream, so adding
// or removing one never shifts another's initialisation.
const STREAM_USER: u64 = 11;
const STREAM_FUSION: u64 = 12;
const STREAM_HEAD: u64 = 13;
const STREAM_AUX_POPULARITY: u64 = 14;
const STREAM_AUX_INTERACTION: u64 = 15;

pub(crate) fn component_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Outputs of a batch forward pass.
#[derive(Debug, Clone)]
pub struct BatchOutput {
    /// `B × n_outputs` base-model head outputs.
    pub outputs: Tensor2D,
    /// `B × slots` popularity scores (ŷ1), when the head exists.
    pub popularity_scores: Option<Tensor2D>,
    /// `B × slots` interaction logits (ŷ2), when the head exists.
    pub interaction_logits: Option<Tensor2D>,
}

/// Everything the backward pass needs.
pub struct BatchCache {
    batch: usize,
    user_rows: Vec<usize>,
    head_input: Tensor2D,
    head: MlpCache,
    fusion: Option<FusionCache>,
    aux_popularity: Option<MlpCache>,
    aux_interaction: Option<MlpCache>,
}

struct FusionCache {
    user_input: Tensor2D,
    video_input: Tensor2D,
    video_llm: MlpCache,
    comment_llm: MlpCache,
    comment_features: Tensor2D,
    slot_mask: Vec<bool>,
    attention: Option<MhsaCache>,
}

impl StaytimeNet {
    pub fn new(config: ModelConfig, shape: NetShape, seed: u64) -> Result<Self> {
        let mhsa = MhsaConfig::new(config.model_dim, config.n_heads)?;
        if shape.n_users == 0 || shape.slots == 0 || shape.n_outputs == 0 {
            return Err(Error::Config("network needs users, slots and outputs".into()));
        }
        let d = config.model_dim;
        let user_embedding = Embedding::new(shape.n_users, config.user_embedding_dim, &mut component_rng(seed, STREAM_USER));
        let (fusion, head_in) = match shape.llm_dims {
            Some((ev, ec)) => {
                let rng = &mut component_rng(seed, STREAM_FUSION);
                let h = config.projection_hidden;
                let fusion = Fusion {
                    user_projection: Dense::new(config.user_embedding_dim + USER_DENSE_DIM, d, rng),
                    video_projection: Dense::new(VIDEO_FEATURE_DIM, d, rng),
                    video_llm_projection: Mlp::new(&[ev, h, d], rng),
                    comment_llm_projection: Mlp::new(&[ec, h, d], rng),
                    comment_feature_projection: Dense::new(COMMENT_FEATURE_DIM, d, rng),
                    attention: MultiHeadSelfAttention::new(mhsa, rng),
                };
                (Some(fusion), (FIXED_TOKENS + 1) * d)
            }
            None => (
                None,
                config.user_embedding_dim + USER_DENSE_DIM + VIDEO_FEATURE_DIM + COMMENT_FEATURE_DIM,
            ),
        };
        let head = Mlp::three_layer(head_in, config.head_hidden, shape.n_outputs, &mut component_rng(seed, STREAM_HEAD));
        let aux = |stream| {
            (fusion.is_some() && !config.detach_aux)
                .then(|| Mlp::three_layer(d, config.aux_hidden, 1, &mut component_rng(seed, stream)))
        };
        Ok(Self {
            config,
            shape,
            user_embedding,
            aux_popularity: aux(STREAM_AUX_POPULARITY),
            aux_interaction: aux(STREAM_AUX_INTERACTION),
            fusion,
            head,
        })
    }

    pub fn n_tokens(&self) -> usize {
        FIXED_TOKENS + self.shape.slots
    }

    pub fn has_aux(&self) -> bool {
        self.aux_popularity.is_some() && self.aux_interaction.is_some()
    }

    /// Pre-attention token matrix (`B·n × model_dim`, example-major) and
    /// its mask. Padded slots are zero rows with mask `false`.
    pub fn assemble_tokens(&self, batch: &[&Example], emb: &EmbeddingInputs) -> Result<(Tensor2D, Vec<bool>)> {
        let (tokens, mask, _) = self.assemble(batch, emb)?;
        Ok((tokens, mask))
    }

    fn assemble(&self, batch: &[&Example], emb: &EmbeddingInputs) -> Result<(Tensor2D, Vec<bool>, FusionCache)> {
        let fusion = self
            .fusion
            .as_ref()
            .ok_or(Error::Unsupported("token assembly needs the fusion block"))?;
        let (b, k, d) = (batch.len(), self.shape.slots, self.config.model_dim);
        let n = FIXED_TOKENS + k;
        for e in batch {
            if e.slots.slots() != k {
                return Err(Error::Shape {
                    op: "assemble_tokens",
                    left: (k, 1),
                    right: (e.slots.slots(), 1),
                });
            }
        }

        let user_emb = self.user_embedding.lookup(&batch.iter().map(|e| e.user_row).collect::<Vec<_>>())?;
        let mut user_input = Tensor2D::zeros(b, self.config.user_embedding_dim + USER_DENSE_DIM);
        for (i, e) in batch.iter().enumerate() {
            let row = user_input.row_mut(i);
            row[..self.config.user_embedding_dim].copy_from_slice(user_emb.row(i));
            row[self.config.user_embedding_dim..].copy_from_slice(&e.user_dense);
        }
        let video_rows: Vec<&[f64]> = batch.iter().map(|e| e.video_features.as_slice()).collect();
        let video_input = Tensor2D::stack_rows(&video_rows);

        let mut ev = Vec::with_capacity(b * emb.videos.dim());
        for e in batch {
            ev.extend(emb.lookup(emb.videos, e.video_id.0, "video", &emb.missing_videos)?);
        }
        let ev = Tensor2D::new(b, emb.videos.dim(), ev)?;
        let mut ec = Vec::with_capacity(b * k * emb.comments.dim());
        let mut cf = Vec::with_capacity(b * k * COMMENT_FEATURE_DIM);
        let mut slot_mask = Vec::with_capacity(b * k);
        for e in batch {
            for s in 0..k {
                match e.slots.comment_ids[s] {
                    Some(id) if e.slots.mask[s] => {
                        ec.extend(emb.lookup(emb.comments, id.0, "comment", &emb.missing_comments)?)
                    }
                    _ => ec.extend(std::iter::repeat_n(0.0, emb.comments.dim())),
                }
                cf.extend_from_slice(&e.comment_features[s]);
                slot_mask.push(e.slots.mask[s]);
            }
        }
        let ec = Tensor2D::new(b * k, emb.comments.dim(), ec)?;
        let comment_features = Tensor2D::new(b * k, COMMENT_FEATURE_DIM, cf)?;

        let t_user = fusion.user_projection.forward(&user_input)?;
        let t_video = fusion.video_projection.forward(&video_input)?;
        let (t_llm, video_llm) = fusion.video_llm_projection.forward_cached(&ev)?;
        let (mut t_comments, comment_llm) = fusion.comment_llm_projection.forward_cached(&ec)?;
        t_comments.add_assign(&fusion.comment_feature_projection.forward(&comment_features)?)?;

        let mut tokens = Tensor2D::zeros(b * n, d);
        let mut mask = Vec::with_capacity(b * n);
        for i in 0..b {
            let base = i * n;
            tokens.row_mut(base + USER_TOKEN).copy_from_slice(t_user.row(i));
            tokens.row_mut(base + VIDEO_FEATURE_TOKEN).copy_from_slice(t_video.row(i));
            tokens.row_mut(base + VIDEO_LLM_TOKEN).copy_from_slice(t_llm.row(i));
            mask.extend_from_slice(&[true; FIXED_TOKENS]);
            for s in 0..k {
                if slot_mask[i * k + s] {
                    tokens.row_mut(base + FIXED_TOKENS + s).copy_from_slice(t_comments.row(i * k + s));
                }
                mask.push(slot_mask[i * k + s]);
            }
        }
        let cache = FusionCache {
            user_input,
            video_input,
            video_llm,
            comment_llm,
            comment_features,
            slot_mask,
            attention: None,
        };
        Ok((tokens, mask, cache))
    }

    /// Forward pass over a batch. `with_aux` controls whether the auxiliary
    /// heads run (they are skipped for evaluation).
    pub fn forward(
        &self,
        batch: &[&Example],
        emb: Option<&EmbeddingInputs>,
        with_aux: bool,
    ) -> Result<(BatchOutput, BatchCache)> {
        if batch.is_empty() {
            return Err(Error::Data("empty batch".into()));
        }
        let b = batch.len();
        let user_rows: Vec<usize> = batch.iter().map(|e| e.user_row).collect();
        let Some(fusion) = &self.fusion else {
            let user_emb = self.user_embedding.lookup(&user_rows)?;
            let width = self.head.inputs();
            let mut input = Tensor2D::zeros(b, width);
            let u = self.config.user_embedding_dim;
            for (i, e) in batch.iter().enumerate() {
                let row = input.row_mut(i);
                row[..u].copy_from_slice(user_emb.row(i));
                row[u..u + USER_DENSE_DIM].copy_from_slice(&e.user_dense);
                let off = u + USER_DENSE_DIM;
                row[off..off + VIDEO_FEATURE_DIM].copy_from_slice(&e.video_features);
                let off = off + VIDEO_FEATURE_DIM;
                let real = e.slots.real_count();
                if real > 0 {
                    for (s, f) in e.comment_features.iter().enumerate() {
                        if e.slots.mask[s] {
                            for (dst, x) in row[off..off + COMMENT_FEATURE_DIM].iter_mut().zip(f) {
                                *dst += x / real as f64;
                            }
                        }
                    }
                }
            }
            let (outputs, head) = self.head.forward_cached(&input)?;
            return Ok((
                BatchOutput {
                    outputs,
                    popularity_scores: None,
                    interaction_logits: None,
                },
                BatchCache {
                    batch: b,
                    user_rows,
                    head_input: input,
                    head,
                    fusion: None,
                    aux_popularity: None,
                    aux_interaction: None,
                },
            ));
        };

        let emb = emb.ok_or(Error::Unsupported("the fusion block needs embedding tables"))?;
        let (tokens, mask, mut fc) = self.assemble(batch, emb)?;
        let (k, d) = (self.shape.slots, self.config.model_dim);
        let n = FIXED_TOKENS + k;
        let (mut fused, attn) = fusion.attention.forward_grouped(&tokens, n, &mask)?;
        if self.config.residual {
            fused.add_assign(&tokens)?;
        }
        fc.attention = Some(attn);

        let mut head_input = Tensor2D::zeros(b, (FIXED_TOKENS + 1) * d);
        let mut comment_rows = Tensor2D::zeros(b * k, d);
        for i in 0..b {
            let base = i * n;
            let real = fc.slot_mask[i * k..(i + 1) * k].iter().filter(|m| **m).count();
            let row = head_input.row_mut(i);
            for t in 0..FIXED_TOKENS {
                row[t * d..(t + 1) * d].copy_from_slice(fused.row(base + t));
            }
            for s in 0..k {
                comment_rows.row_mut(i * k + s).copy_from_slice(fused.row(base + FIXED_TOKENS + s));
                if fc.slot_mask[i * k + s] {
                    let pooled = &mut row[FIXED_TOKENS * d..];
                    for (p, x) in pooled.iter_mut().zip(fused.row(base + FIXED_TOKENS + s)) {
                        *p += x / real as f64;
                    }
                }
            }
        }
        let (outputs, head) = self.head.forward_cached(&head_input)?;

        let run_aux = |m: &Option<Mlp>| -> Result<Option<(Tensor2D, MlpCache)>> {
            match m {
                Some(mlp) if with_aux => {
                    let (y, c) = mlp.forward_cached(&comment_rows)?;
                    Ok(Some((Tensor2D::from_vec(b, k, y.into_data()), c)))
                }
                _ => Ok(None),
            }
        };
        let pop = run_aux(&self.aux_popularity)?;
        let inter = run_aux(&self.aux_interaction)?;
        let (popularity_scores, aux_popularity) = pop.map_or((None, None), |(y, c)| (Some(y), Some(c)));
        let (interaction_logits, aux_interaction) = inter.map_or((None, None), |(y, c)| (Some(y), Some(c)));
        Ok((
            BatchOutput {
                outputs,
                popularity_scores,
                interaction_logits,
            },
            BatchCache {
                batch: b,
                user_rows,
                head_input,
                head,
                fusion: Some(fc),
                aux_popularity,
                aux_interaction,
            },
        ))
    }

    /// Accumulates parameter gradients into `grads`. Upstream gradients on
    /// the auxiliary scores are `B × slots` and must already carry their λ.
    pub fn backward(
        &self,
        cache: &BatchCache,
        d_outputs: &Tensor2D,
        d_popularity: Option<&Tensor2D>,
        d_interaction: Option<&Tensor2D>,
        grads: &mut StaytimeNet,
    ) -> Result<()> {
        let b = cache.batch;
        let d_head_in = self.head.backward(&cache.head, d_outputs, &mut grads.head)?;
        let u = self.config.user_embedding_dim;

        let (Some(fusion), Some(fc)) = (&self.fusion, &cache.fusion) else {
            let d_user = d_head_in.columns(0, u);
            return self.user_embedding.backward(&cache.user_rows, &d_user, &mut grads.user_embedding);
        };
        let g_fusion = grads.fusion.as_mut().expect("gradient mirrors parameters");
        let (k, d) = (self.shape.slots, self.config.model_dim);
        let n = FIXED_TOKENS + k;

        let mut d_comment_rows = Tensor2D::zeros(b * k, d);
        let aux_parts = [
            (&self.aux_popularity, &mut grads.aux_popularity, &cache.aux_popularity, d_popularity),
            (&self.aux_interaction, &mut grads.aux_interaction, &cache.aux_interaction, d_interaction),
        ];
        for (mlp, g, c, upstream) in aux_parts {
            if let (Some(mlp), Some(g), Some(c), Some(up)) = (mlp, g.as_mut(), c, upstream) {
                let up = Tensor2D::from_vec(b * k, 1, up.data().to_vec());
                d_comment_rows.add_assign(&mlp.backward(c, &up, g)?)?;
            }
        }

        let mut d_fused = Tensor2D::zeros(b * n, d);
        for i in 0..b {
            let base = i * n;
            let real = fc.slot_mask[i * k..(i + 1) * k].iter().filter(|m| **m).count();
            let src = d_head_in.row(i);
            for t in 0..FIXED_TOKENS {
                d_fused.row_mut(base + t).copy_from_slice(&src[t * d..(t + 1) * d]);
            }
            for s in 0..k {
                let dst = d_fused.row_mut(base + FIXED_TOKENS + s);
                dst.copy_from_slice(d_comment_rows.row(i * k + s));
                if fc.slot_mask[i * k + s] {
                    for (g, x) in dst.iter_mut().zip(&src[FIXED_TOKENS * d..]) {
                        *g += x / real as f64;
                    }
                }
            }
        }
        let attn = fc.attention.as_ref().expect("forward ran attention");
        let mut d_tokens = fusion.attention.backward(attn, &d_fused, &mut g_fusion.attention)?;
        if self.config.residual {
            d_tokens.add_assign(&d_fused)?;
        }

        let mut d_user = Tensor2D::zeros(b, d);
        let mut d_video = Tensor2D::zeros(b, d);
        let mut d_llm = Tensor2D::zeros(b, d);
        let mut d_comments = Tensor2D::zeros(b * k, d);
        for i in 0..b {
            let base = i * n;
            d_user.row_mut(i).copy_from_slice(d_tokens.row(base + USER_TOKEN));
            d_video.row_mut(i).copy_from_slice(d_tokens.row(base + VIDEO_FEATURE_TOKEN));
            d_llm.row_mut(i).copy_from_slice(d_tokens.row(base + VIDEO_LLM_TOKEN));
            for s in 0..k {
                // Padded tokens are forced to zero, so nothing flows back.
                if fc.slot_mask[i * k + s] {
                    d_comments.row_mut(i * k + s).copy_from_slice(d_tokens.row(base + FIXED_TOKENS + s));
                }
            }
        }
        let d_user_in = fusion
            .user_projection
            .backward(&fc.user_input, &d_user, &mut g_fusion.user_projection)?;
        fusion
            .video_projection
            .backward(&fc.video_input, &d_video, &mut g_fusion.video_projection)?;
        fusion
            .video_llm_projection
            .backward(&fc.video_llm, &d_llm, &mut g_fusion.video_llm_projection)?;
        fusion
            .comment_llm_projection
            .backward(&fc.comment_llm, &d_comments, &mut g_fusion.comment_llm_projection)?;
        fusion.comment_feature_projection.backward(
            &fc.comment_features,
            &d_comments,
            &mut g_fusion.comment_feature_projection,
        )?;
        self.user_embedding
            .backward(&cache.user_rows, &d_user_in.columns(0, u), &mut grads.user_embedding)
    }

    /// The pooled vector the base-model head consumes, one row per example.
    pub fn head_input<'c>(&self, cache: &'c BatchCache) -> &'c Tensor2D {
        &cache.head_input
    }
}
