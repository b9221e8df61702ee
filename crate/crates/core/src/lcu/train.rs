use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::features::Example;
use super::model::{component_rng, EmbeddingInputs, MissingPolicy, ModelConfig, NetShape, StaytimeNet};
use crate::base_models::{BaseKind, Prediction, TargetTransform};
use crate::error::{Error, Result};
use crate::nn::{read_checkpoint, write_checkpoint, Adam, AdamConfig, Parameters, Tensor2D};
use crate::objectives::{bce_loss, listmle_loss, xauc, LossWeights};

const STREAM_SHUFFLE: u64 = 21;
const PREDICT_CHUNK: usize = 512;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub weights: LossWeights,
    pub adam: AdamConfig,
    pub epochs: usize,
    pub batch_size: usize,
    /// Epochs without a validation XAUC improvement before stopping.
    pub patience: usize,
    pub seed: u64,
    /// Where the last good parameters go if training diverges.
    pub checkpoint_dir: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            weights: LossWeights::default(),
            adam: AdamConfig::default(),
            epochs: 8,
            batch_size: 128,
            patience: 2,
            seed: 1,
            checkpoint_dir: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch_size must be positive".into()));
        }
        if !(self.adam.lr.is_finite() && self.adam.lr > 0.0) {
            return Err(Error::Config(format!("learning rate {} must be positive", self.adam.lr)));
        }
        Ok(())
    }
}

/// Loss components of one batch, each a mean over the rows it applies to.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossParts {
    pub staytime: f64,
    pub r1: f64,
    pub r2: f64,
    pub total: f64,
    pub staytime_rows: usize,
    pub r1_rows: usize,
    pub r2_rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub staytime_loss: f64,
    pub r1_loss: f64,
    pub r2_loss: f64,
    pub total_loss: f64,
    pub val_xauc: f64,
}

/// Training inputs. Embedding tables are required exactly when the model
/// has a fusion block.
pub struct TrainInputs<'a> {
    pub train: &'a [Example],
    pub validation: &'a [Example],
    pub n_users: usize,
    pub slots: usize,
    pub embeddings: Option<&'a EmbeddingInputs<'a>>,
}

/// Loss of a batch and, when `grads` is given, its gradient accumulated
/// into `grads`.
pub fn batch_loss(
    net: &StaytimeNet,
    transform: &TargetTransform,
    batch: &[&Example],
    emb: Option<&EmbeddingInputs>,
    weights: LossWeights,
    grads: Option<&mut StaytimeNet>,
) -> Result<LossParts> {
    let (out, cache) = net.forward(batch, emb, true)?;
    let b = batch.len();
    let k = net.shape.slots;
    let mut parts = LossParts::default();

    let mut d_out = Tensor2D::zeros(b, net.shape.n_outputs);
    let st_rows = batch.iter().filter(|e| transform.trains_on(&e.obs)).count();
    for (i, e) in batch.iter().enumerate() {
        if !transform.trains_on(&e.obs) {
            continue;
        }
        let (l, g) = transform.row_loss(out.outputs.row(i), &e.obs);
        parts.staytime += l / st_rows as f64;
        for (d, g) in d_out.row_mut(i).iter_mut().zip(g) {
            *d = g / st_rows as f64;
        }
    }
    parts.staytime_rows = st_rows;

    let mut d_pop = out.popularity_scores.as_ref().map(|_| Tensor2D::zeros(b, k));
    if let (Some(scores), Some(d)) = (&out.popularity_scores, d_pop.as_mut()) {
        let rows: Vec<usize> = (0..b).filter(|&i| batch[i].slots.real_count() > 0).collect();
        for &i in &rows {
            let s = &batch[i].slots;
            let (l, g) = listmle_loss(scores.row(i), &s.popularity_order(), &s.mask)?;
            parts.r1 += l / rows.len() as f64;
            for (dst, g) in d.row_mut(i).iter_mut().zip(g) {
                *dst = weights.lambda1 * g / rows.len() as f64;
            }
        }
        parts.r1_rows = rows.len();
    }

    let mut d_inter = out.interaction_logits.as_ref().map(|_| Tensor2D::zeros(b, k));
    if let (Some(logits), Some(d)) = (&out.interaction_logits, d_inter.as_mut()) {
        let rows: Vec<usize> = (0..b)
            .filter(|&i| batch[i].obs.opened && batch[i].slots.real_count() > 0)
            .collect();
        for &i in &rows {
            let s = &batch[i].slots;
            let labels: Vec<f64> = s.interaction_labels.iter().map(|&l| f64::from(u8::from(l))).collect();
            let (l, g) = bce_loss(logits.row(i), &labels, &s.mask)?;
            parts.r2 += l / rows.len() as f64;
            for (dst, g) in d.row_mut(i).iter_mut().zip(g) {
                *dst = weights.lambda2 * g / rows.len() as f64;
            }
        }
        parts.r2_rows = rows.len();
    }
    parts.total = parts.staytime + weights.lambda1 * parts.r1 + weights.lambda2 * parts.r2;

    if let Some(grads) = grads {
        net.backward(&cache, &d_out, d_pop.as_ref(), d_inter.as_ref(), grads)?;
    }
    Ok(parts)
}

/// A trained network together with its fitted target transform.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub transform: TargetTransform,
    pub net: StaytimeNet,
    pub log: Vec<EpochLog>,
    pub best_epoch: usize,
}

impl TrainedModel {
    pub fn kind(&self) -> BaseKind {
        self.transform.kind()
    }

    pub fn is_lcu(&self) -> bool {
        self.net.fusion.is_some()
    }

    /// Raw head outputs, one row per example.
    pub fn outputs(&self, examples: &[Example], emb: Option<&EmbeddingInputs>) -> Result<Vec<Vec<f64>>> {
        let mut out = Vec::with_capacity(examples.len());
        for chunk in examples.chunks(PREDICT_CHUNK) {
            let refs: Vec<&Example> = chunk.iter().collect();
            let (o, _) = self.net.forward(&refs, emb, false)?;
            out.extend((0..chunk.len()).map(|i| o.outputs.row(i).to_vec()));
        }
        Ok(out)
    }

    pub fn predict(&self, examples: &[Example], emb: Option<&EmbeddingInputs>) -> Result<Vec<Prediction>> {
        Ok(self
            .outputs(examples, emb)?
            .iter()
            .zip(examples)
            .map(|(o, e)| self.transform.predict(o, e.obs.duration_s))
            .collect())
    }

    pub fn sections(&self) -> Vec<(String, Tensor2D)> {
        let mut s = vec![("meta".to_string(), encode_meta(&self.net.config, &self.net.shape))];
        s.extend(self.transform.sections());
        s.extend(self.net.named_tensors("net"));
        s
    }

    pub fn from_sections(sections: &BTreeMap<String, Tensor2D>) -> Result<Self> {
        let meta = sections
            .get("meta")
            .ok_or_else(|| Error::Data("checkpoint lacks `meta`".into()))?;
        let (config, shape) = decode_meta(meta)?;
        let transform = TargetTransform::from_sections(sections)?;
        let mut net = StaytimeNet::new(config, shape, 0)?;
        net.load_named("net", sections)?;
        Ok(Self {
            transform,
            net,
            log: Vec::new(),
            best_epoch: 0,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_checkpoint(path, &self.sections())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_sections(&read_checkpoint(path)?)
    }
}

const META_LEN: usize = 17;

fn encode_meta(c: &ModelConfig, s: &NetShape) -> Tensor2D {
    let (has_llm, ev, ec) = match s.llm_dims {
        Some((ev, ec)) => (1, ev, ec),
        None => (0, 0, 0),
    };
    let v = [
        c.user_embedding_dim,
        c.model_dim,
        c.n_heads,
        c.projection_hidden,
        c.head_hidden[0],
        c.head_hidden[1],
        c.aux_hidden[0],
        c.aux_hidden[1],
        usize::from(c.residual),
        usize::from(c.detach_aux),
        usize::from(c.missing == MissingPolicy::Strict),
        s.n_users,
        s.slots,
        s.n_outputs,
        has_llm,
        ev,
        ec,
    ];
    Tensor2D::from_vec(1, META_LEN, v.iter().map(|&x| x as f64).collect())
}

fn decode_meta(t: &Tensor2D) -> Result<(ModelConfig, NetShape)> {
    let v = t.data();
    if v.len() != META_LEN || v.iter().any(|x| !(x.is_finite() && *x >= 0.0 && x.fract() == 0.0)) {
        return Err(Error::Data("checkpoint `meta` is malformed".into()));
    }
    let u: Vec<usize> = v.iter().map(|&x| x as usize).collect();
    let config = ModelConfig {
        user_embedding_dim: u[0],
        model_dim: u[1],
        n_heads: u[2],
        projection_hidden: u[3],
        head_hidden: [u[4], u[5]],
        aux_hidden: [u[6], u[7]],
        residual: u[8] == 1,
        detach_aux: u[9] == 1,
        missing: if u[10] == 1 { MissingPolicy::Strict } else { MissingPolicy::Zero },
    };
    let shape = NetShape {
        n_users: u[11],
        slots: u[12],
        n_outputs: u[13],
        llm_dims: (u[14] == 1).then_some((u[15], u[16])),
    };
    Ok((config, shape))
}

fn validation_xauc(model: &TrainedModel, val: &[Example], emb: Option<&EmbeddingInputs>) -> Result<f64> {
    let opened: Vec<Example> = val.iter().filter(|e| e.obs.opened).cloned().collect();
    let preds = model.predict(&opened, emb)?;
    let scores: Vec<f64> = preds.iter().map(Prediction::order_score).collect();
    let truth: Vec<f64> = opened.iter().map(|e| e.obs.staytime_s).collect();
    xauc(&scores, &truth)
}

/// Mini-batch Adam on `L_staytime + λ1·L_R1 + λ2·L_R2` with seeded shuffling
/// and early stopping on validation XAUC. The returned model holds the
/// parameters of the best epoch.
pub fn train_model(kind: BaseKind, inputs: &TrainInputs, cfg: &TrainConfig) -> Result<TrainedModel> {
    cfg.validate()?;
    let obs: Vec<_> = inputs.train.iter().map(|e| e.obs).collect();
    let transform = TargetTransform::fit(kind, &obs)?;
    let llm_dims = inputs.embeddings.map(|e| (e.videos.dim(), e.comments.dim()));
    let shape = NetShape {
        n_users: inputs.n_users,
        slots: inputs.slots,
        n_outputs: transform.n_outputs(),
        llm_dims,
    };
    let net = StaytimeNet::new(cfg.model, shape, cfg.seed)?;
    let rows: Vec<&Example> = inputs.train.iter().filter(|e| transform.trains_on(&e.obs)).collect();
    if rows.is_empty() {
        return Err(Error::Data("no training rows for this model".into()));
    }

    let mut model = TrainedModel {
        transform,
        net,
        log: Vec::new(),
        best_epoch: 0,
    };
    let mut best: Option<(f64, StaytimeNet)> = None;
    let mut adam = Adam::new(cfg.adam);
    let mut shuffle_rng = component_rng(cfg.seed, STREAM_SHUFFLE);
    let mut order: Vec<usize> = (0..rows.len()).collect();
    let mut grads = model.net.zeros_like();
    let mut stale = 0;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut sums = [0.0; 4];
        let mut batches = 0.0;
        for idx in order.chunks(cfg.batch_size) {
            let batch: Vec<&Example> = idx.iter().map(|&i| rows[i]).collect();
            grads.zero();
            let parts = batch_loss(
                &model.net,
                &model.transform,
                &batch,
                inputs.embeddings,
                cfg.weights,
                Some(&mut grads),
            )?;
            let stepped = if parts.total.is_finite() {
                adam.step(&mut model.net, &grads)
            } else {
                Err(Error::Diverged { epoch })
            };
            if let Err(e) = stepped {
                return Err(diverged(e, epoch, &model, best.as_ref().map(|b| &b.1), cfg));
            }
            for (s, v) in sums.iter_mut().zip([parts.staytime, parts.r1, parts.r2, parts.total]) {
                *s += v;
            }
            batches += 1.0;
        }
        let val_xauc = validation_xauc(&model, inputs.validation, inputs.embeddings)?;
        log::info!("epoch {epoch}: loss {:.6} val_xauc {val_xauc:.6}", sums[3] / batches);
        model.log.push(EpochLog {
            epoch,
            staytime_loss: sums[0] / batches,
            r1_loss: sums[1] / batches,
            r2_loss: sums[2] / batches,
            total_loss: sums[3] / batches,
            val_xauc,
        });
        if best.as_ref().is_none_or(|(b, _)| val_xauc > *b) {
            best = Some((val_xauc, model.net.clone()));
            model.best_epoch = epoch;
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }
    if let Some((_, net)) = best {
        model.net = net;
    }
    Ok(model)
}

fn diverged(err: Error, epoch: usize, model: &TrainedModel, best: Option<&StaytimeNet>, cfg: &TrainConfig) -> Error {
    let err = match err {
        Error::NonFiniteGradient(_) => Error::Diverged { epoch },
        e => e,
    };
    if let (Some(dir), Some(net)) = (&cfg.checkpoint_dir, best) {
        let good = TrainedModel {
            net: net.clone(),
            log: model.log.clone(),
            ..model.clone()
        };
        let path = dir.join("last_good.lcuw");
        match good.save(&path) {
            Ok(()) => log::warn!("training diverged; wrote {}", path.display()),
            Err(e) => log::warn!("training diverged and the checkpoint could not be written: {e}"),
        }
    }
    err
}
