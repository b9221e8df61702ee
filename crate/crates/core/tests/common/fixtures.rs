//! A small generated world and LCU networks over it.

use std::sync::OnceLock;

use staytime_lab::base_models::{BaseKind, Observation, TargetTransform};
use staytime_lab::datagen::{generate_synthetic, time_split, GeneratorConfig, SplitRatios, SyntheticData};
use staytime_lab::domain::SampleStats;
use staytime_lab::lcu::{
    batch_loss, EmbeddingInputs, Example, FeatureSpace, MissingPolicy, ModelConfig, NetShape, StaytimeNet,
};
use staytime_lab::nn::{grad_check, GradCheckOptions, GradCheckReport, Parameters};
use staytime_lab::objectives::LossWeights;

pub const SLOTS: usize = 4;

pub struct World {
    pub data: SyntheticData,
    pub examples: Vec<Example>,
    pub n_users: usize,
}

pub fn world() -> &'static World {
    static W: OnceLock<World> = OnceLock::new();
    W.get_or_init(|| {
        let cfg = GeneratorConfig {
            n_users: 30,
            n_videos: 60,
            n_impressions: 600,
            seed: 11,
            ..GeneratorConfig::default()
        };
        let data = generate_synthetic(&cfg).unwrap();
        let split = time_split(&data.dataset, SplitRatios::default()).unwrap();
        let fs = FeatureSpace::fit(&data.dataset, &split.train, SLOTS).unwrap();
        let examples = fs.examples(&split.train, &mut SampleStats::default()).unwrap();
        World {
            n_users: fs.n_users(),
            data,
            examples,
        }
    })
}

pub fn inputs(w: &World) -> EmbeddingInputs<'_> {
    EmbeddingInputs::new(&w.data.video_embeddings, &w.data.comment_embeddings, MissingPolicy::Zero)
}

pub fn small_model() -> ModelConfig {
    ModelConfig {
        user_embedding_dim: 3,
        model_dim: 4,
        n_heads: 2,
        projection_hidden: 5,
        head_hidden: [6, 4],
        aux_hidden: [5, 3],
        ..ModelConfig::default()
    }
}

pub fn net(kind: BaseKind, config: ModelConfig, seed: u64) -> StaytimeNet {
    let w = world();
    let shape = NetShape {
        n_users: w.n_users,
        slots: SLOTS,
        n_outputs: kind.n_outputs(),
        llm_dims: Some((w.data.video_embeddings.dim(), w.data.comment_embeddings.dim())),
    };
    StaytimeNet::new(config, shape, seed).unwrap()
}

pub fn transform(kind: BaseKind) -> TargetTransform {
    let obs: Vec<Observation> = world().examples.iter().map(|e| e.obs).collect();
    TargetTransform::fit(kind, &obs).unwrap()
}

/// One opened and one unopened example; the unopened one loses its last
/// real slot to padding so both masked and real slots are exercised.
pub fn pair() -> [Example; 2] {
    let ex = &world().examples;
    let full = |e: &&Example| e.slots.real_count() == SLOTS;
    let opened = ex.iter().filter(|e| e.obs.opened).find(full).unwrap().clone();
    let mut closed = ex.iter().filter(|e| !e.obs.opened).find(full).unwrap().clone();
    pad_slot(&mut closed, SLOTS - 1);
    [opened, closed]
}

pub fn pad_slot(e: &mut Example, s: usize) {
    e.slots.mask[s] = false;
    e.slots.comment_ids[s] = None;
    e.slots.popularity_keys[s] = None;
    e.slots.interaction_labels[s] = false;
    e.comment_features[s].iter_mut().for_each(|v| *v = 0.0);
}

pub fn loss_of(n: &StaytimeNet, kind: BaseKind, batch: &[&Example], weights: LossWeights) -> f64 {
    let w = world();
    let emb = inputs(w);
    batch_loss(n, &transform(kind), batch, Some(&emb), weights, None).unwrap().total
}

/// Finite-difference check of the full LCU loss for one base model on the
/// two-example batch from [`pair`].
pub fn lcu_gradient_report(kind: BaseKind, seed: u64) -> GradCheckReport {
    let w = world();
    let [a, b] = pair();
    let batch = [&a, &b];
    let weights = LossWeights::new(0.7, 0.4).unwrap();
    let mut n = net(kind, small_model(), seed);
    let t = transform(kind);
    let emb = inputs(w);
    let mut grads = n.zeros_like();
    batch_loss(&n, &t, &batch, Some(&emb), weights, Some(&mut grads)).unwrap();
    let opts = GradCheckOptions::default().with_kink_margin(1e-3);
    grad_check(&mut n, &grads, |m| loss_of(m, kind, &batch, weights), &opts)
}
