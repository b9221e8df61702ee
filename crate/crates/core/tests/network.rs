//! Gradient checks and structural invariants of the layers and the full network.

use std::time::Instant;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use staytime_lab::base_models::BaseKind;
use staytime_lab::lcu::{batch_loss, Example, NetShape, StaytimeNet};
use staytime_lab::nn::{
    grad_check, Dense, Embedding, GradCheckOptions, MhsaConfig, Mlp, MultiHeadSelfAttention, Parameters, Tensor2D,
};
use staytime_lab::objectives::{bce_loss, listmle_loss, LossWeights};

mod common;

use common::fixtures::{inputs, lcu_gradient_report, net, pair, small_model, transform, world, SLOTS};

#[test]
fn lcu_loss_gradient_matches_finite_differences() {
    let start = Instant::now();
    for (i, kind) in BaseKind::ALL.into_iter().enumerate() {
        let r = lcu_gradient_report(kind, 100 + i as u64);
        assert!(r.passes(1e-4), "{kind:?}: {r:?}");
        assert!(r.checked > 100);
    }
    assert!(start.elapsed().as_secs() < 30);
}

#[test]
fn plain_network_gradient_matches_finite_differences() {
    let w = world();
    let shape = NetShape {
        n_users: w.n_users,
        slots: SLOTS,
        n_outputs: 2,
        llm_dims: None,
    };
    let mut n = StaytimeNet::new(small_model(), shape, 3).unwrap();
    let [a, b] = pair();
    let batch = [&a, &b];
    let t = transform(BaseKind::Wlr);
    let mut grads = n.zeros_like();
    batch_loss(&n, &t, &batch, None, LossWeights::zero(), Some(&mut grads)).unwrap();
    let f = |m: &StaytimeNet| batch_loss(m, &t, &batch, None, LossWeights::zero(), None).unwrap().total;
    let r = grad_check(&mut n, &grads, f, &GradCheckOptions::default().with_kink_margin(1e-3));
    assert!(r.passes(1e-4), "{r:?}");
}

fn weighted_sum(y: &Tensor2D, w: &Tensor2D) -> f64 {
    y.data().iter().zip(w.data()).map(|(a, b)| a * b).sum()
}

#[test]
fn linear_layer_gradient_is_exact_to_1e7() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut layer = Dense::new(5, 3, &mut rng);
    let x = Tensor2D::xavier_uniform(4, 5, &mut rng);
    let w = Tensor2D::xavier_uniform(4, 3, &mut rng);
    let mut g = layer.zeros_like();
    let dx = layer.backward(&x, &w, &mut g).unwrap();
    let r = grad_check(&mut layer, &g, |l| weighted_sum(&l.forward(&x).unwrap(), &w), &GradCheckOptions::default());
    assert!(r.passes(1e-7), "{r:?}");
    let mut xin = x.clone();
    let r = grad_check(&mut xin, &dx, |xi| weighted_sum(&layer.forward(xi).unwrap(), &w), &GradCheckOptions::default());
    assert!(r.passes(1e-7), "{r:?}");
}

#[test]
fn layer_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let opts = GradCheckOptions::default().with_kink_margin(1e-3);

    let mut mlp = Mlp::three_layer(6, [7, 5], 2, &mut rng);
    let x = Tensor2D::xavier_uniform(5, 6, &mut rng);
    let w = Tensor2D::xavier_uniform(5, 2, &mut rng);
    let (_, cache) = mlp.forward_cached(&x).unwrap();
    let mut g = mlp.zeros_like();
    mlp.backward(&cache, &w, &mut g).unwrap();
    let r = grad_check(&mut mlp, &g, |m| weighted_sum(&m.forward(&x).unwrap(), &w), &opts);
    assert!(r.passes(1e-4), "mlp {r:?}");

    let mut attn = MultiHeadSelfAttention::new(MhsaConfig::new(4, 2).unwrap(), &mut rng);
    let tokens = Tensor2D::xavier_uniform(6, 4, &mut rng);
    let mask = [true, true, false, true, false, true];
    let up = Tensor2D::xavier_uniform(6, 4, &mut rng);
    let (_, cache) = attn.forward_grouped(&tokens, 3, &mask).unwrap();
    let mut g = attn.zeros_like();
    let dx = attn.backward(&cache, &up, &mut g).unwrap();
    let f = |m: &MultiHeadSelfAttention, t: &Tensor2D| weighted_sum(&m.forward_grouped(t, 3, &mask).unwrap().0, &up);
    let r = grad_check(&mut attn, &g, |m| f(m, &tokens), &opts);
    assert!(r.passes(1e-4), "attention {r:?}");
    let mut tin = tokens.clone();
    let r = grad_check(&mut tin, &dx, |t| f(&attn, t), &opts);
    assert!(r.passes(1e-4), "attention input {r:?}");

    let mut table = Embedding::new(5, 3, &mut rng);
    let ids = [4, 0, 4, 2];
    let up = Tensor2D::xavier_uniform(4, 3, &mut rng);
    let mut g = table.zeros_like();
    table.backward(&ids, &up, &mut g).unwrap();
    let r = grad_check(&mut table, &g, |t| weighted_sum(&t.lookup(&ids).unwrap(), &up), &opts);
    assert!(r.passes(1e-4), "embedding {r:?}");
}

#[test]
fn padded_slot_contents_have_no_effect() {
    let w = world();
    let [a, b] = pair();
    let mut b2 = b.clone();
    // Give the padded slot a real-looking comment and features.
    b2.slots.comment_ids[SLOTS - 1] = a.slots.comment_ids[0];
    b2.comment_features[SLOTS - 1] = a.comment_features[0].clone();
    b2.slots.popularity_keys[SLOTS - 1] = Some((999, 999));
    b2.slots.interaction_labels[SLOTS - 1] = true;
    let n = net(BaseKind::Vr, small_model(), 9);
    let t = transform(BaseKind::Vr);
    let emb = inputs(w);
    let weights = LossWeights::new(1.0, 1.0).unwrap();
    let mut g1 = n.zeros_like();
    let mut g2 = n.zeros_like();
    let l1 = batch_loss(&n, &t, &[&a, &b], Some(&emb), weights, Some(&mut g1)).unwrap();
    let l2 = batch_loss(&n, &t, &[&a, &b2], Some(&emb), weights, Some(&mut g2)).unwrap();
    assert_eq!(l1.total, l2.total);
    assert_eq!(g1, g2);

    let (out, _) = n.forward(&[&b], Some(&emb), true).unwrap();
    let slots = &b.slots;
    let (_, d_pop) = listmle_loss(out.popularity_scores.unwrap().row(0), &slots.popularity_order(), &slots.mask).unwrap();
    let labels: Vec<f64> = slots.interaction_labels.iter().map(|&l| f64::from(u8::from(l))).collect();
    let (_, d_inter) = bce_loss(out.interaction_logits.unwrap().row(0), &labels, &slots.mask).unwrap();
    assert_eq!((d_pop[SLOTS - 1], d_inter[SLOTS - 1]), (0.0, 0.0));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn attention_rows_are_distributions(
        seed in 0u64..1000,
        mask in prop::collection::vec(any::<bool>(), 1..9),
    ) {
        prop_assume!(mask.iter().any(|m| *m));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let attn = MultiHeadSelfAttention::new(MhsaConfig::new(4, 2).unwrap(), &mut rng);
        let tokens = Tensor2D::xavier_uniform(mask.len(), 4, &mut rng);
        let (_, cache) = attn.forward_cached(&tokens, &mask).unwrap();
        for a in cache.attention_weights() {
            for i in 0..mask.len() {
                let row = a.row(i);
                prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                for (j, &m) in mask.iter().enumerate() {
                    prop_assert!(row[j] >= 0.0);
                    if !m {
                        prop_assert_eq!(row[j], 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn losses_are_invariant_to_slot_order(perm in Just((0..SLOTS).collect::<Vec<_>>()).prop_shuffle(), seed in 0u64..50) {
        let w = world();
        let [a, b] = pair();
        let permute = |e: &Example| {
            let mut p = e.clone();
            p.slots = e.slots.permuted(&perm);
            p.comment_features = perm.iter().map(|&i| e.comment_features[i].clone()).collect();
            p
        };
        let (pa, pb) = (permute(&a), permute(&b));
        let n = net(BaseKind::D2q, small_model(), seed);
        let t = transform(BaseKind::D2q);
        let emb = inputs(w);
        let weights = LossWeights::new(1.0, 1.0).unwrap();
        let x = batch_loss(&n, &t, &[&a, &b], Some(&emb), weights, None).unwrap();
        let y = batch_loss(&n, &t, &[&pa, &pb], Some(&emb), weights, None).unwrap();
        prop_assert!((x.r1 - y.r1).abs() < 1e-9);
        prop_assert!((x.r2 - y.r2).abs() < 1e-9);
        prop_assert!((x.staytime - y.staytime).abs() < 1e-9);
    }
}
