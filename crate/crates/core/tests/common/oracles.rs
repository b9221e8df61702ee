//! Quadratic-time reference implementations of the metrics.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use staytime_lab::objectives::{
    gauc, mae, mrr, ndcg_at_k, relevance_labels, rmse, staytime_at_n, xauc, xgauc, RankedItem,
};

pub fn xauc_ref(p: &[f64], t: &[f64]) -> Option<(f64, f64)> {
    let mut credit = 0.0;
    let mut pairs = 0.0;
    for i in 0..p.len() {
        for j in 0..i {
            if t[i] == t[j] {
                continue;
            }
            pairs += 1.0;
            if p[i] == p[j] {
                credit += 0.5;
            } else if (p[i] > p[j]) == (t[i] > t[j]) {
                credit += 1.0;
            }
        }
    }
    (pairs > 0.0).then_some((credit, pairs))
}

pub fn sorted_ref(items: &[RankedItem]) -> Vec<RankedItem> {
    // Selection sort: highest prediction first, lowest id on ties.
    let mut rest = items.to_vec();
    let mut out = Vec::new();
    while !rest.is_empty() {
        let mut best = 0;
        for i in 1..rest.len() {
            let (a, b) = (&rest[i], &rest[best]);
            if a.pred > b.pred || (a.pred == b.pred && a.item_id < b.item_id) {
                best = i;
            }
        }
        out.push(rest.remove(best));
    }
    out
}

pub fn gauc_ref(users: &[Vec<RankedItem>]) -> Option<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    for u in users {
        let pos: Vec<&RankedItem> = u.iter().filter(|i| i.relevant).collect();
        let neg: Vec<&RankedItem> = u.iter().filter(|i| !i.relevant).collect();
        if pos.is_empty() || neg.is_empty() {
            continue;
        }
        let mut c = 0.0;
        for p in &pos {
            for n in &neg {
                c += if p.pred > n.pred {
                    1.0
                } else if p.pred == n.pred {
                    0.5
                } else {
                    0.0
                };
            }
        }
        num += u.len() as f64 * c / (pos.len() * neg.len()) as f64;
        den += u.len() as f64;
    }
    (den > 0.0).then(|| num / den)
}

pub fn per_user_mean(users: &[Vec<RankedItem>], f: impl Fn(&[RankedItem]) -> f64) -> f64 {
    let vals: Vec<f64> = users.iter().filter(|u| !u.is_empty()).map(|u| f(&sorted_ref(u))).collect();
    if vals.is_empty() {
        0.0
    } else {
        vals.iter().sum::<f64>() / vals.len() as f64
    }
}

pub fn mrr_ref(users: &[Vec<RankedItem>]) -> f64 {
    per_user_mean(users, |l| {
        for (r, i) in l.iter().enumerate() {
            if i.relevant {
                return 1.0 / (r as f64 + 1.0);
            }
        }
        0.0
    })
}

pub fn ndcg_ref(users: &[Vec<RankedItem>], k: usize) -> f64 {
    per_user_mean(users, |l| {
        let mut dcg = 0.0;
        for (r, i) in l.iter().enumerate().take(k) {
            if i.relevant {
                dcg += 1.0 / (r as f64 + 2.0).log2();
            }
        }
        let n_rel = l.iter().filter(|i| i.relevant).count();
        let mut idcg = 0.0;
        for r in 0..k.min(n_rel) {
            idcg += 1.0 / (r as f64 + 2.0).log2();
        }
        if idcg == 0.0 {
            0.0
        } else {
            dcg / idcg
        }
    })
}

pub fn staytime_ref(users: &[Vec<RankedItem>], n: usize) -> f64 {
    per_user_mean(users, |l| {
        let m = n.min(l.len());
        l[..m].iter().map(|i| i.staytime).sum::<f64>() / m as f64
    })
}

fn agree(name: &str, fixture: usize, got: Result<f64, staytime_lab::Error>, want: Option<f64>) -> Result<(), String> {
    match (got, want) {
        (Ok(g), Some(w)) if (g - w).abs() <= 1e-12 => Ok(()),
        (Err(_), None) => Ok(()),
        (g, w) => Err(format!("fixture {fixture}: {name} gave {g:?}, reference {w:?}")),
    }
}

/// Compares every metric against the references on `count` random
/// fixtures of at most 50 samples spread over 5 users.
pub fn check_random_fixtures(count: usize, seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for fixture in 0..count {
        let n = rng.random_range(2..=50);
        // Coarse values on some fixtures so ties in predictions and truths occur.
        let coarse = fixture % 3 == 0;
        let draw = |rng: &mut ChaCha8Rng| {
            let v: f64 = rng.random_range(0.0..20.0);
            if coarse {
                v.round()
            } else {
                v
            }
        };
        let preds: Vec<f64> = (0..n).map(|_| draw(&mut rng)).collect();
        let truths: Vec<f64> = (0..n).map(|_| draw(&mut rng)).collect();
        let users: Vec<usize> = (0..n).map(|_| rng.random_range(0..5)).collect();

        agree("xauc", fixture, xauc(&preds, &truths), xauc_ref(&preds, &truths).map(|(c, p)| c / p))?;
        let sq: f64 = preds.iter().zip(&truths).map(|(p, t)| (p - t).powi(2)).sum();
        agree("rmse", fixture, rmse(&preds, &truths), Some((sq / n as f64).sqrt()))?;
        let abs: f64 = preds.iter().zip(&truths).map(|(p, t)| (p - t).abs()).sum();
        agree("mae", fixture, mae(&preds, &truths), Some(abs / n as f64))?;

        let groups: Vec<(Vec<f64>, Vec<f64>)> = (0..5)
            .map(|u| {
                let idx: Vec<usize> = (0..n).filter(|&i| users[i] == u).collect();
                (idx.iter().map(|&i| preds[i]).collect(), idx.iter().map(|&i| truths[i]).collect())
            })
            .collect();
        let (mut credit, mut pairs) = (0.0, 0.0);
        for (gp, gt) in &groups {
            if let Some((c, p)) = xauc_ref(gp, gt) {
                credit += c;
                pairs += p;
            }
        }
        let got = xgauc(groups.iter().map(|(a, b)| (a.as_slice(), b.as_slice())));
        agree("xgauc", fixture, got, (pairs > 0.0).then(|| credit / pairs))?;

        let threshold = relevance_labels(&truths).unwrap().threshold;
        let lists: Vec<Vec<RankedItem>> = (0..5)
            .map(|u| {
                (0..n)
                    .filter(|&i| users[i] == u)
                    .map(|i| RankedItem {
                        item_id: i as u64,
                        pred: preds[i],
                        relevant: truths[i] > threshold,
                        staytime: truths[i],
                    })
                    .collect()
            })
            .collect();
        agree("gauc", fixture, gauc(&lists), gauc_ref(&lists))?;
        agree("mrr", fixture, Ok(mrr(&lists)), Some(mrr_ref(&lists)))?;
        for k in [1, 3, 5] {
            agree(&format!("ndcg@{k}"), fixture, Ok(ndcg_at_k(&lists, k)), Some(ndcg_ref(&lists, k)))?;
            agree(&format!("staytime@{k}"), fixture, Ok(staytime_at_n(&lists, k)), Some(staytime_ref(&lists, k)))?;
        }
    }
    Ok(())
}
