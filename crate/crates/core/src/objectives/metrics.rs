//! Regression and ranking metrics for staytime prediction.
//!
//! Pairwise metrics (XAUC, XGAUC, GAUC) give half credit to tied
//! predictions. List metrics (MRR, NDCG, Staytime@n) rank by prediction
//! descending and break ties by ascending item id.

use std::cmp::Ordering;

use serde::Serialize;

use crate::error::{Error, Result};

fn check_lengths(op: &'static str, a: usize, b: usize) -> Result<()> {
    if a != b || a == 0 {
        return Err(Error::Shape {
            op,
            left: (a, 1),
            right: (b, 1),
        });
    }
    Ok(())
}

pub fn rmse(preds: &[f64], truths: &[f64]) -> Result<f64> {
    check_lengths("rmse", preds.len(), truths.len())?;
    let sse: f64 = preds.iter().zip(truths).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok((sse / preds.len() as f64).sqrt())
}

pub fn mae(preds: &[f64], truths: &[f64]) -> Result<f64> {
    check_lengths("mae", preds.len(), truths.len())?;
    let sae: f64 = preds.iter().zip(truths).map(|(p, t)| (p - t).abs()).sum();
    Ok(sae / preds.len() as f64)
}

/// Percentile by linear interpolation between closest ranks
/// (`h = (n − 1)·q`, interpolate between the order statistics around `h`).
pub fn percentile(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Data("percentile of an empty list".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    Ok(sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo]))
}

/// Quantile used to split long stays from the rest.
pub const RELEVANCE_QUANTILE: f64 = 0.7;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RelevanceLabeling {
    pub threshold: f64,
    pub labels: Vec<bool>,
}

impl RelevanceLabeling {
    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|l| **l).count()
    }
}

/// A stay is relevant iff it is strictly longer than the 70th percentile.
pub fn relevance_labels(staytimes: &[f64]) -> Result<RelevanceLabeling> {
    let threshold = percentile(staytimes, RELEVANCE_QUANTILE)?;
    Ok(RelevanceLabeling {
        threshold,
        labels: staytimes.iter().map(|&s| s > threshold).collect(),
    })
}

/// Fenwick tree over dense ranks.
struct Fenwick(Vec<u64>);

impl Fenwick {
    fn add(&mut self, mut i: usize) {
        i += 1;
        while i < self.0.len() {
            self.0[i] += 1;
            i += i & i.wrapping_neg();
        }
    }

    /// Count of inserted ranks `< i`.
    fn prefix(&self, mut i: usize) -> u64 {
        let mut s = 0;
        while i > 0 {
            s += self.0[i];
            i -= i & i.wrapping_neg();
        }
        s
    }
}

/// Concordance credit and number of pairs with distinct truths.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PairCounts {
    pub credit: f64,
    pub pairs: u64,
}

/// Counts concordant pairs in `O(n log n)`: sort by truth and, for each
/// truth group, count earlier items with a smaller (or equal) prediction.
pub fn pair_counts(preds: &[f64], truths: &[f64]) -> PairCounts {
    let n = preds.len();
    let mut sorted_preds = preds.to_vec();
    sorted_preds.sort_by(f64::total_cmp);
    sorted_preds.dedup();
    let rank = |p: f64| sorted_preds.partition_point(|x| x.total_cmp(&p) == Ordering::Less);

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| truths[a].total_cmp(&truths[b]));

    let mut tree = Fenwick(vec![0; sorted_preds.len() + 1]);
    let mut inserted = 0u64;
    let mut twice_credit = 0u64;
    let mut pairs = 0u64;
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && truths[order[end]] == truths[order[start]] {
            end += 1;
        }
        for &i in &order[start..end] {
            let r = rank(preds[i]);
            let less = tree.prefix(r);
            let equal = tree.prefix(r + 1) - less;
            twice_credit += 2 * less + equal;
            pairs += inserted;
        }
        for &i in &order[start..end] {
            tree.add(rank(preds[i]));
        }
        inserted += (end - start) as u64;
        start = end;
    }
    PairCounts {
        credit: twice_credit as f64 / 2.0,
        pairs,
    }
}

/// Fraction of distinct-truth pairs whose predictions are ordered the same way.
pub fn xauc(preds: &[f64], truths: &[f64]) -> Result<f64> {
    check_lengths("xauc", preds.len(), truths.len())?;
    let c = pair_counts(preds, truths);
    if c.pairs == 0 {
        return Err(Error::Data("XAUC needs at least one pair with distinct truths".into()));
    }
    Ok(c.credit / c.pairs as f64)
}

/// Per-user XAUC averaged with weights equal to each user's valid pair count.
pub fn xgauc<'a>(groups: impl IntoIterator<Item = (&'a [f64], &'a [f64])>) -> Result<f64> {
    let mut num = 0.0;
    let mut den = 0u64;
    for (preds, truths) in groups {
        if preds.len() != truths.len() {
            return Err(Error::Shape {
                op: "xgauc",
                left: (preds.len(), 1),
                right: (truths.len(), 1),
            });
        }
        let c = pair_counts(preds, truths);
        if c.pairs > 0 {
            num += c.pairs as f64 * (c.credit / c.pairs as f64);
            den += c.pairs;
        }
    }
    if den == 0 {
        return Err(Error::Data("XGAUC: no user has a pair with distinct truths".into()));
    }
    Ok(num / den as f64)
}

/// One candidate in a user's ranked list.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RankedItem {
    pub item_id: u64,
    pub pred: f64,
    pub relevant: bool,
    pub staytime: f64,
}

fn ranked(items: &[RankedItem]) -> Vec<RankedItem> {
    let mut v = items.to_vec();
    v.sort_by(|a, b| b.pred.total_cmp(&a.pred).then(a.item_id.cmp(&b.item_id)));
    v
}

/// Impression-weighted mean of per-user ROC-AUC; users lacking either a
/// positive or a negative are skipped.
pub fn gauc(users: &[Vec<RankedItem>]) -> Result<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    for items in users {
        let pos = items.iter().filter(|i| i.relevant).count();
        if pos == 0 || pos == items.len() {
            continue;
        }
        let preds: Vec<f64> = items.iter().map(|i| i.pred).collect();
        let labels: Vec<f64> = items.iter().map(|i| if i.relevant { 1.0 } else { 0.0 }).collect();
        let c = pair_counts(&preds, &labels);
        let w = items.len() as f64;
        num += w * (c.credit / c.pairs as f64);
        den += w;
    }
    if den == 0.0 {
        return Err(Error::Data("GAUC: no user has both a positive and a negative".into()));
    }
    Ok(num / den)
}

/// Number of users GAUC can score.
pub fn gauc_eligible(users: &[Vec<RankedItem>]) -> usize {
    users
        .iter()
        .filter(|items| {
            let pos = items.iter().filter(|i| i.relevant).count();
            pos > 0 && pos < items.len()
        })
        .count()
}

fn mean_over_users(users: &[Vec<RankedItem>], f: impl Fn(&[RankedItem]) -> f64) -> f64 {
    let scored: Vec<f64> = users.iter().filter(|u| !u.is_empty()).map(|u| f(&ranked(u))).collect();
    if scored.is_empty() {
        return 0.0;
    }
    scored.iter().sum::<f64>() / scored.len() as f64
}

/// Mean reciprocal rank of each user's first relevant item (0 if none).
pub fn mrr(users: &[Vec<RankedItem>]) -> f64 {
    mean_over_users(users, |list| {
        list.iter()
            .position(|i| i.relevant)
            .map_or(0.0, |p| 1.0 / (p + 1) as f64)
    })
}

/// NDCG@k with binary gains and `log2(rank + 1)` discounts. Users without
/// any relevant item score 0.
pub fn ndcg_at_k(users: &[Vec<RankedItem>], k: usize) -> f64 {
    mean_over_users(users, |list| {
        let positives = list.iter().filter(|i| i.relevant).count();
        let ideal: f64 = (0..k.min(positives)).map(|r| 1.0 / ((r + 2) as f64).log2()).sum();
        if ideal == 0.0 {
            return 0.0;
        }
        let dcg: f64 = list
            .iter()
            .take(k)
            .enumerate()
            .filter(|(_, i)| i.relevant)
            .map(|(r, _)| 1.0 / ((r + 2) as f64).log2())
            .sum();
        dcg / ideal
    })
}

/// Mean over users of the mean true staytime of their top-`n` items.
pub fn staytime_at_n(users: &[Vec<RankedItem>], n: usize) -> f64 {
    mean_over_users(users, |list| {
        let top = &list[..n.min(list.len())];
        top.iter().map(|i| i.staytime).sum::<f64>() / top.len() as f64
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn item(id: u64, pred: f64, relevant: bool) -> RankedItem {
        RankedItem {
            item_id: id,
            pred,
            relevant,
            staytime: id as f64,
        }
    }

    #[test]
    fn regression_errors() {
        let t = [1.0, 4.0, -2.0];
        assert_eq!(rmse(&t, &t).unwrap(), 0.0);
        assert_eq!(mae(&t, &t).unwrap(), 0.0);
        let p: Vec<f64> = t.iter().map(|v| v + 1.0).collect();
        assert_eq!(rmse(&p, &t).unwrap(), 1.0);
        assert_eq!(mae(&p, &t).unwrap(), 1.0);
        assert!(rmse(&p[..2], &t).is_err());
        assert!(mae(&[], &[]).is_err());
    }

    #[test]
    fn relevance_threshold_interpolates() {
        let st: Vec<f64> = (1..=10).map(f64::from).collect();
        let r = relevance_labels(&st).unwrap();
        assert!((r.threshold - 7.3).abs() < 1e-12);
        let pos: Vec<f64> = st.iter().zip(&r.labels).filter(|(_, l)| **l).map(|(s, _)| *s).collect();
        assert_eq!(pos, vec![8.0, 9.0, 10.0]);

        let r = relevance_labels(&[5.0; 4]).unwrap();
        assert_eq!(r.positives(), 0);
        let r = relevance_labels(&[3.0]).unwrap();
        assert_eq!((r.threshold, r.positives()), (3.0, 0));
    }

    #[test]
    fn xauc_extremes() {
        let t = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(xauc(&[10.0, 20.0, 30.0, 40.0], &t).unwrap(), 1.0);
        assert_eq!(xauc(&[4.0, 3.0, 2.0, 1.0], &t).unwrap(), 0.0);
        assert_eq!(xauc(&[7.0; 4], &t).unwrap(), 0.5);
        assert!(xauc(&[1.0, 2.0], &[3.0, 3.0]).is_err());
    }

    #[test]
    fn xgauc_skips_users_without_pairs() {
        let a = ([1.0, 2.0], [1.0, 2.0]);
        let b = ([2.0, 1.0, 0.0], [5.0, 5.0, 5.0]);
        let v = xgauc([(&a.0[..], &a.1[..]), (&b.0[..], &b.1[..])]).unwrap();
        assert_eq!(v, 1.0);
        assert!(xgauc([(&b.0[..], &b.1[..])]).is_err());
    }

    #[test]
    fn list_metrics_by_hand() {
        let top = vec![vec![
            item(1, 0.9, true),
            item(2, 0.8, false),
            item(3, 0.7, false),
            item(4, 0.6, false),
            item(5, 0.5, false),
        ]];
        assert_eq!(ndcg_at_k(&top, 1), 1.0);
        assert_eq!(mrr(&top), 1.0);

        let second = vec![vec![item(1, 0.9, false), item(2, 0.8, true), item(3, 0.1, false)]];
        assert!((ndcg_at_k(&second, 3) - 1.0 / 3f64.log2()).abs() < 1e-15);
        assert_eq!(ndcg_at_k(&second, 1), 0.0);
        assert_eq!(mrr(&second), 0.5);
        assert_eq!(staytime_at_n(&second, 2), 1.5);
        assert_eq!(staytime_at_n(&second, 10), 2.0);
    }

    #[test]
    fn list_ties_break_by_item_id() {
        let users = vec![vec![item(9, 1.0, false), item(4, 1.0, true)]];
        assert_eq!(mrr(&users), 1.0);
    }

    #[test]
    fn gauc_requires_mixed_users() {
        let only_pos = vec![vec![item(1, 0.2, true), item(2, 0.1, true)]];
        assert!(gauc(&only_pos).is_err());
        let mixed = vec![
            vec![item(1, 0.9, true), item(2, 0.1, false)],
            vec![item(1, 0.1, true), item(2, 0.9, false), item(3, 0.5, false)],
        ];
        // (2·1 + 3·0) / 5
        assert!((gauc(&mixed).unwrap() - 0.4).abs() < 1e-15);
        assert_eq!(gauc_eligible(&mixed), 2);
    }
}
