use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::config::ExposureThresholds;
use crate::base_models::Prediction;
use crate::domain::{ImpressionRecord, UserId, VideoId};
use crate::error::{Error, Result};
use crate::lcu::Example;
use crate::objectives::{gauc, mae, mrr, ndcg_at_k, relevance_labels, rmse, staytime_at_n, xauc, xgauc, RankedItem};

pub const LIST_CUTOFFS: [usize; 3] = [1, 3, 5];

/// Cold-start groups by how often a video was shown in training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExposureGroup {
    None,
    Low,
    High,
}

impl ExposureGroup {
    pub fn of(count: usize, t: ExposureThresholds) -> Self {
        if count >= t.high {
            ExposureGroup::High
        } else if count >= t.low {
            ExposureGroup::Low
        } else {
            ExposureGroup::None
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ExposureGroup::None => "none",
            ExposureGroup::Low => "low",
            ExposureGroup::High => "high",
        }
    }
}

/// Training impressions per video.
pub fn exposure_counts(train: &[ImpressionRecord]) -> HashMap<VideoId, usize> {
    let mut counts = HashMap::new();
    for imp in train {
        *counts.entry(imp.video_id).or_insert(0) += 1;
    }
    counts
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupMetrics {
    pub rows: usize,
    /// Absent when the group has no pair of distinct staytimes.
    pub xauc: Option<f64>,
    pub rmse: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub metrics: BTreeMap<String, f64>,
    pub test_rows: usize,
    pub ranked_users: usize,
    /// Users with fewer than two test impressions, left out of GAUC and XGAUC.
    pub excluded_users: usize,
    pub relevance_threshold: f64,
    pub exposure: BTreeMap<ExposureGroup, GroupMetrics>,
}

/// Scores predictions on opened test impressions. Staytime metrics need a
/// staytime prediction and are skipped for models without one; XAUC and
/// XGAUC use [`Prediction::order_score`], list metrics the rank score.
pub fn evaluate(
    test: &[Example],
    preds: &[Prediction],
    exposure: &HashMap<VideoId, usize>,
    thresholds: ExposureThresholds,
) -> Result<Evaluation> {
    if test.len() != preds.len() {
        return Err(Error::Shape {
            op: "evaluate",
            left: (test.len(), 1),
            right: (preds.len(), 1),
        });
    }
    let rows: Vec<usize> = (0..test.len()).filter(|&i| test[i].obs.opened).collect();
    if rows.len() < 2 {
        return Err(Error::Data("evaluation needs at least two opened test impressions".into()));
    }
    let truth: Vec<f64> = rows.iter().map(|&i| test[i].obs.staytime_s).collect();
    let order: Vec<f64> = rows.iter().map(|&i| preds[i].order_score()).collect();
    let staytime: Option<Vec<f64>> = rows.iter().map(|&i| preds[i].staytime_s).collect();

    let mut metrics = BTreeMap::new();
    metrics.insert("xauc".to_string(), xauc(&order, &truth)?);
    if let Some(st) = &staytime {
        metrics.insert("rmse".to_string(), rmse(st, &truth)?);
        metrics.insert("mae".to_string(), mae(st, &truth)?);
    }

    let relevance = relevance_labels(&truth)?;
    let mut by_user: BTreeMap<UserId, Vec<usize>> = BTreeMap::new();
    for (j, &i) in rows.iter().enumerate() {
        by_user.entry(test[i].user_id).or_default().push(j);
    }
    let lists: Vec<Vec<RankedItem>> = by_user
        .values()
        .map(|js| {
            js.iter()
                .map(|&j| RankedItem {
                    item_id: j as u64,
                    pred: preds[rows[j]].rank_score,
                    relevant: relevance.labels[j],
                    staytime: truth[j],
                })
                .collect()
        })
        .collect();
    let eligible: Vec<Vec<RankedItem>> = lists.iter().filter(|l| l.len() >= 2).cloned().collect();
    let excluded_users = lists.len() - eligible.len();
    metrics.insert("gauc".to_string(), gauc(&eligible)?);
    let groups: Vec<(Vec<f64>, Vec<f64>)> = by_user
        .values()
        .filter(|js| js.len() >= 2)
        .map(|js| (js.iter().map(|&j| order[j]).collect(), js.iter().map(|&j| truth[j]).collect()))
        .collect();
    metrics.insert(
        "xgauc".to_string(),
        xgauc(groups.iter().map(|(p, t)| (p.as_slice(), t.as_slice())))?,
    );
    metrics.insert("mrr".to_string(), mrr(&lists));
    for k in LIST_CUTOFFS {
        metrics.insert(format!("ndcg@{k}"), ndcg_at_k(&lists, k));
        metrics.insert(format!("staytime@{k}"), staytime_at_n(&lists, k));
    }

    let mut exposure_rows: BTreeMap<ExposureGroup, Vec<usize>> = BTreeMap::new();
    for (j, &i) in rows.iter().enumerate() {
        let count = exposure.get(&test[i].video_id).copied().unwrap_or(0);
        exposure_rows.entry(ExposureGroup::of(count, thresholds)).or_default().push(j);
    }
    let exposure = exposure_rows
        .into_iter()
        .map(|(g, js)| {
            let t: Vec<f64> = js.iter().map(|&j| truth[j]).collect();
            let o: Vec<f64> = js.iter().map(|&j| order[j]).collect();
            let r = staytime
                .as_ref()
                .map(|st| rmse(&js.iter().map(|&j| st[j]).collect::<Vec<_>>(), &t))
                .transpose()?;
            let m = GroupMetrics {
                rows: js.len(),
                xauc: xauc(&o, &t).ok(),
                rmse: r,
            };
            Ok((g, m))
        })
        .collect::<Result<_>>()?;

    Ok(Evaluation {
        metrics,
        test_rows: rows.len(),
        ranked_users: lists.len(),
        excluded_users,
        relevance_threshold: relevance.threshold,
        exposure,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::base_models::Observation;
    use crate::domain::SampledComments;

    fn example(user: u64, video: u64, st: f64) -> Example {
        Example {
            user_id: UserId(user),
            video_id: VideoId(video),
            user_row: 0,
            user_dense: Vec::new(),
            video_features: Vec::new(),
            slots: SampledComments {
                comment_ids: Vec::new(),
                mask: Vec::new(),
                interaction_labels: Vec::new(),
                popularity_keys: Vec::new(),
            },
            comment_features: Vec::new(),
            obs: Observation {
                opened: true,
                staytime_s: st,
                duration_s: 30.0,
            },
        }
    }

    fn constant(n: usize) -> Vec<Prediction> {
        vec![
            Prediction {
                staytime_s: Some(5.0),
                rank_score: 5.0
            };
            n
        ]
    }

    #[test]
    fn constant_predictor_scores_one_half() {
        let test: Vec<Example> = (0..12).map(|i| example(i % 3, i, 1.0 + i as f64)).collect();
        let e = evaluate(&test, &constant(12), &HashMap::new(), ExposureThresholds::default()).unwrap();
        assert_eq!(e.metrics["xauc"], 0.5);
        assert_eq!(e.metrics["xgauc"], 0.5);
        assert_eq!(e.metrics["gauc"], 0.5);
        assert_eq!(e.excluded_users, 0);
    }

    #[test]
    fn singleton_users_are_excluded_and_counted() {
        let mut test: Vec<Example> = (0..6).map(|i| example(1, i, i as f64)).collect();
        test.push(example(2, 9, 3.5));
        test.push(example(3, 9, 0.5));
        let preds: Vec<Prediction> = test
            .iter()
            .map(|e| Prediction {
                staytime_s: Some(e.obs.staytime_s),
                rank_score: e.obs.staytime_s,
            })
            .collect();
        let e = evaluate(&test, &preds, &HashMap::new(), ExposureThresholds::default()).unwrap();
        assert_eq!((e.ranked_users, e.excluded_users), (3, 2));
        assert_eq!(e.metrics["xauc"], 1.0);
        assert_eq!(e.metrics["rmse"], 0.0);
    }

    #[test]
    fn exposure_groups_follow_thresholds() {
        let t = ExposureThresholds::default();
        assert_eq!(ExposureGroup::of(0, t), ExposureGroup::None);
        assert_eq!(ExposureGroup::of(1, t), ExposureGroup::Low);
        assert_eq!(ExposureGroup::of(9, t), ExposureGroup::Low);
        assert_eq!(ExposureGroup::of(10, t), ExposureGroup::High);
        let test: Vec<Example> = (0..8).map(|i| example(i % 2, i % 4, i as f64)).collect();
        let counts = HashMap::from([(VideoId(1), 3), (VideoId(2), 50)]);
        let e = evaluate(&test, &constant(8), &counts, t).unwrap();
        let rows: Vec<usize> = e.exposure.values().map(|g| g.rows).collect();
        assert_eq!(rows, vec![4, 2, 2]);
    }

    #[test]
    fn ndt_style_predictions_skip_staytime_metrics() {
        let test: Vec<Example> = (0..6).map(|i| example(i % 2, i, i as f64)).collect();
        let preds: Vec<Prediction> = (0..6)
            .map(|i| Prediction {
                staytime_s: None,
                rank_score: i as f64,
            })
            .collect();
        let e = evaluate(&test, &preds, &HashMap::new(), ExposureThresholds::default()).unwrap();
        assert!(!e.metrics.contains_key("rmse"));
        assert_eq!(e.metrics["xauc"], 1.0);
    }
}
