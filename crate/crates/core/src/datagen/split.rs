use serde::{Deserialize, Serialize};

use crate::domain::{Dataset, ImpressionRecord};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: u32,
    pub validation: u32,
    pub test: u32,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 4,
            validation: 1,
            test: 1,
        }
    }
}

/// Impressions partitioned in time order. Catalog tables stay shared in
/// the parent dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSplit {
    pub train: Vec<ImpressionRecord>,
    pub validation: Vec<ImpressionRecord>,
    pub test: Vec<ImpressionRecord>,
}

/// Sorts impressions by `(timestamp, user_id, video_id)` and cuts them at
/// `floor(n·a/total)` and `floor(n·(a+b)/total)`; the remainder goes to test.
pub fn time_split(dataset: &Dataset, ratios: SplitRatios) -> Result<TimeSplit> {
    if dataset.impressions.is_empty() {
        return Err(Error::Data("cannot split a dataset without impressions".into()));
    }
    let total = ratios.train as u64 + ratios.validation as u64 + ratios.test as u64;
    if total == 0 || ratios.train == 0 {
        return Err(Error::Config("split ratios need a non-zero train share".into()));
    }
    let mut rows = dataset.impressions.clone();
    rows.sort_by_key(|i| (i.timestamp, i.user_id, i.video_id));

    let n = rows.len() as u64;
    let a = (n * ratios.train as u64 / total) as usize;
    let b = (n * (ratios.train as u64 + ratios.validation as u64) / total) as usize;
    let test = rows.split_off(b);
    let validation = rows.split_off(a);
    Ok(TimeSplit {
        train: rows,
        validation,
        test,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{UserId, VideoId};

    fn with_impressions(n: usize, ts: impl Fn(usize) -> i64) -> Dataset {
        Dataset {
            impressions: (0..n)
                .map(|i| ImpressionRecord {
                    user_id: UserId((i % 7) as u64),
                    video_id: VideoId(i as u64),
                    timestamp: ts(i),
                    opened: false,
                    staytime_s: 0.0,
                    watchtime_s: 1.0,
                    interacted_comment_ids: vec![],
                })
                .collect(),
            ..Dataset::default()
        }
    }

    #[test]
    fn exact_and_remainder_sizes() {
        let s = time_split(&with_impressions(600, |i| i as i64), SplitRatios::default()).unwrap();
        assert_eq!((s.train.len(), s.validation.len(), s.test.len()), (400, 100, 100));
        let s = time_split(&with_impressions(601, |i| i as i64), SplitRatios::default()).unwrap();
        assert_eq!((s.train.len(), s.validation.len(), s.test.len()), (400, 100, 101));
    }

    #[test]
    fn time_ordered_and_tie_broken() {
        let ds = with_impressions(60, |i| ((i * 37) % 11) as i64);
        let s = time_split(&ds, SplitRatios::default()).unwrap();
        let max_train = s.train.iter().map(|i| i.timestamp).max().unwrap();
        let min_test = s.test.iter().map(|i| i.timestamp).min().unwrap();
        assert!(max_train <= min_test);

        let same = with_impressions(12, |_| 5);
        let a = time_split(&same, SplitRatios::default()).unwrap();
        let mut reversed = same.clone();
        reversed.impressions.reverse();
        assert_eq!(a, time_split(&reversed, SplitRatios::default()).unwrap());
        let keys: Vec<_> = a.train.iter().map(|i| (i.user_id, i.video_id)).collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
    }

    #[test]
    fn empty_is_an_error() {
        assert!(time_split(&Dataset::default(), SplitRatios::default()).is_err());
    }
}
