use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::nn::Tensor2D;

pub const DEFAULT_DURATION_BUCKETS: usize = 30;

/// Equal-frequency duration buckets, each holding the sorted training
/// staytimes that define its empirical quantile function.
///
/// Within a bucket of `m` sorted staytimes `s_0 ≤ … ≤ s_{m-1}`, the value
/// `s_i` sits at quantile `(i + 0.5) / m`; quantiles in between are linear
/// interpolations. Outside `[q_0, q_{m-1}]` the map is flat at the bucket
/// minimum and maximum.
#[derive(Debug, Clone, PartialEq)]
pub struct DurationBuckets {
    /// Lower edges of buckets `1..`, strictly increasing.
    boundaries: Vec<f64>,
    staytimes: Vec<Vec<f64>>,
}

impl DurationBuckets {
    /// Fits on `(duration_s, staytime_s)` pairs of opened impressions.
    /// Tied durations never straddle a boundary, so fewer than `n_buckets`
    /// buckets may result.
    pub fn fit(pairs: &[(f64, f64)], n_buckets: usize) -> Result<Self> {
        if n_buckets == 0 {
            return Err(Error::Config("need at least one duration bucket".into()));
        }
        if pairs.is_empty() {
            return Err(Error::Data("cannot fit duration buckets on no rows".into()));
        }
        if pairs.iter().any(|(d, s)| !(d.is_finite() && s.is_finite() && *s >= 0.0)) {
            return Err(Error::Data("durations and staytimes must be finite, staytimes non-negative".into()));
        }
        let mut durations: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        durations.sort_by(f64::total_cmp);
        let n = durations.len();
        let mut boundaries: Vec<f64> = (1..n_buckets).map(|b| durations[b * n / n_buckets]).collect();
        boundaries.dedup();
        boundaries.retain(|&b| b > durations[0]);

        let mut staytimes = vec![Vec::new(); boundaries.len() + 1];
        let probe = Self {
            boundaries,
            staytimes: Vec::new(),
        };
        for &(d, s) in pairs {
            staytimes[probe.bucket_of(d)].push(s);
        }
        for b in &mut staytimes {
            b.sort_by(f64::total_cmp);
        }
        Ok(Self {
            boundaries: probe.boundaries,
            staytimes,
        })
    }

    pub fn len(&self) -> usize {
        self.staytimes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.staytimes.is_empty()
    }

    pub fn bucket_of(&self, duration_s: f64) -> usize {
        self.boundaries.partition_point(|&b| b <= duration_s)
    }

    pub fn bucket_staytimes(&self, bucket: usize) -> &[f64] {
        &self.staytimes[bucket]
    }

    /// Staytime → quantile in `[0, 1]` within the duration's bucket. Values
    /// present in the sample map to their mid-rank (averaged over ties).
    pub fn transform(&self, duration_s: f64, staytime_s: f64) -> f64 {
        let s = &self.staytimes[self.bucket_of(duration_s)];
        let m = s.len() as f64;
        let lo = s.partition_point(|&x| x < staytime_s);
        let hi = s.partition_point(|&x| x <= staytime_s);
        if hi > lo {
            return (lo + hi) as f64 / (2.0 * m);
        }
        if lo == 0 {
            return 0.5 / m;
        }
        if lo == s.len() {
            return (m - 0.5) / m;
        }
        let (a, b) = (s[lo - 1], s[lo]);
        (lo as f64 - 0.5 + (staytime_s - a) / (b - a)) / m
    }

    /// Quantile → staytime by linear interpolation between order statistics.
    pub fn inverse(&self, duration_s: f64, quantile: f64) -> f64 {
        let s = &self.staytimes[self.bucket_of(duration_s)];
        let m = s.len() as f64;
        let q = quantile.clamp(0.0, 1.0);
        let pos = q * m - 0.5;
        if pos <= 0.0 {
            return s[0];
        }
        let i = pos.floor() as usize;
        if i + 1 >= s.len() {
            return s[s.len() - 1];
        }
        let t = pos - i as f64;
        s[i] + t * (s[i + 1] - s[i])
    }

    /// Largest gap between adjacent order statistics in any bucket.
    pub fn max_adjacent_gap(&self) -> f64 {
        self.staytimes
            .iter()
            .flat_map(|b| b.windows(2).map(|w| w[1] - w[0]))
            .fold(0.0, f64::max)
    }

    pub(crate) fn sections(&self, prefix: &str) -> Vec<(String, Tensor2D)> {
        let mut out = vec![(
            format!("{prefix}.boundaries"),
            Tensor2D::from_vec(1, self.boundaries.len(), self.boundaries.clone()),
        )];
        for (i, s) in self.staytimes.iter().enumerate() {
            out.push((format!("{prefix}.bucket.{i}"), Tensor2D::from_vec(1, s.len(), s.clone())));
        }
        out
    }

    pub(crate) fn from_sections(prefix: &str, sections: &BTreeMap<String, Tensor2D>) -> Result<Self> {
        let get = |name: String| {
            sections
                .get(&name)
                .ok_or_else(|| Error::Data(format!("checkpoint lacks `{name}`")))
        };
        let boundaries = get(format!("{prefix}.boundaries"))?.data().to_vec();
        if boundaries.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Data("duration boundaries are not strictly increasing".into()));
        }
        let mut staytimes = Vec::with_capacity(boundaries.len() + 1);
        for i in 0..=boundaries.len() {
            let s = get(format!("{prefix}.bucket.{i}"))?.data().to_vec();
            if s.is_empty() || s.windows(2).any(|w| w[0] > w[1]) {
                return Err(Error::Data(format!("duration bucket {i} is empty or unsorted")));
            }
            staytimes.push(s);
        }
        Ok(Self { boundaries, staytimes })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn buckets_are_equal_frequency_on_distinct_durations() {
        let pairs: Vec<(f64, f64)> = (0..300).map(|i| (i as f64, (i % 17) as f64)).collect();
        let b = DurationBuckets::fit(&pairs, 30).unwrap();
        assert_eq!(b.len(), 30);
        for i in 0..30 {
            assert_eq!(b.bucket_staytimes(i).len(), 10);
        }
        assert_eq!(b.bucket_of(-5.0), 0);
        assert_eq!(b.bucket_of(1e9), 29);
    }

    #[test]
    fn tied_durations_share_a_bucket() {
        let pairs: Vec<(f64, f64)> = (0..100).map(|i| (if i < 60 { 5.0 } else { i as f64 }, i as f64)).collect();
        let b = DurationBuckets::fit(&pairs, 10).unwrap();
        assert_eq!(b.bucket_staytimes(0).len(), 60);
        assert!((0..b.len()).all(|i| !b.bucket_staytimes(i).is_empty()));
    }

    #[test]
    fn midrank_quantiles() {
        let b = DurationBuckets::fit(&[(1.0, 10.0), (1.0, 20.0), (1.0, 20.0), (1.0, 40.0)], 1).unwrap();
        assert_eq!(b.transform(1.0, 10.0), 0.125);
        assert_eq!(b.transform(1.0, 20.0), 0.5);
        assert_eq!(b.transform(1.0, 40.0), 0.875);
        assert_eq!(b.transform(1.0, 30.0), 0.75);
        assert_eq!(b.inverse(1.0, 0.75), 30.0);
        assert_eq!(b.inverse(1.0, 1.0), 40.0);
        assert_eq!(b.inverse(1.0, 0.0), 10.0);
        assert_eq!(b.transform(1.0, 5.0), 0.125);
        let three = DurationBuckets::fit(&[(2.0, 10.0), (2.0, 20.0), (2.0, 30.0)], 1).unwrap();
        assert_eq!(three.transform(2.0, 20.0), 0.5);
    }

    #[test]
    fn sections_round_trip() {
        let pairs: Vec<(f64, f64)> = (0..50).map(|i| ((i % 7) as f64, i as f64 * 0.5)).collect();
        let b = DurationBuckets::fit(&pairs, 4).unwrap();
        let map: BTreeMap<_, _> = b.sections("t").into_iter().collect();
        assert_eq!(DurationBuckets::from_sections("t", &map).unwrap(), b);
    }
}
