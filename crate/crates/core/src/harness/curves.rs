use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::domain::{CommentIndex, Dataset};
use crate::error::{Error, Result};

/// The x-axis of a binned staytime curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveFeature {
    AvgTop5Likes,
    Interactions,
    Duration,
    Watchtime,
}

impl CurveFeature {
    pub const ALL: [CurveFeature; 4] = [
        CurveFeature::AvgTop5Likes,
        CurveFeature::Interactions,
        CurveFeature::Duration,
        CurveFeature::Watchtime,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CurveFeature::AvgTop5Likes => "avg_top5_likes",
            CurveFeature::Interactions => "interactions",
            CurveFeature::Duration => "duration",
            CurveFeature::Watchtime => "watchtime",
        }
    }
}

impl fmt::Display for CurveFeature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CurveFeature {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown curve feature `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveBin {
    pub bin_lo: f64,
    pub bin_hi: f64,
    pub mean: f64,
    /// Population variance of y within the bin.
    pub variance: f64,
    pub count: usize,
}

impl CurveBin {
    pub fn centre(&self) -> f64 {
        0.5 * (self.bin_lo + self.bin_hi)
    }
}

/// `(x, staytime)` for every opened impression.
pub fn curve_points(ds: &Dataset, feature: CurveFeature) -> Result<Vec<(f64, f64)>> {
    let index = CommentIndex::build(&ds.comments, &ds.videos)?;
    let durations: std::collections::HashMap<_, _> = ds.videos.iter().map(|v| (v.video_id, v.duration_s)).collect();
    let mut out = Vec::with_capacity(ds.opened_count());
    for imp in ds.impressions.iter().filter(|i| i.opened) {
        let x = match feature {
            CurveFeature::AvgTop5Likes => index.avg_top_likes(imp.video_id, 5),
            CurveFeature::Interactions => imp.interacted_comment_ids.len() as f64,
            CurveFeature::Duration => *durations
                .get(&imp.video_id)
                .ok_or_else(|| Error::Data(format!("impression references unknown video {}", imp.video_id)))?,
            CurveFeature::Watchtime => imp.watchtime_s,
        };
        out.push((x, imp.staytime_s));
    }
    Ok(out)
}

/// Sorts points by x (stable, so ties keep input order) and cuts them into `n_bins` runs whose
/// sizes differ by at most one. Leading bins take the remainder.
pub fn equal_frequency_bins(points: &[(f64, f64)], n_bins: usize) -> Result<Vec<CurveBin>> {
    if n_bins == 0 {
        return Err(Error::Config("need at least one bin".into()));
    }
    if points.len() < n_bins {
        return Err(Error::Data(format!("{} points cannot fill {n_bins} bins", points.len())));
    }
    if points.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(Error::Data("curve points must be finite".into()));
    }
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));

    let (base, extra) = (sorted.len() / n_bins, sorted.len() % n_bins);
    let mut bins = Vec::with_capacity(n_bins);
    let mut start = 0;
    for b in 0..n_bins {
        let len = base + usize::from(b < extra);
        let chunk = &sorted[start..start + len];
        start += len;
        let n = chunk.len() as f64;
        let mean = chunk.iter().map(|p| p.1).sum::<f64>() / n;
        let variance = chunk.iter().map(|p| (p.1 - mean).powi(2)).sum::<f64>() / n;
        bins.push(CurveBin {
            bin_lo: chunk[0].0,
            bin_hi: chunk[chunk.len() - 1].0,
            mean,
            variance,
            count: chunk.len(),
        });
    }
    Ok(bins)
}

fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation with average ranks for ties. `None` when
/// either side is constant.
pub fn spearman(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return None;
    }
    let (ra, rb) = (average_ranks(a), average_ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (x, y) in ra.iter().zip(&rb) {
        cov += (x - ma) * (y - mb);
        va += (x - ma).powi(2);
        vb += (y - mb).powi(2);
    }
    if va == 0.0 || vb == 0.0 {
        return None;
    }
    Some(cov / (va * vb).sqrt())
}

/// Spearman correlation between bin centre and bin mean over the first
/// `first` bins.
pub fn curve_trend(bins: &[CurveBin], first: usize) -> Option<f64> {
    let head = &bins[..first.min(bins.len())];
    let x: Vec<f64> = head.iter().map(CurveBin::centre).collect();
    let y: Vec<f64> = head.iter().map(|b| b.mean).collect();
    spearman(&x, &y)
}

pub fn curve_csv(bins: &[CurveBin]) -> String {
    let mut out = String::from("bin_lo,bin_hi,mean,variance,count\n");
    for b in bins {
        out.push_str(&format!("{},{},{},{},{}\n", b.bin_lo, b.bin_hi, b.mean, b.variance, b.count));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bin_counts_differ_by_at_most_one() {
        let pts: Vec<(f64, f64)> = (0..10_007).map(|i| (((i * 7919) % 10_007) as f64, i as f64)).collect();
        let bins = equal_frequency_bins(&pts, 20).unwrap();
        let (lo, hi) = bins
            .iter()
            .fold((usize::MAX, 0), |(lo, hi), b| (lo.min(b.count), hi.max(b.count)));
        assert!(hi - lo <= 1);
        assert_eq!(bins.iter().map(|b| b.count).sum::<usize>(), 10_007);
        assert!(bins.windows(2).all(|w| w[0].bin_hi <= w[1].bin_lo));
    }

    #[test]
    fn mean_and_variance() {
        let bins = equal_frequency_bins(&[(0.0, 1.0), (1.0, 3.0), (2.0, 10.0), (3.0, 10.0)], 2).unwrap();
        assert_eq!(bins[0].mean, 2.0);
        assert_eq!(bins[0].variance, 1.0);
        assert_eq!(bins[1].variance, 0.0);
        assert_eq!((bins[1].bin_lo, bins[1].bin_hi), (2.0, 3.0));
    }

    #[test]
    fn spearman_reference_values() {
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]), Some(1.0));
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]), Some(-1.0));
        assert_eq!(spearman(&[1.0, 1.0], &[1.0, 2.0]), None);
        // Ties: ranks x = [1.5, 1.5, 3], y = [1, 2, 3]; Pearson on ranks = √3/2.
        let r = spearman(&[0.0, 0.0, 1.0], &[1.0, 2.0, 3.0]).unwrap();
        assert!((r - 3f64.sqrt() / 2.0).abs() < 1e-12);
    }

    #[test]
    fn csv_header() {
        assert!(curve_csv(&[]).starts_with("bin_lo,bin_hi,mean,variance,count\n"));
        assert!("nope".parse::<CurveFeature>().is_err());
        assert_eq!("watchtime".parse::<CurveFeature>().unwrap(), CurveFeature::Watchtime);
    }
}
