use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::curves::{CurveBin, CurveFeature};
use super::eval::{Evaluation, ExposureGroup, GroupMetrics};
use crate::error::{Error, Result};
use crate::lcu::EpochLog;

pub const REPORT_SCHEMA_VERSION: u32 = 1;
const SIGNIFICANT_DIGITS: usize = 12;

/// Rounds to 12 significant digits so reports stay readable and stable.
pub fn round_sig(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x).parse().unwrap_or(x)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedReport {
    pub seed: u64,
    pub metrics: BTreeMap<String, f64>,
    pub test_rows: usize,
    pub ranked_users: usize,
    pub excluded_users: usize,
    pub relevance_threshold: f64,
    pub exposure: BTreeMap<ExposureGroup, GroupMetrics>,
    pub best_epoch: usize,
    pub epochs: Vec<EpochLog>,
    pub missing_video_embeddings: usize,
    pub missing_comment_embeddings: usize,
}

impl SeedReport {
    pub fn new(seed: u64, eval: Evaluation, best_epoch: usize, epochs: Vec<EpochLog>, missing: (usize, usize)) -> Self {
        let r = |o: Option<f64>| o.map(round_sig);
        Self {
            seed,
            metrics: eval.metrics.into_iter().map(|(k, v)| (k, round_sig(v))).collect(),
            test_rows: eval.test_rows,
            ranked_users: eval.ranked_users,
            excluded_users: eval.excluded_users,
            relevance_threshold: round_sig(eval.relevance_threshold),
            exposure: eval
                .exposure
                .into_iter()
                .map(|(g, m)| {
                    let m = GroupMetrics {
                        rows: m.rows,
                        xauc: r(m.xauc),
                        rmse: r(m.rmse),
                    };
                    (g, m)
                })
                .collect(),
            best_epoch,
            epochs: epochs
                .into_iter()
                .map(|e| EpochLog {
                    epoch: e.epoch,
                    staytime_loss: round_sig(e.staytime_loss),
                    r1_loss: round_sig(e.r1_loss),
                    r2_loss: round_sig(e.r2_loss),
                    total_loss: round_sig(e.total_loss),
                    val_xauc: round_sig(e.val_xauc),
                })
                .collect(),
            missing_video_embeddings: missing.0,
            missing_comment_embeddings: missing.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveTable {
    pub feature: CurveFeature,
    pub bins: Vec<CurveBin>,
    /// Spearman correlation of bin centre and bin mean over the leading bins.
    pub trend: Option<f64>,
    pub trend_bins: usize,
}

impl CurveTable {
    pub fn new(feature: CurveFeature, bins: Vec<CurveBin>, trend: Option<f64>, trend_bins: usize) -> Self {
        Self {
            feature,
            bins: bins
                .into_iter()
                .map(|b| CurveBin {
                    bin_lo: round_sig(b.bin_lo),
                    bin_hi: round_sig(b.bin_hi),
                    mean: round_sig(b.mean),
                    variance: round_sig(b.variance),
                    count: b.count,
                })
                .collect(),
            trend: trend.map(round_sig),
            trend_bins,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub tool_version: String,
    pub run: String,
    pub config: ExperimentConfig,
    pub seeds: Vec<SeedReport>,
    pub mean: BTreeMap<String, f64>,
    /// Sample standard deviation across seeds (0 for a single seed). The
    /// aggregates are not rounded so they recompute exactly from `seeds`.
    pub std: BTreeMap<String, f64>,
    pub curves: Vec<CurveTable>,
    /// Wall-clock creation time in Unix seconds; the only field that may
    /// differ between identical runs.
    pub generated_at: Option<u64>,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() > 1 {
        (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, std)
}

/// Metrics reported by every seed.
fn shared_metrics(seeds: &[SeedReport]) -> Vec<String> {
    let Some(first) = seeds.first() else {
        return Vec::new();
    };
    first
        .metrics
        .keys()
        .filter(|k| seeds.iter().all(|s| s.metrics.contains_key(*k)))
        .cloned()
        .collect()
}

fn aggregate(seeds: &[SeedReport]) -> (BTreeMap<String, f64>, BTreeMap<String, f64>) {
    let mut mean = BTreeMap::new();
    let mut std = BTreeMap::new();
    for k in shared_metrics(seeds) {
        let values: Vec<f64> = seeds.iter().map(|s| s.metrics[&k]).collect();
        let (m, s) = mean_std(&values);
        mean.insert(k.clone(), m);
        std.insert(k, s);
    }
    (mean, std)
}

impl ExperimentReport {
    pub fn new(config: ExperimentConfig, seeds: Vec<SeedReport>, curves: Vec<CurveTable>) -> Result<Self> {
        if seeds.is_empty() {
            return Err(Error::Data("a report needs at least one seed".into()));
        }
        let (mean, std) = aggregate(&seeds);
        Ok(Self {
            schema_version: REPORT_SCHEMA_VERSION,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            run: config.run_name(),
            config,
            seeds,
            mean,
            std,
            curves,
            generated_at: None,
        })
    }

    pub fn stamp_now(&mut self) {
        self.generated_at = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .ok()
            .map(|d| d.as_secs());
    }

    /// Checks the schema version and that the stored mean and standard
    /// deviation match the per-seed values to 1e-12.
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != REPORT_SCHEMA_VERSION {
            return Err(Error::Data(format!(
                "report schema version {} (expected {REPORT_SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.seeds.is_empty() {
            return Err(Error::Data("report has no seeds".into()));
        }
        let keys = shared_metrics(&self.seeds);
        if keys.len() != self.mean.len() || keys.len() != self.std.len() {
            return Err(Error::Data("report aggregates do not cover the per-seed metrics".into()));
        }
        for k in keys {
            let values: Vec<f64> = self.seeds.iter().map(|s| s.metrics[&k]).collect();
            let (m, s) = mean_std(&values);
            for (what, stored, fresh) in [("mean", self.mean.get(&k), m), ("std", self.std.get(&k), s)] {
                let stored = stored.copied().unwrap_or(f64::NAN);
                if !((stored - fresh).abs() <= 1e-12 * fresh.abs().max(1.0)) {
                    return Err(Error::Data(format!(
                        "report {what} of `{k}` is {stored}, per-seed values give {fresh}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let r: Self = serde_json::from_str(text)?;
        r.validate()?;
        Ok(r)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
    }

    /// The JSON with `generated_at` cleared, for byte comparisons.
    pub fn canonical_json(&self) -> Result<String> {
        Self {
            generated_at: None,
            ..self.clone()
        }
        .to_json()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seed(seed: u64, xauc: f64) -> SeedReport {
        SeedReport {
            seed,
            metrics: BTreeMap::from([("xauc".to_string(), xauc), ("mrr".to_string(), 0.5)]),
            test_rows: 10,
            ranked_users: 3,
            excluded_users: 0,
            relevance_threshold: 1.0,
            exposure: BTreeMap::new(),
            best_epoch: 1,
            epochs: Vec::new(),
            missing_video_embeddings: 0,
            missing_comment_embeddings: 0,
        }
    }

    #[test]
    fn rounding_keeps_twelve_digits() {
        assert_eq!(round_sig(0.123456789012345), 0.123456789012);
        assert_eq!(round_sig(-98765.4321098765), -98765.4321099);
        assert_eq!(round_sig(0.0), 0.0);
    }

    #[test]
    fn aggregates_recompute_and_tampering_is_caught() {
        let r = ExperimentReport::new(
            ExperimentConfig::default(),
            vec![seed(1, 0.6), seed(2, 0.7), seed(3, 0.65)],
            Vec::new(),
        )
        .unwrap();
        assert!((r.mean["xauc"] - 0.65).abs() < 1e-12);
        assert!((r.std["xauc"] - 0.05).abs() < 1e-12);
        assert_eq!(r.std["mrr"], 0.0);
        let back = ExperimentReport::from_json(&r.to_json().unwrap()).unwrap();
        assert_eq!(back, r);

        let mut bad = r.clone();
        bad.mean.insert("xauc".into(), 0.66);
        assert!(ExperimentReport::from_json(&bad.to_json().unwrap()).is_err());
        let mut old = r;
        old.schema_version = 0;
        assert!(old.validate().is_err());
    }

    #[test]
    fn timestamp_is_isolated() {
        let mut a = ExperimentReport::new(ExperimentConfig::default(), vec![seed(1, 0.6)], Vec::new()).unwrap();
        let b = a.clone();
        a.stamp_now();
        assert_ne!(a.to_json().unwrap(), b.to_json().unwrap());
        assert_eq!(a.canonical_json().unwrap(), b.canonical_json().unwrap());
    }
}
