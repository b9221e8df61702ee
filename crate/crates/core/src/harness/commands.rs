use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use serde::Serialize;

use super::config::{CurvesConfig, DatasetKind, ExperimentConfig};
use super::curves::{curve_csv, curve_points, curve_trend, equal_frequency_bins, CurveFeature};
use super::eval::{evaluate, exposure_counts};
use super::report::{CurveTable, ExperimentReport, SeedReport};
use crate::datagen::{generate_synthetic, hashed_embedding_table, load_external, time_split, ColumnMap, TimeSplit};
use crate::domain::{write_dataset, Dataset, Manifest, SampleStats, VideoId};
use crate::error::{Error, Result};
use crate::lcu::{train_model, EmbeddingInputs, EmbeddingTable, Example, FeatureSpace, TrainInputs, TrainedModel};

pub const VIDEO_TABLE_FILE: &str = "video_embeddings.lcue";
pub const COMMENT_TABLE_FILE: &str = "comment_embeddings.lcue";
/// Width of placeholder vectors for external data without embedding files.
pub const MOCK_EMBEDDING_DIM: usize = 32;

/// Generates the synthetic dataset: five CSVs, two embedding tables and a
/// manifest covering all of them.
pub fn cmd_generate(cfg: &ExperimentConfig) -> Result<(PathBuf, Manifest)> {
    if cfg.dataset.source != DatasetKind::Synthetic {
        return Err(Error::Config("generate needs `dataset.source = \"synthetic\"`".into()));
    }
    let data = generate_synthetic(&cfg.dataset.synthetic)?;
    let dir = cfg.data_dir();
    let mut manifest = write_dataset(&data.dataset, &dir)?;
    data.video_embeddings.write(&dir.join(VIDEO_TABLE_FILE))?;
    data.comment_embeddings.write(&dir.join(COMMENT_TABLE_FILE))?;
    manifest.record_file(&dir, VIDEO_TABLE_FILE)?;
    manifest.record_file(&dir, COMMENT_TABLE_FILE)?;
    manifest.write(&dir)?;
    Ok((dir, manifest))
}

/// The dataset named by the config and, when the run uses LCU, its
/// embedding tables.
pub fn load_dataset(cfg: &ExperimentConfig) -> Result<(Dataset, Option<(EmbeddingTable, EmbeddingTable)>)> {
    let (dataset, mock) = match cfg.dataset.source {
        DatasetKind::Synthetic => {
            let data = generate_synthetic(&cfg.dataset.synthetic)?;
            (data.dataset, Some((data.video_embeddings, data.comment_embeddings)))
        }
        DatasetKind::External => {
            let dir = cfg
                .dataset
                .path
                .as_ref()
                .ok_or_else(|| Error::Config("external datasets need `dataset.path`".into()))?;
            let map = match &cfg.dataset.column_map {
                Some(p) => ColumnMap::read(p)?,
                None => ColumnMap::identity(),
            };
            let outcome = load_external(dir, &map)?;
            if !outcome.rejects.is_empty() {
                let written = outcome.write_rejects(&cfg.output_dir.join("rejects"))?;
                log::warn!("{} rows rejected; see {:?}", outcome.rejects.len(), written);
            }
            (outcome.dataset, None)
        }
    };
    if !cfg.lcu {
        return Ok((dataset, None));
    }
    let e = &cfg.embeddings;
    let tables = match (&e.video, &e.comment) {
        (Some(v), Some(c)) if !e.mock => (EmbeddingTable::read(v)?, EmbeddingTable::read(c)?),
        _ => match mock {
            Some(t) => t,
            None => (
                hashed_embedding_table(
                    MOCK_EMBEDDING_DIM,
                    dataset.videos.iter().map(|v| (v.video_id.0, v.caption_tokens.as_str())),
                )?,
                hashed_embedding_table(
                    MOCK_EMBEDDING_DIM,
                    dataset.comments.iter().map(|c| (c.comment_id.0, c.content_tokens.as_str())),
                )?,
            ),
        },
    };
    Ok((dataset, Some(tables)))
}

/// A dataset turned into model inputs.
pub struct PreparedData {
    pub dataset: Dataset,
    pub split: TimeSplit,
    pub features: FeatureSpace,
    pub train: Vec<Example>,
    pub validation: Vec<Example>,
    /// Opened test impressions only.
    pub test: Vec<Example>,
    pub exposure: HashMap<VideoId, usize>,
    pub tables: Option<(EmbeddingTable, EmbeddingTable)>,
    pub sample_stats: SampleStats,
}

impl PreparedData {
    pub fn embeddings(&self, cfg: &ExperimentConfig) -> Option<EmbeddingInputs<'_>> {
        self.tables
            .as_ref()
            .map(|(v, c)| EmbeddingInputs::new(v, c, cfg.train.model.missing))
    }
}

pub fn prepare(cfg: &ExperimentConfig) -> Result<PreparedData> {
    cfg.validate()?;
    let (dataset, tables) = load_dataset(cfg)?;
    let split = time_split(&dataset, cfg.dataset.split)?;
    let features = FeatureSpace::fit(&dataset, &split.train, cfg.slots)?;
    let mut sample_stats = SampleStats::default();
    let train = features.examples(&split.train, &mut sample_stats)?;
    let validation = features.examples(&split.validation, &mut sample_stats)?;
    let opened_test: Vec<_> = split.test.iter().filter(|i| i.opened).cloned().collect();
    let test = features.examples(&opened_test, &mut sample_stats)?;
    let exposure = exposure_counts(&split.train);
    Ok(PreparedData {
        dataset,
        split,
        features,
        train,
        validation,
        test,
        exposure,
        tables,
        sample_stats,
    })
}

fn curve_tables(ds: &Dataset, cfg: &CurvesConfig) -> Result<Vec<CurveTable>> {
    cfg.features
        .iter()
        .map(|&f| {
            let bins = equal_frequency_bins(&curve_points(ds, f)?, cfg.bins)?;
            let trend = curve_trend(&bins, cfg.trend_bins);
            Ok(CurveTable::new(f, bins, trend, cfg.trend_bins))
        })
        .collect()
}

fn seed_report(
    cfg: &ExperimentConfig,
    data: &PreparedData,
    model: &TrainedModel,
    emb: Option<&EmbeddingInputs>,
    seed: u64,
) -> Result<SeedReport> {
    let preds = model.predict(&data.test, emb)?;
    let eval = evaluate(&data.test, &preds, &data.exposure, cfg.exposure)?;
    let missing = emb.map_or((0, 0), |e| (e.missing_videos(), e.missing_comments()));
    Ok(SeedReport::new(seed, eval, model.best_epoch, model.log.clone(), missing))
}

/// Trains one model per seed, saves the checkpoints, evaluates them on the
/// opened test impressions and writes the report.
pub fn cmd_train(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let data = prepare(cfg)?;
    fs::create_dir_all(cfg.checkpoint_dir()).map_err(|e| Error::io(cfg.checkpoint_dir(), e))?;
    let mut seeds = Vec::with_capacity(cfg.seeds.len());
    for &seed in &cfg.seeds {
        let emb = data.embeddings(cfg);
        let inputs = TrainInputs {
            train: &data.train,
            validation: &data.validation,
            n_users: data.features.n_users(),
            slots: cfg.slots,
            embeddings: emb.as_ref(),
        };
        let model = train_model(cfg.model, &inputs, &cfg.train_config(seed))?;
        model.save(&cfg.checkpoint_path(seed))?;
        log::info!("{} seed {seed}: best epoch {}", cfg.run_name(), model.best_epoch);
        seeds.push(seed_report(cfg, &data, &model, emb.as_ref(), seed)?);
    }
    finish(cfg, &data, seeds, cfg.report_path())
}

/// Re-evaluates saved checkpoints without training.
pub fn cmd_evaluate(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let data = prepare(cfg)?;
    let mut seeds = Vec::with_capacity(cfg.seeds.len());
    for &seed in &cfg.seeds {
        let path = cfg.checkpoint_path(seed);
        if !path.exists() {
            return Err(Error::Data(format!("missing checkpoint {}", path.display())));
        }
        let model = TrainedModel::load(&path)?;
        if model.kind() != cfg.model || model.is_lcu() != cfg.lcu {
            return Err(Error::Config(format!(
                "{} holds a different model than `{}`",
                path.display(),
                cfg.run_name()
            )));
        }
        let emb = data.embeddings(cfg);
        seeds.push(seed_report(cfg, &data, &model, emb.as_ref(), seed)?);
    }
    let path = cfg.output_dir.join(format!("{}.evaluate.report.json", cfg.run_name()));
    finish(cfg, &data, seeds, path)
}

fn finish(cfg: &ExperimentConfig, data: &PreparedData, seeds: Vec<SeedReport>, path: PathBuf) -> Result<ExperimentReport> {
    let curves = curve_tables(&data.dataset, &cfg.curves)?;
    let mut report = ExperimentReport::new(cfg.clone(), seeds, curves)?;
    report.stamp_now();
    report.write(&path)?;
    Ok(report)
}

/// Writes one `<feature>.csv` per configured feature under
/// `<output_dir>/curves` and returns each path with its trend statistic.
pub fn cmd_curves(cfg: &ExperimentConfig) -> Result<Vec<(CurveFeature, PathBuf, Option<f64>)>> {
    cfg.validate()?;
    let lcu_off = ExperimentConfig {
        lcu: false,
        ..cfg.clone()
    };
    let (ds, _) = load_dataset(&lcu_off)?;
    let dir = cfg.output_dir.join("curves");
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    cfg.curves
        .features
        .iter()
        .map(|&f| {
            let bins = equal_frequency_bins(&curve_points(&ds, f)?, cfg.curves.bins)?;
            let path = dir.join(format!("{f}.csv"));
            fs::write(&path, curve_csv(&bins)).map_err(|e| Error::io(&path, e))?;
            Ok((f, path, curve_trend(&bins, cfg.curves.trend_bins)))
        })
        .collect()
}

/// Lower is better for these; higher for everything else.
fn lower_is_better(metric: &str) -> bool {
    matches!(metric, "rmse" | "mae")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub metric: String,
    /// Mean per run, base first.
    pub values: Vec<f64>,
    /// `variant − base` for each later run.
    pub deltas: Vec<f64>,
    /// `delta / |base|`; absent when the base is zero.
    pub relative: Vec<Option<f64>>,
    /// `(wins, seeds compared)` of each variant against the base, matching
    /// seeds by value.
    pub wins: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub runs: Vec<String>,
    pub rows: Vec<ComparisonRow>,
}

/// Compares reports metric by metric against the first one.
pub fn cmd_compare(reports: &[ExperimentReport]) -> Result<Comparison> {
    if reports.len() < 2 {
        return Err(Error::Config("compare needs at least two reports".into()));
    }
    let base = &reports[0];
    let metrics: Vec<&String> = base
        .mean
        .keys()
        .filter(|k| reports.iter().all(|r| r.mean.contains_key(*k)))
        .collect();
    if metrics.is_empty() {
        return Err(Error::Data("the reports share no metrics".into()));
    }
    let rows = metrics
        .into_iter()
        .map(|m| {
            let b = base.mean[m];
            let mut row = ComparisonRow {
                metric: m.clone(),
                values: reports.iter().map(|r| r.mean[m]).collect(),
                deltas: Vec::new(),
                relative: Vec::new(),
                wins: Vec::new(),
            };
            for r in &reports[1..] {
                let d = r.mean[m] - b;
                row.deltas.push(d);
                row.relative.push((b != 0.0).then(|| d / b.abs()));
                let mut wins = 0;
                let mut compared = 0;
                for s in &r.seeds {
                    let other = base.seeds.iter().find(|t| t.seed == s.seed);
                    if let (Some(v), Some(w)) = (s.metrics.get(m), other.and_then(|t| t.metrics.get(m))) {
                        compared += 1;
                        let better = if lower_is_better(m) { v < w } else { v > w };
                        wins += usize::from(better);
                    }
                }
                row.wins.push((wins, compared));
            }
            row
        })
        .collect();
    Ok(Comparison {
        runs: reports.iter().map(|r| r.run.clone()).collect(),
        rows,
    })
}

impl Comparison {
    pub fn to_text(&self) -> String {
        let w = self.runs.iter().map(String::len).max().unwrap_or(0).max(12);
        let mut out = format!("{:<14}", "metric");
        for r in &self.runs {
            let _ = write!(out, " {r:>w$}");
        }
        for r in &self.runs[1..] {
            let _ = write!(out, " {:>w$}", format!("Δ {r}"));
        }
        out.push('\n');
        for row in &self.rows {
            let _ = write!(out, "{:<14}", row.metric);
            for v in &row.values {
                let _ = write!(out, " {v:>w$.6}");
            }
            for (i, d) in row.deltas.iter().enumerate() {
                let rel = row.relative[i].map_or(String::from("n/a"), |r| format!("{:+.2}%", 100.0 * r));
                let (won, n) = row.wins[i];
                let _ = write!(out, " {:>w$}", format!("{d:+.6} ({rel}, {won}/{n})"));
            }
            out.push('\n');
        }
        out
    }

    /// Long format: one line per metric and run.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,run,value,delta,relative_delta,wins,seeds\n");
        for row in &self.rows {
            for (i, run) in self.runs.iter().enumerate() {
                if i == 0 {
                    let _ = writeln!(out, "{},{run},{},,,,", row.metric, row.values[0]);
                } else {
                    let rel = row.relative[i - 1].map_or(String::new(), |r| r.to_string());
                    let (won, n) = row.wins[i - 1];
                    let _ = writeln!(
                        out,
                        "{},{run},{},{},{rel},{won},{n}",
                        row.metric,
                        row.values[i],
                        row.deltas[i - 1]
                    );
                }
            }
        }
        out
    }
}
