//! Experiment orchestration: configuration, evaluation, reports, curve
//! tables and the commands behind the CLI.

mod commands;
mod config;
mod curves;
mod eval;
mod report;

pub use commands::{
    cmd_compare, cmd_curves, cmd_evaluate, cmd_generate, cmd_train, load_dataset, prepare, Comparison,
    ComparisonRow, PreparedData, COMMENT_TABLE_FILE, MOCK_EMBEDDING_DIM, VIDEO_TABLE_FILE,
};
pub use config::{
    CurvesConfig, DatasetConfig, DatasetKind, EmbeddingConfig, ExperimentConfig, ExposureThresholds, Hyperparameters,
};
pub use curves::{curve_csv, curve_points, curve_trend, equal_frequency_bins, spearman, CurveBin, CurveFeature};
pub use eval::{evaluate, exposure_counts, Evaluation, ExposureGroup, GroupMetrics, LIST_CUTOFFS};
pub use report::{round_sig, CurveTable, ExperimentReport, SeedReport, REPORT_SCHEMA_VERSION};
