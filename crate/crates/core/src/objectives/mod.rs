//! Training objectives and evaluation metrics.

mod losses;
pub mod metrics;

pub use losses::{bce_loss, bce_with_logit, listmle_loss, sigmoid, total_loss, LossWeights, LAMBDA_GRID};
pub use metrics::{
    gauc, mae, mrr, ndcg_at_k, percentile, relevance_labels, rmse, staytime_at_n, xauc, xgauc, RankedItem,
    RelevanceLabeling,
};
