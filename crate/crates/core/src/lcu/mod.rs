mod features;
mod model;
mod table;
mod train;

pub use features::{Example, FeatureSpace, Standardizer, COMMENT_FEATURE_DIM, USER_DENSE_DIM, VIDEO_FEATURE_DIM};
pub use model::{
    BatchCache, BatchOutput, EmbeddingInputs, Fusion, MissingPolicy, ModelConfig, NetShape, StaytimeNet, FIXED_TOKENS,
};
pub use table::{EmbeddingTable, TABLE_MAGIC, TABLE_VERSION};
pub use train::{batch_loss, train_model, EpochLog, LossParts, TrainConfig, TrainInputs, TrainedModel};
