//! Seeded synthetic datasets, the external-dataset loader and the
//! time-ordered splitter.
//!
//! The generator draws latent topic vectors for users, videos and comments,
//! derives interactions and staytimes from them through
//! [`staytime_response`], and exports noisy copies of the video and comment
//! vectors as mock LLM embedding tables. The embeddings therefore carry real
//! signal about user–video affinity without any language model involved.

mod external;
mod generate;
mod response;
mod split;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use external::{load_external, ColumnMap, LoadOutcome, RejectedRow};
pub use generate::{generate_synthetic, hashed_embedding_table, LatentState, SyntheticData};
pub use response::{staytime_response, StaytimeParams};
pub use split::{time_split, SplitRatios, TimeSplit};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub n_users: usize,
    pub n_videos: usize,
    pub n_impressions: usize,
    /// Inclusive range of comments per video.
    pub comments_per_video: [usize; 2],
    /// Power-law exponent of comment like counts.
    pub like_distribution: f64,
    /// Like count scale; shifts where videos fall on the likes response.
    pub like_scale: f64,
    pub open_rate: f64,
    /// Sigma of the multiplicative lognormal staytime noise.
    pub noise_sigma: f64,
    pub latent_dim: usize,
    /// Number of topic clusters users, videos and comments are drawn around.
    pub n_topics: usize,
    /// Spread of users/videos around their cluster centre.
    pub topic_spread: f64,
    /// Spread of comments around their video's topic.
    pub comment_spread: f64,
    pub interaction_bias: f64,
    pub interaction_affinity_gain: f64,
    /// Weight of `ln(1 + quality)` in the interaction logit.
    pub interaction_quality_gain: f64,
    /// Share of impressions drawn from the user's own topic cluster.
    pub topical_exposure: f64,
    /// Standard deviation of the Gaussian noise added to mock embeddings.
    pub embedding_noise: f64,
    pub response: StaytimeParams,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            n_users: 600,
            n_videos: 2500,
            n_impressions: 50_000,
            comments_per_video: [2, 24],
            like_distribution: 2.2,
            like_scale: 60.0,
            open_rate: 0.5,
            noise_sigma: 0.35,
            latent_dim: 16,
            n_topics: 8,
            topic_spread: 0.6,
            comment_spread: 0.5,
            interaction_bias: -2.6,
            interaction_affinity_gain: 3.0,
            interaction_quality_gain: 0.3,
            topical_exposure: 0.3,
            embedding_noise: 0.05,
            response: StaytimeParams::default(),
            seed: 7,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::Config(m));
        if self.n_users == 0 || self.n_videos == 0 || self.n_impressions == 0 {
            return err("n_users, n_videos and n_impressions must be positive".into());
        }
        let [lo, hi] = self.comments_per_video;
        if lo > hi {
            return err(format!("comments_per_video range [{lo}, {hi}] is empty"));
        }
        if !(self.like_distribution.is_finite() && self.like_distribution > 1.0) {
            return err("like_distribution exponent must exceed 1".into());
        }
        if !(self.open_rate > 0.0 && self.open_rate < 1.0) {
            return err(format!("open_rate {} outside (0, 1)", self.open_rate));
        }
        if !(0.0..=1.0).contains(&self.topical_exposure) {
            return err(format!("topical_exposure {} outside [0, 1]", self.topical_exposure));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma > 0.0) {
            return err("noise_sigma must be positive".into());
        }
        if self.latent_dim == 0 || self.n_topics == 0 {
            return err("latent_dim and n_topics must be positive".into());
        }
        for (name, v) in [
            ("like_scale", self.like_scale),
            ("topic_spread", self.topic_spread),
            ("comment_spread", self.comment_spread),
            ("embedding_noise", self.embedding_noise),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return err(format!("{name} must be finite and non-negative"));
            }
        }
        if [self.interaction_bias, self.interaction_affinity_gain, self.interaction_quality_gain]
            .iter()
            .any(|v| !v.is_finite())
        {
            return err("interaction parameters must be finite".into());
        }
        self.response.validate().map_err(Error::Config)
    }
}
