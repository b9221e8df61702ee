//! Canonical records for users, videos, comments and impressions, plus the
//! comment-sampling procedure that turns an impression into a fixed-width
//! list of comment slots.

mod index;
pub(crate) mod io;
mod validate;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use index::{popularity_cmp, sample_comments, sample_popular, CommentIndex, SampleStats, SampledComments};
pub use io::{read_dataset, write_dataset, Manifest, DATASET_FILES, SCHEMA_VERSION};
pub use validate::{validate_dataset, ValidationReport, Violation};

/// Number of most-popular comments that always enter the candidate pool.
pub const POPULAR_POOL: usize = 7;

/// Default number of comment slots per example.
pub const DEFAULT_SLOTS: usize = 6;

macro_rules! id_type {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub u64);

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                self.0.fmt(f)
            }
        }
    };
}

id_type!(UserId);
id_type!(VideoId);
id_type!(CommentId);

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct UserHistory {
    pub video_ids: Vec<VideoId>,
    pub comment_interaction_ids: Vec<CommentId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserRecord {
    pub user_id: UserId,
    /// Ordinal activity bucket, `0..=4`.
    pub activity_level: u8,
    pub history: UserHistory,
}

pub const MAX_ACTIVITY_LEVEL: u8 = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoRecord {
    pub video_id: VideoId,
    pub duration_s: f64,
    pub caption_tokens: String,
    /// Sorted by [`popularity_cmp`].
    pub comment_ids: Vec<CommentId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommentRecord {
    pub comment_id: CommentId,
    pub video_id: VideoId,
    pub like_count: u64,
    pub reply_count: u64,
    pub content_tokens: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpressionRecord {
    pub user_id: UserId,
    pub video_id: VideoId,
    pub timestamp: i64,
    pub opened: bool,
    pub staytime_s: f64,
    pub watchtime_s: f64,
    /// In chronological order; the last entry is the most recent interaction.
    pub interacted_comment_ids: Vec<CommentId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InteractionKind {
    Like,
    Reply,
}

impl InteractionKind {
    pub fn as_str(self) -> &'static str {
        match self {
            InteractionKind::Like => "like",
            InteractionKind::Reply => "reply",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommentInteraction {
    pub user_id: UserId,
    pub comment_id: CommentId,
    pub video_id: VideoId,
    pub timestamp: i64,
    pub kind: InteractionKind,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub users: Vec<UserRecord>,
    pub videos: Vec<VideoRecord>,
    pub comments: Vec<CommentRecord>,
    pub impressions: Vec<ImpressionRecord>,
    pub comment_interactions: Vec<CommentInteraction>,
}

impl Dataset {
    pub fn opened_count(&self) -> usize {
        self.impressions.iter().filter(|i| i.opened).count()
    }
}
