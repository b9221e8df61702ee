use std::collections::HashMap;

use crate::base_models::Observation;
use crate::domain::{
    sample_comments, sample_popular, CommentId, CommentIndex, Dataset, ImpressionRecord, SampleStats,
    SampledComments, UserId, VideoId, MAX_ACTIVITY_LEVEL,
};
use crate::error::{Error, Result};

/// Activity one-hot, log1p history length, log1p history interactions.
pub const USER_DENSE_DIM: usize = MAX_ACTIVITY_LEVEL as usize + 1 + 2;
/// log duration, log1p avg top-5 likes, log1p comment count, log1p
/// watchtime, watch ratio, completed flag.
pub const VIDEO_FEATURE_DIM: usize = 6;
/// log1p likes, log1p replies.
pub const COMMENT_FEATURE_DIM: usize = 2;

/// Per-column z-scoring; constant columns pass through centred.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit<'a>(dim: usize, rows: impl Iterator<Item = &'a [f64]>) -> Self {
        let mut n = 0.0;
        let mut sum = vec![0.0; dim];
        let mut sq = vec![0.0; dim];
        for r in rows {
            n += 1.0;
            for j in 0..dim {
                sum[j] += r[j];
                sq[j] += r[j] * r[j];
            }
        }
        let n = f64::max(n, 1.0);
        let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
        let std = sq
            .iter()
            .zip(&mean)
            .map(|(q, m)| {
                let v = (q / n - m * m).max(0.0).sqrt();
                if v > 1e-12 {
                    v
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, std }
    }

    pub fn apply(&self, row: &mut [f64]) {
        for ((x, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
            *x = (*x - m) / s;
        }
    }
}

/// One model input row.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub user_id: UserId,
    pub video_id: VideoId,
    /// Row of the user in the learned user-id embedding.
    pub user_row: usize,
    pub user_dense: Vec<f64>,
    pub video_features: Vec<f64>,
    pub slots: SampledComments,
    /// One row per slot; zero rows on padded slots.
    pub comment_features: Vec<Vec<f64>>,
    pub obs: Observation,
}

struct VideoInfo {
    duration_s: f64,
    log_duration: f64,
    log_top5: f64,
    log_comments: f64,
}

/// Turns impressions into [`Example`]s. Statistics that depend on
/// impressions are fitted on the training split only.
pub struct FeatureSpace {
    slots: usize,
    index: CommentIndex,
    user_rows: HashMap<UserId, usize>,
    user_dense: Vec<Vec<f64>>,
    videos: HashMap<VideoId, VideoInfo>,
    comments: HashMap<CommentId, [f64; COMMENT_FEATURE_DIM]>,
    video_scaler: Standardizer,
    comment_scaler: Standardizer,
}

impl FeatureSpace {
    pub fn fit(ds: &Dataset, train: &[ImpressionRecord], slots: usize) -> Result<Self> {
        if slots == 0 {
            return Err(Error::Config("comment slot count must be at least 1".into()));
        }
        let index = CommentIndex::build(&ds.comments, &ds.videos)?;

        let mut user_rows = HashMap::with_capacity(ds.users.len());
        let mut raw_users = Vec::with_capacity(ds.users.len());
        for (i, u) in ds.users.iter().enumerate() {
            if user_rows.insert(u.user_id, i).is_some() {
                return Err(Error::Data(format!("duplicate user {}", u.user_id)));
            }
            let mut row = vec![0.0; USER_DENSE_DIM];
            row[(u.activity_level as usize).min(MAX_ACTIVITY_LEVEL as usize)] = 1.0;
            row[USER_DENSE_DIM - 2] = (u.history.video_ids.len() as f64).ln_1p();
            row[USER_DENSE_DIM - 1] = (u.history.comment_interaction_ids.len() as f64).ln_1p();
            raw_users.push(row);
        }
        let user_scaler = Standardizer::fit(USER_DENSE_DIM, raw_users.iter().map(Vec::as_slice));
        for row in &mut raw_users {
            user_scaler.apply(row);
        }

        let videos = ds
            .videos
            .iter()
            .map(|v| {
                (
                    v.video_id,
                    VideoInfo {
                        duration_s: v.duration_s,
                        log_duration: v.duration_s.ln(),
                        log_top5: index.avg_top_likes(v.video_id, 5).ln_1p(),
                        log_comments: (v.comment_ids.len() as f64).ln_1p(),
                    },
                )
            })
            .collect();
        let raw_comments: Vec<(CommentId, [f64; COMMENT_FEATURE_DIM])> = ds
            .comments
            .iter()
            .map(|c| (c.comment_id, [(c.like_count as f64).ln_1p(), (c.reply_count as f64).ln_1p()]))
            .collect();
        // Fitted in dataset order so the sums do not depend on hash order.
        let comment_scaler = Standardizer::fit(COMMENT_FEATURE_DIM, raw_comments.iter().map(|(_, r)| &r[..]));
        let comments: HashMap<CommentId, [f64; COMMENT_FEATURE_DIM]> = raw_comments.into_iter().collect();

        let mut space = Self {
            slots,
            index,
            user_rows,
            user_dense: raw_users,
            videos,
            comments,
            video_scaler: Standardizer {
                mean: vec![0.0; VIDEO_FEATURE_DIM],
                std: vec![1.0; VIDEO_FEATURE_DIM],
            },
            comment_scaler,
        };
        let raw: Vec<Vec<f64>> = train.iter().map(|i| space.raw_video_features(i)).collect::<Result<_>>()?;
        space.video_scaler = Standardizer::fit(VIDEO_FEATURE_DIM, raw.iter().map(Vec::as_slice));
        Ok(space)
    }

    pub fn slots(&self) -> usize {
        self.slots
    }

    pub fn n_users(&self) -> usize {
        self.user_dense.len()
    }

    pub fn index(&self) -> &CommentIndex {
        &self.index
    }

    fn raw_video_features(&self, imp: &ImpressionRecord) -> Result<Vec<f64>> {
        let v = self
            .videos
            .get(&imp.video_id)
            .ok_or_else(|| Error::Data(format!("impression references unknown video {}", imp.video_id)))?;
        let ratio = imp.watchtime_s / v.duration_s;
        Ok(vec![
            v.log_duration,
            v.log_top5,
            v.log_comments,
            imp.watchtime_s.ln_1p(),
            ratio.min(2.0),
            if ratio >= 1.0 { 1.0 } else { 0.0 },
        ])
    }

    pub fn example(&self, imp: &ImpressionRecord, stats: &mut SampleStats) -> Result<Example> {
        let &user_row = self
            .user_rows
            .get(&imp.user_id)
            .ok_or_else(|| Error::Data(format!("impression references unknown user {}", imp.user_id)))?;
        let mut video_features = self.raw_video_features(imp)?;
        self.video_scaler.apply(&mut video_features);
        let slots = if imp.opened {
            sample_comments(imp, &self.index, self.slots, stats)?
        } else {
            sample_popular(imp.video_id, &self.index, self.slots)?
        };
        let comment_features = slots
            .comment_ids
            .iter()
            .map(|c| match c {
                Some(id) => {
                    let mut row = self.comments[id].to_vec();
                    self.comment_scaler.apply(&mut row);
                    row
                }
                None => vec![0.0; COMMENT_FEATURE_DIM],
            })
            .collect();
        Ok(Example {
            user_id: imp.user_id,
            video_id: imp.video_id,
            user_row,
            user_dense: self.user_dense[user_row].clone(),
            video_features,
            slots,
            comment_features,
            obs: Observation {
                opened: imp.opened,
                staytime_s: imp.staytime_s,
                duration_s: self.videos[&imp.video_id].duration_s,
            },
        })
    }

    pub fn examples(&self, imps: &[ImpressionRecord], stats: &mut SampleStats) -> Result<Vec<Example>> {
        imps.iter().map(|i| self.example(i, stats)).collect()
    }
}
