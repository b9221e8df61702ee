use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap, HashSet};

use serde::Serialize;

use super::{CommentId, CommentRecord, ImpressionRecord, VideoId, VideoRecord, POPULAR_POOL};
use crate::error::{Error, Result};

/// Canonical popularity order: likes descending, then replies descending,
/// then comment id ascending.
pub fn popularity_cmp(a: &CommentRecord, b: &CommentRecord) -> Ordering {
    key_cmp(
        (a.like_count, a.reply_count, a.comment_id),
        (b.like_count, b.reply_count, b.comment_id),
    )
}

fn key_cmp(a: (u64, u64, CommentId), b: (u64, u64, CommentId)) -> Ordering {
    b.0.cmp(&a.0).then(b.1.cmp(&a.1)).then(a.2.cmp(&b.2))
}

#[derive(Debug, Clone, Copy)]
struct CommentEntry {
    video_id: VideoId,
    like_count: u64,
    reply_count: u64,
}

/// Per-video comment lists in canonical popularity order.
#[derive(Debug, Clone, Default)]
pub struct CommentIndex {
    by_video: BTreeMap<VideoId, Vec<CommentId>>,
    entries: HashMap<CommentId, CommentEntry>,
}

impl CommentIndex {
    pub fn build(comments: &[CommentRecord], videos: &[VideoRecord]) -> Result<Self> {
        let known: HashSet<VideoId> = videos.iter().map(|v| v.video_id).collect();
        let mut sorted: Vec<&CommentRecord> = Vec::with_capacity(comments.len());
        for c in comments {
            if !known.contains(&c.video_id) {
                return Err(Error::DanglingComment {
                    comment_id: c.comment_id.0,
                    video_id: c.video_id.0,
                });
            }
            sorted.push(c);
        }
        sorted.sort_by(|a, b| a.video_id.cmp(&b.video_id).then_with(|| popularity_cmp(a, b)));

        let mut by_video: BTreeMap<VideoId, Vec<CommentId>> = BTreeMap::new();
        let mut entries = HashMap::with_capacity(comments.len());
        for c in sorted {
            by_video.entry(c.video_id).or_default().push(c.comment_id);
            let prev = entries.insert(
                c.comment_id,
                CommentEntry {
                    video_id: c.video_id,
                    like_count: c.like_count,
                    reply_count: c.reply_count,
                },
            );
            if prev.is_some() {
                return Err(Error::Data(format!("duplicate comment id {}", c.comment_id)));
            }
        }
        Ok(Self { by_video, entries })
    }

    /// Comments of `video`, most popular first. Empty for unknown videos.
    pub fn comments_of(&self, video: VideoId) -> &[CommentId] {
        self.by_video.get(&video).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn videos(&self) -> impl Iterator<Item = (VideoId, &[CommentId])> {
        self.by_video.iter().map(|(v, c)| (*v, c.as_slice()))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn popularity(&self, id: CommentId) -> Option<(u64, u64)> {
        self.entries.get(&id).map(|e| (e.like_count, e.reply_count))
    }

    pub fn video_of(&self, id: CommentId) -> Option<VideoId> {
        self.entries.get(&id).map(|e| e.video_id)
    }

    /// Mean like count over the (up to) five most popular comments of `video`.
    pub fn avg_top_likes(&self, video: VideoId, top: usize) -> f64 {
        let ids = self.comments_of(video);
        let n = ids.len().min(top);
        if n == 0 {
            return 0.0;
        }
        ids[..n]
            .iter()
            .map(|id| self.entries[id].like_count as f64)
            .sum::<f64>()
            / n as f64
    }

    fn key(&self, id: CommentId) -> (u64, u64, CommentId) {
        let e = &self.entries[&id];
        (e.like_count, e.reply_count, id)
    }
}

/// Fixed-width comment slots for one impression.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampledComments {
    pub comment_ids: Vec<Option<CommentId>>,
    pub mask: Vec<bool>,
    pub interaction_labels: Vec<bool>,
    /// `(like_count, reply_count)` for real slots.
    pub popularity_keys: Vec<Option<(u64, u64)>>,
}

impl SampledComments {
    pub fn slots(&self) -> usize {
        self.mask.len()
    }

    pub fn real_count(&self) -> usize {
        self.mask.iter().filter(|m| **m).count()
    }

    /// Unmasked slot indices, most popular first.
    pub fn popularity_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.slots()).filter(|&i| self.mask[i]).collect();
        order.sort_by(|&a, &b| {
            let ka = self.popularity_keys[a].expect("real slot has keys");
            let kb = self.popularity_keys[b].expect("real slot has keys");
            let ia = self.comment_ids[a].expect("real slot has id");
            let ib = self.comment_ids[b].expect("real slot has id");
            key_cmp((ka.0, ka.1, ia), (kb.0, kb.1, ib))
        });
        order
    }

    /// Applies the slot permutation `perm` (new slot `i` takes old slot `perm[i]`).
    pub fn permuted(&self, perm: &[usize]) -> SampledComments {
        SampledComments {
            comment_ids: perm.iter().map(|&p| self.comment_ids[p]).collect(),
            mask: perm.iter().map(|&p| self.mask[p]).collect(),
            interaction_labels: perm.iter().map(|&p| self.interaction_labels[p]).collect(),
            popularity_keys: perm.iter().map(|&p| self.popularity_keys[p]).collect(),
        }
    }
}

/// Bookkeeping for interacted comments that did not fit into the slots.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct SampleStats {
    pub truncated_impressions: usize,
    pub dropped_interactions: usize,
}

/// Samples `k` comment slots for an opened impression.
///
/// The candidate pool is the seven most popular comments of the video plus
/// every comment the user interacted with. Interacted comments are always
/// kept (the most recent `k` of them if there are more than `k`); remaining
/// slots are filled with the most popular non-interacted candidates and
/// anything left over is padded with masked slots.
pub fn sample_comments(
    impression: &ImpressionRecord,
    index: &CommentIndex,
    k: usize,
    stats: &mut SampleStats,
) -> Result<SampledComments> {
    if k == 0 {
        return Err(Error::Config("comment slot count must be at least 1".into()));
    }
    if !impression.opened {
        return Err(Error::Data(format!(
            "impression ({}, {}) did not open the comments section",
            impression.user_id, impression.video_id
        )));
    }

    let mut interacted: Vec<CommentId> = Vec::new();
    for &c in impression.interacted_comment_ids.iter().rev() {
        if !interacted.contains(&c) {
            interacted.push(c);
        }
    }
    // `interacted` is most-recent first now.
    for &c in &interacted {
        match index.video_of(c) {
            Some(v) if v == impression.video_id => {}
            _ => {
                return Err(Error::Data(format!(
                    "interacted comment {c} does not belong to video {}",
                    impression.video_id
                )))
            }
        }
    }
    if interacted.len() > k {
        stats.truncated_impressions += 1;
        stats.dropped_interactions += interacted.len() - k;
        interacted.truncate(k);
    }

    let mut chosen: Vec<(CommentId, bool)> = interacted.iter().map(|&c| (c, true)).collect();
    for &c in index.comments_of(impression.video_id).iter().take(POPULAR_POOL) {
        if chosen.len() >= k {
            break;
        }
        if !interacted.contains(&c) {
            chosen.push((c, false));
        }
    }
    chosen.sort_by(|a, b| {
        let (la, ra, _) = index.key(a.0);
        let (lb, rb, _) = index.key(b.0);
        lb.cmp(&la)
            .then(rb.cmp(&ra))
            .then(b.1.cmp(&a.1))
            .then(a.0.cmp(&b.0))
    });
    Ok(fill_slots(&chosen, index, k))
}

/// Top-`k` popular comments with no interaction labels, for impressions
/// where the comments section was never opened.
pub fn sample_popular(video: VideoId, index: &CommentIndex, k: usize) -> Result<SampledComments> {
    if k == 0 {
        return Err(Error::Config("comment slot count must be at least 1".into()));
    }
    let chosen: Vec<(CommentId, bool)> = index
        .comments_of(video)
        .iter()
        .take(k.min(POPULAR_POOL))
        .map(|&c| (c, false))
        .collect();
    Ok(fill_slots(&chosen, index, k))
}

fn fill_slots(chosen: &[(CommentId, bool)], index: &CommentIndex, k: usize) -> SampledComments {
    let mut out = SampledComments {
        comment_ids: Vec::with_capacity(k),
        mask: Vec::with_capacity(k),
        interaction_labels: Vec::with_capacity(k),
        popularity_keys: Vec::with_capacity(k),
    };
    for &(c, label) in chosen {
        out.comment_ids.push(Some(c));
        out.mask.push(true);
        out.interaction_labels.push(label);
        out.popularity_keys.push(index.popularity(c));
    }
    while out.mask.len() < k {
        out.comment_ids.push(None);
        out.mask.push(false);
        out.interaction_labels.push(false);
        out.popularity_keys.push(None);
    }
    out
}
