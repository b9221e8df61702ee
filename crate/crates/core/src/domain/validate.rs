use std::collections::{HashMap, HashSet};
use std::fmt;

use serde::Serialize;

use super::{popularity_cmp, CommentId, Dataset, UserId, VideoId, MAX_ACTIVITY_LEVEL};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    /// Which record kind the violation belongs to, e.g. `impressions`.
    pub table: &'static str,
    /// Record identifier, e.g. `user=3,video=9,row=17`.
    pub record: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}[{}]: {}", self.table, self.record, self.message)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, table: &'static str, record: String, message: impl Into<String>) {
        self.violations.push(Violation {
            table,
            record,
            message: message.into(),
        });
    }
}

/// Checks every record-level and cross-record invariant of the canonical
/// schema. Violations are collected, never raised.
pub fn validate_dataset(ds: &Dataset) -> ValidationReport {
    let mut report = ValidationReport::default();

    let mut users: HashSet<UserId> = HashSet::new();
    for u in &ds.users {
        let rec = format!("user={}", u.user_id);
        if !users.insert(u.user_id) {
            report.push("users", rec.clone(), "duplicate user_id");
        }
        if u.activity_level > MAX_ACTIVITY_LEVEL {
            report.push("users", rec, format!("activity_level {} outside 0..=4", u.activity_level));
        }
    }

    let mut videos: HashMap<VideoId, usize> = HashMap::new();
    for (i, v) in ds.videos.iter().enumerate() {
        let rec = format!("video={}", v.video_id);
        if videos.insert(v.video_id, i).is_some() {
            report.push("videos", rec.clone(), "duplicate video_id");
        }
        if !(v.duration_s.is_finite() && v.duration_s > 0.0) {
            report.push("videos", rec, format!("duration_s {} is not positive", v.duration_s));
        }
    }

    let mut comments: HashMap<CommentId, usize> = HashMap::new();
    for (i, c) in ds.comments.iter().enumerate() {
        let rec = format!("comment={}", c.comment_id);
        if comments.insert(c.comment_id, i).is_some() {
            report.push("comments", rec.clone(), "duplicate comment_id");
        }
        if !videos.contains_key(&c.video_id) {
            report.push("comments", rec, format!("unknown video {}", c.video_id));
        }
    }

    for v in &ds.videos {
        let rec = format!("video={}", v.video_id);
        let mut listed = Vec::with_capacity(v.comment_ids.len());
        for id in &v.comment_ids {
            match comments.get(id) {
                Some(&ci) if ds.comments[ci].video_id == v.video_id => listed.push(&ds.comments[ci]),
                Some(_) => report.push("videos", rec.clone(), format!("lists comment {id} of another video")),
                None => report.push("videos", rec.clone(), format!("lists unknown comment {id}")),
            }
        }
        if listed.windows(2).any(|w| popularity_cmp(w[0], w[1]).is_gt()) {
            report.push("videos", rec, "comment_ids not in popularity order");
        }
    }
    let mut per_video: HashMap<VideoId, usize> = HashMap::new();
    for c in &ds.comments {
        *per_video.entry(c.video_id).or_default() += 1;
    }
    for v in &ds.videos {
        let expected = per_video.get(&v.video_id).copied().unwrap_or(0);
        if v.comment_ids.len() != expected {
            report.push(
                "videos",
                format!("video={}", v.video_id),
                format!("lists {} comments but {} reference it", v.comment_ids.len(), expected),
            );
        }
    }

    for (row, imp) in ds.impressions.iter().enumerate() {
        let rec = format!("user={},video={},row={}", imp.user_id, imp.video_id, row);
        if !users.contains(&imp.user_id) {
            report.push("impressions", rec.clone(), "unknown user");
        }
        if !videos.contains_key(&imp.video_id) {
            report.push("impressions", rec.clone(), "unknown video");
        }
        if !(imp.staytime_s.is_finite() && imp.staytime_s >= 0.0) {
            report.push("impressions", rec.clone(), format!("staytime_s {} is negative", imp.staytime_s));
        }
        if !(imp.watchtime_s.is_finite() && imp.watchtime_s >= 0.0) {
            report.push("impressions", rec.clone(), format!("watchtime_s {} is negative", imp.watchtime_s));
        }
        if !imp.opened && imp.staytime_s != 0.0 {
            report.push("impressions", rec.clone(), "staytime on an unopened impression");
        }
        if !imp.opened && !imp.interacted_comment_ids.is_empty() {
            report.push("impressions", rec.clone(), "interactions on an unopened impression");
        }
        for c in &imp.interacted_comment_ids {
            match comments.get(c) {
                Some(&ci) if ds.comments[ci].video_id == imp.video_id => {}
                Some(_) => report.push("impressions", rec.clone(), format!("interacted comment {c} belongs to another video")),
                None => report.push("impressions", rec.clone(), format!("unknown interacted comment {c}")),
            }
        }
    }

    for (row, ci) in ds.comment_interactions.iter().enumerate() {
        let rec = format!("user={},comment={},row={}", ci.user_id, ci.comment_id, row);
        if !users.contains(&ci.user_id) {
            report.push("comment_interactions", rec.clone(), "unknown user");
        }
        match comments.get(&ci.comment_id) {
            Some(&i) if ds.comments[i].video_id == ci.video_id => {}
            Some(_) => report.push("comment_interactions", rec, "video does not own the comment"),
            None => report.push("comment_interactions", rec, "unknown comment"),
        }
    }

    report
}
