//! Canonical CSV layout of a dataset directory.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use csv::StringRecord;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{
    CommentId, CommentInteraction, CommentRecord, Dataset, ImpressionRecord, InteractionKind, UserHistory, UserId,
    UserRecord, VideoId, VideoRecord,
};
use crate::error::{Error, Result};

pub const SCHEMA_VERSION: &str = "staytime-lab/1";
pub const MANIFEST_FILE: &str = "manifest.json";

/// File name and canonical header of each dataset table.
pub const DATASET_FILES: [(&str, &[&str]); 5] = [
    ("users.csv", &["user_id", "activity_level", "video_ids", "comment_interaction_ids"]),
    ("videos.csv", &["video_id", "duration_s", "caption_tokens", "comment_ids"]),
    (
        "comments.csv",
        &["comment_id", "video_id", "like_count", "reply_count", "content_tokens"],
    ),
    (
        "impressions.csv",
        &[
            "user_id",
            "video_id",
            "timestamp",
            "opened",
            "staytime_s",
            "watchtime_s",
            "interacted_comment_ids",
        ],
    ),
    (
        "comment_interactions.csv",
        &["user_id", "comment_id", "video_id", "timestamp", "kind"],
    ),
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: String,
    pub row_counts: BTreeMap<String, usize>,
    /// SHA-256 of every file in the directory, keyed by file name.
    pub files: BTreeMap<String, String>,
}

impl Manifest {
    pub fn new() -> Self {
        Self {
            schema_version: SCHEMA_VERSION.to_string(),
            row_counts: BTreeMap::new(),
            files: BTreeMap::new(),
        }
    }

    pub fn record_file(&mut self, dir: &Path, name: &str) -> Result<()> {
        let path = dir.join(name);
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        self.files.insert(name.to_string(), hex::encode(Sha256::digest(&bytes)));
        Ok(())
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MANIFEST_FILE);
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: Manifest = serde_json::from_str(&text)?;
        if manifest.schema_version != SCHEMA_VERSION {
            return Err(Error::Data(format!(
                "{}: schema version `{}` (expected `{SCHEMA_VERSION}`)",
                path.display(),
                manifest.schema_version
            )));
        }
        Ok(manifest)
    }
}

impl Default for Manifest {
    fn default() -> Self {
        Self::new()
    }
}

pub(crate) fn join_ids<T: std::fmt::Display>(ids: &[T]) -> String {
    ids.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(";")
}

fn parse_ids<T: From<u64>>(field: &str, text: &str) -> std::result::Result<Vec<T>, String> {
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    text.split(';')
        .map(|s| {
            s.trim()
                .parse::<u64>()
                .map(T::from)
                .map_err(|_| format!("{field}: `{s}` is not an id"))
        })
        .collect()
}

impl From<u64> for UserId {
    fn from(v: u64) -> Self {
        UserId(v)
    }
}
impl From<u64> for VideoId {
    fn from(v: u64) -> Self {
        VideoId(v)
    }
}
impl From<u64> for CommentId {
    fn from(v: u64) -> Self {
        CommentId(v)
    }
}

fn parse_num<T: FromStr>(field: &str, text: &str) -> std::result::Result<T, String> {
    text.trim()
        .parse::<T>()
        .map_err(|_| format!("{field}: cannot parse `{text}`"))
}

fn parse_bool(field: &str, text: &str) -> std::result::Result<bool, String> {
    match text.trim() {
        "true" | "1" => Ok(true),
        "false" | "0" => Ok(false),
        other => Err(format!("{field}: `{other}` is not a boolean")),
    }
}

/// One table read from disk, with its canonical columns resolved to
/// positions in the file's header.
pub(crate) struct RawTable {
    pub path: PathBuf,
    pub headers: StringRecord,
    pub rows: Vec<StringRecord>,
    columns: Vec<usize>,
}

impl RawTable {
    /// Reads `path` and locates every canonical field through `resolve`,
    /// which maps a canonical field name to the header used in the file.
    pub fn read(path: &Path, fields: &[&str], resolve: &dyn Fn(&str) -> String) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_path(path)
            .map_err(|e| Error::csv(path, e))?;
        let headers = reader.headers().map_err(|e| Error::csv(path, e))?.clone();
        let mut columns = Vec::with_capacity(fields.len());
        for field in fields {
            let external = resolve(field);
            let pos = headers
                .iter()
                .position(|h| h == external)
                .ok_or_else(|| Error::MissingColumn {
                    file: path.display().to_string(),
                    column: external.clone(),
                })?;
            columns.push(pos);
        }
        let rows = reader
            .records()
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::csv(path, e))?;
        Ok(Self {
            path: path.to_path_buf(),
            headers,
            rows,
            columns,
        })
    }

    fn get<'a>(&self, row: &'a StringRecord, field: usize) -> &'a str {
        row.get(self.columns[field]).unwrap_or("")
    }
}

pub(crate) type RowResult<T> = std::result::Result<T, String>;

pub(crate) fn parse_user(t: &RawTable, r: &StringRecord) -> RowResult<UserRecord> {
    let activity_level: u8 = parse_num("activity_level", t.get(r, 1))?;
    if activity_level > super::MAX_ACTIVITY_LEVEL {
        return Err(format!("activity_level {activity_level} outside 0..=4"));
    }
    Ok(UserRecord {
        user_id: UserId(parse_num("user_id", t.get(r, 0))?),
        activity_level,
        history: UserHistory {
            video_ids: parse_ids("video_ids", t.get(r, 2))?,
            comment_interaction_ids: parse_ids("comment_interaction_ids", t.get(r, 3))?,
        },
    })
}

pub(crate) fn parse_video(t: &RawTable, r: &StringRecord) -> RowResult<VideoRecord> {
    let duration_s: f64 = parse_num("duration_s", t.get(r, 1))?;
    if !(duration_s.is_finite() && duration_s > 0.0) {
        return Err(format!("duration_s {duration_s} is not positive"));
    }
    Ok(VideoRecord {
        video_id: VideoId(parse_num("video_id", t.get(r, 0))?),
        duration_s,
        caption_tokens: t.get(r, 2).to_string(),
        comment_ids: parse_ids("comment_ids", t.get(r, 3))?,
    })
}

pub(crate) fn parse_comment(t: &RawTable, r: &StringRecord) -> RowResult<CommentRecord> {
    Ok(CommentRecord {
        comment_id: CommentId(parse_num("comment_id", t.get(r, 0))?),
        video_id: VideoId(parse_num("video_id", t.get(r, 1))?),
        like_count: parse_num("like_count", t.get(r, 2))?,
        reply_count: parse_num("reply_count", t.get(r, 3))?,
        content_tokens: t.get(r, 4).to_string(),
    })
}

pub(crate) fn parse_impression(t: &RawTable, r: &StringRecord) -> RowResult<ImpressionRecord> {
    let imp = ImpressionRecord {
        user_id: UserId(parse_num("user_id", t.get(r, 0))?),
        video_id: VideoId(parse_num("video_id", t.get(r, 1))?),
        timestamp: parse_num("timestamp", t.get(r, 2))?,
        opened: parse_bool("opened", t.get(r, 3))?,
        staytime_s: parse_num("staytime_s", t.get(r, 4))?,
        watchtime_s: parse_num("watchtime_s", t.get(r, 5))?,
        interacted_comment_ids: parse_ids("interacted_comment_ids", t.get(r, 6))?,
    };
    if !(imp.staytime_s.is_finite() && imp.staytime_s >= 0.0) {
        return Err(format!("staytime_s {} is negative", imp.staytime_s));
    }
    if !(imp.watchtime_s.is_finite() && imp.watchtime_s >= 0.0) {
        return Err(format!("watchtime_s {} is negative", imp.watchtime_s));
    }
    if !imp.opened && imp.staytime_s != 0.0 {
        return Err("staytime on an unopened impression".into());
    }
    if !imp.opened && !imp.interacted_comment_ids.is_empty() {
        return Err("interactions on an unopened impression".into());
    }
    Ok(imp)
}

pub(crate) fn parse_interaction(t: &RawTable, r: &StringRecord) -> RowResult<CommentInteraction> {
    let kind = match t.get(r, 4).trim() {
        "like" => InteractionKind::Like,
        "reply" => InteractionKind::Reply,
        other => return Err(format!("kind: `{other}` is neither like nor reply")),
    };
    Ok(CommentInteraction {
        user_id: UserId(parse_num("user_id", t.get(r, 0))?),
        comment_id: CommentId(parse_num("comment_id", t.get(r, 1))?),
        video_id: VideoId(parse_num("video_id", t.get(r, 2))?),
        timestamp: parse_num("timestamp", t.get(r, 3))?,
        kind,
    })
}

fn write_table(dir: &Path, name: &str, header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<()> {
    let path = dir.join(name);
    let mut w = csv::Writer::from_path(&path).map_err(|e| Error::csv(&path, e))?;
    w.write_record(header).map_err(|e| Error::csv(&path, e))?;
    for row in rows {
        w.write_record(&row).map_err(|e| Error::csv(&path, e))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))
}

/// Writes the five canonical CSV files plus `manifest.json` into `dir`.
pub fn write_dataset(ds: &Dataset, dir: &Path) -> Result<Manifest> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let [users, videos, comments, impressions, interactions] = DATASET_FILES;

    write_table(
        dir,
        users.0,
        users.1,
        ds.users.iter().map(|u| {
            vec![
                u.user_id.to_string(),
                u.activity_level.to_string(),
                join_ids(&u.history.video_ids),
                join_ids(&u.history.comment_interaction_ids),
            ]
        }),
    )?;
    write_table(
        dir,
        videos.0,
        videos.1,
        ds.videos.iter().map(|v| {
            vec![
                v.video_id.to_string(),
                v.duration_s.to_string(),
                v.caption_tokens.clone(),
                join_ids(&v.comment_ids),
            ]
        }),
    )?;
    write_table(
        dir,
        comments.0,
        comments.1,
        ds.comments.iter().map(|c| {
            vec![
                c.comment_id.to_string(),
                c.video_id.to_string(),
                c.like_count.to_string(),
                c.reply_count.to_string(),
                c.content_tokens.clone(),
            ]
        }),
    )?;
    write_table(
        dir,
        impressions.0,
        impressions.1,
        ds.impressions.iter().map(|i| {
            vec![
                i.user_id.to_string(),
                i.video_id.to_string(),
                i.timestamp.to_string(),
                i.opened.to_string(),
                i.staytime_s.to_string(),
                i.watchtime_s.to_string(),
                join_ids(&i.interacted_comment_ids),
            ]
        }),
    )?;
    write_table(
        dir,
        interactions.0,
        interactions.1,
        ds.comment_interactions.iter().map(|c| {
            vec![
                c.user_id.to_string(),
                c.comment_id.to_string(),
                c.video_id.to_string(),
                c.timestamp.to_string(),
                c.kind.as_str().to_string(),
            ]
        }),
    )?;

    let mut manifest = Manifest::new();
    let counts = [
        ds.users.len(),
        ds.videos.len(),
        ds.comments.len(),
        ds.impressions.len(),
        ds.comment_interactions.len(),
    ];
    for ((name, _), count) in DATASET_FILES.iter().zip(counts) {
        manifest.row_counts.insert(name.to_string(), count);
        manifest.record_file(dir, name)?;
    }
    manifest.write(dir)?;
    Ok(manifest)
}

fn parse_all<T>(
    t: &RawTable,
    parse: fn(&RawTable, &StringRecord) -> RowResult<T>,
) -> Result<Vec<T>> {
    t.rows
        .iter()
        .enumerate()
        .map(|(i, r)| {
            parse(t, r).map_err(|reason| Error::Data(format!("{} row {}: {reason}", t.path.display(), i + 2)))
        })
        .collect()
}

/// Reads a canonical dataset directory. Any malformed row is an error; use
/// `datagen::load_external` for lenient loading with a reject file.
pub fn read_dataset(dir: &Path) -> Result<Dataset> {
    let identity = |f: &str| f.to_string();
    let table = |i: usize| RawTable::read(&dir.join(DATASET_FILES[i].0), DATASET_FILES[i].1, &identity);
    Ok(Dataset {
        users: parse_all(&table(0)?, parse_user)?,
        videos: parse_all(&table(1)?, parse_video)?,
        comments: parse_all(&table(2)?, parse_comment)?,
        impressions: parse_all(&table(3)?, parse_impression)?,
        comment_interactions: parse_all(&table(4)?, parse_interaction)?,
    })
}
