//! Lenient loader for exports that follow the canonical schema up to
//! column names.
//!
//! Columns are located through a [`ColumnMap`]. Rows that fail to parse or
//! break a cross-table reference are moved to a reject list instead of
//! aborting the load; [`LoadOutcome::write_rejects`] writes them next to the
//! data as `<table>.rejects.csv` with the original columns plus `reason`.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::Path;

use csv::StringRecord;
use serde::{Deserialize, Serialize};

use crate::domain::io::{
    parse_comment, parse_impression, parse_interaction, parse_user, parse_video, RawTable, RowResult,
};
use crate::domain::{popularity_cmp, CommentId, Dataset, VideoId, DATASET_FILES};
use crate::error::{Error, Result};

/// Canonical column name → external column name.
///
/// Keys may be bare (`user_id`) or table-qualified (`impressions.user_id`);
/// a qualified key wins. Unmapped columns keep their canonical name.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ColumnMap(pub BTreeMap<String, String>);

impl ColumnMap {
    pub fn identity() -> Self {
        Self::default()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn resolve(&self, table: &str, field: &str) -> String {
        self.0
            .get(&format!("{table}.{field}"))
            .or_else(|| self.0.get(field))
            .cloned()
            .unwrap_or_else(|| field.to_string())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RejectedRow {
    /// Table name without extension, e.g. `impressions`.
    pub table: &'static str,
    /// 1-based line number in the source file (the header is line 1).
    pub line: usize,
    pub reason: String,
    pub record: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct LoadOutcome {
    pub dataset: Dataset,
    pub rejects: Vec<RejectedRow>,
    /// Source headers per table, used when writing reject files.
    pub headers: BTreeMap<&'static str, Vec<String>>,
    /// Videos whose `comment_ids` column disagreed with the comments table
    /// and was rebuilt from it.
    pub rebuilt_comment_lists: usize,
}

impl LoadOutcome {
    pub fn rejects_for(&self, table: &str) -> impl Iterator<Item = &RejectedRow> {
        let table = table.to_string();
        self.rejects.iter().filter(move |r| r.table == table)
    }

    /// Writes one reject file per table that has rejects; returns their paths.
    pub fn write_rejects(&self, dir: &Path) -> Result<Vec<std::path::PathBuf>> {
        let mut written = Vec::new();
        for (table, header) in &self.headers {
            let rows: Vec<&RejectedRow> = self.rejects_for(table).collect();
            if rows.is_empty() {
                continue;
            }
            let path = dir.join(format!("{table}.rejects.csv"));
            let mut w = csv::WriterBuilder::new()
                .flexible(true)
                .from_path(&path)
                .map_err(|e| Error::csv(&path, e))?;
            let mut head = header.clone();
            head.push("reason".into());
            w.write_record(&head).map_err(|e| Error::csv(&path, e))?;
            for r in rows {
                let mut rec = r.record.clone();
                rec.push(r.reason.clone());
                w.write_record(&rec).map_err(|e| Error::csv(&path, e))?;
            }
            w.flush().map_err(|e| Error::io(&path, e))?;
            written.push(path);
        }
        Ok(written)
    }
}

fn table_name(file: &'static str) -> &'static str {
    file.strip_suffix(".csv").unwrap_or(file)
}

struct Collector {
    rejects: Vec<RejectedRow>,
}

impl Collector {
    fn parse<T>(
        &mut self,
        table: &'static str,
        raw: &RawTable,
        parse: fn(&RawTable, &StringRecord) -> RowResult<T>,
    ) -> Vec<(T, usize)> {
        let mut out = Vec::with_capacity(raw.rows.len());
        for (i, r) in raw.rows.iter().enumerate() {
            match parse(raw, r) {
                Ok(v) => out.push((v, i)),
                Err(reason) => self.reject(table, raw, i, reason),
            }
        }
        out
    }

    fn reject(&mut self, table: &'static str, raw: &RawTable, row: usize, reason: String) {
        self.rejects.push(RejectedRow {
            table,
            line: row + 2,
            reason,
            record: raw.rows[row].iter().map(str::to_string).collect(),
        });
    }
}

/// Loads the five tables from `dir`, resolving columns through `map`.
///
/// Unreadable files and missing columns are fatal. Bad rows are returned in
/// [`LoadOutcome::rejects`]; the surviving dataset passes validation.
pub fn load_external(dir: &Path, map: &ColumnMap) -> Result<LoadOutcome> {
    let mut raws = Vec::with_capacity(DATASET_FILES.len());
    let mut headers = BTreeMap::new();
    for (file, fields) in DATASET_FILES {
        let table = table_name(file);
        let raw = RawTable::read(&dir.join(file), fields, &|f| map.resolve(table, f))?;
        headers.insert(table, raw.headers.iter().map(str::to_string).collect());
        raws.push(raw);
    }
    let [users_t, videos_t, comments_t, impressions_t, interactions_t] = [0, 1, 2, 3, 4].map(|i| &raws[i]);
    let mut c = Collector { rejects: Vec::new() };

    let mut seen_users = HashSet::new();
    let mut users = Vec::new();
    for (u, row) in c.parse("users", users_t, parse_user) {
        if seen_users.insert(u.user_id) {
            users.push(u);
        } else {
            c.reject("users", users_t, row, format!("duplicate user_id {}", u.user_id));
        }
    }

    let mut seen_videos = HashSet::new();
    let mut videos = Vec::new();
    for (v, row) in c.parse("videos", videos_t, parse_video) {
        if seen_videos.insert(v.video_id) {
            videos.push(v);
        } else {
            c.reject("videos", videos_t, row, format!("duplicate video_id {}", v.video_id));
        }
    }

    let mut owner: HashMap<CommentId, VideoId> = HashMap::new();
    let mut comments = Vec::new();
    for (cm, row) in c.parse("comments", comments_t, parse_comment) {
        if !seen_videos.contains(&cm.video_id) {
            c.reject("comments", comments_t, row, format!("unknown video {}", cm.video_id));
        } else if owner.contains_key(&cm.comment_id) {
            c.reject("comments", comments_t, row, format!("duplicate comment_id {}", cm.comment_id));
        } else {
            owner.insert(cm.comment_id, cm.video_id);
            comments.push(cm);
        }
    }

    // The comments table is authoritative for which comments a video has.
    let mut by_video: HashMap<VideoId, Vec<usize>> = HashMap::new();
    for (i, cm) in comments.iter().enumerate() {
        by_video.entry(cm.video_id).or_default().push(i);
    }
    let mut rebuilt = 0;
    for v in &mut videos {
        let mut list = by_video.remove(&v.video_id).unwrap_or_default();
        list.sort_by(|&a, &b| popularity_cmp(&comments[a], &comments[b]));
        let ids: Vec<CommentId> = list.iter().map(|&i| comments[i].comment_id).collect();
        if ids != v.comment_ids {
            rebuilt += 1;
            v.comment_ids = ids;
        }
    }

    let mut impressions = Vec::new();
    for (imp, row) in c.parse("impressions", impressions_t, parse_impression) {
        let reason = if !seen_users.contains(&imp.user_id) {
            Some(format!("unknown user {}", imp.user_id))
        } else if !seen_videos.contains(&imp.video_id) {
            Some(format!("unknown video {}", imp.video_id))
        } else {
            imp.interacted_comment_ids
                .iter()
                .find(|cid| owner.get(cid) != Some(&imp.video_id))
                .map(|cid| format!("interacted comment {cid} does not belong to video {}", imp.video_id))
        };
        match reason {
            Some(r) => c.reject("impressions", impressions_t, row, r),
            None => impressions.push(imp),
        }
    }

    let mut interactions = Vec::new();
    for (ci, row) in c.parse("comment_interactions", interactions_t, parse_interaction) {
        if !seen_users.contains(&ci.user_id) {
            c.reject("comment_interactions", interactions_t, row, format!("unknown user {}", ci.user_id));
        } else if owner.get(&ci.comment_id) != Some(&ci.video_id) {
            c.reject(
                "comment_interactions",
                interactions_t,
                row,
                format!("comment {} does not belong to video {}", ci.comment_id, ci.video_id),
            );
        } else {
            interactions.push(ci);
        }
    }

    c.rejects.sort_by(|a, b| (a.table, a.line).cmp(&(b.table, b.line)));
    Ok(LoadOutcome {
        dataset: Dataset {
            users,
            videos,
            comments,
            impressions,
            comment_interactions: interactions,
        },
        rejects: c.rejects,
        headers,
        rebuilt_comment_lists: rebuilt,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{generate_synthetic, GeneratorConfig};
    use crate::domain::{read_dataset, validate_dataset, write_dataset};

    fn fixture() -> (tempfile::TempDir, Dataset) {
        let cfg = GeneratorConfig {
            n_users: 10,
            n_videos: 12,
            n_impressions: 200,
            ..GeneratorConfig::default()
        };
        let ds = generate_synthetic(&cfg).unwrap().dataset;
        let dir = tempfile::tempdir().unwrap();
        write_dataset(&ds, dir.path()).unwrap();
        (dir, ds)
    }

    #[test]
    fn identity_map_round_trips_bytes() {
        let (dir, ds) = fixture();
        let out = load_external(dir.path(), &ColumnMap::identity()).unwrap();
        assert!(out.rejects.is_empty());
        assert_eq!(out.rebuilt_comment_lists, 0);
        assert_eq!(out.dataset, ds);
        let again = tempfile::tempdir().unwrap();
        write_dataset(&out.dataset, again.path()).unwrap();
        for (name, _) in DATASET_FILES {
            assert_eq!(
                fs::read(dir.path().join(name)).unwrap(),
                fs::read(again.path().join(name)).unwrap(),
                "{name}"
            );
        }
    }

    #[test]
    fn one_bad_row_is_quarantined() {
        let (dir, ds) = fixture();
        let path = dir.path().join("impressions.csv");
        let mut text = fs::read_to_string(&path).unwrap();
        text.push_str("1,1,5,false,3.5,1.0,\n");
        fs::write(&path, text).unwrap();

        let out = load_external(dir.path(), &ColumnMap::identity()).unwrap();
        assert_eq!(out.dataset.impressions.len(), ds.impressions.len());
        assert_eq!(out.rejects.len(), 1);
        assert_eq!(out.rejects[0].line, ds.impressions.len() + 2);
        assert!(validate_dataset(&out.dataset).is_valid());

        let files = out.write_rejects(dir.path()).unwrap();
        assert_eq!(files.len(), 1);
        let mut r = csv::Reader::from_path(&files[0]).unwrap();
        assert_eq!(r.headers().unwrap().iter().last(), Some("reason"));
        assert_eq!(r.records().count(), 1);
    }

    #[test]
    fn renamed_columns_match_identity_load() {
        let (dir, _) = fixture();
        let renamed = tempfile::tempdir().unwrap();
        let mut map = ColumnMap::identity();
        for (file, fields) in DATASET_FILES {
            let table = table_name(file);
            let text = fs::read_to_string(dir.path().join(file)).unwrap();
            let (head, body) = text.split_once('\n').unwrap();
            let new_head: Vec<String> = head.split(',').map(|h| format!("ext_{table}_{h}")).collect();
            for f in fields {
                map.0.insert(format!("{table}.{f}"), format!("ext_{table}_{f}"));
            }
            fs::write(renamed.path().join(file), format!("{}\n{body}", new_head.join(","))).unwrap();
        }
        let json = serde_json::to_string(&map).unwrap();
        let a = load_external(renamed.path(), &ColumnMap::from_json(&json).unwrap()).unwrap();
        let b = load_external(dir.path(), &ColumnMap::identity()).unwrap();
        assert_eq!(a.dataset, b.dataset);
        assert_eq!(a.dataset, read_dataset(dir.path()).unwrap());
    }

    #[test]
    fn missing_column_is_fatal() {
        let (dir, _) = fixture();
        let mut map = ColumnMap::identity();
        map.0.insert("videos.duration_s".into(), "length".into());
        assert!(matches!(
            load_external(dir.path(), &map),
            Err(Error::MissingColumn { column, .. }) if column == "length"
        ));
    }

    #[test]
    fn dangling_references_cascade_to_rejects() {
        let (dir, ds) = fixture();
        let path = dir.path().join("comment_interactions.csv");
        let mut text = fs::read_to_string(&path).unwrap();
        text.push_str("999999,1,1,10,like\n");
        fs::write(&path, text).unwrap();
        let out = load_external(dir.path(), &ColumnMap::identity()).unwrap();
        assert_eq!(out.rejects_for("comment_interactions").count(), 1);
        assert_eq!(out.dataset.comment_interactions.len(), ds.comment_interactions.len());
    }
}
