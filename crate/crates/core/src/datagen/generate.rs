use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{LogNormal, Normal, Pareto, StandardNormal};
use sha2::{Digest, Sha256};

use super::{staytime_response, GeneratorConfig};
use crate::domain::{
    popularity_cmp, CommentId, CommentIndex, CommentInteraction, CommentRecord, Dataset, ImpressionRecord,
    InteractionKind, UserHistory, UserId, UserRecord, VideoId, VideoRecord, MAX_ACTIVITY_LEVEL,
};
use crate::error::{Error, Result};
use crate::lcu::EmbeddingTable;
use crate::objectives::sigmoid;

/// Start of the simulated observation window, in epoch milliseconds.
const WINDOW_START_MS: i64 = 1_700_000_000_000;
const WINDOW_LEN_MS: i64 = 30 * 24 * 3600 * 1000;
const CAPTION_VOCAB: usize = 64;

/// Ground truth behind a synthetic dataset. Vectors are indexed by position
/// in the corresponding dataset table.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentState {
    pub user_topic_vectors: Vec<Vec<f64>>,
    pub video_topic_vectors: Vec<Vec<f64>>,
    pub comment_topic_vectors: Vec<Vec<f64>>,
    pub comment_quality: Vec<f64>,
    /// Topic cluster of each user and each video.
    pub user_topics: Vec<usize>,
    pub video_topics: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub dataset: Dataset,
    pub latent: LatentState,
    pub video_embeddings: EmbeddingTable,
    pub comment_embeddings: EmbeddingTable,
}

// Independent streams so that changing one phase leaves the others intact.
const STREAM_TOPICS: u64 = 1;
const STREAM_CATALOG: u64 = 2;
const STREAM_USERS: u64 = 3;
const STREAM_IMPRESSIONS: u64 = 4;
const STREAM_EMBEDDINGS: u64 = 5;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn unit_vector(v: Vec<f64>) -> Vec<f64> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        let mut e = vec![0.0; v.len()];
        e[0] = 1.0;
        return e;
    }
    v.into_iter().map(|x| x / norm).collect()
}

fn around(centre: &[f64], spread: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let scale = spread / (centre.len() as f64).sqrt();
    unit_vector(
        centre
            .iter()
            .map(|c| c + scale * rng.sample::<f64, _>(StandardNormal))
            .collect(),
    )
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn round_ms(x: f64) -> f64 {
    (x * 1000.0).round() / 1000.0
}

fn tokens(prefix: char, topic: usize, n: usize, rng: &mut ChaCha8Rng) -> String {
    let mut out = format!("t{topic}");
    for _ in 0..n {
        out.push_str(&format!(" {prefix}{}", rng.random_range(0..CAPTION_VOCAB)));
    }
    out
}

struct Catalog {
    videos: Vec<VideoRecord>,
    comments: Vec<CommentRecord>,
    video_vectors: Vec<Vec<f64>>,
    video_topics: Vec<usize>,
    video_popularity: Vec<f64>,
    comment_vectors: Vec<Vec<f64>>,
    comment_quality: Vec<f64>,
    /// Positions in `comments` for each video, in popularity order.
    comments_by_video: Vec<Vec<usize>>,
}

fn build_catalog(cfg: &GeneratorConfig, centres: &[Vec<f64>]) -> Result<Catalog> {
    let mut rng = stream(cfg.seed, STREAM_CATALOG);
    let duration = LogNormal::new(45f64.ln(), 0.9).map_err(|e| Error::Config(e.to_string()))?;
    let popularity = LogNormal::new(0.0, 0.8).map_err(|e| Error::Config(e.to_string()))?;
    let likes = Pareto::new(1.0, cfg.like_distribution - 1.0).map_err(|e| Error::Config(e.to_string()))?;

    let mut cat = Catalog {
        videos: Vec::with_capacity(cfg.n_videos),
        comments: Vec::new(),
        video_vectors: Vec::with_capacity(cfg.n_videos),
        video_topics: Vec::with_capacity(cfg.n_videos),
        video_popularity: Vec::with_capacity(cfg.n_videos),
        comment_vectors: Vec::new(),
        comment_quality: Vec::new(),
        comments_by_video: Vec::with_capacity(cfg.n_videos),
    };
    let [lo, hi] = cfg.comments_per_video;
    for v in 0..cfg.n_videos {
        let video_id = VideoId(v as u64 + 1);
        let topic = rng.random_range(0..cfg.n_topics);
        let vec = around(&centres[topic], cfg.topic_spread, &mut rng);
        let pop = popularity.sample(&mut rng);
        let dur = round_ms(duration.sample(&mut rng).clamp(3.0, 3600.0));

        let n_comments = rng.random_range(lo..=hi);
        let first = cat.comments.len();
        for _ in 0..n_comments {
            let comment_id = CommentId(cat.comments.len() as u64 + 1);
            let quality = pop * (likes.sample(&mut rng) - 1.0);
            let like_count = (cfg.like_scale * quality).round() as u64;
            let reply_count = (like_count as f64 * rng.random_range(0.0..0.2)).round() as u64;
            cat.comment_vectors.push(around(&vec, cfg.comment_spread, &mut rng));
            cat.comment_quality.push(quality);
            cat.comments.push(CommentRecord {
                comment_id,
                video_id,
                like_count,
                reply_count,
                content_tokens: tokens('w', topic, 6, &mut rng),
            });
        }
        let mut order: Vec<usize> = (first..cat.comments.len()).collect();
        order.sort_by(|&a, &b| popularity_cmp(&cat.comments[a], &cat.comments[b]));

        cat.videos.push(VideoRecord {
            video_id,
            duration_s: dur,
            caption_tokens: tokens('v', topic, 4, &mut rng),
            comment_ids: order.iter().map(|&i| cat.comments[i].comment_id).collect(),
        });
        cat.comments_by_video.push(order);
        cat.video_vectors.push(vec);
        cat.video_topics.push(topic);
        cat.video_popularity.push(pop);
    }
    Ok(cat)
}

fn interaction_probability(cfg: &GeneratorConfig, user: &[f64], comment: &[f64], quality: f64) -> f64 {
    sigmoid(cfg.interaction_bias + cfg.interaction_affinity_gain * dot(user, comment) + cfg.interaction_quality_gain * quality.ln_1p())
}

/// Generates a synthetic dataset, its latent ground truth and mock
/// embedding tables. The output is a pure function of `cfg`.
pub fn generate_synthetic(cfg: &GeneratorConfig) -> Result<SyntheticData> {
    cfg.validate()?;
    let d = cfg.latent_dim;

    let mut rng = stream(cfg.seed, STREAM_TOPICS);
    let centres: Vec<Vec<f64>> = (0..cfg.n_topics)
        .map(|_| unit_vector((0..d).map(|_| rng.sample(StandardNormal)).collect()))
        .collect();

    let cat = build_catalog(cfg, &centres)?;
    let index = CommentIndex::build(&cat.comments, &cat.videos)?;
    let avg_top5: Vec<f64> = cat
        .videos
        .iter()
        .map(|v| index.avg_top_likes(v.video_id, 5))
        .collect();
    let mut videos_by_topic = vec![Vec::new(); cfg.n_topics];
    for (i, &t) in cat.video_topics.iter().enumerate() {
        videos_by_topic[t].push(i);
    }

    // Users and their pre-window histories.
    let mut rng = stream(cfg.seed, STREAM_USERS);
    let mut users = Vec::with_capacity(cfg.n_users);
    let mut user_vectors = Vec::with_capacity(cfg.n_users);
    let mut user_topics = Vec::with_capacity(cfg.n_users);
    for u in 0..cfg.n_users {
        let topic = rng.random_range(0..cfg.n_topics);
        let vec = around(&centres[topic], cfg.topic_spread, &mut rng);
        let activity_level = rng.random_range(0..=MAX_ACTIVITY_LEVEL);
        let n_hist = 2 * (activity_level as usize + 1) + rng.random_range(0..4);
        let mut history = UserHistory::default();
        for _ in 0..n_hist {
            let v = pick_video(cfg, topic, &videos_by_topic, &mut rng);
            history.video_ids.push(cat.videos[v].video_id);
            for &c in &cat.comments_by_video[v] {
                let p = interaction_probability(cfg, &vec, &cat.comment_vectors[c], cat.comment_quality[c]);
                if rng.random_bool(p) {
                    history.comment_interaction_ids.push(cat.comments[c].comment_id);
                }
            }
        }
        users.push(UserRecord {
            user_id: UserId(u as u64 + 1),
            activity_level,
            history,
        });
        user_vectors.push(vec);
        user_topics.push(topic);
    }

    // Impressions.
    let mut rng = stream(cfg.seed, STREAM_IMPRESSIONS);
    let noise = Normal::new(0.0, cfg.noise_sigma).map_err(|e| Error::Config(e.to_string()))?;
    let user_pick = WeightedIndex::new(users.iter().map(|u| u.activity_level as f64 + 1.0))
        .map_err(|e| Error::Config(e.to_string()))?;
    let mut impressions = Vec::with_capacity(cfg.n_impressions);
    let mut interactions = Vec::new();
    for _ in 0..cfg.n_impressions {
        let u = user_pick.sample(&mut rng);
        let v = pick_video(cfg, user_topics[u], &videos_by_topic, &mut rng);
        let timestamp = WINDOW_START_MS + rng.random_range(0..WINDOW_LEN_MS);
        let duration = cat.videos[v].duration_s;
        let watch = round_ms(duration * rng.random_range(0.0..1.3f64).min(1.0));
        let opened = rng.random_bool(cfg.open_rate);

        let mut imp = ImpressionRecord {
            user_id: users[u].user_id,
            video_id: cat.videos[v].video_id,
            timestamp,
            opened,
            staytime_s: 0.0,
            watchtime_s: watch,
            interacted_comment_ids: Vec::new(),
        };
        if opened {
            let mut offset = 0;
            for &c in &cat.comments_by_video[v] {
                let p = interaction_probability(cfg, &user_vectors[u], &cat.comment_vectors[c], cat.comment_quality[c]);
                if rng.random_bool(p) {
                    offset += rng.random_range(1..5000);
                    let comment = &cat.comments[c];
                    imp.interacted_comment_ids.push(comment.comment_id);
                    let reply_share = (comment.reply_count + 1) as f64 / (comment.like_count + 2) as f64;
                    interactions.push(CommentInteraction {
                        user_id: imp.user_id,
                        comment_id: comment.comment_id,
                        video_id: imp.video_id,
                        timestamp: timestamp + offset,
                        kind: if rng.random_bool(reply_share.min(0.5)) {
                            InteractionKind::Reply
                        } else {
                            InteractionKind::Like
                        },
                    });
                }
            }
            let affinity = dot(&user_vectors[u], &cat.video_vectors[v]);
            let mean = staytime_response(
                &cfg.response,
                avg_top5[v],
                imp.interacted_comment_ids.len() as f64,
                watch,
                duration,
                affinity,
            );
            // Mean-preserving multiplicative noise.
            let factor = (noise.sample(&mut rng) - 0.5 * cfg.noise_sigma * cfg.noise_sigma).exp();
            imp.staytime_s = round_ms(mean * factor).max(0.001);
        }
        impressions.push(imp);
    }

    let mut rng = stream(cfg.seed, STREAM_EMBEDDINGS);
    let noise = Normal::new(0.0, cfg.embedding_noise.max(f64::MIN_POSITIVE)).map_err(|e| Error::Config(e.to_string()))?;
    let mut video_embeddings = EmbeddingTable::new(d + 1)?;
    for (i, v) in cat.videos.iter().enumerate() {
        let row = noisy_row(&cat.video_vectors[i], cat.video_popularity[i], cfg.embedding_noise, &noise, &mut rng);
        video_embeddings.insert(v.video_id.0, &row)?;
    }
    let mut comment_embeddings = EmbeddingTable::new(d + 1)?;
    for (i, c) in cat.comments.iter().enumerate() {
        let row = noisy_row(&cat.comment_vectors[i], cat.comment_quality[i], cfg.embedding_noise, &noise, &mut rng);
        comment_embeddings.insert(c.comment_id.0, &row)?;
    }

    Ok(SyntheticData {
        dataset: Dataset {
            users,
            videos: cat.videos,
            comments: cat.comments,
            impressions,
            comment_interactions: interactions,
        },
        latent: LatentState {
            user_topic_vectors: user_vectors,
            video_topic_vectors: cat.video_vectors,
            comment_topic_vectors: cat.comment_vectors,
            comment_quality: cat.comment_quality,
            user_topics,
            video_topics: cat.video_topics,
        },
        video_embeddings,
        comment_embeddings,
    })
}

fn pick_video(cfg: &GeneratorConfig, topic: usize, by_topic: &[Vec<usize>], rng: &mut ChaCha8Rng) -> usize {
    let own = &by_topic[topic];
    if !own.is_empty() && rng.random_bool(cfg.topical_exposure) {
        own[rng.random_range(0..own.len())]
    } else {
        rng.random_range(0..cfg.n_videos)
    }
}

fn noisy_row(vector: &[f64], quality: f64, sigma: f64, noise: &Normal<f64>, rng: &mut ChaCha8Rng) -> Vec<f64> {
    vector
        .iter()
        .copied()
        .chain(std::iter::once(quality.ln_1p()))
        .map(|x| if sigma > 0.0 { x + noise.sample(rng) } else { x })
        .collect()
}

/// Deterministic stand-in for an LLM embedder on external data: each vector
/// is seeded by a hash of the id and its text, so equal inputs give equal
/// vectors across runs and machines.
pub fn hashed_embedding_table<'a>(dim: usize, items: impl IntoIterator<Item = (u64, &'a str)>) -> Result<EmbeddingTable> {
    let mut table = EmbeddingTable::new(dim)?;
    for (id, text) in items {
        let mut h = Sha256::new();
        h.update(id.to_le_bytes());
        h.update(text.as_bytes());
        let seed: [u8; 32] = h.finalize().into();
        let mut rng = ChaCha8Rng::from_seed(seed);
        let row: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal) / (dim as f64).sqrt()).collect();
        table.insert(id, &row)?;
    }
    Ok(table)
}
