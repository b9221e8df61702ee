use serde::{Deserialize, Serialize};

/// Parameters of the mean-staytime response surface.
///
/// ```text
/// likes(L)   = floor + (1 − floor) · exp(−min(L, knee) / decay)
/// inter(n)   = 1 + gain · ln(1 + min(n, knee_n)) / ln(1 + knee_n)
/// watch(w,d) = rate · w + bonus · [w ≥ min(d, completion)]
/// mean       = (base · likes · inter + watch) · (1 + affinity / 2)
/// ```
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StaytimeParams {
    pub base_s: f64,
    /// Average top-5 likes beyond which the likes term stops decreasing.
    pub likes_knee: f64,
    pub likes_decay: f64,
    pub likes_floor: f64,
    /// Interaction count at which the interaction term saturates.
    pub interaction_knee: f64,
    pub interaction_gain: f64,
    pub watch_rate: f64,
    pub completion_threshold_s: f64,
    pub completion_bonus_s: f64,
}

impl Default for StaytimeParams {
    fn default() -> Self {
        Self {
            base_s: 40.0,
            likes_knee: 1000.0,
            likes_decay: 150.0,
            likes_floor: 0.3,
            interaction_knee: 20.0,
            interaction_gain: 1.5,
            watch_rate: 0.1,
            completion_threshold_s: 1200.0,
            completion_bonus_s: 5.0,
        }
    }
}

impl StaytimeParams {
    pub fn likes_factor(&self, avg_top5_likes: f64) -> f64 {
        let l = avg_top5_likes.max(0.0).min(self.likes_knee);
        self.likes_floor + (1.0 - self.likes_floor) * (-l / self.likes_decay).exp()
    }

    pub fn interaction_factor(&self, n_interactions: f64) -> f64 {
        let n = n_interactions.max(0.0).min(self.interaction_knee);
        1.0 + self.interaction_gain * n.ln_1p() / self.interaction_knee.ln_1p()
    }

    pub fn watch_term(&self, watchtime_s: f64, duration_s: f64) -> f64 {
        let completed = watchtime_s >= duration_s.min(self.completion_threshold_s);
        self.watch_rate * watchtime_s + if completed { self.completion_bonus_s } else { 0.0 }
    }

    pub(crate) fn validate(&self) -> Result<(), String> {
        let positive = [
            ("base_s", self.base_s),
            ("likes_knee", self.likes_knee),
            ("likes_decay", self.likes_decay),
            ("interaction_knee", self.interaction_knee),
            ("completion_threshold_s", self.completion_threshold_s),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(format!("response.{name} must be positive"));
            }
        }
        if !(0.0..1.0).contains(&self.likes_floor) {
            return Err("response.likes_floor must lie in [0, 1)".into());
        }
        for (name, v) in [
            ("interaction_gain", self.interaction_gain),
            ("watch_rate", self.watch_rate),
            ("completion_bonus_s", self.completion_bonus_s),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(format!("response.{name} must be non-negative"));
            }
        }
        Ok(())
    }
}

/// Expected staytime in seconds. Always positive on the valid domain.
pub fn staytime_response(
    params: &StaytimeParams,
    avg_top5_likes: f64,
    n_interactions: f64,
    watchtime_s: f64,
    duration_s: f64,
    affinity: f64,
) -> f64 {
    let comments = params.base_s * params.likes_factor(avg_top5_likes) * params.interaction_factor(n_interactions);
    (comments + params.watch_term(watchtime_s, duration_s)) * (1.0 + 0.5 * affinity.clamp(-1.0, 1.0))
}
