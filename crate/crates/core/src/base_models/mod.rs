//! The five base staytime predictors, expressed as target transforms plus
//! loss and prediction rules over a small vector of head outputs.
//!
//! | kind | outputs | trains on | target | staytime | rank score |
//! |------|---------|-----------|--------|----------|------------|
//! | VR   | 1 | opened | `st / scale`, squared error | `scale · max(0, o)` | staytime |
//! | WLR  | 2 | all | open BCE + weighted logistic (weight `st / scale`) | `scale · exp(b)` | `σ(a) · staytime` |
//! | NDT  | 1 | all | soft BCE on `log(1+st) / log(1+P99)`, 0 if unopened | unsupported | `σ(o)` |
//! | PCR  | 1 | opened | `st / duration`, squared error | `max(0, o) · duration` | `o` |
//! | D2Q  | 1 | opened | bucket quantile, squared error | inverse quantile | `o` |
//!
//! `scale` is the mean opened staytime of the training split, which keeps
//! the regression losses on the same order of magnitude as the auxiliary
//! ranking losses.

mod d2q;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use d2q::{DurationBuckets, DEFAULT_DURATION_BUCKETS};

use crate::error::{Error, Result};
use crate::nn::Tensor2D;
use crate::objectives::{bce_with_logit, percentile, sigmoid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaseKind {
    Vr,
    Wlr,
    Ndt,
    Pcr,
    D2q,
}

impl BaseKind {
    pub const ALL: [BaseKind; 5] = [BaseKind::Vr, BaseKind::Wlr, BaseKind::Ndt, BaseKind::Pcr, BaseKind::D2q];

    pub fn as_str(self) -> &'static str {
        match self {
            BaseKind::Vr => "vr",
            BaseKind::Wlr => "wlr",
            BaseKind::Ndt => "ndt",
            BaseKind::Pcr => "pcr",
            BaseKind::D2q => "d2q",
        }
    }

    pub fn n_outputs(self) -> usize {
        if self == BaseKind::Wlr {
            2
        } else {
            1
        }
    }

    /// Whether unopened impressions contribute to the loss.
    pub fn uses_unopened(self) -> bool {
        matches!(self, BaseKind::Wlr | BaseKind::Ndt)
    }

    fn code(self) -> f64 {
        Self::ALL.iter().position(|k| *k == self).unwrap() as f64
    }
}

impl fmt::Display for BaseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BaseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::Config(format!("unknown model kind `{s}` (expected vr|wlr|ndt|pcr|d2q)")))
    }
}

/// What the loss needs to know about one impression.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub opened: bool,
    pub staytime_s: f64,
    pub duration_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub staytime_s: Option<f64>,
    pub rank_score: f64,
}

impl Prediction {
    /// Staytime when the model has one, otherwise the rank score. Used for
    /// XAUC, which only needs an order.
    pub fn order_score(&self) -> f64 {
        self.staytime_s.unwrap_or(self.rank_score)
    }
}

/// PCR target: completion ratio, uncapped.
pub fn pcr_transform(staytime_s: f64, duration_s: f64) -> f64 {
    staytime_s / duration_s
}

pub fn pcr_inverse(ratio: f64, duration_s: f64) -> f64 {
    ratio * duration_s
}

/// NDT soft label: `log(1 + st) / log(1 + p99)`, clamped to `[0, 1]`.
pub fn ndt_target(staytime_s: f64, p99: f64) -> f64 {
    (staytime_s.ln_1p() / p99.ln_1p()).clamp(0.0, 1.0)
}

const MAX_LOG_ODDS: f64 = 30.0;

/// A fitted base model minus its network: target construction, per-row
/// loss with gradient on the head outputs, and prediction.
#[derive(Debug, Clone, PartialEq)]
pub enum TargetTransform {
    Vr { scale: f64 },
    Wlr { scale: f64 },
    Ndt { p99: f64 },
    Pcr,
    D2q(DurationBuckets),
}

impl TargetTransform {
    /// Fits transform statistics on training observations; only opened rows
    /// are used.
    pub fn fit(kind: BaseKind, train: &[Observation]) -> Result<Self> {
        let opened: Vec<&Observation> = train.iter().filter(|o| o.opened).collect();
        if opened.is_empty() {
            return Err(Error::Data("training split has no opened impressions".into()));
        }
        let mean = opened.iter().map(|o| o.staytime_s).sum::<f64>() / opened.len() as f64;
        let scale = if mean > 0.0 { mean } else { 1.0 };
        if kind == BaseKind::Wlr {
            if let Some(o) = opened.iter().find(|o| !(o.staytime_s > 0.0)) {
                return Err(Error::Data(format!(
                    "WLR needs positive staytime weights; an opened row has {}",
                    o.staytime_s
                )));
            }
        }
        Ok(match kind {
            BaseKind::Vr => TargetTransform::Vr { scale },
            BaseKind::Wlr => TargetTransform::Wlr { scale },
            BaseKind::Ndt => {
                let st: Vec<f64> = opened.iter().map(|o| o.staytime_s).collect();
                let p99 = percentile(&st, 0.99)?;
                TargetTransform::Ndt {
                    p99: if p99 > 0.0 { p99 } else { 1.0 },
                }
            }
            BaseKind::Pcr => TargetTransform::Pcr,
            BaseKind::D2q => {
                let pairs: Vec<(f64, f64)> = opened.iter().map(|o| (o.duration_s, o.staytime_s)).collect();
                TargetTransform::D2q(DurationBuckets::fit(&pairs, DEFAULT_DURATION_BUCKETS)?)
            }
        })
    }

    pub fn kind(&self) -> BaseKind {
        match self {
            TargetTransform::Vr { .. } => BaseKind::Vr,
            TargetTransform::Wlr { .. } => BaseKind::Wlr,
            TargetTransform::Ndt { .. } => BaseKind::Ndt,
            TargetTransform::Pcr => BaseKind::Pcr,
            TargetTransform::D2q(_) => BaseKind::D2q,
        }
    }

    pub fn n_outputs(&self) -> usize {
        self.kind().n_outputs()
    }

    pub fn trains_on(&self, obs: &Observation) -> bool {
        obs.opened || self.kind().uses_unopened()
    }

    /// Loss of one row and its gradient with respect to the head outputs.
    /// Rows the model does not train on give `(0, zeros)`.
    pub fn row_loss(&self, outputs: &[f64], obs: &Observation) -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; outputs.len()];
        if !self.trains_on(obs) {
            return (0.0, grad);
        }
        let o = outputs[0];
        let squared = |y: f64, grad: &mut Vec<f64>| {
            grad[0] = 2.0 * (o - y);
            (o - y) * (o - y)
        };
        let loss = match self {
            TargetTransform::Vr { scale } => squared(obs.staytime_s / scale, &mut grad),
            TargetTransform::Wlr { scale } => {
                let y = if obs.opened { 1.0 } else { 0.0 };
                let mut loss = bce_with_logit(o, y);
                grad[0] = sigmoid(o) - y;
                if obs.opened {
                    let b = outputs[1];
                    let w = obs.staytime_s / scale;
                    // Positive copy with weight w, negative copy with weight 1.
                    loss += w * bce_with_logit(b, 1.0) + bce_with_logit(b, 0.0);
                    grad[1] = w * (sigmoid(b) - 1.0) + sigmoid(b);
                }
                loss
            }
            TargetTransform::Ndt { p99 } => {
                let y = if obs.opened { ndt_target(obs.staytime_s, *p99) } else { 0.0 };
                grad[0] = sigmoid(o) - y;
                bce_with_logit(o, y)
            }
            TargetTransform::Pcr => squared(pcr_transform(obs.staytime_s, obs.duration_s), &mut grad),
            TargetTransform::D2q(b) => squared(b.transform(obs.duration_s, obs.staytime_s), &mut grad),
        };
        (loss, grad)
    }

    pub fn predict(&self, outputs: &[f64], duration_s: f64) -> Prediction {
        let o = outputs[0];
        match self {
            TargetTransform::Vr { scale } => {
                let st = scale * o.max(0.0);
                Prediction {
                    staytime_s: Some(st),
                    rank_score: st,
                }
            }
            TargetTransform::Wlr { scale } => {
                let st = scale * outputs[1].min(MAX_LOG_ODDS).exp();
                Prediction {
                    staytime_s: Some(st),
                    rank_score: sigmoid(o) * st,
                }
            }
            TargetTransform::Ndt { .. } => Prediction {
                staytime_s: None,
                rank_score: sigmoid(o),
            },
            TargetTransform::Pcr => Prediction {
                staytime_s: Some(pcr_inverse(o.max(0.0), duration_s)),
                rank_score: o,
            },
            TargetTransform::D2q(b) => Prediction {
                staytime_s: Some(b.inverse(duration_s, o)),
                rank_score: o,
            },
        }
    }

    pub fn predict_staytime(&self, outputs: &[f64], duration_s: f64) -> Result<f64> {
        self.predict(outputs, duration_s)
            .staytime_s
            .ok_or(Error::Unsupported("NDT predicts a relative engagement score, not staytime"))
    }

    pub(crate) fn sections(&self) -> Vec<(String, Tensor2D)> {
        let scalar = |v: f64| Tensor2D::from_vec(1, 1, vec![v]);
        let mut out = vec![("transform.kind".to_string(), scalar(self.kind().code()))];
        match self {
            TargetTransform::Vr { scale } | TargetTransform::Wlr { scale } => {
                out.push(("transform.scale".into(), scalar(*scale)))
            }
            TargetTransform::Ndt { p99 } => out.push(("transform.p99".into(), scalar(*p99))),
            TargetTransform::Pcr => {}
            TargetTransform::D2q(b) => out.extend(b.sections("transform.d2q")),
        }
        out
    }

    pub(crate) fn from_sections(sections: &BTreeMap<String, Tensor2D>) -> Result<Self> {
        let scalar = |name: &str| -> Result<f64> {
            let t = sections
                .get(name)
                .ok_or_else(|| Error::Data(format!("checkpoint lacks `{name}`")))?;
            if t.shape() != (1, 1) {
                return Err(Error::Data(format!("`{name}` is not a scalar")));
            }
            Ok(t.data()[0])
        };
        let code = scalar("transform.kind")?;
        let kind = BaseKind::ALL
            .into_iter()
            .find(|k| k.code() == code)
            .ok_or_else(|| Error::Data(format!("unknown transform kind code {code}")))?;
        Ok(match kind {
            BaseKind::Vr => TargetTransform::Vr {
                scale: scalar("transform.scale")?,
            },
            BaseKind::Wlr => TargetTransform::Wlr {
                scale: scalar("transform.scale")?,
            },
            BaseKind::Ndt => TargetTransform::Ndt {
                p99: scalar("transform.p99")?,
            },
            BaseKind::Pcr => TargetTransform::Pcr,
            BaseKind::D2q => TargetTransform::D2q(DurationBuckets::from_sections("transform.d2q", sections)?),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obs(opened: bool, st: f64, d: f64) -> Observation {
        Observation {
            opened,
            staytime_s: st,
            duration_s: d,
        }
    }

    #[test]
    fn kinds_parse() {
        for k in BaseKind::ALL {
            assert_eq!(k.as_str().parse::<BaseKind>().unwrap(), k);
        }
        assert_eq!("D2Q".parse::<BaseKind>().unwrap(), BaseKind::D2q);
        assert!("xgb".parse::<BaseKind>().is_err());
    }

    #[test]
    fn ndt_endpoints_and_monotone() {
        assert_eq!(ndt_target(0.0, 100.0), 0.0);
        assert_eq!(ndt_target(100.0, 100.0), 1.0);
        assert_eq!(ndt_target(1e6, 100.0), 1.0);
        let mut prev = -1.0;
        for i in 0..200 {
            let t = ndt_target(i as f64, 150.0);
            assert!(t >= prev);
            prev = t;
        }
        let t = TargetTransform::Ndt { p99: 100.0 };
        assert!(matches!(t.predict_staytime(&[0.3], 10.0), Err(Error::Unsupported(_))));
    }

    #[test]
    fn pcr_round_trip() {
        for (st, d) in [(0.0, 3.0), (12.5, 60.0), (400.0, 7.25), (1e-3, 3600.0)] {
            assert!((pcr_inverse(pcr_transform(st, d), d) - st).abs() <= 1e-12 * st.max(1.0));
        }
        let t = TargetTransform::Pcr;
        assert_eq!(t.predict(&[-0.5], 10.0).staytime_s, Some(0.0));
        assert_eq!(t.predict(&[1.5], 10.0).staytime_s, Some(15.0));
    }

    #[test]
    fn wlr_optimum_is_mean_weight() {
        // Constant tower-B logit b over opened rows: the loss
        // Σ w_i softplus(−b) + softplus(b) is minimised at exp(b) = mean(w).
        let t = TargetTransform::Wlr { scale: 1.0 };
        let rows = [obs(true, 0.5, 1.0), obs(true, 2.0, 1.0), obs(true, 3.5, 1.0)];
        let loss = |b: f64| rows.iter().map(|r| t.row_loss(&[0.0, b], r).0).sum::<f64>();
        let (mut lo, mut hi) = (-5.0f64, 5.0f64);
        for _ in 0..200 {
            let m1 = lo + (hi - lo) / 3.0;
            let m2 = hi - (hi - lo) / 3.0;
            if loss(m1) < loss(m2) {
                hi = m2;
            } else {
                lo = m1;
            }
        }
        let b = 0.5 * (lo + hi);
        assert!((b.exp() - 2.0).abs() < 1e-6, "{}", b.exp());
        let g: f64 = rows.iter().map(|r| t.row_loss(&[0.0, 2f64.ln()], r).1[1]).sum();
        assert!(g.abs() < 1e-12);
        // Unopened rows only train the open tower.
        let (_, g) = t.row_loss(&[0.4, 9.0], &obs(false, 0.0, 1.0));
        assert_eq!(g[1], 0.0);
        assert!(g[0] > 0.0);
    }

    #[test]
    fn regression_gradients_match_differences() {
        let train: Vec<Observation> = (1..200).map(|i| obs(true, i as f64 * 0.7, 5.0 + (i % 13) as f64)).collect();
        for kind in BaseKind::ALL {
            let t = TargetTransform::fit(kind, &train).unwrap();
            for o in &train[..20] {
                let out: Vec<f64> = (0..kind.n_outputs()).map(|i| 0.3 - 0.2 * i as f64).collect();
                let (_, g) = t.row_loss(&out, o);
                for k in 0..out.len() {
                    let mut p = out.clone();
                    p[k] += 1e-6;
                    let mut m = out.clone();
                    m[k] -= 1e-6;
                    let num = (t.row_loss(&p, o).0 - t.row_loss(&m, o).0) / 2e-6;
                    assert!((num - g[k]).abs() < 1e-6, "{kind} {k}: {num} vs {}", g[k]);
                }
            }
        }
    }

    #[test]
    fn unopened_rows_do_not_train_regressions() {
        let t = TargetTransform::Vr { scale: 2.0 };
        assert_eq!(t.row_loss(&[5.0], &obs(false, 0.0, 1.0)), (0.0, vec![0.0]));
        let ndt = TargetTransform::Ndt { p99: 50.0 };
        let (l, g) = ndt.row_loss(&[0.0], &obs(false, 30.0, 1.0));
        assert!((l - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(g, vec![0.5]);
    }

    #[test]
    fn wlr_odds_identity_and_weight_check() {
        let t = TargetTransform::Wlr { scale: 1.0 };
        assert_eq!(t.predict(&[0.0, 0.0], 10.0).staytime_s, Some(1.0));
        let bad = [obs(true, 3.0, 1.0), obs(true, 0.0, 1.0)];
        assert!(TargetTransform::fit(BaseKind::Wlr, &bad).is_err());
        assert!(TargetTransform::fit(BaseKind::Vr, &bad).is_ok());
    }

    #[test]
    fn transform_sections_round_trip() {
        let train: Vec<Observation> = (1..100).map(|i| obs(i % 3 != 0, i as f64, (i % 11) as f64 + 1.0)).collect();
        for kind in BaseKind::ALL {
            let t = TargetTransform::fit(kind, &train).unwrap();
            let map: BTreeMap<_, _> = t.sections().into_iter().collect();
            assert_eq!(TargetTransform::from_sections(&map).unwrap(), t);
        }
    }
}
