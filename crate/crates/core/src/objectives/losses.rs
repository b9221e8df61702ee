use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The λ values searched for the auxiliary-loss weights.
pub const LAMBDA_GRID: [f64; 5] = [1e-4, 1e-3, 1e-2, 1e-1, 1.0];

/// Weights of the two auxiliary ranking losses in the total objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub lambda1: f64,
    pub lambda2: f64,
}

impl LossWeights {
    pub fn new(lambda1: f64, lambda2: f64) -> Result<Self> {
        let w = Self { lambda1, lambda2 };
        w.validate()?;
        Ok(w)
    }

    pub fn zero() -> Self {
        Self {
            lambda1: 0.0,
            lambda2: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("lambda1", self.lambda1), ("lambda2", self.lambda2)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("{name} = {v} must be finite and non-negative")));
            }
        }
        Ok(())
    }
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda1: 1e-2,
            lambda2: 1.0,
        }
    }
}

/// `L_staytime + λ1·L_R1 + λ2·L_R2`.
pub fn total_loss(staytime: f64, r1: f64, r2: f64, weights: LossWeights) -> f64 {
    staytime + weights.lambda1 * r1 + weights.lambda2 * r2
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// ListMLE (Plackett–Luce negative log-likelihood of the true order).
///
/// `true_order` lists the unmasked slots from most to least popular. The
/// loss is `Σ_i [log Σ_{j≥i} exp(s_π(j)) − s_π(i)]`; the returned gradient
/// has one entry per slot and is zero on masked slots.
pub fn listmle_loss(scores: &[f64], true_order: &[usize], mask: &[bool]) -> Result<(f64, Vec<f64>)> {
    if scores.len() != mask.len() {
        return Err(Error::Shape {
            op: "listmle_loss",
            left: (scores.len(), 1),
            right: (mask.len(), 1),
        });
    }
    let unmasked = mask.iter().filter(|m| **m).count();
    if unmasked == 0 {
        return Err(Error::Data("ListMLE needs at least one unmasked slot".into()));
    }
    let mut seen = vec![false; scores.len()];
    for &slot in true_order {
        if slot >= scores.len() || !mask[slot] || seen[slot] {
            return Err(Error::Data(format!("true order entry {slot} is not a distinct unmasked slot")));
        }
        seen[slot] = true;
    }
    if true_order.len() != unmasked {
        return Err(Error::Data(format!(
            "true order has {} entries for {unmasked} unmasked slots",
            true_order.len()
        )));
    }

    let ordered: Vec<f64> = true_order.iter().map(|&i| scores[i]).collect();
    let n = ordered.len();
    // suffix[i] = log Σ_{j≥i} exp(ordered[j])
    let suffix: Vec<f64> = (0..n).map(|i| log_sum_exp(ordered[i..].iter().copied())).collect();
    let loss = (0..n).map(|i| suffix[i] - ordered[i]).sum();

    let mut grad = vec![0.0; scores.len()];
    for (m, &slot) in true_order.iter().enumerate() {
        // d/ds_m = Σ_{i≤m} softmax over suffix i evaluated at m, minus one.
        let p: f64 = (0..=m).map(|i| (ordered[m] - suffix[i]).exp()).sum();
        grad[slot] = p - 1.0;
    }
    Ok((loss, grad))
}

/// `-[y log σ(z) + (1 − y) log(1 − σ(z))]` in the stable logit form.
pub fn bce_with_logit(z: f64, y: f64) -> f64 {
    z.max(0.0) - z * y + (-z.abs()).exp().ln_1p()
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Mean binary cross-entropy over unmasked slots. Labels may be soft
/// targets in `[0, 1]`. Gradient is `(σ(z) − y) / N` on unmasked slots.
pub fn bce_loss(logits: &[f64], labels: &[f64], mask: &[bool]) -> Result<(f64, Vec<f64>)> {
    if logits.len() != labels.len() || logits.len() != mask.len() {
        return Err(Error::Shape {
            op: "bce_loss",
            left: (logits.len(), 1),
            right: (labels.len(), mask.len()),
        });
    }
    let n = mask.iter().filter(|m| **m).count();
    if n == 0 {
        return Err(Error::Data("BCE needs at least one unmasked slot".into()));
    }
    let inv = 1.0 / n as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; logits.len()];
    for i in 0..logits.len() {
        if mask[i] {
            loss += bce_with_logit(logits[i], labels[i]);
            grad[i] = (sigmoid(logits[i]) - labels[i]) * inv;
        }
    }
    Ok((loss * inv, grad))
}
