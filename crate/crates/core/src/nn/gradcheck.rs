//! Central finite-difference gradient checking.

use serde::Serialize;

use super::Parameters;

#[derive(Debug, Clone, Copy)]
pub struct GradCheckOptions {
    pub eps: f64,
    /// Lower bound on the denominator of the relative error, so that
    /// near-zero gradients are compared absolutely.
    pub floor: f64,
    /// When set, coordinates whose forward and backward one-sided slopes
    /// disagree by more than this relative margin are treated as lying on a
    /// kink (e.g. ReLU at zero) and excluded.
    pub kink_margin: Option<f64>,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            eps: 1e-5,
            floor: 1e-6,
            kink_margin: None,
        }
    }
}

impl GradCheckOptions {
    pub fn with_kink_margin(mut self, margin: f64) -> Self {
        self.kink_margin = Some(margin);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Offender {
    pub tensor: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst: Option<Offender>,
    pub checked: usize,
    pub skipped_kinks: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_error < tolerance
    }
}

fn coordinate_count(p: &impl Parameters) -> Vec<(String, usize)> {
    let mut out = Vec::new();
    p.visit("", &mut |name, t| out.push((name.to_string(), t.data().len())));
    out
}

fn nudge<M: Parameters>(params: &mut M, tensor: usize, index: usize, delta: f64) {
    let mut i = 0;
    params.visit_mut("", &mut |_, t| {
        if i == tensor {
            t.data_mut()[index] += delta;
        }
        i += 1;
    });
}

fn set<M: Parameters>(params: &mut M, tensor: usize, index: usize, value: f64) {
    let mut i = 0;
    params.visit_mut("", &mut |_, t| {
        if i == tensor {
            t.data_mut()[index] = value;
        }
        i += 1;
    });
}

/// Compares `analytic` against `(f(x+eps) − f(x−eps)) / (2·eps)` for every
/// coordinate of `params`. `params` is restored exactly before returning.
pub fn grad_check<M, F>(params: &mut M, analytic: &M, mut loss: F, opts: &GradCheckOptions) -> GradCheckReport
where
    M: Parameters,
    F: FnMut(&M) -> f64,
{
    let mut analytic_values: Vec<Vec<f64>> = Vec::new();
    analytic.visit("", &mut |_, t| analytic_values.push(t.data().to_vec()));
    let mut original: Vec<Vec<f64>> = Vec::new();
    params.visit("", &mut |_, t| original.push(t.data().to_vec()));

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        checked: 0,
        skipped_kinks: 0,
    };
    let base = if opts.kink_margin.is_some() { loss(params) } else { 0.0 };

    for (ti, (name, len)) in coordinate_count(params).into_iter().enumerate() {
        for idx in 0..len {
            let x0 = original[ti][idx];
            nudge(params, ti, idx, opts.eps);
            let plus = loss(params);
            set(params, ti, idx, x0);
            nudge(params, ti, idx, -opts.eps);
            let minus = loss(params);
            set(params, ti, idx, x0);

            if let Some(margin) = opts.kink_margin {
                let fwd = (plus - base) / opts.eps;
                let bwd = (base - minus) / opts.eps;
                let scale = fwd.abs().max(bwd.abs()).max(opts.floor);
                if (fwd - bwd).abs() > margin * scale {
                    report.skipped_kinks += 1;
                    continue;
                }
            }

            let numeric = (plus - minus) / (2.0 * opts.eps);
            let a = analytic_values[ti][idx];
            let denom = a.abs().max(numeric.abs()).max(opts.floor);
            let rel = (a - numeric).abs() / denom;
            report.checked += 1;
            if rel > report.max_rel_error || rel.is_nan() {
                report.max_rel_error = if rel.is_nan() { f64::INFINITY } else { rel };
                report.worst = Some(Offender {
                    tensor: name.clone(),
                    index: idx,
                    analytic: a,
                    numeric,
                });
            }
        }
    }
    report
}
