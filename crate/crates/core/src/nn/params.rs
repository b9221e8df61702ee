use std::collections::BTreeMap;

use super::Tensor2D;
use crate::error::{Error, Result};

/// A set of named parameter tensors.
///
/// Gradients use the same type as the parameters they belong to, so a
/// zeroed clone of a layer is its gradient accumulator and both sides can be
/// walked in lockstep.
pub trait Parameters {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor2D));
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor2D));

    fn zero(&mut self) {
        self.visit_mut("", &mut |_, t| t.fill(0.0));
    }

    fn zeros_like(&self) -> Self
    where
        Self: Clone,
    {
        let mut z = self.clone();
        z.zero();
        z
    }

    fn num_params(&self) -> usize {
        let mut n = 0;
        self.visit("", &mut |_, t| n += t.data().len());
        n
    }

    fn named_tensors(&self, prefix: &str) -> Vec<(String, Tensor2D)> {
        let mut out = Vec::new();
        self.visit(prefix, &mut |name, t| out.push((name.to_string(), t.clone())));
        out
    }

    /// `self += scale * other`, tensor by tensor in visiting order.
    fn add_scaled_from(&mut self, other: &Self, scale: f64)
    where
        Self: Sized,
    {
        let mut others: Vec<Vec<f64>> = Vec::new();
        other.visit("", &mut |_, t| others.push(t.data().to_vec()));
        let mut i = 0;
        self.visit_mut("", &mut |_, t| {
            for (a, b) in t.data_mut().iter_mut().zip(&others[i]) {
                *a += scale * b;
            }
            i += 1;
        });
    }

    /// Overwrites every tensor from `sections` (matched by full name and shape).
    fn load_named(&mut self, prefix: &str, sections: &BTreeMap<String, Tensor2D>) -> Result<()> {
        let mut err = None;
        self.visit_mut(prefix, &mut |name, t| {
            if err.is_some() {
                return;
            }
            match sections.get(name) {
                Some(src) if src.shape() == t.shape() => *t = src.clone(),
                Some(src) => {
                    err = Some(Error::Shape {
                        op: "load_named",
                        left: t.shape(),
                        right: src.shape(),
                    })
                }
                None => err = Some(Error::Data(format!("checkpoint lacks parameter `{name}`"))),
            }
        });
        err.map_or(Ok(()), Err)
    }
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

impl<T: Parameters> Parameters for Vec<T> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor2D)) {
        for (i, p) in self.iter().enumerate() {
            p.visit(&join(prefix, &i.to_string()), f);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor2D)) {
        for (i, p) in self.iter_mut().enumerate() {
            p.visit_mut(&join(prefix, &i.to_string()), f);
        }
    }
}

impl<T: Parameters> Parameters for Option<T> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor2D)) {
        if let Some(p) = self {
            p.visit(prefix, f);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor2D)) {
        if let Some(p) = self {
            p.visit_mut(prefix, f);
        }
    }
}

/// A bare tensor treated as a single parameter; handy for checking input
/// gradients with the same machinery.
impl Parameters for Tensor2D {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor2D)) {
        f(prefix, self);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor2D)) {
        f(prefix, self);
    }
}
