use rand::Rng;

use super::params::join;
use super::{Parameters, Tensor2D};
use crate::error::{Error, Result};

/// Affine layer `y = x·W + b` with `W: in × out` and `b: 1 × out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Tensor2D,
    pub bias: Tensor2D,
}

impl Dense {
    pub fn new<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        Self {
            weight: Tensor2D::xavier_uniform(inputs, outputs, rng),
            bias: Tensor2D::zeros(1, outputs),
        }
    }

    pub fn from_parts(weight: Tensor2D, bias: Tensor2D) -> Result<Self> {
        if bias.rows() != 1 || bias.cols() != weight.cols() {
            return Err(Error::Shape {
                op: "Dense::from_parts",
                left: weight.shape(),
                right: bias.shape(),
            });
        }
        Ok(Self { weight, bias })
    }

    pub fn inputs(&self) -> usize {
        self.weight.rows()
    }

    pub fn outputs(&self) -> usize {
        self.weight.cols()
    }

    pub fn forward(&self, input: &Tensor2D) -> Result<Tensor2D> {
        if input.cols() != self.inputs() {
            return Err(Error::Shape {
                op: "Dense::forward",
                left: input.shape(),
                right: self.weight.shape(),
            });
        }
        let mut out = input.matmul(&self.weight)?;
        let bias = self.bias.row(0);
        for r in 0..out.rows() {
            for (o, b) in out.row_mut(r).iter_mut().zip(bias) {
                *o += b;
            }
        }
        Ok(out)
    }

    /// Accumulates parameter gradients into `grads` and returns `dL/d input`.
    pub fn backward(&self, input: &Tensor2D, upstream: &Tensor2D, grads: &mut Dense) -> Result<Tensor2D> {
        if upstream.cols() != self.outputs() || upstream.rows() != input.rows() {
            return Err(Error::Shape {
                op: "Dense::backward",
                left: input.shape(),
                right: upstream.shape(),
            });
        }
        grads.weight.add_assign(&input.matmul_tn(upstream)?)?;
        let gb = grads.bias.row_mut(0);
        for r in 0..upstream.rows() {
            for (g, u) in gb.iter_mut().zip(upstream.row(r)) {
                *g += u;
            }
        }
        upstream.matmul_nt(&self.weight)
    }
}

impl Parameters for Dense {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor2D)) {
        f(&join(prefix, "weight"), &self.weight);
        f(&join(prefix, "bias"), &self.bias);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor2D)) {
        f(&join(prefix, "weight"), &mut self.weight);
        f(&join(prefix, "bias"), &mut self.bias);
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::nn::gradcheck::{grad_check, GradCheckOptions};

    #[test]
    fn identity_weights_pass_input_through() {
        let layer = Dense::from_parts(Tensor2D::identity(3), Tensor2D::zeros(1, 3)).unwrap();
        let x = Tensor2D::from_rows(&[vec![1.0, -2.0, 3.5], vec![0.0, 4.0, -1.0]]).unwrap();
        assert_eq!(layer.forward(&x).unwrap(), x);
    }

    #[test]
    fn scalar_layer() {
        let layer = Dense::from_parts(Tensor2D::from_rows(&[vec![2.0]]).unwrap(), Tensor2D::from_rows(&[vec![1.0]]).unwrap()).unwrap();
        let x = Tensor2D::from_rows(&[vec![3.0]]).unwrap();
        assert_eq!(layer.forward(&x).unwrap().data(), &[7.0]);
        let mut g = layer.zeros_like();
        let dx = layer.backward(&x, &Tensor2D::from_rows(&[vec![1.0]]).unwrap(), &mut g).unwrap();
        assert_eq!(dx.data(), &[2.0]);
        assert_eq!(g.weight.data(), &[3.0]);
        assert_eq!(g.bias.data(), &[1.0]);
    }

    #[test]
    fn forward_rejects_wrong_width() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let layer = Dense::new(4, 2, &mut rng);
        let err = layer.forward(&Tensor2D::zeros(3, 5)).unwrap_err();
        assert!(matches!(err, Error::Shape { left: (3, 5), right: (4, 2), .. }));
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let layer = Dense::new(4, 5, &mut rng);
        let x = Tensor2D::xavier_uniform(3, 4, &mut rng);
        let mut g = layer.zeros_like();
        let dx = layer.backward(&x, &Tensor2D::zeros(3, 5), &mut g).unwrap();
        assert!(dx.data().iter().all(|v| *v == 0.0));
        assert_eq!(g, layer.zeros_like());
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let layer = Dense::new(4, 5, &mut rng);
        let x = Tensor2D::xavier_uniform(3, 4, &mut rng);
        let weights = Tensor2D::xavier_uniform(3, 5, &mut rng);
        // loss = sum(weights ⊙ y), linear in every parameter and input.
        let loss = |l: &Dense, x: &Tensor2D| -> f64 {
            let y = l.forward(x).unwrap();
            y.data().iter().zip(weights.data()).map(|(a, b)| a * b).sum()
        };

        let mut g = layer.zeros_like();
        let dx = layer.backward(&x, &weights, &mut g).unwrap();

        let mut p = layer.clone();
        let report = grad_check(&mut p, &g, |l| loss(l, &x), &GradCheckOptions::default());
        assert!(report.max_rel_error < 1e-7, "{report:?}");

        let mut xin = x.clone();
        let report = grad_check(&mut xin, &dx, |xi| loss(&layer, xi), &GradCheckOptions::default());
        assert!(report.max_rel_error < 1e-7, "{report:?}");
    }
}
