use rand::Rng;

use super::params::join;
use super::{Dense, Parameters, Tensor2D};
use crate::error::Result;

/// Stack of dense layers with ReLU between them and a linear output.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

/// Activations kept from the forward pass: the input of every layer.
#[derive(Debug, Clone)]
pub struct MlpCache {
    inputs: Vec<Tensor2D>,
}

impl Mlp {
    /// `widths = [in, hidden.., out]`.
    pub fn new<R: Rng + ?Sized>(widths: &[usize], rng: &mut R) -> Self {
        assert!(widths.len() >= 2, "an MLP needs at least input and output widths");
        let layers = widths.windows(2).map(|w| Dense::new(w[0], w[1], rng)).collect();
        Self { layers }
    }

    /// Three dense layers: `in → h1 → h2 → out`.
    pub fn three_layer<R: Rng + ?Sized>(inputs: usize, hidden: [usize; 2], outputs: usize, rng: &mut R) -> Self {
        Self::new(&[inputs, hidden[0], hidden[1], outputs], rng)
    }

    pub fn inputs(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn outputs(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs()
    }

    pub fn forward(&self, input: &Tensor2D) -> Result<Tensor2D> {
        Ok(self.forward_cached(input)?.0)
    }

    pub fn forward_cached(&self, input: &Tensor2D) -> Result<(Tensor2D, MlpCache)> {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut h = input.clone();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = layer.forward(&h)?;
            if i < last {
                z.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
            }
            inputs.push(h);
            h = z;
        }
        Ok((h, MlpCache { inputs }))
    }

    pub fn backward(&self, cache: &MlpCache, upstream: &Tensor2D, grads: &mut Mlp) -> Result<Tensor2D> {
        let mut d = upstream.clone();
        for i in (0..self.layers.len()).rev() {
            let input = &cache.inputs[i];
            d = self.layers[i].backward(input, &d, &mut grads.layers[i])?;
            if i > 0 {
                // `input` is the ReLU output of layer i-1; the unit was active iff it is > 0.
                for (g, a) in d.data_mut().iter_mut().zip(input.data()) {
                    if *a <= 0.0 {
                        *g = 0.0;
                    }
                }
            }
        }
        Ok(d)
    }
}

impl Parameters for Mlp {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor2D)) {
        self.layers.visit(&join(prefix, "layers"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor2D)) {
        self.layers.visit_mut(&join(prefix, "layers"), f);
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::nn::gradcheck::{grad_check, GradCheckOptions};

    fn weighted_sum(y: &Tensor2D, w: &Tensor2D) -> f64 {
        y.data().iter().zip(w.data()).map(|(a, b)| a * b).sum()
    }

    #[test]
    fn zero_weights_output_final_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut mlp = Mlp::three_layer(4, [6, 5], 2, &mut rng);
        mlp.zero();
        mlp.layers[2].bias = Tensor2D::from_rows(&[vec![0.25, -4.0]]).unwrap();
        let y = mlp.forward(&Tensor2D::xavier_uniform(3, 4, &mut rng)).unwrap();
        for r in 0..3 {
            assert_eq!(y.row(r), &[0.25, -4.0]);
        }
    }

    #[test]
    fn dead_relu_unit_blocks_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut mlp = Mlp::three_layer(2, [3, 3], 1, &mut rng);
        // Hidden unit 0 of the first layer always has pre-activation -5.
        for r in 0..2 {
            mlp.layers[0].weight.set(r, 0, 0.0);
        }
        mlp.layers[0].bias.set(0, 0, -5.0);
        let x = Tensor2D::xavier_uniform(4, 2, &mut rng);
        let (_, cache) = mlp.forward_cached(&x).unwrap();
        let mut g = mlp.zeros_like();
        mlp.backward(&cache, &Tensor2D::from_vec(4, 1, vec![1.0; 4]), &mut g).unwrap();
        assert_eq!(g.layers[0].bias.get(0, 0), 0.0);
        assert_eq!(g.layers[0].weight.get(0, 0), 0.0);
        assert_eq!(g.layers[0].weight.get(1, 0), 0.0);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mlp = Mlp::three_layer(5, [7, 6], 3, &mut rng);
        let x = Tensor2D::xavier_uniform(4, 5, &mut rng);
        let w = Tensor2D::xavier_uniform(4, 3, &mut rng);
        let (_, cache) = mlp.forward_cached(&x).unwrap();
        let mut g = mlp.zeros_like();
        let dx = mlp.backward(&cache, &w, &mut g).unwrap();

        let opts = GradCheckOptions::default().with_kink_margin(1e-3);
        let mut p = mlp.clone();
        let r = grad_check(&mut p, &g, |m| weighted_sum(&m.forward(&x).unwrap(), &w), &opts);
        assert!(r.max_rel_error < 1e-4, "{r:?}");
        let mut xin = x.clone();
        let r = grad_check(&mut xin, &dx, |xi| weighted_sum(&mlp.forward(xi).unwrap(), &w), &opts);
        assert!(r.max_rel_error < 1e-4, "{r:?}");
    }

    #[test]
    fn kink_coordinates_are_excluded() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut mlp = Mlp::new(&[1, 1, 1], &mut rng);
        mlp.layers[0].weight.set(0, 0, 1.0);
        mlp.layers[0].bias.set(0, 0, 0.0);
        mlp.layers[1].weight.set(0, 0, 2.0);
        // x = 0 puts the hidden unit exactly on the ReLU kink.
        let x = Tensor2D::zeros(1, 1);
        let (_, cache) = mlp.forward_cached(&x).unwrap();
        let mut g = mlp.zeros_like();
        mlp.backward(&cache, &Tensor2D::from_vec(1, 1, vec![1.0]), &mut g).unwrap();
        let mut p = mlp.clone();
        let r = grad_check(
            &mut p,
            &g,
            |m| m.forward(&x).unwrap().get(0, 0),
            &GradCheckOptions::default().with_kink_margin(1e-3),
        );
        assert!(r.skipped_kinks >= 1);
        assert!(r.max_rel_error < 1e-4, "{r:?}");
    }
}
