//! A small differentiable-layer toolkit in double precision: dense layers,
//! MLPs, masked multi-head self-attention, embedding lookup, optimizers and
//! a finite-difference gradient checker.
//!
//! Every layer follows the same contract: `forward` is pure, `backward`
//! accumulates parameter gradients into a zeroed clone of the layer and
//! returns the gradient with respect to its input.

mod attention;
mod checkpoint;
mod dense;
mod embedding;
pub mod gradcheck;
mod mlp;
mod optim;
mod params;
mod tensor;

pub use attention::{MhsaCache, MhsaConfig, MultiHeadSelfAttention};
pub use checkpoint::{decode_checkpoint, encode_checkpoint, read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC};
pub use dense::Dense;
pub use embedding::Embedding;
pub use gradcheck::{grad_check, GradCheckOptions, GradCheckReport};
pub use mlp::{Mlp, MlpCache};
pub use optim::{Adam, AdamConfig, Sgd};
pub use params::Parameters;
pub(crate) use params::join;
pub use tensor::Tensor2D;
