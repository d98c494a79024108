//! Graph and text encoders that map every user into the shared fusion space.

pub mod mlp;
pub mod rgcn;
pub mod text;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::numerics::{tape::check_dropout_rate, DenseMatrix, Tape, Var};

pub use mlp::{Linear, Mlp3, MlpInput};
pub use rgcn::{Rgcn, RgcnLayer};
pub use text::{
    load_precomputed_embeddings, pool_word_vectors, read_word_vectors, tokenize, word_vector_dim,
    write_word_vectors, TextEncoderConfig, TextMode, WordVectors,
};

/// Training/evaluation switch shared by every forward pass.
pub struct ForwardCtx<'a> {
    dropout: f64,
    rng: Option<&'a mut ChaCha8Rng>,
}

impl<'a> ForwardCtx<'a> {
    pub fn eval() -> Self {
        Self {
            dropout: 0.0,
            rng: None,
        }
    }

    pub fn train(dropout: f64, rng: &'a mut ChaCha8Rng) -> Result<Self> {
        check_dropout_rate(dropout)?;
        Ok(Self {
            dropout,
            rng: Some(rng),
        })
    }

    pub fn is_training(&self) -> bool {
        self.rng.is_some()
    }

    pub fn dropout(&mut self, tape: &mut Tape, x: Var) -> Result<Var> {
        tape.dropout(x, self.dropout, self.rng.as_deref_mut())
    }
}

/// Glorot/Xavier uniform initialization.
pub fn glorot(rows: usize, cols: usize, rng: &mut impl Rng) -> DenseMatrix {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    DenseMatrix::from_fn(rows, cols, |_, _| rng.random_range(-bound..bound))
}
