//! Three-layer perceptron (ReLU, ReLU, linear) used both as the adjacency-row
//! graph encoder and as the text fine-tuning head.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{glorot, ForwardCtx};
use crate::error::Result;
use crate::numerics::{DenseMatrix, ParamId, ParamStore, SparseMatrix, Tape, Var};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Linear {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut impl Rng,
        name: &str,
        d_in: usize,
        d_out: usize,
    ) -> Self {
        Self {
            weight: store.add(format!("{name}.weight"), glorot(d_in, d_out, rng)),
            bias: store.add(format!("{name}.bias"), DenseMatrix::zeros(1, d_out)),
        }
    }

    pub fn forward(&self, tape: &mut Tape, vars: &[Var], x: Var) -> Result<Var> {
        let y = tape.matmul(x, vars[self.weight.0])?;
        tape.add_row_vector(y, vars[self.bias.0])
    }
}

pub enum MlpInput {
    Dense(Var),
    /// Constant sparse rows, e.g. the summed adjacency.
    Sparse(Arc<SparseMatrix>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp3 {
    pub layers: [Linear; 3],
}

impl Mlp3 {
    pub fn new(store: &mut ParamStore, rng: &mut impl Rng, prefix: &str, dims: [usize; 4]) -> Self {
        Self {
            layers: [
                Linear::new(store, rng, &format!("{prefix}.layer0"), dims[0], dims[1]),
                Linear::new(store, rng, &format!("{prefix}.layer1"), dims[1], dims[2]),
                Linear::new(store, rng, &format!("{prefix}.layer2"), dims[2], dims[3]),
            ],
        }
    }

    pub fn input_dim(&self, store: &ParamStore) -> usize {
        store.get(self.layers[0].weight).rows()
    }

    pub fn forward(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        input: MlpInput,
        ctx: &mut ForwardCtx<'_>,
    ) -> Result<Var> {
        let first = &self.layers[0];
        let projected = match input {
            MlpInput::Dense(x) => tape.matmul(x, vars[first.weight.0])?,
            MlpInput::Sparse(a) => tape.sparse_matmul(a, vars[first.weight.0])?,
        };
        let mut h = tape.add_row_vector(projected, vars[first.bias.0])?;
        h = tape.relu(h);
        h = ctx.dropout(tape, h)?;
        h = self.layers[1].forward(tape, vars, h)?;
        h = tape.relu(h);
        h = ctx.dropout(tape, h)?;
        self.layers[2].forward(tape, vars, h)
    }

    pub fn params(&self) -> Vec<ParamId> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight, l.bias])
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup() -> (ParamStore, Mlp3) {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut store = ParamStore::new();
        let mlp = Mlp3::new(&mut store, &mut rng, "m", [4, 5, 5, 3]);
        for l in &mlp.layers {
            let (r, c) = store.get(l.bias).shape();
            *store.get_mut(l.bias) = DenseMatrix::from_fn(r, c, |_, j| 0.1 * (j as f64 + 1.0));
        }
        (store, mlp)
    }

    fn bias_path(store: &ParamStore, mlp: &Mlp3) -> DenseMatrix {
        let mut h = store.get(mlp.layers[0].bias).map(|v| v.max(0.0));
        h = h
            .matmul(store.get(mlp.layers[1].weight))
            .unwrap()
            .add(store.get(mlp.layers[1].bias))
            .unwrap();
        h = h.map(|v| v.max(0.0));
        h.matmul(store.get(mlp.layers[2].weight))
            .unwrap()
            .add(store.get(mlp.layers[2].bias))
            .unwrap()
    }

    #[test]
    fn zero_row_yields_bias_path() {
        let (store, mlp) = setup();
        let mut tape = Tape::new();
        let vars = tape.params(&store);
        let x = tape.constant(DenseMatrix::zeros(2, 4));
        let out = mlp
            .forward(
                &mut tape,
                &vars,
                MlpInput::Dense(x),
                &mut ForwardCtx::eval(),
            )
            .unwrap();
        let expected = bias_path(&store, &mlp);
        for i in 0..2 {
            assert_eq!(tape.value(out).row(i), expected.row(0));
        }
    }

    #[test]
    fn empty_sparse_row_yields_bias_path_and_equal_rows_match() {
        let (store, mlp) = setup();
        let adj = SparseMatrix::from_triplets(
            4,
            4,
            &[(0, 1, 1.0), (0, 2, 1.0), (1, 1, 1.0), (1, 2, 1.0)],
            crate::numerics::Duplicates::Collapse,
        )
        .unwrap();
        let mut tape = Tape::new();
        let vars = tape.params(&store);
        let out = mlp
            .forward(
                &mut tape,
                &vars,
                MlpInput::Sparse(Arc::new(adj)),
                &mut ForwardCtx::eval(),
            )
            .unwrap();
        let v = tape.value(out);
        assert_eq!(v.row(0), v.row(1));
        assert_eq!(v.row(3), bias_path(&store, &mlp).row(0));
    }
}
