//! Relational graph convolution with softmax attention over relation heads.
//!
//! Layer `l` computes
//!
//! ```text
//! H_l = act( sum_r softmax(a_l)_r * A_r H_{l-1} W_{l,r} + H_{l-1} S_l + b_l )
//! ```
//!
//! where `A_r` are the row-normalized adjacencies (self-loops included),
//! `a_l` are learnable per-layer relation logits, and `act` is ReLU on every
//! layer but the last, which stays linear.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{glorot, ForwardCtx};
use crate::error::{Error, Result};
use crate::graph::NormalizedGraph;
use crate::numerics::{row_softmax, DenseMatrix, ParamId, ParamStore, Tape, Var};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RgcnLayer {
    pub relation_weights: Vec<ParamId>,
    pub self_weight: ParamId,
    pub bias: ParamId,
    pub attention_logits: ParamId,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rgcn {
    /// Learnable per-node input embeddings; absent when the caller supplies
    /// the layer-0 input (text features for simple fusion).
    pub table: Option<ParamId>,
    pub layers: Vec<RgcnLayer>,
}

impl Rgcn {
    /// Link-only encoder: layer-0 input is an `n x dims[0]` embedding table.
    pub fn with_table(
        store: &mut ParamStore,
        rng: &mut impl Rng,
        prefix: &str,
        n: usize,
        relations: usize,
        dims: &[usize],
    ) -> Self {
        let bound = (3.0 / dims[0] as f64).sqrt();
        let table = DenseMatrix::from_fn(n, dims[0], |_, _| rng.random_range(-bound..bound));
        let table = store.add(format!("{prefix}.embedding"), table);
        let mut enc = Self::with_input(store, rng, prefix, relations, dims);
        enc.table = Some(table);
        enc
    }

    /// Encoder whose layer-0 input is provided at forward time.
    pub fn with_input(
        store: &mut ParamStore,
        rng: &mut impl Rng,
        prefix: &str,
        relations: usize,
        dims: &[usize],
    ) -> Self {
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(l, w)| {
                let (d_in, d_out) = (w[0], w[1]);
                let relation_weights = (0..relations)
                    .map(|r| {
                        store.add(
                            format!("{prefix}.layer{l}.relation{r}"),
                            glorot(d_in, d_out, rng),
                        )
                    })
                    .collect();
                RgcnLayer {
                    relation_weights,
                    self_weight: store
                        .add(format!("{prefix}.layer{l}.self"), glorot(d_in, d_out, rng)),
                    bias: store.add(
                        format!("{prefix}.layer{l}.bias"),
                        DenseMatrix::zeros(1, d_out),
                    ),
                    attention_logits: store.add(
                        format!("{prefix}.layer{l}.relation_attention"),
                        DenseMatrix::zeros(1, relations),
                    ),
                }
            })
            .collect();
        Self {
            table: None,
            layers,
        }
    }

    /// `input_aggregated`, when given, must equal the relation aggregation of
    /// the layer-0 input and spares recomputing it.
    pub fn forward(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        graph: &NormalizedGraph,
        input: Option<Var>,
        input_aggregated: Option<Arc<DenseMatrix>>,
        ctx: &mut ForwardCtx<'_>,
    ) -> Result<Var> {
        let mut h = match (self.table, input) {
            (Some(t), None) => vars[t.0],
            (None, Some(x)) => x,
            (Some(_), Some(_)) => {
                return Err(Error::Config(
                    "encoder has an embedding table and an input".into(),
                ))
            }
            (None, None) => return Err(Error::Config("encoder has no input".into())),
        };
        let last = self.layers.len() - 1;
        let mut aggregated = input_aggregated;
        for (l, layer) in self.layers.iter().enumerate() {
            let attention = tape.row_softmax(vars[layer.attention_logits.0])?;
            let weights: Vec<Var> = layer.relation_weights.iter().map(|p| vars[p.0]).collect();
            let relational = match aggregated.take() {
                Some(agg) => tape.relational_conv_aggregated(
                    graph.relations.clone(),
                    h,
                    agg,
                    &weights,
                    attention,
                )?,
                None => tape.relational_conv(graph.relations.clone(), h, &weights, attention)?,
            };
            let own = tape.matmul(h, vars[layer.self_weight.0])?;
            let summed = tape.add(relational, own)?;
            h = tape.add_row_vector(summed, vars[layer.bias.0])?;
            if l < last {
                h = tape.relu(h);
                h = ctx.dropout(tape, h)?;
            }
        }
        Ok(h)
    }

    /// Softmaxed relation-attention weights of every layer.
    pub fn relation_attention(&self, store: &ParamStore) -> Vec<Vec<f64>> {
        self.layers
            .iter()
            .map(|layer| {
                row_softmax(store.get(layer.attention_logits))
                    .expect("attention logits have at least one column")
                    .into_vec()
            })
            .collect()
    }

    pub fn params(&self) -> Vec<ParamId> {
        let mut out: Vec<ParamId> = self.table.into_iter().collect();
        for layer in &self.layers {
            out.extend(&layer.relation_weights);
            out.extend([layer.self_weight, layer.bias, layer.attention_logits]);
        }
        out
    }
}
