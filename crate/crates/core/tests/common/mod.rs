//! Test oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeSet;

use camue::fusion::{FusionMode, GraphEncoderKind, Model, ModelInputs, ModelSpec};
use camue::graph::{build_graph, normalize, Edge};
use camue::numerics::{DenseMatrix, ParamId, ParamStore, SparseMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-5;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rows: usize, cols: usize, scale: f64, rng: &mut ChaCha8Rng) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| rng.random_range(-scale..scale))
}

pub fn relation_names(count: usize) -> Vec<String> {
    (0..count).map(|r| format!("rel{r}")).collect()
}

/// Random directed multigraph edges, duplicates and self-edges included.
pub fn random_edges(n: usize, relations: usize, density: f64, rng: &mut ChaCha8Rng) -> Vec<Edge> {
    let names = relation_names(relations);
    let mut edges = Vec::new();
    for name in &names {
        for i in 0..n {
            for j in 0..n {
                if rng.random::<f64>() < density {
                    edges.push(Edge::new(i, j, name.clone()));
                }
            }
        }
    }
    edges
}

pub fn random_sparse(rows: usize, cols: usize, density: f64, rng: &mut ChaCha8Rng) -> SparseMatrix {
    let mut triplets = Vec::new();
    for i in 0..rows {
        for j in 0..cols {
            if rng.random::<f64>() < density {
                triplets.push((i, j, rng.random_range(-2.0..2.0)));
            }
        }
    }
    SparseMatrix::from_triplets(rows, cols, &triplets, camue::numerics::Duplicates::Sum).unwrap()
}

pub fn to_rows(m: &DenseMatrix) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|i| m.row(i).to_vec()).collect()
}

pub fn dense_mul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let inner = b.len();
    let cols = b.first().map_or(0, Vec::len);
    a.iter()
        .map(|row| {
            assert_eq!(row.len(), inner);
            (0..cols)
                .map(|j| (0..inner).map(|k| row[k] * b[k][j]).sum())
                .collect()
        })
        .collect()
}

pub fn max_abs_diff(a: &[Vec<f64>], b: &DenseMatrix) -> f64 {
    assert_eq!((a.len(), a.first().map_or(0, Vec::len)), b.shape());
    let mut worst: f64 = 0.0;
    for (i, row) in a.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            worst = worst.max((v - b.get(i, j)).abs());
        }
    }
    worst
}

/// Row-normalized adjacencies with self-loops, built straight from the edge
/// list in the library's relation order (forward, reverse, forward, ...).
pub fn dense_normalized_relations(
    edges: &[Edge],
    n: usize,
    names: &[String],
) -> Vec<Vec<Vec<f64>>> {
    let mut out = Vec::new();
    for name in names {
        let pairs: BTreeSet<(usize, usize)> = edges
            .iter()
            .filter(|e| &e.relation == name)
            .map(|e| (e.src, e.dst))
            .collect();
        for reverse in [false, true] {
            let mut a = vec![vec![0.0; n]; n];
            for &(s, d) in &pairs {
                if reverse {
                    a[d][s] = 1.0;
                } else {
                    a[s][d] = 1.0;
                }
            }
            for (i, row) in a.iter_mut().enumerate() {
                row[i] += 1.0;
                let deg: f64 = row.iter().sum();
                row.iter_mut().for_each(|v| *v /= deg);
            }
            out.push(a);
        }
    }
    out
}

/// Straight-line two-layer relational convolution.
pub fn dense_rgcn(
    relations: &[Vec<Vec<f64>>],
    input: &[Vec<f64>],
    layers: &[DenseRgcnLayer],
) -> Vec<Vec<f64>> {
    let mut h = input.to_vec();
    for (l, layer) in layers.iter().enumerate() {
        let max = layer
            .attention_logits
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = layer
            .attention_logits
            .iter()
            .map(|a| (a - max).exp())
            .collect();
        let total: f64 = exps.iter().sum();
        let mut next = dense_mul(&h, &layer.self_weight);
        for (r, adj) in relations.iter().enumerate() {
            let term = dense_mul(&dense_mul(adj, &h), &layer.relation_weights[r]);
            for (row, t) in next.iter_mut().zip(&term) {
                for (v, x) in row.iter_mut().zip(t) {
                    *v += exps[r] / total * x;
                }
            }
        }
        for row in next.iter_mut() {
            for (v, b) in row.iter_mut().zip(&layer.bias) {
                *v += b;
                if l + 1 < layers.len() {
                    *v = v.max(0.0);
                }
            }
        }
        h = next;
    }
    h
}

pub struct DenseRgcnLayer {
    pub relation_weights: Vec<Vec<Vec<f64>>>,
    pub self_weight: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
    pub attention_logits: Vec<f64>,
}

pub fn dense_layers(rgcn: &camue::encoders::Rgcn, store: &ParamStore) -> Vec<DenseRgcnLayer> {
    rgcn.layers
        .iter()
        .map(|l| DenseRgcnLayer {
            relation_weights: l
                .relation_weights
                .iter()
                .map(|&p| to_rows(store.get(p)))
                .collect(),
            self_weight: to_rows(store.get(l.self_weight)),
            bias: store.get(l.bias).row(0).to_vec(),
            attention_logits: store.get(l.attention_logits).row(0).to_vec(),
        })
        .collect()
}

/// Relative error `|a - b| / (|a| + |b|)`, zero when both vanish.
pub fn relative_error(analytic: &DenseMatrix, numeric: &DenseMatrix) -> f64 {
    let mut diff = 0.0;
    for (a, b) in analytic.as_slice().iter().zip(numeric.as_slice()) {
        diff += (a - b) * (a - b);
    }
    let denom = analytic.norm() + numeric.norm();
    if denom < 1e-14 {
        0.0
    } else {
        diff.sqrt() / denom
    }
}

/// Central finite-difference gradient of `f` with respect to parameter `id`.
pub fn numeric_gradient(
    store: &ParamStore,
    id: ParamId,
    f: &dyn Fn(&ParamStore) -> f64,
) -> DenseMatrix {
    let mut work = store.clone();
    let (rows, cols) = store.get(id).shape();
    let mut grad = DenseMatrix::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            let orig = store.get(id).get(i, j);
            work.get_mut(id).set(i, j, orig + FD_STEP);
            let plus = f(&work);
            work.get_mut(id).set(i, j, orig - FD_STEP);
            let minus = f(&work);
            work.get_mut(id).set(i, j, orig);
            grad.set(i, j, (plus - minus) / (2.0 * FD_STEP));
        }
    }
    grad
}

/// Worst per-tensor relative error over `ids`, with the offending name.
pub fn worst_gradient_error(
    store: &ParamStore,
    ids: &[ParamId],
    analytic: &[DenseMatrix],
    f: &dyn Fn(&ParamStore) -> f64,
) -> (f64, String) {
    let mut worst = (0.0, String::new());
    for &id in ids {
        let numeric = numeric_gradient(store, id, f);
        let err = relative_error(&analytic[id.0], &numeric);
        if err > worst.0 || worst.1.is_empty() {
            worst = (err, store.name(id).to_string());
        }
    }
    worst
}

/// Six users, two declared relations, five text dimensions, three classes.
pub fn six_node_instance(seed: u64) -> (ModelInputs, Vec<(usize, usize)>) {
    let edges = vec![
        Edge::new(0, 1, "rel0"),
        Edge::new(1, 2, "rel0"),
        Edge::new(2, 0, "rel0"),
        Edge::new(3, 4, "rel0"),
        Edge::new(0, 3, "rel1"),
        Edge::new(4, 5, "rel1"),
        Edge::new(5, 1, "rel1"),
        Edge::new(2, 5, "rel1"),
    ];
    let g = build_graph(&edges, 6, &relation_names(2)).unwrap();
    let mut r = rng(seed);
    let text = random_matrix(6, 5, 1.0, &mut r);
    let targets = (0..6).map(|u| (u, u % 3)).collect();
    (ModelInputs::new(normalize(&g), text).unwrap(), targets)
}

pub fn small_spec(
    mode: FusionMode,
    encoder: GraphEncoderKind,
    inputs: &ModelInputs,
    classes: usize,
) -> ModelSpec {
    ModelSpec {
        embed_dim: 4,
        hidden: 5,
        fuse_dim: 3,
        gate_hidden: [4, 3],
        dropout: 0.0,
        ..ModelSpec::new(
            mode,
            encoder,
            inputs.n(),
            inputs.graph.relation_count(),
            inputs.text.cols(),
            classes,
        )
    }
}

/// Overwrites every parameter with uniform values in [-0.8, 0.8].
pub fn randomize_params(model: &mut Model, seed: u64) {
    let mut r = rng(seed);
    for m in model.params.values_mut() {
        let (rows, cols) = m.shape();
        *m = random_matrix(rows, cols, 0.8, &mut r);
    }
}

/// Confusion-matrix accuracy and macro-F1 over the classes present in
/// either truth or prediction.
pub fn confusion_metrics(truth: &[usize], pred: &[usize], classes: usize) -> (f64, f64) {
    let mut cm = vec![vec![0usize; classes]; classes];
    for (&t, &p) in truth.iter().zip(pred) {
        cm[t][p] += 1;
    }
    let correct: usize = cm.iter().enumerate().map(|(k, row)| row[k]).sum();
    let mut f1s = Vec::new();
    for (k, row) in cm.iter().enumerate() {
        let tp = row[k] as f64;
        let actual: usize = row.iter().sum();
        let predicted: usize = (0..classes).map(|t| cm[t][k]).sum();
        if actual == 0 && predicted == 0 {
            continue;
        }
        f1s.push(2.0 * tp / (actual + predicted) as f64);
    }
    (
        correct as f64 / truth.len() as f64,
        f1s.iter().sum::<f64>() / f1s.len() as f64,
    )
}

/// Loss and analytic gradients of `model` on `targets`. With a dropout seed
/// the pass runs in training mode with a freshly seeded mask generator, so
/// repeated calls draw identical masks.
pub fn model_loss(
    model: &Model,
    inputs: &ModelInputs,
    targets: &[(usize, usize)],
    dropout_seed: Option<u64>,
) -> (f64, Vec<DenseMatrix>) {
    use camue::encoders::ForwardCtx;
    use camue::numerics::Tape;

    let mut tape = Tape::new();
    let vars = tape.params(&model.params);
    let mut mask_rng = rng(dropout_seed.unwrap_or(0));
    let mut ctx = match dropout_seed {
        Some(_) => ForwardCtx::train(model.spec.dropout, &mut mask_rng).unwrap(),
        None => ForwardCtx::eval(),
    };
    let out = model.forward(&mut tape, &vars, inputs, &mut ctx).unwrap();
    let loss = tape.cross_entropy(out.logits, targets).unwrap();
    let grads = tape.backward(loss, &model.params).unwrap();
    (tape.value(loss).get(0, 0), grads)
}

/// Worst finite-difference error of every parameter group of a randomized
/// small model on the six-node instance.
pub fn model_gradient_errors(
    mode: FusionMode,
    encoder: GraphEncoderKind,
    seed: u64,
    dropout: Option<f64>,
) -> Vec<(String, f64, String)> {
    let (inputs, targets) = six_node_instance(seed);
    let mut spec = small_spec(mode, encoder, &inputs, 3);
    if let Some(rate) = dropout {
        spec.dropout = rate;
    }
    let mut model = Model::new(spec, seed).unwrap();
    randomize_params(&mut model, seed + 1);
    let dropout_seed = dropout.map(|_| seed + 2);
    let (_, analytic) = model_loss(&model, &inputs, &targets, dropout_seed);
    let f = |store: &ParamStore| {
        let mut m = model.clone();
        m.params = store.clone();
        model_loss(&m, &inputs, &targets, dropout_seed).0
    };
    model
        .param_groups()
        .into_iter()
        .map(|(group, ids)| {
            let (err, name) = worst_gradient_error(&model.params, &ids, &analytic, &f);
            (group.to_string(), err, name)
        })
        .collect()
}

/// Synthetic dataset with pooled synthetic word vectors as text features.
pub fn synthetic_inputs(
    cfg: &camue::data::SynthConfig,
) -> (ModelInputs, camue::data::DatasetBundle) {
    let (bundle, _) = camue::data::generate_synthetic(cfg).unwrap();
    let vectors = camue::data::synth::synthetic_word_vectors(cfg);
    let text = camue::encoders::pool_word_vectors(bundle.tokens().unwrap(), &vectors);
    (
        ModelInputs::new(normalize(&bundle.graph), text).unwrap(),
        bundle,
    )
}

/// Two disconnected 10-cliques, one per class, every node labeled.
pub fn two_cliques() -> (ModelInputs, Vec<Option<usize>>) {
    let mut edges = Vec::new();
    for block in 0..2 {
        for i in 0..10 {
            for j in i + 1..10 {
                edges.push(Edge::new(10 * block + i, 10 * block + j, "rel0"));
            }
        }
    }
    let g = build_graph(&edges, 20, &relation_names(1)).unwrap();
    let text = random_matrix(20, 4, 1.0, &mut rng(0));
    let labels = (0..20).map(|u| Some(u / 10)).collect();
    (ModelInputs::new(normalize(&g), text).unwrap(), labels)
}
