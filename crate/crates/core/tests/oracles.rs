//! Sparse kernels and encoders against straight-line dense references, and
//! permutation equivariance of every graph-consuming model.

mod common;

use camue::encoders::{ForwardCtx, Rgcn};
use camue::fusion::{
    fuse_and_classify, FuseWeights, FusionMode, GraphEncoderKind, Model, ModelInputs,
};
use camue::graph::{build_graph, normalize, permute_nodes, Edge};
use camue::numerics::{DenseMatrix, ParamStore, Tape};
use common::*;
use rand::seq::SliceRandom;
use rand::Rng;

#[test]
fn sparse_matmul_equals_dense_oracle() {
    for seed in 0..10 {
        let mut r = rng(seed);
        let (rows, inner, cols) = (
            r.random_range(1..12),
            r.random_range(1..12),
            r.random_range(1..6),
        );
        let a = random_sparse(rows, inner, 0.3, &mut r);
        let b = random_matrix(inner, cols, 1.0, &mut r);
        let mut dense_a = vec![vec![0.0; inner]; rows];
        for (i, j, v) in a.triplets() {
            dense_a[i][j] = v;
        }
        let got = a.matmul_dense(&b).unwrap();
        assert!(
            max_abs_diff(&dense_mul(&dense_a, &to_rows(&b)), &got) < 1e-12,
            "seed {seed}"
        );
    }
    let mut r = rng(99);
    let a = random_sparse(6, 6, 0.3, &mut r);
    let b = random_matrix(6, 4, 1.0, &mut r);
    assert!(
        max_abs_diff(
            &to_rows(&a.to_dense().matmul(&b).unwrap()),
            &a.matmul_dense(&b).unwrap()
        ) < 1e-12
    );
}

#[test]
fn normalized_adjacency_preserves_constants() {
    let mut r = rng(5);
    let edges = random_edges(15, 3, 0.15, &mut r);
    let g = build_graph(&edges, 15, &relation_names(3)).unwrap();
    let ones = DenseMatrix::filled(15, 1, 1.0);
    for a in normalize(&g).relations.iter() {
        let out = a.matmul_dense(&ones).unwrap();
        assert!(out.as_slice().iter().all(|v| (v - 1.0).abs() < 1e-12));
    }
}

fn random_rgcn(n: usize, relations: usize, seed: u64) -> (ParamStore, Rgcn) {
    let mut r = rng(seed);
    let mut store = ParamStore::new();
    let enc = Rgcn::with_table(&mut store, &mut r, "g", n, relations, &[4, 5, 3]);
    for m in store.values_mut() {
        let (rows, cols) = m.shape();
        *m = random_matrix(rows, cols, 0.9, &mut r);
    }
    (store, enc)
}

fn rgcn_output(
    store: &ParamStore,
    enc: &Rgcn,
    graph: &camue::graph::NormalizedGraph,
) -> DenseMatrix {
    let mut tape = Tape::new();
    let vars = tape.params(store);
    let out = enc
        .forward(&mut tape, &vars, graph, None, None, &mut ForwardCtx::eval())
        .unwrap();
    tape.value(out).clone()
}

#[test]
fn sparse_rgcn_equals_dense_reference() {
    for seed in 0..10 {
        let mut r = rng(seed);
        let n = r.random_range(2..=20);
        let declared = r.random_range(1..=3);
        let edges = random_edges(n, declared, 0.2, &mut r);
        let names = relation_names(declared);
        let g = build_graph(&edges, n, &names).unwrap();
        let (store, enc) = random_rgcn(n, 2 * declared, seed + 1000);
        let got = rgcn_output(&store, &enc, &normalize(&g));
        let relations = dense_normalized_relations(&edges, n, &names);
        let table = to_rows(store.get(enc.table.unwrap()));
        let want = dense_rgcn(&relations, &table, &dense_layers(&enc, &store));
        let diff = max_abs_diff(&want, &got);
        assert!(diff < 1e-10, "seed {seed} (n = {n}): diff {diff:e}");
    }
}

#[test]
fn relation_attention_is_a_probability_vector() {
    let (store, enc) = random_rgcn(8, 4, 3);
    for layer in enc.relation_attention(&store) {
        assert!((layer.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(layer.iter().all(|&w| w > 0.0));
    }
}

fn random_perm(n: usize, r: &mut rand_chacha::ChaCha8Rng) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(r);
    p
}

/// Row `perm[i]` of the result is row `i` of `m`.
fn permute_rows(m: &DenseMatrix, perm: &[usize]) -> DenseMatrix {
    let mut out = m.clone();
    for (i, &p) in perm.iter().enumerate() {
        out.row_mut(p).copy_from_slice(m.row(i));
    }
    out
}

fn assert_permuted(original: &DenseMatrix, permuted: &DenseMatrix, perm: &[usize], what: &str) {
    let diff = permute_rows(original, perm).max_abs_diff(permuted);
    assert!(diff < 1e-10, "{what}: diff {diff:e}");
}

#[test]
fn rgcn_is_permutation_equivariant() {
    for seed in 0..5 {
        let mut r = rng(seed);
        let n = 12;
        let names = relation_names(2);
        let g = build_graph(&random_edges(n, 2, 0.2, &mut r), n, &names).unwrap();
        let perm = random_perm(n, &mut r);
        let (store, enc) = random_rgcn(n, 4, seed);
        let out = rgcn_output(&store, &enc, &normalize(&g));
        let mut permuted_store = store.clone();
        let table = enc.table.unwrap();
        *permuted_store.get_mut(table) = permute_rows(store.get(table), &perm);
        let out_p = rgcn_output(
            &permuted_store,
            &enc,
            &normalize(&permute_nodes(&g, &perm).unwrap()),
        );
        assert_permuted(&out, &out_p, &perm, "rgcn");
    }
}

fn random_inputs(n: usize, text_dim: usize, seed: u64) -> (camue::graph::HeteroGraph, DenseMatrix) {
    let mut r = rng(seed);
    let g = build_graph(&random_edges(n, 2, 0.15, &mut r), n, &relation_names(2)).unwrap();
    (g, random_matrix(n, text_dim, 1.0, &mut r))
}

#[test]
fn simple_fusion_is_permutation_equivariant() {
    let n = 14;
    let (g, text) = random_inputs(n, 5, 8);
    let perm = random_perm(n, &mut rng(9));
    let inputs = ModelInputs::new(normalize(&g), text.clone()).unwrap();
    let mut model = Model::new(
        small_spec(FusionMode::SimpleFusion, GraphEncoderKind::Rgcn, &inputs, 3),
        1,
    )
    .unwrap();
    randomize_params(&mut model, 2);
    let permuted = ModelInputs::new(
        normalize(&permute_nodes(&g, &perm).unwrap()),
        permute_rows(&text, &perm),
    )
    .unwrap();
    let a = model.predict(&inputs).unwrap();
    let b = model.predict(&permuted).unwrap();
    assert_permuted(&a.logits, &b.logits, &perm, "simple fusion");
}

#[test]
fn camue_is_permutation_equivariant_with_node_indexed_weights_permuted() {
    let n = 14;
    let (g, text) = random_inputs(n, 5, 10);
    let perm = random_perm(n, &mut rng(11));
    let inputs = ModelInputs::new(normalize(&g), text.clone()).unwrap();
    let mut model = Model::new(
        small_spec(FusionMode::Camue, GraphEncoderKind::Rgcn, &inputs, 3),
        1,
    )
    .unwrap();
    randomize_params(&mut model, 3);
    let mut moved = model.clone();
    for name in ["graph.embedding", "gate.w1_graph"] {
        let id = model.params.find(name).unwrap();
        *moved.params.get_mut(id) = permute_rows(model.params.get(id), &perm);
    }
    let permuted = ModelInputs::new(
        normalize(&permute_nodes(&g, &perm).unwrap()),
        permute_rows(&text, &perm),
    )
    .unwrap();
    let a = model.predict(&inputs).unwrap();
    let b = moved.predict(&permuted).unwrap();
    assert_permuted(&a.logits, &b.logits, &perm, "camue logits");
    let gate = |p: &camue::fusion::Prediction| {
        let gate = p.gate.as_ref().unwrap();
        DenseMatrix::from_fn(
            n,
            2,
            |i, j| if j == 0 { gate.alpha[i] } else { gate.beta[i] },
        )
    };
    assert_permuted(&gate(&a), &gate(&b), &perm, "camue gate");
}

#[test]
fn identical_users_get_identical_gate_weights() {
    let edges = vec![
        Edge::new(0, 2, "rel0"),
        Edge::new(1, 2, "rel0"),
        Edge::new(0, 3, "rel1"),
        Edge::new(1, 3, "rel1"),
        Edge::new(2, 4, "rel1"),
    ];
    let g = build_graph(&edges, 5, &relation_names(2)).unwrap();
    let mut text = random_matrix(5, 4, 1.0, &mut rng(1));
    let shared = text.row(0).to_vec();
    text.row_mut(1).copy_from_slice(&shared);
    let inputs = ModelInputs::new(normalize(&g), text).unwrap();
    let mut model = Model::new(
        small_spec(FusionMode::Camue, GraphEncoderKind::Rgcn, &inputs, 2),
        4,
    )
    .unwrap();
    randomize_params(&mut model, 5);
    let gate = model.predict(&inputs).unwrap().gate.unwrap();
    assert_eq!(
        gate.contribution_of(0).unwrap(),
        gate.contribution_of(1).unwrap()
    );
}

#[test]
fn shifting_both_gate_logits_changes_nothing() {
    let (g, text) = random_inputs(10, 4, 20);
    let inputs = ModelInputs::new(normalize(&g), text).unwrap();
    let mut model = Model::new(
        small_spec(FusionMode::Camue, GraphEncoderKind::Rgcn, &inputs, 3),
        6,
    )
    .unwrap();
    randomize_params(&mut model, 7);
    let before = model.predict(&inputs).unwrap();
    let w3 = model.gate.as_ref().unwrap().w3;
    let shift = random_matrix(model.params.get(w3).rows(), 1, 3.0, &mut rng(8));
    for i in 0..shift.rows() {
        for j in 0..2 {
            let v = model.params.get(w3).get(i, j) + shift.get(i, 0);
            model.params.get_mut(w3).set(i, j, v);
        }
    }
    let after = model.predict(&inputs).unwrap();
    assert_eq!(before.classes(), after.classes());
    let (a, b) = (before.gate.unwrap(), after.gate.unwrap());
    for u in 0..a.len() {
        assert!((a.alpha[u] - b.alpha[u]).abs() < 1e-12);
        assert!((a.beta[u] - b.beta[u]).abs() < 1e-12);
    }
}

#[test]
fn saturated_gate_without_floor_term_reduces_to_link_only() {
    let (inputs, targets) = six_node_instance(12);
    let mut link = Model::new(
        small_spec(FusionMode::LinkOnly, GraphEncoderKind::Rgcn, &inputs, 3),
        1,
    )
    .unwrap();
    randomize_params(&mut link, 2);
    let mut spec = small_spec(FusionMode::Camue, GraphEncoderKind::Rgcn, &inputs, 3);
    spec.fusion.lambda = 0.0;
    let mut camue = Model::new(spec, 3).unwrap();
    randomize_params(&mut camue, 4);
    for entry in link.params.entries() {
        let id = camue.params.find(&entry.name).unwrap();
        *camue.params.get_mut(id) = entry.value.clone();
    }

    let (link_loss, _) = model_loss(&link, &inputs, &targets, None);

    let mut tape = Tape::new();
    let vars = tape.params(&camue.params);
    let mut ctx = ForwardCtx::eval();
    let g = camue
        .graph_embedding(&mut tape, &vars, &inputs, &mut ctx)
        .unwrap()
        .unwrap();
    let text = tape.constant((*inputs.text).clone());
    let t = camue
        .text_encoder
        .as_ref()
        .unwrap()
        .forward(
            &mut tape,
            &vars,
            camue::encoders::MlpInput::Dense(text),
            &mut ctx,
        )
        .unwrap();
    let saturated = tape.constant(DenseMatrix::from_fn(inputs.n(), 2, |_, j| {
        if j == 0 {
            1.0
        } else {
            0.0
        }
    }));
    let logits = fuse_and_classify(
        &mut tape,
        &vars,
        g,
        t,
        FuseWeights::Gate(saturated),
        0.0,
        &camue.classifier,
    )
    .unwrap();
    let loss = tape.cross_entropy(logits, &targets).unwrap();
    assert!((tape.value(loss).get(0, 0) - link_loss).abs() < 1e-10);
}

#[test]
fn mlp_encoder_isolated_node_is_bias_path() {
    let edges = vec![Edge::new(0, 1, "rel0"), Edge::new(1, 2, "rel0")];
    let g = build_graph(&edges, 4, &relation_names(1)).unwrap();
    let inputs = ModelInputs::new(normalize(&g), DenseMatrix::zeros(4, 3)).unwrap();
    let mut model = Model::new(
        small_spec(FusionMode::LinkOnly, GraphEncoderKind::Mlp, &inputs, 2),
        1,
    )
    .unwrap();
    randomize_params(&mut model, 2);
    let mut tape = Tape::new();
    let vars = tape.params(&model.params);
    let emb = model
        .graph_embedding(&mut tape, &vars, &inputs, &mut ForwardCtx::eval())
        .unwrap()
        .unwrap();
    let emb = tape.value(emb).clone();

    let Some(camue::fusion::GraphEncoder::Mlp(mlp)) = &model.graph_encoder else {
        panic!("mlp encoder expected")
    };
    let mut h: Vec<f64> = model.params.get(mlp.layers[0].bias).row(0).to_vec();
    for (k, layer) in mlp.layers.iter().enumerate() {
        if k > 0 {
            let w = to_rows(model.params.get(layer.weight));
            h = dense_mul(&[h], &w).remove(0);
            for (v, b) in h.iter_mut().zip(model.params.get(layer.bias).row(0)) {
                *v += b;
            }
        }
        if k < 2 {
            h.iter_mut().for_each(|v| *v = v.max(0.0));
        }
    }
    for (a, b) in emb.row(3).iter().zip(&h) {
        assert!((a - b).abs() < 1e-12);
    }
}
