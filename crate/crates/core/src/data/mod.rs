//! Datasets: on-disk bundles, the synthetic generator, and its oracle.
//!
//! A dataset directory holds `meta.tsv` (`n`, `relations`, `classes`, `task`
//! as `key<TAB>value`), `edges.tsv`, `labels.tsv` and optionally `texts.tsv`.

pub mod io;
pub mod synth;

use std::collections::HashMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::{build_graph, Edge, HeteroGraph};
use crate::numerics::DenseMatrix;

pub use synth::{
    bayes_oracle_accuracy, bayes_oracle_predictions, generate_synthetic, read_truth,
    synthetic_word_vectors, write_truth, OracleAccuracy, OraclePredictions, SynthConfig,
    SynthTruth,
};

pub const META_FILE: &str = "meta.tsv";
pub const EDGES_FILE: &str = "edges.tsv";
pub const LABELS_FILE: &str = "labels.tsv";
pub const TEXTS_FILE: &str = "texts.tsv";
pub const TRUTH_FILE: &str = "truth.tsv";
pub const VECTORS_FILE: &str = "vectors.txt";
pub const EMBEDDINGS_FILE: &str = "embeddings.txt";

#[derive(Clone, Debug, PartialEq)]
pub enum TextData {
    Tokens(Vec<Vec<String>>),
    Features(DenseMatrix),
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetMeta {
    pub task: String,
    pub class_names: Vec<String>,
    pub relation_names: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct DatasetBundle {
    pub graph: HeteroGraph,
    pub text: TextData,
    pub labels: Vec<Option<usize>>,
    pub meta: DatasetMeta,
}

impl DatasetBundle {
    pub fn n(&self) -> usize {
        self.graph.n()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        if self.labels.len() != n {
            return Err(Error::Data(format!(
                "{} labels for {n} nodes",
                self.labels.len()
            )));
        }
        let text_rows = match &self.text {
            TextData::Tokens(t) => t.len(),
            TextData::Features(m) => m.rows(),
        };
        if text_rows != n {
            return Err(Error::Data(format!(
                "text for {text_rows} users, graph has {n}"
            )));
        }
        let classes = self.meta.class_names.len();
        if let Some(bad) = self.labels.iter().flatten().find(|&&c| c >= classes) {
            return Err(Error::Data(format!(
                "label {bad} outside {classes} classes"
            )));
        }
        let mut present: Vec<usize> = self.labels.iter().flatten().copied().collect();
        present.sort_unstable();
        present.dedup();
        if present.len() < 2 {
            return Err(Error::Data(format!(
                "at least 2 classes must be labeled, found {}",
                present.len()
            )));
        }
        Ok(())
    }

    pub fn tokens(&self) -> Option<&[Vec<String>]> {
        match &self.text {
            TextData::Tokens(t) => Some(t),
            TextData::Features(_) => None,
        }
    }

    pub fn labeled_count(&self) -> usize {
        self.labels.iter().flatten().count()
    }
}

fn split_list(s: &str) -> Vec<String> {
    s.split(',')
        .map(|x| x.trim().to_string())
        .filter(|x| !x.is_empty())
        .collect()
}

pub fn read_meta(dir: &Path) -> Result<(usize, DatasetMeta)> {
    let path = dir.join(META_FILE);
    let kv = io::read_key_values(&path)?;
    let get = |k: &str| {
        kv.get(k)
            .ok_or_else(|| Error::Data(format!("{}: missing key {k:?}", path.display())))
    };
    let n = get("n")?
        .parse()
        .map_err(|_| Error::Data(format!("{}: `n` must be an integer", path.display())))?;
    Ok((
        n,
        DatasetMeta {
            task: kv.get("task").cloned().unwrap_or_default(),
            class_names: split_list(get("classes")?),
            relation_names: split_list(get("relations")?),
        },
    ))
}

pub fn write_meta(dir: &Path, n: usize, meta: &DatasetMeta) -> Result<()> {
    io::write_key_values(
        &dir.join(META_FILE),
        [
            ("n", n.to_string()),
            ("relations", meta.relation_names.join(",")),
            ("classes", meta.class_names.join(",")),
            ("task", meta.task.clone()),
        ],
    )
}

/// Loads a dataset directory. Text is read as tokens when `texts.tsv`
/// exists; otherwise every user gets an empty token list.
pub fn load_dataset(dir: &Path) -> Result<DatasetBundle> {
    let (n, meta) = read_meta(dir)?;
    let graph = io::load_edges(&dir.join(EDGES_FILE), n, &meta.relation_names)?;
    let labels = io::load_labels(&dir.join(LABELS_FILE), n, &meta.class_names)?;
    let texts_path = dir.join(TEXTS_FILE);
    let tokens = if texts_path.exists() {
        io::load_texts(&texts_path, n)?
    } else {
        vec![Vec::new(); n]
    };
    let bundle = DatasetBundle {
        graph,
        text: TextData::Tokens(tokens),
        labels,
        meta,
    };
    bundle.validate()?;
    Ok(bundle)
}

pub fn write_dataset(dir: &Path, bundle: &DatasetBundle) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_meta(dir, bundle.n(), &bundle.meta)?;
    io::write_edges(&dir.join(EDGES_FILE), &bundle.graph.edges())?;
    io::write_labels(
        &dir.join(LABELS_FILE),
        &bundle.labels,
        &bundle.meta.class_names,
    )?;
    match &bundle.text {
        TextData::Tokens(t) => io::write_texts(&dir.join(TEXTS_FILE), t),
        TextData::Features(m) => io::write_embedding_matrix(&dir.join(EMBEDDINGS_FILE), m),
    }
}

/// Uniformly samples `labeled` labeled and `unlabeled` unlabeled users and
/// returns the induced sub-dataset with nodes renumbered in original order.
pub fn uniform_subsample(
    bundle: &DatasetBundle,
    labeled: usize,
    unlabeled: usize,
    seed: u64,
) -> Result<DatasetBundle> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut with, mut without): (Vec<usize>, Vec<usize>) =
        (0..bundle.n()).partition(|&i| bundle.labels[i].is_some());
    if with.len() < labeled || without.len() < unlabeled {
        return Err(Error::Config(format!(
            "cannot sample {labeled} labeled / {unlabeled} unlabeled from {} / {}",
            with.len(),
            without.len()
        )));
    }
    with.shuffle(&mut rng);
    without.shuffle(&mut rng);
    let mut keep: Vec<usize> = with[..labeled]
        .iter()
        .chain(&without[..unlabeled])
        .copied()
        .collect();
    keep.sort_unstable();
    let remap: HashMap<usize, usize> = keep
        .iter()
        .enumerate()
        .map(|(new, &old)| (old, new))
        .collect();

    let edges: Vec<Edge> = bundle
        .graph
        .edges()
        .into_iter()
        .filter_map(|e| {
            Some(Edge::new(
                *remap.get(&e.src)?,
                *remap.get(&e.dst)?,
                e.relation,
            ))
        })
        .collect();
    let mut graph = build_graph(&edges, keep.len(), &bundle.meta.relation_names)?;
    if let Some(names) = bundle.graph.node_names() {
        graph.set_node_names(keep.iter().map(|&i| names[i].clone()).collect())?;
    }
    let text = match &bundle.text {
        TextData::Tokens(t) => TextData::Tokens(keep.iter().map(|&i| t[i].clone()).collect()),
        TextData::Features(m) => TextData::Features(m.select_rows(&keep)),
    };
    Ok(DatasetBundle {
        graph,
        text,
        labels: keep.iter().map(|&i| bundle.labels[i]).collect(),
        meta: bundle.meta.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dataset_directory_round_trip() {
        let cfg = SynthConfig {
            n: 40,
            ..SynthConfig::default()
        };
        let (bundle, _) = generate_synthetic(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_dataset(dir.path(), &bundle).unwrap();
        let back = load_dataset(dir.path()).unwrap();
        assert_eq!(back.graph, bundle.graph);
        assert_eq!(back.labels, bundle.labels);
        assert_eq!(back.text, bundle.text);
        assert_eq!(back.meta, bundle.meta);
    }

    #[test]
    fn subsample_sizes_and_edges_stay_inside() {
        let cfg = SynthConfig {
            n: 60,
            label_fraction: 0.5,
            ..SynthConfig::default()
        };
        let (bundle, _) = generate_synthetic(&cfg).unwrap();
        let sub = uniform_subsample(&bundle, 10, 20, 3).unwrap();
        assert_eq!(sub.n(), 30);
        assert_eq!(sub.labeled_count(), 10);
        assert!(uniform_subsample(&bundle, 31, 0, 3).is_err());
    }
}
