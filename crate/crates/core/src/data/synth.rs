//! Planted-partition social networks with tunable per-modality reliability.
//!
//! Communities are the classes. Every node draws `Poisson(mean_out_degree)`
//! out-edges per relation; each lands inside the node's own community with
//! probability `rho_graph` and in another community otherwise, so
//! `rho_graph = 1 / classes` carries no signal.
//!
//! Text mirrors this: every class owns a signature vocabulary, and each of a
//! user's tokens comes from the signature of the user's *text class* with
//! probability `rho_text` and from another class's signature otherwise. The
//! text class is the true class, except for conflict users whose text is
//! written from a different class.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{DatasetBundle, DatasetMeta, TextData};
use crate::encoders::WordVectors;
use crate::error::{Error, Result};
use crate::graph::{build_graph, Edge};

const RELATION_NAMES: [&str; 5] = ["follow", "retweet", "reply", "mention", "like"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n: usize,
    pub relations: usize,
    pub classes: usize,
    pub rho_graph: f64,
    pub rho_text: f64,
    pub conflict_fraction: f64,
    pub label_fraction: f64,
    pub mean_out_degree: f64,
    pub tokens_per_user: usize,
    pub vocab_per_class: usize,
    pub vector_dim: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n: 200,
            relations: 5,
            classes: 2,
            rho_graph: 0.9,
            rho_text: 0.9,
            conflict_fraction: 0.0,
            label_fraction: 1.0,
            mean_out_degree: 5.0,
            tokens_per_user: 30,
            vocab_per_class: 50,
            vector_dim: 300,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let probs = [
            ("rho_graph", self.rho_graph),
            ("rho_text", self.rho_text),
            ("conflict_fraction", self.conflict_fraction),
            ("label_fraction", self.label_fraction),
        ];
        for (name, p) in probs {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} = {p} is not in [0, 1]")));
            }
        }
        if self.n < 20 {
            return Err(Error::Config(format!(
                "n = {} is below the minimum of 20",
                self.n
            )));
        }
        if self.classes < 2 || self.classes > self.n {
            return Err(Error::Config(format!(
                "classes = {} must be in [2, n = {}]",
                self.classes, self.n
            )));
        }
        if self.relations == 0 {
            return Err(Error::Config("at least one relation is required".into()));
        }
        if !(self.mean_out_degree > 0.0 && self.mean_out_degree.is_finite()) {
            return Err(Error::Config("mean_out_degree must be positive".into()));
        }
        if self.vocab_per_class == 0 || self.vector_dim == 0 {
            return Err(Error::Config(
                "vocabulary size and vector dimension must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn relation_names(&self) -> Vec<String> {
        (0..self.relations)
            .map(|r| {
                RELATION_NAMES
                    .get(r)
                    .map_or_else(|| format!("relation{r}"), |s| s.to_string())
            })
            .collect()
    }

    pub fn class_names(&self) -> Vec<String> {
        (0..self.classes).map(|c| format!("class{c}")).collect()
    }

    pub fn signature_word(class: usize, j: usize) -> String {
        format!("c{class}w{j}")
    }
}

/// Generating draws for every node; the oracle side of acceptance tests.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthTruth {
    pub labels: Vec<usize>,
    /// Majority of the node's out-edges stayed inside its community.
    pub graph_informative: Vec<bool>,
    /// Majority of the node's tokens came from its true class signature.
    pub text_informative: Vec<bool>,
    pub conflict: Vec<bool>,
}

pub fn generate_synthetic(cfg: &SynthConfig) -> Result<(DatasetBundle, SynthTruth)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = cfg.n;
    let c = cfg.classes;

    let mut labels: Vec<usize> = (0..n).map(|i| i % c).collect();
    labels.shuffle(&mut rng);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); c];
    for (i, &l) in labels.iter().enumerate() {
        members[l].push(i);
    }

    let degree = Poisson::new(cfg.mean_out_degree)
        .map_err(|e| Error::Config(format!("out-degree distribution: {e}")))?;
    let relation_names = cfg.relation_names();
    let mut edges = Vec::new();
    let mut intra = vec![0usize; n];
    let mut drawn = vec![0usize; n];
    for name in &relation_names {
        for u in 0..n {
            let k = degree.sample(&mut rng) as usize;
            for _ in 0..k {
                let own = labels[u];
                let v = if rng.random::<f64>() < cfg.rho_graph {
                    if members[own].len() < 2 {
                        continue;
                    }
                    loop {
                        let v = members[own][rng.random_range(0..members[own].len())];
                        if v != u {
                            break v;
                        }
                    }
                } else {
                    let other = (own + rng.random_range(1..c)) % c;
                    members[other][rng.random_range(0..members[other].len())]
                };
                drawn[u] += 1;
                if labels[v] == own {
                    intra[u] += 1;
                }
                edges.push(Edge::new(u, v, name.clone()));
            }
        }
    }

    let conflict_count = (cfg.conflict_fraction * n as f64).round() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut conflict = vec![false; n];
    for &u in &order[..conflict_count] {
        conflict[u] = true;
    }

    let mut tokens = Vec::with_capacity(n);
    let mut text_informative = Vec::with_capacity(n);
    for u in 0..n {
        let text_class = if conflict[u] {
            (labels[u] + rng.random_range(1..c)) % c
        } else {
            labels[u]
        };
        let mut from_true = 0;
        let mut user = Vec::with_capacity(cfg.tokens_per_user);
        for _ in 0..cfg.tokens_per_user {
            let class = if rng.random::<f64>() < cfg.rho_text {
                text_class
            } else {
                (text_class + rng.random_range(1..c)) % c
            };
            if class == labels[u] {
                from_true += 1;
            }
            user.push(SynthConfig::signature_word(
                class,
                rng.random_range(0..cfg.vocab_per_class),
            ));
        }
        text_informative.push(2 * from_true > cfg.tokens_per_user);
        tokens.push(user);
    }

    let label_count = (cfg.label_fraction * n as f64).round() as usize;
    order.shuffle(&mut rng);
    let mut observed = vec![None; n];
    for &u in &order[..label_count] {
        observed[u] = Some(labels[u]);
    }

    let graph = build_graph(&edges, n, &relation_names)?;
    let bundle = DatasetBundle {
        graph,
        text: TextData::Tokens(tokens),
        labels: observed,
        meta: DatasetMeta {
            task: "synthetic".into(),
            class_names: cfg.class_names(),
            relation_names,
        },
    };
    let truth = SynthTruth {
        graph_informative: (0..n).map(|u| 2 * intra[u] > drawn[u]).collect(),
        labels,
        text_informative,
        conflict,
    };
    Ok((bundle, truth))
}

/// `user<TAB>label<TAB>graph_informative<TAB>text_informative<TAB>conflict`
/// with flags written as 0/1.
pub fn write_truth(path: &Path, truth: &SynthTruth) -> Result<()> {
    let mut out = String::from("# user\tlabel\tgraph_informative\ttext_informative\tconflict\n");
    for (u, &label) in truth.labels.iter().enumerate() {
        let flag = |b: &[bool]| u8::from(b[u]);
        let _ = writeln!(
            out,
            "{u}\t{label}\t{}\t{}\t{}",
            flag(&truth.graph_informative),
            flag(&truth.text_informative),
            flag(&truth.conflict)
        );
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_truth(path: &Path) -> Result<SynthTruth> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut truth = SynthTruth {
        labels: Vec::new(),
        graph_informative: Vec::new(),
        text_informative: Vec::new(),
        conflict: Vec::new(),
    };
    for (k, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |message: String| Error::Ingest {
            path: path.display().to_string(),
            line: k + 1,
            message,
        };
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 5 {
            return Err(bad(format!("expected 5 fields, found {}", fields.len())));
        }
        let num = |s: &str| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| bad(format!("not an integer: {s:?}")))
        };
        if num(fields[0])? != truth.labels.len() {
            return Err(bad("users must be listed in order".into()));
        }
        truth.labels.push(num(fields[1])?);
        truth.graph_informative.push(num(fields[2])? != 0);
        truth.text_informative.push(num(fields[3])? != 0);
        truth.conflict.push(num(fields[4])? != 0);
    }
    Ok(truth)
}

/// Random Gaussian vectors for every signature word, seeded by the config.
pub fn synthetic_word_vectors(cfg: &SynthConfig) -> WordVectors {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5e_ed0f_7e47);
    let mut table = WordVectors::new(cfg.vector_dim);
    for class in 0..cfg.classes {
        for j in 0..cfg.vocab_per_class {
            let v: Vec<f64> = (0..cfg.vector_dim)
                .map(|_| rng.sample(StandardNormal))
                .collect();
            table
                .insert(&SynthConfig::signature_word(class, j), &v)
                .expect("vector has the configured dimension");
        }
    }
    table
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OracleAccuracy {
    pub graph: f64,
    pub text: f64,
}

fn log_term(count: usize, log_p: f64) -> f64 {
    if count == 0 {
        0.0
    } else {
        count as f64 * log_p
    }
}

/// Picks the best-scoring class, breaking exact ties uniformly at random.
fn argmax_random_ties(scores: &[f64], rng: &mut impl Rng) -> usize {
    let best = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let ties: Vec<usize> = (0..scores.len()).filter(|&k| scores[k] == best).collect();
    ties[rng.random_range(0..ties.len())]
}

/// Per-user class predictions of the generative-model-optimal classifier
/// for each modality.
#[derive(Clone, Debug, PartialEq)]
pub struct OraclePredictions {
    pub graph: Vec<usize>,
    /// Empty when the bundle carries precomputed features instead of tokens.
    pub text: Vec<usize>,
}

/// Predictions of the generative-model-optimal classifier for each modality.
///
/// Graph: each incident edge (either direction, any relation) lands in the
/// hypothesised class with probability `rho_graph`, elsewhere uniformly
/// among the other classes; neighbour classes are taken from the truth.
/// Text: naive Bayes over the signature vocabularies.
pub fn bayes_oracle_predictions(
    cfg: &SynthConfig,
    bundle: &DatasetBundle,
    truth: &SynthTruth,
) -> OraclePredictions {
    let n = bundle.n();
    let c = cfg.classes;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x0a_c1e);

    let log_in = cfg.rho_graph.ln();
    let log_out = ((1.0 - cfg.rho_graph) / (c - 1) as f64).ln();
    let mut neighbour_counts = vec![vec![0usize; c]; n];
    for e in bundle.graph.edges() {
        neighbour_counts[e.src][truth.labels[e.dst]] += 1;
        neighbour_counts[e.dst][truth.labels[e.src]] += 1;
    }
    let graph = (0..n)
        .map(|u| {
            let total: usize = neighbour_counts[u].iter().sum();
            let scores: Vec<f64> = (0..c)
                .map(|y| {
                    let inside = neighbour_counts[u][y];
                    log_term(inside, log_in) + log_term(total - inside, log_out)
                })
                .collect();
            argmax_random_ties(&scores, &mut rng)
        })
        .collect();

    let word_class: HashMap<String, usize> = (0..c)
        .flat_map(|k| (0..cfg.vocab_per_class).map(move |j| (SynthConfig::signature_word(k, j), k)))
        .collect();
    let vocab = cfg.vocab_per_class as f64;
    let log_sig = (cfg.rho_text / vocab).ln();
    let log_other = ((1.0 - cfg.rho_text) / ((c - 1) as f64 * vocab)).ln();
    let text = bundle
        .tokens()
        .map(|tokens| {
            tokens
                .iter()
                .map(|user| {
                    let mut per_class = vec![0usize; c];
                    for t in user {
                        if let Some(&k) = word_class.get(t) {
                            per_class[k] += 1;
                        }
                    }
                    let total: usize = per_class.iter().sum();
                    let scores: Vec<f64> = (0..c)
                        .map(|y| {
                            log_term(per_class[y], log_sig)
                                + log_term(total - per_class[y], log_other)
                        })
                        .collect();
                    argmax_random_ties(&scores, &mut rng)
                })
                .collect()
        })
        .unwrap_or_default();
    OraclePredictions { graph, text }
}

/// Accuracy of [`bayes_oracle_predictions`] on every node of the sample.
pub fn bayes_oracle_accuracy(
    cfg: &SynthConfig,
    bundle: &DatasetBundle,
    truth: &SynthTruth,
) -> OracleAccuracy {
    let pred = bayes_oracle_predictions(cfg, bundle, truth);
    let accuracy = |p: &[usize]| {
        let correct = p.iter().zip(&truth.labels).filter(|(a, b)| a == b).count();
        correct as f64 / truth.labels.len().max(1) as f64
    };
    OracleAccuracy {
        graph: accuracy(&pred.graph),
        text: accuracy(&pred.text),
    }
}
