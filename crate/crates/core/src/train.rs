//! Splitting, full-batch training with early stopping, metrics, and
//! multi-seed experiment grids.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{DatasetBundle, TextData};
use crate::encoders::text::{
    load_precomputed_embeddings, pool_word_vectors, read_word_vectors, TextEncoderConfig, TextMode,
};
use crate::encoders::ForwardCtx;
use crate::error::{Error, Result};
use crate::fusion::{FusionMode, GateOutput, GraphEncoderKind, Model, ModelInputs, ModelSpec};
use crate::graph::normalize;
use crate::numerics::{row_softmax, AdamState, DenseMatrix, Tape};

/// Candidate lambdas tried when lambda search is enabled.
pub const LAMBDA_GRID: [f64; 4] = [0.0, 0.05, 0.1, 0.2];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 0.8,
            val: 0.1,
            test: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledSplit {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
    pub labels: Vec<Option<usize>>,
}

impl LabeledSplit {
    pub fn targets(&self, nodes: &[usize]) -> Vec<(usize, usize)> {
        nodes
            .iter()
            .filter_map(|&i| self.labels[i].map(|c| (i, c)))
            .collect()
    }
}

/// Stratified split of the labeled nodes.
///
/// Partition sizes are the rounded global ratios. Per-class counts are the
/// floors of each class's share, and the leftover units are handed out one
/// per (class, partition) cell so every row and column total is met exactly;
/// every per-class count is therefore within one node of its ratio. Each
/// class is shuffled and cut at its counts.
pub fn make_split(
    labels: &[Option<usize>],
    ratios: SplitRatios,
    seed: u64,
) -> Result<LabeledSplit> {
    let parts = [ratios.train, ratios.val, ratios.test];
    if parts.iter().any(|r| !(r.is_finite() && *r >= 0.0))
        || (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9
    {
        return Err(Error::Config(format!(
            "split ratios must be non-negative and sum to 1, got {parts:?}"
        )));
    }
    let classes = labels.iter().flatten().max().map_or(0, |&c| c + 1);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (i, l) in labels.iter().enumerate() {
        if let Some(c) = l {
            by_class[*c].push(i);
        }
    }
    for (c, nodes) in by_class.iter().enumerate() {
        if !nodes.is_empty() && nodes.len() < 3 {
            return Err(Error::Data(format!(
                "class {c} has {} labeled nodes, need at least 3",
                nodes.len()
            )));
        }
    }
    let total: usize = by_class.iter().map(Vec::len).sum();
    if total == 0 {
        return Err(Error::NoSupervisedNodes);
    }
    let n_train = (ratios.train * total as f64).round() as usize;
    let n_val = ((ratios.val * total as f64).round() as usize).min(total - n_train);
    let targets = [n_train, n_val, total - n_train - n_val];
    let counts = apportion(
        &by_class.iter().map(Vec::len).collect::<Vec<_>>(),
        &parts,
        &targets,
    );

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out: [Vec<usize>; 3] = Default::default();
    for (nodes, cell) in by_class.iter_mut().zip(&counts) {
        nodes.shuffle(&mut rng);
        let mut rest = &nodes[..];
        for (part, &k) in out.iter_mut().zip(cell) {
            part.extend_from_slice(&rest[..k]);
            rest = &rest[k..];
        }
    }
    let [mut train, mut val, mut test] = out;
    train.sort_unstable();
    val.sort_unstable();
    test.sort_unstable();
    Ok(LabeledSplit {
        train,
        val,
        test,
        labels: labels.to_vec(),
    })
}

/// Rounds the table `sizes[c] * ratios[p]` to integers whose rows sum to
/// `sizes` and whose columns sum to `targets`, moving every cell by less
/// than one where possible and never by more.
fn apportion(sizes: &[usize], ratios: &[f64; 3], targets: &[usize; 3]) -> Vec<[usize; 3]> {
    let exact: Vec<[f64; 3]> = sizes
        .iter()
        .map(|&m| ratios.map(|r| r * m as f64))
        .collect();
    let mut cells: Vec<[usize; 3]> = exact
        .iter()
        .map(|row| row.map(|v| v.floor() as usize))
        .collect();
    let mut need: Vec<usize> = sizes
        .iter()
        .zip(&cells)
        .map(|(&m, row)| m - row.iter().sum::<usize>())
        .collect();
    let mut open: Vec<usize> = (0..3)
        .map(|p| targets[p].saturating_sub(cells.iter().map(|row| row[p]).sum()))
        .collect();
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by(|&a, &b| need[b].cmp(&need[a]).then(a.cmp(&b)));
    for c in order {
        let frac = exact[c].map(|v| v - v.floor());
        let mut cols = [0, 1, 2];
        cols.sort_by(|&a, &b| {
            open[b]
                .cmp(&open[a])
                .then(frac[b].total_cmp(&frac[a]))
                .then(a.cmp(&b))
        });
        for &p in cols.iter().take(need[c]) {
            cells[c][p] += 1;
            open[p] = open[p].saturating_sub(1);
        }
        need[c] = 0;
    }
    cells
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub hidden: usize,
    pub dropout: f64,
    pub epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub mode: FusionMode,
    pub graph_encoder: GraphEncoderKind,
    pub lambda: f64,
    /// Pick lambda from [`LAMBDA_GRID`] by validation accuracy (gated modes only).
    pub lambda_search: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            hidden: 100,
            dropout: 0.1,
            epochs: 300,
            patience: 50,
            seed: 0,
            mode: FusionMode::Camue,
            graph_encoder: GraphEncoderKind::Rgcn,
            lambda: 0.1,
            lambda_search: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.hidden == 0 {
            return Err(Error::Config("hidden units must be positive".into()));
        }
        if self.patience == 0 {
            return Err(Error::Config("patience must be positive".into()));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!(
                "lambda must be >= 0, got {}",
                self.lambda
            )));
        }
        crate::numerics::tape::check_dropout_rate(self.dropout)
    }

    pub fn model_spec(&self, inputs: &ModelInputs, classes: usize) -> ModelSpec {
        let mut spec = ModelSpec::new(
            self.mode,
            self.graph_encoder,
            inputs.n(),
            inputs.graph.relation_count(),
            inputs.text.cols(),
            classes,
        );
        spec.embed_dim = self.hidden;
        spec.hidden = self.hidden;
        spec.fuse_dim = self.hidden;
        spec.dropout = self.dropout;
        spec.fusion.lambda = if matches!(self.mode, FusionMode::Camue | FusionMode::FixedParams) {
            self.lambda
        } else {
            0.0
        };
        spec
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    /// Mean per-class F1 over classes present in the truth or predictions.
    pub f1: f64,
    /// F1 of class 1 for two-class problems.
    pub binary_f1: Option<f64>,
    pub loss: f64,
}

/// Accuracy, macro-F1 and binary F1; the loss field is left at zero.
pub fn classification_metrics(truth: &[usize], pred: &[usize], classes: usize) -> Result<Metrics> {
    if truth.len() != pred.len() {
        return Err(Error::Shape(format!(
            "{} labels vs {} predictions",
            truth.len(),
            pred.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::NoSupervisedNodes);
    }
    let k = classes.max(truth.iter().chain(pred).max().map_or(0, |&c| c + 1));
    let mut tp = vec![0usize; k];
    let mut fp = vec![0usize; k];
    let mut fneg = vec![0usize; k];
    let mut present = vec![false; k];
    for (&t, &p) in truth.iter().zip(pred) {
        present[t] = true;
        present[p] = true;
        if t == p {
            tp[t] += 1;
        } else {
            fp[p] += 1;
            fneg[t] += 1;
        }
    }
    let f1_of = |c: usize| {
        let denom = 2 * tp[c] + fp[c] + fneg[c];
        if denom == 0 {
            0.0
        } else {
            2.0 * tp[c] as f64 / denom as f64
        }
    };
    let scored: Vec<f64> = (0..k).filter(|&c| present[c]).map(f1_of).collect();
    Ok(Metrics {
        accuracy: tp.iter().sum::<usize>() as f64 / truth.len() as f64,
        f1: scored.iter().sum::<f64>() / scored.len() as f64,
        binary_f1: (classes == 2).then(|| f1_of(1)),
        loss: 0.0,
    })
}

/// Mean cross-entropy of `logits` over `targets`.
pub fn mean_cross_entropy(logits: &DenseMatrix, targets: &[(usize, usize)]) -> Result<f64> {
    if targets.is_empty() {
        return Err(Error::NoSupervisedNodes);
    }
    let probs = row_softmax(logits)?;
    let total: f64 = targets
        .iter()
        .map(|&(i, c)| -probs.get(i, c).max(f64::MIN_POSITIVE).ln())
        .sum();
    Ok(total / targets.len() as f64)
}

fn metrics_on(
    logits: &DenseMatrix,
    split: &LabeledSplit,
    nodes: &[usize],
    classes: usize,
) -> Result<Metrics> {
    let targets = split.targets(nodes);
    if targets.is_empty() {
        return Err(Error::Data("evaluation set has no labeled nodes".into()));
    }
    let pred = logits.argmax_rows();
    let truth: Vec<usize> = targets.iter().map(|&(_, c)| c).collect();
    let guess: Vec<usize> = targets.iter().map(|&(i, _)| pred[i]).collect();
    let mut m = classification_metrics(&truth, &guess, classes)?;
    m.loss = mean_cross_entropy(logits, &targets)?;
    Ok(m)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_accuracy: f64,
    pub val_loss: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: Model,
    pub gate: Option<GateOutput>,
    pub validation: Metrics,
    pub best_epoch: usize,
    pub epochs_ran: usize,
    pub history: Vec<EpochLog>,
}

fn improves(candidate: &Metrics, best: &Metrics) -> bool {
    candidate.accuracy > best.accuracy
        || (candidate.accuracy == best.accuracy && candidate.loss < best.loss)
}

/// Trains one model. With lambda search enabled, one model per candidate
/// lambda is trained and the best by validation accuracy is kept.
pub fn train(
    inputs: &ModelInputs,
    classes: usize,
    split: &LabeledSplit,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if !(cfg.lambda_search && matches!(cfg.mode, FusionMode::Camue | FusionMode::FixedParams)) {
        return train_once(inputs, classes, split, cfg);
    }
    let mut best: Option<TrainOutcome> = None;
    for lambda in LAMBDA_GRID {
        let run = train_once(
            inputs,
            classes,
            split,
            &TrainConfig {
                lambda,
                lambda_search: false,
                ..cfg.clone()
            },
        )?;
        if best
            .as_ref()
            .is_none_or(|b| improves(&run.validation, &b.validation))
        {
            best = Some(run);
        }
    }
    Ok(best.expect("lambda grid is non-empty"))
}

fn train_once(
    inputs: &ModelInputs,
    classes: usize,
    split: &LabeledSplit,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    let targets = split.targets(&split.train);
    if targets.is_empty() {
        return Err(Error::NoSupervisedNodes);
    }
    let mut model = Model::new(cfg.model_spec(inputs, classes), cfg.seed)?;
    let mut adam = AdamState::new(cfg.learning_rate, &model.params);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x5eed_d20b));

    let mut best = metrics_on(&model.predict(inputs)?.logits, split, &split.val, classes)?;
    let mut best_params = model.params.clone();
    let mut best_epoch = 0;
    let mut stale = 0;
    let mut history = Vec::new();
    let mut epochs_ran = 0;

    for epoch in 1..=cfg.epochs {
        let mut tape = Tape::new();
        let vars = tape.params(&model.params);
        let mut ctx = ForwardCtx::train(cfg.dropout, &mut dropout_rng)?;
        let out = model.forward(&mut tape, &vars, inputs, &mut ctx)?;
        let loss_var = tape.cross_entropy(out.logits, &targets)?;
        let loss = tape.value(loss_var).get(0, 0);
        if !loss.is_finite() {
            return Err(Error::Diverged {
                epoch,
                learning_rate: cfg.learning_rate,
                loss,
            });
        }
        let grads = tape.backward(loss_var, &model.params)?;
        drop(tape);
        adam.step(&mut model.params, &grads)?;
        epochs_ran = epoch;

        let val = metrics_on(&model.predict(inputs)?.logits, split, &split.val, classes)?;
        if !val.loss.is_finite() {
            return Err(Error::Diverged {
                epoch,
                learning_rate: cfg.learning_rate,
                loss: val.loss,
            });
        }
        history.push(EpochLog {
            epoch,
            train_loss: loss,
            val_accuracy: val.accuracy,
            val_loss: val.loss,
        });
        if improves(&val, &best) {
            best = val;
            best_params = model.params.clone();
            best_epoch = epoch;
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }

    model.params = best_params;
    let gate = model.predict(inputs)?.gate;
    Ok(TrainOutcome {
        model,
        gate,
        validation: best,
        best_epoch,
        epochs_ran,
        history,
    })
}

/// Test-set (or any node set) metrics of a trained model.
pub fn evaluate(
    model: &Model,
    inputs: &ModelInputs,
    split: &LabeledSplit,
    nodes: &[usize],
) -> Result<Metrics> {
    if nodes.is_empty() {
        return Err(Error::Data("evaluation set is empty".into()));
    }
    metrics_on(
        &model.predict(inputs)?.logits,
        split,
        nodes,
        model.spec.classes,
    )
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub mode: FusionMode,
    pub seed: u64,
    pub lambda: f64,
    pub accuracy: f64,
    pub f1: f64,
    pub binary_f1: Option<f64>,
    pub epochs_ran: usize,
    pub best_epoch: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    /// Sample standard deviation; zero for a single run.
    pub std: f64,
    pub max: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self {
                mean: f64::NAN,
                std: f64::NAN,
                max: f64::NAN,
            };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Self {
            mean,
            std,
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub runs: Vec<RunRecord>,
    pub accuracy: Summary,
    pub f1: Summary,
}

impl EvalReport {
    pub fn from_runs(runs: Vec<RunRecord>) -> Self {
        let acc: Vec<f64> = runs.iter().map(|r| r.accuracy).collect();
        let f1: Vec<f64> = runs.iter().map(|r| r.f1).collect();
        Self {
            accuracy: Summary::of(&acc),
            f1: Summary::of(&f1),
            runs,
        }
    }

    /// `accuracy ; f1` of the means, three decimals.
    pub fn headline(&self) -> String {
        format!("{:.3} ; {:.3}", self.accuracy.mean, self.f1.mean)
    }
}

/// Everything needed to run one mode on a dataset except the mode and seed.
#[derive(Clone, Debug)]
pub struct Experiment<'a> {
    pub inputs: &'a ModelInputs,
    pub labels: &'a [Option<usize>],
    pub classes: usize,
    pub base: TrainConfig,
    pub ratios: SplitRatios,
}

impl Experiment<'_> {
    /// Split, train and test one run; the seed drives both split and training.
    pub fn run(&self, mode: FusionMode, seed: u64) -> Result<(RunRecord, TrainOutcome)> {
        let wrap = |e: Error| Error::Run {
            mode: mode.to_string(),
            seed,
            source: Box::new(e),
        };
        let split = make_split(self.labels, self.ratios, seed).map_err(wrap)?;
        let cfg = TrainConfig {
            mode,
            seed,
            ..self.base.clone()
        };
        let outcome = train(self.inputs, self.classes, &split, &cfg).map_err(wrap)?;
        let test = evaluate(&outcome.model, self.inputs, &split, &split.test).map_err(wrap)?;
        let record = RunRecord {
            mode,
            seed,
            lambda: outcome.model.spec.fusion.lambda,
            accuracy: test.accuracy,
            f1: test.f1,
            binary_f1: test.binary_f1,
            epochs_ran: outcome.epochs_ran,
            best_epoch: outcome.best_epoch,
        };
        Ok((record, outcome))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub rows: Vec<(FusionMode, EvalReport)>,
}

impl GridResult {
    pub fn report(&self, mode: FusionMode) -> Option<&EvalReport> {
        self.rows.iter().find(|(m, _)| *m == mode).map(|(_, r)| r)
    }

    /// One aggregate row per mode.
    pub fn to_tsv(&self) -> String {
        let mut out =
            String::from("mode\truns\tacc_mean\tacc_std\tacc_max\tf1_mean\tf1_std\tf1_max\n");
        for (mode, r) in &self.rows {
            let _ = writeln!(
                out,
                "{mode}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                r.runs.len(),
                r.accuracy.mean,
                r.accuracy.std,
                r.accuracy.max,
                r.f1.mean,
                r.f1.std,
                r.f1.max
            );
        }
        out
    }

    /// One JSON object per run.
    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for (_, r) in &self.rows {
            for run in &r.runs {
                let line = serde_json::to_string(run).map_err(|e| Error::Format(e.to_string()))?;
                out.push_str(&line);
                out.push('\n');
            }
        }
        Ok(out)
    }
}

/// Runs every mode for every seed, in parallel when threads are available.
///
/// The callback sees each finished run as it completes, so its call order
/// is unspecified; the returned rows are always in `modes` x `seeds` order.
pub fn run_grid(
    exp: &Experiment<'_>,
    modes: &[FusionMode],
    seeds: &[u64],
    on_run: impl Fn(&RunRecord, &TrainOutcome) + Sync,
) -> Result<GridResult> {
    let jobs: Vec<(FusionMode, u64)> = modes
        .iter()
        .flat_map(|&m| seeds.iter().map(move |&s| (m, s)))
        .collect();
    let records = jobs
        .par_iter()
        .map(|&(mode, seed)| {
            let (record, outcome) = exp.run(mode, seed)?;
            on_run(&record, &outcome);
            Ok(record)
        })
        .collect::<Result<Vec<RunRecord>>>()?;
    let mut records = records.into_iter();
    let rows = modes
        .iter()
        .map(|&mode| {
            (
                mode,
                EvalReport::from_runs(records.by_ref().take(seeds.len()).collect()),
            )
        })
        .collect();
    Ok(GridResult { rows })
}

/// Identifies the dataset a checkpoint was trained on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetFingerprint {
    pub n: usize,
    pub relations: Vec<String>,
    pub classes: Vec<String>,
    pub checksum: String,
}

/// A trained model with everything needed to rebuild its inputs and retrain it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: u32,
    pub model: Model,
    pub train: TrainConfig,
    pub text: TextEncoderConfig,
    pub dataset: DatasetFingerprint,
}

impl Checkpoint {
    pub const FORMAT: u32 = 1;

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string(self).map_err(|e| Error::Format(e.to_string()))?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ck: Self = serde_json::from_str(&text)
            .map_err(|e| Error::Format(format!("{}: not a checkpoint: {e}", path.display())))?;
        if ck.format != Self::FORMAT {
            return Err(Error::Format(format!(
                "{}: checkpoint format {} is not supported",
                path.display(),
                ck.format
            )));
        }
        Ok(ck)
    }

    /// Rejects a dataset whose size or schema differs from the training data.
    pub fn check_dataset(&self, bundle: &DatasetBundle) -> Result<()> {
        let fp = &self.dataset;
        if bundle.n() != fp.n {
            return Err(Error::Data(format!(
                "checkpoint was trained on {} users, dataset has {}",
                fp.n,
                bundle.n()
            )));
        }
        if bundle.meta.relation_names != fp.relations || bundle.meta.class_names != fp.classes {
            return Err(Error::Data(
                "dataset relations or classes differ from the checkpoint".into(),
            ));
        }
        Ok(())
    }
}

/// Builds model inputs from a dataset and a text-feature source.
pub fn prepare_inputs(bundle: &DatasetBundle, text: &TextEncoderConfig) -> Result<ModelInputs> {
    let graph = normalize(&bundle.graph);
    let features = match (&bundle.text, text.mode) {
        (TextData::Features(m), _) => m.clone(),
        (TextData::Tokens(tokens), TextMode::Pooled) => {
            let vocab: HashSet<String> =
                tokens.iter().flatten().map(|t| t.to_lowercase()).collect();
            let table = read_word_vectors(&text.path, Some(&vocab))?;
            if table.dim() != text.dim {
                return Err(Error::Shape(format!(
                    "{}: word vectors are {}-dimensional, expected {}",
                    text.path.display(),
                    table.dim(),
                    text.dim
                )));
            }
            pool_word_vectors(tokens, &table)
        }
        (TextData::Tokens(_), TextMode::Precomputed) => {
            load_precomputed_embeddings(&text.path, bundle.n())?
        }
    };
    if features.cols() != text.dim {
        return Err(Error::Shape(format!(
            "text features are {}-dimensional, expected {}",
            features.cols(),
            text.dim
        )));
    }
    ModelInputs::new(graph, features)
}
