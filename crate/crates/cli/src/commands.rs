//! Subcommand implementations.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use camue::data::io::{load_texts, write_embedding_matrix};
use camue::data::{
    generate_synthetic, load_dataset, read_meta, synthetic_word_vectors, write_dataset,
    write_truth, DatasetBundle, SynthConfig, EMBEDDINGS_FILE, META_FILE, TRUTH_FILE, VECTORS_FILE,
};
use camue::encoders::{
    pool_word_vectors, read_word_vectors, word_vector_dim, write_word_vectors, TextEncoderConfig,
    TextMode,
};
use camue::fusion::{FusionMode, GraphEncoderKind, ModelInputs};
use camue::train::{
    evaluate, make_split, prepare_inputs, run_grid, train as train_model, Checkpoint,
    DatasetFingerprint, EvalReport, Experiment, RunRecord, SplitRatios, TrainConfig,
};
use camue::Error;

use crate::manifest::{
    dataset_checksums, dataset_digest, output_checksums, write_file, RunManifest,
};
use crate::{
    data_path, CliError, ContribmapArgs, EmbedTextArgs, EvalArgs, GridArgs, HyperArgs, SynthArgs,
    TextArgs, TrainArgs,
};

pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const VALIDATION_FILE: &str = "validation.json";
pub const HISTORY_FILE: &str = "history.tsv";
pub const EVAL_JSON_FILE: &str = "eval.json";
pub const EVAL_TSV_FILE: &str = "eval.tsv";
pub const CONTRIBUTIONS_FILE: &str = "contributions.tsv";
pub const SUBGROUPS_FILE: &str = "subgroups.tsv";
pub const GRID_FILE: &str = "contribution_grid.tsv";
pub const RESULTS_TSV_FILE: &str = "results.tsv";
pub const RESULTS_JSONL_FILE: &str = "runs.jsonl";
pub const SYNTH_CONFIG_FILE: &str = "synth.json";

fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })?;
    Ok(())
}

fn to_json<T: serde::Serialize>(value: &T) -> Result<String, CliError> {
    Ok(serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?)
}

fn json_value<T: serde::Serialize>(value: &T) -> Result<serde_json::Value, CliError> {
    Ok(serde_json::to_value(value).map_err(|e| Error::Format(e.to_string()))?)
}

fn read_first_line(path: &Path) -> Result<String, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(text.lines().next().unwrap_or_default().to_string())
}

/// Text source for a dataset, with the feature dimension read from the file.
fn text_config(data_dir: &Path, args: &TextArgs) -> Result<TextEncoderConfig, CliError> {
    let mode: TextMode = args.text_encoder.into();
    let path = match &args.text_path {
        Some(p) => data_path(p),
        None => data_dir.join(match mode {
            TextMode::Pooled => VECTORS_FILE,
            TextMode::Precomputed => EMBEDDINGS_FILE,
        }),
    };
    let dim = match mode {
        TextMode::Pooled => word_vector_dim(&path)?,
        TextMode::Precomputed => {
            let header = read_first_line(&path)?;
            header
                .split_whitespace()
                .nth(1)
                .and_then(|d| d.parse().ok())
                .ok_or_else(|| Error::Ingest {
                    path: path.display().to_string(),
                    line: 1,
                    message: "expected an `n D` header".into(),
                })?
        }
    };
    let cfg = TextEncoderConfig { mode, path, dim };
    cfg.validate()?;
    Ok(cfg)
}

/// Stores text paths inside the dataset relative to it, so checkpoints
/// survive moving the dataset directory.
fn portable_text_config(data_dir: &Path, text: &TextEncoderConfig) -> TextEncoderConfig {
    let path = match text.path.strip_prefix(data_dir) {
        Ok(rel) => rel.to_path_buf(),
        Err(_) => std::fs::canonicalize(&text.path).unwrap_or_else(|_| text.path.clone()),
    };
    TextEncoderConfig {
        path,
        ..text.clone()
    }
}

fn resolve_text_config(
    data_dir: &Path,
    stored: &TextEncoderConfig,
    over: Option<&PathBuf>,
) -> TextEncoderConfig {
    let path = match over {
        Some(p) => data_path(p),
        None if stored.path.is_relative() => data_dir.join(&stored.path),
        None => stored.path.clone(),
    };
    TextEncoderConfig {
        path,
        ..stored.clone()
    }
}

fn train_config(
    hyper: &HyperArgs,
    mode: FusionMode,
    graph_encoder: GraphEncoderKind,
    seed: u64,
) -> Result<TrainConfig, CliError> {
    let cfg = TrainConfig {
        learning_rate: hyper.learning_rate,
        hidden: hyper.hidden,
        dropout: hyper.dropout,
        epochs: hyper.epochs,
        patience: hyper.patience,
        seed,
        mode,
        graph_encoder,
        lambda: hyper.lambda,
        lambda_search: hyper.lambda_search,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn check_mode_encoder(mode: FusionMode, encoder: GraphEncoderKind) -> Result<(), CliError> {
    if mode == FusionMode::SimpleFusion && encoder != GraphEncoderKind::Rgcn {
        return Err(CliError::Usage(
            "--mode simple requires --graph-encoder rgcn".into(),
        ));
    }
    Ok(())
}

fn class_count(bundle: &DatasetBundle) -> usize {
    bundle.meta.class_names.len()
}

fn is_non_empty_dir(dir: &Path) -> bool {
    std::fs::read_dir(dir).is_ok_and(|mut entries| entries.next().is_some())
}

pub fn synth(a: &SynthArgs) -> Result<(), CliError> {
    let cfg = SynthConfig {
        n: a.n,
        relations: a.relations,
        classes: a.classes,
        rho_graph: a.rho_graph,
        rho_text: a.rho_text,
        conflict_fraction: a.conflict,
        label_fraction: a.label_fraction,
        mean_out_degree: a.mean_degree,
        seed: a.seed,
        ..SynthConfig::default()
    };
    cfg.validate()?;
    let out = data_path(&a.out);
    if out.exists() && !out.is_dir() {
        return Err(CliError::Usage(format!(
            "{} exists and is not a directory",
            out.display()
        )));
    }
    if is_non_empty_dir(&out) && !a.force {
        return Err(CliError::Usage(format!(
            "{} is not empty; pass --force to overwrite",
            out.display()
        )));
    }
    let (bundle, truth) = generate_synthetic(&cfg)?;
    write_dataset(&out, &bundle)?;
    write_truth(&out.join(TRUTH_FILE), &truth)?;
    write_word_vectors(&out.join(VECTORS_FILE), &synthetic_word_vectors(&cfg))?;
    write_file(&out.join(SYNTH_CONFIG_FILE), to_json(&cfg)?.as_bytes())?;
    println!(
        "wrote {} users, {} edges, {} labeled to {}",
        bundle.n(),
        bundle.graph.edges().len(),
        bundle.labeled_count(),
        out.display()
    );
    Ok(())
}

/// Largest user id in a texts file plus one.
fn users_in_texts(path: &Path) -> Result<usize, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let mut n = 0;
    for (k, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let id = line.split('\t').next().unwrap_or_default().trim();
        let id: usize = id.parse().map_err(|_| Error::Ingest {
            path: path.display().to_string(),
            line: k + 1,
            message: format!("user id {id:?} is not a non-negative integer"),
        })?;
        n = n.max(id + 1);
    }
    Ok(n)
}

pub fn embed_text(a: &EmbedTextArgs) -> Result<(), CliError> {
    let texts = data_path(&a.texts);
    let vectors = data_path(&a.vectors);
    let n = match a.n {
        Some(n) => n,
        None => match texts
            .parent()
            .map(|d| d.join(META_FILE))
            .filter(|m| m.exists())
        {
            Some(meta) => read_meta(meta.parent().expect("meta path has a parent"))?.0,
            None => users_in_texts(&texts)?,
        },
    };
    let tokens = load_texts(&texts, n)?;
    let vocab: HashSet<String> = tokens.iter().flatten().cloned().collect();
    let table = read_word_vectors(&vectors, Some(&vocab))?;
    let features = pool_word_vectors(&tokens, &table);
    write_embedding_matrix(&a.out, &features)?;
    let covered = (0..n)
        .filter(|&u| features.row(u).iter().any(|&v| v != 0.0))
        .count();
    println!(
        "wrote {n} x {} embeddings to {} ({covered} users with in-vocabulary tokens)",
        features.cols(),
        a.out.display()
    );
    Ok(())
}

#[derive(serde::Serialize)]
struct ValidationReport {
    mode: FusionMode,
    seed: u64,
    lambda: f64,
    accuracy: f64,
    f1: f64,
    binary_f1: Option<f64>,
    loss: f64,
    best_epoch: usize,
    epochs_ran: usize,
}

pub fn train(a: &TrainArgs) -> Result<(), CliError> {
    let start = Instant::now();
    let mode: FusionMode = a.mode.into();
    if mode == FusionMode::TextOnly && a.graph_encoder.is_some() {
        return Err(CliError::Usage(
            "--graph-encoder cannot be combined with --mode text".into(),
        ));
    }
    let encoder = a.graph_encoder.map_or(GraphEncoderKind::Rgcn, Into::into);
    check_mode_encoder(mode, encoder)?;
    let cfg = train_config(&a.hyper, mode, encoder, a.seed)?;

    let dir = data_path(&a.data);
    let bundle = load_dataset(&dir)?;
    let text = text_config(&dir, &a.text)?;
    let inputs = prepare_inputs(&bundle, &text)?;
    let split = make_split(&bundle.labels, SplitRatios::default(), a.seed)?;
    let outcome = train_model(&inputs, class_count(&bundle), &split, &cfg)?;

    create_dir(&a.out)?;
    let checkpoint = Checkpoint {
        format: Checkpoint::FORMAT,
        model: outcome.model,
        train: cfg.clone(),
        text: portable_text_config(&dir, &text),
        dataset: DatasetFingerprint {
            n: bundle.n(),
            relations: bundle.meta.relation_names.clone(),
            classes: bundle.meta.class_names.clone(),
            checksum: dataset_digest(&dir)?,
        },
    };
    checkpoint.save(&a.out.join(CHECKPOINT_FILE))?;
    let v = outcome.validation;
    let report = ValidationReport {
        mode,
        seed: a.seed,
        lambda: checkpoint.model.spec.fusion.lambda,
        accuracy: v.accuracy,
        f1: v.f1,
        binary_f1: v.binary_f1,
        loss: v.loss,
        best_epoch: outcome.best_epoch,
        epochs_ran: outcome.epochs_ran,
    };
    write_file(&a.out.join(VALIDATION_FILE), to_json(&report)?.as_bytes())?;
    let mut history = String::from("epoch\ttrain_loss\tval_accuracy\tval_loss\n");
    for h in &outcome.history {
        let _ = writeln!(
            history,
            "{}\t{}\t{}\t{}",
            h.epoch, h.train_loss, h.val_accuracy, h.val_loss
        );
    }
    write_file(&a.out.join(HISTORY_FILE), history.as_bytes())?;

    RunManifest {
        command: "train".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        seed: Some(a.seed),
        config: serde_json::json!({ "train": json_value(&cfg)?, "text": json_value(&checkpoint.text)?, "data": dir }),
        dataset_checksums: dataset_checksums(&dir)?,
        output_checksums: output_checksums(&a.out, &[CHECKPOINT_FILE, VALIDATION_FILE, HISTORY_FILE])?,
        duration_secs: start.elapsed().as_secs_f64(),
    }
    .write(&a.out.join(MANIFEST_FILE))?;

    println!(
        "validation {:.3} ; {:.3} (mode {mode}, lambda {}, best epoch {} of {})",
        v.accuracy, v.f1, report.lambda, outcome.best_epoch, outcome.epochs_ran
    );
    Ok(())
}

struct Loaded {
    dir: PathBuf,
    bundle: DatasetBundle,
    checkpoint: Checkpoint,
    inputs: ModelInputs,
}

fn load_checkpoint_and_data(
    checkpoint: &Path,
    data: &Path,
    text_path: Option<&PathBuf>,
) -> Result<Loaded, CliError> {
    let checkpoint = Checkpoint::load(checkpoint)?;
    let dir = data_path(data);
    let bundle = load_dataset(&dir)?;
    checkpoint.check_dataset(&bundle)?;
    let text = resolve_text_config(&dir, &checkpoint.text, text_path);
    let inputs = prepare_inputs(&bundle, &text)?;
    Ok(Loaded {
        dir,
        bundle,
        checkpoint,
        inputs,
    })
}

pub fn eval(a: &EvalArgs) -> Result<(), CliError> {
    let start = Instant::now();
    if a.seeds == 0 {
        return Err(CliError::Usage("--seeds must be at least 1".into()));
    }
    let Loaded {
        dir,
        bundle,
        checkpoint,
        inputs,
    } = load_checkpoint_and_data(&a.checkpoint, &a.data, a.text_path.as_ref())?;
    let cfg = &checkpoint.train;
    let model = &checkpoint.model;
    let split = make_split(&bundle.labels, SplitRatios::default(), cfg.seed)?;
    let test = evaluate(model, &inputs, &split, &split.test)?;
    let mut runs = vec![RunRecord {
        mode: model.mode(),
        seed: cfg.seed,
        lambda: model.spec.fusion.lambda,
        accuracy: test.accuracy,
        f1: test.f1,
        binary_f1: test.binary_f1,
        epochs_ran: 0,
        best_epoch: 0,
    }];
    if a.seeds > 1 {
        let exp = Experiment {
            inputs: &inputs,
            labels: &bundle.labels,
            classes: model.spec.classes,
            base: cfg.clone(),
            ratios: SplitRatios::default(),
        };
        let seeds: Vec<u64> = (1..a.seeds).map(|k| cfg.seed.wrapping_add(k)).collect();
        let grid = run_grid(&exp, &[model.mode()], &seeds, |r, _| {
            eprintln!("seed {} trained: {:.3} ; {:.3}", r.seed, r.accuracy, r.f1);
        })?;
        runs.extend(grid.rows.into_iter().flat_map(|(_, r)| r.runs));
    }
    let report = EvalReport::from_runs(runs);

    if a.seeds == 1 {
        println!("{:.3} ; {:.3}", test.accuracy, test.f1);
    } else {
        for r in &report.runs {
            println!("seed {}\t{:.3} ; {:.3}", r.seed, r.accuracy, r.f1);
        }
        println!(
            "mean\t{:.3} ± {:.3} ; {:.3} ± {:.3}",
            report.accuracy.mean, report.accuracy.std, report.f1.mean, report.f1.std
        );
        println!("max\t{:.3} ; {:.3}", report.accuracy.max, report.f1.max);
    }

    if let Some(out) = &a.out {
        create_dir(out)?;
        write_file(&out.join(EVAL_JSON_FILE), to_json(&report)?.as_bytes())?;
        let mut tsv = String::from("mode\tseed\tlambda\taccuracy\tf1\tbinary_f1\n");
        for r in &report.runs {
            let bf1 = r
                .binary_f1
                .map_or_else(|| "-".to_string(), |v| v.to_string());
            let _ = writeln!(
                tsv,
                "{}\t{}\t{}\t{}\t{}\t{bf1}",
                r.mode, r.seed, r.lambda, r.accuracy, r.f1
            );
        }
        write_file(&out.join(EVAL_TSV_FILE), tsv.as_bytes())?;
        RunManifest {
            command: "eval".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            seed: Some(cfg.seed),
            config: serde_json::json!({ "checkpoint": a.checkpoint, "data": dir, "seeds": a.seeds }),
            dataset_checksums: dataset_checksums(&dir)?,
            output_checksums: output_checksums(out, &[EVAL_JSON_FILE, EVAL_TSV_FILE])?,
            duration_secs: start.elapsed().as_secs_f64(),
        }
        .write(&out.join(MANIFEST_FILE))?;
    }
    Ok(())
}

/// Reads `user<TAB>tag` lines; users are ids or node names.
fn read_subgroups(
    path: &Path,
    bundle: &DatasetBundle,
) -> Result<HashMap<usize, Vec<String>>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let by_name: HashMap<&str, usize> = bundle
        .graph
        .node_names()
        .map(|names| {
            names
                .iter()
                .enumerate()
                .map(|(i, s)| (s.as_str(), i))
                .collect()
        })
        .unwrap_or_default();
    let mut tags: HashMap<usize, Vec<String>> = HashMap::new();
    for (k, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |message: String| Error::Ingest {
            path: path.display().to_string(),
            line: k + 1,
            message,
        };
        let (user, tag) = line
            .split_once('\t')
            .ok_or_else(|| bad("expected `user<TAB>tag`".into()))?;
        let (user, tag) = (user.trim(), tag.trim());
        let id = match user.parse::<usize>() {
            Ok(id) if id < bundle.n() => id,
            Ok(id) => return Err(bad(format!("user {id} outside 0..{}", bundle.n())).into()),
            Err(_) => *by_name
                .get(user)
                .ok_or_else(|| bad(format!("unknown user {user:?}")))?,
        };
        if tag.is_empty() {
            return Err(bad("empty tag".into()).into());
        }
        let entry = tags.entry(id).or_default();
        if !entry.iter().any(|t| t == tag) {
            entry.push(tag.to_string());
        }
    }
    Ok(tags)
}

pub fn contribmap(a: &ContribmapArgs) -> Result<(), CliError> {
    let start = Instant::now();
    let checkpoint = Checkpoint::load(&a.checkpoint)?;
    if checkpoint.model.mode() != FusionMode::Camue {
        return Err(Error::Config(format!(
            "contribution map requires gated mode (checkpoint mode is {})",
            checkpoint.model.mode()
        ))
        .into());
    }
    drop(checkpoint);
    let Loaded {
        dir,
        bundle,
        checkpoint,
        inputs,
    } = load_checkpoint_and_data(&a.checkpoint, &a.data, a.text_path.as_ref())?;
    let prediction = checkpoint.model.predict(&inputs)?;
    let gate = prediction
        .gate
        .clone()
        .ok_or_else(|| Error::Config("contribution map requires gated mode".into()))?;
    let predicted = prediction.classes();
    let tags = match &a.subgroups {
        Some(p) => read_subgroups(&data_path(p), &bundle)?,
        None => HashMap::new(),
    };
    let classes = &bundle.meta.class_names;
    let names = bundle.graph.node_names();

    let mut records = String::from("user\tname\talpha\tbeta\tpredicted\ttrue\ttags\n");
    let mut grid = String::new();
    for u in 0..bundle.n() {
        let (alpha, beta) = gate.contribution_of(u)?;
        let name = names.map_or_else(|| u.to_string(), |n| n[u].clone());
        let truth = bundle.labels[u].map_or("-", |c| classes[c].as_str());
        let user_tags = tags
            .get(&u)
            .map_or_else(|| "-".to_string(), |t| t.join(","));
        let _ = writeln!(
            records,
            "{u}\t{name}\t{alpha}\t{beta}\t{}\t{truth}\t{user_tags}",
            classes[predicted[u]]
        );
        let _ = writeln!(grid, "{alpha}\t{beta}");
    }

    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (&u, user_tags) in &tags {
        for t in user_tags {
            groups.entry(t.as_str()).or_default().push(u);
        }
    }
    let mut summary = String::from("tag\tusers\talpha_gt_beta\tpercent_alpha_gt_beta\n");
    let everyone: Vec<usize> = (0..bundle.n()).collect();
    let mut rows: Vec<(&str, Vec<usize>)> = groups.into_iter().collect();
    rows.push(("aggregated", everyone));
    for (tag, mut users) in rows {
        users.sort_unstable();
        let dominant = users
            .iter()
            .filter(|&&u| gate.alpha[u] > gate.beta[u])
            .count();
        let pct = 100.0 * gate.fraction_graph_dominant(Some(&users));
        let _ = writeln!(summary, "{tag}\t{}\t{dominant}\t{pct}", users.len());
    }

    create_dir(&a.out)?;
    write_file(&a.out.join(CONTRIBUTIONS_FILE), records.as_bytes())?;
    write_file(&a.out.join(SUBGROUPS_FILE), summary.as_bytes())?;
    write_file(&a.out.join(GRID_FILE), grid.as_bytes())?;
    RunManifest {
        command: "contribmap".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        seed: Some(checkpoint.train.seed),
        config: serde_json::json!({ "checkpoint": a.checkpoint, "data": dir, "subgroups": a.subgroups }),
        dataset_checksums: dataset_checksums(&dir)?,
        output_checksums: output_checksums(&a.out, &[CONTRIBUTIONS_FILE, SUBGROUPS_FILE, GRID_FILE])?,
        duration_secs: start.elapsed().as_secs_f64(),
    }
    .write(&a.out.join(MANIFEST_FILE))?;

    println!(
        "{:.1}% of {} users have alpha > beta (mean alpha {:.3}, mean beta {:.3})",
        100.0 * gate.fraction_graph_dominant(None),
        bundle.n(),
        gate.mean_alpha(),
        gate.mean_beta()
    );
    Ok(())
}

pub fn grid(a: &GridArgs) -> Result<(), CliError> {
    let start = Instant::now();
    if a.seeds == 0 || a.modes.is_empty() {
        return Err(CliError::Usage(
            "need at least one mode and one seed".into(),
        ));
    }
    let modes: Vec<FusionMode> = a.modes.iter().map(|&m| m.into()).collect();
    let encoder: GraphEncoderKind = a.graph_encoder.into();
    for &m in &modes {
        check_mode_encoder(m, encoder)?;
    }
    let base = train_config(&a.hyper, FusionMode::Camue, encoder, a.seed)?;
    let dir = data_path(&a.data);
    let bundle = load_dataset(&dir)?;
    let text = text_config(&dir, &a.text)?;
    let inputs = prepare_inputs(&bundle, &text)?;
    let seeds: Vec<u64> = (0..a.seeds).map(|k| a.seed.wrapping_add(k)).collect();
    let exp = Experiment {
        inputs: &inputs,
        labels: &bundle.labels,
        classes: class_count(&bundle),
        base: base.clone(),
        ratios: SplitRatios::default(),
    };
    let result = run_grid(&exp, &modes, &seeds, |r, _| {
        eprintln!(
            "{} seed {}: {:.3} ; {:.3} ({} epochs)",
            r.mode, r.seed, r.accuracy, r.f1, r.epochs_ran
        );
    })?;

    create_dir(&a.out)?;
    write_file(&a.out.join(RESULTS_TSV_FILE), result.to_tsv().as_bytes())?;
    write_file(
        &a.out.join(RESULTS_JSONL_FILE),
        result.to_jsonl()?.as_bytes(),
    )?;
    RunManifest {
        command: "grid".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        seed: Some(a.seed),
        config: serde_json::json!({
            "train": json_value(&base)?,
            "text": json_value(&portable_text_config(&dir, &text))?,
            "modes": modes,
            "seeds": seeds,
            "data": dir,
        }),
        dataset_checksums: dataset_checksums(&dir)?,
        output_checksums: output_checksums(&a.out, &[RESULTS_TSV_FILE, RESULTS_JSONL_FILE])?,
        duration_secs: start.elapsed().as_secs_f64(),
    }
    .write(&a.out.join(MANIFEST_FILE))?;

    println!("mode\taccuracy ; f1 (mean ± std)\tmax");
    for (mode, r) in &result.rows {
        println!(
            "{mode}\t{:.3} ± {:.3} ; {:.3} ± {:.3}\t{:.3} ; {:.3}",
            r.accuracy.mean, r.accuracy.std, r.f1.mean, r.f1.std, r.accuracy.max, r.f1.max
        );
    }
    Ok(())
}
