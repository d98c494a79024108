//! Attention-gated fusion of graph and text embeddings.
//!
//! For user `u` the gate produces a convex pair `(alpha_u, beta_u)` and the
//! classifier sees
//!
//! ```text
//! z_u = (alpha_u + lambda) * g_u + (beta_u + lambda) * t_u
//! ```
//!
//! The gate reads the user's binarized summed adjacency row and the frozen
//! base text embedding through a split first layer, then two more layers
//! down to the logit pair `[e_alpha, e_beta]`, which is softmaxed per user.

use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, OnceLock};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoders::{glorot, ForwardCtx, Linear, Mlp3, MlpInput, Rgcn};
use crate::error::{Error, Result};
use crate::graph::NormalizedGraph;
use crate::numerics::{
    aggregate_relations, DenseMatrix, ParamId, ParamStore, SparseMatrix, Tape, Var,
};

/// Lower bound on each gate weight; keeps alpha and beta strictly inside
/// (0, 1) under saturated gate logits.
pub const GATE_FLOOR: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FusionMode {
    Camue,
    FixedParams,
    SimpleFusion,
    TextOnly,
    LinkOnly,
}

impl FusionMode {
    pub const ALL: [FusionMode; 5] = [
        FusionMode::TextOnly,
        FusionMode::LinkOnly,
        FusionMode::SimpleFusion,
        FusionMode::FixedParams,
        FusionMode::Camue,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FusionMode::Camue => "camue",
            FusionMode::FixedParams => "fixed",
            FusionMode::SimpleFusion => "simple",
            FusionMode::TextOnly => "text",
            FusionMode::LinkOnly => "link",
        }
    }

    pub fn uses_graph_encoder(self) -> bool {
        matches!(
            self,
            FusionMode::Camue | FusionMode::FixedParams | FusionMode::LinkOnly
        )
    }

    pub fn uses_text_encoder(self) -> bool {
        matches!(
            self,
            FusionMode::Camue | FusionMode::FixedParams | FusionMode::TextOnly
        )
    }

    /// Modes that carry gate parameters (the fixed ablation keeps them unread).
    pub fn has_gate(self) -> bool {
        matches!(self, FusionMode::Camue | FusionMode::FixedParams)
    }
}

impl fmt::Display for FusionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FusionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "camue" => FusionMode::Camue,
            "fixed" | "fixed-params" => FusionMode::FixedParams,
            "simple" | "simple-fusion" => FusionMode::SimpleFusion,
            "text" | "text-only" => FusionMode::TextOnly,
            "link" | "link-only" => FusionMode::LinkOnly,
            other => return Err(Error::Config(format!("unknown mode {other:?}"))),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GraphEncoderKind {
    Rgcn,
    Mlp,
}

impl FromStr for GraphEncoderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rgcn" => Ok(GraphEncoderKind::Rgcn),
            "mlp" => Ok(GraphEncoderKind::Mlp),
            other => Err(Error::Config(format!("unknown graph encoder {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FusionConfig {
    pub lambda: f64,
    pub mode: FusionMode,
}

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!(
                "lambda must be >= 0, got {}",
                self.lambda
            )));
        }
        Ok(())
    }
}

/// Every size that determines the parameter layout of a [`Model`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub fusion: FusionConfig,
    pub graph_encoder: GraphEncoderKind,
    pub n: usize,
    /// Number of normalized relation matrices (forward and reverse).
    pub relations: usize,
    pub text_dim: usize,
    pub classes: usize,
    pub embed_dim: usize,
    pub hidden: usize,
    pub fuse_dim: usize,
    pub gate_hidden: [usize; 2],
    pub dropout: f64,
}

impl ModelSpec {
    pub fn new(
        mode: FusionMode,
        graph_encoder: GraphEncoderKind,
        n: usize,
        relations: usize,
        text_dim: usize,
        classes: usize,
    ) -> Self {
        Self {
            fusion: FusionConfig { lambda: 0.1, mode },
            graph_encoder,
            n,
            relations,
            text_dim,
            classes,
            embed_dim: 100,
            hidden: 100,
            fuse_dim: 100,
            gate_hidden: [64, 32],
            dropout: 0.1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.fusion.validate()?;
        if self.classes < 2 {
            return Err(Error::Config(format!(
                "need at least 2 classes, got {}",
                self.classes
            )));
        }
        if self.fusion.mode == FusionMode::SimpleFusion
            && self.graph_encoder != GraphEncoderKind::Rgcn
        {
            return Err(Error::Config(
                "simple fusion requires the rgcn graph encoder".into(),
            ));
        }
        let dims = [
            self.n,
            self.text_dim,
            self.embed_dim,
            self.hidden,
            self.fuse_dim,
            self.gate_hidden[0],
            self.gate_hidden[1],
        ];
        if dims.contains(&0) {
            return Err(Error::Config("all dimensions must be positive".into()));
        }
        if self.relations == 0 && self.graph_encoder == GraphEncoderKind::Rgcn {
            return Err(Error::Config(
                "the rgcn encoder needs at least one relation".into(),
            ));
        }
        crate::numerics::tape::check_dropout_rate(self.dropout)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateParams {
    pub w1_graph: ParamId,
    pub w1_text: ParamId,
    pub w2: ParamId,
    pub w3: ParamId,
}

impl GateParams {
    /// The output layer starts at zero, so an untrained gate gives (0.5, 0.5).
    pub fn new(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        n: usize,
        text_dim: usize,
        hidden: [usize; 2],
    ) -> Self {
        let [h1, h2] = hidden;
        let bound = (6.0 / (n + text_dim + h1) as f64).sqrt();
        let uniform = |rows, rng: &mut ChaCha8Rng| {
            use rand::Rng;
            DenseMatrix::from_fn(rows, h1, |_, _| rng.random_range(-bound..bound))
        };
        Self {
            w1_graph: store.add("gate.w1_graph", uniform(n, rng)),
            w1_text: store.add("gate.w1_text", uniform(text_dim, rng)),
            w2: store.add("gate.w2", glorot(h1, h2, rng)),
            w3: store.add("gate.w3", DenseMatrix::zeros(h2, 2)),
        }
    }

    /// `n x 2` matrix of per-user `(alpha, beta)`, each floored at [`GATE_FLOOR`].
    pub fn forward(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        summed_adjacency: Arc<SparseMatrix>,
        text: Var,
        ctx: &mut ForwardCtx<'_>,
    ) -> Result<Var> {
        let from_graph = tape.sparse_matmul(summed_adjacency, vars[self.w1_graph.0])?;
        let from_text = tape.matmul(text, vars[self.w1_text.0])?;
        let mut h = tape.add(from_graph, from_text)?;
        h = tape.relu(h);
        h = ctx.dropout(tape, h)?;
        h = tape.matmul(h, vars[self.w2.0])?;
        h = tape.relu(h);
        h = ctx.dropout(tape, h)?;
        let logits = tape.matmul(h, vars[self.w3.0])?;
        let weights = tape.row_softmax(logits)?;
        Ok(tape.affine(weights, 1.0 - 2.0 * GATE_FLOOR, GATE_FLOOR))
    }

    pub fn params(&self) -> Vec<ParamId> {
        vec![self.w1_graph, self.w1_text, self.w2, self.w3]
    }
}

/// Per-user modality weights; `alpha` is the graph weight, `beta` the text weight.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateOutput {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
}

impl GateOutput {
    pub fn from_weights(weights: &DenseMatrix) -> Result<Self> {
        if weights.cols() != 2 {
            return Err(Error::Shape(format!(
                "gate output has {} columns, expected 2",
                weights.cols()
            )));
        }
        Ok(Self {
            alpha: weights.column(0),
            beta: weights.column(1),
        })
    }

    pub fn len(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty()
    }

    pub fn contribution_of(&self, user: usize) -> Result<(f64, f64)> {
        match (self.alpha.get(user), self.beta.get(user)) {
            (Some(&a), Some(&b)) => Ok((a, b)),
            _ => Err(Error::Data(format!(
                "user {user} outside 0..{}",
                self.len()
            ))),
        }
    }

    /// Fraction of `users` (all users when `None`) with `alpha > beta`.
    pub fn fraction_graph_dominant(&self, users: Option<&[usize]>) -> f64 {
        let all: Vec<usize>;
        let users = match users {
            Some(u) => u,
            None => {
                all = (0..self.len()).collect();
                &all
            }
        };
        if users.is_empty() {
            return 0.0;
        }
        users
            .iter()
            .filter(|&&u| self.alpha[u] > self.beta[u])
            .count() as f64
            / users.len() as f64
    }

    pub fn mean_alpha(&self) -> f64 {
        self.alpha.iter().sum::<f64>() / self.len().max(1) as f64
    }

    pub fn mean_beta(&self) -> f64 {
        self.beta.iter().sum::<f64>() / self.len().max(1) as f64
    }
}

/// How the two embeddings are weighted before classification.
#[derive(Clone, Copy, Debug)]
pub enum FuseWeights {
    /// `n x 2` gate output on the tape.
    Gate(Var),
    /// alpha = beta = 0.5 for everyone; the gate is not evaluated.
    Fixed,
}

/// `logits = ((alpha + lambda) g + (beta + lambda) t) W_out + b`.
pub fn fuse_and_classify(
    tape: &mut Tape,
    vars: &[Var],
    graph_emb: Var,
    text_emb: Var,
    weights: FuseWeights,
    lambda: f64,
    classifier: &Linear,
) -> Result<Var> {
    let fused = match weights {
        FuseWeights::Gate(gate) => {
            let alpha = tape.column(gate, 0)?;
            let beta = tape.column(gate, 1)?;
            let g = tape.scale_rows(graph_emb, alpha, lambda)?;
            let t = tape.scale_rows(text_emb, beta, lambda)?;
            tape.add(g, t)?
        }
        FuseWeights::Fixed => {
            let g = tape.scale(graph_emb, 0.5 + lambda);
            let t = tape.scale(text_emb, 0.5 + lambda);
            tape.add(g, t)?
        }
    };
    classifier.forward(tape, vars, fused)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum GraphEncoder {
    Rgcn(Rgcn),
    Mlp(Mlp3),
}

impl GraphEncoder {
    pub fn params(&self) -> Vec<ParamId> {
        match self {
            GraphEncoder::Rgcn(r) => r.params(),
            GraphEncoder::Mlp(m) => m.params(),
        }
    }
}

/// Precomputed, read-only model inputs.
#[derive(Clone, Debug)]
pub struct ModelInputs {
    pub graph: NormalizedGraph,
    /// Frozen base text embeddings, `n x text_dim`.
    pub text: Arc<DenseMatrix>,
    text_aggregated: OnceLock<Arc<DenseMatrix>>,
}

impl ModelInputs {
    pub fn new(graph: NormalizedGraph, text: DenseMatrix) -> Result<Self> {
        if text.rows() != graph.n() {
            return Err(Error::Data(format!(
                "text features cover {} users, graph has {}",
                text.rows(),
                graph.n()
            )));
        }
        Ok(Self {
            graph,
            text: Arc::new(text),
            text_aggregated: OnceLock::new(),
        })
    }

    pub fn n(&self) -> usize {
        self.graph.n()
    }

    /// `[A_1 X | .. | A_R X]` for the text features, computed on first use.
    pub fn aggregated_text(&self) -> Result<Arc<DenseMatrix>> {
        if let Some(a) = self.text_aggregated.get() {
            return Ok(a.clone());
        }
        let a = Arc::new(aggregate_relations(&self.graph.relations, &self.text)?);
        Ok(self.text_aggregated.get_or_init(|| a).clone())
    }
}

pub struct ForwardOutput {
    pub logits: Var,
    pub gate: Option<Var>,
}

#[derive(Clone, Debug)]
pub struct Prediction {
    pub logits: DenseMatrix,
    pub gate: Option<GateOutput>,
}

impl Prediction {
    pub fn classes(&self) -> Vec<usize> {
        self.logits.argmax_rows()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub spec: ModelSpec,
    pub params: ParamStore,
    pub graph_encoder: Option<GraphEncoder>,
    pub text_encoder: Option<Mlp3>,
    pub gate: Option<GateParams>,
    /// R-GCN over text features, used only by simple fusion.
    pub simple: Option<Rgcn>,
    pub classifier: Linear,
}

impl Model {
    pub fn new(spec: ModelSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let mode = spec.fusion.mode;
        let rgcn_dims = [spec.embed_dim, spec.hidden, spec.fuse_dim];

        let graph_encoder = mode.uses_graph_encoder().then(|| match spec.graph_encoder {
            GraphEncoderKind::Rgcn => GraphEncoder::Rgcn(Rgcn::with_table(
                &mut params,
                &mut rng,
                "graph",
                spec.n,
                spec.relations,
                &rgcn_dims,
            )),
            GraphEncoderKind::Mlp => GraphEncoder::Mlp(Mlp3::new(
                &mut params,
                &mut rng,
                "graph",
                [spec.n, spec.hidden, spec.hidden, spec.fuse_dim],
            )),
        });
        let text_encoder = mode.uses_text_encoder().then(|| {
            Mlp3::new(
                &mut params,
                &mut rng,
                "text",
                [spec.text_dim, spec.hidden, spec.hidden, spec.fuse_dim],
            )
        });
        let gate = mode.has_gate().then(|| {
            GateParams::new(
                &mut params,
                &mut rng,
                spec.n,
                spec.text_dim,
                spec.gate_hidden,
            )
        });
        let simple = (mode == FusionMode::SimpleFusion).then(|| {
            Rgcn::with_input(
                &mut params,
                &mut rng,
                "simple",
                spec.relations,
                &[spec.text_dim, spec.hidden, spec.fuse_dim],
            )
        });
        let classifier = Linear::new(
            &mut params,
            &mut rng,
            "classifier",
            spec.fuse_dim,
            spec.classes,
        );
        Ok(Self {
            spec,
            params,
            graph_encoder,
            text_encoder,
            gate,
            simple,
            classifier,
        })
    }

    pub fn mode(&self) -> FusionMode {
        self.spec.fusion.mode
    }

    fn check_inputs(&self, inputs: &ModelInputs) -> Result<()> {
        if inputs.n() != self.spec.n {
            return Err(Error::Data(format!(
                "model was built for {} users, inputs have {}",
                self.spec.n,
                inputs.n()
            )));
        }
        if inputs.text.cols() != self.spec.text_dim {
            return Err(Error::Shape(format!(
                "text features are {}-dimensional, model expects {}",
                inputs.text.cols(),
                self.spec.text_dim
            )));
        }
        if inputs.graph.relation_count() != self.spec.relations {
            return Err(Error::Shape(format!(
                "graph has {} relations, model expects {}",
                inputs.graph.relation_count(),
                self.spec.relations
            )));
        }
        Ok(())
    }

    /// Graph-branch embeddings (`n x fuse_dim`), if the mode has one.
    pub fn graph_embedding(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        inputs: &ModelInputs,
        ctx: &mut ForwardCtx<'_>,
    ) -> Result<Option<Var>> {
        match &self.graph_encoder {
            None => Ok(None),
            Some(GraphEncoder::Rgcn(r)) => r
                .forward(tape, vars, &inputs.graph, None, None, ctx)
                .map(Some),
            Some(GraphEncoder::Mlp(m)) => m
                .forward(
                    tape,
                    vars,
                    MlpInput::Sparse(inputs.graph.summed_adjacency.clone()),
                    ctx,
                )
                .map(Some),
        }
    }

    pub fn forward(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        inputs: &ModelInputs,
        ctx: &mut ForwardCtx<'_>,
    ) -> Result<ForwardOutput> {
        self.check_inputs(inputs)?;
        let text = tape.constant((*inputs.text).clone());
        let missing = |what: &str| Error::Config(format!("{} model has no {what}", self.mode()));
        let lambda = self.spec.fusion.lambda;

        match self.mode() {
            FusionMode::SimpleFusion => {
                let enc = self
                    .simple
                    .as_ref()
                    .ok_or_else(|| missing("simple-fusion encoder"))?;
                let aggregated = inputs.aggregated_text()?;
                let h =
                    enc.forward(tape, vars, &inputs.graph, Some(text), Some(aggregated), ctx)?;
                let logits = self.classifier.forward(tape, vars, h)?;
                Ok(ForwardOutput { logits, gate: None })
            }
            FusionMode::LinkOnly => {
                let g = self
                    .graph_embedding(tape, vars, inputs, ctx)?
                    .ok_or_else(|| missing("graph encoder"))?;
                let logits = self.classifier.forward(tape, vars, g)?;
                Ok(ForwardOutput { logits, gate: None })
            }
            FusionMode::TextOnly => {
                let enc = self
                    .text_encoder
                    .as_ref()
                    .ok_or_else(|| missing("text encoder"))?;
                let t = enc.forward(tape, vars, MlpInput::Dense(text), ctx)?;
                let logits = self.classifier.forward(tape, vars, t)?;
                Ok(ForwardOutput { logits, gate: None })
            }
            mode @ (FusionMode::Camue | FusionMode::FixedParams) => {
                let g = self
                    .graph_embedding(tape, vars, inputs, ctx)?
                    .ok_or_else(|| missing("graph encoder"))?;
                let enc = self
                    .text_encoder
                    .as_ref()
                    .ok_or_else(|| missing("text encoder"))?;
                let t = enc.forward(tape, vars, MlpInput::Dense(text), ctx)?;
                let (weights, gate) = if mode == FusionMode::Camue {
                    let gate_params = self.gate.as_ref().ok_or_else(|| missing("gate"))?;
                    let gate = gate_params.forward(
                        tape,
                        vars,
                        inputs.graph.summed_adjacency.clone(),
                        text,
                        ctx,
                    )?;
                    (FuseWeights::Gate(gate), Some(gate))
                } else {
                    (FuseWeights::Fixed, None)
                };
                let logits =
                    fuse_and_classify(tape, vars, g, t, weights, lambda, &self.classifier)?;
                Ok(ForwardOutput { logits, gate })
            }
        }
    }

    /// Evaluation-mode forward pass.
    pub fn predict(&self, inputs: &ModelInputs) -> Result<Prediction> {
        let mut tape = Tape::new();
        let vars = tape.params(&self.params);
        let out = self.forward(&mut tape, &vars, inputs, &mut ForwardCtx::eval())?;
        let gate = match out.gate {
            Some(g) => Some(GateOutput::from_weights(tape.value(g))?),
            None => None,
        };
        Ok(Prediction {
            logits: tape.value(out.logits).clone(),
            gate,
        })
    }

    pub fn gate_params(&self) -> Vec<ParamId> {
        self.gate
            .as_ref()
            .map(GateParams::params)
            .unwrap_or_default()
    }

    /// Parameter ids grouped by component, for inspection and gradient checks.
    pub fn param_groups(&self) -> Vec<(&'static str, Vec<ParamId>)> {
        let mut groups = Vec::new();
        if let Some(g) = &self.graph_encoder {
            groups.push(("graph-encoder", g.params()));
        }
        if let Some(t) = &self.text_encoder {
            groups.push(("text-encoder", t.params()));
        }
        if let Some(g) = &self.gate {
            groups.push(("gate", g.params()));
        }
        if let Some(s) = &self.simple {
            groups.push(("simple-fusion", s.params()));
        }
        groups.push((
            "classifier",
            vec![self.classifier.weight, self.classifier.bias],
        ));
        groups
    }
}
