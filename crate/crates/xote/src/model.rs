//! The convolutional IOB sequence tagger.
//!
//! Architecture: frozen word-embedding lookup, a stack of same-padded 1D
//! convolutions with ReLU, one dense ReLU layer, and a softmax output layer
//! over the three IOB tags. Dropout is applied on the embedding layer and
//! after every hidden layer during training only. Gradients stop at the
//! embeddings: the tables are shared across languages and never adapted, so
//! a model trained on one language runs unchanged on any language whose
//! embeddings live in the same space.

use crate::container;
use crate::embeddings::EmbeddingTable;
use crate::error::{Error, Result};
use crate::ingest::Sentence;
use crate::iob::{tags_to_spans, Tag, TargetSpan, Token};
use crate::rng::{substream, XRng, STREAM_INIT};
use crate::tensor::{
    adam_step, conv1d, conv1d_backward, cross_entropy, cross_entropy_logit_grad, dropout_mask,
    l1_penalty, AdamConfig, AdamState, ConvKernel, Matrix,
};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};

const XOTE_MAGIC: &[u8; 4] = b"XOTE";

/// Number of output tags (I, O, B).
pub const TAG_COUNT: usize = 3;

/// Architecture hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    /// Number of stacked convolution layers.
    pub layers: usize,
    /// Convolution kernel width (must be odd).
    pub kernel_width: usize,
    /// Filter maps per convolution layer.
    pub conv_dim: usize,
    /// Width of the penultimate dense layer.
    pub dense_dim: usize,
    /// Dropout rate on the embedding layer (train time only).
    pub dropout_embed: f64,
    /// Dropout rate after every hidden layer (train time only).
    pub dropout_hidden: f64,
    /// L1 regularization strength on the penultimate dense weights.
    pub l1_lambda: f64,
    /// Hidden activation; only "relu" is supported.
    pub activation: String,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            layers: 5,
            kernel_width: 3,
            conv_dim: 300,
            dense_dim: 300,
            dropout_embed: 0.3,
            dropout_hidden: 0.5,
            l1_lambda: 1e-6,
            activation: "relu".into(),
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 || self.conv_dim == 0 || self.dense_dim == 0 {
            return Err(Error::Config("model dimensions must be positive".into()));
        }
        if self.kernel_width.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "kernel width must be odd, got {}",
                self.kernel_width
            )));
        }
        for (name, rate) in [
            ("dropout_embed", self.dropout_embed),
            ("dropout_hidden", self.dropout_hidden),
        ] {
            if !(0.0..1.0).contains(&rate) {
                return Err(Error::Config(format!(
                    "{name} must be in [0,1), got {rate}"
                )));
            }
        }
        if self.l1_lambda < 0.0 {
            return Err(Error::Config("l1_lambda must be >= 0".into()));
        }
        if self.activation != "relu" {
            return Err(Error::Config(format!(
                "unsupported activation {:?}",
                self.activation
            )));
        }
        Ok(())
    }

    /// A dropout-free copy, handy for tests and gradient checks.
    pub fn without_dropout(&self) -> ModelConfig {
        ModelConfig {
            dropout_embed: 0.0,
            dropout_hidden: 0.0,
            ..self.clone()
        }
    }

    /// Canonical key=value text block embedded in checkpoints.
    fn to_kv_block(&self, embed_dim: usize) -> String {
        format!(
            "layers={}\nkernel_width={}\nconv_dim={}\ndense_dim={}\ndropout_embed={}\ndropout_hidden={}\nl1_lambda={}\nactivation={}\nembed_dim={}\n",
            self.layers,
            self.kernel_width,
            self.conv_dim,
            self.dense_dim,
            self.dropout_embed,
            self.dropout_hidden,
            self.l1_lambda,
            self.activation,
            embed_dim
        )
    }

    fn from_kv_block(block: &str) -> Result<(ModelConfig, usize)> {
        let mut cfg = ModelConfig::default();
        let mut embed_dim = None;
        for line in block.lines() {
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("bad config line {line:?}")))?;
            macro_rules! parse {
                () => {
                    value
                        .parse()
                        .map_err(|e| Error::Format(format!("config key {key}: {e}")))?
                };
            }
            match key {
                "layers" => cfg.layers = parse!(),
                "kernel_width" => cfg.kernel_width = parse!(),
                "conv_dim" => cfg.conv_dim = parse!(),
                "dense_dim" => cfg.dense_dim = parse!(),
                "dropout_embed" => cfg.dropout_embed = parse!(),
                "dropout_hidden" => cfg.dropout_hidden = parse!(),
                "l1_lambda" => cfg.l1_lambda = parse!(),
                "activation" => cfg.activation = value.to_string(),
                "embed_dim" => embed_dim = Some(parse!()),
                other => return Err(Error::Format(format!("unknown config key {other:?}"))),
            }
        }
        let embed_dim =
            embed_dim.ok_or_else(|| Error::Format("config block missing embed_dim".into()))?;
        cfg.validate()?;
        Ok((cfg, embed_dim))
    }
}

/// All trainable tensors of the tagger.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub embed_dim: usize,
    pub conv_layers: Vec<ConvKernel>,
    /// Penultimate dense weights, conv_dim x dense_dim.
    pub dense_w: Matrix,
    pub dense_b: Vec<f64>,
    /// Output weights, dense_dim x 3.
    pub out_w: Matrix,
    pub out_b: Vec<f64>,
}

fn glorot_matrix(rows: usize, cols: usize, rng: &mut XRng) -> Matrix {
    let limit = (6.0 / ((rows + cols) as f64)).sqrt();
    let mut m = Matrix::zeros(rows, cols);
    m.data_mut()
        .iter_mut()
        .for_each(|v| *v = rng.gen_range(-limit..limit));
    m
}

/// Glorot-uniform weights and zero biases, deterministic per seed.
pub fn init_model(cfg: &ModelConfig, embed_dim: usize, seed: u64) -> Result<ModelParams> {
    cfg.validate()?;
    if embed_dim == 0 {
        return Err(Error::Config("embedding dim must be positive".into()));
    }
    let mut rng = substream(seed, STREAM_INIT);
    let mut conv_layers = Vec::with_capacity(cfg.layers);
    for l in 0..cfg.layers {
        let in_dim = if l == 0 { embed_dim } else { cfg.conv_dim };
        conv_layers.push(ConvKernel::glorot(
            cfg.kernel_width,
            in_dim,
            cfg.conv_dim,
            &mut rng,
        )?);
    }
    Ok(ModelParams {
        embed_dim,
        conv_layers,
        dense_w: glorot_matrix(cfg.conv_dim, cfg.dense_dim, &mut rng),
        dense_b: vec![0.0; cfg.dense_dim],
        out_w: glorot_matrix(cfg.dense_dim, TAG_COUNT, &mut rng),
        out_b: vec![0.0; TAG_COUNT],
    })
}

impl ModelParams {
    /// Check that the tensor shapes are the ones `cfg` and `embed_dim`
    /// prescribe.
    pub fn validate_shapes(&self, cfg: &ModelConfig, embed_dim: usize) -> Result<()> {
        if self.embed_dim != embed_dim {
            return Err(Error::Config(format!(
                "model embed dim {} does not match embeddings dim {embed_dim}",
                self.embed_dim
            )));
        }
        if self.conv_layers.len() != cfg.layers {
            return Err(Error::Config(format!(
                "model has {} conv layers, config says {}",
                self.conv_layers.len(),
                cfg.layers
            )));
        }
        for (l, k) in self.conv_layers.iter().enumerate() {
            let in_dim = if l == 0 { embed_dim } else { cfg.conv_dim };
            if k.width != cfg.kernel_width || k.in_dim != in_dim || k.out_dim != cfg.conv_dim {
                return Err(Error::Config(format!(
                    "conv layer {l} has unexpected shape"
                )));
            }
        }
        if self.dense_w.rows() != cfg.conv_dim
            || self.dense_w.cols() != cfg.dense_dim
            || self.out_w.rows() != cfg.dense_dim
            || self.out_w.cols() != TAG_COUNT
        {
            return Err(Error::Config("dense/output layer shape mismatch".into()));
        }
        Ok(())
    }

    /// Tensor names in declaration order (conv layers, dense, output).
    pub fn tensor_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for l in 0..self.conv_layers.len() {
            names.push(format!("conv{l}.weights"));
            names.push(format!("conv{l}.bias"));
        }
        names.extend(["dense.w", "dense.b", "out.w", "out.b"].map(String::from));
        names
    }

    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        for k in &self.conv_layers {
            out.push(&k.weights);
            out.push(&k.bias);
        }
        out.push(self.dense_w.data());
        out.push(&self.dense_b);
        out.push(self.out_w.data());
        out.push(&self.out_b);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for k in &mut self.conv_layers {
            let ConvKernel { weights, bias, .. } = k;
            out.push(weights);
            out.push(bias);
        }
        out.push(self.dense_w.data_mut());
        out.push(&mut self.dense_b);
        out.push(self.out_w.data_mut());
        out.push(&mut self.out_b);
        out
    }

    /// Shape header written for each tensor in the checkpoint.
    fn tensor_shapes(&self) -> Vec<Vec<usize>> {
        let mut shapes = Vec::new();
        for k in &self.conv_layers {
            shapes.push(vec![k.width, k.in_dim, k.out_dim]);
            shapes.push(vec![k.out_dim]);
        }
        shapes.push(vec![self.dense_w.rows(), self.dense_w.cols()]);
        shapes.push(vec![self.dense_b.len()]);
        shapes.push(vec![self.out_w.rows(), self.out_w.cols()]);
        shapes.push(vec![self.out_b.len()]);
        shapes
    }
}

/// A per-token distribution over the tags, ordered (I, O, B).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TagDistribution {
    pub q: [f64; TAG_COUNT],
}

impl TagDistribution {
    pub fn prob(&self, tag: Tag) -> f64 {
        self.q[tag.dist_index()]
    }

    /// Argmax with ties broken by the tag order O < I < B (an exact tie
    /// keeps the lower tag, so ties favor no extraction).
    pub fn argmax(&self) -> Tag {
        let mut best = Tag::O;
        for tag in [Tag::I, Tag::B] {
            if self.prob(tag) > self.prob(best) {
                best = tag;
            }
        }
        best
    }
}

/// Activations cached by the forward pass for backpropagation.
pub struct ForwardCache {
    /// acts[0] is the (possibly dropout-masked) embedding sequence;
    /// acts[l+1] is the input to conv layer l+1, or to the dense layer for
    /// the last entry.
    acts: Vec<Matrix>,
    conv_pre: Vec<Matrix>,
    conv_masks: Vec<Option<Vec<f64>>>,
    dense_pre: Matrix,
    dense_out: Matrix,
    dense_mask: Option<Vec<f64>>,
}

/// Run the tagger over one sentence.
///
/// With `train` set, dropout masks are drawn from `rng` and applied after
/// the embedding layer and each hidden layer; at inference the pass is
/// deterministic and `rng` may be `None`.
pub fn forward(
    params: &ModelParams,
    cfg: &ModelConfig,
    table: &EmbeddingTable,
    tokens: &[Token],
    train: bool,
    mut rng: Option<&mut XRng>,
) -> Result<(Vec<TagDistribution>, ForwardCache)> {
    if tokens.is_empty() {
        return Err(Error::Contract("forward pass on an empty sentence".into()));
    }
    if table.dim() != params.embed_dim {
        return Err(Error::Config(format!(
            "embedding table dim {} does not match model dim {}",
            table.dim(),
            params.embed_dim
        )));
    }
    let n = tokens.len();
    let mut draw_mask = |len: usize, rate: f64| -> Result<Option<Vec<f64>>> {
        if !train || rate == 0.0 {
            return Ok(None);
        }
        match rng.as_deref_mut() {
            Some(r) => Ok(Some(dropout_mask(len, rate, r)?)),
            None => Err(Error::Config(
                "training forward pass requires an rng".into(),
            )),
        }
    };

    // Embedding lookup; no gradient ever flows back into the table.
    let mut embed = Matrix::zeros(n, params.embed_dim);
    for (i, tok) in tokens.iter().enumerate() {
        let (vec, _in_vocab) = table.lookup(&tok.text);
        embed.row_mut(i).copy_from_slice(&vec);
    }
    if let Some(mask) = draw_mask(n * params.embed_dim, cfg.dropout_embed)? {
        crate::tensor::apply_mask(embed.data_mut(), &mask);
    }

    let mut acts = vec![embed];
    let mut conv_pre = Vec::with_capacity(cfg.layers);
    let mut conv_masks = Vec::with_capacity(cfg.layers);
    for kernel in &params.conv_layers {
        let z = conv1d(acts.last().expect("non-empty"), kernel)?;
        let mut h = z.clone();
        h.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
        let mask = draw_mask(h.data().len(), cfg.dropout_hidden)?;
        if let Some(m) = &mask {
            crate::tensor::apply_mask(h.data_mut(), m);
        }
        conv_pre.push(z);
        conv_masks.push(mask);
        acts.push(h);
    }

    let (mut dense_out, dense_pre) = crate::tensor::dense(
        acts.last().expect("non-empty"),
        &params.dense_w,
        &params.dense_b,
        crate::tensor::Activation::Relu,
    )?;
    let dense_mask = draw_mask(dense_out.data().len(), cfg.dropout_hidden)?;
    if let Some(m) = &dense_mask {
        crate::tensor::apply_mask(dense_out.data_mut(), m);
    }

    let (logits, _) = crate::tensor::dense(
        &dense_out,
        &params.out_w,
        &params.out_b,
        crate::tensor::Activation::None,
    )?;
    let mut q = logits;
    let mut dists = Vec::with_capacity(n);
    for i in 0..n {
        crate::tensor::dense::softmax_in_place(q.row_mut(i));
        let row = q.row(i);
        dists.push(TagDistribution {
            q: [row[0], row[1], row[2]],
        });
    }

    Ok((
        dists,
        ForwardCache {
            acts,
            conv_pre,
            conv_masks,
            dense_pre,
            dense_out,
            dense_mask,
        },
    ))
}

/// One training example inside a batch; sentences may come from different
/// languages, each bringing its own (aligned) table.
pub struct BatchItem<'a> {
    pub table: &'a EmbeddingTable,
    pub tokens: &'a [Token],
    pub gold: &'a [Tag],
    /// Used in loss diagnostics only.
    pub id: &'a str,
}

/// Gradients for every tensor in [`ModelParams`], in declaration order.
pub struct ModelGrads {
    grads: Vec<Vec<f64>>,
}

impl ModelGrads {
    fn zeros_like(params: &ModelParams) -> ModelGrads {
        ModelGrads {
            grads: params
                .tensors()
                .iter()
                .map(|t| vec![0.0; t.len()])
                .collect(),
        }
    }

    pub fn tensors(&self) -> &[Vec<f64>] {
        &self.grads
    }
}

/// Mean token cross-entropy over a batch plus the L1 penalty on the
/// penultimate dense weights, with gradients for all model tensors.
///
/// Embeddings receive no gradient. A non-finite loss aborts with the
/// offending sentence and token named.
pub fn loss_and_gradients(
    params: &ModelParams,
    cfg: &ModelConfig,
    batch: &[BatchItem<'_>],
    train: bool,
    mut rng: Option<&mut XRng>,
) -> Result<(f64, ModelGrads)> {
    if batch.is_empty() {
        return Err(Error::Contract("empty batch".into()));
    }
    let total_tokens: usize = batch.iter().map(|item| item.tokens.len()).sum();
    if total_tokens == 0 {
        return Err(Error::Contract(
            "batch contains only empty sentences".into(),
        ));
    }
    let inv = 1.0 / total_tokens as f64;
    let mut grads = ModelGrads::zeros_like(params);
    let mut ce_sum = 0.0;
    let dense_w_idx = 2 * params.conv_layers.len();

    for item in batch {
        if item.gold.len() != item.tokens.len() {
            return Err(Error::Contract(format!(
                "sentence {}: {} gold tags for {} tokens",
                item.id,
                item.gold.len(),
                item.tokens.len()
            )));
        }
        let (dists, cache) = forward(
            params,
            cfg,
            item.table,
            item.tokens,
            train,
            rng.as_deref_mut(),
        )?;

        // Cross-entropy and dL/dlogits, already scaled by 1/total_tokens.
        let n = item.tokens.len();
        let mut dlogits = Matrix::zeros(n, TAG_COUNT);
        for (i, (dist, tag)) in dists.iter().zip(item.gold).enumerate() {
            if !dist.q.iter().all(|v| v.is_finite()) {
                return Err(Error::Numeric(format!(
                    "non-finite tag distribution at sentence {} token {i}",
                    item.id
                )));
            }
            let mut p = [0.0; TAG_COUNT];
            p[tag.dist_index()] = 1.0;
            let ce = cross_entropy(&p, &dist.q);
            if !ce.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite loss at sentence {} token {i}",
                    item.id
                )));
            }
            ce_sum += ce;
            let g = cross_entropy_logit_grad(&p, &dist.q);
            for (t, gv) in g.iter().enumerate() {
                dlogits.set(i, t, gv * inv);
            }
        }

        backward_into(params, &cache, &dlogits, &mut grads, dense_w_idx)?;
    }

    let mut loss = ce_sum * inv;
    let (l1_loss, l1_grad) = l1_penalty(params.dense_w.data(), cfg.l1_lambda);
    loss += l1_loss;
    for (g, l) in grads.grads[dense_w_idx].iter_mut().zip(&l1_grad) {
        *g += l;
    }
    if !loss.is_finite() {
        return Err(Error::Numeric("non-finite total loss".into()));
    }
    Ok((loss, grads))
}

/// Backpropagate one sentence's logit gradients into the accumulator.
fn backward_into(
    params: &ModelParams,
    cache: &ForwardCache,
    dlogits: &Matrix,
    grads: &mut ModelGrads,
    dense_w_idx: usize,
) -> Result<()> {
    let layer_count = params.conv_layers.len();
    // Output layer (linear; softmax is folded into dlogits).
    let g_out_w = cache.dense_out.t_matmul(dlogits)?;
    add_into(&mut grads.grads[dense_w_idx + 2], g_out_w.data());
    for r in 0..dlogits.rows() {
        add_into(&mut grads.grads[dense_w_idx + 3], dlogits.row(r));
    }
    let mut d_hidden = dlogits.matmul_t(&params.out_w)?;

    // Dense layer: dropout, then ReLU, then the affine map.
    if let Some(mask) = &cache.dense_mask {
        crate::tensor::apply_mask(d_hidden.data_mut(), mask);
    }
    for (g, &z) in d_hidden.data_mut().iter_mut().zip(cache.dense_pre.data()) {
        *g *= crate::tensor::dense::relu_grad(z);
    }
    let dense_in = &cache.acts[layer_count];
    let g_dense_w = dense_in.t_matmul(&d_hidden)?;
    add_into(&mut grads.grads[dense_w_idx], g_dense_w.data());
    for r in 0..d_hidden.rows() {
        add_into(&mut grads.grads[dense_w_idx + 1], d_hidden.row(r));
    }
    let mut d_act = d_hidden.matmul_t(&params.dense_w)?;

    // Conv stack in reverse.
    for l in (0..layer_count).rev() {
        if let Some(mask) = &cache.conv_masks[l] {
            crate::tensor::apply_mask(d_act.data_mut(), mask);
        }
        for (g, &z) in d_act.data_mut().iter_mut().zip(cache.conv_pre[l].data()) {
            *g *= crate::tensor::dense::relu_grad(z);
        }
        let conv_grads = conv1d_backward(&cache.acts[l], &params.conv_layers[l], &d_act)?;
        add_into(&mut grads.grads[2 * l], &conv_grads.grad_weights);
        add_into(&mut grads.grads[2 * l + 1], &conv_grads.grad_bias);
        d_act = conv_grads.grad_x;
    }
    // d_act now holds the embedding gradient, which is dropped: tables are
    // frozen in all settings, so the would-be embedding L1 has nothing to
    // act on either.
    Ok(())
}

fn add_into(acc: &mut [f64], values: &[f64]) {
    debug_assert_eq!(acc.len(), values.len());
    for (a, &v) in acc.iter_mut().zip(values) {
        *a += v;
    }
}

/// Apply one Adam step to every tensor.
pub fn apply_adam(
    params: &mut ModelParams,
    grads: &ModelGrads,
    states: &mut [AdamState],
    cfg: &AdamConfig,
) -> Result<()> {
    let tensors = params.tensors_mut();
    if tensors.len() != grads.grads.len() || tensors.len() != states.len() {
        return Err(Error::Config(
            "optimizer state does not match model tensors".into(),
        ));
    }
    for ((param, grad), state) in tensors.into_iter().zip(&grads.grads).zip(states.iter_mut()) {
        adam_step(param, grad, state, cfg)?;
    }
    Ok(())
}

/// Fresh Adam accumulators for every tensor of `params`.
pub fn optimizer_states(params: &ModelParams) -> Vec<AdamState> {
    params
        .tensors()
        .iter()
        .map(|t| AdamState::new(t.len()))
        .collect()
}

/// Deterministic argmax tagging of a token sequence.
pub fn predict_tags(
    params: &ModelParams,
    cfg: &ModelConfig,
    table: &EmbeddingTable,
    tokens: &[Token],
) -> Result<Vec<Tag>> {
    let (dists, _) = forward(params, cfg, table, tokens, false, None)?;
    Ok(dists.iter().map(TagDistribution::argmax).collect())
}

/// Tag a sentence and decode the tags into character spans.
pub fn predict_spans(
    params: &ModelParams,
    cfg: &ModelConfig,
    table: &EmbeddingTable,
    sentence: &Sentence,
) -> Result<Vec<TargetSpan>> {
    let tags = predict_tags(params, cfg, table, &sentence.tokens)?;
    tags_to_spans(&sentence.text, &sentence.tokens, &tags)
}

/// A deserialized checkpoint.
pub struct Checkpoint {
    pub params: ModelParams,
    pub config: ModelConfig,
    pub metadata: Vec<(String, String)>,
}

impl Checkpoint {
    /// Reject the checkpoint when it was written under a different
    /// architecture than the caller expects.
    pub fn require_config(&self, expected: &ModelConfig) -> Result<()> {
        if &self.config != expected {
            return Err(Error::Config(
                "checkpoint was written under a conflicting model config".into(),
            ));
        }
        Ok(())
    }
}

/// Serialize params + config + metadata: magic "XOTE", version, the config
/// key=value block, sorted metadata lines, then every tensor in declaration
/// order as shape-prefixed little-endian f64.
pub fn save_checkpoint(
    w: &mut impl Write,
    params: &ModelParams,
    cfg: &ModelConfig,
    metadata: &[(String, String)],
) -> Result<()> {
    container::write_magic(w, XOTE_MAGIC)?;
    container::write_string(w, &cfg.to_kv_block(params.embed_dim))?;
    let mut meta: Vec<(String, String)> = metadata.to_vec();
    meta.sort();
    let meta_block: String = meta.iter().map(|(k, v)| format!("{k}={v}\n")).collect();
    container::write_string(w, &meta_block)?;

    let names = params.tensor_names();
    let shapes = params.tensor_shapes();
    let tensors = params.tensors();
    container::write_u32(w, tensors.len() as u32)?;
    for ((name, shape), tensor) in names.iter().zip(&shapes).zip(&tensors) {
        container::write_string(w, name)?;
        container::write_f64_tensor(w, shape, tensor)?;
    }
    Ok(())
}

/// Read a checkpoint back, validating magic, version, config and all tensor
/// shapes. A truncated or inconsistent file yields a format error and no
/// partial model.
pub fn load_checkpoint(r: &mut impl Read) -> Result<Checkpoint> {
    container::read_magic(r, XOTE_MAGIC)?;
    let (cfg, embed_dim) = ModelConfig::from_kv_block(&container::read_string(r)?)?;
    let meta_block = container::read_string(r)?;
    let metadata: Vec<(String, String)> = meta_block
        .lines()
        .filter(|l| !l.is_empty())
        .map(|l| {
            l.split_once('=')
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .ok_or_else(|| Error::Format(format!("bad metadata line {l:?}")))
        })
        .collect::<Result<_>>()?;

    let mut params = init_model(&cfg, embed_dim, 0)?;
    let expected_names = params.tensor_names();
    let expected_shapes = params.tensor_shapes();
    let count = container::read_u32(r)? as usize;
    if count != expected_names.len() {
        return Err(Error::Format(format!(
            "checkpoint has {count} tensors, expected {}",
            expected_names.len()
        )));
    }
    for i in 0..count {
        let name = container::read_string(r)?;
        if name != expected_names[i] {
            return Err(Error::Format(format!(
                "tensor {i} is {name:?}, expected {:?}",
                expected_names[i]
            )));
        }
        let (shape, values) = container::read_f64_tensor(r)?;
        if shape != expected_shapes[i] {
            return Err(Error::Format(format!(
                "tensor {name} has shape {shape:?}, expected {:?}",
                expected_shapes[i]
            )));
        }
        params.tensors_mut()[i].copy_from_slice(&values);
    }
    params.validate_shapes(&cfg, embed_dim)?;
    Ok(Checkpoint {
        params,
        config: cfg,
        metadata,
    })
}

/// Finite-difference check of [`loss_and_gradients`] over every tensor.
///
/// Requires a dropout-free config so the loss is deterministic. Coordinates
/// are subsampled with `stride` (1 checks everything). Returns the maximum
/// relative error across all checked coordinates.
pub fn check_model_gradients(
    params: &ModelParams,
    cfg: &ModelConfig,
    batch: &[BatchItem<'_>],
    stride: usize,
) -> Result<f64> {
    if cfg.dropout_embed != 0.0 || cfg.dropout_hidden != 0.0 {
        return Err(Error::Config(
            "gradient check requires a dropout-free config".into(),
        ));
    }
    let (_, analytic) = loss_and_gradients(params, cfg, batch, true, None)?;
    let mut worst = 0.0f64;
    let tensor_count = params.tensors().len();
    for ti in 0..tensor_count {
        let mut flat = params.tensors()[ti].to_vec();
        let coords: Vec<usize> = (0..flat.len()).step_by(stride.max(1)).collect();
        let base = params.clone();
        let loss_fn = |vals: &[f64]| {
            let mut p = base.clone();
            p.tensors_mut()[ti].copy_from_slice(vals);
            loss_and_gradients(&p, cfg, batch, true, None)
                .expect("loss is finite during gradient check")
                .0
        };
        let err = crate::tensor::gradient_check(loss_fn, &mut flat, &analytic.grads[ti], &coords);
        worst = worst.max(err);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embeddings::EmbeddingTable;
    use crate::rng::STREAM_DROPOUT;

    fn tiny_cfg() -> ModelConfig {
        ModelConfig {
            layers: 2,
            kernel_width: 3,
            conv_dim: 6,
            dense_dim: 5,
            dropout_embed: 0.0,
            dropout_hidden: 0.0,
            l1_lambda: 1e-6,
            activation: "relu".into(),
        }
    }

    fn tiny_table() -> EmbeddingTable {
        let mut rng = substream(21, STREAM_INIT);
        let words = [
            "the", "wine", "list", "is", "nice", "food", "was", "good", ".",
        ];
        EmbeddingTable::from_entries(
            "en",
            4,
            words.iter().map(|w| {
                (
                    w.to_string(),
                    (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                )
            }),
        )
        .unwrap()
    }

    fn tokens_for(text: &str) -> Vec<Token> {
        crate::ingest::tokenize(text)
    }

    #[test]
    fn init_is_deterministic_and_biases_zero() {
        let cfg = tiny_cfg();
        let a = init_model(&cfg, 4, 7).unwrap();
        let b = init_model(&cfg, 4, 7).unwrap();
        assert_eq!(a, b);
        let c = init_model(&cfg, 4, 8).unwrap();
        assert_ne!(a, c);
        assert!(a.dense_b.iter().all(|&v| v == 0.0));
        assert!(a.out_b.iter().all(|&v| v == 0.0));
        for k in &a.conv_layers {
            assert!(k.bias.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn init_respects_glorot_limits() {
        let cfg = tiny_cfg();
        let p = init_model(&cfg, 4, 3).unwrap();
        for k in &p.conv_layers {
            let limit = k.glorot_limit();
            assert!(k.weights.iter().all(|w| w.abs() <= limit));
        }
        let limit = (6.0 / ((cfg.conv_dim + cfg.dense_dim) as f64)).sqrt();
        assert!(p.dense_w.data().iter().all(|w| w.abs() <= limit));
        let limit = (6.0 / ((cfg.dense_dim + TAG_COUNT) as f64)).sqrt();
        assert!(p.out_w.data().iter().all(|w| w.abs() <= limit));
    }

    #[test]
    fn forward_outputs_valid_distributions() {
        let cfg = tiny_cfg();
        let table = tiny_table();
        let params = init_model(&cfg, table.dim(), 1).unwrap();
        let tokens = tokens_for("the wine list is nice .");
        let (dists, _) = forward(&params, &cfg, &table, &tokens, false, None).unwrap();
        assert_eq!(dists.len(), tokens.len());
        for d in &dists {
            let sum: f64 = d.q.iter().sum();
            assert!((sum - 1.0).abs() < 1e-9);
            assert!(d.q.iter().all(|&v| v > 0.0));
        }
    }

    #[test]
    fn single_token_sentence_works_via_padding() {
        let cfg = tiny_cfg();
        let table = tiny_table();
        let params = init_model(&cfg, table.dim(), 1).unwrap();
        let tokens = tokens_for("wine");
        let (dists, _) = forward(&params, &cfg, &table, &tokens, false, None).unwrap();
        assert_eq!(dists.len(), 1);
    }

    #[test]
    fn empty_sentence_is_contract_violation() {
        let cfg = tiny_cfg();
        let table = tiny_table();
        let params = init_model(&cfg, table.dim(), 1).unwrap();
        assert!(matches!(
            forward(&params, &cfg, &table, &[], false, None),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn inference_is_deterministic() {
        let cfg = ModelConfig {
            dropout_embed: 0.3,
            dropout_hidden: 0.5,
            ..tiny_cfg()
        };
        let table = tiny_table();
        let params = init_model(&cfg, table.dim(), 1).unwrap();
        let tokens = tokens_for("the food was good .");
        let (a, _) = forward(&params, &cfg, &table, &tokens, false, None).unwrap();
        let (b, _) = forward(&params, &cfg, &table, &tokens, false, None).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn train_forward_with_dropout_differs_and_needs_rng() {
        let cfg = ModelConfig {
            dropout_embed: 0.3,
            dropout_hidden: 0.5,
            ..tiny_cfg()
        };
        let table = tiny_table();
        let params = init_model(&cfg, table.dim(), 1).unwrap();
        let tokens = tokens_for("the food was good .");
        assert!(forward(&params, &cfg, &table, &tokens, true, None).is_err());
        let mut rng = substream(2, STREAM_DROPOUT);
        let (a, _) = forward(&params, &cfg, &table, &tokens, true, Some(&mut rng)).unwrap();
        let (b, _) = forward(&params, &cfg, &table, &tokens, false, None).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn vocabulary_permutation_leaves_outputs_unchanged() {
        // Lookup is by word, so reordering the table's entries must not
        // change anything.
        let cfg = tiny_cfg();
        let table = tiny_table();
        let mut entries: Vec<(String, Vec<f64>)> = table
            .vocab()
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), table.vector(i).to_vec()))
            .collect();
        entries.reverse();
        let permuted = EmbeddingTable::from_entries("en", table.dim(), entries).unwrap();
        let params = init_model(&cfg, table.dim(), 1).unwrap();
        let tokens = tokens_for("the wine list is nice .");
        let (a, _) = forward(&params, &cfg, &table, &tokens, false, None).unwrap();
        let (b, _) = forward(&params, &cfg, &permuted, &tokens, false, None).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn uniform_outputs_cost_ln3_per_token() {
        // Zeroed output layer makes every distribution uniform.
        let cfg = tiny_cfg();
        let table = tiny_table();
        let mut params = init_model(&cfg, table.dim(), 1).unwrap();
        params.out_w = Matrix::zeros(cfg.dense_dim, TAG_COUNT);
        params.out_b = vec![0.0; TAG_COUNT];
        let tokens = tokens_for("the wine list is nice food was good .");
        let gold: Vec<Tag> = vec![Tag::O; tokens.len()];
        let batch = [BatchItem {
            table: &table,
            tokens: &tokens,
            gold: &gold,
            id: "u",
        }];
        let (loss, _) = loss_and_gradients(&params, &cfg, &batch, false, None).unwrap();
        let l1 = cfg.l1_lambda * params.dense_w.data().iter().map(|w| w.abs()).sum::<f64>();
        assert!((loss - (3.0f64.ln() + l1)).abs() < 1e-9);
    }

    #[test]
    fn near_one_hot_outputs_leave_only_the_l1_term() {
        // Saturating the gold logit drives the cross-entropy toward zero,
        // leaving the L1 penalty as the whole loss.
        let cfg = tiny_cfg();
        let table = tiny_table();
        let mut params = init_model(&cfg, table.dim(), 1).unwrap();
        params.out_w = Matrix::zeros(cfg.dense_dim, TAG_COUNT);
        params.out_b = vec![50.0, 0.0, 0.0]; // all mass on I
        let tokens = tokens_for("wine list food");
        let gold = vec![Tag::I, Tag::I, Tag::I];
        let batch = [BatchItem {
            table: &table,
            tokens: &tokens,
            gold: &gold,
            id: "onehot",
        }];
        let (loss, _) = loss_and_gradients(&params, &cfg, &batch, false, None).unwrap();
        let l1 = cfg.l1_lambda * params.dense_w.data().iter().map(|w| w.abs()).sum::<f64>();
        assert!((loss - l1).abs() < 1e-12, "loss {loss} vs l1 {l1}");
    }

    #[test]
    fn gradients_match_finite_differences_end_to_end() {
        let cfg = tiny_cfg();
        let table = tiny_table();
        let params = init_model(&cfg, table.dim(), 5).unwrap();
        let tokens = tokens_for("wine list was good .");
        let gold = vec![Tag::I, Tag::I, Tag::O, Tag::O, Tag::O];
        let batch = [BatchItem {
            table: &table,
            tokens: &tokens,
            gold: &gold,
            id: "g",
        }];
        let err = check_model_gradients(&params, &cfg, &batch, 1).unwrap();
        assert!(err < 1e-4, "end-to-end gradient rel err {err}");
    }

    #[test]
    fn argmax_tie_breaks_follow_tag_order() {
        let d = TagDistribution {
            q: [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
        };
        assert_eq!(d.argmax(), Tag::O);
        let d = TagDistribution { q: [0.4, 0.4, 0.2] };
        assert_eq!(d.argmax(), Tag::O);
        let d = TagDistribution {
            q: [0.45, 0.4, 0.15],
        };
        assert_eq!(d.argmax(), Tag::I);
        let d = TagDistribution {
            q: [0.45, 0.1, 0.45],
        };
        assert_eq!(d.argmax(), Tag::I);
    }

    #[test]
    fn constant_logit_shift_leaves_predictions_unchanged() {
        let cfg = tiny_cfg();
        let table = tiny_table();
        let params = init_model(&cfg, table.dim(), 9).unwrap();
        let tokens = tokens_for("the wine list is nice food was good .");
        let base = predict_tags(&params, &cfg, &table, &tokens).unwrap();
        let mut shifted = params.clone();
        shifted.out_b.iter_mut().for_each(|b| *b += 13.7);
        let moved = predict_tags(&shifted, &cfg, &table, &tokens).unwrap();
        assert_eq!(base, moved);
    }

    #[test]
    fn all_o_prediction_yields_no_spans() {
        let cfg = tiny_cfg();
        let table = tiny_table();
        let mut params = init_model(&cfg, table.dim(), 1).unwrap();
        // Bias the output layer heavily toward O.
        params.out_w = Matrix::zeros(cfg.dense_dim, TAG_COUNT);
        params.out_b = vec![0.0, 10.0, 0.0];
        let sentence = Sentence {
            id: "s".into(),
            language: "en".into(),
            text: "the wine list is nice .".into(),
            tokens: tokens_for("the wine list is nice ."),
            targets: vec![],
        };
        let spans = predict_spans(&params, &cfg, &table, &sentence).unwrap();
        assert!(spans.is_empty());
    }

    #[test]
    fn fitted_model_extracts_wine_list_with_exact_offsets() {
        let cfg = tiny_cfg();
        let table = tiny_table();
        let mut params = init_model(&cfg, table.dim(), 3).unwrap();
        let mut states = optimizer_states(&params);
        let adam = AdamConfig {
            alpha: 0.02,
            ..AdamConfig::default()
        };
        let sentence = Sentence {
            id: "wine".into(),
            language: "en".into(),
            text: "The wine list is also really nice .".into(),
            tokens: tokens_for("The wine list is also really nice ."),
            targets: vec![],
        };
        let gold = vec![
            Tag::O,
            Tag::I,
            Tag::I,
            Tag::O,
            Tag::O,
            Tag::O,
            Tag::O,
            Tag::O,
        ];
        let batch = [BatchItem {
            table: &table,
            tokens: &sentence.tokens,
            gold: &gold,
            id: "wine",
        }];
        for _ in 0..120 {
            let (_, grads) = loss_and_gradients(&params, &cfg, &batch, false, None).unwrap();
            apply_adam(&mut params, &grads, &mut states, &adam).unwrap();
        }
        assert_eq!(
            predict_tags(&params, &cfg, &table, &sentence.tokens).unwrap(),
            gold
        );
        let spans = predict_spans(&params, &cfg, &table, &sentence).unwrap();
        assert_eq!(spans, vec![crate::iob::TargetSpan::new(4, 13, "wine list")]);
    }

    #[test]
    fn checkpoint_roundtrip_is_bit_identical() {
        let cfg = tiny_cfg();
        let params = init_model(&cfg, 4, 77).unwrap();
        let meta = vec![("seed".to_string(), "77".to_string())];
        let mut buf = Vec::new();
        save_checkpoint(&mut buf, &params, &cfg, &meta).unwrap();
        let ck = load_checkpoint(&mut buf.as_slice()).unwrap();
        assert_eq!(ck.params, params);
        assert_eq!(ck.config, cfg);
        assert_eq!(ck.metadata, meta);

        // Same bytes when saved again.
        let mut buf2 = Vec::new();
        save_checkpoint(&mut buf2, &ck.params, &ck.config, &ck.metadata).unwrap();
        assert_eq!(buf, buf2);
    }

    #[test]
    fn truncated_checkpoint_is_rejected() {
        let cfg = tiny_cfg();
        let params = init_model(&cfg, 4, 77).unwrap();
        let mut buf = Vec::new();
        save_checkpoint(&mut buf, &params, &cfg, &[]).unwrap();
        let cut = &buf[..buf.len() - 9];
        assert!(matches!(
            load_checkpoint(&mut &cut[..]),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn conflicting_config_is_rejected() {
        let cfg = tiny_cfg();
        let params = init_model(&cfg, 4, 77).unwrap();
        let mut buf = Vec::new();
        save_checkpoint(&mut buf, &params, &cfg, &[]).unwrap();
        let ck = load_checkpoint(&mut buf.as_slice()).unwrap();
        let other = ModelConfig {
            dense_dim: cfg.dense_dim + 1,
            ..cfg
        };
        assert!(ck.require_config(&other).is_err());
    }

    #[test]
    fn adam_on_model_reduces_loss() {
        let cfg = tiny_cfg();
        let table = tiny_table();
        let mut params = init_model(&cfg, table.dim(), 5).unwrap();
        let mut states = optimizer_states(&params);
        let adam = AdamConfig {
            alpha: 0.01,
            ..AdamConfig::default()
        };
        let tokens = tokens_for("wine list was good .");
        let gold = vec![Tag::I, Tag::I, Tag::O, Tag::O, Tag::O];
        let batch = [BatchItem {
            table: &table,
            tokens: &tokens,
            gold: &gold,
            id: "t",
        }];
        let (first, _) = loss_and_gradients(&params, &cfg, &batch, false, None).unwrap();
        for _ in 0..80 {
            let (_, grads) = loss_and_gradients(&params, &cfg, &batch, false, None).unwrap();
            apply_adam(&mut params, &grads, &mut states, &adam).unwrap();
        }
        let (last, _) = loss_and_gradients(&params, &cfg, &batch, false, None).unwrap();
        assert!(last < first * 0.2, "loss did not drop: {first} -> {last}");
    }
}
