//! Masked multi-head self-attention with a mean-pool classifier head and an
//! analytic backward pass.
//!
//! One layer maps `H (n × d_in)` to `LayerNorm(H + concat_h(P_h V_h) W_O)`,
//! where every head computes
//!
//! ```text
//! A = (Q Kᵀ ⊙ M) / √d_head,   P = row-softmax(A)
//! ```
//!
//! The mask is multiplicative: a zero entry sets the score to 0, not −∞.
//! The residual is skipped when the layer changes width (the first layer when
//! `input_dim != hidden_dim`). The layer norm has no learned gain or bias.
//! The same mask is shared by all heads and layers and is treated as a
//! constant by the backward pass.

use ndarray::{s, Array1, Array2, ArrayView1, Axis, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::sfmask::{self, MaskMode};

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Architecture and seed of a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub layers: usize,
    pub heads: usize,
    pub head_dim: usize,
    pub classes: usize,
    pub mask_mode: MaskMode,
    pub seed: u64,
}

impl ModelConfig {
    /// A config with `head_dim = hidden_dim / heads`.
    pub fn new(
        input_dim: usize,
        hidden_dim: usize,
        layers: usize,
        heads: usize,
        classes: usize,
    ) -> Self {
        ModelConfig {
            input_dim,
            hidden_dim,
            layers,
            heads,
            head_dim: hidden_dim.checked_div(heads).unwrap_or(0),
            classes,
            mask_mode: MaskMode::Full,
            seed: 0,
        }
    }

    pub fn with_mask_mode(mut self, mode: MaskMode) -> Self {
        self.mask_mode = mode;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.layers == 0 {
            return bad("at least one layer is required".into());
        }
        if self.input_dim == 0 || self.hidden_dim == 0 || self.heads == 0 || self.head_dim == 0 {
            return bad("dimensions and head count must be positive".into());
        }
        if self.heads * self.head_dim != self.hidden_dim {
            return bad(format!(
                "heads ({}) x head_dim ({}) must equal hidden_dim ({})",
                self.heads, self.head_dim, self.hidden_dim
            ));
        }
        if self.classes == 0 {
            return bad("at least one class is required".into());
        }
        Ok(())
    }

    /// Input and output width of layer `l`.
    pub fn layer_dims(&self, l: usize) -> (usize, usize) {
        if l == 0 {
            (self.input_dim, self.hidden_dim)
        } else {
            (self.hidden_dim, self.hidden_dim)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams {
    pub w_q: Array2<f64>,
    pub w_k: Array2<f64>,
    pub w_v: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub heads: Vec<HeadParams>,
    /// `(heads · head_dim) × d_out`.
    pub w_o: Array2<f64>,
}

/// All trainable weights. Gradients use the same type.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams {
    pub layers: Vec<LayerParams>,
    /// `hidden_dim × classes`.
    pub classifier: Array2<f64>,
    pub bias: Array1<f64>,
}

fn xavier(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    let a = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-a..=a))
}

/// Xavier-uniform initialization, deterministic in `cfg.seed`. The mask mode
/// does not influence the draw.
pub fn init_params(cfg: &ModelConfig) -> Result<AttentionParams> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let layers = (0..cfg.layers)
        .map(|l| {
            let (d_in, d_out) = cfg.layer_dims(l);
            let heads = (0..cfg.heads)
                .map(|_| HeadParams {
                    w_q: xavier(&mut rng, d_in, cfg.head_dim),
                    w_k: xavier(&mut rng, d_in, cfg.head_dim),
                    w_v: xavier(&mut rng, d_in, cfg.head_dim),
                })
                .collect();
            LayerParams {
                heads,
                w_o: xavier(&mut rng, cfg.heads * cfg.head_dim, d_out),
            }
        })
        .collect();
    Ok(AttentionParams {
        layers,
        classifier: xavier(&mut rng, cfg.hidden_dim, cfg.classes),
        bias: Array1::zeros(cfg.classes),
    })
}

impl AttentionParams {
    pub fn zeros_like(&self) -> Self {
        AttentionParams {
            layers: self
                .layers
                .iter()
                .map(|lp| LayerParams {
                    heads: lp
                        .heads
                        .iter()
                        .map(|h| HeadParams {
                            w_q: Array2::zeros(h.w_q.raw_dim()),
                            w_k: Array2::zeros(h.w_k.raw_dim()),
                            w_v: Array2::zeros(h.w_v.raw_dim()),
                        })
                        .collect(),
                    w_o: Array2::zeros(lp.w_o.raw_dim()),
                })
                .collect(),
            classifier: Array2::zeros(self.classifier.raw_dim()),
            bias: Array1::zeros(self.bias.raw_dim()),
        }
    }

    /// Every tensor with a stable name and shape, in checkpoint order.
    pub fn tensors(&self) -> Vec<(String, Vec<usize>, &[f64])> {
        let mut out = Vec::new();
        for (l, lp) in self.layers.iter().enumerate() {
            for (h, hp) in lp.heads.iter().enumerate() {
                for (tag, w) in [("w_q", &hp.w_q), ("w_k", &hp.w_k), ("w_v", &hp.w_v)] {
                    out.push((
                        format!("layer{l}.head{h}.{tag}"),
                        w.shape().to_vec(),
                        slice(w),
                    ));
                }
            }
            out.push((
                format!("layer{l}.w_o"),
                lp.w_o.shape().to_vec(),
                slice(&lp.w_o),
            ));
        }
        out.push((
            "classifier.weight".into(),
            self.classifier.shape().to_vec(),
            slice(&self.classifier),
        ));
        out.push((
            "classifier.bias".into(),
            self.bias.shape().to_vec(),
            self.bias.as_slice().expect("standard layout"),
        ));
        out
    }

    /// Mutable views of the tensors, same order as [`AttentionParams::tensors`].
    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for lp in &mut self.layers {
            for hp in &mut lp.heads {
                out.push(slice_mut(&mut hp.w_q));
                out.push(slice_mut(&mut hp.w_k));
                out.push(slice_mut(&mut hp.w_v));
            }
            out.push(slice_mut(&mut lp.w_o));
        }
        out.push(slice_mut(&mut self.classifier));
        out.push(self.bias.as_slice_mut().expect("standard layout"));
        out
    }

    /// `self += alpha · other`.
    pub fn scaled_add(&mut self, alpha: f64, other: &AttentionParams) {
        for (dst, src) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (d, s) in dst.iter_mut().zip(src.2) {
                *d += alpha * s;
            }
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.2.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|t| t.2.iter().all(|v| v.is_finite()))
    }

    /// Serializes weights and their config as one JSON document.
    pub fn to_checkpoint(&self, cfg: &ModelConfig) -> Checkpoint {
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            config: cfg.clone(),
            tensors: self
                .tensors()
                .into_iter()
                .map(|(name, shape, data)| TensorRecord {
                    name,
                    shape,
                    data: data.to_vec(),
                })
                .collect(),
        }
    }

    /// Restores weights from a checkpoint, checking names and shapes against
    /// a freshly initialized model of the stored config.
    pub fn from_checkpoint(ck: &Checkpoint) -> Result<(Self, ModelConfig)> {
        if ck.format != CHECKPOINT_FORMAT {
            return Err(Error::InvalidConfig(format!(
                "unsupported checkpoint format {:?}",
                ck.format
            )));
        }
        let mut params = init_params(&ck.config)?;
        let layout: Vec<(String, Vec<usize>)> = params
            .tensors()
            .into_iter()
            .map(|(n, s, _)| (n, s))
            .collect();
        if layout.len() != ck.tensors.len() {
            return Err(Error::shape(
                "checkpoint tensor count",
                layout.len(),
                ck.tensors.len(),
            ));
        }
        for (((name, shape), rec), dst) in layout.iter().zip(&ck.tensors).zip(params.tensors_mut())
        {
            if &rec.name != name || &rec.shape != shape || rec.data.len() != dst.len() {
                return Err(Error::InvalidConfig(format!(
                    "checkpoint tensor {:?} {:?} does not match expected {name:?} {shape:?}",
                    rec.name, rec.shape
                )));
            }
            dst.copy_from_slice(&rec.data);
        }
        Ok((params, ck.config.clone()))
    }
}

fn slice(a: &Array2<f64>) -> &[f64] {
    a.as_slice()
        .expect("parameters are stored in standard layout")
}

fn slice_mut(a: &mut Array2<f64>) -> &mut [f64] {
    a.as_slice_mut()
        .expect("parameters are stored in standard layout")
}

pub const CHECKPOINT_FORMAT: &str = "grafourier-params/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub config: ModelConfig,
    pub tensors: Vec<TensorRecord>,
}

fn check_layer(
    params: &AttentionParams,
    layer: usize,
    head: usize,
) -> Result<(&LayerParams, &HeadParams)> {
    let lp = params
        .layers
        .get(layer)
        .ok_or_else(|| Error::shape("layer index", params.layers.len(), layer))?;
    let hp = lp
        .heads
        .get(head)
        .ok_or_else(|| Error::shape("head index", lp.heads.len(), head))?;
    Ok((lp, hp))
}

/// `Q = X W_Q`, `K = X W_K`, `V = X W_V` for one head.
pub fn project_qkv(
    x: &Array2<f64>,
    params: &AttentionParams,
    layer: usize,
    head: usize,
) -> Result<(Array2<f64>, Array2<f64>, Array2<f64>)> {
    let (_, hp) = check_layer(params, layer, head)?;
    if x.ncols() != hp.w_q.nrows() {
        return Err(Error::shape("layer input width", hp.w_q.nrows(), x.ncols()));
    }
    Ok((x.dot(&hp.w_q), x.dot(&hp.w_k), x.dot(&hp.w_v)))
}

fn softmax_rows(a: &mut Array2<f64>) {
    for mut row in a.rows_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row /= sum;
    }
}

/// Single-head masked attention. Returns the output `P V` and the
/// row-stochastic attention matrix `P`.
pub fn masked_attention_forward(
    q: &Array2<f64>,
    k: &Array2<f64>,
    v: &Array2<f64>,
    mask: &Array2<f64>,
) -> Result<(Array2<f64>, Array2<f64>)> {
    let n = q.nrows();
    if k.dim() != q.dim() {
        return Err(Error::shape("key shape", q.dim(), k.dim()));
    }
    if v.nrows() != n {
        return Err(Error::shape("value rows", n, v.nrows()));
    }
    if mask.dim() != (n, n) {
        return Err(Error::shape("mask shape", (n, n), mask.dim()));
    }
    for (what, m) in [("query", q), ("key", k), ("value", v), ("mask", mask)] {
        if m.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(what));
        }
    }
    let scale = 1.0 / (q.ncols() as f64).sqrt();
    let mut scores = q.dot(&k.t());
    Zip::from(&mut scores)
        .and(mask)
        .for_each(|a, &m| *a = *a * m * scale);
    softmax_rows(&mut scores);
    Ok((scores.dot(v), scores))
}

struct HeadCache {
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    attn: Array2<f64>,
}

struct LayerCache {
    input: Array2<f64>,
    heads: Vec<HeadCache>,
    concat: Array2<f64>,
    normed: Array2<f64>,
    inv_std: Array1<f64>,
    residual: bool,
}

fn layer_norm_rows(r: &Array2<f64>) -> (Array2<f64>, Array1<f64>) {
    let mut y = r.clone();
    let mut inv_std = Array1::zeros(r.nrows());
    for (mut row, s) in y.rows_mut().into_iter().zip(inv_std.iter_mut()) {
        let d = row.len() as f64;
        let mean = row.sum() / d;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d;
        *s = 1.0 / (var + LAYER_NORM_EPS).sqrt();
        let inv = *s;
        row.mapv_inplace(|v| (v - mean) * inv);
    }
    (y, inv_std)
}

fn layer_forward(
    x: &Array2<f64>,
    params: &AttentionParams,
    layer: usize,
    mask: &Array2<f64>,
) -> Result<LayerCache> {
    let lp = &params.layers[layer];
    let mut heads = Vec::with_capacity(lp.heads.len());
    let mut blocks = Vec::with_capacity(lp.heads.len());
    for h in 0..lp.heads.len() {
        let (q, k, v) = project_qkv(x, params, layer, h)?;
        let (out, attn) = masked_attention_forward(&q, &k, &v, mask)?;
        blocks.push(out);
        heads.push(HeadCache { q, k, v, attn });
    }
    let views: Vec<_> = blocks.iter().map(|b| b.view()).collect();
    let concat = ndarray::concatenate(Axis(1), &views)
        .map_err(|_| Error::shape("head outputs", "equal row counts", "ragged"))?;
    if concat.ncols() != lp.w_o.nrows() {
        return Err(Error::shape(
            "output projection rows",
            lp.w_o.nrows(),
            concat.ncols(),
        ));
    }
    let mut r = concat.dot(&lp.w_o);
    let residual = x.ncols() == r.ncols();
    if residual {
        r += x;
    }
    let (normed, inv_std) = layer_norm_rows(&r);
    Ok(LayerCache {
        input: x.clone(),
        heads,
        concat,
        normed,
        inv_std,
        residual,
    })
}

/// One attention block: concatenated heads, `W_O`, residual, layer norm.
pub fn multi_head_forward(
    x: &Array2<f64>,
    params: &AttentionParams,
    layer: usize,
    mask: &Array2<f64>,
) -> Result<Array2<f64>> {
    check_layer(params, layer, 0)?;
    Ok(layer_forward(x, params, layer, mask)?.normed)
}

struct ForwardCache {
    layers: Vec<LayerCache>,
    pooled: Array1<f64>,
    logits: Array1<f64>,
}

fn check_config(
    x: &Array2<f64>,
    mask: &Array2<f64>,
    params: &AttentionParams,
    cfg: &ModelConfig,
) -> Result<()> {
    cfg.validate()?;
    if params.layers.len() != cfg.layers {
        return Err(Error::shape(
            "parameter layers",
            cfg.layers,
            params.layers.len(),
        ));
    }
    if params.classifier.dim() != (cfg.hidden_dim, cfg.classes) {
        return Err(Error::shape(
            "classifier shape",
            (cfg.hidden_dim, cfg.classes),
            params.classifier.dim(),
        ));
    }
    if x.ncols() != cfg.input_dim {
        return Err(Error::shape("feature width", cfg.input_dim, x.ncols()));
    }
    let n = x.nrows();
    if mask.dim() != (n, n) {
        return Err(Error::shape("mask shape", (n, n), mask.dim()));
    }
    Ok(())
}

fn forward_cached(
    x: &Array2<f64>,
    mask: &Array2<f64>,
    params: &AttentionParams,
    cfg: &ModelConfig,
) -> Result<ForwardCache> {
    check_config(x, mask, params, cfg)?;
    let mut layers: Vec<LayerCache> = Vec::with_capacity(cfg.layers);
    for l in 0..cfg.layers {
        let input = layers.last().map_or(x, |c| &c.normed);
        let cache = layer_forward(input, params, l, mask)?;
        layers.push(cache);
    }
    let last = &layers.last().expect("at least one layer").normed;
    let pooled = last
        .mean_axis(Axis(0))
        .expect("graphs have at least one node");
    let logits = pooled.dot(&params.classifier) + &params.bias;
    Ok(ForwardCache {
        layers,
        pooled,
        logits,
    })
}

/// Class logits for features `x` under a precomputed mask.
pub fn forward_with_mask(
    x: &Array2<f64>,
    mask: &Array2<f64>,
    params: &AttentionParams,
    cfg: &ModelConfig,
) -> Result<Array1<f64>> {
    Ok(forward_cached(x, mask, params, cfg)?.logits)
}

/// Class logits for graph `g`, building the mask from `x` under `cfg.mask_mode`.
pub fn model_forward(
    g: &Graph,
    x: &Array2<f64>,
    params: &AttentionParams,
    cfg: &ModelConfig,
) -> Result<Array1<f64>> {
    let mask = sfmask::build_mask(g, Some(x), cfg.mask_mode)?;
    forward_with_mask(x, &mask, params, cfg)
}

/// `log Σ exp(z) − z_target`.
pub fn cross_entropy(logits: ArrayView1<f64>, target: usize) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    lse - logits[target]
}

pub fn softmax(logits: ArrayView1<f64>) -> Array1<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e = logits.mapv(|z| (z - max).exp());
    let sum = e.sum();
    e / sum
}

/// Result of a forward and backward pass on one graph.
#[derive(Debug, Clone)]
pub struct LossAndGrad {
    pub loss: f64,
    pub logits: Array1<f64>,
    pub grad: AttentionParams,
}

/// Cross-entropy loss and its gradient with respect to every parameter, for a
/// precomputed (constant) mask.
pub fn loss_and_grad(
    x: &Array2<f64>,
    mask: &Array2<f64>,
    params: &AttentionParams,
    cfg: &ModelConfig,
    target: usize,
) -> Result<LossAndGrad> {
    if target >= cfg.classes {
        return Err(Error::shape(
            "target class",
            format!("< {}", cfg.classes),
            target,
        ));
    }
    let cache = forward_cached(x, mask, params, cfg)?;
    let loss = cross_entropy(cache.logits.view(), target);
    let mut grad = params.zeros_like();

    let mut d_logits = softmax(cache.logits.view());
    d_logits[target] -= 1.0;
    grad.bias.assign(&d_logits);
    grad.classifier = outer(&cache.pooled, &d_logits);
    let d_pooled = params.classifier.dot(&d_logits);

    let n = x.nrows() as f64;
    let last = cache.layers.last().expect("at least one layer");
    let mut d_h = Array2::from_shape_fn(last.normed.raw_dim(), |(_, c)| d_pooled[c] / n);

    for (l, lc) in cache.layers.iter().enumerate().rev() {
        d_h = layer_backward(lc, &params.layers[l], &mut grad.layers[l], &d_h, mask);
    }
    Ok(LossAndGrad {
        loss,
        logits: cache.logits,
        grad,
    })
}

fn outer(a: &Array1<f64>, b: &Array1<f64>) -> Array2<f64> {
    Array2::from_shape_fn((a.len(), b.len()), |(i, j)| a[i] * b[j])
}

/// Propagates `d_out` through one block, accumulating weight gradients, and
/// returns the gradient with respect to the block input.
fn layer_backward(
    lc: &LayerCache,
    lp: &LayerParams,
    g: &mut LayerParams,
    d_out: &Array2<f64>,
    mask: &Array2<f64>,
) -> Array2<f64> {
    // layer norm
    let mut d_r = Array2::zeros(d_out.raw_dim());
    for (((mut dr, dy), y), &inv) in d_r
        .rows_mut()
        .into_iter()
        .zip(d_out.rows())
        .zip(lc.normed.rows())
        .zip(&lc.inv_std)
    {
        let d = dy.len() as f64;
        let mean_dy = dy.sum() / d;
        let mean_dy_y = dy.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() / d;
        Zip::from(&mut dr)
            .and(dy)
            .and(y)
            .for_each(|r, &a, &b| *r = inv * (a - mean_dy - b * mean_dy_y));
    }

    g.w_o = lc.concat.t().dot(&d_r);
    let d_concat = d_r.dot(&lp.w_o.t());
    let mut d_x = if lc.residual {
        d_r
    } else {
        Array2::zeros(lc.input.raw_dim())
    };

    let head_dim = lp.heads[0].w_q.ncols();
    let scale = 1.0 / (head_dim as f64).sqrt();
    for (h, (hc, hp)) in lc.heads.iter().zip(&lp.heads).enumerate() {
        let d_o = d_concat.slice(s![.., h * head_dim..(h + 1) * head_dim]);
        let d_p = d_o.dot(&hc.v.t());
        let d_v = hc.attn.t().dot(&d_o);
        // softmax Jacobian, row by row
        let mut d_a = hc.attn.clone();
        for (mut row, dp) in d_a.rows_mut().into_iter().zip(d_p.rows()) {
            let dot: f64 = row.iter().zip(dp).map(|(p, d)| p * d).sum();
            Zip::from(&mut row).and(dp).for_each(|p, &d| *p *= d - dot);
        }
        Zip::from(&mut d_a)
            .and(mask)
            .for_each(|a, &m| *a *= m * scale);
        let d_q = d_a.dot(&hc.k);
        let d_k = d_a.t().dot(&hc.q);

        let gh = &mut g.heads[h];
        gh.w_q = lc.input.t().dot(&d_q);
        gh.w_k = lc.input.t().dot(&d_k);
        gh.w_v = lc.input.t().dot(&d_v);
        d_x += &d_q.dot(&hp.w_q.t());
        d_x += &d_k.dot(&hp.w_k.t());
        d_x += &d_v.dot(&hp.w_v.t());
    }
    d_x
}

/// Gradient of the cross-entropy loss on graph `g` with target class `target`.
pub fn backward(
    g: &Graph,
    x: &Array2<f64>,
    params: &AttentionParams,
    cfg: &ModelConfig,
    target: usize,
) -> Result<LossAndGrad> {
    let mask = sfmask::build_mask(g, Some(x), cfg.mask_mode)?;
    loss_and_grad(x, &mask, params, cfg, target)
}
