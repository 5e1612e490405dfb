//! Forward-only reference of the dense cross-modal fusion block.
//!
//! Two flattened feature sequences (color `H·W × C`, geometry `N × C`) exchange
//! a single global vector each via pooled-query multi-head cross-attention, are
//! concatenated into one `(H·W + N) × C` sequence, run through pre-norm
//! transformer layers with a learned positional embedding, and are split back
//! in their original order.
//!
//! This is a small-scale math reference (C ≤ 64, L ≤ 1024), row-vector
//! convention throughout: a sequence is `L × C` and projections multiply on the
//! right.

use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_CHANNELS: usize = 64;
pub const MAX_SEQUENCE: usize = 1024;
/// MLP hidden width as a multiple of the channel count.
pub const MLP_EXPANSION: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Rgb { height: usize, width: usize },
    Geometry { points: usize },
    /// Color block first, then geometry block.
    Fused { rgb_len: usize, geo_len: usize },
}

impl Modality {
    fn expected_len(&self) -> usize {
        match *self {
            Modality::Rgb { height, width } => height * width,
            Modality::Geometry { points } => points,
            Modality::Fused { rgb_len, geo_len } => rgb_len + geo_len,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureSequence {
    data: Array2<f64>,
    modality: Modality,
}

impl FeatureSequence {
    pub fn new(data: Array2<f64>, modality: Modality) -> Result<Self> {
        let (l, c) = data.dim();
        if l != modality.expected_len() {
            return Err(Error::Shape(format!(
                "{modality:?} expects {} tokens, got {l}",
                modality.expected_len()
            )));
        }
        if l == 0 || c == 0 {
            return Err(Error::Shape("empty feature sequence".into()));
        }
        if l > MAX_SEQUENCE || c > MAX_CHANNELS {
            return Err(Error::Shape(format!(
                "{l}×{c} exceeds the {MAX_SEQUENCE}×{MAX_CHANNELS} reference limit"
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite feature".into()));
        }
        Ok(FeatureSequence { data, modality })
    }

    pub fn rgb(data: Array2<f64>, height: usize, width: usize) -> Result<Self> {
        Self::new(data, Modality::Rgb { height, width })
    }

    pub fn geometry(data: Array2<f64>) -> Result<Self> {
        let points = data.nrows();
        Self::new(data, Modality::Geometry { points })
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn modality(&self) -> Modality {
        self.modality
    }

    pub fn len(&self) -> usize {
        self.data.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.data.nrows() == 0
    }

    pub fn channels(&self) -> usize {
        self.data.ncols()
    }
}

/// Projections for one multi-head attention unit (query, key, value, output).
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionWeights {
    pub w_q: Array2<f64>,
    pub w_k: Array2<f64>,
    pub w_v: Array2<f64>,
    pub w_o: Array2<f64>,
    pub heads: usize,
}

impl AttentionWeights {
    pub fn new(w_q: Array2<f64>, w_k: Array2<f64>, w_v: Array2<f64>, w_o: Array2<f64>, heads: usize) -> Result<Self> {
        let w = AttentionWeights { w_q, w_k, w_v, w_o, heads };
        w.validate()?;
        Ok(w)
    }

    /// Entries uniform in `±scale`.
    pub fn random(channels: usize, heads: usize, scale: f64, rng: &mut impl Rng) -> Result<Self> {
        let mut m = || random_matrix(channels, channels, scale, rng);
        Self::new(m(), m(), m(), m(), heads)
    }

    pub fn identity(channels: usize, heads: usize) -> Result<Self> {
        let i = Array2::eye(channels);
        Self::new(i.clone(), i.clone(), i.clone(), i, heads)
    }

    /// Same projections with a zero output matrix, so the unit contributes nothing.
    pub fn with_zero_output(mut self) -> Self {
        self.w_o.fill(0.0);
        self
    }

    pub fn channels(&self) -> usize {
        self.w_q.nrows()
    }

    pub fn head_dim(&self) -> usize {
        self.channels() / self.heads
    }

    fn validate(&self) -> Result<()> {
        let c = self.w_q.nrows();
        for (name, m) in [("w_q", &self.w_q), ("w_k", &self.w_k), ("w_v", &self.w_v), ("w_o", &self.w_o)] {
            if m.dim() != (c, c) {
                return Err(Error::Shape(format!("{name} is {:?}, expected ({c}, {c})", m.dim())));
            }
        }
        if self.heads == 0 || !c.is_multiple_of(self.heads) {
            return Err(Error::Shape(format!("{} heads do not divide {c} channels", self.heads)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerNorm {
    pub scale: Array1<f64>,
    pub shift: Array1<f64>,
    pub eps: f64,
}

impl LayerNorm {
    pub const DEFAULT_EPS: f64 = 1e-12;

    pub fn identity(channels: usize) -> Self {
        LayerNorm {
            scale: Array1::ones(channels),
            shift: Array1::zeros(channels),
            eps: Self::DEFAULT_EPS,
        }
    }
}

/// Two-layer perceptron `gelu(x W1 + b1) W2 + b2`.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

impl Mlp {
    pub fn random(channels: usize, scale: f64, rng: &mut impl Rng) -> Self {
        let hidden = MLP_EXPANSION * channels;
        Mlp {
            w1: random_matrix(channels, hidden, scale, rng),
            b1: Array1::from_iter((0..hidden).map(|_| rng.random_range(-scale..scale))),
            w2: random_matrix(hidden, channels, scale, rng),
            b2: Array1::from_iter((0..channels).map(|_| rng.random_range(-scale..scale))),
        }
    }

    pub fn with_zero_output(mut self) -> Self {
        self.w2.fill(0.0);
        self.b2.fill(0.0);
        self
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TransformerLayerWeights {
    pub attention: AttentionWeights,
    pub norm_attention: LayerNorm,
    pub norm_mlp: LayerNorm,
    pub mlp: Mlp,
    /// Added to the input before the layer; only the first layer of a block carries one.
    pub positional: Option<Array2<f64>>,
}

impl TransformerLayerWeights {
    pub fn random(channels: usize, heads: usize, seq_len: Option<usize>, scale: f64, rng: &mut impl Rng) -> Result<Self> {
        let attention = AttentionWeights::random(channels, heads, scale, rng)?;
        let mlp = Mlp::random(channels, scale, rng);
        let positional = seq_len.map(|l| random_matrix(l, channels, scale, rng));
        Ok(TransformerLayerWeights {
            attention,
            norm_attention: LayerNorm::identity(channels),
            norm_mlp: LayerNorm::identity(channels),
            mlp,
            positional,
        })
    }

    /// Both residual branches produce zero.
    pub fn with_zero_updates(mut self) -> Self {
        self.attention = self.attention.with_zero_output();
        self.mlp = self.mlp.with_zero_output();
        self
    }
}

/// Weights for a full fusion block.
#[derive(Clone, Debug, PartialEq)]
pub struct FusionBlockWeights {
    /// Geometry-pooled query attending to color tokens; updates the color block.
    pub geo_to_rgb: AttentionWeights,
    /// Color-pooled query attending to geometry tokens; updates the geometry block.
    pub rgb_to_geo: AttentionWeights,
    pub layers: Vec<TransformerLayerWeights>,
}

fn random_matrix(rows: usize, cols: usize, scale: f64, rng: &mut impl Rng) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-scale..scale))
}

/// Row-wise softmax, numerically stabilized by the row maximum.
pub fn softmax_rows(scores: &Array2<f64>) -> Array2<f64> {
    let mut out = scores.clone();
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
        debug_assert!((row.sum() - 1.0).abs() <= 1e-6);
    }
    out
}

/// Column-wise maximum over the sequence (`1 × C`).
pub fn pooled_query(features: &FeatureSequence) -> Result<Array2<f64>> {
    pool_max(features.data.view())
}

fn pool_max(data: ArrayView2<f64>) -> Result<Array2<f64>> {
    if data.nrows() == 0 {
        return Err(Error::Shape("cannot pool an empty sequence".into()));
    }
    let pooled = data.fold_axis(Axis(0), f64::NEG_INFINITY, |a, &b| a.max(b));
    Ok(pooled.insert_axis(Axis(0)))
}

/// Scaled dot-product multi-head attention of `queries` against `keys_values`
/// (already in the input space; projections happen here). Also returns the
/// per-head attention matrices.
fn multi_head_attention(
    queries: ArrayView2<f64>,
    keys_values: ArrayView2<f64>,
    weights: &AttentionWeights,
) -> Result<(Array2<f64>, Vec<Array2<f64>>)> {
    weights.validate()?;
    let c = weights.channels();
    if queries.ncols() != c || keys_values.ncols() != c {
        return Err(Error::Shape(format!(
            "features have {} / {} channels, weights expect {c}",
            queries.ncols(),
            keys_values.ncols()
        )));
    }
    let q = queries.dot(&weights.w_q);
    let k = keys_values.dot(&weights.w_k);
    let v = keys_values.dot(&weights.w_v);
    let dk = weights.head_dim();
    let scale = 1.0 / (dk as f64).sqrt();
    let mut heads = Vec::with_capacity(weights.heads);
    let mut attn = Vec::with_capacity(weights.heads);
    for h in 0..weights.heads {
        let cols = s![.., h * dk..(h + 1) * dk];
        let scores = q.slice(cols).dot(&k.slice(cols).t()) * scale;
        let probs = softmax_rows(&scores);
        heads.push(probs.dot(&v.slice(cols)));
        attn.push(probs);
    }
    let views: Vec<_> = heads.iter().map(|h| h.view()).collect();
    let concat = concatenate(Axis(1), &views).expect("head blocks share row count");
    Ok((concat.dot(&weights.w_o), attn))
}

/// Pooled-query cross-attention: the max-pooled `query_source` attends over
/// every token of `kv_source`, producing one `1 × C` global vector.
pub fn cross_attention(
    query_source: &FeatureSequence,
    kv_source: &FeatureSequence,
    weights: &AttentionWeights,
) -> Result<Array2<f64>> {
    let pooled = pooled_query(query_source)?;
    multi_head_attention(pooled.view(), kv_source.data.view(), weights).map(|(out, _)| out)
}

/// Per-head attention matrices of a cross-attention call (for inspection).
pub fn cross_attention_weights(
    query_source: &FeatureSequence,
    kv_source: &FeatureSequence,
    weights: &AttentionWeights,
) -> Result<Vec<Array2<f64>>> {
    let pooled = pooled_query(query_source)?;
    multi_head_attention(pooled.view(), kv_source.data.view(), weights).map(|(_, a)| a)
}

/// Adds the geometry→color global vector to every color token and the
/// color→geometry vector to every geometry token, then stacks color tokens
/// followed by geometry tokens.
pub fn fuse_bidirectional(
    rgb: &FeatureSequence,
    geo: &FeatureSequence,
    w_rgb_to_geo: &AttentionWeights,
    w_geo_to_rgb: &AttentionWeights,
) -> Result<FeatureSequence> {
    if rgb.channels() != geo.channels() {
        return Err(Error::Shape(format!(
            "color has {} channels, geometry has {}",
            rgb.channels(),
            geo.channels()
        )));
    }
    let to_rgb = cross_attention(geo, rgb, w_geo_to_rgb)?;
    let to_geo = cross_attention(rgb, geo, w_rgb_to_geo)?;
    let rgb_block = &rgb.data + &to_rgb;
    let geo_block = &geo.data + &to_geo;
    let fused = concatenate(Axis(0), &[rgb_block.view(), geo_block.view()])
        .expect("blocks share channel count");
    FeatureSequence::new(
        fused,
        Modality::Fused {
            rgb_len: rgb.len(),
            geo_len: geo.len(),
        },
    )
}

/// Row-wise layer normalization followed by the affine scale and shift.
pub fn layer_norm(x: &Array2<f64>, norm: &LayerNorm) -> Result<Array2<f64>> {
    let c = x.ncols();
    if norm.scale.len() != c || norm.shift.len() != c {
        return Err(Error::Shape("layer norm parameters do not match channels".into()));
    }
    let mut out = x.clone();
    for mut row in out.rows_mut() {
        let mean = row.sum() / c as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / c as f64;
        let inv = 1.0 / (var + norm.eps).sqrt();
        row.mapv_inplace(|v| (v - mean) * inv);
    }
    Ok(out * &norm.scale + &norm.shift)
}

/// Gaussian error linear unit, `x Φ(x)`.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

fn mlp_forward(x: &Array2<f64>, mlp: &Mlp) -> Result<Array2<f64>> {
    let c = x.ncols();
    if mlp.w1.nrows() != c || mlp.w2.ncols() != c || mlp.w1.ncols() != mlp.w2.nrows() {
        return Err(Error::Shape("MLP weights do not match channels".into()));
    }
    let hidden = (x.dot(&mlp.w1) + &mlp.b1).mapv(gelu);
    Ok(hidden.dot(&mlp.w2) + &mlp.b2)
}

/// Multi-head self-attention over the whole sequence.
pub fn self_attention(x: &Array2<f64>, weights: &AttentionWeights) -> Result<Array2<f64>> {
    multi_head_attention(x.view(), x.view(), weights).map(|(out, _)| out)
}

/// One pre-norm transformer layer:
/// `x' = MSA(LN(x₀)) + x₀`, `y = MLP(LN(x')) + x'`, where `x₀` is the input
/// plus the positional embedding when the layer carries one.
pub fn transformer_layer(seq: &FeatureSequence, weights: &TransformerLayerWeights) -> Result<FeatureSequence> {
    let mut x0 = seq.data.clone();
    if let Some(pos) = &weights.positional {
        if pos.dim() != x0.dim() {
            return Err(Error::Shape(format!(
                "positional embedding is {:?}, sequence is {:?}",
                pos.dim(),
                x0.dim()
            )));
        }
        x0 += pos;
    }
    let attended = self_attention(&layer_norm(&x0, &weights.norm_attention)?, &weights.attention)?;
    let x1 = attended + &x0;
    let out = mlp_forward(&layer_norm(&x1, &weights.norm_mlp)?, &weights.mlp)? + &x1;
    FeatureSequence::new(out, seq.modality)
}

/// Splits a fused sequence back into its color and geometry blocks.
pub fn split_fused(seq: &FeatureSequence) -> Result<(FeatureSequence, FeatureSequence)> {
    let Modality::Fused { rgb_len, geo_len } = seq.modality else {
        return Err(Error::InvalidInput("sequence carries no fused block layout".into()));
    };
    let rgb = seq.data.slice(s![..rgb_len, ..]).to_owned();
    let geo = seq.data.slice(s![rgb_len..rgb_len + geo_len, ..]).to_owned();
    Ok((
        // The color block's 2D shape is not needed downstream; keep it flat.
        FeatureSequence::new(rgb, Modality::Rgb { height: 1, width: rgb_len })?,
        FeatureSequence::new(geo, Modality::Geometry { points: geo_len })?,
    ))
}

/// Fuse, run the transformer layers, split.
pub fn fusion_block(
    rgb: &FeatureSequence,
    geo: &FeatureSequence,
    weights: &FusionBlockWeights,
) -> Result<(FeatureSequence, FeatureSequence)> {
    let mut seq = fuse_bidirectional(rgb, geo, &weights.rgb_to_geo, &weights.geo_to_rgb)?;
    for layer in &weights.layers {
        seq = transformer_layer(&seq, layer)?;
    }
    let (r, g) = split_fused(&seq)?;
    // Restore the caller's color layout.
    Ok((FeatureSequence::new(r.data, rgb.modality)?, g))
}
