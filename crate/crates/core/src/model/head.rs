//! Forward pass of the binaural prediction head.
//!
//! Per channel: time-averaged downsampling, a shared input projection with
//! learned frame positions, CLS attention pooling over time (independently
//! for each backbone layer), an appended audiogram embedding, CLS attention
//! pooling over layers. Each pooling transformer is built from binaural
//! blocks in which a channel cross-attends to the opposite channel. The two
//! channel summaries are averaged, projected to one logit and mapped to
//! `(0, 100)` with a scaled sigmoid.

use crate::autodiff::{Graph, Var};
use crate::data::Audiogram;
use crate::error::{Error, Result};
use crate::model::params::{AttentionVars, BlockVars, HeadVars, NormVars};
use crate::model::{HeadConfig, HeadParams};
use crate::rng::RngStream;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Channel {
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stage {
    Temporal { layer: usize },
    Layer,
}

/// Location of one cross-attention sub-layer invocation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CrossSite {
    pub stage: Stage,
    pub block: usize,
    /// Channel whose queries attend to the opposite channel.
    pub channel: Channel,
}

/// Rewrites the opposite-channel sequence entering a cross-attention
/// sub-layer. Used to probe inter-channel information flow.
pub type CrossHook<'a, T> = &'a dyn Fn(CrossSite, &Tensor<T>) -> Tensor<T>;

/// Two feature tensors `[L × t × d]` plus per-ear audiograms.
#[derive(Debug, Clone, PartialEq)]
pub struct BinauralInput<T> {
    pub left: Tensor<T>,
    pub right: Tensor<T>,
    pub audiogram_left: Audiogram,
    pub audiogram_right: Audiogram,
}

impl<T: Scalar> BinauralInput<T> {
    pub fn new(
        left: Tensor<T>,
        right: Tensor<T>,
        audiogram_left: Audiogram,
        audiogram_right: Audiogram,
    ) -> Result<Self> {
        if left.rank() != 3 {
            return Err(Error::Validation(format!(
                "feature tensors must be L×t×d, got shape {:?}",
                left.shape()
            )));
        }
        if left.shape() != right.shape() {
            return Err(Error::shape("binaural input", left.shape(), right.shape()));
        }
        Ok(BinauralInput {
            left,
            right,
            audiogram_left,
            audiogram_right,
        })
    }

    /// Both channels share one audiogram.
    pub fn with_shared_audiogram(left: Tensor<T>, right: Tensor<T>, audiogram: Audiogram) -> Result<Self> {
        Self::new(left, right, audiogram, audiogram)
    }

    /// Left and right exchanged, features and audiograms together.
    pub fn swapped(&self) -> Self {
        BinauralInput {
            left: self.right.clone(),
            right: self.left.clone(),
            audiogram_left: self.audiogram_right,
            audiogram_right: self.audiogram_left,
        }
    }

    /// Applies [`downsample_time`] to both channels.
    pub fn downsampled(&self, factor: usize) -> Result<Self> {
        Ok(BinauralInput {
            left: downsample_time(&self.left, factor)?,
            right: downsample_time(&self.right, factor)?,
            audiogram_left: self.audiogram_left,
            audiogram_right: self.audiogram_right,
        })
    }
}

/// Averages non-overlapping windows of `factor` frames along the time axis
/// of an `[L × t × d]` tensor. A trailing partial window is averaged over its
/// actual length.
pub fn downsample_time<T: Scalar>(x: &Tensor<T>, factor: usize) -> Result<Tensor<T>> {
    if factor < 1 {
        return Err(Error::Config("downsample factor must be at least 1".into()));
    }
    let &[layers, t, d] = x.shape() else {
        return Err(Error::Validation(format!(
            "feature tensors must be L×t×d, got shape {:?}",
            x.shape()
        )));
    };
    let out_t = t.div_ceil(factor);
    let mut out = Vec::with_capacity(layers * out_t * d);
    let src = x.data();
    for l in 0..layers {
        for j in 0..out_t {
            let start = j * factor;
            let end = ((j + 1) * factor).min(t);
            let mut acc = vec![T::zero(); d];
            for f in start..end {
                let row = &src[(l * t + f) * d..(l * t + f + 1) * d];
                for (a, &v) in acc.iter_mut().zip(row) {
                    *a += v;
                }
            }
            let inv = T::one() / T::lit((end - start) as f64);
            out.extend(acc.into_iter().map(|v| v * inv));
        }
    }
    Tensor::new(vec![layers, out_t, d], out)
}

/// Dropout applied inside transformer blocks; identity without a stream.
pub struct Dropout<'a> {
    p: f64,
    rng: Option<&'a mut RngStream>,
}

impl<'a> Dropout<'a> {
    pub fn disabled() -> Self {
        Dropout { p: 0.0, rng: None }
    }

    pub fn new(p: f64, rng: &'a mut RngStream) -> Self {
        Dropout { p, rng: Some(rng) }
    }

    pub fn apply<'g, T: Scalar>(&mut self, x: Var<'g, T>) -> Result<Var<'g, T>> {
        match self.rng.as_deref_mut() {
            Some(rng) => x.dropout(self.p, true, rng),
            None => Ok(x),
        }
    }
}

/// Multi-head scaled dot-product attention with queries from `query_in`
/// `[s × P]` and keys/values from `kv_in` `[s' × P]`. When `weights` is given,
/// each head's `[s × s']` attention matrix is pushed onto it.
pub fn multi_head_attention<'g, T: Scalar>(
    query_in: Var<'g, T>,
    kv_in: Var<'g, T>,
    attn: &AttentionVars<'g, T>,
    heads: usize,
    dropout: &mut Dropout<'_>,
    mut weights: Option<&mut Vec<Tensor<T>>>,
) -> Result<Var<'g, T>> {
    let width = *query_in.shape().last().unwrap_or(&0);
    if kv_in.shape().last() != Some(&width) {
        return Err(Error::shape("attention", &query_in.shape(), &kv_in.shape()));
    }
    let head_dim = width / heads;
    let q = query_in.linear(attn.wq, attn.bq)?;
    let k = kv_in.linear(attn.wk, attn.bk)?;
    let v = kv_in.linear(attn.wv, attn.bv)?;
    let scale = T::one() / T::lit(head_dim as f64).sqrt();
    let mut outputs = Vec::with_capacity(heads);
    for h in 0..heads {
        let qh = q.slice(1, h * head_dim, head_dim)?;
        let kh = k.slice(1, h * head_dim, head_dim)?;
        let vh = v.slice(1, h * head_dim, head_dim)?;
        let probs = qh.matmul(kh.transpose()?)?.scale(scale).softmax(1)?;
        if let Some(w) = weights.as_deref_mut() {
            w.push(probs.value().clone());
        }
        let probs = dropout.apply(probs)?;
        outputs.push(probs.matmul(vh)?);
    }
    let merged = if heads == 1 {
        outputs[0]
    } else {
        Var::concat(&outputs, 1)?
    };
    merged.linear(attn.wo, attn.bo)
}

fn norm<'g, T: Scalar>(x: Var<'g, T>, n: &NormVars<'g, T>, eps: T) -> Result<Var<'g, T>> {
    x.layer_norm(n.gain, n.bias, eps)
}

/// Shapes of the intermediate tensors of one forward pass (per channel).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ShapeTrace {
    pub downsampled: Vec<usize>,
    pub projected: Vec<usize>,
    pub temporal_pooled: Vec<usize>,
    pub with_audiogram: Vec<usize>,
    pub pooled: Vec<usize>,
}

/// Result of a full forward pass.
pub struct HeadOutput<'g, T> {
    pub logit: Var<'g, T>,
    /// `sigmoid(logit)`, the prediction on the `[0, 1]` scale.
    pub probability: Var<'g, T>,
    pub left: Var<'g, T>,
    pub right: Var<'g, T>,
}

impl<T: Scalar> HeadOutput<'_, T> {
    /// Predicted correctness in `(0, 100)`.
    pub fn prediction(&self) -> T {
        self.probability.value().item() * T::lit(100.0)
    }
}

/// One forward pass of the head over bound parameters.
pub struct HeadPass<'g, 'a, T> {
    config: &'a HeadConfig,
    vars: &'a HeadVars<'g, T>,
    dropout: Dropout<'a>,
    cross_hook: Option<CrossHook<'a, T>>,
    pub trace: ShapeTrace,
}

impl<'g, 'a, T: Scalar> HeadPass<'g, 'a, T> {
    /// `rng` drives dropout in [`Mode::Train`] and is ignored in
    /// [`Mode::Eval`].
    pub fn new(
        config: &'a HeadConfig,
        vars: &'a HeadVars<'g, T>,
        mode: Mode,
        rng: &'a mut RngStream,
    ) -> Self {
        let dropout = match mode {
            Mode::Train => Dropout::new(config.dropout_p, rng),
            Mode::Eval => Dropout::disabled(),
        };
        HeadPass {
            config,
            vars,
            dropout,
            cross_hook: None,
            trace: ShapeTrace::default(),
        }
    }

    pub fn with_cross_hook(mut self, hook: CrossHook<'a, T>) -> Self {
        self.cross_hook = Some(hook);
        self
    }

    fn graph(&self) -> &'g Graph<T> {
        self.vars.input_proj.graph()
    }

    fn eps(&self) -> T {
        T::lit(self.config.layer_norm_eps)
    }

    /// Projects each layer of a downsampled `[L × t' × d]` tensor to
    /// `[t' × P]` with the shared input projection and adds frame positions.
    pub fn project(&mut self, x: &Tensor<T>) -> Result<Vec<Var<'g, T>>> {
        let &[layers, frames, dim] = x.shape() else {
            return Err(Error::Validation(format!(
                "feature tensors must be L×t×d, got shape {:?}",
                x.shape()
            )));
        };
        if dim != self.config.feature_dim || layers != self.config.num_layers {
            return Err(Error::shape(
                "head input",
                x.shape(),
                &[self.config.num_layers, frames, self.config.feature_dim],
            ));
        }
        if frames > self.config.max_frames {
            return Err(Error::Validation(format!(
                "{frames} downsampled frames exceed the position table size {}",
                self.config.max_frames
            )));
        }
        let flat = x.clone().reshape(vec![layers * frames, dim])?;
        let projected = self.graph().constant(flat).matmul(self.vars.input_proj)?;
        let positions = self.vars.temporal_positions.slice(0, 0, frames)?;
        self.trace.projected = vec![layers, frames, self.config.proj_dim];
        (0..layers)
            .map(|l| projected.slice(0, l * frames, frames)?.add(positions))
            .collect()
    }

    /// Pre-norm block: self-attention, cross-attention to `x_other` (unless
    /// disabled), feed-forward; each sub-layer residual.
    pub fn binaural_block(
        &mut self,
        block: &BlockVars<'g, T>,
        x_self: Var<'g, T>,
        x_other: Var<'g, T>,
        site: CrossSite,
    ) -> Result<Var<'g, T>> {
        if x_self.shape() != x_other.shape() {
            return Err(Error::shape("binaural block", &x_self.shape(), &x_other.shape()));
        }
        let eps = self.eps();
        let heads = self.config.heads;

        let h = norm(x_self, &block.norm_self, eps)?;
        let attended = multi_head_attention(h, h, &block.self_attn, heads, &mut self.dropout, None)?;
        let mut x = x_self.add(self.dropout.apply(attended)?)?;

        // The hook sees every cross site, also in the ablated model, where
        // its output is discarded.
        let other = match self.cross_hook {
            Some(hook) => {
                let rewritten = hook(site, &x_other.value());
                self.graph().constant(rewritten)
            }
            None => x_other,
        };
        if let (true, Some((norm_cross, cross_attn))) =
            (self.config.binaural_cross_attention, &block.cross)
        {
            let q = norm(x, norm_cross, eps)?;
            let kv = norm(other, norm_cross, eps)?;
            let attended = multi_head_attention(q, kv, cross_attn, heads, &mut self.dropout, None)?;
            x = x.add(self.dropout.apply(attended)?)?;
        }

        let h = norm(x, &block.norm_ffn, eps)?;
        let hidden = h.linear(block.ffn.w1, block.ffn.b1)?.gelu();
        let hidden = self.dropout.apply(hidden)?;
        let out = hidden.linear(block.ffn.w2, block.ffn.b2)?;
        x.add(self.dropout.apply(out)?)
    }

    /// Runs a stack of binaural blocks over CLS-prefixed sequences and
    /// returns each channel's CLS state `[1 × P]`.
    fn pool_pair(
        &mut self,
        blocks: &[BlockVars<'g, T>],
        cls: Var<'g, T>,
        left: Var<'g, T>,
        right: Var<'g, T>,
        stage: Stage,
    ) -> Result<(Var<'g, T>, Var<'g, T>)> {
        let mut l = Var::concat(&[cls, left], 0)?;
        let mut r = Var::concat(&[cls, right], 0)?;
        for (b, block) in blocks.iter().enumerate() {
            let site = |channel| CrossSite {
                stage,
                block: b,
                channel,
            };
            let next_l = self.binaural_block(block, l, r, site(Channel::Left))?;
            let next_r = self.binaural_block(block, r, l, site(Channel::Right))?;
            l = next_l;
            r = next_r;
        }
        Ok((l.slice(0, 0, 1)?, r.slice(0, 0, 1)?))
    }

    /// Attention pooling over time, independently per layer, returning
    /// `[L × P]` per channel.
    pub fn temporal_pool(
        &mut self,
        left: &[Var<'g, T>],
        right: &[Var<'g, T>],
    ) -> Result<(Var<'g, T>, Var<'g, T>)> {
        if left.len() != right.len() || left.is_empty() {
            return Err(Error::Validation(format!(
                "temporal pooling needs matching non-empty layer lists, got {} and {}",
                left.len(),
                right.len()
            )));
        }
        let blocks = self.vars.temporal_blocks.clone();
        let cls = self.vars.temporal_cls;
        let mut pooled_l = Vec::with_capacity(left.len());
        let mut pooled_r = Vec::with_capacity(left.len());
        for (layer, (&l, &r)) in left.iter().zip(right).enumerate() {
            let (pl, pr) = self.pool_pair(&blocks, cls, l, r, Stage::Temporal { layer })?;
            pooled_l.push(pl);
            pooled_r.push(pr);
        }
        let out = (Var::concat(&pooled_l, 0)?, Var::concat(&pooled_r, 0)?);
        self.trace.temporal_pooled = out.0.shape();
        Ok(out)
    }

    /// Appends the projected audiogram as row `L` and adds layer-index
    /// embeddings to all `L + 1` rows.
    pub fn append_audiogram(&mut self, pooled: Var<'g, T>, audiogram: &Audiogram) -> Result<Var<'g, T>> {
        let a = Tensor::new(
            vec![1, 8],
            audiogram.thresholds().iter().map(|&v| T::lit(v)).collect(),
        )?;
        let row = self.graph().constant(a).matmul(self.vars.audiogram_proj)?;
        let stacked = Var::concat(&[pooled, row], 0)?;
        let out = stacked.add(self.vars.layer_positions)?;
        self.trace.with_audiogram = out.shape();
        Ok(out)
    }

    /// Attention pooling over the layer axis, returning `[1 × P]` per channel.
    pub fn layer_pool(
        &mut self,
        left: Var<'g, T>,
        right: Var<'g, T>,
    ) -> Result<(Var<'g, T>, Var<'g, T>)> {
        if left.shape() != right.shape() {
            return Err(Error::shape("layer pooling", &left.shape(), &right.shape()));
        }
        let blocks = self.vars.layer_blocks.clone();
        let out = self.pool_pair(&blocks, self.vars.layer_cls, left, right, Stage::Layer)?;
        self.trace.pooled = vec![self.config.proj_dim];
        Ok(out)
    }

    /// Full pipeline on an input that has already been downsampled in time.
    pub fn run_downsampled(&mut self, input: &BinauralInput<T>) -> Result<HeadOutput<'g, T>> {
        self.trace.downsampled = input.left.shape().to_vec();
        let left = self.project(&input.left)?;
        let right = self.project(&input.right)?;
        let (tl, tr) = self.temporal_pool(&left, &right)?;
        let al = self.append_audiogram(tl, &input.audiogram_left)?;
        let ar = self.append_audiogram(tr, &input.audiogram_right)?;
        let (vl, vr) = self.layer_pool(al, ar)?;
        let averaged = vl.add(vr)?.scale(T::lit(0.5));
        let logit = averaged
            .matmul(self.vars.output_weight)?
            .add_row(self.vars.output_bias)?;
        let probability = logit.sigmoid();
        Ok(HeadOutput {
            logit,
            probability,
            left: vl,
            right: vr,
        })
    }

    /// Full pipeline including time downsampling.
    pub fn run(&mut self, input: &BinauralInput<T>) -> Result<HeadOutput<'g, T>> {
        let down = input.downsampled(self.config.downsample_factor)?;
        self.run_downsampled(&down)
    }
}

/// Predicted correctness in `(0, 100)` for one binaural input.
pub fn predict<T: Scalar>(
    input: &BinauralInput<T>,
    params: &HeadParams<T>,
    config: &HeadConfig,
    mode: Mode,
    rng: &mut RngStream,
) -> Result<T> {
    let graph = Graph::new();
    let vars = params.bind(&graph, config, false);
    let mut pass = HeadPass::new(config, &vars, mode, rng);
    let out = pass.run(input)?;
    Ok(out.prediction())
}

/// Eval-mode prediction for an input already downsampled in time.
pub fn predict_downsampled<T: Scalar>(
    input: &BinauralInput<T>,
    params: &HeadParams<T>,
    config: &HeadConfig,
) -> Result<T> {
    let graph = Graph::new();
    let vars = params.bind(&graph, config, false);
    let mut rng = RngStream::new(0);
    let mut pass = HeadPass::new(config, &vars, Mode::Eval, &mut rng);
    Ok(pass.run_downsampled(input)?.prediction())
}
