//! Learnable parameters of the head and their binding into a [`Graph`].
//!
//! Parameters live in one flat, named list whose order is fixed by
//! [`param_specs`]. Both binaural channels read the same list.

use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::model::HeadConfig;
use crate::rng::RngStream;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Init {
    /// Truncated normal with the configured standard deviation.
    Normal,
    Zeros,
    Ones,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: Init,
}

fn push(specs: &mut Vec<ParamSpec>, name: String, shape: Vec<usize>, init: Init) {
    specs.push(ParamSpec { name, shape, init });
}

fn attention_specs(specs: &mut Vec<ParamSpec>, prefix: &str, p: usize) {
    for proj in ["q", "k", "v", "o"] {
        push(specs, format!("{prefix}.w{proj}"), vec![p, p], Init::Normal);
        push(specs, format!("{prefix}.b{proj}"), vec![p], Init::Zeros);
    }
}

fn norm_specs(specs: &mut Vec<ParamSpec>, prefix: &str, p: usize) {
    push(specs, format!("{prefix}.gain"), vec![p], Init::Ones);
    push(specs, format!("{prefix}.bias"), vec![p], Init::Zeros);
}

fn block_specs(specs: &mut Vec<ParamSpec>, prefix: &str, config: &HeadConfig) {
    let p = config.proj_dim;
    let f = config.ffn_dim;
    norm_specs(specs, &format!("{prefix}.norm_self"), p);
    attention_specs(specs, &format!("{prefix}.self_attn"), p);
    if config.binaural_cross_attention {
        norm_specs(specs, &format!("{prefix}.norm_cross"), p);
        attention_specs(specs, &format!("{prefix}.cross_attn"), p);
    }
    norm_specs(specs, &format!("{prefix}.norm_ffn"), p);
    push(specs, format!("{prefix}.ffn.w1"), vec![p, f], Init::Normal);
    push(specs, format!("{prefix}.ffn.b1"), vec![f], Init::Zeros);
    push(specs, format!("{prefix}.ffn.w2"), vec![f, p], Init::Normal);
    push(specs, format!("{prefix}.ffn.b2"), vec![p], Init::Zeros);
}

/// Names, shapes and initializers of every parameter, in storage order.
pub fn param_specs(config: &HeadConfig) -> Vec<ParamSpec> {
    let p = config.proj_dim;
    let mut specs = Vec::new();
    push(&mut specs, "input_proj".into(), vec![config.feature_dim, p], Init::Normal);
    push(&mut specs, "temporal.positions".into(), vec![config.max_frames, p], Init::Normal);
    push(&mut specs, "temporal.cls".into(), vec![1, p], Init::Normal);
    for b in 0..config.temporal_blocks {
        block_specs(&mut specs, &format!("temporal.block{b}"), config);
    }
    push(&mut specs, "audiogram_proj".into(), vec![8, p], Init::Normal);
    push(
        &mut specs,
        "layer.positions".into(),
        vec![config.num_layers + 1, p],
        Init::Normal,
    );
    push(&mut specs, "layer.cls".into(), vec![1, p], Init::Normal);
    for b in 0..config.layer_blocks {
        block_specs(&mut specs, &format!("layer.block{b}"), config);
    }
    push(&mut specs, "output.weight".into(), vec![p, 1], Init::Normal);
    push(&mut specs, "output.bias".into(), vec![1], Init::Zeros);
    specs
}

/// All learnable parameters of one head.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams<T> {
    names: Vec<String>,
    tensors: Vec<Tensor<T>>,
}

impl<T: Scalar> HeadParams<T> {
    pub fn init(config: &HeadConfig, rng: &mut RngStream) -> Result<Self> {
        config.validate()?;
        let specs = param_specs(config);
        let mut names = Vec::with_capacity(specs.len());
        let mut tensors = Vec::with_capacity(specs.len());
        for spec in specs {
            let t = match spec.init {
                Init::Normal => rng.truncated_normal_tensor(spec.shape, config.init_std),
                Init::Zeros => Tensor::zeros(spec.shape),
                Init::Ones => Tensor::ones(spec.shape),
            };
            names.push(spec.name);
            tensors.push(t);
        }
        Ok(HeadParams { names, tensors })
    }

    /// Assembles parameters from named tensors, checking them against the
    /// layout implied by `config`.
    pub fn from_named(config: &HeadConfig, named: Vec<(String, Tensor<T>)>) -> Result<Self> {
        let specs = param_specs(config);
        if specs.len() != named.len() {
            return Err(Error::Validation(format!(
                "expected {} parameter tensors, found {}",
                specs.len(),
                named.len()
            )));
        }
        let mut names = Vec::with_capacity(specs.len());
        let mut tensors = Vec::with_capacity(specs.len());
        for (spec, (name, t)) in specs.into_iter().zip(named) {
            if spec.name != name {
                return Err(Error::Validation(format!(
                    "expected parameter {}, found {name}",
                    spec.name
                )));
            }
            if spec.shape != t.shape() {
                return Err(Error::shape("parameter", &spec.shape, t.shape()));
            }
            names.push(name);
            tensors.push(t);
        }
        Ok(HeadParams { names, tensors })
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor<T>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.tensors
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.names.iter().position(|n| n == name).map(|i| &self.tensors[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(move |i| &mut self.tensors[i])
    }

    /// Total number of scalars.
    pub fn scalar_count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn cast<U: Scalar>(&self) -> HeadParams<U> {
        HeadParams {
            names: self.names.clone(),
            tensors: self.tensors.iter().map(Tensor::cast).collect(),
        }
    }

    /// Records every parameter in `graph`, as differentiable leaves when
    /// `trainable`.
    pub fn bind<'g>(&self, graph: &'g Graph<T>, config: &HeadConfig, trainable: bool) -> HeadVars<'g, T> {
        let flat: Vec<Var<'g, T>> = self
            .tensors
            .iter()
            .map(|t| {
                if trainable {
                    graph.param(t.clone())
                } else {
                    graph.constant(t.clone())
                }
            })
            .collect();
        HeadVars::from_vars(config, flat)
    }
}

#[derive(Clone, Copy)]
pub struct AttentionVars<'g, T> {
    pub wq: Var<'g, T>,
    pub bq: Var<'g, T>,
    pub wk: Var<'g, T>,
    pub bk: Var<'g, T>,
    pub wv: Var<'g, T>,
    pub bv: Var<'g, T>,
    pub wo: Var<'g, T>,
    pub bo: Var<'g, T>,
}

#[derive(Clone, Copy)]
pub struct NormVars<'g, T> {
    pub gain: Var<'g, T>,
    pub bias: Var<'g, T>,
}

#[derive(Clone, Copy)]
pub struct FeedForwardVars<'g, T> {
    pub w1: Var<'g, T>,
    pub b1: Var<'g, T>,
    pub w2: Var<'g, T>,
    pub b2: Var<'g, T>,
}

#[derive(Clone, Copy)]
pub struct BlockVars<'g, T> {
    pub norm_self: NormVars<'g, T>,
    pub self_attn: AttentionVars<'g, T>,
    pub cross: Option<(NormVars<'g, T>, AttentionVars<'g, T>)>,
    pub norm_ffn: NormVars<'g, T>,
    pub ffn: FeedForwardVars<'g, T>,
}

/// Parameters bound into one graph, grouped by role.
pub struct HeadVars<'g, T> {
    pub flat: Vec<Var<'g, T>>,
    pub input_proj: Var<'g, T>,
    pub temporal_positions: Var<'g, T>,
    pub temporal_cls: Var<'g, T>,
    pub temporal_blocks: Vec<BlockVars<'g, T>>,
    pub audiogram_proj: Var<'g, T>,
    pub layer_positions: Var<'g, T>,
    pub layer_cls: Var<'g, T>,
    pub layer_blocks: Vec<BlockVars<'g, T>>,
    pub output_weight: Var<'g, T>,
    pub output_bias: Var<'g, T>,
}

impl<'g, T: Scalar> HeadVars<'g, T> {
    /// Groups `flat` (in [`param_specs`] order) by role.
    pub fn from_vars(config: &HeadConfig, flat: Vec<Var<'g, T>>) -> Self {
        let mut it = flat.iter().copied();
        let mut next = || it.next().expect("parameter list matches layout");
        let input_proj = next();
        let temporal_positions = next();
        let temporal_cls = next();
        let temporal_blocks = (0..config.temporal_blocks)
            .map(|_| read_block(&mut next, config))
            .collect();
        let audiogram_proj = next();
        let layer_positions = next();
        let layer_cls = next();
        let layer_blocks = (0..config.layer_blocks)
            .map(|_| read_block(&mut next, config))
            .collect();
        let output_weight = next();
        let output_bias = next();
        HeadVars {
            flat,
            input_proj,
            temporal_positions,
            temporal_cls,
            temporal_blocks,
            audiogram_proj,
            layer_positions,
            layer_cls,
            layer_blocks,
            output_weight,
            output_bias,
        }
    }
}

fn read_norm<'g, T>(next: &mut impl FnMut() -> Var<'g, T>) -> NormVars<'g, T> {
    NormVars {
        gain: next(),
        bias: next(),
    }
}

fn read_attention<'g, T>(next: &mut impl FnMut() -> Var<'g, T>) -> AttentionVars<'g, T> {
    AttentionVars {
        wq: next(),
        bq: next(),
        wk: next(),
        bk: next(),
        wv: next(),
        bv: next(),
        wo: next(),
        bo: next(),
    }
}

fn read_block<'g, T>(next: &mut impl FnMut() -> Var<'g, T>, config: &HeadConfig) -> BlockVars<'g, T> {
    let norm_self = read_norm(next);
    let self_attn = read_attention(next);
    let cross = config
        .binaural_cross_attention
        .then(|| (read_norm(next), read_attention(next)));
    let norm_ffn = read_norm(next);
    let ffn = FeedForwardVars {
        w1: next(),
        b1: next(),
        w2: next(),
        b2: next(),
    };
    BlockVars {
        norm_self,
        self_attn,
        cross,
        norm_ffn,
        ffn,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parameter_count_matches_closed_form() {
        for config in [
            HeadConfig::new(25, 1024),
            HeadConfig::new(2, 8).with_cross_attention(false),
            HeadConfig::desk(4, 32),
        ] {
            let mut rng = RngStream::new(0);
            let params = HeadParams::<f32>::init(&config, &mut rng).unwrap();
            assert_eq!(params.scalar_count(), config.parameter_count());
        }
    }

    #[test]
    fn init_is_seeded_and_output_bias_zero() {
        let config = HeadConfig::desk(4, 32);
        let a = HeadParams::<f32>::init(&config, &mut RngStream::new(3)).unwrap();
        let b = HeadParams::<f32>::init(&config, &mut RngStream::new(3)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.get("output.bias").unwrap().data(), &[0.0]);
        let w = a.get("input_proj").unwrap();
        assert!(w.max_abs() <= 0.04 + 1e-7);
    }

    #[test]
    fn binding_follows_spec_order() {
        let config = HeadConfig::desk(3, 8);
        let params = HeadParams::<f64>::init(&config, &mut RngStream::new(1)).unwrap();
        let graph = Graph::new();
        let vars = params.bind(&graph, &config, true);
        assert_eq!(vars.flat.len(), params.len());
        assert_eq!(vars.output_bias.shape(), vec![1]);
        assert_eq!(vars.layer_positions.shape(), vec![4, config.proj_dim]);
        let block = &vars.layer_blocks[0];
        assert_eq!(block.ffn.w2.shape(), vec![config.ffn_dim, config.proj_dim]);
        assert!(block.cross.is_some());
    }

    #[test]
    fn from_named_rejects_mismatched_layout() {
        let config = HeadConfig::desk(3, 8);
        let params = HeadParams::<f64>::init(&config, &mut RngStream::new(1)).unwrap();
        let mut named: Vec<_> = params
            .iter()
            .map(|(n, t)| (n.to_string(), t.clone()))
            .collect();
        assert!(HeadParams::from_named(&config, named.clone()).is_ok());
        named[0].1 = Tensor::zeros(vec![2, 2]);
        assert!(HeadParams::from_named(&config, named).is_err());
    }
}
