use super::{Graph, Var};
use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::scalar::Scalar;
use crate::tensor::{matmul_at_into, matmul_bt_into, numel, transpose_into, Tensor};

pub(crate) enum Op<T> {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    /// `[.., n] + [n]`
    AddRow(usize, usize),
    Scale(usize, T),
    MulConst(usize, Tensor<T>),
    MatMul(usize, usize),
    Transpose(usize),
    Reshape(usize),
    Sum(usize),
    Mean {
        input: usize,
        axis: usize,
    },
    Concat {
        inputs: Vec<usize>,
        axis: usize,
    },
    Slice {
        input: usize,
        axis: usize,
        start: usize,
    },
    Gelu(usize),
    Sigmoid(usize),
    Softmax {
        input: usize,
        axis: usize,
    },
    LayerNorm {
        input: usize,
        gain: usize,
        bias: usize,
        normalized: Vec<T>,
        inv_std: Vec<T>,
    },
    Huber {
        pred: usize,
        target: Tensor<T>,
        delta: T,
    },
}

impl<T> Op<T> {
    pub(crate) fn inputs(&self) -> Vec<usize> {
        match self {
            Op::Leaf => vec![],
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::AddRow(a, b) | Op::MatMul(a, b) => {
                vec![*a, *b]
            }
            Op::Scale(a, _)
            | Op::MulConst(a, _)
            | Op::Transpose(a)
            | Op::Reshape(a)
            | Op::Sum(a)
            | Op::Gelu(a)
            | Op::Sigmoid(a) => vec![*a],
            Op::Mean { input, .. } | Op::Slice { input, .. } | Op::Softmax { input, .. } => {
                vec![*input]
            }
            Op::Concat { inputs, .. } => inputs.clone(),
            Op::LayerNorm {
                input, gain, bias, ..
            } => vec![*input, *gain, *bias],
            Op::Huber { pred, .. } => vec![*pred],
        }
    }
}

/// `(outer, axis length, inner)` decomposition of a shape around `axis`.
fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    (
        numel(&shape[..axis]),
        shape[axis],
        numel(&shape[axis + 1..]),
    )
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

fn gelu<T: Scalar>(x: T) -> T {
    let half = T::lit(0.5);
    let u = T::lit(GELU_C) * (x + T::lit(GELU_A) * x * x * x);
    half * x * (T::one() + u.tanh())
}

fn gelu_grad<T: Scalar>(x: T) -> T {
    let half = T::lit(0.5);
    let u = T::lit(GELU_C) * (x + T::lit(GELU_A) * x * x * x);
    let th = u.tanh();
    let du = T::lit(GELU_C) * (T::one() + T::lit(3.0 * GELU_A) * x * x);
    half * (T::one() + th) + half * x * (T::one() - th * th) * du
}

pub(crate) fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

impl<'g, T: Scalar> Var<'g, T> {
    fn same_graph(&self, other: &Var<'g, T>) {
        assert!(
            std::ptr::eq(self.graph, other.graph),
            "vars from different graphs"
        );
    }

    fn binary(
        self,
        other: Var<'g, T>,
        name: &'static str,
        f: impl Fn(T, T) -> T,
        op: Op<T>,
    ) -> Result<Var<'g, T>> {
        self.same_graph(&other);
        let value = {
            let a = self.value();
            let b = other.value();
            if a.shape() != b.shape() {
                return Err(Error::shape(name, a.shape(), b.shape()));
            }
            a.zip_map(&b, f)?
        };
        Ok(self.graph.record(value, op))
    }

    pub fn add(self, other: Var<'g, T>) -> Result<Var<'g, T>> {
        self.binary(other, "add", |a, b| a + b, Op::Add(self.id, other.id))
    }

    pub fn sub(self, other: Var<'g, T>) -> Result<Var<'g, T>> {
        self.binary(other, "sub", |a, b| a - b, Op::Sub(self.id, other.id))
    }

    pub fn mul(self, other: Var<'g, T>) -> Result<Var<'g, T>> {
        self.binary(other, "mul", |a, b| a * b, Op::Mul(self.id, other.id))
    }

    /// Adds a vector to every row along the last axis.
    pub fn add_row(self, row: Var<'g, T>) -> Result<Var<'g, T>> {
        self.same_graph(&row);
        let value = {
            let a = self.value();
            let b = row.value();
            let n = *a.shape().last().unwrap_or(&1);
            if b.rank() != 1 || b.len() != n {
                return Err(Error::shape("add_row", a.shape(), b.shape()));
            }
            let mut out = a.clone();
            for chunk in out.data_mut().chunks_mut(n) {
                for (o, &bv) in chunk.iter_mut().zip(b.data()) {
                    *o += bv;
                }
            }
            out
        };
        Ok(self.graph.record(value, Op::AddRow(self.id, row.id)))
    }

    pub fn scale(self, c: T) -> Var<'g, T> {
        let value = self.value().map(|x| x * c);
        self.graph.record(value, Op::Scale(self.id, c))
    }

    /// Elementwise product with a fixed (non-differentiable) tensor.
    pub fn mul_const(self, mask: Tensor<T>) -> Result<Var<'g, T>> {
        let value = {
            let a = self.value();
            if a.shape() != mask.shape() {
                return Err(Error::shape("mul_const", a.shape(), mask.shape()));
            }
            a.zip_map(&mask, |x, m| x * m)?
        };
        Ok(self.graph.record(value, Op::MulConst(self.id, mask)))
    }

    pub fn matmul(self, other: Var<'g, T>) -> Result<Var<'g, T>> {
        self.same_graph(&other);
        let value = self.value().matmul(&other.value())?;
        Ok(self.graph.record(value, Op::MatMul(self.id, other.id)))
    }

    pub fn transpose(self) -> Result<Var<'g, T>> {
        let value = self.value().transpose()?;
        Ok(self.graph.record(value, Op::Transpose(self.id)))
    }

    pub fn reshape(self, shape: impl Into<Vec<usize>>) -> Result<Var<'g, T>> {
        let value = self.value().clone().reshape(shape)?;
        Ok(self.graph.record(value, Op::Reshape(self.id)))
    }

    /// `x·W + b` for `x: [m×k]`, `W: [k×n]`, `b: [n]`.
    pub fn linear(self, weight: Var<'g, T>, bias: Var<'g, T>) -> Result<Var<'g, T>> {
        self.matmul(weight)?.add_row(bias)
    }

    /// Sum of all elements, as a rank-0 tensor.
    pub fn sum(self) -> Var<'g, T> {
        let value = Tensor::scalar(self.value().sum());
        self.graph.record(value, Op::Sum(self.id))
    }

    /// Mean along `axis`, removing it.
    pub fn mean(self, axis: usize) -> Result<Var<'g, T>> {
        let value = {
            let a = self.value();
            if axis >= a.rank() {
                return Err(Error::Usage(format!(
                    "mean axis {axis} out of range for shape {:?}",
                    a.shape()
                )));
            }
            let (outer, len, inner) = split_axis(a.shape(), axis);
            let inv = T::one() / T::lit(len as f64);
            let mut out = vec![T::zero(); outer * inner];
            for o in 0..outer {
                for l in 0..len {
                    let src = &a.data()[(o * len + l) * inner..(o * len + l + 1) * inner];
                    for (d, &s) in out[o * inner..(o + 1) * inner].iter_mut().zip(src) {
                        *d += s;
                    }
                }
            }
            for v in &mut out {
                *v *= inv;
            }
            let mut shape = a.shape().to_vec();
            shape.remove(axis);
            Tensor::new(shape, out)?
        };
        Ok(self.graph.record(value, Op::Mean { input: self.id, axis }))
    }

    pub fn concat(parts: &[Var<'g, T>], axis: usize) -> Result<Var<'g, T>> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Usage("concat of zero tensors".into()))?;
        let value = {
            let values: Vec<_> = parts.iter().map(|p| p.value()).collect();
            let base = values[0].shape().to_vec();
            if axis >= base.len() {
                return Err(Error::Usage(format!(
                    "concat axis {axis} out of range for shape {base:?}"
                )));
            }
            let mut total = 0;
            for v in &values {
                let s = v.shape();
                let compatible = s.len() == base.len()
                    && s.iter()
                        .zip(&base)
                        .enumerate()
                        .all(|(i, (a, b))| i == axis || a == b);
                if !compatible {
                    return Err(Error::shape("concat", &base, s));
                }
                total += s[axis];
            }
            let (outer, _, inner) = split_axis(&base, axis);
            let mut data = Vec::with_capacity(outer * total * inner);
            for o in 0..outer {
                for v in &values {
                    let len = v.shape()[axis];
                    data.extend_from_slice(&v.data()[o * len * inner..(o + 1) * len * inner]);
                }
            }
            let mut shape = base;
            shape[axis] = total;
            Tensor::new(shape, data)?
        };
        for p in parts {
            first.same_graph(p);
        }
        Ok(first.graph.record(
            value,
            Op::Concat {
                inputs: parts.iter().map(|p| p.id).collect(),
                axis,
            },
        ))
    }

    /// Elements `start..start+len` along `axis`.
    pub fn slice(self, axis: usize, start: usize, len: usize) -> Result<Var<'g, T>> {
        let value = {
            let a = self.value();
            if axis >= a.rank() || len == 0 || start + len > a.shape()[axis] {
                return Err(Error::Usage(format!(
                    "slice {start}..{} on axis {axis} out of range for shape {:?}",
                    start + len,
                    a.shape()
                )));
            }
            let (outer, full, inner) = split_axis(a.shape(), axis);
            let mut data = Vec::with_capacity(outer * len * inner);
            for o in 0..outer {
                let base = (o * full + start) * inner;
                data.extend_from_slice(&a.data()[base..base + len * inner]);
            }
            let mut shape = a.shape().to_vec();
            shape[axis] = len;
            Tensor::new(shape, data)?
        };
        Ok(self.graph.record(
            value,
            Op::Slice {
                input: self.id,
                axis,
                start,
            },
        ))
    }

    /// Tanh-approximated GELU.
    pub fn gelu(self) -> Var<'g, T> {
        let value = self.value().map(gelu);
        self.graph.record(value, Op::Gelu(self.id))
    }

    pub fn sigmoid(self) -> Var<'g, T> {
        let value = self.value().map(sigmoid);
        self.graph.record(value, Op::Sigmoid(self.id))
    }

    /// Max-subtracted softmax along `axis`.
    pub fn softmax(self, axis: usize) -> Result<Var<'g, T>> {
        let value = {
            let a = self.value();
            if axis >= a.rank() {
                return Err(Error::Usage(format!(
                    "softmax axis {axis} out of range for shape {:?}",
                    a.shape()
                )));
            }
            let (outer, len, inner) = split_axis(a.shape(), axis);
            let mut out = a.clone();
            let d = out.data_mut();
            for o in 0..outer {
                for i in 0..inner {
                    let at = |l: usize| (o * len + l) * inner + i;
                    let max = (0..len).fold(T::neg_infinity(), |m, l| m.max(d[at(l)]));
                    let mut total = T::zero();
                    for l in 0..len {
                        let e = (d[at(l)] - max).exp();
                        d[at(l)] = e;
                        total += e;
                    }
                    for l in 0..len {
                        d[at(l)] /= total;
                    }
                }
            }
            out
        };
        Ok(self.graph.record(value, Op::Softmax { input: self.id, axis }))
    }

    /// Normalizes the last axis to zero mean and unit variance, then applies
    /// `gain` and `bias`.
    pub fn layer_norm(self, gain: Var<'g, T>, bias: Var<'g, T>, eps: T) -> Result<Var<'g, T>> {
        self.same_graph(&gain);
        self.same_graph(&bias);
        let (value, normalized, inv_std) = {
            let a = self.value();
            let g = gain.value();
            let b = bias.value();
            let n = *a.shape().last().unwrap_or(&1);
            if g.shape() != [n] || b.shape() != [n] {
                return Err(Error::shape("layer_norm", a.shape(), g.shape()));
            }
            let rows = a.len() / n;
            let inv_n = T::one() / T::lit(n as f64);
            let mut normalized = Vec::with_capacity(a.len());
            let mut inv_std = Vec::with_capacity(rows);
            let mut out = Vec::with_capacity(a.len());
            for row in a.data().chunks(n) {
                let mean = row.iter().copied().sum::<T>() * inv_n;
                let var = row.iter().map(|&x| (x - mean) * (x - mean)).sum::<T>() * inv_n;
                let r = T::one() / (var + eps).sqrt();
                inv_std.push(r);
                for (j, &x) in row.iter().enumerate() {
                    let xh = (x - mean) * r;
                    normalized.push(xh);
                    out.push(xh * g.data()[j] + b.data()[j]);
                }
            }
            (Tensor::new(a.shape().to_vec(), out)?, normalized, inv_std)
        };
        Ok(self.graph.record(
            value,
            Op::LayerNorm {
                input: self.id,
                gain: gain.id,
                bias: bias.id,
                normalized,
                inv_std,
            },
        ))
    }

    /// Mean Huber loss of `self` against `target`.
    pub fn huber(self, target: Tensor<T>, delta: T) -> Result<Var<'g, T>> {
        if !(delta > T::zero()) {
            return Err(Error::Config(format!("huber delta must be positive, got {delta}")));
        }
        let value = {
            let a = self.value();
            if a.shape() != target.shape() {
                return Err(Error::shape("huber", a.shape(), target.shape()));
            }
            let total: T = a
                .data()
                .iter()
                .zip(target.data())
                .map(|(&p, &t)| huber(p - t, delta))
                .sum();
            Tensor::scalar(total / T::lit(a.len() as f64))
        };
        Ok(self.graph.record(
            value,
            Op::Huber {
                pred: self.id,
                target,
                delta,
            },
        ))
    }

    /// Inverted dropout. Identity (the same node) outside training or for
    /// `p == 0`.
    pub fn dropout(self, p: f64, training: bool, rng: &mut RngStream) -> Result<Var<'g, T>> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::Config(format!("dropout p must be in [0,1), got {p}")));
        }
        if !training || p == 0.0 {
            return Ok(self);
        }
        let keep = T::lit(1.0 / (1.0 - p));
        let shape = self.shape();
        let mask = Tensor::from_fn(shape, |_| {
            if rng.uniform() < p {
                T::zero()
            } else {
                keep
            }
        });
        self.mul_const(mask)
    }
}

/// Huber penalty of a residual.
pub fn huber<T: Scalar>(e: T, delta: T) -> T {
    let a = e.abs();
    if a <= delta {
        T::lit(0.5) * e * e
    } else {
        delta * (a - T::lit(0.5) * delta)
    }
}

impl<T: Scalar> Graph<T> {
    pub fn scalar_constant(&self, x: T) -> Var<'_, T> {
        self.constant(Tensor::scalar(x))
    }
}

pub(crate) fn propagate<'a, T: Scalar>(
    op: &'a Op<T>,
    out: &Tensor<T>,
    g: &Tensor<T>,
    value: impl Fn(usize) -> &'a Tensor<T>,
    mut acc: impl FnMut(usize, Tensor<T>),
) {
    let shaped = |shape: &[usize], data: Vec<T>| Tensor::new(shape.to_vec(), data).expect("grad shape");
    match op {
        Op::Leaf => {}
        Op::Add(a, b) => {
            acc(*a, g.clone());
            acc(*b, g.clone());
        }
        Op::Sub(a, b) => {
            acc(*a, g.clone());
            acc(*b, g.map(|x| -x));
        }
        Op::Mul(a, b) => {
            acc(*a, g.zip_map(value(*b), |x, y| x * y).unwrap());
            acc(*b, g.zip_map(value(*a), |x, y| x * y).unwrap());
        }
        Op::AddRow(a, b) => {
            acc(*a, g.clone());
            let n = value(*b).len();
            let mut gb = vec![T::zero(); n];
            for row in g.data().chunks(n) {
                for (s, &x) in gb.iter_mut().zip(row) {
                    *s += x;
                }
            }
            acc(*b, Tensor::vector(gb));
        }
        Op::Scale(a, c) => acc(*a, g.map(|x| x * *c)),
        Op::MulConst(a, m) => acc(*a, g.zip_map(m, |x, y| x * y).unwrap()),
        Op::MatMul(a, b) => {
            let av = value(*a);
            let bv = value(*b);
            let (m, k, n) = (av.shape()[0], av.shape()[1], bv.shape()[1]);
            let mut ga = vec![T::zero(); m * k];
            matmul_bt_into(g.data(), bv.data(), &mut ga, m, n, k);
            acc(*a, shaped(av.shape(), ga));
            let mut gb = vec![T::zero(); k * n];
            matmul_at_into(av.data(), g.data(), &mut gb, k, m, n);
            acc(*b, shaped(bv.shape(), gb));
        }
        Op::Transpose(a) => {
            let (r, c) = (g.shape()[0], g.shape()[1]);
            let mut ga = vec![T::zero(); r * c];
            transpose_into(g.data(), &mut ga, r, c);
            acc(*a, shaped(&[c, r], ga));
        }
        Op::Reshape(a) => acc(*a, g.clone().reshape(value(*a).shape().to_vec()).unwrap()),
        Op::Sum(a) => acc(*a, Tensor::full(value(*a).shape().to_vec(), g.item())),
        Op::Mean { input, axis } => {
            let shape = value(*input).shape();
            let (outer, len, inner) = split_axis(shape, *axis);
            let inv = T::one() / T::lit(len as f64);
            let mut ga = Vec::with_capacity(outer * len * inner);
            for o in 0..outer {
                let src = &g.data()[o * inner..(o + 1) * inner];
                for _ in 0..len {
                    ga.extend(src.iter().map(|&x| x * inv));
                }
            }
            acc(*input, shaped(shape, ga));
        }
        Op::Concat { inputs, axis } => {
            let (outer, total, inner) = split_axis(out.shape(), *axis);
            let mut offset = 0;
            for &i in inputs {
                let shape = value(i).shape();
                let len = shape[*axis];
                let mut gi = Vec::with_capacity(outer * len * inner);
                for o in 0..outer {
                    let base = (o * total + offset) * inner;
                    gi.extend_from_slice(&g.data()[base..base + len * inner]);
                }
                offset += len;
                acc(i, shaped(shape, gi));
            }
        }
        Op::Slice { input, axis, start } => {
            let shape = value(*input).shape();
            let (outer, full, inner) = split_axis(shape, *axis);
            let len = out.shape()[*axis];
            let mut gi = vec![T::zero(); outer * full * inner];
            for o in 0..outer {
                let dst = (o * full + start) * inner;
                let src = o * len * inner;
                gi[dst..dst + len * inner].copy_from_slice(&g.data()[src..src + len * inner]);
            }
            acc(*input, shaped(shape, gi));
        }
        Op::Gelu(a) => acc(*a, g.zip_map(value(*a), |gy, x| gy * gelu_grad(x)).unwrap()),
        Op::Sigmoid(a) => acc(*a, g.zip_map(out, |gy, y| gy * y * (T::one() - y)).unwrap()),
        Op::Softmax { input, axis } => {
            let (outer, len, inner) = split_axis(out.shape(), *axis);
            let y = out.data();
            let mut gi = vec![T::zero(); y.len()];
            for o in 0..outer {
                for i in 0..inner {
                    let at = |l: usize| (o * len + l) * inner + i;
                    let dot: T = (0..len).map(|l| g.data()[at(l)] * y[at(l)]).sum();
                    for l in 0..len {
                        gi[at(l)] = y[at(l)] * (g.data()[at(l)] - dot);
                    }
                }
            }
            acc(*input, shaped(out.shape(), gi));
        }
        Op::LayerNorm {
            input,
            gain,
            bias,
            normalized,
            inv_std,
        } => {
            let gv = value(*gain);
            let n = gv.len();
            let inv_n = T::one() / T::lit(n as f64);
            let mut ggain = vec![T::zero(); n];
            let mut gbias = vec![T::zero(); n];
            let mut gx = Vec::with_capacity(g.len());
            let mut gxhat = vec![T::zero(); n];
            for (r, (grow, xrow)) in g.data().chunks(n).zip(normalized.chunks(n)).enumerate() {
                let mut mean_g = T::zero();
                let mut mean_gx = T::zero();
                for j in 0..n {
                    ggain[j] += grow[j] * xrow[j];
                    gbias[j] += grow[j];
                    gxhat[j] = grow[j] * gv.data()[j];
                    mean_g += gxhat[j];
                    mean_gx += gxhat[j] * xrow[j];
                }
                mean_g *= inv_n;
                mean_gx *= inv_n;
                for j in 0..n {
                    gx.push(inv_std[r] * (gxhat[j] - mean_g - xrow[j] * mean_gx));
                }
            }
            acc(*input, shaped(out.shape(), gx));
            acc(*gain, Tensor::vector(ggain));
            acc(*bias, Tensor::vector(gbias));
        }
        Op::Huber {
            pred,
            target,
            delta,
        } => {
            let p = value(*pred);
            let scale = g.item() / T::lit(p.len() as f64);
            let gp = p
                .zip_map(target, |p, t| {
                    let e = p - t;
                    let d = if e.abs() <= *delta {
                        e
                    } else {
                        *delta * e.signum()
                    };
                    d * scale
                })
                .unwrap();
            acc(*pred, gp);
        }
    }
}
