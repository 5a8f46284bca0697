#![allow(dead_code)]

use sipred::{Graph, Result, RngStream, Tensor, Var};

/// Largest elementwise relative discrepancy between autodiff and central
/// finite differences of `f` at `inputs`. Where both values are below `1e-4`
/// an absolute difference up to `1e-8` counts as exact agreement.
pub fn gradcheck<F>(inputs: &[Tensor<f64>], f: F) -> f64
where
    F: for<'g> Fn(&'g Graph<f64>, &[Var<'g, f64>]) -> Result<Var<'g, f64>>,
{
    let graph = Graph::new();
    let vars: Vec<_> = inputs.iter().map(|t| graph.param(t.clone())).collect();
    let loss = f(&graph, &vars).unwrap();
    let grads = graph.backward(loss).unwrap();
    let analytic: Vec<Tensor<f64>> = vars.iter().map(|&v| grads.wrt(v)).collect();

    let eval = |ins: &[Tensor<f64>]| -> f64 {
        let g = Graph::new();
        let vs: Vec<_> = ins.iter().map(|t| g.param(t.clone())).collect();
        let out = f(&g, &vs).unwrap();
        let v = out.value().item();
        v
    };

    let h = 1e-6;
    let mut worst: f64 = 0.0;
    let mut probe = inputs.to_vec();
    for (k, input) in inputs.iter().enumerate() {
        for i in 0..input.len() {
            let orig = input.data()[i];
            probe[k].data_mut()[i] = orig + h;
            let up = eval(&probe);
            probe[k].data_mut()[i] = orig - h;
            let down = eval(&probe);
            probe[k].data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * h);
            let a = analytic[k].data()[i];
            let err = if a.abs() < 1e-4 && numeric.abs() < 1e-4 {
                if (a - numeric).abs() <= 1e-8 {
                    0.0
                } else {
                    (a - numeric).abs() / 1e-4
                }
            } else {
                (a - numeric).abs() / a.abs().max(numeric.abs())
            };
            worst = worst.max(err);
        }
    }
    worst
}

pub fn random(shape: &[usize], seed: u64) -> Tensor<f64> {
    let mut rng = RngStream::new(seed);
    rng.normal_tensor(shape.to_vec(), 1.0)
}

pub type Build =
    for<'g> fn(&'g Graph<f64>, &[Var<'g, f64>]) -> Result<Var<'g, f64>>;

/// One finite-difference case per differentiable op: inputs and a scalar
/// function exercising the op.
pub fn op_cases() -> Vec<(&'static str, Vec<Tensor<f64>>, Build)> {
    vec![
        ("add", vec![random(&[2, 3], 1), random(&[2, 3], 2)], |_, v| {
            Ok(v[0].add(v[1])?.mul(v[0])?.sum())
        }),
        ("sub", vec![random(&[2, 3], 3), random(&[2, 3], 4)], |_, v| {
            Ok(v[0].sub(v[1])?.mul(v[1])?.sum())
        }),
        ("mul", vec![random(&[5], 5), random(&[5], 6)], |_, v| {
            Ok(v[0].mul(v[1])?.sum())
        }),
        ("matmul", vec![random(&[2, 3], 42), random(&[3, 4], 43), random(&[2, 4], 44)], |_, v| {
            Ok(v[0].matmul(v[1])?.mul(v[2])?.sum())
        }),
        ("add_row", vec![random(&[3, 4], 45), random(&[4], 46), random(&[3, 4], 47)], |_, v| {
            Ok(v[0].add_row(v[1])?.mul(v[2])?.sum())
        }),
        ("mul_const", vec![random(&[5], 48)], |_, v| {
            Ok(v[0].mul_const(Tensor::vector(vec![1.0, 0.0, -2.0, 0.5, 3.0]))?.mul(v[0])?.sum())
        }),
        ("sum", vec![random(&[2, 2], 49)], |_, v| Ok(v[0].mul(v[0])?.sum().scale(0.5))),
        ("scale", vec![random(&[4], 7)], |_, v| {
            Ok(v[0].scale(-2.5).mul(v[0])?.sum())
        }),
        ("mean0", vec![random(&[3, 4], 8), random(&[4], 9)], |_, v| {
            Ok(v[0].mean(0)?.mul(v[1])?.sum())
        }),
        ("mean1", vec![random(&[3, 4], 10), random(&[3], 11)], |_, v| {
            Ok(v[0].mean(1)?.mul(v[1])?.sum())
        }),
        ("concat", vec![random(&[2, 3], 12), random(&[2, 2], 13), random(&[2, 5], 14)], |_, v| {
            Ok(Var::concat(&[v[0], v[1]], 1)?.mul(v[2])?.sum())
        }),
        ("concat0", vec![random(&[1, 3], 15), random(&[2, 3], 16), random(&[3, 3], 17)], |_, v| {
            Ok(Var::concat(&[v[0], v[1]], 0)?.mul(v[2])?.sum())
        }),
        ("slice", vec![random(&[3, 4], 18), random(&[3, 2], 19)], |_, v| {
            Ok(v[0].slice(1, 1, 2)?.mul(v[1])?.sum())
        }),
        ("gelu", vec![random(&[6], 20), random(&[6], 21)], |_, v| {
            Ok(v[0].gelu().mul(v[1])?.sum())
        }),
        ("sigmoid", vec![random(&[6], 22), random(&[6], 23)], |_, v| {
            Ok(v[0].sigmoid().mul(v[1])?.sum())
        }),
        ("softmax_last", vec![random(&[2, 5], 24), random(&[2, 5], 25)], |_, v| {
            Ok(v[0].softmax(1)?.mul(v[1])?.sum())
        }),
        ("softmax_first", vec![random(&[3, 2], 26), random(&[3, 2], 27)], |_, v| {
            Ok(v[0].softmax(0)?.mul(v[1])?.sum())
        }),
        ("layer_norm", vec![random(&[3, 5], 28), random(&[5], 29), random(&[5], 30), random(&[3, 5], 31)], |_, v| {
            Ok(v[0].layer_norm(v[1], v[2], 1e-5)?.mul(v[3])?.sum())
        }),
        ("linear", vec![random(&[2, 3], 32), random(&[3, 4], 33), random(&[4], 34), random(&[2, 4], 35)], |_, v| {
            Ok(v[0].linear(v[1], v[2])?.mul(v[3])?.sum())
        }),
        ("reshape", vec![random(&[2, 3], 40), random(&[3, 2], 41)], |_, v| {
            Ok(v[0].reshape(vec![3, 2])?.mul(v[1])?.sum())
        }),
        ("transpose", vec![random(&[2, 3], 36), random(&[3, 2], 37)], |_, v| {
            Ok(v[0].transpose()?.mul(v[1])?.sum())
        }),
        ("huber", vec![random(&[6], 38).map(|x| 2.0 * x)], |_, v| {
            v[0].huber(Tensor::vector(vec![0.3, -0.2, 0.1, 1.5, -2.0, 0.0]), 1.0)
        }),
        ("dropout_mask", vec![random(&[20], 39)], |_, v| {
            let mut rng = RngStream::new(3);
            Ok(v[0].dropout(0.3, true, &mut rng)?.mul(v[0])?.sum())
        }),
    ]
}
