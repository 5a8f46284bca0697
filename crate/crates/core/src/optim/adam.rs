use crate::error::{Error, Result};
use crate::optim::TrainConfig;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Bias-corrected Adam moments, one pair per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
    pub step: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(params: &[Tensor<T>]) -> Self {
        let zeros = || params.iter().map(|p| Tensor::zeros(p.shape().to_vec())).collect();
        AdamState {
            m: zeros(),
            v: zeros(),
            step: 0,
        }
    }
}

/// One Adam update. `names` label the parameters in diagnostics; a NaN
/// gradient aborts before any parameter is touched.
pub fn adam_step<T: Scalar>(
    names: &[String],
    params: &mut [Tensor<T>],
    grads: &[Tensor<T>],
    state: &mut AdamState<T>,
    lr: f64,
    config: &TrainConfig,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::Usage(format!(
            "adam_step got {} parameters, {} gradients and {} moment slots",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.shape() != g.shape() {
            return Err(Error::shape("adam_step", p.shape(), g.shape()));
        }
        if g.data().iter().any(|x| x.is_nan()) {
            let name = names.get(i).map_or("?", String::as_str);
            return Err(Error::Numeric(format!("NaN gradient for parameter {name}")));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (T::lit(config.beta1), T::lit(config.beta2));
    let (c1, c2) = (T::one() - b1, T::one() - b2);
    let correct1 = T::one() - b1.powi(t);
    let correct2 = T::one() - b2.powi(t);
    let (lr, eps) = (T::lit(lr), T::lit(config.adam_eps));
    for ((p, g), (m, v)) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        for (((p, &g), m), v) in p
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .zip(m.data_mut())
            .zip(v.data_mut())
        {
            *m = b1 * *m + c1 * g;
            *v = b2 * *v + c2 * g * g;
            let m_hat = *m / correct1;
            let v_hat = *v / correct2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}
