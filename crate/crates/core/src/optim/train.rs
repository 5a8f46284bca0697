use rayon::prelude::*;

use crate::autodiff::Graph;
use crate::data::Sample;
use crate::error::{Error, Result};
use crate::model::checkpoint::CheckpointMeta;
use crate::model::{BinauralInput, Checkpoint, HeadConfig, HeadParams, HeadPass, Mode};
use crate::optim::{adam_step, lr_at, AdamState, HistoryEntry, TrainConfig, TrainHistory};
use crate::rng::RngStream;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Stream ids under the training seed.
const INIT_STREAM: u64 = 0;
const SHUFFLE_STREAM: u64 = 1;
const DROPOUT_STREAM_BASE: u64 = 2;

pub struct TrainOutcome<T> {
    /// Parameters with the lowest dev RMSE seen; the final parameters when
    /// there is no dev set.
    pub best: Checkpoint<T>,
    /// Parameters after the last step, with Adam moments in `extra`.
    pub last: Checkpoint<T>,
    pub history: TrainHistory,
}

struct Prepared<T> {
    input: BinauralInput<T>,
    target: f64,
}

fn prepare<T: Scalar>(samples: &[&Sample<T>], head: &HeadConfig) -> Result<Vec<Prepared<T>>> {
    samples
        .par_iter()
        .map(|s| {
            Ok(Prepared {
                input: s.input()?.downsampled(head.downsample_factor)?,
                target: s.correctness,
            })
        })
        .collect()
}

fn rmse_of<T: Scalar>(params: &HeadParams<T>, head: &HeadConfig, set: &[Prepared<T>]) -> Result<f64> {
    let sq: Vec<f64> = set
        .par_iter()
        .map(|p| {
            let y = crate::model::predict_downsampled(&p.input, params, head)?;
            let e = y.to_f64().expect("finite prediction") - p.target;
            Ok(e * e)
        })
        .collect::<Result<_>>()?;
    Ok((sq.iter().sum::<f64>() / sq.len() as f64).sqrt())
}

/// RMSE on the `[0, 100]` scale of eval-mode predictions over `samples`.
pub fn dev_rmse<T: Scalar>(
    params: &HeadParams<T>,
    head: &HeadConfig,
    samples: &[&Sample<T>],
) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Usage("RMSE of an empty set".into()));
    }
    rmse_of(params, head, &prepare(samples, head)?)
}

/// Huber loss and parameter gradients for one sample in train mode.
fn sample_gradient<T: Scalar>(
    params: &HeadParams<T>,
    head: &HeadConfig,
    sample: &Prepared<T>,
    delta: T,
    rng: &mut RngStream,
) -> Result<(T, Vec<Tensor<T>>)> {
    let graph = Graph::new();
    let vars = params.bind(&graph, head, true);
    let out = HeadPass::new(head, &vars, Mode::Train, rng).run_downsampled(&sample.input)?;
    let target = Tensor::full(out.probability.shape(), T::lit(sample.target / 100.0));
    let loss = out.probability.huber(target, delta)?;
    let value = loss.value().item();
    let mut grads = graph.backward(loss)?;
    Ok((value, vars.flat.iter().map(|&v| grads.take(v)).collect()))
}

/// Seeded epoch-wise shuffling; the last batch of an epoch may be short.
struct Batches {
    order: Vec<usize>,
    cursor: usize,
    rng: RngStream,
}

impl Batches {
    fn new(n: usize, seed: u64) -> Self {
        Batches {
            order: (0..n).collect(),
            cursor: n,
            rng: RngStream::substream(seed, SHUFFLE_STREAM),
        }
    }

    fn next(&mut self, size: usize) -> &[usize] {
        if self.cursor == self.order.len() {
            self.order.sort_unstable();
            self.rng.shuffle(&mut self.order);
            self.cursor = 0;
        }
        let start = self.cursor;
        self.cursor = (start + size).min(self.order.len());
        &self.order[start..self.cursor]
    }
}

fn snapshot<T: Scalar>(
    head: &HeadConfig,
    params: &HeadParams<T>,
    step: u64,
    dev_rmse: Option<f64>,
    seed: u64,
) -> Checkpoint<T> {
    let mut ck = Checkpoint::new(head.clone(), params.clone());
    ck.meta = CheckpointMeta {
        step,
        dev_rmse,
        seed: Some(seed),
    };
    ck
}

/// Trains a freshly initialized head on `train_set`, tracking RMSE on
/// `dev_set`. The training dropout rate comes from `config`, overriding the
/// head's own.
pub fn train<T: Scalar>(
    train_set: &[&Sample<T>],
    dev_set: &[&Sample<T>],
    head: &HeadConfig,
    config: &TrainConfig,
) -> Result<TrainOutcome<T>> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(Error::Config("training split is empty".into()));
    }
    let head = HeadConfig {
        dropout_p: config.dropout_p,
        ..head.clone()
    };
    head.validate()?;
    let train_data = prepare(train_set, &head)?;
    let dev_data = prepare(dev_set, &head)?;

    let mut params = HeadParams::init(&head, &mut RngStream::substream(config.seed, INIT_STREAM))?;
    let mut adam = AdamState::new(params.tensors());
    let mut batches = Batches::new(train_data.len(), config.seed);
    let delta = T::lit(config.huber_delta);
    let mut history = TrainHistory::default();
    let mut best: Option<Checkpoint<T>> = None;
    let out_dir = config.checkpoint_path.as_deref();
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }

    let mut consider = |step: u64, params: &HeadParams<T>, history: &mut TrainHistory| -> Result<Option<f64>> {
        if dev_data.is_empty() {
            return Ok(None);
        }
        let rmse = rmse_of(params, &head, &dev_data)?;
        if history.best_dev_rmse.is_none_or(|b| rmse < b) {
            history.best_dev_rmse = Some(rmse);
            history.best_step = Some(step);
            let ck = snapshot(&head, params, step, Some(rmse), config.seed);
            if let Some(dir) = out_dir {
                ck.save(dir.join("best.ckpt"))?;
            }
            best = Some(ck);
        }
        Ok(Some(rmse))
    };

    if config.steps == 0 {
        consider(0, &params, &mut history)?;
    }
    for step in 0..config.steps {
        let batch = batches.next(config.batch_size).to_vec();
        let base = DROPOUT_STREAM_BASE + step * config.batch_size as u64;
        let results: Vec<(T, Vec<Tensor<T>>)> = batch
            .par_iter()
            .enumerate()
            .map(|(pos, &i)| {
                let mut rng = RngStream::substream(config.seed, base + pos as u64);
                sample_gradient(&params, &head, &train_data[i], delta, &mut rng)
            })
            .collect::<Result<_>>()?;

        let scale = T::lit(1.0 / batch.len() as f64);
        let mut loss = T::zero();
        let mut grads: Vec<Tensor<T>> = params
            .tensors()
            .iter()
            .map(|p| Tensor::zeros(p.shape().to_vec()))
            .collect();
        for (l, g) in &results {
            loss += *l;
            for (acc, g) in grads.iter_mut().zip(g) {
                acc.add_assign(g);
            }
        }
        let loss = (loss * scale).to_f64().unwrap_or(f64::NAN);
        if !loss.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite training loss at step {}",
                step + 1
            )));
        }
        for g in &mut grads {
            for x in g.data_mut() {
                *x *= scale;
            }
        }
        let lr = lr_at(step + 1, config)?;
        let names = params.names().to_vec();
        adam_step(&names, params.tensors_mut(), &grads, &mut adam, lr, config)?;

        let done = step + 1;
        let due = done == config.steps
            || (config.dev_eval_every > 0 && done % config.dev_eval_every == 0);
        let dev_rmse = if due { consider(done, &params, &mut history)? } else { None };
        history.entries.push(HistoryEntry {
            step: done,
            loss,
            lr,
            dev_rmse,
        });
    }

    let mut last = snapshot(&head, &params, config.steps, None, config.seed);
    last.meta.dev_rmse = history
        .entries
        .last()
        .and_then(|e| e.dev_rmse)
        .or(history.best_dev_rmse.filter(|_| config.steps == 0));
    for (name, (m, v)) in params.names().iter().zip(adam.m.iter().zip(&adam.v)) {
        last.extra.push((format!("adam.m.{name}"), m.clone()));
        last.extra.push((format!("adam.v.{name}"), v.clone()));
    }
    let best = best.unwrap_or_else(|| {
        let mut ck = last.clone();
        ck.extra.clear();
        ck
    });
    if let Some(dir) = out_dir {
        if dev_data.is_empty() {
            best.save(dir.join("best.ckpt"))?;
        }
        last.save(dir.join("final.ckpt"))?;
        history.write_jsonl(dir.join("history.jsonl"))?;
    }
    Ok(TrainOutcome {
        best,
        last,
        history,
    })
}
