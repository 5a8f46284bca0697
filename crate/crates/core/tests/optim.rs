use proptest::prelude::*;
use sipred::data::{generate_synthetic, Sample, SyntheticConfig};
use sipred::model::{Checkpoint, HeadConfig, HeadParams};
use sipred::optim::{adam_step, dev_rmse, lr_at, train, AdamState, TrainConfig, TrainHistory};
use sipred::{Error, RngStream, Tensor};

fn paper() -> TrainConfig {
    TrainConfig::paper(0)
}

#[test]
fn schedule_examples() {
    let c = paper();
    assert_eq!(lr_at(0, &c).unwrap(), 0.0);
    assert!((lr_at(2000, &c).unwrap() - 3e-5).abs() < 1e-18);
    assert!((lr_at(31000, &c).unwrap() - 1.5e-5).abs() < 1e-15);
    assert!(lr_at(60000, &c).unwrap().abs() < 1e-18);
    assert!((lr_at(1000, &c).unwrap() - 1.5e-5).abs() < 1e-18);
    assert!(matches!(lr_at(60001, &c), Err(Error::Usage(_))));
}

#[test]
fn schedule_with_floor() {
    let c = TrainConfig {
        min_lr: 1e-6,
        ..paper()
    };
    assert_eq!(lr_at(60000, &c).unwrap(), 1e-6);
    let mid = 1e-6 + 0.5 * (3e-5 - 1e-6);
    assert!((lr_at(31000, &c).unwrap() - mid).abs() < 1e-15);
}

#[test]
fn schedule_shape() {
    let c = paper();
    let warm: Vec<f64> = (0..=2000).map(|s| lr_at(s, &c).unwrap()).collect();
    assert!(warm.windows(2).all(|w| w[1] >= w[0]));
    let decay: Vec<f64> = (2000..=60000).step_by(100).map(|s| lr_at(s, &c).unwrap()).collect();
    assert!(decay.windows(2).all(|w| w[1] <= w[0]));
    assert!((lr_at(1999, &c).unwrap() - lr_at(2000, &c).unwrap()).abs() < 2e-8);
}

#[test]
fn config_validation() {
    let mut c = paper();
    c.warmup_steps = c.steps;
    assert!(matches!(c.validate(), Err(Error::Config(_))));
    let c = TrainConfig { batch_size: 0, ..paper() };
    assert!(c.validate().is_err());
    let c = TrainConfig { peak_lr: 0.0, ..paper() };
    assert!(c.validate().is_err());
    assert!(TrainConfig::desk(0).validate().is_ok());
}

#[test]
fn adam_zero_gradient_keeps_parameters() {
    let mut p = vec![Tensor::<f64>::vector(vec![1.0, -2.0, 3.0])];
    let before = p.clone();
    let mut s = AdamState::new(&p);
    let g = vec![Tensor::zeros(vec![3])];
    adam_step(&["w".into()], &mut p, &g, &mut s, 0.1, &paper()).unwrap();
    assert_eq!(p, before);
    assert_eq!(s.step, 1);
}

#[test]
fn adam_one_step_by_hand() {
    let mut p = vec![Tensor::<f64>::vector(vec![1.0])];
    let mut s = AdamState::new(&p);
    adam_step(&["w".into()], &mut p, &[Tensor::vector(vec![1.0])], &mut s, 0.1, &paper()).unwrap();
    let expected = 1.0 - 0.1 / (1.0 + 1e-8);
    assert!((p[0].data()[0] - expected).abs() < 1e-15);
    assert!((p[0].data()[0] - 0.9).abs() < 1e-8);
}

/// Independently written Adam over plain slices.
fn reference_adam(theta: &mut [f64], m: &mut [f64], v: &mut [f64], g: &[f64], t: i32, lr: f64) {
    let (b1, b2, eps): (f64, f64, f64) = (0.9, 0.98, 1e-8);
    for i in 0..theta.len() {
        m[i] = b1 * m[i] + (1.0 - b1) * g[i];
        v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
        let mh = m[i] / (1.0 - b1.powi(t));
        let vh = v[i] / (1.0 - b2.powi(t));
        theta[i] -= lr * mh / (vh.sqrt() + eps);
    }
}

#[test]
fn adam_matches_reference_over_two_steps() {
    let mut rng = RngStream::new(8);
    let p0: Tensor<f64> = rng.normal_tensor(vec![4, 3], 1.0);
    let g1: Tensor<f64> = rng.normal_tensor(vec![4, 3], 1.0);
    let g2: Tensor<f64> = rng.normal_tensor(vec![4, 3], 1.0);
    let mut p = vec![p0.clone()];
    let mut s = AdamState::new(&p);
    let names = ["w".to_string()];
    adam_step(&names, &mut p, &[g1.clone()], &mut s, 1e-3, &paper()).unwrap();
    adam_step(&names, &mut p, &[g2.clone()], &mut s, 5e-4, &paper()).unwrap();

    let mut theta = p0.data().to_vec();
    let (mut m, mut v) = (vec![0.0; 12], vec![0.0; 12]);
    reference_adam(&mut theta, &mut m, &mut v, g1.data(), 1, 1e-3);
    reference_adam(&mut theta, &mut m, &mut v, g2.data(), 2, 5e-4);
    for (a, b) in p[0].data().iter().zip(&theta) {
        assert!((a - b).abs() < 1e-12);
    }
    assert_eq!(s.step, 2);
}

#[test]
fn adam_nan_gradient_names_parameter() {
    let mut p = vec![Tensor::<f64>::vector(vec![1.0]), Tensor::vector(vec![2.0])];
    let before = p.clone();
    let mut s = AdamState::new(&p);
    let g = vec![Tensor::vector(vec![0.5]), Tensor::vector(vec![f64::NAN])];
    let err = adam_step(&["a".into(), "layer.cls".into()], &mut p, &g, &mut s, 0.1, &paper()).unwrap_err();
    assert!(matches!(err, Error::Numeric(ref m) if m.contains("layer.cls")));
    assert_eq!(p, before);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn adam_reflection_symmetry(theta in prop::collection::vec(-5.0f64..5.0, 1..8), seed in any::<u64>()) {
        let n = theta.len();
        let mut rng = RngStream::new(seed);
        let grads: Vec<Tensor<f64>> = (0..3).map(|_| rng.normal_tensor(vec![n], 1.0)).collect();
        let names = ["w".to_string()];
        let mut a = vec![Tensor::vector(theta.clone())];
        let mut b = vec![a[0].map(|x| -x)];
        let (mut sa, mut sb) = (AdamState::new(&a), AdamState::new(&b));
        for g in &grads {
            adam_step(&names, &mut a, &[g.clone()], &mut sa, 0.01, &paper()).unwrap();
            adam_step(&names, &mut b, &[g.map(|x| -x)], &mut sb, 0.01, &paper()).unwrap();
        }
        for (x, y) in a[0].data().iter().zip(b[0].data()) {
            prop_assert_eq!(*x, -*y);
        }
    }
}

fn tiny_data() -> Vec<Sample<f32>> {
    generate_synthetic::<f32>(&SyntheticConfig::tiny(21)).unwrap().dataset.samples
}

fn head() -> HeadConfig {
    HeadConfig::desk(4, 32)
}

#[test]
fn zero_steps_returns_initialization() {
    let data = tiny_data();
    let refs: Vec<&Sample<f32>> = data.iter().collect();
    let config = TrainConfig {
        steps: 0,
        warmup_steps: 0,
        ..TrainConfig::tiny(3)
    };
    let out = train(&refs[..20], &refs[20..30], &head(), &config).unwrap();
    let init = HeadParams::<f32>::init(&head(), &mut RngStream::substream(3, 0)).unwrap();
    assert_eq!(out.best.params, init);
    assert_eq!(out.last.params, init);
    assert_eq!(out.history.best_step, Some(0));
}

#[test]
fn empty_training_split_is_config_error() {
    let data = tiny_data();
    let refs: Vec<&Sample<f32>> = data.iter().collect();
    let err = train(&[], &refs[..3], &head(), &TrainConfig::tiny(0)).err().unwrap();
    assert!(matches!(err, Error::Config(_)));
}

#[test]
fn training_reduces_loss_deterministically_and_tracks_dev() {
    let data = tiny_data();
    let refs: Vec<&Sample<f32>> = data.iter().collect();
    let dir = tempfile::tempdir().unwrap();
    let config = TrainConfig {
        checkpoint_path: Some(dir.path().to_path_buf()),
        ..TrainConfig::tiny(5)
    };
    let (train_set, dev_set) = (&refs[..160], &refs[160..]);
    let out = train(train_set, dev_set, &head(), &config).unwrap();
    let losses: Vec<f64> = out.history.losses().collect();
    assert_eq!(losses.len(), 500);
    let early: f64 = losses[..10].iter().sum::<f64>() / 10.0;
    let late: f64 = losses[490..].iter().sum::<f64>() / 10.0;
    assert!(late <= 0.5 * early, "loss {early} -> {late}");

    let again = train(train_set, dev_set, &head(), &config).unwrap();
    assert!(out.history.losses().zip(again.history.losses()).all(|(a, b)| a.to_bits() == b.to_bits()));
    assert_eq!(out.last.encode().unwrap(), again.last.encode().unwrap());

    let recorded = out.best.meta.dev_rmse.unwrap();
    let recheck = dev_rmse(&out.best.params, &out.best.config, dev_set).unwrap();
    assert!((recorded - recheck).abs() < 1e-6);
    let evals: Vec<(u64, f64)> = out.history.dev_evals().collect();
    assert_eq!(evals.iter().map(|e| e.0).collect::<Vec<_>>(), [100, 200, 300, 400, 500]);
    let min = evals.iter().map(|e| e.1).fold(f64::INFINITY, f64::min);
    assert_eq!(recorded, min);

    let stored = Checkpoint::<f32>::load(dir.path().join("best.ckpt")).unwrap();
    assert_eq!(stored, out.best);
    let last = Checkpoint::<f32>::load(dir.path().join("final.ckpt")).unwrap();
    assert_eq!(last, out.last);
    assert_eq!(last.extra.len(), 2 * last.params.len());
    let log = TrainHistory::read_jsonl(dir.path().join("history.jsonl")).unwrap();
    assert_eq!(log, out.history.entries);
}
