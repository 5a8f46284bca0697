//! Acceptance gate: one PASS/FAIL line per criterion, non-zero exit on any
//! failure. Run with `cargo test --test acceptance`.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use common::{gradcheck, op_cases};
use sipred::data::sfmt::{decode_tensor, encode_tensor, read_tensor, write_tensor};
use sipred::data::{
    generate_synthetic, make_partitions, Audiogram, Dataset, PartitionConfig, Sample,
    SyntheticConfig,
};
use sipred::eval::{
    ensemble, evaluate, rmse, wilcoxon_signed_rank, Alternative, PredictionRecord, TestMethod,
    TestSet, ZeroMethod,
};
use sipred::experiment::{run_on_dataset, ExperimentConfig, Preset};
use sipred::model::params::HeadVars;
use sipred::model::{
    predict, BinauralInput, Checkpoint, CrossSite, HeadConfig, HeadParams, HeadPass, Mode,
};
use sipred::optim::{dev_rmse, lr_at, train, TrainConfig};
use sipred::{Error, Graph, RngStream, Tensor};

type Outcome = std::result::Result<String, String>;

fn check(cond: bool, msg: impl Into<String>) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn audiogram(rng: &mut RngStream) -> Audiogram {
    let v: Vec<f64> = (0..8).map(|_| rng.uniform_in(0.0, 90.0)).collect();
    Audiogram::new(&v).unwrap()
}

fn random_input<T: sipred::Scalar>(layers: usize, t: usize, dim: usize, rng: &mut RngStream) -> BinauralInput<T> {
    BinauralInput::new(
        rng.normal_tensor(vec![layers, t, dim], 1.0),
        rng.normal_tensor(vec![layers, t, dim], 1.0),
        audiogram(rng),
        audiogram(rng),
    )
    .unwrap()
}

/// 1. Finite-difference gradient checks of every op and the full head.
fn gradients() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for (name, inputs, f) in op_cases() {
        let err = gradcheck(&inputs, f);
        check(err < 1e-3, format!("op {name}: relative error {err:.3e}"))?;
        worst = worst.max(err);
    }
    let config = HeadConfig {
        proj_dim: 8,
        heads: 2,
        ffn_dim: 16,
        max_frames: 4,
        init_std: 0.3,
        ..HeadConfig::new(2, 8)
    };
    let params = HeadParams::<f64>::init(&config, &mut RngStream::new(21)).unwrap();
    let mut rng = RngStream::new(40);
    let x = random_input::<f64>(2, 25, 8, &mut rng).downsampled(20).unwrap();
    let target = Tensor::vector(vec![0.37]);
    for mode in [Mode::Eval, Mode::Train] {
        let err = gradcheck(params.tensors(), |_, vars| {
            let bound = HeadVars::from_vars(&config, vars.to_vec());
            let mut rng = RngStream::new(8);
            let out = HeadPass::new(&config, &bound, mode, &mut rng).run_downsampled(&x)?;
            out.probability.reshape(vec![1])?.huber(target.clone(), 1.0)
        });
        check(err < 1e-3, format!("full head ({mode:?}): relative error {err:.3e}"))?;
        worst = worst.max(err);
    }
    let secs = start.elapsed().as_secs_f64();
    check(secs < 60.0, format!("took {secs:.1}s"))?;
    Ok(format!("{} ops + full head, max rel err {worst:.2e}, {secs:.1}s", op_cases().len()))
}

/// 2. Shape chain of the default head.
fn shapes() -> Outcome {
    let mut passes = 0;
    for (layers, dim) in [(4, 32), (25, 1024), (33, 1280)] {
        let config = HeadConfig::new(layers, dim);
        let params = HeadParams::<f32>::init(&config, &mut RngStream::new(layers as u64)).unwrap();
        for t in [1, 19, 20, 45, 300] {
            let mut rng = RngStream::new(t as u64);
            let x = random_input::<f32>(layers, t, dim, &mut rng);
            let graph = Graph::new();
            let vars = params.bind(&graph, &config, false);
            let mut pass = HeadPass::new(&config, &vars, Mode::Eval, &mut rng);
            let out = pass.run(&x).map_err(|e| e.to_string())?;
            let y = out.prediction();
            let frames = t.div_ceil(20);
            let tr = &pass.trace;
            check(y > 0.0 && y < 100.0, format!("({layers},{dim},{t}): prediction {y}"))?;
            check(tr.downsampled == [layers, frames, dim], format!("downsampled {:?}", tr.downsampled))?;
            check(tr.projected == [layers, frames, 384], format!("projected {:?}", tr.projected))?;
            check(tr.temporal_pooled == [layers, 384], format!("temporal {:?}", tr.temporal_pooled))?;
            check(tr.with_audiogram == [layers + 1, 384], format!("audiogram {:?}", tr.with_audiogram))?;
            check(tr.pooled == [384], format!("pooled {:?}", tr.pooled))?;
            check(out.left.shape().iter().product::<usize>() == 384, "left output width")?;
            passes += 1;
        }
    }
    Ok(format!("{passes} (L,d,t) combinations"))
}

/// 3. Swapping the ears leaves the f32 prediction unchanged.
fn channel_swap() -> Outcome {
    let mut worst: f32 = 0.0;
    let mut rng = RngStream::new(3);
    for k in 0..100u64 {
        let layers = rng.int_in(1, 6);
        let dim = rng.int_in(1, 24);
        let t = rng.int_in(1, 90);
        let config = HeadConfig {
            init_std: 0.3,
            ..HeadConfig::desk(layers, dim)
        };
        let params = HeadParams::<f32>::init(&config, &mut RngStream::new(1000 + k)).unwrap();
        let x = random_input::<f32>(layers, t, dim, &mut rng);
        let a = predict(&x, &params, &config, Mode::Eval, &mut RngStream::new(0)).unwrap();
        let b = predict(&x.swapped(), &params, &config, Mode::Eval, &mut RngStream::new(0)).unwrap();
        worst = worst.max((a - b).abs());
    }
    check(worst <= 1e-4, format!("max |Δ| {worst:e}"))?;
    Ok(format!("100 pairs, max |Δ| {worst:e}"))
}

/// 4. Without cross-attention, rewriting the opposite channel at any cross
/// site leaves the prediction untouched; with it, the same probe moves it.
fn ablation() -> Outcome {
    let mut rng = RngStream::new(4);
    let mut sites_seen = 0;
    let mut moved = 0;
    for k in 0..20u64 {
        let base = HeadConfig {
            init_std: 0.3,
            ..HeadConfig::desk(3, 8)
        };
        let x = random_input::<f64>(3, 45, 8, &mut rng);
        for cross in [false, true] {
            let config = base.clone().with_cross_attention(cross);
            let params = HeadParams::<f64>::init(&config, &mut RngStream::new(k)).unwrap();
            let graph = Graph::new();
            let vars = params.bind(&graph, &config, false);
            let mut r = RngStream::new(0);
            let plain = HeadPass::new(&config, &vars, Mode::Eval, &mut r).run(&x).unwrap().prediction();
            let count = std::cell::Cell::new(0);
            let probe = |site: CrossSite, t: &Tensor<f64>| {
                count.set(count.get() + 1);
                let mut p = RngStream::substream(k, site.block as u64);
                Tensor::from_fn(t.shape().to_vec(), |i| t.data()[i] + 10.0 * p.normal())
            };
            let probed = HeadPass::new(&config, &vars, Mode::Eval, &mut r)
                .with_cross_hook(&probe)
                .run(&x)
                .unwrap()
                .prediction();
            if cross {
                moved += usize::from(probed != plain);
            } else {
                check(probed == plain, format!("ablated prediction moved by {}", probed - plain))?;
                let sites = 2 * (3 * config.temporal_blocks + config.layer_blocks);
                check(count.get() == sites, format!("{} cross sites", count.get()))?;
                sites_seen += count.get();
            }
        }
    }
    check(moved == 20, format!("cross-attention model moved in only {moved}/20 probes"))?;
    Ok(format!("{sites_seen} probed sites, Δ = 0 exactly; control moved 20/20"))
}

fn desk_dataset() -> Dataset<f32> {
    generate_synthetic::<f32>(&SyntheticConfig::desk(1)).unwrap().dataset
}

/// 5 and 8 (second part) share the desk run.
struct DeskRun {
    ratio: f64,
    secs: f64,
    identical: bool,
    ensemble: Option<(f64, f64, f64)>,
}

fn desk_run() -> DeskRun {
    let dir = tempfile::tempdir().unwrap();
    let dataset = desk_dataset();
    let config = ExperimentConfig::preset(Preset::Desk, 1, dir.path().join("a"));
    let start = Instant::now();
    let a = run_on_dataset(&config, dataset.clone()).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let ratio = a.report.mean_rmse / a.constant_rmse();

    let repeat = ExperimentConfig {
        output_dir: dir.path().join("b"),
        ..config.clone()
    };
    let b = run_on_dataset(&repeat, dataset).unwrap();
    let identical = a.records.len() == b.records.len()
        && a.records.iter().zip(&b.records).all(|(x, y)| x.prediction.to_bits() == y.prediction.to_bits())
        && a.runs.iter().zip(&b.runs).all(|(x, y)| {
            x.best.encode().unwrap() == y.best.encode().unwrap()
                && x.last.encode().unwrap() == y.last.encode().unwrap()
                && x.history.losses().zip(y.history.losses()).all(|(p, q)| p.to_bits() == q.to_bits())
        });

    // second model: same partitions, different training seed
    let mut second = Vec::new();
    for (i, p) in a.partitions.partitions.iter().enumerate() {
        let pick = |v: &[usize]| -> Vec<&Sample<f32>> { v.iter().map(|&j| &a.dataset.samples[j]).collect() };
        let tc = TrainConfig {
            seed: 1000 + i as u64,
            ..a.config.train.clone()
        };
        second.push(train(&pick(&p.train), &pick(&p.dev), &a.config.head, &tc).unwrap().best);
    }
    let sets: Vec<TestSet<'_, f32>> = a
        .partitions
        .partitions
        .iter()
        .map(|p| TestSet {
            partition: p.name.clone(),
            samples: p.test.iter().map(|&j| &a.dataset.samples[j]).collect(),
        })
        .collect();
    let refs: Vec<&Checkpoint<f32>> = second.iter().collect();
    let (_, other) = evaluate("second", &refs, &sets).unwrap();
    let members: [&[PredictionRecord]; 2] = [&a.records, &other];
    let ens = ensemble(&members, "ensemble").unwrap();
    let ensemble = Some((rmse(&a.records).unwrap(), rmse(&other).unwrap(), rmse(&ens).unwrap()));
    DeskRun {
        ratio,
        secs,
        identical,
        ensemble,
    }
}

/// 6. γ-dominant data: the cross-attention head beats its ablated twin.
fn binaural_benefit() -> Outcome {
    let mut wins = 0;
    let mut lines = Vec::new();
    for seed in 1..=5u64 {
        let dataset = generate_synthetic::<f32>(&SyntheticConfig::binaural(100 + seed)).unwrap().dataset;
        let parts = make_partitions(&dataset, &PartitionConfig::default(), seed).unwrap();
        let p = &parts.partitions[0];
        let pick = |v: &[usize]| -> Vec<&Sample<f32>> { v.iter().map(|&j| &dataset.samples[j]).collect() };
        let (tr, dv, te) = (pick(&p.train), pick(&p.dev), pick(&p.test));
        let tc = TrainConfig {
            dev_eval_every: 750,
            ..TrainConfig::desk(seed)
        };
        let mut score = [0.0; 2];
        for (slot, cross) in [true, false].into_iter().enumerate() {
            let head = HeadConfig {
                init_std: 0.2,
                ..HeadConfig::desk(4, 32)
            }
            .with_cross_attention(cross);
            let out = train(&tr, &dv, &head, &tc).unwrap();
            score[slot] = dev_rmse(&out.best.params, &out.best.config, &te).unwrap();
        }
        wins += usize::from(score[0] < score[1]);
        lines.push(format!("{:.2}/{:.2}", score[0], score[1]));
    }
    let detail = format!("cross/ablated test RMSE per seed {}", lines.join(", "));
    check(wins >= 4, format!("cross won {wins}/5; {detail}"))?;
    Ok(format!("cross won {wins}/5; {detail}"))
}

/// 7. Wilcoxon exact path against brute force, and the normal approximation
/// against full enumeration at n = 30.
fn wilcoxon() -> Outcome {
    fn ranks(abs: &[f64]) -> Vec<f64> {
        abs.iter()
            .map(|&x| {
                let below = abs.iter().filter(|&&y| y < x).count() as f64;
                let equal = abs.iter().filter(|&&y| y == x).count() as f64;
                below + (equal + 1.0) / 2.0
            })
            .collect()
    }
    fn brute(d: &[f64]) -> f64 {
        let nz: Vec<f64> = d.iter().copied().filter(|&x| x != 0.0).collect();
        let r = ranks(&nz.iter().map(|x| x.abs()).collect::<Vec<_>>());
        let obs: f64 = nz.iter().zip(&r).filter(|(x, _)| **x > 0.0).map(|(_, r)| r).sum();
        let n = nz.len();
        let hits = (0u64..1 << n)
            .filter(|m| (0..n).filter(|i| m >> i & 1 == 1).map(|i| r[i]).sum::<f64>() >= obs - 1e-9)
            .count();
        hits as f64 / (1u64 << n) as f64
    }
    let mut rng = RngStream::new(7);
    let mut fixtures = 0;
    for n in 1..=12 {
        for _ in 0..25 {
            let d: Vec<f64> = (0..n).map(|_| (rng.normal() * 2.5).round()).collect();
            if d.iter().all(|&x| x == 0.0) {
                continue;
            }
            let zeros = vec![0.0; n];
            let p = wilcoxon_signed_rank(&d, &zeros, Alternative::Greater, ZeroMethod::Wilcox)
                .map_err(|e| e.to_string())?
                .p_value;
            check(p == brute(&d), format!("{d:?}: {p} vs {}", brute(&d)))?;
            fixtures += 1;
        }
    }
    let five = wilcoxon_signed_rank(&[1.0, 2.0, 3.0, 4.0, 5.0], &[0.0; 5], Alternative::Greater, ZeroMethod::Wilcox)
        .unwrap()
        .p_value;
    check(five == 0.03125, format!("[1..5] gave {five}"))?;

    let d: Vec<f64> = (0..30).map(|_| rng.normal() + 0.3).collect();
    let approx = wilcoxon_signed_rank(&d, &[0.0; 30], Alternative::Greater, ZeroMethod::Wilcox).unwrap();
    check(approx.method == TestMethod::Normal, "n = 30 not on the normal path")?;
    let r: Vec<i64> = ranks(&d.iter().map(|x| x.abs()).collect::<Vec<_>>()).iter().map(|&r| r as i64).collect();
    let observed: i64 = d.iter().zip(&r).filter(|(x, _)| **x > 0.0).map(|(_, r)| r).sum();
    let (mut w, mut hits, mut signs) = (0i64, 0u64, 0u32);
    for k in 1u64..(1 << 30) {
        hits += u64::from(w >= observed);
        let bit = k.trailing_zeros();
        signs ^= 1 << bit;
        w += if signs >> bit & 1 == 1 { r[bit as usize] } else { -r[bit as usize] };
    }
    hits += u64::from(w >= observed);
    let exact = hits as f64 / (1u64 << 30) as f64;
    let gap = (approx.p_value - exact).abs();
    check(gap < 0.01, format!("n = 30: normal {} vs enumeration {exact}", approx.p_value))?;
    Ok(format!("{fixtures} brute-force fixtures exact, p(1..5) = {five}, n=30 gap {gap:.4}"))
}

/// 8 (first part). Jensen bound on random fixtures.
fn ensemble_convexity(desk: Option<(f64, f64, f64)>) -> Outcome {
    let mut rng = RngStream::new(8);
    for k in 0..1000 {
        let n = rng.int_in(1, 50);
        let mut a = Vec::with_capacity(n);
        let mut b = Vec::with_capacity(n);
        for i in 0..n {
            let target = rng.uniform_in(0.0, 100.0);
            let rec = |m: &str, p: f64| PredictionRecord {
                sample_id: i.to_string(),
                model_id: m.into(),
                partition: "p".into(),
                prediction: p,
                target,
            };
            a.push(rec("a", rng.uniform_in(0.0, 100.0)));
            b.push(rec("b", rng.uniform_in(0.0, 100.0)));
        }
        let e = ensemble(&[&a, &b], "e").unwrap();
        let mse = |r: &[PredictionRecord]| rmse(r).unwrap().powi(2);
        check(mse(&e) <= (mse(&a) + mse(&b)) / 2.0 * (1.0 + 1e-12), format!("fixture {k} violates Jensen"))?;
    }
    let (ra, rb, re) = desk.ok_or("desk run unavailable")?;
    check(re <= ra.max(rb), format!("desk ensemble {re:.4} > members {ra:.4}, {rb:.4}"))?;
    Ok(format!("1000 fixtures; desk ensemble {re:.3} vs members {ra:.3}, {rb:.3}"))
}

/// 9. Schedule constants of the paper preset.
fn schedule() -> Outcome {
    let c = TrainConfig::paper(0);
    let at = |s| lr_at(s, &c).unwrap();
    check(at(0) == 0.0, format!("lr_at(0) = {}", at(0)))?;
    check(at(2000) == 3e-5, format!("lr_at(2000) = {}", at(2000)))?;
    check(at(60000) == c.min_lr, format!("lr_at(60000) = {}", at(60000)))?;
    let grid: Vec<f64> = (0..=600).map(|i| at(2000 + i * 58000 / 600)).collect();
    check(grid.windows(2).all(|w| w[1] <= w[0]), "not monotone after warmup")?;
    check(grid.windows(2).filter(|w| w[1] < w[0]).count() == 600, "not strictly decreasing on the grid")?;
    Ok("lr(0)=0, lr(2000)=3e-5, lr(60000)=min_lr, 601-point grid decreasing".into())
}

/// 10. Bit-exact round trips and corruption diagnostics.
fn formats() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = RngStream::new(10);
    for shape in [vec![7], vec![3, 7, 5], vec![2, 1, 3, 4]] {
        let t32: Tensor<f32> = rng.normal_tensor(shape.clone(), 1.0);
        let t64: Tensor<f64> = rng.normal_tensor(shape.clone(), 1.0);
        write_tensor(dir.path().join("a"), &t32).unwrap();
        write_tensor(dir.path().join("b"), &t64).unwrap();
        let b32: Tensor<f32> = read_tensor(dir.path().join("a")).unwrap();
        let b64: Tensor<f64> = read_tensor(dir.path().join("b")).unwrap();
        check(b32.shape() == t32.shape() && b32.data().iter().zip(t32.data()).all(|(x, y)| x.to_bits() == y.to_bits()), "f32 SFMT round trip")?;
        check(b64.shape() == t64.shape() && b64.data().iter().zip(t64.data()).all(|(x, y)| x.to_bits() == y.to_bits()), "f64 SFMT round trip")?;
    }
    let config = HeadConfig::desk(3, 8);
    let p32 = HeadParams::<f32>::init(&config, &mut RngStream::new(1)).unwrap();
    let ablated = config.clone().with_cross_attention(false);
    let p64 = HeadParams::<f64>::init(&ablated, &mut RngStream::new(1)).unwrap();
    let mut c32 = Checkpoint::new(config.clone(), p32);
    c32.meta.dev_rmse = Some(12.345678901234567);
    c32.extra.push(("adam.m.x".into(), Tensor::vector(vec![1.5f32, -0.0])));
    let c64 = Checkpoint::new(ablated, p64);
    c32.save(dir.path().join("c32")).unwrap();
    c64.save(dir.path().join("c64")).unwrap();
    check(Checkpoint::<f32>::load(dir.path().join("c32")).unwrap() == c32, "f32 checkpoint round trip")?;
    check(Checkpoint::<f64>::load(dir.path().join("c64")).unwrap() == c64, "f64 checkpoint round trip")?;
    let bytes = std::fs::read(dir.path().join("c32")).unwrap();
    check(
        bytes == Checkpoint::<f32>::load(dir.path().join("c32")).unwrap().encode().unwrap(),
        "checkpoint re-encode differs",
    )?;

    // corrupted fixtures
    let good = encode_tensor(&Tensor::<f32>::zeros(vec![4, 4])).unwrap();
    let expect = |bytes: &[u8], offset: usize, needle: &str| -> std::result::Result<(), String> {
        match decode_tensor(bytes) {
            Err(Error::Format { offset: o, msg }) if o == offset as u64 && msg.contains(needle) => Ok(()),
            other => Err(format!("expected format error at {offset} ({needle}), got {:?}", other.err())),
        }
    };
    let mut bad = good.clone();
    bad[0] = b'X';
    expect(&bad, 0, "magic")?;
    let mut bad = good.clone();
    bad[4] = 2;
    expect(&bad, 4, "version")?;
    let mut bad = good.clone();
    bad[8..12].copy_from_slice(&0u32.to_le_bytes());
    expect(&bad, 8, "rank")?;
    let truncated = &good[..good.len() - 5];
    match decode_tensor(truncated) {
        Err(Error::Format { msg, .. }) if msg.contains("expected 64 bytes, found 59") => {}
        other => return Err(format!("truncation: {:?}", other.err())),
    }
    let mut ck = std::fs::read(dir.path().join("c64")).unwrap();
    ck[12] = 1;
    check(matches!(Checkpoint::<f64>::decode(&ck), Err(Error::Format { offset: 12, .. })), "checkpoint precision flag")?;
    let ck = std::fs::read(dir.path().join("c64")).unwrap();
    check(matches!(Checkpoint::<f64>::decode(&ck[..ck.len() - 1]), Err(Error::Format { .. })), "checkpoint truncation")?;
    check(matches!(Checkpoint::<f64>::decode(b"NOTACKPT"), Err(Error::Format { offset: 0, .. })), "checkpoint magic")?;
    Ok("SFMT + checkpoints bit-exact in f32/f64; 7 corruption fixtures diagnosed".into())
}

fn main() {
    let mut failures = 0;
    let mut report = |n: u32, name: &str, f: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("criterion {n:>2} {name}: PASS ({detail}) [{secs:.1}s]"),
            Err(detail) => {
                failures += 1;
                println!("criterion {n:>2} {name}: FAIL ({detail}) [{secs:.1}s]");
            }
        }
    };
    report(1, "gradient suite", &mut gradients);
    report(2, "shape suite", &mut shapes);
    report(3, "channel-swap invariance", &mut channel_swap);
    report(4, "ablation contract", &mut ablation);
    let mut desk = None;
    report(5, "learnability (desk)", &mut || {
        let run = desk_run();
        desk = run.ensemble;
        check(run.identical, "repeat run differs")?;
        check(run.ratio <= 0.7, format!("RMSE ratio {:.3} > 0.7", run.ratio))?;
        Ok(format!(
            "test RMSE / constant RMSE = {:.3}, repeat bit-identical, {:.0}s per 3-partition run",
            run.ratio, run.secs
        ))
    });
    report(6, "binaural benefit", &mut binaural_benefit);
    report(7, "Wilcoxon correctness", &mut wilcoxon);
    report(8, "ensemble convexity", &mut || ensemble_convexity(desk));
    report(9, "schedule pinning", &mut schedule);
    report(10, "format round trips", &mut formats);
    if failures > 0 {
        println!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}
