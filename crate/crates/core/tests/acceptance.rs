//! End-to-end acceptance criteria. Each check prints one PASS/FAIL line;
//! the test fails if any check fails.

use std::collections::HashSet;
use std::time::Instant;

use fcfl_core::data::{
    balance_classes, make_splits, stack_batch, synth_dataset, tile_image, untile_grid, AugmentSpec, Label,
    LabeledDataset, LabeledImage, Split, SplitSpec,
};
use fcfl_core::diagnostics::{gradient_suite, SUITE_OPS};
use fcfl_core::fusion::{count_attention_ops, count_self_attention_ops, BranchState, CrossFusion, EncoderBlock};
use fcfl_core::head::cross_entropy;
use fcfl_core::metrics::{binary_roc, confusion, prf};
use fcfl_core::nn::{Init, ParamStore};
use fcfl_core::nrca::NrcaConfig;
use fcfl_core::train::{
    ablate, accuracy, adamw_step, denoise_mse, lr_schedule, smooth_images, train, train_denoiser, AblationKind,
    AdamState, AdamW, Checkpoint, DenoiseConfig, TrainConfig,
};
use fcfl_core::{grad_check, Error, FcflModel, GradCheckOptions, ModelConfig, Tape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Check = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn fail(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn bits(t: &Tensor<f32>) -> Vec<u32> {
    t.data().iter().map(|v| v.to_bits()).collect()
}

fn gradient_suite_at_f64() -> Outcome {
    let start = Instant::now();
    let results = gradient_suite(0, 5, GradCheckOptions::default()).map_err(fail)?;
    let secs = start.elapsed().as_secs_f64();
    for op in SUITE_OPS {
        let n = results.iter().filter(|r| r.op_name.starts_with(op)).count();
        ensure(n >= 5, || format!("{op} has only {n} cases"))?;
    }
    let worst = results.iter().map(|r| r.max_relative_error).fold(0.0, f64::max);
    if let Some(r) = results.iter().find(|r| !r.pass || r.max_relative_error >= 1e-6) {
        return Err(format!(
            "{} rel err {:.2e} at {:?}",
            r.op_name, r.max_relative_error, r.worst
        ));
    }
    ensure(secs < 300.0, || format!("took {secs:.1}s"))?;
    Ok(format!(
        "{} cases over {} ops, worst rel err {worst:.2e}, {secs:.1}s",
        results.len(),
        SUITE_OPS.len()
    ))
}

fn conv_adjointness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut case, mut worst) = (0, 0.0f64);
    while case < 20 {
        let (b, cin, cout) = (
            rng.random_range(1..=2),
            rng.random_range(1..=4),
            rng.random_range(1..=4),
        );
        let (k, stride) = (rng.random_range(1..=4), rng.random_range(1..=3));
        let pad = rng.random_range(0..k);
        let (oh, ow) = (rng.random_range(1..=6), rng.random_range(1..=6));
        let (h, w) = ((oh - 1) * stride + k, (ow - 1) * stride + k);
        if h <= 2 * pad || w <= 2 * pad {
            continue;
        }
        let x = Tensor::<f64>::randn([b, cin, h - 2 * pad, w - 2 * pad], 1.0, &mut rng);
        let kern = Tensor::<f64>::randn([cout, cin, k, k], 1.0, &mut rng);
        let u = Tensor::<f64>::randn([b, cout, oh, ow], 1.0, &mut rng);
        let mut tape = Tape::no_grad();
        let (xv, kv, uv) = (tape.constant(x.clone()), tape.constant(kern), tape.constant(u.clone()));
        let y = tape.conv2d(xv, kv, None, stride, pad).map_err(fail)?;
        let z = tape.conv_transpose2d(uv, kv, None, stride, pad).map_err(fail)?;
        let dot = |a: &Tensor<f64>, b: &Tensor<f64>| a.data().iter().zip(b.data()).map(|(p, q)| p * q).sum::<f64>();
        let gap = (dot(tape.value(y), &u) - dot(&x, tape.value(z))).abs();
        ensure(gap < 1e-10, || format!("case {case}: gap {gap:.2e}"))?;
        worst = worst.max(gap);
        case += 1;
    }
    Ok(format!("20 cases, worst gap {worst:.2e}"))
}

fn rows_sum_to_one(t: &Tensor<f64>) -> bool {
    let n = *t.shape().last().unwrap();
    t.data().chunks(n).all(|r| (r.iter().sum::<f64>() - 1.0).abs() < 1e-6)
}

fn shapes_and_normalization() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let model = FcflModel::<f64>::new(ModelConfig::toy()).map_err(fail)?;
    let mut store = model.params().clone();
    for t in store.tensors_mut() {
        *t = Tensor::randn(t.shape().to_vec(), 0.2, &mut rng);
    }
    let model = FcflModel::from_params(ModelConfig::toy(), store).map_err(fail)?;
    let mut tape = Tape::no_grad();
    let p = model.params().bind(&mut tape);
    let x = tape.constant(Tensor::randn([2, 3, 48, 48], 1.0, &mut rng));
    let out = model.forward(&mut tape, &p, x).map_err(fail)?;
    // 48/12 → 16 small patches, 48/16 → 9 large patches; each CLS query
    // uses the head count of the branch it reads from
    for &(s, l) in &out.fusion.cross_attention {
        ensure(tape.shape(s) == [2 * 4, 1, 1 + 9], || {
            format!("small map {:?}", tape.shape(s))
        })?;
        ensure(tape.shape(l) == [2 * 2, 1, 1 + 16], || {
            format!("large map {:?}", tape.shape(l))
        })?;
        ensure(rows_sum_to_one(tape.value(s)) && rows_sum_to_one(tape.value(l)), || {
            "cross rows".into()
        })?;
    }
    let mut bstore = ParamStore::<f64>::new();
    let blk = EncoderBlock::new(&mut Init::new(&mut bstore, &mut rng), 32, 2).map_err(fail)?;
    let mut t2 = Tape::no_grad();
    let bp = bstore.bind(&mut t2);
    let tok = t2.constant(Tensor::randn([2, 17, 32], 1.0, &mut rng));
    let (_, attn) = blk.forward_with_attention(&mut t2, &bp, tok).map_err(fail)?;
    ensure(rows_sum_to_one(t2.value(attn)), || "self-attention rows".into())?;
    let probs = cross_entropy(&mut tape, out.logits, &[0, 2]).map_err(fail)?.predicted;
    ensure(rows_sum_to_one(&probs), || "class probabilities".into())?;
    Ok(format!(
        "{} fusion rounds, maps [8,1,10] and [4,1,17], all rows sum to 1",
        out.fusion.cross_attention.len()
    ))
}

fn linear_cross_attention() -> Outcome {
    let mut ratios = Vec::new();
    for l in [64usize, 128, 256] {
        let lin = count_attention_ops(2 * l, 192, 3) as f64 / count_attention_ops(l, 192, 3) as f64;
        let quad = count_self_attention_ops(2 * l, 192, 3) as f64 / count_self_attention_ops(l, 192, 3) as f64;
        ensure((lin / 2.0 - 1.0).abs() <= 0.05, || format!("L={l}: cross ratio {lin}"))?;
        ensure((quad / 4.0 - 1.0).abs() <= 0.05, || format!("L={l}: self ratio {quad}"))?;
        ratios.push(format!("{lin:.3}/{quad:.3}"));
    }
    Ok(format!("cross/self ratios {}", ratios.join(", ")))
}

fn zero_fusion_keeps_cls() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut store = ParamStore::<f32>::new();
    let cf = CrossFusion::new(&mut Init::new(&mut store, &mut rng), 32, 64, 4).map_err(fail)?;
    for t in store.tensors_mut() {
        *t = Tensor::zeros(t.shape().to_vec());
    }
    let own = Tensor::<f32>::randn([3, 17, 32], 3.0, &mut rng);
    let other = Tensor::<f32>::randn([3, 10, 64], 3.0, &mut rng);
    let mut tape = Tape::no_grad();
    let p = store.bind(&mut tape);
    let (ov, xv) = (tape.constant(own.clone()), tape.constant(other));
    let own_s = BranchState {
        tokens: ov,
        num_patches: 16,
        embed_dim: 32,
    };
    let other_s = BranchState {
        tokens: xv,
        num_patches: 9,
        embed_dim: 64,
    };
    let out = cf.forward(&mut tape, &p, &own_s, &other_s).map_err(fail)?;
    ensure(bits(tape.value(out.state.tokens)) == bits(&own), || {
        "tokens changed".into()
    })?;
    Ok("CLS and patches bitwise unchanged".into())
}

fn pairwise_auc(scores: &[f64], pos: &[bool]) -> f64 {
    let (mut num, mut pairs) = (0.0, 0.0);
    for (si, &pi) in scores.iter().zip(pos) {
        for (sj, &pj) in scores.iter().zip(pos) {
            if pi && !pj {
                pairs += 1.0;
                num += if si > sj {
                    1.0
                } else if si == sj {
                    0.5
                } else {
                    0.0
                };
            }
        }
    }
    num / pairs
}

fn metric_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for case in 0..100 {
        let k = rng.random_range(2..=5);
        let n = rng.random_range(1..=200);
        let t: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        let p: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        let r = prf(&confusion(&t, &p, k).map_err(fail)?);
        for c in 0..k {
            let count = |f: &dyn Fn(usize) -> bool| (0..n).filter(|&i| f(i)).count() as f64;
            let tp = count(&|i| t[i] == c && p[i] == c);
            let fp = count(&|i| t[i] != c && p[i] == c);
            let fnn = count(&|i| t[i] == c && p[i] != c);
            let pr = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
            let re = if tp + fnn > 0.0 { tp / (tp + fnn) } else { 0.0 };
            let f1 = if pr + re > 0.0 { 2.0 * pr * re / (pr + re) } else { 0.0 };
            let got = &r.per_class[c];
            ensure(
                (got.precision - pr).abs() < 1e-12 && (got.recall - re).abs() < 1e-12 && (got.f1 - f1).abs() < 1e-12,
                || format!("prf case {case} class {c}"),
            )?;
        }
    }
    let mut done = 0;
    while done < 100 {
        let n = rng.random_range(2..=200);
        let levels = rng.random_range(2..=10);
        let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0..levels) as f64).collect();
        let pos: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
        if pos.iter().all(|&b| b) || pos.iter().all(|&b| !b) {
            continue;
        }
        let auc = binary_roc(&scores, &pos).map_err(fail)?.auc;
        let expect = pairwise_auc(&scores, &pos);
        ensure((auc - expect).abs() < 1e-9, || format!("auc {auc} vs {expect}"))?;
        done += 1;
    }
    let pos = [true, false, true, false, false];
    let uniform = binary_roc(&[0.4; 5], &pos).map_err(fail)?.auc;
    ensure(uniform == 0.5, || format!("uniform auc {uniform}"))?;
    Ok("100 PRF instances, 100 AUC instances with ties, uniform AUC = 0.5".into())
}

fn loss_anchors() -> Outcome {
    let mut tape = Tape::<f64>::new();
    let z = tape.constant(Tensor::zeros([5, 3]));
    let out = cross_entropy(&mut tape, z, &[0, 1, 2, 2, 1]).map_err(fail)?;
    let l = tape.value(out.loss).item().map_err(fail)?;
    ensure((l - 3f64.ln()).abs() < 1e-9, || format!("uniform loss {l}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let logits = Tensor::<f64>::randn([4, 3], 1.5, &mut rng);
    let labels = [2usize, 0, 1, 2];
    let mut tape = Tape::<f64>::new();
    let zv = tape.param(logits.clone());
    let out = cross_entropy(&mut tape, zv, &labels).map_err(fail)?;
    tape.backward(out.loss).map_err(fail)?;
    let analytic = tape.grad(zv).ok_or("no gradient")?.clone();
    let closed = out.predicted.zip_map(&out.target, |q, d| (q - d) / 4.0);
    let gap = analytic
        .data()
        .iter()
        .zip(closed.data())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    ensure(gap < 1e-12, || format!("closed form gap {gap:.2e}"))?;
    let r = grad_check(
        "cross_entropy",
        |t, v| Ok(cross_entropy(t, v, &labels)?.loss),
        &logits,
        GradCheckOptions::default(),
    )
    .map_err(fail)?;
    ensure(r.max_relative_error < 1e-6, || {
        format!("finite differences {:.2e}", r.max_relative_error)
    })?;
    Ok(format!(
        "ln 3 within {:.1e}, (q_s − q_d)/B vs finite differences {:.2e}",
        (l - 3f64.ln()).abs(),
        r.max_relative_error
    ))
}

/// Two-sided 99% interval of Binomial(n, p), in successes.
fn binomial_bounds(n: usize, p: f64) -> (usize, usize) {
    let mut pmf = vec![0.0f64; n + 1];
    for (k, slot) in pmf.iter_mut().enumerate() {
        let mut c = 1.0;
        for i in 0..k {
            c *= (n - i) as f64 / (i + 1) as f64;
        }
        *slot = c * p.powi(k as i32) * (1.0 - p).powi((n - k) as i32);
    }
    let mut cdf = 0.0;
    let (mut lo, mut hi) = (0, n);
    let mut lo_set = false;
    for (k, v) in pmf.iter().enumerate() {
        cdf += v;
        if !lo_set && cdf > 0.005 {
            lo = k;
            lo_set = true;
        }
        if cdf >= 0.995 {
            hi = k;
            break;
        }
    }
    (lo, hi)
}

fn toy_overfit() -> Outcome {
    let start = Instant::now();
    let mut images = synth_dataset(11, 48, 8).images;
    images.truncate(32);
    for im in &mut images {
        im.split = Some(Split::Train);
    }
    let data = LabeledDataset::new(images).map_err(fail)?;
    let refs: Vec<&LabeledImage> = data.images.iter().collect();
    let cfg = ModelConfig::toy();
    let tcfg = TrainConfig {
        epochs: 100,
        ..TrainConfig::toy()
    };

    let untrained = FcflModel::<f32>::new(cfg.clone()).map_err(fail)?;
    let norm = fcfl_core::data::NormStats::fit(&data.images).map_err(fail)?;
    let chance = accuracy(&untrained, &norm, &refs, 8).map_err(fail)?;
    let (lo, hi) = binomial_bounds(32, 1.0 / 3.0);
    let hits = (chance * 32.0).round() as usize;
    ensure((lo..=hi).contains(&hits), || {
        format!("untrained {hits}/32 outside [{lo}, {hi}]")
    })?;

    let outcome = train(&cfg, &tcfg, &data, None).map_err(fail)?;
    let model = outcome.last.model().map_err(fail)?;
    let acc = accuracy(&model, &outcome.last.norm, &refs, 8).map_err(fail)?;
    let secs = start.elapsed().as_secs_f64();
    ensure(acc >= 0.95, || {
        format!("train accuracy {acc} after {} epochs", tcfg.epochs)
    })?;
    // trailing 10-epoch moving average of the train loss
    let avg = |e: usize| {
        let w = &outcome.log[e.saturating_sub(9)..=e];
        w.iter().map(|l| l.train_loss).sum::<f64>() / w.len() as f64
    };
    let (early, late) = (avg(5), avg(50));
    ensure(late < early, || {
        format!("loss average {late:.4} at epoch 50 vs {early:.4} at epoch 5")
    })?;
    ensure(secs < 600.0, || format!("took {secs:.0}s"))?;
    Ok(format!(
        "train accuracy {acc:.3} after {} epochs in {secs:.0}s; loss average {early:.3} → {late:.3}; untrained {hits}/32 within [{lo}, {hi}]",
        tcfg.epochs
    ))
}

fn nrca_denoising() -> Outcome {
    let clean = smooth_images(64, 3, 32, 9);
    let held = smooth_images(16, 3, 32, 10);
    let dcfg = DenoiseConfig {
        steps: 200,
        ..DenoiseConfig::default()
    };
    let outcome = train_denoiser(&NrcaConfig::default(), 3, &clean, &dcfg).map_err(fail)?;
    let (model, ident) = denoise_mse(&outcome, &held, dcfg.noise_sigma, 11).map_err(fail)?;
    let ratio = model / ident;
    ensure(ratio < 0.8, || format!("MSE ratio {ratio:.3}"))?;
    Ok(format!(
        "held-out MSE {model:.4} vs identity {ident:.4} (ratio {ratio:.3}) after {} steps",
        dcfg.steps
    ))
}

fn schedule_and_optimizer() -> Outcome {
    let cfg = TrainConfig::default();
    for (e, want) in [(0, 1e-4), (30, 5e-5), (90, 1.25e-5)] {
        let got = lr_schedule(e, &cfg);
        ensure(got == want, || format!("lr({e}) = {got}"))?;
    }
    let hp = AdamW::default();
    let (p0, g, lr) = (0.7f64, -0.3f64, 1e-3);
    let mut store = ParamStore::<f64>::new();
    store.add("w", Tensor::full([1], p0));
    let mut state = AdamState::new(&store);
    adamw_step(&mut store, &[Tensor::full([1], g)], &mut state, lr, &hp).map_err(fail)?;
    let m_hat = (1.0 - hp.beta1) * g / (1.0 - hp.beta1);
    let v_hat = (1.0 - hp.beta2) * g * g / (1.0 - hp.beta2);
    let expect = p0 * (1.0 - lr * hp.weight_decay) - lr * m_hat / (v_hat.sqrt() + hp.eps);
    let gap = (store.tensors()[0].data()[0] - expect).abs();
    ensure(gap < 1e-12, || format!("adamw gap {gap:.2e}"))?;
    Ok(format!("lr anchors exact, AdamW step within {gap:.1e}"))
}

fn protocol_fidelity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let img = Tensor::new(
        [3, 1024, 1024],
        (0..3 * 1024 * 1024).map(|_| rng.random::<f32>()).collect(),
    )
    .map_err(fail)?;
    let tiles = tile_image(&img).map_err(fail)?;
    ensure(
        tiles.len() == 16 && tiles.iter().all(|t| t.shape() == [3, 256, 256]),
        || "tile shapes".into(),
    )?;
    ensure(bits(&untile_grid(&tiles, 4, 4).map_err(fail)?) == bits(&img), || {
        "reassembly".into()
    })?;

    let mut images = Vec::new();
    for (label, n) in Label::ALL.into_iter().zip([536usize, 263, 345]) {
        for i in 0..n {
            let px = Tensor::new([1, 2, 2], (0..4).map(|_| rng.random::<f32>()).collect()).map_err(fail)?;
            let mut im = LabeledImage::new(px, label, format!("{label}/{i}"));
            im.split = Some(Split::Train);
            images.push(im);
        }
    }
    let balanced = balance_classes(images.clone(), &AugmentSpec::default()).map_err(fail)?;
    let counts = LabeledDataset::class_counts(&balanced);
    ensure(counts == [536; 3], || format!("balanced counts {counts:?}"))?;

    let n = images.len();
    let spec = SplitSpec::default();
    let a = make_splits(images.clone(), &spec).map_err(fail)?;
    let b = make_splits(images, &spec).map_err(fail)?;
    ensure(a == b, || "splits differ between runs".into())?;
    let ids: HashSet<&str> = a.images.iter().map(|im| im.source_id.as_str()).collect();
    ensure(
        ids.len() == n && a.len() == n && a.images.iter().all(|im| im.split.is_some()),
        || "not a partition".into(),
    )?;
    let (te, tr, va) = (a.count(Split::Test), a.count(Split::Train), a.count(Split::Val));
    ensure(te == 750 && te + tr + va == n, || format!("split sizes {te}/{tr}/{va}"))?;
    Ok(format!(
        "16 tiles reassemble bitwise; balanced to {counts:?}; splits {te}/{tr}/{va}"
    ))
}

fn persistence() -> Outcome {
    let ds = synth_dataset(4, 48, 13);
    let spec = SplitSpec {
        test_count: 3,
        train_val_ratio: 0.75,
        seed: 13,
        group_by_source: false,
    };
    let data = make_splits(ds.images, &spec).map_err(fail)?;
    let tcfg = TrainConfig {
        epochs: 2,
        ..TrainConfig::toy()
    };
    let dir = tempfile::tempdir().map_err(fail)?;
    let a = train(&ModelConfig::toy(), &tcfg, &data, Some(dir.path())).map_err(fail)?;
    let b = train(&ModelConfig::toy(), &tcfg, &data, None).map_err(fail)?;
    ensure(a.log == b.log, || "epoch logs differ between seeded runs".into())?;
    for (x, y) in a.last.params.tensors().iter().zip(b.last.params.tensors()) {
        ensure(bits(x) == bits(y), || "parameters differ between seeded runs".into())?;
    }

    let loaded = Checkpoint::load(dir.path().join("last")).map_err(fail)?;
    let test: Vec<&LabeledImage> = data.split(Split::Test).collect();
    let (x, _) = stack_batch(&test, Some(&loaded.norm)).map_err(fail)?;
    let before = a.last.model().map_err(fail)?.predict(&x).map_err(fail)?;
    let after = loaded.model().map_err(fail)?.predict(&x).map_err(fail)?;
    ensure(bits(&before) == bits(&after), || {
        "logits changed across save/load".into()
    })?;

    let blob = dir.path().join("last/params.bin");
    let mut bytes = std::fs::read(&blob).map_err(fail)?;
    let i = bytes.len() / 3;
    bytes[i] ^= 0x10;
    std::fs::write(&blob, bytes).map_err(fail)?;
    match Checkpoint::load(dir.path().join("last")) {
        Err(Error::Integrity(_)) => {}
        other => return Err(format!("corrupted blob loaded as {:?}", other.map(|c| c.epoch))),
    }
    Ok("bitwise logits after reload, flipped byte rejected, seeded runs identical".into())
}

fn ablation_rows() -> Outcome {
    let ds = synth_dataset(3, 48, 14);
    let spec = SplitSpec {
        test_count: 3,
        train_val_ratio: 0.75,
        seed: 14,
        group_by_source: false,
    };
    let data = make_splits(ds.images, &spec).map_err(fail)?;
    let tcfg = TrainConfig {
        epochs: 1,
        ..TrainConfig::toy()
    };
    let base = ModelConfig::toy();
    let mut summary = Vec::new();
    for (kind, want) in [
        (AblationKind::PatchSize, vec!["(12,12)", "(12,16)", "(16,16)"]),
        (AblationKind::Nrca, vec!["Yes", "No"]),
        (AblationKind::Head, vec!["Yes", "No"]),
    ] {
        let table = ablate(&base, &tcfg, kind, &data).map_err(fail)?;
        let got: Vec<&str> = table.rows.iter().map(|r| r.variant.as_str()).collect();
        ensure(got == want, || format!("{kind}: rows {got:?}"))?;
        ensure(
            table
                .rows
                .iter()
                .all(|r| r.seed == base.seed && r.epochs == tcfg.epochs),
            || format!("{kind}: budget"),
        )?;
        let mut hashes: Vec<&str> = table.rows.iter().map(|r| r.config_hash.as_str()).collect();
        hashes.sort();
        hashes.dedup();
        ensure(hashes.len() == want.len(), || {
            format!("{kind}: duplicate variant configs")
        })?;
        summary.push(format!("{kind} {}", got.join(" ")));
    }
    Ok(summary.join("; "))
}

#[test]
fn acceptance() {
    let checks: [Check; 13] = [
        ("gradient suite", gradient_suite_at_f64),
        ("conv adjointness", conv_adjointness),
        ("shape and normalization invariants", shapes_and_normalization),
        ("linear cross-attention cost", linear_cross_attention),
        ("cross-fusion residual identity", zero_fusion_keeps_cls),
        ("metric oracles", metric_oracles),
        ("loss anchors", loss_anchors),
        ("toy overfit", toy_overfit),
        ("autoencoder denoising", nrca_denoising),
        ("schedule and optimizer", schedule_and_optimizer),
        ("protocol fidelity", protocol_fidelity),
        ("persistence", persistence),
        ("ablation harness", ablation_rows),
    ];
    let mut failed = Vec::new();
    for (i, (name, check)) in checks.iter().enumerate() {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name} ({secs:.1}s): {detail}", i + 1),
            Err(why) => {
                println!("FAIL {:>2} {name} ({secs:.1}s): {why}", i + 1);
                failed.push(i + 1);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
