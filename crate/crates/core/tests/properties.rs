use std::collections::HashSet;

use fcfl_core::data::{
    augment, balance_classes, make_splits, rotate90, tile_grid, untile_grid, AugmentSpec, Label, LabeledDataset,
    LabeledImage, Split, SplitSpec,
};
use fcfl_core::head::cross_entropy;
use fcfl_core::metrics::{binary_roc, confusion, prf};
use fcfl_core::train::{lr_schedule, TrainConfig};
use fcfl_core::{Tape, Tensor};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn image(c: usize, h: usize, w: usize, seed: u64) -> Tensor<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::<f32>::randn([c, h, w], 0.2, &mut rng).map(|v| (v + 0.5).clamp(0.0, 1.0))
}

fn labeled(n: usize, seed: u64) -> Vec<LabeledImage> {
    (0..n)
        .map(|i| LabeledImage::new(image(1, 2, 2, seed ^ i as u64), Label::ALL[i % 3], format!("img{i:04}")))
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn tiles_partition_the_image(c in 1usize..4, rows in 1usize..5, cols in 1usize..5, th in 1usize..6, tw in 1usize..6, seed: u64) {
        let img = image(c, rows * th, cols * tw, seed);
        let tiles = tile_grid(&img, rows, cols).unwrap();
        prop_assert_eq!(tiles.len(), rows * cols);
        prop_assert!(tiles.iter().all(|t| t.shape() == [c, th, tw]));
        let total: usize = tiles.iter().map(|t| t.numel()).sum();
        prop_assert_eq!(total, img.numel());
        prop_assert_eq!(untile_grid(&tiles, rows, cols).unwrap(), img);
    }

    #[test]
    fn splits_are_a_deterministic_partition(n in 4usize..300, test_frac in 0.0f64..0.9, ratio in 0.05f64..0.95, seed: u64) {
        let test_count = ((n as f64 * test_frac) as usize).min(n - 1);
        let spec = SplitSpec { test_count, train_val_ratio: ratio, seed, group_by_source: false };
        let a = make_splits(labeled(n, 1), &spec).unwrap();
        let b = make_splits(labeled(n, 1), &spec).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(a.len(), n);
        let ids: HashSet<&str> = a.images.iter().map(|im| im.source_id.as_str()).collect();
        prop_assert_eq!(ids.len(), n);
        prop_assert!(a.images.iter().all(|im| im.split.is_some()));
        let (t, tr, v) = spec.counts(n).unwrap();
        prop_assert_eq!((a.count(Split::Test), a.count(Split::Train), a.count(Split::Val)), (t, tr, v));
        prop_assert_eq!(t + tr + v, n);
        prop_assert_eq!(t, test_count);
    }

    #[test]
    fn balancing_keeps_originals_and_equalizes(c0 in 1usize..12, c1 in 1usize..12, c2 in 1usize..12, seed: u64) {
        let mut images = Vec::new();
        for (label, count) in Label::ALL.into_iter().zip([c0, c1, c2]) {
            for i in 0..count {
                let mut im = LabeledImage::new(image(1, 3, 3, seed ^ (i as u64 * 7 + label.index() as u64)), label, format!("{label}/{i}"));
                im.split = Some(Split::Train);
                images.push(im);
            }
        }
        let spec = AugmentSpec { seed, ..AugmentSpec::default() };
        let out = balance_classes(images.clone(), &spec).unwrap();
        prop_assert_eq!(&out[..images.len()], &images[..]);
        let max = c0.max(c1).max(c2);
        prop_assert_eq!(LabeledDataset::class_counts(&out), [max; 3]);
        prop_assert!(out[images.len()..].iter().all(|im| im.augmented && im.split == Some(Split::Train)));
        prop_assert!(out.iter().all(|im| im.pixels.data().iter().all(|v| (0.0..=1.0).contains(v))));
    }

    #[test]
    fn null_augmentation_is_the_identity(c in 1usize..4, h in 1usize..9, w in 1usize..9, seed: u64) {
        let mut im = LabeledImage::new(image(c, h, w, seed), Label::Viable, "x");
        im.split = Some(Split::Train);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let out = augment(&im, &AugmentSpec::null(), &mut rng).unwrap();
        prop_assert_eq!(out, im);
    }

    #[test]
    fn four_quarter_turns_are_the_identity(c in 1usize..4, h in 1usize..9, w in 1usize..9, k in 0u8..4, seed: u64) {
        let img = image(c, h, w, seed);
        let mut x = img.clone();
        for _ in 0..4 {
            x = rotate90(&x, 1);
        }
        prop_assert_eq!(&x, &img);
        let turned = rotate90(&img, k);
        prop_assert_eq!(rotate90(&turned, (4 - k) % 4), img);
    }

    #[test]
    fn metrics_stay_in_bounds(pairs in prop::collection::vec((0usize..5, 0usize..5), 1..200), k in 2usize..6) {
        let t: Vec<usize> = pairs.iter().map(|p| p.0 % k).collect();
        let p: Vec<usize> = pairs.iter().map(|p| p.1 % k).collect();
        let m = confusion(&t, &p, k).unwrap();
        prop_assert_eq!(m.total(), t.len() as u64);
        let r = prf(&m);
        for c in &r.per_class {
            for v in [c.precision, c.recall, c.f1] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }
        for v in [r.macro_avg.precision, r.macro_avg.recall, r.macro_avg.f1, r.accuracy] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        prop_assert!((r.micro_avg.precision - r.accuracy).abs() < 1e-12);
        prop_assert!((r.micro_avg.recall - r.accuracy).abs() < 1e-12);
        prop_assert!((r.micro_avg.f1 - r.accuracy).abs() < 1e-12);
    }

    #[test]
    fn auc_is_the_mann_whitney_statistic(data in prop::collection::vec((0u8..6, any::<bool>()), 2..50)) {
        let scores: Vec<f64> = data.iter().map(|d| d.0 as f64 / 5.0).collect();
        let pos: Vec<bool> = data.iter().map(|d| d.1).collect();
        let np = pos.iter().filter(|&&b| b).count();
        prop_assume!(np > 0 && np < pos.len());
        let mut wins = 0.0;
        for i in 0..scores.len() {
            for j in 0..scores.len() {
                if pos[i] && !pos[j] {
                    wins += if scores[i] > scores[j] { 1.0 } else if scores[i] == scores[j] { 0.5 } else { 0.0 };
                }
            }
        }
        let expect = wins / (np * (pos.len() - np)) as f64;
        let roc = binary_roc(&scores, &pos).unwrap();
        prop_assert!((roc.auc - expect).abs() < 1e-9);
        prop_assert!(roc.fpr.windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(roc.tpr.windows(2).all(|w| w[0] <= w[1]));
        prop_assert_eq!((roc.fpr[0], roc.tpr[0]), (0.0, 0.0));
        prop_assert_eq!((*roc.fpr.last().unwrap(), *roc.tpr.last().unwrap()), (1.0, 1.0));
    }

    #[test]
    fn softmax_ignores_a_constant_shift(rows in 1usize..5, k in 2usize..6, shift in -50.0f64..50.0, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z = Tensor::<f64>::randn([rows, k], 3.0, &mut rng);
        let mut tape = Tape::no_grad();
        let a = tape.constant(z.clone());
        let b = tape.constant(z.map(|v| v + shift));
        let (sa, sb) = (tape.softmax(a), tape.softmax(b));
        for (x, y) in tape.value(sa).data().iter().zip(tape.value(sb).data()) {
            prop_assert!((x - y).abs() < 1e-7);
        }
        for row in tape.value(sa).data().chunks(k) {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
            prop_assert!(row.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn cross_entropy_is_nonnegative(rows in 1usize..6, k in 2usize..6, scale in 0.0f64..40.0, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z = Tensor::<f32>::randn([rows, k], scale, &mut rng);
        let labels: Vec<usize> = (0..rows).map(|i| (seed as usize + i) % k).collect();
        let mut tape = Tape::no_grad();
        let zv = tape.constant(z);
        let out = cross_entropy(&mut tape, zv, &labels).unwrap();
        let loss = tape.value(out.loss).item().unwrap();
        prop_assert!(loss >= 0.0 && loss.is_finite());
        for row in out.predicted.data().chunks(k) {
            prop_assert!((row.iter().map(|&v| v as f64).sum::<f64>() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn layer_norm_rows_have_beta_mean_and_gamma_spread(rows in 1usize..5, n in 3usize..40, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Tensor::<f64>::randn([rows, n], 2.0, &mut rng).map(|v| v + 3.0);
        let (g, b) = (1.7f64, -0.4f64);
        let mut tape = Tape::no_grad();
        let xv = tape.constant(x);
        let gv = tape.constant(Tensor::full([n], g));
        let bv = tape.constant(Tensor::full([n], b));
        let y = tape.layer_norm(xv, gv, bv, 1e-12).unwrap();
        for row in tape.value(y).data().chunks(n) {
            let mean = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
            prop_assert!((mean - b).abs() < 1e-6);
            prop_assert!((var.sqrt() - g.abs()).abs() < 1e-6);
        }
    }
}

#[test]
fn learning_rate_is_exact_for_every_epoch() {
    let cfg = TrainConfig::default();
    for e in 0..500 {
        let mut lr = 1e-4;
        for _ in 0..e / 30 {
            lr *= 0.5;
        }
        assert_eq!(lr_schedule(e, &cfg), lr, "epoch {e}");
    }
}
