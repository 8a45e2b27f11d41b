use fcfl_core::metrics::{aggregate_cv, binary_roc, confusion, prf, roc_auc, EvaluationReport, RocCurve, RunMetadata};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_instance(rng: &mut ChaCha8Rng) -> (usize, Vec<usize>, Vec<usize>) {
    let k = rng.random_range(2..=5);
    let n = rng.random_range(1..=200);
    let t = (0..n).map(|_| rng.random_range(0..k)).collect();
    let p = (0..n).map(|_| rng.random_range(0..k)).collect();
    (k, t, p)
}

/// Mann–Whitney U by comparing every positive with every negative.
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

#[test]
fn confusion_and_prf_match_brute_force_counting() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100 {
        let (k, t, p) = random_instance(&mut rng);
        let m = confusion(&t, &p, k).unwrap();
        let r = prf(&m);
        let n = t.len();
        for a in 0..k {
            for b in 0..k {
                let count = (0..n).filter(|&i| t[i] == a && p[i] == b).count() as u64;
                assert_eq!(m.get(a, b), count);
            }
        }
        let mut f1_sum = 0.0;
        for c in 0..k {
            let tp = (0..n).filter(|&i| t[i] == c && p[i] == c).count() as f64;
            let fp = (0..n).filter(|&i| t[i] != c && p[i] == c).count() as f64;
            let fneg = (0..n).filter(|&i| t[i] == c && p[i] != c).count() as f64;
            let precision = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
            let recall = if tp + fneg > 0.0 { tp / (tp + fneg) } else { 0.0 };
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            let got = &r.per_class[c];
            assert!((got.precision - precision).abs() < 1e-12);
            assert!((got.recall - recall).abs() < 1e-12);
            assert!((got.f1 - f1).abs() < 1e-12);
            assert_eq!(got.precision_undefined, tp + fp == 0.0);
            assert_eq!(got.recall_undefined, tp + fneg == 0.0);
            assert_eq!(got.support, (tp + fneg) as u64);
            f1_sum += f1;
        }
        assert!((r.macro_avg.f1 - f1_sum / k as f64).abs() < 1e-12);
        let correct = (0..n).filter(|&i| t[i] == p[i]).count() as f64;
        assert!((r.accuracy - correct / n as f64).abs() < 1e-15);
    }
}

#[test]
fn binary_auc_matches_pairwise_oracle_with_ties() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut done = 0;
    while done < 100 {
        let n = rng.random_range(2..=200);
        // a coarse grid forces many tied scores
        let levels = rng.random_range(2..=12);
        let scores: Vec<f64> = (0..n)
            .map(|_| rng.random_range(0..levels) as f64 / levels as f64)
            .collect();
        let pos: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
        if pos.iter().all(|&b| b) || pos.iter().all(|&b| !b) {
            continue;
        }
        let roc = binary_roc(&scores, &pos).unwrap();
        assert!((roc.auc - pairwise_auc(&scores, &pos)).abs() < 1e-9);
        assert!((RocCurve::trapezoid(&roc.fpr, &roc.tpr) - roc.auc).abs() < 1e-9);
        assert_eq!(roc.thresholds.len() + 1, roc.fpr.len());
        done += 1;
    }
}

#[test]
fn uniform_scores_give_exactly_one_half() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for n in [2usize, 3, 10, 77, 200] {
        let mut pos: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
        pos[0] = true;
        pos[1] = false;
        assert_eq!(binary_roc(&vec![0.3; n], &pos).unwrap().auc, 0.5);
    }
    let scores = vec![vec![1.0 / 3.0; 3]; 9];
    let labels: Vec<usize> = (0..9).map(|i| i % 3).collect();
    let r = roc_auc(&scores, &labels).unwrap();
    assert!(r.per_class.iter().all(|c| c.as_ref().unwrap().auc == 0.5));
    assert_eq!(r.macro_auc, Some(0.5));
    assert_eq!(r.micro.unwrap().auc, 0.5);
}

#[test]
fn one_vs_rest_auc_matches_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..100 {
        let k = rng.random_range(2..=5);
        let n = rng.random_range(k..=200);
        let labels: Vec<usize> = (0..n).map(|i| if i < k { i } else { rng.random_range(0..k) }).collect();
        let scores: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0..8) as f64 + 0.5).collect();
                let s: f64 = raw.iter().sum();
                raw.iter().map(|v| v / s).collect()
            })
            .collect();
        let r = roc_auc(&scores, &labels).unwrap();
        let mut per = Vec::new();
        for c in 0..k {
            let col: Vec<f64> = scores.iter().map(|row| row[c]).collect();
            let ind: Vec<bool> = labels.iter().map(|&t| t == c).collect();
            let expect = pairwise_auc(&col, &ind);
            assert!((r.per_class[c].as_ref().unwrap().auc - expect).abs() < 1e-9);
            per.push(expect);
        }
        let mean = per.iter().sum::<f64>() / k as f64;
        assert!((r.macro_auc.unwrap() - mean).abs() < 1e-9);
        let pooled: Vec<f64> = scores.iter().flatten().copied().collect();
        let ind: Vec<bool> = labels.iter().flat_map(|&t| (0..k).map(move |c| c == t)).collect();
        assert!((r.micro.as_ref().unwrap().auc - pairwise_auc(&pooled, &ind)).abs() < 1e-9);
        let curve = r.macro_curve.as_ref().unwrap();
        assert_eq!((curve.fpr[0], *curve.fpr.last().unwrap()), (0.0, 1.0));
        assert!((0.0..=1.0).contains(&curve.auc));
    }
}

#[test]
fn missing_class_leaves_its_auc_undefined() {
    let scores = vec![vec![0.7, 0.2, 0.1], vec![0.1, 0.8, 0.1], vec![0.6, 0.3, 0.1]];
    let r = roc_auc(&scores, &[0, 1, 0]).unwrap();
    assert!(r.per_class[2].is_none());
    assert_eq!(r.undefined_classes, vec![2]);
    assert_eq!(r.macro_auc, Some(1.0));
}

#[test]
fn cv_mean_and_population_std() {
    let names: Vec<String> = ["a", "b"].iter().map(|s| s.to_string()).collect();
    let report = |correct: usize| {
        let labels: Vec<usize> = (0..4).map(|i| i % 2).collect();
        let scores: Vec<Vec<f64>> = labels
            .iter()
            .enumerate()
            .map(|(i, &y)| {
                let hit = i < correct;
                let c = if hit { y } else { 1 - y };
                if c == 0 {
                    vec![0.9, 0.1]
                } else {
                    vec![0.1, 0.9]
                }
            })
            .collect();
        EvaluationReport::from_scores(&scores, &labels, names.clone(), RunMetadata::default()).unwrap()
    };
    let cv = aggregate_cv(&[report(4), report(2)]).unwrap();
    assert_eq!(cv.runs, 2);
    assert!((cv.mean["accuracy"] - 0.75).abs() < 1e-12);
    assert!((cv.std["accuracy"] - 0.25).abs() < 1e-12);
    assert_eq!(cv.confusion.total(), 8);
}
