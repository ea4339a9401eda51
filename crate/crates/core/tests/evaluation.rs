mod common;

use common::{brute_auc, rng};
use peritumor::evaluation::{auc, bootstrap_ci, roc_curve};
use rand::Rng;
use rand_distr::{Distribution, Normal};

#[test]
fn auc_contract() {
    common::check_auc().unwrap();
}

fn sample(r: &mut impl Rng, n: usize, shift: f64) -> (Vec<f64>, Vec<u8>) {
    let noise = Normal::new(0.0, 1.0).unwrap();
    let labels: Vec<u8> = (0..n).map(|i| u8::from(i % 3 == 0)).collect();
    let scores = labels.iter().map(|&l| noise.sample(r) + shift * l as f64).collect();
    (scores, labels)
}

#[test]
fn flipping_labels_complements_auc() {
    let mut r = rng(71);
    for _ in 0..20 {
        let (s, y) = sample(&mut r, 90, 0.7);
        let s: Vec<f64> = s.iter().map(|v| (v * 4.0).round()).collect();
        let flipped: Vec<u8> = y.iter().map(|l| 1 - l).collect();
        let (a, b) = (auc(&s, &y).unwrap(), auc(&s, &flipped).unwrap());
        assert!((a + b - 1.0).abs() <= 1e-15);
        assert_eq!(a, brute_auc(&s, &y));
    }
}

#[test]
fn monotone_transforms_preserve_auc() {
    let mut r = rng(72);
    for _ in 0..20 {
        let (s, y) = sample(&mut r, 120, 0.5);
        let a = auc(&s, &y).unwrap();
        let e: Vec<f64> = s.iter().map(|v| v.exp()).collect();
        let affine: Vec<f64> = s.iter().map(|v| 3.0 * v - 11.0).collect();
        let cubed: Vec<f64> = s.iter().map(|v| v * v * v).collect();
        assert_eq!(auc(&e, &y).unwrap(), a);
        assert_eq!(auc(&affine, &y).unwrap(), a);
        assert_eq!(auc(&cubed, &y).unwrap(), a);
    }
}

#[test]
fn roc_curve_is_monotone_from_origin_to_corner() {
    let mut r = rng(73);
    let (s, y) = sample(&mut r, 80, 1.0);
    let c = roc_curve(&s, &y).unwrap();
    assert_eq!((c.fpr[0], c.tpr[0]), (0.0, 0.0));
    assert_eq!((*c.fpr.last().unwrap(), *c.tpr.last().unwrap()), (1.0, 1.0));
    for w in c.fpr.windows(2).zip(c.tpr.windows(2)) {
        assert!(w.0[1] >= w.0[0] && w.1[1] >= w.1[0]);
    }
    assert!(c.thresholds[0].is_infinite());
}

#[test]
fn invalid_inputs_are_rejected() {
    assert!(auc(&[0.1, 0.2], &[1, 1]).is_err());
    assert!(auc(&[0.1], &[0, 1]).is_err());
    assert!(auc(&[f64::NAN, 0.2], &[0, 1]).is_err());
    assert!(bootstrap_ci(&[0.1, 0.2], &[0, 1], 99, 0.95, 1).is_err());
}

#[test]
fn bootstrap_interval_brackets_the_estimate() {
    let mut r = rng(74);
    let (s, y) = sample(&mut r, 90, 0.8);
    let a = bootstrap_ci(&s, &y, 1000, 0.95, 3).unwrap();
    assert!(a.ci_low <= a.auc && a.auc <= a.ci_high);
    assert_eq!(a.auc, auc(&s, &y).unwrap());
    assert_eq!((a.n_pos, a.n_neg, a.n_boot, a.seed), (30, 60, 1000, 3));
    let b = bootstrap_ci(&s, &y, 1000, 0.95, 4).unwrap();
    assert_ne!((a.ci_low, a.ci_high), (b.ci_low, b.ci_high));
}

#[test]
fn percentile_intervals_roughly_cover_the_true_auc() {
    // binormal scores with unit separation per sqrt(2): true AUC = Phi(1)
    let truth = 0.841_344_746_068_543;
    let mut r = rng(75);
    let trials = 200;
    let mut covered = 0;
    for t in 0..trials {
        let (s, y) = sample(&mut r, 150, std::f64::consts::SQRT_2);
        let ci = bootstrap_ci(&s, &y, 300, 0.95, t).unwrap();
        if ci.ci_low <= truth && truth <= ci.ci_high {
            covered += 1;
        }
    }
    let rate = covered as f64 / trials as f64;
    assert!((0.88..=0.99).contains(&rate), "coverage {rate}");
}
