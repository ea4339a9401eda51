mod common;

use common::{random_problem, rng};
use peritumor::evaluation::auc;
use peritumor::models::forest::{train_random_forest, ForestParams, Node, Tree};
use peritumor::models::knn::train_knn;
use peritumor::models::logistic::{train_logreg, LogisticModel, LogisticParams};
use peritumor::models::standardize::fit_standardizer;
use peritumor::models::{rank_importance, Classifier, ClassifierKind, ModelParams, TrainedPipeline};
use peritumor::Error;
use rand::Rng;

#[test]
fn gradient_forest_and_knn_numerics() {
    common::check_models().unwrap();
}

/// Quadrant XOR, closed under reflection of either axis.
fn xor_data(n: usize) -> (Vec<Vec<f64>>, Vec<u8>) {
    let mut r = rng(61);
    let mut x = Vec::new();
    let mut y = Vec::new();
    for _ in 0..n / 4 {
        let (a, b): (f64, f64) = (r.random_range(0.05..1.0), r.random_range(0.05..1.0));
        for (sa, sb) in [(1.0, 1.0), (-1.0, -1.0), (-1.0, 1.0), (1.0, -1.0)] {
            x.push(vec![sa * a, sb * b]);
            y.push(u8::from(sa != sb));
        }
    }
    (x, y)
}

fn accuracy(scores: &[f64], y: &[u8]) -> f64 {
    let hits = scores.iter().zip(y).filter(|(s, &l)| u8::from(**s > 0.5) == l).count();
    hits as f64 / y.len() as f64
}

#[test]
fn forest_learns_xor_where_logistic_cannot() {
    let (x, y) = xor_data(200);
    let f = train_random_forest(&x, &y, ForestParams::default(), 3).unwrap();
    let fs: Vec<f64> = x.iter().map(|r| f.predict_proba(r).unwrap()).collect();
    assert!(accuracy(&fs, &y) >= 0.95);
    let l = train_logreg(&x, &y, LogisticParams::default()).unwrap();
    let ls: Vec<f64> = x.iter().map(|r| l.predict_proba(r).unwrap()).collect();
    assert!(accuracy(&ls, &y) <= 0.6);
}

fn render(t: &Tree, i: usize) -> String {
    match t.nodes[i] {
        Node::Leaf { fraction } => format!("{fraction}"),
        Node::Split {
            feature,
            threshold,
            left,
            right,
        } => format!("(x{feature}<={threshold} ? {} : {})", render(t, left), render(t, right)),
    }
}

#[test]
fn single_tree_reproduces_hand_built_tree() {
    // root: x0 <= 2.5 leaves two negatives (weighted Gini 0.25, the minimum);
    // right child: x0 <= 5.5 separates the last negative
    let x = vec![
        vec![1.0, 0.0],
        vec![2.0, 1.0],
        vec![3.0, 0.0],
        vec![4.0, 1.0],
        vec![5.0, 0.0],
        vec![6.0, 1.0],
    ];
    let y = vec![0, 0, 1, 1, 1, 0];
    let f = train_random_forest(&x, &y, ForestParams::single_tree(), 0).unwrap();
    assert_eq!(f.trees.len(), 1);
    assert_eq!(render(&f.trees[0], 0), "(x0<=2.5 ? 0 : (x0<=5.5 ? 1 : 0))");
    assert_eq!(f.trees[0].depth(), 2);
}

#[test]
fn single_signal_dominates_forest_importance() {
    let mut r = rng(62);
    let x: Vec<Vec<f64>> = (0..300).map(|_| (0..4).map(|_| r.random_range(-1.0..1.0)).collect()).collect();
    let y: Vec<u8> = x.iter().map(|row| u8::from(row[0] > 0.1)).collect();
    let f = train_random_forest(&x, &y, ForestParams::default(), 4).unwrap();
    assert!(f.importance[0] > 0.9, "importance {:?}", f.importance);
    assert!((f.importance.iter().sum::<f64>() - 1.0).abs() < 1e-12);
}

#[test]
fn importance_ranking() {
    let m = Classifier::Logistic(LogisticModel {
        weights: vec![0.5, -2.0],
        bias: 0.0,
        lambda: 1.0,
        iterations: 0,
        converged: true,
    });
    let names = vec!["feature1".to_string(), "feature2".to_string()];
    let ranked = rank_importance(&names, &m.importance_scores().unwrap());
    assert_eq!(ranked[0].0, "feature2");
    assert_eq!(ranked[1].0, "feature1");
    let k = Classifier::Knn(train_knn(&[vec![0.0], vec![1.0]], &[0, 1], 1).unwrap());
    assert!(matches!(k.importance_scores(), Err(Error::UnsupportedModel(_))));
}

#[test]
fn knn_three_row_fixture() {
    let x = vec![vec![0.0, 0.0], vec![3.0, 0.0], vec![0.0, 4.0]];
    let m = train_knn(&x, &[1, 0, 1], 3).unwrap();
    // squared distances from (1,1): 2, 5, 10
    assert_eq!(m.neighbors(&[1.0, 1.0]).unwrap(), vec![0, 1, 2]);
    assert_eq!(m.predict_proba(&[1.0, 1.0]).unwrap(), 2.0 / 3.0);
    assert!(train_knn(&x, &[1, 0, 1], 2).is_err());
    assert!(train_knn(&x, &[1, 0, 1], 5).is_err());
}

#[test]
fn scores_stay_in_unit_interval() {
    let mut r = rng(63);
    let (x, y) = random_problem(&mut r, 60, 5);
    let params = ModelParams {
        forest: ForestParams {
            n_trees: 30,
            ..ForestParams::default()
        },
        ..ModelParams::default()
    };
    for kind in ClassifierKind::ALL {
        let m = Classifier::train(kind, &x, &y, &params, 1).unwrap();
        for _ in 0..1000 {
            let q: Vec<f64> = (0..5).map(|_| r.random_range(-20.0..20.0)).collect();
            let p = m.predict_proba(&q).unwrap();
            assert!((0.0..=1.0).contains(&p), "{kind}: {p}");
        }
    }
}

#[test]
fn standardizer_round_trip() {
    let mut r = rng(64);
    let (mut x, _) = random_problem(&mut r, 40, 4);
    for row in &mut x {
        row[2] = 7.0;
        row[1] = row[1] * 300.0 - 50.0;
    }
    let s = fit_standardizer(&x).unwrap();
    assert_eq!(s.kept_indices(), vec![0, 1, 3]);
    let z = s.apply(&x).unwrap();
    for c in 0..3 {
        let col: Vec<f64> = z.iter().map(|row| row[c]).collect();
        let mean = col.iter().sum::<f64>() / col.len() as f64;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / col.len() as f64;
        assert!(mean.abs() < 1e-12);
        assert!((var - 1.0).abs() < 1e-12);
    }
}

#[test]
fn pipeline_json_round_trip_is_exact() {
    let mut r = rng(65);
    let (x, y) = random_problem(&mut r, 50, 3);
    let names: Vec<String> = ["a", "b", "c"].map(String::from).to_vec();
    let params = ModelParams::default();
    for kind in ClassifierKind::ALL {
        let p = TrainedPipeline::fit(kind, &names, &x, &y, &params, 9).unwrap();
        let back = TrainedPipeline::from_json(&p.to_json().unwrap()).unwrap();
        assert_eq!(back, p);
        let (a, b) = (p.predict_proba(&x).unwrap(), back.predict_proba(&x).unwrap());
        assert!(a.iter().zip(&b).all(|(u, v)| u.to_bits() == v.to_bits()));
    }
    let mut doc: serde_json::Value = serde_json::from_str(
        &TrainedPipeline::fit(ClassifierKind::Logistic, &names, &x, &y, &params, 9)
            .unwrap()
            .to_json()
            .unwrap(),
    )
    .unwrap();
    doc["version"] = 99.into();
    assert!(TrainedPipeline::from_json(&doc.to_string()).is_err());
}

#[test]
fn logistic_fits_a_separable_line() {
    let x: Vec<Vec<f64>> = (0..20).map(|i| vec![if i % 2 == 0 { -1.0 } else { 1.0 }]).collect();
    let y: Vec<u8> = (0..20).map(|i| (i % 2) as u8).collect();
    let m = train_logreg(&x, &y, LogisticParams::default()).unwrap();
    assert!(m.weights[0] > 0.0);
    let s: Vec<f64> = x.iter().map(|r| m.predict_proba(r).unwrap()).collect();
    assert_eq!(auc(&s, &y).unwrap(), 1.0);
}

#[test]
fn training_rejects_bad_input() {
    let x = vec![vec![1.0], vec![2.0]];
    assert!(Classifier::train(ClassifierKind::Logistic, &x, &[1, 1], &ModelParams::default(), 0).is_err());
    assert!(Classifier::train(ClassifierKind::Forest, &x, &[0], &ModelParams::default(), 0).is_err());
}
