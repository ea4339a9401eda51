mod common;

use peritumor::harness::run_expansion_sweep;
use peritumor::models::ClassifierKind;
use peritumor::phantom::{generate_cohort, PhantomSpec};
use peritumor::segmentation::SegmentationMethod;

#[test]
fn radius_zero_and_translation_invariants() {
    let dir = tempfile::tempdir().unwrap();
    let spec = PhantomSpec {
        n_cases: 24,
        seed: 11,
        ..PhantomSpec::default()
    };
    generate_cohort(&spec, dir.path()).unwrap();
    let exp = common::experiment(dir.path(), "sweep", |c| {
        c.radii_mm = vec![0.0, 8.0];
        c.n_boot = 100;
    });
    run_expansion_sweep(&exp, Some(SegmentationMethod::Knn), ClassifierKind::Logistic).unwrap();
    common::check_radius_zero(dir.path()).unwrap();
    common::check_translation(dir.path()).unwrap();
}

#[test]
fn outputs_do_not_depend_on_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    common::check_parallelism(dir.path(), 4).unwrap();
}
