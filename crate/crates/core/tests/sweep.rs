mod common;

use bypasslab::dataset::{label_trace, train_test_split, LabeledDataset, Normalizer};
use bypasslab::eval::evaluate_model;
use bypasslab::models::{train_knn, LogRegParams, TrainedModel, Weighting};
use bypasslab::sweep::{run_sweep, SweepPlan, SWEEP_HEADER};
use bypasslab::trace::{generate_trace, WorkloadKind, WorkloadSpec};
use common::blobs;

fn region_split() -> (LabeledDataset, LabeledDataset) {
    let trace = generate_trace(&WorkloadSpec::new(WorkloadKind::RegionLabeledMix, 1500, 4)).unwrap();
    train_test_split(&label_trace(&trace, 128).unwrap(), 0.2, 4).unwrap()
}

#[test]
fn shared_neighbor_lists_match_fresh_knn_models() {
    let (train, test) = (blobs(20, 150, 2, 1.0), blobs(21, 60, 2, 1.0));
    let plan = SweepPlan::knn(Weighting::Uniform).chain(SweepPlan::knn(Weighting::InverseDistance));
    let result = run_sweep(&plan, &train, &test).unwrap();
    let norm = Normalizer::fit(&train).unwrap();
    let (ntrain, ntest) = (norm.apply_dataset(&train).unwrap(), norm.apply_dataset(&test).unwrap());
    assert_eq!(result.rows.len(), 34);
    for row in &result.rows {
        let weighting: Weighting = row.variant.parse().unwrap();
        let model = TrainedModel::Knn(train_knn(&ntrain, row.value as usize, weighting).unwrap());
        let m = row.metrics().unwrap();
        assert_eq!(m.train_acc, evaluate_model(&model, &ntrain).unwrap().accuracy, "{row:?}");
        assert_eq!(m.test_acc, evaluate_model(&model, &ntest).unwrap().accuracy, "{row:?}");
        assert!((m.mae - evaluate_model(&model, &ntest).unwrap().mae).abs() < 1e-12, "{row:?}");
        assert_eq!(m.size_bytes, model.size_bytes());
    }
}

#[test]
fn chained_plans_equal_their_parts() {
    let (train, test) = region_split();
    let knn = SweepPlan::knn(Weighting::Uniform);
    let logreg = SweepPlan::logreg(LogRegParams::default());
    let tree = SweepPlan::tree_depth(0.0);
    let mixed = run_sweep(&tree.clone().chain(knn.clone()).chain(logreg.clone()), &train, &test).unwrap();
    let parts: Vec<_> = [tree, knn, logreg]
        .iter()
        .flat_map(|p| run_sweep(p, &train, &test).unwrap().rows)
        .collect();
    assert_eq!(mixed.rows, parts);
}

#[test]
fn sweep_csv_is_reproducible() {
    let (train, test) = region_split();
    let plan = SweepPlan::tree_impurity(10);
    let a = run_sweep(&plan, &train, &test).unwrap().to_csv(false);
    let b = run_sweep(&plan, &train, &test).unwrap().to_csv(false);
    assert_eq!(a, b);
    assert!(a.starts_with(SWEEP_HEADER));
    assert_eq!(a.lines().count(), 1 + 11);
}

#[test]
fn empty_plan_is_rejected() {
    let (train, test) = region_split();
    let mut plan = SweepPlan::tree_depth(0.0);
    plan.grid.clear();
    assert!(run_sweep(&plan, &train, &test).is_err());
}
