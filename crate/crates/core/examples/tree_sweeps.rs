//! Decision-tree accuracy against depth and against the min-impurity split
//! threshold, on region-mix oracle labels.

use bypasslab::dataset::{label_trace, train_test_split};
use bypasslab::sweep::{majority_baseline_accuracy, run_sweep, SweepPlan};
use bypasslab::trace::{generate_trace, WorkloadKind, WorkloadSpec};

fn main() -> bypasslab::Result<()> {
    let trace = generate_trace(&WorkloadSpec::new(WorkloadKind::RegionLabeledMix, 10_000, 1))?;
    let labels = label_trace(&trace, 128)?;
    let (train, test) = train_test_split(&labels, 0.2, 1)?;

    let plan = SweepPlan::tree_depth(0.0).chain(SweepPlan::tree_impurity(10));
    let result = run_sweep(&plan, &train, &test)?;
    print!("{}", result.to_csv(false));
    println!(
        "# majority baseline {:.4}",
        majority_baseline_accuracy(&train, &test)
    );
    Ok(())
}
