//! KNN over k with both weightings, then the three logistic-regression
//! solvers, which should land on the same optimum.

use bypasslab::dataset::{label_trace, train_test_split};
use bypasslab::models::{LogRegParams, Weighting};
use bypasslab::sweep::{run_sweep, SweepPlan};
use bypasslab::trace::{generate_trace, WorkloadKind, WorkloadSpec};

fn main() -> bypasslab::Result<()> {
    let trace = generate_trace(&WorkloadSpec::new(WorkloadKind::RegionLabeledMix, 5_000, 2))?;
    let labels = label_trace(&trace, 128)?;
    let (train, test) = train_test_split(&labels, 0.2, 2)?;

    let plan = SweepPlan::knn(Weighting::Uniform)
        .chain(SweepPlan::knn(Weighting::InverseDistance))
        .chain(SweepPlan::logreg(LogRegParams::default()));
    print!("{}", run_sweep(&plan, &train, &test)?.to_csv(false));
    Ok(())
}
