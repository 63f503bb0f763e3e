//! Storage cost of each model family trained on the same 10,000 labels.

use bypasslab::dataset::{label_trace, train_test_split};
use bypasslab::models::{ModelSpec, Predictor};
use bypasslab::trace::{generate_trace, WorkloadKind, WorkloadSpec};

fn main() -> bypasslab::Result<()> {
    let trace = generate_trace(&WorkloadSpec::new(WorkloadKind::RegionLabeledMix, 10_000, 1))?;
    let (train, _) = train_test_split(&label_trace(&trace, 128)?, 0.2, 1)?;
    for (kind, params) in [("tree", "depth=10"), ("knn", "k=5"), ("logreg", ""), ("mlp", "hidden=3")] {
        let p = Predictor::fit(&ModelSpec::default_for(kind)?.with_params(params)?, &train)?;
        println!("{kind:<7} {params:<9} {:>7} bytes", p.size_bytes());
    }
    Ok(())
}
