//! A 3-neuron MLP on the raw line address versus the same MLP on the
//! address split into decimal digits or 4-byte chunks.

use bypasslab::dataset::{featurize, label_trace, train_test_split, FeatureScheme};
use bypasslab::eval::evaluate;
use bypasslab::models::{MlpParams, ModelSpec, Predictor};
use bypasslab::trace::{generate_trace, WorkloadSpec};

fn main() -> bypasslab::Result<()> {
    let workloads = [
        ("decimal-banded", WorkloadSpec::decimal_banded(10_000, 1)),
        ("chunk-banded", WorkloadSpec::chunk_banded(10_000, 1)),
    ];
    let schemes = [FeatureScheme::RawAddress, FeatureScheme::digits(), FeatureScheme::chunks(4)?];
    for (name, spec) in workloads {
        let labels = label_trace(&generate_trace(&spec)?, 128)?;
        for scheme in schemes {
            let (train, test) = train_test_split(&featurize(&labels, scheme)?, 0.2, 1)?;
            let mut best = 0.0f64;
            for seed in 0..5 {
                let mlp = ModelSpec::Mlp(MlpParams { hidden: 3, seed, ..Default::default() });
                best = best.max(evaluate(&Predictor::fit(&mlp, &train)?, &test)?.accuracy);
            }
            println!("{name:<15} {:<10} best test accuracy {best:.4}", scheme.to_string());
        }
    }
    Ok(())
}
