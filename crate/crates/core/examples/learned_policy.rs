//! Train a depth-10 tree on a trace's own oracle labels and drop it into the
//! simulator next to the never, random, oracle and always policies.

use bypasslab::cachesim::CacheConfig;
use bypasslab::dataset::{label_trace, smote_balance};
use bypasslab::eval::{compare_policies, fraction_of_oracle_gain};
use bypasslab::models::{ModelSpec, Predictor};
use bypasslab::trace::{generate_trace, WorkloadSpec};

fn main() -> bypasslab::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let config = CacheConfig::default_l1();
    let trace = generate_trace(&WorkloadSpec::hot_stream_mix(20_000, seed))?;
    let labels = smote_balance(&label_trace(&trace, config.capacity_lines())?, 5, seed)?;
    let tree = ModelSpec::default_for("tree")?.with_params("depth=10")?;
    let predictor = Predictor::fit(&tree, &labels)?;

    let report = compare_policies(&trace, &config, Some(&predictor), 0.3, seed, None)?;
    print!("{}", report.to_csv());
    let rate = |p: &str| report.row(p).map(|r| r.miss_rate).unwrap_or(f64::NAN);
    println!(
        "# tree recovers {:.1}% of the oracle's miss-rate reduction",
        100.0 * fraction_of_oracle_gain(rate("never"), rate("oracle"), rate("model"))
    );
    Ok(())
}
