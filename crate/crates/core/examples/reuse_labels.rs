//! Forward reuse distances, the oracle labels derived from them, and SMOTE
//! balancing of the result.

use bypasslab::cachesim::{forward_reuse_distances, CacheConfig, ReuseDistance};
use bypasslab::dataset::{label_trace, smote_balance};
use bypasslab::trace::{generate_trace, Trace, WorkloadSpec};

fn main() -> bypasslab::Result<()> {
    // A tiny hand-written trace: line 0 comes back after two other lines.
    let tiny = Trace::from_addresses([0, 128, 256, 0, 384], 7, "tiny")?;
    for (a, d) in tiny.accesses().iter().zip(forward_reuse_distances(&tiny)) {
        let shown = match d {
            ReuseDistance::Finite(n) => n.to_string(),
            ReuseDistance::Infinite => "inf".into(),
        };
        println!("seq {} line {:>3} reuse {shown}", a.seq, tiny.line_of(a));
    }

    let trace = generate_trace(&WorkloadSpec::hot_stream_mix(20_000, 1))?;
    let threshold = CacheConfig::default_l1().capacity_lines();
    let labels = label_trace(&trace, threshold)?;
    let [cache, bypass] = labels.class_counts();
    println!("\nhot/stream mix at T={threshold}: {cache} cache, {bypass} bypass");
    let balanced = smote_balance(&labels, 5, 1)?;
    let [cache, bypass] = balanced.class_counts();
    println!("after SMOTE: {cache} cache, {bypass} bypass");
    Ok(())
}
