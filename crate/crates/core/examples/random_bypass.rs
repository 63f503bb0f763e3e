//! Does bypassing a random 30% of misses help plain LRU? It depends on the
//! workload, so print the miss rates side by side.

use bypasslab::cachesim::{simulate, BypassPolicy, CacheConfig};
use bypasslab::trace::{generate_trace, WorkloadKind, WorkloadSpec};

fn main() -> bypasslab::Result<()> {
    let config = CacheConfig::default_l1();
    let random = BypassPolicy::random(0.3, 1)?;
    println!("{:<12} {:>8} {:>8} {:>8}", "workload", "lru", "random", "delta");
    for kind in WorkloadKind::ALL {
        let trace = generate_trace(&WorkloadSpec::new(kind, 20_000, 1))?;
        let lru = simulate(&trace, &config, &BypassPolicy::NeverBypass)?.miss_rate();
        let rnd = simulate(&trace, &config, &random)?.miss_rate();
        println!("{:<12} {lru:>8.4} {rnd:>8.4} {:>+8.4}", kind.name(), rnd - lru);
    }
    Ok(())
}
