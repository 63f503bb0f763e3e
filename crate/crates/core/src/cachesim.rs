//! Set-associative L1 model with LRU replacement and a bypass hook on misses.
//!
//! The policy is asked for a decision only when an access misses. `Insert`
//! allocates the line (evicting the set's LRU victim when full); `Bypass`
//! serves the access without touching the cache contents.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::ModelPolicy;
use crate::trace::{MemoryAccess, Trace, DEFAULT_LINE_SIZE_LOG2};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheConfig {
    sets: usize,
    ways: usize,
    line_size_log2: u32,
}

impl CacheConfig {
    pub fn new(sets: usize, ways: usize, line_size_log2: u32) -> Result<Self> {
        if sets == 0 || !sets.is_power_of_two() {
            return Err(Error::Config(format!(
                "sets must be a positive power of two, got {sets}"
            )));
        }
        if ways == 0 {
            return Err(Error::Config("ways must be positive".into()));
        }
        if line_size_log2 >= 32 {
            return Err(Error::Config(format!(
                "line_size_log2 {line_size_log2} is out of range"
            )));
        }
        Ok(CacheConfig {
            sets,
            ways,
            line_size_log2,
        })
    }

    /// 32 sets x 4 ways x 128 B = 16 KiB.
    pub fn default_l1() -> Self {
        CacheConfig {
            sets: 32,
            ways: 4,
            line_size_log2: DEFAULT_LINE_SIZE_LOG2,
        }
    }

    pub fn sets(&self) -> usize {
        self.sets
    }

    pub fn ways(&self) -> usize {
        self.ways
    }

    pub fn line_size_log2(&self) -> u32 {
        self.line_size_log2
    }

    pub fn capacity_lines(&self) -> usize {
        self.sets * self.ways
    }

    pub fn capacity_bytes(&self) -> usize {
        self.capacity_lines() << self.line_size_log2
    }

    #[inline]
    pub fn set_index(&self, line: u64) -> usize {
        (line & (self.sets as u64 - 1)) as usize
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheStats {
    pub accesses: u64,
    pub hits: u64,
    pub misses: u64,
    pub bypasses: u64,
    pub evictions: u64,
}

impl CacheStats {
    pub fn miss_rate(&self) -> f64 {
        if self.accesses == 0 {
            0.0
        } else {
            self.misses as f64 / self.accesses as f64
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Decision {
    Insert,
    Bypass,
}

/// What a policy sees of the target set when deciding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SetOccupancy {
    pub valid: usize,
    pub ways: usize,
}

impl SetOccupancy {
    pub fn is_full(&self) -> bool {
        self.valid == self.ways
    }
}

/// Forward reuse distance of one access: distinct other lines touched before
/// the same line comes back.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ReuseDistance {
    Finite(usize),
    Infinite,
}

impl ReuseDistance {
    /// True if the line is never reused or reused beyond `threshold` distinct lines.
    pub fn exceeds(self, threshold: usize) -> bool {
        match self {
            ReuseDistance::Finite(d) => d > threshold,
            ReuseDistance::Infinite => true,
        }
    }
}

/// Future-knowledge table for the oracle policy, indexed by access `seq`.
#[derive(Debug, Clone)]
pub struct OracleTable {
    threshold: usize,
    distances: Arc<[ReuseDistance]>,
}

impl OracleTable {
    pub fn threshold(&self) -> usize {
        self.threshold
    }

    pub fn decide(&self, seq: u64) -> Decision {
        match self.distances.get(seq as usize) {
            Some(d) if d.exceeds(self.threshold) => Decision::Bypass,
            _ => Decision::Insert,
        }
    }
}

#[derive(Debug, Clone)]
pub enum BypassPolicy {
    NeverBypass,
    AlwaysBypass,
    /// Bypasses each miss with probability `p`, one uniform draw per miss
    /// from a ChaCha8 stream seeded with `seed`.
    RandomBypass { p: f64, seed: u64 },
    OracleThreshold(OracleTable),
    Model(Box<ModelPolicy>),
}

impl BypassPolicy {
    pub fn random(p: f64, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::validation("p", format!("{p} is not in [0, 1]")));
        }
        Ok(BypassPolicy::RandomBypass { p, seed })
    }

    pub fn name(&self) -> String {
        match self {
            BypassPolicy::NeverBypass => "never".into(),
            BypassPolicy::AlwaysBypass => "always".into(),
            BypassPolicy::RandomBypass { p, seed } => format!("random:{p}:{seed}"),
            BypassPolicy::OracleThreshold(t) => format!("oracle:{}", t.threshold),
            BypassPolicy::Model(m) => format!("model:{}", m.predictor().model.kind_name()),
        }
    }

    fn decider(&self) -> Decider<'_> {
        match self {
            BypassPolicy::NeverBypass => Decider::Fixed(Decision::Insert),
            BypassPolicy::AlwaysBypass => Decider::Fixed(Decision::Bypass),
            BypassPolicy::RandomBypass { p, seed } => Decider::Random {
                p: *p,
                rng: ChaCha8Rng::seed_from_u64(*seed),
            },
            BypassPolicy::OracleThreshold(table) => Decider::Oracle(table),
            BypassPolicy::Model(m) => Decider::Model {
                policy: m,
                memo: HashMap::new(),
            },
        }
    }
}

impl fmt::Display for BypassPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

// One per simulation, so the ChaCha state stays inline.
#[allow(clippy::large_enum_variant)]
enum Decider<'a> {
    Fixed(Decision),
    Random { p: f64, rng: ChaCha8Rng },
    Oracle(&'a OracleTable),
    Model {
        policy: &'a ModelPolicy,
        memo: HashMap<u64, Decision>,
    },
}

impl Decider<'_> {
    fn decide(&mut self, access: &MemoryAccess, line: u64, _occupancy: SetOccupancy) -> Decision {
        match self {
            Decider::Fixed(d) => *d,
            Decider::Random { p, rng } => {
                if rng.random::<f64>() < *p {
                    Decision::Bypass
                } else {
                    Decision::Insert
                }
            }
            Decider::Oracle(table) => table.decide(access.seq),
            Decider::Model { policy, memo } => {
                *memo.entry(line).or_insert_with(|| policy.decide_line(line))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AccessOutcome {
    Hit,
    MissInserted,
    MissBypassed,
}

/// Tag store with timestamp LRU.
#[derive(Debug, Clone)]
pub struct LruCache {
    config: CacheConfig,
    tags: Vec<u64>,
    stamps: Vec<u64>,
    valid: Vec<bool>,
    clock: u64,
}

impl LruCache {
    pub fn new(config: CacheConfig) -> Self {
        let n = config.capacity_lines();
        LruCache {
            config,
            tags: vec![0; n],
            stamps: vec![0; n],
            valid: vec![false; n],
            clock: 0,
        }
    }

    fn set_range(&self, line: u64) -> std::ops::Range<usize> {
        let start = self.config.set_index(line) * self.config.ways;
        start..start + self.config.ways
    }

    /// Looks the line up, refreshing its recency on a hit.
    pub fn touch(&mut self, line: u64) -> bool {
        self.clock += 1;
        let range = self.set_range(line);
        for i in range {
            if self.valid[i] && self.tags[i] == line {
                self.stamps[i] = self.clock;
                return true;
            }
        }
        false
    }

    pub fn occupancy(&self, line: u64) -> SetOccupancy {
        let range = self.set_range(line);
        SetOccupancy {
            valid: self.valid[range].iter().filter(|v| **v).count(),
            ways: self.config.ways,
        }
    }

    /// Allocates the line as most recently used. Returns true if a valid line was evicted.
    pub fn insert(&mut self, line: u64) -> bool {
        let range = self.set_range(line);
        let slot = range
            .clone()
            .find(|&i| !self.valid[i])
            .unwrap_or_else(|| range.min_by_key(|&i| self.stamps[i]).expect("ways > 0"));
        let evicted = self.valid[slot];
        self.tags[slot] = line;
        self.valid[slot] = true;
        self.stamps[slot] = self.clock;
        evicted
    }
}

pub fn simulate(trace: &Trace, config: &CacheConfig, policy: &BypassPolicy) -> Result<CacheStats> {
    run(trace, config, policy, |_| {})
}

/// Like [`simulate`], also returning the per-access outcome sequence.
pub fn simulate_detailed(
    trace: &Trace,
    config: &CacheConfig,
    policy: &BypassPolicy,
) -> Result<(CacheStats, Vec<AccessOutcome>)> {
    let mut outcomes = Vec::with_capacity(trace.len());
    let stats = run(trace, config, policy, |o| outcomes.push(o))?;
    Ok((stats, outcomes))
}

fn run(
    trace: &Trace,
    config: &CacheConfig,
    policy: &BypassPolicy,
    mut observe: impl FnMut(AccessOutcome),
) -> Result<CacheStats> {
    if trace.line_size_log2() != config.line_size_log2 {
        return Err(Error::Config(format!(
            "trace uses {}-byte lines but the cache uses {}-byte lines",
            trace.line_size(),
            1u64 << config.line_size_log2
        )));
    }
    let mut cache = LruCache::new(*config);
    let mut decider = policy.decider();
    let mut stats = CacheStats::default();
    for access in trace.accesses() {
        let line = trace.line_of(access);
        stats.accesses += 1;
        let outcome = if cache.touch(line) {
            stats.hits += 1;
            AccessOutcome::Hit
        } else {
            stats.misses += 1;
            match decider.decide(access, line, cache.occupancy(line)) {
                Decision::Insert => {
                    if cache.insert(line) {
                        stats.evictions += 1;
                    }
                    AccessOutcome::MissInserted
                }
                Decision::Bypass => {
                    stats.bypasses += 1;
                    AccessOutcome::MissBypassed
                }
            }
        };
        observe(outcome);
    }
    Ok(stats)
}

/// Fenwick tree over trace positions.
struct Fenwick(Vec<i64>);

impl Fenwick {
    fn new(n: usize) -> Self {
        Fenwick(vec![0; n + 1])
    }

    fn add(&mut self, pos: usize, delta: i64) {
        let mut i = pos + 1;
        while i < self.0.len() {
            self.0[i] += delta;
            i += i & i.wrapping_neg();
        }
    }

    /// Sum over positions [0, pos).
    fn prefix(&self, pos: usize) -> i64 {
        let mut i = pos;
        let mut s = 0;
        while i > 0 {
            s += self.0[i];
            i -= i & i.wrapping_neg();
        }
        s
    }
}

pub fn forward_reuse_distances(trace: &Trace) -> Vec<ReuseDistance> {
    let lines: Vec<u64> = trace.line_addresses().collect();
    reuse_distances_of_lines(&lines)
}

/// Forward reuse distances of a line-address sequence in O(n log n).
///
/// Walking backwards, the tree marks the first upcoming occurrence of every
/// line; the distance for position i is the number of marks strictly between
/// i and the next occurrence of its line.
pub fn reuse_distances_of_lines(lines: &[u64]) -> Vec<ReuseDistance> {
    let n = lines.len();
    let mut out = vec![ReuseDistance::Infinite; n];
    let mut next_pos: HashMap<u64, usize> = HashMap::new();
    let mut marks = Fenwick::new(n);
    for i in (0..n).rev() {
        let line = lines[i];
        if let Some(&j) = next_pos.get(&line) {
            let between = marks.prefix(j) - marks.prefix(i + 1);
            out[i] = ReuseDistance::Finite(between as usize);
            marks.add(j, -1);
        }
        marks.add(i, 1);
        next_pos.insert(line, i);
    }
    out
}

/// Oracle with the default threshold: cache capacity in lines.
pub fn oracle_bypass_policy(trace: &Trace, config: &CacheConfig) -> BypassPolicy {
    oracle_bypass_policy_with_threshold(trace, config.capacity_lines())
}

pub fn oracle_bypass_policy_with_threshold(trace: &Trace, threshold: usize) -> BypassPolicy {
    BypassPolicy::OracleThreshold(OracleTable {
        threshold,
        distances: forward_reuse_distances(trace).into(),
    })
}
