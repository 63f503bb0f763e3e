mod common;

use std::fs;

use bypasslab::cachesim::{simulate_detailed, AccessOutcome, BypassPolicy, CacheConfig};
use bypasslab::cli::{main_with_args, run_pipeline, EXIT_DIGEST_MISMATCH, EXIT_MISSING_INPUT, EXIT_STAGE_FAILURE, EXIT_USAGE};
use bypasslab::dataset::{label_trace, Label};
use bypasslab::eval::{compare_policies, policy_from_model};
use bypasslab::manifest::{file_digest, RunManifest};
use bypasslab::models::{ModelSpec, Predictor};
use bypasslab::trace::{generate_trace, WorkloadKind, WorkloadSpec};
use common::{reference_lru, snapshot, RefOutcome, PIPELINE_MANIFEST};

fn region_mix(length: usize, seed: u64) -> bypasslab::trace::Trace {
    generate_trace(&WorkloadSpec::new(WorkloadKind::RegionLabeledMix, length, seed)).unwrap()
}

#[test]
fn model_policy_asks_the_model_on_every_miss() {
    let trace = region_mix(4000, 11);
    let config = CacheConfig::default_l1();
    let labels = label_trace(&trace, config.capacity_lines()).unwrap();
    let spec = ModelSpec::default_for("tree").unwrap().with_params("depth=6").unwrap();
    let predictor = Predictor::fit(&spec, &labels).unwrap();

    let lines: Vec<u64> = trace.line_addresses().collect();
    let (want, want_evictions) = reference_lru(&lines, config.sets(), config.ways(), |_, line| {
        predictor.predict_line(line).unwrap().label == Label::Bypass
    });
    let (stats, got) = simulate_detailed(&trace, &config, &policy_from_model(predictor.clone())).unwrap();
    let got: Vec<RefOutcome> = got
        .into_iter()
        .map(|o| match o {
            AccessOutcome::Hit => RefOutcome::Hit,
            AccessOutcome::MissInserted => RefOutcome::Inserted,
            AccessOutcome::MissBypassed => RefOutcome::Bypassed,
        })
        .collect();
    assert_eq!(got, want);
    assert_eq!(stats.evictions, want_evictions);
    assert!(stats.bypasses > 0, "the tree should bypass the cold regions");
}

#[test]
fn learned_policy_agrees_with_region_labels() {
    // Region-mix labels are a function of the region, which a tree on the
    // raw address recovers.
    let trace = region_mix(10_000, 12);
    let labels = label_trace(&trace, 128).unwrap();
    let predictor = Predictor::fit(&ModelSpec::default_for("tree").unwrap(), &labels).unwrap();
    let agree = labels
        .samples()
        .iter()
        .filter(|s| predictor.predict_features(&s.features).unwrap().label == s.label)
        .count();
    let share = agree as f64 / labels.len() as f64;
    assert!(share >= 0.95, "agreement {share}");
}

#[test]
fn comparison_rows_come_in_fixed_order() {
    let trace = generate_trace(&WorkloadSpec::hot_stream_mix(6000, 3)).unwrap();
    let config = CacheConfig::default_l1();
    let labels = label_trace(&trace, 128).unwrap();
    let predictor = Predictor::fit(&ModelSpec::default_for("tree").unwrap(), &labels).unwrap();
    let report = compare_policies(&trace, &config, Some(&predictor), 0.3, 9, None).unwrap();
    let names: Vec<&str> = report.rows.iter().map(|r| r.policy.split(':').next().unwrap()).collect();
    assert_eq!(names, ["never", "random", "model", "oracle", "always"]);
    assert_eq!(report.baseline().delta_vs_baseline, 0.0);
    assert_eq!(report.row("oracle").unwrap().policy, "oracle:128");
    let always = report.row("always").unwrap();
    assert_eq!(always.miss_rate, 1.0, "nothing is ever inserted");
    // Without a model the model row disappears.
    let bare = compare_policies(&trace, &config, None, 0.3, 9, Some(64)).unwrap();
    assert_eq!(bare.rows.len(), 4);
    assert_eq!(bare.row("oracle").unwrap().policy, "oracle:64");
    assert_eq!(bare.rows[1], report.rows[1]);
}

#[test]
fn oracle_never_loses_to_plain_lru_on_the_hot_stream_mix() {
    let config = CacheConfig::default_l1();
    for seed in 1..=3 {
        let trace = generate_trace(&WorkloadSpec::hot_stream_mix(20_000, seed)).unwrap();
        let r = compare_policies(&trace, &config, None, 0.3, seed, None).unwrap();
        let (never, oracle) = (r.row("never").unwrap().miss_rate, r.row("oracle").unwrap().miss_rate);
        assert!(oracle < never, "seed {seed}: {oracle} vs {never}");
    }
    // Sanity on the variant names used above.
    assert_eq!(BypassPolicy::NeverBypass.name(), "never");
}

fn write_manifest(dir: &std::path::Path, text: &str) -> std::path::PathBuf {
    let path = dir.join("run.manifest");
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn manifest_run_fills_digests_and_replays_identically() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_manifest(dir.path(), PIPELINE_MANIFEST);
    let recorded = dir.path().join("recorded.manifest");
    let m = run_pipeline(&manifest, Some(&recorded)).unwrap();
    assert_eq!(m.setting("tool_version"), Some(env!("CARGO_PKG_VERSION")));
    let gen = &m.stages[0];
    assert_eq!(gen.digest("out").unwrap(), file_digest(dir.path().join("trace.csv")).unwrap());
    for stage in &m.stages {
        assert!(!stage.digests.is_empty(), "stage {} recorded no digests", stage.name);
    }
    let first = snapshot(dir.path());

    // Replay the recorded manifest somewhere else: every pinned digest must hold.
    let other = tempfile::tempdir().unwrap();
    let replay = other.path().join("recorded.manifest");
    fs::copy(&recorded, &replay).unwrap();
    let again = run_pipeline(&replay, None).unwrap();
    let recorded_text = fs::read_to_string(&recorded).unwrap();
    assert_eq!(again.to_text(), recorded_text);
    assert_eq!(RunManifest::parse(&recorded_text).unwrap(), again);

    let second = snapshot(other.path());
    for (name, bytes) in &second {
        if name.ends_with(".csv") || name.ends_with(".json") {
            assert_eq!(Some(bytes), first.get(name), "{name} differs on replay");
        }
    }
}

#[test]
fn pinned_digest_mismatch_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let text = "[gen-trace]\nkind = streaming\nlength = 50\nseed = 1\nout = t.csv\nout.sha256 = 00\n";
    let manifest = write_manifest(dir.path(), text);
    let code = main_with_args(["bypasslab", "run", "--manifest", manifest.to_str().unwrap()]);
    assert_eq!(code, EXIT_DIGEST_MISMATCH);
}

#[test]
fn tampered_input_is_caught_before_the_stage_runs() {
    let dir = tempfile::tempdir().unwrap();
    let text = "[gen-trace]\nkind = streaming\nlength = 50\nseed = 1\nout = t.csv\n\n[label]\ntrace = t.csv\nout = l.csv\n";
    let manifest = write_manifest(dir.path(), text);
    let recorded = dir.path().join("rec.manifest");
    run_pipeline(&manifest, Some(&recorded)).unwrap();
    // Keep only the label stage, then change its input.
    let rec = RunManifest::parse(&fs::read_to_string(&recorded).unwrap()).unwrap();
    let label_only = RunManifest { settings: rec.settings.clone(), stages: vec![rec.stages[1].clone()] };
    let path = write_manifest(dir.path(), &label_only.to_text());
    fs::write(dir.path().join("t.csv"), "seq,address,kind\n0,0x0,L\n").unwrap();
    let code = main_with_args(["bypasslab", "run", "--manifest", path.to_str().unwrap()]);
    assert_eq!(code, EXIT_DIGEST_MISMATCH);
}

#[test]
fn missing_input_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_manifest(dir.path(), "[label]\ntrace = nowhere.csv\nout = l.csv\n");
    let code = main_with_args(["bypasslab", "run", "--manifest", manifest.to_str().unwrap()]);
    assert_eq!(code, EXIT_MISSING_INPUT);
    let code = main_with_args(["bypasslab", "run", "--manifest", dir.path().join("absent").to_str().unwrap()]);
    assert_eq!(code, EXIT_MISSING_INPUT);
}

#[test]
fn failing_stage_exits_5() {
    let dir = tempfile::tempdir().unwrap();
    // A streaming trace labels everything Bypass, so there is no minority to oversample.
    let text = "[gen-trace]\nkind = streaming\nlength = 50\nseed = 1\nout = t.csv\n\n\
                [label]\ntrace = t.csv\nout = l.csv\n\n[balance]\nin = l.csv\nseed = 1\nout = b.csv\n";
    let manifest = write_manifest(dir.path(), text);
    let code = main_with_args(["bypasslab", "run", "--manifest", manifest.to_str().unwrap()]);
    assert_eq!(code, EXIT_STAGE_FAILURE);
}

#[test]
fn missing_seed_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t.csv");
    let code = main_with_args(["bypasslab", "gen-trace", "--kind", "zipf", "--length", "10", "--out", out.to_str().unwrap()]);
    assert_eq!(code, EXIT_USAGE);
    assert!(!out.exists());
    let manifest = write_manifest(dir.path(), "[gen-trace]\nkind = zipf\nlength = 10\nout = t.csv\n");
    let code = main_with_args(["bypasslab", "run", "--manifest", manifest.to_str().unwrap()]);
    assert_eq!(code, EXIT_USAGE);
}
