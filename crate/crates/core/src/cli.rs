//! Command-line front end. Every subcommand is a thin wrapper over the
//! library; `run` replays a manifest of subcommand invocations.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::cachesim::{oracle_bypass_policy_with_threshold, simulate, BypassPolicy, CacheConfig};
use crate::dataset::{
    featurize, label_trace, read_dataset, smote_balance, train_test_split, write_dataset,
    FeatureScheme,
};
use crate::error::{Error, Result};
use crate::eval::{compare_policies, evaluate, policy_from_model, DEFAULT_P_RANDOM};
use crate::manifest::{dir_digest, file_digest, RunManifest};
use crate::models::{ModelSpec, Predictor, Solver, Weighting};
use crate::sweep::{run_sweep, write_report, GridPoint, SweepKind, SweepPlan};
use crate::trace::{
    generate_trace, line_size_log2_from_bytes, read_trace, write_trace, WorkloadKind, WorkloadSpec,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_MISSING_INPUT: i32 = 3;
pub const EXIT_DIGEST_MISMATCH: i32 = 4;
pub const EXIT_STAGE_FAILURE: i32 = 5;

#[derive(Debug, Parser)]
#[command(name = "bypasslab", version, about = "Trace-driven cache bypass lab")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic memory trace.
    GenTrace(GenTraceArgs),
    /// Simulate one bypass policy and print its stats.
    Simulate(SimulateArgs),
    /// Label each access Cache/Bypass from its forward reuse distance.
    Label(LabelArgs),
    /// Oversample the minority class with SMOTE.
    Balance(BalanceArgs),
    /// Re-express raw line-address rows in another feature scheme.
    Featurize(FeaturizeArgs),
    /// Stratified train/test split.
    Split(SplitArgs),
    /// Train one model and save it.
    Train(TrainArgs),
    /// Sweep one hyperparameter grid.
    Sweep(SweepArgs),
    /// Score a saved model on a labeled dataset.
    Eval(EvalArgs),
    /// Compare never/random/model/oracle/always bypass on a trace.
    Compare(CompareArgs),
    /// Split sweep CSVs into per-panel plot-data files.
    Report(ReportArgs),
    /// Replay a pipeline manifest.
    Run(RunArgs),
}

#[derive(Debug, Args)]
pub struct GenTraceArgs {
    #[arg(long)]
    pub kind: WorkloadKind,
    #[arg(long)]
    pub length: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Line size in bytes.
    #[arg(long, default_value_t = 128)]
    pub line: u64,
    #[arg(long)]
    pub base: Option<u64>,
    #[arg(long)]
    pub stride: Option<u64>,
    #[arg(long)]
    pub footprint: Option<u64>,
    #[arg(long)]
    pub zipf_exponent: Option<f64>,
    #[arg(long)]
    pub hot_lines: Option<u64>,
    #[arg(long)]
    pub stream_fraction: Option<f64>,
    #[arg(long)]
    pub regions: Option<usize>,
    #[arg(long)]
    pub region_lines: Option<u64>,
    /// Comma-separated per-region reuse probabilities.
    #[arg(long, value_delimiter = ',')]
    pub reuse_probs: Option<Vec<f64>>,
    #[arg(long)]
    pub reuse_window: Option<usize>,
    #[arg(long)]
    pub store_fraction: Option<f64>,
}

#[derive(Debug, Args)]
pub struct GeometryArgs {
    #[arg(long, default_value_t = 32)]
    pub sets: usize,
    #[arg(long, default_value_t = 4)]
    pub ways: usize,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub trace: PathBuf,
    #[command(flatten)]
    pub geometry: GeometryArgs,
    /// Line size in bytes; must match the trace.
    #[arg(long, default_value_t = 128)]
    pub line: u64,
    /// never | always | random:p:seed | oracle[:T] | model:path
    #[arg(long)]
    pub policy: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct LabelArgs {
    #[arg(long)]
    pub trace: PathBuf,
    /// Reuse-distance threshold; defaults to sets * ways.
    #[arg(long)]
    pub threshold: Option<usize>,
    #[command(flatten)]
    pub geometry: GeometryArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BalanceArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FeaturizeArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    /// raw | digits | chunks:c
    #[arg(long)]
    pub scheme: FeatureScheme,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, default_value_t = 0.2)]
    pub test_frac: f64,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub train_out: PathBuf,
    #[arg(long)]
    pub test_out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// tree | knn | logreg | mlp
    #[arg(long)]
    pub model: String,
    /// Comma-separated key=value hyperparameters.
    #[arg(long, default_value = "")]
    pub params: String,
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: u64,
    /// Feature scheme of the input; inferred from its width when omitted.
    #[arg(long)]
    pub scheme: Option<FeatureScheme>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// tree-depth | tree-impurity | knn | logreg | mlp
    #[arg(long)]
    pub model: String,
    /// `default` or a comma-separated list of grid values.
    #[arg(long, default_value = "default")]
    pub grid: String,
    /// Labeled dataset; split into train/test unless --test is given.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub test: Option<PathBuf>,
    #[arg(long, default_value_t = 0.2)]
    pub test_frac: f64,
    #[arg(long)]
    pub seed: u64,
    /// Fixed hyperparameters for the swept model, key=value pairs.
    #[arg(long, default_value = "")]
    pub params: String,
    /// KNN only: uniform | distance | both.
    #[arg(long, default_value = "both")]
    pub weighting: String,
    /// Keep wall-clock milliseconds in the `ms` column (otherwise 0).
    #[arg(long)]
    pub record_timing: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(long)]
    pub trace: PathBuf,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_P_RANDOM)]
    pub p_random: f64,
    #[arg(long)]
    pub seed: u64,
    #[command(flatten)]
    pub geometry: GeometryArgs,
    #[arg(long)]
    pub threshold: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long, value_delimiter = ',', required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Write the manifest back with every digest filled in.
    #[arg(long)]
    pub record: Option<PathBuf>,
}

/// Process entry point; returns the exit code.
pub fn main() -> i32 {
    main_with_args(std::env::args_os())
}

pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::MissingInput(_) => EXIT_MISSING_INPUT,
        Error::DigestMismatch { .. } => EXIT_DIGEST_MISMATCH,
        Error::Stage { .. } => EXIT_STAGE_FAILURE,
        Error::Manifest(_) => EXIT_USAGE,
        _ => EXIT_FAILURE,
    }
}

pub fn execute(command: Command) -> Result<()> {
    match command {
        Command::GenTrace(a) => gen_trace(a),
        Command::Simulate(a) => simulate_cmd(a),
        Command::Label(a) => {
            let trace = read_trace(&a.trace)?;
            let threshold = match a.threshold {
                Some(t) => t,
                None => a.geometry.sets * a.geometry.ways,
            };
            write_dataset(&label_trace(&trace, threshold)?, &a.out)
        }
        Command::Balance(a) => {
            let ds = read_dataset(&a.input, None)?;
            write_dataset(&smote_balance(&ds, a.k, a.seed)?, &a.out)
        }
        Command::Featurize(a) => {
            let ds = read_dataset(&a.input, Some(FeatureScheme::RawAddress))?;
            write_dataset(&featurize(&ds, a.scheme)?, &a.out)
        }
        Command::Split(a) => {
            let ds = read_dataset(&a.input, None)?;
            let (train, test) = train_test_split(&ds, a.test_frac, a.seed)?;
            write_dataset(&train, &a.train_out)?;
            write_dataset(&test, &a.test_out)
        }
        Command::Train(a) => {
            let ds = read_dataset(&a.input, a.scheme)?;
            let spec = ModelSpec::default_for(&a.model)?
                .with_seed(a.seed)
                .with_params(&a.params)?;
            Predictor::fit(&spec, &ds)?.save(&a.out)
        }
        Command::Sweep(a) => sweep_cmd(a),
        Command::Eval(a) => {
            let predictor = Predictor::load(&a.model)?;
            let ds = read_dataset(&a.data, Some(predictor.scheme))?;
            let m = evaluate(&predictor, &ds)?;
            let c = m.confusion;
            emit(
                a.out.as_deref(),
                &format!(
                    "accuracy,mae,tp,tn,fp,fn\n{},{},{},{},{},{}\n",
                    m.accuracy, m.mae, c.tp, c.tn, c.fp, c.fn_
                ),
            )
        }
        Command::Compare(a) => {
            let trace = read_trace(&a.trace)?;
            let config = geometry(&a.geometry, trace.line_size_log2())?;
            let predictor = a.model.as_ref().map(Predictor::load).transpose()?;
            let report =
                compare_policies(&trace, &config, predictor.as_ref(), a.p_random, a.seed, a.threshold)?;
            emit(a.out.as_deref(), &report.to_csv())
        }
        Command::Report(a) => {
            for path in write_report(&a.inputs, &a.out_dir)? {
                println!("{}", path.display());
            }
            Ok(())
        }
        Command::Run(a) => run_pipeline(&a.manifest, a.record.as_deref()).map(|_| ()),
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn geometry(g: &GeometryArgs, line_size_log2: u32) -> Result<CacheConfig> {
    CacheConfig::new(g.sets, g.ways, line_size_log2)
}

fn gen_trace(a: GenTraceArgs) -> Result<()> {
    let mut spec = WorkloadSpec::new(a.kind, a.length, a.seed);
    spec.line_size_log2 = line_size_log2_from_bytes(a.line)?;
    let p = &mut spec.params;
    if let Some(v) = a.base {
        p.base = v;
    }
    if let Some(v) = a.stride {
        p.stride_bytes = v;
    }
    if let Some(v) = a.footprint {
        p.footprint_lines = v;
    }
    if let Some(v) = a.zipf_exponent {
        p.zipf_exponent = v;
    }
    if let Some(v) = a.hot_lines {
        p.hot_lines = v;
    }
    if let Some(v) = a.stream_fraction {
        p.stream_fraction = v;
    }
    if let Some(v) = a.regions {
        p.region_count = v;
    }
    if let Some(v) = a.region_lines {
        p.region_lines = v;
    }
    if let Some(v) = a.reuse_probs {
        p.region_reuse = v;
    }
    if let Some(v) = a.reuse_window {
        p.reuse_window = v;
    }
    if let Some(v) = a.store_fraction {
        p.store_fraction = v;
    }
    write_trace(&generate_trace(&spec)?, &a.out)
}

/// Parses a `--policy` value. `oracle` without a threshold uses sets * ways.
pub fn parse_policy(s: &str, config: &CacheConfig, trace: &crate::trace::Trace) -> Result<BypassPolicy> {
    let bad = |reason: String| Error::validation("policy", reason);
    let (head, rest) = s.split_once(':').unwrap_or((s, ""));
    match head {
        "never" if rest.is_empty() => Ok(BypassPolicy::NeverBypass),
        "always" if rest.is_empty() => Ok(BypassPolicy::AlwaysBypass),
        "random" => {
            let (p, seed) = rest
                .split_once(':')
                .ok_or_else(|| bad(format!("`{s}` is not random:p:seed")))?;
            let p = p.parse().map_err(|_| bad(format!("bad probability `{p}`")))?;
            let seed = seed.parse().map_err(|_| bad(format!("bad seed `{seed}`")))?;
            BypassPolicy::random(p, seed)
        }
        "oracle" => {
            let t = if rest.is_empty() {
                config.capacity_lines()
            } else {
                rest.parse().map_err(|_| bad(format!("bad threshold `{rest}`")))?
            };
            Ok(oracle_bypass_policy_with_threshold(trace, t))
        }
        "model" if !rest.is_empty() => Ok(policy_from_model(Predictor::load(rest)?)),
        _ => Err(bad(format!(
            "`{s}` is not never|always|random:p:seed|oracle:T|model:path"
        ))),
    }
}

fn simulate_cmd(a: SimulateArgs) -> Result<()> {
    let trace = read_trace(&a.trace)?;
    let config = geometry(&a.geometry, line_size_log2_from_bytes(a.line)?)?;
    let policy = parse_policy(&a.policy, &config, &trace)?;
    let s = simulate(&trace, &config, &policy)?;
    emit(
        a.out.as_deref(),
        &format!(
            "policy,accesses,hits,misses,bypasses,evictions,miss_rate\n{},{},{},{},{},{},{}\n",
            policy.name(),
            s.accesses,
            s.hits,
            s.misses,
            s.bypasses,
            s.evictions,
            s.miss_rate()
        ),
    )
}

/// Builds the plan for `kind`. `grid` is `default` or a comma-separated
/// list of values (solver names for logreg).
pub fn build_plan(kind: SweepKind, grid: &str, params: &str, weighting: &str) -> Result<SweepPlan> {
    let weightings = match weighting {
        "both" => vec![Weighting::Uniform, Weighting::InverseDistance],
        w => vec![w.parse()?],
    };
    let base_kind = match kind {
        SweepKind::TreeDepth | SweepKind::TreeImpurity => "tree",
        SweepKind::KnnK => "knn",
        SweepKind::LogRegSolver => "logreg",
        SweepKind::MlpNeurons => "mlp",
    };
    let base = ModelSpec::default_for(base_kind)?.with_params(params)?;
    let mut plan = match base {
        ModelSpec::Tree {
            max_depth,
            min_impurity_split,
        } => match kind {
            SweepKind::TreeDepth => SweepPlan::tree_depth(min_impurity_split),
            _ => SweepPlan::tree_impurity(max_depth),
        },
        ModelSpec::Knn { .. } => weightings
            .iter()
            .map(|&w| SweepPlan::knn(w))
            .reduce(SweepPlan::chain)
            .expect("at least one weighting"),
        ModelSpec::LogReg(p) => SweepPlan::logreg(p),
        ModelSpec::Mlp(p) => SweepPlan::mlp(p),
    };
    if grid == "default" {
        return Ok(plan);
    }
    let values: Vec<&str> = grid.split(',').map(str::trim).filter(|v| !v.is_empty()).collect();
    if values.is_empty() {
        return Err(Error::validation("grid", "empty value list"));
    }
    let template = plan.grid.clone();
    plan.grid.clear();
    // One grid point per (variant, value), variants in their default order.
    let mut variants: Vec<&GridPoint> = Vec::new();
    for p in &template {
        // Logreg variants are the solvers themselves, picked by the value list.
        let solver_grid = matches!(p.spec, ModelSpec::LogReg(_)) && !variants.is_empty();
        if !solver_grid && !variants.iter().any(|v| v.variant == p.variant) {
            variants.push(p);
        }
    }
    for proto in variants {
        for v in &values {
            plan.grid.push(grid_point(proto, v)?);
        }
    }
    Ok(plan)
}

fn grid_point(proto: &GridPoint, value: &str) -> Result<GridPoint> {
    let mut point = proto.clone();
    if let ModelSpec::LogReg(p) = &mut point.spec {
        let solver: Solver = value.parse()?;
        p.solver = solver;
        point.value = Solver::ALL.iter().position(|&s| s == solver).unwrap_or(0) as f64;
        point.variant = solver.to_string();
        return Ok(point);
    }
    point.value = value
        .parse()
        .map_err(|_| Error::validation("grid", format!("bad grid value `{value}`")))?;
    point.spec.set(proto.param, value)?;
    Ok(point)
}

fn sweep_cmd(a: SweepArgs) -> Result<()> {
    let kind = SweepKind::parse(&a.model)?;
    let plan = build_plan(kind, &a.grid, &a.params, &a.weighting)?;
    let data = read_dataset(&a.data, None)?;
    let (train, test) = match &a.test {
        Some(path) => (data, read_dataset(path, None)?),
        None => train_test_split(&data, a.test_frac, a.seed)?,
    };
    let plan = SweepPlan {
        grid: plan
            .grid
            .into_iter()
            .map(|mut p| {
                p.spec = p.spec.with_seed(a.seed);
                p
            })
            .collect(),
        ..plan
    };
    let result = run_sweep(&plan, &train, &test)?;
    for row in result.failures() {
        if let Err(e) = &row.outcome {
            eprintln!("warning: {} {}={} failed: {e}", row.model, row.param, row.value);
        }
    }
    fs::write(&a.out, result.to_csv(a.record_timing))?;
    Ok(())
}

/// Keys naming files a stage reads.
fn input_keys(stage: &str) -> &'static [&'static str] {
    match stage {
        "simulate" | "label" | "compare" => &["trace", "model"],
        "balance" | "featurize" | "split" | "train" => &["in"],
        "sweep" => &["data", "test"],
        "eval" => &["model", "data"],
        "report" => &["inputs"],
        _ => &[],
    }
}

/// Keys naming files or directories a stage writes.
fn output_keys(stage: &str) -> &'static [&'static str] {
    match stage {
        "split" => &["train-out", "test-out"],
        "report" => &["out-dir"],
        "run" => &[],
        _ => &["out"],
    }
}

fn normalize_key(key: &str) -> String {
    key.replace('_', "-")
}

fn resolve(base: &Path, value: &str) -> PathBuf {
    let p = Path::new(value);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn digest_of(path: &Path) -> Result<String> {
    if path.is_dir() {
        dir_digest(path)
    } else {
        file_digest(path)
    }
}

fn check_digest(path: &Path, expected: Option<&str>) -> Result<String> {
    let actual = digest_of(path)?;
    if let Some(expected) = expected {
        if !expected.eq_ignore_ascii_case(&actual) {
            return Err(Error::DigestMismatch {
                path: path.to_path_buf(),
                expected: expected.to_string(),
                actual,
            });
        }
    }
    Ok(actual)
}

/// Replays every stage of a manifest in order.
///
/// Paths resolve against the manifest's directory. Pinned digests of inputs
/// are checked before a stage runs and pinned digests of outputs after it.
/// Returns the manifest with all digests filled in, which is also written to
/// `record` when given.
pub fn run_pipeline(manifest_path: &Path, record: Option<&Path>) -> Result<RunManifest> {
    let mut manifest = RunManifest::load(manifest_path)?;
    if manifest.stages.is_empty() {
        return Err(Error::Manifest("no stages".into()));
    }
    let base = manifest_path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default();

    for stage in &mut manifest.stages {
        let name = stage.name.clone();
        if name == "run" {
            return Err(Error::Manifest("a manifest cannot contain a `run` stage".into()));
        }
        let inputs = input_keys(&name);
        let outputs = output_keys(&name);

        let mut argv: Vec<String> = vec!["bypasslab".into(), name.clone()];
        let mut in_files: Vec<(String, PathBuf)> = Vec::new();
        let mut out_files: Vec<(String, PathBuf)> = Vec::new();
        for (raw_key, value) in &stage.params {
            let key = normalize_key(raw_key);
            let is_input = inputs.contains(&key.as_str());
            let is_output = outputs.contains(&key.as_str());
            let value = if is_input && key == "inputs" {
                let parts: Vec<PathBuf> = value.split(',').map(|v| resolve(&base, v.trim())).collect();
                for p in &parts {
                    in_files.push((raw_key.clone(), p.clone()));
                }
                parts
                    .iter()
                    .map(|p| p.display().to_string())
                    .collect::<Vec<_>>()
                    .join(",")
            } else if is_input || is_output {
                let p = resolve(&base, value);
                if is_input {
                    in_files.push((raw_key.clone(), p.clone()));
                } else {
                    out_files.push((raw_key.clone(), p.clone()));
                }
                p.display().to_string()
            } else if key == "policy" && value.starts_with("model:") {
                let p = resolve(&base, &value["model:".len()..]);
                in_files.push((raw_key.clone(), p.clone()));
                format!("model:{}", p.display())
            } else {
                value.clone()
            };
            if value == "true" {
                argv.push(format!("--{key}"));
            } else {
                argv.push(format!("--{key}"));
                argv.push(value);
            }
        }

        // Multi-file inputs share one digest entry, so only single files are pinned.
        let single_input = |key: &str| in_files.iter().filter(|(k, _)| k == key).count() == 1;
        for (key, path) in &in_files {
            if !path.exists() {
                return Err(Error::MissingInput(path.clone()));
            }
            if single_input(key) {
                let actual = check_digest(path, stage.digest(key))?;
                stage.set_digest(key, actual);
            }
        }

        let cli = Cli::try_parse_from(&argv)
            .map_err(|e| Error::Manifest(format!("stage `{name}`: {}", e.to_string().trim())))?;
        if let Some(parent_dirs) = out_files.iter().map(|(_, p)| p.parent()).collect::<Option<Vec<_>>>() {
            for d in parent_dirs {
                fs::create_dir_all(d)?;
            }
        }
        execute(cli.command).map_err(|e| match e {
            Error::MissingInput(_) => e,
            other => Error::Stage {
                stage: name.clone(),
                source: Box::new(other),
            },
        })?;

        for (key, path) in &out_files {
            let actual = check_digest(path, stage.digest(key))?;
            stage.set_digest(key, actual);
        }
    }

    manifest.set_setting("tool_version", env!("CARGO_PKG_VERSION"));
    if let Some(path) = record {
        fs::write(path, manifest.to_text())?;
    }
    Ok(manifest)
}
