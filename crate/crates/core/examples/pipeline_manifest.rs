//! Run a small manifest end to end in a scratch directory, print the
//! recorded manifest with its digests, then replay it.

use bypasslab::cli::run_pipeline;

const MANIFEST: &str = "\
[gen-trace]
kind = zipf
length = 5000
seed = 4
stream-fraction = 0.5
out = trace.csv

[label]
trace = trace.csv
out = labels.csv

[balance]
in = labels.csv
seed = 4
out = balanced.csv

[train]
model = tree
params = depth=10
in = balanced.csv
seed = 4
out = tree.json

[compare]
trace = trace.csv
model = tree.json
seed = 4
out = compare.csv
";

fn main() -> bypasslab::Result<()> {
    let dir = tempfile::tempdir()?;
    let manifest = dir.path().join("run.manifest");
    let recorded = dir.path().join("recorded.manifest");
    std::fs::write(&manifest, MANIFEST)?;
    run_pipeline(&manifest, Some(&recorded))?;
    print!("{}", std::fs::read_to_string(&recorded)?);
    print!("\n{}", std::fs::read_to_string(dir.path().join("compare.csv"))?);

    // Every digest was pinned by the first run; a replay re-checks them all.
    run_pipeline(&recorded, None)?;
    println!("replay matched every recorded digest");
    Ok(())
}
