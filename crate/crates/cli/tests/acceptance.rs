//! Acceptance gate, CLI side: the full comparison grid is reproducible to
//! the byte. The verdict line goes straight to the process stderr so it
//! shows up in plain `cargo test` output next to the harness results.

use std::fs;
use std::io::Write as _;
use std::path::Path;
use std::process::Command;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_sparseproj")
}

fn conclude(name: &str, ok: bool, detail: &str) {
    let verdict = if ok { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr().lock(), "acceptance {name}: {verdict} ({detail})");
    assert!(ok, "{name}: {detail}");
}

fn run_grid(config: &Path, out: &Path, jobs: &str) {
    let status = Command::new(bin())
        .args(["compare", "--grid-config"])
        .arg(config)
        .args(["--jobs", jobs, "--out"])
        .arg(out)
        .status()
        .expect("spawn compare");
    assert!(status.success(), "compare run into {} failed", out.display());
}

#[test]
fn criterion_7_grid_rerun_is_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("grid.cfg");
    fs::write(
        &config,
        "phantom = random-ellipses\n\
         side = 24\n\
         slices = 3\n\
         volumes = 2\n\
         angle_counts = 2,4\n\
         conditions = uniform,nonuniform\n\
         epochs = 4\n\
         seed = 11\n",
    )
    .unwrap();

    // Same seeds, different worker counts: cell scheduling must not leak
    // into any CSV byte.
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    run_grid(&config, &a, "1");
    run_grid(&config, &b, "2");

    let mut compared = Vec::new();
    let mut identical = true;
    for name in ["results.csv", "failures.txt"] {
        let ba = fs::read(a.join(name)).unwrap_or_else(|_| panic!("{name} missing in run A"));
        let bb = fs::read(b.join(name)).unwrap_or_else(|_| panic!("{name} missing in run B"));
        identical &= ba == bb;
        compared.push(format!("{name} ({} bytes)", ba.len()));
    }
    let rows = fs::read_to_string(a.join("results.csv")).unwrap().lines().count();
    let ok = identical && rows > 1;
    conclude(
        "criterion-7 determinism",
        ok,
        &format!(
            "two grid runs (jobs 1 vs 2), {} data rows: byte-identical {} -> {identical}",
            rows - 1,
            compared.join(" + ")
        ),
    );
}
