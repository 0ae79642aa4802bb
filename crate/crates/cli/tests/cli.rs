use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_overlayforge"))
}

fn benchmarks() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../benchmarks")
}

fn run(out: &Path, args: &[&str]) -> Output {
    let o = bin()
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs");
    o
}

fn ok(out: &Path, args: &[&str]) -> String {
    let o = run(out, args);
    assert!(
        o.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    String::from_utf8(o.stdout).unwrap()
}

fn fails(out: &Path, args: &[&str]) -> String {
    let o = run(out, args);
    assert!(!o.status.success(), "{args:?} unexpectedly succeeded");
    String::from_utf8(o.stderr).unwrap()
}

fn primary(out: &Path, app: &str) -> u64 {
    let v: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("mining_report.json")).unwrap()).unwrap();
    let apps = v["applications"].as_array().unwrap();
    apps.iter().find(|a| a["name"] == app).unwrap()["primary"]
        .as_u64()
        .unwrap()
}

#[test]
fn full_pipeline_on_benchmarks() {
    let dir = TempDir::new().unwrap();
    let out = dir.path();
    let bench = benchmarks();
    let mined = ok(out, &["mine", bench.to_str().unwrap()]);
    for (app, io) in [
        ("matmul", "inputs=3 outputs=1"),
        ("outer", "inputs=2 outputs=1"),
        ("robert", "inputs=4 outputs=1"),
        ("smooth", "inputs=10 outputs=1"),
    ] {
        assert!(
            mined
                .lines()
                .any(|l| l.starts_with(app) && l.contains(io) && l.ends_with("primary")),
            "{app}: {mined}"
        );
    }
    assert!(out.join("rewritten/matmul.ir").is_file());
    assert!(fs::read_to_string(out.join("rewritten/matmul.ir"))
        .unwrap()
        .contains("hwcall"));

    let generated = ok(out, &["generate"]);
    let k = primary(out, "matmul");
    assert!(
        generated
            .lines()
            .any(|l| l.starts_with(&format!("k{k} latency=7"))),
        "{generated}"
    );

    let outer = out.join(format!("netlists/k{}.json", primary(out, "outer")));
    let stitched = ok(out, &["stitch", outer.to_str().unwrap(), "--grid", "3x3"]);
    assert!(stitched.contains("9 of 9 slots assigned"), "{stitched}");
    assert!(
        stitched.contains("as   lut=") && stitched.contains("dsp=36"),
        "{stitched}"
    );

    let simmed = ok(out, &["sim", "--vectors", "64"]);
    assert!(simmed.contains("oracle pass"));
    let rep: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("sim_report.json")).unwrap()).unwrap();
    assert!(rep["as_cycles"].as_u64().unwrap() < rep["alu_cycles"].as_u64().unwrap());

    ok(out, &["report", "--sizes", "8,32"]);
    let kernels = fs::read_to_string(out.join("kernels.csv")).unwrap();
    assert_eq!(kernels.lines().count(), 5);
    assert!(kernels
        .lines()
        .any(|l| l.starts_with("smooth,") && l.contains(",10,1,")));
    let cycles = fs::read_to_string(out.join("cycles.csv")).unwrap();
    assert_eq!(cycles.lines().count(), 1 + 4 * 2);
    let resources = fs::read_to_string(out.join("resources.csv")).unwrap();
    assert_eq!(resources.lines().count(), 1 + 4 * 9);
    // DSPs grow linearly with the PE count.
    for l in resources.lines().filter(|l| l.starts_with("outer,")) {
        let f: Vec<u64> = l.split(',').skip(2).map(|x| x.parse().unwrap()).collect();
        assert_eq!(f[3], 4 * f[0]);
    }
}

#[test]
fn stages_are_idempotent() {
    let dir = TempDir::new().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let bench = benchmarks();
    for out in [&a, &b] {
        ok(out, &["mine", bench.to_str().unwrap()]);
        ok(out, &["generate"]);
        let n = out.join(format!("netlists/k{}.json", primary(out, "robert")));
        ok(out, &["stitch", n.to_str().unwrap()]);
        ok(out, &["sim", "--seed", "5"]);
    }
    for f in [
        "mining_report.json",
        "kernels/k0.dfg",
        "rewritten/smooth.ir",
        "netlists/k0.json",
        "overlay.json",
        "sim_report.json",
    ] {
        assert_eq!(
            fs::read(a.join(f)).unwrap(),
            fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn single_benchmark_gives_one_row() {
    let dir = TempDir::new().unwrap();
    let out = dir.path();
    ok(
        out,
        &["mine", benchmarks().join("outer.ir").to_str().unwrap()],
    );
    ok(out, &["generate"]);
    ok(out, &["report", "--sizes", "4", "--max-grid", "3"]);
    let kernels = fs::read_to_string(out.join("kernels.csv")).unwrap();
    assert_eq!(kernels.lines().count(), 2);
    assert!(kernels.contains("outer,k0,2,1,"));
    assert_eq!(
        fs::read_to_string(out.join("resources.csv"))
            .unwrap()
            .lines()
            .count(),
        3
    );
}

#[test]
fn empty_input_directory_is_rejected() {
    let dir = TempDir::new().unwrap();
    let empty = dir.path().join("empty");
    fs::create_dir(&empty).unwrap();
    let err = fails(dir.path(), &["mine", empty.to_str().unwrap()]);
    assert!(err.contains("no input"), "{err}");
}

#[test]
fn missing_library_is_reported() {
    let dir = TempDir::new().unwrap();
    fs::create_dir(dir.path().join("kernels")).unwrap();
    let err = fails(dir.path(), &["generate", "--lib", "/nonexistent/lib.json"]);
    assert!(err.contains("library"), "{err}");
}

#[test]
fn empty_kernel_set_generates_nothing() {
    let dir = TempDir::new().unwrap();
    fs::create_dir(dir.path().join("kernels")).unwrap();
    let stdout = ok(dir.path(), &["generate"]);
    assert!(stdout.is_empty());
    assert!(!dir.path().join("netlists").exists());
}

#[test]
fn saved_library_is_accepted() {
    let dir = TempDir::new().unwrap();
    let lib = dir.path().join("lib.json");
    ok(dir.path(), &["library", lib.to_str().unwrap()]);
    ok(
        dir.path(),
        &["mine", benchmarks().join("matmul.ir").to_str().unwrap()],
    );
    let out = ok(dir.path(), &["generate", "--lib", lib.to_str().unwrap()]);
    assert!(out.contains("latency=7"));
}

#[test]
fn unassigned_grid_is_a_blackbox_overlay() {
    let dir = TempDir::new().unwrap();
    let out = ok(dir.path(), &["stitch", "--grid", "1x1"]);
    assert!(out.contains("0 of 1 slots assigned"), "{out}");
    let sim = ok(dir.path(), &["sim"]);
    assert!(sim.contains("0 PEs simulated"));
}

#[test]
fn empty_workload_gives_empty_result() {
    let dir = TempDir::new().unwrap();
    let out = dir.path();
    ok(
        out,
        &["mine", benchmarks().join("outer.ir").to_str().unwrap()],
    );
    ok(out, &["generate"]);
    ok(
        out,
        &[
            "stitch",
            out.join("netlists/k0.json").to_str().unwrap(),
            "--grid",
            "2x2",
        ],
    );
    let w = out.join("empty.csv");
    fs::write(&w, "in0,in1\n").unwrap();
    let sim = ok(out, &["sim", "--workload", w.to_str().unwrap()]);
    assert!(sim.contains("oracle pass"), "{sim}");
}

#[test]
fn corrupted_overlay_is_a_parse_error() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("overlay.json"), "{\"name\": ").unwrap();
    let err = fails(dir.path(), &["sim"]);
    assert!(err.contains("overlay"), "{err}");
}

#[test]
fn report_lists_missing_outputs() {
    let dir = TempDir::new().unwrap();
    let err = fails(dir.path(), &["report"]);
    assert!(
        err.contains("mining_report.json") && err.contains("mining_times.csv"),
        "{err}"
    );
}

#[test]
fn branch_kernels_merge() {
    let dir = TempDir::new().unwrap();
    let out = dir.path();
    let ir = out.join("branchy.ir");
    fs::write(&ir, overlayforge::bench::BRANCHY.source).unwrap();
    ok(out, &["mine", ir.to_str().unwrap(), "--blocks", "--merge"]);
    let v: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("mining_report.json")).unwrap()).unwrap();
    let merged = v["applications"][0]["merged"].as_array().unwrap();
    assert_eq!(merged.len(), 1);
    assert_eq!(merged[0]["kernels"], serde_json::json!([0, 1, 2]));
    assert_eq!(
        (
            merged[0]["demuxes"].as_u64(),
            merged[0]["registers"].as_u64()
        ),
        (Some(1), Some(2))
    );
    assert!(out.join("kernels/k3.dfg").is_file());
    let generated = ok(out, &["generate"]);
    assert!(
        generated.lines().any(|l| l.starts_with("k3 latency=")),
        "{generated}"
    );
    ok(
        out,
        &[
            "stitch",
            out.join("netlists/k3.json").to_str().unwrap(),
            "--grid",
            "1x1",
        ],
    );
    assert!(ok(out, &["sim"]).contains("oracle pass"));
}

#[test]
fn bad_grid_is_rejected() {
    let dir = TempDir::new().unwrap();
    let err = fails(dir.path(), &["stitch", "--grid", "0x2"]);
    assert!(err.contains("grid"), "{err}");
}
