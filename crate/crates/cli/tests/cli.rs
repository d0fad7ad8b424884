use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use polycap::grid::{build_mask, Geometry, GridCube};
use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_polycap"))
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("polycap-cli-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    bin().arg("--out-dir").arg(dir).args(args).output().unwrap()
}

fn text(bytes: &[u8]) -> String {
    String::from_utf8_lossy(bytes).into_owned()
}

#[test]
fn catalog_is_listed() {
    let out = bin().arg("list-examples").output().unwrap();
    assert!(out.status.success());
    let listing = text(&out.stdout);
    assert!(listing.lines().count() >= 5);
    for name in std::fs::read_dir(configs()).unwrap().flatten() {
        let file = name.file_name().into_string().unwrap();
        if let Some(stem) = file.strip_suffix(".toml") {
            assert!(listing.contains(stem), "{stem} missing from the catalog");
        }
    }
    let shown = bin().args(["list-examples", "--show", "carpet-2d"]).output().unwrap();
    assert!(text(&shown.stdout).contains("carpet"));
}

#[test]
fn empty_set_gives_a_zero_row() {
    let dir = scratch("empty");
    let out = run_in(&dir, &["run", "example:capacity-empty"]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    let csv = std::fs::read_to_string(dir.join("capacity-empty.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("label,quantity,value,bound,detail"));
    assert!(lines.next().unwrap().starts_with("empty,condenser,0e0,exact-qp,"));
}

#[test]
fn reruns_are_byte_identical() {
    let dir = scratch("determinism");
    let cfg = configs().join("points-1d.toml");
    let cfg = cfg.to_str().unwrap();
    let first = run_in(&dir, &["--format", "json", "run", cfg]);
    assert!(first.status.success(), "{}", text(&first.stderr));
    let a = std::fs::read(dir.join("points-1d.json")).unwrap();
    let second = bin()
        .env("POLYCAP_WORKERS", "1")
        .arg("--out-dir")
        .arg(&dir)
        .args(["--format", "json", "run", cfg])
        .output()
        .unwrap();
    assert!(second.status.success());
    assert_eq!(a, std::fs::read(dir.join("points-1d.json")).unwrap());
    assert!(!dir.join("points-1d.csv").exists());
}

#[test]
fn records_match_the_schema() {
    let dir = scratch("schema");
    let schema: Value =
        serde_json::from_str(include_str!("../schema/record.schema.json")).unwrap();
    let compiled = jsonschema::JSONSchema::compile(&schema).unwrap();
    for name in ["capacity-point", "poincare-dirichlet", "synthesis-condition", "deviation"] {
        let out = run_in(&dir, &["--format", "json", "run", &format!("example:{name}")]);
        assert!(out.status.success(), "{name}: {}", text(&out.stderr));
        let record: Value =
            serde_json::from_str(&std::fs::read_to_string(dir.join(format!("{name}.json"))).unwrap()).unwrap();
        assert!(compiled.is_valid(&record), "{name}");
        assert!(record["items"].as_array().unwrap().iter().all(|i| i["bound"].is_string()));
    }
}

#[test]
fn schema_violations_exit_one_with_a_line() {
    let dir = scratch("invalid");
    let path = dir.join("bad.toml");
    std::fs::write(
        &path,
        "kind = \"capacity\"\n[grid]\ndim = 1\nn = 9\n[params]\nm = 1\nflavour = \"x\"\n",
    )
    .unwrap();
    let out = run_in(&dir, &["run", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err = text(&out.stderr);
    assert!(err.contains("line 7") && err.contains("flavour"), "{err}");
}

#[test]
fn failed_verdicts_exit_two() {
    let dir = scratch("regression");
    let path = dir.join("tight.toml");
    let base = std::fs::read_to_string(configs().join("points-1d.toml")).unwrap();
    std::fs::write(&path, base.replace("starts = 8", "starts = 8\nmax-width = 1.0")).unwrap();
    let out = run_in(&dir, &["run", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2), "{}", text(&out.stderr));
    assert!(text(&out.stdout).contains("[FAIL]"));
}

#[test]
fn fixtures_are_frozen_then_compared() {
    let dir = scratch("fixture");
    let path = dir.join("eq.toml");
    let base = std::fs::read_to_string(configs().join("points-1d.toml")).unwrap();
    std::fs::write(&path, format!("{base}\n[output]\nfixture = \"frozen.json\"\n")).unwrap();
    let path = path.to_str().unwrap();
    for _ in 0..2 {
        let out = run_in(&dir, &["run", path]);
        assert!(out.status.success(), "{}", text(&out.stderr));
    }
    assert!(dir.join("frozen.json").exists());
    let frozen = std::fs::read_to_string(dir.join("frozen.json")).unwrap();
    let mut v: Value = serde_json::from_str(&frozen).unwrap();
    v[0]["lower"] = Value::from(123.0);
    std::fs::write(dir.join("frozen.json"), v.to_string()).unwrap();
    let out = run_in(&dir, &["run", path]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn verify_dispatches_and_rejects_unknown_suites() {
    let out = bin().args(["verify", "analytic-oracles"]).output().unwrap();
    assert!(out.status.success(), "{}", text(&out.stdout));
    assert!(text(&out.stdout).contains("analytic-oracles PASS"));
    let out = bin().args(["verify", "plotting"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

/// Closed-carpet membership by exact base-3 digits of `i / (n - 1)`.
fn in_carpet(i: usize, j: usize, n: usize, depth: u32) -> bool {
    let d = n - 1;
    (0..depth).all(|level| {
        let scale = 3usize.pow(level);
        let middle = |a: usize| {
            let r = (a * scale) % d;
            d < 3 * r && 3 * r < 2 * d
        };
        !(middle(i) && middle(j))
    })
}

#[test]
fn carpet_example_matches_brute_force() {
    let cfg: toml::Value =
        toml::from_str(&std::fs::read_to_string(configs().join("carpet-2d.toml")).unwrap()).unwrap();
    let n = cfg["grid"]["n"].as_integer().unwrap() as usize;
    let q = GridCube::unit(2, n).unwrap();
    for set in cfg["sets"].as_array().unwrap() {
        let geometry: Geometry = set["geometry"].clone().try_into().unwrap();
        let Geometry::Carpet { depth } = geometry else { panic!() };
        let want = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).filter(|&(i, j)| in_carpet(i, j, n, depth)).count();
        assert_eq!(build_mask(&q, &geometry).unwrap().count(), want, "depth {depth}");
    }
}
