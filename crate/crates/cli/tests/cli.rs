use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sha2::{Digest, Sha256};

fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data")
}

fn write_config(dir: &Path, densities: &str, extra: &str) -> PathBuf {
    let text = format!(
        r#"
seed = 17
output_dir = "{out}"
draws = 10

[data]
path = "{csv}"
treatment = "going_concern"
outcome = "bankrupt"
label = "firm"

[bart]
trees = 10
burn_in = 20
draws = 100
cutpoints = 20

[sensitivity]
nodes = 32

{densities}
{extra}
"#,
        out = dir.join("out").display(),
        csv = data_dir().join("firms.csv").display(),
    );
    let path = dir.join("run.toml");
    std::fs::write(&path, text).unwrap();
    path
}

const TWO: &str = r#"
[[sensitivity.densities]]
kind = "gaussian"
sd = 1.0

[[sensitivity.densities]]
kind = "sharkfin"
q = 0.25
s = 0.5
"#;

fn run(config: &Path, args: &[&str]) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_inducement"))
        .arg("--config")
        .arg(config)
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap();
    out
}

fn ok(config: &Path, args: &[&str]) {
    let out = run(config, args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
}

fn hash(path: &Path) -> Vec<u8> {
    Sha256::digest(std::fs::read(path).unwrap()).to_vec()
}

fn data_rows(path: &Path) -> Vec<String> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(str::to_owned)
        .collect()
}

#[test]
fn project_reuses_the_artifact_across_sweeps() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TWO, "");
    ok(&cfg, &["fit"]);
    let artifact = dir.path().join("out/reduced_form.bin");
    let before = hash(&artifact);

    ok(&cfg, &["project"]);
    let table = dir.path().join("out/sensitivity.csv");
    let text = std::fs::read_to_string(&table).unwrap();
    assert!(text.starts_with("# sensitivity results seed=17\n"));
    assert!(text.contains("acrr_2.5,acrr_97.5"));
    assert_eq!(data_rows(&table).len(), 2);
    assert_eq!(hash(&artifact), before);

    let three = format!("{TWO}\n[[sensitivity.densities]]\nkind = \"gaussian\"\nsd = 0.1\n");
    let cfg = write_config(dir.path(), &three, "");
    ok(&cfg, &["project", "--mode", "mean-only"]);
    assert_eq!(data_rows(&table).len(), 3);
    assert_eq!(hash(&artifact), before);
}

#[test]
fn identical_seed_gives_identical_outputs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        let cfg = write_config(dir.path(), TWO, "");
        ok(&cfg, &["fit"]);
        ok(&cfg, &["project", "--threads", if dir.path() == a.path() { "1" } else { "3" }]);
    }
    for file in ["reduced_form.bin", "reduced_form_means.csv", "sensitivity.csv", "units_1.csv"] {
        assert_eq!(
            hash(&a.path().join("out").join(file)),
            hash(&b.path().join("out").join(file)),
            "{file} differs"
        );
    }
}

#[test]
fn other_subcommands_write_their_tables() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TWO, "[subgroup]\nmax_depth = 2\nmin_leaf = 40\n\n[diagnose]\nmonitored = 5\n");
    ok(&cfg, &["fit"]);
    ok(&cfg, &["evalue", "--mode", "mean-only"]);
    ok(&cfg, &["subgroup", "--draws", "10"]);
    ok(&cfg, &["diagnose"]);
    let out = dir.path().join("out");
    let ev = std::fs::read_to_string(out.join("evalue_2.csv")).unwrap();
    assert!(ev.contains("obs,rr_obs,evalue,inverted,tau_mean"));
    assert_eq!(data_rows(&out.join("evalue_1.csv")).len(), 400);
    let diff = data_rows(&out.join("subgroup_1_difference.csv"));
    assert!(diff.len() == 10 || diff.is_empty());
    assert!(out.join("subgroup_1_tree.json").exists());
    let diag = std::fs::read_to_string(out.join("diagnostics.csv")).unwrap();
    assert!(diag.contains("quantity,n_eff_ratio,geweke_z,geweke_prob"));
    assert_eq!(data_rows(&out.join("diagnostics.csv")).len(), 15);
    assert!(out.join("traces.csv").exists() && out.join("acf.csv").exists());
}

#[test]
fn simulate_writes_the_recovery_schema() {
    let dir = tempfile::tempdir().unwrap();
    let extra = "[simulate]\n[simulate.bivariate]\nn = 300\n";
    let cfg = write_config(dir.path(), TWO, extra);
    ok(&cfg, &["simulate", "--table", "bivariate"]);
    let text = std::fs::read_to_string(dir.path().join("out/recovery_bivariate.csv")).unwrap();
    assert!(text.contains("acrr_true,acrr_est,icrr_cor,icrr_rmse"));
    assert_eq!(data_rows(&dir.path().join("out/recovery_bivariate.csv")).len(), 1);
}

#[test]
fn version_mismatch_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TWO, "");
    ok(&cfg, &["fit"]);
    let artifact = dir.path().join("out/reduced_form.bin");
    let mut bytes = std::fs::read(&artifact).unwrap();
    bytes[8] = bytes[8].wrapping_add(1);
    let bumped = dir.path().join("bumped.bin");
    std::fs::write(&bumped, bytes).unwrap();
    let out = run(&cfg, &["project", "--artifact", bumped.to_str().unwrap()]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("unsupported artifact version 2"), "{err}");
}

#[test]
fn bad_treatment_value_names_the_row() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("bad.csv");
    std::fs::write(&csv, "x,going_concern,bankrupt,firm\n0.1,0,1,a\n0.2,2,0,b\n").unwrap();
    let cfg = write_config(dir.path(), TWO, "");
    let out = run(&cfg, &["fit", "--data", csv.to_str().unwrap()]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("row 2"), "{err}");
}
