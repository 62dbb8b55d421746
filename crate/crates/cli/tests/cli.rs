use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cuthmm::io;
use cuthmm_cli::run::Manifest;

const TINY: &str = r#"
[data]
n = 600
seed = 11

[partition]
M = [1, 2]

[grid]
n = [300, 600]

[pi1]
iterations = 400
burn_in = 100
thin = 5

[pi2]
C = 2
cells = [{ n = 600, M = 2 }]
exterior_draws = 10

[full]
n = [300]
iterations = 300
burn_in = 100
thin = 10

[spectral]
M = 2
restarts = 5

[diagnostics]
n = 300
reference_m = 1
em_max_iter = 500

[outputs]
grid_points = 32
"#;

fn cuthmm(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cuthmm")).current_dir(dir).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path
}

fn stdout_path(out: &Output) -> PathBuf {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    PathBuf::from(String::from_utf8(out.stdout.clone()).unwrap().trim())
}

/// Every file under `root`, keyed by relative path; manifests lose their timing.
fn snapshot(root: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(dir: &Path, root: &Path, acc: &mut BTreeMap<String, Vec<u8>>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(&path, root, acc);
                continue;
            }
            let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
            let mut bytes = std::fs::read(&path).unwrap();
            if rel.starts_with("manifests") {
                let mut m: serde_json::Value = serde_json::from_slice(&bytes).unwrap();
                m.as_object_mut().unwrap().remove("timing");
                bytes = serde_json::to_vec(&m).unwrap();
            }
            acc.insert(rel, bytes);
        }
    }
    let mut acc = BTreeMap::new();
    walk(root, root, &mut acc);
    acc
}

fn schema(name: &str) -> jsonschema::Validator {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("schemas").join(name);
    let value: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    jsonschema::validator_for(&value).unwrap()
}

#[test]
fn pipeline_is_deterministic_and_its_outputs_read_back() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), "tiny.toml", TINY);
    let config = config.to_str().unwrap();
    let manifest = stdout_path(&cuthmm(tmp.path(), &["reproduce-paper", "--config", config, "--scale", "full", "--out", "a"]));
    let root = tmp.path().join(manifest.parent().unwrap().parent().unwrap());

    let manifest_schema = schema("manifest.schema.json");
    let mut listed = Vec::new();
    for entry in std::fs::read_dir(root.join("manifests")).unwrap() {
        let value: serde_json::Value = serde_json::from_slice(&std::fs::read(entry.unwrap().path()).unwrap()).unwrap();
        assert!(manifest_schema.is_valid(&value), "{value}");
        let m: Manifest = serde_json::from_value(value).unwrap();
        assert_eq!(m.scale.as_deref(), Some("full"));
        listed.extend(m.artifacts);
    }
    for rel in &listed {
        assert!(root.join(rel).is_file(), "manifest lists missing {rel}");
    }
    let effective: serde_json::Value = serde_json::from_slice(&std::fs::read(root.join("config.json")).unwrap()).unwrap();
    assert!(schema("config.schema.json").is_valid(&effective));

    assert_eq!(io::read_observations(&root.join("data/observations.csv")).unwrap().len(), 600);
    for n in [300, 600] {
        for m in [1, 2] {
            let cell = root.join(format!("pi1/n{n}_M{m}"));
            let store = io::read_draw_store(&cell.join("draws.csv"), &cell.join("draws.json")).unwrap();
            assert_eq!(store.len(), 60);
        }
    }
    for cell in ["pi2/n600_M2", "pi2/full_n300"] {
        let cell = root.join(cell);
        let draws = io::read_emission_draws(&cell.join("emission_draws.csv")).unwrap();
        let densities = io::read_density_draws(&cell.join("density_draws.csv")).unwrap();
        assert_eq!(densities.grid.len(), 32);
        assert!(!draws.is_empty());
        io::read_bands(&cell.join("bands.csv"), 0.9).unwrap();
    }
    for table in ["pi1/summary.csv", "diagnostics/bvm.csv"] {
        let (header, rows) = io::read_table(&root.join(table)).unwrap();
        assert!(!header.is_empty() && !rows.is_empty());
    }
    for json in ["spectral/estimate.json", "diagnostics/heuristic.json", "diagnostics/monotonicity.json", "diagnostics/bvm.json"] {
        let _: serde_json::Value = io::read_json(&root.join(json)).unwrap();
    }

    let again = stdout_path(&cuthmm(tmp.path(), &["reproduce-paper", "--config", config, "--scale", "full", "--out", "b", "--jobs", "3"]));
    let root_b = tmp.path().join(again.parent().unwrap().parent().unwrap());
    assert_eq!(root.file_name(), root_b.file_name());
    assert!(snapshot(&root) == snapshot(&root_b), "two runs with one config differ");
}

#[test]
fn seed_flag_overrides_the_config_and_names_a_new_run() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), "tiny.toml", TINY);
    let config = config.to_str().unwrap();
    let a = stdout_path(&cuthmm(tmp.path(), &["simulate", "--config", config, "--out", "o"]));
    let b = stdout_path(&cuthmm(tmp.path(), &["simulate", "--config", config, "--out", "o", "--seed", "12"]));
    assert_ne!(a, b);
    let m: Manifest = io::read_json(&tmp.path().join(&b)).unwrap();
    assert_eq!(m.seed, 12);
    let ya = io::read_observations(&tmp.path().join(a.parent().unwrap().parent().unwrap()).join("data/observations.csv"));
    let yb = io::read_observations(&tmp.path().join(b.parent().unwrap().parent().unwrap()).join("data/observations.csv"));
    assert_ne!(ya.unwrap(), yb.unwrap());
}

#[test]
fn config_errors_exit_with_2() {
    let tmp = tempfile::tempdir().unwrap();
    let unknown = write_config(tmp.path(), "unknown.toml", "[pi1]\nthinn = 2\n");
    let invalid = write_config(tmp.path(), "invalid.toml", "[pi1]\nthin = 0\n");
    let q = write_config(tmp.path(), "q.toml", "[model]\nQ_star = [[0.5, 0.6], [0.2, 0.8]]\n");
    for path in [unknown, invalid, q, tmp.path().join("absent.toml")] {
        let out = cuthmm(tmp.path(), &["fit-q", "--config", path.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(2), "{}", path.display());
        assert!(String::from_utf8_lossy(&out.stderr).contains("config error"));
    }
}

#[test]
fn missing_artifacts_exit_with_3_and_name_the_producer() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), "tiny.toml", TINY);
    let config = config.to_str().unwrap();
    let out = cuthmm(tmp.path(), &["fit-emissions", "--config", config, "--out", "o"]);
    assert_eq!(out.status.code(), Some(3));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("observations.csv") && stderr.contains("cuthmm simulate"), "{stderr}");

    stdout_path(&cuthmm(tmp.path(), &["simulate", "--config", config, "--out", "o"]));
    let out = cuthmm(tmp.path(), &["fit-emissions", "--config", config, "--out", "o"]);
    assert_eq!(out.status.code(), Some(3));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("draws.csv") && stderr.contains("cuthmm fit-q"), "{stderr}");
}

#[test]
fn imported_constant_series_is_a_numerical_failure_for_spectral() {
    let tmp = tempfile::tempdir().unwrap();
    let mut csv = String::from("t,y\n");
    for t in 0..500 {
        csv.push_str(&format!("{t},0.25\n"));
    }
    let data = write_config(tmp.path(), "const.csv", &csv);
    let config = write_config(
        tmp.path(),
        "const.toml",
        &format!("[data]\ninput = {:?}\n\n[spectral]\nM = 2\n", data.to_str().unwrap()),
    );
    let config = config.to_str().unwrap();
    let manifest = stdout_path(&cuthmm(tmp.path(), &["simulate", "--config", config, "--out", "o"]));
    let root = tmp.path().join(manifest.parent().unwrap().parent().unwrap());
    assert_eq!(io::read_observations(&root.join("data/observations.csv")).unwrap(), vec![0.25; 500]);
    assert!(!root.join("data/latent_path.csv").exists());

    let out = cuthmm(tmp.path(), &["spectral", "--config", config, "--out", "o"]);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
}
