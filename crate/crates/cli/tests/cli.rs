use std::path::Path;
use std::process::{Command, Output};

fn consensim(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_consensim"))
        .args(args)
        .current_dir(dir)
        .env_remove("CONSENSIM_SEED")
        .env_remove("SOURCE_DATE_EPOCH")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn constants_then_curves() {
    let dir = tempfile::tempdir().unwrap();
    let o = consensim(
        dir.path(),
        &["constants", "--n", "1,2", "--replications", "2000"],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("wrote constants.json"));

    let text = std::fs::read_to_string(dir.path().join("constants.json")).unwrap();
    let json: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(json["format_version"], 1);
    assert_eq!(json["entries"][0]["num_agents"], 1);
    assert_eq!(json["entries"][0]["base_cost"], 0.0);
    assert!(json["provenance"]["timestamp"].is_null());
    assert_eq!(
        json["provenance"]["config_digest"].as_str().unwrap().len(),
        64
    );

    let o = consensim(
        dir.path(),
        &["curves", "--n", "2", "--rho-count", "5", "--rho-max", "2"],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("curves.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert!(lines[0].starts_with("# seed=42 config_digest="));
    assert_eq!(lines[1], "n,rho,cost_tt_tdma,cost_et_pa,p_pa");
    assert_eq!(lines.len(), 7);
    let last: Vec<&str> = lines[6].split(',').collect();
    assert_eq!(last[1], "2");
    assert_eq!(last[2], "", "TDMA column is empty above full load");
}

#[test]
fn constants_merge_keeps_other_entries() {
    let dir = tempfile::tempdir().unwrap();
    for n in ["2", "3"] {
        let o = consensim(
            dir.path(),
            &["constants", "--n", n, "--replications", "500"],
        );
        assert!(o.status.success());
    }
    let text = std::fs::read_to_string(dir.path().join("constants.json")).unwrap();
    let json: serde_json::Value = serde_json::from_str(&text).unwrap();
    let ns: Vec<u64> = json["entries"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| e["num_agents"].as_u64().unwrap())
        .collect();
    assert_eq!(ns, vec![2, 3]);
}

#[test]
fn curves_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let o = consensim(dir.path(), &["curves"]);
    assert_eq!(
        o.status.code(),
        Some(3),
        "missing constants file is an I/O error"
    );

    let o = consensim(
        dir.path(),
        &["constants", "--n", "2", "--replications", "500"],
    );
    assert!(o.status.success());
    let o = consensim(dir.path(), &["curves", "--n", "2,5"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("n = 5"));

    let path = dir.path().join("constants.json");
    let text = std::fs::read_to_string(&path).unwrap();
    std::fs::write(
        &path,
        text.replace("\"format_version\": 1", "\"format_version\": 9"),
    )
    .unwrap();
    let o = consensim(dir.path(), &["curves", "--n", "2"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("format_version 9"));
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        consensim(dir.path(), &["frobnicate"]).status.code(),
        Some(2)
    );
    assert_eq!(
        consensim(dir.path(), &["curves", "--rho-count", "1"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        consensim(dir.path(), &["constants", "--replications", "10"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        consensim(dir.path(), &["constants", "--config", "missing.toml"])
            .status
            .code(),
        Some(3)
    );
}

#[test]
fn config_file_env_and_flags() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("exp.toml"),
        "seed = 5\nn_list = [2]\nreplications = 300\n[output]\nconstants = \"c.json\"\n",
    )
    .unwrap();
    let seed_of = |extra_env: Option<&str>, extra_args: &[&str]| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_consensim"));
        cmd.current_dir(dir.path())
            .env_remove("CONSENSIM_SEED")
            .env_remove("SOURCE_DATE_EPOCH")
            .args(["constants", "--config", "exp.toml"])
            .args(extra_args);
        if let Some(s) = extra_env {
            cmd.env("CONSENSIM_SEED", s);
        }
        assert!(cmd.output().unwrap().status.success());
        let text = std::fs::read_to_string(dir.path().join("c.json")).unwrap();
        let json: serde_json::Value = serde_json::from_str(&text).unwrap();
        json["provenance"]["seed"].as_u64().unwrap()
    };
    assert_eq!(seed_of(None, &[]), 5);
    assert_eq!(seed_of(Some("6"), &[]), 6);
    assert_eq!(seed_of(Some("6"), &["--seed", "7"]), 7);
}

#[test]
fn source_date_epoch_sets_timestamp() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_consensim"))
        .current_dir(dir.path())
        .env("SOURCE_DATE_EPOCH", "1700000000")
        .args(["constants", "--n", "2", "--replications", "200"])
        .output()
        .unwrap();
    assert!(o.status.success());
    let text = std::fs::read_to_string(dir.path().join("constants.json")).unwrap();
    assert!(text.contains("\"timestamp\": \"1700000000\""));
}

#[test]
fn survival_table_values() {
    let dir = tempfile::tempdir().unwrap();
    let o = consensim(dir.path(), &["survival", "--n", "1,2", "--t", "0,1"]);
    assert!(o.status.success());
    let out = stdout(&o);
    let rows: Vec<Vec<&str>> = out
        .lines()
        .skip(1)
        .map(|l| l.split(',').collect())
        .collect();
    assert_eq!(rows[0][2], "1");
    let s1: f64 = rows[1][2].parse().unwrap();
    let s2: f64 = rows[3][2].parse().unwrap();
    assert!((s1 - 0.370_777_429_799_523_9).abs() < 1e-11);
    assert!((s2 - s1 * s1).abs() < 1e-15);

    let o = consensim(dir.path(), &["survival", "--n", "0"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("usage"));
}

#[test]
fn validate_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let o = consensim(
        dir.path(),
        &["validate", "--replications", "5000", "--events", "4000"],
    );
    let text = std::fs::read_to_string(dir.path().join("validation.json")).unwrap();
    let json: serde_json::Value = serde_json::from_str(&text).unwrap();
    let checks = json["checks"].as_array().unwrap();
    assert_eq!(checks.len(), 7);
    let all = json["all_passed"].as_bool().unwrap();
    assert_eq!(o.status.success(), all);
    assert_eq!(o.status.code(), Some(if all { 0 } else { 1 }));
    let degenerate = checks
        .iter()
        .find(|c| c["name"] == "tdma_degenerate")
        .unwrap();
    assert_eq!(degenerate["passed"], true);
    assert_eq!(degenerate["measured"], 1.0);
}
