use std::path::Path;
use std::process::{Command, Output};

fn vaxnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vaxnet"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, json: &serde_json::Value) -> String {
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(json).unwrap()).unwrap();
    path.to_string_lossy().into_owned()
}

fn small_config() -> serde_json::Value {
    serde_json::json!({
        "network": { "n": 3000, "k": 10, "rewire_p": 0.05 },
        "params": { "initial_infected": 20 },
        "trial": {
            "vaccine_arm_size": 800, "placebo_arm_size": 800,
            "horizon_days": 100, "repetitions": 4,
            "n": 8000, "k": 10, "rewire_p": 0.05, "background_infected": 40
        },
        "run": { "seed": 7, "realizations": 3, "max_days": 300, "k_values": [8, 10] },
        "sweep": {
            "k_values": [8, 10], "a_values": [0.0, 0.5], "c_values": [0.0, 1.0],
            "dose_doses_per_day": 15, "age_doses_per_day": 30,
            "efficacy_dose1": 0.0, "efficacy_dose2": 0.0, "age_efficacy": 0.0
        }
    })
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<csv::StringRecord>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(|x| x.unwrap()).collect();
    (header, rows)
}

fn assert_numeric(rows: &[csv::StringRecord]) {
    assert!(!rows.is_empty());
    for row in rows {
        for field in row {
            assert!(
                field == "true" || field == "false" || field.parse::<f64>().is_ok(),
                "non-numeric field {field:?}"
            );
        }
    }
}

#[test]
fn malformed_config_exits_2_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, "{ \"network\": ").unwrap();
    let out = dir.path().join("out");
    let o = vaxnet(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());

    let cfg = write_config(dir.path(), &serde_json::json!({ "network": { "nodes": 10 } }));
    let o = vaxnet(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn empty_k_list_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let mut json = small_config();
    json["sweep"]["k_values"] = serde_json::json!([]);
    let cfg = write_config(dir.path(), &json);
    let out = dir.path().join("out");
    let o = vaxnet(&["sweep-dose", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn zero_efficacy_calibrates_to_baseline() {
    let dir = tempfile::tempdir().unwrap();
    let mut json = small_config();
    json["calibration"] = serde_json::json!({ "e_values": [0.0], "k_values": [8, 10] });
    let cfg = write_config(dir.path(), &json);
    let out = dir.path().join("out");
    let o = vaxnet(&["calibrate", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (header, rows) = read_csv(&out.join("efficacy_table.csv"));
    assert_eq!(header, ["e0", "k", "p_inf", "converged", "iterations"]);
    assert_eq!(rows.len(), 2);
    for row in &rows {
        assert_eq!(row[2].parse::<f64>().unwrap(), 0.02);
        assert_eq!(&row[3], "true");
    }
}

#[test]
fn non_convergence_exits_3_and_keeps_table() {
    let dir = tempfile::tempdir().unwrap();
    let mut json = small_config();
    json["calibration"] = serde_json::json!({ "e_values": [0.9], "k_values": [10] });
    json["solver"] = serde_json::json!({ "max_iter": 1 });
    let cfg = write_config(dir.path(), &json);
    let out = dir.path().join("out");
    let o = vaxnet(&["calibrate", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    let (_, rows) = read_csv(&out.join("efficacy_table.csv"));
    assert_eq!(rows.len(), 1);
    assert_eq!(&rows[0][3], "false");
    let (header, trace) = read_csv(&out.join("calibration_trace.csv"));
    assert_eq!(header, ["e0", "k", "iter", "residual"]);
    assert_numeric(&trace);
}

#[test]
fn rerun_from_manifest_is_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &small_config());
    let first = dir.path().join("first");
    let second = dir.path().join("second");
    let o = vaxnet(&["run", "--config", &cfg, "--out", first.to_str().unwrap(), "--seed", "99"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(first.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["base_seed"], 99);
    assert_eq!(manifest["command"], "run");

    let m = first.join("manifest.json");
    let o = vaxnet(&["run", "--config", m.to_str().unwrap(), "--out", second.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for name in ["timeseries.csv", "deaths.csv"] {
        assert_eq!(
            std::fs::read(first.join(name)).unwrap(),
            std::fs::read(second.join(name)).unwrap(),
            "{name} differs"
        );
    }

    let (header, rows) = read_csv(&first.join("timeseries.csv"));
    assert_eq!(&header[..7], ["k", "day", "S", "E", "I", "R", "M"]);
    assert_numeric(&rows);
    let (header, rows) = read_csv(&first.join("deaths.csv"));
    assert_eq!(header, ["k", "deaths_mean", "deaths_sd", "n_realizations", "base_seed"]);
    assert_eq!(rows.len(), 2);
    assert_numeric(&rows);
}

#[test]
fn sweeps_write_full_grids() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &small_config());
    for (cmd, file) in [("sweep-dose", "sweep_dose.csv"), ("sweep-age", "sweep_age.csv")] {
        let out = dir.path().join(cmd);
        let o = vaxnet(&[cmd, "--config", &cfg, "--out", out.to_str().unwrap(), "--threads", "1"]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let stdout = String::from_utf8_lossy(&o.stdout);
        assert!(stdout.contains(file));
        let (header, rows) = read_csv(&out.join(file));
        assert_eq!(
            header,
            ["k", "a_or_c", "deaths_mean", "deaths_sd", "n_realizations", "base_seed"]
        );
        assert_eq!(rows.len(), 4);
        assert_numeric(&rows);
        for row in &rows {
            assert_eq!(&row[4], "3");
        }
    }
}
