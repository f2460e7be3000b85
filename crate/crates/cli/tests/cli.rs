use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tailqr::sim::{generate_case, prediction_error, SimulationConfig};

fn tailqr(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tailqr"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn run_dir(o: &Output) -> PathBuf {
    let line = String::from_utf8_lossy(&o.stdout);
    let v: Value = serde_json::from_str(line.trim()).unwrap_or_else(|_| panic!("summary: {line}"));
    PathBuf::from(v["run_dir"].as_str().unwrap())
}

fn error_of(o: &Output) -> Value {
    let err = String::from_utf8_lossy(&o.stderr);
    let line = err
        .lines()
        .rev()
        .find(|l| l.starts_with("{\"error\""))
        .expect("error json");
    serde_json::from_str(line).unwrap()
}

fn case_csv(dir: &Path, case: u8, n: usize) -> PathBuf {
    let cfg = SimulationConfig::case(case, n).unwrap();
    let (d, _) = generate_case(&cfg, 0).unwrap();
    let path = dir.join(format!("case{case}_{n}.csv"));
    d.write_csv(&path, "y").unwrap();
    path
}

fn read_bundle(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("model.json")).unwrap()).unwrap()
}

#[test]
fn fit_writes_a_complete_bundle() {
    let tmp = tempfile::tempdir().unwrap();
    let data = case_csv(tmp.path(), 1, 400);
    let o = tailqr(&["fit", "--data", data.to_str().unwrap()], tmp.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let dir = run_dir(&o);
    let b = read_bundle(&dir);
    assert_eq!(b["model"]["method"], "heqr");
    let j = b["model"]["fit"]["ladder"]["j"].as_u64().unwrap();
    assert_eq!(
        b["model"]["fit"]["fits"].as_array().unwrap().len() as u64,
        j
    );
    assert!(b["gamma_hat"].as_f64().unwrap().is_finite());
    assert_eq!(b["columns"].as_array().unwrap().len(), 20);
    assert!(b["model"]["fit"]["col_means"].is_array());
    assert!(b["model"]["fit"]["sigma_hat"].is_array());
    assert_eq!(b["diagnostics"].as_array().unwrap().len() as u64, j);
    assert!(dir.join("config.toml").exists());
    assert!(dir.join("run.log").exists());
    assert_eq!(b["config"]["seed"], 20_240_601);
}

#[test]
fn invalid_k_is_rejected_before_fitting() {
    let tmp = tempfile::tempdir().unwrap();
    let data = case_csv(tmp.path(), 1, 200);
    let o = tailqr(
        &["fit", "--data", data.to_str().unwrap(), "--k", "200"],
        tmp.path(),
    );
    assert_eq!(o.status.code(), Some(2));
    let e = error_of(&o);
    assert_eq!(e["error"]["kind"], "validation");
    assert!(e["error"]["message"].as_str().unwrap().contains("k = 200"));
    let dir = run_dir(&o);
    assert!(!dir.join("model.json").exists());
    assert!(dir.join("error.json").exists());
}

#[test]
fn same_seed_gives_identical_bundles() {
    let tmp = tempfile::tempdir().unwrap();
    let data = case_csv(tmp.path(), 3, 300);
    let args = ["fit", "--data", data.to_str().unwrap(), "--seed", "7"];
    let a = run_dir(&tailqr(&args, tmp.path()));
    let b = run_dir(&tailqr(
        &[&args[..], &["--workers", "3"]].concat(),
        tmp.path(),
    ));
    assert_ne!(a, b);
    let ba = std::fs::read(a.join("model.json")).unwrap();
    let bb = std::fs::read(b.join("model.json")).unwrap();
    let strip = |v: &[u8]| {
        let mut j: Value = serde_json::from_slice(v).unwrap();
        j["config"]["workers"] = Value::Null;
        j
    };
    assert_eq!(strip(&ba), strip(&bb));
    let c = run_dir(&tailqr(&args, tmp.path()));
    assert_eq!(ba, std::fs::read(c.join("model.json")).unwrap());
}

fn predictions(dir: &Path) -> Vec<(usize, f64, f64)> {
    std::fs::read_to_string(dir.join("predictions.csv"))
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (
                f[0].parse().unwrap(),
                f[1].parse().unwrap(),
                f[2].parse().unwrap(),
            )
        })
        .collect()
}

#[test]
fn predict_at_the_intermediate_level_returns_fitted_quantiles() {
    let tmp = tempfile::tempdir().unwrap();
    let data = case_csv(tmp.path(), 1, 300);
    let fit = run_dir(&tailqr(
        &["fit", "--data", data.to_str().unwrap()],
        tmp.path(),
    ));
    let b = read_bundle(&fit);
    let model = fit.join("model.json");
    let tau0 = b["model"]["fit"]["ladder"]["tau0"].as_f64().unwrap();
    let o = tailqr(
        &[
            "predict",
            "--model",
            model.to_str().unwrap(),
            "--test",
            data.to_str().unwrap(),
            "--tau",
            &tau0.to_string(),
        ],
        tmp.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = predictions(&run_dir(&o));
    assert_eq!(rows.len(), 300);

    let d = tailqr::load_csv(&data, "y").unwrap();
    let base = &b["model"]["fit"]["fits"][0];
    let means: Vec<f64> = serde_json::from_value(b["model"]["fit"]["col_means"].clone()).unwrap();
    let slopes: Vec<f64> = serde_json::from_value(base["slopes"].clone()).unwrap();
    let b0 = base["intercept"].as_f64().unwrap();
    for (i, tau, q) in rows {
        assert_eq!(tau, tau0);
        let want = b0
            + d.row(i)
                .iter()
                .zip(&means)
                .zip(&slopes)
                .map(|((x, m), s)| (x - m) * s)
                .sum::<f64>();
        assert!(
            (q - want).abs() <= 1e-12 * want.abs().max(1.0),
            "row {i}: {q} vs {want}"
        );
    }
}

#[test]
fn predict_emits_one_row_per_level_and_follows_row_order() {
    let tmp = tempfile::tempdir().unwrap();
    let data = case_csv(tmp.path(), 1, 300);
    let fit = run_dir(&tailqr(
        &["fit", "--data", data.to_str().unwrap()],
        tmp.path(),
    ));
    let model = fit.join("model.json");

    // Test file with reordered columns, no response and reversed rows.
    let d = tailqr::load_csv(&data, "y").unwrap();
    let names = d.column_names();
    let mut fwd = format!(
        "{}\n",
        names.iter().rev().cloned().collect::<Vec<_>>().join(",")
    );
    let mut rev = fwd.clone();
    let line = |i: usize| {
        d.row(i)
            .iter()
            .rev()
            .map(|v| format!("{v:e}"))
            .collect::<Vec<_>>()
            .join(",")
            + "\n"
    };
    for i in 0..10 {
        fwd.push_str(&line(i));
        rev.push_str(&line(9 - i));
    }
    std::fs::write(tmp.path().join("fwd.csv"), fwd).unwrap();
    std::fs::write(tmp.path().join("rev.csv"), rev).unwrap();
    let run = |name: &str| {
        let test = tmp.path().join(name);
        let o = tailqr(
            &[
                "predict",
                "--model",
                model.to_str().unwrap(),
                "--test",
                test.to_str().unwrap(),
                "--tau",
                "0.991,0.995,0.999",
            ],
            tmp.path(),
        );
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        predictions(&run_dir(&o))
    };
    let a = run("fwd.csv");
    let r = run("rev.csv");
    assert_eq!(a.len(), 30);
    for i in 0..10 {
        let taus: Vec<f64> = a[3 * i..3 * i + 3].iter().map(|x| x.1).collect();
        assert_eq!(taus, vec![0.991, 0.995, 0.999]);
        assert!(a[3 * i].2 < a[3 * i + 1].2 && a[3 * i + 1].2 < a[3 * i + 2].2);
        for t in 0..3 {
            assert_eq!(a[3 * i + t].2, r[3 * (9 - i) + t].2);
        }
    }
}

#[test]
fn predict_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let data = case_csv(tmp.path(), 1, 200);
    let fit = run_dir(&tailqr(
        &["fit", "--data", data.to_str().unwrap()],
        tmp.path(),
    ));
    let model = fit.join("model.json");
    std::fs::write(tmp.path().join("bad.csv"), "x1,x2\n0.1,0.2\n").unwrap();
    let bad = tmp.path().join("bad.csv");
    let o = tailqr(
        &[
            "predict",
            "--model",
            model.to_str().unwrap(),
            "--test",
            bad.to_str().unwrap(),
        ],
        tmp.path(),
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(error_of(&o)["error"]["message"]
        .as_str()
        .unwrap()
        .contains("x3"));
    let missing = tmp.path().join("none.json");
    let o = tailqr(
        &[
            "predict",
            "--model",
            missing.to_str().unwrap(),
            "--test",
            data.to_str().unwrap(),
        ],
        tmp.path(),
    );
    assert_eq!(o.status.code(), Some(2));
    // Below the intermediate level.
    let o = tailqr(
        &[
            "predict",
            "--model",
            model.to_str().unwrap(),
            "--test",
            data.to_str().unwrap(),
            "--tau",
            "0.5",
        ],
        tmp.path(),
    );
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn hqr_and_eqr_bundles_predict() {
    let tmp = tempfile::tempdir().unwrap();
    let data = case_csv(tmp.path(), 1, 300);
    for m in ["eqr", "hqr"] {
        let fit = tailqr(
            &[
                "fit",
                "--data",
                data.to_str().unwrap(),
                "--method",
                m,
                "--tau",
                "0.995",
            ],
            tmp.path(),
        );
        assert!(
            fit.status.success(),
            "{}",
            String::from_utf8_lossy(&fit.stderr)
        );
        let model = run_dir(&fit).join("model.json");
        assert_eq!(read_bundle(run_dir(&fit).as_path())["model"]["method"], m);
        let o = tailqr(
            &[
                "predict",
                "--model",
                model.to_str().unwrap(),
                "--test",
                data.to_str().unwrap(),
                "--tau",
                "0.995",
            ],
            tmp.path(),
        );
        assert!(
            o.status.success(),
            "{m}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
        assert_eq!(predictions(&run_dir(&o)).len(), 300);
    }
    let model = run_dir(&tailqr(
        &[
            "fit",
            "--data",
            data.to_str().unwrap(),
            "--method",
            "hqr",
            "--tau",
            "0.995",
        ],
        tmp.path(),
    ))
    .join("model.json");
    let o = tailqr(
        &[
            "predict",
            "--model",
            model.to_str().unwrap(),
            "--test",
            data.to_str().unwrap(),
            "--tau",
            "0.999",
        ],
        tmp.path(),
    );
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn wide_data_refuses_eqr() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = SimulationConfig::case(1, 60).unwrap().with_p(70);
    let (d, _) = generate_case(&cfg, 0).unwrap();
    let path = tmp.path().join("wide.csv");
    d.write_csv(&path, "y").unwrap();
    let o = tailqr(
        &["fit", "--data", path.to_str().unwrap(), "--method", "eqr"],
        tmp.path(),
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(error_of(&o)["error"]["message"]
        .as_str()
        .unwrap()
        .contains("not applicable"));
}

#[test]
fn benchmark_reports_a_table_row() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bench.toml");
    std::fs::write(&cfg, "# Case 1 at the first level\ncase = 1\nn = 1000\ntau = [0.995]\nreps = 50\nmethod = [\"heqr\"]\n").unwrap();
    let o = tailqr(
        &["benchmark", "--config", cfg.to_str().unwrap()],
        tmp.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let dir = run_dir(&o);
    let csv = std::fs::read_to_string(dir.join("reports.csv")).unwrap();
    let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(&row[..5], &["heqr", "1", "1000", "32", "0.995"]);
    assert!(row[5].parse::<f64>().unwrap().is_finite());
    assert_eq!(row[9], "50");
    assert_eq!(
        std::fs::read_to_string(dir.join("config.input.toml")).unwrap(),
        std::fs::read_to_string(&cfg).unwrap()
    );
    let report: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("reports.json")).unwrap()).unwrap();
    assert_eq!(report["config"]["reps"], 50);
}

#[test]
fn flags_override_the_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.toml");
    std::fs::write(
        &cfg,
        "n = 200\nreps = 2\nseed = 5\nc0 = 1.2\ntau = [0.995]\nmethod = [\"heqr\"]\n",
    )
    .unwrap();
    let o = tailqr(
        &[
            "benchmark",
            "--config",
            cfg.to_str().unwrap(),
            "--seed",
            "6",
        ],
        tmp.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let echo = std::fs::read_to_string(run_dir(&o).join("config.toml")).unwrap();
    assert!(echo.contains("seed = 6"));
    assert!(echo.contains("c0 = 1.2"));
    assert!(echo.contains("p = 15"));
}

#[test]
fn sweep_writes_one_row_per_grid_value() {
    let tmp = tempfile::tempdir().unwrap();
    let o = tailqr(
        &[
            "sweep",
            "--n",
            "200",
            "--reps",
            "2",
            "--tau",
            "0.995",
            "--values",
            "0.5,0.8,1.5,2.3",
        ],
        tmp.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(run_dir(&o).join("sweep.csv")).unwrap();
    assert_eq!(
        csv.lines().next().unwrap(),
        "c0,tau,k,mise,se,lo,hi,n_failed"
    );
    assert_eq!(csv.lines().count(), 5);
    let o = tailqr(
        &["sweep", "--n", "200", "--reps", "2", "--param", "delta1"],
        tmp.path(),
    );
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn evaluate_single_split_has_small_prediction_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = SimulationConfig::case(1, 2500).unwrap().with_p(10);
    let (d, truth) = generate_case(&cfg, 0).unwrap();
    let path = tmp.path().join("eval.csv");
    d.write_csv(&path, "y").unwrap();

    // Oracle: with the true quantile the indicator sum is binomial, so the
    // standardized error is within 3 with overwhelming probability.
    let tau = 0.95;
    let q: Vec<f64> = (0..d.n())
        .map(|i| truth.quantile(d.row(i), tau).unwrap())
        .collect();
    assert!(prediction_error(d.y(), &q, tau).unwrap().abs() <= 3.0);

    let o = tailqr(
        &[
            "evaluate",
            "--data",
            path.to_str().unwrap(),
            "--splits",
            "1",
            "--tau",
            "0.95",
            "--method",
            "heqr,hqr",
        ],
        tmp.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let dir = run_dir(&o);
    let csv = std::fs::read_to_string(dir.join("evaluation.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "method,tau,median_abs_pe,mad,n_splits,n_failed");
    assert_eq!(lines.len(), 3);
    for l in &lines[1..] {
        let f: Vec<&str> = l.split(',').collect();
        let pe: f64 = f[2].parse().unwrap();
        assert!(pe <= 4.0, "{l}");
        assert_eq!(f[3].parse::<f64>().unwrap(), 0.0);
    }
    assert!(
        std::fs::read_to_string(dir.join("pe.csv"))
            .unwrap()
            .lines()
            .count()
            == 3
    );
}

#[test]
fn exit_codes_for_bad_inputs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.toml");
    std::fs::write(&cfg, "c_0 = 1.0\n").unwrap();
    let o = tailqr(
        &["benchmark", "--config", cfg.to_str().unwrap()],
        tmp.path(),
    );
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_of(&o)["error"]["exit_code"], 2);

    let o = tailqr(&["fit", "--data", "/no/such/file.csv"], tmp.path());
    assert_eq!(o.status.code(), Some(2));

    let file = tmp.path().join("plain");
    std::fs::write(&file, "").unwrap();
    let data = case_csv(tmp.path(), 1, 100);
    let o = tailqr(&["fit", "--data", data.to_str().unwrap()], &file);
    assert_eq!(o.status.code(), Some(4));
    assert_eq!(error_of(&o)["error"]["kind"], "io");

    std::fs::write(tmp.path().join("text.csv"), "y,x1\n1,abc\n2,3\n").unwrap();
    let text = tmp.path().join("text.csv");
    let o = tailqr(&["fit", "--data", text.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(2));
}
