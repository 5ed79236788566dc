use std::fmt::Write as _;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn mat(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mat"))
        .args(args)
        .env_remove("MAT_SEED")
        .output()
        .expect("binary runs")
}

fn jena_csv(path: &Path, rows: usize) {
    let mut text = String::from("\"Date Time\",\"p (mbar)\",\"T (degC)\",\"rh (%)\"\n");
    for r in 0..rows {
        let m = 10 * r;
        let t = r as f64;
        let _ = writeln!(
            text,
            "{:02}.01.2020 {:02}:{:02}:00,{:.3},{:.3},{:.3}",
            1 + m / 1440,
            m / 60 % 24,
            m % 60,
            1000.0 + (t / 9.0).sin(),
            5.0 * (t / 17.0).cos(),
            60.0 + 10.0 * (t / 5.0).sin()
        );
    }
    std::fs::write(path, text).unwrap();
}

const SMALL: &[&str] = &[
    "--lookback", "24", "--horizon", "8", "--n1", "16", "--n2", "8", "--dim", "4", "--heads", "2", "--epochs", "2",
    "--batch", "16", "--lr", "0.001", "--seed", "5",
];

fn train_into(data: &Path, out: &Path) -> Output {
    let mut args = vec!["train", "--data", data.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(SMALL);
    mat(&args)
}

fn read(p: &Path) -> Vec<u8> {
    std::fs::read(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

#[test]
fn train_is_deterministic_and_reproducible_from_echo() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("weather.csv");
    jena_csv(&data, 400);
    let before = read(&data);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = train_into(&data, out);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(read(&data), before, "input file must not change");
    for f in ["metrics.csv", "loss_curve.csv", "model.bin", "linear.bin"] {
        assert_eq!(read(&a.join(f)), read(&b.join(f)), "{f} differs");
    }
    let metrics = String::from_utf8(read(&a.join("metrics.csv"))).unwrap();
    assert!(metrics.starts_with("dataset,model,lookback,horizon,metrics_space,mse,mae\nweather,mat,24,8,scaled,"));

    // The echoed config alone reproduces the run.
    let echo: Value = serde_json::from_slice(&read(&a.join("config.json"))).unwrap();
    assert_eq!(echo["model.lookback"], 24);
    assert_eq!(echo["model.channels"], 3);
    assert_eq!(echo["train.lr"], 0.001);
    let echo_bytes = read(&a.join("config.json"));
    let o = mat(&["train", "--config", a.join("config.json").to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(read(&a.join("config.json")), echo_bytes);
    for f in ["metrics.csv", "loss_curve.csv", "model.bin"] {
        assert_eq!(read(&a.join(f)), read(&b.join(f)), "{f} differs after re-run from echo");
    }
}

#[test]
fn evaluate_and_forecast_from_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("weather.csv");
    jena_csv(&data, 300);
    let run = dir.path().join("run");
    assert!(train_into(&data, &run).status.success());

    let mut eval_csv = Vec::new();
    for out in ["e1", "e2"] {
        let out = dir.path().join(out);
        let o = mat(&["evaluate", "--checkpoint", run.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        eval_csv.push(read(&out.join("evaluation.csv")));
    }
    assert_eq!(eval_csv[0], eval_csv[1]);
    let text = String::from_utf8(eval_csv.remove(0)).unwrap();
    let models: Vec<&str> = text.lines().skip(1).map(|l| l.split(',').nth(1).unwrap()).collect();
    assert_eq!(models, ["mat", "naive_repeat", "linear"]);
    // The reloaded checkpoint scores exactly as the model did at the end of training.
    let trained = String::from_utf8(read(&run.join("metrics.csv"))).unwrap();
    assert_eq!(text.lines().nth(1), trained.lines().nth(1));

    // Without --out, results are written next to the checkpoint.
    let o = Command::new(env!("CARGO_BIN_EXE_mat"))
        .args(["evaluate", "--checkpoint", run.to_str().unwrap()])
        .current_dir(dir.path())
        .env_remove("MAT_SEED")
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(run.join("evaluation.csv").exists());
    assert!(!dir.path().join("runs").exists());

    let out = dir.path().join("f");
    let o = mat(&[
        "forecast", "--checkpoint", run.to_str().unwrap(), "--out", out.to_str().unwrap(), "--origin", "100",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let fc = String::from_utf8(read(&out.join("forecast.csv"))).unwrap();
    let lines: Vec<&str> = fc.lines().collect();
    assert_eq!(lines.len(), 4);
    assert!(lines[0].starts_with("channel,t+1,"));
    assert!(lines.iter().all(|l| l.split(',').count() == 9));
    assert!(lines[1].starts_with("p (mbar),"));

    let o = mat(&["forecast", "--checkpoint", run.to_str().unwrap(), "--out", out.to_str().unwrap(), "--origin", "299"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn errors_are_single_json_lines_with_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let o = out.to_str().unwrap();
    let cases: Vec<(Vec<&str>, i32, &str)> = vec![
        (vec!["train", "--out", o], 2, "config"),
        (vec!["train", "--data", "/nonexistent.csv", "--out", o], 3, "data"),
        (vec!["train", "--heads", "3", "--out", o], 2, "config"),
        (vec!["train", "--bogus"], 2, "config"),
        (vec!["evaluate", "--checkpoint", "/nonexistent", "--out", o], 3, "data"),
    ];
    for (args, code, kind) in cases {
        let r = mat(&args);
        assert_eq!(r.status.code(), Some(code), "{args:?}");
        let err = String::from_utf8(r.stderr).unwrap();
        assert_eq!(err.lines().count(), 1, "{err}");
        let v: Value = serde_json::from_str(err.trim()).unwrap();
        assert_eq!(v["error"], kind);
        assert_eq!(v["exit_code"], code);
    }

    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"model.n1": 8, "model.typo": 1}"#).unwrap();
    let r = mat(&["gradcheck", "--config", cfg.to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&r.stderr).contains("model.typo"));
}

#[test]
fn horizon_flag_keeps_default_lookback() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("w.csv");
    jena_csv(&data, 1000);
    let out = dir.path().join("o");
    let r = mat(&[
        "train", "--data", data.to_str().unwrap(), "--out", out.to_str().unwrap(), "--horizon", "96", "--n1", "16",
        "--n2", "8", "--dim", "4", "--heads", "2", "--epochs", "1",
    ]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let echo: Value = serde_json::from_slice(&read(&out.join("config.json"))).unwrap();
    assert_eq!((echo["model.lookback"].as_u64(), echo["model.horizon"].as_u64()), (Some(96), Some(96)));
}

#[test]
fn seed_env_fallback() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let r = Command::new(env!("CARGO_BIN_EXE_mat"))
        .args(["scan-bench", "--lengths", "4,8", "--dim", "4", "--heads", "2", "--out", out.to_str().unwrap()])
        .env("MAT_SEED", "123")
        .output()
        .unwrap();
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let echo: Value = serde_json::from_slice(&read(&out.join("config.json"))).unwrap();
    assert_eq!(echo["train.seed"], 123);
    assert_eq!(echo["model.seed"], 123);
    let csv = String::from_utf8(read(&out.join("scan_bench.csv"))).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], "length,path,ns_per_step");
    assert_eq!(rows.len(), 5);
    assert!(rows[1].starts_with("4,sequential,") && rows[2].starts_with("4,parallel,"));
}

#[test]
fn gradcheck_and_ingest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("g");
    let r = mat(&["gradcheck", "--out", out.to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(0), "{}", String::from_utf8_lossy(&r.stderr));
    let csv = String::from_utf8(read(&out.join("gradcheck.csv"))).unwrap();
    assert!(csv.lines().skip(1).all(|l| l.ends_with(",true")));

    let data = dir.path().join("w.csv");
    jena_csv(&data, 80);
    let before = read(&data);
    let out = dir.path().join("i");
    let r = mat(&["ingest", "--data", data.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(r.status.success());
    let stdout = String::from_utf8(r.stdout).unwrap();
    assert!(stdout.starts_with("3 channels, 80 steps"));
    assert!(out.join("dataset.json").exists() && out.join("dataset.bin").exists());
    assert_eq!(read(&data), before);

    // A cached dataset trains like the CSV it came from.
    let cached = out.join("dataset.json");
    let t = dir.path().join("t");
    let mut args = vec!["train", "--data", cached.to_str().unwrap(), "--out", t.to_str().unwrap()];
    args.extend_from_slice(&["--lookback", "8", "--horizon", "4", "--n1", "8", "--n2", "4", "--dim", "4", "--heads", "2", "--epochs", "1"]);
    let r = mat(&args);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
}
