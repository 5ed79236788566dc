use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use mat_core::data::{
    chronological_split, fit_scaler, load_cache, load_csv, save_cache, windows, Scaler, Split, TimeSeriesDataset,
    WindowSample,
};
use mat_core::ssm::{selective_scan_parallel, selective_scan_sequential, ScanInputs};
use mat_core::train::{
    evaluate as score, loss_curve_csv, train as fit, LinearBaseline, MetricsReport, MetricsSpace, NaiveRepeat, Predictor,
    METRICS_CSV_HEADER,
};
use mat_core::verify::{gradient_suite, GRAD_TOLERANCE};
use mat_core::{MatError, MatModel, Result, SplitRng, Tensor};
use serde_json::{json, Value};

use crate::config::{write_echo, RunConfig};
use crate::Failure;

const MODEL_FILE: &str = "model.json";
const LINEAR_FILE: &str = "linear.json";

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| MatError::io(path, e))
}

fn prepare_out(cfg: &RunConfig) -> Result<()> {
    fs::create_dir_all(&cfg.out).map_err(|e| MatError::io(&cfg.out, e))?;
    write_echo(cfg, &cfg.out)
}

fn load_dataset(path: &Path, cfg: &RunConfig) -> Result<TimeSeriesDataset> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("json") => load_cache(path),
        _ => load_csv(path, &cfg.data.csv_options()),
    }
}

fn data_path(cfg: &RunConfig) -> Result<&Path> {
    cfg.data
        .path
        .as_deref()
        .ok_or_else(|| MatError::Config("no dataset given (use --data or data.path)".into()))
}

/// Scaled windows of the three splits.
struct Prepared {
    train: Vec<WindowSample>,
    val: Vec<WindowSample>,
    test: Vec<WindowSample>,
}

fn split_windows(ds: &TimeSeriesDataset, ratios: [f64; 3], scaler: &Scaler, l: usize, t: usize) -> Result<Prepared> {
    let splits = chronological_split(ds, ratios)?;
    let scaled = |s: &Split| scaler.transform_split(s);
    let all = |s: &Split| -> Result<Vec<WindowSample>> {
        if s.num_windows(l, t) == 0 {
            return Ok(Vec::new());
        }
        Ok(windows(&scaled(s)?, l, t)?.collect())
    };
    let train = windows(&scaled(&splits.train)?, l, t)?.collect();
    let test = windows(&scaled(&splits.test)?, l, t)?.collect();
    Ok(Prepared {
        train,
        val: all(&splits.val)?,
        test,
    })
}

fn metrics_scaler<'a>(cfg: &RunConfig, scaler: &'a Scaler) -> Option<&'a Scaler> {
    match cfg.train.metrics_space {
        MetricsSpace::Scaled => None,
        MetricsSpace::Raw => Some(scaler),
    }
}

fn report(cfg: &RunConfig, model: &str, p: &dyn Predictor, test: &[WindowSample], scaler: &Scaler) -> Result<MetricsReport> {
    let stats = score(p, test, metrics_scaler(cfg, scaler), cfg.train.workers)?;
    Ok(MetricsReport {
        dataset: cfg.data.label(),
        model: model.into(),
        lookback: cfg.model.lookback,
        horizon: cfg.model.horizon,
        metrics_space: cfg.train.metrics_space,
        mse: stats.mse(),
        mae: stats.mae(),
        seed: cfg.train.seed,
        history: Vec::new(),
        config: Value::Null,
        wall_clock_secs: 0.0,
    })
}

fn checkpoint_extra(cfg: &RunConfig, scaler: &Scaler) -> Value {
    json!({ "scaler": scaler, "dataset": cfg.data.label(), "data_path": cfg.data.path, "split": cfg.data.split })
}

pub fn train(resolved: &RunConfig) -> Result<(), Failure> {
    let started = Instant::now();
    let mut cfg = resolved.clone();
    let path = data_path(&cfg)?.to_path_buf();
    let ds = load_dataset(&path, &cfg)?;
    cfg.model.channels = ds.num_channels();
    cfg.model.validate()?;
    prepare_out(&cfg)?;

    let splits = chronological_split(&ds, cfg.data.split)?;
    let scaler = fit_scaler(&splits.train)?;
    let prepared = split_windows(&ds, cfg.data.split, &scaler, cfg.model.lookback, cfg.model.horizon)?;
    let extra = checkpoint_extra(&cfg, &scaler);

    let mut model = MatModel::new(cfg.model.clone())?;
    let outcome = match fit(&mut model, &prepared.train, &prepared.val, &cfg.train) {
        Ok(o) => o,
        Err(e) => {
            if matches!(e, MatError::Numeric(_)) {
                model.save(&cfg.out.join(MODEL_FILE), extra)?;
            }
            return Err(e.into());
        }
    };
    model.save(&cfg.out.join(MODEL_FILE), extra)?;

    let mut linear = LinearBaseline::new(cfg.model.lookback, cfg.model.horizon, cfg.model.seed);
    fit(&mut linear, &prepared.train, &prepared.val, &cfg.train)?;
    linear.save(&cfg.out.join(LINEAR_FILE))?;

    let mut rep = report(&cfg, "mat", &model, &prepared.test, &scaler)?;
    rep.history = outcome.history.clone();
    rep.config = serde_json::to_value(&cfg).expect("config serialises");
    rep.wall_clock_secs = started.elapsed().as_secs_f64();
    write(&cfg.out.join("metrics.csv"), &format!("{METRICS_CSV_HEADER}\n{}\n", rep.csv_row()))?;
    write(
        &cfg.out.join("metrics.json"),
        &(serde_json::to_string_pretty(&rep).expect("report serialises") + "\n"),
    )?;
    write(&cfg.out.join("loss_curve.csv"), &loss_curve_csv(&outcome.history))?;
    println!(
        "trained {} epochs (best {}); test mse {:.6} mae {:.6}; outputs in {}",
        outcome.history.len(),
        outcome.best_epoch,
        rep.mse,
        rep.mae,
        cfg.out.display()
    );
    Ok(())
}

struct Loaded {
    model: MatModel,
    scaler: Scaler,
    dir: PathBuf,
    cfg: RunConfig,
    ds: TimeSeriesDataset,
}

fn load_run(resolved: &RunConfig, checkpoint: Option<&Path>) -> Result<Loaded> {
    let dir = checkpoint.unwrap_or(&resolved.out).to_path_buf();
    let (model, extra) = MatModel::load(&dir.join(MODEL_FILE))?;
    let scaler: Scaler = serde_json::from_value(extra["scaler"].clone())
        .map_err(|e| MatError::Checkpoint(format!("checkpoint scaler: {e}")))?;
    let mut cfg = resolved.clone();
    if cfg.data.path.is_none() {
        cfg.data.path = serde_json::from_value(extra["data_path"].clone()).ok();
    }
    if cfg.data.name.is_none() {
        cfg.data.name = extra["dataset"].as_str().map(str::to_string);
    }
    if let Ok(split) = serde_json::from_value::<[f64; 3]>(extra["split"].clone()) {
        cfg.data.split = split;
    }
    cfg.model = model.config.clone();
    // Without an explicit output directory, results land next to the checkpoint.
    if checkpoint.is_some() && cfg.out == RunConfig::default().out {
        cfg.out = dir.clone();
    }
    let ds = load_dataset(data_path(&cfg)?, &cfg)?;
    if ds.num_channels() != cfg.model.channels {
        return Err(MatError::Data(format!(
            "dataset has {} channels, checkpoint expects {}",
            ds.num_channels(),
            cfg.model.channels
        )));
    }
    Ok(Loaded {
        model,
        scaler,
        dir,
        cfg,
        ds,
    })
}

pub fn evaluate(resolved: &RunConfig, checkpoint: Option<&Path>) -> Result<(), Failure> {
    let run = load_run(resolved, checkpoint)?;
    let cfg = &run.cfg;
    prepare_out(cfg)?;
    let (l, t) = (cfg.model.lookback, cfg.model.horizon);
    let prepared = split_windows(&run.ds, cfg.data.split, &run.scaler, l, t)?;
    let mut rows = vec![report(cfg, "mat", &run.model, &prepared.test, &run.scaler)?];
    rows.push(report(cfg, "naive_repeat", &NaiveRepeat { horizon: t }, &prepared.test, &run.scaler)?);
    let linear_path = run.dir.join(LINEAR_FILE);
    if linear_path.exists() {
        let linear = LinearBaseline::load(&linear_path)?;
        rows.push(report(cfg, "linear", &linear, &prepared.test, &run.scaler)?);
    }
    let mut csv = format!("{METRICS_CSV_HEADER}\n");
    for r in &rows {
        csv.push_str(&r.csv_row());
        csv.push('\n');
        println!("{:<13} mse {:.6}  mae {:.6}", r.model, r.mse, r.mae);
    }
    write(&cfg.out.join("evaluation.csv"), &csv)?;
    Ok(())
}

pub fn forecast(resolved: &RunConfig, checkpoint: Option<&Path>, origin: Option<usize>) -> Result<(), Failure> {
    let run = load_run(resolved, checkpoint)?;
    let cfg = &run.cfg;
    prepare_out(cfg)?;
    let (l, t) = (cfg.model.lookback, cfg.model.horizon);
    let n = run.ds.len();
    if n < l {
        return Err(MatError::Data(format!("dataset has {n} steps, fewer than the look-back {l}")).into());
    }
    let origin = origin.unwrap_or(n - l);
    if origin + l > n {
        return Err(MatError::Data(format!("origin {origin} + look-back {l} exceeds {n} steps")).into());
    }
    let m = run.ds.num_channels();
    let x: Vec<f64> = (0..m)
        .flat_map(|c| run.ds.values.row(c)[origin..origin + l].to_vec())
        .collect();
    let x = run.scaler.transform(&Tensor::matrix(m, l, x)?)?;
    let y = run.scaler.inverse(&run.model.predict(&x)?)?;
    let mut csv = String::from("channel");
    for h in 1..=t {
        let _ = write!(csv, ",t+{h}");
    }
    csv.push('\n');
    for (c, name) in run.ds.channels.iter().enumerate() {
        csv.push_str(name);
        for v in y.row(c) {
            let _ = write!(csv, ",{v}");
        }
        csv.push('\n');
    }
    write(&cfg.out.join("forecast.csv"), &csv)?;
    println!(
        "forecast for {} channels, {} steps after {}",
        m,
        t,
        run.ds.timestamps[origin + l - 1]
    );
    Ok(())
}

pub fn gradcheck(cfg: &RunConfig) -> Result<(), Failure> {
    prepare_out(cfg)?;
    let results = gradient_suite(cfg.model.seed)?;
    let mut csv = String::from("check,max_rel_error,passed\n");
    let mut failed = Vec::new();
    for r in &results {
        let _ = writeln!(csv, "{},{:e},{}", r.name, r.max_rel_error, r.passed());
        println!("{:<40} {:.3e} {}", r.name, r.max_rel_error, if r.passed() { "ok" } else { "FAIL" });
        if !r.passed() {
            failed.push(r.name.clone());
        }
    }
    write(&cfg.out.join("gradcheck.csv"), &csv)?;
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::verification(format!(
            "gradient checks above {GRAD_TOLERANCE:e}: {}",
            failed.join(", ")
        )))
    }
}

pub fn scan_bench(cfg: &RunConfig, lengths: &[usize]) -> Result<(), Failure> {
    if lengths.is_empty() || lengths.contains(&0) {
        return Err(MatError::Config("scan-bench lengths must be positive".into()).into());
    }
    prepare_out(cfg)?;
    let (d, n) = (cfg.model.dim, cfg.model.state);
    let mut rng = SplitRng::new(cfg.model.seed);
    let mut csv = String::from("length,path,ns_per_step\n");
    for &len in lengths {
        let u = Tensor::uniform(&[len, d], 1.0, &mut rng);
        let delta = Tensor::uniform(&[len, d], 1.0, &mut rng).map(|v| 0.01 + 0.1 * v.abs());
        let a = Tensor::uniform(&[d, n], 1.0, &mut rng).map(|v| -0.5 - v.abs());
        let b = Tensor::uniform(&[len, n], 1.0, &mut rng);
        let c = Tensor::uniform(&[len, n], 1.0, &mut rng);
        let dfeed = Tensor::uniform(&[d], 1.0, &mut rng);
        let inp = ScanInputs {
            u: &u,
            delta: &delta,
            a: &a,
            b: &b,
            c: &c,
            d_feed: &dfeed,
        };
        let reps = (1 << 16) / len + 1;
        let mut time = |path: &str, f: &dyn Fn() -> Result<Tensor>| -> Result<Tensor> {
            let out = f()?;
            let start = Instant::now();
            for _ in 0..reps {
                std::hint::black_box(f()?);
            }
            let ns = start.elapsed().as_nanos() as f64 / (reps * len) as f64;
            let _ = writeln!(csv, "{len},{path},{ns:.3}");
            println!("{len:>7} {path:<10} {ns:>10.3} ns/step");
            Ok(out)
        };
        let seq = time("sequential", &|| selective_scan_sequential(inp))?;
        let par = time("parallel", &|| selective_scan_parallel(inp))?;
        let gap = seq.max_abs_diff(&par);
        if gap > 1e-10 {
            return Err(Failure::verification(format!("scan paths differ by {gap:e} at length {len}")));
        }
    }
    write(&cfg.out.join("scan_bench.csv"), &csv)?;
    Ok(())
}

pub fn ingest(cfg: &RunConfig) -> Result<(), Failure> {
    let path = data_path(cfg)?;
    let ds = load_csv(path, &cfg.data.csv_options())?;
    prepare_out(cfg)?;
    let cache = cfg.out.join("dataset.json");
    save_cache(&cache, &ds)?;
    println!(
        "{} channels, {} steps, {} .. {}",
        ds.num_channels(),
        ds.len(),
        ds.timestamps.first().map(String::as_str).unwrap_or("-"),
        ds.timestamps.last().map(String::as_str).unwrap_or("-")
    );
    for (c, name) in ds.channels.iter().enumerate() {
        let row = ds.values.row(c);
        let mean = row.iter().sum::<f64>() / row.len() as f64;
        let min = row.iter().copied().fold(f64::INFINITY, f64::min);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        println!("  {name:<24} min {min:>12.4} max {max:>12.4} mean {mean:>12.4}");
    }
    println!("cached to {}", cache.display());
    Ok(())
}
