//! Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any FAIL.
//!
//! Set `MAT_JENA_CSV` to the real weather CSV to run criterion 10 against it.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use mat_core::data::{
    chronological_split, fit_scaler, load_csv, synthetic, window_count, windows, CsvOptions, TimeSeriesDataset,
    WindowSample,
};
use mat_core::model::{revin_denormalize, revin_normalize};
use mat_core::ssm::{
    discretize_zoh, discretize_zoh_scalar, selective_scan_parallel, selective_scan_sequential, ScanInputs,
};
use mat_core::train::{evaluate, train, LinearBaseline, MetricsReport, MetricsSpace, NaiveRepeat, TrainConfig};
use mat_core::verify::gradient_suite;
use mat_core::{MatModel, ModelConfig, SplitRng, Tensor};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

fn gradient_suite_check() -> Outcome {
    let start = Instant::now();
    let results = gradient_suite(2024).expect("gradient suite runs");
    let elapsed = start.elapsed();
    let worst = results.iter().max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error)).unwrap();
    let failed: Vec<&str> = results.iter().filter(|r| !r.passed()).map(|r| r.name.as_str()).collect();
    outcome(
        failed.is_empty() && elapsed < Duration::from_secs(60),
        format!(
            "{} checks, worst {} at {:.2e} (< 1e-4), failures {:?}, {:.1} s (< 60 s)",
            results.len(),
            worst.name,
            worst.max_rel_error,
            failed,
            secs(elapsed)
        ),
    )
}

fn scan_oracle() -> Outcome {
    let start = Instant::now();
    let lengths = [1, 2, 3, 7, 64, 257, 1024];
    let mut rng = SplitRng::new(2);
    let mut worst: f64 = 0.0;
    for i in 0..200 {
        let len = lengths[i % lengths.len()];
        let (d, n) = (1 + rng.below(4), 1 + rng.below(3));
        let u = Tensor::uniform(&[len, d], 2.0, &mut rng);
        let delta = Tensor::uniform(&[len, d], 1.0, &mut rng).map(|v| 1e-3 + 0.5 * v.abs());
        let a = Tensor::uniform(&[d, n], 1.0, &mut rng).map(|v| -1e-3 - 3.0 * v.abs());
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
        let s = selective_scan_sequential(inp).unwrap();
        let p = selective_scan_parallel(inp).unwrap();
        worst = worst.max(s.max_abs_diff(&p));
    }
    let elapsed = start.elapsed();
    outcome(
        worst < 1e-10 && elapsed < Duration::from_secs(30),
        format!("200 instances, max abs gap {worst:.2e} (< 1e-10), {:.2} s (< 30 s)", secs(elapsed)),
    )
}

fn zoh_oracle() -> Outcome {
    let mut rng = SplitRng::new(3);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let a = rng.uniform_range(-5.0, 0.5);
        let b = rng.uniform_range(-2.0, 2.0);
        let dt = rng.uniform_range(1e-4, 2.0);
        let (abar, bbar) = discretize_zoh_scalar(a, b, dt).unwrap();
        let closed_a = (dt * a).exp();
        let closed_b = if a == 0.0 { dt * b } else { (dt * a).exp_m1() / a * b };
        worst = worst.max((abar - closed_a).abs()).max((bbar - closed_b).abs());
    }
    let mut limit_exact = true;
    for (b, dt) in [(1.0, 0.1), (-3.5, 0.7), (2.25, 1e-3)] {
        let (abar, bbar) = discretize_zoh_scalar(0.0, b, dt).unwrap();
        limit_exact &= abar == 1.0 && (bbar - dt * b).abs() < 1e-15;
        let (va, vb) = discretize_zoh(&[0.0, -1.0], &[b, b], dt).unwrap();
        limit_exact &= va[0] == 1.0 && (vb[0] - dt * b).abs() < 1e-15;
        worst = worst.max((va[1] - (-dt).exp()).abs()).max((vb[1] - (-dt).exp_m1() / -1.0 * b).abs());
    }
    for a in [1e-9, -1e-9, 1e-14] {
        let (_, bbar) = discretize_zoh_scalar(a, 1.0, 0.5).unwrap();
        worst = worst.max((bbar - (0.5 * a).exp_m1() / a).abs());
    }
    outcome(
        worst < 1e-12 && limit_exact,
        format!("max abs error {worst:.2e} (< 1e-12); A=0 gives Δ·B: {limit_exact}"),
    )
}

fn lti_consistency() -> Outcome {
    let mut rng = SplitRng::new(4);
    let mut worst: f64 = 0.0;
    for len in [1, 2, 9, 33, 64] {
        let (d, n) = (3, 2);
        let dt: Vec<f64> = (0..d).map(|_| rng.uniform_range(0.01, 0.6)).collect();
        let brow: Vec<f64> = (0..n).map(|_| rng.uniform_range(-1.0, 1.0)).collect();
        let crow: Vec<f64> = (0..n).map(|_| rng.uniform_range(-1.0, 1.0)).collect();
        let u = Tensor::uniform(&[len, d], 1.0, &mut rng);
        let a = Tensor::uniform(&[d, n], 1.0, &mut rng).map(|v| -0.1 - v.abs());
        let dfeed = Tensor::uniform(&[d], 1.0, &mut rng);
        let delta = Tensor::from_rows(&vec![dt.clone(); len]).unwrap();
        let b = Tensor::from_rows(&vec![brow.clone(); len]).unwrap();
        let c = Tensor::from_rows(&vec![crow.clone(); len]).unwrap();
        let y = selective_scan_parallel(ScanInputs {
            u: &u,
            delta: &delta,
            a: &a,
            b: &b,
            c: &c,
            d_feed: &dfeed,
        })
        .unwrap();
        for i in 0..d {
            for k in 0..len {
                let mut direct = dfeed.data()[i] * u.at(k, i);
                for j in 0..=k {
                    for s in 0..n {
                        let abar = (dt[i] * a.at(i, s)).exp();
                        let bbar = (dt[i] * a.at(i, s)).exp_m1() / a.at(i, s) * brow[s];
                        direct += crow[s] * abar.powi((k - j) as i32) * bbar * u.at(j, i);
                    }
                }
                worst = worst.max((y.at(k, i) - direct).abs());
            }
        }
    }
    outcome(worst < 1e-8, format!("max abs gap {worst:.2e} (< 1e-8) at ℓ ≤ 64"))
}

fn revin_checks() -> Outcome {
    let mut rng = SplitRng::new(5);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let scale = rng.uniform_range(1e-3, 100.0);
        let shift = rng.uniform_range(-500.0, 500.0);
        let x = Tensor::uniform(&[7, 96], 1.0, &mut rng).map(|v| v * scale + shift);
        let (n, st) = revin_normalize(&x).unwrap();
        worst = worst.max(revin_denormalize(&n, &st).unwrap().max_abs_diff(&x));
    }
    let mut model = MatModel::new(ModelConfig {
        revin_affine: false,
        ..ModelConfig::toy()
    })
    .unwrap();
    model.params.zero_prefix("");
    let x = Tensor::uniform(&[3, 8], 10.0, &mut rng);
    let y = model.predict(&x).unwrap();
    let mean_exact = (0..3).all(|c| {
        let mu = x.row(c).iter().sum::<f64>() / 8.0;
        y.row(c).iter().all(|&v| v == mu)
    });
    outcome(
        worst < 1e-10 && mean_exact,
        format!("round trip max error {worst:.2e} (< 1e-10); zero network returns look-back mean exactly: {mean_exact}"),
    )
}

fn zero_sublayers() -> Outcome {
    let cfg = ModelConfig::toy();
    let mut model = MatModel::new(cfg.clone()).unwrap();
    model.zero_blocks();
    let mut rng = SplitRng::new(6);
    let x = Tensor::uniform(&[cfg.channels, cfg.lookback], 2.0, &mut rng);
    let got = model.predict(&x).unwrap();
    let p = |name: &str| model.params.get(model.params.find(name).unwrap()).clone();
    let affine = |x: &Tensor, stage: &str| -> Tensor {
        let (w, b) = (p(&format!("{stage}.0.weight")), p(&format!("{stage}.0.bias")));
        let (m, k) = (x.shape()[0], x.shape()[1]);
        let n = w.shape()[1];
        let data = (0..m * n)
            .map(|idx| {
                let (r, j) = (idx / n, idx % n);
                b.data()[j] + (0..k).map(|i| x.at(r, i) * w.at(i, j)).sum::<f64>()
            })
            .collect();
        Tensor::matrix(m, n, data).unwrap()
    };
    let (xn, st) = revin_normalize(&x).unwrap();
    let (gamma, beta) = (p("revin.gamma"), p("revin.beta"));
    let xn = Tensor::matrix(
        cfg.channels,
        cfg.lookback,
        (0..xn.len()).map(|i| xn.data()[i] * gamma.data()[i / cfg.lookback] + beta.data()[i / cfg.lookback]).collect(),
    )
    .unwrap();
    let x1 = affine(&xn, "emb1");
    let x2 = affine(&x1, "emb2");
    let p1 = affine(&x2.map(|v| 2.0 * v), "proj1");
    let merged = Tensor::new(p1.shape().to_vec(), p1.data().iter().zip(x1.data()).map(|(a, b)| a + 2.0 * b).collect()).unwrap();
    let out = affine(&merged, "proj2");
    let out = Tensor::new(
        out.shape().to_vec(),
        (0..out.len()).map(|i| (out.data()[i] - beta.data()[i / cfg.horizon]) / gamma.data()[i / cfg.horizon]).collect(),
    )
    .unwrap();
    let want = revin_denormalize(&out, &st).unwrap();
    let gap = got.max_abs_diff(&want);
    outcome(gap < 1e-12, format!("max abs gap to composed EMB/Proj pipeline {gap:.2e} (< 1e-12)"))
}

fn shape_grid() -> Outcome {
    let mut ok = true;
    let mut notes = String::new();
    for horizon in [96, 192, 336, 720] {
        let start = Instant::now();
        let model = MatModel::new(ModelConfig {
            horizon,
            dim: 16,
            ..ModelConfig::default()
        })
        .unwrap();
        let built = start.elapsed();
        let x = Tensor::uniform(&[21, 96], 1.0, &mut SplitRng::new(horizon as u64));
        let y = model.predict(&x).unwrap();
        ok &= y.shape() == [21, horizon] && y.all_finite() && built < Duration::from_secs(5);
        let _ = write!(notes, "T={horizon}→{:?} built {:.3} s; ", y.shape(), secs(built));
    }
    outcome(ok, format!("{notes}(L=96, M=21, D=16, < 5 s each)"))
}

fn prepared(ds: &TimeSeriesDataset, l: usize, t: usize) -> [Vec<WindowSample>; 3] {
    let s = chronological_split(ds, [0.7, 0.1, 0.2]).unwrap();
    let sc = fit_scaler(&s.train).unwrap();
    [&s.train, &s.val, &s.test].map(|sp| windows(&sc.transform_split(sp).unwrap(), l, t).unwrap().collect())
}

fn linear_learning() -> Outcome {
    let start = Instant::now();
    let [tr, va, te] = prepared(&synthetic::linear(1000, 2), 32, 16);
    let mut lin = LinearBaseline::new(32, 16, 1);
    let cfg = TrainConfig {
        epochs: 100,
        lr: 1e-3,
        seed: 1,
        ..TrainConfig::default()
    };
    train(&mut lin, &tr, &va, &cfg).unwrap();
    let mse = evaluate(&lin, &te, None, 1).unwrap().mse();
    outcome(
        mse < 1e-6,
        format!("noiseless line, L=32 T=16, 100 epochs: linear test MSE {mse:.2e} (< 1e-6), {:.1} s", secs(start.elapsed())),
    )
}

fn two_tone_learning() -> Outcome {
    let start = Instant::now();
    let [tr, va, te] = prepared(&synthetic::two_tone(2000, 3, 0.1, 7), 96, 96);
    let cfg = TrainConfig {
        epochs: 20,
        batch: 32,
        lr: 1e-3,
        seed: 7,
        ..TrainConfig::default()
    };
    let naive = evaluate(&NaiveRepeat { horizon: 96 }, &te, None, 1).unwrap().mse();
    let mut lin = LinearBaseline::new(96, 96, 7);
    train(&mut lin, &tr, &va, &cfg).unwrap();
    let linear = evaluate(&lin, &te, None, 1).unwrap().mse();
    let mut mat = MatModel::new(ModelConfig {
        lookback: 96,
        horizon: 96,
        channels: 3,
        n1: 64,
        n2: 32,
        dim: 16,
        state: 1,
        heads: 2,
        seed: 7,
        ..ModelConfig::default()
    })
    .unwrap();
    train(&mut mat, &tr, &va, &cfg).unwrap();
    let ours = evaluate(&mat, &te, None, 1).unwrap().mse();
    let elapsed = start.elapsed();
    outcome(
        ours < naive && ours <= linear && elapsed < Duration::from_secs(600),
        format!(
            "two-tone M=3 L=T=96: MAT {ours:.5} < naive {naive:.5}, ≤ linear {linear:.5}; {:.0} s on one worker (< 600 s)",
            secs(elapsed)
        ),
    )
}

fn metrics_csv(workers: usize) -> String {
    let [tr, va, te] = prepared(&synthetic::two_tone(600, 3, 0.2, 9), 24, 12);
    let mcfg = ModelConfig {
        lookback: 24,
        horizon: 12,
        channels: 3,
        n1: 16,
        n2: 8,
        dim: 4,
        heads: 2,
        dropout: 0.1,
        seed: 9,
        ..ModelConfig::default()
    };
    let tcfg = TrainConfig {
        epochs: 3,
        batch: 16,
        lr: 1e-3,
        seed: 9,
        workers,
        ..TrainConfig::default()
    };
    let mut model = MatModel::new(mcfg).unwrap();
    let out = train(&mut model, &tr, &va, &tcfg).unwrap();
    let stats = evaluate(&model, &te, None, workers).unwrap();
    let report = MetricsReport {
        dataset: "two_tone".into(),
        model: "mat".into(),
        lookback: 24,
        horizon: 12,
        metrics_space: MetricsSpace::Scaled,
        mse: stats.mse(),
        mae: stats.mae(),
        seed: 9,
        history: out.history,
        config: serde_json::Value::Null,
        wall_clock_secs: 0.0,
    };
    report.csv_row()
}

fn determinism() -> Outcome {
    let a = metrics_csv(1);
    let b = metrics_csv(1);
    let c = metrics_csv(2);
    outcome(
        a == b && a == c,
        format!("two seeded runs identical: {}; 2-worker run identical: {} ({a})", a == b, a == c),
    )
}

fn write_jena_layout(path: &Path) {
    let mut text = String::from("\"Date Time\"");
    for c in 0..21 {
        let _ = write!(text, ",\"indicator {c}\"");
    }
    text.push('\n');
    let mut rng = SplitRng::new(10);
    for r in 0..1500 {
        let m = 10 * r;
        let _ = write!(text, "{:02}.01.2020 {:02}:{:02}:00", 1 + m / 1440, m / 60 % 24, m % 60);
        for _ in 0..21 {
            let _ = write!(text, ",{:.2}", rng.uniform_range(-10.0, 30.0));
        }
        text.push('\n');
    }
    std::fs::write(path, text).unwrap();
}

fn jena_ingestion() -> Outcome {
    let supplied = std::env::var_os("MAT_JENA_CSV").map(PathBuf::from);
    let dir = tempfile::tempdir().unwrap();
    let (path, source) = match &supplied {
        Some(p) => (p.clone(), "real CSV"),
        None => {
            let p = dir.path().join("jena_layout.csv");
            write_jena_layout(&p);
            (p, "real CSV not supplied; generated Jena-layout file")
        }
    };
    let ds = match load_csv(&path, &CsvOptions::default()) {
        Ok(ds) => ds,
        Err(e) => return outcome(false, format!("{source}: {e}")),
    };
    let monotone = ds.timestamps.windows(2).all(|w| w[0] < w[1]);
    let s = chronological_split(&ds, [0.7, 0.1, 0.2]).unwrap();
    let counted = windows(&s.train, 96, 96).map(|w| w.count()).unwrap_or(0);
    let formula = window_count(s.train.len(), 96, 96);
    outcome(
        ds.num_channels() == 21 && monotone && counted == formula && counted + 192 == s.train.len() + 1,
        format!(
            "{source}: {} channels, {} steps, monotone timestamps {monotone}, train windows {counted} = n−L−T+1 = {formula}",
            ds.num_channels(),
            ds.len()
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("1 gradient suite", gradient_suite_check),
        ("2 scan oracle", scan_oracle),
        ("3 ZOH oracle", zoh_oracle),
        ("4 LTI consistency", lti_consistency),
        ("5 RevIN", revin_checks),
        ("6 zero-sublayer equivalence", zero_sublayers),
        ("7 shape grid", shape_grid),
        ("8a desk-scale learning (linear)", linear_learning),
        ("8b desk-scale learning (two-tone)", two_tone_learning),
        ("9 determinism", determinism),
        ("10 Jena ingestion", jena_ingestion),
    ];
    let mut failures = 0;
    for (name, check) in criteria {
        let o = check();
        if !o.pass {
            failures += 1;
        }
        println!("acceptance {name}: {} - {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    println!("acceptance summary: {} of {} criteria passed", criteria.len() - failures, criteria.len());
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
