use std::fmt::Write as _;
use std::path::Path;

use mat_core::data::{chronological_split, load_csv, window_count, windows, CsvOptions, Split, TimeSeriesDataset};
use mat_core::{SplitRng, Tensor};

fn series(n: usize, m: usize) -> TimeSeriesDataset {
    TimeSeriesDataset {
        values: Tensor::matrix(m, n, (0..m * n).map(|v| v as f64).collect()).unwrap(),
        timestamps: (0..n).map(|t| format!("t{t}")).collect(),
        channels: (0..m).map(|c| format!("c{c}")).collect(),
    }
}

#[test]
fn window_count_matches_enumeration() {
    let mut rng = SplitRng::new(50);
    for _ in 0..50 {
        let n = 1 + rng.below(400);
        let l = 1 + rng.below(120);
        let t = 1 + rng.below(120);
        let ds = series(n, 1);
        let split = Split::whole("all", &ds);
        let mut brute = 0;
        for start in 0..n {
            if start + l + t <= n {
                brute += 1;
            }
        }
        assert_eq!(window_count(n, l, t), brute, "n={n} L={l} T={t}");
        let listed = windows(&split, l, t).map(|it| it.count()).unwrap_or(0);
        assert_eq!(listed, brute);
    }
}

#[test]
fn windows_never_cross_split_boundaries() {
    let ds = series(1000, 2);
    let s = chronological_split(&ds, [0.7, 0.1, 0.2]).unwrap();
    for split in [&s.train, &s.val, &s.test] {
        let (lo, hi) = (split.offset, split.offset + split.len());
        for w in windows(split, 24, 12).unwrap() {
            assert!(w.origin >= lo && w.origin + 36 <= hi, "{} window at {}", split.name, w.origin);
            // Values encode their own index, so the last target step must
            // come from inside the split as well.
            let last = w.y.at(0, 11) as usize;
            assert!(last < hi);
        }
    }
}

fn write_jena(path: &Path, rows: usize, channels: usize) {
    let mut text = String::from("\"Date Time\"");
    for c in 0..channels {
        let _ = write!(text, ",\"ch {c} (unit)\"");
    }
    text.push('\n');
    let mut rng = SplitRng::new(rows as u64);
    for r in 0..rows {
        let minutes = 10 * r;
        let _ = write!(
            text,
            "{:02}.01.2020 {:02}:{:02}:00",
            1 + minutes / 1440,
            minutes / 60 % 24,
            minutes % 60
        );
        for _ in 0..channels {
            let _ = write!(text, ",{:.2}", rng.uniform_range(-20.0, 40.0));
        }
        text.push('\n');
    }
    std::fs::write(path, text).unwrap();
}

#[test]
fn jena_layout_ingests_idempotently() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("jena.csv");
    write_jena(&path, 500, 21);
    let before = std::fs::read(&path).unwrap();
    let a = load_csv(&path, &CsvOptions::default()).unwrap();
    let b = load_csv(&path, &CsvOptions::default()).unwrap();
    assert_eq!(a, b);
    assert_eq!(std::fs::read(&path).unwrap(), before);
    assert_eq!(a.num_channels(), 21);
    assert!(a.timestamps.windows(2).all(|w| w[0] < w[1]));
    let s = chronological_split(&a, [0.7, 0.1, 0.2]).unwrap();
    assert_eq!(windows(&s.train, 96, 96).unwrap().count(), 350 - 192 + 1);
}
