use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tbsnn::encoders::{encode, EncoderConfig, Encoding};
use tbsnn::harness::{load_dataset, read_csv, read_spike_dump, TrainConfig};
use tbsnn::SeededRng;

const CONFIG: &str = r#"
epochs = 1
batch_size = 16
seed = 2

[dataset]
kind = "synthetic"
n = 90
classes = 3

[encoder]
kind = "ttfs"

[arch]
kind = "mlp"
hidden = 16
"#;

fn tbsnn(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tbsnn"))
        .args(args)
        .current_dir(dir)
        .env_remove("TBSNN_DATA_DIR")
        .output()
        .unwrap()
}

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.toml"), CONFIG).unwrap();
    dir
}

#[test]
fn train_writes_metrics_and_honours_overrides() {
    let dir = setup();
    let out = tbsnn(&["train", "--config", "run.toml", "--epochs", "2", "--out-dir", "m"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let records = read_csv(dir.path().join("m/metrics.csv")).unwrap();
    assert_eq!(records.len(), 4);
    assert_eq!(records.last().unwrap().epoch, 2);
}

#[test]
fn seed_override_changes_the_run() {
    let dir = setup();
    let cfg = CONFIG.replace("\"ttfs\"", "\"rate\"");
    fs::write(dir.path().join("run.toml"), cfg).unwrap();
    for (seed, out_dir) in [("2", "a"), ("3", "b")] {
        let out = tbsnn(&["train", "--config", "run.toml", "--seed", seed, "--out-dir", out_dir], dir.path());
        assert!(out.status.success());
    }
    let a = fs::read(dir.path().join("a/metrics.csv")).unwrap();
    let b = fs::read(dir.path().join("b/metrics.csv")).unwrap();
    assert_ne!(a, b);
}

#[test]
fn errors_exit_nonzero_with_diagnostic() {
    let dir = setup();
    let cases: [&[&str]; 4] = [
        &["train", "--config", "missing.toml"],
        &["train", "--config", "run.toml", "--epochs", "0"],
        &["compare", "--config", "run.toml", "--encoders", "ttfs"],
        &["compare", "--config", "run.toml", "--encoders", "ttfs,morse"],
    ];
    for args in cases {
        let out = tbsnn(args, dir.path());
        assert!(!out.status.success(), "{args:?} succeeded");
        assert!(!out.stderr.is_empty(), "{args:?} printed no diagnostic");
    }
    let out = tbsnn(&["train", "--config", "missing.toml"], dir.path());
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.toml"));
}

#[test]
fn encode_dump_matches_library_encoder() {
    let dir = setup();
    let out = tbsnn(
        &["encode", "--config", "run.toml", "--encoder", "hybrid_temporal_bit", "--count", "3", "--out", "s.bin"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let dumped = read_spike_dump(dir.path().join("s.bin")).unwrap();
    assert_eq!(dumped.shape(), &[17, 3, 1, 16, 16]);

    let cfg = TrainConfig::from_toml_str(CONFIG).unwrap();
    let images = load_dataset(&cfg).unwrap().take(3).images;
    let expected = encode(
        Encoding::HybridTemporalBit,
        &images,
        &EncoderConfig::default(),
        &mut SeededRng::new(2),
    )
    .unwrap();
    assert_eq!(&dumped, expected.spikes());

    let out = tbsnn(&["encode", "--config", "run.toml", "--count", "1000", "--out", "x.bin"], dir.path());
    assert!(!out.status.success());
}

/// Deltas and rank markers re-derived from the emitted comparison CSV.
#[test]
fn compare_outputs_are_self_consistent() {
    let dir = setup();
    let out = tbsnn(
        &[
            "compare",
            "--config",
            "run.toml",
            "--encoders",
            "rate,ttfs,hybrid_rate_bit,hybrid_temporal_bit",
            "--out-dir",
            "c",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let c = dir.path().join("c");
    for enc in ["rate", "ttfs", "hybrid_rate_bit", "hybrid_temporal_bit"] {
        let records = read_csv(c.join(format!("metrics-{enc}.csv"))).unwrap();
        assert_eq!(records.len(), 2);
    }

    let mut reader = csv::Reader::from_path(c.join("comparison.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 4);
    let top1 = |enc: &str| -> f64 {
        rows.iter().find(|r| &r[1] == enc).unwrap()[2].parse().unwrap()
    };
    for r in &rows {
        match &r[1] {
            "hybrid_temporal_bit" | "hybrid_rate_bit" => {
                let base = &r[4];
                assert_eq!(base, if &r[1] == "hybrid_rate_bit" { "rate" } else { "ttfs" });
                let delta: f64 = r[5].parse().unwrap();
                assert_eq!(delta, top1(&r[1]) - top1(base));
            }
            _ => assert!(r[5].is_empty()),
        }
        // Final val top-1 in the comparison equals the per-encoder metrics file.
        let records = read_csv(c.join(format!("metrics-{}.csv", &r[1]))).unwrap();
        assert_eq!(records.last().unwrap().top1, top1(&r[1]));
    }

    let mut values: Vec<f64> = rows.iter().map(|r| r[2].parse().unwrap()).collect();
    values.sort_by(|a, b| b.total_cmp(a));
    values.dedup();
    let md = fs::read_to_string(c.join("comparison.md")).unwrap();
    let cells: Vec<&str> = md.lines().nth(2).unwrap().split('|').map(str::trim).collect();
    let header: Vec<&str> = md.lines().next().unwrap().split('|').map(str::trim).collect();
    for r in &rows {
        let col = header.iter().position(|h| *h == &r[1]).unwrap();
        let v: f64 = r[2].parse().unwrap();
        let cell = cells[col];
        let shown = format!("{:.2}", v * 100.0);
        if v == values[0] {
            assert!(cell.starts_with(&format!("**{shown}**")), "{cell}");
        } else if values.get(1) == Some(&v) {
            assert!(cell.starts_with(&format!("<u>{shown}</u>")), "{cell}");
        } else {
            assert!(cell.starts_with(&shown), "{cell}");
        }
    }
}

#[test]
fn data_dir_resolves_relative_paths() {
    let dir = setup();
    let data = dir.path().join("data/tiny");
    fs::create_dir_all(&data).unwrap();
    let cfg = TrainConfig::from_toml_str(CONFIG).unwrap();
    let ds = load_dataset(&cfg).unwrap();
    // Synthetic images are 16x16 single-channel, so they fit the IDX container.
    tbsnn::data::write_idx_images(data.join("img"), &ds.images).unwrap();
    tbsnn::data::write_idx_labels(data.join("lbl"), &ds.labels).unwrap();
    let idx_cfg = CONFIG.replace(
        "kind = \"synthetic\"\nn = 90\nclasses = 3",
        "kind = \"idx\"\nimages = \"tiny/img\"\nlabels = \"tiny/lbl\"",
    );
    fs::write(dir.path().join("idx.toml"), idx_cfg).unwrap();

    let out = tbsnn(&["train", "--config", "idx.toml", "--out-dir", "o"], dir.path());
    assert!(!out.status.success(), "relative path resolved without a data dir");
    let out = Command::new(env!("CARGO_BIN_EXE_tbsnn"))
        .args(["train", "--config", "idx.toml", "--out-dir", "o"])
        .current_dir(dir.path())
        .env("TBSNN_DATA_DIR", dir.path().join("data"))
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
