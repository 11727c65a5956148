use std::path::Path;
use std::process::{Command, Output};

use mrforge::dataset::{self, idx};
use mrforge::transforms::GrayImage;

fn mrforge(data: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mrforge"))
        .arg("--data-dir")
        .arg(data)
        .args(args)
        .env_remove("MRFORGE_DATA_DIR")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// Writes a small IDX dataset whose images encode their label as a bright band.
fn synthetic_mnist(dir: &Path, train: usize, test: usize) {
    let make = |n: usize| -> (Vec<GrayImage>, Vec<u8>) {
        (0..n)
            .map(|i| {
                let label = (i % 10) as u8;
                let img = GrayImage::from_fn(28, 28, |r, c| {
                    if r / 3 == label as usize && (c + i) % 5 != 0 {
                        1.0
                    } else {
                        0.0
                    }
                });
                (img, label)
            })
            .unzip()
    };
    for (n, images, labels) in [
        (train, dataset::TRAIN_IMAGES, dataset::TRAIN_LABELS),
        (test, dataset::TEST_IMAGES, dataset::TEST_LABELS),
    ] {
        let (imgs, labs) = make(n);
        std::fs::write(dir.join(images), idx::encode_images(&imgs, 28, 28)).unwrap();
        std::fs::write(dir.join(labels), idx::encode_labels(&labs)).unwrap();
    }
}

#[test]
fn ingest_reports_counts_and_checksums() {
    let dir = tempfile::tempdir().unwrap();
    synthetic_mnist(dir.path(), 120, 30);
    let out = mrforge(dir.path(), &["ingest"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.starts_with("train: 120, test: 30\n"), "{text}");
    assert_eq!(text.lines().filter(|l| l.starts_with("sha256 ")).count(), 4);
}

#[test]
fn missing_data_is_exit_code_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = mrforge(&dir.path().join("nowhere"), &["ingest"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("train-images-idx3-ubyte"));
}

#[test]
fn bad_arguments_are_exit_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = mrforge(
        dir.path(),
        &["augment", "--mr", "twirl", "--ratio", "0.1", "--out", "x"],
    );
    assert_eq!(out.status.code(), Some(2));
    let config = dir.path().join("exp.toml");
    std::fs::write(&config, "mr = \"rotate\"\nk = 100\nbogus = 1\n").unwrap();
    let out = mrforge(
        dir.path(),
        &["experiment", "--config", config.to_str().unwrap()],
    );
    assert_eq!(out.status.code(), Some(2));
    let out = mrforge(dir.path(), &["experiment", "--trials", "1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn augment_train_evaluate_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    synthetic_mnist(dir.path(), 200, 40);
    let manifest = dir.path().join("plan.json");
    let m = manifest.to_str().unwrap();
    let args = [
        "augment", "--mr", "rotate", "--k", "100", "--ratio", "0.1", "--seed", "3", "--out", m,
    ];
    assert!(mrforge(dir.path(), &args).status.success());
    let first = std::fs::read(&manifest).unwrap();
    assert!(mrforge(dir.path(), &args).status.success());
    assert_eq!(
        first,
        std::fs::read(&manifest).unwrap(),
        "manifest is not deterministic"
    );

    let plan: serde_json::Value = serde_json::from_slice(&first).unwrap();
    assert_eq!(plan["s"].as_array().unwrap().len(), 100);
    assert_eq!(plan["s1"].as_array().unwrap().len(), 80);
    assert_eq!(plan["sources"].as_array().unwrap().len(), 10);
    assert_eq!(plan["draws"].as_array().unwrap().len(), 10);

    let model = dir.path().join("model.bin");
    let out = mrforge(
        dir.path(),
        &[
            "train",
            "--manifest",
            m,
            "--set",
            "mr",
            "--epochs",
            "2",
            "--out",
            model.to_str().unwrap(),
        ],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(stdout(&out).contains("trained on 100 samples"));

    let out = mrforge(
        dir.path(),
        &["evaluate", "--model", model.to_str().unwrap()],
    );
    assert!(out.status.success());
    assert!(stdout(&out).starts_with("accuracy: "), "{}", stdout(&out));

    std::fs::write(&model, b"junk").unwrap();
    let out = mrforge(
        dir.path(),
        &["evaluate", "--model", model.to_str().unwrap()],
    );
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn experiment_writes_log_and_report_reads_it() {
    let dir = tempfile::tempdir().unwrap();
    synthetic_mnist(dir.path(), 200, 40);
    let log = dir.path().join("out/results.jsonl");
    let l = log.to_str().unwrap();
    let config = dir.path().join("exp.toml");
    std::fs::write(
        &config,
        "mr = \"shift\"\nk = 100\nratio = 0.05\ntrials = 2\ntest_size = 40\n[train]\nepochs = 1\n",
    )
    .unwrap();
    let out = mrforge(
        dir.path(),
        &[
            "experiment",
            "--config",
            config.to_str().unwrap(),
            "--workers",
            "1",
            "--out",
            l,
        ],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(String::from_utf8_lossy(&out.stderr).contains("little power"));
    assert_eq!(std::fs::read_to_string(&log).unwrap().lines().count(), 4);
    assert!(stdout(&out).lines().nth(1).unwrap().starts_with("shift"));

    let out = mrforge(dir.path(), &["report", "--log", l, "--csv"]);
    assert!(out.status.success());
    let csv = stdout(&out);
    assert!(csv.starts_with("mr,k,ratio,"));
    assert!(csv
        .lines()
        .nth(1)
        .unwrap()
        .starts_with("shift,100,0.05,2,2,"));

    let empty = dir.path().join("empty.jsonl");
    std::fs::write(&empty, "").unwrap();
    let out = mrforge(dir.path(), &["report", "--log", empty.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
}
