//! End-to-end tests of the `lsom` binary on a small synthetic IDX dataset.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use lsom::io::{encode_idx_images, encode_idx_labels};

const SIDE: usize = 28;

/// Two-tone images: class 0 bright in the top half, class 1 in the bottom,
/// with deterministic per-image texture.
fn fake_image(index: usize, class: u8) -> Vec<u8> {
    let mut pixels = vec![0u8; SIDE * SIDE];
    for row in 0..SIDE {
        for col in 0..SIDE {
            let bright = (class == 0) == (row < SIDE / 2);
            let base = if bright { 180 } else { 10 };
            pixels[row * SIDE + col] = base + ((index * 31 + row * 7 + col) % 40) as u8;
        }
    }
    pixels
}

/// Write train (80 images) and test (40 images) IDX files under `dir` with
/// the canonical MNIST names.
fn write_fixture(dir: &Path) {
    let build = |count: usize| -> (Vec<Vec<u8>>, Vec<u8>) {
        let labels: Vec<u8> = (0..count).map(|i| (i % 2) as u8).collect();
        let images = (0..count).map(|i| fake_image(i, labels[i])).collect();
        (images, labels)
    };
    let (train_images, train_labels) = build(80);
    let (test_images, test_labels) = build(40);
    fs::write(
        dir.join("train-images-idx3-ubyte"),
        encode_idx_images(&train_images),
    )
    .unwrap();
    fs::write(
        dir.join("train-labels-idx1-ubyte"),
        encode_idx_labels(&train_labels),
    )
    .unwrap();
    fs::write(
        dir.join("t10k-images-idx3-ubyte"),
        encode_idx_images(&test_images),
    )
    .unwrap();
    fs::write(
        dir.join("t10k-labels-idx1-ubyte"),
        encode_idx_labels(&test_labels),
    )
    .unwrap();
}

fn lsom(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lsom"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout_of(output: &Output) -> String {
    assert!(
        output.status.success(),
        "expected success, stderr: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    String::from_utf8(output.stdout.clone()).unwrap()
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("run.cfg");
    fs::write(&path, text).unwrap();
    path
}

/// Strip the wall-clock column so rows from identical runs compare equal.
fn without_seconds(row: &str) -> String {
    let mut fields: Vec<&str> = row.split(',').collect();
    fields.remove(5);
    fields.join(",")
}

#[test]
fn train_eval_generate_export_roundtrip() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    fs::create_dir(&data).unwrap();
    write_fixture(&data);
    let config = write_config(
        tmp.path(),
        "layer = 28 1 4\niterations = 300\nimages = 60\nvalidate_images = 30\nseed = 5\n",
    );
    let data_s = data.to_str().unwrap();

    let out1 = tmp.path().join("run1");
    let out2 = tmp.path().join("run2");
    let row1 = stdout_of(&lsom(&[
        "train",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out1.to_str().unwrap(),
        "--dataset-dir",
        data_s,
    ]));
    let row2 = stdout_of(&lsom(&[
        "train",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out2.to_str().unwrap(),
        "--dataset-dir",
        data_s,
    ]));

    // Identical config and seed: identical rows, minus timing.
    let row1 = row1.trim().to_string();
    assert_eq!(without_seconds(&row1), without_seconds(row2.trim()));
    assert!(row1.starts_with("300,60,28:1:4,"), "{row1}");
    assert!(row1.ends_with(",ok"), "{row1}");

    // results.csv holds the same row under the documented header.
    let csv = fs::read_to_string(out1.join("results.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(
        lines[0],
        "iterations,images,arch,train_acc,validate_acc,seconds,status"
    );
    assert_eq!(lines[1], row1);

    // The two models are byte-identical.
    let model1 = fs::read(out1.join("model.lsom")).unwrap();
    assert_eq!(model1, fs::read(out2.join("model.lsom")).unwrap());

    // Eval with the training counts reproduces the recorded accuracies
    // (the seed defaults to the one stored in the model).
    let model_path = out1.join("model.lsom");
    let eval = stdout_of(&lsom(&[
        "eval",
        "--model",
        model_path.to_str().unwrap(),
        "--dataset-dir",
        data_s,
        "--images",
        "60",
        "--validate-images",
        "30",
    ]));
    let train_acc = row1.split(',').nth(3).unwrap();
    let validate_acc = row1.split(',').nth(4).unwrap();
    assert!(
        eval.contains(&format!("train_accuracy = {train_acc}")),
        "{eval}"
    );
    assert!(
        eval.contains(&format!("validate_accuracy = {validate_acc}")),
        "{eval}"
    );

    // An empty subset is an error, not a report.
    let empty = lsom(&[
        "eval",
        "--model",
        model_path.to_str().unwrap(),
        "--dataset-dir",
        data_s,
        "--images",
        "0",
    ]);
    assert!(!empty.status.success());

    // A corrupt model file is rejected with a nonzero exit.
    let broken = tmp.path().join("broken.lsom");
    let mut bytes = model1.clone();
    bytes.truncate(bytes.len() / 2);
    fs::write(&broken, bytes).unwrap();
    let corrupt = lsom(&[
        "eval",
        "--model",
        broken.to_str().unwrap(),
        "--dataset-dir",
        data_s,
    ]);
    assert!(!corrupt.status.success());
    assert!(String::from_utf8_lossy(&corrupt.stderr).contains("error:"));

    // Generate: default covers every node of the 4x4 top grid.
    let gen_all = tmp.path().join("gen_all");
    stdout_of(&lsom(&[
        "generate",
        "--model",
        model_path.to_str().unwrap(),
        "--out",
        gen_all.to_str().unwrap(),
    ]));
    let pgms: Vec<_> = fs::read_dir(&gen_all)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|name| name.ends_with(".pgm"))
        .collect();
    assert_eq!(pgms.len(), 16);
    let class_map = fs::read_to_string(gen_all.join("class_map.csv")).unwrap();
    assert!(class_map.starts_with("row,col,class,consistency\n"));
    assert_eq!(class_map.lines().count(), 17);

    // A single requested node yields exactly one image.
    let gen_one = tmp.path().join("gen_one");
    stdout_of(&lsom(&[
        "generate",
        "--model",
        model_path.to_str().unwrap(),
        "--out",
        gen_one.to_str().unwrap(),
        "--node",
        "1,2",
    ]));
    let files: Vec<_> = fs::read_dir(&gen_one)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|name| name.ends_with(".pgm"))
        .collect();
    assert_eq!(files.len(), 1);
    assert!(files[0].starts_with("1_2_"), "{}", files[0]);

    // Out-of-range nodes fail.
    let bad_node = lsom(&[
        "generate",
        "--model",
        model_path.to_str().unwrap(),
        "--out",
        gen_one.to_str().unwrap(),
        "--node",
        "9,9",
    ]);
    assert!(!bad_node.status.success());

    // Export-maps writes a gray montage for the single (pixel) layer.
    let maps = tmp.path().join("maps");
    stdout_of(&lsom(&[
        "export-maps",
        "--model",
        model_path.to_str().unwrap(),
        "--out",
        maps.to_str().unwrap(),
    ]));
    let montage = fs::read(maps.join("layer0.pgm")).unwrap();
    assert!(montage.starts_with(b"P5\n"));
}

#[test]
fn two_layer_model_exports_gray_and_redblue_maps() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    fs::create_dir(&data).unwrap();
    write_fixture(&data);
    let config = write_config(
        tmp.path(),
        "layer = 7 7 3\nlayer = 4 4 4\niterations = 200\nimages = 40\nvalidate_images = 20\nseed = 2\n",
    );
    let out = tmp.path().join("run");
    stdout_of(&lsom(&[
        "train",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--dataset-dir",
        data.to_str().unwrap(),
    ]));
    let maps = tmp.path().join("maps");
    let model_path = out.join("model.lsom");
    stdout_of(&lsom(&[
        "export-maps",
        "--model",
        model_path.to_str().unwrap(),
        "--out",
        maps.to_str().unwrap(),
    ]));
    assert!(fs::read(maps.join("layer0.pgm"))
        .unwrap()
        .starts_with(b"P5\n"));
    assert!(fs::read(maps.join("layer1.ppm"))
        .unwrap()
        .starts_with(b"P6\n"));
}

#[test]
fn train_rejects_invalid_window_geometry() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    fs::create_dir(&data).unwrap();
    write_fixture(&data);
    // (28 - 5) is not divisible by the stride 2.
    let config = write_config(tmp.path(), "layer = 5 2 4\niterations = 10\nimages = 5\n");
    let out = tmp.path().join("run");
    let result = lsom(&[
        "train",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--dataset-dir",
        data.to_str().unwrap(),
    ]);
    assert!(!result.status.success());
    let stderr = String::from_utf8_lossy(&result.stderr);
    assert!(stderr.contains("layer 0"), "{stderr}");
    assert!(!out.join("model.lsom").exists());
}

#[test]
fn sweep_records_error_rows_and_continues() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    fs::create_dir(&data).unwrap();
    write_fixture(&data);
    let config = tmp.path().join("sweep.cfg");
    fs::write(
        &config,
        "iterations = 50 100\nimages = 40\narch = (28,1,3)\narch = (5,2,3)\nnum_classes = 2\nvalidate_images = 20\nseed = 4\n",
    )
    .unwrap();
    let out = tmp.path().join("sweep");
    // Dataset location comes from the environment here.
    let output = Command::new(env!("CARGO_BIN_EXE_lsom"))
        .args([
            "sweep",
            "--config",
            config.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ])
        .env("LSOM_DATASET_DIR", &data)
        .output()
        .expect("binary runs");
    let stdout = stdout_of(&output);

    let csv = fs::read_to_string(out.join("results.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 5, "{csv}");
    let ok_rows = lines[1..].iter().filter(|l| l.ends_with(",ok")).count();
    let error_rows = lines[1..].iter().filter(|l| l.contains(",error: ")).count();
    assert_eq!((ok_rows, error_rows), (2, 2), "{csv}");
    // Every row was also streamed to stdout.
    for line in &lines[1..] {
        assert!(stdout.contains(line), "missing {line} in stdout");
    }
    // Rows appear in sweep order: 50-iteration runs before 100-iteration ones.
    assert!(lines[1].starts_with("50,40,28:1:3,"));
    assert!(lines[2].starts_with("50,40,5:2:3,"));
    assert!(lines[3].starts_with("100,40,28:1:3,"));
}
