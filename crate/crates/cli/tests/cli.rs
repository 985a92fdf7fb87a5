use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dmbp::imaging::read_raw;
use dmbp::network::WeightFile;
use dmbp::Tensor;
use serde_json::json;
use tempfile::TempDir;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn model_args(name: &str) -> Vec<String> {
    let dir = fixtures().join(name);
    vec![
        "--model".into(),
        dir.join("model.dmbpw").display().to_string(),
        "--arch".into(),
        dir.join("arch.json").display().to_string(),
    ]
}

fn image(name: &str, index: usize) -> String {
    fixtures()
        .join(name)
        .join(format!("images/img{index:02}.png"))
        .display()
        .to_string()
}

fn dmbp<S: AsRef<str>>(args: &[S]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dmbp"))
        .args(args.iter().map(AsRef::as_ref))
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn succeeded(o: &Output) {
    assert_eq!(o.status.code(), Some(0), "stderr: {}", stderr(o));
}

fn with_model(cmd: &str, model: &[String], rest: &[&str]) -> Vec<String> {
    let mut v = vec![cmd.to_string()];
    v.extend_from_slice(model);
    v.extend(rest.iter().map(|s| s.to_string()));
    v
}

fn write_manifest(dir: &Path, entries: serde_json::Value) -> String {
    let path = dir.join("manifest.json");
    std::fs::write(&path, json!({ "images": entries }).to_string()).unwrap();
    path.display().to_string()
}

fn spearman_line(o: &Output) -> f64 {
    let text = stdout(o);
    let line = text
        .lines()
        .find(|l| l.starts_with("spearman"))
        .expect("spearman line");
    line.split_whitespace().nth(1).unwrap().parse().unwrap()
}

#[test]
fn missing_target_is_a_usage_error() {
    let out = TempDir::new().unwrap();
    let args = with_model(
        "attribute",
        &model_args("toy_a"),
        &[
            "--image",
            &image("toy_a", 0),
            "--method",
            "grad",
            "--out-dir",
            out.path().to_str().unwrap(),
        ],
    );
    let o = dmbp(&args);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("Usage:"), "{}", stderr(&o));
}

#[test]
fn grad_map_matches_the_golden_file() {
    let out = TempDir::new().unwrap();
    let dir = out.path().to_str().unwrap();
    let args = with_model(
        "attribute",
        &model_args("toy_a"),
        &[
            "--image",
            &image("toy_a", 0),
            "--target",
            "1",
            "--method",
            "grad",
            "--out-dir",
            dir,
        ],
    );
    let o = dmbp(&args);
    succeeded(&o);
    let ours = read_raw(out.path().join("img00_grad_t1.dmbpa")).unwrap();
    let golden = read_raw(fixtures().join("toy_a/golden_grad_img00.dmbpa")).unwrap();
    assert_eq!((ours.height, ours.width), (golden.height, golden.width));
    let tol = 1e-4 * golden.max_abs();
    for (a, b) in ours.values.iter().zip(&golden.values) {
        assert!((a - b).abs() <= tol, "{a} vs {b}");
    }
    assert!(out.path().join("img00_grad_t1.png").is_file());
    let run: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out.path().join("img00_grad_t1.run.json")).unwrap())
            .unwrap();
    assert_eq!(run["seed"], 0);
    assert_eq!(run["config"]["dmbp"]["iterations"], 200);
}

#[test]
fn one_iteration_gives_a_one_row_loss_trace() {
    let out = TempDir::new().unwrap();
    let trace = out.path().join("trace.csv");
    let args = with_model(
        "attribute",
        &model_args("toy_a"),
        &[
            "--image",
            &image("toy_a", 0),
            "--target",
            "1",
            "--method",
            "dmbp",
            "--iters",
            "1",
            "--overlay",
            "--out-dir",
            out.path().to_str().unwrap(),
            "--loss-trace",
            trace.to_str().unwrap(),
        ],
    );
    succeeded(&dmbp(&args));
    let text = std::fs::read_to_string(&trace).unwrap();
    assert_eq!(text.lines().count(), 2, "{text}");
    assert!(out.path().join("img00_dmbp_t1.dmbpa").is_file());
}

#[test]
fn target_out_of_range_is_a_usage_error() {
    let out = TempDir::new().unwrap();
    let args = with_model(
        "attribute",
        &model_args("toy_a"),
        &[
            "--image",
            &image("toy_a", 0),
            "--target",
            "7",
            "--method",
            "grad",
            "--out-dir",
            out.path().to_str().unwrap(),
        ],
    );
    assert_eq!(dmbp(&args).status.code(), Some(2));
}

#[test]
fn missing_image_is_a_load_error() {
    let out = TempDir::new().unwrap();
    let args = with_model(
        "attribute",
        &model_args("toy_a"),
        &[
            "--image",
            "no/such.png",
            "--target",
            "0",
            "--method",
            "grad",
            "--out-dir",
            out.path().to_str().unwrap(),
        ],
    );
    let o = dmbp(&args);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).starts_with("error:"));
}

#[test]
fn uniform_network_scores_one_over_class_count() {
    let out = TempDir::new().unwrap();
    let entries = (0..3)
        .map(|i| json!({ "path": image("toy_a", i), "target": i % 4 }))
        .collect();
    let manifest = write_manifest(out.path(), entries);
    let res = out.path().join("res");
    let args = with_model(
        "evaluate",
        &model_args("uniform"),
        &[
            "--metric",
            "im",
            "--manifest",
            &manifest,
            "--method",
            "grad,sg",
            "--sg-samples",
            "3",
            "--steps",
            "20",
            "--out-dir",
            res.to_str().unwrap(),
            "--jobs",
            "2",
        ],
    );
    succeeded(&dmbp(&args));
    let summary = std::fs::read_to_string(res.join("summary.csv")).unwrap();
    let means: Vec<f64> = summary
        .lines()
        .filter(|l| l.starts_with("mean,"))
        .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(means.len(), 2, "{summary}");
    for m in means {
        assert!((m - 0.25).abs() <= 1e-6, "{m}");
    }
    assert_eq!(std::fs::read_dir(res.join("curves")).unwrap().count(), 6);
}

#[test]
fn evaluate_outputs_are_identical_across_runs() {
    let out = TempDir::new().unwrap();
    let entries = (0..2)
        .map(|i| json!({ "path": image("toy_b", i), "target": 0, "other_labels": [1, 2] }))
        .collect();
    let manifest = write_manifest(out.path(), entries);
    let run = |name: &str| {
        let res = out.path().join(name);
        let args = with_model(
            "evaluate",
            &model_args("toy_b"),
            &[
                "--metric",
                "cim",
                "--manifest",
                &manifest,
                "--method",
                "dmbp,sg",
                "--iters",
                "5",
                "--sg-samples",
                "4",
                "--steps",
                "10",
                "--seed",
                "3",
                "--out-dir",
                res.to_str().unwrap(),
            ],
        );
        succeeded(&dmbp(&args));
        let mut files: Vec<PathBuf> = std::fs::read_dir(res.join("curves"))
            .unwrap()
            .map(|e| e.unwrap().path())
            .collect();
        files.sort();
        files.push(res.join("summary.csv"));
        files
            .iter()
            .map(|f| std::fs::read(f).unwrap())
            .collect::<Vec<_>>()
    };
    let first = run("a");
    assert_eq!(first.len(), 5);
    assert_eq!(first, run("b"));
}

#[test]
fn empty_manifest_is_a_usage_error() {
    let out = TempDir::new().unwrap();
    let manifest = write_manifest(out.path(), json!([]));
    let args = with_model(
        "evaluate",
        &model_args("toy_a"),
        &[
            "--metric",
            "im",
            "--manifest",
            &manifest,
            "--method",
            "grad",
            "--out-dir",
            out.path().to_str().unwrap(),
        ],
    );
    assert_eq!(dmbp(&args).status.code(), Some(2));
}

#[test]
fn cim_without_other_labels_is_a_usage_error() {
    let out = TempDir::new().unwrap();
    let manifest = write_manifest(
        out.path(),
        json!([{ "path": image("toy_a", 0), "target": 1 }]),
    );
    let args = with_model(
        "evaluate",
        &model_args("toy_a"),
        &[
            "--metric",
            "cim",
            "--manifest",
            &manifest,
            "--method",
            "grad",
            "--out-dir",
            out.path().to_str().unwrap(),
        ],
    );
    let o = dmbp(&args);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("other labels"), "{}", stderr(&o));
}

#[test]
fn unknown_method_is_a_usage_error() {
    let args = with_model(
        "sanity",
        &model_args("toy_a"),
        &[
            "--image",
            &image("toy_a", 0),
            "--target",
            "0",
            "--method",
            "lrp",
        ],
    );
    assert_eq!(dmbp(&args).status.code(), Some(2));
}

/// Flatten, one dense unit that stays active, and the classifier. The
/// gradient map is the hidden unit's weight image times the classifier
/// weight, so redrawing the classifier can only rescale it.
fn single_unit_model(dir: &Path) -> Vec<String> {
    let side = 8;
    let features = 3 * side * side;
    let arch = json!({
        "model_id": "single_unit",
        "input_shape": [3, side, side],
        "class_count": 3,
        "preprocess": {
            "height": side, "width": side, "mean": [0.5, 0.5, 0.5], "std": [0.25, 0.25, 0.25], "resize": "bilinear"
        },
        "layers": [
            { "kind": "flatten" },
            { "kind": "dense", "in_features": features, "out_features": 1, "bias": true },
            { "kind": "relu" },
            { "kind": "dense", "in_features": 1, "out_features": 3, "bias": true }
        ]
    });
    let mut w = WeightFile::default();
    let hidden: Vec<f32> = (0..features)
        .map(|i| ((i * 7 % 23) as f32 - 11.0) / 100.0)
        .collect();
    w.insert(
        "layer1.weight",
        Tensor::new(vec![1, features], hidden).unwrap(),
    );
    w.insert("layer1.bias", Tensor::from_vec(vec![50.0]));
    w.insert(
        "layer3.weight",
        Tensor::new(vec![3, 1], vec![1.0, -0.5, 0.25]).unwrap(),
    );
    w.insert("layer3.bias", Tensor::from_vec(vec![0.0, 0.1, -0.1]));
    let (model, arch_path) = (dir.join("model.dmbpw"), dir.join("arch.json"));
    w.write(&model).unwrap();
    std::fs::write(&arch_path, arch.to_string()).unwrap();
    vec![
        "--model".into(),
        model.display().to_string(),
        "--arch".into(),
        arch_path.display().to_string(),
    ]
}

#[test]
fn sanity_on_a_single_unit_head_keeps_the_ranking() {
    let out = TempDir::new().unwrap();
    let model = single_unit_model(out.path());
    let dir = out.path().join("maps");
    for seed in ["0", "1", "2"] {
        let args = with_model(
            "sanity",
            &model,
            &[
                "--image",
                &image("toy_a", 0),
                "--target",
                "0",
                "--method",
                "grad",
                "--seed",
                seed,
                "--out-dir",
                dir.to_str().unwrap(),
            ],
        );
        let o = dmbp(&args);
        succeeded(&o);
        let rho = spearman_line(&o);
        assert!(rho.abs() > 0.99, "seed {seed}: {rho}");
    }
    assert!(dir.join("img00_grad_t0_original.dmbpa").is_file());
    assert!(dir.join("img00_grad_t0_reinit2.png").is_file());
}

#[test]
fn sanity_is_repeatable_under_a_seed() {
    let out = TempDir::new().unwrap();
    let args = with_model(
        "sanity",
        &model_args("toy_a"),
        &[
            "--image",
            &image("toy_a", 2),
            "--target",
            "0",
            "--method",
            "dmbp",
            "--iters",
            "10",
            "--seed",
            "5",
            "--out-dir",
            out.path().to_str().unwrap(),
        ],
    );
    let (a, b) = (dmbp(&args), dmbp(&args));
    succeeded(&a);
    assert_eq!(spearman_line(&a).to_bits(), spearman_line(&b).to_bits());
}

#[test]
fn inspect_counts_mlp_parameters() {
    let o = dmbp(&with_model("inspect", &model_args("mlp2"), &[]));
    succeeded(&o);
    let text = stdout(&o);
    let rows = text.lines().filter(|l| l.contains(" dense ")).count();
    assert_eq!(rows, 2, "{text}");
    assert!(text.contains("parameters 23"), "{text}");
    assert!(text.contains("shapes     ok"));
}

#[test]
fn inspect_matches_the_vgg_export() {
    let o = dmbp(&with_model("inspect", &model_args("vgg"), &[]));
    succeeded(&o);
    let text = stdout(&o);
    let export: serde_json::Value =
        serde_json::from_slice(&std::fs::read(fixtures().join("vgg/export.json")).unwrap())
            .unwrap();
    let layers = export["layers"].as_array().unwrap();
    let shape = |v: &serde_json::Value| {
        v.as_array()
            .unwrap()
            .iter()
            .map(|d| d.to_string())
            .collect::<Vec<_>>()
            .join("×")
    };
    for l in layers {
        let name = l["name"].as_str().unwrap();
        let row = text
            .lines()
            .find(|r| r.split_whitespace().nth(1) == Some(name))
            .unwrap_or_else(|| panic!("no row for {name}\n{text}"));
        let cols: Vec<&str> = row.split_whitespace().collect();
        assert_eq!(cols[3], shape(&l["in_shape"]), "{row}");
        assert_eq!(cols[4], shape(&l["out_shape"]), "{row}");
    }
}

#[test]
fn wrong_tensor_shape_names_the_layer() {
    let out = TempDir::new().unwrap();
    let mut w = WeightFile::read(fixtures().join("mlp2/model.dmbpw")).unwrap();
    w.insert("layer2.weight", Tensor::zeros(&[3, 3]));
    let model = out.path().join("bad.dmbpw");
    w.write(&model).unwrap();
    let args = vec![
        "inspect".to_string(),
        "--model".into(),
        model.display().to_string(),
        "--arch".into(),
        fixtures().join("mlp2/arch.json").display().to_string(),
    ];
    let o = dmbp(&args);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("layer 2"), "{}", stderr(&o));
}

#[test]
fn truncated_weight_file_is_a_load_error() {
    let out = TempDir::new().unwrap();
    let bytes = std::fs::read(fixtures().join("mlp2/model.dmbpw")).unwrap();
    let model = out.path().join("cut.dmbpw");
    std::fs::write(&model, &bytes[..bytes.len() - 5]).unwrap();
    let args = vec![
        "inspect".to_string(),
        "--model".into(),
        model.display().to_string(),
        "--arch".into(),
        fixtures().join("mlp2/arch.json").display().to_string(),
    ];
    assert_eq!(dmbp(&args).status.code(), Some(3));
}
