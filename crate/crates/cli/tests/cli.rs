use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use leafvit_core::model::build_mobilevit_s;
use leafvit_core::pipeline::LogitsRecord;
use leafvit_core::preprocess::{save_png, ImageBuffer};
use leafvit_core::tensor::Tensor;
use leafvit_core::weights::{synthesize, MANGO_LEAF_CLASSES};
use serde_json::Value;
use tempfile::TempDir;

fn leafvit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_leafvit"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| {
        panic!("stdout is not JSON ({e}): {}", String::from_utf8_lossy(&o.stdout))
    })
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn leaf(seed: u8) -> ImageBuffer {
    ImageBuffer::from_fn(120, 160, |y, x| {
        let d = ((y as i32 - 60).pow(2) + (x as i32 - 80).pow(2)) as f64;
        if d < 2500.0 {
            [40 + seed, 120 + (x % 40) as u8, 30]
        } else {
            [250, 250, 245 - seed]
        }
    })
    .unwrap()
}

struct Fixture {
    dir: TempDir,
    weights: PathBuf,
    image: PathBuf,
}

fn fixture() -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let weights = dir.path().join("model.mlvw");
    synthesize(&build_mobilevit_s(8).unwrap(), 3).save(&weights).unwrap();
    let image = dir.path().join("leaf.png");
    save_png(&leaf(0), &image).unwrap();
    Fixture { dir, weights, image }
}

#[test]
fn profile_reports_published_comparison() {
    let o = leafvit(&["profile"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("4942760") || text.contains("4,942,760"), "{text}");
    assert!(text.contains("PASS"));

    let o = leafvit(&["--json", "profile", "--model", "all"]);
    let doc = json(&o);
    let models = doc["models"].as_array().unwrap();
    assert_eq!(models.len(), 3);
    assert_eq!(models[0]["report"]["total_params"], 4942760);
}

#[test]
fn profile_csv_has_a_row_per_layer() {
    let o = leafvit(&["profile", "--csv", "--model", "efficientvit_b0"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.lines().count() > 20);
    assert!(text.lines().next().unwrap().contains(','));
}

#[test]
fn unknown_model_is_an_argument_error() {
    let o = leafvit(&["profile", "--model", "resnet50"]);
    assert_eq!(code(&o), 8);
}

#[test]
fn split_prints_fold_sizes_and_writes_plan() {
    let dir = tempfile::tempdir().unwrap();
    let plan = dir.path().join("plan.json");
    let o = leafvit(&["split", "--counts", "500x8", "--folds", "5", "--seed", "1", "--out", s(&plan)]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("fold 0: 300/100/100"), "{text}");
    let doc: Value = serde_json::from_str(&std::fs::read_to_string(&plan).unwrap()).unwrap();
    assert_eq!(doc["folds"].as_array().unwrap().len(), 5);
    assert_eq!(doc["folds"][2]["classes"][7]["test"].as_array().unwrap().len(), 100);

    assert_eq!(code(&leafvit(&["split", "--counts", "10,abc"])), 8);
    assert_eq!(code(&leafvit(&["split", "--counts", "10,10", "--folds", "2"])), 8);
}

#[test]
fn preview_is_deterministic() {
    let f = fixture();
    let run = |out: &str| {
        let out = f.dir.path().join(out);
        let o = leafvit(&["--json", "preview-augment", s(&f.image), "--seed", "42", "-n", "3", "--out", s(&out)]);
        assert_eq!(code(&o), 0);
        let doc = json(&o);
        let files = doc["files"].as_array().unwrap().clone();
        assert_eq!(files.len(), 3);
        for file in &files {
            assert!(Path::new(file["path"].as_str().unwrap()).exists());
        }
        files.iter().map(|f| f["checksum"].clone()).collect::<Vec<_>>()
    };
    assert_eq!(run("a"), run("b"));
}

#[test]
fn classify_json_and_text() {
    let f = fixture();
    let o = leafvit(&["--json", "classify", s(&f.image), "-w", s(&f.weights), "--topk", "2", "--timing"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let doc = json(&o);
    assert_eq!(doc["labels"].as_array().unwrap().len(), 8);
    let r = &doc["results"][0];
    let probs: Vec<f64> = r["probabilities"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-4);
    assert_eq!(r["top"].as_array().unwrap().len(), 2);
    assert_eq!(r["top"][0]["label"], r["label"]);
    assert!(MANGO_LEAF_CLASSES.contains(&r["label"].as_str().unwrap()));
    assert!(r["latency_ms"].as_f64().unwrap() > 0.0);

    let logits = f.dir.path().join("logits");
    let o = leafvit(&["classify", s(&f.image), "-w", s(&f.weights), "--logits-dir", s(&logits)]);
    assert_eq!(code(&o), 0);
    let rec = LogitsRecord::from_json(&std::fs::read_to_string(logits.join("leaf.json")).unwrap()).unwrap();
    assert_eq!(rec.labels.len(), 8);
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("  3. "), "{text}");
}

#[test]
fn classify_with_tta_is_reproducible() {
    let f = fixture();
    let args = ["--json", "classify", s(&f.image), "-w", s(&f.weights), "--tta", "4", "--seed", "9"];
    let (a, b) = (json(&leafvit(&args)), json(&leafvit(&args)));
    assert_eq!(a["results"][0]["probabilities"], b["results"][0]["probabilities"]);
    assert_eq!(a["tta"], 4);
}

#[test]
fn classify_error_exit_codes() {
    let f = fixture();
    let garbage = f.dir.path().join("garbage.png");
    std::fs::write(&garbage, b"not an image").unwrap();
    let o = leafvit(&["--json", "classify", s(&garbage), "-w", s(&f.weights)]);
    assert_eq!(code(&o), 3);
    assert_eq!(json(&o)["exit_code"], 3);

    let missing = f.dir.path().join("missing.png");
    assert_eq!(code(&leafvit(&["classify", s(&missing), "-w", s(&f.weights)])), 3);

    let bad_weights = f.dir.path().join("bad.mlvw");
    let mut bytes = std::fs::read(&f.weights).unwrap();
    let n = bytes.len();
    bytes[n / 2] ^= 0xff;
    std::fs::write(&bad_weights, bytes).unwrap();
    let o = leafvit(&["classify", s(&f.image), "-w", s(&bad_weights)]);
    assert_eq!(code(&o), 4);
    assert!(String::from_utf8_lossy(&o.stderr).contains("error"));

    let mut partial = synthesize(&build_mobilevit_s(8).unwrap(), 3);
    let victim = partial
        .tensors()
        .map(|(n, _)| n.to_string())
        .find(|n| n.ends_with("attn.qkv.weight"))
        .unwrap();
    partial.remove(&victim).unwrap();
    let partial_path = f.dir.path().join("partial.mlvw");
    partial.save(&partial_path).unwrap();
    assert_eq!(code(&leafvit(&["classify", s(&f.image), "-w", s(&partial_path)])), 5);

    let mut broken = synthesize(&build_mobilevit_s(8).unwrap(), 3);
    broken.insert("stem.bn.running_var", Tensor::full(&[16], -1.0f32));
    let broken_path = f.dir.path().join("broken.mlvw");
    broken.save(&broken_path).unwrap();
    assert_eq!(code(&leafvit(&["classify", s(&f.image), "-w", s(&broken_path)])), 7);

    assert_eq!(code(&leafvit(&["classify", s(&f.image), "-w", s(&f.weights), "--topk", "9"])), 8);
    assert_eq!(code(&leafvit(&["classify", s(&f.image), "-w", s(&f.weights), "--topk", "0"])), 8);
    assert_eq!(code(&leafvit(&["classify"])), 2);
}

#[test]
fn evaluate_writes_reports() {
    let f = fixture();
    let data = f.dir.path().join("data");
    for (i, class) in MANGO_LEAF_CLASSES.iter().enumerate() {
        let d = data.join(class.replace(' ', "_"));
        std::fs::create_dir_all(&d).unwrap();
        save_png(&leaf(i as u8 * 9), d.join("a.png")).unwrap();
    }
    let out = f.dir.path().join("eval");
    let o = leafvit(&["--json", "evaluate", s(&data), "-w", s(&f.weights), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let doc = json(&o);
    let cm = doc["confusion"].as_array().unwrap();
    let total: u64 = cm.iter().flat_map(|r| r.as_array().unwrap()).map(|v| v.as_u64().unwrap()).sum();
    assert_eq!(total, 8);
    for name in ["cm.csv", "report.csv", "report.txt"] {
        assert!(out.join(name).exists(), "{name} missing");
    }

    std::fs::create_dir_all(data.join("Unknown Blight")).unwrap();
    save_png(&leaf(1), data.join("Unknown Blight").join("x.png")).unwrap();
    assert_eq!(code(&leafvit(&["evaluate", s(&data), "-w", s(&f.weights), "--out", s(&out)])), 6);
}

#[test]
fn evaluate_rejects_empty_class_dir() {
    let f = fixture();
    let data = f.dir.path().join("data");
    std::fs::create_dir_all(data.join("Healthy")).unwrap();
    let o = leafvit(&["evaluate", s(&data), "-w", s(&f.weights), "--out", s(&f.dir.path().join("o"))]);
    assert_eq!(code(&o), 6);
}

#[test]
fn explain_writes_saliency_files() {
    let f = fixture();
    let out = f.dir.path().join("explain");
    let o = leafvit(&["--json", "explain", s(&f.image), "-w", s(&f.weights), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let doc = json(&o);
    assert_eq!(doc["block"], 2);
    let pgm = std::fs::read(out.join("saliency.pgm")).unwrap();
    assert!(pgm.starts_with(b"P5\n224 224\n255\n"));
    let overlay = leafvit_core::preprocess::load_image(out.join("overlay.png")).unwrap();
    assert_eq!((overlay.height(), overlay.width()), (224, 448));

    let o = leafvit(&["explain", s(&f.image), "-w", s(&f.weights), "--stage", "0", "--out", s(&out)]);
    assert_eq!(code(&o), 0);
    let o = leafvit(&["explain", s(&f.image), "-w", s(&f.weights), "--stage", "top", "--out", s(&out)]);
    assert_eq!(code(&o), 8);
}
