use std::fs;
use std::path::Path;
use std::time::Instant;

use leafvit_core::explain::{attention_rollout, StageSelector};
use leafvit_core::metrics::kfold_split;
use leafvit_core::model::ModelName;
use leafvit_core::pipeline::{augment_variants, discover_samples, evaluate as run_evaluation, ClassifyOptions, Engine};
use leafvit_core::preprocess::{load_image, save_png, AugmentConfig};
use leafvit_core::profiler::{compare_with_published, comparison_text, profile as cost_report};
use leafvit_core::{Error, Result};
use serde_json::json;

use crate::{ClassifyArgs, EvaluateArgs, ExplainArgs, InferenceArgs, PreviewArgs, ProfileArgs, SplitArgs};

fn bad_arg(op: &'static str, detail: impl Into<String>) -> Error {
    Error::InvalidArgument {
        op,
        detail: detail.into(),
    }
}

fn options(a: &InferenceArgs) -> ClassifyOptions {
    ClassifyOptions {
        tta: a.tta,
        seed: a.seed,
        augment: AugmentConfig {
            seed: a.seed,
            ..AugmentConfig::default()
        },
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io {
        context: format!("creating {}", dir.display()),
        source: e,
    })
}

pub fn classify(a: &ClassifyArgs, as_json: bool) -> Result<()> {
    let engine = Engine::load(&a.inference.weights)?;
    let k = engine.labels().len();
    if a.topk == 0 || a.topk > k {
        return Err(bad_arg("classify", format!("--topk must be in 1..={k}, got {}", a.topk)));
    }
    let opts = options(&a.inference);
    if let Some(dir) = &a.logits_dir {
        create_dir(dir)?;
    }
    let mut results = Vec::new();
    for path in &a.images {
        let img = load_image(path)?;
        let start = Instant::now();
        let pred = engine.classify(&img, &opts)?;
        let ms = start.elapsed().as_secs_f64() * 1e3;
        if let Some(dir) = &a.logits_dir {
            let stem = path.file_stem().map_or("image".into(), |s| s.to_string_lossy());
            let out = dir.join(format!("{stem}.json"));
            fs::write(&out, engine.logits(&img)?.to_json()).map_err(|e| Error::Io {
                context: format!("writing {}", out.display()),
                source: e,
            })?;
        }
        if as_json {
            let top: Vec<_> = pred.ranked[..a.topk]
                .iter()
                .map(|(l, p)| json!({ "label": l, "probability": p }))
                .collect();
            let mut entry = json!({
                "path": path,
                "label": pred.top1().0,
                "top": top,
                "probabilities": pred.probabilities,
            });
            if a.inference.timing {
                entry["latency_ms"] = json!(ms);
            }
            results.push(entry);
        } else {
            let (label, p) = pred.top1();
            println!("{}: {label} ({p:.4})", path.display());
            for (i, (l, p)) in pred.ranked[..a.topk].iter().enumerate() {
                println!("  {}. {l:<20} {p:.4}", i + 1);
            }
            if a.inference.timing {
                println!("  latency: {ms:.1} ms");
            }
        }
    }
    if as_json {
        let doc = json!({
            "labels": engine.labels(),
            "tta": opts.tta,
            "seed": opts.seed,
            "results": results,
        });
        println!("{}", serde_json::to_string_pretty(&doc).expect("json values serialize"));
    }
    Ok(())
}

pub fn evaluate(a: &EvaluateArgs, as_json: bool) -> Result<()> {
    let engine = Engine::load(&a.inference.weights)?;
    let samples = discover_samples(&a.dataset, engine.labels())?;
    let start = Instant::now();
    let eval = run_evaluation(&engine, &samples, &options(&a.inference))?;
    let elapsed = start.elapsed().as_secs_f64();
    let files = eval.write(&a.out)?;
    if as_json {
        let mut doc = json!({
            "files": files,
            "confusion": (0..eval.labels.len())
                .map(|t| (0..eval.labels.len()).map(|p| eval.confusion.get(t, p)).collect::<Vec<_>>())
                .collect::<Vec<_>>(),
            "report": eval.report,
        });
        if a.inference.timing {
            doc["latency_ms_per_image"] = json!(1e3 * elapsed / samples.len() as f64);
        }
        println!("{}", serde_json::to_string_pretty(&doc).expect("json values serialize"));
    } else {
        print!("{}", eval.report.to_text());
        for f in &files {
            println!("wrote {}", f.display());
        }
        if a.inference.timing {
            println!(
                "{} images in {elapsed:.2} s ({:.1} ms/image)",
                samples.len(),
                1e3 * elapsed / samples.len() as f64
            );
        }
    }
    Ok(())
}

pub fn profile(a: &ProfileArgs, as_json: bool) -> Result<()> {
    let models: Vec<ModelName> = if a.model == "all" {
        ModelName::ALL.to_vec()
    } else {
        vec![a.model.parse()?]
    };
    let comparable = a.classes == 8 && a.input_hw == 224;
    let mut docs = Vec::new();
    for (i, m) in models.iter().enumerate() {
        let graph = m.build(a.classes)?;
        let report = cost_report(&graph, a.input_hw)?;
        let checks = if comparable { compare_with_published(&report) } else { Vec::new() };
        if as_json {
            docs.push(json!({ "report": report, "published_comparison": checks }));
            continue;
        }
        if i > 0 {
            println!();
        }
        if a.csv {
            print!("{}", report.to_csv());
        } else {
            print!("{}", report.to_text());
            if comparable {
                println!();
                print!("{}", comparison_text(&checks));
            }
        }
    }
    if as_json {
        println!("{}", serde_json::to_string_pretty(&json!({ "models": docs })).expect("json values serialize"));
    }
    Ok(())
}

fn parse_counts(s: &str) -> Result<Vec<usize>> {
    let bad = || bad_arg("split", format!("cannot parse counts `{s}`"));
    if let Some((n, k)) = s.split_once('x') {
        let n: usize = n.trim().parse().map_err(|_| bad())?;
        let k: usize = k.trim().parse().map_err(|_| bad())?;
        return Ok(vec![n; k]);
    }
    s.split(',').map(|v| v.trim().parse().map_err(|_| bad())).collect()
}

pub fn split(a: &SplitArgs, as_json: bool) -> Result<()> {
    let counts = parse_counts(&a.counts)?;
    let plan = kfold_split(&counts, a.folds, a.seed)?;
    if let Some(out) = &a.out {
        let body = serde_json::to_string_pretty(&plan).expect("plans serialize");
        fs::write(out, body).map_err(|e| Error::Io {
            context: format!("writing {}", out.display()),
            source: e,
        })?;
    }
    if as_json {
        println!("{}", serde_json::to_string_pretty(&plan).expect("plans serialize"));
        return Ok(());
    }
    println!("{} classes, {} folds, seed {}", counts.len(), a.folds, a.seed);
    for (f, fold) in plan.folds.iter().enumerate() {
        let sizes: Vec<String> = fold
            .classes
            .iter()
            .map(|c| format!("{}/{}/{}", c.train.len(), c.val.len(), c.test.len()))
            .collect();
        println!("fold {f}: {}", sizes.join(" "));
    }
    if let Some(out) = &a.out {
        println!("wrote {}", out.display());
    }
    Ok(())
}

pub fn preview(a: &PreviewArgs, as_json: bool) -> Result<()> {
    let img = load_image(&a.image)?;
    let cfg = AugmentConfig {
        seed: a.seed,
        ..AugmentConfig::default()
    };
    let variants = augment_variants(&img, &cfg, a.seed, a.n)?;
    create_dir(&a.out)?;
    let mut written = Vec::new();
    for (i, v) in variants.iter().enumerate() {
        let p = a.out.join(format!("augment_{i:03}.png"));
        save_png(v, &p)?;
        written.push(json!({ "path": p, "checksum": format!("{:08x}", v.checksum()) }));
        if !as_json {
            println!("wrote {} (crc {:08x})", p.display(), v.checksum());
        }
    }
    if as_json {
        let doc = json!({ "seed": a.seed, "config": cfg, "files": written });
        println!("{}", serde_json::to_string_pretty(&doc).expect("json values serialize"));
    }
    Ok(())
}

pub fn explain(a: &ExplainArgs, as_json: bool) -> Result<()> {
    let stage: StageSelector = a.stage.parse()?;
    let engine = Engine::load(&a.weights)?;
    let img = load_image(&a.image)?;
    let out = engine.run(&engine.plain_input(&img, &AugmentConfig::default())?)?;
    let map = attention_rollout(&out.trace, stage)?;
    let probs = out.logits.softmax();
    let top = probs.argmax();

    create_dir(&a.out)?;
    let pgm = a.out.join("saliency.pgm");
    let overlay = a.out.join("overlay.png");
    map.write_pgm(&pgm)?;
    save_png(&map.side_by_side(&img)?, &overlay)?;

    let block = &out.trace.blocks[map.block];
    if as_json {
        let doc = json!({
            "label": engine.labels()[top],
            "probability": probs.0[top],
            "block": map.block,
            "block_name": block.name,
            "grid": [map.grid.0, map.grid.1],
            "checksum": format!("{:08x}", map.checksum()),
            "files": [pgm, overlay],
        });
        println!("{}", serde_json::to_string_pretty(&doc).expect("json values serialize"));
    } else {
        println!("predicted {} ({:.4})", engine.labels()[top], probs.0[top]);
        println!(
            "rollout over block {} (`{}`, {}x{} patch grid)",
            map.block, block.name, map.grid.0, map.grid.1
        );
        println!("wrote {}", pgm.display());
        println!("wrote {}", overlay.display());
    }
    Ok(())
}
