//! End-to-end inference: weights + image → probabilities, and directory evaluation.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{metrics, ClassReport, ConfusionMatrix};
use crate::model::{forward, ForwardOutput, ModelGraph};
use crate::preprocess::{clahe, load_image, random_augment, to_input_tensor, AugmentConfig, ImageBuffer};
use crate::rng::SplitMix64;
use crate::tensor::Tensor;
use crate::weights::{validate_against, InferenceMetadata, WeightStore};

/// A validated model ready to run.
#[derive(Debug, Clone)]
pub struct Engine {
    graph: ModelGraph,
    weights: WeightStore<f32>,
    meta: InferenceMetadata,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Prediction {
    /// Class-ordered probabilities.
    pub probabilities: Vec<f32>,
    /// `(label, probability)`, highest first.
    pub ranked: Vec<(String, f32)>,
}

impl Prediction {
    pub fn top1(&self) -> (&str, f32) {
        let (l, p) = &self.ranked[0];
        (l, *p)
    }

    /// Class index of the highest probability; ties go to the lower index.
    pub fn top1_index(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.probabilities.iter().enumerate() {
            if p > self.probabilities[best] {
                best = i;
            }
        }
        best
    }
}

/// Raw class scores for one image, as exchanged with the weight exporter:
/// `{"labels": [...], "logits": [...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogitsRecord {
    pub labels: Vec<String>,
    pub logits: Vec<f32>,
}

impl LogitsRecord {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("logits serialize")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let r: Self = serde_json::from_str(s).map_err(|e| Error::Format(format!("logits json: {e}")))?;
        if r.labels.len() != r.logits.len() {
            return Err(Error::Format(format!(
                "logits json has {} labels and {} logits",
                r.labels.len(),
                r.logits.len()
            )));
        }
        Ok(r)
    }

    /// Largest absolute difference against `other`, after checking the labels agree.
    pub fn max_abs_diff(&self, other: &Self) -> Result<f32> {
        if self.labels != other.labels {
            return Err(Error::invalid("logits", "label lists differ"));
        }
        Ok(self
            .logits
            .iter()
            .zip(&other.logits)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f32::max))
    }
}

/// Test-time augmentation settings. `tta = 0` means a single plain pass.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[derive(Default)]
pub struct ClassifyOptions {
    pub tta: usize,
    pub seed: u64,
    pub augment: AugmentConfig,
}


impl Engine {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_store(WeightStore::load(path)?)
    }

    /// Builds the graph named in the metadata and checks the store against it.
    pub fn from_store(weights: WeightStore<f32>) -> Result<Self> {
        let meta = weights.inference_metadata()?;
        let graph = meta.model.build(meta.num_classes)?;
        if !graph.executable {
            return Err(Error::Metadata(format!("model `{}` has no numeric forward pass", meta.model)));
        }
        validate_against(&weights, &graph).into_result(&graph)?;
        Ok(Self { graph, weights, meta })
    }

    pub fn graph(&self) -> &ModelGraph {
        &self.graph
    }

    pub fn metadata(&self) -> &InferenceMetadata {
        &self.meta
    }

    pub fn labels(&self) -> &[String] {
        &self.meta.class_labels
    }

    /// Resize and normalize with the checkpoint's mean and std.
    pub fn input_tensor(&self, img: &ImageBuffer) -> Result<Tensor<f32>> {
        let mean = self.meta.norm_mean.map(f64::from);
        let std = self.meta.norm_std.map(f64::from);
        to_input_tensor(img, mean, std)
    }

    /// CLAHE with the augmentation defaults, then resize and normalize.
    pub fn plain_input(&self, img: &ImageBuffer, cfg: &AugmentConfig) -> Result<Tensor<f32>> {
        let enhanced = if cfg.clahe {
            clahe(img, cfg.clahe_clip, cfg.clahe_grid)?
        } else {
            img.clone()
        };
        self.input_tensor(&enhanced)
    }

    pub fn run(&self, input: &Tensor<f32>) -> Result<ForwardOutput<f32>> {
        forward(&self.graph, &self.weights, input)
    }

    /// Plain-pass logits with the class labels.
    pub fn logits(&self, img: &ImageBuffer) -> Result<LogitsRecord> {
        let out = self.run(&self.plain_input(img, &AugmentConfig::default())?)?;
        Ok(LogitsRecord {
            labels: self.meta.class_labels.clone(),
            logits: out.logits.0,
        })
    }

    /// Single deterministic pass, or the mean softmax over `tta` seeded variants.
    pub fn classify(&self, img: &ImageBuffer, opts: &ClassifyOptions) -> Result<Prediction> {
        opts.augment.validate()?;
        let probs = if opts.tta == 0 {
            let out = self.run(&self.plain_input(img, &opts.augment)?)?;
            out.logits.softmax().0
        } else {
            let variants = augment_variants(img, &opts.augment, opts.seed, opts.tta)?;
            let per_variant: Vec<Vec<f32>> = variants
                .par_iter()
                .map(|v| Ok(self.run(&self.input_tensor(v)?)?.logits.softmax().0))
                .collect::<Result<_>>()?;
            let mut mean = vec![0.0f64; self.meta.num_classes];
            for p in &per_variant {
                for (m, v) in mean.iter_mut().zip(p) {
                    *m += *v as f64;
                }
            }
            mean.iter().map(|m| (m / opts.tta as f64) as f32).collect()
        };
        Ok(self.prediction(probs))
    }

    fn prediction(&self, probabilities: Vec<f32>) -> Prediction {
        let mut order: Vec<usize> = (0..probabilities.len()).collect();
        order.sort_by(|&a, &b| probabilities[b].total_cmp(&probabilities[a]).then(a.cmp(&b)));
        Prediction {
            ranked: order
                .into_iter()
                .map(|i| (self.meta.class_labels[i].clone(), probabilities[i]))
                .collect(),
            probabilities,
        }
    }
}

/// `n` augmented variants; variant `i` uses the `i`-th stream split from `seed`.
pub fn augment_variants(img: &ImageBuffer, cfg: &AugmentConfig, seed: u64, n: usize) -> Result<Vec<ImageBuffer>> {
    let mut root = SplitMix64::new(seed);
    let streams: Vec<SplitMix64> = (0..n).map(|_| root.split()).collect();
    streams
        .into_par_iter()
        .map(|mut rng| random_augment(img, cfg, &mut rng))
        .collect()
}

const IMAGE_EXTENSIONS: [&str; 3] = ["png", "jpg", "jpeg"];

fn canonical_label(s: &str) -> String {
    s.trim().to_lowercase().replace(['_', '-'], " ")
}

/// One labelled image found under a dataset directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Sample {
    pub path: PathBuf,
    pub class: usize,
}

fn list_dir(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(format!("reading {}", dir.display()), e))?
        .map(|e| e.map(|e| e.path()).map_err(|e| Error::io(format!("reading {}", dir.display()), e)))
        .collect::<Result<_>>()?;
    out.sort();
    Ok(out)
}

/// Collects images from one subdirectory per class, in sorted path order.
///
/// Directory names are matched to `labels` ignoring case and treating `_`,
/// `-` and spaces alike. Unknown directories and empty class directories are
/// errors.
pub fn discover_samples(dir: &Path, labels: &[String]) -> Result<Vec<Sample>> {
    let wanted: Vec<String> = labels.iter().map(|l| canonical_label(l)).collect();
    let mut samples = Vec::new();
    let mut found_any = false;
    for sub in list_dir(dir)?.into_iter().filter(|p| p.is_dir()) {
        found_any = true;
        let name = sub.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        let class = wanted.iter().position(|w| *w == canonical_label(&name)).ok_or_else(|| {
            Error::Dataset(format!(
                "directory `{name}` does not match any class label ({})",
                labels.join(", ")
            ))
        })?;
        let images: Vec<PathBuf> = list_dir(&sub)?
            .into_iter()
            .filter(|p| {
                p.is_file()
                    && p.extension()
                        .and_then(|e| e.to_str())
                        .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_lowercase().as_str()))
            })
            .collect();
        if images.is_empty() {
            return Err(Error::Dataset(format!("class directory `{name}` contains no images")));
        }
        samples.extend(images.into_iter().map(|path| Sample { path, class }));
    }
    if !found_any {
        return Err(Error::Dataset(format!("{} has no class subdirectories", dir.display())));
    }
    Ok(samples)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleResult {
    pub path: PathBuf,
    pub truth: usize,
    pub predicted: usize,
    pub confidence: f32,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Evaluation {
    pub labels: Vec<String>,
    pub confusion: ConfusionMatrix,
    pub report: ClassReport,
    pub samples: Vec<SampleResult>,
}

/// Classifies every sample (concurrently) and tallies results in path order.
pub fn evaluate(engine: &Engine, samples: &[Sample], opts: &ClassifyOptions) -> Result<Evaluation> {
    let results: Vec<SampleResult> = samples
        .par_iter()
        .map(|s| {
            let img = load_image(&s.path)?;
            let pred = engine.classify(&img, opts)?;
            let predicted = pred.top1_index();
            Ok(SampleResult {
                path: s.path.clone(),
                truth: s.class,
                predicted,
                confidence: pred.probabilities[predicted],
            })
        })
        .collect::<Result<_>>()?;
    evaluation_from_results(engine.labels(), results)
}

pub fn evaluation_from_results(labels: &[String], samples: Vec<SampleResult>) -> Result<Evaluation> {
    let confusion = ConfusionMatrix::from_predictions(labels.len(), samples.iter().map(|s| (s.truth, s.predicted)))?;
    let report = metrics(&confusion, labels)?;
    Ok(Evaluation {
        labels: labels.to_vec(),
        confusion,
        report,
        samples,
    })
}

impl Evaluation {
    /// Writes `cm.csv`, `report.csv` and `report.txt` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
        let files = [
            ("cm.csv", self.confusion.to_csv(&self.labels)),
            ("report.csv", self.report.to_csv()),
            ("report.txt", self.report.to_text()),
        ];
        files
            .into_iter()
            .map(|(name, body)| {
                let p = dir.join(name);
                fs::write(&p, body).map_err(|e| Error::io(format!("writing {}", p.display()), e))?;
                Ok(p)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels() -> Vec<String> {
        vec!["Die Back".into(), "Gall Midge".into()]
    }

    #[test]
    fn logits_json_round_trip() {
        let r = LogitsRecord {
            labels: labels(),
            logits: vec![1.5, -0.25],
        };
        let back = LogitsRecord::from_json(&r.to_json()).unwrap();
        assert_eq!(back, r);
        assert_eq!(back.max_abs_diff(&r).unwrap(), 0.0);
        assert!(LogitsRecord::from_json(r#"{"labels":["a"],"logits":[1,2]}"#).is_err());
        assert!(LogitsRecord::from_json("[]").is_err());
    }

    #[test]
    fn label_matching_is_lenient() {
        assert_eq!(canonical_label("Gall_Midge"), canonical_label("gall midge"));
        assert_eq!(canonical_label("die-back"), canonical_label("Die Back"));
    }

    #[test]
    fn discovery_errors() {
        let dir = tempfile::tempdir().unwrap();
        let png = |p: &Path| {
            crate::preprocess::save_png(&ImageBuffer::filled(4, 4, [1, 2, 3]).unwrap(), p).unwrap();
        };
        fs::create_dir(dir.path().join("die_back")).unwrap();
        png(&dir.path().join("die_back/b.png"));
        png(&dir.path().join("die_back/a.png"));
        fs::write(dir.path().join("die_back/notes.txt"), "x").unwrap();
        let s = discover_samples(dir.path(), &labels()).unwrap();
        assert_eq!(s.len(), 2);
        assert!(s[0].path.ends_with("a.png"));

        fs::create_dir(dir.path().join("Gall Midge")).unwrap();
        match discover_samples(dir.path(), &labels()) {
            Err(Error::Dataset(m)) => assert!(m.contains("Gall Midge")),
            other => panic!("unexpected {other:?}"),
        }
        png(&dir.path().join("Gall Midge/x.jpg.png"));
        assert_eq!(discover_samples(dir.path(), &labels()).unwrap().len(), 3);

        fs::create_dir(dir.path().join("Rust")).unwrap();
        assert!(matches!(discover_samples(dir.path(), &labels()), Err(Error::Dataset(_))));
    }

    #[test]
    fn variants_are_reproducible() {
        let img = ImageBuffer::from_fn(32, 32, |y, x| [(x * 8) as u8, (y * 8) as u8, 100]).unwrap();
        let cfg = AugmentConfig::default();
        let a = augment_variants(&img, &cfg, 7, 3).unwrap();
        let b = augment_variants(&img, &cfg, 7, 3).unwrap();
        assert_eq!(a, b);
        assert_ne!(a[0], a[1]);
    }
}
