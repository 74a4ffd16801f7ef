//! End-to-end stages over an output directory.
//!
//! Artifacts (all under `output_dir`):
//!
//! | stage     | writes                                        |
//! |-----------|-----------------------------------------------|
//! | `ingest`  | `manifest.json`                               |
//! | `kernels` | `kernels.json`, optional `kernels/*.pgm`      |
//! | `extract` | `features.bin`, `features.json`, opt. CSV     |
//! | `train`   | `model-<rf|ann>.bin`                          |
//! | `eval`    | `metrics-<rf|ann>.json`, `metrics-<rf|ann>.txt` |
//! | `report`  | `report.txt`, `report.csv`, `report.json`     |
//!
//! Every JSON artifact and every model carries the config hash; the
//! extraction-stage artifacts also carry the narrower extraction hash.

use std::fs::{self, File, OpenOptions};
use std::path::{Path, PathBuf};

use log::{info, warn};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::evaluation::{
    aggregate_by_image, confusion, metrics, report, split_domain, ConfusionCounts, MetricMode,
    MetricsReport, ReportFormat, SplitSpec,
};
use crate::featurestore::{build_feature_table, stratified_subsample, FeatureTable};
use crate::ingest::{scan_corpus, DatasetManifest, EmotionLabel, STANDARD_SIZE};
use crate::learners::{train_forest, train_network, MlpConfig, ModelKind, RfConfig, TrainedModel};
use crate::spectral::{make_kernels, write_pgm, FeatureMode, KernelParams};
use crate::synth::{generate, SynthSpec};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const KERNELS_FILE: &str = "kernels.json";
pub const FEATURES_FILE: &str = "features.bin";
pub const FEATURES_META_FILE: &str = "features.json";
const LOCK_FILE: &str = ".emofreq.lock";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelChoice {
    #[default]
    Rf,
    Ann,
}

impl ModelChoice {
    pub fn kind(self) -> ModelKind {
        match self {
            ModelChoice::Rf => ModelKind::Forest,
            ModelChoice::Ann => ModelKind::Network,
        }
    }

    pub fn name(self) -> &'static str {
        self.kind().short_name()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub data_dir: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub image_size: usize,
    pub kernels: KernelParams,
    pub feature_mode: FeatureMode,
    pub split: SplitSpec,
    /// Stratified share of feature rows kept before splitting.
    pub row_fraction: f64,
    pub model: ModelChoice,
    pub rf: RfConfig,
    pub mlp: MlpConfig,
    pub metric_mode: MetricMode,
    /// Score per-image majority votes instead of pixels.
    pub per_image: bool,
    pub synth: SynthSpec,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            data_dir: None,
            output_dir: PathBuf::from("out"),
            image_size: STANDARD_SIZE,
            kernels: KernelParams::default(),
            feature_mode: FeatureMode::Real,
            split: SplitSpec::default(),
            row_fraction: 1.0,
            model: ModelChoice::Rf,
            rf: RfConfig::default(),
            mlp: MlpConfig::default(),
            metric_mode: MetricMode::Paper,
            per_image: false,
            synth: SynthSpec::default(),
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
    }

    /// SHA-256 over the settings that determine the feature store.
    pub fn extraction_hash(&self) -> String {
        digest(&self.extraction_scope())
    }

    /// SHA-256 over the settings that determine the feature store and the
    /// train/test partition. Learner and scoring settings are excluded so
    /// forest and network results over the same domain share a hash.
    pub fn hash(&self) -> String {
        let mut scope = self.extraction_scope();
        scope["split"] = serde_json::json!(self.split);
        scope["row_fraction"] = serde_json::json!(self.row_fraction);
        digest(&scope)
    }

    fn extraction_scope(&self) -> serde_json::Value {
        serde_json::json!({
            "data_dir": self.data_dir,
            "image_size": self.image_size,
            "kernels": self.kernels,
            "feature_mode": self.feature_mode,
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.output_dir.join(name)
    }

    pub fn model_path(&self, model: ModelChoice) -> PathBuf {
        self.path(&format!("model-{}.bin", model.name()))
    }

    pub fn metrics_path(&self, model: ModelChoice) -> PathBuf {
        self.path(&format!("metrics-{}.json", model.name()))
    }

    fn data_dir(&self) -> Result<&Path> {
        self.data_dir
            .as_deref()
            .ok_or_else(|| Error::Param("no data directory configured (use --data-dir)".into()))
    }
}

fn digest(scope: &serde_json::Value) -> String {
    hex::encode(Sha256::digest(scope.to_string().as_bytes()))
}

/// Exclusive lock on an output directory, released on drop.
pub struct DirLock {
    path: PathBuf,
    _file: File,
}

impl DirLock {
    pub fn acquire(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(LOCK_FILE);
        let file = OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&path)
            .map_err(|e| match e.kind() {
                std::io::ErrorKind::AlreadyExists => Error::Locked(path.clone()),
                _ => Error::io(&path, e),
            })?;
        Ok(Self { path, _file: file })
    }
}

impl Drop for DirLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

#[derive(Serialize, Deserialize)]
struct Stamped<T> {
    config_hash: String,
    extraction_hash: String,
    config: PipelineConfig,
    #[serde(flatten)]
    body: T,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn require(path: PathBuf, step: &'static str) -> Result<PathBuf> {
    if path.exists() {
        Ok(path)
    } else {
        Err(Error::MissingArtifact { step, path })
    }
}

fn read_extraction_stamp(path: &Path) -> Option<String> {
    #[derive(Deserialize)]
    struct Hash {
        extraction_hash: String,
    }
    let text = fs::read_to_string(path).ok()?;
    serde_json::from_str::<Hash>(&text).ok().map(|h| h.extraction_hash)
}

fn check_hash(expected: String, found: Option<&str>, what: &Path) {
    if found != Some(expected.as_str()) {
        warn!(
            "{} was produced under a different configuration ({} vs {expected})",
            what.display(),
            found.unwrap_or("none")
        );
    }
}

/// Writes the synthetic corpus into the configured data directory.
pub fn run_synth(cfg: &PipelineConfig) -> Result<DatasetManifest> {
    let dir = cfg.data_dir()?;
    let corpus = generate(&cfg.synth)?;
    let manifest = corpus.write(dir)?;
    info!("wrote {} synthetic images to {}", manifest.len(), dir.display());
    Ok(manifest)
}

pub fn run_ingest(cfg: &PipelineConfig) -> Result<DatasetManifest> {
    let _lock = DirLock::acquire(&cfg.output_dir)?;
    let manifest = scan_corpus(cfg.data_dir()?, &EmotionLabel::ALL)?;
    write_json(
        &cfg.path(MANIFEST_FILE),
        &Stamped {
            config_hash: cfg.hash(),
            extraction_hash: cfg.extraction_hash(),
            config: cfg.clone(),
            body: &manifest,
        },
    )?;
    info!("manifest: {} images", manifest.len());
    Ok(manifest)
}

/// Writes the kernel-set JSON and, when `pgm_dir` is given, one mask image
/// per kernel.
pub fn run_kernels(cfg: &PipelineConfig, pgm_dir: Option<&Path>) -> Result<KernelParams> {
    let _lock = DirLock::acquire(&cfg.output_dir)?;
    let dims = (cfg.image_size, cfg.image_size);
    let kernels = make_kernels(&cfg.kernels, dims)?;
    write_json(
        &cfg.path(KERNELS_FILE),
        &Stamped {
            config_hash: cfg.hash(),
            extraction_hash: cfg.extraction_hash(),
            config: cfg.clone(),
            body: &cfg.kernels,
        },
    )?;
    if let Some(dir) = pgm_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for k in &kernels {
            let mask: Vec<f64> = k.mask().into_iter().map(f64::from).collect();
            write_pgm(&dir.join(format!("kernel{:02}.pgm", k.index)), dims.0, dims.1, &mask)?;
        }
    }
    info!("{} kernels, offsets {:?}", kernels.len(), cfg.kernels.offsets());
    Ok(cfg.kernels.clone())
}

pub fn run_extract(cfg: &PipelineConfig, csv: Option<&Path>) -> Result<FeatureTable> {
    let manifest_path = require(cfg.path(MANIFEST_FILE), "ingest")?;
    let kernels_path = require(cfg.path(KERNELS_FILE), "kernels")?;
    let _lock = DirLock::acquire(&cfg.output_dir)?;
    check_hash(cfg.extraction_hash(), read_extraction_stamp(&manifest_path).as_deref(), &manifest_path);
    check_hash(cfg.extraction_hash(), read_extraction_stamp(&kernels_path).as_deref(), &kernels_path);

    let manifest = DatasetManifest::load(&manifest_path)?;
    let params = KernelParams::load(&kernels_path)?;
    let kernels = make_kernels(&params, (cfg.image_size, cfg.image_size))?;
    let table = build_feature_table(&manifest, &kernels, cfg.image_size, cfg.feature_mode)?;
    table.save(&cfg.path(FEATURES_FILE))?;
    write_json(
        &cfg.path(FEATURES_META_FILE),
        &Stamped {
            config_hash: cfg.hash(),
            extraction_hash: cfg.extraction_hash(),
            config: cfg.clone(),
            body: serde_json::json!({
                "n_rows": table.n_rows(),
                "p": table.p(),
                "label_counts": table.label_counts(),
            }),
        },
    )?;
    if let Some(path) = csv {
        table.write_csv(path)?;
    }
    info!("feature table: {} rows x {} features", table.n_rows(), table.p());
    Ok(table)
}

fn load_features(cfg: &PipelineConfig) -> Result<FeatureTable> {
    let path = require(cfg.path(FEATURES_FILE), "extract")?;
    let meta = cfg.path(FEATURES_META_FILE);
    check_hash(cfg.extraction_hash(), read_extraction_stamp(&meta).as_deref(), &meta);
    FeatureTable::load(&path)
}

/// Stratified subsample followed by the train/test split; both are seeded
/// from the split seed so `train` and `eval` see the same partition.
pub fn prepare_domain(cfg: &PipelineConfig, table: &FeatureTable) -> Result<(FeatureTable, FeatureTable)> {
    let sampled = stratified_subsample(table, cfg.row_fraction, cfg.split.seed)?;
    split_domain(&sampled, &cfg.split)
}

pub fn train_model(cfg: &PipelineConfig, train: &FeatureTable) -> Result<TrainedModel> {
    let mut model = match cfg.model {
        ModelChoice::Rf => train_forest(train, &cfg.rf)?,
        ModelChoice::Ann => train_network(train, &cfg.mlp)?,
    };
    model.meta.config_hash = Some(cfg.hash());
    Ok(model)
}

pub fn run_train(cfg: &PipelineConfig) -> Result<TrainedModel> {
    let table = load_features(cfg)?;
    let _lock = DirLock::acquire(&cfg.output_dir)?;
    let (train, _) = prepare_domain(cfg, &table)?;
    info!("training {} on {} rows", cfg.model.kind().display_name(), train.n_rows());
    let model = train_model(cfg, &train)?;
    model.save(&cfg.model_path(cfg.model))?;
    Ok(model)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalRecord {
    pub model: ModelChoice,
    pub test_rows: usize,
    pub counts: ConfusionCounts,
    pub report: MetricsReport,
}

pub fn evaluate(cfg: &PipelineConfig, model: &TrainedModel, test: &FeatureTable) -> Result<(ConfusionCounts, MetricsReport)> {
    let preds = model.predict_table(test)?;
    let counts = if cfg.per_image {
        let (p, t) = aggregate_by_image(&preds.labels, test)?;
        confusion(&p, &t)?
    } else {
        confusion(&preds.labels, test.labels())?
    };
    let report = metrics(&counts, cfg.metric_mode).with_model(model.kind.display_name());
    Ok((counts, report))
}

pub fn run_eval(cfg: &PipelineConfig) -> Result<EvalRecord> {
    let model_path = require(cfg.model_path(cfg.model), "train")?;
    let table = load_features(cfg)?;
    let _lock = DirLock::acquire(&cfg.output_dir)?;
    let model = TrainedModel::load(&model_path)?;
    check_hash(cfg.hash(), model.meta.config_hash.as_deref(), &model_path);

    let (_, test) = prepare_domain(cfg, &table)?;
    let (counts, report_) = evaluate(cfg, &model, &test)?;
    let record = EvalRecord {
        model: cfg.model,
        test_rows: test.n_rows(),
        counts,
        report: report_,
    };
    write_json(
        &cfg.metrics_path(cfg.model),
        &Stamped {
            config_hash: cfg.hash(),
            extraction_hash: cfg.extraction_hash(),
            config: cfg.clone(),
            body: &record,
        },
    )?;
    let table_text = report(std::slice::from_ref(&record.report), ReportFormat::Text);
    let text_path = cfg.path(&format!("metrics-{}.txt", cfg.model.name()));
    fs::write(&text_path, &table_text).map_err(|e| Error::io(&text_path, e))?;
    info!("{}", table_text.trim_end());
    Ok(record)
}

/// Combines metrics files into `report.{txt,csv,json}`. Files produced under
/// different config hashes are refused unless `force` is set.
pub fn run_report(cfg: &PipelineConfig, inputs: &[PathBuf], force: bool) -> Result<Vec<MetricsReport>> {
    let inputs: Vec<PathBuf> = if inputs.is_empty() {
        [ModelChoice::Rf, ModelChoice::Ann]
            .iter()
            .map(|m| cfg.metrics_path(*m))
            .filter(|p| p.exists())
            .collect()
    } else {
        inputs.to_vec()
    };
    if inputs.is_empty() {
        return Err(Error::MissingArtifact {
            step: "eval",
            path: cfg.output_dir.join("metrics-*.json"),
        });
    }
    let _lock = DirLock::acquire(&cfg.output_dir)?;
    let mut reports = Vec::new();
    let mut first_hash: Option<(String, PathBuf)> = None;
    for path in &inputs {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let stamped: Stamped<EvalRecord> =
            serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
        match &first_hash {
            None => first_hash = Some((stamped.config_hash.clone(), path.clone())),
            Some((h, p)) if *h != stamped.config_hash && !force => {
                return Err(Error::ConfigMismatch(format!(
                    "{} and {} come from different configurations (use --force to combine)",
                    p.display(),
                    path.display()
                )));
            }
            _ => {}
        }
        reports.push(stamped.body.report);
    }
    for (format, ext) in [
        (ReportFormat::Text, "txt"),
        (ReportFormat::Csv, "csv"),
        (ReportFormat::Json, "json"),
    ] {
        let path = cfg.path(&format!("report.{ext}"));
        fs::write(&path, report(&reports, format)).map_err(|e| Error::io(&path, e))?;
    }
    Ok(reports)
}

pub fn run_describe(cfg: &PipelineConfig) -> Result<serde_json::Value> {
    let path = require(cfg.model_path(cfg.model), "train")?;
    Ok(TrainedModel::load(&path)?.describe())
}
