//! Train/test splitting, one-vs-rest confusion counts and per-emotion scores.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::featurestore::FeatureTable;
use crate::ingest::EmotionLabel;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    /// Rows are split independently; pixels of one image land on both sides.
    #[default]
    Pixel,
    Image,
    Subject,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitSpec {
    pub ratio: f64,
    pub seed: u64,
    pub granularity: Granularity,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            ratio: 0.8,
            seed: 42,
            granularity: Granularity::Pixel,
        }
    }
}

/// Row indices of the training and test sides, each ascending.
pub fn split_indices(table: &FeatureTable, spec: &SplitSpec) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(spec.ratio > 0.0 && spec.ratio < 1.0) {
        return Err(Error::Param(format!("split ratio {} outside (0, 1)", spec.ratio)));
    }
    if table.is_empty() {
        return Err(Error::Param("cannot split an empty table".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = table.n_rows();

    let group_of = |i: usize| -> u32 {
        match spec.granularity {
            Granularity::Pixel => i as u32,
            Granularity::Image => table.image_ids()[i] as u32,
            Granularity::Subject => table.subjects()[i] as u32,
        }
    };

    let (mut train, mut test) = match spec.granularity {
        Granularity::Pixel => {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(&mut rng);
            let k = (spec.ratio * n as f64).round() as usize;
            let test = idx.split_off(k);
            (idx, test)
        }
        Granularity::Image | Granularity::Subject => {
            let groups: BTreeSet<u32> = (0..n).map(group_of).collect();
            let mut groups: Vec<u32> = groups.into_iter().collect();
            groups.shuffle(&mut rng);
            let k = (spec.ratio * groups.len() as f64).round() as usize;
            let train_groups: BTreeSet<u32> = groups[..k].iter().copied().collect();
            (0..n).partition(|&i| train_groups.contains(&group_of(i)))
        }
    };
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

pub fn split_domain(table: &FeatureTable, spec: &SplitSpec) -> Result<(FeatureTable, FeatureTable)> {
    let (train, test) = split_indices(table, spec)?;
    Ok((table.select(&train), table.select(&test)))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl LabelCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }
}

/// One-vs-rest counts for every emotion, indexed by [`EmotionLabel::index`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub total: u64,
    pub per_label: [LabelCounts; 5],
}

impl ConfusionCounts {
    pub fn get(&self, label: EmotionLabel) -> LabelCounts {
        self.per_label[label.index()]
    }
}

pub fn confusion(preds: &[EmotionLabel], truth: &[EmotionLabel]) -> Result<ConfusionCounts> {
    if preds.len() != truth.len() {
        return Err(Error::Param(format!(
            "{} predictions for {} ground-truth labels",
            preds.len(),
            truth.len()
        )));
    }
    let mut per_label = [LabelCounts::default(); 5];
    for (&p, &t) in preds.iter().zip(truth) {
        for (label, c) in EmotionLabel::ALL.iter().zip(per_label.iter_mut()) {
            match (p == *label, t == *label) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
    }
    Ok(ConfusionCounts {
        total: preds.len() as u64,
        per_label,
    })
}

/// Majority vote of pixel predictions per image; ties go to the smaller label id.
/// Returns `(image predictions, image truth)` ordered by image id.
pub fn aggregate_by_image(
    preds: &[EmotionLabel],
    table: &FeatureTable,
) -> Result<(Vec<EmotionLabel>, Vec<EmotionLabel>)> {
    if preds.len() != table.n_rows() {
        return Err(Error::Param("prediction count does not match table rows".into()));
    }
    let mut votes: std::collections::BTreeMap<u16, ([u64; 5], EmotionLabel)> = Default::default();
    for (i, p) in preds.iter().enumerate() {
        let entry = votes
            .entry(table.image_ids()[i])
            .or_insert(([0; 5], table.labels()[i]));
        entry.0[p.index()] += 1;
    }
    Ok(votes
        .into_values()
        .map(|(v, truth)| (EmotionLabel::ALL[argmax_first(&v)], truth))
        .unzip())
}

fn argmax_first(v: &[u64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// Naming convention for the two class-conditional rates.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricMode {
    /// "sensitivity" = TN/(TN+FP), "specificity" = TP/(TP+FN), as printed in
    /// the original score tables.
    #[default]
    Paper,
    /// sensitivity = TP/(TP+FN), specificity = TN/(TN+FP).
    Standard,
}

impl MetricMode {
    pub fn name(self) -> &'static str {
        match self {
            MetricMode::Paper => "paper",
            MetricMode::Standard => "standard",
        }
    }
}

/// `None` marks an undefined score (zero denominator).
pub type Score = Option<f64>;

fn ratio(num: u64, den: u64) -> Score {
    (den > 0).then(|| num as f64 / den as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelMetrics {
    pub emotion: EmotionLabel,
    pub accuracy: Score,
    pub precision: Score,
    pub specificity: Score,
    pub sensitivity: Score,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    pub mode: MetricMode,
    pub rows: Vec<LabelMetrics>,
}

pub fn label_metrics(label: EmotionLabel, c: &LabelCounts, mode: MetricMode) -> LabelMetrics {
    let accuracy = ratio(c.tp + c.tn, c.total());
    let precision = ratio(c.tp, c.tp + c.fp);
    let true_negative_rate = ratio(c.tn, c.tn + c.fp);
    let true_positive_rate = ratio(c.tp, c.tp + c.fn_);
    let (sensitivity, specificity) = match mode {
        MetricMode::Paper => (true_negative_rate, true_positive_rate),
        MetricMode::Standard => (true_positive_rate, true_negative_rate),
    };
    LabelMetrics {
        emotion: label,
        accuracy,
        precision,
        specificity,
        sensitivity,
    }
}

pub fn metrics(c: &ConfusionCounts, mode: MetricMode) -> MetricsReport {
    MetricsReport {
        model: None,
        mode,
        rows: EmotionLabel::ALL
            .iter()
            .map(|&l| label_metrics(l, &c.get(l), mode))
            .collect(),
    }
}

impl MetricsReport {
    pub fn with_model(mut self, model: impl Into<String>) -> Self {
        self.model = Some(model.into());
        self
    }

    /// Mean of the defined per-emotion precisions.
    pub fn mean_precision(&self) -> Option<f64> {
        let defined: Vec<f64> = self.rows.iter().filter_map(|r| r.precision).collect();
        (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Text,
    Csv,
    Json,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "text" | "text-table" => Ok(ReportFormat::Text),
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(Error::Param(format!("unknown report format `{other}`"))),
        }
    }
}

pub const CSV_HEADER: &str = "emotion,accuracy,precision,specificity,sensitivity,mode";

fn percent(s: Score) -> Option<String> {
    s.map(|v| format!("{:.2}", v * 100.0))
}

fn capitalized(label: EmotionLabel) -> String {
    let name = label.name();
    name[..1].to_uppercase() + &name[1..]
}

/// Renders reports as a text table, CSV or JSON. Scores are percentages with
/// two decimals; undefined scores render as "—" (text), an empty field
/// (CSV) or `null` (JSON).
pub fn report(reports: &[MetricsReport], format: ReportFormat) -> String {
    let mut out = String::new();
    match format {
        ReportFormat::Text => {
            for (i, r) in reports.iter().enumerate() {
                if i > 0 {
                    out.push('\n');
                }
                let title = r.model.as_deref().unwrap_or("model");
                let _ = writeln!(out, "{title} (metrics: {})", r.mode.name());
                let _ = writeln!(
                    out,
                    "{:<10} {:>9} {:>10} {:>12} {:>12}",
                    "Emotions", "Accuracy", "Precision", "Specificity", "Sensitivity"
                );
                for row in &r.rows {
                    let cell = |s: Score| percent(s).unwrap_or_else(|| "—".to_string());
                    let _ = writeln!(
                        out,
                        "{:<10} {:>9} {:>10} {:>12} {:>12}",
                        capitalized(row.emotion),
                        cell(row.accuracy),
                        cell(row.precision),
                        cell(row.specificity),
                        cell(row.sensitivity)
                    );
                }
            }
        }
        ReportFormat::Csv => {
            out.push_str(CSV_HEADER);
            out.push('\n');
            for r in reports {
                for row in &r.rows {
                    let cell = |s: Score| percent(s).unwrap_or_default();
                    let _ = writeln!(
                        out,
                        "{},{},{},{},{},{}",
                        row.emotion.name(),
                        cell(row.accuracy),
                        cell(row.precision),
                        cell(row.specificity),
                        cell(row.sensitivity),
                        r.mode.name()
                    );
                }
            }
        }
        ReportFormat::Json => {
            let num = |s: Score| -> serde_json::Value {
                match percent(s) {
                    Some(p) => p.parse::<f64>().map(Into::into).unwrap_or_default(),
                    None => serde_json::Value::Null,
                }
            };
            let rows: Vec<serde_json::Value> = reports
                .iter()
                .flat_map(|r| {
                    r.rows.iter().map(move |row| {
                        let mut v = serde_json::json!({
                            "emotion": row.emotion.name(),
                            "accuracy": num(row.accuracy),
                            "precision": num(row.precision),
                            "specificity": num(row.specificity),
                            "sensitivity": num(row.sensitivity),
                            "mode": r.mode.name(),
                        });
                        if let Some(m) = &r.model {
                            v["model"] = m.clone().into();
                        }
                        v
                    })
                })
                .collect();
            out = serde_json::to_string_pretty(&rows).expect("json values serialize");
            out.push('\n');
        }
    }
    out
}

/// One parsed line of the CSV report; scores are percentages.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvRow {
    pub emotion: EmotionLabel,
    pub accuracy: Score,
    pub precision: Score,
    pub specificity: Score,
    pub sensitivity: Score,
    pub mode: MetricMode,
}

pub fn parse_csv_report(text: &str) -> Result<Vec<CsvRow>> {
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err(Error::Param("missing CSV report header".into()));
    }
    let score = |f: &str| -> Result<Score> {
        if f.is_empty() {
            Ok(None)
        } else {
            f.parse::<f64>()
                .map(Some)
                .map_err(|e| Error::Param(format!("bad score `{f}`: {e}")))
        }
    };
    lines
        .filter(|l| !l.is_empty())
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 6 {
                return Err(Error::Param(format!("malformed CSV line `{line}`")));
            }
            let mode = match f[5] {
                "paper" => MetricMode::Paper,
                "standard" => MetricMode::Standard,
                other => return Err(Error::Param(format!("unknown mode `{other}`"))),
            };
            Ok(CsvRow {
                emotion: f[0].parse()?,
                accuracy: score(f[1])?,
                precision: score(f[2])?,
                specificity: score(f[3])?,
                sensitivity: score(f[4])?,
                mode,
            })
        })
        .collect()
}
