//! Classifiers over the per-pixel feature table.
//!
//! Both learners produce a [`TrainedModel`], which predicts labels together
//! with per-class scores (forest: vote counts, network: probabilities) and
//! round-trips through a versioned binary container.

pub mod forest;
pub mod network;

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::featurestore::{FeatureTable, Standardization};
use crate::ingest::EmotionLabel;

pub use forest::{fit_forest, DecisionTree, Node, RandomForest, RfConfig};
pub use network::{fit_network, Gradients, Layer, MlpConfig, Network, Optimizer};

pub(crate) const N_CLASSES: usize = 5;

const MAGIC: &[u8; 7] = b"FERMD1\0";
const VERSION: u16 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Forest,
    Network,
}

impl ModelKind {
    fn tag(self) -> u8 {
        match self {
            ModelKind::Forest => 0,
            ModelKind::Network => 1,
        }
    }

    pub fn short_name(self) -> &'static str {
        match self {
            ModelKind::Forest => "rf",
            ModelKind::Network => "ann",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            ModelKind::Forest => "Random Forest",
            ModelKind::Network => "Artificial Neural Network",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelParams {
    Forest(RandomForest),
    Network(Network),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    /// Echo of the learner configuration.
    pub config: serde_json::Value,
    pub standardization: Option<Standardization>,
    #[serde(default)]
    pub epoch_losses: Vec<f64>,
    #[serde(default)]
    pub config_hash: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub kind: ModelKind,
    /// Labels present in the training table, ascending.
    pub classes: Vec<EmotionLabel>,
    pub p: usize,
    pub meta: TrainingMeta,
    pub params: ModelParams,
}

/// Predicted labels plus one 5-wide score vector per row, indexed by
/// [`EmotionLabel::index`].
#[derive(Debug, Clone, PartialEq)]
pub struct Predictions {
    pub labels: Vec<EmotionLabel>,
    pub scores: Vec<[f64; N_CLASSES]>,
}

fn seen_classes(table: &FeatureTable) -> Vec<EmotionLabel> {
    let counts = table.label_counts();
    EmotionLabel::ALL
        .iter()
        .copied()
        .filter(|l| counts[l.index()] > 0)
        .collect()
}

pub fn train_forest(train: &FeatureTable, cfg: &RfConfig) -> Result<TrainedModel> {
    let forest = fit_forest(train, cfg)?;
    let mut echo = serde_json::to_value(cfg)?;
    echo["features_per_split"] = cfg.resolved_features_per_split(train.p()).into();
    echo["criterion"] = "gini".into();
    Ok(TrainedModel {
        kind: ModelKind::Forest,
        classes: seen_classes(train),
        p: train.p(),
        meta: TrainingMeta {
            config: echo,
            standardization: None,
            epoch_losses: Vec::new(),
            config_hash: None,
        },
        params: ModelParams::Forest(forest),
    })
}

pub fn train_network(train: &FeatureTable, cfg: &MlpConfig) -> Result<TrainedModel> {
    let classes = seen_classes(train);
    if classes.len() < 2 {
        return Err(Error::DegenerateTraining(
            "training table holds fewer than 2 labels".into(),
        ));
    }
    let (x, standardization) = if cfg.standardize {
        let s = Standardization::fit(train)?;
        (s.apply(train).features().to_vec(), Some(s))
    } else {
        (train.features().to_vec(), None)
    };
    let y: Vec<usize> = train.labels().iter().map(|l| l.index()).collect();
    let (net, losses) = fit_network(&x, &y, train.p(), cfg)?;
    let mut echo = serde_json::to_value(cfg)?;
    echo["layer_sizes"] = serde_json::to_value(cfg.resolved_layers(train.p()))?;
    Ok(TrainedModel {
        kind: ModelKind::Network,
        classes,
        p: train.p(),
        meta: TrainingMeta {
            config: echo,
            standardization,
            epoch_losses: losses,
            config_hash: None,
        },
        params: ModelParams::Network(net),
    })
}

impl TrainedModel {
    /// A network model with every weight and bias zero over all five classes.
    pub fn zero_network(p: usize) -> Self {
        TrainedModel {
            kind: ModelKind::Network,
            classes: EmotionLabel::ALL.to_vec(),
            p,
            meta: TrainingMeta {
                config: serde_json::Value::Null,
                standardization: None,
                epoch_losses: Vec::new(),
                config_hash: None,
            },
            params: ModelParams::Network(Network::zeros(&[p, 64, 32, N_CLASSES])),
        }
    }

    /// Highest-scoring label among those seen in training; ties go to the
    /// smaller label id.
    fn pick(&self, scores: &[f64; N_CLASSES]) -> EmotionLabel {
        let mut best: Option<EmotionLabel> = None;
        for &l in &self.classes {
            if best.is_none_or(|b| scores[l.index()] > scores[b.index()]) {
                best = Some(l);
            }
        }
        best.expect("model has at least one class")
    }

    /// Predicts row-major `features` (`rows * p` values).
    pub fn predict(&self, features: &[f64]) -> Result<Predictions> {
        if self.p == 0 || !features.len().is_multiple_of(self.p) {
            return Err(Error::Param(format!(
                "feature buffer of length {} is not a multiple of p = {}",
                features.len(),
                self.p
            )));
        }
        let rows = features.len() / self.p;
        let scores: Vec<[f64; N_CLASSES]> = match &self.params {
            ModelParams::Forest(f) => features.chunks_exact(self.p).map(|r| f.votes(r)).collect(),
            ModelParams::Network(net) => {
                let mut x = features.to_vec();
                if let Some(s) = &self.meta.standardization {
                    for row in x.chunks_exact_mut(self.p) {
                        s.apply_row(row);
                    }
                }
                let mut out = Vec::with_capacity(rows);
                for block in x.chunks(4096 * self.p) {
                    let probs = net.predict_proba(block, block.len() / self.p);
                    out.extend(probs.chunks_exact(N_CLASSES).map(|c| {
                        let mut s = [0.0; N_CLASSES];
                        s.copy_from_slice(c);
                        s
                    }));
                }
                out
            }
        };
        let labels = scores.iter().map(|s| self.pick(s)).collect();
        Ok(Predictions { labels, scores })
    }

    pub fn predict_table(&self, table: &FeatureTable) -> Result<Predictions> {
        if table.p() != self.p {
            return Err(Error::Param(format!(
                "table has {} features, model expects {}",
                table.p(),
                self.p
            )));
        }
        self.predict(table.features())
    }

    /// JSON summary: tree count and depths, or layer shapes.
    pub fn describe(&self) -> serde_json::Value {
        let mut v = serde_json::json!({
            "kind": self.kind,
            "p": self.p,
            "classes": self.classes.iter().map(|l| l.name()).collect::<Vec<_>>(),
            "config": self.meta.config,
            "config_hash": self.meta.config_hash,
        });
        match &self.params {
            ModelParams::Forest(f) => {
                v["n_trees"] = f.trees.len().into();
                v["depths"] = f.trees.iter().map(|t| t.depth()).collect::<Vec<_>>().into();
                v["nodes"] = f.trees.iter().map(|t| t.nodes.len()).sum::<usize>().into();
            }
            ModelParams::Network(n) => {
                v["layer_shapes"] = serde_json::to_value(n.shapes()).unwrap_or_default();
                v["epoch_losses"] = serde_json::to_value(&self.meta.epoch_losses).unwrap_or_default();
            }
        }
        v
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut w = Vec::new();
        w.extend_from_slice(MAGIC);
        w.extend_from_slice(&VERSION.to_le_bytes());
        w.push(self.kind.tag());
        let header = serde_json::to_vec(&Header {
            classes: self.classes.iter().map(|l| l.id()).collect(),
            p: self.p,
            meta: self.meta.clone(),
        })?;
        put_u32(&mut w, header.len() as u32);
        w.extend_from_slice(&header);
        match &self.params {
            ModelParams::Forest(f) => {
                put_u32(&mut w, f.trees.len() as u32);
                for t in &f.trees {
                    put_u32(&mut w, t.nodes.len() as u32);
                    for n in &t.nodes {
                        match *n {
                            Node::Leaf { class } => {
                                w.push(0);
                                w.push(class);
                            }
                            Node::Split {
                                feature,
                                threshold,
                                left,
                                right,
                            } => {
                                w.push(1);
                                w.extend_from_slice(&feature.to_le_bytes());
                                w.extend_from_slice(&threshold.to_le_bytes());
                                put_u32(&mut w, left);
                                put_u32(&mut w, right);
                            }
                        }
                    }
                }
            }
            ModelParams::Network(net) => {
                put_u32(&mut w, net.layers.len() as u32);
                for l in &net.layers {
                    put_u32(&mut w, l.inputs as u32);
                    put_u32(&mut w, l.outputs as u32);
                    for v in l.weights.iter().chain(&l.bias) {
                        w.extend_from_slice(&v.to_le_bytes());
                    }
                }
            }
        }
        Ok(w)
    }

    pub fn from_bytes(bytes: &[u8]) -> std::result::Result<Self, String> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(7)? != MAGIC {
            return Err("bad magic".into());
        }
        let version = r.u16()?;
        if version != VERSION {
            return Err(format!("unsupported model version {version}"));
        }
        let kind = match r.u8()? {
            0 => ModelKind::Forest,
            1 => ModelKind::Network,
            t => return Err(format!("unknown model kind tag {t}")),
        };
        let header_len = r.u32()? as usize;
        let header: Header =
            serde_json::from_slice(r.take(header_len)?).map_err(|e| e.to_string())?;
        let classes = header
            .classes
            .iter()
            .map(|&id| EmotionLabel::from_id(id).ok_or_else(|| format!("bad class id {id}")))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        if classes.is_empty() {
            return Err("model has no classes".into());
        }
        let params = match kind {
            ModelKind::Forest => {
                let n_trees = r.u32()? as usize;
                let mut trees = Vec::with_capacity(n_trees.min(1 << 16));
                for _ in 0..n_trees {
                    let n_nodes = r.u32()? as usize;
                    let mut nodes = Vec::with_capacity(n_nodes.min(1 << 24));
                    for _ in 0..n_nodes {
                        let node = match r.u8()? {
                            0 => Node::Leaf { class: r.u8()? },
                            1 => Node::Split {
                                feature: r.u16()?,
                                threshold: r.f64()?,
                                left: r.u32()?,
                                right: r.u32()?,
                            },
                            t => return Err(format!("bad node tag {t}")),
                        };
                        nodes.push(node);
                    }
                    check_tree(&nodes, header.p)?;
                    trees.push(DecisionTree { nodes });
                }
                ModelParams::Forest(RandomForest { p: header.p, trees })
            }
            ModelKind::Network => {
                let n_layers = r.u32()? as usize;
                let mut layers = Vec::with_capacity(n_layers.min(64));
                for _ in 0..n_layers {
                    let inputs = r.u32()? as usize;
                    let outputs = r.u32()? as usize;
                    let weights = (0..inputs * outputs)
                        .map(|_| r.f64())
                        .collect::<std::result::Result<_, _>>()?;
                    let bias = (0..outputs)
                        .map(|_| r.f64())
                        .collect::<std::result::Result<_, _>>()?;
                    layers.push(Layer {
                        inputs,
                        outputs,
                        weights,
                        bias,
                    });
                }
                if layers.first().map(|l| l.inputs) != Some(header.p)
                    || layers.last().map(|l| l.outputs) != Some(N_CLASSES)
                    || layers.windows(2).any(|w| w[0].outputs != w[1].inputs)
                {
                    return Err("inconsistent layer shapes".into());
                }
                ModelParams::Network(Network { layers })
            }
        };
        if r.pos != bytes.len() {
            return Err("trailing bytes after model parameters".into());
        }
        Ok(TrainedModel {
            kind,
            classes,
            p: header.p,
            meta: header.meta,
            params,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|m| Error::format(path, m))
    }
}

#[derive(Serialize, Deserialize)]
struct Header {
    classes: Vec<u8>,
    p: usize,
    meta: TrainingMeta,
}

fn check_tree(nodes: &[Node], p: usize) -> std::result::Result<(), String> {
    if nodes.is_empty() {
        return Err("empty tree".into());
    }
    for (i, n) in nodes.iter().enumerate() {
        match *n {
            Node::Leaf { class } if class as usize >= N_CLASSES => {
                return Err(format!("leaf class {class} out of range"))
            }
            Node::Split {
                feature,
                left,
                right,
                ..
            } => {
                // children always follow their parent, so traversal terminates
                let ok = (feature as usize) < p
                    && (left as usize) > i
                    && (right as usize) > i
                    && (left as usize) < nodes.len()
                    && (right as usize) < nodes.len();
                if !ok {
                    return Err(format!("malformed split node {i}"));
                }
            }
            _ => {}
        }
    }
    Ok(())
}

fn put_u32(w: &mut Vec<u8>, v: u32) {
    w.extend_from_slice(&v.to_le_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| "truncated model file".to_string())?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> std::result::Result<u8, String> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> std::result::Result<u16, String> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> std::result::Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> std::result::Result<f64, String> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
