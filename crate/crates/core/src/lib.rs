//! Fourier narrow-band features for facial emotion recognition.
//!
//! Images are transformed to the frequency domain, split into narrow
//! rectangular bands, and transformed back; every band image contributes
//! one feature per pixel. Random-forest and feed-forward network
//! classifiers are trained on the resulting per-pixel table.

pub mod cli;
pub mod error;
pub mod evaluation;
pub mod featurestore;
pub mod ingest;
pub mod learners;
pub mod pipeline;
pub mod spectral;
pub mod synth;

pub use error::{Error, Result};
pub use evaluation::{ConfusionCounts, MetricMode, MetricsReport, SplitSpec};
pub use featurestore::{FeatureTable, LabeledImage, Standardization};
pub use ingest::{DatasetManifest, EmotionLabel, GrayImage};
pub use learners::{MlpConfig, RfConfig, TrainedModel};
pub use spectral::{BandImage, BandKernel, KernelParams, Spectrum};
pub use synth::{SynthCorpus, SynthSpec};
pub use pipeline::PipelineConfig;
