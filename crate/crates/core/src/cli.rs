//! Command-line front end over [`crate::pipeline`].

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::Result;
use crate::evaluation::{Granularity, MetricMode};
use crate::learners::network::Optimizer;
use crate::pipeline::{self, ModelChoice, PipelineConfig};
use crate::spectral::{FeatureMode, OrientationPolicy};

#[derive(Debug, Parser)]
#[command(name = "emofreq", version, about = "Narrow-band Fourier features for facial emotion recognition")]
pub struct Cli {
    /// JSON configuration file; command-line flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(flatten)]
    pub overrides: Overrides,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic labelled corpus into the data directory.
    Synth,
    /// Scan the data directory and write the dataset manifest.
    Ingest,
    /// Build the kernel bank and write its description.
    Kernels {
        /// Also export one PGM mask per kernel into this directory.
        #[arg(long)]
        pgm: Option<PathBuf>,
    },
    /// Compute band images and write the feature store.
    Extract {
        /// Also write the table as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Train the selected learner on the training split.
    Train,
    /// Score the trained learner on the test split.
    Eval,
    /// Combine metrics files into report.txt, report.csv and report.json.
    Report {
        /// Combine metrics produced under different configurations.
        #[arg(long)]
        force: bool,
        /// Metrics files; defaults to every metrics-*.json in the output directory.
        inputs: Vec<PathBuf>,
    },
    /// Print a JSON summary of the trained model.
    Describe,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModelArg {
    Rf,
    Ann,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MetricsArg {
    Paper,
    Standard,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FeatureModeArg {
    Real,
    Magnitude,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum OrientationArg {
    Horizontal,
    Vertical,
    Alternating,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum GranularityArg {
    Pixel,
    Image,
    Subject,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum OptimizerArg {
    Adam,
    Sgd,
}

#[derive(Debug, Default, Args)]
pub struct Overrides {
    /// Directory holding the image corpus.
    #[arg(long, global = true)]
    pub data_dir: Option<PathBuf>,
    /// Directory for all generated artifacts.
    #[arg(long = "out", global = true)]
    pub output_dir: Option<PathBuf>,
    /// Side length of the standardized images.
    #[arg(long, global = true)]
    pub size: Option<usize>,

    /// Number of kernels.
    #[arg(long = "kernels", global = true)]
    pub p: Option<usize>,
    /// Band width in frequency bins.
    #[arg(long = "band-width", global = true)]
    pub b: Option<usize>,
    /// Offset of the first band.
    #[arg(long, global = true)]
    pub start: Option<usize>,
    /// Offset step between consecutive bands.
    #[arg(long, global = true)]
    pub stride: Option<usize>,
    #[arg(long, global = true)]
    pub orientation: Option<OrientationArg>,
    /// Keep the DC coefficient inside masks.
    #[arg(long, global = true)]
    pub keep_dc: bool,
    #[arg(long, global = true)]
    pub feature_mode: Option<FeatureModeArg>,

    /// Training share of the split.
    #[arg(long, global = true)]
    pub ratio: Option<f64>,
    #[arg(long, global = true)]
    pub split_seed: Option<u64>,
    #[arg(long, global = true)]
    pub granularity: Option<GranularityArg>,
    /// Stratified share of feature rows kept before splitting.
    #[arg(long, global = true)]
    pub row_fraction: Option<f64>,

    #[arg(long, global = true)]
    pub model: Option<ModelArg>,
    /// Learner seed (forest and network).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub trees: Option<usize>,
    #[arg(long, global = true)]
    pub max_depth: Option<usize>,
    /// Candidate features per split.
    #[arg(long, global = true)]
    pub mtry: Option<usize>,
    #[arg(long, global = true)]
    pub min_leaf: Option<usize>,
    #[arg(long, global = true)]
    pub epochs: Option<usize>,
    #[arg(long, global = true)]
    pub batch_size: Option<usize>,
    #[arg(long, global = true)]
    pub learning_rate: Option<f64>,
    #[arg(long, global = true)]
    pub optimizer: Option<OptimizerArg>,

    /// Naming convention for the class-conditional rates.
    #[arg(long, global = true)]
    pub metrics: Option<MetricsArg>,
    /// Score majority votes per image instead of pixels.
    #[arg(long, global = true)]
    pub per_image: bool,

    #[arg(long, global = true)]
    pub subjects: Option<usize>,
    #[arg(long, global = true)]
    pub amplitude: Option<f64>,
    #[arg(long, global = true)]
    pub noise: Option<f64>,
    #[arg(long, global = true)]
    pub synth_seed: Option<u64>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut PipelineConfig) {
        fn set<T: Clone>(dst: &mut T, src: &Option<T>) {
            if let Some(v) = src {
                *dst = v.clone();
            }
        }
        if self.data_dir.is_some() {
            cfg.data_dir = self.data_dir.clone();
        }
        set(&mut cfg.output_dir, &self.output_dir);
        set(&mut cfg.image_size, &self.size);

        set(&mut cfg.kernels.p, &self.p);
        set(&mut cfg.kernels.b, &self.b);
        set(&mut cfg.kernels.start, &self.start);
        set(&mut cfg.kernels.stride, &self.stride);
        if let Some(o) = self.orientation {
            cfg.kernels.orientation_policy = match o {
                OrientationArg::Horizontal => OrientationPolicy::AllHorizontal,
                OrientationArg::Vertical => OrientationPolicy::AllVertical,
                OrientationArg::Alternating => OrientationPolicy::Alternating,
            };
        }
        if self.keep_dc {
            cfg.kernels.keep_dc = true;
        }
        if let Some(m) = self.feature_mode {
            cfg.feature_mode = match m {
                FeatureModeArg::Real => FeatureMode::Real,
                FeatureModeArg::Magnitude => FeatureMode::Magnitude,
            };
        }

        set(&mut cfg.split.ratio, &self.ratio);
        set(&mut cfg.split.seed, &self.split_seed);
        if let Some(g) = self.granularity {
            cfg.split.granularity = match g {
                GranularityArg::Pixel => Granularity::Pixel,
                GranularityArg::Image => Granularity::Image,
                GranularityArg::Subject => Granularity::Subject,
            };
        }
        set(&mut cfg.row_fraction, &self.row_fraction);

        if let Some(m) = self.model {
            cfg.model = match m {
                ModelArg::Rf => ModelChoice::Rf,
                ModelArg::Ann => ModelChoice::Ann,
            };
        }
        if let Some(s) = self.seed {
            cfg.rf.seed = s;
            cfg.mlp.seed = s;
        }
        set(&mut cfg.rf.n_trees, &self.trees);
        if self.max_depth.is_some() {
            cfg.rf.max_depth = self.max_depth;
        }
        if self.mtry.is_some() {
            cfg.rf.features_per_split = self.mtry;
        }
        set(&mut cfg.rf.min_samples_leaf, &self.min_leaf);
        set(&mut cfg.mlp.epochs, &self.epochs);
        set(&mut cfg.mlp.batch_size, &self.batch_size);
        set(&mut cfg.mlp.learning_rate, &self.learning_rate);
        if let Some(o) = self.optimizer {
            cfg.mlp.optimizer = match o {
                OptimizerArg::Adam => Optimizer::Adam,
                OptimizerArg::Sgd => Optimizer::Sgd,
            };
        }

        if let Some(m) = self.metrics {
            cfg.metric_mode = match m {
                MetricsArg::Paper => MetricMode::Paper,
                MetricsArg::Standard => MetricMode::Standard,
            };
        }
        if self.per_image {
            cfg.per_image = true;
        }

        set(&mut cfg.synth.n_subjects, &self.subjects);
        set(&mut cfg.synth.amplitude, &self.amplitude);
        set(&mut cfg.synth.noise_std, &self.noise);
        set(&mut cfg.synth.seed, &self.synth_seed);
    }
}

impl Cli {
    pub fn resolve_config(&self) -> Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(path) => PipelineConfig::load(path)?,
            None => PipelineConfig::default(),
        };
        self.overrides.apply(&mut cfg);
        Ok(cfg)
    }

    pub fn execute(&self) -> Result<()> {
        let cfg = self.resolve_config()?;
        match &self.command {
            Command::Synth => pipeline::run_synth(&cfg).map(drop),
            Command::Ingest => pipeline::run_ingest(&cfg).map(drop),
            Command::Kernels { pgm } => pipeline::run_kernels(&cfg, pgm.as_deref()).map(drop),
            Command::Extract { csv } => pipeline::run_extract(&cfg, csv.as_deref()).map(drop),
            Command::Train => pipeline::run_train(&cfg).map(drop),
            Command::Eval => pipeline::run_eval(&cfg).map(drop),
            Command::Report { force, inputs } => pipeline::run_report(&cfg, inputs, *force).map(drop),
            Command::Describe => {
                let summary = pipeline::run_describe(&cfg)?;
                println!("{}", serde_json::to_string_pretty(&summary)?);
                Ok(())
            }
        }
    }
}

/// Parses `args` and runs the command, mapping failures to a single
/// `error[<kind>]: <message>` line on stderr.
pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("invalid arguments");
            eprintln!("error[usage]: {}", first.trim_start_matches("error: "));
            return ExitCode::from(2);
        }
    };
    match cli.execute() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {}", e.kind(), e.to_string().replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}
