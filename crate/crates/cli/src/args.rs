use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "marrow", version, about = "Bone-marrow cell classification pipeline")]
pub struct Cli {
    /// Seed for every randomized step (overrides config seeds).
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Run directory for outputs (overrides `output.run_dir`).
    #[arg(long, global = true)]
    pub run_dir: Option<PathBuf>,

    /// Run configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Index, subsample, split or synthesize datasets.
    #[command(subcommand)]
    Dataset(DatasetCommand),
    /// Train a classifier from a config file or a previous run's manifest.
    Train(TrainArgs),
    /// Score a checkpoint on one or more dataset indexes.
    Evaluate(EvaluateArgs),
    /// Print the top class for each image.
    Predict(PredictArgs),
}

#[derive(Debug, Args)]
pub struct TaxonomyArg {
    /// TOML taxonomy file replacing the built-in 21 classes.
    #[arg(long)]
    pub taxonomy: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum DatasetCommand {
    /// Index `<root>/<CODE>/<image>` folders.
    Scan {
        root: PathBuf,
        /// Index file to write.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        taxonomy: TaxonomyArg,
    },
    /// Draw a random fraction of an index.
    Subset {
        index: PathBuf,
        #[arg(long)]
        fraction: f64,
        /// Sample the fraction within each class.
        #[arg(long)]
        stratified: bool,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        taxonomy: TaxonomyArg,
    },
    /// Stratified train/validation split into `<out>/train.index` and `<out>/val.index`.
    Split {
        index: PathBuf,
        #[arg(long, default_value_t = 0.8)]
        train_fraction: f64,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        taxonomy: TaxonomyArg,
    },
    /// Write synthetic `<out>/<CODE>/<CODE>_nnnn.png` images.
    Fixture {
        #[arg(long)]
        per_class: usize,
        /// `all` or a comma-separated list of class codes.
        #[arg(long, default_value = "all")]
        classes: String,
        #[arg(long, default_value_t = 64)]
        image_size: u32,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        taxonomy: TaxonomyArg,
    },
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Re-run the configuration recorded in a run manifest.
    #[arg(long, conflicts_with = "config")]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Classifier checkpoint.
    #[arg(long, required_unless_present = "reference")]
    pub checkpoint: Option<PathBuf>,

    /// Dataset index to score; repeatable. `train.index` and `val.index`
    /// are reported as Training and Validation.
    #[arg(long = "index", required_unless_present = "reference")]
    pub indexes: Vec<PathBuf>,

    /// Row label for each `--index`, in order.
    #[arg(long = "set")]
    pub sets: Vec<String>,

    /// Render the published reference results instead of scoring a model.
    #[arg(long, conflicts_with_all = ["checkpoint", "indexes"])]
    pub reference: bool,

    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,

    #[command(flatten)]
    pub taxonomy: TaxonomyArg,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,

    #[arg(required = true)]
    pub images: Vec<PathBuf>,

    #[command(flatten)]
    pub taxonomy: TaxonomyArg,
}
