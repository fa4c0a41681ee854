use std::path::{Path, PathBuf};

use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use tensorenc::harness::{EncoderParams, RunConfig, SynthConfig};
use tensorenc::multilinear::SubspaceDims;
use tensorenc::retrieval::{ApNormalization, EncoderTag};

#[derive(Parser, Debug)]
#[command(name = "tensorenc", version, about = "Deep-feature encoders and retrieval evaluation")]
#[command(arg_required_else_help = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a seeded synthetic feature corpus
    Synth(SynthArgs),
    /// Train an encoder on a feature file and save the model
    Train(TrainArgs),
    /// Encode every image of a feature file into a signature file
    Encode(EncodeArgs),
    /// Build a searchable index (model + signatures)
    Index(IndexArgs),
    /// Rank the indexed items against one image
    Query(QueryArgs),
    /// Train, index and score a single encoder
    Eval(EvalCommand),
    /// Score several encoders into one table
    Report(ReportCommand),
}

fn encoder(s: &str) -> Result<EncoderTag, String> {
    s.parse().map_err(|e: tensorenc::Error| e.to_string())
}

fn positive(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(n) if n > 0 => Ok(n),
        _ => Err(format!("expected a positive integer, got {s:?}")),
    }
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 47)]
    pub categories: usize,
    #[arg(long, default_value_t = 80)]
    pub per_category: usize,
    #[arg(long, default_value_t = 8)]
    pub height: usize,
    #[arg(long, default_value_t = 8)]
    pub width: usize,
    #[arg(long, default_value_t = 64)]
    pub depth: usize,
    #[arg(long)]
    pub seed: u64,
    /// Std-dev of category means
    #[arg(long)]
    pub mean_spread: Option<f64>,
    /// Per-dimension variances are log-uniform in [1/v, v]
    #[arg(long)]
    pub variance_spread: Option<f64>,
    #[arg(long)]
    pub noise_scale: Option<f64>,
    /// Leading images per category moved to --query-out
    #[arg(long, default_value_t = 0)]
    pub queries_per_category: usize,
    #[arg(long)]
    pub query_out: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

impl SynthArgs {
    pub fn config(&self) -> SynthConfig {
        let mut c = SynthConfig::new(self.categories, self.per_category, self.height, self.width, self.depth, self.seed);
        if let Some(v) = self.mean_spread {
            c.mean_spread = v;
        }
        if let Some(v) = self.variance_spread {
            c.variance_spread = v;
        }
        if let Some(v) = self.noise_scale {
            c.noise_scale = v;
        }
        c
    }
}

/// Encoder hyperparameters. Unset flags keep library defaults.
#[derive(Args, Debug, Default)]
pub struct HyperArgs {
    /// GMM components K
    #[arg(long)]
    pub components: Option<usize>,
    /// Use the mixture-weighted posterior for soft assignments
    #[arg(long)]
    pub weighted_posterior: bool,
    #[arg(long)]
    pub em_max_iter: Option<usize>,
    #[arg(long)]
    pub em_tol: Option<f64>,
    /// Dictionary atoms K_a (default 2D)
    #[arg(long)]
    pub atoms: Option<usize>,
    /// OMP sparsity s
    #[arg(long)]
    pub sparsity: Option<usize>,
    #[arg(long)]
    pub ksvd_iters: Option<usize>,
    #[arg(long)]
    pub omp_tol: Option<f64>,
    /// Descriptors sampled for GMM / k-SVD training
    #[arg(long)]
    pub train_descriptors: Option<usize>,
    /// Leading t-SVD projection rows kept (default: all)
    #[arg(long)]
    pub truncation: Option<usize>,
    /// Explicit mPCA subspace dims, e.g. 2,2,32
    #[arg(long, value_delimiter = ',', conflicts_with = "mpca_q")]
    pub mpca_dims: Option<Vec<usize>>,
    /// mPCA per-mode variance ratio q
    #[arg(long)]
    pub mpca_q: Option<f64>,
    #[arg(long)]
    pub mpca_sweeps: Option<usize>,
    #[arg(long)]
    pub mpca_tol: Option<f64>,
    /// Low-rank truncation index r
    #[arg(long)]
    pub rank: Option<usize>,
}

impl HyperArgs {
    pub fn params(&self, seed: u64) -> Result<EncoderParams> {
        let mut p = EncoderParams { seed, ..EncoderParams::default() };
        macro_rules! set {
            ($($f:ident),*) => { $( if let Some(v) = self.$f { p.$f = v; } )* };
        }
        set!(components, em_max_iter, em_tol, sparsity, ksvd_iters, omp_tol, train_descriptors, mpca_sweeps, mpca_tol, rank);
        p.weighted_posterior = self.weighted_posterior;
        p.atoms = self.atoms.or(p.atoms);
        p.truncation = self.truncation.or(p.truncation);
        if let Some(d) = &self.mpca_dims {
            p.mpca_dims = SubspaceDims::Explicit(d.clone());
        } else if let Some(q) = self.mpca_q {
            p.mpca_dims = SubspaceDims::VarianceRatio(q);
        }
        p.validate()?;
        Ok(p)
    }
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long, value_parser = encoder)]
    pub encoder: EncoderTag,
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub hyper: HyperArgs,
}

#[derive(Args, Debug)]
pub struct EncodeArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct IndexArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Feature file to encode
    #[arg(long, required_unless_present = "signatures", conflicts_with = "signatures")]
    pub features: Option<PathBuf>,
    /// Signature file from `encode`
    #[arg(long)]
    pub signatures: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

pub enum IndexSource<'a> {
    Features(&'a Path),
    Signatures(&'a Path),
}

impl IndexArgs {
    pub fn source(&self) -> IndexSource<'_> {
        match (&self.features, &self.signatures) {
            (Some(f), _) => IndexSource::Features(f),
            (None, Some(s)) => IndexSource::Signatures(s),
            (None, None) => unreachable!("clap requires one source"),
        }
    }
}

#[derive(Args, Debug)]
pub struct QueryArgs {
    #[arg(long)]
    pub index: PathBuf,
    /// Feature file holding the query image
    #[arg(long)]
    pub image: PathBuf,
    /// Which image of --image to use
    #[arg(long, default_value_t = 0)]
    pub item: usize,
    #[arg(long, default_value_t = 10, value_parser = positive)]
    pub top: usize,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Normalization {
    /// Divide by the relevant hits within the top k
    Retrieved,
    /// Divide by min(k, relevant items in the index)
    Total,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Database (training) feature file
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub queries: PathBuf,
    /// MAP cut-offs
    #[arg(long, value_delimiter = ',', default_value = "1,5,10")]
    pub k: Vec<usize>,
    #[arg(long, value_enum, default_value_t = Normalization::Retrieved)]
    pub ap_normalization: Normalization,
    /// Skip each query's own item id (leave-one-out runs)
    #[arg(long)]
    pub exclude_self: bool,
    #[arg(long, default_value_t = 5)]
    pub timing_reps: usize,
    /// Report path (default stdout)
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Timings path (default stderr)
    #[arg(long)]
    pub timings: Option<PathBuf>,
    #[command(flatten)]
    pub hyper: HyperArgs,
}

impl EvalArgs {
    pub fn run_config(&self, encoders: Vec<EncoderTag>, seed: u64) -> Result<RunConfig> {
        let config = RunConfig {
            encoders,
            params: self.hyper.params(seed)?,
            k_list: self.k.clone(),
            normalization: match self.ap_normalization {
                Normalization::Retrieved => ApNormalization::RetrievedRelevant,
                Normalization::Total => ApNormalization::TotalRelevant,
            },
            exclude_self: self.exclude_self,
            timing_reps: self.timing_reps,
        };
        if let Err(e) = config.validate() {
            bail!(e);
        }
        Ok(config)
    }
}

#[derive(Args, Debug)]
pub struct EvalCommand {
    #[arg(long, value_parser = encoder)]
    pub encoder: EncoderTag,
    #[arg(long)]
    pub seed: u64,
    /// Also save the trained model
    #[arg(long)]
    pub model_out: Option<PathBuf>,
    #[command(flatten)]
    pub eval: EvalArgs,
}

#[derive(Args, Debug)]
pub struct ReportCommand {
    /// Encoders to include (default: all six)
    #[arg(long, value_delimiter = ',', value_parser = encoder)]
    pub encoders: Vec<EncoderTag>,
    #[arg(long)]
    pub seed: u64,
    #[command(flatten)]
    pub eval: EvalArgs,
}
