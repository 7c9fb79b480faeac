//! `svdrnd` command-line driver.

mod commands;
mod config;
mod stamp;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "svdrnd", version, about = "Out-of-distribution detection with SVD-blurred distillation targets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Apply one degradation to every image of a container.
    Blur(BlurArgs),
    /// Report the mean log effective rank of a dataset.
    EffectiveRank(EffectiveRankArgs),
    /// Choose blur strengths with equally spaced effective-rank targets.
    SelectK(SelectKArgs),
    /// Train a predictor against frozen targets.
    Train(TrainArgs),
    /// Score a dataset with a trained model.
    Score(ScoreArgs),
    /// Compute the five detection metrics from score files.
    Eval(EvalArgs),
    /// Linear classifier accuracy on frozen predictor features.
    Probe(ProbeArgs),
    /// Mean uncertainty under orthogonal perturbations.
    OrthogonalProbe(OrthogonalProbeArgs),
    /// Generate a synthetic corpus.
    Synth(SynthArgs),
    /// Pick the blur strength by validation performance over a grid.
    SweepK(SweepKArgs),
}

#[derive(Clone, Copy, ValueEnum)]
pub enum BlurMethod {
    Svd,
    Dct,
    Gauss,
    Geom,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum StoreDtype {
    U8,
    F32,
    F64,
}

#[derive(Args)]
pub struct BlurArgs {
    #[arg(long, value_enum)]
    pub method: BlurMethod,
    /// svd: K; dct: kept coefficients; gauss: `k` or `kx,ky`; geom: a
    /// transform name with an optional `:magnitude`.
    #[arg(long)]
    pub param: String,
    /// Accept parameters outside the reference grids.
    #[arg(long)]
    pub off_grid: bool,
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "f32")]
    pub dtype: StoreDtype,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum Aggregation {
    MeanEffectiveRank,
    MeanLog,
}

#[derive(Args)]
pub struct EffectiveRankArgs {
    /// Container or dataset manifest.
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value = "mean-effective-rank")]
    pub aggregation: Aggregation,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct SelectKArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long = "b")]
    pub b_train: usize,
    #[arg(long, value_enum, default_value = "mean-effective-rank")]
    pub aggregation: Aggregation,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub train_fraction: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Also write the per-step loss log here.
    #[arg(long)]
    pub log: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum ScorerArg {
    Rnd,
    Typicality,
}

#[derive(Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Container or dataset manifest.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value = "rnd")]
    pub scorer: ScorerArg,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub in_scores: PathBuf,
    /// One or more OOD score files.
    #[arg(long, required = true, num_args = 1..)]
    pub ood_scores: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Write a single table row with this label instead of the report.
    #[arg(long)]
    pub table_row: Option<String>,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum ProbeOpt {
    Adam,
    SgdAnnealed,
}

#[derive(Args)]
pub struct ProbeArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// 1-D byte container of class labels.
    #[arg(long)]
    pub labels: PathBuf,
    /// Number of predictor layers whose output forms the features.
    #[arg(long, default_value_t = 3)]
    pub layer: usize,
    #[arg(long, value_enum, default_value = "adam")]
    pub optimizer: ProbeOpt,
    #[arg(long, default_value_t = 50)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct OrthogonalProbeArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "5,10,15,20")]
    pub alphas: Vec<f64>,
    /// Number of perturbation seeds, `0..n`.
    #[arg(long, default_value_t = 20)]
    pub seeds: u64,
    /// Singular values to discard for the blurred row; defaults to the
    /// model's first SVD blur.
    #[arg(long)]
    pub blur_k: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub kind: String,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// `C,H,W`.
    #[arg(long, value_delimiter = ',', default_value = "3,32,32")]
    pub shape: Vec<usize>,
    /// Role recorded in the manifest.
    #[arg(long, default_value = "train")]
    pub role: String,
    /// Container path; the manifest is written beside it as `.toml`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct SweepKArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "18,20,22,24,25,26,27,28")]
    pub grid: Vec<usize>,
    #[arg(long)]
    pub off_grid: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// One-line message from the error chain, skipping causes that the
/// enclosing message already prints.
fn diagnostic(err: &anyhow::Error) -> String {
    let mut msg = String::new();
    for cause in err.chain() {
        let text = cause.to_string();
        if !msg.ends_with(&text) {
            if !msg.is_empty() {
                msg.push_str(": ");
            }
            msg.push_str(&text);
        }
    }
    msg.replace('\n', " ")
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Blur(a) => commands::blur(a),
        Command::EffectiveRank(a) => commands::effective_rank(a),
        Command::SelectK(a) => commands::select_k(a),
        Command::Train(a) => commands::train(a),
        Command::Score(a) => commands::score(a),
        Command::Eval(a) => commands::eval(a),
        Command::Probe(a) => commands::probe(a),
        Command::OrthogonalProbe(a) => commands::orthogonal_probe_report(a),
        Command::Synth(a) => commands::synth(a),
        Command::SweepK(a) => commands::sweep_k(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", diagnostic(&err));
            let numerical = err
                .chain()
                .filter_map(|e| e.downcast_ref::<svdrnd::Error>())
                .any(svdrnd::Error::is_numerical);
            ExitCode::from(if numerical { 3 } else { 2 })
        }
    }
}
