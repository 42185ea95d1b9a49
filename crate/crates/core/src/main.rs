use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use qpca::cli::{error_json, run, RunConfig, Task};
use qpca::{Error, Mode};

/// Quantum PCA compression simulator. Row indices are 0-based.
#[derive(Debug, Parser)]
#[command(name = "qpca", version)]
struct Args {
    /// Data matrix, one comma-separated row per line; `#` lines are skipped.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Labels or regression targets, one value per line.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// compress, qsvm, qlr, scaling or ledger.
    #[arg(long, default_value = "compress")]
    task: String,
    /// Fraction of variance to retain.
    #[arg(long, default_value_t = 0.95)]
    theta: f64,
    /// Eigenvalue register width.
    #[arg(long, default_value_t = 6)]
    bits: usize,
    /// ideal, quantized or sampled.
    #[arg(long, default_value = "ideal")]
    mode: String,
    #[arg(long, default_value_t = 0.01)]
    eps_beta: f64,
    #[arg(long, default_value_t = 100_000)]
    shots: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Comma-separated rows to compress.
    #[arg(long, value_delimiter = ',')]
    subset: Option<Vec<usize>>,
    /// Compress one row only.
    #[arg(long)]
    single: Option<usize>,
    /// Anchor row; drawn from the seed when omitted.
    #[arg(long)]
    anchor: Option<usize>,
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    /// Extra comma-separated query point for qsvm and qlr.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    query: Option<Vec<f64>>,
    /// Ledger overrides.
    #[arg(long)]
    eps_lambda: Option<f64>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    rows: Option<usize>,
    #[arg(long)]
    cols: Option<usize>,
    #[arg(long)]
    success_probability: Option<f64>,
    /// Directory for plot data tables.
    #[arg(long)]
    plot_dir: Option<PathBuf>,
    /// Report path.
    #[arg(long, default_value = "report.json")]
    out: PathBuf,
}

impl Args {
    fn into_config(self) -> Result<RunConfig, Error> {
        let mut cfg = RunConfig::new(self.task.parse::<Task>()?, self.out);
        cfg.input = self.input;
        cfg.labels = self.labels;
        cfg.plot_dir = self.plot_dir;
        cfg.theta = self.theta;
        cfg.bits = self.bits;
        cfg.mode = self.mode.parse::<Mode>()?;
        cfg.eps_beta = self.eps_beta;
        cfg.shots = self.shots;
        cfg.seed = self.seed;
        cfg.subset = self.subset;
        cfg.single = self.single;
        cfg.anchor = self.anchor;
        cfg.gamma = self.gamma;
        cfg.query = self.query;
        cfg.eps_lambda = self.eps_lambda;
        cfg.dim = self.dim;
        cfg.rows = self.rows;
        cfg.cols = self.cols;
        cfg.success_probability = self.success_probability;
        Ok(cfg)
    }
}

fn main() -> ExitCode {
    let result = Args::parse().into_config().and_then(|cfg| run(&cfg));
    match result {
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", error_json(&e));
            ExitCode::FAILURE
        }
    }
}
