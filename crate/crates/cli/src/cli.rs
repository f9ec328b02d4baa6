use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "gtsim",
    version,
    about = "Gradient tracking simulator: mixing spectra, lemma checks, noise-floor sweeps"
)]
pub struct Cli {
    /// Seed for noise, initial points, and random graphs.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Directory for output files; without it the main table goes to stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// `key = value` configuration file; command-line flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Eigenvalues, p, c, delta, and tau of a mixing matrix.
    Spectrum(SpectrumArgs),
    /// Check the contraction and norm bounds on a list of topologies.
    VerifyLemmas(VerifyArgs),
    /// Run gradient tracking or D-SGD and write the trace.
    Run(RunArgs),
    /// Noise floor versus p on rings blended with the complete graph.
    SweepP(SweepArgs),
    /// Noise floor versus c on rings with varying self weight.
    SweepC(SweepArgs),
    /// Gradient tracking and D-SGD on a heterogeneous consensus problem.
    ConsensusDemo(DemoArgs),
}

/// One topology, either as `--topology kind:args` or through the shorthand flags.
#[derive(Debug, Args, Default, Clone)]
pub struct TopologyArgs {
    /// Topology as `ring:N`, `ring:N:w=W`, `ring:N:alpha=A`, `complete:N`,
    /// `torus:RxC`, `random:N[:Q]`, or `file:PATH`.
    #[arg(long)]
    pub topology: Option<String>,
    /// Ring with uniform weights 1/3.
    #[arg(long, value_name = "N")]
    pub ring: Option<usize>,
    /// Self weight for `--ring`.
    #[arg(long, requires = "ring", conflicts_with = "alpha")]
    pub self_weight: Option<f64>,
    /// Blend `--ring` with the complete graph: alpha·W_ring + (1 − alpha)·J/n.
    #[arg(long, requires = "ring")]
    pub alpha: Option<f64>,
    /// Complete graph with uniform weights.
    #[arg(long, value_name = "N")]
    pub complete: Option<usize>,
    /// Torus with weight 1/5, given as RxC.
    #[arg(long, value_name = "RxC")]
    pub torus: Option<String>,
    /// Random connected graph with Metropolis–Hastings weights.
    #[arg(long, value_name = "N")]
    pub random: Option<usize>,
    /// Edge probability for `--random`.
    #[arg(long, requires = "random")]
    pub edge_prob: Option<f64>,
    /// Adjacency-list file, weighted by Metropolis–Hastings.
    #[arg(long, value_name = "PATH")]
    pub file: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SpectrumArgs {
    #[command(flatten)]
    pub topology: TopologyArgs,
    /// Print JSON instead of the text summary.
    #[arg(long)]
    pub json: bool,
    /// Also write the mixing matrix as CSV to this path.
    #[arg(long, value_name = "PATH")]
    pub export_matrix: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Topologies to check (repeatable); defaults to a standard set.
    #[arg(long = "topology", value_name = "SPEC")]
    pub topologies: Vec<String>,
    /// Grid step for the consensus-block bound.
    #[arg(long)]
    pub grid_step: Option<f64>,
    /// Largest power in the norm sweeps; defaults to 3·tau.
    #[arg(long)]
    pub max_power: Option<u64>,
    /// Report the ‖Jⁱ‖² bound without letting it decide the exit code.
    #[arg(long)]
    pub j_bound_informational: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AlgorithmArg {
    Gt,
    Dsgd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProblemArg {
    /// ‖x‖² with independent Gaussian gradient noise.
    Gaussian,
    /// ‖x‖² with noise along eigenvectors of W.
    Structured,
    /// ½‖x − μ_i‖² without noise.
    Consensus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FieldArg {
    OptError,
    WorkerError,
    ConsensusDist,
    MeanDist,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub topology: TopologyArgs,
    #[arg(long, value_enum)]
    pub algorithm: Option<AlgorithmArg>,
    #[arg(long, value_enum)]
    pub problem: Option<ProblemArg>,
    /// CSV of consensus targets, one row per worker.
    #[arg(long, value_name = "PATH")]
    pub targets: Option<PathBuf>,
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub sigma2: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub steps: Option<u64>,
    #[arg(long)]
    pub record_every: Option<u64>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub sigma2: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub steps: Option<u64>,
    /// Comma-separated seeds; each configuration is averaged over them.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Vec<u64>,
    /// Comma-separated blend weights (sweep-p) or self weights (sweep-c).
    #[arg(long, value_delimiter = ',', value_name = "LIST")]
    pub params: Vec<f64>,
    #[arg(long, value_enum)]
    pub noise: Option<NoiseArg>,
    #[arg(long)]
    pub record_every: Option<u64>,
    #[arg(long)]
    pub tail_fraction: Option<f64>,
    /// Quantity whose plateau is measured.
    #[arg(long, value_enum)]
    pub field: Option<FieldArg>,
    /// Also write every run's trace.
    #[arg(long)]
    pub traces: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum NoiseArg {
    Gaussian,
    Structured,
}

#[derive(Debug, Args)]
pub struct DemoArgs {
    #[command(flatten)]
    pub topology: TopologyArgs,
    /// CSV of targets; defaults to μ_i = (i + 1)·e_i in dimension n.
    #[arg(long, value_name = "PATH")]
    pub targets: Option<PathBuf>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub steps: Option<u64>,
    #[arg(long)]
    pub record_every: Option<u64>,
}
