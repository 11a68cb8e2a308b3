use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "spinlab", version, about = "Exact oracles, Markov chains and couplings for spin systems")]
pub struct Cli {
    /// Seed for every random stream of the run.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads for independent replicas (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Spectral gap and relaxation time of a chain, one row per graph.
    Gap(GapArgs),
    /// Draw samples from a chain or exactly.
    Sample(SampleArgs),
    /// Mixing time, exact or Monte Carlo.
    Mix(MixArgs),
    /// Randomised (ξ,k)-degree partition construction.
    Partition(PartitionArgs),
    /// Coupling-independence estimate via the recursive coupling.
    Ci(CiArgs),
    /// Exhaustive censoring check on a monotone system.
    CensorCheck(CensorArgs),
    /// Run an acceptance suite and print a per-criterion table.
    Acceptance(AcceptanceArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChainKind {
    Glauber,
    Downup,
    Simdownup,
    BipartiteBlock,
    /// Exact draws from the enumerated distribution.
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Convention {
    /// Keep `U_R`, redraw the rest.
    Complement,
    /// Redraw the chosen block.
    Block,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ModelArgs {
    /// Graph file or family (`path:N`, `cycle:N`, `complete:N`, `star:L`,
    /// `kbip:L,R`, `regular:N,D`, `biregular:NL,DL,NR,DR`).
    #[arg(long)]
    pub graph: String,
    /// Model JSON (inline or file) or `hardcore:λ`, `two_spin:β,γ,λ`, `coloring:q`.
    #[arg(long)]
    pub model: String,
    /// Pinning JSON (inline or file) mapping vertices to spins.
    #[arg(long)]
    pub pinning: Option<String>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ChainArgs {
    #[arg(long, value_enum, default_value_t = ChainKind::Glauber)]
    pub chain: ChainKind,
    /// Partition JSON (inline or file) or `mod:K`.
    #[arg(long)]
    pub partition: Option<String>,
    /// Number of blocks kept by the down-up walk.
    #[arg(long, default_value_t = 1)]
    pub ell: usize,
    #[arg(long, value_enum, default_value_t = Convention::Complement)]
    pub convention: Convention,
    /// Block size parameter of the bipartite block dynamics.
    #[arg(long, default_value_t = 1)]
    pub m: u32,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GapArgs {
    /// Graph file or family; repeat for a table.
    #[arg(long = "graph", required = true)]
    pub graphs: Vec<String>,
    #[arg(long)]
    pub model: String,
    #[arg(long)]
    pub pinning: Option<String>,
    #[command(flatten)]
    pub chain: ChainArgs,
    /// Write the table as CSV.
    #[arg(long)]
    pub csv: Option<String>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SampleArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub chain: ChainArgs,
    #[arg(long, default_value_t = 1000)]
    pub samples: usize,
    /// Chain steps per sample (glauber, downup, bipartite-block).
    #[arg(long, default_value_t = 1000)]
    pub steps: u64,
    /// Target accuracy for the SimDownUp schedule.
    #[arg(long, default_value_t = 0.05)]
    pub eps: f64,
    #[arg(long)]
    pub t0: Option<u64>,
    #[arg(long)]
    pub t1: Option<u64>,
    #[arg(long, default_value_t = 4.0)]
    pub c_const: f64,
    /// SimDownUp block parameter `M`.
    #[arg(long = "block-m", default_value_t = 1)]
    pub block_m: u32,
    /// SimDownUp spectral parameter `η`; `k = ⌈4M/η⌉`.
    #[arg(long, default_value_t = 4.0 / 3.0)]
    pub eta: f64,
    /// Write samples as CSV.
    #[arg(long)]
    pub out: Option<String>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct MixArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub chain: ChainArgs,
    #[arg(long, default_value_t = 0.25)]
    pub eps: f64,
    /// Monte Carlo replicas; exact distribution evolution when absent.
    #[arg(long)]
    pub replicas: Option<usize>,
    #[arg(long, default_value_t = 100_000)]
    pub max_t: u64,
    /// Write the (step, TV) curve as CSV.
    #[arg(long)]
    pub csv: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PartitionModeArg {
    General,
    Balanced,
    BipartiteLeft,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PartitionArgs {
    #[arg(long)]
    pub graph: String,
    #[arg(long)]
    pub k: usize,
    #[arg(long, default_value_t = 1.0)]
    pub xi: f64,
    #[arg(long, value_enum, default_value_t = PartitionModeArg::General)]
    pub mode: PartitionModeArg,
    /// Per-block bound for right vertices in bipartite-left mode.
    #[arg(long)]
    pub bound: Option<usize>,
    /// Overall failure probability; sets the number of independent copies.
    #[arg(long, default_value_t = 0.01)]
    pub fail_prob: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CouplingArg {
    TwoSpin,
    Coloring,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CiArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, value_enum, default_value_t = CouplingArg::TwoSpin)]
    pub coupling: CouplingArg,
    /// `empty`, `exhaustive:K` or `random:COUNT,SIZE`.
    #[arg(long, default_value = "empty")]
    pub pinnings: String,
    /// Maximum number of (pinning, vertex, value pair) triples.
    #[arg(long, default_value_t = 64)]
    pub pairs: usize,
    /// Coupling draws per triple.
    #[arg(long, default_value_t = 2000)]
    pub samples: usize,
    /// Fail unless every upper confidence bound is at most this value.
    #[arg(long)]
    pub target: Option<f64>,
    /// Comma-separated vertex weights for ρ.
    #[arg(long)]
    pub rho: Option<String>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CensorArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Schedule length is `min(20, ⌈C·n⌉)` for each swept `C`.
    #[arg(long, value_delimiter = ',', default_value = "1,2")]
    pub c_const: Vec<f64>,
    /// Fixed schedule length overriding the sweep.
    #[arg(long)]
    pub schedule_len: Option<usize>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct AcceptanceArgs {
    /// oracle, chains, saw, coupling, partition, censoring or all.
    #[arg(long)]
    pub suite: String,
    /// Tighten the tolerance of one criterion so that it must fail.
    #[arg(long)]
    pub inject_fault: Option<u32>,
}
