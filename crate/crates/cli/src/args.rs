use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "misalign",
    version,
    about = "Engagement vs. utility: closed forms and Monte Carlo for two-type recommendation models"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Engagement loss and utility gain of PEAR over APP, per discount factor.
    Table1(Common),
    /// Per-period (engagement, utility) points of APP and limiting PEAR.
    Figure1(Common),
    /// DICE/APP engagement and utility ratios across GPD shapes (Monte Carlo).
    Figure34(Common),
    /// One Monte Carlo run of a single policy.
    Simulate(Common),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Table1(_) => "table1",
            Command::Figure1(_) => "figure1",
            Command::Figure34(_) => "figure34",
            Command::Simulate(_) => "simulate",
        }
    }

    pub fn common(&self) -> &Common {
        match self {
            Command::Table1(c)
            | Command::Figure1(c)
            | Command::Figure34(c)
            | Command::Simulate(c) => c,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Pathwise,
    Conditional,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SamplingArg {
    Natural,
    Weighted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PolicyArg {
    App,
    Pear,
    Dice,
    Oracle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum NicheArg {
    TwoPoint,
    Gpd,
}

/// Flags shared by every command. All are optional here so that values from
/// `--config` can fill the gaps; defaults are applied afterwards.
#[derive(Debug, Clone, Default, Args)]
pub struct Common {
    /// Base utility of popular items.
    #[arg(long = "vp", allow_hyphen_values = true)]
    pub vp: Option<f64>,
    /// A single discount factor.
    #[arg(long, conflicts_with = "deltas")]
    pub delta: Option<f64>,
    /// Comma-separated discount factors.
    #[arg(long, value_delimiter = ',')]
    pub deltas: Option<Vec<f64>>,
    /// Prior probability of a high niche valuation (two-point model, PEAR).
    #[arg(long)]
    pub p: Option<f64>,
    /// A single GPD shape.
    #[arg(long, conflicts_with = "xis")]
    pub xi: Option<f64>,
    /// Comma-separated GPD shapes.
    #[arg(long, value_delimiter = ',')]
    pub xis: Option<Vec<f64>>,
    /// DICE exploration length(s), comma-separated.
    #[arg(long = "explore-len", value_delimiter = ',')]
    pub explore_len: Option<Vec<u64>>,
    /// Sweep the exploration length over 5,10,20,40,80.
    #[arg(long = "explore-sweep")]
    pub explore_sweep: bool,
    #[arg(long)]
    pub policy: Option<PolicyArg>,
    #[arg(long)]
    pub niche: Option<NicheArg>,
    #[arg(long)]
    pub episodes: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// How simulated users are drawn.
    #[arg(long = "user-sampling", value_enum)]
    pub user_sampling: Option<SamplingArg>,
    /// Worker threads for the Monte Carlo engine.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Ratio CI half-width above which a figure34 row is flagged.
    #[arg(long = "ci-threshold")]
    pub ci_threshold: Option<f64>,
    /// Output file (stdout when absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Also write an SVG chart to this path.
    #[arg(long)]
    pub svg: Option<PathBuf>,
    /// Flat `key = value` file; command-line flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
}
