use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "switchdiff", version, about = "Monte Carlo studies of switching diffusions with state-dependent switching")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a model's rate matrices, rate bound and analytic derivatives
    Validate(Flags),
    /// Simulate single paths
    Simulate(Flags),
    /// Simulate coupled path pairs started at x and x + delta e
    Coupled(Flags),
    /// L^p error of difference quotients against the tangent process
    LpStudy(Flags),
    /// Decoupling probability of coupled paths per delta
    Decouple(Flags),
    /// Expected sup-distance of coupled paths per delta
    Supdist(Flags),
    /// Dynkin-formula defect of the Euler scheme per dt
    Dynkin(Flags),
    /// Feller gaps at x_n = x + 2^-n e, optionally against a truncated model
    Feller(Flags),
    /// Value and gradient of E phi(X(T), alpha(T)) by change of measure
    GradCm(Flags),
    /// Exact-sampler gap estimate for the non-differentiable example
    Counterexample(Flags),
    /// Moment table of the Lotka-Volterra model over [0, 2T]
    LotkaMoments(Flags),
    /// Coupled squared distance of Lotka-Volterra paths per offset
    LotkaCoupled(Flags),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Validate(_) => "validate",
            Command::Simulate(_) => "simulate",
            Command::Coupled(_) => "coupled",
            Command::LpStudy(_) => "lp-study",
            Command::Decouple(_) => "decouple",
            Command::Supdist(_) => "supdist",
            Command::Dynkin(_) => "dynkin",
            Command::Feller(_) => "feller",
            Command::GradCm(_) => "grad-cm",
            Command::Counterexample(_) => "counterexample",
            Command::LotkaMoments(_) => "lotka-moments",
            Command::LotkaCoupled(_) => "lotka-coupled",
        }
    }

    pub fn flags(&self) -> &Flags {
        match self {
            Command::Validate(f)
            | Command::Simulate(f)
            | Command::Coupled(f)
            | Command::LpStudy(f)
            | Command::Decouple(f)
            | Command::Supdist(f)
            | Command::Dynkin(f)
            | Command::Feller(f)
            | Command::GradCm(f)
            | Command::Counterexample(f)
            | Command::LotkaMoments(f)
            | Command::LotkaCoupled(f) => f,
        }
    }
}

/// Every flag overrides the matching config key.
#[derive(Debug, Clone, Default, Args)]
#[command(next_help_heading = "Run")]
pub struct Flags {
    /// TOML config file
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// CSV output path (standard output when absent)
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; defaults to SWITCHDIFF_THREADS, then the core count
    #[arg(long)]
    pub threads: Option<usize>,
    /// Apply the built-in acceptance thresholds; exit 1 when one fails
    #[arg(long)]
    pub check: bool,

    /// Built-in model name
    #[arg(long, help_heading = "Model")]
    pub model: Option<String>,
    /// Model parameter as KEY=VALUE with a TOML value, e.g. q12=0.5 or b0=[0.1,0.2]
    #[arg(long = "param", value_name = "KEY=VALUE", help_heading = "Model")]
    pub params: Vec<String>,

    /// Horizon
    #[arg(long = "T", value_name = "T", help_heading = "Study")]
    pub horizon: Option<f64>,
    #[arg(long, help_heading = "Study")]
    pub steps: Option<usize>,
    #[arg(long, help_heading = "Study")]
    pub paths: Option<usize>,
    /// Starting point, comma separated
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, help_heading = "Study")]
    pub x: Option<Vec<f64>>,
    /// Starting regime, 1-based
    #[arg(long, help_heading = "Study")]
    pub regime: Option<usize>,
    /// Perturbation sizes, strictly decreasing
    #[arg(long, value_delimiter = ',', help_heading = "Study")]
    pub deltas: Option<Vec<f64>>,
    /// Moment order of lp-study
    #[arg(long, help_heading = "Study")]
    pub p: Option<f64>,
    /// Unit perturbation direction
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, help_heading = "Study")]
    pub direction: Option<Vec<f64>>,
    /// Observable name: x, x2, regime2, tanh, clamp1, clamp10
    #[arg(long, help_heading = "Study")]
    pub observable: Option<String>,
    /// Step sizes of dynkin
    #[arg(long, value_delimiter = ',', help_heading = "Study")]
    pub dts: Option<Vec<f64>>,
    /// Number of Feller starting points
    #[arg(long, help_heading = "Study")]
    pub levels: Option<u32>,
    /// Truncation radius of feller
    #[arg(long, help_heading = "Study")]
    pub radius: Option<f64>,
    /// Truncation transition width of feller
    #[arg(long, help_heading = "Study")]
    pub width: Option<f64>,
    /// Finite-difference step of the grad-cm oracle
    #[arg(long, help_heading = "Study")]
    pub h: Option<f64>,
    /// Counterexample indices, comma separated
    #[arg(long, value_delimiter = ',', help_heading = "Study")]
    pub n: Option<Vec<u32>>,
    /// grad-cm directions: `;` between vectors, `,` within
    #[arg(long, allow_hyphen_values = true, help_heading = "Study")]
    pub directions: Option<String>,

    /// Moment order of lotka-moments
    #[arg(long, help_heading = "Lotka-Volterra")]
    pub m: Option<f64>,
    /// Step size of lotka-moments
    #[arg(long, help_heading = "Lotka-Volterra")]
    pub dt: Option<f64>,
    #[arg(long, help_heading = "Lotka-Volterra")]
    pub checkpoints: Option<usize>,
    /// Offsets of lotka-coupled
    #[arg(long, value_delimiter = ',', help_heading = "Lotka-Volterra")]
    pub offsets: Option<Vec<f64>>,
    /// Declared bound R on the starting points of lotka-coupled
    #[arg(long = "lv-radius", help_heading = "Lotka-Volterra")]
    pub lv_radius: Option<f64>,
}
