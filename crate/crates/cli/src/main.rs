//! Command-line driver for the kernel extraction and overlay flow.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod report;
mod stages;

#[derive(Parser)]
#[command(
    name = "overlayforge",
    version,
    about = "Mine frequent kernels and build application-specific overlays"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

/// Options shared by every stage.
#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Directory that stage outputs are written to and read from.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Primitive library JSON; the built-in library when omitted.
    #[arg(long, global = true)]
    pub lib: Option<PathBuf>,
    /// Overlay grid as ROWSxCOLS.
    #[arg(long, global = true, default_value = "3x3", value_parser = parse_grid)]
    pub grid: (usize, usize),
    #[arg(long, global = true, default_value_t = overlayforge::stitch::DEFAULT_QUEUE_DEPTH)]
    pub queue_depth: usize,
    /// Seed for generated workloads.
    #[arg(long, global = true, default_value_t = 1)]
    pub seed: u64,
}

#[derive(Subcommand)]
enum Command {
    /// Mine kernels from IR files and rewrite the IR with hardware calls.
    Mine(MineArgs),
    /// Stitch kernel graphs into netlists.
    Generate(GenerateArgs),
    /// Place kernel netlists on an overlay grid.
    Stitch(StitchArgs),
    /// Simulate an overlay and check it against the interpreter.
    Sim(SimArgs),
    /// Write the kernel, cycle and resource tables.
    Report(ReportArgs),
    /// Write the built-in primitive library as JSON.
    Library {
        /// Destination file; standard output when omitted.
        path: Option<PathBuf>,
    },
}

#[derive(Args)]
pub struct MineArgs {
    /// IR files, or directories searched for `*.ir` files.
    pub inputs: Vec<PathBuf>,
    #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u32).range(1..))]
    pub min_support: u32,
    /// Mine all files as one transaction set instead of one set per file.
    #[arg(long)]
    pub joint: bool,
    /// Take the operations of every basic block as a kernel instead of mining.
    #[arg(long)]
    pub blocks: bool,
    /// Also merge kernels across conditional branches.
    #[arg(long)]
    pub merge: bool,
}

#[derive(Args)]
pub struct GenerateArgs {
    /// Kernel files; every `*.dfg` under `<out>/kernels` when omitted.
    pub kernels: Vec<PathBuf>,
}

#[derive(Args)]
pub struct StitchArgs {
    /// Kernel netlists, assigned to slots in row-major order.
    pub netlists: Vec<PathBuf>,
    /// Overlay file to fill instead of an empty grid.
    #[arg(long)]
    pub layout: Option<PathBuf>,
    /// Assign each netlist once instead of repeating them over all slots.
    #[arg(long)]
    pub no_replicate: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Flavor {
    As,
    Alu,
    Both,
}

#[derive(Args)]
pub struct SimArgs {
    /// Overlay file; `<out>/overlay.json` when omitted.
    #[arg(long)]
    pub overlay: Option<PathBuf>,
    /// CSV workload given to every assigned PE; random vectors when omitted.
    #[arg(long)]
    pub workload: Option<PathBuf>,
    /// Number of random vectors per PE.
    #[arg(long, default_value_t = 64)]
    pub vectors: usize,
    #[arg(long, value_enum, default_value_t = Flavor::Both)]
    pub flavor: Flavor,
}

#[derive(Args)]
pub struct ReportArgs {
    /// Largest side of the square grids in the resource sweep.
    #[arg(long, default_value_t = 10)]
    pub max_grid: usize,
    /// Workload sizes of the cycle table.
    #[arg(long, value_delimiter = ',', default_value = "16,64,256,1024")]
    pub sizes: Vec<usize>,
    #[arg(long, value_enum, default_value_t = Flavor::Both)]
    pub flavor: Flavor,
}

fn parse_grid(s: &str) -> Result<(usize, usize), String> {
    let (r, c) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected ROWSxCOLS, got `{s}`"))?;
    let dim = |t: &str| {
        t.trim()
            .parse::<usize>()
            .map_err(|_| format!("bad grid dimension `{t}`"))
    };
    let (r, c) = (dim(r)?, dim(c)?);
    if r == 0 || c == 0 {
        return Err("grid must be at least 1x1".into());
    }
    Ok((r, c))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("OVERLAYFORGE_LOG", "warn"))
        .init();
    let cli = Cli::parse();
    let c = &cli.common;
    let result = match &cli.command {
        Command::Mine(a) => stages::mine(c, a),
        Command::Generate(a) => stages::generate(c, a),
        Command::Stitch(a) => stages::stitch(c, a),
        Command::Sim(a) => stages::sim(c, a),
        Command::Report(a) => report::report(c, a),
        Command::Library { path } => stages::library(path.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::parse_grid;

    #[test]
    fn grid_syntax() {
        assert_eq!(parse_grid("3x4"), Ok((3, 4)));
        assert_eq!(parse_grid("10X10"), Ok((10, 10)));
        assert!(parse_grid("0x3").is_err());
        assert!(parse_grid("33").is_err());
    }
}
