use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lookdown_cli::config::{Experiment, Mode};
use lookdown_cli::report::Report;
use lookdown_cli::run::{run_experiment, run_validate, OutDir};

#[derive(Parser)]
#[command(name = "lookdown", version, about = "Lookdown simulations of two-type and multitype mass processes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment file (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long, env = "LOOKDOWN_OUT_DIR", default_value = "out")]
    out: PathBuf,
    /// Overrides the experiment seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the replica count.
    #[arg(long)]
    replicas: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Direct, lookdown or multitype trajectories.
    Simulate(Common),
    /// Invariant checks along lookdown or multitype runs.
    Validate(Common),
    /// Martingale residuals of built-in test functions.
    Mgtest(Common),
    /// Lookdown projection against the direct integrator.
    Project(Common),
    /// Newick trees of the level genealogy.
    ExportTree(Common),
    /// Fragment masses of the lookdown event stream.
    Fragments(Common),
}

impl Command {
    fn parts(&self) -> (&'static str, &Common, &'static [Mode]) {
        match self {
            Command::Simulate(c) => ("simulate", c, &[Mode::Direct, Mode::Lookdown, Mode::Multitype]),
            Command::Validate(c) => ("validate", c, &[Mode::Lookdown, Mode::Multitype]),
            Command::Mgtest(c) => ("mgtest", c, &[Mode::Mgtest]),
            Command::Project(c) => ("project", c, &[Mode::ProjectCompare]),
            Command::ExportTree(c) => ("export-tree", c, &[Mode::ExportTree]),
            Command::Fragments(c) => ("fragments", c, &[Mode::Fragments]),
        }
    }
}

enum Failure {
    Usage(anyhow::Error),
    Tests(Report),
}

fn execute(cmd: &Command) -> Result<Report, Failure> {
    let (name, common, modes) = cmd.parts();
    let mut exp = Experiment::load(&common.config).map_err(Failure::Usage)?;
    if !modes.contains(&exp.mode) {
        return Err(Failure::Usage(anyhow::anyhow!(
            "subcommand {name} does not run mode {}",
            exp.mode.as_str()
        )));
    }
    if let Some(s) = common.seed {
        exp.seed = s;
    }
    if let Some(r) = common.replicas {
        exp.replicas = r;
    }
    let out = OutDir::create(&common.out).map_err(Failure::Usage)?;
    let report = match cmd {
        Command::Validate(_) => run_validate(&exp, &out),
        _ => run_experiment(&exp, &out),
    }
    .map_err(Failure::Usage)?;
    if report.all_pass() {
        Ok(report)
    } else {
        Err(Failure::Tests(report))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli.command) {
        Ok(r) => {
            println!("{}: {} statistics, all checks pass", r.mode, r.stats.len());
            ExitCode::SUCCESS
        }
        Err(Failure::Tests(r)) => {
            for s in r.failures() {
                eprintln!("FAIL {}: estimate {} (se {})", s.name, s.estimate, s.se);
            }
            ExitCode::from(1)
        }
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
