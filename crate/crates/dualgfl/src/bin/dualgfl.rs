//! Command-line front end: load a config document, apply overrides, and run
//! the experiment sweep.
//!
//! Exit codes: 0 on success, 1 on configuration errors, 2 on runtime errors.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use dualgfl::config::{load_config, Method, SimConfig};
use dualgfl::experiment::{parse_ablation, run_experiment, AblationAxis, ExperimentSpec};
use dualgfl::Error;

#[derive(Parser, Debug)]
#[command(
    name = "dualgfl",
    about = "Deterministic dual-game federated learning simulator"
)]
struct Cli {
    /// Configuration document (TOML); defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Seed; repeat for multi-seed sweeps. Defaults to the config's seed.
    #[arg(long = "seed")]
    seeds: Vec<u64>,

    /// Method (dualgfl, dualgflstat, fedavg, fedavgauc, fedavghed); repeat
    /// for comparisons. Defaults to the config's method.
    #[arg(long = "method")]
    methods: Vec<String>,

    /// Override the number of rounds.
    #[arg(long)]
    rounds: Option<usize>,

    /// Override the maximum coalition size.
    #[arg(long)]
    capacity: Option<usize>,

    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,

    /// Sweep axis, e.g. `capacity=6,8,10,15`.
    #[arg(long)]
    ablation: Option<String>,
}

fn build_spec(cli: &Cli) -> Result<ExperimentSpec, Error> {
    let mut base: SimConfig = match &cli.config {
        Some(path) => load_config(path)?,
        None => SimConfig::default(),
    };
    if let Some(rounds) = cli.rounds {
        base.rounds = rounds;
    }
    if let Some(capacity) = cli.capacity {
        base.capacity = capacity;
    }
    base.validate()?;

    let seeds = if cli.seeds.is_empty() {
        vec![base.seed]
    } else {
        cli.seeds.clone()
    };
    let methods: Vec<Method> = if cli.methods.is_empty() {
        vec![base.method]
    } else {
        cli.methods
            .iter()
            .map(|m| m.parse())
            .collect::<Result<_, _>>()?
    };
    let ablation: Option<AblationAxis> = match &cli.ablation {
        Some(text) => Some(parse_ablation(text)?),
        None => None,
    };

    Ok(ExperimentSpec {
        base,
        seeds,
        methods,
        out_dir: cli.out.clone(),
        ablation,
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => {
            eprintln!("{e}");
            return ExitCode::from(1);
        }
        Err(e) => {
            // --help / --version.
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };

    let spec = match build_spec(&cli) {
        Ok(spec) => spec,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };

    match run_experiment(&spec) {
        Ok(output) => {
            for f in &output.run_files {
                println!("wrote {}", f.display());
            }
            println!("wrote {}", output.summary_file.display());
            if let Some(f) = &output.ablation_file {
                println!("wrote {}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
