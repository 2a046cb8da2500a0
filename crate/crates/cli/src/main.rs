use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use gsm_biphoton_cli::{execute, CliError, Experiment};

#[derive(Parser)]
#[command(name = "gsm-biphoton", version, about = "Partially coherent SPDC biphoton simulations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write its outputs plus manifest.json.
    Run {
        experiment: Experiment,
        /// TOML configuration file.
        #[arg(long)]
        config: PathBuf,
        /// Output directory (overrides the config file).
        #[arg(long, env = "GSM_SPDC_OUT")]
        out: Option<PathBuf>,
        /// Seed for every stochastic component (overrides the config file).
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads; results do not depend on this.
        #[arg(long)]
        threads: Option<usize>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let Command::Run { experiment, config, out, seed, threads } = cli.command;
    if let Some(n) = threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match execute(experiment, &config, out, seed) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_byte(&e))
        }
    }
}

fn exit_byte(e: &CliError) -> u8 {
    e.exit_code() as u8
}
