use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pointcause_cli::{run, Profile, RunOptions};

#[derive(Parser)]
#[command(name = "pointcause", version, about = "Causal effects of point-pattern interventions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a scenario file.
    Run {
        config: PathBuf,
        /// Worker threads (default: all cores).
        #[arg(long)]
        threads: Option<usize>,
        /// Size of the simulation grids.
        #[arg(long, value_enum, default_value_t = Profile::Desk)]
        profile: Profile,
        /// Output directory (overrides the config).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            config,
            threads,
            profile,
            out,
        } => match run(&config, &RunOptions { threads, profile, out }) {
            Ok(summary) => {
                for f in &summary.files {
                    println!("{}", summary.out_dir.join(f).display());
                }
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(e.exit_code() as u8)
            }
        },
    }
}
