use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use lpo_cli::{cmd_check, cmd_plotdata, cmd_run, parse_mode, parse_seeds, parse_variant, CliError, ExperimentManifest};

#[derive(Parser)]
#[command(name = "lpo", version, about = "Low-switching policy optimization experiments on finite MDPs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run LPO for each seed; writes metrics_seed{s}.csv and summary_seed{s}.json
    /// (plus aggregate.json for several seeds).
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated distinct seeds, e.g. 0,1,2.
        #[arg(long)]
        seeds: Option<String>,
        #[arg(long, default_value = "runs")]
        out: PathBuf,
        /// lpo | indicator-only | no-bonus
        #[arg(long)]
        variant: Option<String>,
        /// mc | exact
        #[arg(long)]
        mode: Option<String>,
        /// Also store inner-loop artifacts, bonus tables and the dataset.
        #[arg(long)]
        artifacts: bool,
    },
    /// Re-check the stored artifacts of a run directory (needs `run --artifacts`).
    Check {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seeds: Option<String>,
        #[arg(long, default_value = "runs")]
        out: PathBuf,
    },
    /// Emit long-format plot data (x,y,series) from the metrics in a run directory.
    Plotdata {
        #[arg(long, default_value = "runs")]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<i32, CliError> {
    match cli.command {
        Command::Run { config, seeds, out, variant, mode, artifacts } => {
            let seeds = seeds.as_deref().map(parse_seeds).transpose()?;
            let variant = variant.as_deref().map(parse_variant).transpose()?;
            let mode = mode.as_deref().map(parse_mode).transpose()?;
            let manifest = ExperimentManifest::load(&config, seeds, &out, variant, mode, artifacts)?;
            for (seed, r) in manifest.seeds.iter().zip(cmd_run(&manifest)?) {
                let s = &r.summary;
                println!(
                    "seed {seed}: value {:.4} / V* {:.4}, {} switches, {} transitions",
                    s.final_value, s.v_star, s.switches, s.total_transitions
                );
            }
            Ok(lpo_cli::EXIT_OK)
        }
        Command::Check { config, seeds, out } => {
            let seeds = seeds.as_deref().map(parse_seeds).transpose()?;
            let manifest = ExperimentManifest::load(&config, seeds, &out, None, None, false)?;
            let mut ok = true;
            for (seed, reports) in cmd_check(&manifest)? {
                for r in reports {
                    ok &= r.pass;
                    println!(
                        "seed {seed}: {:?} {} (max violation {:.3e}, tolerance {:.1e}, {} checked)",
                        r.lemma,
                        if r.pass { "pass" } else { "FAIL" },
                        r.max_violation,
                        r.tolerance,
                        r.instances_checked
                    );
                }
            }
            Ok(if ok { lpo_cli::EXIT_OK } else { lpo_cli::EXIT_FAILED_CHECK })
        }
        Command::Plotdata { out } => {
            println!("{}", cmd_plotdata(&out)?.display());
            Ok(lpo_cli::EXIT_OK)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
