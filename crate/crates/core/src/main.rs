use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::error;

use hetfl::channel_plan::{Coupling, OsmSchedule, StrategyKind, StrategySpec};
use hetfl::experiment::{self, ExperimentConfig};

#[derive(Parser)]
#[command(name = "hetfl", version, about = "Heterogeneous federated learning and membership inference simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train and attack every cell of an experiment config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; defaults to $HETFL_OUT_DIR/<name> or runs/<name>.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Cells trained concurrently.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Re-run the attacks of an existing run directory.
    Attack {
        #[arg(long)]
        run: PathBuf,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Write summary.csv and deltas.csv from a run's results.csv.
    Summarize {
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Print every client's channel plan per round as JSON lines.
    PlanDump {
        #[arg(long)]
        strategy: StrategyKind,
        #[arg(long)]
        rounds: usize,
        #[arg(long, default_value_t = 10)]
        clients: usize,
        #[arg(long, default_value_t = 2)]
        large: usize,
        #[arg(long, default_value_t = 4)]
        server_u: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Draw the OSM group per round instead of cycling.
        #[arg(long)]
        osm_sampled: bool,
        /// Draw block inputs independently of the previous block's outputs.
        #[arg(long)]
        independent: bool,
    },
}

fn run(cli: Cli) -> hetfl::Result<()> {
    match cli.command {
        Command::Run { config, out, jobs } => {
            let cfg = ExperimentConfig::from_file(&config)?;
            let out = experiment::resolve_out_dir(out.as_deref(), &cfg.name);
            let outcome = experiment::run_experiment(&cfg, &out, jobs)?;
            experiment::summarize(&outcome.out_dir)?;
            println!(
                "{} cells complete, {} failed; results in {}",
                outcome.rows.len(),
                outcome.failures.len(),
                outcome.out_dir.display()
            );
        }
        Command::Attack { run, jobs } => {
            let outcome = experiment::attack_run(&run, jobs)?;
            experiment::summarize(&outcome.out_dir)?;
            println!("re-attacked {} cells", outcome.rows.len());
        }
        Command::Summarize { input } => {
            let s = experiment::summarize(&input)?;
            for d in &s.deltas {
                println!(
                    "large={} strategies={} d_server_acc={:.4} d_client_acc={:.4} d_avg_auc={:.6}",
                    d.num_large_clients, d.strategies, d.server_acc, d.mean_client_acc, d.avg_auc
                );
            }
        }
        Command::PlanDump {
            strategy,
            rounds,
            clients,
            large,
            server_u,
            seed,
            osm_sampled,
            independent,
        } => {
            let mut spec = StrategySpec::new(strategy, seed);
            if osm_sampled {
                spec.osm_schedule = OsmSchedule::Sampled;
            }
            if independent {
                spec.coupling = Coupling::Independent;
            }
            let stdout = std::io::stdout();
            let mut out = stdout.lock();
            for rec in experiment::plan_dump(spec, rounds, clients, large, server_u)? {
                serde_json::to_writer(&mut out, &rec)?;
                writeln!(out)?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            ExitCode::FAILURE
        }
    }
}
