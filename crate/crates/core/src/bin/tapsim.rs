use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use tapsim::gru::save_weights;
use tapsim::sim::{episode_csv, export_report, ScenarioConfig, Simulation};
use tapsim::verify::{ar_oracle, default_gradcheck_shapes, gradcheck, GRADCHECK_TOLERANCE};
use tapsim::{Error, Result};

#[derive(Parser)]
#[command(name = "tapsim", version, about = "Predictive teleoperation over lossy, delayed links")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the Monte Carlo experiment of a scenario and write report.json and per_slot.csv.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides experiment.base_seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides training.steps when the network is pre-trained here.
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Pre-train the long-term predictor and save its weights.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        weights_out: PathBuf,
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Per-slot log of one episode for every strategy of a scenario.
    Replay {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        episode_seed: u64,
        /// Output directory; one `replay_<strategy>.csv` per strategy.
        #[arg(long)]
        out: PathBuf,
    },
    /// Finite-difference check of the GRU gradient on small networks.
    Gradcheck {
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Check the AR fit against a dense reference solve.
    Oracle {
        #[arg(long, default_value_t = 11)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

/// `Ok(false)` means a check ran and failed.
fn execute(command: Command) -> Result<bool> {
    match command {
        Command::Run { config, out, seed, steps } => {
            let mut config = ScenarioConfig::load(&config)?;
            if let Some(seed) = seed {
                config.experiment.base_seed = seed;
            }
            let mut sim = Simulation::new(config)?;
            sim.prepare_network(steps)?;
            let report = sim.run_experiment()?;
            let (json, csv) = export_report(&report, &out)?;
            for r in &report.strategies {
                println!(
                    "{:<18} P(success) {:.3}  mean AE {:.6}  std {:.6}",
                    r.strategy.name(),
                    r.success_probability,
                    r.mean_average_ae,
                    r.std_average_ae
                );
            }
            println!("wrote {} and {}", json.display(), csv.display());
            Ok(true)
        }
        Command::Train { config, weights_out, steps } => {
            let mut sim = Simulation::new(ScenarioConfig::load(&config)?)?;
            let summary = sim.train(steps)?.clone();
            let net = sim.network().expect("train sets the network");
            save_weights(net, &weights_out)?;
            println!(
                "steps {}  training windows {}  validation windows {}",
                summary.steps, summary.training_samples, summary.validation_samples
            );
            println!("final validation AE {:.6} (AR {:.6})", summary.generation_ae, summary.short_term_ae);
            println!("wrote {}", weights_out.display());
            Ok(true)
        }
        Command::Replay { config, episode_seed, out } => {
            let mut sim = Simulation::new(ScenarioConfig::load(&config)?)?;
            sim.prepare_network(None)?;
            fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
            for &strategy in &sim.config().strategies {
                let result = sim.run_episode(strategy, episode_seed)?;
                let path = out.join(format!("replay_{}.csv", strategy.name()));
                fs::write(&path, episode_csv(strategy, &result.trace.records)).map_err(|e| Error::io(&path, e))?;
                println!(
                    "{:<18} success {}  average AE {:.6}  -> {}",
                    strategy.name(),
                    result.success,
                    result.average_ae,
                    path.display()
                );
            }
            Ok(true)
        }
        Command::Gradcheck { seed } => {
            let mut ok = true;
            for shape in default_gradcheck_shapes() {
                let r = gradcheck(shape, seed)?;
                let s = &r.shape;
                let label = format!(
                    "L={} H={} D={} phi={} gamma={}",
                    s.layers, s.hidden, s.input_dim, s.window, s.horizon
                );
                if r.passed() {
                    println!("ok    {label}: {} weights, max rel err {:.2e}", r.params, r.max_relative_error);
                } else {
                    ok = false;
                    println!(
                        "FAIL  {label}: weight {} rel err {:.2e} >= {GRADCHECK_TOLERANCE:e}",
                        r.worst_param, r.max_relative_error
                    );
                }
            }
            if !ok {
                eprintln!("gradcheck failed");
            }
            Ok(ok)
        }
        Command::Oracle { seed } => {
            let mut ok = true;
            for check in ar_oracle(seed)? {
                if check.passed() {
                    println!("ok    {}: max err {:.2e}", check.name, check.max_error);
                } else {
                    ok = false;
                    println!("FAIL  {}: max err {:.2e} > {:e}", check.name, check.max_error, check.tolerance);
                }
            }
            if !ok {
                eprintln!("oracle check failed");
            }
            Ok(ok)
        }
    }
}
