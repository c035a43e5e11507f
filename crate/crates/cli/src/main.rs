use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use bpsim_cli::commands;
use bpsim_cli::config::{load_config, preset, preset_names, GridConfig};
use bpsim_cli::{CliError, ExperimentConfig};
use bpsim_core::ControllerKind;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "bpsim",
    version,
    about = "Back-pressure signal control experiments"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON experiment document.
    #[arg(long, global = true, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Compiled-in experiment (see `bpsim presets`).
    #[arg(long, global = true)]
    preset: Option<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// bp_star, bp or fixed.
    #[arg(long, global = true)]
    controller: Option<ControllerKind>,
    /// Output directory; overrides the document's `output.dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    slots: Option<u64>,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long, global = true)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one trajectory.
    Simulate {
        /// Dump the full queue state every N slots.
        #[arg(long)]
        dump_every: Option<u64>,
    },
    /// Stability frontier of BP* and BP for the configured demand.
    Sweep,
    /// Frontier ratio over independently drawn parameter samples.
    Samples {
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Heavy-load one-slot drift of both controllers.
    Drift {
        #[arg(long)]
        replications: Option<usize>,
        #[arg(long)]
        heavy_init: Option<u64>,
    },
    /// Write a grid network document.
    GenNetwork {
        #[arg(long)]
        rows: Option<usize>,
        #[arg(long)]
        cols: Option<usize>,
        #[arg(long)]
        saturation: Option<u64>,
    },
    /// List the compiled-in presets.
    Presets,
}

fn resolve(common: &Common) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match (&common.config, &common.preset) {
        (Some(path), _) => load_config(path)?,
        (None, Some(name)) => preset(name)?,
        (None, None) => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(c) = common.controller {
        cfg.controller = c;
    }
    if let Some(slots) = common.slots {
        cfg.slots = slots;
    }
    if let Some(out) = &common.out {
        cfg.output.dir = out.clone();
    }
    Ok(cfg)
}

fn execute(cli: Cli) -> Result<(), CliError> {
    if let Command::Presets = cli.command {
        for name in preset_names() {
            println!("{name}");
        }
        return Ok(());
    }
    let mut cfg = resolve(&cli.common)?;
    match &cli.command {
        Command::Simulate { dump_every } => {
            if dump_every.is_some() {
                cfg.output.dump_every = *dump_every;
            }
        }
        Command::Samples { samples } => {
            if let Some(n) = samples {
                cfg.samples = *n;
            }
        }
        Command::Drift {
            replications,
            heavy_init,
        } => {
            if let Some(r) = replications {
                cfg.drift.replications = *r;
            }
            if let Some(h) = heavy_init {
                cfg.drift.heavy_init = *h;
            }
        }
        Command::GenNetwork {
            rows,
            cols,
            saturation,
        } => {
            cfg.grid = GridConfig {
                rows: rows.unwrap_or(cfg.grid.rows),
                cols: cols.unwrap_or(cfg.grid.cols),
            };
            if let Some(s) = saturation {
                cfg.saturation_rate = *s;
            }
        }
        Command::Sweep | Command::Presets => {}
    }
    cfg.validate()?;

    let workers = cli
        .common
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| CliError::Runtime(format!("thread pool: {e}")))?;

    let out = cfg.output.dir.clone();
    let out = Some(out.as_path());
    let started = Instant::now();
    pool.install(|| -> Result<(), CliError> {
        match cli.command {
            Command::Simulate { .. } => {
                let s = commands::cmd_simulate(&cfg, out)?;
                match s.verdict {
                    Some(v) => eprintln!(
                        "{}: {} (slope {:.4}, threshold {:.4}), final queue {}",
                        s.controller,
                        if v.stable { "stable" } else { "unstable" },
                        v.slope,
                        v.threshold,
                        s.final_total_queue
                    ),
                    None => eprintln!("{}: final queue {}", s.controller, s.final_total_queue),
                }
            }
            Command::Sweep => {
                let s = commands::cmd_sweep(&cfg, out)?;
                eprintln!(
                    "x_max BP* {} BP {} ratio {:.4}",
                    s.x_max_bp_star, s.x_max_bp, s.performance_ratio
                );
            }
            Command::Samples { .. } => {
                let s = commands::cmd_samples(&cfg, out)?;
                eprintln!(
                    "{} samples, ratio mean {:.4} sd {:.4}, {} failed",
                    s.results.len(),
                    s.mean_ratio,
                    s.stddev_ratio,
                    s.failures.len()
                );
            }
            Command::Drift { .. } => {
                let s = commands::cmd_drift(&cfg, out)?;
                for r in s.rows() {
                    eprintln!(
                        "lambda {} {}: {:.1} +- {:.1}",
                        r.lambda, r.controller, r.mean_drift, r.halfwidth
                    );
                }
            }
            Command::GenNetwork { .. } => {
                if let Some(path) = commands::cmd_gen_network(&cfg, out)? {
                    eprintln!("wrote {}", path.display());
                }
            }
            Command::Presets => unreachable!(),
        }
        Ok(())
    })?;
    eprintln!("done in {:.1}s", started.elapsed().as_secs_f64());
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
