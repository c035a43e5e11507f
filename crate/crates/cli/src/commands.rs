//! The experiment drivers behind each subcommand.
//!
//! Every driver returns its results as plain data and, given an output
//! directory, writes them there. Nothing written to disk depends on wall-clock
//! time or thread scheduling.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use bpsim_core::analysis::{
    detect_stability, estimate_drift, generate_sample, mean_and_stddev, performance_ratio,
    DriftEstimate, DriftSetup, Frontier, FrontierSetup, SampleSpec, StabilityVerdict,
    MIN_TRAJECTORY_SLOTS,
};
use bpsim_core::dynamics::QueueDump;
use bpsim_core::rng::{derive_seed, Purpose};
use bpsim_core::{run, ControllerKind, Network, Simulation, TrajectoryRecord};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::CliError;

const SWEPT: [ControllerKind; 2] = [ControllerKind::BpStar, ControllerKind::Bp];

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(io_err(dir))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    w.write_all(b"\n").map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), CliError> {
    let csv_err = |source| CliError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    for row in rows {
        w.serialize(row).map_err(csv_err)?;
    }
    w.flush().map_err(io_err(path))
}

/// Writes `config.json` next to the results.
fn write_config(dir: &Path, cfg: &ExperimentConfig) -> Result<(), CliError> {
    write_json(&dir.join("config.json"), cfg)
}

// ---------------------------------------------------------------------------
// simulate

#[derive(Clone, Debug)]
pub struct SimulationOutcome {
    pub records: Vec<TrajectoryRecord>,
    pub dumps: Vec<QueueDump>,
    pub verdict: Option<StabilityVerdict>,
    pub total_arrival_rate: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SimulateSummary {
    pub config: ExperimentConfig,
    pub controller: ControllerKind,
    pub slots: u64,
    /// Absent when the run is too short for the slope test.
    pub verdict: Option<StabilityVerdict>,
    pub final_total_queue: u64,
    pub total_arrivals: u64,
    pub total_exits: u64,
    pub total_arrival_rate: f64,
}

pub fn run_simulation(cfg: &ExperimentConfig) -> Result<SimulationOutcome, CliError> {
    let net = cfg.network()?;
    let pressure = cfg.pressure(&net)?;
    let controller = cfg.controller(&net)?;
    let (arrivals, routing) = cfg.arrivals_and_routing(&net)?;
    let rate = arrivals.total_rate();
    let mut sim = Simulation::new(&net, arrivals, routing, cfg.seed)?;
    let mut records = Vec::with_capacity(cfg.slots as usize);
    let mut dumps = Vec::new();
    let every = cfg.output.dump_every.filter(|&k| k > 0);
    run(&mut sim, &controller, &pressure, cfg.slots, |rec, state| {
        records.push(*rec);
        if every.is_some_and(|k| (rec.slot + 1) % k == 0) {
            dumps.push(state.dump(&net));
        }
    })?;
    let verdict = if records.len() >= MIN_TRAJECTORY_SLOTS {
        let totals: Vec<u64> = records.iter().map(|r| r.total_queue).collect();
        Some(detect_stability(&totals, &cfg.stability, rate)?)
    } else {
        None
    };
    Ok(SimulationOutcome {
        records,
        dumps,
        verdict,
        total_arrival_rate: rate,
    })
}

pub fn cmd_simulate(
    cfg: &ExperimentConfig,
    out: Option<&Path>,
) -> Result<SimulateSummary, CliError> {
    let outcome = run_simulation(cfg)?;
    let summary = SimulateSummary {
        config: cfg.clone(),
        controller: cfg.controller,
        slots: cfg.slots,
        verdict: outcome.verdict,
        final_total_queue: outcome.records.last().map_or(0, |r| r.total_queue),
        total_arrivals: outcome.records.iter().map(|r| r.arrivals).sum(),
        total_exits: outcome.records.iter().map(|r| r.exits).sum(),
        total_arrival_rate: outcome.total_arrival_rate,
    };
    if let Some(dir) = out {
        create_dir(dir)?;
        write_csv(&dir.join("trajectory.csv"), &outcome.records)?;
        if cfg.output.dump_every.is_some() {
            let path = dir.join("queues.jsonl");
            let mut w = BufWriter::new(File::create(&path).map_err(io_err(&path))?);
            for d in &outcome.dumps {
                let line = serde_json::to_string(d)
                    .map_err(|e| CliError::Runtime(format!("queue dump: {e}")))?;
                writeln!(w, "{line}").map_err(io_err(&path))?;
            }
            w.flush().map_err(io_err(&path))?;
        }
        write_json(&dir.join("summary.json"), &summary)?;
        write_config(dir, cfg)?;
    }
    Ok(summary)
}

// ---------------------------------------------------------------------------
// sweep / samples

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub sample_id: usize,
    pub controller: ControllerKind,
    pub x_max: f64,
    pub slope_at_frontier: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProbeRow {
    pub sample_id: usize,
    pub controller: ControllerKind,
    pub x: f64,
    pub replication: usize,
    pub stable: bool,
    pub slope: f64,
    pub threshold: f64,
    pub peak_queue: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SampleResult {
    pub sample_id: usize,
    pub seed: u64,
    pub bp_star: Frontier,
    pub bp: Frontier,
    pub ratio: f64,
}

impl SampleResult {
    fn rows(&self) -> [SweepRow; 2] {
        [
            (ControllerKind::BpStar, &self.bp_star),
            (ControllerKind::Bp, &self.bp),
        ]
        .map(|(controller, f)| SweepRow {
            sample_id: self.sample_id,
            controller,
            x_max: f.x_max,
            slope_at_frontier: frontier_slope(f),
            seed: self.seed,
        })
    }

    fn probe_rows(&self) -> Vec<ProbeRow> {
        let mut rows = Vec::new();
        for (controller, f) in [
            (ControllerKind::BpStar, &self.bp_star),
            (ControllerKind::Bp, &self.bp),
        ] {
            for p in &f.probes {
                for (replication, v) in p.verdicts.iter().enumerate() {
                    rows.push(ProbeRow {
                        sample_id: self.sample_id,
                        controller,
                        x: p.x,
                        replication,
                        stable: v.stable,
                        slope: v.slope,
                        threshold: v.threshold,
                        peak_queue: v.peak_queue,
                    });
                }
            }
        }
        rows
    }
}

/// Mean fitted slope over the replications of the probe at `x_max`.
fn frontier_slope(f: &Frontier) -> f64 {
    match f.frontier_probe() {
        Some(p) if !p.verdicts.is_empty() => {
            p.verdicts.iter().map(|v| v.slope).sum::<f64>() / p.verdicts.len() as f64
        }
        _ => f64::NAN,
    }
}

/// Frontiers of both back-pressure controllers on one sample, sharing the
/// simulation seed.
pub fn sweep_sample(
    cfg: &ExperimentConfig,
    net: &Network,
    sample: SampleSpec,
    sample_id: usize,
    seed: u64,
) -> Result<SampleResult, CliError> {
    let setup = FrontierSetup::new(
        net,
        sample,
        cfg.batch_probability,
        cfg.batch_size,
        cfg.pressure(net)?,
        cfg.slots,
        cfg.stability,
        seed,
        cfg.bisection.replications,
    )?;
    let b = &cfg.bisection;
    let search = |kind| -> Result<Frontier, CliError> {
        let ctl = cfg.controller_of(kind, net)?;
        setup
            .find_x_max(&ctl, b.x_lo, b.x_hi, b.resolution)
            .map_err(|e| CliError::Runtime(format!("sample {sample_id}, {kind}: {e}")))
    };
    let (star, bp) = rayon::join(|| search(SWEPT[0]), || search(SWEPT[1]));
    let (bp_star, bp) = (star?, bp?);
    let ratio = performance_ratio(bp.x_max, bp_star.x_max)?;
    Ok(SampleResult {
        sample_id,
        seed,
        bp_star,
        bp,
        ratio,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepSummary {
    pub config: ExperimentConfig,
    pub x_max_bp_star: f64,
    pub x_max_bp: f64,
    pub performance_ratio: f64,
    pub result: SampleResult,
}

pub fn cmd_sweep(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<SweepSummary, CliError> {
    let net = cfg.network()?;
    let (sample, _) = cfg.sample(&net)?;
    let result = sweep_sample(cfg, &net, sample, 0, cfg.seed)?;
    let summary = SweepSummary {
        config: cfg.clone(),
        x_max_bp_star: result.bp_star.x_max,
        x_max_bp: result.bp.x_max,
        performance_ratio: result.ratio,
        result,
    };
    if let Some(dir) = out {
        create_dir(dir)?;
        write_csv(&dir.join("sweep.csv"), &summary.result.rows())?;
        write_csv(&dir.join("probes.csv"), &summary.result.probe_rows())?;
        write_json(&dir.join("summary.json"), &summary)?;
        write_config(dir, cfg)?;
    }
    Ok(summary)
}

#[derive(Clone, Debug, Serialize)]
pub struct SampleFailure {
    pub sample_id: usize,
    pub seed: u64,
    pub error: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct SamplesSummary {
    pub config: ExperimentConfig,
    pub ratios: Vec<(usize, f64)>,
    pub mean_ratio: f64,
    /// Population standard deviation.
    pub stddev_ratio: f64,
    pub failures: Vec<SampleFailure>,
    pub results: Vec<SampleResult>,
}

/// Seed of sample `i` of a study; it both draws the sample and drives its
/// simulations.
pub fn sample_seed(master: u64, i: usize) -> u64 {
    derive_seed(master, Purpose::Sample, i as u64)
}

pub fn cmd_samples(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<SamplesSummary, CliError> {
    if cfg.samples == 0 {
        return Err(CliError::Config(
            "field `samples`: must be at least 1".into(),
        ));
    }
    let net = cfg.network()?;
    // Fail fast on problems that would hit every sample.
    cfg.pressure(&net)?;
    let outcomes: Vec<Result<SampleResult, SampleFailure>> = (0..cfg.samples)
        .into_par_iter()
        .map(|i| {
            let seed = sample_seed(cfg.seed, i);
            sweep_sample(cfg, &net, generate_sample(&net, seed), i, seed).map_err(|e| {
                SampleFailure {
                    sample_id: i,
                    seed,
                    error: e.to_string(),
                }
            })
        })
        .collect();
    let (mut results, mut failures) = (Vec::new(), Vec::new());
    for o in outcomes {
        match o {
            Ok(r) => results.push(r),
            Err(f) => failures.push(f),
        }
    }
    let ratios: Vec<(usize, f64)> = results.iter().map(|r| (r.sample_id, r.ratio)).collect();
    let values: Vec<f64> = ratios.iter().map(|(_, r)| *r).collect();
    let (mean, sd) = mean_and_stddev(&values);
    let summary = SamplesSummary {
        config: cfg.clone(),
        ratios,
        mean_ratio: mean,
        stddev_ratio: sd,
        failures,
        results,
    };
    if let Some(dir) = out {
        create_dir(dir)?;
        let rows: Vec<SweepRow> = summary.results.iter().flat_map(|r| r.rows()).collect();
        write_csv(&dir.join("samples.csv"), &rows)?;
        let probes: Vec<ProbeRow> = summary
            .results
            .iter()
            .flat_map(|r| r.probe_rows())
            .collect();
        write_csv(&dir.join("probes.csv"), &probes)?;
        write_json(&dir.join("summary.json"), &summary)?;
        write_config(dir, cfg)?;
    }
    if summary.results.is_empty() {
        return Err(CliError::Runtime(format!(
            "all {} samples failed; first: {}",
            summary.failures.len(),
            summary.failures[0].error
        )));
    }
    Ok(summary)
}

// ---------------------------------------------------------------------------
// drift

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DriftRow {
    pub lambda: f64,
    pub controller: ControllerKind,
    pub mean_drift: f64,
    pub halfwidth: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct DriftSummary {
    pub config: ExperimentConfig,
    pub estimates: Vec<(f64, ControllerKind, DriftEstimate)>,
}

impl DriftSummary {
    pub fn rows(&self) -> Vec<DriftRow> {
        self.estimates
            .iter()
            .map(|(lambda, controller, e)| DriftRow {
                lambda: *lambda,
                controller: *controller,
                mean_drift: e.mean_drift,
                halfwidth: e.confidence_halfwidth,
            })
            .collect()
    }

    pub fn get(&self, lambda: f64, controller: ControllerKind) -> Option<&DriftEstimate> {
        self.estimates
            .iter()
            .find(|(l, c, _)| *l == lambda && *c == controller)
            .map(|(_, _, e)| e)
    }
}

pub fn cmd_drift(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<DriftSummary, CliError> {
    let net = cfg.network()?;
    let pressure = cfg.pressure(&net)?;
    let (sample, _) = cfg.sample(&net)?;
    let routing = sample
        .routing_matrix(&net)
        .map_err(|e| CliError::Config(format!("field `demand`: {e}")))?;
    let jobs: Vec<(f64, ControllerKind)> = cfg
        .drift
        .lambdas
        .iter()
        .flat_map(|&l| SWEPT.map(|c| (l, c)))
        .collect();
    let estimates = jobs
        .par_iter()
        .map(|&(lambda, kind)| {
            let arrivals = sample.arrivals(lambda, cfg.batch_probability, cfg.batch_size);
            let setup = DriftSetup {
                network: &net,
                arrivals: &arrivals,
                routing: &routing,
                pressure: &pressure,
                heavy_init: cfg.drift.heavy_init,
                replications: cfg.drift.replications,
                seed: cfg.seed,
            };
            let ctl = cfg.controller_of(kind, &net)?;
            Ok((lambda, kind, estimate_drift(&setup, &ctl)?))
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let summary = DriftSummary {
        config: cfg.clone(),
        estimates,
    };
    if let Some(dir) = out {
        create_dir(dir)?;
        write_csv(&dir.join("drift.csv"), &summary.rows())?;
        write_json(&dir.join("summary.json"), &summary)?;
        write_config(dir, cfg)?;
    }
    Ok(summary)
}

// ---------------------------------------------------------------------------
// gen-network

pub fn cmd_gen_network(
    cfg: &ExperimentConfig,
    out: Option<&Path>,
) -> Result<Option<PathBuf>, CliError> {
    let net = cfg.network()?;
    match out {
        Some(dir) => {
            create_dir(dir)?;
            let path = dir.join("network.json");
            write_json(&path, &net)?;
            Ok(Some(path))
        }
        None => {
            let text = serde_json::to_string_pretty(&net)
                .map_err(|e| CliError::Runtime(format!("network document: {e}")))?;
            println!("{text}");
            Ok(None)
        }
    }
}
