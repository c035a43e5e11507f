//! Experiment configuration documents and compiled-in presets.

use std::path::{Path, PathBuf};

use bpsim_core::analysis::{generate_sample, SampleSpec, StabilityParams};
use bpsim_core::network::SaturationEntry;
use bpsim_core::{
    build_grid_network, ArrivalConfig, Controller, ControllerKind, CycleSpec, Network,
    PressureSpec, RoutingMatrix,
};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const PRESET_RATES: [&str; 8] = ["0.4", "0.5", "0.6", "0.65", "0.7", "0.75", "0.8", "0.9"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub rows: usize,
    pub cols: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PressureConfig {
    pub movement_slope: f64,
    pub node_slope: f64,
    /// Per-movement slopes in network movement order; overrides `movement_slope`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub movement_slopes: Option<Vec<f64>>,
    /// Per-node slopes indexed by node id; overrides `node_slope`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub node_slopes: Option<Vec<f64>>,
}

/// Where arrival rates and routing ratios come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DemandConfig {
    /// Same rate and turn split at every approach node.
    Uniform {
        rate: f64,
        straight: f64,
        left: f64,
        right: f64,
    },
    /// Random sample drawn from `seed`, scaled by `x`.
    Sample { seed: u64, x: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BisectionConfig {
    pub x_lo: f64,
    pub x_hi: f64,
    pub resolution: f64,
    pub replications: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftConfig {
    pub lambdas: Vec<f64>,
    pub heavy_init: u64,
    pub replications: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CycleConfig {
    /// Used for every junction unless `spec` is given.
    pub period: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec: Option<CycleSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Write the full queue matrix every this many slots (simulate only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dump_every: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub grid: GridConfig,
    pub saturation_rate: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub saturation_overrides: Vec<SaturationEntry>,
    pub controller: ControllerKind,
    pub pressure: PressureConfig,
    pub demand: DemandConfig,
    pub batch_probability: f64,
    pub batch_size: u64,
    pub slots: u64,
    pub stability: StabilityParams,
    pub bisection: BisectionConfig,
    pub drift: DriftConfig,
    pub cycle: CycleConfig,
    pub samples: usize,
    pub seed: u64,
    pub output: OutputConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            grid: GridConfig { rows: 21, cols: 21 },
            saturation_rate: 10,
            saturation_overrides: Vec::new(),
            controller: ControllerKind::BpStar,
            pressure: PressureConfig {
                movement_slope: 1.0,
                node_slope: 1.0,
                movement_slopes: None,
                node_slopes: None,
            },
            demand: DemandConfig::Uniform {
                rate: 0.7,
                straight: 0.5,
                left: 0.2,
                right: 0.2,
            },
            batch_probability: 0.05,
            batch_size: 10,
            slots: 50_000,
            stability: StabilityParams::default(),
            bisection: BisectionConfig {
                x_lo: 0.4,
                x_hi: 1.0,
                resolution: 0.0125,
                replications: 1,
            },
            drift: DriftConfig {
                lambdas: vec![0.0, 0.4, 2.0],
                heavy_init: 100,
                replications: 30,
            },
            cycle: CycleConfig {
                period: 40,
                spec: None,
            },
            samples: 10,
            seed: 42,
            output: OutputConfig {
                dir: PathBuf::from("out"),
                dump_every: None,
            },
        }
    }
}

/// Names accepted by `--preset`.
pub fn preset_names() -> Vec<String> {
    let mut names: Vec<String> = PRESET_RATES
        .iter()
        .map(|r| format!("uniform-{r}"))
        .collect();
    names.push("samples".into());
    names.push("drift-3x3".into());
    names
}

pub fn preset(name: &str) -> Result<ExperimentConfig, CliError> {
    let base = ExperimentConfig::default();
    if let Some(rate) = name.strip_prefix("uniform-") {
        if !PRESET_RATES.contains(&rate) {
            return Err(unknown_preset(name));
        }
        let rate: f64 = rate.parse().expect("preset rates are numeric");
        return Ok(ExperimentConfig {
            demand: DemandConfig::Uniform {
                rate,
                straight: 0.5,
                left: 0.2,
                right: 0.2,
            },
            ..base
        });
    }
    match name {
        "samples" => Ok(ExperimentConfig {
            demand: DemandConfig::Sample { seed: 0, x: 1.0 },
            bisection: BisectionConfig {
                x_lo: 0.1,
                x_hi: 3.0,
                ..base.bisection.clone()
            },
            ..base
        }),
        "drift-3x3" => Ok(ExperimentConfig {
            grid: GridConfig { rows: 3, cols: 3 },
            controller: ControllerKind::Bp,
            ..base
        }),
        _ => Err(unknown_preset(name)),
    }
}

fn unknown_preset(name: &str) -> CliError {
    CliError::Config(format!(
        "unknown preset {name:?} (available: {})",
        preset_names().join(", ")
    ))
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        CliError::Config(format!("field `{path}`: {}", e.into_inner()))
    })?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text)
}

fn field(name: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("field `{name}`: {msg}"))
}

impl ExperimentConfig {
    /// Checks every field that can be checked without building the network.
    pub fn validate(&self) -> Result<(), CliError> {
        if self.grid.rows == 0 || self.grid.cols == 0 {
            return Err(field("grid", "rows and cols must be at least 1"));
        }
        if self.saturation_rate == 0 {
            return Err(field("saturation_rate", "must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.batch_probability) {
            return Err(field("batch_probability", "must lie in [0, 1]"));
        }
        if self.batch_size == 0 {
            return Err(field("batch_size", "must be at least 1"));
        }
        match &self.demand {
            DemandConfig::Uniform {
                rate,
                straight,
                left,
                right,
            } => {
                if !(rate.is_finite() && *rate >= 0.0) {
                    return Err(field("demand.rate", "must be a non-negative number"));
                }
                for (name, r) in [("straight", straight), ("left", left), ("right", right)] {
                    if !(0.0..=1.0).contains(r) {
                        return Err(field(&format!("demand.{name}"), "must lie in [0, 1]"));
                    }
                }
                if straight + left + right > 1.0 + 1e-9 {
                    return Err(field("demand", "turn rates sum to more than 1"));
                }
            }
            DemandConfig::Sample { x, .. } => {
                if !(x.is_finite() && *x >= 0.0) {
                    return Err(field("demand.x", "must be a non-negative number"));
                }
            }
        }
        if !(0.0..1.0).contains(&self.stability.warmup_fraction) {
            return Err(field("stability.warmup_fraction", "must lie in [0, 1)"));
        }
        if self.stability.slope_threshold_fraction.is_nan()
            || self.stability.slope_threshold_fraction < 0.0
        {
            return Err(field(
                "stability.slope_threshold_fraction",
                "must be non-negative",
            ));
        }
        let b = &self.bisection;
        if !(b.x_lo >= 0.0 && b.x_lo < b.x_hi) {
            return Err(field("bisection", "need 0 <= x_lo < x_hi"));
        }
        if b.resolution.is_nan() || b.resolution <= 0.0 {
            return Err(field("bisection.resolution", "must be positive"));
        }
        if b.replications == 0 {
            return Err(field("bisection.replications", "must be at least 1"));
        }
        if self
            .drift
            .lambdas
            .iter()
            .any(|l| !(l.is_finite() && *l >= 0.0))
        {
            return Err(field("drift.lambdas", "must be non-negative numbers"));
        }
        if self.cycle.period == 0 {
            return Err(field("cycle.period", "must be positive"));
        }
        Ok(())
    }

    pub fn network(&self) -> Result<Network, CliError> {
        let grid = build_grid_network(self.grid.rows, self.grid.cols, self.saturation_rate);
        if self.saturation_overrides.is_empty() {
            return Ok(grid);
        }
        let mut desc = grid.description().clone();
        for o in &self.saturation_overrides {
            let entry = desc
                .saturation
                .iter_mut()
                .find(|s| s.from == o.from && s.to == o.to)
                .ok_or_else(|| {
                    field(
                        "saturation_overrides",
                        format!("({}, {}) is not a movement of the grid", o.from, o.to),
                    )
                })?;
            entry.rate = o.rate;
        }
        Network::new(desc).map_err(|e| field("saturation_overrides", e))
    }

    pub fn pressure(&self, net: &Network) -> Result<PressureSpec, CliError> {
        let p = &self.pressure;
        let spec = PressureSpec {
            movement_slopes: p
                .movement_slopes
                .clone()
                .unwrap_or_else(|| vec![p.movement_slope; net.num_movements()]),
            node_slopes: p
                .node_slopes
                .clone()
                .unwrap_or_else(|| vec![p.node_slope; net.num_nodes()]),
        };
        spec.validate(net).map_err(|e| field("pressure", e))?;
        Ok(spec)
    }

    pub fn controller(&self, net: &Network) -> Result<Controller, CliError> {
        self.controller_of(self.controller, net)
    }

    pub fn controller_of(
        &self,
        kind: ControllerKind,
        net: &Network,
    ) -> Result<Controller, CliError> {
        Ok(match kind {
            ControllerKind::BpStar => Controller::BpStar,
            ControllerKind::Bp => Controller::Bp,
            ControllerKind::Fixed => {
                let spec = match &self.cycle.spec {
                    Some(spec) => {
                        spec.validate(net).map_err(|e| field("cycle.spec", e))?;
                        spec.clone()
                    }
                    None => CycleSpec::uniform(net, self.cycle.period)
                        .map_err(|e| field("cycle.period", e))?,
                };
                Controller::Fixed(spec)
            }
        })
    }

    /// The demand as a sample plus the scaling it is run at.
    pub fn sample(&self, net: &Network) -> Result<(SampleSpec, f64), CliError> {
        match &self.demand {
            DemandConfig::Uniform {
                rate,
                straight,
                left,
                right,
            } => {
                let mut s = SampleSpec::uniform_turns(net, *straight, *left, *right)
                    .map_err(|e| field("demand", e))?;
                s.seed = self.seed;
                Ok((s, *rate))
            }
            DemandConfig::Sample { seed, x } => Ok((generate_sample(net, *seed), *x)),
        }
    }

    pub fn arrivals_and_routing(
        &self,
        net: &Network,
    ) -> Result<(ArrivalConfig, RoutingMatrix), CliError> {
        let (sample, x) = self.sample(net)?;
        let routing = sample.routing_matrix(net).map_err(|e| field("demand", e))?;
        Ok((
            sample.arrivals(x, self.batch_probability, self.batch_size),
            routing,
        ))
    }
}
