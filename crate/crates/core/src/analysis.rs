//! Stability diagnostics and experiment logic.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::control::{select_global, PhasePolicy, PressureSpec, SlotContext};
use crate::dynamics::{aggregate, ArrivalConfig, QueueState, RoutingMatrix, Simulation};
use crate::error::{Error, Result};
use crate::network::{MovementId, Network, NodeId, Turn};
use crate::rng::{derive_seed, stream, Purpose};
use crate::simulation::run_totals;

/// `sum_ab theta_ab Q_ab^2`, slopes indexed by movement.
pub fn lyapunov_full(state: &QueueState, slopes: &[f64]) -> f64 {
    state
        .counts()
        .iter()
        .zip(slopes)
        .map(|(&q, &t)| t * (q as f64) * (q as f64))
        .sum()
}

/// `sum_a theta_a (sum_b Q_ab)^2`, slopes indexed by node.
pub fn lyapunov_aggregated(state: &QueueState, net: &Network, slopes: &[f64]) -> f64 {
    (0..net.num_nodes())
        .map(|a| {
            let qa = aggregate(state, net, NodeId(a)) as f64;
            slopes[a] * qa * qa
        })
        .sum()
}

pub const MIN_TRAJECTORY_SLOTS: usize = 10_000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityParams {
    /// Leading fraction of the trajectory ignored by the slope fit.
    pub warmup_fraction: f64,
    /// Stable iff the fitted slope is below this fraction of the total
    /// network arrival rate.
    pub slope_threshold_fraction: f64,
}

impl Default for StabilityParams {
    fn default() -> Self {
        Self {
            warmup_fraction: 0.25,
            slope_threshold_fraction: 0.01,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityVerdict {
    pub stable: bool,
    /// Least-squares growth of the total queue, vehicles per slot.
    pub slope: f64,
    pub threshold: f64,
    pub peak_queue: u64,
    /// Slots `[start, end)` used by the fit.
    pub window: (u64, u64),
}

/// Least-squares slope of `y` against its index.
fn ls_slope(y: &[u64]) -> f64 {
    let n = y.len() as f64;
    let x_mean = (n - 1.0) / 2.0;
    let y_mean = y.iter().map(|&v| v as f64).sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, &v) in y.iter().enumerate() {
        let dx = i as f64 - x_mean;
        sxy += dx * (v as f64 - y_mean);
        sxx += dx * dx;
    }
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}

/// Classifies a total-queue trajectory by the slope of its post-warmup part.
pub fn detect_stability(
    totals: &[u64],
    params: &StabilityParams,
    total_arrival_rate: f64,
) -> Result<StabilityVerdict> {
    if totals.len() < MIN_TRAJECTORY_SLOTS {
        return Err(Error::Precondition(format!(
            "trajectory has {} slots, stability test needs at least {MIN_TRAJECTORY_SLOTS}",
            totals.len()
        )));
    }
    if !(0.0..1.0).contains(&params.warmup_fraction) {
        return Err(Error::Config(format!(
            "warmup_fraction {} outside [0, 1)",
            params.warmup_fraction
        )));
    }
    let start = (totals.len() as f64 * params.warmup_fraction).floor() as usize;
    let window = &totals[start..];
    let slope = ls_slope(window);
    let threshold = params.slope_threshold_fraction * total_arrival_rate;
    Ok(StabilityVerdict {
        stable: slope <= 0.0 || slope < threshold,
        slope,
        threshold,
        peak_queue: totals.iter().copied().max().unwrap_or(0),
        window: (start as u64, totals.len() as u64),
    })
}

pub const MIN_DRIFT_REPLICATIONS: usize = 30;

/// Normal quantile for a two-sided 95% interval.
const Z_95: f64 = 1.959_963_984_540_054;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriftEstimate {
    /// Mean one-slot change of the aggregated Lyapunov function.
    pub mean_drift: f64,
    pub queue_mass_at_eval: u64,
    pub num_replications: usize,
    /// 95% normal-approximation half-width.
    pub confidence_halfwidth: f64,
}

impl DriftEstimate {
    pub fn negative_with_confidence(&self) -> bool {
        self.mean_drift + self.confidence_halfwidth < 0.0
    }

    pub fn positive_with_confidence(&self) -> bool {
        self.mean_drift - self.confidence_halfwidth > 0.0
    }
}

pub struct DriftSetup<'a> {
    pub network: &'a Network,
    pub arrivals: &'a ArrivalConfig,
    pub routing: &'a RoutingMatrix,
    pub pressure: &'a PressureSpec,
    /// Initial count of every movement queue; at least its saturation rate.
    pub heavy_init: u64,
    pub replications: usize,
    pub seed: u64,
}

/// Estimates `E[V(t+1) - V(t) | Q(t)]` from a heavy-load state with the
/// aggregated Lyapunov function, one independent slot per replication.
pub fn estimate_drift<P: PhasePolicy + ?Sized>(
    setup: &DriftSetup<'_>,
    policy: &P,
) -> Result<DriftEstimate> {
    let net = setup.network;
    if setup.replications < MIN_DRIFT_REPLICATIONS {
        return Err(Error::Precondition(format!(
            "drift estimate needs at least {MIN_DRIFT_REPLICATIONS} replications, got {}",
            setup.replications
        )));
    }
    if let Some(m) = net
        .movement_ids()
        .find(|&m| setup.heavy_init < net.saturation(m))
    {
        return Err(Error::Precondition(format!(
            "heavy_init {} is below the saturation rate {} of movement {}",
            setup.heavy_init,
            net.saturation(m),
            net.movement(m)
        )));
    }
    setup.pressure.validate(net)?;

    let initial = QueueState::filled(net, setup.heavy_init);
    let v0 = lyapunov_aggregated(&initial, net, &setup.pressure.node_slopes);
    let phase = {
        let ctx = SlotContext::new(net, &initial, setup.routing, setup.pressure);
        select_global(policy, &ctx)?
    };

    let mut samples = Vec::with_capacity(setup.replications);
    for rep in 0..setup.replications {
        let seed = derive_seed(setup.seed, Purpose::Drift, rep as u64);
        let mut sim = Simulation::with_state(
            net,
            setup.arrivals.clone(),
            setup.routing.clone(),
            seed,
            initial.clone(),
        )?;
        sim.step(&phase)?;
        samples.push(lyapunov_aggregated(sim.state(), net, &setup.pressure.node_slopes) - v0);
    }
    let (mean, sd) = mean_and_sample_sd(&samples);
    Ok(DriftEstimate {
        mean_drift: mean,
        queue_mass_at_eval: initial.total(),
        num_replications: samples.len(),
        confidence_halfwidth: Z_95 * sd / (samples.len() as f64).sqrt(),
    })
}

fn mean_and_sample_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Mean and population standard deviation.
pub fn mean_and_stddev(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Routing of one node in a [`SampleSpec`]: a rate per leaving movement (in
/// network order) and the exit rate; the row sums to 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleRow {
    pub node: NodeId,
    pub rates: Vec<f64>,
    pub exit: f64,
}

/// Routing ratios and base arrival rates; the actual rates of a run are
/// `x * base_rates`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleSpec {
    pub seed: u64,
    /// Indexed by node id; zero off-network.
    pub base_rates: Vec<f64>,
    pub routing: Vec<SampleRow>,
}

impl SampleSpec {
    /// Same straight/left/right split at every approach node and unit base
    /// rates.
    pub fn uniform_turns(net: &Network, straight: f64, left: f64, right: f64) -> Result<Self> {
        let mut routing = Vec::new();
        for a in net.approach_nodes() {
            let mut rates = Vec::new();
            for m in net.node_movements(a).map(MovementId) {
                let mv = net.movement(m);
                rates.push(match net.turn(m) {
                    Some(Turn::Straight) => straight,
                    Some(Turn::Left) => left,
                    Some(Turn::Right) => right,
                    None => {
                        return Err(Error::MissingTurn {
                            from: mv.from,
                            to: mv.to,
                        })
                    }
                });
            }
            let exit = 1.0 - rates.iter().sum::<f64>();
            routing.push(SampleRow {
                node: a,
                rates,
                exit,
            });
        }
        let base_rates = (0..net.num_nodes())
            .map(|a| f64::from(u8::from(net.input_junction(NodeId(a)).is_some())))
            .collect();
        Ok(Self {
            seed: 0,
            base_rates,
            routing,
        })
    }

    pub fn routing_matrix(&self, net: &Network) -> Result<RoutingMatrix> {
        let mut probs = vec![0.0; net.num_movements()];
        for row in &self.routing {
            let range = net.node_movements(row.node);
            if range.len() != row.rates.len() {
                return Err(Error::Config(format!(
                    "sample row of node {} has {} rates, node has {} movements",
                    row.node,
                    row.rates.len(),
                    range.len()
                )));
            }
            for (m, &r) in range.zip(&row.rates) {
                probs[m] = r;
            }
        }
        RoutingMatrix::from_fn(net, |m| probs[m.0])
    }

    pub fn arrivals(&self, x: f64, batch_probability: f64, batch_size: u64) -> ArrivalConfig {
        ArrivalConfig {
            rates: self.base_rates.iter().map(|r| x * r).collect(),
            batch_probability,
            batch_size,
        }
    }
}

/// Draws a random parameter sample: per approach node one U[0,1] weight per
/// direction and a U[0,0.1] exit weight, normalized into routing rates, and a
/// U[0,1] base arrival rate.
pub fn generate_sample(net: &Network, seed: u64) -> SampleSpec {
    let mut rng = stream(seed, Purpose::Sample, 0);
    let mut base_rates = vec![0.0; net.num_nodes()];
    let mut routing = Vec::new();
    for a in net.approach_nodes() {
        let weights: Vec<f64> = net.node_movements(a).map(|_| rng.random::<f64>()).collect();
        let exit_weight = 0.1 * rng.random::<f64>();
        let total = weights.iter().sum::<f64>() + exit_weight;
        routing.push(SampleRow {
            node: a,
            rates: weights.iter().map(|w| w / total).collect(),
            exit: exit_weight / total,
        });
        base_rates[a.0] = rng.random::<f64>();
    }
    SampleSpec {
        seed,
        base_rates,
        routing,
    }
}

/// Stability classification at one value of the arrival scaling `x`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub x: f64,
    pub stable: bool,
    /// One verdict per replication; `stable` is their majority.
    pub verdicts: Vec<StabilityVerdict>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Frontier {
    /// Largest probed `x` classified stable (or the lower bracket end).
    pub x_max: f64,
    /// Final bracket: `lo` stable, `hi` unstable, `hi - lo <= resolution`.
    pub lo: f64,
    pub hi: f64,
    pub resolution: f64,
    pub lower_bracket_stable: bool,
    /// In probe order.
    pub probes: Vec<Probe>,
}

impl Frontier {
    /// The probe that established `x_max`, if any.
    pub fn frontier_probe(&self) -> Option<&Probe> {
        self.probes.iter().find(|p| p.x == self.x_max)
    }
}

/// Bisection for the largest stable scaling in `[x_lo, x_hi]`.
///
/// `x_hi` is probed first and must be unstable. If `x_lo` is already unstable
/// the search stops there and returns `x_lo`.
pub fn find_x_max<F>(x_lo: f64, x_hi: f64, resolution: f64, mut probe: F) -> Result<Frontier>
where
    F: FnMut(f64) -> Result<Probe>,
{
    if !(x_lo >= 0.0 && x_lo < x_hi && resolution > 0.0) {
        return Err(Error::Bracket(format!(
            "need 0 <= x_lo < x_hi and resolution > 0, got [{x_lo}, {x_hi}] at {resolution}"
        )));
    }
    let mut probes = Vec::new();
    let top = probe(x_hi)?;
    if top.stable {
        let slopes: Vec<String> = top
            .verdicts
            .iter()
            .map(|v| format!("slope {:.3} < threshold {:.3}", v.slope, v.threshold))
            .collect();
        return Err(Error::Bracket(format!(
            "stable at x_hi = {x_hi} ({})",
            slopes.join(", ")
        )));
    }
    probes.push(top);
    let bottom = probe(x_lo)?;
    let bottom_stable = bottom.stable;
    probes.push(bottom);
    let (mut lo, mut hi) = (x_lo, x_hi);
    if !bottom_stable {
        return Ok(Frontier {
            x_max: x_lo,
            lo,
            hi: x_lo,
            resolution,
            lower_bracket_stable: false,
            probes,
        });
    }
    while hi - lo > resolution {
        let mid = 0.5 * (lo + hi);
        let p = probe(mid)?;
        if p.stable {
            lo = mid;
        } else {
            hi = mid;
        }
        probes.push(p);
    }
    Ok(Frontier {
        x_max: lo,
        lo,
        hi,
        resolution,
        lower_bracket_stable: true,
        probes,
    })
}

/// A parameter sample plus everything needed to simulate it at any `x`.
#[derive(Clone, Debug)]
pub struct FrontierSetup<'n> {
    pub network: &'n Network,
    pub sample: SampleSpec,
    pub routing: RoutingMatrix,
    pub batch_probability: f64,
    pub batch_size: u64,
    pub pressure: PressureSpec,
    pub slots: u64,
    pub stability: StabilityParams,
    /// Shared by every probe and controller (common random numbers).
    pub seed: u64,
    /// Verdicts per probe, majority-voted.
    pub replications: usize,
}

impl<'n> FrontierSetup<'n> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        network: &'n Network,
        sample: SampleSpec,
        batch_probability: f64,
        batch_size: u64,
        pressure: PressureSpec,
        slots: u64,
        stability: StabilityParams,
        seed: u64,
        replications: usize,
    ) -> Result<Self> {
        let routing = sample.routing_matrix(network)?;
        pressure.validate(network)?;
        if replications == 0 {
            return Err(Error::Config("replications must be at least 1".into()));
        }
        Ok(Self {
            network,
            sample,
            routing,
            batch_probability,
            batch_size,
            pressure,
            slots,
            stability,
            seed,
            replications,
        })
    }

    fn replication_seed(&self, replication: usize) -> u64 {
        if replication == 0 {
            self.seed
        } else {
            derive_seed(self.seed, Purpose::Seed, replication as u64)
        }
    }

    pub fn arrivals(&self, x: f64) -> ArrivalConfig {
        self.sample
            .arrivals(x, self.batch_probability, self.batch_size)
    }

    /// Total-queue trajectory of one run at scaling `x`.
    pub fn simulate<P: PhasePolicy + ?Sized>(
        &self,
        policy: &P,
        x: f64,
        replication: usize,
    ) -> Result<Vec<u64>> {
        let mut sim = Simulation::new(
            self.network,
            self.arrivals(x),
            self.routing.clone(),
            self.replication_seed(replication),
        )?;
        run_totals(&mut sim, policy, &self.pressure, self.slots)
    }

    pub fn probe<P: PhasePolicy + ?Sized>(&self, policy: &P, x: f64) -> Result<Probe> {
        let rate = self.arrivals(x).total_rate();
        let verdicts = (0..self.replications)
            .map(|rep| {
                let totals = self.simulate(policy, x, rep)?;
                detect_stability(&totals, &self.stability, rate)
            })
            .collect::<Result<Vec<_>>>()?;
        let stable_votes = verdicts.iter().filter(|v| v.stable).count();
        Ok(Probe {
            x,
            stable: 2 * stable_votes > verdicts.len(),
            verdicts,
        })
    }

    pub fn find_x_max<P: PhasePolicy + ?Sized>(
        &self,
        policy: &P,
        x_lo: f64,
        x_hi: f64,
        resolution: f64,
    ) -> Result<Frontier> {
        find_x_max(x_lo, x_hi, resolution, |x| self.probe(policy, x))
    }
}

/// `x_max` of BP relative to that of BP*.
pub fn performance_ratio(x_max_bp: f64, x_max_star: f64) -> Result<f64> {
    if x_max_star <= 0.0 || !x_max_star.is_finite() {
        return Err(Error::ZeroDenominator(x_max_star));
    }
    Ok(x_max_bp / x_max_star)
}
