//! Phase-selection policies.
//!
//! Both back-pressure rules score every local phase of a junction by
//! `sum_ab W_ab * mu_ab(p)` and pick a maximizer. They differ only in how the
//! weight `W_ab` is formed and, through their observation types, in what they
//! are able to see:
//!
//! - [`bp_star_local`] reads per-direction queues and routing ratios:
//!   `W_ab = max(P_ab - sum_c r_bc P_bc, 0)` with `P_ab = theta_ab Q_ab`.
//! - [`bp_local`] reads aggregated queues and stop-line detectors only:
//!   `W_ab = d_ab max(P_a - P_b, 0)` with `P_a = theta_a Q_a`.
//!
//! Ties are resolved by first preferring a maximizer that activates no
//! zero-weight movement, then the lowest phase index.

use std::cell::OnceCell;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::dynamics::{aggregate_all, detectors, Detector, QueueState, RoutingMatrix};
use crate::error::{Error, Result};
use crate::network::{GlobalPhase, MovementId, Network, NodeId};

/// Relative tolerance for treating two phase scores as equal.
const SCORE_TIE_TOL: f64 = 1e-9;
/// Relative tolerance for treating a pressure difference as zero.
const WEIGHT_ZERO_TOL: f64 = 1e-12;

type Weights = SmallVec<[f64; 16]>;

/// Linear pressure slopes: `theta_ab` per movement for BP*, `theta_a` per node
/// for BP. Also used as the Lyapunov weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PressureSpec {
    pub movement_slopes: Vec<f64>,
    pub node_slopes: Vec<f64>,
}

impl PressureSpec {
    pub fn uniform(net: &Network, movement_slope: f64, node_slope: f64) -> Self {
        Self {
            movement_slopes: vec![movement_slope; net.num_movements()],
            node_slopes: vec![node_slope; net.num_nodes()],
        }
    }

    pub fn unit(net: &Network) -> Self {
        Self::uniform(net, 1.0, 1.0)
    }

    /// Copy with every slope multiplied by `k`.
    pub fn scaled(&self, k: f64) -> Self {
        Self {
            movement_slopes: self.movement_slopes.iter().map(|t| t * k).collect(),
            node_slopes: self.node_slopes.iter().map(|t| t * k).collect(),
        }
    }

    pub fn validate(&self, net: &Network) -> Result<()> {
        if self.movement_slopes.len() != net.num_movements()
            || self.node_slopes.len() != net.num_nodes()
        {
            return Err(Error::Config(format!(
                "pressure slopes cover {} movements / {} nodes, network has {} / {}",
                self.movement_slopes.len(),
                self.node_slopes.len(),
                net.num_movements(),
                net.num_nodes()
            )));
        }
        let bad = self
            .movement_slopes
            .iter()
            .chain(&self.node_slopes)
            .find(|t| !(t.is_finite() && **t > 0.0));
        match bad {
            Some(t) => Err(Error::Config(format!(
                "pressure slope {t} is not strictly positive"
            ))),
            None => Ok(()),
        }
    }
}

/// What BP* may read at one junction: per-direction queues of its inputs and
/// of the nodes its outputs feed, plus the routing rows of those outputs.
#[derive(Clone, Copy, Debug)]
pub struct FullObservation<'a> {
    network: &'a Network,
    junction: usize,
    queues: &'a [u64],
    routing: &'a RoutingMatrix,
}

impl<'a> FullObservation<'a> {
    pub fn new(
        network: &'a Network,
        junction: usize,
        state: &'a QueueState,
        routing: &'a RoutingMatrix,
    ) -> Result<Self> {
        if routing.num_nodes() != network.num_nodes()
            || routing.num_movements() != network.num_movements()
        {
            return Err(Error::RoutingShape {
                expected: network.num_nodes(),
                got: routing.num_nodes(),
            });
        }
        Ok(Self {
            network,
            junction,
            queues: state.counts(),
            routing,
        })
    }

    pub fn junction(&self) -> usize {
        self.junction
    }

    fn owns(&self, m: MovementId) -> bool {
        let j = self.network.movement_junction(m);
        j == self.junction
            || self.network.output_junction(self.network.movement(m).from) == Some(self.junction)
    }

    /// `Q_ab` for a movement of this junction or one leaving one of its outputs.
    pub fn queue(&self, m: MovementId) -> u64 {
        debug_assert!(self.owns(m), "movement outside the observation");
        self.queues[m.0]
    }

    /// Routing row `(movement, r_bc)` of an output node `b`.
    pub fn routing_row(&self, output: NodeId) -> impl Iterator<Item = (MovementId, f64)> + 'a {
        debug_assert_eq!(self.network.output_junction(output), Some(self.junction));
        self.routing.row(output)
    }
}

/// Aggregated queues and detector readings for a whole network at one slot.
/// Per-direction counts are not retained.
#[derive(Clone, Debug)]
pub struct AggregatedFrame {
    node_queues: Vec<u64>,
    detectors: Vec<Detector>,
}

impl AggregatedFrame {
    pub fn from_state(state: &QueueState, network: &Network) -> Self {
        Self {
            node_queues: aggregate_all(state, network),
            detectors: detectors(state, network),
        }
    }

    pub fn observe<'a>(
        &'a self,
        network: &'a Network,
        junction: usize,
    ) -> AggregatedObservation<'a> {
        AggregatedObservation {
            network,
            junction,
            frame: self,
        }
    }
}

/// What BP may read at one junction: `Q_a` for its inputs and outputs and
/// `d_ab` for its movements.
#[derive(Clone, Copy, Debug)]
pub struct AggregatedObservation<'a> {
    network: &'a Network,
    junction: usize,
    frame: &'a AggregatedFrame,
}

impl AggregatedObservation<'_> {
    pub fn junction(&self) -> usize {
        self.junction
    }

    pub fn aggregated(&self, node: NodeId) -> u64 {
        debug_assert!(
            self.network.input_junction(node) == Some(self.junction)
                || self.network.output_junction(node) == Some(self.junction)
        );
        self.frame.node_queues[node.0]
    }

    pub fn detector(&self, m: MovementId) -> Detector {
        debug_assert_eq!(self.network.movement_junction(m), self.junction);
        self.frame.detectors[m.0]
    }
}

fn snap_zero(value: f64, scale: f64) -> f64 {
    if value <= WEIGHT_ZERO_TOL * (1.0 + scale) {
        0.0
    } else {
        value
    }
}

/// Max-weight phase of junction `j` given weights of its movements (indexed
/// relative to the junction's first movement).
fn max_weight_phase(net: &Network, j: usize, weights: &[f64]) -> usize {
    let base = net.junction_movements(j).start;
    let sat = &net.saturation_rates()[base..base + weights.len()];
    let n = net.num_phases(j);
    let mut inline = [0.0; 8];
    let mut spill = Vec::new();
    let scores: &mut [f64] = if n <= inline.len() {
        &mut inline[..n]
    } else {
        spill.resize(n, 0.0);
        &mut spill
    };
    for (p, score) in scores.iter_mut().enumerate() {
        for &k in net.phase_local_indices(j, p) {
            *score += weights[k as usize] * sat[k as usize];
        }
    }
    let best = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let tol = SCORE_TIE_TOL * best.abs().max(1.0);
    let mut first = None;
    for (p, &score) in scores.iter().enumerate() {
        if score < best - tol {
            continue;
        }
        if net
            .phase_local_indices(j, p)
            .iter()
            .all(|&k| weights[k as usize] > 0.0)
        {
            return p;
        }
        first.get_or_insert(p);
    }
    first.expect("at least one phase attains the maximum")
}

/// BP* decision at one junction.
pub fn bp_star_local(obs: &FullObservation<'_>, pressure: &PressureSpec) -> usize {
    let net = obs.network;
    let j = obs.junction;
    let theta = &pressure.movement_slopes;
    let range = net.junction_movements(j);
    let mut weights: Weights = SmallVec::from_elem(0.0, range.len());
    for (w, m) in weights.iter_mut().zip(range.map(MovementId)) {
        let upstream = theta[m.0] * obs.queue(m) as f64;
        let mut downstream = 0.0;
        if !net.is_sink(m) {
            for (c, r) in obs.routing_row(net.movement(m).to) {
                downstream += r * theta[c.0] * obs.queue(c) as f64;
            }
        }
        *w = snap_zero(upstream - downstream, upstream);
    }
    max_weight_phase(net, j, &weights)
}

/// BP decision at one junction. Outputs that leave the network carry zero
/// downstream pressure.
pub fn bp_local(obs: &AggregatedObservation<'_>, pressure: &PressureSpec) -> usize {
    let net = obs.network;
    let j = obs.junction;
    let theta = &pressure.node_slopes;
    let range = net.junction_movements(j);
    let mut weights: Weights = SmallVec::from_elem(0.0, range.len());
    for (w, m) in weights.iter_mut().zip(range.map(MovementId)) {
        let mv = net.movement(m);
        let upstream = theta[mv.from.0] * obs.aggregated(mv.from) as f64;
        let downstream = if net.is_sink(m) {
            0.0
        } else {
            theta[mv.to.0] * obs.aggregated(mv.to) as f64
        };
        *w = obs.detector(m).value() * snap_zero(upstream - downstream, upstream);
    }
    max_weight_phase(net, j, &weights)
}

/// Pre-timed schedule of one junction.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct JunctionCycle {
    /// Cycle length in slots; each phase holds for `period / order.len()` slots.
    pub period: u64,
    /// Permutation of the junction's phase indices.
    pub order: Vec<usize>,
    pub offset: i64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CycleSpec {
    pub junctions: Vec<JunctionCycle>,
}

impl CycleSpec {
    /// Same period at every junction, natural phase order, no offsets.
    pub fn uniform(net: &Network, period: u64) -> Result<Self> {
        let spec = Self {
            junctions: (0..net.num_junctions())
                .map(|j| JunctionCycle {
                    period,
                    order: (0..net.num_phases(j)).collect(),
                    offset: 0,
                })
                .collect(),
        };
        spec.validate(net)?;
        Ok(spec)
    }

    pub fn validate(&self, net: &Network) -> Result<()> {
        if self.junctions.len() != net.num_junctions() {
            return Err(Error::Config(format!(
                "cycle spec covers {} junctions, network has {}",
                self.junctions.len(),
                net.num_junctions()
            )));
        }
        for (j, c) in self.junctions.iter().enumerate() {
            let n = net.num_phases(j);
            let mut sorted = c.order.clone();
            sorted.sort_unstable();
            if sorted != (0..n).collect::<Vec<_>>() {
                return Err(Error::Config(format!(
                    "cycle order of junction {j} is not a permutation of its {n} phases"
                )));
            }
            if c.period < n as u64 {
                return Err(Error::Config(format!(
                    "cycle period {} of junction {j} is shorter than its {n} phases",
                    c.period
                )));
            }
        }
        Ok(())
    }
}

pub fn fixed_cycle_local(cycle: &JunctionCycle, slot: u64) -> usize {
    let n = cycle.order.len() as i128;
    let hold = (cycle.period as i128 / n).max(1);
    let t = slot as i128 + cycle.offset as i128;
    cycle.order[t.div_euclid(hold).rem_euclid(n) as usize]
}

/// Everything a policy may draw its observations from at one slot.
pub struct SlotContext<'a> {
    pub network: &'a Network,
    pub slot: u64,
    pub pressure: &'a PressureSpec,
    state: &'a QueueState,
    routing: &'a RoutingMatrix,
    frame: OnceCell<AggregatedFrame>,
}

impl<'a> SlotContext<'a> {
    pub fn new(
        network: &'a Network,
        state: &'a QueueState,
        routing: &'a RoutingMatrix,
        pressure: &'a PressureSpec,
    ) -> Self {
        Self {
            network,
            slot: state.slot(),
            pressure,
            state,
            routing,
            frame: OnceCell::new(),
        }
    }

    pub fn full_observation(&self, junction: usize) -> Result<FullObservation<'_>> {
        FullObservation::new(self.network, junction, self.state, self.routing)
    }

    pub fn aggregated_observation(&self, junction: usize) -> AggregatedObservation<'_> {
        self.frame().observe(self.network, junction)
    }

    fn frame(&self) -> &AggregatedFrame {
        self.frame
            .get_or_init(|| AggregatedFrame::from_state(self.state, self.network))
    }
}

/// A rule choosing one local phase per junction from a [`SlotContext`].
pub trait PhasePolicy {
    fn select_local(&self, junction: usize, ctx: &SlotContext<'_>) -> Result<usize>;

    /// Decisions for every junction. Implementations may batch work across
    /// junctions but must agree with `select_local` at each one.
    fn select_all(&self, ctx: &SlotContext<'_>) -> Result<GlobalPhase> {
        (0..ctx.network.num_junctions())
            .map(|j| self.select_local(j, ctx))
            .collect::<Result<Vec<_>>>()
            .map(GlobalPhase)
    }
}

pub fn select_global<P: PhasePolicy + ?Sized>(
    policy: &P,
    ctx: &SlotContext<'_>,
) -> Result<GlobalPhase> {
    policy.select_all(ctx)
}

/// [`bp_star_local`] at every junction, computing each output's downstream
/// pressure `sum_c r_bc theta_bc Q_bc` once instead of once per feeding movement.
fn bp_star_all(ctx: &SlotContext<'_>) -> Result<GlobalPhase> {
    let net = ctx.network;
    // Same shape check a FullObservation performs.
    ctx.full_observation(0)?;
    let theta = &ctx.pressure.movement_slopes;
    let q = ctx.state.counts();
    let probs = ctx.routing.as_slice();
    let ends = net.endpoints();
    let sinks = net.sink_flags();
    // Movements of a node are contiguous and in row order, so this sums each
    // row in the same order as `bp_star_local`.
    let mut downstream = vec![0.0; net.num_nodes()];
    for ((mv, r), (t, &qc)) in ends.iter().zip(probs).zip(theta.iter().zip(q)) {
        downstream[mv.from.0] += r * t * qc as f64;
    }
    let weights: Vec<f64> = ends
        .iter()
        .zip(sinks)
        .zip(theta.iter().zip(q))
        .map(|((mv, &sink), (t, &qm))| {
            let upstream = t * qm as f64;
            let down = if sink { 0.0 } else { downstream[mv.to.0] };
            snap_zero(upstream - down, upstream)
        })
        .collect();
    Ok(choose_phases(net, &weights))
}

fn choose_phases(net: &Network, weights: &[f64]) -> GlobalPhase {
    GlobalPhase(
        (0..net.num_junctions())
            .map(|j| max_weight_phase(net, j, &weights[net.junction_movements(j)]))
            .collect(),
    )
}

/// [`bp_local`] at every junction, reading only the aggregated frame.
fn bp_all(ctx: &SlotContext<'_>) -> GlobalPhase {
    let net = ctx.network;
    let frame = ctx.frame();
    let theta = &ctx.pressure.node_slopes;
    let pressure: Vec<f64> = frame
        .node_queues
        .iter()
        .zip(theta)
        .map(|(&qa, t)| t * qa as f64)
        .collect();
    let ends = net.endpoints();
    let sinks = net.sink_flags();
    let weights: Vec<f64> = ends
        .iter()
        .zip(sinks)
        .zip(&frame.detectors)
        .map(|((mv, &sink), d)| {
            let upstream = pressure[mv.from.0];
            let down = if sink { 0.0 } else { pressure[mv.to.0] };
            d.value() * snap_zero(upstream - down, upstream)
        })
        .collect();
    choose_phases(net, &weights)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerKind {
    BpStar,
    Bp,
    Fixed,
}

impl ControllerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ControllerKind::BpStar => "bp_star",
            ControllerKind::Bp => "bp",
            ControllerKind::Fixed => "fixed",
        }
    }
}

impl fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ControllerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bp_star" => Ok(ControllerKind::BpStar),
            "bp" => Ok(ControllerKind::Bp),
            "fixed" => Ok(ControllerKind::Fixed),
            other => Err(Error::Config(format!(
                "unknown controller {other:?} (expected bp_star, bp or fixed)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Controller {
    BpStar,
    Bp,
    Fixed(CycleSpec),
}

impl Controller {
    pub fn kind(&self) -> ControllerKind {
        match self {
            Controller::BpStar => ControllerKind::BpStar,
            Controller::Bp => ControllerKind::Bp,
            Controller::Fixed(_) => ControllerKind::Fixed,
        }
    }
}

impl PhasePolicy for Controller {
    fn select_local(&self, junction: usize, ctx: &SlotContext<'_>) -> Result<usize> {
        match self {
            Controller::BpStar => Ok(bp_star_local(
                &ctx.full_observation(junction)?,
                ctx.pressure,
            )),
            Controller::Bp => Ok(bp_local(
                &ctx.aggregated_observation(junction),
                ctx.pressure,
            )),
            Controller::Fixed(cycle) => Ok(fixed_cycle_local(&cycle.junctions[junction], ctx.slot)),
        }
    }

    fn select_all(&self, ctx: &SlotContext<'_>) -> Result<GlobalPhase> {
        match self {
            Controller::BpStar => bp_star_all(ctx),
            Controller::Bp => Ok(bp_all(ctx)),
            Controller::Fixed(cycle) => Ok(GlobalPhase(
                cycle
                    .junctions
                    .iter()
                    .map(|c| fixed_cycle_local(c, ctx.slot))
                    .collect(),
            )),
        }
    }
}
