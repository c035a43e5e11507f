//! Static description of a signalized network.
//!
//! Nodes are lanes holding queued vehicles. Each junction owns a set of
//! input nodes, a set of output nodes and a list of feasible phases; a phase
//! is the set of (input, output) movements that receive right-of-way during
//! one slot. An active movement transfers up to its saturation rate per slot,
//! an inactive one transfers nothing.
//!
//! [`NetworkDescription`] is the serializable, possibly invalid form.
//! [`Network`] is the validated, indexed form the simulator works with.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub usize);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Dense index of a movement inside a [`Network`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MovementId(pub usize);

/// An (input, output) pair of one junction. Serialized as `[from, to]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "(NodeId, NodeId)", into = "(NodeId, NodeId)")]
pub struct Movement {
    pub from: NodeId,
    pub to: NodeId,
}

impl Movement {
    pub fn new(from: NodeId, to: NodeId) -> Self {
        Self { from, to }
    }
}

impl From<(NodeId, NodeId)> for Movement {
    fn from((from, to): (NodeId, NodeId)) -> Self {
        Self { from, to }
    }
}

impl From<Movement> for (NodeId, NodeId) {
    fn from(m: Movement) -> Self {
        (m.from, m.to)
    }
}

impl fmt::Display for Movement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.from, self.to)
    }
}

/// Movements granted right-of-way together.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Phase {
    pub movements: Vec<Movement>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Junction {
    pub id: usize,
    pub inputs: Vec<NodeId>,
    pub outputs: Vec<NodeId>,
    pub phases: Vec<Phase>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SaturationEntry {
    pub from: NodeId,
    pub to: NodeId,
    pub rate: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Turn {
    Straight,
    Left,
    Right,
}

/// Optional maneuver label for a movement, used by turn-based routing presets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TurnEntry {
    pub from: NodeId,
    pub to: NodeId,
    pub turn: Turn,
}

/// Serializable network document.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NetworkDescription {
    pub nodes: Vec<NodeId>,
    pub junctions: Vec<Junction>,
    pub saturation: Vec<SaturationEntry>,
    /// Movements whose destination lies outside the network.
    pub exit_sinks: Vec<Movement>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub turns: Vec<TurnEntry>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    Input,
    Output,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Input => "input",
            Role::Output => "output",
        })
    }
}

/// A broken structural invariant of a [`NetworkDescription`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    NodeIdsNotDense {
        position: usize,
        found: NodeId,
    },
    JunctionIdMismatch {
        position: usize,
        id: usize,
    },
    UnknownNode {
        node: NodeId,
    },
    InputOutputOverlap {
        junction: usize,
        node: NodeId,
    },
    NoPhases {
        junction: usize,
    },
    ForeignMovement {
        junction: usize,
        phase: usize,
        movement: Movement,
    },
    PartitionViolated {
        node: NodeId,
        role: Role,
        junctions: Vec<usize>,
    },
    MissingSaturation {
        movement: Movement,
    },
    UnusedSaturation {
        movement: Movement,
    },
    DuplicateSaturation {
        movement: Movement,
    },
    ZeroSaturation {
        movement: Movement,
    },
    SinkNotMovement {
        movement: Movement,
    },
    SinkIntoJunction {
        movement: Movement,
        junction: usize,
    },
    TurnNotMovement {
        movement: Movement,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NodeIdsNotDense { position, found } => {
                write!(f, "node ids not dense: position {position} holds {found}")
            }
            Violation::JunctionIdMismatch { position, id } => {
                write!(f, "junction at position {position} has id {id}")
            }
            Violation::UnknownNode { node } => write!(f, "unknown node {node}"),
            Violation::InputOutputOverlap { junction, node } => {
                write!(f, "junction {junction}: node {node} is both input and output")
            }
            Violation::NoPhases { junction } => write!(f, "junction {junction} has no phases"),
            Violation::ForeignMovement {
                junction,
                phase,
                movement,
            } => write!(
                f,
                "junction {junction} phase {phase}: movement {movement} is not an input/output pair of the junction"
            ),
            Violation::PartitionViolated {
                node,
                role,
                junctions,
            } => write!(
                f,
                "partition violated: node {node} is {role} of junctions {junctions:?}"
            ),
            Violation::MissingSaturation { movement } => {
                write!(f, "missing saturation for movement {movement}")
            }
            Violation::UnusedSaturation { movement } => {
                write!(f, "saturation given for {movement}, which no phase serves")
            }
            Violation::DuplicateSaturation { movement } => {
                write!(f, "duplicate saturation for {movement}")
            }
            Violation::ZeroSaturation { movement } => {
                write!(f, "saturation of {movement} must be at least 1")
            }
            Violation::SinkNotMovement { movement } => {
                write!(f, "exit sink {movement} is not a movement")
            }
            Violation::SinkIntoJunction { movement, junction } => write!(
                f,
                "exit sink {movement} leads into junction {junction}"
            ),
            Violation::TurnNotMovement { movement } => {
                write!(f, "turn label for {movement}, which is not a movement")
            }
        }
    }
}

/// Checks every structural invariant; an empty result means the description
/// can be turned into a [`Network`].
pub fn validate_network(desc: &NetworkDescription) -> Vec<Violation> {
    let mut out = Vec::new();
    let n = desc.nodes.len();

    for (position, &found) in desc.nodes.iter().enumerate() {
        if found != NodeId(position) {
            out.push(Violation::NodeIdsNotDense { position, found });
        }
    }

    let mut unknown = BTreeSet::new();
    let mut check_node = |node: NodeId| {
        if node.0 >= n {
            unknown.insert(node);
        }
    };

    let mut input_of: BTreeMap<NodeId, Vec<usize>> = BTreeMap::new();
    let mut output_of: BTreeMap<NodeId, Vec<usize>> = BTreeMap::new();
    let mut movements = BTreeSet::new();

    for (position, j) in desc.junctions.iter().enumerate() {
        if j.id != position {
            out.push(Violation::JunctionIdMismatch { position, id: j.id });
        }
        let inputs: BTreeSet<_> = j.inputs.iter().copied().collect();
        let outputs: BTreeSet<_> = j.outputs.iter().copied().collect();
        for &node in &inputs {
            check_node(node);
            input_of.entry(node).or_default().push(j.id);
            if outputs.contains(&node) {
                out.push(Violation::InputOutputOverlap {
                    junction: j.id,
                    node,
                });
            }
        }
        for &node in &outputs {
            check_node(node);
            output_of.entry(node).or_default().push(j.id);
        }
        if j.phases.is_empty() {
            out.push(Violation::NoPhases { junction: j.id });
        }
        for (phase, p) in j.phases.iter().enumerate() {
            for &movement in &p.movements {
                check_node(movement.from);
                check_node(movement.to);
                if inputs.contains(&movement.from) && outputs.contains(&movement.to) {
                    movements.insert(movement);
                } else {
                    out.push(Violation::ForeignMovement {
                        junction: j.id,
                        phase,
                        movement,
                    });
                }
            }
        }
    }

    for (role, map) in [(Role::Input, &input_of), (Role::Output, &output_of)] {
        for (&node, junctions) in map {
            if junctions.len() > 1 {
                out.push(Violation::PartitionViolated {
                    node,
                    role,
                    junctions: junctions.clone(),
                });
            }
        }
    }

    let mut seen = BTreeSet::new();
    for entry in &desc.saturation {
        check_node(entry.from);
        check_node(entry.to);
        let movement = Movement::new(entry.from, entry.to);
        if !seen.insert(movement) {
            out.push(Violation::DuplicateSaturation { movement });
            continue;
        }
        if !movements.contains(&movement) {
            out.push(Violation::UnusedSaturation { movement });
        }
        if entry.rate == 0 {
            out.push(Violation::ZeroSaturation { movement });
        }
    }
    for &movement in &movements {
        if !seen.contains(&movement) {
            out.push(Violation::MissingSaturation { movement });
        }
    }

    for &movement in &desc.exit_sinks {
        if !movements.contains(&movement) {
            out.push(Violation::SinkNotMovement { movement });
        } else if let Some(js) = input_of.get(&movement.to) {
            out.push(Violation::SinkIntoJunction {
                movement,
                junction: js[0],
            });
        }
    }
    for t in &desc.turns {
        let movement = Movement::new(t.from, t.to);
        if !movements.contains(&movement) {
            out.push(Violation::TurnNotMovement { movement });
        }
    }

    out.extend(
        unknown
            .into_iter()
            .map(|node| Violation::UnknownNode { node }),
    );
    out
}

#[derive(Clone, Debug)]
struct MovementInfo {
    movement: Movement,
    junction: usize,
    saturation: u64,
    sink: bool,
    turn: Option<Turn>,
}

/// Validated network with dense movement indexing.
///
/// Movements are numbered junction by junction, input by input, in the order
/// the junction lists its outputs, so the movements leaving one node (and
/// those of one junction) occupy a contiguous index range.
#[derive(Clone, Debug)]
pub struct Network {
    description: NetworkDescription,
    movements: Vec<MovementInfo>,
    lookup: HashMap<Movement, MovementId>,
    junction_ranges: Vec<Range<usize>>,
    /// Members of every phase, junction by junction, phase by phase.
    phase_members: Vec<MovementId>,
    /// `phase_members` relative to the junction's first movement.
    phase_locals: Vec<u32>,
    /// `phase_bounds[phase_start[j] + p]..phase_bounds[phase_start[j] + p + 1]`
    /// indexes the members of local phase `p` of junction `j`.
    phase_bounds: Vec<usize>,
    phase_start: Vec<usize>,
    saturation_f64: Vec<f64>,
    endpoints: Vec<Movement>,
    sink_flags: Vec<bool>,
    node_ranges: Vec<Range<usize>>,
    input_of: Vec<Option<usize>>,
    output_of: Vec<Option<usize>>,
}

impl Network {
    pub fn new(description: NetworkDescription) -> Result<Self> {
        let violations = validate_network(&description);
        if !violations.is_empty() {
            return Err(Error::InvalidNetwork(violations));
        }

        let n = description.nodes.len();
        let saturation: HashMap<Movement, u64> = description
            .saturation
            .iter()
            .map(|e| (Movement::new(e.from, e.to), e.rate))
            .collect();
        let sinks: BTreeSet<Movement> = description.exit_sinks.iter().copied().collect();
        let turns: HashMap<Movement, Turn> = description
            .turns
            .iter()
            .map(|t| (Movement::new(t.from, t.to), t.turn))
            .collect();

        let mut movements = Vec::new();
        let mut lookup = HashMap::new();
        let mut junction_ranges = Vec::with_capacity(description.junctions.len());
        let mut node_ranges = vec![0..0; n];
        let mut input_of = vec![None; n];
        let mut output_of = vec![None; n];

        for j in &description.junctions {
            let used: BTreeSet<Movement> = j
                .phases
                .iter()
                .flat_map(|p| p.movements.iter().copied())
                .collect();
            let start = movements.len();
            for &a in &j.inputs {
                input_of[a.0] = Some(j.id);
                let node_start = movements.len();
                for &b in &j.outputs {
                    let movement = Movement::new(a, b);
                    if used.contains(&movement) {
                        lookup.insert(movement, MovementId(movements.len()));
                        movements.push(MovementInfo {
                            movement,
                            junction: j.id,
                            saturation: saturation[&movement],
                            sink: sinks.contains(&movement),
                            turn: turns.get(&movement).copied(),
                        });
                    }
                }
                node_ranges[a.0] = node_start..movements.len();
            }
            for &b in &j.outputs {
                output_of[b.0] = Some(j.id);
            }
            junction_ranges.push(start..movements.len());
        }

        let mut phase_members = Vec::new();
        let mut phase_locals = Vec::new();
        let mut phase_bounds = vec![0];
        let mut phase_start = Vec::with_capacity(description.junctions.len() + 1);
        for (j, range) in description.junctions.iter().zip(&junction_ranges) {
            phase_start.push(phase_bounds.len() - 1);
            for p in &j.phases {
                let set: BTreeSet<MovementId> = p.movements.iter().map(|m| lookup[m]).collect();
                phase_locals.extend(set.iter().map(|m| (m.0 - range.start) as u32));
                phase_members.extend(set);
                phase_bounds.push(phase_members.len());
            }
        }
        phase_start.push(phase_bounds.len() - 1);
        let saturation_f64 = movements.iter().map(|m| m.saturation as f64).collect();
        let endpoints = movements.iter().map(|m| m.movement).collect();
        let sink_flags = movements.iter().map(|m| m.sink).collect();

        Ok(Self {
            description,
            movements,
            lookup,
            junction_ranges,
            phase_members,
            phase_locals,
            phase_bounds,
            phase_start,
            saturation_f64,
            endpoints,
            sink_flags,
            node_ranges,
            input_of,
            output_of,
        })
    }

    pub fn description(&self) -> &NetworkDescription {
        &self.description
    }

    #[inline]
    pub fn num_nodes(&self) -> usize {
        self.node_ranges.len()
    }

    #[inline]
    pub fn num_junctions(&self) -> usize {
        self.junction_ranges.len()
    }

    #[inline]
    pub fn num_movements(&self) -> usize {
        self.movements.len()
    }

    pub fn junction(&self, j: usize) -> &Junction {
        &self.description.junctions[j]
    }

    pub fn junctions(&self) -> &[Junction] {
        &self.description.junctions
    }

    #[inline]
    pub fn movement(&self, m: MovementId) -> Movement {
        self.movements[m.0].movement
    }

    pub fn movement_id(&self, from: NodeId, to: NodeId) -> Option<MovementId> {
        self.lookup.get(&Movement::new(from, to)).copied()
    }

    pub fn movement_ids(&self) -> impl Iterator<Item = MovementId> {
        (0..self.movements.len()).map(MovementId)
    }

    #[inline]
    pub fn saturation(&self, m: MovementId) -> u64 {
        self.movements[m.0].saturation
    }

    /// Saturation rates as floats, indexed by movement.
    #[inline]
    pub fn saturation_rates(&self) -> &[f64] {
        &self.saturation_f64
    }

    /// Every movement's endpoints, indexed by movement.
    #[inline]
    pub fn endpoints(&self) -> &[Movement] {
        &self.endpoints
    }

    /// [`Network::is_sink`] for every movement.
    #[inline]
    pub fn sink_flags(&self) -> &[bool] {
        &self.sink_flags
    }

    /// True when vehicles transferred on `m` leave the network.
    #[inline]
    pub fn is_sink(&self, m: MovementId) -> bool {
        self.movements[m.0].sink
    }

    pub fn turn(&self, m: MovementId) -> Option<Turn> {
        self.movements[m.0].turn
    }

    #[inline]
    pub fn movement_junction(&self, m: MovementId) -> usize {
        self.movements[m.0].junction
    }

    /// Index range of the movements served at junction `j`.
    #[inline]
    pub fn junction_movements(&self, j: usize) -> Range<usize> {
        self.junction_ranges[j].clone()
    }

    /// Index range of the movements leaving `node` (empty for pure sinks).
    #[inline]
    pub fn node_movements(&self, node: NodeId) -> Range<usize> {
        self.node_ranges[node.0].clone()
    }

    #[inline]
    pub fn num_phases(&self, j: usize) -> usize {
        self.phase_start[j + 1] - self.phase_start[j]
    }

    /// Movements activated by local phase `p` of junction `j`, sorted by id.
    #[inline]
    pub fn phase_movements(&self, j: usize, p: usize) -> &[MovementId] {
        let g = self.phase_start[j] + p;
        &self.phase_members[self.phase_bounds[g]..self.phase_bounds[g + 1]]
    }

    /// [`Network::phase_movements`] as offsets from the junction's first movement.
    #[inline]
    pub fn phase_local_indices(&self, j: usize, p: usize) -> &[u32] {
        let g = self.phase_start[j] + p;
        &self.phase_locals[self.phase_bounds[g]..self.phase_bounds[g + 1]]
    }

    pub fn input_junction(&self, node: NodeId) -> Option<usize> {
        self.input_of[node.0]
    }

    pub fn output_junction(&self, node: NodeId) -> Option<usize> {
        self.output_of[node.0]
    }

    /// Nodes that feed a junction; only these hold queues or receive arrivals.
    pub fn approach_nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.num_nodes())
            .map(NodeId)
            .filter(|&a| self.input_of[a.0].is_some())
    }

    /// Number of global phases, saturating at `usize::MAX`.
    pub fn num_global_phases(&self) -> usize {
        (0..self.num_junctions()).fold(1usize, |acc, j| acc.saturating_mul(self.num_phases(j)))
    }

    pub fn service_matrix(&self, p: &GlobalPhase) -> Result<ServiceMatrix> {
        p.check(self)?;
        let mut rates = vec![0; self.movements.len()];
        for (j, &local) in p.0.iter().enumerate() {
            for &m in self.phase_movements(j, local) {
                rates[m.0] = self.saturation(m);
            }
        }
        Ok(ServiceMatrix { rates })
    }
}

impl TryFrom<NetworkDescription> for Network {
    type Error = Error;

    fn try_from(desc: NetworkDescription) -> Result<Self> {
        Network::new(desc)
    }
}

impl From<Network> for NetworkDescription {
    fn from(net: Network) -> Self {
        net.description
    }
}

impl Serialize for Network {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.description.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Network {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let desc = NetworkDescription::deserialize(d)?;
        Network::new(desc).map_err(serde::de::Error::custom)
    }
}

/// One local phase index per junction, in junction-id order.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GlobalPhase(pub Vec<usize>);

impl GlobalPhase {
    pub fn check(&self, net: &Network) -> Result<()> {
        if self.0.len() != net.num_junctions() {
            return Err(Error::PhaseCount {
                expected: net.num_junctions(),
                got: self.0.len(),
            });
        }
        for (junction, &phase) in self.0.iter().enumerate() {
            let available = net.num_phases(junction);
            if phase >= available {
                return Err(Error::InvalidPhase {
                    junction,
                    phase,
                    available,
                });
            }
        }
        Ok(())
    }

    /// Every feasible global phase, in lexicographic order. Intended for
    /// exhaustive checks on small networks.
    pub fn enumerate(net: &Network) -> Vec<GlobalPhase> {
        let mut out = vec![GlobalPhase(Vec::new())];
        for j in 0..net.num_junctions() {
            out = out
                .into_iter()
                .flat_map(|g| {
                    (0..net.num_phases(j)).map(move |p| {
                        let mut v = g.0.clone();
                        v.push(p);
                        GlobalPhase(v)
                    })
                })
                .collect();
        }
        out
    }
}

/// Service rates per movement induced by a global phase: zero or the
/// saturation rate.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ServiceMatrix {
    rates: Vec<u64>,
}

impl ServiceMatrix {
    pub fn get(&self, m: MovementId) -> u64 {
        self.rates[m.0]
    }

    pub fn rate(&self, net: &Network, from: NodeId, to: NodeId) -> u64 {
        net.movement_id(from, to).map_or(0, |m| self.rates[m.0])
    }

    pub fn as_slice(&self) -> &[u64] {
        &self.rates
    }

    pub fn nonzero(&self) -> impl Iterator<Item = (MovementId, u64)> + '_ {
        self.rates
            .iter()
            .enumerate()
            .filter(|(_, &r)| r > 0)
            .map(|(i, &r)| (MovementId(i), r))
    }
}

/// Compass side of a junction. Approach nodes are named by the side vehicles
/// come from; outputs by the side they leave through.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Side {
    North = 0,
    East = 1,
    South = 2,
    West = 3,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::North, Side::East, Side::South, Side::West];

    pub fn opposite(self) -> Side {
        Side::ALL[(self as usize + 2) % 4]
    }

    fn rotate_cw(self, steps: usize) -> Side {
        Side::ALL[(self as usize + steps) % 4]
    }

    /// Exit side for a vehicle arriving from `self` performing `turn`.
    pub fn exit_for(self, turn: Turn) -> Side {
        let heading = self.opposite();
        match turn {
            Turn::Straight => heading,
            Turn::Left => heading.rotate_cw(3),
            Turn::Right => heading.rotate_cw(1),
        }
    }

    fn offset(self) -> (isize, isize) {
        match self {
            Side::North => (-1, 0),
            Side::East => (0, 1),
            Side::South => (1, 0),
            Side::West => (0, -1),
        }
    }
}

/// Approach node of junction `(row, col)` for vehicles arriving from `side`.
///
/// Grid junctions are numbered row-major with row 0 on the north edge; the
/// four approach nodes of junction `j` are `4j + side` in N, E, S, W order.
/// Off-grid output nodes follow all approach nodes.
pub fn grid_approach_node(cols: usize, row: usize, col: usize, side: Side) -> NodeId {
    NodeId(4 * (row * cols + col) + side as usize)
}

/// The four phases every grid junction offers, as (approach sides, turns).
///
/// Index 0 and 1 give north-south and east-west traffic straight and right
/// turns; index 2 and 3 give the same axes protected left turns.
pub const GRID_PHASES: [([Side; 2], &[Turn]); 4] = [
    ([Side::North, Side::South], &[Turn::Straight, Turn::Right]),
    ([Side::East, Side::West], &[Turn::Straight, Turn::Right]),
    ([Side::North, Side::South], &[Turn::Left]),
    ([Side::East, Side::West], &[Turn::Left]),
];

/// Builds a `rows x cols` grid of four-way junctions with uniform saturation.
///
/// An output toward a neighboring junction is that neighbor's approach node;
/// outputs toward the grid edge are sink nodes and their movements are exit
/// sinks.
///
/// # Panics
/// If `rows`, `cols` or `saturation_rate` is zero.
pub fn build_grid_network(rows: usize, cols: usize, saturation_rate: u64) -> Network {
    assert!(rows >= 1 && cols >= 1, "grid needs at least one junction");
    assert!(saturation_rate >= 1, "saturation rate must be positive");

    let num_junctions = rows * cols;
    let mut next_sink = 4 * num_junctions;
    // output node per (junction, exit side)
    let mut outputs = vec![[NodeId(0); 4]; num_junctions];
    for r in 0..rows {
        for c in 0..cols {
            for side in Side::ALL {
                let (dr, dc) = side.offset();
                let (nr, nc) = (r as isize + dr, c as isize + dc);
                outputs[r * cols + c][side as usize] =
                    if nr >= 0 && nc >= 0 && (nr as usize) < rows && (nc as usize) < cols {
                        grid_approach_node(cols, nr as usize, nc as usize, side.opposite())
                    } else {
                        next_sink += 1;
                        NodeId(next_sink - 1)
                    };
            }
        }
    }

    let mut desc = NetworkDescription {
        nodes: (0..next_sink).map(NodeId).collect(),
        ..Default::default()
    };
    for r in 0..rows {
        for c in 0..cols {
            let j = r * cols + c;
            let inputs: Vec<NodeId> = Side::ALL
                .iter()
                .map(|&s| grid_approach_node(cols, r, c, s))
                .collect();
            let outs = outputs[j];
            let movement = |from: Side, turn: Turn| {
                Movement::new(
                    grid_approach_node(cols, r, c, from),
                    outs[from.exit_for(turn) as usize],
                )
            };
            let phases = GRID_PHASES
                .iter()
                .map(|(sides, turns)| Phase {
                    movements: sides
                        .iter()
                        .flat_map(|&s| turns.iter().map(move |&t| movement(s, t)))
                        .collect(),
                })
                .collect();
            for from in Side::ALL {
                for turn in [Turn::Straight, Turn::Left, Turn::Right] {
                    let m = movement(from, turn);
                    desc.saturation.push(SaturationEntry {
                        from: m.from,
                        to: m.to,
                        rate: saturation_rate,
                    });
                    desc.turns.push(TurnEntry {
                        from: m.from,
                        to: m.to,
                        turn,
                    });
                    if m.to.0 >= 4 * num_junctions {
                        desc.exit_sinks.push(m);
                    }
                }
            }
            desc.junctions.push(Junction {
                id: j,
                inputs,
                outputs: outs.to_vec(),
                phases,
            });
        }
    }

    Network::new(desc).expect("grid generator produces valid networks")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single() -> Network {
        build_grid_network(1, 1, 10)
    }

    #[test]
    fn single_junction_shape() {
        let net = single();
        assert_eq!(net.num_junctions(), 1);
        assert_eq!(net.approach_nodes().count(), 4);
        assert_eq!(net.num_phases(0), 4);
        assert_eq!(net.num_movements(), 12);
        assert!(net.movement_ids().all(|m| net.saturation(m) == 10));
        assert!(net.movement_ids().all(|m| net.is_sink(m)));
        assert_eq!(net.description().exit_sinks.len(), 12);
    }

    #[test]
    fn side_turn_geometry() {
        // arriving from the north means heading south
        assert_eq!(Side::North.exit_for(Turn::Straight), Side::South);
        assert_eq!(Side::North.exit_for(Turn::Left), Side::East);
        assert_eq!(Side::North.exit_for(Turn::Right), Side::West);
        assert_eq!(Side::East.exit_for(Turn::Left), Side::South);
        assert_eq!(Side::West.exit_for(Turn::Right), Side::South);
    }

    #[test]
    fn phase_a_has_four_movements_at_saturation() {
        let net = single();
        let s = net.service_matrix(&GlobalPhase(vec![0])).unwrap();
        let nonzero: Vec<_> = s.nonzero().collect();
        assert_eq!(nonzero.len(), 4);
        assert!(nonzero.iter().all(|&(_, r)| r == 10));
        for (m, _) in nonzero {
            let from = net.movement(m).from;
            assert!(from == NodeId(0) || from == NodeId(2));
            assert_ne!(net.turn(m), Some(Turn::Left));
        }
    }

    #[test]
    fn phases_cover_each_movement_once() {
        let net = build_grid_network(2, 3, 10);
        for j in 0..net.num_junctions() {
            let mut all: Vec<_> = (0..4)
                .flat_map(|p| net.phase_movements(j, p).to_vec())
                .collect();
            all.sort();
            let expected: Vec<_> = net.junction_movements(j).map(MovementId).collect();
            assert_eq!(all, expected);
        }
    }

    #[test]
    fn one_by_two_shares_nodes() {
        let net = build_grid_network(1, 2, 10);
        assert_eq!(net.num_junctions(), 2);
        let east_of_first = net.junction(0).outputs[Side::East as usize];
        assert_eq!(east_of_first, grid_approach_node(2, 0, 1, Side::West));
        assert_eq!(east_of_first, NodeId(7));
        let west_of_second = net.junction(1).outputs[Side::West as usize];
        assert_eq!(west_of_second, grid_approach_node(2, 0, 0, Side::East));
        assert_eq!(west_of_second, NodeId(1));
        // 8 approach nodes + 6 off-grid outputs
        assert_eq!(net.num_nodes(), 14);
        assert_eq!(net.input_junction(NodeId(7)), Some(1));
        assert_eq!(net.output_junction(NodeId(7)), Some(0));
    }

    #[test]
    fn one_by_two_axis_one_straight_union() {
        let net = build_grid_network(1, 2, 10);
        let s = net.service_matrix(&GlobalPhase(vec![0, 0])).unwrap();
        let mut got: Vec<_> = s.nonzero().map(|(m, _)| net.movement(m)).collect();
        got.sort();
        let mut expected: Vec<_> = (0..2)
            .flat_map(|j| {
                net.phase_movements(j, 0)
                    .iter()
                    .map(|&m| net.movement(m))
                    .collect::<Vec<_>>()
            })
            .collect();
        expected.sort();
        assert_eq!(got, expected);
        // hand enumeration: N/S approaches of both junctions, straight + right
        let cols = 2;
        let mut by_hand = Vec::new();
        for c in 0..2 {
            let j = c;
            let outs = &net.junction(j).outputs;
            let n = grid_approach_node(cols, 0, c, Side::North);
            let s_ = grid_approach_node(cols, 0, c, Side::South);
            by_hand.push(Movement::new(n, outs[Side::South as usize]));
            by_hand.push(Movement::new(n, outs[Side::West as usize]));
            by_hand.push(Movement::new(s_, outs[Side::North as usize]));
            by_hand.push(Movement::new(s_, outs[Side::East as usize]));
        }
        by_hand.sort();
        assert_eq!(got, by_hand);
    }

    #[test]
    fn full_grid_interior_count() {
        let net = build_grid_network(21, 21, 10);
        assert_eq!(net.num_junctions(), 441);
        let interior = (0..441)
            .filter(|&j| {
                net.junction_movements(j)
                    .all(|m| !net.is_sink(MovementId(m)))
            })
            .count();
        assert_eq!(interior, 19 * 19);
    }

    #[test]
    fn grid_is_valid() {
        let net = build_grid_network(3, 3, 10);
        assert!(validate_network(net.description()).is_empty());
    }

    #[test]
    fn detects_partition_violation() {
        let mut desc = build_grid_network(1, 2, 10).description().clone();
        // make node 0 (north approach of junction 0) also an input of junction 1
        desc.junctions[1].inputs.push(NodeId(0));
        let v = validate_network(&desc);
        assert_eq!(
            v,
            vec![Violation::PartitionViolated {
                node: NodeId(0),
                role: Role::Input,
                junctions: vec![0, 1],
            }]
        );
    }

    #[test]
    fn detects_missing_saturation() {
        let mut desc = single().description().clone();
        let removed = desc.saturation.remove(3);
        let v = validate_network(&desc);
        assert_eq!(
            v,
            vec![Violation::MissingSaturation {
                movement: Movement::new(removed.from, removed.to)
            }]
        );
        assert!(matches!(Network::new(desc), Err(Error::InvalidNetwork(_))));
    }

    #[test]
    fn rejects_bad_phase_index() {
        let net = single();
        assert!(matches!(
            net.service_matrix(&GlobalPhase(vec![4])),
            Err(Error::InvalidPhase { phase: 4, .. })
        ));
        assert!(matches!(
            net.service_matrix(&GlobalPhase(vec![0, 0])),
            Err(Error::PhaseCount { .. })
        ));
    }

    #[test]
    fn enumerate_counts() {
        assert_eq!(
            GlobalPhase::enumerate(&build_grid_network(1, 2, 10)).len(),
            16
        );
        assert_eq!(build_grid_network(2, 2, 10).num_global_phases(), 256);
    }
}
