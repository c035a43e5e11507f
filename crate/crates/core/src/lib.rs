//! Discrete-time simulator for networks of signalized intersections under
//! back-pressure phase control.
//!
//! - [`network`]: topology, phases, service matrices, grid generator.
//! - [`dynamics`]: queue state, arrivals, routing, the one-slot transition.
//! - [`control`]: the routing-aware controller (BP*), the routing-free
//!   controller (BP) and a fixed-cycle baseline.
//! - [`analysis`]: Lyapunov functions, drift estimation, stability
//!   classification, frontier search and parameter samples.
//! - [`simulation`]: the slot loop tying a policy to a [`Simulation`].

pub mod analysis;
pub mod control;
pub mod dynamics;
pub mod error;
pub mod network;
pub mod rng;
pub mod simulation;

pub use control::{Controller, ControllerKind, CycleSpec, PhasePolicy, PressureSpec};
pub use dynamics::{ArrivalConfig, FlowRecord, QueueState, RoutingMatrix, Simulation};
pub use error::{Error, Result};
pub use network::{
    build_grid_network, GlobalPhase, Junction, Movement, MovementId, Network, NetworkDescription,
    NodeId, Phase,
};
pub use simulation::{run, TrajectoryRecord};
