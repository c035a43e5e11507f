use serde::{Deserialize, Serialize};

use crate::analysis::{lyapunov_aggregated, lyapunov_full};
use crate::control::{select_global, PhasePolicy, PressureSpec, SlotContext};
use crate::dynamics::{FlowRecord, QueueState, Simulation};
use crate::error::Result;

/// Per-slot totals, taken after the slot's transition.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub slot: u64,
    pub total_queue: u64,
    pub arrivals: u64,
    pub exits: u64,
    pub lyapunov_full: f64,
    pub lyapunov_aggregated: f64,
}

/// Runs `slots` slots, letting `policy` choose the phase at the start of each.
/// `observe` sees the record and the state at the end of every slot.
pub fn run<P, F>(
    sim: &mut Simulation<'_>,
    policy: &P,
    pressure: &PressureSpec,
    slots: u64,
    mut observe: F,
) -> Result<()>
where
    P: PhasePolicy + ?Sized,
    F: FnMut(&TrajectoryRecord, &QueueState),
{
    let net = sim.network();
    pressure.validate(net)?;
    let mut flow = FlowRecord::default();
    for _ in 0..slots {
        let phase = {
            let ctx = SlotContext::new(net, sim.state(), sim.routing(), pressure);
            select_global(policy, &ctx)?
        };
        sim.step_into(&phase, &mut flow)?;
        let state = sim.state();
        let record = TrajectoryRecord {
            slot: flow.slot,
            total_queue: state.total(),
            arrivals: flow.total_arrivals(),
            exits: flow.exits,
            lyapunov_full: lyapunov_full(state, &pressure.movement_slopes),
            lyapunov_aggregated: lyapunov_aggregated(state, net, &pressure.node_slopes),
        };
        observe(&record, state);
    }
    Ok(())
}

/// Total queue after every slot.
pub fn run_totals<P: PhasePolicy + ?Sized>(
    sim: &mut Simulation<'_>,
    policy: &P,
    pressure: &PressureSpec,
    slots: u64,
) -> Result<Vec<u64>> {
    let net = sim.network();
    pressure.validate(net)?;
    let mut totals = Vec::with_capacity(slots as usize);
    let mut flow = FlowRecord::default();
    for _ in 0..slots {
        let phase = {
            let ctx = SlotContext::new(net, sim.state(), sim.routing(), pressure);
            select_global(policy, &ctx)?
        };
        sim.step_into(&phase, &mut flow)?;
        totals.push(sim.state().total());
    }
    Ok(totals)
}
