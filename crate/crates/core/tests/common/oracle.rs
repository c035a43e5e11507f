// Brute-force phase selection in exact rational arithmetic.
//
// Rates and slopes are read back through their shortest decimal form, so a
// routing ratio configured as 0.2 is treated as exactly 1/5. Every phase of the
// junction is scored from scratch; ties are exact.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, Zero};

use bpsim_core::dynamics::RoutingMatrix;
use bpsim_core::{MovementId, Network, PressureSpec, QueueState};

pub fn decimal(x: f64) -> BigRational {
    let text = format!("{x}");
    let (neg, digits) = match text.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, text.as_str()),
    };
    let (int, frac) = digits.split_once('.').unwrap_or((digits, ""));
    let numer: BigInt = format!("{int}{frac}").parse().unwrap();
    let denom = BigInt::from(10u32).pow(frac.len() as u32);
    let r = BigRational::new(numer, denom);
    if neg {
        -r
    } else {
        r
    }
}

fn int(q: u64) -> BigRational {
    BigRational::from_integer(BigInt::from(q))
}

fn clamp(x: BigRational) -> BigRational {
    if x.is_positive() {
        x
    } else {
        BigRational::zero()
    }
}

/// Exact weights of junction `j`'s movements under the routing-aware rule.
pub fn bp_star_weights(
    net: &Network,
    j: usize,
    state: &QueueState,
    routing: &RoutingMatrix,
    pressure: &PressureSpec,
) -> Vec<(MovementId, BigRational)> {
    let all: Vec<MovementId> = net.movement_ids().collect();
    all.iter()
        .copied()
        .filter(|&m| net.movement_junction(m) == j)
        .map(|m| {
            let up = decimal(pressure.movement_slopes[m.0]) * int(state.get(m));
            let mut down = BigRational::zero();
            if !net.is_sink(m) {
                let b = net.movement(m).to;
                for &c in all.iter().filter(|&&c| net.movement(c).from == b) {
                    down += decimal(routing.prob(c))
                        * decimal(pressure.movement_slopes[c.0])
                        * int(state.get(c));
                }
            }
            (m, clamp(up - down))
        })
        .collect()
}

/// Exact weights of junction `j`'s movements under the aggregated rule.
pub fn bp_weights(
    net: &Network,
    j: usize,
    state: &QueueState,
    pressure: &PressureSpec,
) -> Vec<(MovementId, BigRational)> {
    let node_total = |node| -> u64 {
        net.movement_ids()
            .filter(|&c| net.movement(c).from == node)
            .map(|c| state.get(c))
            .sum()
    };
    net.movement_ids()
        .filter(|&m| net.movement_junction(m) == j)
        .map(|m| {
            let mv = net.movement(m);
            let up = decimal(pressure.node_slopes[mv.from.0]) * int(node_total(mv.from));
            let down = if net.is_sink(m) {
                BigRational::zero()
            } else {
                decimal(pressure.node_slopes[mv.to.0]) * int(node_total(mv.to))
            };
            let s = net.saturation(m);
            let d = BigRational::new(BigInt::from(state.get(m).min(s)), BigInt::from(s));
            (m, d * clamp(up - down))
        })
        .collect()
}

/// Max-weight phase with the zero-weight preference, then lowest index.
pub fn choose(net: &Network, j: usize, weights: &[(MovementId, BigRational)]) -> usize {
    let weight = |m: MovementId| -> BigRational {
        weights
            .iter()
            .find(|(k, _)| *k == m)
            .map(|(_, w)| w.clone())
            .expect("phase movement belongs to the junction")
    };
    let scores: Vec<BigRational> = (0..net.num_phases(j))
        .map(|p| {
            net.phase_movements(j, p)
                .iter()
                .map(|&m| weight(m) * int(net.saturation(m)))
                .fold(BigRational::zero(), |a, b| a + b)
        })
        .collect();
    let best = scores.iter().max().unwrap().clone();
    let maximizers: Vec<usize> = (0..scores.len()).filter(|&p| scores[p] == best).collect();
    maximizers
        .iter()
        .copied()
        .find(|&p| {
            net.phase_movements(j, p)
                .iter()
                .all(|&m| weight(m).is_positive())
        })
        .unwrap_or(maximizers[0])
}

pub fn bp_star(
    net: &Network,
    j: usize,
    state: &QueueState,
    routing: &RoutingMatrix,
    pressure: &PressureSpec,
) -> usize {
    choose(net, j, &bp_star_weights(net, j, state, routing, pressure))
}

pub fn bp(net: &Network, j: usize, state: &QueueState, pressure: &PressureSpec) -> usize {
    choose(net, j, &bp_weights(net, j, state, pressure))
}

/// A randomized junction state: queues, routing and slopes, with values on a
/// coarse grid so that exact ties are common.
pub struct Case {
    pub junction: usize,
    pub state: QueueState,
    pub routing: RoutingMatrix,
    pub pressure: PressureSpec,
}

pub fn random_case<R: rand::Rng>(net: &Network, junction: usize, rng: &mut R) -> Case {
    const SLOPES: [f64; 4] = [0.5, 1.0, 1.5, 2.0];
    const COARSE: [u64; 4] = [0, 5, 10, 20];
    let coarse = rng.random_bool(0.5);
    let mut state = QueueState::empty(net);
    for m in net.movement_ids() {
        let q = if coarse {
            COARSE[rng.random_range(0..COARSE.len())]
        } else if rng.random_bool(0.3) {
            0
        } else {
            rng.random_range(0..=25)
        };
        state.set(m, q);
    }
    let routing = if rng.random_bool(0.25) {
        RoutingMatrix::by_turn(net, 0.5, 0.2, 0.2).unwrap()
    } else {
        RoutingMatrix::from_fn(net, |_| rng.random_range(0..=33) as f64 / 100.0).unwrap()
    };
    let pressure = if rng.random_bool(0.5) {
        PressureSpec::unit(net)
    } else {
        PressureSpec {
            movement_slopes: net
                .movement_ids()
                .map(|_| SLOPES[rng.random_range(0..SLOPES.len())])
                .collect(),
            node_slopes: (0..net.num_nodes())
                .map(|_| SLOPES[rng.random_range(0..SLOPES.len())])
                .collect(),
        }
    };
    Case {
        junction,
        state,
        routing,
        pressure,
    }
}
