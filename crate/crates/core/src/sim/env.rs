//! Episode reset and the composed simulator step.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::channel::build_adjacency;
use super::clusters::{assign_clusters, compute_reward, connectivity_ratio, step_energy};
use super::mobility::{draw_point, new_leg, step_mobility};
use super::types::{NetSnapshot, NodeState, ScenarioConfig, Vec2};
use crate::error::{Error, Result};
use crate::rng;

/// Connectivity below this ratio terminates an episode.
pub const CONNECTIVITY_FLOOR: f64 = 0.5;

/// Initial snapshot: uniform positions, full energy, no cluster heads.
pub fn reset(sc: &ScenarioConfig, rng: &mut impl Rng) -> NetSnapshot {
    let nodes: Vec<NodeState> = (0..sc.n)
        .map(|_| {
            let position = draw_point(sc.l, rng);
            let mut node = NodeState {
                position,
                velocity: Vec2::ZERO,
                energy: sc.energy.e_init,
                ch_flag: false,
                alive: true,
                cluster_id: -1,
                waypoint: position,
                pause_left: 0.0,
            };
            new_leg(&mut node, sc, rng);
            node
        })
        .collect();
    let (adjacency, received_power) = build_adjacency(&nodes, &sc.channel);
    NetSnapshot {
        t: 0,
        nodes,
        adjacency,
        received_power,
    }
}

/// Applies `action` as the CH set and advances one step.
///
/// Order: CH flags, cluster assignment, energy drain, mobility, topology,
/// reward. The continue flag is 0 only when connectivity of the resulting
/// snapshot falls below [`CONNECTIVITY_FLOOR`]; running out of horizon is a
/// truncation and leaves it at 1. Action bits of dead nodes are ignored.
pub fn simulate_step(
    snap: &NetSnapshot,
    action: &[u8],
    sc: &ScenarioConfig,
    rng: &mut impl Rng,
) -> Result<(NetSnapshot, f64, bool)> {
    let n = snap.n();
    if action.len() != n {
        return Err(Error::InvalidArgument(format!(
            "action has length {}, network has {n} nodes",
            action.len()
        )));
    }
    let mut staged = snap.clone();
    for (node, &a) in staged.nodes.iter_mut().zip(action) {
        node.ch_flag = node.alive && a != 0;
    }
    let masked = staged.ch_vector();
    let clusters = assign_clusters(&masked, &staged);
    let mut nodes = staged.nodes;
    for (node, c) in nodes.iter_mut().zip(clusters) {
        node.cluster_id = c;
    }
    step_energy(&mut nodes, &sc.energy);
    step_mobility(&mut nodes, sc, rng);
    let (adjacency, received_power) = build_adjacency(&nodes, &sc.channel);
    let next = NetSnapshot {
        t: snap.t + 1,
        nodes,
        adjacency,
        received_power,
    };
    let reward = compute_reward(snap, &next, &sc.reward_weights, sc.energy.e_init);
    let cont = connectivity_ratio(&next) >= CONNECTIVITY_FLOOR;
    Ok((next, reward, cont))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepOutcome {
    pub reward: f64,
    pub cont: bool,
    /// Terminated or out of horizon.
    pub done: bool,
}

/// One episode: scenario, owned simulator rng and the current snapshot.
pub struct Env {
    pub scenario: ScenarioConfig,
    rng: ChaCha8Rng,
    snap: NetSnapshot,
    steps: usize,
    done: bool,
    stop_on_terminal: bool,
}

impl Env {
    pub fn new(scenario: ScenarioConfig, seed: u64) -> Self {
        let mut rng = rng::sim_rng(seed);
        let snap = reset(&scenario, &mut rng);
        Self {
            scenario,
            rng,
            snap,
            steps: 0,
            done: false,
            stop_on_terminal: true,
        }
    }

    /// Keeps stepping after a terminal transition until the horizon, as the
    /// evaluation protocol does; the continue flag is still reported.
    pub fn run_full_horizon(mut self) -> Self {
        self.stop_on_terminal = false;
        self
    }

    pub fn snapshot(&self) -> &NetSnapshot {
        &self.snap
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn step(&mut self, action: &[u8]) -> Result<StepOutcome> {
        if self.done {
            return Err(Error::InvalidArgument("episode already finished".into()));
        }
        let (next, reward, cont) = simulate_step(&self.snap, action, &self.scenario, &mut self.rng)?;
        self.snap = next;
        self.steps += 1;
        self.done = (self.stop_on_terminal && !cont) || self.steps >= self.scenario.horizon;
        Ok(StepOutcome {
            reward,
            cont,
            done: self.done,
        })
    }

    pub fn connectivity(&self) -> f64 {
        connectivity_ratio(&self.snap)
    }
}
