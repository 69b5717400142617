//! Offline trajectories: collection under behaviour policies, the on-disk
//! dataset container and contiguous sequence batching.

mod batch;
mod collect;
mod format;

pub use batch::{batch_sequences, BatchIter, Window};
pub use collect::{collect, run_episode, run_episode_full, CollectSpec};
pub use format::{load, save, DATASET_SCHEMA_VERSION};

use serde::{Deserialize, Serialize};

use crate::sim::{build_adjacency, NetSnapshot, NodeState, ScenarioConfig};

/// One recorded episode. `frames` holds `T + 1` node-state snapshots;
/// `actions[t]`, `rewards[t]` and `continues[t]` belong to the transition
/// `frames[t] -> frames[t + 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    /// Index into [`Dataset::scenarios`].
    pub scenario: usize,
    pub seed: u64,
    pub policy: String,
    pub frames: Vec<Vec<NodeState>>,
    pub actions: Vec<Vec<u8>>,
    pub rewards: Vec<f64>,
    pub continues: Vec<bool>,
}

impl Trajectory {
    pub fn n(&self) -> usize {
        self.frames[0].len()
    }

    /// Number of transitions.
    pub fn transitions(&self) -> usize {
        self.actions.len()
    }

    /// Full snapshot at frame `k`; topology is rebuilt from positions.
    pub fn snapshot(&self, k: usize, sc: &ScenarioConfig) -> NetSnapshot {
        let nodes = self.frames[k].clone();
        let (adjacency, received_power) = build_adjacency(&nodes, &sc.channel);
        NetSnapshot {
            t: k,
            nodes,
            adjacency,
            received_power,
        }
    }

    /// Checks the structural invariants.
    pub fn validate(&self) -> Result<(), String> {
        let t = self.actions.len();
        if t < 1 {
            return Err("trajectory needs at least one transition".into());
        }
        if self.frames.len() != t + 1 || self.rewards.len() != t || self.continues.len() != t {
            return Err(format!(
                "misaligned arrays: {} frames, {} actions, {} rewards, {} continues",
                self.frames.len(),
                t,
                self.rewards.len(),
                self.continues.len()
            ));
        }
        let n = self.n();
        if self.frames.iter().any(|f| f.len() != n) || self.actions.iter().any(|a| a.len() != n) {
            return Err("node count varies within trajectory".into());
        }
        if let Some(k) = self.continues.iter().position(|c| !c) {
            if k + 1 != t {
                return Err(format!("continue flag 0 at step {k} before the final step {}", t - 1));
            }
        }
        Ok(())
    }
}

/// Behaviour-policy name and mixture weight.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixEntry {
    pub policy: String,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub scenarios: Vec<ScenarioConfig>,
    pub policy_mix: Vec<MixEntry>,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub meta: DatasetMeta,
    pub episodes: Vec<Trajectory>,
}

impl Dataset {
    pub fn scenario_of(&self, ep: &Trajectory) -> &ScenarioConfig {
        &self.meta.scenarios[ep.scenario]
    }

    pub fn transitions(&self) -> usize {
        self.episodes.iter().map(|e| e.transitions()).sum()
    }

    /// Count of episodes recorded under each policy name.
    pub fn policy_counts(&self) -> Vec<(String, usize)> {
        self.meta
            .policy_mix
            .iter()
            .map(|m| (m.policy.clone(), self.episodes.iter().filter(|e| e.policy == m.policy).count()))
            .collect()
    }
}
