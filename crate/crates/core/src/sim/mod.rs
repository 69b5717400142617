//! Seeded physics simulator for a mobile ad hoc network.

pub mod catalog;
pub mod channel;
pub mod clusters;
pub mod env;
pub mod mobility;
pub mod types;

pub use channel::{build_adjacency, received_power};
pub use clusters::{assign_clusters, compute_reward, connectivity_ratio, reward_terms, step_energy, RewardTerms};
pub use env::{CONNECTIVITY_FLOOR, reset, simulate_step, Env, StepOutcome};
pub use mobility::step_mobility;
pub use types::*;
