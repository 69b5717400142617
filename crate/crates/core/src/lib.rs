pub mod baselines;
pub mod cli;
pub mod config;
pub mod container;
pub mod dream;
pub mod error;
pub mod eval;
pub mod features;
pub mod nn;
pub mod rng;
pub mod sim;
pub mod traj;
pub mod wm;
