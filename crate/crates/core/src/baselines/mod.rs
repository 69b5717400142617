//! Classical cluster-head election baselines and a DQN learner. Each maps a
//! snapshot to a CH bit per node; dead nodes always get 0.

mod classic;
pub mod dqn;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use classic::{dmac_select, heed_select, leach_select, lowest_id_select, wca_select, WcaWeights};
pub use dqn::{dqn_policy, dqn_train, DqnConfig, DqnPolicy, QNet};

use crate::error::{Error, Result};
use crate::sim::NetSnapshot;

/// Anything that elects cluster heads step by step.
pub trait ClusterPolicy: Send {
    fn name(&self) -> &str;

    /// Clears per-episode memory.
    fn reset(&mut self);

    fn act(&mut self, snap: &NetSnapshot, rng: &mut ChaCha8Rng) -> Vec<u8>;
}

/// Baseline hyperparameters. `None` fields derive from the network size.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    pub wca: WcaWeights,
    /// Ideal cluster degree for WCA, default `sqrt(N)`.
    pub wca_delta_ideal: Option<f64>,
    /// LEACH desired CH fraction, default `sqrt(N) / N`.
    pub leach_p: Option<f64>,
    pub heed_c_prob: f64,
    pub heed_p_min: f64,
    pub heed_max_iter: usize,
    /// Per-episode CH probability range for the random behaviour policy.
    pub random_p: (f64, f64),
    pub dqn: DqnConfig,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            wca: WcaWeights::default(),
            wca_delta_ideal: None,
            leach_p: None,
            heed_c_prob: 0.05,
            heed_p_min: 1e-4,
            heed_max_iter: 10,
            random_p: (0.02, 0.5),
            dqn: DqnConfig::default(),
        }
    }
}

pub const BASELINE_NAMES: [&str; 7] = ["lowest_id", "wca", "leach", "heed", "dmac", "dqn", "random"];

fn alive_mask(snap: &NetSnapshot, mut a: Vec<u8>) -> Vec<u8> {
    for (x, node) in a.iter_mut().zip(&snap.nodes) {
        if !node.alive {
            *x = 0;
        }
    }
    a
}

pub struct LowestId;

impl ClusterPolicy for LowestId {
    fn name(&self) -> &str {
        "lowest_id"
    }
    fn reset(&mut self) {}
    fn act(&mut self, snap: &NetSnapshot, _: &mut ChaCha8Rng) -> Vec<u8> {
        lowest_id_select(snap)
    }
}

pub struct Dmac;

impl ClusterPolicy for Dmac {
    fn name(&self) -> &str {
        "dmac"
    }
    fn reset(&mut self) {}
    fn act(&mut self, snap: &NetSnapshot, _: &mut ChaCha8Rng) -> Vec<u8> {
        dmac_select(snap)
    }
}

/// WCA with cumulative CH time as episode memory.
pub struct Wca {
    pub weights: WcaWeights,
    pub delta_ideal: Option<f64>,
    ch_time: Vec<f64>,
}

impl Wca {
    pub fn new(weights: WcaWeights, delta_ideal: Option<f64>) -> Self {
        Self {
            weights,
            delta_ideal,
            ch_time: Vec::new(),
        }
    }
}

impl ClusterPolicy for Wca {
    fn name(&self) -> &str {
        "wca"
    }
    fn reset(&mut self) {
        self.ch_time.clear();
    }
    fn act(&mut self, snap: &NetSnapshot, _: &mut ChaCha8Rng) -> Vec<u8> {
        let n = snap.n();
        self.ch_time.resize(n, 0.0);
        let delta = self.delta_ideal.unwrap_or((n as f64).sqrt());
        let a = wca_select(snap, &self.weights, delta, &self.ch_time);
        for (t, &c) in self.ch_time.iter_mut().zip(&a) {
            *t += c as f64;
        }
        a
    }
}

/// LEACH with its round counter and per-epoch service history.
pub struct Leach {
    pub p: Option<f64>,
    round: usize,
    served: Vec<bool>,
}

impl Leach {
    pub fn new(p: Option<f64>) -> Self {
        Self {
            p,
            round: 0,
            served: Vec::new(),
        }
    }
}

impl ClusterPolicy for Leach {
    fn name(&self) -> &str {
        "leach"
    }
    fn reset(&mut self) {
        self.round = 0;
        self.served.clear();
    }
    fn act(&mut self, snap: &NetSnapshot, rng: &mut ChaCha8Rng) -> Vec<u8> {
        let n = snap.n();
        let p = self.p.unwrap_or(1.0 / (n as f64).sqrt());
        let epoch = (1.0 / p).floor().max(1.0) as usize;
        if self.round % epoch == 0 || self.served.len() != n {
            self.served = vec![false; n];
        }
        let a = leach_select(snap, p, self.round, &self.served, rng);
        for (s, &c) in self.served.iter_mut().zip(&a) {
            *s |= c != 0;
        }
        self.round += 1;
        a
    }
}

pub struct Heed {
    pub c_prob: f64,
    pub p_min: f64,
    pub max_iter: usize,
    pub e_init: f64,
}

impl ClusterPolicy for Heed {
    fn name(&self) -> &str {
        "heed"
    }
    fn reset(&mut self) {}
    fn act(&mut self, snap: &NetSnapshot, rng: &mut ChaCha8Rng) -> Vec<u8> {
        heed_select(snap, self.c_prob, self.p_min, self.max_iter, self.e_init, rng)
    }
}

/// Every alive node is a CH independently with probability `p`, drawn
/// uniformly from `range` at the start of each episode.
pub struct RandomCh {
    pub range: (f64, f64),
    p: Option<f64>,
}

impl RandomCh {
    pub fn new(range: (f64, f64)) -> Self {
        Self { range, p: None }
    }
}

impl ClusterPolicy for RandomCh {
    fn name(&self) -> &str {
        "random"
    }
    fn reset(&mut self) {
        self.p = None;
    }
    fn act(&mut self, snap: &NetSnapshot, rng: &mut ChaCha8Rng) -> Vec<u8> {
        use rand::Rng;
        let (lo, hi) = self.range;
        let p = *self.p.get_or_insert_with(|| if hi > lo { rng.gen_range(lo..hi) } else { lo });
        let a = (0..snap.n()).map(|_| rng.gen_bool(p) as u8).collect();
        alive_mask(snap, a)
    }
}

/// Builds a non-learning baseline by name. `dqn` needs a trained network and
/// is constructed through [`DqnPolicy`] instead.
pub fn make_baseline(name: &str, cfg: &BaselineConfig, e_init: f64) -> Result<Box<dyn ClusterPolicy>> {
    Ok(match name {
        "lowest_id" => Box::new(LowestId),
        "wca" => Box::new(Wca::new(cfg.wca.clone(), cfg.wca_delta_ideal)),
        "leach" => Box::new(Leach::new(cfg.leach_p)),
        "heed" => Box::new(Heed {
            c_prob: cfg.heed_c_prob,
            p_min: cfg.heed_p_min,
            max_iter: cfg.heed_max_iter,
            e_init,
        }),
        "dmac" => Box::new(Dmac),
        "random" => Box::new(RandomCh::new(cfg.random_p)),
        "dqn" => {
            return Err(Error::InvalidArgument(
                "dqn needs a trained Q-network; build it with DqnPolicy".into(),
            ))
        }
        other => {
            return Err(Error::Unknown {
                kind: "algorithm",
                name: other.to_string(),
            })
        }
    })
}
