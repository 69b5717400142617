//! Per-node DQN: one Q-network shared by every node scores {not-CH, CH} from
//! the node's own features; all nodes receive the global reward.

use std::path::Path;

use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ClusterPolicy;
use crate::container::{self, BodyReader, BodyWriter, Header};
use crate::error::{Error, Result};
use crate::features::{node_features, FeatureNorm, NODE_FEATURES};
use crate::nn::{Adam, Mat, Mlp, ParamStore, Tape};
use crate::rng;
use crate::sim::{Env, NetSnapshot, ScenarioConfig};

pub const DQN_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DqnConfig {
    pub hidden: usize,
    pub replay: usize,
    pub batch: usize,
    pub target_sync: usize,
    pub eps_start: f64,
    pub eps_end: f64,
    pub gamma: f64,
    pub lr: f64,
    pub episodes: usize,
    /// Environment steps collected before the first update.
    pub warmup: usize,
    /// Environment steps between gradient updates.
    pub train_every: usize,
}

impl Default for DqnConfig {
    fn default() -> Self {
        Self {
            hidden: 128,
            replay: 100_000,
            batch: 64,
            target_sync: 500,
            eps_start: 1.0,
            eps_end: 0.05,
            gamma: 0.99,
            lr: 1e-3,
            episodes: 50,
            warmup: 500,
            train_every: 1,
        }
    }
}

/// Shared per-node Q-network `9 -> hidden -> hidden -> 2`.
#[derive(Clone)]
pub struct QNet {
    pub store: ParamStore,
    pub mlp: Mlp,
    pub norm: FeatureNorm,
}

impl QNet {
    pub fn new(hidden: usize, norm: FeatureNorm, rng: &mut impl Rng) -> Self {
        let mut store = ParamStore::new();
        let mlp = Mlp::new(&mut store, "q", &[NODE_FEATURES, hidden, hidden, 2], rng);
        Self { store, mlp, norm }
    }

    /// `rows x 2` Q-values for a stacked feature matrix.
    pub fn q_values(&self, x: &Mat) -> Mat {
        let tape = Tape::no_grad();
        let out = self.mlp.forward(&tape, &self.store, tape.constant(x.clone()));
        out.value().as_ref().clone()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut h = Header::new("dqn", DQN_SCHEMA_VERSION);
        h.set("hidden", self.mlp.layers[0].fan_out);
        h.set("norm", serde_json::to_string(&self.norm).expect("norm serialises"));
        let mut w = BodyWriter::default();
        w.named_mats(&self.store.to_named());
        container::save(path, &h, &w.buf)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (h, body) = container::load(path, "dqn", DQN_SCHEMA_VERSION)?;
        let hidden: usize = h.parse("hidden")?;
        let norm: FeatureNorm =
            serde_json::from_str(h.get("norm")?).map_err(|e| Error::Corrupt(format!("norm: {e}")))?;
        let mut net = QNet::new(hidden, norm, &mut rng::train_rng(0));
        let mut r = BodyReader::new(&body);
        let mats = r.named_mats()?;
        r.finish()?;
        net.store.load_from(&mats).map_err(Error::Corrupt)?;
        Ok(net)
    }
}

/// Per-node argmax with probability `1 - epsilon`, a uniform random bit
/// otherwise. Ties go to "not CH".
pub fn dqn_policy(snap: &NetSnapshot, net: &QNet, epsilon: f64, rng: &mut impl Rng) -> Vec<u8> {
    let q = net.q_values(&node_features(snap, &net.norm));
    (0..snap.n())
        .map(|i| {
            let explore = rng.gen::<f64>() < epsilon;
            let bit: bool = rng.gen();
            let a = if explore { bit } else { q.at(i, 1) > q.at(i, 0) };
            (a && snap.nodes[i].alive) as u8
        })
        .collect()
}

pub struct DqnPolicy {
    pub net: QNet,
    pub epsilon: f64,
}

impl ClusterPolicy for DqnPolicy {
    fn name(&self) -> &str {
        "dqn"
    }
    fn reset(&mut self) {}
    fn act(&mut self, snap: &NetSnapshot, rng: &mut ChaCha8Rng) -> Vec<u8> {
        dqn_policy(snap, &self.net, self.epsilon, rng)
    }
}

struct Transition {
    obs: Vec<f32>,
    next: Vec<f32>,
    action: Vec<u8>,
    alive: Vec<u8>,
    reward: f32,
    terminal: bool,
}

/// Ring buffer of whole-network transitions; features stored in `f32` to
/// halve the footprint.
struct Replay {
    cap: usize,
    items: Vec<Transition>,
    head: usize,
}

impl Replay {
    fn push(&mut self, t: Transition) {
        if self.items.len() < self.cap {
            self.items.push(t);
        } else {
            self.items[self.head] = t;
        }
        self.head = (self.head + 1) % self.cap;
    }
}

fn to_f32(m: &Mat) -> Vec<f32> {
    m.data.iter().map(|&v| v as f32).collect()
}

fn stack(rows: usize, parts: impl Iterator<Item = impl AsRef<[f32]>>) -> Mat {
    let mut data = Vec::with_capacity(rows * NODE_FEATURES);
    for p in parts {
        data.extend(p.as_ref().iter().map(|&v| v as f64));
    }
    Mat::from_vec(rows, NODE_FEATURES, data)
}

/// Training summary: the final network and the undiscounted return of each
/// training episode.
pub struct DqnTrained {
    pub net: QNet,
    pub episode_returns: Vec<f64>,
}

/// Trains on `cfg.episodes` episodes of `scenario`, episode `k` seeded with
/// `seed + k`. Epsilon decays linearly over all training episodes.
pub fn dqn_train(scenario: &ScenarioConfig, cfg: &DqnConfig, seed: u64) -> Result<DqnTrained> {
    let mut trng = rng::train_rng(seed);
    let norm = FeatureNorm::from_scenario(scenario);
    let mut net = QNet::new(cfg.hidden, norm, &mut trng);
    let mut target = net.store.clone();
    let mut opt = Adam::new(cfg.lr, Some(10.0));
    let mut replay = Replay {
        cap: cfg.replay.max(1),
        items: Vec::new(),
        head: 0,
    };
    let mut returns = Vec::with_capacity(cfg.episodes);
    let mut env_steps = 0usize;
    let mut updates = 0usize;
    for ep in 0..cfg.episodes {
        let frac = if cfg.episodes > 1 { ep as f64 / (cfg.episodes - 1) as f64 } else { 1.0 };
        let epsilon = cfg.eps_start + (cfg.eps_end - cfg.eps_start) * frac;
        let ep_seed = seed.wrapping_add(ep as u64);
        let mut env = Env::new(scenario.clone(), ep_seed);
        let mut prng = rng::policy_rng(ep_seed);
        let mut total = 0.0;
        while !env.is_done() {
            let snap = env.snapshot();
            let obs = node_features(snap, &norm);
            let alive: Vec<u8> = snap.nodes.iter().map(|n| n.alive as u8).collect();
            let action = dqn_policy(snap, &net, epsilon, &mut prng);
            let out = env.step(&action)?;
            total += out.reward;
            replay.push(Transition {
                obs: to_f32(&obs),
                next: to_f32(&node_features(env.snapshot(), &norm)),
                action,
                alive,
                reward: out.reward as f32,
                terminal: !out.cont,
            });
            env_steps += 1;
            if env_steps >= cfg.warmup && env_steps % cfg.train_every.max(1) == 0 && replay.items.len() >= cfg.batch {
                let loss = update(&mut net, &target, &replay, cfg, &mut opt, &mut trng);
                if !loss.is_finite() {
                    return Err(Error::Divergence(format!("DQN loss became {loss} at episode {ep}")));
                }
                updates += 1;
                if updates % cfg.target_sync.max(1) == 0 {
                    target = net.store.clone();
                }
            }
        }
        returns.push(total);
    }
    Ok(DqnTrained {
        net,
        episode_returns: returns,
    })
}

fn update(net: &mut QNet, target: &ParamStore, replay: &Replay, cfg: &DqnConfig, opt: &mut Adam, rng: &mut impl Rng) -> f64 {
    let idx = sample(rng, replay.items.len(), cfg.batch).into_vec();
    let batch: Vec<&Transition> = idx.iter().map(|&i| &replay.items[i]).collect();
    let n = batch[0].action.len();
    let rows = batch.len() * n;
    let obs = stack(rows, batch.iter().map(|t| &t.obs));
    let next = stack(rows, batch.iter().map(|t| &t.next));

    // double DQN: online net picks the next action, target net scores it
    let tape = Tape::no_grad();
    let q_next = net.mlp.forward(&tape, target, tape.constant(next.clone())).value();
    let q_online = net.mlp.forward(&tape, &net.store, tape.constant(next)).value();
    let mut y = Mat::zeros(rows, 1);
    let mut pick = Mat::zeros(rows, 2);
    let mut mask = Mat::zeros(rows, 1);
    let mut alive_rows = 0usize;
    for (b, t) in batch.iter().enumerate() {
        for i in 0..n {
            let r = b * n + i;
            let a_star = (q_online.at(r, 1) > q_online.at(r, 0)) as usize;
            let boot = if t.terminal { 0.0 } else { cfg.gamma * q_next.at(r, a_star) };
            y.set(r, 0, t.reward as f64 + boot);
            pick.set(r, t.action[i] as usize, 1.0);
            if t.alive[i] != 0 {
                mask.set(r, 0, 1.0);
                alive_rows += 1;
            }
        }
    }
    let tape = Tape::new();
    let q = net.mlp.forward(&tape, &net.store, tape.constant(obs));
    let q_sa = q.mul(tape.constant(pick)).row_sum();
    let loss = q_sa
        .sub(tape.constant(y))
        .sqr()
        .mul(tape.constant(mask))
        .sum()
        .scale(1.0 / alive_rows.max(1) as f64);
    let value = loss.item();
    let grads = tape.backward(loss, net.store.len()).into_params();
    opt.step(&mut net.store, &grads);
    value
}
