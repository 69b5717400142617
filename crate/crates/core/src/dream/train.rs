//! Policy optimisation entirely in imagination.

use std::path::{Path, PathBuf};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::actor::{Actor, ActorConfig, Critic};
use super::imagine::{imagine, StartStates};
use super::ppo::{ppo_update, PpoConfig, PpoState};
use super::returns::{horizon_at, linear_schedule};
use super::PolicyBundle;
use crate::error::{Error, Result};
use crate::nn::{Mat, Tape};
use crate::rng;
use crate::traj::{Dataset, Window};
use crate::wm::{build_steps, WorldModel};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PolicyTrainConfig {
    pub actor: ActorConfig,
    pub ppo: PpoConfig,
    pub epochs: usize,
    /// Imagined rollouts per epoch.
    pub rollouts: usize,
    /// Frames of real history filtered through the posterior before each
    /// start state.
    pub context: usize,
    pub horizon_start: usize,
    pub horizon_end: usize,
    pub entropy_start: f64,
    pub entropy_end: f64,
}

impl Default for PolicyTrainConfig {
    fn default() -> Self {
        Self {
            actor: ActorConfig::default(),
            ppo: PpoConfig::default(),
            epochs: 400,
            rollouts: 16,
            context: 8,
            horizon_start: 5,
            horizon_end: 15,
            entropy_start: 0.03,
            entropy_end: 0.01,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PolicyEpochLog {
    pub epoch: usize,
    pub horizon: usize,
    pub entropy_coef: f64,
    /// Mean shaped reward per imagined step: `wm_reward - penalty`, the
    /// quantity the actor is trained to maximise.
    pub imagined_reward: f64,
    /// Mean world-model reward per imagined step.
    pub wm_reward: f64,
    /// Mean temporal-consistency penalty per imagined step.
    pub penalty: f64,
    pub entropy: f64,
    pub actor_loss: f64,
    pub critic_loss: f64,
}

pub const POLICY_LOG_COLUMNS: [&str; 9] = [
    "epoch", "horizon", "entropy_coef", "imagined_reward", "wm_reward", "penalty", "entropy", "actor_loss", "critic_loss",
];

impl PolicyEpochLog {
    pub fn record(&self) -> Vec<String> {
        vec![
            self.epoch.to_string(),
            self.horizon.to_string(),
            self.entropy_coef.to_string(),
            self.imagined_reward.to_string(),
            self.wm_reward.to_string(),
            self.penalty.to_string(),
            self.entropy.to_string(),
            self.actor_loss.to_string(),
            self.critic_loss.to_string(),
        ]
    }
}

#[derive(Default)]
pub struct PolicyTrainOptions<'a> {
    pub checkpoint: Option<&'a Path>,
    pub log_csv: Option<PathBuf>,
    pub verbose: bool,
}

/// `(episode, transition)` pairs whose continue flag is set.
pub fn start_candidates(ds: &Dataset) -> Vec<(usize, usize)> {
    ds.episodes
        .iter()
        .enumerate()
        .flat_map(|(e, ep)| {
            ep.continues
                .iter()
                .enumerate()
                .filter(|(_, &c)| c)
                .map(move |(t, _)| (e, t))
        })
        .collect()
}

/// Posterior state at the frame after transition `t` of `episode`, filtered
/// over up to `context` frames, together with the action of that transition.
pub fn posterior_start(
    wm: &WorldModel,
    ds: &Dataset,
    picks: &[(usize, usize)],
    context: usize,
    rng: &mut ChaCha8Rng,
) -> StartStates {
    let n = ds.episodes[picks[0].0].n();
    let b = picks.len();
    let cols_h = wm.cfg.hidden;
    let cols_z = wm.cfg.latent();
    let mut start = StartStates {
        h: Mat::zeros(b * n, cols_h),
        z: Mat::zeros(b * n, cols_z),
        a_prev: Mat::zeros(b * n, 1),
        alive: Vec::with_capacity(b * n),
        n,
    };
    for (k, &(e, t)) in picks.iter().enumerate() {
        let last = t + 1;
        let first = (last + 1).saturating_sub(context.max(1));
        let w = Window {
            episode: e,
            offset: first,
            len: last - first + 1,
        };
        let steps = build_steps(ds, &[w]);
        let tape = Tape::no_grad();
        let mut state = wm.initial_state(&tape, n, rng);
        for st in &steps {
            let o = wm.observe_step(&tape, state, tape.constant(st.a_prev.clone()), &st.obs, rng, false);
            state = (o.h, o.z);
        }
        start.h.data[k * n * cols_h..(k + 1) * n * cols_h].copy_from_slice(&state.0.value().data);
        start.z.data[k * n * cols_z..(k + 1) * n * cols_z].copy_from_slice(&state.1.value().data);
        for (i, &a) in ds.episodes[e].actions[t].iter().enumerate() {
            start.a_prev.data[k * n + i] = a as f64;
        }
        start.alive.extend(steps.last().unwrap().obs.alive.iter());
    }
    start
}

pub fn new_policy(wm: &WorldModel, cfg: &ActorConfig, seed: u64) -> PolicyBundle {
    let mut r = rng::init_rng(seed);
    PolicyBundle {
        actor: Actor::new(cfg.clone(), wm.cfg.hidden, wm.cfg.latent(), &mut r),
        critic: Critic::new(wm.cfg.global, cfg.critic_hidden, &mut r),
    }
}

/// Trains actor and critic on imagined rollouts from `ds` start states.
pub fn train_policy(
    wm: &WorldModel,
    ds: &Dataset,
    cfg: &PolicyTrainConfig,
    seed: u64,
    opts: &PolicyTrainOptions<'_>,
) -> Result<(PolicyBundle, Vec<PolicyEpochLog>)> {
    let candidates = start_candidates(ds);
    if candidates.is_empty() {
        return Err(Error::InvalidArgument("dataset has no non-terminal transitions".into()));
    }
    if cfg.rollouts == 0 {
        return Err(Error::InvalidArgument("rollouts must be positive".into()));
    }
    let mut policy = new_policy(wm, &cfg.actor, seed);
    let mut state = PpoState::new(&cfg.ppo);
    let mut pick_rng = rng::train_rng(seed);
    let mut latent = rng::latent_rng(seed);
    let mut act_rng = rng::policy_rng(seed);
    let mut writer = match &opts.log_csv {
        Some(p) => {
            let mut w = csv::Writer::from_path(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
            w.write_record(POLICY_LOG_COLUMNS).map_err(|e| Error::Config(format!("policy log: {e}")))?;
            Some(w)
        }
        None => None,
    };
    let mut log = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let horizon = horizon_at(cfg.horizon_start, cfg.horizon_end, epoch, cfg.epochs);
        let entropy_coef = linear_schedule(cfg.entropy_start, cfg.entropy_end, epoch, cfg.epochs);
        let picks: Vec<(usize, usize)> = (0..cfg.rollouts)
            .map(|_| candidates[pick_rng.gen_range(0..candidates.len())])
            .collect();
        let start = posterior_start(wm, ds, &picks, cfg.context, &mut latent);
        let ro = imagine(&start, wm, &policy.actor, &policy.critic, horizon, cfg.ppo.temporal_penalty, &mut act_rng);
        let steps = (ro.horizon() * ro.batch()) as f64;
        let wm_reward = ro.steps.iter().flat_map(|s| s.reward.iter()).sum::<f64>() / steps;
        let penalty = ro.steps.iter().flat_map(|s| s.penalty.iter()).sum::<f64>() / steps;
        if !wm_reward.is_finite() {
            return Err(Error::Divergence(format!("non-finite imagined reward at epoch {epoch}")));
        }
        let stats = ppo_update(
            &mut policy.actor,
            &mut policy.critic,
            &mut state,
            &ro,
            &cfg.ppo,
            entropy_coef,
            &mut pick_rng,
        )?;
        let row = PolicyEpochLog {
            epoch,
            horizon,
            entropy_coef,
            imagined_reward: wm_reward - penalty,
            wm_reward,
            penalty,
            entropy: stats.entropy,
            actor_loss: stats.actor_loss,
            critic_loss: stats.critic_loss,
        };
        if opts.verbose {
            eprintln!(
                "epoch {epoch}: H {horizon} reward {:.4} wm {wm_reward:.4} penalty {penalty:.4} entropy {:.4}",
                wm_reward - penalty,
                stats.entropy
            );
        }
        if let Some(w) = writer.as_mut() {
            w.write_record(row.record()).map_err(|e| Error::Config(format!("policy log: {e}")))?;
            w.flush().map_err(|e| Error::io("policy log", e))?;
        }
        if let Some(p) = opts.checkpoint {
            policy.save(p)?;
        }
        log.push(row);
    }
    Ok((policy, log))
}
