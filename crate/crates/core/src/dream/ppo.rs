//! PPO update of actor and critic on imagined rollouts.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::actor::{joint_log_prob, mean_entropy, Actor, Critic};
use super::imagine::{ImagStep, Rollouts};
use super::returns::{lambda_returns, normalize};
use crate::error::{Error, Result};
use crate::features::symlog;
use crate::nn::{Adam, Mat, Tape, Var};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PpoConfig {
    pub clip_eps: f64,
    pub passes: usize,
    /// Rollouts per minibatch.
    pub minibatch: usize,
    pub gamma: f64,
    pub lambda: f64,
    pub temporal_penalty: f64,
    pub lr_actor: f64,
    pub lr_critic: f64,
    pub grad_clip: f64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            clip_eps: 0.2,
            passes: 4,
            minibatch: 8,
            gamma: 0.99,
            lambda: 0.95,
            temporal_penalty: 0.1,
            lr_actor: 3e-4,
            lr_critic: 3e-4,
            grad_clip: 100.0,
        }
    }
}

/// Actor inputs and PPO targets for a set of (rollout, step) samples,
/// stacked as networks of `n` nodes.
pub struct PpoBatch {
    pub h: Mat,
    pub z: Mat,
    pub a_prev: Mat,
    pub action: Mat,
    pub alive: Arc<Vec<f64>>,
    pub s: Mat,
    pub old_logp: Vec<f64>,
    pub adv: Vec<f64>,
    /// Symlog lambda-returns, the critic's regression targets.
    pub target: Mat,
    pub n: usize,
}

/// Lambda-returns per step and rollout: `returns[t][b]`.
pub fn rollout_returns(ro: &Rollouts, gamma: f64, lam: f64) -> Vec<Vec<f64>> {
    let hz = ro.horizon();
    let mut out = vec![vec![0.0; ro.batch()]; hz];
    for b in 0..ro.batch() {
        let r = ro.shaped_rewards(b);
        let c: Vec<f64> = ro.steps.iter().map(|s| s.cont[b]).collect();
        let v: Vec<f64> = ro.steps.iter().map(|s| s.value[b]).collect();
        for (t, g) in lambda_returns(&r, &c, &v, ro.bootstrap[b], gamma, lam).into_iter().enumerate() {
            out[t][b] = g;
        }
    }
    out
}

/// Gathers samples `(b, t)` into one batch. `adv` is indexed like `returns`.
pub fn gather(ro: &Rollouts, samples: &[(usize, usize)], returns: &[Vec<f64>], adv: &[Vec<f64>]) -> PpoBatch {
    let n = ro.n;
    let steps = &ro.steps;
    let stack = |get: fn(&ImagStep) -> &Mat, per: usize| -> Mat {
        let cols = get(&steps[0]).cols;
        let mut m = Mat::zeros(samples.len() * per, cols);
        for (k, &(b, t)) in samples.iter().enumerate() {
            let src = &get(&steps[t]).data[b * per * cols..(b + 1) * per * cols];
            m.data[k * per * cols..(k + 1) * per * cols].copy_from_slice(src);
        }
        m
    };
    let mut alive = Vec::with_capacity(samples.len() * n);
    for &(b, _) in samples {
        alive.extend_from_slice(&ro.alive[b * n..(b + 1) * n]);
    }
    PpoBatch {
        h: stack(|s| &s.h, n),
        z: stack(|s| &s.z, n),
        a_prev: stack(|s| &s.a_prev, n),
        action: stack(|s| &s.action, n),
        alive: Arc::new(alive),
        s: stack(|s| &s.s, 1),
        old_logp: samples.iter().map(|&(b, t)| steps[t].logp[b]).collect(),
        adv: samples.iter().map(|&(b, t)| adv[t][b]).collect(),
        target: Mat::from_vec(samples.len(), 1, samples.iter().map(|&(b, t)| symlog(returns[t][b])).collect()),
        n,
    }
}

pub struct ActorLoss<'t> {
    pub loss: Var<'t>,
    pub surrogate: f64,
    pub entropy: f64,
    pub ratios: Vec<f64>,
}

/// Negative clipped surrogate minus the entropy bonus, averaged over samples.
pub fn actor_loss<'t>(actor: &Actor, tape: &'t Tape, batch: &PpoBatch, entropy_coef: f64, eps: f64) -> ActorLoss<'t> {
    let n = batch.n;
    let logits = actor.logits(
        tape,
        tape.constant(batch.h.clone()),
        tape.constant(batch.z.clone()),
        tape.constant(batch.a_prev.clone()),
        n,
    );
    let k = batch.old_logp.len();
    let logp = joint_log_prob(logits, &batch.action, &batch.alive, n);
    let ratio = logp.sub(tape.constant(Mat::from_vec(k, 1, batch.old_logp.clone()))).exp();
    let adv = tape.constant(Mat::from_vec(k, 1, batch.adv.clone()));
    let lo = 1.0 - eps;
    let hi = 1.0 + eps;
    let surr = ratio.mul(adv).minimum(ratio.clamp(lo, hi).mul(adv)).mean();
    let ent = mean_entropy(logits, &batch.alive, n).mean();
    let loss = surr.add(ent.scale(entropy_coef)).neg();
    ActorLoss {
        loss,
        surrogate: surr.item(),
        entropy: ent.item(),
        ratios: ratio.value().data.clone(),
    }
}

pub fn critic_loss<'t>(critic: &Critic, tape: &'t Tape, batch: &PpoBatch) -> Var<'t> {
    let v = critic.forward(tape, tape.constant(batch.s.clone()));
    v.sub(tape.constant(batch.target.clone())).sqr().mean()
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PpoStats {
    pub actor_loss: f64,
    pub critic_loss: f64,
    pub entropy: f64,
    /// Largest `|ratio - 1|` over the first minibatch of the first pass.
    pub first_ratio_dev: f64,
    pub clip_fraction: f64,
}

pub struct PpoState {
    pub actor_opt: Adam,
    pub critic_opt: Adam,
}

impl PpoState {
    pub fn new(cfg: &PpoConfig) -> Self {
        Self {
            actor_opt: Adam::new(cfg.lr_actor, Some(cfg.grad_clip)),
            critic_opt: Adam::new(cfg.lr_critic, Some(cfg.grad_clip)),
        }
    }
}

pub fn ppo_update(
    actor: &mut Actor,
    critic: &mut Critic,
    state: &mut PpoState,
    ro: &Rollouts,
    cfg: &PpoConfig,
    entropy_coef: f64,
    rng: &mut ChaCha8Rng,
) -> Result<PpoStats> {
    let returns = rollout_returns(ro, cfg.gamma, cfg.lambda);
    let (bsz, hz) = (ro.batch(), ro.horizon());
    let flat: Vec<f64> = (0..hz)
        .flat_map(|t| (0..bsz).map(move |b| (t, b)))
        .map(|(t, b)| returns[t][b] - ro.steps[t].value[b])
        .collect();
    let norm = normalize(&flat);
    let adv: Vec<Vec<f64>> = norm.chunks(bsz).map(|c| c.to_vec()).collect();

    let mut stats = PpoStats::default();
    let mut count = 0.0;
    let (mut clipped, mut total) = (0usize, 0usize);
    let mut order: Vec<usize> = (0..bsz).collect();
    for pass in 0..cfg.passes {
        order.shuffle(rng);
        for (mb, chunk) in order.chunks(cfg.minibatch.max(1)).enumerate() {
            let samples: Vec<(usize, usize)> = chunk.iter().flat_map(|&b| (0..hz).map(move |t| (b, t))).collect();
            let batch = gather(ro, &samples, &returns, &adv);

            let tape = Tape::new();
            let al = actor_loss(actor, &tape, &batch, entropy_coef, cfg.clip_eps);
            let a_val = al.loss.item();
            if !a_val.is_finite() {
                return Err(Error::Divergence(format!("non-finite actor loss (entropy {})", al.entropy)));
            }
            if pass == 0 && mb == 0 {
                stats.first_ratio_dev = al.ratios.iter().map(|r| (r - 1.0).abs()).fold(0.0, f64::max);
            }
            clipped += al.ratios.iter().filter(|r| (**r - 1.0).abs() > cfg.clip_eps).count();
            total += al.ratios.len();
            let g = tape.backward(al.loss, actor.store.len()).into_params();
            state.actor_opt.step(&mut actor.store, &g);

            let tape = Tape::new();
            let cl = critic_loss(critic, &tape, &batch);
            let c_val = cl.item();
            if !c_val.is_finite() {
                return Err(Error::Divergence("non-finite critic loss".into()));
            }
            let g = tape.backward(cl, critic.store.len()).into_params();
            state.critic_opt.step(&mut critic.store, &g);

            stats.actor_loss += a_val;
            stats.critic_loss += c_val;
            stats.entropy += al.entropy;
            count += 1.0;
        }
    }
    if count > 0.0 {
        stats.actor_loss /= count;
        stats.critic_loss /= count;
        stats.entropy /= count;
    }
    stats.clip_fraction = if total > 0 { clipped as f64 / total as f64 } else { 0.0 };
    Ok(stats)
}
