//! Latent rollouts under the prior dynamics, driven by the actor.

use std::sync::Arc;

use rand_chacha::ChaCha8Rng;

use super::actor::{joint_log_prob, select_actions, Actor, Critic};
use crate::features::symexp;
use crate::nn::{Mat, Tape, Var};
use crate::wm::WorldModel;

/// Posterior states to imagine from: `B` networks of `n` nodes stacked.
#[derive(Clone, Debug)]
pub struct StartStates {
    pub h: Mat,
    pub z: Mat,
    /// `B*n x 1` CH flags currently in effect.
    pub a_prev: Mat,
    pub alive: Vec<f64>,
    pub n: usize,
}

impl StartStates {
    pub fn batch(&self) -> usize {
        self.h.rows / self.n
    }
}

/// One imagined transition for every rollout of the batch.
#[derive(Clone, Debug)]
pub struct ImagStep {
    pub h: Mat,
    pub z: Mat,
    pub a_prev: Mat,
    pub action: Mat,
    /// Joint log-probability of `action` under the acting policy, per rollout.
    pub logp: Vec<f64>,
    /// Pooled state the critic saw, `B x global`.
    pub s: Mat,
    /// Critic value of `s` in raw units.
    pub value: Vec<f64>,
    /// Predicted reward of the transition (raw units).
    pub reward: Vec<f64>,
    /// Predicted continue probability after the transition.
    pub cont: Vec<f64>,
    /// `scale * |a_t - a_{t-1}|_1 / N`, subtracted from the reward stream.
    pub penalty: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct Rollouts {
    pub steps: Vec<ImagStep>,
    /// Critic value of the state after the last step.
    pub bootstrap: Vec<f64>,
    pub alive: Arc<Vec<f64>>,
    pub n: usize,
}

impl Rollouts {
    pub fn batch(&self) -> usize {
        self.bootstrap.len()
    }

    pub fn horizon(&self) -> usize {
        self.steps.len()
    }

    /// Reward stream the policy optimises for rollout `b`.
    pub fn shaped_rewards(&self, b: usize) -> Vec<f64> {
        self.steps.iter().map(|s| s.reward[b] - s.penalty[b]).collect()
    }
}

/// `|a - b|_1 / n` per network.
pub fn flip_fraction(a: &Mat, b: &Mat, n: usize) -> Vec<f64> {
    a.data
        .chunks(n)
        .zip(b.data.chunks(n))
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| (p - q).abs()).sum::<f64>() / n as f64)
        .collect()
}

fn value_of<'t>(critic: &Critic, tape: &'t Tape, s: Var<'t>) -> Vec<f64> {
    critic.forward(tape, s).value().data.iter().map(|&v| symexp(v)).collect()
}

/// Rolls `horizon` steps from `start` with prior dynamics only.
pub fn imagine(
    start: &StartStates,
    wm: &WorldModel,
    actor: &Actor,
    critic: &Critic,
    horizon: usize,
    penalty_scale: f64,
    rng: &mut ChaCha8Rng,
) -> Rollouts {
    let n = start.n;
    let alive = Arc::new(start.alive.clone());
    let (mut h, mut z, mut a_prev) = (start.h.clone(), start.z.clone(), start.a_prev.clone());
    let mut steps = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        let tape = Tape::no_grad();
        let (hv, zv) = (tape.constant(h.clone()), tape.constant(z.clone()));
        let s = wm.pool(&tape, hv, zv, &alive, n);
        let value = value_of(critic, &tape, s);
        let logits = actor.logits(&tape, hv, zv, tape.constant(a_prev.clone()), n);
        let action = select_actions(&logits.value(), &alive, rng, false);
        let logp = joint_log_prob(logits, &action, &alive, n).value().data.clone();
        let (h2, z2) = wm.imagine_step(&tape, (hv, zv), tape.constant(action.clone()), n, rng);
        let s2 = wm.pool(&tape, h2, z2, &alive, n);
        let g = wm.decode_global(&tape, s2);
        let reward = g.reward.value().data.iter().map(|&v| symexp(v)).collect();
        let cont = g.cont_logit.sigmoid().value().data.clone();
        let penalty = flip_fraction(&action, &a_prev, n).into_iter().map(|f| penalty_scale * f).collect();
        steps.push(ImagStep {
            h: std::mem::replace(&mut h, (*h2.value()).clone()),
            z: std::mem::replace(&mut z, (*z2.value()).clone()),
            a_prev: std::mem::replace(&mut a_prev, action.clone()),
            action,
            logp,
            s: (*s.value()).clone(),
            value,
            reward,
            cont,
            penalty,
        });
    }
    let tape = Tape::no_grad();
    let s = wm.pool(&tape, tape.constant(h), tape.constant(z), &alive, n);
    let bootstrap = value_of(critic, &tape, s);
    Rollouts {
        steps,
        bootstrap,
        alive,
        n,
    }
}
