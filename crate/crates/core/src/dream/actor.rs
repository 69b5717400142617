//! Node-conditioned actor with attention-based refinement rounds, and the
//! critic on the pooled global state.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::nn::{LayerNorm, Linear, Mat, Mlp, ParamStore, SelfAttention, Tape, Var};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ActorConfig {
    pub embed: usize,
    pub heads: usize,
    pub mlp_hidden: usize,
    /// Refinement rounds; weights are shared across rounds.
    pub rounds: usize,
    pub critic_hidden: usize,
}

impl Default for ActorConfig {
    fn default() -> Self {
        Self {
            embed: 64,
            heads: 4,
            mlp_hidden: 128,
            rounds: 3,
            critic_hidden: 256,
        }
    }
}

pub struct Actor {
    pub cfg: ActorConfig,
    /// World-model recurrent width the actor reads.
    pub hidden: usize,
    pub store: ParamStore,
    enc: Linear,
    enc_ln: LayerNorm,
    coord: SelfAttention,
    coord_ln: LayerNorm,
    init: Mlp,
    refine_in: Linear,
    refine_in_ln: LayerNorm,
    refine_attn: SelfAttention,
    refine_ln: LayerNorm,
    refine_out: Mlp,
}

impl Actor {
    /// `hidden` and `latent` are the world model's per-node widths.
    pub fn new(cfg: ActorConfig, hidden: usize, latent: usize, rng: &mut impl Rng) -> Self {
        let mut s = ParamStore::new();
        let e = cfg.embed;
        let enc = Linear::new(&mut s, "actor.enc", hidden + latent + 1, e, true, rng);
        let enc_ln = LayerNorm::new(&mut s, "actor.enc_ln", e);
        let coord = SelfAttention::new(&mut s, "actor.coord", e, cfg.heads, rng);
        let coord_ln = LayerNorm::new(&mut s, "actor.coord_ln", e);
        let init = Mlp::new(&mut s, "actor.init", &[e, cfg.mlp_hidden, 1], rng);
        let refine_in = Linear::new(&mut s, "actor.refine_in", e + 1, e, true, rng);
        let refine_in_ln = LayerNorm::new(&mut s, "actor.refine_in_ln", e);
        let refine_attn = SelfAttention::new(&mut s, "actor.refine_attn", e, cfg.heads, rng);
        let refine_ln = LayerNorm::new(&mut s, "actor.refine_ln", e);
        let refine_out = Mlp::new(&mut s, "actor.refine_out", &[e, cfg.mlp_hidden, 1], rng);
        Self {
            cfg,
            hidden,
            store: s,
            enc,
            enc_ln,
            coord,
            coord_ln,
            init,
            refine_in,
            refine_in_ln,
            refine_attn,
            refine_ln,
            refine_out,
        }
    }

    /// Per-node CH logits, `rows x 1`, for stacked networks of `group` nodes.
    pub fn logits<'t>(&self, tape: &'t Tape, h: Var<'t>, z: Var<'t>, a_prev: Var<'t>, group: usize) -> Var<'t> {
        let s = &self.store;
        let e = self.enc.forward(tape, s, Var::concat_cols(&[h, z, a_prev]));
        let e = self.enc_ln.forward(tape, s, e).elu();
        let mixed = self.coord.forward(tape, s, e, group);
        let e_hat = self.coord_ln.forward(tape, s, e.add(mixed));
        let mut logit = self.init.forward(tape, s, e_hat);
        for _ in 0..self.cfg.rounds {
            let r = self.refine_in.forward(tape, s, Var::concat_cols(&[e_hat, logit.sigmoid()]));
            let r = self.refine_in_ln.forward(tape, s, r).elu();
            let att = self.refine_attn.forward(tape, s, r, group);
            let r_hat = self.refine_ln.forward(tape, s, r.add(att));
            logit = logit.add(self.refine_out.forward(tape, s, r_hat));
        }
        logit
    }
}

/// Joint Bernoulli log-probability of `actions` per network, counting alive
/// nodes only: `sum_i alive_i (a_i l_i - softplus(l_i))`, `B x 1`.
pub fn joint_log_prob<'t>(logits: Var<'t>, actions: &Mat, alive: &Arc<Vec<f64>>, group: usize) -> Var<'t> {
    let a = logits.tape().constant(actions.clone());
    logits.mul(a).sub(logits.softplus()).group_reduce(group, Arc::clone(alive))
}

/// Mean Bernoulli entropy over the alive nodes of each network, `B x 1`.
pub fn mean_entropy<'t>(logits: Var<'t>, alive: &[f64], group: usize) -> Var<'t> {
    let h = logits.softplus().sub(logits.mul(logits.sigmoid()));
    h.group_reduce(group, Arc::new(crate::wm::model::pool_weights(alive, group)))
}

/// Sampled (or thresholded at 0.5 when `greedy`) actions; dead nodes act 0.
pub fn select_actions(logits: &Mat, alive: &[f64], rng: &mut impl Rng, greedy: bool) -> Mat {
    let data = logits
        .data
        .iter()
        .zip(alive)
        .map(|(&l, &al)| {
            let p = crate::nn::tape::sigmoid(l);
            let on = if greedy { p > 0.5 } else { rng.gen::<f64>() < p };
            (on && al > 0.0) as u8 as f64
        })
        .collect();
    Mat::from_vec(logits.rows, 1, data)
}

/// Two-layer value network on the pooled state; outputs symlog values.
pub struct Critic {
    pub store: ParamStore,
    mlp: Mlp,
}

impl Critic {
    pub fn new(global: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let mut store = ParamStore::new();
        let mlp = Mlp::new(&mut store, "critic", &[global, hidden, 1], rng);
        Self { store, mlp }
    }

    pub fn forward<'t>(&self, tape: &'t Tape, s: Var<'t>) -> Var<'t> {
        self.mlp.forward(tape, &self.store, s)
    }
}
