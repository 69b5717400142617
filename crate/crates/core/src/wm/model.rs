//! Network definition: GATv2 encoder, per-node GRU with cross-node attention,
//! categorical prior/posterior, global pooling and decoder heads.
//!
//! Tensors stack a batch of `B` networks with `N` nodes each as `B*N` rows
//! (network-major), so per-network operations work on blocks of `N` rows.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::features::{FeatureNorm, NODE_FEATURES};
use crate::nn::{EdgeList, GatV2Layer, GruCell, LayerNorm, Linear, Mat, Mlp, ParamStore, SelfAttention, Tape, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FreeBits {
    /// Clamp each node's factor-summed KL, then average.
    PerNode,
    /// Average over nodes first, then clamp.
    Global,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WmConfig {
    pub input_dim: usize,
    pub embed: usize,
    pub gat_heads: usize,
    pub gat_layers: usize,
    pub dropout: f64,
    pub hidden: usize,
    pub gru_input: usize,
    pub attn_heads: usize,
    pub factors: usize,
    pub classes: usize,
    pub latent_hidden: usize,
    /// Uniform mixture weight on categorical probabilities.
    pub unimix: f64,
    pub global: usize,
    pub dec_hidden: usize,
    pub node_embed: usize,
    pub head_hidden: usize,
    pub global_head_hidden: usize,
    pub beta: f64,
    pub free_bits: f64,
    pub free_bits_mode: FreeBits,
    pub adj_weight: f64,
}

impl Default for WmConfig {
    fn default() -> Self {
        Self {
            input_dim: NODE_FEATURES,
            embed: 64,
            gat_heads: 4,
            gat_layers: 2,
            dropout: 0.1,
            hidden: 32,
            gru_input: 64,
            attn_heads: 4,
            factors: 8,
            classes: 8,
            latent_hidden: 64,
            unimix: 0.01,
            global: 256,
            dec_hidden: 256,
            node_embed: 32,
            head_hidden: 64,
            global_head_hidden: 128,
            beta: 1.0,
            free_bits: 0.1,
            free_bits_mode: FreeBits::PerNode,
            adj_weight: 0.1,
        }
    }
}

impl WmConfig {
    pub fn latent(&self) -> usize {
        self.factors * self.classes
    }
}

/// Counts of calls into the observation path (encoder, posterior and
/// observation decoders). Imagination must leave them untouched.
#[derive(Debug, Default)]
pub struct AccessGuard {
    pub encode: AtomicUsize,
    pub posterior: AtomicUsize,
    pub decode_obs: AtomicUsize,
}

impl AccessGuard {
    pub fn total(&self) -> usize {
        self.encode.load(Ordering::Relaxed) + self.posterior.load(Ordering::Relaxed) + self.decode_obs.load(Ordering::Relaxed)
    }
}

/// Encoder input for a stack of networks.
pub struct ObsBatch {
    pub features: Mat,
    pub edges: Arc<EdgeList>,
    pub edge_feat: Mat,
    /// 1 for alive rows, 0 for dead.
    pub alive: Vec<f64>,
    pub n: usize,
}

impl ObsBatch {
    pub fn batch(&self) -> usize {
        self.features.rows / self.n
    }
}

pub struct Decoded<'t> {
    /// `B*N x 2`, symlog space.
    pub pos: Var<'t>,
    /// `B*N x 1`, symlog space.
    pub energy: Var<'t>,
    /// `B*N x N` logits, symmetric per block.
    pub adj: Var<'t>,
}

pub struct GlobalHeads<'t> {
    /// `B x 1`, symlog space.
    pub reward: Var<'t>,
    /// `B x 1` logits of the continue probability.
    pub cont_logit: Var<'t>,
}

pub struct Observed<'t> {
    pub h: Var<'t>,
    pub z: Var<'t>,
    /// Mixed posterior and prior probabilities, `rows x factors*classes`.
    pub post: Var<'t>,
    pub prior: Var<'t>,
}

pub struct WorldModel {
    pub cfg: WmConfig,
    /// Node count the observation decoders are shaped for.
    pub n: usize,
    pub norm: FeatureNorm,
    pub store: ParamStore,
    enc: Vec<GatV2Layer>,
    inp: Linear,
    gru: GruCell,
    attn: SelfAttention,
    attn_ln: LayerNorm,
    prior: Mlp,
    post: Mlp,
    pool: Linear,
    dec_shared: Mlp,
    dec_pos: Mlp,
    dec_energy: Mlp,
    dec_adj: Linear,
    dec_reward: Mlp,
    dec_cont: Mlp,
    pub guard: AccessGuard,
}

/// Names of parameters whose shape depends on the decoder node count.
pub const N_SHAPED_PREFIX: &str = "dec.shared.";

impl WorldModel {
    pub fn new(cfg: WmConfig, n: usize, norm: FeatureNorm, rng: &mut impl Rng) -> Self {
        let mut s = ParamStore::new();
        let mut enc = Vec::new();
        let mut width = cfg.input_dim;
        for l in 0..cfg.gat_layers {
            enc.push(GatV2Layer::new(&mut s, &format!("enc.{l}"), width, cfg.embed, cfg.gat_heads, rng));
            width = cfg.embed;
        }
        let lat = cfg.latent();
        let inp = Linear::new(&mut s, "dyn.inp", lat + 1, cfg.gru_input, true, rng);
        let gru = GruCell::new(&mut s, "dyn.gru", cfg.gru_input, cfg.hidden, rng);
        let attn = SelfAttention::new(&mut s, "dyn.attn", cfg.hidden, cfg.attn_heads, rng);
        let attn_ln = LayerNorm::new(&mut s, "dyn.ln", cfg.hidden);
        let prior = Mlp::new(&mut s, "prior", &[cfg.hidden, cfg.latent_hidden, lat], rng);
        let post = Mlp::new(&mut s, "post", &[cfg.hidden + cfg.embed, cfg.latent_hidden, lat], rng);
        let pool = Linear::new(&mut s, "pool", cfg.hidden + lat, cfg.global, true, rng);
        let dec_shared = Mlp::new(&mut s, "dec.shared", &[cfg.global, cfg.dec_hidden, n * cfg.node_embed], rng);
        let dec_pos = Mlp::new(&mut s, "dec.pos", &[cfg.node_embed, cfg.head_hidden, 2], rng);
        let dec_energy = Mlp::new(&mut s, "dec.energy", &[cfg.node_embed, cfg.head_hidden, 1], rng);
        let dec_adj = Linear::new(&mut s, "dec.adj", cfg.node_embed, cfg.node_embed, false, rng);
        let dec_reward = Mlp::new(&mut s, "dec.reward", &[cfg.global, cfg.global_head_hidden, 1], rng);
        let dec_cont = Mlp::new(&mut s, "dec.cont", &[cfg.global, cfg.global_head_hidden, 1], rng);
        Self {
            cfg,
            n,
            norm,
            store: s,
            enc,
            inp,
            gru,
            attn,
            attn_ln,
            prior,
            post,
            pool,
            dec_shared,
            dec_pos,
            dec_energy,
            dec_adj,
            dec_reward,
            dec_cont,
            guard: AccessGuard::default(),
        }
    }

    /// Parameters that do not depend on the decoder node count.
    pub fn core_param_count(&self) -> usize {
        self.store.scalar_count_where(|name| !name.starts_with(N_SHAPED_PREFIX))
    }

    /// Parameters of encoder, dynamics, latent heads and pooling.
    pub fn inference_param_count(&self) -> usize {
        self.store.scalar_count_where(|name| !name.starts_with("dec."))
    }

    /// `B*N x embed` node embeddings; dead rows are zeroed. Dropout applies
    /// only when `dropout_rng` is given.
    pub fn encode<'t>(&self, tape: &'t Tape, obs: &ObsBatch, mut dropout_rng: Option<&mut ChaCha8Rng>) -> Var<'t> {
        self.guard.encode.fetch_add(1, Ordering::Relaxed);
        let mut x = tape.constant(obs.features.clone());
        let ef = tape.constant(obs.edge_feat.clone());
        for layer in &self.enc {
            x = layer.forward(tape, &self.store, x, &obs.edges, ef);
            if let Some(r) = dropout_rng.as_deref_mut() {
                x = dropout(x, self.cfg.dropout, r);
            }
        }
        x.mul_col(tape.constant(Mat::from_vec(obs.alive.len(), 1, obs.alive.clone())))
    }

    /// One recurrent step for every node: GRU on `Linear([z; a])`, then
    /// residual multi-head attention across the `group` nodes of each network
    /// and LayerNorm.
    pub fn dynamics<'t>(&self, tape: &'t Tape, h: Var<'t>, z: Var<'t>, a: Var<'t>, group: usize) -> Var<'t> {
        let x = self.inp.forward(tape, &self.store, Var::concat_cols(&[z, a]));
        let ht = self.gru.forward(tape, &self.store, x, h);
        let mixed = self.attn.forward(tape, &self.store, ht, group);
        self.attn_ln.forward(tape, &self.store, ht.add(mixed))
    }

    pub fn prior_logits<'t>(&self, tape: &'t Tape, h: Var<'t>) -> Var<'t> {
        self.prior.forward(tape, &self.store, h)
    }

    pub fn posterior_logits<'t>(&self, tape: &'t Tape, h: Var<'t>, o: Var<'t>) -> Var<'t> {
        self.guard.posterior.fetch_add(1, Ordering::Relaxed);
        self.post.forward(tape, &self.store, Var::concat_cols(&[h, o]))
    }

    /// Per-factor softmax mixed with `unimix` uniform mass.
    pub fn probs<'t>(&self, logits: Var<'t>) -> Var<'t> {
        let p = logits.group_softmax(self.cfg.classes);
        let u = self.cfg.unimix;
        if u == 0.0 {
            p
        } else {
            p.scale(1.0 - u).add_scalar(u / self.cfg.classes as f64)
        }
    }

    /// One-hot sample per factor with a straight-through gradient into
    /// `probs`. `greedy` takes the mode instead of sampling.
    pub fn sample<'t>(&self, probs: Var<'t>, rng: &mut impl Rng, greedy: bool) -> Var<'t> {
        let onehot = sample_onehot(&probs.value(), self.cfg.classes, rng, greedy);
        probs.straight_through(onehot)
    }

    /// Masked mean over each network's alive nodes of `ELU(W_s [h; z])`;
    /// an all-dead network pools to zero.
    pub fn pool<'t>(&self, tape: &'t Tape, h: Var<'t>, z: Var<'t>, alive: &[f64], group: usize) -> Var<'t> {
        let proj = self.pool.forward(tape, &self.store, Var::concat_cols(&[h, z])).elu();
        proj.group_reduce(group, Arc::new(pool_weights(alive, group)))
    }

    /// Position, energy and adjacency heads; needs `N` = the training size.
    pub fn decode_obs<'t>(&self, tape: &'t Tape, s: Var<'t>) -> Decoded<'t> {
        self.guard.decode_obs.fetch_add(1, Ordering::Relaxed);
        let b = s.shape().0;
        let e = self
            .dec_shared
            .forward(tape, &self.store, s)
            .reshape(b * self.n, self.cfg.node_embed);
        let pos = self.dec_pos.forward(tape, &self.store, e);
        let energy = self.dec_energy.forward(tape, &self.store, e);
        let adj = self.dec_adj.forward(tape, &self.store, e).gram(self.n);
        Decoded { pos, energy, adj }
    }

    /// `h = 0` and `z` drawn from the prior at `h`, for `rows` nodes.
    pub fn initial_state<'t>(&self, tape: &'t Tape, rows: usize, rng: &mut ChaCha8Rng) -> (Var<'t>, Var<'t>) {
        let h = tape.constant(Mat::zeros(rows, self.cfg.hidden));
        let p = self.probs(self.prior_logits(tape, h));
        let z = tape.constant(sample_onehot(&p.value(), self.cfg.classes, rng, false));
        (h, z)
    }

    /// One filtering step: advance the dynamics with the applied action,
    /// then condition the latent on the new observation.
    pub fn observe_step<'t>(
        &self,
        tape: &'t Tape,
        state: (Var<'t>, Var<'t>),
        a_prev: Var<'t>,
        obs: &ObsBatch,
        rng: &mut ChaCha8Rng,
        training: bool,
    ) -> Observed<'t> {
        let h = self.dynamics(tape, state.0, state.1, a_prev, obs.n);
        let o = self.encode(tape, obs, if training { Some(&mut *rng) } else { None });
        let post = self.probs(self.posterior_logits(tape, h, o));
        let prior = self.probs(self.prior_logits(tape, h));
        let z = self.sample(post, rng, false);
        Observed { h, z, post, prior }
    }

    /// One imagination step from the prior; touches no observation path.
    pub fn imagine_step<'t>(
        &self,
        tape: &'t Tape,
        state: (Var<'t>, Var<'t>),
        a_prev: Var<'t>,
        group: usize,
        rng: &mut ChaCha8Rng,
    ) -> (Var<'t>, Var<'t>) {
        let h = self.dynamics(tape, state.0, state.1, a_prev, group);
        let z = self.sample(self.probs(self.prior_logits(tape, h)), rng, false);
        (h, z)
    }

    /// Reward and continue heads on the pooled state (any `N`).
    pub fn decode_global<'t>(&self, tape: &'t Tape, s: Var<'t>) -> GlobalHeads<'t> {
        GlobalHeads {
            reward: self.dec_reward.forward(tape, &self.store, s),
            cont_logit: self.dec_cont.forward(tape, &self.store, s),
        }
    }
}

pub fn pool_weights(alive: &[f64], group: usize) -> Vec<f64> {
    let mut w = alive.to_vec();
    for blk in w.chunks_mut(group) {
        let c: f64 = blk.iter().sum();
        if c > 0.0 {
            blk.iter_mut().for_each(|x| *x /= c);
        }
    }
    w
}

/// Inverted dropout with keep probability `1 - rate`.
pub fn dropout<'t>(x: Var<'t>, rate: f64, rng: &mut impl Rng) -> Var<'t> {
    if rate <= 0.0 {
        return x;
    }
    let (r, c) = x.shape();
    let keep = 1.0 - rate;
    let mask: Vec<f64> = (0..r * c)
        .map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
        .collect();
    x.mul(x.tape().constant(Mat::from_vec(r, c, mask)))
}

/// Draws one class per block of `classes` columns.
pub fn sample_onehot(p: &Mat, classes: usize, rng: &mut impl Rng, greedy: bool) -> Mat {
    let mut out = Mat::zeros(p.rows, p.cols);
    for (src, dst) in p.data.chunks(classes).zip(out.data.chunks_mut(classes)) {
        let k = if greedy {
            let mut best = 0;
            for j in 1..classes {
                if src[j] > src[best] {
                    best = j;
                }
            }
            best
        } else {
            let u: f64 = rng.gen::<f64>() * src.iter().sum::<f64>();
            let mut acc = 0.0;
            let mut pick = classes - 1;
            for (j, &pj) in src.iter().enumerate() {
                acc += pj;
                if u < acc {
                    pick = j;
                    break;
                }
            }
            pick
        };
        dst[k] = 1.0;
    }
    out
}
