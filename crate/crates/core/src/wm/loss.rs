//! World-model objective: symlog regression, binary cross-entropies and the
//! free-bits KL, averaged over batch and time.

use std::sync::Arc;

use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::data::StepBatch;
use super::model::{FreeBits, WmConfig, WorldModel};
use crate::error::{Error, Result};
use crate::nn::{Tape, Var};

/// Per-head loss values of one evaluation of [`wm_loss`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct LossBreakdown {
    pub pos: f64,
    pub energy: f64,
    pub adj: f64,
    pub reward: f64,
    pub cont: f64,
    /// Mean factor-summed KL per node before the free-bits clamp.
    pub kl_raw: f64,
    /// KL after the free-bits clamp (unweighted).
    pub kl: f64,
}

impl LossBreakdown {
    /// Weighted decoder losses, excluding the KL term.
    pub fn recon(&self, cfg: &WmConfig) -> f64 {
        self.pos + self.energy + cfg.adj_weight * self.adj + self.reward + self.cont
    }

    pub fn total(&self, cfg: &WmConfig) -> f64 {
        self.recon(cfg) + cfg.beta * self.kl
    }

    pub fn scaled(&self, w: f64) -> Self {
        Self {
            pos: self.pos * w,
            energy: self.energy * w,
            adj: self.adj * w,
            reward: self.reward * w,
            cont: self.cont * w,
            kl_raw: self.kl_raw * w,
            kl: self.kl * w,
        }
    }

    pub fn add(&mut self, o: &Self) {
        self.pos += o.pos;
        self.energy += o.energy;
        self.adj += o.adj;
        self.reward += o.reward;
        self.cont += o.cont;
        self.kl_raw += o.kl_raw;
        self.kl += o.kl;
    }

    /// Name of the first non-finite component, if any.
    pub fn non_finite(&self) -> Option<&'static str> {
        [
            ("position", self.pos),
            ("energy", self.energy),
            ("adjacency", self.adj),
            ("reward", self.reward),
            ("continue", self.cont),
            ("kl", self.kl),
        ]
        .into_iter()
        .find(|(_, v)| !v.is_finite())
        .map(|(n, _)| n)
    }
}

/// Factor-summed `KL(q || p)` per row.
pub fn categorical_kl<'t>(q: Var<'t>, p: Var<'t>) -> Var<'t> {
    q.mul(q.ln().sub(p.ln())).row_sum()
}

/// Free-bits clamp of per-node KLs, reduced to a scalar.
pub fn free_bits<'t>(kl_rows: Var<'t>, eta: f64, mode: FreeBits) -> Var<'t> {
    match mode {
        FreeBits::PerNode => kl_rows.clamp_min(eta).mean(),
        FreeBits::Global => kl_rows.mean().clamp_min(eta),
    }
}

fn mse<'t>(pred: Var<'t>, target: Var<'t>) -> Var<'t> {
    pred.sub(target).sqr().mean()
}

/// Unrolls the posterior over `steps` (one batch of windows) and returns the
/// scalar objective with its breakdown. `training` enables dropout.
pub fn wm_loss<'t>(
    model: &WorldModel,
    tape: &'t Tape,
    steps: &[StepBatch],
    rng: &mut ChaCha8Rng,
    training: bool,
) -> Result<(Var<'t>, LossBreakdown)> {
    let cfg = &model.cfg;
    let n = model.n;
    let first = steps.first().ok_or_else(|| Error::InvalidArgument("empty window".into()))?;
    if first.obs.n != n {
        return Err(Error::InvalidArgument(format!(
            "model decodes {n} nodes but the batch has {}",
            first.obs.n
        )));
    }
    let rows = first.obs.features.rows;
    let b = rows / n;
    let offdiag: Arc<Vec<f64>> = Arc::new(
        (0..rows * n)
            .map(|k| if (k / n) % n == k % n { 0.0 } else { 1.0 })
            .collect(),
    );
    let adj_norm = (rows * n.saturating_sub(1)).max(1) as f64;
    let ones_b = Arc::new(vec![1.0; b]);

    let mut state = model.initial_state(tape, rows, rng);
    let (mut pos, mut energy, mut adj, mut kl, mut kl_raw) = (Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let (mut reward, mut cont) = (Vec::new(), Vec::new());
    for st in steps {
        let a = tape.constant(st.a_prev.clone());
        let out = model.observe_step(tape, state, a, &st.obs, rng, training);
        state = (out.h, out.z);
        let kl_rows = categorical_kl(out.post, out.prior);
        kl_raw.push(kl_rows.mean());
        kl.push(free_bits(kl_rows, cfg.free_bits, cfg.free_bits_mode));
        let s = model.pool(tape, out.h, out.z, &st.obs.alive, n);
        let d = model.decode_obs(tape, s);
        pos.push(mse(d.pos, tape.constant(st.pos.clone())));
        energy.push(mse(d.energy, tape.constant(st.energy.clone())));
        adj.push(d.adj.bce_with_logits(Arc::clone(&st.adj), Arc::clone(&offdiag), adj_norm));
        if let (Some(r), Some(c)) = (&st.reward, &st.cont) {
            let g = model.decode_global(tape, s);
            reward.push(mse(g.reward, tape.constant(r.clone())));
            cont.push(g.cont_logit.bce_with_logits(Arc::clone(c), Arc::clone(&ones_b), b as f64));
        }
    }
    let avg = |v: &[Var<'t>]| -> Var<'t> {
        if v.is_empty() {
            return tape.scalar(0.0);
        }
        let mut acc = v[0];
        for x in &v[1..] {
            acc = acc.add(*x);
        }
        acc.scale(1.0 / v.len() as f64)
    };
    let (pos, energy, adj, reward, cont, kl, kl_raw) =
        (avg(&pos), avg(&energy), avg(&adj), avg(&reward), avg(&cont), avg(&kl), avg(&kl_raw));
    let breakdown = LossBreakdown {
        pos: pos.item(),
        energy: energy.item(),
        adj: adj.item(),
        reward: reward.item(),
        cont: cont.item(),
        kl_raw: kl_raw.item(),
        kl: kl.item(),
    };
    if let Some(head) = breakdown.non_finite() {
        return Err(Error::Divergence(format!("non-finite {head} loss: {breakdown:?}")));
    }
    let total = pos
        .add(energy)
        .add(adj.scale(cfg.adj_weight))
        .add(reward)
        .add(cont)
        .add(kl.scale(cfg.beta));
    Ok((total, breakdown))
}
