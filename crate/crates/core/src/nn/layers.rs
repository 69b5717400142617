//! Parameterised building blocks over the tape.

use std::sync::Arc;

use rand::Rng;

use super::mat::Mat;
use super::params::{ParamId, ParamStore};
use super::tape::{gatv2_attention, mha_core, EdgeList, Tape, Var};

pub const LN_EPS: f64 = 1e-5;

#[derive(Clone, Debug)]
pub struct Linear {
    pub w: ParamId,
    pub b: Option<ParamId>,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl Linear {
    pub fn new(store: &mut ParamStore, name: &str, fan_in: usize, fan_out: usize, bias: bool, rng: &mut impl Rng) -> Self {
        let w = store.add_uniform(format!("{name}.w"), fan_in, fan_out, fan_in, rng);
        let b = bias.then(|| store.add_uniform(format!("{name}.b"), 1, fan_out, fan_in, rng));
        Self { w, b, fan_in, fan_out }
    }

    pub fn forward<'t>(&self, tape: &'t Tape, store: &ParamStore, x: Var<'t>) -> Var<'t> {
        let y = x.matmul(tape.param(store, self.w));
        match self.b {
            Some(b) => y.add_row(tape.param(store, b)),
            None => y,
        }
    }
}

#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, width: usize) -> Self {
        Self {
            gamma: store.add(format!("{name}.gamma"), Mat::filled(1, width, 1.0)),
            beta: store.add(format!("{name}.beta"), Mat::zeros(1, width)),
        }
    }

    pub fn forward<'t>(&self, tape: &'t Tape, store: &ParamStore, x: Var<'t>) -> Var<'t> {
        x.layer_norm(tape.param(store, self.gamma), tape.param(store, self.beta), LN_EPS)
    }
}

/// Stack of linear layers with ELU between them (none after the last).
#[derive(Clone, Debug)]
pub struct Mlp {
    pub layers: Vec<Linear>,
}

impl Mlp {
    pub fn new(store: &mut ParamStore, name: &str, widths: &[usize], rng: &mut impl Rng) -> Self {
        assert!(widths.len() >= 2);
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| Linear::new(store, &format!("{name}.{i}"), w[0], w[1], true, rng))
            .collect();
        Self { layers }
    }

    pub fn forward<'t>(&self, tape: &'t Tape, store: &ParamStore, x: Var<'t>) -> Var<'t> {
        let mut h = x;
        for (i, l) in self.layers.iter().enumerate() {
            h = l.forward(tape, store, h);
            if i + 1 < self.layers.len() {
                h = h.elu();
            }
        }
        h
    }
}

/// GRU cell with gate layout (reset, update, candidate).
#[derive(Clone, Debug)]
pub struct GruCell {
    pub wx: Linear,
    pub wh: Linear,
    pub hidden: usize,
}

impl GruCell {
    pub fn new(store: &mut ParamStore, name: &str, input: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        Self {
            wx: Linear::new(store, &format!("{name}.wx"), input, 3 * hidden, true, rng),
            wh: Linear::new(store, &format!("{name}.wh"), hidden, 3 * hidden, true, rng),
            hidden,
        }
    }

    pub fn forward<'t>(&self, tape: &'t Tape, store: &ParamStore, x: Var<'t>, h: Var<'t>) -> Var<'t> {
        let n = self.hidden;
        let gx = self.wx.forward(tape, store, x);
        let gh = self.wh.forward(tape, store, h);
        let r = gx.slice_cols(0, n).add(gh.slice_cols(0, n)).sigmoid();
        let u = gx.slice_cols(n, n).add(gh.slice_cols(n, n)).sigmoid();
        let cand = gx.slice_cols(2 * n, n).add(r.mul(gh.slice_cols(2 * n, n))).tanh();
        // h' = (1 - u) * cand + u * h
        u.one_minus().mul(cand).add(u.mul(h))
    }
}

/// Multi-head self-attention over blocks of `group` rows.
#[derive(Clone, Debug)]
pub struct SelfAttention {
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub o: Linear,
    pub heads: usize,
}

impl SelfAttention {
    pub fn new(store: &mut ParamStore, name: &str, width: usize, heads: usize, rng: &mut impl Rng) -> Self {
        assert_eq!(width % heads, 0, "attention width must divide into heads");
        Self {
            q: Linear::new(store, &format!("{name}.q"), width, width, true, rng),
            k: Linear::new(store, &format!("{name}.k"), width, width, true, rng),
            v: Linear::new(store, &format!("{name}.v"), width, width, true, rng),
            o: Linear::new(store, &format!("{name}.o"), width, width, true, rng),
            heads,
        }
    }

    pub fn forward<'t>(&self, tape: &'t Tape, store: &ParamStore, x: Var<'t>, group: usize) -> Var<'t> {
        let q = self.q.forward(tape, store, x);
        let k = self.k.forward(tape, store, x);
        let v = self.v.forward(tape, store, x);
        let a = mha_core(q, k, v, group, self.heads);
        self.o.forward(tape, store, a)
    }
}

/// One GATv2 layer with a scalar edge feature, followed by LayerNorm and ELU.
#[derive(Clone, Debug)]
pub struct GatV2Layer {
    pub left: Linear,
    pub right: Linear,
    pub edge: ParamId,
    pub att: ParamId,
    pub bias: ParamId,
    pub norm: LayerNorm,
    pub heads: usize,
}

impl GatV2Layer {
    pub fn new(store: &mut ParamStore, name: &str, input: usize, width: usize, heads: usize, rng: &mut impl Rng) -> Self {
        assert_eq!(width % heads, 0);
        let head_dim = width / heads;
        Self {
            left: Linear::new(store, &format!("{name}.left"), input, width, true, rng),
            right: Linear::new(store, &format!("{name}.right"), input, width, true, rng),
            edge: store.add_uniform(format!("{name}.edge"), 1, width, 1, rng),
            att: store.add_uniform(format!("{name}.att"), 1, width, head_dim, rng),
            bias: store.add(format!("{name}.bias"), Mat::zeros(1, width)),
            norm: LayerNorm::new(store, &format!("{name}.ln"), width),
            heads,
        }
    }

    /// `x`: `V x input`; `edge_feat`: `E x 1` aligned with `edges`.
    pub fn forward<'t>(
        &self,
        tape: &'t Tape,
        store: &ParamStore,
        x: Var<'t>,
        edges: &Arc<EdgeList>,
        edge_feat: Var<'t>,
    ) -> Var<'t> {
        let xl = self.left.forward(tape, store, x);
        let xr = self.right.forward(tape, store, x);
        let msg = gatv2_attention(
            xl,
            xr,
            edge_feat,
            tape.param(store, self.edge),
            tape.param(store, self.att),
            Arc::clone(edges),
            self.heads,
        );
        let y = msg.add_row(tape.param(store, self.bias));
        self.norm.forward(tape, store, y).elu()
    }
}
