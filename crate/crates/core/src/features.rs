//! Per-node observation features and the message graph shared by the world
//! model encoder and the DQN baseline.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::nn::{EdgeList, Mat};
use crate::sim::{NetSnapshot, ScenarioConfig};

/// x, y, vx, vy, energy, degree, CH flag, alive, cluster number.
pub const NODE_FEATURES: usize = 9;

/// Normalisation constants, fixed per scenario and stored with checkpoints.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureNorm {
    pub l: f64,
    pub v_max: f64,
    pub e_init: f64,
    pub gamma_rx: f64,
}

impl FeatureNorm {
    pub fn from_scenario(sc: &ScenarioConfig) -> Self {
        Self {
            l: sc.l,
            v_max: sc.mobility.max_speed().max(1e-9),
            e_init: sc.energy.e_init,
            gamma_rx: sc.channel.gamma_rx,
        }
    }
}

pub fn symlog(x: f64) -> f64 {
    x.signum() * x.abs().ln_1p()
}

pub fn symexp(y: f64) -> f64 {
    y.signum() * y.abs().exp_m1()
}

/// `N x 9` feature matrix.
pub fn node_features(snap: &NetSnapshot, norm: &FeatureNorm) -> Mat {
    let n = snap.n();
    let denom = (n.max(2) - 1) as f64;
    let mut m = Mat::zeros(n, NODE_FEATURES);
    for (i, node) in snap.nodes.iter().enumerate() {
        let row = m.row_mut(i);
        row[0] = node.position.x / norm.l;
        row[1] = node.position.y / norm.l;
        row[2] = node.velocity.x / norm.v_max;
        row[3] = node.velocity.y / norm.v_max;
        row[4] = node.energy / norm.e_init;
        row[5] = snap.degree(i) as f64 / denom;
        row[6] = node.ch_flag as u8 as f64;
        row[7] = node.alive as u8 as f64;
        row[8] = (node.cluster_id + 1) as f64 / n as f64;
    }
    m
}

/// Directed message edges (both directions of every link plus a self-loop on
/// every node) and their scalar feature `symlog(P / gamma_rx)`; self-loops
/// carry 0.
pub fn message_graph(snap: &NetSnapshot, norm: &FeatureNorm) -> (Arc<EdgeList>, Mat) {
    let n = snap.n();
    let mut src = Vec::with_capacity(n * 4);
    let mut dst = Vec::with_capacity(n * 4);
    let mut feat = Vec::with_capacity(n * 4);
    for i in 0..n {
        src.push(i);
        dst.push(i);
        feat.push(0.0);
        for j in snap.neighbors(i) {
            src.push(j);
            dst.push(i);
            feat.push(symlog(snap.power(i, j) / norm.gamma_rx));
        }
    }
    let e = src.len();
    (Arc::new(EdgeList { src, dst, num_nodes: n }), Mat::from_vec(e, 1, feat))
}
