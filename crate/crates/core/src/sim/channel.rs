//! Log-distance path loss and the threshold connectivity graph.

use super::types::{ChannelParams, NodeState};
use crate::error::{Error, Result};

/// `k0 * Pt * (d0 / d)^eta`, with `d` clamped up to `d0` for co-located nodes.
pub fn received_power(d: f64, ch: &ChannelParams) -> Result<f64> {
    if !(d >= 0.0) {
        return Err(Error::InvalidArgument(format!("distance must be nonnegative, got {d}")));
    }
    Ok(power_unchecked(d, ch))
}

#[inline]
pub(crate) fn power_unchecked(d: f64, ch: &ChannelParams) -> f64 {
    let d = if d <= 0.0 { ch.d0 } else { d };
    ch.k0 * ch.pt * (ch.d0 / d).powf(ch.eta)
}

/// Symmetric adjacency (edge iff both alive and power >= `gamma_rx`) and the
/// full received-power matrix, both row-major `N x N` with zero diagonals.
pub fn build_adjacency(nodes: &[NodeState], ch: &ChannelParams) -> (Vec<bool>, Vec<f64>) {
    let n = nodes.len();
    let mut adj = vec![false; n * n];
    let mut pw = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = nodes[i].position.dist(nodes[j].position);
            let p = power_unchecked(d, ch);
            pw[i * n + j] = p;
            pw[j * n + i] = p;
            let e = nodes[i].alive && nodes[j].alive && p >= ch.gamma_rx;
            adj[i * n + j] = e;
            adj[j * n + i] = e;
        }
    }
    (adj, pw)
}
