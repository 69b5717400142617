//! Centralised per-step versions of the classical election protocols.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::sim::NetSnapshot;

/// Visits alive nodes in `order`; an unclaimed node becomes CH and claims its
/// alive neighbours.
fn greedy_heads(snap: &NetSnapshot, order: impl IntoIterator<Item = usize>) -> Vec<u8> {
    let n = snap.n();
    let mut claimed = vec![false; n];
    let mut ch = vec![0u8; n];
    for i in order {
        if !snap.nodes[i].alive || claimed[i] {
            continue;
        }
        ch[i] = 1;
        claimed[i] = true;
        for j in snap.neighbors(i) {
            claimed[j] = true;
        }
    }
    ch
}

pub fn lowest_id_select(snap: &NetSnapshot) -> Vec<u8> {
    greedy_heads(snap, 0..snap.n())
}

/// Highest residual energy first, ties to the lower index.
pub fn dmac_select(snap: &NetSnapshot) -> Vec<u8> {
    let mut order: Vec<usize> = (0..snap.n()).collect();
    order.sort_by(|&a, &b| {
        snap.nodes[b]
            .energy
            .total_cmp(&snap.nodes[a].energy)
            .then(a.cmp(&b))
    });
    greedy_heads(snap, order)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WcaWeights {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
}

impl Default for WcaWeights {
    fn default() -> Self {
        Self {
            c1: 0.7,
            c2: 0.2,
            c3: 0.05,
            c4: 0.05,
        }
    }
}

/// Combined weight `c1 |deg - delta| + c2 sum(dist) + c3 speed + c4 ch_time`;
/// the lightest undecided node becomes CH and its neighbourhood is decided.
pub fn wca_select(snap: &NetSnapshot, w: &WcaWeights, delta_ideal: f64, ch_time: &[f64]) -> Vec<u8> {
    let n = snap.n();
    let weight: Vec<f64> = (0..n)
        .map(|i| {
            let node = &snap.nodes[i];
            let deg = snap.degree(i) as f64;
            let dist: f64 = snap.neighbors(i).map(|j| node.position.dist(snap.nodes[j].position)).sum();
            w.c1 * (deg - delta_ideal).abs() + w.c2 * dist + w.c3 * node.velocity.norm() + w.c4 * ch_time[i]
        })
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| weight[a].total_cmp(&weight[b]).then(a.cmp(&b)));
    greedy_heads(snap, order)
}

/// Each eligible alive node elects itself with probability
/// `p / (1 - p (round mod floor(1/p)))`; nodes that served in the current
/// epoch are ineligible.
pub fn leach_select(snap: &NetSnapshot, p: f64, round: usize, served: &[bool], rng: &mut impl Rng) -> Vec<u8> {
    assert!(p > 0.0 && p < 1.0, "LEACH p must lie in (0,1)");
    let epoch = (1.0 / p).floor() as usize;
    let threshold = (p / (1.0 - p * (round % epoch) as f64)).min(1.0);
    snap.nodes
        .iter()
        .zip(served)
        .map(|(node, &s)| {
            // draw for every node so the stream position is independent of state
            let u: f64 = rng.gen();
            (node.alive && !s && u < threshold) as u8
        })
        .collect()
}

#[derive(Clone, Copy, PartialEq)]
enum HeedState {
    Undecided,
    Tentative,
    Final,
}

/// Synchronous HEED. Initial probability `C_prob e_i / E_init` clamped to
/// `[p_min, 1]` and doubled every iteration; intra-cluster cost is
/// `1 / (deg + 1)` so denser heads are preferred. After the iterations,
/// tentative heads finalise first, then remaining nodes join an adjacent
/// final head or elect themselves.
pub fn heed_select(
    snap: &NetSnapshot,
    c_prob: f64,
    p_min: f64,
    max_iter: usize,
    e_init: f64,
    rng: &mut impl Rng,
) -> Vec<u8> {
    let n = snap.n();
    let cost: Vec<f64> = (0..n).map(|i| 1.0 / (snap.degree(i) as f64 + 1.0)).collect();
    let mut prob: Vec<f64> = snap
        .nodes
        .iter()
        .map(|nd| (c_prob * nd.energy / e_init).clamp(p_min, 1.0))
        .collect();
    let mut state = vec![HeedState::Undecided; n];
    let cheapest = |i: usize, state: &[HeedState], want_final: bool| -> Option<usize> {
        std::iter::once(i)
            .chain(snap.neighbors(i))
            .filter(|&j| match state[j] {
                HeedState::Final => true,
                HeedState::Tentative => !want_final,
                HeedState::Undecided => false,
            })
            .min_by(|&a, &b| cost[a].total_cmp(&cost[b]).then(a.cmp(&b)))
    };

    for _ in 0..max_iter {
        let prev = state.clone();
        let mut all_saturated = true;
        for i in 0..n {
            let u: f64 = rng.gen();
            if !snap.nodes[i].alive || prev[i] == HeedState::Final {
                continue;
            }
            match cheapest(i, &prev, false) {
                Some(j) if j == i => {
                    state[i] = if prob[i] >= 1.0 { HeedState::Final } else { HeedState::Tentative };
                }
                Some(_) => {}
                None => {
                    if prob[i] >= 1.0 {
                        state[i] = HeedState::Final;
                    } else if u < prob[i] {
                        state[i] = HeedState::Tentative;
                    }
                }
            }
            if prob[i] < 1.0 {
                all_saturated = false;
            }
            prob[i] = (prob[i] * 2.0).min(1.0);
        }
        if all_saturated {
            break;
        }
    }

    let tentative_first = (0..n)
        .filter(|&i| state[i] == HeedState::Tentative)
        .chain((0..n).filter(|&i| state[i] == HeedState::Undecided))
        .collect::<Vec<_>>();
    for i in tentative_first {
        if !snap.nodes[i].alive {
            continue;
        }
        if cheapest(i, &state, true).is_none() {
            state[i] = HeedState::Final;
        } else {
            state[i] = HeedState::Undecided;
        }
    }
    (0..n)
        .map(|i| (snap.nodes[i].alive && state[i] == HeedState::Final) as u8)
        .collect()
}
