//! Cluster membership, energy accounting and the clustering reward.

use super::types::{EnergyParams, NetSnapshot, NodeState, RewardWeights};

/// Cluster id per node: a CH heads its own cluster; an alive non-CH joins the
/// adjacent alive CH with the strongest received power (ties to the lowest
/// index); everything else is `-1`.
pub fn assign_clusters(ch_set: &[u8], snap: &NetSnapshot) -> Vec<i64> {
    let n = snap.n();
    assert_eq!(ch_set.len(), n, "CH vector length must equal N");
    let is_ch = |j: usize| ch_set[j] != 0 && snap.nodes[j].alive;
    (0..n)
        .map(|i| {
            if !snap.nodes[i].alive {
                return -1;
            }
            if is_ch(i) {
                return i as i64;
            }
            let mut best: Option<(usize, f64)> = None;
            for j in snap.neighbors(i) {
                if !is_ch(j) {
                    continue;
                }
                let p = snap.power(i, j);
                match best {
                    Some((_, bp)) if p <= bp => {}
                    _ => best = Some((j, p)),
                }
            }
            best.map_or(-1, |(j, _)| j as i64)
        })
        .collect()
}

/// Drains one step of energy given the cluster assignment stored in each
/// node's `cluster_id`, then applies the death threshold.
///
/// Members pay `(E_elec + eps_amp d^2) dt + E_idle dt` for the hop to their
/// CH; a CH pays `E_idle dt + E_ch_overhead |C| dt` for its `|C|` members;
/// unclustered alive nodes pay idle drain only.
pub fn step_energy(nodes: &mut [NodeState], energy: &EnergyParams) {
    let n = nodes.len();
    let mut members = vec![0usize; n];
    for node in nodes.iter() {
        if node.alive && node.cluster_id >= 0 && !node.ch_flag {
            members[node.cluster_id as usize] += 1;
        }
    }
    let dt = energy.dt;
    let costs: Vec<f64> = (0..n)
        .map(|i| {
            let node = &nodes[i];
            if !node.alive {
                return 0.0;
            }
            let idle = energy.e_idle * dt;
            if node.ch_flag {
                idle + energy.e_ch_overhead * members[i] as f64 * dt
            } else if node.cluster_id >= 0 {
                let d = node.position.dist(nodes[node.cluster_id as usize].position);
                (energy.e_elec + energy.eps_amp * d * d) * dt + idle
            } else {
                idle
            }
        })
        .collect();
    for (node, c) in nodes.iter_mut().zip(costs) {
        if !node.alive {
            continue;
        }
        node.energy = (node.energy - c).max(0.0);
        if node.energy <= energy.e_death {
            node.kill();
        }
    }
    // members of a CH that just died are orphaned
    for i in 0..n {
        let c = nodes[i].cluster_id;
        if c >= 0 && !nodes[c as usize].alive {
            nodes[i].cluster_id = -1;
        }
    }
}

/// Fraction of alive nodes that are a CH or adjacent to an alive CH.
pub fn connectivity_ratio(snap: &NetSnapshot) -> f64 {
    let alive = snap.alive_count();
    if alive == 0 {
        return 0.0;
    }
    let is_ch = |j: usize| snap.nodes[j].alive && snap.nodes[j].ch_flag;
    let covered = (0..snap.n())
        .filter(|&i| snap.nodes[i].alive && (is_ch(i) || snap.neighbors(i).any(is_ch)))
        .count();
    covered as f64 / alive as f64
}

/// Individual reward terms, before weighting.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RewardTerms {
    pub stability: f64,
    pub energy: f64,
    pub connectivity: f64,
    pub ch_count: f64,
    pub temporal: f64,
    pub unclustered: f64,
}

pub fn reward_terms(prev: &NetSnapshot, cur: &NetSnapshot, e_init: f64) -> RewardTerms {
    let n = cur.n();
    let alive: Vec<usize> = (0..n).filter(|&i| cur.nodes[i].alive).collect();
    let n_alive = alive.len();

    let members: Vec<usize> = alive.iter().copied().filter(|&i| !cur.nodes[i].ch_flag).collect();
    let stability = if members.is_empty() {
        1.0
    } else {
        members
            .iter()
            .filter(|&&i| cur.nodes[i].cluster_id == prev.nodes[i].cluster_id)
            .count() as f64
            / members.len() as f64
    };

    let energy = if n_alive == 0 {
        0.0
    } else {
        alive.iter().map(|&i| cur.nodes[i].energy).sum::<f64>() / n_alive as f64 / e_init
    };

    let ch_count = if n_alive == 0 {
        0.0
    } else {
        let n_ch = alive.iter().filter(|&&i| cur.nodes[i].ch_flag).count() as f64;
        let target = (n_alive as f64).sqrt();
        1.0 - ((n_ch - target).abs() / target).min(1.0)
    };

    let flips = prev
        .nodes
        .iter()
        .zip(&cur.nodes)
        .filter(|(a, b)| a.ch_flag != b.ch_flag)
        .count();
    let temporal = -(flips as f64) / n as f64;

    let unclustered = if n_alive == 0 {
        1.0
    } else {
        alive.iter().filter(|&&i| cur.nodes[i].cluster_id < 0).count() as f64 / n_alive as f64
    };

    RewardTerms {
        stability,
        energy,
        connectivity: connectivity_ratio(cur),
        ch_count,
        temporal,
        unclustered,
    }
}

/// Weighted multi-objective reward for the transition `prev -> cur`.
pub fn compute_reward(prev: &NetSnapshot, cur: &NetSnapshot, w: &RewardWeights, e_init: f64) -> f64 {
    let t = reward_terms(prev, cur, e_init);
    let penalty = if t.unclustered > w.theta { w.w_p } else { 0.0 };
    w.w_s * t.stability + w.w_e * t.energy + w.w_c * t.connectivity + w.w_h * t.ch_count + w.w_tau * t.temporal - penalty
}
