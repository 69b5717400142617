use serde::{Deserialize, Serialize};

pub use crate::sim::connectivity_ratio;
use crate::sim::{ScenarioConfig, CONNECTIVITY_FLOOR};
use crate::traj::Trajectory;

/// The five per-episode metrics, in table order.
pub const METRICS: [Metric; 5] = [
    Metric::ChChanges,
    Metric::Connectivity,
    Metric::Lifetime,
    Metric::ClusterLifetime,
    Metric::Jain,
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    ChChanges,
    Connectivity,
    Lifetime,
    ClusterLifetime,
    Jain,
}

impl Metric {
    pub fn as_str(self) -> &'static str {
        match self {
            Metric::ChChanges => "ch_changes",
            Metric::Connectivity => "connectivity",
            Metric::Lifetime => "lifetime",
            Metric::ClusterLifetime => "cluster_lifetime",
            Metric::Jain => "jain",
        }
    }

    pub fn lower_is_better(self) -> bool {
        matches!(self, Metric::ChChanges)
    }

    pub fn arrow(self) -> &'static str {
        if self.lower_is_better() {
            "↓"
        } else {
            "↑"
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub seed: u64,
    pub ch_changes: usize,
    /// Mean connectivity ratio over the steps.
    pub connectivity: f64,
    pub lifetime: usize,
    pub cluster_lifetime: f64,
    pub jain: f64,
}

impl EpisodeMetrics {
    pub fn get(&self, m: Metric) -> f64 {
        match m {
            Metric::ChChanges => self.ch_changes as f64,
            Metric::Connectivity => self.connectivity,
            Metric::Lifetime => self.lifetime as f64,
            Metric::ClusterLifetime => self.cluster_lifetime,
            Metric::Jain => self.jain,
        }
    }
}

/// Total Hamming distance between consecutive CH vectors.
pub fn ch_change_count(actions: &[Vec<u8>]) -> usize {
    actions
        .windows(2)
        .map(|w| w[0].iter().zip(&w[1]).filter(|(a, b)| a != b).count())
        .sum()
}

/// Mean length of the maximal runs during which a node stays CH; 0 when
/// nobody ever is.
pub fn cluster_lifetime(actions: &[Vec<u8>]) -> f64 {
    let n = actions.first().map_or(0, Vec::len);
    let (mut total, mut tenures) = (0usize, 0usize);
    for i in 0..n {
        let mut run = 0;
        for a in actions {
            if a[i] == 1 {
                run += 1;
            } else if run > 0 {
                total += run;
                tenures += 1;
                run = 0;
            }
        }
        if run > 0 {
            total += run;
            tenures += 1;
        }
    }
    if tenures == 0 {
        0.0
    } else {
        total as f64 / tenures as f64
    }
}

/// Index of the first step whose connectivity is below the floor, or the
/// series length when it never drops.
pub fn network_lifetime(connectivity: &[f64]) -> usize {
    connectivity
        .iter()
        .position(|&c| c < CONNECTIVITY_FLOOR)
        .unwrap_or(connectivity.len())
}

/// `(sum e)^2 / (n sum e^2)`; `None` for an empty or all-zero input.
pub fn jain_index(energies: &[f64]) -> Option<f64> {
    let sq: f64 = energies.iter().map(|e| e * e).sum();
    if energies.is_empty() || sq <= 0.0 {
        return None;
    }
    let s: f64 = energies.iter().sum();
    Some(s * s / (energies.len() as f64 * sq))
}

/// Connectivity after each step: entry `t` is measured on frame `t + 1`.
pub fn connectivity_series(tr: &Trajectory, sc: &ScenarioConfig) -> Vec<f64> {
    (1..tr.frames.len())
        .map(|k| connectivity_ratio(&tr.snapshot(k, sc)))
        .collect()
}

/// Jain index of alive residual energies at the last frame where it is
/// defined. Frame 0 always qualifies, so the fallback never runs out.
pub fn final_jain(tr: &Trajectory) -> f64 {
    tr.frames
        .iter()
        .rev()
        .find_map(|f| {
            let e: Vec<f64> = f.iter().filter(|n| n.alive).map(|n| n.energy).collect();
            jain_index(&e)
        })
        .unwrap_or(1.0)
}

pub fn episode_metrics(tr: &Trajectory, sc: &ScenarioConfig) -> EpisodeMetrics {
    let conn = connectivity_series(tr, sc);
    EpisodeMetrics {
        seed: tr.seed,
        ch_changes: ch_change_count(&tr.actions),
        connectivity: if conn.is_empty() { 0.0 } else { conn.iter().sum::<f64>() / conn.len() as f64 },
        lifetime: network_lifetime(&conn),
        cluster_lifetime: cluster_lifetime(&tr.actions),
        jain: final_jain(tr),
    }
}
