use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{episode_metrics, EpisodeMetrics, Metric, METRICS};
use super::stats::{mean_ci, Summary};
use crate::baselines::ClusterPolicy;
use crate::error::{Error, Result};
use crate::sim::{Category, ScenarioConfig};
use crate::traj::run_episode_full;

/// Builds a fresh policy per episode so episodes can run on any worker.
pub type PolicyFactory<'a> = dyn Fn() -> Result<Box<dyn ClusterPolicy>> + Sync + 'a;

pub const CI_LEVEL: f64 = 0.95;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub algorithm: String,
    pub scenario: String,
    pub category: Category,
    pub horizon: usize,
    /// Episode `k` ran with seed `seeds[k]`.
    pub seeds: Vec<u64>,
    pub episodes: Vec<EpisodeMetrics>,
    pub aggregates: BTreeMap<Metric, Summary>,
}

impl MetricsReport {
    pub fn from_episodes(algorithm: &str, sc: &ScenarioConfig, episodes: Vec<EpisodeMetrics>) -> Self {
        let aggregates = METRICS
            .iter()
            .map(|&m| {
                let xs: Vec<f64> = episodes.iter().map(|e| e.get(m)).collect();
                (m, mean_ci(&xs, CI_LEVEL))
            })
            .collect();
        Self {
            algorithm: algorithm.to_string(),
            scenario: sc.name.clone(),
            category: sc.category,
            horizon: sc.horizon,
            seeds: episodes.iter().map(|e| e.seed).collect(),
            episodes,
            aggregates,
        }
    }

    pub fn values(&self, m: Metric) -> Vec<f64> {
        self.episodes.iter().map(|e| e.get(m)).collect()
    }
}

/// Runs `episodes` full-horizon episodes with seeds `seed_base..` and
/// summarises them. Results do not depend on `workers`.
pub fn run_evaluation(
    algorithm: &str,
    factory: &PolicyFactory<'_>,
    sc: &ScenarioConfig,
    episodes: usize,
    seed_base: u64,
    workers: usize,
) -> Result<MetricsReport> {
    if episodes == 0 {
        return Err(Error::InvalidArgument("evaluation needs at least one episode".into()));
    }
    sc.validate()?;
    let run = |k: usize| -> Result<EpisodeMetrics> {
        let mut pol = factory()?;
        let tr = run_episode_full(sc, 0, pol.as_mut(), seed_base.wrapping_add(k as u64))?;
        Ok(episode_metrics(&tr, sc))
    };
    let records: Vec<EpisodeMetrics> = if workers <= 1 {
        (0..episodes).map(run).collect::<Result<_>>()?
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?
            .install(|| (0..episodes).into_par_iter().map(run).collect::<Result<_>>())?
    };
    Ok(MetricsReport::from_episodes(algorithm, sc, records))
}
