use rand::distributions::{Distribution, WeightedIndex};
use rayon::prelude::*;

use super::{Dataset, DatasetMeta, MixEntry, Trajectory};
use crate::baselines::{make_baseline, BaselineConfig, ClusterPolicy};
use crate::error::{Error, Result};
use crate::rng;
use crate::sim::{Env, ScenarioConfig};

pub struct CollectSpec {
    pub episodes: usize,
    pub scenarios: Vec<ScenarioConfig>,
    pub policy_mix: Vec<MixEntry>,
    pub seed: u64,
    pub baselines: BaselineConfig,
    /// Episode-level parallelism; output does not depend on it.
    pub workers: usize,
}

impl CollectSpec {
    /// Uniform mix over random, WCA and LEACH.
    pub fn default_mix() -> Vec<MixEntry> {
        ["random", "wca", "leach"]
            .iter()
            .map(|p| MixEntry {
                policy: p.to_string(),
                weight: 1.0 / 3.0,
            })
            .collect()
    }
}

/// Runs one episode of `policy` to termination or horizon.
pub fn run_episode(sc: &ScenarioConfig, scenario_idx: usize, policy: &mut dyn ClusterPolicy, seed: u64) -> Result<Trajectory> {
    record(Env::new(sc.clone(), seed), scenario_idx, policy, seed)
}

/// Runs one episode for the full horizon, past any terminal transition.
pub fn run_episode_full(sc: &ScenarioConfig, scenario_idx: usize, policy: &mut dyn ClusterPolicy, seed: u64) -> Result<Trajectory> {
    record(Env::new(sc.clone(), seed).run_full_horizon(), scenario_idx, policy, seed)
}

fn record(mut env: Env, scenario_idx: usize, policy: &mut dyn ClusterPolicy, seed: u64) -> Result<Trajectory> {
    let mut prng = rng::policy_rng(seed);
    policy.reset();
    let mut tr = Trajectory {
        scenario: scenario_idx,
        seed,
        policy: policy.name().to_string(),
        frames: vec![env.snapshot().nodes.clone()],
        actions: Vec::new(),
        rewards: Vec::new(),
        continues: Vec::new(),
    };
    while !env.is_done() {
        let a = policy.act(env.snapshot(), &mut prng);
        let out = env.step(&a)?;
        tr.actions.push(a);
        tr.rewards.push(out.reward);
        tr.continues.push(out.cont);
        tr.frames.push(env.snapshot().nodes.clone());
    }
    Ok(tr)
}

/// Episode `k` runs scenario `k mod S` with seed `seed + k` under a policy
/// drawn from the mix by a dedicated stream of `seed`.
pub fn collect(spec: &CollectSpec) -> Result<Dataset> {
    if spec.episodes == 0 {
        return Err(Error::InvalidArgument("collect needs at least one episode".into()));
    }
    if spec.scenarios.is_empty() {
        return Err(Error::InvalidArgument("collect needs at least one scenario".into()));
    }
    for sc in &spec.scenarios {
        sc.validate()?;
    }
    let total: f64 = spec.policy_mix.iter().map(|m| m.weight).sum();
    if spec.policy_mix.is_empty() || (total - 1.0).abs() > 1e-6 || spec.policy_mix.iter().any(|m| m.weight < 0.0) {
        return Err(Error::InvalidArgument(format!("policy mix weights must be nonnegative and sum to 1 (sum {total})")));
    }
    for m in &spec.policy_mix {
        make_baseline(&m.policy, &spec.baselines, 1.0)?;
    }
    let dist = WeightedIndex::new(spec.policy_mix.iter().map(|m| m.weight))
        .map_err(|e| Error::InvalidArgument(format!("policy mix: {e}")))?;
    let mut mix_rng = rng::train_rng(spec.seed);
    let plan: Vec<(usize, usize)> = (0..spec.episodes)
        .map(|k| (k % spec.scenarios.len(), dist.sample(&mut mix_rng)))
        .collect();

    let run = |k: usize| -> Result<Trajectory> {
        let (si, pi) = plan[k];
        let sc = &spec.scenarios[si];
        let mut pol = make_baseline(&spec.policy_mix[pi].policy, &spec.baselines, sc.energy.e_init)?;
        run_episode(sc, si, pol.as_mut(), spec.seed.wrapping_add(k as u64))
    };
    let episodes: Vec<Trajectory> = if spec.workers <= 1 {
        (0..spec.episodes).map(run).collect::<Result<_>>()?
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(spec.workers)
            .build()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?
            .install(|| (0..spec.episodes).into_par_iter().map(run).collect::<Result<_>>())?
    };
    Ok(Dataset {
        meta: DatasetMeta {
            scenarios: spec.scenarios.clone(),
            policy_mix: spec.policy_mix.clone(),
            seed: spec.seed,
        },
        episodes,
    })
}
