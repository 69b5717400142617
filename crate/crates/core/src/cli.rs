//! Command-line front end. `main` only forwards to [`run`] so the whole
//! surface is testable in-process.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::baselines::{dqn_train, make_baseline, BaselineConfig, ClusterPolicy, DqnConfig, DqnPolicy, QNet};
use crate::config;
use crate::container::write_atomic;
use crate::dream::{train_policy, PolicyBundle, PolicyTrainConfig, PolicyTrainOptions, WmPolicy};
use crate::error::{Error, Result};
use crate::eval::{category_plot, compare, compare_table, plot_csv, run_evaluation, Comparison, MetricsReport, METRICS};
use crate::features::FeatureNorm;
use crate::sim::{catalog, ScenarioConfig};
use crate::traj::{self, CollectSpec, MixEntry};
use crate::wm::{init_model, train_wm, TrainOptions, WmConfig, WmTrainConfig, WorldModel};

/// Environment variable naming the default artifact directory.
pub const DATA_DIR_ENV: &str = "GRSSM_DATA_DIR";
pub const DEFAULT_DATA_DIR: &str = "data";

/// Sidecar schema written next to every artifact.
pub const SIDECAR_SCHEMA_VERSION: u32 = 1;

/// Exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    /// Unknown flag, bad flag value or missing subcommand.
    pub const USAGE: i32 = 2;
    pub const CONFIG: i32 = 3;
    pub const IO: i32 = 4;
    /// Unreadable artifact: wrong version, truncated, checksum or structure.
    pub const FORMAT: i32 = 5;
    pub const DIVERGENCE: i32 = 6;
    /// Invalid argument value or unknown scenario/algorithm name.
    pub const INVALID: i32 = 7;
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => exit::CONFIG,
        Error::Io { .. } => exit::IO,
        Error::VersionMismatch { .. } | Error::Truncated(_) | Error::Checksum { .. } | Error::Corrupt(_) => exit::FORMAT,
        Error::Divergence(_) => exit::DIVERGENCE,
        Error::InvalidArgument(_) | Error::Unknown { .. } => exit::INVALID,
    }
}

#[derive(Parser, Debug)]
#[command(name = "grssm", version, about = "World-model clustering for mobile ad hoc networks")]
#[command(after_help = "Exit codes: 0 ok, 2 usage, 3 config, 4 I/O, 5 unreadable artifact, 6 training divergence, 7 invalid argument.")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Single source of randomness for the run.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Episode-level worker threads; results do not depend on it.
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    /// TOML file with the command's config; flags below override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dotted override `key=value`, repeatable. Keys that are not fields of
    /// the command config apply to every scenario (e.g. `energy.E_idle=0.01`).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Default directory for artifacts.
    #[arg(long, env = DATA_DIR_ENV, default_value = DEFAULT_DATA_DIR)]
    pub data_dir: PathBuf,
    /// Print progress to stderr.
    #[arg(long, short)]
    pub verbose: bool,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Record behaviour-policy episodes into a dataset file.
    Collect {
        #[arg(long)]
        episodes: Option<usize>,
        /// Scenario set: `default6`, `all`, a category or comma-separated names.
        #[arg(long)]
        scenarios: Option<String>,
        /// Output file, or directory receiving `dataset.bin`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Train the world model on a dataset.
    TrainWm {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        /// Per-epoch loss CSV.
        #[arg(long)]
        log: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Train actor and critic in imagination.
    TrainPolicy {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        wm: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        log: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Train the DQN baseline on one scenario.
    TrainDqn {
        #[arg(long, default_value = "default")]
        scenario: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        episodes: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Evaluate one algorithm on one scenario.
    Evaluate {
        #[arg(long)]
        algo: String,
        #[arg(long, default_value = "default")]
        scenario: String,
        #[arg(long, default_value_t = 50)]
        episodes: usize,
        /// Directory receiving `report.json` and `episodes.csv`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        models: Models,
        #[command(flatten)]
        common: Common,
    },
    /// Evaluate several algorithms with paired seeds and tabulate.
    Compare {
        /// Comma-separated algorithm names.
        #[arg(long, default_value = "grssm,lowest_id,wca,leach,heed,dmac")]
        algos: String,
        #[arg(long, default_value = "default")]
        scenarios: String,
        /// Algorithm the Wilcoxon tests compare against.
        #[arg(long, default_value = "grssm")]
        reference: String,
        #[arg(long, default_value_t = 50)]
        episodes: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        models: Models,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args, Debug, Clone)]
pub struct Models {
    /// World-model checkpoint for `grssm`.
    #[arg(long)]
    pub wm: Option<PathBuf>,
    /// Policy checkpoint for `grssm`.
    #[arg(long)]
    pub policy: Option<PathBuf>,
    /// Q-network checkpoint for `dqn`.
    #[arg(long)]
    pub dqn: Option<PathBuf>,
    /// Sample actions instead of thresholding at 0.5.
    #[arg(long)]
    pub stochastic: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CollectConfig {
    pub episodes: usize,
    pub scenarios: String,
    pub policy_mix: Vec<MixEntry>,
    pub baselines: BaselineConfig,
}

impl Default for CollectConfig {
    fn default() -> Self {
        Self {
            episodes: 180,
            scenarios: "default6".into(),
            policy_mix: CollectSpec::default_mix(),
            baselines: BaselineConfig::default(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainWmRunConfig {
    pub model: WmConfig,
    pub train: WmTrainConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub baselines: BaselineConfig,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            baselines: BaselineConfig::default(),
        }
    }
}

#[derive(Serialize)]
struct Sidecar<'a, T: Serialize> {
    schema_version: u32,
    command: &'a str,
    seed: u64,
    scenario_overrides: &'a [String],
    inputs: Vec<String>,
    config: &'a T,
    scenarios: &'a [ScenarioConfig],
}

/// Sidecar path for an artifact: `<file>.config.toml`.
pub fn sidecar_path(artifact: &Path) -> PathBuf {
    let mut s = artifact.as_os_str().to_owned();
    s.push(".config.toml");
    PathBuf::from(s)
}

fn write_sidecar<T: Serialize>(
    artifact: &Path,
    command: &str,
    common: &Common,
    scenario_overrides: &[String],
    inputs: &[&Path],
    cfg: &T,
    scenarios: &[ScenarioConfig],
) -> Result<()> {
    let sc = Sidecar {
        schema_version: SIDECAR_SCHEMA_VERSION,
        command,
        seed: common.seed,
        scenario_overrides,
        inputs: inputs.iter().map(|p| p.display().to_string()).collect(),
        config: cfg,
        scenarios,
    };
    write_atomic(&sidecar_path(artifact), config::to_toml_string(&sc)?.as_bytes())
}

/// Resolves the command config: defaults, then `--config`, then `--set`
/// entries whose first segment is a config field. Everything else is
/// returned for the scenarios.
fn resolve_config<T: Serialize + serde::de::DeserializeOwned + Default>(common: &Common) -> Result<(T, Vec<String>)> {
    let mut v = config::to_value(&T::default())?;
    if let Some(p) = &common.config {
        let mut file = config::read_toml(p)?;
        if let Some(inner) = sidecar_section(&mut file, "config") {
            file = inner;
        }
        merge(&mut v, file);
    }
    let fields: Vec<String> = v.as_table().map(|t| t.keys().cloned().collect()).unwrap_or_default();
    let (own, rest): (Vec<String>, Vec<String>) = common.overrides.iter().cloned().partition(|o| {
        let key = o.split('=').next().unwrap_or("");
        fields.iter().any(|f| f == key.split('.').next().unwrap_or(""))
    });
    config::apply_overrides(&mut v, &own)?;
    Ok((config::from_value(v)?, rest))
}

/// The `key` section of a sidecar file, or `None` for a plain config.
fn sidecar_section(file: &mut toml::Value, key: &str) -> Option<toml::Value> {
    let t = file.as_table_mut()?;
    if !t.contains_key("command") {
        return None;
    }
    t.remove(key)
}

fn merge(dst: &mut toml::Value, src: toml::Value) {
    match (dst, src) {
        (toml::Value::Table(d), toml::Value::Table(s)) => {
            for (k, v) in s {
                match d.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        d.insert(k, v);
                    }
                }
            }
        }
        (d, s) => *d = s,
    }
}

fn scenarios(spec: &str, overrides: &[String]) -> Result<Vec<ScenarioConfig>> {
    let path = Path::new(spec);
    if path.is_file() {
        let mut file = config::read_toml(path)?;
        if let Some(list) = sidecar_section(&mut file, "scenarios") {
            let list: Vec<ScenarioConfig> = config::from_value(list)?;
            return list
                .iter()
                .map(|sc| {
                    let sc = config::with_overrides(sc, overrides)?;
                    sc.validate()?;
                    Ok(sc)
                })
                .collect();
        }
        return Ok(vec![catalog::resolve(spec, overrides)?]);
    }
    catalog::resolve_set(spec)?
        .into_iter()
        .map(|sc| {
            let sc = config::with_overrides(&sc, overrides)?;
            sc.validate()?;
            Ok(sc)
        })
        .collect()
}

fn one_scenario(spec: &str, overrides: &[String]) -> Result<ScenarioConfig> {
    let mut v = scenarios(spec, overrides)?;
    if v.len() != 1 {
        return Err(Error::InvalidArgument(format!("'{spec}' names {} scenarios, expected one", v.len())));
    }
    Ok(v.remove(0))
}

fn existing(p: PathBuf, what: &str) -> Result<PathBuf> {
    if p.is_file() {
        Ok(p)
    } else {
        Err(Error::io(
            &p,
            std::io::Error::new(std::io::ErrorKind::NotFound, format!("{what} not found")),
        ))
    }
}

fn ensure_parent(p: &Path) -> Result<()> {
    match p.parent() {
        Some(d) if !d.as_os_str().is_empty() => std::fs::create_dir_all(d).map_err(|e| Error::io(d, e)),
        _ => Ok(()),
    }
}

fn out_dir(p: Option<PathBuf>, common: &Common, default: &str) -> Result<PathBuf> {
    let d = p.unwrap_or_else(|| common.data_dir.join(default));
    std::fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    Ok(d)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    write_atomic(path, text.as_bytes())
}

/// Loaded learned models, shared across evaluation episodes.
struct Loaded {
    grssm: Option<(Arc<WorldModel>, Arc<crate::dream::Actor>)>,
    dqn: Option<QNet>,
    greedy: bool,
}

impl Loaded {
    fn new(algos: &[&str], m: &Models, common: &Common) -> Result<Self> {
        let grssm = if algos.contains(&"grssm") {
            let wm = existing(m.wm.clone().unwrap_or_else(|| common.data_dir.join("wm.ckpt")), "world-model checkpoint")?;
            let pol = existing(
                m.policy.clone().unwrap_or_else(|| common.data_dir.join("policy.ckpt")),
                "policy checkpoint",
            )?;
            let wm = WorldModel::load(&wm)?;
            let bundle = PolicyBundle::load(&pol)?;
            if bundle.dims() != (wm.cfg.hidden, wm.cfg.latent(), wm.cfg.global) {
                return Err(Error::InvalidArgument("policy checkpoint does not match the world model".into()));
            }
            Some((Arc::new(wm), Arc::new(bundle.actor)))
        } else {
            None
        };
        let dqn = if algos.contains(&"dqn") {
            let p = existing(m.dqn.clone().unwrap_or_else(|| common.data_dir.join("dqn.ckpt")), "DQN checkpoint")?;
            Some(QNet::load(&p)?)
        } else {
            None
        };
        Ok(Self {
            grssm,
            dqn,
            greedy: !m.stochastic,
        })
    }

    fn policy(&self, algo: &str, sc: &ScenarioConfig, baselines: &BaselineConfig) -> Result<Box<dyn ClusterPolicy>> {
        match algo {
            "grssm" => {
                let (wm, actor) = self.grssm.as_ref().expect("grssm models are loaded up front");
                Ok(Box::new(WmPolicy::new(
                    Arc::clone(wm),
                    Arc::clone(actor),
                    FeatureNorm::from_scenario(sc),
                    self.greedy,
                )))
            }
            "dqn" => Ok(Box::new(DqnPolicy {
                net: self.dqn.clone().expect("dqn network is loaded up front"),
                epsilon: 0.0,
            })),
            other => make_baseline(other, baselines, sc.energy.e_init),
        }
    }
}

fn evaluate_one(
    algo: &str,
    sc: &ScenarioConfig,
    episodes: usize,
    loaded: &Loaded,
    cfg: &EvalConfig,
    common: &Common,
) -> Result<MetricsReport> {
    // validates the name before spending time on episodes
    loaded.policy(algo, sc, &cfg.baselines)?;
    let factory = || loaded.policy(algo, sc, &cfg.baselines);
    run_evaluation(algo, &factory, sc, episodes, common.seed, common.workers)
}

fn episodes_csv(r: &MetricsReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| Error::Corrupt(format!("episodes csv: {e}"));
    let mut head = vec!["seed".to_string()];
    head.extend(METRICS.iter().map(|m| m.as_str().to_string()));
    w.write_record(&head).map_err(err)?;
    for e in &r.episodes {
        let mut rec = vec![e.seed.to_string()];
        rec.extend(METRICS.iter().map(|&m| e.get(m).to_string()));
        w.write_record(&rec).map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Corrupt(format!("episodes csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn json<T: Serialize>(v: &T) -> Result<String> {
    serde_json::to_string_pretty(v).map_err(|e| Error::Corrupt(format!("json: {e}")))
}

pub fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Collect {
            episodes,
            scenarios: set,
            out,
            common,
        } => {
            let (mut cfg, sc_ovr) = resolve_config::<CollectConfig>(&common)?;
            if let Some(e) = episodes {
                cfg.episodes = e;
            }
            if let Some(s) = set {
                cfg.scenarios = s;
            }
            let scs = scenarios(&cfg.scenarios, &sc_ovr)?;
            let out = match out {
                Some(p) if p.extension().is_none() => p.join("dataset.bin"),
                Some(p) => p,
                None => common.data_dir.join("dataset.bin"),
            };
            let ds = traj::collect(&CollectSpec {
                episodes: cfg.episodes,
                scenarios: scs,
                policy_mix: cfg.policy_mix.clone(),
                seed: common.seed,
                baselines: cfg.baselines.clone(),
                workers: common.workers,
            })?;
            ensure_parent(&out)?;
            traj::save(&ds, &out)?;
            write_sidecar(&out, "collect", &common, &sc_ovr, &[], &cfg, &ds.meta.scenarios)?;
            if common.verbose {
                eprintln!("wrote {} episodes to {}", ds.episodes.len(), out.display());
            }
            Ok(())
        }
        Command::TrainWm {
            data,
            out,
            epochs,
            log,
            common,
        } => {
            let (mut cfg, rest) = resolve_config::<TrainWmRunConfig>(&common)?;
            no_scenario_overrides(&rest)?;
            if let Some(e) = epochs {
                cfg.train.epochs = e;
            }
            let data = existing(data.unwrap_or_else(|| common.data_dir.join("dataset.bin")), "dataset")?;
            let out = out.unwrap_or_else(|| common.data_dir.join("wm.ckpt"));
            ensure_parent(&out)?;
            let ds = traj::load(&data)?;
            let mut model = init_model(&ds, cfg.model.clone(), common.seed)?;
            model.save(&out)?;
            let opts = TrainOptions {
                checkpoint: Some(&out),
                log_csv: log,
                verbose: common.verbose,
            };
            train_wm(&mut model, &ds, &cfg.train, common.seed, &opts)?;
            model.save(&out)?;
            write_sidecar(&out, "train-wm", &common, &[], &[&data], &cfg, &[])
        }
        Command::TrainPolicy {
            data,
            wm,
            out,
            epochs,
            log,
            common,
        } => {
            let (mut cfg, rest) = resolve_config::<PolicyTrainConfig>(&common)?;
            no_scenario_overrides(&rest)?;
            if let Some(e) = epochs {
                cfg.epochs = e;
            }
            let data = existing(data.unwrap_or_else(|| common.data_dir.join("dataset.bin")), "dataset")?;
            let wm_path = existing(wm.unwrap_or_else(|| common.data_dir.join("wm.ckpt")), "world-model checkpoint")?;
            let out = out.unwrap_or_else(|| common.data_dir.join("policy.ckpt"));
            ensure_parent(&out)?;
            let ds = traj::load(&data)?;
            let model = WorldModel::load(&wm_path)?;
            let opts = PolicyTrainOptions {
                checkpoint: Some(&out),
                log_csv: log,
                verbose: common.verbose,
            };
            let (policy, _) = train_policy(&model, &ds, &cfg, common.seed, &opts)?;
            policy.save(&out)?;
            write_sidecar(&out, "train-policy", &common, &[], &[&data, &wm_path], &cfg, &[])
        }
        Command::TrainDqn {
            scenario,
            out,
            episodes,
            common,
        } => {
            let (mut cfg, sc_ovr) = resolve_config::<DqnConfig>(&common)?;
            if let Some(e) = episodes {
                cfg.episodes = e;
            }
            let sc = one_scenario(&scenario, &sc_ovr)?;
            let out = out.unwrap_or_else(|| common.data_dir.join("dqn.ckpt"));
            ensure_parent(&out)?;
            let trained = dqn_train(&sc, &cfg, common.seed)?;
            trained.net.save(&out)?;
            write_sidecar(&out, "train-dqn", &common, &sc_ovr, &[], &cfg, &[sc])
        }
        Command::Evaluate {
            algo,
            scenario,
            episodes,
            out,
            models,
            common,
        } => {
            let (cfg, sc_ovr) = resolve_config::<EvalConfig>(&common)?;
            let sc = one_scenario(&scenario, &sc_ovr)?;
            let loaded = Loaded::new(&[algo.as_str()], &models, &common)?;
            let report = evaluate_one(&algo, &sc, episodes, &loaded, &cfg, &common)?;
            let dir = out_dir(out, &common, &format!("eval-{algo}-{}", sc.name))?;
            let path = dir.join("report.json");
            write_text(&path, &json(&report)?)?;
            write_text(&dir.join("episodes.csv"), &episodes_csv(&report)?)?;
            write_sidecar(&path, "evaluate", &common, &sc_ovr, &[], &cfg, std::slice::from_ref(&sc))?;
            if common.verbose {
                for m in METRICS {
                    let s = report.aggregates[&m];
                    eprintln!("{:>16}: {:.4} [{:.4}, {:.4}]", m.as_str(), s.mean, s.ci_low, s.ci_high);
                }
            }
            Ok(())
        }
        Command::Compare {
            algos,
            scenarios: set,
            reference,
            episodes,
            out,
            models,
            common,
        } => {
            let (cfg, sc_ovr) = resolve_config::<EvalConfig>(&common)?;
            let algos: Vec<&str> = algos.split(',').map(str::trim).filter(|a| !a.is_empty()).collect();
            if !algos.contains(&reference.as_str()) {
                return Err(Error::InvalidArgument(format!("reference '{reference}' is not among --algos")));
            }
            let scs = scenarios(&set, &sc_ovr)?;
            let loaded = Loaded::new(&algos, &models, &common)?;
            let dir = out_dir(out, &common, "compare")?;
            let mut all: Vec<Comparison> = Vec::new();
            for sc in &scs {
                let reports = algos
                    .iter()
                    .map(|a| evaluate_one(a, sc, episodes, &loaded, &cfg, &common))
                    .collect::<Result<Vec<_>>>()?;
                let cmp = compare(reports, &reference)?;
                let table = compare_table(&cmp);
                write_text(&dir.join(format!("{}.csv", sc.name)), &table.to_csv()?)?;
                write_text(&dir.join(format!("{}.json", sc.name)), &table.to_json()?)?;
                write_text(&dir.join(format!("{}.txt", sc.name)), &table.to_text())?;
                if common.verbose {
                    eprint!("{}", table.to_text());
                }
                all.push(cmp);
            }
            let path = dir.join("comparison.json");
            write_text(&path, &json(&all)?)?;
            write_text(&dir.join("category_plot.csv"), &plot_csv(&category_plot(&all))?)?;
            write_sidecar(&path, "compare", &common, &sc_ovr, &[], &cfg, &scs)
        }
    }
}

fn no_scenario_overrides(rest: &[String]) -> Result<()> {
    match rest.first() {
        Some(o) => Err(Error::Config(format!("override '{o}' does not name a config field"))),
        None => Ok(()),
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { exit::USAGE } else { exit::OK };
        }
    };
    match execute(cli) {
        Ok(()) => exit::OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
