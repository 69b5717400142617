use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Current version of the scenario config schema.
pub const SCENARIO_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dist(self, o: Vec2) -> f64 {
        ((self.x - o.x).powi(2) + (self.y - o.y).powi(2)).sqrt()
    }

    pub fn norm(self) -> f64 {
        (self.x * self.x + self.y * self.y).sqrt()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeState {
    pub position: Vec2,
    pub velocity: Vec2,
    pub energy: f64,
    pub ch_flag: bool,
    pub alive: bool,
    /// Index of the node's cluster head, `-1` when unclustered.
    pub cluster_id: i64,
    pub waypoint: Vec2,
    /// Remaining pause before the next leg, seconds.
    pub pause_left: f64,
}

impl NodeState {
    /// Marks the node dead and clears its role, cluster and motion.
    pub fn kill(&mut self) {
        self.alive = false;
        self.ch_flag = false;
        self.cluster_id = -1;
        self.velocity = Vec2::ZERO;
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    pub k0: f64,
    #[serde(rename = "Pt")]
    pub pt: f64,
    pub d0: f64,
    pub eta: f64,
    pub gamma_rx: f64,
}

impl ChannelParams {
    /// Parameters whose threshold puts the communication radius at `range` meters.
    pub fn with_range(k0: f64, pt: f64, d0: f64, eta: f64, range: f64) -> Self {
        let gamma_rx = k0 * pt * (d0 / range).powf(eta);
        Self { k0, pt, d0, eta, gamma_rx }
    }

    /// Distance at which received power equals `gamma_rx`.
    pub fn range(&self) -> f64 {
        self.d0 * (self.k0 * self.pt / self.gamma_rx).powf(1.0 / self.eta)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.d0 > 0.0 && self.eta > 0.0 && self.gamma_rx > 0.0 && self.k0 > 0.0 && self.pt > 0.0) {
            return Err(Error::Config(format!(
                "channel parameters must be positive (d0={}, eta={}, gamma_rx={}, k0={}, Pt={})",
                self.d0, self.eta, self.gamma_rx, self.k0, self.pt
            )));
        }
        Ok(())
    }
}

impl Default for ChannelParams {
    fn default() -> Self {
        Self::with_range(1.0, 1.0, 1.0, 3.0, 250.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyParams {
    #[serde(rename = "E_elec")]
    pub e_elec: f64,
    pub eps_amp: f64,
    #[serde(rename = "E_idle")]
    pub e_idle: f64,
    #[serde(rename = "E_ch_overhead")]
    pub e_ch_overhead: f64,
    #[serde(rename = "E_death")]
    pub e_death: f64,
    #[serde(rename = "E_init")]
    pub e_init: f64,
    pub dt: f64,
}

impl Default for EnergyParams {
    fn default() -> Self {
        Self {
            e_elec: 0.02,
            eps_amp: 4e-7,
            e_idle: 0.005,
            e_ch_overhead: 0.01,
            e_death: 0.5,
            e_init: 100.0,
            dt: 1.0,
        }
    }
}

impl EnergyParams {
    pub fn validate(&self) -> Result<()> {
        let vals = [
            self.e_elec,
            self.eps_amp,
            self.e_idle,
            self.e_ch_overhead,
            self.e_death,
            self.e_init,
            self.dt,
        ];
        if vals.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Config("energy parameters must be finite and nonnegative".into()));
        }
        if self.e_init <= self.e_death {
            return Err(Error::Config(format!(
                "E_init ({}) must exceed E_death ({})",
                self.e_init, self.e_death
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardWeights {
    pub w_s: f64,
    pub w_e: f64,
    pub w_c: f64,
    pub w_h: f64,
    pub w_tau: f64,
    pub w_p: f64,
    pub theta: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self {
            w_s: 0.2,
            w_e: 0.25,
            w_c: 0.3,
            w_h: 0.15,
            w_tau: 0.1,
            w_p: 0.5,
            theta: 0.2,
        }
    }
}

impl RewardWeights {
    pub fn zero() -> Self {
        Self {
            w_s: 0.0,
            w_e: 0.0,
            w_c: 0.0,
            w_h: 0.0,
            w_tau: 0.0,
            w_p: 0.0,
            theta: 0.2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let w = [self.w_s, self.w_e, self.w_c, self.w_h, self.w_tau, self.w_p];
        if w.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Config("reward weights must be finite and nonnegative".into()));
        }
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return Err(Error::Config(format!("theta must lie in (0,1), got {}", self.theta)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Category {
    Manet,
    Vanet,
    Fanet,
    Wsn,
    Tactical,
    Disaster,
}

impl Category {
    pub const ALL: [Category; 6] = [
        Category::Manet,
        Category::Vanet,
        Category::Fanet,
        Category::Wsn,
        Category::Tactical,
        Category::Disaster,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Manet => "MANET",
            Category::Vanet => "VANET",
            Category::Fanet => "FANET",
            Category::Wsn => "WSN",
            Category::Tactical => "TACTICAL",
            Category::Disaster => "DISASTER",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum Mobility {
    /// Random waypoint: uniform waypoints, uniform speed per leg, fixed pause on arrival.
    RandomWaypoint {
        speed_min: f64,
        speed_max: f64,
        pause: f64,
    },
}

impl Mobility {
    pub fn max_speed(&self) -> f64 {
        match self {
            Mobility::RandomWaypoint { speed_max, .. } => *speed_max,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Mobility::RandomWaypoint {
                speed_min,
                speed_max,
                pause,
            } => {
                if !(*speed_min >= 0.0 && speed_max >= speed_min && *pause >= 0.0) {
                    return Err(Error::Config(format!(
                        "random waypoint needs 0 <= speed_min <= speed_max and pause >= 0 (got {speed_min}, {speed_max}, {pause})"
                    )));
                }
                Ok(())
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub schema_version: u32,
    pub name: String,
    pub category: Category,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "L")]
    pub l: f64,
    pub horizon: usize,
    pub seed: u64,
    pub mobility: Mobility,
    pub channel: ChannelParams,
    pub energy: EnergyParams,
    pub reward_weights: RewardWeights,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            schema_version: SCENARIO_SCHEMA_VERSION,
            name: "default".into(),
            category: Category::Manet,
            n: 50,
            l: 1000.0,
            horizon: 501,
            seed: 0,
            mobility: Mobility::RandomWaypoint {
                speed_min: 1.0,
                speed_max: 5.0,
                pause: 0.0,
            },
            channel: ChannelParams::default(),
            energy: EnergyParams::default(),
            reward_weights: RewardWeights::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCENARIO_SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "scenario schema_version {} unsupported (expected {})",
                self.schema_version, SCENARIO_SCHEMA_VERSION
            )));
        }
        if self.n < 2 {
            return Err(Error::Config(format!("scenario needs N >= 2, got {}", self.n)));
        }
        if self.horizon < 1 {
            return Err(Error::Config("scenario needs horizon >= 1".into()));
        }
        if !(self.l > 0.0 && self.l.is_finite()) {
            return Err(Error::Config(format!("area side L must be positive, got {}", self.l)));
        }
        self.mobility.validate()?;
        self.channel.validate()?;
        self.energy.validate()?;
        self.reward_weights.validate()
    }
}

/// Observable network state at one step.
#[derive(Clone, Debug, PartialEq)]
pub struct NetSnapshot {
    pub t: usize,
    pub nodes: Vec<NodeState>,
    /// Row-major `N x N`, symmetric, zero diagonal.
    pub adjacency: Vec<bool>,
    /// Row-major `N x N` received power, zero on the diagonal.
    pub received_power: Vec<f64>,
}

impl NetSnapshot {
    pub fn n(&self) -> usize {
        self.nodes.len()
    }

    #[inline]
    pub fn adj(&self, i: usize, j: usize) -> bool {
        self.adjacency[i * self.nodes.len() + j]
    }

    #[inline]
    pub fn power(&self, i: usize, j: usize) -> f64 {
        self.received_power[i * self.nodes.len() + j]
    }

    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        let n = self.nodes.len();
        (0..n).filter(move |&j| self.adjacency[i * n + j])
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors(i).count()
    }

    pub fn alive_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.alive).count()
    }

    pub fn ch_vector(&self) -> Vec<u8> {
        self.nodes.iter().map(|n| n.ch_flag as u8).collect()
    }

    pub fn alive_mask(&self) -> Vec<bool> {
        self.nodes.iter().map(|n| n.alive).collect()
    }
}
