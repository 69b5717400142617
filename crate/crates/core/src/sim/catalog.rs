//! Built-in scenario table: 27 configurations over six categories, plus the
//! named `default6` collection set (the default scenario and five mobility
//! variants, all at N = 50).

use super::types::{Category, ChannelParams, EnergyParams, Mobility, ScenarioConfig};
use crate::error::{Error, Result};

struct Row {
    name: &'static str,
    category: Category,
    n: usize,
    l: f64,
    speed: (f64, f64),
    pause: f64,
    range: f64,
    eta: f64,
    e_init: f64,
}

#[rustfmt::skip]
const ROWS: &[Row] = &[
    // MANET: default and its five collection variants first
    Row { name: "default",        category: Category::Manet,    n: 50,   l: 1000.0, speed: (1.0, 5.0),   pause: 0.0,  range: 250.0, eta: 3.0, e_init: 100.0 },
    Row { name: "manet_slow",     category: Category::Manet,    n: 50,   l: 1000.0, speed: (0.5, 1.5),   pause: 0.0,  range: 250.0, eta: 3.0, e_init: 100.0 },
    Row { name: "manet_fast",     category: Category::Manet,    n: 50,   l: 1000.0, speed: (5.0, 10.0),  pause: 0.0,  range: 250.0, eta: 3.0, e_init: 100.0 },
    Row { name: "manet_pause",    category: Category::Manet,    n: 50,   l: 1000.0, speed: (1.0, 5.0),   pause: 20.0, range: 250.0, eta: 3.0, e_init: 100.0 },
    Row { name: "manet_dense",    category: Category::Manet,    n: 50,   l: 800.0,  speed: (1.0, 5.0),   pause: 0.0,  range: 250.0, eta: 3.0, e_init: 100.0 },
    Row { name: "manet_sparse",   category: Category::Manet,    n: 50,   l: 1200.0, speed: (1.0, 5.0),   pause: 0.0,  range: 250.0, eta: 3.0, e_init: 100.0 },
    Row { name: "manet_n100",     category: Category::Manet,    n: 100,  l: 1400.0, speed: (1.0, 5.0),   pause: 0.0,  range: 250.0, eta: 3.0, e_init: 100.0 },
    Row { name: "manet_n1000",    category: Category::Manet,    n: 1000, l: 4500.0, speed: (1.0, 5.0),   pause: 0.0,  range: 250.0, eta: 3.0, e_init: 100.0 },
    // VANET: fast, long-range links along a larger area
    Row { name: "vanet_urban",    category: Category::Vanet,    n: 50,   l: 1500.0, speed: (8.0, 15.0),  pause: 5.0,  range: 300.0, eta: 2.7, e_init: 100.0 },
    Row { name: "vanet_highway",  category: Category::Vanet,    n: 50,   l: 2000.0, speed: (20.0, 35.0), pause: 0.0,  range: 400.0, eta: 2.5, e_init: 100.0 },
    Row { name: "vanet_n100",     category: Category::Vanet,    n: 100,  l: 2000.0, speed: (10.0, 25.0), pause: 0.0,  range: 350.0, eta: 2.7, e_init: 100.0 },
    Row { name: "vanet_n200",     category: Category::Vanet,    n: 200,  l: 3000.0, speed: (10.0, 25.0), pause: 0.0,  range: 350.0, eta: 2.7, e_init: 100.0 },
    // FANET: free-space-like propagation, fast 2D flight
    Row { name: "fanet_swarm",    category: Category::Fanet,    n: 30,   l: 1500.0, speed: (10.0, 20.0), pause: 0.0,  range: 500.0, eta: 2.2, e_init: 80.0 },
    Row { name: "fanet_patrol",   category: Category::Fanet,    n: 50,   l: 2000.0, speed: (15.0, 30.0), pause: 0.0,  range: 500.0, eta: 2.2, e_init: 80.0 },
    Row { name: "fanet_hover",    category: Category::Fanet,    n: 50,   l: 1500.0, speed: (2.0, 10.0),  pause: 15.0, range: 450.0, eta: 2.2, e_init: 80.0 },
    Row { name: "fanet_n100",     category: Category::Fanet,    n: 100,  l: 2500.0, speed: (10.0, 25.0), pause: 0.0,  range: 500.0, eta: 2.2, e_init: 80.0 },
    // WSN: static or near-static, short range, small batteries
    Row { name: "wsn_static",     category: Category::Wsn,      n: 50,   l: 500.0,  speed: (0.0, 0.0),   pause: 0.0,  range: 120.0, eta: 3.5, e_init: 20.0 },
    Row { name: "wsn_dense",      category: Category::Wsn,      n: 100,  l: 500.0,  speed: (0.0, 0.0),   pause: 0.0,  range: 100.0, eta: 3.5, e_init: 20.0 },
    Row { name: "wsn_drift",      category: Category::Wsn,      n: 50,   l: 500.0,  speed: (0.0, 0.2),   pause: 60.0, range: 120.0, eta: 3.5, e_init: 20.0 },
    Row { name: "wsn_n500",       category: Category::Wsn,      n: 500,  l: 1500.0, speed: (0.0, 0.0),   pause: 0.0,  range: 120.0, eta: 3.5, e_init: 20.0 },
    // TACTICAL: squads moving in bursts
    Row { name: "tactical_squad", category: Category::Tactical, n: 30,   l: 800.0,  speed: (1.0, 3.0),   pause: 10.0, range: 250.0, eta: 3.0, e_init: 100.0 },
    Row { name: "tactical_convoy",category: Category::Tactical, n: 50,   l: 1500.0, speed: (5.0, 15.0),  pause: 5.0,  range: 350.0, eta: 2.8, e_init: 100.0 },
    Row { name: "tactical_mixed", category: Category::Tactical, n: 100,  l: 1500.0, speed: (1.0, 12.0),  pause: 10.0, range: 300.0, eta: 3.0, e_init: 100.0 },
    Row { name: "tactical_n200",  category: Category::Tactical, n: 200,  l: 2200.0, speed: (1.0, 8.0),   pause: 10.0, range: 300.0, eta: 3.0, e_init: 100.0 },
    // DISASTER: slow rescuers, obstructed propagation, long pauses
    Row { name: "disaster_rescue",category: Category::Disaster, n: 50,   l: 800.0,  speed: (0.5, 2.0),   pause: 30.0, range: 180.0, eta: 3.5, e_init: 50.0 },
    Row { name: "disaster_camp",  category: Category::Disaster, n: 100,  l: 1000.0, speed: (0.2, 1.0),   pause: 60.0, range: 180.0, eta: 3.5, e_init: 50.0 },
    Row { name: "disaster_wide",  category: Category::Disaster, n: 200,  l: 2000.0, speed: (0.5, 3.0),   pause: 30.0, range: 220.0, eta: 3.3, e_init: 50.0 },
];

/// Named scenario sets accepted wherever a list of scenarios is expected.
pub const DEFAULT6: [&str; 6] = ["default", "manet_slow", "manet_fast", "manet_pause", "manet_dense", "manet_sparse"];

fn build(row: &Row) -> ScenarioConfig {
    let energy = EnergyParams {
        e_init: row.e_init,
        ..EnergyParams::default()
    };
    ScenarioConfig {
        name: row.name.to_string(),
        category: row.category,
        n: row.n,
        l: row.l,
        mobility: Mobility::RandomWaypoint {
            speed_min: row.speed.0,
            speed_max: row.speed.1,
            pause: row.pause,
        },
        channel: ChannelParams::with_range(1.0, 1.0, 1.0, row.eta, row.range),
        energy,
        ..ScenarioConfig::default()
    }
}

/// Every catalog scenario, in table order.
pub fn all() -> Vec<ScenarioConfig> {
    ROWS.iter().map(build).collect()
}

pub fn names() -> Vec<&'static str> {
    ROWS.iter().map(|r| r.name).collect()
}

pub fn get(name: &str) -> Result<ScenarioConfig> {
    ROWS.iter()
        .find(|r| r.name == name)
        .map(build)
        .ok_or_else(|| Error::Unknown {
            kind: "scenario",
            name: name.to_string(),
        })
}

/// Expands a scenario-set name (`default6`, `all`, a category name or a
/// comma-separated list of scenario names) into configs.
pub fn resolve_set(spec: &str) -> Result<Vec<ScenarioConfig>> {
    match spec {
        "default6" => DEFAULT6.iter().map(|n| get(n)).collect(),
        "all" => Ok(all()),
        _ => {
            if let Some(cat) = Category::ALL.iter().find(|c| c.as_str().eq_ignore_ascii_case(spec)) {
                return Ok(all().into_iter().filter(|s| s.category == *cat).collect());
            }
            spec.split(',').map(|n| get(n.trim())).collect()
        }
    }
}

/// A scenario from the catalog by name, or from a TOML file when `spec` names
/// an existing path; overrides are applied and the result validated.
pub fn resolve(spec: &str, overrides: &[String]) -> Result<ScenarioConfig> {
    let path = std::path::Path::new(spec);
    let sc: ScenarioConfig = if path.is_file() {
        crate::config::load(path, overrides)?
    } else {
        crate::config::with_overrides(&get(spec)?, overrides)?
    };
    sc.validate()?;
    Ok(sc)
}
