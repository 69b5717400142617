//! Dataset container. Header keys: `kind = dataset`, `schema_version`,
//! `episodes`, `meta` (JSON of scenarios, policy mix and seed). Body, per
//! episode, little-endian: scenario index, seed, policy name, `T`, `N`,
//! then `T + 1` frames of per-node `x y vx vy energy wx wy pause` (f64),
//! `ch alive` (u8) and `cluster` (i64), then actions (`T x N` u8), rewards
//! (`T` f64) and continue flags (`T` u8).

use std::path::Path;

use super::{Dataset, DatasetMeta, Trajectory};
use crate::container::{self, BodyReader, BodyWriter, Header};
use crate::error::{Error, Result};
use crate::sim::{NodeState, Vec2};

pub const DATASET_SCHEMA_VERSION: u32 = 1;

fn write_episode(w: &mut BodyWriter, ep: &Trajectory) {
    let t = ep.transitions();
    let n = ep.n();
    w.u64(ep.scenario as u64);
    w.u64(ep.seed);
    w.str(&ep.policy);
    w.u64(t as u64);
    w.u64(n as u64);
    for frame in &ep.frames {
        for nd in frame {
            w.f64s(&[
                nd.position.x,
                nd.position.y,
                nd.velocity.x,
                nd.velocity.y,
                nd.energy,
                nd.waypoint.x,
                nd.waypoint.y,
                nd.pause_left,
            ]);
            w.bytes(&[nd.ch_flag as u8, nd.alive as u8]);
            w.i64s(&[nd.cluster_id]);
        }
    }
    for a in &ep.actions {
        w.bytes(a);
    }
    w.f64s(&ep.rewards);
    let c: Vec<u8> = ep.continues.iter().map(|&c| c as u8).collect();
    w.bytes(&c);
}

fn flag(b: u8) -> Result<bool> {
    match b {
        0 => Ok(false),
        1 => Ok(true),
        _ => Err(Error::Corrupt(format!("flag byte {b} is neither 0 nor 1"))),
    }
}

fn read_episode(r: &mut BodyReader, scenarios: usize) -> Result<Trajectory> {
    let scenario = r.u64()? as usize;
    if scenario >= scenarios {
        return Err(Error::Corrupt(format!("episode references scenario {scenario} of {scenarios}")));
    }
    let seed = r.u64()?;
    let policy = r.str()?;
    let t = r.len(1)?;
    let n = r.len(1)?;
    let mut frames = Vec::with_capacity(t + 1);
    for _ in 0..=t {
        let mut frame = Vec::with_capacity(n);
        for _ in 0..n {
            let v = r.f64s(8)?;
            let fl = r.bytes(2)?;
            let cluster_id = r.i64s(1)?[0];
            frame.push(NodeState {
                position: Vec2::new(v[0], v[1]),
                velocity: Vec2::new(v[2], v[3]),
                energy: v[4],
                waypoint: Vec2::new(v[5], v[6]),
                pause_left: v[7],
                ch_flag: flag(fl[0])?,
                alive: flag(fl[1])?,
                cluster_id,
            });
        }
        frames.push(frame);
    }
    let actions = (0..t).map(|_| Ok(r.bytes(n)?.to_vec())).collect::<Result<Vec<_>>>()?;
    let rewards = r.f64s(t)?;
    let continues = r.bytes(t)?.iter().map(|&b| flag(b)).collect::<Result<Vec<_>>>()?;
    let ep = Trajectory {
        scenario,
        seed,
        policy,
        frames,
        actions,
        rewards,
        continues,
    };
    ep.validate().map_err(Error::Corrupt)?;
    Ok(ep)
}

pub fn encode(ds: &Dataset) -> Vec<u8> {
    let mut h = Header::new("dataset", DATASET_SCHEMA_VERSION);
    h.set("episodes", ds.episodes.len());
    h.set("meta", serde_json::to_string(&ds.meta).expect("metadata serialises"));
    let mut w = BodyWriter::default();
    for ep in &ds.episodes {
        write_episode(&mut w, ep);
    }
    container::encode(&h, &w.buf)
}

pub fn decode(bytes: &[u8]) -> Result<Dataset> {
    let (h, body) = container::decode(bytes, "dataset", DATASET_SCHEMA_VERSION)?;
    let declared: usize = h.parse("episodes")?;
    let meta: DatasetMeta =
        serde_json::from_str(h.get("meta")?).map_err(|e| Error::Corrupt(format!("dataset metadata: {e}")))?;
    let mut r = BodyReader::new(&body);
    let mut episodes = Vec::with_capacity(declared.min(1 << 16));
    while r.remaining() > 0 {
        episodes.push(read_episode(&mut r, meta.scenarios.len())?);
    }
    if episodes.len() != declared {
        return Err(Error::Corrupt(format!(
            "header declares {declared} episodes, body holds {}",
            episodes.len()
        )));
    }
    Ok(Dataset { meta, episodes })
}

/// Atomic write of the dataset container.
pub fn save(ds: &Dataset, path: &Path) -> Result<()> {
    container::write_atomic(path, &encode(ds))
}

pub fn load(path: &Path) -> Result<Dataset> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}
