//! Actor-critic trained on world-model imagination, and its deployment as a
//! clustering policy in the simulator.

pub mod actor;
mod agent;
pub mod imagine;
pub mod ppo;
pub mod returns;
pub mod train;

use std::path::Path;

pub use actor::{Actor, ActorConfig, Critic};
pub use agent::WmPolicy;
pub use imagine::{imagine, Rollouts, StartStates};
pub use ppo::{ppo_update, PpoConfig};
pub use returns::{clipped_objective, lambda_returns};
pub use train::{train_policy, PolicyEpochLog, PolicyTrainConfig, PolicyTrainOptions};

use crate::container::{self, BodyReader, BodyWriter, Header};
use crate::error::{Error, Result};
use crate::rng;

pub const POLICY_KIND: &str = "policy";
pub const POLICY_SCHEMA_VERSION: u32 = 1;

pub struct PolicyBundle {
    pub actor: Actor,
    pub critic: Critic,
}

impl PolicyBundle {
    pub fn to_bytes(&self, hidden: usize, latent: usize, global: usize) -> Vec<u8> {
        let mut h = Header::new(POLICY_KIND, POLICY_SCHEMA_VERSION);
        h.set("actor", serde_json::to_string(&self.actor.cfg).expect("config serialises"));
        h.set("hidden", hidden);
        h.set("latent", latent);
        h.set("global", global);
        let mut w = BodyWriter::default();
        w.named_mats(&self.actor.store.to_named());
        w.named_mats(&self.critic.store.to_named());
        container::encode(&h, &w.buf)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (h, body) = container::decode(bytes, POLICY_KIND, POLICY_SCHEMA_VERSION)?;
        let cfg: ActorConfig =
            serde_json::from_str(h.get("actor")?).map_err(|e| Error::Corrupt(format!("actor config: {e}")))?;
        let mut r0 = rng::init_rng(0);
        let mut actor = Actor::new(cfg.clone(), h.parse("hidden")?, h.parse("latent")?, &mut r0);
        let mut critic = Critic::new(h.parse("global")?, cfg.critic_hidden, &mut r0);
        let mut r = BodyReader::new(&body);
        actor.store.load_from(&r.named_mats()?).map_err(Error::Corrupt)?;
        critic.store.load_from(&r.named_mats()?).map_err(Error::Corrupt)?;
        r.finish()?;
        Ok(Self { actor, critic })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let (hidden, latent, global) = self.dims();
        container::write_atomic(path, &self.to_bytes(hidden, latent, global))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// World-model widths the actor and critic were built for.
    pub fn dims(&self) -> (usize, usize, usize) {
        let enc = self.actor.store.get(self.actor.store.find("actor.enc.w").expect("actor encoder"));
        let c0 = self.critic.store.get(self.critic.store.find("critic.0.w").expect("critic input"));
        (self.actor.hidden, enc.rows - self.actor.hidden - 1, c0.rows)
    }
}
