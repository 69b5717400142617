//! Versioned model container: config, node count, feature normalisation and
//! every named weight array.

use std::path::Path;

use super::model::{WmConfig, WorldModel};
use crate::container::{self, BodyReader, BodyWriter, Header};
use crate::error::{Error, Result};
use crate::features::FeatureNorm;
use crate::rng;

pub const WM_KIND: &str = "world_model";
pub const WM_SCHEMA_VERSION: u32 = 1;

impl WorldModel {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut h = Header::new(WM_KIND, WM_SCHEMA_VERSION);
        h.set("n", self.n);
        h.set("config", serde_json::to_string(&self.cfg).expect("config serialises"));
        h.set("norm", serde_json::to_string(&self.norm).expect("norm serialises"));
        let mut w = BodyWriter::default();
        w.named_mats(&self.store.to_named());
        container::encode(&h, &w.buf)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (h, body) = container::decode(bytes, WM_KIND, WM_SCHEMA_VERSION)?;
        Self::from_parts(&h, &body)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        container::write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (h, body) = container::load(path, WM_KIND, WM_SCHEMA_VERSION)?;
        Self::from_parts(&h, &body)
    }

    fn from_parts(h: &Header, body: &[u8]) -> Result<Self> {
        let n: usize = h.parse("n")?;
        let cfg: WmConfig =
            serde_json::from_str(h.get("config")?).map_err(|e| Error::Corrupt(format!("config: {e}")))?;
        let norm: FeatureNorm =
            serde_json::from_str(h.get("norm")?).map_err(|e| Error::Corrupt(format!("norm: {e}")))?;
        let mut model = WorldModel::new(cfg, n, norm, &mut rng::init_rng(0));
        let mut r = BodyReader::new(body);
        let mats = r.named_mats()?;
        r.finish()?;
        model.store.load_from(&mats).map_err(Error::Corrupt)?;
        Ok(model)
    }
}
