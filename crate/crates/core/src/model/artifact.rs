use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{Hyper, ModelConfig};
use super::layers::sigmoid;
use super::network::{InputDims, Network, ParamGroup};
use crate::dataio::{Indicator, Participant};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"HPM\0";
pub const ARTIFACT_VERSION: u32 = 1;

/// One trained (or freshly initialized) single-indicator model.
#[derive(Debug, Clone)]
pub struct HpModel {
    indicator: Indicator,
    network: Network,
    params: Vec<f32>,
    trained: bool,
    training_seed: u64,
    hyper: Option<Hyper>,
    /// Free-form provenance: CLI flags, dataset hash, and so on.
    pub metadata: BTreeMap<String, String>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    version: u32,
    indicator: Indicator,
    config: ModelConfig,
    dims: InputDims,
    trained: bool,
    training_seed: u64,
    hyper: Option<Hyper>,
    groups: Vec<ParamGroup>,
    metadata: BTreeMap<String, String>,
}

impl HpModel {
    /// Untrained model with parameters initialized from `config.seed`.
    pub fn init(indicator: Indicator, config: &ModelConfig, dims: InputDims) -> Result<Self> {
        let network = Network::new(config, dims)?;
        let params = network.init_params(config.seed);
        Ok(HpModel {
            indicator,
            network,
            params,
            trained: false,
            training_seed: config.seed,
            hyper: None,
            metadata: BTreeMap::new(),
        })
    }

    pub fn from_parts(
        indicator: Indicator,
        config: &ModelConfig,
        dims: InputDims,
        params: Vec<f32>,
        training_seed: u64,
        hyper: Option<Hyper>,
    ) -> Result<Self> {
        let network = Network::new(config, dims)?;
        if params.len() != network.n_params() {
            return Err(Error::Shape(format!(
                "{} parameters given, architecture needs {}",
                params.len(),
                network.n_params()
            )));
        }
        Ok(HpModel {
            indicator,
            network,
            params,
            trained: true,
            training_seed,
            hyper,
            metadata: BTreeMap::new(),
        })
    }

    pub fn indicator(&self) -> Indicator {
        self.indicator
    }

    pub fn config(&self) -> &ModelConfig {
        self.network.config()
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn params(&self) -> &[f32] {
        &self.params
    }

    pub fn is_trained(&self) -> bool {
        self.trained
    }

    pub fn training_seed(&self) -> u64 {
        self.training_seed
    }

    pub fn hyper(&self) -> Option<Hyper> {
        self.hyper
    }

    pub fn require_trained(&self) -> Result<()> {
        if self.trained {
            Ok(())
        } else {
            Err(Error::State(format!("model for {} is not trained", self.indicator)))
        }
    }

    /// Overwrites one named parameter group, e.g. to zero a stream.
    pub fn set_group(&mut self, name: &str, values: &[f32]) -> Result<()> {
        let g = self
            .network
            .group(name)
            .ok_or_else(|| Error::Argument(format!("no parameter group `{name}`")))?;
        if g.len() != values.len() {
            return Err(Error::Shape(format!("`{name}` holds {} values", g.len())));
        }
        self.params[g.range()].copy_from_slice(values);
        Ok(())
    }

    /// Inference-mode probability. Works on untrained models too; callers
    /// that need a trained one check [`HpModel::require_trained`].
    pub fn predict(&self, context: &[f32], motion: &[f32]) -> Result<f64> {
        self.network.check_inputs(context, motion)?;
        Ok(self.probability(self.network.logit(&self.params, context, motion)))
    }

    pub fn predict_participant(&self, p: &Participant) -> Result<f64> {
        self.predict(&p.context.values, &p.motion.values)
    }

    pub(crate) fn probability(&self, logit: f32) -> f64 {
        sigmoid(logit as f64)
    }

    /// Serialized container: magic, version, JSON header, little-endian
    /// f32 parameters, trailing SHA-256 of everything before it.
    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            version: ARTIFACT_VERSION,
            indicator: self.indicator,
            config: self.network.config().clone(),
            dims: self.network.dims(),
            trained: self.trained,
            training_seed: self.training_seed,
            hyper: self.hyper,
            groups: self.network.groups().to_vec(),
            metadata: self.metadata.clone(),
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::with_capacity(4 + 4 + 8 + json.len() + 8 + 4 * self.params.len() + 32);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&ARTIFACT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        out.extend_from_slice(&(self.params.len() as u64).to_le_bytes());
        for p in &self.params {
            out.extend_from_slice(&p.to_le_bytes());
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Artifact(m.to_string());
        if bytes.len() < 4 + 4 + 8 + 8 + 32 || &bytes[..4] != MAGIC {
            return Err(bad("not a model artifact"));
        }
        let (body, digest) = bytes.split_at(bytes.len() - 32);
        if Sha256::digest(body).as_slice() != digest {
            return Err(Error::Integrity("model artifact hash mismatch".into()));
        }
        let version = u32::from_le_bytes(body[4..8].try_into().unwrap());
        if version != ARTIFACT_VERSION {
            return Err(bad(&format!("unsupported artifact version {version}")));
        }
        let hlen = u64::from_le_bytes(body[8..16].try_into().unwrap()) as usize;
        let rest = body.get(16..).ok_or_else(|| bad("truncated"))?;
        if rest.len() < hlen + 8 {
            return Err(bad("truncated header"));
        }
        let header: Header = serde_json::from_slice(&rest[..hlen])?;
        let n = u64::from_le_bytes(rest[hlen..hlen + 8].try_into().unwrap()) as usize;
        let raw = &rest[hlen + 8..];
        if raw.len() != 4 * n {
            return Err(bad("parameter block length mismatch"));
        }
        let params: Vec<f32> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let mut m = HpModel::from_parts(
            header.indicator,
            &header.config,
            header.dims,
            params,
            header.training_seed,
            header.hyper,
        )?;
        if m.network.groups() != header.groups.as_slice() {
            return Err(bad("parameter layout does not match the configuration"));
        }
        m.trained = header.trained;
        m.metadata = header.metadata;
        Ok(m)
    }

    /// Hex SHA-256 of the serialized artifact.
    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::network::tests::{mini_config, mini_dims};

    #[test]
    fn round_trips_bit_exactly() {
        let mut m = HpModel::init(Indicator::Resi, &mini_config(), mini_dims()).unwrap();
        m.metadata.insert("k".into(), "v".into());
        let bytes = m.to_bytes();
        let back = HpModel::from_bytes(&bytes).unwrap();
        assert_eq!(back.to_bytes(), bytes);
        assert_eq!(back.params(), m.params());
        assert_eq!(back.indicator(), Indicator::Resi);
        assert!(!back.is_trained());
    }

    #[test]
    fn corruption_is_detected() {
        let m = HpModel::init(Indicator::Mvpa, &mini_config(), mini_dims()).unwrap();
        let mut bytes = m.to_bytes();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 1;
        assert!(matches!(HpModel::from_bytes(&bytes), Err(Error::Integrity(_))));
        assert!(HpModel::from_bytes(b"nope").is_err());
    }

    #[test]
    fn zero_head_gives_one_half() {
        let mut m = HpModel::init(Indicator::Mvpa, &mini_config(), mini_dims()).unwrap();
        m.set_group("head.1.weight", &[0.0; 5]).unwrap();
        m.set_group("head.1.bias", &[0.0]).unwrap();
        let p = m.predict(&[0.2; 8], &[0.7; 96]).unwrap();
        assert_eq!(p, 0.5);
        assert!(m.predict(&[0.2; 7], &[0.7; 96]).is_err());
    }
}
