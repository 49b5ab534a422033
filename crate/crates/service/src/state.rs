use std::num::NonZeroUsize;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, OnceLock, RwLock};

use axum::body::Bytes;
use cohortgate::analytics::{spearman_matrix, CorrelationMatrix};
use cohortgate::dataio::io::{read_bytes, sha256_hex};
use cohortgate::dataio::{read_processed_snapshot, Dataset, Indicator, Participant};
use cohortgate::interpret::{aggregate_importance, personal_importance, Importance};
use cohortgate::model::{predict_and_normalize, HpModel, PredictionSet};
use cohortgate::{Error, Result};
use lru::LruCache;
use rayon::prelude::*;

use crate::error::ApiError;

/// File name of the artifact for one indicator inside a model directory.
pub fn model_file_name(indicator: Indicator) -> String {
    format!("model_{}.hpm", indicator.name())
}

/// Immutable snapshot served by every request: the cohort, the six models
/// and everything derived from them.
pub struct Loaded {
    dataset: Dataset,
    dataset_hash: String,
    /// Indexed by [`Indicator::index`].
    models: Vec<HpModel>,
    model_hashes: Vec<String>,
    predictions: PredictionSet,
    overall: [OnceLock<Arc<Importance>>; 6],
    correlation: OnceLock<Arc<CorrelationMatrix>>,
}

impl Loaded {
    /// Takes one trained model per indicator, in any order.
    pub fn new(dataset: Dataset, dataset_hash: String, models: Vec<HpModel>) -> Result<Self> {
        let mut ordered = Vec::with_capacity(6);
        for ind in Indicator::ALL {
            let mut it = models.iter().filter(|m| m.indicator() == ind);
            let m = it
                .next()
                .ok_or_else(|| Error::Artifact(format!("no model for {ind}")))?;
            if it.next().is_some() {
                return Err(Error::Artifact(format!("more than one model for {ind}")));
            }
            m.require_trained()?;
            ordered.push(m.clone());
        }
        let predictions = predict_and_normalize(&ordered, &dataset)?;
        Ok(Loaded {
            model_hashes: ordered.iter().map(HpModel::content_hash).collect(),
            dataset,
            dataset_hash,
            models: ordered,
            predictions,
            overall: Default::default(),
            correlation: OnceLock::new(),
        })
    }

    /// Reads a processed snapshot and `model_<IND>.hpm` for every indicator.
    /// Errors name the offending file.
    pub fn from_paths(dataset: &Path, model_dir: &Path) -> Result<Self> {
        let bytes = read_bytes(dataset)
            .map_err(|e| Error::Artifact(format!("dataset snapshot {}: {e}", dataset.display())))?;
        let ds = read_processed_snapshot(&bytes)
            .map_err(|e| Error::Artifact(format!("dataset snapshot {}: {e}", dataset.display())))?;
        let mut models = Vec::with_capacity(6);
        for ind in Indicator::ALL {
            let path: PathBuf = model_dir.join(model_file_name(ind));
            let raw = read_bytes(&path)
                .map_err(|e| Error::Artifact(format!("model artifact {}: {e}", path.display())))?;
            let m = HpModel::from_bytes(&raw)
                .map_err(|e| Error::Artifact(format!("model artifact {}: {e}", path.display())))?;
            if m.indicator() != ind {
                return Err(Error::Artifact(format!(
                    "model artifact {} holds a {} model",
                    path.display(),
                    m.indicator()
                )));
            }
            models.push(m);
        }
        Loaded::new(ds, sha256_hex(&bytes), models)
    }

    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    pub fn dataset_hash(&self) -> &str {
        &self.dataset_hash
    }

    pub fn model(&self, indicator: Indicator) -> &HpModel {
        &self.models[indicator.index()]
    }

    pub fn model_hash(&self, indicator: Indicator) -> &str {
        &self.model_hashes[indicator.index()]
    }

    pub fn predictions(&self) -> &PredictionSet {
        &self.predictions
    }

    pub fn participant(&self, id: &str) -> Result<&Participant, ApiError> {
        self.dataset
            .participant(id)
            .ok_or_else(|| ApiError::not_found(format!("unknown participant `{id}`")))
    }

    /// Mean gate importance over `members`, in parallel then reduced in order.
    pub fn group_importance(&self, indicator: Indicator, members: &[&Participant]) -> Result<Importance> {
        let model = self.model(indicator);
        let items: Vec<Importance> = members
            .par_iter()
            .map(|p| personal_importance(model, p))
            .collect::<Result<_>>()?;
        aggregate_importance(&items)
    }

    /// Whole-cohort importance, computed once per indicator.
    pub fn overall_importance(&self, indicator: Indicator) -> Result<Arc<Importance>> {
        let slot = &self.overall[indicator.index()];
        if let Some(v) = slot.get() {
            return Ok(v.clone());
        }
        let all: Vec<&Participant> = self.dataset.participants.iter().collect();
        let v = Arc::new(self.group_importance(indicator, &all)?);
        Ok(slot.get_or_init(|| v).clone())
    }

    /// Spearman matrix over every numeric context feature, computed once.
    pub fn correlation(&self) -> Result<Arc<CorrelationMatrix>> {
        if let Some(v) = self.correlation.get() {
            return Ok(v.clone());
        }
        let ids: Vec<String> = self.dataset.schema.numeric().map(|f| f.id.clone()).collect();
        let v = Arc::new(spearman_matrix(&self.dataset, &ids)?);
        Ok(self.correlation.get_or_init(|| v).clone())
    }
}

struct Slot {
    generation: u64,
    loaded: Option<Arc<Loaded>>,
}

/// Shared handle given to every request. `None` inside means a reload is in
/// progress.
#[derive(Clone)]
pub struct AppState {
    slot: Arc<RwLock<Slot>>,
    cache: Option<Arc<Mutex<LruCache<String, Bytes>>>>,
}

impl AppState {
    /// `cache_size` 0 disables response memoization.
    pub fn new(loaded: Loaded, cache_size: usize) -> Self {
        AppState {
            slot: Arc::new(RwLock::new(Slot {
                generation: 0,
                loaded: Some(Arc::new(loaded)),
            })),
            cache: NonZeroUsize::new(cache_size).map(|n| Arc::new(Mutex::new(LruCache::new(n)))),
        }
    }

    /// Current snapshot plus its generation, or 503 while reloading.
    pub fn snapshot(&self) -> Result<(u64, Arc<Loaded>), ApiError> {
        let s = self.slot.read().expect("state lock");
        s.loaded
            .clone()
            .map(|l| (s.generation, l))
            .ok_or_else(ApiError::reloading)
    }

    /// Marks the service unavailable until [`AppState::install`] runs.
    pub fn begin_reload(&self) {
        let mut s = self.slot.write().expect("state lock");
        s.loaded = None;
        s.generation += 1;
        drop(s);
        if let Some(c) = &self.cache {
            c.lock().expect("cache lock").clear();
        }
    }

    pub fn install(&self, loaded: Loaded) {
        let mut s = self.slot.write().expect("state lock");
        s.loaded = Some(Arc::new(loaded));
        s.generation += 1;
    }

    /// Reloads from disk. On failure the service stays unavailable.
    pub fn reload(&self, dataset: &Path, model_dir: &Path) -> Result<()> {
        self.begin_reload();
        let loaded = Loaded::from_paths(dataset, model_dir)?;
        self.install(loaded);
        Ok(())
    }

    pub(crate) fn cached(&self, key: &str) -> Option<Bytes> {
        self.cache
            .as_ref()
            .and_then(|c| c.lock().expect("cache lock").get(key).cloned())
    }

    pub(crate) fn store(&self, key: String, body: Bytes) {
        if let Some(c) = &self.cache {
            c.lock().expect("cache lock").put(key, body);
        }
    }

    /// Number of memoized responses.
    pub fn cache_len(&self) -> usize {
        self.cache.as_ref().map_or(0, |c| c.lock().expect("cache lock").len())
    }
}
