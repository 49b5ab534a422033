use serde::{Deserialize, Serialize};

use super::importance::{feature_importance, top_k_features, window_ranking, Importance, RankedFeatureSet, MOTION_CANDIDATES};
use super::influence::Level;
use super::window::WindowRanking;
use crate::dataio::{Indicator, Schema};
use crate::error::Result;

pub const EXPORT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureScore {
    pub id: String,
    pub importance: f64,
}

/// Versioned importance document for one indicator at one level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    pub version: u32,
    pub indicator: Indicator,
    pub level: Level,
    pub subjects: usize,
    pub window_minutes: usize,
    /// All raw features, schema order.
    pub features: Vec<FeatureScore>,
    pub windows: WindowRanking,
    pub ranked: RankedFeatureSet,
}

impl ImportanceReport {
    pub fn build(
        schema: &Schema,
        importance: &Importance,
        indicator: Indicator,
        level: Level,
        subjects: usize,
        window_minutes: usize,
        k: usize,
    ) -> Result<Self> {
        let scores = feature_importance(schema, &importance.context);
        let windows = window_ranking(&importance.motion, window_minutes, MOTION_CANDIDATES)?;
        let ranked = top_k_features(schema, &scores, &windows, indicator, k)?;
        Ok(ImportanceReport {
            version: EXPORT_VERSION,
            indicator,
            level,
            subjects,
            window_minutes,
            features: schema
                .features()
                .iter()
                .zip(scores)
                .map(|(f, importance)| FeatureScore { id: f.id.clone(), importance })
                .collect(),
            windows,
            ranked,
        })
    }
}
