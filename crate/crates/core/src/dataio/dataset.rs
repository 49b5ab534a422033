use std::collections::{BTreeMap, BTreeSet};

use super::schema::Schema;
use super::types::{
    AgeGroup, Gender, HealthLabels, Indicator, NormalizationStats, Participant, RawContextRecord,
    RawMotionRecord,
};
use crate::error::{Error, Result};

/// Parsed input files before any preprocessing. Missing context values stay
/// missing.
#[derive(Debug, Clone, PartialEq)]
pub struct RawDataset {
    pub schema: Schema,
    /// In file order.
    pub context: Vec<RawContextRecord>,
    pub motion: BTreeMap<String, RawMotionRecord>,
    pub labels: BTreeMap<String, HealthLabels>,
}

impl RawDataset {
    pub fn len(&self) -> usize {
        self.context.len()
    }

    pub fn is_empty(&self) -> bool {
        self.context.is_empty()
    }

    /// Checks id uniqueness and that every record only uses schema ids.
    pub fn validate(&self) -> Result<()> {
        let mut ids = BTreeSet::new();
        for r in &self.context {
            if !ids.insert(r.participant_id.as_str()) {
                return Err(Error::Integrity(format!(
                    "duplicate participant id `{}`",
                    r.participant_id
                )));
            }
            for key in r.values.keys() {
                if self.schema.index_of(key).is_none() {
                    return Err(Error::Schema(format!(
                        "participant `{}` references unknown feature id `{key}`",
                        r.participant_id
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Preprocessed cohort: every participant has complete encoded context, a
/// weekly motion pattern and labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub schema: Schema,
    pub participants: Vec<Participant>,
    pub normalization_stats: NormalizationStats,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.participants.len()
    }

    pub fn is_empty(&self) -> bool {
        self.participants.is_empty()
    }

    pub fn participant(&self, id: &str) -> Option<&Participant> {
        self.participants.iter().find(|p| p.id == id)
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.participants.iter().position(|p| p.id == id)
    }

    pub fn labels(&self, indicator: Indicator) -> Vec<bool> {
        self.participants
            .iter()
            .map(|p| p.labels.get(indicator))
            .collect()
    }

    /// Indices of participants matching the gender/age selection. Empty
    /// selections mean "all".
    pub fn select(&self, genders: &[Gender], age_groups: &[AgeGroup]) -> Vec<usize> {
        self.participants
            .iter()
            .enumerate()
            .filter(|(_, p)| genders.is_empty() || genders.contains(&p.gender))
            .filter(|(_, p)| age_groups.is_empty() || age_groups.contains(&p.age_group))
            .map(|(i, _)| i)
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let mut ids = BTreeSet::new();
        for p in &self.participants {
            if !ids.insert(p.id.as_str()) {
                return Err(Error::Integrity(format!("duplicate participant id `{}`", p.id)));
            }
            if p.context.values.len() != self.schema.encoded_len() {
                return Err(Error::Integrity(format!(
                    "participant `{}` has context width {}, schema encodes {}",
                    p.id,
                    p.context.values.len(),
                    self.schema.encoded_len()
                )));
            }
        }
        for f in self.schema.numeric() {
            self.normalization_stats.range(&f.id)?;
        }
        Ok(())
    }
}
