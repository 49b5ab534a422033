use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::dataset::{Dataset, RawDataset};
use super::motion::{extract_weekly_pattern, resample_minutes};
use super::schema::Schema;
use super::types::{
    AgeGroup, ContextPattern, FeatureKind, Gender, NormalizationStats, Participant,
    RawContextRecord, RawValue, AGE_ID, GENDER_ID, LEARNING_MODE_ID,
};
use crate::error::{Error, Result};

pub const DEFAULT_KNN_K: usize = 5;

pub const GENDER_CATEGORIES: [&str; 2] = ["female", "male"];
pub const LEARNING_MODE_CATEGORIES: [&str; 3] = ["face-to-face", "mixed", "online"];

/// Min-max scaling to `[0, 1]`. A degenerate range maps everything to 0.5;
/// values outside `[min, max]` are clamped.
pub fn minmax_scale(values: &[f64], min: f64, max: f64) -> Vec<f64> {
    values.iter().map(|&v| scale_one(v, min, max)).collect()
}

pub(crate) fn scale_one(v: f64, min: f64, max: f64) -> f64 {
    if max <= min {
        return 0.5;
    }
    ((v - min) / (max - min)).clamp(0.0, 1.0)
}

/// `[female, male, face-to-face, mixed, online]`.
pub fn one_hot_encode(gender: &str, learning_mode: &str) -> Result<[f32; 5]> {
    let mut out = [0.0f32; 5];
    let g = category_index(GENDER_ID, &GENDER_CATEGORIES, gender)?;
    let m = category_index(LEARNING_MODE_ID, &LEARNING_MODE_CATEGORIES, learning_mode)?;
    out[g] = 1.0;
    out[2 + m] = 1.0;
    Ok(out)
}

fn category_index<S: AsRef<str>>(feature: &str, categories: &[S], value: &str) -> Result<usize> {
    categories
        .iter()
        .position(|c| c.as_ref() == value)
        .ok_or_else(|| Error::Encoding {
            feature: feature.into(),
            value: value.into(),
        })
}

/// Min/max of observed numeric values per feature.
pub fn compute_stats(schema: &Schema, records: &[RawContextRecord]) -> NormalizationStats {
    let mut stats = BTreeMap::new();
    for f in schema.numeric() {
        let mut range: Option<(f64, f64)> = None;
        for v in records
            .iter()
            .filter_map(|r| r.values.get(&f.id).and_then(RawValue::as_number))
        {
            range = Some(match range {
                None => (v, v),
                Some((lo, hi)) => (lo.min(v), hi.max(v)),
            });
        }
        // A feature never observed gets a unit range; imputation rejects it
        // before the range is ever used.
        stats.insert(f.id.clone(), range.unwrap_or((0.0, 1.0)));
    }
    NormalizationStats(stats)
}

/// Distance between two records over jointly observed features.
///
/// Numeric features contribute their min-max scaled difference, categorical
/// ones 1 on mismatch; the sum of squares is rescaled by
/// `d_total / d_shared` so partially overlapping records stay comparable.
fn partial_distance(
    schema: &Schema,
    stats: &[(f64, f64)],
    a: &RawContextRecord,
    b: &RawContextRecord,
) -> f64 {
    let mut sum = 0.0;
    let mut shared = 0usize;
    for (i, f) in schema.features().iter().enumerate() {
        let (Some(x), Some(y)) = (a.values.get(&f.id), b.values.get(&f.id)) else {
            continue;
        };
        shared += 1;
        match (x, y) {
            (RawValue::Number(x), RawValue::Number(y)) => {
                let (lo, hi) = stats[i];
                let d = scale_one(*x, lo, hi) - scale_one(*y, lo, hi);
                sum += d * d;
            }
            (x, y) => {
                if x != y {
                    sum += 1.0;
                }
            }
        }
    }
    if shared == 0 {
        return f64::INFINITY;
    }
    (sum * schema.len() as f64 / shared as f64).sqrt()
}

/// K-nearest-neighbour imputation.
///
/// Neighbours are ranked by [`partial_distance`] computed on the original
/// (pre-imputation) records, ties broken by record order. Numeric gaps get the
/// neighbour mean, categorical gaps the neighbour mode (ties to the
/// lexicographically smallest label).
pub fn impute_knn(
    schema: &Schema,
    stats: &NormalizationStats,
    records: &[RawContextRecord],
    k: usize,
) -> Result<Vec<RawContextRecord>> {
    if k == 0 {
        return Err(Error::Argument("k must be positive".into()));
    }
    let ranges: Vec<(f64, f64)> = schema
        .features()
        .iter()
        .map(|f| {
            if f.is_numeric() {
                stats.0.get(&f.id).copied().unwrap_or((0.0, 1.0))
            } else {
                (0.0, 1.0)
            }
        })
        .collect();

    for f in schema.features() {
        let any_missing = records.iter().any(|r| !r.values.contains_key(&f.id));
        let all_missing = records.iter().all(|r| !r.values.contains_key(&f.id));
        if any_missing && all_missing {
            return Err(Error::Imputation {
                feature: f.id.clone(),
            });
        }
    }

    let mut out = records.to_vec();
    for (ri, record) in records.iter().enumerate() {
        let missing: Vec<usize> = schema
            .features()
            .iter()
            .enumerate()
            .filter(|(_, f)| !record.values.contains_key(&f.id))
            .map(|(i, _)| i)
            .collect();
        if missing.is_empty() {
            continue;
        }
        let mut order: Vec<(f64, usize)> = records
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != ri)
            .map(|(j, other)| (partial_distance(schema, &ranges, record, other), j))
            .collect();
        order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

        for fi in missing {
            let f = &schema.features()[fi];
            let donors: Vec<&RawValue> = order
                .iter()
                .filter_map(|&(_, j)| records[j].values.get(&f.id))
                .take(k)
                .collect();
            let value = match f.kind {
                FeatureKind::Numeric => {
                    let nums: Vec<f64> = donors.iter().filter_map(|v| v.as_number()).collect();
                    RawValue::Number(nums.iter().sum::<f64>() / nums.len() as f64)
                }
                FeatureKind::Categorical => {
                    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
                    for c in donors.iter().filter_map(|v| v.as_category()) {
                        *counts.entry(c).or_default() += 1;
                    }
                    // BTreeMap iterates in label order, so the first maximum
                    // is the lexicographically smallest.
                    let best = counts.values().copied().max().unwrap_or(0);
                    let label = counts
                        .iter()
                        .find(|(_, &n)| n == best)
                        .map(|(c, _)| c.to_string())
                        .ok_or_else(|| Error::Imputation {
                            feature: f.id.clone(),
                        })?;
                    RawValue::Category(label)
                }
            };
            out[ri].values.insert(f.id.clone(), value);
        }
    }
    Ok(out)
}

/// Scaled numeric features in schema order followed by the one-hot blocks.
pub fn build_context_pattern(
    schema: &Schema,
    stats: &NormalizationStats,
    record: &RawContextRecord,
) -> Result<ContextPattern> {
    let mut values = Vec::with_capacity(schema.encoded_len());
    for f in schema.numeric() {
        let v = record
            .values
            .get(&f.id)
            .and_then(RawValue::as_number)
            .ok_or_else(|| missing_at_encoding(record, &f.id))?;
        let (lo, hi) = stats.range(&f.id)?;
        values.push(scale_one(v, lo, hi) as f32);
    }
    for f in schema.categorical() {
        let c = record
            .values
            .get(&f.id)
            .and_then(RawValue::as_category)
            .ok_or_else(|| missing_at_encoding(record, &f.id))?;
        let hot = category_index(&f.id, &f.categories, c)?;
        values.extend((0..f.categories.len()).map(|i| if i == hot { 1.0 } else { 0.0 }));
    }
    Ok(ContextPattern { values })
}

fn missing_at_encoding(record: &RawContextRecord, id: &str) -> Error {
    Error::Integrity(format!(
        "participant `{}` has no value for `{id}` at encoding time",
        record.participant_id
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessReport {
    pub participants: usize,
    pub k: usize,
    pub imputed_values: usize,
    /// Imputed count per feature id; features never imputed are omitted.
    pub imputed_per_feature: BTreeMap<String, usize>,
    pub mean_motion_coverage: f64,
}

/// Imputation, scaling, encoding and weekly motion extraction for a whole
/// raw dataset.
pub fn preprocess(raw: &RawDataset, k: usize) -> Result<(Dataset, PreprocessReport)> {
    raw.validate()?;
    let schema = &raw.schema;
    let stats = compute_stats(schema, &raw.context);
    let imputed = impute_knn(schema, &stats, &raw.context, k)?;

    let mut participants = Vec::with_capacity(imputed.len());
    let mut per_feature: BTreeMap<String, usize> = BTreeMap::new();
    let mut coverage_sum = 0.0;
    for (orig, full) in raw.context.iter().zip(&imputed) {
        let id = &orig.participant_id;
        let imputed_mask: Vec<bool> = schema
            .features()
            .iter()
            .map(|f| !orig.values.contains_key(&f.id))
            .collect();
        for (f, &m) in schema.features().iter().zip(&imputed_mask) {
            if m {
                *per_feature.entry(f.id.clone()).or_default() += 1;
            }
        }
        let context = build_context_pattern(schema, &stats, full)?;
        let gender: Gender = full
            .values
            .get(GENDER_ID)
            .and_then(RawValue::as_category)
            .ok_or_else(|| missing_at_encoding(full, GENDER_ID))?
            .parse()?;
        let learning_mode = full
            .values
            .get(LEARNING_MODE_ID)
            .and_then(RawValue::as_category)
            .ok_or_else(|| missing_at_encoding(full, LEARNING_MODE_ID))?
            .to_string();
        let age_raw = full
            .values
            .get(AGE_ID)
            .and_then(RawValue::as_number)
            .ok_or_else(|| missing_at_encoding(full, AGE_ID))?;
        let age = age_raw.round().clamp(6.0, 18.0) as u8;

        let motion_record = raw
            .motion
            .get(id)
            .ok_or_else(|| Error::Integrity(format!("no motion record for participant `{id}`")))?;
        let series = resample_minutes(motion_record)?;
        let motion = extract_weekly_pattern(&series);
        coverage_sum +=
            motion.coverage.iter().filter(|&&c| c).count() as f64 / motion.coverage.len() as f64;

        let labels = *raw
            .labels
            .get(id)
            .ok_or_else(|| Error::Integrity(format!("no labels for participant `{id}`")))?;

        participants.push(Participant {
            id: id.clone(),
            gender,
            age,
            age_group: AgeGroup::for_age(age),
            learning_mode,
            context,
            motion,
            labels,
            imputed_mask,
        });
    }

    let report = PreprocessReport {
        participants: participants.len(),
        k,
        imputed_values: per_feature.values().sum(),
        imputed_per_feature: per_feature,
        mean_motion_coverage: if participants.is_empty() {
            0.0
        } else {
            coverage_sum / participants.len() as f64
        },
    };
    let dataset = Dataset {
        schema: schema.clone(),
        participants,
        normalization_stats: stats,
    };
    dataset.validate()?;
    Ok((dataset, report))
}
