use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::importance::FeatureRef;
use crate::dataio::{Indicator, Participant, Schema};
use crate::error::{Error, Result};
use crate::model::HpModel;

pub const DEFAULT_STEPS: usize = 21;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    Individual,
    Group,
    Overall,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CurveValue {
    Number(f64),
    Category(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub value: CurveValue,
    /// Mean predicted probability over the subjects.
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfluenceCurve {
    pub indicator: Indicator,
    pub feature: FeatureRef,
    pub level: Level,
    pub subjects: usize,
    pub points: Vec<CurvePoint>,
}

impl InfluenceCurve {
    pub fn probabilities(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.probability).collect()
    }
}

/// `steps` evenly spaced values from 0 to 1 inclusive.
pub fn numeric_grid(steps: usize) -> Vec<f64> {
    match steps {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..steps).map(|i| i as f64 / (steps - 1) as f64).collect(),
    }
}

fn check_subjects(model: &HpModel, subjects: &[&Participant]) -> Result<()> {
    model.require_trained()?;
    if subjects.is_empty() {
        return Err(Error::Argument("influence needs at least one subject".into()));
    }
    for p in subjects {
        model.network().check_inputs(&p.context.values, &p.motion.values)?;
    }
    Ok(())
}

/// Mean probability per variant. `variant(k, ctx)` edits a copy of each
/// subject's context pattern; the motion embedding is computed once.
fn context_variants(
    model: &HpModel,
    subjects: &[&Participant],
    n: usize,
    variant: impl Fn(usize, &mut [f32]) + Sync,
) -> Vec<f64> {
    let net = model.network();
    let params = model.params();
    let per_subject: Vec<Vec<f64>> = subjects
        .par_iter()
        .map(|p| {
            let motion = net
                .config()
                .streams
                .motion()
                .then(|| net.motion_forward(params, &p.motion.values).embedding)
                .unwrap_or_default();
            (0..n)
                .map(|k| {
                    let mut ctx = p.context.values.clone();
                    variant(k, &mut ctx);
                    let emb = if net.config().streams.context() {
                        net.context_forward(params, &ctx, &mut None).embedding
                    } else {
                        Vec::new()
                    };
                    let logit = net.head_forward(params, &emb, &motion, &mut None).logit;
                    model.probability(logit)
                })
                .collect()
        })
        .collect();
    mean_columns(&per_subject, n)
}

fn motion_variants(
    model: &HpModel,
    subjects: &[&Participant],
    n: usize,
    variant: impl Fn(usize, &mut [f32]) + Sync,
) -> Vec<f64> {
    let net = model.network();
    let params = model.params();
    let per_subject: Vec<Vec<f64>> = subjects
        .par_iter()
        .map(|p| {
            let ctx = net
                .config()
                .streams
                .context()
                .then(|| net.context_forward(params, &p.context.values, &mut None).embedding)
                .unwrap_or_default();
            (0..n)
                .map(|k| {
                    let emb = if net.config().streams.motion() {
                        let mut m = p.motion.values.clone();
                        variant(k, &mut m);
                        net.motion_forward(params, &m).embedding
                    } else {
                        Vec::new()
                    };
                    let logit = net.head_forward(params, &ctx, &emb, &mut None).logit;
                    model.probability(logit)
                })
                .collect()
        })
        .collect();
    mean_columns(&per_subject, n)
}

/// Column means, accumulated in subject order.
fn mean_columns(rows: &[Vec<f64>], n: usize) -> Vec<f64> {
    let mut acc = vec![0.0; n];
    for r in rows {
        acc.iter_mut().zip(r).for_each(|(a, b)| *a += b);
    }
    acc.into_iter().map(|a| a / rows.len() as f64).collect()
}

fn numeric_position(schema: &Schema, feature: &str) -> Result<usize> {
    let idx = schema
        .index_of(feature)
        .ok_or_else(|| Error::Argument(format!("unknown feature `{feature}`")))?;
    if !schema.features()[idx].is_numeric() {
        return Err(Error::Type(format!("`{feature}` is categorical")));
    }
    Ok(schema.positions_of(idx)[0])
}

/// Influence of a numeric context feature over the standard 0..=1 grid.
pub fn influence_numeric(
    model: &HpModel,
    schema: &Schema,
    feature: &str,
    subjects: &[&Participant],
    level: Level,
    steps: usize,
) -> Result<InfluenceCurve> {
    influence_numeric_at(model, schema, feature, subjects, level, &numeric_grid(steps))
}

/// As [`influence_numeric`] with explicit (scaled) values.
pub fn influence_numeric_at(
    model: &HpModel,
    schema: &Schema,
    feature: &str,
    subjects: &[&Participant],
    level: Level,
    values: &[f64],
) -> Result<InfluenceCurve> {
    let pos = numeric_position(schema, feature)?;
    check_subjects(model, subjects)?;
    let probs = context_variants(model, subjects, values.len(), |k, ctx| {
        ctx[pos] = values[k] as f32;
    });
    Ok(InfluenceCurve {
        indicator: model.indicator(),
        feature: FeatureRef::Context { id: feature.to_string() },
        level,
        subjects: subjects.len(),
        points: values
            .iter()
            .zip(probs)
            .map(|(&v, probability)| CurvePoint {
                value: CurveValue::Number(v),
                probability,
            })
            .collect(),
    })
}

/// One point per category of a categorical feature, in schema order.
pub fn influence_categorical(
    model: &HpModel,
    schema: &Schema,
    feature: &str,
    subjects: &[&Participant],
    level: Level,
) -> Result<InfluenceCurve> {
    let idx = schema
        .index_of(feature)
        .ok_or_else(|| Error::Argument(format!("unknown feature `{feature}`")))?;
    let desc = &schema.features()[idx];
    if desc.is_numeric() {
        return Err(Error::Type(format!("`{feature}` is numeric")));
    }
    let positions = schema.positions_of(idx);
    check_subjects(model, subjects)?;
    let probs = context_variants(model, subjects, positions.len(), |k, ctx| {
        for (j, &p) in positions.iter().enumerate() {
            ctx[p] = if j == k { 1.0 } else { 0.0 };
        }
    });
    let categories = positions
        .iter()
        .map(|&p| schema.layout()[p].category.clone().expect("one-hot slot"));
    Ok(InfluenceCurve {
        indicator: model.indicator(),
        feature: FeatureRef::Context { id: feature.to_string() },
        level,
        subjects: subjects.len(),
        points: categories
            .zip(probs)
            .map(|(c, probability)| CurvePoint {
                value: CurveValue::Category(c),
                probability,
            })
            .collect(),
    })
}

/// Sets all three axes on slots `start..start + minutes` to each grid value.
pub fn influence_motion_window(
    model: &HpModel,
    start: usize,
    minutes: usize,
    subjects: &[&Participant],
    level: Level,
    steps: usize,
) -> Result<InfluenceCurve> {
    influence_motion_window_at(model, start, minutes, subjects, level, &numeric_grid(steps))
}

pub fn influence_motion_window_at(
    model: &HpModel,
    start: usize,
    minutes: usize,
    subjects: &[&Participant],
    level: Level,
    values: &[f64],
) -> Result<InfluenceCurve> {
    let dims = model.network().dims();
    let t = dims.motion_len;
    if minutes == 0 || start.checked_add(minutes).map_or(true, |end| end > t) {
        return Err(Error::Argument(format!(
            "window {start}+{minutes} does not fit in {t} slots"
        )));
    }
    check_subjects(model, subjects)?;
    let channels = dims.motion_channels;
    let probs = motion_variants(model, subjects, values.len(), |k, m| {
        let v = values[k] as f32;
        for c in 0..channels {
            m[c * t + start..c * t + start + minutes].iter_mut().for_each(|x| *x = v);
        }
    });
    Ok(InfluenceCurve {
        indicator: model.indicator(),
        feature: FeatureRef::MotionWindow { start, minutes },
        level,
        subjects: subjects.len(),
        points: values
            .iter()
            .zip(probs)
            .map(|(&v, probability)| CurvePoint {
                value: CurveValue::Number(v),
                probability,
            })
            .collect(),
    })
}
