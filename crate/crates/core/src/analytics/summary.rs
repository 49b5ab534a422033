use serde::{Deserialize, Serialize};

use crate::dataio::{Participant, Schema, GENDER_CATEGORIES, LEARNING_MODE_CATEGORIES, MOTION_AXES, WEEK_MINUTES};
use crate::error::{Error, Result};
use crate::interpret::validate_window_minutes;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SankeyFlow {
    pub source: String,
    pub target: String,
    pub count: usize,
}

/// Participant counts per (gender, learning mode); zero flows omitted.
pub fn sankey_aggregate(participants: &[&Participant]) -> Vec<SankeyFlow> {
    let mut out = Vec::new();
    for g in GENDER_CATEGORIES {
        for m in LEARNING_MODE_CATEGORIES {
            let count = participants
                .iter()
                .filter(|p| p.gender.as_str() == g && p.learning_mode == m)
                .count();
            if count > 0 {
                out.push(SankeyFlow {
                    source: g.to_string(),
                    target: m.to_string(),
                    count,
                });
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionBucket {
    pub start: usize,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub magnitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionSummary {
    pub window_minutes: usize,
    pub start: usize,
    pub end: usize,
    pub participants: usize,
    pub buckets: Vec<MotionBucket>,
}

/// Group-mean weekly pattern over `start..end`, averaged in buckets of
/// `window_minutes` slots (the last bucket may be shorter).
pub fn motion_summary(
    participants: &[&Participant],
    window_minutes: usize,
    start: usize,
    end: usize,
) -> Result<MotionSummary> {
    validate_window_minutes(window_minutes)?;
    if start >= end || end > WEEK_MINUTES {
        return Err(Error::Argument(format!(
            "range {start}..{end} must be nonempty and within 0..{WEEK_MINUTES}"
        )));
    }
    if participants.is_empty() {
        return Err(Error::Argument("motion summary needs at least one participant".into()));
    }
    let n = participants.len() as f64;
    let mut mean = vec![0.0f64; MOTION_AXES * (end - start)];
    for p in participants {
        for c in 0..MOTION_AXES {
            let axis = &p.motion.axis(c)[start..end];
            let row = &mut mean[c * (end - start)..(c + 1) * (end - start)];
            row.iter_mut().zip(axis).for_each(|(a, &v)| *a += v as f64);
        }
    }
    mean.iter_mut().for_each(|v| *v /= n);
    let len = end - start;
    let buckets = (0..len)
        .step_by(window_minutes)
        .map(|b0| {
            let b1 = (b0 + window_minutes).min(len);
            let avg = |c: usize| mean[c * len + b0..c * len + b1].iter().sum::<f64>() / (b1 - b0) as f64;
            let (x, y, z) = (avg(0), avg(1), avg(2));
            MotionBucket {
                start: start + b0,
                x,
                y,
                z,
                magnitude: (x * x + y * y + z * z).sqrt(),
            }
        })
        .collect();
    Ok(MotionSummary {
        window_minutes,
        start,
        end,
        participants: participants.len(),
        buckets,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipantRow {
    pub id: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupMeans {
    pub name: String,
    pub size: usize,
    pub means: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextSummary {
    pub features: Vec<String>,
    pub participants: Vec<ParticipantRow>,
    pub groups: Vec<GroupMeans>,
    pub baseline: GroupMeans,
}

/// Scaled values of numeric features for parallel coordinates, with one
/// mean row per named group and an all-participants baseline.
pub fn group_context_summary(
    schema: &Schema,
    all: &[&Participant],
    groups: &[(String, Vec<&Participant>)],
    features: &[String],
) -> Result<ContextSummary> {
    if features.is_empty() {
        return Err(Error::Argument("select at least one feature".into()));
    }
    let positions: Vec<usize> = features
        .iter()
        .map(|id| {
            let idx = schema
                .index_of(id)
                .ok_or_else(|| Error::Argument(format!("unknown feature `{id}`")))?;
            if !schema.features()[idx].is_numeric() {
                return Err(Error::Type(format!("`{id}` is categorical")));
            }
            Ok(schema.positions_of(idx)[0])
        })
        .collect::<Result<_>>()?;
    let row = |p: &Participant| positions.iter().map(|&i| p.context.values[i] as f64).collect::<Vec<_>>();
    let means = |name: &str, members: &[&Participant]| {
        let mut acc = vec![0.0; positions.len()];
        for p in members {
            acc.iter_mut().zip(row(p)).for_each(|(a, v)| *a += v);
        }
        if !members.is_empty() {
            acc.iter_mut().for_each(|a| *a /= members.len() as f64);
        }
        GroupMeans {
            name: name.to_string(),
            size: members.len(),
            means: acc,
        }
    };
    Ok(ContextSummary {
        features: features.to_vec(),
        participants: all
            .iter()
            .map(|p| ParticipantRow {
                id: p.id.clone(),
                values: row(p),
            })
            .collect(),
        groups: groups.iter().map(|(n, m)| means(n, m)).collect(),
        baseline: means("all", all),
    })
}
