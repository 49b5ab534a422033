use serde::{Deserialize, Serialize};

use super::window::{rank_windows, validate_window_minutes, WindowRanking};
use crate::dataio::{Indicator, Participant, Schema, MOTION_AXES};
use crate::error::{Error, Result};
use crate::model::HpModel;

/// Gate readout for one participant, or the mean over a group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Importance {
    /// One value per encoded context position.
    pub context: Vec<f64>,
    /// Per-axis motion importance, axis-major `[3][T]`.
    pub motion_axes: Vec<f64>,
    /// RMS across axes, length `T`.
    pub motion: Vec<f64>,
}

impl Importance {
    pub fn motion_len(&self) -> usize {
        self.motion.len()
    }

    /// Importance per raw schema feature; one-hot blocks are averaged.
    pub fn feature_importance(&self, schema: &Schema) -> Vec<f64> {
        feature_importance(schema, &self.context)
    }
}

/// Per-slot root mean square over the axes of an axis-major series.
///
/// ```
/// use cohortgate::interpret::rms_combine;
/// let c = rms_combine(&[0.3, 0.4, 0.0], 3);
/// assert!((c[0] - (0.25f64 / 3.0).sqrt()).abs() < 1e-15);
/// ```
pub fn rms_combine(axes: &[f64], channels: usize) -> Vec<f64> {
    let t = axes.len() / channels;
    (0..t)
        .map(|i| {
            let ss: f64 = (0..channels).map(|c| axes[c * t + i] * axes[c * t + i]).sum();
            (ss / channels as f64).sqrt()
        })
        .collect()
}

pub fn feature_importance(schema: &Schema, context: &[f64]) -> Vec<f64> {
    (0..schema.len())
        .map(|f| {
            let pos = schema.positions_of(f);
            pos.iter().map(|&p| context[p]).sum::<f64>() / pos.len() as f64
        })
        .collect()
}

/// Gate outputs of `model` on one participant.
pub fn personal_importance(model: &HpModel, p: &Participant) -> Result<Importance> {
    model.require_trained()?;
    let net = model.network();
    net.check_inputs(&p.context.values, &p.motion.values)?;
    let params = model.params();
    let context = net
        .context_gate_weights(params, &p.context.values)
        .ok_or_else(|| Error::Argument("model has no context gate".into()))?;
    let axes = net
        .motion_gate_weights(params, &p.motion.values)
        .ok_or_else(|| Error::Argument("model has no motion gate".into()))?;
    let motion_axes: Vec<f64> = axes.iter().map(|&v| v as f64).collect();
    Ok(Importance {
        context: context.iter().map(|&v| v as f64).collect(),
        motion: rms_combine(&motion_axes, MOTION_AXES),
        motion_axes,
    })
}

/// Element-wise mean over a nonempty group.
pub fn aggregate_importance(items: &[Importance]) -> Result<Importance> {
    let first = items
        .first()
        .ok_or_else(|| Error::Argument("cannot aggregate an empty group".into()))?;
    let mean = |get: fn(&Importance) -> &Vec<f64>| -> Result<Vec<f64>> {
        let mut acc = vec![0.0; get(first).len()];
        for it in items {
            let v = get(it);
            if v.len() != acc.len() {
                return Err(Error::Shape("importance lengths differ within group".into()));
            }
            acc.iter_mut().zip(v).for_each(|(a, b)| *a += b);
        }
        Ok(acc.into_iter().map(|a| a / items.len() as f64).collect())
    };
    Ok(Importance {
        context: mean(|i| &i.context)?,
        motion_axes: mean(|i| &i.motion_axes)?,
        motion: mean(|i| &i.motion)?,
    })
}

/// A candidate in the ranked feature set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureRef {
    Context { id: String },
    MotionWindow { start: usize, minutes: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedEntry {
    pub feature: FeatureRef,
    pub score: f64,
    /// Percentage of the summed top-k scores.
    pub share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedFeatureSet {
    pub indicator: Indicator,
    pub window_minutes: usize,
    pub entries: Vec<RankedEntry>,
}

/// Number of motion windows entering the candidate pool.
pub const MOTION_CANDIDATES: usize = 10;
pub const DEFAULT_TOP_K: usize = 10;

/// Ranks motion windows of `window_minutes` in a combined series.
pub fn window_ranking(motion: &[f64], window_minutes: usize, count: usize) -> Result<WindowRanking> {
    validate_window_minutes(window_minutes)?;
    Ok(WindowRanking {
        window_minutes,
        windows: rank_windows(motion, window_minutes, count)?,
    })
}

/// Top `k` of the raw context features and ranked motion windows by score,
/// with shares normalized to 100. Ties keep context features first, in
/// schema order, then windows in ranking order.
pub fn top_k_features(
    schema: &Schema,
    feature_scores: &[f64],
    windows: &WindowRanking,
    indicator: Indicator,
    k: usize,
) -> Result<RankedFeatureSet> {
    if feature_scores.len() != schema.len() {
        return Err(Error::Shape(format!(
            "{} feature scores for {} features",
            feature_scores.len(),
            schema.len()
        )));
    }
    let mut pool: Vec<(FeatureRef, f64)> = schema
        .features()
        .iter()
        .zip(feature_scores)
        .map(|(f, &s)| (FeatureRef::Context { id: f.id.clone() }, s))
        .collect();
    pool.extend(windows.windows.iter().map(|w| {
        (
            FeatureRef::MotionWindow {
                start: w.start,
                minutes: windows.window_minutes,
            },
            w.mean,
        )
    }));
    // Stable sort keeps the documented tie order.
    pool.sort_by(|a, b| b.1.total_cmp(&a.1));
    pool.truncate(k);
    let total: f64 = pool.iter().map(|e| e.1).sum();
    let entries = pool
        .into_iter()
        .map(|(feature, score)| RankedEntry {
            feature,
            share: if total > 0.0 { score / total * 100.0 } else { 0.0 },
            score,
        })
        .collect();
    Ok(RankedFeatureSet {
        indicator,
        window_minutes: windows.window_minutes,
        entries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::synth::default_schema;
    use crate::interpret::window::RankedWindow;

    #[test]
    fn rms_examples() {
        assert_eq!(rms_combine(&[1.0, 1.0, 1.0], 3), vec![1.0]);
        let c = rms_combine(&[0.5, 0.2, 0.5, 0.2, 0.5, 0.2], 3);
        assert!((c[0] - 0.5).abs() < 1e-15 && (c[1] - 0.2).abs() < 1e-15);
    }

    fn imp(c: f64) -> Importance {
        Importance { context: vec![c; 50], motion_axes: vec![c; 6], motion: vec![c; 2] }
    }

    #[test]
    fn aggregation() {
        assert_eq!(aggregate_importance(&[imp(0.3)]).unwrap(), imp(0.3));
        let m = aggregate_importance(&[imp(0.2), imp(0.6)]).unwrap();
        assert!((m.context[7] - 0.4).abs() < 1e-15);
        assert!(aggregate_importance(&[]).is_err());
    }

    #[test]
    fn feature_importance_averages_one_hot_blocks() {
        let schema = default_schema();
        let mut ctx = vec![0.5; 50];
        ctx[45] = 0.2;
        ctx[46] = 0.4;
        let f = feature_importance(&schema, &ctx);
        assert_eq!(f.len(), 47);
        let g = schema.features().iter().position(|d| d.id == "gender").unwrap();
        assert!((f[g] - 0.3).abs() < 1e-15);
    }

    #[test]
    fn shares() {
        let schema = default_schema();
        let none = WindowRanking { window_minutes: 60, windows: vec![] };
        let r = top_k_features(&schema, &[0.5; 47], &none, Indicator::Resi, 10).unwrap();
        assert_eq!(r.entries.len(), 10);
        assert!(r.entries.iter().all(|e| (e.share - 10.0).abs() < 1e-12));

        let mut scores = vec![0.0; 47];
        scores[..3].copy_from_slice(&[4.0, 3.0, 2.0]);
        let w = WindowRanking { window_minutes: 60, windows: vec![RankedWindow { start: 5, mean: 1.0 }] };
        let r = top_k_features(&schema, &scores, &w, Indicator::Resi, 4).unwrap();
        let shares: Vec<f64> = r.entries.iter().map(|e| e.share).collect();
        assert_eq!(shares, vec![40.0, 30.0, 20.0, 10.0]);
        assert_eq!(r.entries[3].feature, FeatureRef::MotionWindow { start: 5, minutes: 60 });
    }
}
