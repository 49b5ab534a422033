use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::artifact::HpModel;
use crate::dataio::{Dataset, Indicator};
use crate::error::{Error, Result};

/// Raw probabilities and population-normalized scores per indicator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionSet {
    pub ids: Vec<String>,
    /// `raw[indicator.index()][participant]`
    pub raw: Vec<Vec<f64>>,
    pub normalized: Vec<Vec<f64>>,
    /// Population `(min, max)` of the raw probabilities per indicator.
    pub extremes: Vec<(f64, f64)>,
}

impl PredictionSet {
    pub fn position(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|i| i == id)
    }

    pub fn raw_of(&self, indicator: Indicator, i: usize) -> f64 {
        self.raw[indicator.index()][i]
    }

    pub fn normalized_of(&self, indicator: Indicator, i: usize) -> f64 {
        self.normalized[indicator.index()][i]
    }

    /// The six normalized scores of one participant, in indicator order.
    pub fn profile(&self, i: usize) -> [f64; 6] {
        std::array::from_fn(|k| self.normalized[k][i])
    }
}

/// `(v - min) / (max - min)`; all 0.5 when the range is degenerate.
///
/// ```
/// use cohortgate::model::min_max_normalize;
/// let (n, ext) = min_max_normalize(&[0.2, 0.5, 0.8]);
/// assert_eq!(ext, (0.2, 0.8));
/// assert!((n[1] - 0.5).abs() < 1e-12 && n[0] == 0.0 && n[2] == 1.0);
/// ```
pub fn min_max_normalize(values: &[f64]) -> (Vec<f64>, (f64, f64)) {
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let out = if values.is_empty() || max <= min {
        vec![0.5; values.len()]
    } else {
        values.iter().map(|v| (v - min) / (max - min)).collect()
    };
    (out, (min, max))
}

/// Scores every participant with all six models and min-max normalizes
/// each indicator over the scored population.
pub fn predict_and_normalize(models: &[HpModel], dataset: &Dataset) -> Result<PredictionSet> {
    let ordered = order_models(models)?;
    let mut raw = Vec::with_capacity(6);
    for m in &ordered {
        for p in &dataset.participants {
            m.network().check_inputs(&p.context.values, &p.motion.values)?;
        }
        let r: Vec<f64> = dataset
            .participants
            .par_iter()
            .map(|p| m.predict_participant(p))
            .collect::<Result<_>>()?;
        raw.push(r);
    }
    let mut normalized = Vec::with_capacity(6);
    let mut extremes = Vec::with_capacity(6);
    for r in &raw {
        let (n, e) = min_max_normalize(r);
        normalized.push(n);
        extremes.push(e);
    }
    Ok(PredictionSet {
        ids: dataset.participants.iter().map(|p| p.id.clone()).collect(),
        raw,
        normalized,
        extremes,
    })
}

/// Exactly one trained model per indicator, returned in indicator order.
pub(crate) fn order_models(models: &[HpModel]) -> Result<Vec<&HpModel>> {
    let mut out = Vec::with_capacity(6);
    for ind in Indicator::ALL {
        let mut found = models.iter().filter(|m| m.indicator() == ind);
        let m = found
            .next()
            .ok_or_else(|| Error::State(format!("no model for {ind}")))?;
        if found.next().is_some() {
            return Err(Error::Argument(format!("two models for {ind}")));
        }
        m.require_trained()?;
        out.push(m);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalization_examples() {
        let (n, _) = min_max_normalize(&[0.3; 4]);
        assert_eq!(n, vec![0.5; 4]);
        // Five-participant fixture, by hand: range 0.6 - 0.1 = 0.5.
        let (n, e) = min_max_normalize(&[0.1, 0.35, 0.6, 0.2, 0.45]);
        assert_eq!(e, (0.1, 0.6));
        let want = [0.0, 0.5, 1.0, 0.2, 0.7];
        for (a, b) in n.iter().zip(want) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
