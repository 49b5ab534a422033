use serde::{Deserialize, Serialize};

use crate::dataio::{AgeGroup, Dataset, Gender, Indicator};
use crate::error::{Error, Result};
use crate::model::{min_max_normalize, PredictionSet};

/// Population subset plus the indicators shown on the radar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GroupFilter {
    /// Empty means all.
    pub genders: Vec<Gender>,
    /// Empty means all.
    pub age_groups: Vec<AgeGroup>,
    pub indicators: Vec<Indicator>,
}

impl Default for GroupFilter {
    fn default() -> Self {
        GroupFilter {
            genders: Vec::new(),
            age_groups: Vec::new(),
            indicators: Indicator::ALL.to_vec(),
        }
    }
}

impl GroupFilter {
    pub fn validate(&self) -> Result<()> {
        if self.indicators.is_empty() {
            return Err(Error::Argument("select at least one indicator".into()));
        }
        Ok(())
    }

    /// Selected indicators deduplicated, in the fixed radar order.
    pub fn ordered_indicators(&self) -> Vec<Indicator> {
        Indicator::ALL
            .into_iter()
            .filter(|i| self.indicators.contains(i))
            .collect()
    }

    /// Participant positions passing the filter.
    pub fn members(&self, dataset: &Dataset) -> Vec<usize> {
        dataset.select(&self.genders, &self.age_groups)
    }
}

/// Radar score: the value itself for one axis, the mean for two, and the
/// polygon area on equally spaced axes for three or more.
///
/// ```
/// use cohortgate::analytics::profile_score;
/// let a = profile_score(&[1.0; 6]).unwrap();
/// assert!((a - 3.0 * 60f64.to_radians().sin()).abs() < 1e-12);
/// assert!((profile_score(&[0.4, 0.8]).unwrap() - 0.6).abs() < 1e-15);
/// ```
pub fn profile_score(values: &[f64]) -> Result<f64> {
    let k = values.len();
    match k {
        0 => Err(Error::Argument("profile score needs at least one value".into())),
        1 => Ok(values[0]),
        2 => Ok((values[0] + values[1]) / 2.0),
        _ => {
            let s = (2.0 * std::f64::consts::PI / k as f64).sin();
            let sum: f64 = (0..k).map(|i| values[i] * values[(i + 1) % k]).sum();
            Ok(0.5 * sum * s)
        }
    }
}

/// Min-max over the active group; 0.5 everywhere when degenerate.
pub fn normalize_scores(scores: &[f64]) -> Vec<f64> {
    min_max_normalize(scores).0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Divisions {
    /// 1 (at or above the mean) to 5 (below mean - 3 sd), per node.
    pub division: Vec<u8>,
    pub counts: [usize; 5],
    pub mean: f64,
    /// Population standard deviation.
    pub sd: f64,
}

/// 3σ divisions: 1 for `score >= m`, then one division per standard
/// deviation below the mean, 5 for `score < m - 3s`.
pub fn divide_3sigma(scores: &[f64]) -> Divisions {
    let n = scores.len().max(1) as f64;
    let mean = scores.iter().sum::<f64>() / n;
    let sd = (scores.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / n).sqrt();
    let mut counts = [0; 5];
    let division: Vec<u8> = scores
        .iter()
        .map(|&s| {
            let d = if s >= mean || sd == 0.0 {
                1
            } else if s >= mean - sd {
                2
            } else if s >= mean - 2.0 * sd {
                3
            } else if s >= mean - 3.0 * sd {
                4
            } else {
                5
            };
            counts[d as usize - 1] += 1;
            d
        })
        .collect();
    Divisions { division, counts, mean, sd }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileScore {
    pub id: String,
    pub values: Vec<f64>,
    pub raw_area: f64,
    pub normalized_score: f64,
}

/// Radar scores of the filtered group from normalized predictions.
pub fn profile_scores(
    dataset: &Dataset,
    predictions: &PredictionSet,
    filter: &GroupFilter,
) -> Result<Vec<ProfileScore>> {
    filter.validate()?;
    let inds = filter.ordered_indicators();
    let members = filter.members(dataset);
    let mut rows = Vec::with_capacity(members.len());
    for &m in &members {
        let id = &dataset.participants[m].id;
        let i = predictions
            .position(id)
            .ok_or_else(|| Error::Integrity(format!("no prediction for `{id}`")))?;
        let values: Vec<f64> = inds.iter().map(|&ind| predictions.normalized_of(ind, i)).collect();
        let raw_area = profile_score(&values)?;
        rows.push((id.clone(), values, raw_area));
    }
    let areas: Vec<f64> = rows.iter().map(|r| r.2).collect();
    let norm = normalize_scores(&areas);
    Ok(rows
        .into_iter()
        .zip(norm)
        .map(|((id, values, raw_area), normalized_score)| ProfileScore {
            id,
            values,
            raw_area,
            normalized_score,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn score_examples() {
        assert_eq!(profile_score(&[1.0, 0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(profile_score(&[0.7]).unwrap(), 0.7);
        assert!(profile_score(&[]).is_err());
        let a = profile_score(&[0.3, 0.9, 0.5, 0.2]).unwrap();
        let b = profile_score(&[0.6, 1.8, 1.0, 0.4]).unwrap();
        assert!((b - 4.0 * a).abs() < 1e-12);
    }

    #[test]
    fn normalization_examples() {
        assert_eq!(normalize_scores(&[2.0, 3.0, 4.0]), vec![0.0, 0.5, 1.0]);
        assert_eq!(normalize_scores(&[3.0]), vec![0.5]);
    }

    #[test]
    fn division_rules() {
        let d = divide_3sigma(&[0.4; 5]);
        assert_eq!(d.counts, [5, 0, 0, 0, 0]);
        // Mean 0.5, population sd sqrt(0.15625) ~ 0.395: 0.25 sits 0.63 sd
        // below the mean, 0.0 sits 1.26 sd below.
        let d = divide_3sigma(&[0.0, 1.0, 0.25, 0.75]);
        assert!((d.mean - 0.5).abs() < 1e-15);
        assert_eq!(d.division[2], 2);
        assert_eq!(d.division[0], 3);
        assert_eq!(d.division[1], 1);
        assert_eq!(d.counts.iter().sum::<usize>(), 4);
    }
}
