use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::dataio::Dataset;
use crate::error::{Error, Result};

/// Average ranks (1-based); tied values share the mean of their positions.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        let r = (i + j + 1) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = r;
        }
        i = j;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Two-sided p-value of `rho` from the t approximation with `n - 2`
/// degrees of freedom.
pub fn spearman_p_value(rho: f64, n: usize) -> f64 {
    if rho.abs() >= 1.0 {
        return 0.0;
    }
    let df = (n - 2) as f64;
    let t = rho * (df / (1.0 - rho * rho)).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).expect("df is positive");
    (2.0 * dist.sf(t.abs())).min(1.0)
}

/// Spearman's rho and its p-value; `None` when either input is constant.
///
/// ```
/// use cohortgate::analytics::spearman;
/// let x = [1.0, 2.0, 3.0, 4.0, 5.0];
/// let y: Vec<f64> = x.iter().map(|v: &f64| v.powi(3)).collect();
/// assert_eq!(spearman(&x, &y).unwrap().0, 1.0);
/// ```
pub fn spearman(x: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    let rho = pearson(&average_ranks(x), &average_ranks(y))?;
    Some((rho, spearman_p_value(rho, x.len())))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationCell {
    pub a: String,
    pub b: String,
    /// `None` marks a constant feature (not applicable).
    pub rho: Option<f64>,
    pub p_value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub features: Vec<String>,
    /// Row-major `features.len()²` cells.
    pub cells: Vec<CorrelationCell>,
}

impl CorrelationMatrix {
    pub fn cell(&self, i: usize, j: usize) -> &CorrelationCell {
        &self.cells[i * self.features.len() + j]
    }
}

/// Spearman matrix over the scaled values of numeric features.
pub fn spearman_matrix(dataset: &Dataset, features: &[String]) -> Result<CorrelationMatrix> {
    if dataset.participants.len() < 3 {
        return Err(Error::Argument("correlation needs at least 3 participants".into()));
    }
    let schema = &dataset.schema;
    let columns: Vec<Vec<f64>> = features
        .iter()
        .map(|id| {
            let idx = schema
                .index_of(id)
                .ok_or_else(|| Error::Argument(format!("unknown feature `{id}`")))?;
            if !schema.features()[idx].is_numeric() {
                return Err(Error::Type(format!("`{id}` is categorical")));
            }
            let pos = schema.positions_of(idx)[0];
            Ok(dataset.participants.iter().map(|p| p.context.values[pos] as f64).collect())
        })
        .collect::<Result<_>>()?;
    Ok(spearman_columns(features, &columns))
}

/// Spearman matrix over arbitrary named columns of equal length.
pub fn spearman_columns(names: &[String], columns: &[Vec<f64>]) -> CorrelationMatrix {
    let k = names.len();
    let mut cells = Vec::with_capacity(k * k);
    for i in 0..k {
        for j in 0..k {
            let r = if j < i {
                let c: &CorrelationCell = &cells[j * k + i];
                c.rho.zip(c.p_value)
            } else if i == j {
                spearman(&columns[i], &columns[i]).map(|_| (1.0, 0.0))
            } else {
                spearman(&columns[i], &columns[j])
            };
            cells.push(CorrelationCell {
                a: names[i].clone(),
                b: names[j].clone(),
                rho: r.map(|r| r.0),
                p_value: r.map(|r| r.1),
            });
        }
    }
    CorrelationMatrix { features: names.to_vec(), cells }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationPair {
    pub a: String,
    pub b: String,
    pub rho: f64,
    pub p_value: f64,
    pub pinned: bool,
}

/// Pinned pairs (in pin order) followed by the `n` strongest remaining
/// pairs by |rho|, ties in row-major pair order. Pinning a pair removes it
/// from the ranked tail without reordering the rest.
pub fn top_pairs(matrix: &CorrelationMatrix, n: usize, pinned: &[(String, String)]) -> Vec<CorrelationPair> {
    let k = matrix.features.len();
    let is_pinned = |a: &str, b: &str| {
        pinned
            .iter()
            .any(|(x, y)| (x == a && y == b) || (x == b && y == a))
    };
    let pair = |i: usize, j: usize, pinned: bool| {
        let c = matrix.cell(i, j);
        c.rho.map(|rho| CorrelationPair {
            a: c.a.clone(),
            b: c.b.clone(),
            rho,
            p_value: c.p_value.unwrap_or(1.0),
            pinned,
        })
    };
    let mut out: Vec<CorrelationPair> = Vec::new();
    for (x, y) in pinned {
        let i = matrix.features.iter().position(|f| f == x);
        let j = matrix.features.iter().position(|f| f == y);
        if let (Some(i), Some(j)) = (i, j) {
            if i != j && !out.iter().any(|p| (p.a == *x && p.b == *y) || (p.a == *y && p.b == *x)) {
                out.extend(pair(i.min(j), i.max(j), true));
            }
        }
    }
    let mut ranked: Vec<CorrelationPair> = (0..k)
        .flat_map(|i| (i + 1..k).map(move |j| (i, j)))
        .filter(|&(i, j)| !is_pinned(&matrix.features[i], &matrix.features[j]))
        .filter_map(|(i, j)| pair(i, j, false))
        .collect();
    ranked.sort_by(|x, y| y.rho.abs().total_cmp(&x.rho.abs()));
    ranked.truncate(n);
    out.extend(ranked);
    out
}
