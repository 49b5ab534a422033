use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Window lengths offered for ranking, in minutes: 5, 10, ..., 120.
pub const WINDOW_STEP: usize = 5;
pub const MAX_WINDOW_MINUTES: usize = 120;

pub fn validate_window_minutes(w: usize) -> Result<()> {
    if w == 0 || w % WINDOW_STEP != 0 || w > MAX_WINDOW_MINUTES {
        return Err(Error::Argument(format!(
            "window must be a multiple of {WINDOW_STEP} minutes between {WINDOW_STEP} and {MAX_WINDOW_MINUTES}, got {w}"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankedWindow {
    pub start: usize,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowRanking {
    pub window_minutes: usize,
    /// Pairwise disjoint, means non-increasing.
    pub windows: Vec<RankedWindow>,
}

/// Start and mean of the length-`w` window with the largest mean; the
/// smallest start wins ties. One pass with a running sum.
///
/// ```
/// use cohortgate::interpret::top_window;
/// assert_eq!(top_window(&[0.0, 1.0, 1.0, 0.0], 2).unwrap(), (1, 1.0));
/// ```
pub fn top_window(series: &[f64], w: usize) -> Result<(usize, f64)> {
    check(series.len(), w)?;
    let mut sum: f64 = series[..w].iter().sum();
    let (mut best, mut best_sum) = (0, sum);
    for start in 1..=series.len() - w {
        sum += series[start + w - 1] - series[start - 1];
        if sum > best_sum {
            best = start;
            best_sum = sum;
        }
    }
    Ok((best, series[best..best + w].iter().sum::<f64>() / w as f64))
}

fn check(t: usize, w: usize) -> Result<()> {
    if w == 0 || w > t {
        return Err(Error::Argument(format!(
            "window length {w} must lie in 1..={t}"
        )));
    }
    Ok(())
}

/// Repeatedly takes the best window among those that avoid every slot
/// already selected. Windows are contiguous in the original series; the
/// result holds fewer than `count` entries once no window fits.
pub fn rank_windows(series: &[f64], w: usize, count: usize) -> Result<Vec<RankedWindow>> {
    check(series.len(), w)?;
    let t = series.len();
    let mut taken = vec![false; t];
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let mut sum: f64 = series[..w].iter().sum();
        let mut blocked = taken[..w].iter().filter(|&&b| b).count();
        let mut best: Option<(usize, f64)> = (blocked == 0).then_some((0, sum));
        for start in 1..=t - w {
            let (enter, leave) = (start + w - 1, start - 1);
            sum += series[enter] - series[leave];
            blocked += taken[enter] as usize;
            blocked -= taken[leave] as usize;
            if blocked == 0 && best.map_or(true, |(_, s)| sum > s) {
                best = Some((start, sum));
            }
        }
        let Some((start, _)) = best else { break };
        taken[start..start + w].iter_mut().for_each(|b| *b = true);
        out.push(RankedWindow {
            start,
            mean: series[start..start + w].iter().sum::<f64>() / w as f64,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        let s = [0.2, 0.4, 0.6];
        assert_eq!(top_window(&s, 3).unwrap(), (0, s.iter().sum::<f64>() / 3.0));
        assert!(top_window(&s, 4).is_err());
        let r = rank_windows(&[3.0, 3.0, 0.0, 5.0, 5.0, 0.0], 2, 2).unwrap();
        assert_eq!(r, vec![RankedWindow { start: 3, mean: 5.0 }, RankedWindow { start: 0, mean: 3.0 }]);
        let r = rank_windows(&[1.0; 6], 2, 2).unwrap();
        assert_eq!((r[0].start, r[1].start), (0, 2));
        // Only [0,2) fits before the middle pick, so the third request finds nothing.
        let r = rank_windows(&[0.0, 0.0, 1.0, 1.0, 0.0], 2, 3).unwrap();
        assert_eq!(r.len(), 2);
    }

    #[test]
    fn window_minutes_rule() {
        for w in [5, 10, 60, 120] {
            validate_window_minutes(w).unwrap();
        }
        for w in [0, 7, 125, 200] {
            assert!(validate_window_minutes(w).is_err());
        }
    }
}
