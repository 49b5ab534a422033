use super::types::{MotionPattern, RawMotionRecord, MOTION_AXES, WEEK_MINUTES};
use crate::error::{Error, Result};

/// Epoch minute of Monday 1970-01-05 00:00 UTC, the weekly slot origin.
pub const MONDAY_EPOCH_MINUTE: i64 = 4 * 24 * 60;

/// Per-minute means over a contiguous run of calendar minutes.
#[derive(Debug, Clone, PartialEq)]
pub struct MinuteSeries {
    /// Epoch minute of the first entry.
    pub start_minute: i64,
    pub axes: [Vec<f64>; MOTION_AXES],
    pub covered: Vec<bool>,
}

impl MinuteSeries {
    pub fn len(&self) -> usize {
        self.covered.len()
    }

    pub fn is_empty(&self) -> bool {
        self.covered.is_empty()
    }
}

/// Weekly slot of an epoch minute; Monday 00:00 is slot 0.
pub fn weekly_slot(epoch_minute: i64) -> usize {
    (epoch_minute - MONDAY_EPOCH_MINUTE).rem_euclid(WEEK_MINUTES as i64) as usize
}

/// Averages raw samples per calendar minute.
pub fn resample_minutes(record: &RawMotionRecord) -> Result<MinuteSeries> {
    let first = record.samples.first().ok_or_else(|| {
        Error::Argument(format!(
            "motion record for `{}` has no samples",
            record.participant_id
        ))
    })?;
    let last = record.samples.last().expect("nonempty");
    let start = first.timestamp.div_euclid(60);
    let end = last.timestamp.div_euclid(60);
    if end < start {
        return Err(Error::Integrity(format!(
            "motion samples for `{}` are not time-ordered",
            record.participant_id
        )));
    }
    let len = (end - start + 1) as usize;
    let mut sums = [vec![0.0; len], vec![0.0; len], vec![0.0; len]];
    let mut counts = vec![0u32; len];
    for s in &record.samples {
        let m = (s.timestamp.div_euclid(60) - start) as usize;
        sums[0][m] += s.ax as f64;
        sums[1][m] += s.ay as f64;
        sums[2][m] += s.az as f64;
        counts[m] += 1;
    }
    for axis in sums.iter_mut() {
        for (v, &n) in axis.iter_mut().zip(&counts) {
            if n > 0 {
                *v /= n as f64;
            }
        }
    }
    Ok(MinuteSeries {
        start_minute: start,
        axes: sums,
        covered: counts.iter().map(|&n| n > 0).collect(),
    })
}

/// Folds a minute series onto the week, averaging every covered occurrence of
/// each slot, then min-max normalizes each axis with this participant's own
/// observed range.
pub fn extract_weekly_pattern(series: &MinuteSeries) -> MotionPattern {
    let mut sums = vec![0.0f64; MOTION_AXES * WEEK_MINUTES];
    let mut counts = vec![0u32; WEEK_MINUTES];
    for (i, &covered) in series.covered.iter().enumerate() {
        if !covered {
            continue;
        }
        let slot = weekly_slot(series.start_minute + i as i64);
        counts[slot] += 1;
        for axis in 0..MOTION_AXES {
            sums[axis * WEEK_MINUTES + slot] += series.axes[axis][i];
        }
    }

    let mut pattern = MotionPattern::zeros();
    for (slot, &n) in counts.iter().enumerate() {
        pattern.coverage[slot] = n > 0;
    }
    for axis in 0..MOTION_AXES {
        let row = &mut sums[axis * WEEK_MINUTES..(axis + 1) * WEEK_MINUTES];
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (v, &n) in row.iter_mut().zip(&counts) {
            if n > 0 {
                *v /= n as f64;
                lo = lo.min(*v);
                hi = hi.max(*v);
            }
        }
        let out = &mut pattern.values[axis * WEEK_MINUTES..(axis + 1) * WEEK_MINUTES];
        for ((o, &v), &n) in out.iter_mut().zip(row.iter()).zip(&counts) {
            if n > 0 {
                *o = super::preprocess::scale_one(v, lo, hi) as f32;
            }
        }
    }
    pattern
}
