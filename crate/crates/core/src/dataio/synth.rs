//! Synthetic cohorts with planted effects.
//!
//! Labels are known functions of specific inputs, so importance and
//! influence analyses have a ground truth to recover:
//!
//! * MVPA is 1 exactly when the mean acceleration magnitude inside a daily
//!   window (18:00-19:00 by default) exceeds a threshold.
//! * Every other indicator is a Bernoulli draw from a logistic function of a
//!   few configured context features, optionally flipped with a small noise
//!   probability.
//!
//! After labels are fixed, a fraction of context cells is deleted so the
//! imputation path gets exercised.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::dataset::RawDataset;
use super::preprocess::{GENDER_CATEGORIES, LEARNING_MODE_CATEGORIES};
use super::schema::Schema;
use super::types::{
    FeatureDescriptor, FeatureKind, HealthLabels, Indicator, MotionSample, RawContextRecord,
    RawMotionRecord, RawValue, AGE_ID, GENDER_ID, LEARNING_MODE_ID,
};
use crate::error::{Error, Result};

/// Monday 2024-01-01 00:00 UTC.
pub const DEFAULT_START_TIMESTAMP: i64 = 1_704_067_200;

struct NumericSpec {
    id: &'static str,
    name: &'static str,
    category: &'static str,
    unit: &'static str,
    lo: f64,
    hi: f64,
    step: f64,
    /// Latent correlation with an earlier feature.
    parent: Option<(&'static str, f64)>,
}

const fn num(
    id: &'static str,
    name: &'static str,
    category: &'static str,
    unit: &'static str,
    lo: f64,
    hi: f64,
    step: f64,
) -> NumericSpec {
    NumericSpec {
        id,
        name,
        category,
        unit,
        lo,
        hi,
        step,
        parent: None,
    }
}

const fn corr(mut s: NumericSpec, parent: &'static str, rho: f64) -> NumericSpec {
    s.parent = Some((parent, rho));
    s
}

// Schema order; `None` marks where the categorical features sit.
const LAYOUT: &[Option<NumericSpec>] = &[
    Some(num(AGE_ID, "Age", "demographics", "years", 6.0, 18.0, 1.0)),
    Some(corr(num("height_cm", "Height", "demographics", "cm", 110.0, 185.0, 0.5), AGE_ID, 0.8)),
    Some(corr(num("weight_kg", "Weight", "demographics", "kg", 18.0, 80.0, 0.1), "height_cm", 0.7)),
    Some(num("siblings", "Number of siblings", "demographics", "count", 0.0, 4.0, 1.0)),
    None, // gender
    Some(num("household_income", "Household income band", "socioeconomic", "band", 1.0, 10.0, 1.0)),
    Some(corr(num("father_education", "Father's education", "socioeconomic", "level", 1.0, 6.0, 1.0), "household_income", 0.5)),
    Some(corr(num("mother_education", "Mother's education", "socioeconomic", "level", 1.0, 6.0, 1.0), "father_education", 0.6)),
    Some(num("household_size", "Household size", "socioeconomic", "persons", 2.0, 8.0, 1.0)),
    Some(num("parent_work_hours", "Parent weekly work hours", "socioeconomic", "h/week", 20.0, 70.0, 1.0)),
    Some(corr(num("housing_space", "Housing space", "socioeconomic", "m2", 20.0, 150.0, 1.0), "household_income", 0.6)),
    Some(num("family_support", "Perceived family support", "socioeconomic", "score", 1.0, 5.0, 0.1)),
    Some(corr(num("parent_time", "Daily time with parents", "socioeconomic", "h/day", 0.0, 5.0, 0.1), "parent_work_hours", -0.4)),
    Some(num("sleep_weekday", "Sleep duration on weekdays", "sleep", "h", 6.0, 11.0, 0.1)),
    Some(corr(num("sleep_weekend", "Sleep duration on weekends", "sleep", "h", 7.0, 12.0, 0.1), "sleep_weekday", 0.6)),
    Some(corr(num("bedtime_weekday", "Weekday bedtime", "sleep", "h", 20.0, 24.0, 0.1), "sleep_weekday", -0.5)),
    Some(num("sleep_latency", "Sleep latency", "sleep", "min", 5.0, 60.0, 1.0)),
    Some(corr(num("sleep_quality", "Sleep quality", "sleep", "score", 1.0, 5.0, 0.1), "sleep_latency", -0.5)),
    Some(num("nap_minutes", "Daily nap", "sleep", "min", 0.0, 90.0, 1.0)),
    Some(num("fruit_servings", "Fruit servings", "diet", "servings/day", 0.0, 5.0, 0.1)),
    Some(corr(num("vegetable_servings", "Vegetable servings", "diet", "servings/day", 0.0, 5.0, 0.1), "fruit_servings", 0.5)),
    Some(num("sugary_drinks", "Sugary drinks", "diet", "days/week", 0.0, 7.0, 1.0)),
    Some(corr(num("fast_food", "Fast food", "diet", "days/week", 0.0, 7.0, 1.0), "sugary_drinks", 0.5)),
    Some(num("breakfast_days", "Breakfast", "diet", "days/week", 0.0, 7.0, 1.0)),
    Some(num("water_cups", "Water intake", "diet", "cups/day", 0.0, 10.0, 0.5)),
    Some(num("snack_frequency", "Snacks", "diet", "days/week", 0.0, 7.0, 1.0)),
    Some(num("interest_chinese", "Interest in Chinese", "academic", "score", 1.0, 5.0, 0.1)),
    Some(num("interest_english", "Interest in English", "academic", "score", 1.0, 5.0, 0.1)),
    Some(num("interest_math", "Interest in Mathematics", "academic", "score", 1.0, 5.0, 0.1)),
    Some(corr(num("perf_chinese", "Performance in Chinese", "academic", "score", 0.0, 100.0, 1.0), "interest_chinese", 0.6)),
    Some(corr(num("perf_english", "Performance in English", "academic", "score", 0.0, 100.0, 1.0), "interest_english", 0.6)),
    Some(corr(num("perf_math", "Performance in Mathematics", "academic", "score", 0.0, 100.0, 1.0), "interest_math", 0.6)),
    Some(num("homework_hours", "Daily homework", "academic", "h/day", 0.0, 5.0, 0.1)),
    Some(corr(num("academic_stress", "Academic stress", "academic", "score", 1.0, 5.0, 0.1), "homework_hours", 0.5)),
    Some(num("peer_relationship", "Peer relationship quality", "academic", "score", 1.0, 5.0, 0.1)),
    None, // learning_mode
    Some(num("screen_weekday", "Screen time on weekdays", "device-usage", "h/day", 0.0, 8.0, 0.1)),
    Some(corr(num("screen_weekend", "Screen time on weekends", "device-usage", "h/day", 0.0, 10.0, 0.1), "screen_weekday", 0.7)),
    Some(corr(num("gaming_hours", "Gaming", "device-usage", "h/day", 0.0, 5.0, 0.1), "screen_weekend", 0.5)),
    Some(num("social_media_hours", "Social media", "device-usage", "h/day", 0.0, 5.0, 0.1)),
    Some(num("device_before_bed", "Device use before bed", "device-usage", "days/week", 0.0, 7.0, 1.0)),
    Some(num("exercise_days", "Days with exercise", "exercise", "days/week", 0.0, 7.0, 1.0)),
    Some(num("pe_lessons", "PE lessons", "exercise", "lessons/week", 0.0, 5.0, 1.0)),
    Some(num("sports_club", "Sports clubs", "exercise", "count", 0.0, 3.0, 1.0)),
    Some(num("outdoor_hours", "Outdoor time", "exercise", "h/day", 0.0, 4.0, 0.1)),
    Some(num("active_commute", "Active commute trips", "exercise", "trips/week", 0.0, 10.0, 1.0)),
    Some(num("club_activities", "Extracurricular clubs", "exercise", "count", 0.0, 5.0, 1.0)),
];

/// The representative 47-feature schema (45 numeric, gender, learning mode).
pub fn default_schema() -> Schema {
    let mut cats = [
        FeatureDescriptor {
            id: GENDER_ID.into(),
            name: "Gender".into(),
            category: "demographics".into(),
            kind: FeatureKind::Categorical,
            categories: GENDER_CATEGORIES.iter().map(|s| s.to_string()).collect(),
            unit: String::new(),
        },
        FeatureDescriptor {
            id: LEARNING_MODE_ID.into(),
            name: "Learning mode".into(),
            category: "academic".into(),
            kind: FeatureKind::Categorical,
            categories: LEARNING_MODE_CATEGORIES.iter().map(|s| s.to_string()).collect(),
            unit: String::new(),
        },
    ]
    .into_iter();
    let features = LAYOUT
        .iter()
        .map(|slot| match slot {
            Some(s) => FeatureDescriptor {
                id: s.id.into(),
                name: s.name.into(),
                category: s.category.into(),
                kind: FeatureKind::Numeric,
                categories: vec![],
                unit: s.unit.into(),
            },
            None => cats.next().expect("two categorical slots"),
        })
        .collect();
    Schema::new(features).expect("default schema is valid")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MvpaRule {
    /// Minute of day where the window starts.
    pub window_start_minute: u32,
    pub window_minutes: u32,
    /// Mean acceleration magnitude above which MVPA is "normal".
    pub threshold: f64,
    /// Range of the per-participant evening activity intensity added on
    /// top of the diurnal base inside the window.
    pub intensity: (f64, f64),
}

impl Default for MvpaRule {
    fn default() -> Self {
        MvpaRule {
            window_start_minute: 18 * 60,
            window_minutes: 60,
            threshold: 0.85,
            intensity: (0.0, 1.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedTerm {
    pub feature: String,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticEffect {
    pub indicator: Indicator,
    pub terms: Vec<PlantedTerm>,
    #[serde(default)]
    pub intercept: f64,
    /// Probability of flipping the drawn label.
    #[serde(default)]
    pub noise: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlantedEffects {
    pub mvpa: MvpaRule,
    pub logistic: Vec<LogisticEffect>,
}

fn effect(indicator: Indicator, terms: &[(&str, f64)], noise: f64) -> LogisticEffect {
    LogisticEffect {
        indicator,
        terms: terms
            .iter()
            .map(|(f, w)| PlantedTerm {
                feature: f.to_string(),
                weight: *w,
            })
            .collect(),
        intercept: 0.0,
        noise,
    }
}

impl Default for PlantedEffects {
    fn default() -> Self {
        PlantedEffects {
            mvpa: MvpaRule::default(),
            logistic: vec![
                effect(Indicator::Phyf, &[("exercise_days", 2.0), ("screen_weekday", -2.0)], 0.02),
                effect(Indicator::Vvas, &[("household_income", 2.0), ("sleep_weekend", 2.0)], 0.02),
                effect(Indicator::Psyf, &[("peer_relationship", 2.0), ("academic_stress", -2.0)], 0.02),
                effect(Indicator::Resi, &[("sleep_weekday", 3.0), ("family_support", 3.0)], 0.0),
                effect(Indicator::Conn, &[("parent_time", 2.0), ("club_activities", 2.0)], 0.02),
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n: usize,
    pub seed: u64,
    pub female_proportion: f64,
    /// face-to-face, mixed, online.
    pub learning_mode_proportions: [f64; 3],
    /// Share of context cells deleted after labelling.
    pub missing_rate: f64,
    /// Share of minutes with no sample (device not worn).
    pub nonwear_rate: f64,
    pub wear_days: u32,
    pub start_timestamp: i64,
    pub planted_effects: PlantedEffects,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n: 1000,
            seed: 0,
            female_proportion: 0.5,
            learning_mode_proportions: [0.6, 0.25, 0.15],
            missing_rate: 0.05,
            nonwear_rate: 0.01,
            wear_days: 7,
            start_timestamp: DEFAULT_START_TIMESTAMP,
            planted_effects: PlantedEffects::default(),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Config("synth n must be at least 1".into()));
        }
        if self.wear_days == 0 {
            return Err(Error::Config("wear_days must be at least 1".into()));
        }
        let probs = [
            self.female_proportion,
            self.missing_rate,
            self.nonwear_rate,
        ];
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Config("proportions must lie in [0, 1]".into()));
        }
        let mvpa = &self.planted_effects.mvpa;
        if !(0.0..=mvpa.intensity.1).contains(&mvpa.intensity.0) {
            return Err(Error::Config("MVPA intensity range must be ordered and non-negative".into()));
        }
        if mvpa.window_minutes == 0 || mvpa.window_start_minute + mvpa.window_minutes > 1440 {
            return Err(Error::Config("MVPA window must lie within one day".into()));
        }
        let schema = default_schema();
        for e in &self.planted_effects.logistic {
            if e.indicator == Indicator::Mvpa {
                return Err(Error::Config("MVPA is driven by the motion rule".into()));
            }
            for t in &e.terms {
                if !schema.get(&t.feature)?.is_numeric() {
                    return Err(Error::Config(format!(
                        "planted feature `{}` must be numeric",
                        t.feature
                    )));
                }
            }
        }
        Ok(())
    }
}

fn spec(id: &str) -> &'static NumericSpec {
    LAYOUT
        .iter()
        .flatten()
        .find(|s| s.id == id)
        .expect("planted features validated against the schema")
}

/// Standardized latent position of a stored value.
fn latent_z(id: &str, value: f64) -> f64 {
    let s = spec(id);
    ((value - s.lo) / (s.hi - s.lo) - 0.5) / LATENT_SD
}

const LATENT_SD: f64 = 0.18;

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Mean acceleration magnitude over the planted daily window, across all
/// days present in `record`.
pub fn window_magnitude(record: &RawMotionRecord, rule: &MvpaRule) -> f64 {
    let lo = rule.window_start_minute as i64;
    let hi = lo + rule.window_minutes as i64;
    let mut sum = 0.0;
    let mut n = 0usize;
    for s in &record.samples {
        let minute_of_day = s.timestamp.div_euclid(60).rem_euclid(1440);
        if (lo..hi).contains(&minute_of_day) {
            let (x, y, z) = (s.ax as f64, s.ay as f64, s.az as f64);
            sum += (x * x + y * y + z * z).sqrt();
            n += 1;
        }
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// A fixed-strength morning walk to school. It sets each participant's
/// weekly maximum, so evening intensities stay comparable after
/// per-participant scaling.
const COMMUTE_START: i64 = 450;
const COMMUTE_MINUTES: i64 = 15;
const COMMUTE_MAGNITUDE: f64 = 2.0;

fn generate_motion(
    rng: &mut ChaCha8Rng,
    id: &str,
    config: &SynthConfig,
) -> RawMotionRecord {
    let rule = &config.planted_effects.mvpa;
    let base = rng.gen_range(0.15..0.35);
    let (lo, hi) = rule.intensity;
    let burst = if hi > lo { rng.gen_range(lo..hi) } else { lo };
    let wake0 = 420.0 + 20.0 * normal(rng);
    let sleep0 = 1320.0 + 20.0 * normal(rng);
    let burst_lo = rule.window_start_minute as f64;
    let burst_hi = burst_lo + rule.window_minutes as f64;

    let minutes = config.wear_days as usize * 1440;
    let mut samples = Vec::with_capacity(minutes);
    let day0 = config.start_timestamp.div_euclid(86_400);
    for day in 0..config.wear_days as i64 {
        let weekday = (day0 + day + 3).rem_euclid(7); // 0 = Monday
        let (wake, sleep) = if weekday >= 5 {
            (wake0 + 60.0, sleep0 + 30.0)
        } else {
            (wake0, sleep0)
        };
        let day_burst = burst * rng.gen_range(0.9..1.1);
        for m in 0..1440 {
            if rng.gen::<f64>() < config.nonwear_rate {
                continue;
            }
            let t = m as f64;
            let mut act = if t >= wake && t < sleep {
                let phase = std::f64::consts::PI * (t - wake) / (sleep - wake);
                base * (1.0 + 0.6 * phase.sin()) + 0.08 * normal(rng).abs()
            } else {
                0.03 + 0.01 * normal(rng).abs()
            };
            if t >= burst_lo && t < burst_hi {
                act += day_burst;
            }
            if (COMMUTE_START..COMMUTE_START + COMMUTE_MINUTES).contains(&m) {
                act += COMMUTE_MAGNITUDE;
            }
            let dir = [
                0.55 + 0.05 * normal(rng),
                0.45 + 0.05 * normal(rng),
                0.70 + 0.05 * normal(rng),
            ];
            let norm = (dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]).sqrt();
            let q = |v: f64| ((act * v / norm) * 1e4).round() as f32 / 1e4;
            samples.push(MotionSample {
                timestamp: config.start_timestamp + (day * 1440 + m) * 60,
                ax: q(dir[0]),
                ay: q(dir[1]),
                az: q(dir[2]),
            });
        }
    }
    RawMotionRecord {
        participant_id: id.to_string(),
        samples,
    }
}

/// A deterministic synthetic raw dataset. Output depends on `config` only.
pub fn generate_synthetic(config: &SynthConfig) -> Result<RawDataset> {
    config.validate()?;
    let schema = default_schema();
    let width = (config.n.max(1) as f64).log10().floor() as usize + 1;
    let mut context = Vec::with_capacity(config.n);
    let mut motion = BTreeMap::new();
    let mut labels = BTreeMap::new();

    for i in 0..config.n {
        // Independent stream per participant so n does not perturb earlier ones.
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(i as u64 + 1);
        let id = format!("P{:0width$}", i + 1);

        let mut values = BTreeMap::new();
        let mut latents: BTreeMap<&str, f64> = BTreeMap::new();
        for s in LAYOUT.iter().flatten() {
            let v = if s.id == AGE_ID {
                let age = rng.gen_range(6..=18) as f64;
                latents.insert(s.id, (age - 12.0) / 3.75);
                age
            } else {
                let own = normal(&mut rng);
                let z = match s.parent {
                    Some((p, rho)) => rho * latents[p] + (1.0 - rho * rho).sqrt() * own,
                    None => own,
                };
                latents.insert(s.id, z);
                let u = (0.5 + LATENT_SD * z).clamp(0.0, 1.0);
                let raw = s.lo + u * (s.hi - s.lo);
                ((raw / s.step).round() * s.step).clamp(s.lo, s.hi)
            };
            // Kill float noise from the step rounding.
            let v = (v * 1e6).round() / 1e6;
            values.insert(s.id.to_string(), RawValue::Number(v));
        }
        let gender = if rng.gen::<f64>() < config.female_proportion {
            "female"
        } else {
            "male"
        };
        let p = config.learning_mode_proportions;
        let total: f64 = p.iter().sum();
        let u = rng.gen::<f64>() * total;
        let mode = if u < p[0] {
            LEARNING_MODE_CATEGORIES[0]
        } else if u < p[0] + p[1] {
            LEARNING_MODE_CATEGORIES[1]
        } else {
            LEARNING_MODE_CATEGORIES[2]
        };
        values.insert(GENDER_ID.into(), RawValue::Category(gender.into()));
        values.insert(LEARNING_MODE_ID.into(), RawValue::Category(mode.into()));

        let record = generate_motion(&mut rng, &id, config);

        let mut l = HealthLabels::default();
        l.set(
            Indicator::Mvpa,
            window_magnitude(&record, &config.planted_effects.mvpa)
                > config.planted_effects.mvpa.threshold,
        );
        for e in &config.planted_effects.logistic {
            let lin: f64 = e.intercept
                + e.terms
                    .iter()
                    .map(|t| {
                        let v = values[&t.feature].as_number().expect("numeric");
                        t.weight * latent_z(&t.feature, v)
                    })
                    .sum::<f64>();
            let mut label = rng.gen::<f64>() < sigmoid(lin);
            if rng.gen::<f64>() < e.noise {
                label = !label;
            }
            l.set(e.indicator, label);
        }
        // Indicators without a configured effect are coin flips.
        for ind in Indicator::ALL {
            if ind != Indicator::Mvpa
                && !config.planted_effects.logistic.iter().any(|e| e.indicator == ind)
            {
                l.set(ind, rng.gen::<bool>());
            }
        }

        // Identity fields (age, gender) are never deleted.
        let deletable: Vec<String> = values
            .keys()
            .filter(|k| k.as_str() != AGE_ID && k.as_str() != GENDER_ID)
            .cloned()
            .collect();
        for key in deletable {
            if rng.gen::<f64>() < config.missing_rate {
                values.remove(&key);
            }
        }

        context.push(RawContextRecord {
            participant_id: id.clone(),
            values,
        });
        motion.insert(id.clone(), record);
        labels.insert(id, l);
    }

    let raw = RawDataset {
        schema,
        context,
        motion,
        labels,
    };
    raw.validate()?;
    Ok(raw)
}
