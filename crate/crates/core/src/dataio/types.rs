use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Minutes in one week; the length of every weekly motion pattern.
pub const WEEK_MINUTES: usize = 7 * 24 * 60;
/// Accelerometer axes.
pub const MOTION_AXES: usize = 3;

pub const GENDER_ID: &str = "gender";
pub const LEARNING_MODE_ID: &str = "learning_mode";
pub const AGE_ID: &str = "age";

/// The six health indicators, in the fixed radar-axis order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Indicator {
    #[serde(rename = "MVPA")]
    Mvpa,
    #[serde(rename = "PHYF")]
    Phyf,
    #[serde(rename = "VVAS")]
    Vvas,
    #[serde(rename = "PSYF")]
    Psyf,
    #[serde(rename = "RESI")]
    Resi,
    #[serde(rename = "CONN")]
    Conn,
}

impl Indicator {
    pub const ALL: [Indicator; 6] = [
        Indicator::Mvpa,
        Indicator::Phyf,
        Indicator::Vvas,
        Indicator::Psyf,
        Indicator::Resi,
        Indicator::Conn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Indicator::Mvpa => "MVPA",
            Indicator::Phyf => "PHYF",
            Indicator::Vvas => "VVAS",
            Indicator::Psyf => "PSYF",
            Indicator::Resi => "RESI",
            Indicator::Conn => "CONN",
        }
    }

    /// Position in [`Indicator::ALL`].
    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Indicator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Indicator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Indicator::ALL
            .into_iter()
            .find(|i| i.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                Error::Argument(format!(
                    "unknown indicator `{s}`; expected one of MVPA, PHYF, VVAS, PSYF, RESI, CONN"
                ))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Female,
    Male,
}

impl Gender {
    pub fn as_str(self) -> &'static str {
        match self {
            Gender::Female => "female",
            Gender::Male => "male",
        }
    }
}

impl FromStr for Gender {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "female" => Ok(Gender::Female),
            "male" => Ok(Gender::Male),
            other => Err(Error::Encoding {
                feature: GENDER_ID.into(),
                value: other.into(),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgeGroup {
    /// 6 to 11 years.
    Child,
    /// 12 to 18 years.
    Adolescent,
}

impl AgeGroup {
    pub fn for_age(age: u8) -> AgeGroup {
        if age <= 11 {
            AgeGroup::Child
        } else {
            AgeGroup::Adolescent
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AgeGroup::Child => "child",
            AgeGroup::Adolescent => "adolescent",
        }
    }
}

impl FromStr for AgeGroup {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "child" => Ok(AgeGroup::Child),
            "adolescent" => Ok(AgeGroup::Adolescent),
            other => Err(Error::Argument(format!("unknown age group `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Numeric,
    Categorical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureDescriptor {
    pub id: String,
    pub name: String,
    pub category: String,
    pub kind: FeatureKind,
    #[serde(default)]
    pub categories: Vec<String>,
    #[serde(default)]
    pub unit: String,
}

impl FeatureDescriptor {
    pub fn is_numeric(&self) -> bool {
        self.kind == FeatureKind::Numeric
    }
}

/// A raw context cell: either a number or a category label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RawValue {
    Number(f64),
    Category(String),
}

impl RawValue {
    pub fn as_number(&self) -> Option<f64> {
        match self {
            RawValue::Number(v) => Some(*v),
            RawValue::Category(_) => None,
        }
    }

    pub fn as_category(&self) -> Option<&str> {
        match self {
            RawValue::Category(c) => Some(c),
            RawValue::Number(_) => None,
        }
    }
}

/// One questionnaire row. A feature absent from `values` is missing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawContextRecord {
    pub participant_id: String,
    pub values: BTreeMap<String, RawValue>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionSample {
    /// Epoch seconds.
    pub timestamp: i64,
    pub ax: f32,
    pub ay: f32,
    pub az: f32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawMotionRecord {
    pub participant_id: String,
    pub samples: Vec<MotionSample>,
}

/// Encoded, scaled questionnaire vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextPattern {
    pub values: Vec<f32>,
}

/// Weekly minute-level tri-axial pattern, stored axis-major
/// (`values[axis * WEEK_MINUTES + slot]`).
#[derive(Debug, Clone, PartialEq)]
pub struct MotionPattern {
    pub values: Vec<f32>,
    pub coverage: Vec<bool>,
}

impl MotionPattern {
    pub fn zeros() -> Self {
        MotionPattern {
            values: vec![0.0; MOTION_AXES * WEEK_MINUTES],
            coverage: vec![false; WEEK_MINUTES],
        }
    }

    pub fn axis(&self, axis: usize) -> &[f32] {
        &self.values[axis * WEEK_MINUTES..(axis + 1) * WEEK_MINUTES]
    }
}

/// Binary "normal level" labels, indexed by [`Indicator::index`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct HealthLabels(pub [bool; 6]);

impl HealthLabels {
    pub fn get(&self, indicator: Indicator) -> bool {
        self.0[indicator.index()]
    }

    pub fn set(&mut self, indicator: Indicator, value: bool) {
        self.0[indicator.index()] = value;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Participant {
    pub id: String,
    pub gender: Gender,
    pub age: u8,
    pub age_group: AgeGroup,
    pub learning_mode: String,
    pub context: ContextPattern,
    pub motion: MotionPattern,
    pub labels: HealthLabels,
    /// One flag per raw schema feature, in schema order.
    pub imputed_mask: Vec<bool>,
}

/// Per-feature `(min, max)` over observed raw values.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats(pub BTreeMap<String, (f64, f64)>);

impl NormalizationStats {
    pub fn range(&self, id: &str) -> Result<(f64, f64)> {
        self.0
            .get(id)
            .copied()
            .ok_or_else(|| Error::Integrity(format!("no normalization stats for `{id}`")))
    }
}
