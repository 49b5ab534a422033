use std::collections::BTreeMap;
use std::str::FromStr;

use cohortgate::dataio::{AgeGroup, Gender, Indicator, WEEK_MINUTES};
use cohortgate::interpret::{validate_window_minutes, DEFAULT_STEPS};

use crate::error::ApiError;

pub const DEFAULT_WINDOW: usize = 30;
pub const DEFAULT_TOP_PAIRS: usize = 10;
pub const MAX_STEPS: usize = 101;

/// Query parameters of one request. Later duplicates win.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Params(pub BTreeMap<String, String>);

impl Params {
    /// Sorted `k=v&...` form used as the cache key.
    pub fn canonical(&self) -> String {
        self.0
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join("&")
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }

    fn number(&self, key: &str) -> Result<Option<usize>, ApiError> {
        self.get(key)
            .map(|s| {
                s.trim()
                    .parse::<usize>()
                    .map_err(|_| ApiError::invalid(key, format!("`{s}` is not a non-negative integer")))
            })
            .transpose()
    }

    fn list(&self, key: &str) -> Option<Vec<&str>> {
        self.get(key).map(|s| {
            s.split(',')
                .map(str::trim)
                .filter(|x| !x.is_empty())
                .collect()
        })
    }

    /// A window size under `key`: one of 5, 10, ..., 120.
    pub fn window_named(&self, key: &str, default: Option<usize>) -> Result<usize, ApiError> {
        let w = match (self.number(key)?, default) {
            (Some(w), _) => w,
            (None, Some(d)) => d,
            (None, None) => return Err(ApiError::invalid(key, format!("`{key}` is required"))),
        };
        validate_window_minutes(w).map_err(|e| ApiError::from_core(e, key))?;
        Ok(w)
    }

    pub fn window(&self) -> Result<usize, ApiError> {
        self.window_named("window", Some(DEFAULT_WINDOW))
    }

    /// `from..to` within the week, defaulting to the whole week.
    pub fn range(&self) -> Result<(usize, usize), ApiError> {
        let from = self.number("from")?.unwrap_or(0);
        let to = self.number("to")?.unwrap_or(WEEK_MINUTES);
        if from >= WEEK_MINUTES {
            return Err(ApiError::invalid("from", format!("must lie in [0, {WEEK_MINUTES})")));
        }
        if to <= from || to > WEEK_MINUTES {
            return Err(ApiError::invalid("to", format!("must lie in ({from}, {WEEK_MINUTES}]")));
        }
        Ok((from, to))
    }

    pub fn indicator(&self) -> Result<Indicator, ApiError> {
        let s = self
            .get("indicator")
            .ok_or_else(|| ApiError::invalid("indicator", "`indicator` is required"))?;
        Indicator::from_str(s).map_err(|e| ApiError::from_core(e, "indicator"))
    }

    /// Absent means all six; present but empty is an error.
    pub fn indicators(&self) -> Result<Vec<Indicator>, ApiError> {
        let Some(list) = self.list("indicators") else {
            return Ok(Indicator::ALL.to_vec());
        };
        if list.is_empty() {
            return Err(ApiError::invalid("indicators", "indicators must be nonempty"));
        }
        list.into_iter()
            .map(|s| Indicator::from_str(s).map_err(|e| ApiError::from_core(e, "indicators")))
            .collect()
    }

    pub fn genders(&self) -> Result<Vec<Gender>, ApiError> {
        self.list("genders")
            .unwrap_or_default()
            .into_iter()
            .map(|s| Gender::from_str(s).map_err(|_| ApiError::invalid("genders", format!("unknown gender `{s}`"))))
            .collect()
    }

    pub fn ages(&self) -> Result<Vec<AgeGroup>, ApiError> {
        self.list("ages")
            .unwrap_or_default()
            .into_iter()
            .map(|s| AgeGroup::from_str(s).map_err(|e| ApiError::from_core(e, "ages")))
            .collect()
    }

    pub fn steps(&self) -> Result<usize, ApiError> {
        let s = self.number("steps")?.unwrap_or(DEFAULT_STEPS);
        if !(2..=MAX_STEPS).contains(&s) {
            return Err(ApiError::invalid("steps", format!("must lie in 2..={MAX_STEPS}")));
        }
        Ok(s)
    }

    pub fn top(&self) -> Result<usize, ApiError> {
        Ok(self.number("top")?.unwrap_or(DEFAULT_TOP_PAIRS))
    }

    /// `a:b` pairs; each side is a feature id or an index into `features`.
    pub fn pins(&self, features: &[String]) -> Result<Vec<(String, String)>, ApiError> {
        let resolve = |s: &str| -> Result<String, ApiError> {
            if let Ok(i) = s.parse::<usize>() {
                return features
                    .get(i)
                    .cloned()
                    .ok_or_else(|| ApiError::invalid("pin", format!("feature index {i} out of range")));
            }
            if features.iter().any(|f| f == s) {
                Ok(s.to_string())
            } else {
                Err(ApiError::invalid("pin", format!("unknown numeric feature `{s}`")))
            }
        };
        self.list("pin")
            .unwrap_or_default()
            .into_iter()
            .map(|p| {
                let (a, b) = p
                    .split_once(':')
                    .ok_or_else(|| ApiError::invalid("pin", format!("`{p}` is not of the form a:b")))?;
                Ok((resolve(a)?, resolve(b)?))
            })
            .collect()
    }

    pub fn features(&self) -> Result<Vec<String>, ApiError> {
        match self.list("features") {
            Some(l) if !l.is_empty() => Ok(l.into_iter().map(String::from).collect()),
            _ => Err(ApiError::invalid("features", "features must be nonempty")),
        }
    }

    pub fn ids(&self) -> Result<Vec<String>, ApiError> {
        let ids = self.list("ids").unwrap_or_default();
        if ids.is_empty() || ids.len() > 2 {
            return Err(ApiError::invalid("ids", "give one or two participant ids"));
        }
        Ok(ids.into_iter().map(String::from).collect())
    }

    pub fn motion_start(&self) -> Result<Option<usize>, ApiError> {
        self.number("motion_start")
    }
}
