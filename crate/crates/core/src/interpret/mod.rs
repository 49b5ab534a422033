//! Gate-based importance, window ranking and perturbation influence.

mod export;
mod importance;
mod influence;
mod window;

pub use export::{FeatureScore, ImportanceReport, EXPORT_VERSION};
pub use importance::{
    aggregate_importance, feature_importance, personal_importance, rms_combine, top_k_features,
    window_ranking, FeatureRef, Importance, RankedEntry, RankedFeatureSet, DEFAULT_TOP_K,
    MOTION_CANDIDATES,
};
pub use influence::{
    influence_categorical, influence_motion_window, influence_motion_window_at,
    influence_numeric, influence_numeric_at, numeric_grid, CurvePoint, CurveValue,
    InfluenceCurve, Level, DEFAULT_STEPS,
};
pub use window::{
    rank_windows, top_window, validate_window_minutes, RankedWindow, WindowRanking,
    MAX_WINDOW_MINUTES, WINDOW_STEP,
};
