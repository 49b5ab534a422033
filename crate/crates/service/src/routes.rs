//! One compute function per route. Each is a pure function of the loaded
//! snapshot, the path id and the query.

use std::collections::BTreeMap;

use cohortgate::analytics::{
    build_similarity_graph, divide_3sigma, group_context_summary, motion_summary, profile_scores,
    sankey_aggregate, top_pairs, CorrelationCell, CorrelationPair, GraphEdge, GraphNode, GroupFilter,
    MotionSummary, SankeyFlow,
};
use cohortgate::dataio::{FeatureDescriptor, Indicator, Participant, WEEK_MINUTES};
use cohortgate::interpret::{
    influence_categorical, influence_motion_window, influence_numeric, personal_importance, ImportanceReport,
    InfluenceCurve, Level, DEFAULT_TOP_K, MAX_WINDOW_MINUTES, WINDOW_STEP,
};
use serde::Serialize;

use crate::error::ApiError;
use crate::params::Params;
use crate::state::Loaded;
use crate::API_VERSION;

pub(crate) type RouteFn = fn(&Loaded, &str, &Params) -> Result<Vec<u8>, ApiError>;

#[derive(Serialize)]
struct Versioned<T: Serialize> {
    v: u32,
    #[serde(flatten)]
    body: T,
}

fn json<T: Serialize>(body: T) -> Result<Vec<u8>, ApiError> {
    serde_json::to_vec(&Versioned { v: API_VERSION, body }).map_err(|e| ApiError::internal(e.to_string()))
}

fn all(l: &Loaded) -> Vec<&Participant> {
    l.dataset().participants.iter().collect()
}

/// Members of the gender/age selection; an empty group is rejected.
fn group<'a>(l: &'a Loaded, q: &Params) -> Result<Vec<&'a Participant>, ApiError> {
    let idx = l.dataset().select(&q.genders()?, &q.ages()?);
    if idx.is_empty() {
        return Err(ApiError::invalid("genders", "no participant matches the selection"));
    }
    Ok(idx.into_iter().map(|i| &l.dataset().participants[i]).collect())
}

pub(crate) fn health(l: &Loaded, _: &str, _: &Params) -> Result<Vec<u8>, ApiError> {
    #[derive(Serialize)]
    struct Health<'a> {
        status: &'a str,
        dataset_hash: &'a str,
        participants: usize,
        models: BTreeMap<&'a str, &'a str>,
    }
    json(Health {
        status: "ok",
        dataset_hash: l.dataset_hash(),
        participants: l.dataset().len(),
        models: Indicator::ALL.iter().map(|&i| (i.name(), l.model_hash(i))).collect(),
    })
}

pub(crate) fn schema(l: &Loaded, _: &str, _: &Params) -> Result<Vec<u8>, ApiError> {
    #[derive(Serialize)]
    struct Windows {
        step: usize,
        max: usize,
        week_minutes: usize,
    }
    #[derive(Serialize)]
    struct SchemaBody<'a> {
        features: &'a [FeatureDescriptor],
        encoded_len: usize,
        indicators: [Indicator; 6],
        participants: usize,
        windows: Windows,
    }
    let s = &l.dataset().schema;
    json(SchemaBody {
        features: s.features(),
        encoded_len: s.encoded_len(),
        indicators: Indicator::ALL,
        participants: l.dataset().len(),
        windows: Windows {
            step: WINDOW_STEP,
            max: MAX_WINDOW_MINUTES,
            week_minutes: WEEK_MINUTES,
        },
    })
}

#[derive(Serialize)]
struct Flows {
    participants: usize,
    flows: Vec<SankeyFlow>,
}

pub(crate) fn summary_categorical(l: &Loaded, _: &str, _: &Params) -> Result<Vec<u8>, ApiError> {
    let ps = all(l);
    json(Flows {
        participants: ps.len(),
        flows: sankey_aggregate(&ps),
    })
}

pub(crate) fn summary_correlation(l: &Loaded, _: &str, q: &Params) -> Result<Vec<u8>, ApiError> {
    #[derive(Serialize)]
    struct Correlation<'a> {
        features: &'a [String],
        cells: &'a [CorrelationCell],
        pairs: Vec<CorrelationPair>,
    }
    let m = l.correlation()?;
    let pins = q.pins(&m.features)?;
    let top = q.top()?;
    json(Correlation {
        features: &m.features,
        cells: &m.cells,
        pairs: top_pairs(&m, top, &pins),
    })
}

fn report(
    l: &Loaded,
    q: &Params,
    level: Level,
    subjects: &[&Participant],
) -> Result<ImportanceReport, ApiError> {
    let indicator = q.indicator()?;
    let w = q.window()?;
    let imp = match level {
        Level::Overall => l.overall_importance(indicator)?.as_ref().clone(),
        Level::Group => l.group_importance(indicator, subjects)?,
        Level::Individual => personal_importance(l.model(indicator), subjects[0])?,
    };
    ImportanceReport::build(
        &l.dataset().schema,
        &imp,
        indicator,
        level,
        subjects.len(),
        w,
        DEFAULT_TOP_K,
    )
    .map_err(|e| ApiError::from_core(e, "window"))
}

pub(crate) fn summary_importance(l: &Loaded, _: &str, q: &Params) -> Result<Vec<u8>, ApiError> {
    json(report(l, q, Level::Overall, &all(l))?)
}

/// `feature=<id>` or `motion_start=<slot>&motion_w=<minutes>`.
fn influence(l: &Loaded, q: &Params, level: Level, subjects: &[&Participant]) -> Result<InfluenceCurve, ApiError> {
    let indicator = q.indicator()?;
    let model = l.model(indicator);
    let schema = &l.dataset().schema;
    match (q.get("feature"), q.motion_start()?) {
        (Some(f), None) => {
            let desc = schema
                .get(f)
                .map_err(|_| ApiError::invalid("feature", format!("unknown feature `{f}`")))?;
            let curve = if desc.is_numeric() {
                influence_numeric(model, schema, f, subjects, level, q.steps()?)
            } else {
                influence_categorical(model, schema, f, subjects, level)
            };
            curve.map_err(|e| ApiError::from_core(e, "feature"))
        }
        (None, Some(start)) => {
            let w = q.window_named("motion_w", None)?;
            if start + w > WEEK_MINUTES {
                return Err(ApiError::invalid(
                    "motion_start",
                    format!("window {start}+{w} exceeds {WEEK_MINUTES} minutes"),
                ));
            }
            influence_motion_window(model, start, w, subjects, level, q.steps()?)
                .map_err(|e| ApiError::from_core(e, "motion_start"))
        }
        _ => Err(ApiError::invalid(
            "feature",
            "give either `feature` or `motion_start` with `motion_w`",
        )),
    }
}

pub(crate) fn summary_influence(l: &Loaded, _: &str, q: &Params) -> Result<Vec<u8>, ApiError> {
    json(influence(l, q, Level::Overall, &all(l))?)
}

fn motion(ps: &[&Participant], q: &Params) -> Result<MotionSummary, ApiError> {
    let w = q.window()?;
    let (from, to) = q.range()?;
    motion_summary(ps, w, from, to).map_err(|e| ApiError::from_core(e, "window"))
}

pub(crate) fn summary_motion(l: &Loaded, _: &str, q: &Params) -> Result<Vec<u8>, ApiError> {
    json(motion(&all(l), q)?)
}

#[derive(Serialize)]
struct TableRow {
    id: String,
    values: Vec<f64>,
    raw_area: f64,
    normalized_score: f64,
    division: u8,
}

pub(crate) fn group_graph(l: &Loaded, _: &str, q: &Params) -> Result<Vec<u8>, ApiError> {
    #[derive(Serialize)]
    struct Graph {
        indicators: Vec<Indicator>,
        view: &'static str,
        nodes: Vec<GraphNode>,
        edges: Vec<GraphEdge>,
        division_counts: [usize; 5],
    }
    #[derive(Serialize)]
    struct Table {
        indicators: Vec<Indicator>,
        view: &'static str,
        rows: Vec<TableRow>,
        division_counts: [usize; 5],
    }
    let filter = GroupFilter {
        genders: q.genders()?,
        age_groups: q.ages()?,
        indicators: q.indicators()?,
    };
    let view = q.get("view").unwrap_or("graph");
    if view != "graph" && view != "table" {
        return Err(ApiError::invalid("view", "view must be `graph` or `table`"));
    }
    let rows = profile_scores(l.dataset(), l.predictions(), &filter).map_err(|e| ApiError::from_core(e, "indicators"))?;
    if rows.is_empty() {
        return Err(ApiError::invalid("genders", "no participant matches the selection"));
    }
    let indicators = filter.ordered_indicators();
    let scores: Vec<f64> = rows.iter().map(|r| r.normalized_score).collect();
    if view == "graph" {
        let ids: Vec<String> = rows.iter().map(|r| r.id.clone()).collect();
        let profiles: Vec<Vec<f64>> = rows.into_iter().map(|r| r.values).collect();
        let g = build_similarity_graph(&ids, &profiles, &scores)?;
        json(Graph {
            indicators,
            view: "graph",
            nodes: g.nodes,
            edges: g.edges,
            division_counts: g.division_counts,
        })
    } else {
        let d = divide_3sigma(&scores);
        json(Table {
            indicators,
            view: "table",
            rows: rows
                .into_iter()
                .zip(d.division)
                .map(|(r, division)| TableRow {
                    id: r.id,
                    values: r.values,
                    raw_area: r.raw_area,
                    normalized_score: r.normalized_score,
                    division,
                })
                .collect(),
            division_counts: d.counts,
        })
    }
}

pub(crate) fn group_importance(l: &Loaded, _: &str, q: &Params) -> Result<Vec<u8>, ApiError> {
    let members = group(l, q)?;
    json(report(l, q, Level::Group, &members)?)
}

pub(crate) fn group_influence(l: &Loaded, _: &str, q: &Params) -> Result<Vec<u8>, ApiError> {
    let members = group(l, q)?;
    json(influence(l, q, Level::Group, &members)?)
}

pub(crate) fn group_context(l: &Loaded, _: &str, q: &Params) -> Result<Vec<u8>, ApiError> {
    let features = q.features()?;
    let members = group(l, q)?;
    let everyone = all(l);
    let summary = group_context_summary(
        &l.dataset().schema,
        &everyone,
        &[("group".to_string(), members)],
        &features,
    )
    .map_err(|e| ApiError::from_core(e, "features"))?;
    json(summary)
}

pub(crate) fn group_motion(l: &Loaded, _: &str, q: &Params) -> Result<Vec<u8>, ApiError> {
    json(motion(&group(l, q)?, q)?)
}

#[derive(Serialize)]
struct IndividualProfile {
    id: String,
    gender: String,
    age: u8,
    age_group: String,
    learning_mode: String,
    indicators: Vec<Indicator>,
    /// Model probabilities.
    raw: Vec<f64>,
    /// Min-max normalized over the cohort; the radar values.
    normalized: Vec<f64>,
    raw_area: f64,
    /// Area normalized over the whole cohort.
    normalized_score: f64,
    division: u8,
}

fn profiles(l: &Loaded, ids: &[String], indicators: Vec<Indicator>) -> Result<Vec<IndividualProfile>, ApiError> {
    let filter = GroupFilter {
        indicators,
        ..GroupFilter::default()
    };
    let inds = filter.ordered_indicators();
    let rows = profile_scores(l.dataset(), l.predictions(), &filter).map_err(|e| ApiError::from_core(e, "indicators"))?;
    let scores: Vec<f64> = rows.iter().map(|r| r.normalized_score).collect();
    let divisions = divide_3sigma(&scores).division;
    ids.iter()
        .map(|id| {
            let p = l.participant(id)?;
            let i = rows
                .iter()
                .position(|r| r.id == *id)
                .ok_or_else(|| ApiError::internal(format!("no profile for `{id}`")))?;
            let pi = l
                .predictions()
                .position(id)
                .ok_or_else(|| ApiError::internal(format!("no prediction for `{id}`")))?;
            Ok(IndividualProfile {
                id: id.clone(),
                gender: p.gender.as_str().to_string(),
                age: p.age,
                age_group: p.age_group.as_str().to_string(),
                learning_mode: p.learning_mode.clone(),
                raw: inds.iter().map(|&ind| l.predictions().raw_of(ind, pi)).collect(),
                normalized: rows[i].values.clone(),
                raw_area: rows[i].raw_area,
                normalized_score: rows[i].normalized_score,
                division: divisions[i],
                indicators: inds.clone(),
            })
        })
        .collect()
}

pub(crate) fn individual_profile(l: &Loaded, id: &str, q: &Params) -> Result<Vec<u8>, ApiError> {
    l.participant(id)?;
    let mut p = profiles(l, &[id.to_string()], q.indicators()?)?;
    json(p.remove(0))
}

pub(crate) fn individual_importance(l: &Loaded, id: &str, q: &Params) -> Result<Vec<u8>, ApiError> {
    let p = l.participant(id)?;
    json(report(l, q, Level::Individual, &[p])?)
}

pub(crate) fn individual_influence(l: &Loaded, id: &str, q: &Params) -> Result<Vec<u8>, ApiError> {
    let p = l.participant(id)?;
    json(influence(l, q, Level::Individual, &[p])?)
}

pub(crate) fn individual_context(l: &Loaded, id: &str, _: &Params) -> Result<Vec<u8>, ApiError> {
    #[derive(Serialize)]
    #[serde(tag = "kind", rename_all = "snake_case")]
    enum Value {
        Numeric { scaled: f64, raw: f64 },
        Categorical { category: String },
    }
    #[derive(Serialize)]
    struct Entry {
        id: String,
        imputed: bool,
        #[serde(flatten)]
        value: Value,
    }
    #[derive(Serialize)]
    struct Context {
        id: String,
        features: Vec<Entry>,
    }
    let p = l.participant(id)?;
    let schema = &l.dataset().schema;
    let features = schema
        .features()
        .iter()
        .enumerate()
        .map(|(k, f)| {
            let pos = schema.positions_of(k);
            let value = if f.is_numeric() {
                let scaled = p.context.values[pos[0]] as f64;
                let (lo, hi) = l.dataset().normalization_stats.range(&f.id)?;
                Value::Numeric {
                    scaled,
                    raw: lo + scaled * (hi - lo),
                }
            } else {
                let hot = pos
                    .iter()
                    .copied()
                    .find(|&i| p.context.values[i] > 0.5)
                    .ok_or_else(|| cohortgate::Error::Integrity(format!("`{}` has no active category", f.id)))?;
                Value::Categorical {
                    category: schema.layout()[hot].category.clone().unwrap_or_default(),
                }
            };
            Ok(Entry {
                id: f.id.clone(),
                imputed: p.imputed_mask.get(k).copied().unwrap_or(false),
                value,
            })
        })
        .collect::<cohortgate::Result<_>>()?;
    json(Context {
        id: p.id.clone(),
        features,
    })
}

pub(crate) fn individual_motion(l: &Loaded, id: &str, q: &Params) -> Result<Vec<u8>, ApiError> {
    let p = l.participant(id)?;
    json(motion(&[p], q)?)
}

pub(crate) fn compare(l: &Loaded, _: &str, q: &Params) -> Result<Vec<u8>, ApiError> {
    #[derive(Serialize)]
    struct Compare {
        individuals: Vec<IndividualProfile>,
    }
    let ids = q.ids()?;
    for id in &ids {
        l.participant(id)?;
    }
    json(Compare {
        individuals: profiles(l, &ids, q.indicators()?)?,
    })
}
