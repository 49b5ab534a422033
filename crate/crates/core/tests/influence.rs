mod common;

use cohortgate::dataio::Indicator;
use cohortgate::interpret::*;
use cohortgate::model::ModelConfig;
use common::{cohort, random_model};

#[test]
fn unperturbed_values_reproduce_predictions_bit_exactly() {
    let ds = cohort(4, 3);
    let m = random_model(Indicator::Resi, &ModelConfig::default(), 1);
    let pos = ds.schema.positions_of(ds.schema.index_of("sleep_weekday").unwrap())[0];
    for p in &ds.participants {
        let own = p.context.values[pos] as f64;
        let c = influence_numeric_at(&m, &ds.schema, "sleep_weekday", &[p], Level::Individual, &[0.0, own]).unwrap();
        assert_eq!(c.points[1].probability.to_bits(), m.predict_participant(p).unwrap().to_bits());

        let cat = influence_categorical(&m, &ds.schema, "learning_mode", &[p], Level::Individual).unwrap();
        assert_eq!(cat.points.len(), 3);
        let own = cat.points.iter().find(|pt| pt.value == CurveValue::Category(p.learning_mode.clone())).unwrap();
        assert_eq!(own.probability.to_bits(), m.predict_participant(p).unwrap().to_bits());
    }
}

#[test]
fn motion_window_identity_on_constant_stretch() {
    let ds = cohort(2, 5);
    let m = random_model(Indicator::Mvpa, &ModelConfig::default(), 2);
    let mut p = ds.participants[0].clone();
    let (start, w, v) = (1000, 30, 0.375f32);
    for c in 0..3 {
        p.motion.values[c * 10080 + start..c * 10080 + start + w].fill(v);
    }
    let c = influence_motion_window_at(&m, start, w, &[&p], Level::Individual, &[v as f64]).unwrap();
    assert_eq!(c.points[0].probability.to_bits(), m.predict_participant(&p).unwrap().to_bits());
    assert!(influence_motion_window(&m, 10070, 20, &[&p], Level::Individual, 3).is_err());
}

#[test]
fn zero_weight_streams_give_flat_curves() {
    let ds = cohort(3, 6);
    let subjects: Vec<_> = ds.participants.iter().collect();
    let mut m = random_model(Indicator::Phyf, &ModelConfig::default(), 3);
    let g = m.network().group("context_encoder.0.weight").unwrap().clone();
    m.set_group(&g.name, &vec![0.0; g.len()]).unwrap();
    let g = m.network().group("motion_encoder.conv0.weight").unwrap().clone();
    m.set_group(&g.name, &vec![0.0; g.len()]).unwrap();
    let spread = |c: &InfluenceCurve| {
        let p = c.probabilities();
        p.iter().cloned().fold(f64::MIN, f64::max) - p.iter().cloned().fold(f64::MAX, f64::min)
    };
    let c = influence_numeric(&m, &ds.schema, "age", &subjects, Level::Overall, DEFAULT_STEPS).unwrap();
    assert_eq!(c.points.len(), 21);
    assert!(spread(&c) < 1e-9);
    let c = influence_categorical(&m, &ds.schema, "gender", &subjects, Level::Overall).unwrap();
    assert!(spread(&c) < 1e-9);
    let c = influence_motion_window(&m, 1080, 60, &subjects, Level::Overall, 5).unwrap();
    assert!(spread(&c) < 1e-9);
}

#[test]
fn group_curve_is_mean_of_individual_curves() {
    let ds = cohort(5, 7);
    let m = random_model(Indicator::Conn, &ModelConfig::default(), 4);
    let subjects: Vec<_> = ds.participants.iter().collect();
    let group = influence_numeric(&m, &ds.schema, "parent_time", &subjects, Level::Group, 6).unwrap();
    let singles: Vec<Vec<f64>> = subjects
        .iter()
        .map(|p| influence_numeric(&m, &ds.schema, "parent_time", &[*p], Level::Individual, 6).unwrap().probabilities())
        .collect();
    for (k, pt) in group.points.iter().enumerate() {
        let mean = singles.iter().map(|s| s[k]).sum::<f64>() / singles.len() as f64;
        assert!((pt.probability - mean).abs() < 1e-12);
    }
    assert_eq!(group.points[0].value, CurveValue::Number(0.0));
    assert_eq!(group.points[5].value, CurveValue::Number(1.0));
}

#[test]
fn type_errors_for_wrong_feature_kind() {
    let ds = cohort(2, 8);
    let m = random_model(Indicator::Conn, &ModelConfig::default(), 5);
    let s = [&ds.participants[0]];
    assert!(matches!(
        influence_numeric(&m, &ds.schema, "gender", &s, Level::Individual, 3),
        Err(cohortgate::Error::Type(_))
    ));
    assert!(matches!(
        influence_categorical(&m, &ds.schema, "age", &s, Level::Individual),
        Err(cohortgate::Error::Type(_))
    ));
}

#[test]
fn personal_importance_in_open_interval_and_aggregates() {
    let ds = cohort(10, 9);
    let m = random_model(Indicator::Resi, &ModelConfig::default(), 6);
    let items: Vec<Importance> = ds.participants.iter().map(|p| personal_importance(&m, p).unwrap()).collect();
    for it in &items {
        assert_eq!(it.context.len(), 50);
        assert_eq!(it.motion.len(), 10080);
        assert!(it.context.iter().chain(&it.motion).all(|&v| v > 0.0 && v < 1.0));
    }
    let agg = aggregate_importance(&items).unwrap();
    // Independent summation oracle.
    for t in [0usize, 777, 10079] {
        let mut s = 0.0;
        for it in &items {
            s += it.motion[t];
        }
        assert!((agg.motion[t] - s / 10.0).abs() < 1e-12);
    }
    let report = ImportanceReport::build(&ds.schema, &agg, Indicator::Resi, Level::Overall, 10, 60, 10).unwrap();
    let total: f64 = report.ranked.entries.iter().map(|e| e.share).sum();
    assert!((total - 100.0).abs() < 1e-9);
    assert_eq!(report.features.len(), 47);
    assert!(report.ranked.entries.windows(2).all(|w| w[0].score >= w[1].score));
}

#[test]
fn untrained_model_is_a_state_error() {
    let ds = cohort(3, 10);
    let m = cohortgate::model::HpModel::init(Indicator::Resi, &ModelConfig::default(), cohortgate::model::InputDims::standard()).unwrap();
    assert!(matches!(personal_importance(&m, &ds.participants[0]), Err(cohortgate::Error::State(_))));
}
