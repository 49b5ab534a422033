//! Gate ablation regression on the planted cohort, context stream only
//! (the five context-driven indicators; MVPA is motion-planted).

use cohortgate::dataio::{generate_synthetic, preprocess, SynthConfig};
use cohortgate::interpret::feature_importance;
use cohortgate::model::*;

#[test]
fn gates_keep_auc_and_surface_planted_features() {
    let synth = SynthConfig { n: 1000, seed: 7, wear_days: 1, ..SynthConfig::default() };
    let (ds, _) = preprocess(&generate_synthetic(&synth).unwrap(), 5).unwrap();
    let tc = TrainConfig {
        grid: Grid { learning_rate: vec![], dropout: vec![], weight_decay: vec![] },
        ..TrainConfig::default()
    };
    let gated = ModelConfig { streams: Streams::ContextOnly, seed: 5, ..ModelConfig::default() };
    let plain = ModelConfig { gates: false, ..gated.clone() };
    let (mut with, mut without) = (Vec::new(), Vec::new());
    for effect in &synth.planted_effects.logistic {
        let ind = effect.indicator;
        let (m, r) = train(&ds, ind, &tc, &gated).unwrap();
        let (_, r0) = train(&ds, ind, &tc, &plain).unwrap();
        with.push(r.test_auc.unwrap());
        without.push(r0.test_auc.unwrap());

        let mut mean = vec![0.0; 50];
        for p in &ds.participants {
            let w = m.network().context_gate_weights(m.params(), &p.context.values).unwrap();
            mean.iter_mut().zip(w).for_each(|(a, v)| *a += v as f64);
        }
        let scores = feature_importance(&ds.schema, &mean);
        for t in &effect.terms {
            let f = ds.schema.index_of(&t.feature).unwrap();
            let rank = scores.iter().filter(|&&s| s > scores[f]).count();
            assert!(rank < 5, "{ind}: planted `{}` ranked {}", t.feature, rank + 1);
        }
    }
    let (a, b) = (mean_auc(&with).unwrap(), mean_auc(&without).unwrap());
    assert!(a >= b - 0.02, "gated {a} vs ungated {b}");
}
