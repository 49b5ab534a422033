#![allow(dead_code)]

use cohortgate::dataio::{generate_synthetic, preprocess, Dataset, Indicator, SynthConfig};
use cohortgate::model::{HpModel, InputDims, ModelConfig, Network};

/// Small preprocessed synthetic cohort with one day of wear.
pub fn cohort(n: usize, seed: u64) -> Dataset {
    let cfg = SynthConfig { n, seed, wear_days: 1, ..SynthConfig::default() };
    preprocess(&generate_synthetic(&cfg).unwrap(), 5).unwrap().0
}

/// Full-size model with seeded random parameters, flagged as trained.
pub fn random_model(indicator: Indicator, config: &ModelConfig, seed: u64) -> HpModel {
    let dims = InputDims::standard();
    let params = Network::new(config, dims).unwrap().init_params(seed);
    let mut m = HpModel::from_parts(indicator, config, dims, params, seed, None).unwrap();
    // Nudge the gates off their uniform start so importance is not constant.
    let net = m.network().clone();
    for name in ["context_gate.weight", "context_gate.bias", "motion_gate.weight", "motion_gate.bias"] {
        if let Some(g) = net.group(name) {
            let vals: Vec<f32> = (0..g.len()).map(|i| ((i * 37 + seed as usize) % 11) as f32 / 10.0 - 0.5).collect();
            m.set_group(name, &vals).unwrap();
        }
    }
    m
}
