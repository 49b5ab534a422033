use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::artifact::HpModel;
use super::config::{Hyper, ModelConfig, TrainConfig};
use super::metrics::evaluate_auc;
use super::network::{Dropout, InputDims, Network};
use crate::dataio::{Dataset, Indicator};
use crate::error::{Error, Result};
use crate::seed::derive_seed;

/// Borrowed view of one training example.
#[derive(Debug, Clone, Copy)]
pub struct Sample<'a> {
    pub context: &'a [f32],
    pub motion: &'a [f32],
    pub label: bool,
}

/// Samples per gradient chunk; chunks are summed in a fixed order so
/// results do not depend on the thread count.
const CHUNK: usize = 4;
/// Minimum training-loss improvement that resets early-stopping patience.
const MIN_DELTA: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub hyper: Hyper,
    pub fold_aucs: Vec<f64>,
    pub mean_auc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub indicator: Indicator,
    pub seed: u64,
    pub n_train: usize,
    pub n_test: usize,
    /// `n_neg / n_pos` on the final training split.
    pub pos_weight: f64,
    /// Cross-validation table; empty when the grid has a single point.
    pub grid: Vec<GridRow>,
    pub chosen: Hyper,
    /// Mean training loss per epoch of the final fit.
    pub loss_curve: Vec<f64>,
    pub early_stopped: bool,
    pub train_auc: f64,
    /// AUC on the held-out split; absent when `test_fraction` is 0.
    pub test_auc: Option<f64>,
    pub train_ids: Vec<String>,
    pub test_ids: Vec<String>,
}

/// Result of one optimization run.
#[derive(Debug, Clone)]
pub struct Fit {
    pub params: Vec<f32>,
    pub loss_curve: Vec<f64>,
    pub early_stopped: bool,
}

/// Progress notifications from [`train_with_progress`].
#[derive(Debug, Clone)]
pub enum Progress {
    Fold { hyper: Hyper, fold: usize, auc: f64 },
    Epoch { epoch: usize, loss: f64 },
}

/// Stratified split into `(train, test)` index lists, both sorted.
pub fn stratified_split(labels: &[bool], test_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for class in [false, true] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        idx.shuffle(&mut rng);
        let n_test = (idx.len() as f64 * test_fraction).round() as usize;
        test.extend_from_slice(&idx[..n_test]);
        train.extend_from_slice(&idx[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

/// Stratified `k`-fold partition of `indices`; each fold is sorted.
pub fn stratified_folds(indices: &[usize], labels: &[bool], k: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![Vec::new(); k];
    let mut next = 0;
    for class in [false, true] {
        let mut idx: Vec<usize> = indices.iter().copied().filter(|&i| labels[i] == class).collect();
        idx.shuffle(&mut rng);
        for i in idx {
            folds[next % k].push(i);
            next += 1;
        }
    }
    folds.iter_mut().for_each(|f| f.sort_unstable());
    folds
}

fn pos_weight(samples: &[Sample<'_>]) -> Result<f64> {
    let pos = samples.iter().filter(|s| s.label).count();
    let neg = samples.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::Training("labels contain a single class".into()));
    }
    Ok(neg as f64 / pos as f64)
}

/// Weighted binary cross-entropy on a logit and its derivative.
pub fn bce_with_logits(logit: f64, label: bool, pos_weight: f64) -> (f64, f64) {
    // log(1 + e^x), stable for large |x|.
    let softplus = |x: f64| x.max(0.0) + (-x.abs()).exp().ln_1p();
    let p = super::layers::sigmoid(logit);
    if label {
        (pos_weight * softplus(-logit), pos_weight * (p - 1.0))
    } else {
        (softplus(logit), p)
    }
}

struct Adam {
    m: Vec<f32>,
    v: Vec<f32>,
    t: i32,
}

impl Adam {
    fn new(n: usize) -> Self {
        Adam {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [f32], grad: &[f32], lr: f64, wd: f64, b1: f64, b2: f64) {
        self.t += 1;
        let c1 = 1.0 - b1.powi(self.t);
        let c2 = 1.0 - b2.powi(self.t);
        let step = (lr * c2.sqrt() / c1) as f32;
        let (b1, b2, wd) = (b1 as f32, b2 as f32, wd as f32);
        let eps = (1e-8 * c2.sqrt()) as f32;
        for i in 0..params.len() {
            let g = grad[i] + wd * params[i];
            self.m[i] = b1 * self.m[i] + (1.0 - b1) * g;
            self.v[i] = b2 * self.v[i] + (1.0 - b2) * g * g;
            params[i] -= step * self.m[i] / (self.v[i].sqrt() + eps);
        }
    }
}

/// Optimizes `params` on `samples` with Adam and weighted BCE.
///
/// Deterministic in `seed`: shuffling and per-sample dropout masks come from
/// counter-based streams, and gradients are reduced in a fixed order.
pub fn fit(
    net: &Network,
    mut params: Vec<f32>,
    samples: &[Sample<'_>],
    hyper: &Hyper,
    cfg: &TrainConfig,
    seed: u64,
    progress: &mut dyn FnMut(Progress),
) -> Result<Fit> {
    let pw = pos_weight(samples)?;
    let mut adam = Adam::new(params.len());
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "shuffle"));
    let dropout_seed = derive_seed(seed, "dropout");
    let mut loss_curve = Vec::new();
    let mut best = f64::INFINITY;
    let mut waited = 0;
    let mut early_stopped = false;
    let n_params = params.len();

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let p = &params;
            let parts: Vec<(Vec<f32>, f64)> = batch
                .par_chunks(CHUNK)
                .map(|chunk| {
                    let mut grad = vec![0.0f32; n_params];
                    let mut loss = 0.0;
                    for &i in chunk {
                        let s = &samples[i];
                        let mut rng = ChaCha8Rng::seed_from_u64(dropout_seed);
                        rng.set_stream(((epoch as u64) << 32) | i as u64);
                        let drop = Dropout {
                            rate: hyper.dropout,
                            rng: &mut rng,
                        };
                        let trace = net.forward(p, s.context, s.motion, Some(drop));
                        let (l, dl) = bce_with_logits(trace.head.logit as f64, s.label, pw);
                        loss += l;
                        net.backward(p, &trace, (dl / batch.len() as f64) as f32, &mut grad);
                    }
                    (grad, loss)
                })
                .collect();
            let mut grad = vec![0.0f32; n_params];
            for (g, l) in &parts {
                grad.iter_mut().zip(g).for_each(|(a, b)| *a += b);
                epoch_loss += l;
            }
            adam.step(&mut params, &grad, hyper.learning_rate, hyper.weight_decay, cfg.beta1, cfg.beta2);
        }
        let loss = epoch_loss / samples.len() as f64;
        if !loss.is_finite() || params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Divergence { epoch: epoch + 1 });
        }
        loss_curve.push(loss);
        progress(Progress::Epoch { epoch: epoch + 1, loss });
        if loss < best - MIN_DELTA {
            best = loss;
            waited = 0;
        } else {
            waited += 1;
            if cfg.early_stopping_patience > 0 && waited >= cfg.early_stopping_patience {
                early_stopped = true;
                break;
            }
        }
    }
    Ok(Fit {
        params,
        loss_curve,
        early_stopped,
    })
}

/// Inference-mode probabilities for `samples`.
pub fn predict_samples(net: &Network, params: &[f32], samples: &[Sample<'_>]) -> Vec<f64> {
    samples
        .par_iter()
        .map(|s| super::layers::sigmoid(net.logit(params, s.context, s.motion) as f64))
        .collect()
}

fn auc_of(net: &Network, params: &[f32], samples: &[Sample<'_>]) -> Result<f64> {
    let scores = predict_samples(net, params, samples);
    let labels: Vec<bool> = samples.iter().map(|s| s.label).collect();
    evaluate_auc(&scores, &labels)
}

/// Trains one indicator model: stratified split, grid search by 5-fold
/// cross-validated AUC, then a final fit on the whole training split.
pub fn train(
    dataset: &Dataset,
    indicator: Indicator,
    cfg: &TrainConfig,
    model_cfg: &ModelConfig,
) -> Result<(HpModel, TrainReport)> {
    train_with_progress(dataset, indicator, cfg, model_cfg, &mut |_| {})
}

pub fn train_with_progress(
    dataset: &Dataset,
    indicator: Indicator,
    cfg: &TrainConfig,
    model_cfg: &ModelConfig,
    progress: &mut dyn FnMut(Progress),
) -> Result<(HpModel, TrainReport)> {
    cfg.validate()?;
    model_cfg.validate()?;
    let labels = dataset.labels(indicator);
    let all: Vec<Sample<'_>> = dataset
        .participants
        .iter()
        .zip(&labels)
        .map(|(p, &label)| Sample {
            context: &p.context.values,
            motion: &p.motion.values,
            label,
        })
        .collect();
    pos_weight(&all)?;
    let dims = InputDims {
        context_len: dataset.schema.encoded_len(),
        ..InputDims::standard()
    };
    let seed = model_cfg.seed;
    let net = Network::new(model_cfg, dims)?;
    for s in &all {
        net.check_inputs(s.context, s.motion)?;
    }

    let (train_idx, test_idx) = stratified_split(&labels, cfg.test_fraction, derive_seed(seed, "split"));
    let pick = |idx: &[usize]| idx.iter().map(|&i| all[i]).collect::<Vec<_>>();
    let train_set = pick(&train_idx);
    let pw = pos_weight(&train_set)?;

    let candidates = cfg.candidates(model_cfg);
    let mut grid = Vec::new();
    let chosen = if candidates.len() == 1 {
        candidates[0]
    } else {
        let folds = stratified_folds(&train_idx, &labels, cfg.folds, derive_seed(seed, "folds"));
        for hyper in &candidates {
            let mut fold_aucs = Vec::with_capacity(folds.len());
            for (k, val) in folds.iter().enumerate() {
                let fit_idx: Vec<usize> = folds
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j != k)
                    .flat_map(|(_, f)| f.iter().copied())
                    .collect();
                let fold_seed = derive_seed(seed, &format!("fold{k}"));
                let f = fit(
                    &net,
                    net.init_params(fold_seed),
                    &pick(&fit_idx),
                    hyper,
                    cfg,
                    fold_seed,
                    &mut |_| {},
                )?;
                let auc = auc_of(&net, &f.params, &pick(val))?;
                progress(Progress::Fold {
                    hyper: *hyper,
                    fold: k,
                    auc,
                });
                fold_aucs.push(auc);
            }
            let mean_auc = fold_aucs.iter().sum::<f64>() / fold_aucs.len() as f64;
            grid.push(GridRow {
                hyper: *hyper,
                fold_aucs,
                mean_auc,
            });
        }
        // First candidate wins ties.
        grid.iter()
            .fold(None::<&GridRow>, |best, r| match best {
                Some(b) if b.mean_auc >= r.mean_auc => Some(b),
                _ => Some(r),
            })
            .expect("grid is nonempty")
            .hyper
    };

    let final_cfg = ModelConfig {
        dropout_rate: chosen.dropout,
        ..model_cfg.clone()
    };
    let final_net = Network::new(&final_cfg, dims)?;
    let f = fit(
        &final_net,
        final_net.init_params(seed),
        &train_set,
        &chosen,
        cfg,
        seed,
        progress,
    )?;
    let train_auc = auc_of(&final_net, &f.params, &train_set)?;
    let test_auc = if test_idx.is_empty() {
        None
    } else {
        Some(auc_of(&final_net, &f.params, &pick(&test_idx))?)
    };
    let model = HpModel::from_parts(indicator, &final_cfg, dims, f.params, seed, Some(chosen))?;
    let ids = |idx: &[usize]| idx.iter().map(|&i| dataset.participants[i].id.clone()).collect();
    let report = TrainReport {
        indicator,
        seed,
        n_train: train_idx.len(),
        n_test: test_idx.len(),
        pos_weight: pw,
        grid,
        chosen,
        loss_curve: f.loss_curve,
        early_stopped: f.early_stopped,
        train_auc,
        test_auc,
        train_ids: ids(&train_idx),
        test_ids: ids(&test_idx),
    };
    Ok((model, report))
}
