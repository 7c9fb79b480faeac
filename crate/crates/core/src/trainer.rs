//! Joint distillation of one predictor against a frozen target per dataset.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::degradations::{build_aux_datasets, DegradationSpec};
use crate::error::{Error, Result};
use crate::nn::{adam_step, loss_and_grad_packed, AdamState, Network, NetworkProfile, ProfileKind};
use crate::seed;
use crate::tensor::{Dataset, ImageTensor, Shape};

/// Images per forward pass when scoring whole datasets.
pub(crate) const SCORE_CHUNK: usize = 256;

fn default_lr() -> f64 {
    1e-4
}

fn default_anneal() -> f64 {
    0.1
}

fn default_batch() -> usize {
    128
}

fn default_fraction() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub b_train: usize,
    #[serde(default)]
    pub specs: Vec<DegradationSpec>,
    /// Overrides both the update budget and the default epoch rule.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epochs: Option<usize>,
    /// Total parameter updates; converted to whole epochs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub total_updates: Option<usize>,
    #[serde(default = "default_lr")]
    pub base_lr: f64,
    /// Multiplier applied once at the halfway epoch.
    #[serde(default = "default_anneal")]
    pub anneal_factor: f64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_fraction")]
    pub train_fraction: f64,
    #[serde(default = "default_profile")]
    pub profile: ProfileKind,
}

fn default_profile() -> ProfileKind {
    ProfileKind::Tiny
}

impl TrainConfig {
    pub fn new(specs: Vec<DegradationSpec>, seed: u64) -> Self {
        TrainConfig {
            b_train: specs.len(),
            specs,
            epochs: None,
            total_updates: None,
            base_lr: default_lr(),
            anneal_factor: default_anneal(),
            batch_size: default_batch(),
            seed,
            train_fraction: 1.0,
            profile: ProfileKind::Tiny,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.specs.len() != self.b_train {
            return Err(Error::invalid(format!(
                "b_train = {} but {} degradation specs given",
                self.b_train,
                self.specs.len()
            )));
        }
        for spec in &self.specs {
            spec.validate()?;
        }
        if self.epochs == Some(0) || self.total_updates == Some(0) {
            return Err(Error::invalid("epochs and total_updates must be >= 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be >= 1"));
        }
        if !(self.base_lr.is_finite() && self.base_lr > 0.0) {
            return Err(Error::invalid(format!("base_lr must be > 0, got {}", self.base_lr)));
        }
        if !(self.anneal_factor.is_finite() && self.anneal_factor > 0.0) {
            return Err(Error::invalid("anneal_factor must be > 0"));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction <= 1.0) {
            return Err(Error::invalid(format!(
                "train_fraction must lie in (0, 1], got {}",
                self.train_fraction
            )));
        }
        Ok(())
    }

    /// `ceil(100 / (1 + Σ variants))`: 100 epochs alone, 50 with one
    /// auxiliary set, 34, 25 and 20 with two to four.
    pub fn default_epochs(&self) -> usize {
        let datasets: usize = 1 + self.specs.iter().map(DegradationSpec::variant_count).sum::<usize>();
        100usize.div_ceil(datasets)
    }

    pub fn resolved_epochs(&self, steps_per_epoch: usize) -> usize {
        match (self.epochs, self.total_updates) {
            (Some(e), _) => e,
            (None, Some(u)) => u.div_ceil(steps_per_epoch.max(1)),
            (None, None) => self.default_epochs(),
        }
    }

    /// Base rate before epoch `ceil(epochs / 2)`, annealed from there on.
    pub fn lr_at(&self, epoch: usize, epochs: usize) -> f64 {
        if epoch < epochs.div_ceil(2) {
            self.base_lr
        } else {
            self.base_lr * self.anneal_factor
        }
    }

    /// SHA-256 of the canonical TOML rendering.
    pub fn fingerprint(&self) -> String {
        let text = toml::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    pub fn predictor_seed(&self) -> u64 {
        seed::derive(self.seed, 0)
    }

    pub fn target_seed(&self, i: usize) -> u64 {
        seed::derive(self.seed, 1 + i as u64)
    }

    fn shuffle_seed(&self, dataset: usize, epoch: usize) -> u64 {
        seed::derive(seed::derive(self.seed, 10_000 + dataset as u64), epoch as u64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub dataset_index: usize,
    pub loss: f64,
    pub lr: f64,
}

/// Renders the step log as `step,dataset_index,loss,lr` lines.
pub fn format_step_log(log: &[StepRecord]) -> String {
    let mut out = String::from("step,dataset_index,loss,lr\n");
    for r in log {
        out.push_str(&format!("{},{},{:?},{:?}\n", r.step, r.dataset_index, r.loss, r.lr));
    }
    out
}

/// Trained predictor with its frozen targets `g_0..=g_b`.
#[derive(Debug, Clone, PartialEq)]
pub struct RndModel {
    pub config: TrainConfig,
    pub predictor: Network,
    pub targets: Vec<Network>,
    /// Mean `‖f − g_0‖²` over the training set at the end of training.
    pub mean_train_loss: Option<f64>,
    pub fingerprint: String,
}

impl RndModel {
    pub fn b_train(&self) -> usize {
        self.targets.len() - 1
    }

    pub fn input_shape(&self) -> Shape {
        self.predictor.profile().input
    }

    pub fn validate(&self) -> Result<()> {
        if self.targets.len() != self.config.b_train + 1 {
            return Err(Error::invalid(format!(
                "{} targets for b_train = {}",
                self.targets.len(),
                self.config.b_train
            )));
        }
        for t in &self.targets {
            if !t.is_frozen() {
                return Err(Error::invalid("target network is not frozen"));
            }
            if t.output_dim() != self.predictor.output_dim() || t.profile().input != self.input_shape() {
                return Err(Error::invalid("target and predictor shapes differ"));
            }
        }
        Ok(())
    }

    /// Mean squared distance between the predictor and target `target` on
    /// every image of `dataset`.
    pub fn mean_loss_against(&self, dataset: &Dataset, target: usize) -> Result<f64> {
        let t = self
            .targets
            .get(target)
            .ok_or_else(|| Error::invalid(format!("no target {target}")))?;
        let d = squared_distances(&self.predictor, t, &dataset.images)?;
        Ok(mean(&d))
    }
}

pub(crate) fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len().max(1) as f64
}

/// Per-image `‖f(x) − g(x)‖²`, evaluated in fixed-size chunks.
pub(crate) fn squared_distances(f: &Network, g: &Network, images: &[ImageTensor]) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(images.len());
    for chunk in images.chunks(SCORE_CHUNK) {
        let refs: Vec<&ImageTensor> = chunk.iter().collect();
        out.extend(crate::nn::squared_distances(f, g, &refs)?);
    }
    Ok(out)
}

fn target_features(g: &Network, packed: &[f64], n: usize) -> Vec<f64> {
    let len = g.input_len();
    let mut out = Vec::with_capacity(n * g.output_dim());
    for start in (0..n).step_by(SCORE_CHUNK) {
        let m = SCORE_CHUNK.min(n - start);
        out.extend(g.forward_packed(&packed[start * len..(start + m) * len], m));
    }
    out
}

/// The seeded subset used for `fraction` of `n` images: a prefix of the
/// permutation, returned in source order.
pub fn subsample_indices(n: usize, fraction: f64, seed: u64, batch_size: usize) -> Result<Vec<usize>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::invalid(format!("fraction must lie in (0, 1], got {fraction}")));
    }
    if fraction == 1.0 {
        return Ok((0..n).collect());
    }
    let keep = (fraction * n as f64).floor() as usize;
    if keep == 0 || keep < batch_size.min(n) {
        return Err(Error::invalid(format!(
            "fraction {fraction} keeps {keep} of {n} images, less than one batch of {batch_size}"
        )));
    }
    let mut idx = seed::permutation(n, seed);
    idx.truncate(keep);
    idx.sort_unstable();
    Ok(idx)
}

struct Packed {
    x: Vec<f64>,
    g: Vec<f64>,
    n: usize,
}

pub fn train(train_set: &Dataset, config: &TrainConfig) -> Result<RndModel> {
    train_logged(train_set, config, &mut Vec::new())
}

/// Trains and appends one record per dataset per step to `log`.
pub fn train_logged(train_set: &Dataset, config: &TrainConfig, log: &mut Vec<StepRecord>) -> Result<RndModel> {
    config.validate()?;
    let shape = train_set
        .shape()
        .ok_or_else(|| Error::invalid("training set is empty"))?;
    let idx = subsample_indices(train_set.len(), config.train_fraction, config.seed, config.batch_size)?;
    let train_set = if idx.len() == train_set.len() {
        train_set.clone()
    } else {
        train_set.select(&idx)
    };

    let mut datasets = vec![train_set];
    if config.b_train > 0 {
        datasets.extend(build_aux_datasets(&datasets[0], &config.specs)?);
    }
    let targets = (0..datasets.len())
        .map(|i| Network::init(NetworkProfile::target(config.profile, shape), config.target_seed(i), true))
        .collect::<Result<Vec<_>>>()?;
    let mut predictor = Network::init(
        NetworkProfile::predictor(config.profile, shape),
        config.predictor_seed(),
        false,
    )?;
    if predictor.output_dim() != targets[0].output_dim() {
        return Err(Error::invalid("predictor and target profiles disagree on output size"));
    }

    let packed: Vec<Packed> = datasets
        .iter()
        .zip(&targets)
        .map(|(d, g)| {
            let refs: Vec<&ImageTensor> = d.images.iter().collect();
            let x = g.pack(&refs)?;
            let feats = target_features(g, &x, d.len());
            Ok(Packed { x, g: feats, n: d.len() })
        })
        .collect::<Result<_>>()?;

    let steps = packed[0].n.div_ceil(config.batch_size);
    let epochs = config.resolved_epochs(steps);
    let in_len = predictor.input_len();
    let out_dim = predictor.output_dim();
    let mut adam = AdamState::new(predictor.param_count());
    let mut step = 0;
    let mut xb = Vec::new();
    let mut gb = Vec::new();
    for epoch in 0..epochs {
        let lr = config.lr_at(epoch, epochs);
        let orders: Vec<Vec<usize>> = packed
            .iter()
            .enumerate()
            .map(|(i, p)| seed::permutation(p.n, config.shuffle_seed(i, epoch)))
            .collect();
        for j in 0..steps {
            let mut grad = vec![0.0; predictor.param_count()];
            for (i, (p, order)) in packed.iter().zip(&orders).enumerate() {
                let rows = &order[j * p.n / steps..(j + 1) * p.n / steps];
                if rows.is_empty() {
                    continue;
                }
                xb.clear();
                gb.clear();
                for &r in rows {
                    xb.extend_from_slice(&p.x[r * in_len..(r + 1) * in_len]);
                    gb.extend_from_slice(&p.g[r * out_dim..(r + 1) * out_dim]);
                }
                let (loss, g) = loss_and_grad_packed(&predictor, &xb, rows.len(), &gb)?;
                if !loss.is_finite() {
                    return Err(Error::Diverged { step, loss });
                }
                for (a, b) in grad.iter_mut().zip(&g) {
                    *a += b;
                }
                log.push(StepRecord {
                    step,
                    dataset_index: i,
                    loss,
                    lr,
                });
            }
            adam_step(predictor.params_mut()?, &grad, &mut adam, lr)?;
            step += 1;
        }
    }

    let p0 = &packed[0];
    let f = target_features(&predictor, &p0.x, p0.n);
    let d: Vec<f64> = f
        .chunks(out_dim)
        .zip(p0.g.chunks(out_dim))
        .map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum())
        .collect();
    let mu = mean(&d);
    if !mu.is_finite() {
        return Err(Error::Diverged { step, loss: mu });
    }
    Ok(RndModel {
        config: config.clone(),
        predictor,
        targets,
        mean_train_loss: Some(mu),
        fingerprint: config.fingerprint(),
    })
}

/// One model per fraction; each subset is a prefix of the same seeded
/// permutation, so smaller fractions nest inside larger ones.
pub fn reduced_data_sweep(train_set: &Dataset, config: &TrainConfig, fractions: &[f64]) -> Result<Vec<RndModel>> {
    for &f in fractions {
        subsample_indices(train_set.len(), f, config.seed, config.batch_size)?;
    }
    fractions
        .iter()
        .map(|&f| {
            let c = TrainConfig {
                train_fraction: f,
                ..config.clone()
            };
            train(train_set, &c)
        })
        .collect()
}
