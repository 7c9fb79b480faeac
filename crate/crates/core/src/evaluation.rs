//! Threshold metrics for uncertainty scores and a linear feature probe.
//!
//! Scores are uncertainties: in-distribution samples are the positive class
//! and are accepted when their score is at or below the threshold.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::nn::{adam_step, AdamState};
use crate::seed;

fn check(in_scores: &[f64], ood_scores: &[f64]) -> Result<()> {
    if in_scores.is_empty() || ood_scores.is_empty() {
        return Err(Error::invalid("both score lists must be non-empty"));
    }
    crate::error::check_finite(in_scores, "in-distribution scores")?;
    crate::error::check_finite(ood_scores, "ood scores")
}

/// All scores in ascending order, grouped by value, as
/// `(in count, ood count)` per distinct value.
fn tie_groups(in_scores: &[f64], ood_scores: &[f64]) -> Vec<(usize, usize)> {
    let mut all: Vec<(f64, bool)> = in_scores
        .iter()
        .map(|&s| (s, true))
        .chain(ood_scores.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut groups: Vec<(usize, usize)> = Vec::new();
    let mut last = None;
    for (s, is_in) in all {
        if last != Some(s) {
            groups.push((0, 0));
            last = Some(s);
        }
        let g = groups.last_mut().expect("pushed above");
        if is_in {
            g.0 += 1;
        } else {
            g.1 += 1;
        }
    }
    groups
}

/// Area under TPR against FPR as the acceptance threshold rises,
/// integrated with the trapezoid rule.
pub fn auroc(in_scores: &[f64], ood_scores: &[f64]) -> Result<f64> {
    check(in_scores, ood_scores)?;
    // Twice the area in units of 1/(n_in·n_ood), summed exactly.
    let mut tp: u128 = 0;
    let mut twice: u128 = 0;
    for (a, b) in tie_groups(in_scores, ood_scores) {
        let before = tp;
        tp += a as u128;
        twice += b as u128 * (before + tp);
    }
    Ok(twice as f64 / (2.0 * in_scores.len() as f64 * ood_scores.len() as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Positive {
    /// Low-uncertainty acceptance counts as a detection.
    In,
    /// High-uncertainty rejection counts as a detection.
    Out,
}

/// Average precision: `Σ ΔR · P` over the tie groups met in detection order.
pub fn aupr(in_scores: &[f64], ood_scores: &[f64], positive: Positive) -> Result<f64> {
    check(in_scores, ood_scores)?;
    let mut groups = tie_groups(in_scores, ood_scores);
    let n_pos = match positive {
        Positive::In => in_scores.len(),
        Positive::Out => {
            groups.reverse();
            for g in &mut groups {
                *g = (g.1, g.0);
            }
            ood_scores.len()
        }
    } as f64;
    let (mut tp, mut seen) = (0usize, 0usize);
    let mut ap = 0.0;
    for (pos, neg) in groups {
        tp += pos;
        seen += pos + neg;
        if pos > 0 {
            ap += pos as f64 / n_pos * (tp as f64 / seen as f64);
        }
    }
    Ok(ap)
}

/// Fraction of OOD scores above the smallest threshold that accepts at
/// least `tpr_level` of the in-distribution scores.
pub fn tnr_at_tpr(in_scores: &[f64], ood_scores: &[f64], tpr_level: f64) -> Result<f64> {
    check(in_scores, ood_scores)?;
    if !(tpr_level > 0.0 && tpr_level <= 1.0) {
        return Err(Error::invalid(format!("tpr level must lie in (0, 1], got {tpr_level}")));
    }
    let mut sorted = in_scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    // Smallest count c with c / n >= level, tolerant of rounding in level·n.
    let needed = ((tpr_level * n) - 1e-9).ceil().max(1.0) as usize;
    let tau = sorted[needed.min(sorted.len()) - 1];
    let rejected = ood_scores.iter().filter(|&&s| s > tau).count();
    Ok(rejected as f64 / ood_scores.len() as f64)
}

/// `max ½(TPR + TNR)` over every threshold, including one below all scores.
pub fn detection_accuracy(in_scores: &[f64], ood_scores: &[f64]) -> Result<f64> {
    check(in_scores, ood_scores)?;
    let (n_in, n_ood) = (in_scores.len() as f64, ood_scores.len() as f64);
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut best: f64 = 0.5;
    for (a, b) in tie_groups(in_scores, ood_scores) {
        tp += a;
        fp += b;
        let tpr = tp as f64 / n_in;
        let tnr = (ood_scores.len() - fp) as f64 / n_ood;
        best = best.max(0.5 * (tpr + tnr));
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub auroc: f64,
    pub aupr_in: f64,
    pub aupr_out: f64,
    pub detection_accuracy: f64,
    pub tnr_at_95tpr: f64,
    pub n_in: usize,
    pub n_ood: usize,
}

/// Metric that picks among candidate configurations on validation data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMetric {
    Auroc,
    AuprIn,
    AuprOut,
    DetectionAccuracy,
    Tnr95,
}

impl std::str::FromStr for SelectionMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "auroc" => SelectionMetric::Auroc,
            "aupr_in" => SelectionMetric::AuprIn,
            "aupr_out" => SelectionMetric::AuprOut,
            "detection_accuracy" => SelectionMetric::DetectionAccuracy,
            "tnr95" | "tnr_at_95tpr" => SelectionMetric::Tnr95,
            other => return Err(Error::invalid(format!("unknown metric {other:?}"))),
        })
    }
}

impl EvalReport {
    pub fn metric(&self, m: SelectionMetric) -> f64 {
        match m {
            SelectionMetric::Auroc => self.auroc,
            SelectionMetric::AuprIn => self.aupr_in,
            SelectionMetric::AuprOut => self.aupr_out,
            SelectionMetric::DetectionAccuracy => self.detection_accuracy,
            SelectionMetric::Tnr95 => self.tnr_at_95tpr,
        }
    }

    /// `key = value` lines.
    pub fn to_text(&self) -> String {
        format!(
            "auroc = {:?}\naupr_in = {:?}\naupr_out = {:?}\ndetection_accuracy = {:?}\ntnr_at_95tpr = {:?}\nn_in = {}\nn_ood = {}\n",
            self.auroc,
            self.aupr_in,
            self.aupr_out,
            self.detection_accuracy,
            self.tnr_at_95tpr,
            self.n_in,
            self.n_ood
        )
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let get = |key: &str| -> Result<f64> {
            text.lines()
                .filter_map(|l| l.split_once('='))
                .find(|(k, _)| k.trim() == key)
                .ok_or_else(|| Error::invalid(format!("report lacks {key}")))?
                .1
                .trim()
                .parse::<f64>()
                .map_err(|_| Error::invalid(format!("report field {key} is not a number")))
        };
        Ok(EvalReport {
            auroc: get("auroc")?,
            aupr_in: get("aupr_in")?,
            aupr_out: get("aupr_out")?,
            detection_accuracy: get("detection_accuracy")?,
            tnr_at_95tpr: get("tnr_at_95tpr")?,
            n_in: get("n_in")? as usize,
            n_ood: get("n_ood")? as usize,
        })
    }
}

pub fn evaluate(in_scores: &[f64], ood_scores: &[f64]) -> Result<EvalReport> {
    Ok(EvalReport {
        auroc: auroc(in_scores, ood_scores)?,
        aupr_in: aupr(in_scores, ood_scores, Positive::In)?,
        aupr_out: aupr(in_scores, ood_scores, Positive::Out)?,
        detection_accuracy: detection_accuracy(in_scores, ood_scores)?,
        tnr_at_95tpr: tnr_at_tpr(in_scores, ood_scores, 0.95)?,
        n_in: in_scores.len(),
        n_ood: ood_scores.len(),
    })
}

/// `label & AUROC & TNR & DetAcc & AUPR-in & AUPR-out \\`, each column
/// listing the OOD sets separated by `/` at three decimals.
pub fn table_row(label: &str, reports: &[EvalReport]) -> String {
    let col = |f: fn(&EvalReport) -> f64| {
        reports
            .iter()
            .map(|r| format!("{:.3}", f(r)))
            .collect::<Vec<_>>()
            .join("/")
    };
    format!(
        "{label} & {} & {} & {} & {} & {} \\\\",
        col(|r| r.auroc),
        col(|r| r.tnr_at_95tpr),
        col(|r| r.detection_accuracy),
        col(|r| r.aupr_in),
        col(|r| r.aupr_out)
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProbeOptimizer {
    Adam { lr: f64 },
    /// SGD from 0.1, divided by ten at 30% and again at 60% of the epochs.
    SgdAnnealed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub train_fraction: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub optimizer: ProbeOptimizer,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            train_fraction: 0.8,
            epochs: 50,
            batch_size: 32,
            seed: 0,
            optimizer: ProbeOptimizer::Adam { lr: 1e-3 },
        }
    }
}

/// Fits softmax regression on a seeded split of `features` and returns the
/// held-out accuracy.
pub fn linear_probe(features: &Matrix, labels: &[u32], config: &ProbeConfig) -> Result<f64> {
    let (n, d) = (features.rows(), features.cols());
    if labels.len() != n {
        return Err(Error::shape(n, labels.len()));
    }
    crate::error::check_finite(features.as_slice(), "probe features")?;
    let classes = labels.iter().copied().max().map_or(0, |m| m as usize + 1);
    let distinct = {
        let mut l = labels.to_vec();
        l.sort_unstable();
        l.dedup();
        l.len()
    };
    if distinct < 2 {
        return Err(Error::invalid("linear probe needs at least two classes"));
    }
    if !(config.train_fraction > 0.0 && config.train_fraction < 1.0) || config.epochs == 0 || config.batch_size == 0 {
        return Err(Error::invalid("probe needs train_fraction in (0, 1), epochs >= 1, batch >= 1"));
    }
    let order = seed::permutation(n, config.seed);
    let n_train = ((config.train_fraction * n as f64).round() as usize).clamp(1, n - 1);
    let (train, test) = order.split_at(n_train);

    // Parameters: W [classes × d] then b [classes].
    let mut params = vec![0.0; classes * d + classes];
    let mut adam = AdamState::new(params.len());
    let mut logits = vec![0.0; classes];
    for epoch in 0..config.epochs {
        let lr = match config.optimizer {
            ProbeOptimizer::Adam { lr } => lr,
            ProbeOptimizer::SgdAnnealed => {
                let frac = epoch as f64 / config.epochs as f64;
                if frac < 0.3 {
                    0.1
                } else if frac < 0.6 {
                    0.01
                } else {
                    0.001
                }
            }
        };
        let mut shuffled = train.to_vec();
        let perm = seed::permutation(shuffled.len(), seed::derive(config.seed, 1 + epoch as u64));
        shuffled = perm.iter().map(|&i| shuffled[i]).collect();
        for batch in shuffled.chunks(config.batch_size) {
            let mut grad = vec![0.0; params.len()];
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let x = &features.as_slice()[i * d..(i + 1) * d];
                softmax_logits(&params, x, classes, d, &mut logits);
                logits[labels[i] as usize] -= 1.0;
                for c in 0..classes {
                    let g = logits[c] * scale;
                    for (gw, xv) in grad[c * d..(c + 1) * d].iter_mut().zip(x) {
                        *gw += g * xv;
                    }
                    grad[classes * d + c] += g;
                }
            }
            match config.optimizer {
                ProbeOptimizer::Adam { .. } => adam_step(&mut params, &grad, &mut adam, lr)?,
                ProbeOptimizer::SgdAnnealed => {
                    for (p, g) in params.iter_mut().zip(&grad) {
                        *p -= lr * g;
                    }
                }
            }
        }
    }
    let correct = test
        .iter()
        .filter(|&&i| {
            let x = &features.as_slice()[i * d..(i + 1) * d];
            softmax_logits(&params, x, classes, d, &mut logits);
            let pred = (0..classes)
                .max_by(|&a, &b| logits[a].total_cmp(&logits[b]).then(b.cmp(&a)))
                .expect("at least two classes");
            pred == labels[i] as usize
        })
        .count();
    Ok(correct as f64 / test.len() as f64)
}

/// Writes softmax probabilities into `out`.
fn softmax_logits(params: &[f64], x: &[f64], classes: usize, d: usize, out: &mut [f64]) {
    for c in 0..classes {
        out[c] = params[classes * d + c] + params[c * d..(c + 1) * d].iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
    }
    let m = out.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    for v in out.iter_mut() {
        *v = (*v - m).exp();
        z += *v;
    }
    for v in out.iter_mut() {
        *v /= z;
    }
}
