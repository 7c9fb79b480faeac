//! Exhaustive reference computations for the threshold metrics.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `P(ood > in) + ½ P(tie)` over all pairs.
pub fn pairwise_auroc(inn: &[f64], ood: &[f64]) -> f64 {
    let mut s = 0.0;
    for &a in inn {
        for &b in ood {
            if b > a {
                s += 1.0;
            } else if b == a {
                s += 0.5;
            }
        }
    }
    s / (inn.len() * ood.len()) as f64
}

fn thresholds(inn: &[f64], ood: &[f64]) -> Vec<f64> {
    let mut t: Vec<f64> = inn.iter().chain(ood).copied().collect();
    t.sort_by(f64::total_cmp);
    t.dedup();
    t
}

/// Precision-recall points at every distinct threshold, then
/// `Σ (R_k − R_{k−1}) P_k` in recall order. A recall level is credited at
/// the threshold that first reaches it, which has the highest precision.
pub fn brute_aupr(inn: &[f64], ood: &[f64], positive_in: bool) -> f64 {
    let mut points: Vec<(f64, f64)> = thresholds(inn, ood)
        .into_iter()
        .map(|t| {
            let (tp, fp, np) = if positive_in {
                (
                    inn.iter().filter(|&&s| s <= t).count(),
                    ood.iter().filter(|&&s| s <= t).count(),
                    inn.len(),
                )
            } else {
                (
                    ood.iter().filter(|&&s| s >= t).count(),
                    inn.iter().filter(|&&s| s >= t).count(),
                    ood.len(),
                )
            };
            let precision = if tp + fp == 0 { 1.0 } else { tp as f64 / (tp + fp) as f64 };
            (tp as f64 / np as f64, precision)
        })
        .collect();
    points.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.total_cmp(&a.1)));
    let mut prev = 0.0;
    let mut ap = 0.0;
    for (r, p) in points {
        ap += (r - prev) * p;
        prev = r;
    }
    ap
}

/// Scans thresholds upward and stops at the first with TPR ≥ level.
pub fn brute_tnr(inn: &[f64], ood: &[f64], level: f64) -> f64 {
    for t in thresholds(inn, ood) {
        let accepted = inn.iter().filter(|&&s| s <= t).count();
        if accepted * 10_000 >= (level * 10_000.0).round() as usize * inn.len() {
            return ood.iter().filter(|&&s| s > t).count() as f64 / ood.len() as f64;
        }
    }
    unreachable!("the largest threshold accepts everything")
}

pub fn brute_detection_accuracy(inn: &[f64], ood: &[f64]) -> f64 {
    let mut best: f64 = 0.5;
    for t in thresholds(inn, ood) {
        let tpr = inn.iter().filter(|&&s| s <= t).count() as f64 / inn.len() as f64;
        let tnr = ood.iter().filter(|&&s| s > t).count() as f64 / ood.len() as f64;
        best = best.max(0.5 * (tpr + tnr));
    }
    best
}

/// Seeded score pairs of size 1–50; every third set draws from a small
/// integer range so that ties are common.
pub fn random_score_sets(count: usize, seed: u64) -> Vec<(Vec<f64>, Vec<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let n = rng.random_range(1..=50);
            let m = rng.random_range(1..=50);
            let shift: f64 = rng.random_range(0.0..1.0);
            let mut draw = |k: usize, off: f64| -> Vec<f64> {
                (0..k)
                    .map(|_| {
                        if i % 3 == 0 {
                            rng.random_range(0..6) as f64 + off.round()
                        } else {
                            rng.random::<f64>() + off
                        }
                    })
                    .collect()
            };
            let inn = draw(n, 0.0);
            let ood = draw(m, shift);
            (inn, ood)
        })
        .collect()
}
