//! Uncertainty scores from a trained model.

use serde::{Deserialize, Serialize};

use crate::degradations::{orthogonal_perturb, svd_blur, OrthogonalProbeSpec};
use crate::error::{Error, Result};
use crate::seed;
use crate::tensor::{Dataset, ImageTensor};
use crate::trainer::{mean, squared_distances, RndModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scorer {
    /// `‖f(x) − g_0(x)‖²`.
    Rnd,
    /// Distance of the RND score from the training mean.
    Typicality,
}

impl std::str::FromStr for Scorer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rnd" => Ok(Scorer::Rnd),
            "typicality" => Ok(Scorer::Typicality),
            other => Err(Error::invalid(format!("unknown scorer {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreRecord {
    pub sample_index: usize,
    pub score: f64,
    pub scorer: Scorer,
}

pub fn uncertainty(model: &RndModel, x: &ImageTensor) -> Result<f64> {
    Ok(uncertainties(model, std::slice::from_ref(x))?[0])
}

/// Batch form of [`uncertainty`]; rows never interact.
pub fn uncertainties(model: &RndModel, images: &[ImageTensor]) -> Result<Vec<f64>> {
    squared_distances(&model.predictor, &model.targets[0], images)
}

fn stored_mean(model: &RndModel) -> Result<f64> {
    model
        .mean_train_loss
        .ok_or_else(|| Error::invalid("model has no stored mean training loss"))
}

pub fn typicality_score(model: &RndModel, x: &ImageTensor) -> Result<f64> {
    let mu = stored_mean(model)?;
    Ok((uncertainty(model, x)? - mu).abs())
}

pub fn score_dataset(model: &RndModel, dataset: &Dataset, scorer: Scorer) -> Result<Vec<ScoreRecord>> {
    let mu = match scorer {
        Scorer::Typicality => Some(stored_mean(model)?),
        Scorer::Rnd => None,
    };
    let u = uncertainties(model, &dataset.images)?;
    Ok(u
        .into_iter()
        .enumerate()
        .map(|(sample_index, u)| ScoreRecord {
            sample_index,
            score: mu.map_or(u, |m| (u - m).abs()),
            scorer,
        })
        .collect())
}

/// `sample_index,score` lines; floats print in shortest round-trip form.
pub fn format_scores(records: &[ScoreRecord]) -> String {
    let mut out = String::from("sample_index,score\n");
    for r in records {
        out.push_str(&format!("{},{:?}\n", r.sample_index, r.score));
    }
    out
}

/// Parses the output of [`format_scores`].
pub fn parse_scores(text: &str) -> Result<Vec<f64>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == "sample_index,score" => {}
        _ => return Err(Error::invalid("score file lacks the sample_index,score header")),
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| {
            let (_, v) = l
                .split_once(',')
                .ok_or_else(|| Error::invalid(format!("score line {}: missing comma", i + 2)))?;
            let v: f64 = v
                .trim()
                .parse()
                .map_err(|_| Error::invalid(format!("score line {}: bad number {v:?}", i + 2)))?;
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    context: "score file",
                    index: i,
                });
            }
            Ok(v)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeRow {
    pub label: String,
    pub alpha: Option<f64>,
    pub mean_uncertainty: f64,
}

/// Mean uncertainty on the original images, their rank-`blur_k`-reduced
/// copies, and orthogonal perturbations at each `alpha`. Perturbed rows
/// keep the smallest mean over `seeds`.
pub fn orthogonal_probe(
    model: &RndModel,
    dataset: &Dataset,
    alphas: &[f64],
    seeds: &[u64],
    blur_k: usize,
) -> Result<Vec<ProbeRow>> {
    if alphas.is_empty() || seeds.is_empty() {
        return Err(Error::invalid("probe needs at least one alpha and one seed"));
    }
    let mut rows = vec![ProbeRow {
        label: "original".into(),
        alpha: None,
        mean_uncertainty: mean(&uncertainties(model, &dataset.images)?),
    }];
    let blurred = dataset
        .images
        .iter()
        .enumerate()
        .map(|(i, x)| svd_blur(x, blur_k).map_err(|e| Error::at_image(i, e)))
        .collect::<Result<Vec<_>>>()?;
    rows.push(ProbeRow {
        label: format!("svd_blur_k{blur_k}"),
        alpha: None,
        mean_uncertainty: mean(&uncertainties(model, &blurred)?),
    });
    for &alpha in alphas {
        let mut best = f64::INFINITY;
        for &s in seeds {
            let perturbed = dataset
                .images
                .iter()
                .enumerate()
                .map(|(i, x)| {
                    let spec = OrthogonalProbeSpec {
                        alpha,
                        seed: seed::derive(s, i as u64),
                    };
                    orthogonal_perturb(x, &spec).map_err(|e| Error::at_image(i, e))
                })
                .collect::<Result<Vec<_>>>()?;
            best = best.min(mean(&uncertainties(model, &perturbed)?));
        }
        rows.push(ProbeRow {
            label: format!("orthogonal_{alpha}"),
            alpha: Some(alpha),
            mean_uncertainty: best,
        });
    }
    Ok(rows)
}

/// `label,alpha,mean_uncertainty` lines.
pub fn format_probe(rows: &[ProbeRow]) -> String {
    let mut out = String::from("label,alpha,mean_uncertainty\n");
    for r in rows {
        let a = r.alpha.map(|a| format!("{a:?}")).unwrap_or_default();
        out.push_str(&format!("{},{},{:?}\n", r.label, a, r.mean_uncertainty));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn score_file_round_trip() {
        let recs: Vec<ScoreRecord> = [0.1, 2.5e-7, 3.0]
            .iter()
            .enumerate()
            .map(|(i, &s)| ScoreRecord {
                sample_index: i,
                score: s,
                scorer: Scorer::Rnd,
            })
            .collect();
        let text = format_scores(&recs);
        assert_eq!(parse_scores(&text).unwrap(), vec![0.1, 2.5e-7, 3.0]);
        assert!(parse_scores("a,b\n1,2\n").is_err());
        assert!(parse_scores("sample_index,score\n0,NaN\n").is_err());
    }

    #[test]
    fn scorer_names() {
        assert_eq!("rnd".parse::<Scorer>().unwrap(), Scorer::Rnd);
        assert_eq!("typicality".parse::<Scorer>().unwrap(), Scorer::Typicality);
        assert!("x".parse::<Scorer>().is_err());
    }
}
