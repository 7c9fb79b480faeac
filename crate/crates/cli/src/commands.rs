use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;
use svdrnd::data_io::{
    checkpoint_bytes, dataset_to_tensor, load_dataset, read_checkpoint, read_dataset, read_labels,
    synth_generate, DatasetManifest, DatasetRole, DatasetSource, Dtype, SynthKind, VAL_OOD_LIMIT,
};
use svdrnd::degradations::{apply_to_dataset, Degradation, DegradationSpec};
use svdrnd::detection::{format_probe, format_scores, orthogonal_probe, parse_scores, score_dataset, Scorer};
use svdrnd::effective_rank::{dataset_ler_with, select_k_with, ChannelAggregation};
use svdrnd::evaluation::{evaluate, linear_probe, table_row, EvalReport, ProbeConfig, ProbeOptimizer, SelectionMetric};
use svdrnd::trainer::{format_step_log, train_logged};
use svdrnd::{Dataset, Shape};

use crate::config::{output_path, ExperimentConfig};
use crate::stamp::{sha256_hex, write_output};
use crate::{
    Aggregation, BlurArgs, BlurMethod, EffectiveRankArgs, EvalArgs, OrthogonalProbeArgs, ProbeArgs, ProbeOpt,
    ScoreArgs, ScorerArg, SelectKArgs, StoreDtype, SweepKArgs, SynthArgs, TrainArgs,
};

fn invocation() -> String {
    std::env::args().skip(1).collect::<Vec<_>>().join(" ")
}

fn args_hash() -> String {
    sha256_hex(std::env::args().skip(1).collect::<Vec<_>>().join("\0").as_bytes())
}

/// Writes `bytes` with a stamp keyed to the argument list.
fn emit(out: &Path, bytes: &[u8], seeds: Vec<u64>, inputs: &[&Path]) -> Result<()> {
    write_output(out, bytes, &invocation(), args_hash(), seeds, inputs)
}

/// Prints a report and, when asked, stores it as well.
fn report(text: &str, out: Option<&PathBuf>, seeds: Vec<u64>, inputs: &[&Path]) -> Result<()> {
    print!("{text}");
    match out {
        Some(p) => emit(&output_path(p, None), text.as_bytes(), seeds, inputs),
        None => Ok(()),
    }
}

/// Containers load directly; `.toml` paths are dataset manifests.
fn read_data(path: &Path) -> Result<Dataset> {
    if path.extension().is_some_and(|e| e == "toml") {
        let m = DatasetManifest::read(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        return Ok(load_dataset(&m, base).with_context(|| format!("loading {}", path.display()))?);
    }
    Ok(read_dataset(path)?)
}

fn aggregation(a: Aggregation) -> ChannelAggregation {
    match a {
        Aggregation::MeanEffectiveRank => ChannelAggregation::MeanEffectiveRank,
        Aggregation::MeanLog => ChannelAggregation::MeanLog,
    }
}

fn dtype(d: StoreDtype) -> Dtype {
    match d {
        StoreDtype::U8 => Dtype::U8,
        StoreDtype::F32 => Dtype::F32,
        StoreDtype::F64 => Dtype::F64,
    }
}

fn to_toml<T: Serialize>(value: &T) -> String {
    toml::to_string(value).expect("report serializes")
}

fn parse_count(s: &str, what: &str) -> Result<usize> {
    s.trim()
        .parse()
        .map_err(|_| svdrnd::Error::invalid(format!("{what} must be a non-negative integer, got {s:?}")).into())
}

fn blur_degradation(method: BlurMethod, param: &str) -> Result<Degradation> {
    Ok(match method {
        BlurMethod::Svd => Degradation::SvdBlur {
            k: parse_count(param, "svd K")?,
        },
        BlurMethod::Dct => Degradation::DctBlur {
            keep: parse_count(param, "dct keep")?,
        },
        BlurMethod::Gauss => {
            let (kx, ky) = match param.split_once(',') {
                Some((a, b)) => (parse_count(a, "kernel")?, parse_count(b, "kernel")?),
                None => {
                    let k = parse_count(param, "kernel")?;
                    (k, k)
                }
            };
            Degradation::GaussianBlur { kx, ky }
        }
        BlurMethod::Geom => {
            let (name, magnitude) = match param.split_once(':') {
                Some((n, m)) => (n, Some(parse_count(m, "magnitude")?)),
                None => (param, None),
            };
            let need = || {
                magnitude.ok_or_else(|| svdrnd::Error::invalid(format!("{name} needs a magnitude, e.g. {name}:8")))
            };
            match name {
                "flip" => Degradation::Flip,
                "rotate" => Degradation::Rotate,
                "contrast" => Degradation::Contrast,
                "invert" => Degradation::Invert,
                "translate_v" => Degradation::TranslateV { magnitude: need()? },
                "translate_h" => Degradation::TranslateH { magnitude: need()? },
                "shear_v" => Degradation::ShearV { magnitude: need()? },
                "shear_h" => Degradation::ShearH { magnitude: need()? },
                other => bail!(svdrnd::Error::invalid(format!("unknown geometric transform {other:?}"))),
            }
        }
    })
}

pub fn blur(a: BlurArgs) -> Result<()> {
    let degradation = blur_degradation(a.method, &a.param)?;
    let spec = DegradationSpec {
        degradation,
        off_grid: a.off_grid,
    };
    spec.validate()?;
    let data = read_data(&a.input)?;
    let out = apply_to_dataset(&data, &spec)?;
    let bytes = dataset_to_tensor(&out, dtype(a.dtype))?.encode();
    emit(&output_path(&a.out, None), &bytes, vec![], &[&a.input])
}

#[derive(Serialize)]
struct RankReport {
    count: usize,
    aggregation: ChannelAggregation,
    mean_ler: f64,
}

pub fn effective_rank(a: EffectiveRankArgs) -> Result<()> {
    let data = read_data(&a.input)?;
    let agg = aggregation(a.aggregation);
    let r = RankReport {
        count: data.len(),
        aggregation: agg,
        mean_ler: dataset_ler_with(&data, agg)?,
    };
    report(&to_toml(&r), a.out.as_ref(), vec![], &[&a.input])
}

pub fn select_k(a: SelectKArgs) -> Result<()> {
    let data = read_data(&a.input)?;
    let sel = select_k_with(&data, a.b_train, aggregation(a.aggregation))?;
    if sel.zero_spread {
        eprintln!("warning: blurred effective rank does not vary with K");
    }
    report(&to_toml(&sel), a.out.as_ref(), vec![], &[&a.input])
}

pub fn train(a: TrainArgs) -> Result<()> {
    let mut cfg = ExperimentConfig::read(&a.config)?;
    let mut overrides = String::new();
    if let Some(f) = a.train_fraction {
        cfg.train.train_fraction = f;
        overrides.push_str(&format!("\0train_fraction={f:?}"));
    }
    if let Some(e) = a.epochs {
        cfg.train.epochs = Some(e);
        overrides.push_str(&format!("\0epochs={e}"));
    }
    cfg.train.validate()?;
    let data = cfg.load(&cfg.data.train)?;
    let mut log = Vec::new();
    let model = train_logged(&data, &cfg.train, &mut log)?;
    let bytes = checkpoint_bytes(&model)?;
    let hash = sha256_hex(format!("{}{overrides}", cfg.text).as_bytes());
    let seeds = vec![cfg.train.seed];
    let dir = cfg.output_dir();
    let train_manifest = cfg.resolve(&cfg.data.train);
    let inputs: [&Path; 2] = [&a.config, &train_manifest];
    write_output(&output_path(&a.out, dir.as_deref()), &bytes, &invocation(), hash.clone(), seeds.clone(), &inputs)?;
    if let Some(l) = &a.log {
        let text = format_step_log(&log);
        write_output(&output_path(l, dir.as_deref()), text.as_bytes(), &invocation(), hash, seeds, &inputs)?;
    }
    Ok(())
}

pub fn score(a: ScoreArgs) -> Result<()> {
    let model = read_checkpoint(&a.model)?;
    let data = read_data(&a.data)?;
    let scorer = match a.scorer {
        ScorerArg::Rnd => Scorer::Rnd,
        ScorerArg::Typicality => Scorer::Typicality,
    };
    let records = score_dataset(&model, &data, scorer)?;
    let text = format_scores(&records);
    emit(&output_path(&a.out, None), text.as_bytes(), vec![model.config.seed], &[&a.model, &a.data])
}

fn read_scores(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| svdrnd::Error::io(path, e))?;
    parse_scores(&text).with_context(|| path.display().to_string())
}

pub fn eval(a: EvalArgs) -> Result<()> {
    let in_scores = read_scores(&a.in_scores)?;
    let reports = a
        .ood_scores
        .iter()
        .map(|p| Ok(evaluate(&in_scores, &read_scores(p)?)?))
        .collect::<Result<Vec<EvalReport>>>()?;
    let text = match &a.table_row {
        Some(label) => format!("{}\n", table_row(label, &reports)),
        None => reports
            .iter()
            .zip(&a.ood_scores)
            .map(|(r, p)| format!("# {}\n{}", p.display(), r.to_text()))
            .collect::<Vec<_>>()
            .join("\n"),
    };
    let mut inputs: Vec<&Path> = vec![&a.in_scores];
    inputs.extend(a.ood_scores.iter().map(PathBuf::as_path));
    emit(&output_path(&a.out, None), text.as_bytes(), vec![], &inputs)
}

#[derive(Serialize)]
struct ProbeReport {
    layer: usize,
    samples: usize,
    accuracy: f64,
}

pub fn probe(a: ProbeArgs) -> Result<()> {
    let model = read_checkpoint(&a.model)?;
    let data = read_data(&a.data)?;
    let labels = read_labels(&a.labels)?;
    let features = model.predictor.features_at(&data.images, a.layer)?;
    let config = ProbeConfig {
        epochs: a.epochs,
        seed: a.seed,
        optimizer: match a.optimizer {
            ProbeOpt::Adam => ProbeConfig::default().optimizer,
            ProbeOpt::SgdAnnealed => ProbeOptimizer::SgdAnnealed,
        },
        ..ProbeConfig::default()
    };
    let accuracy = linear_probe(&features, &labels, &config)?;
    let r = ProbeReport {
        layer: a.layer,
        samples: data.len(),
        accuracy,
    };
    report(&to_toml(&r), a.out.as_ref(), vec![a.seed], &[&a.model, &a.data, &a.labels])
}

pub fn orthogonal_probe_report(a: OrthogonalProbeArgs) -> Result<()> {
    let model = read_checkpoint(&a.model)?;
    let data = read_data(&a.data)?;
    let blur_k = match a.blur_k {
        Some(k) => k,
        None => model
            .config
            .specs
            .iter()
            .find_map(|s| match s.degradation {
                Degradation::SvdBlur { k } => Some(k),
                _ => None,
            })
            .ok_or_else(|| svdrnd::Error::invalid("model has no SVD blur; pass --blur-k"))?,
    };
    let seeds: Vec<u64> = (0..a.seeds).collect();
    let rows = orthogonal_probe(&model, &data, &a.alphas, &seeds, blur_k)?;
    report(&format_probe(&rows), a.out.as_ref(), seeds, &[&a.model, &a.data])
}

fn role(s: &str) -> Result<DatasetRole> {
    Ok(match s {
        "train" => DatasetRole::Train,
        "test_in" => DatasetRole::TestIn,
        "test_ood" => DatasetRole::TestOod,
        "val_ood" => DatasetRole::ValOod,
        other => bail!(svdrnd::Error::invalid(format!("unknown dataset role {other:?}"))),
    })
}

pub fn synth(a: SynthArgs) -> Result<()> {
    let kind: SynthKind = a.kind.parse()?;
    let [c, h, w] = a.shape[..] else {
        bail!(svdrnd::Error::invalid("--shape takes C,H,W"));
    };
    let (data, mut manifest) = synth_generate(kind, a.n, Shape::new(c, h, w), a.seed)?;
    let out = output_path(&a.out, None);
    let file_name = out
        .file_name()
        .ok_or_else(|| svdrnd::Error::invalid("--out needs a file name"))?;
    manifest.role = role(&a.role)?;
    manifest.source = DatasetSource::Container {
        path: PathBuf::from(file_name),
        labels: None,
    };
    manifest.validate()?;
    emit(&out, &dataset_to_tensor(&data, Dtype::F32)?.encode(), vec![a.seed], &[])?;
    emit(&out.with_extension("toml"), manifest.to_toml().as_bytes(), vec![a.seed], &[])
}

#[derive(Serialize)]
struct SweepEntry {
    k: usize,
    score: f64,
}

#[derive(Serialize)]
struct SweepReport {
    metric: SelectionMetric,
    chosen_k: usize,
    candidates: Vec<SweepEntry>,
}

pub fn sweep_k(a: SweepKArgs) -> Result<()> {
    let cfg = ExperimentConfig::read(&a.config)?;
    if a.grid.is_empty() {
        bail!(svdrnd::Error::invalid("--grid is empty"));
    }
    let test_in = cfg
        .data
        .test_in
        .as_ref()
        .ok_or_else(|| svdrnd::Error::invalid("sweep-k needs data.test_in"))?;
    let test_in = cfg.load(test_in)?;
    let val: Vec<Dataset> = if cfg.data.val_ood.is_empty() {
        cfg.data
            .test_ood
            .iter()
            .map(|p| Ok(cfg.load(p)?.take(VAL_OOD_LIMIT)))
            .collect::<Result<_>>()?
    } else {
        cfg.data.val_ood.iter().map(|p| cfg.load(p)).collect::<Result<_>>()?
    };
    if val.is_empty() {
        bail!(svdrnd::Error::invalid("sweep-k needs data.val_ood or data.test_ood"));
    }
    let train_set = cfg.load(&cfg.data.train)?;
    let mut grid = a.grid.clone();
    grid.sort_unstable();
    grid.dedup();

    let mut candidates = Vec::with_capacity(grid.len());
    for &k in &grid {
        let mut tc = cfg.train.clone();
        tc.b_train = 1;
        tc.specs = vec![DegradationSpec {
            degradation: Degradation::SvdBlur { k },
            off_grid: a.off_grid,
        }];
        let model = train_logged(&train_set, &tc, &mut Vec::new()).with_context(|| format!("training K = {k}"))?;
        let s_in: Vec<f64> = score_dataset(&model, &test_in, Scorer::Rnd)?.iter().map(|r| r.score).collect();
        let mut total = 0.0;
        for v in &val {
            let s_ood: Vec<f64> = score_dataset(&model, v, Scorer::Rnd)?.iter().map(|r| r.score).collect();
            total += evaluate(&s_in, &s_ood)?.metric(cfg.selection_metric);
        }
        let score = total / val.len() as f64;
        eprintln!("K = {k}: {score:.4}");
        candidates.push(SweepEntry { k, score });
    }
    let best = candidates
        .iter()
        .fold(None::<&SweepEntry>, |best, c| match best {
            Some(b) if b.score >= c.score => Some(b),
            _ => Some(c),
        })
        .expect("grid is non-empty");
    let r = SweepReport {
        metric: cfg.selection_metric,
        chosen_k: best.k,
        candidates,
    };
    let text = to_toml(&r);
    print!("{text}");
    if let Some(out) = &a.out {
        let hash = sha256_hex(format!("{}\0grid={grid:?}", cfg.text).as_bytes());
        let dir = cfg.output_dir();
        write_output(&output_path(out, dir.as_deref()), text.as_bytes(), &invocation(), hash, vec![cfg.train.seed], &[&a.config])?;
    }
    Ok(())
}
