use std::time::Instant;

use rand::seq::index::sample as sample_indices;
use serde::{Deserialize, Serialize};

use super::metrics::{auprc, auroc, mean_std, minority_f1};
use crate::datasets::{halve, DatasetBundle, LabeledSeries};
use crate::diffusion::{generate_dataset, GuidanceSpec, NoiseSchedule, SamplerTrace};
use crate::error::{Error, Result};
use crate::influence::{class_conditional_cache, ClassFilter, InfluenceGuide};
use crate::nets::{train_classifier, Checkpoint, Classifier, ClassifierConfig, Denoiser, TrainSettings};
use crate::seeding;

/// Downstream classifier used by every protocol.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalConfig {
    pub classifier: ClassifierConfig,
    pub settings: TrainSettings,
    /// Decision threshold on the positive-class probability for F1.
    pub threshold: f64,
}

impl EvalConfig {
    pub fn new(classifier: ClassifierConfig, settings: TrainSettings) -> Self {
        Self {
            classifier,
            settings,
            threshold: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub protocol: String,
    pub seed: u64,
    pub auroc: f64,
    pub auprc: f64,
    pub minority_f1: f64,
    pub threshold: f64,
    /// Evaluation-set size per class.
    pub supports: Vec<usize>,
    pub alpha: Option<f64>,
    pub train_size: usize,
    pub synthetic_used: usize,
    pub train_digest: String,
    pub test_digest: String,
}

/// Order-sensitive content digest of a sample list.
pub fn samples_digest(samples: &[LabeledSeries]) -> String {
    let mut bytes = Vec::with_capacity(samples.len() * (8 * samples.first().map_or(0, |s| s.x.len()) + 8));
    for s in samples {
        bytes.extend(s.x.data().iter().flat_map(|v| v.to_le_bytes()));
        bytes.extend_from_slice(&(s.y as u64).to_le_bytes());
    }
    crate::digest::sha256_hex(&bytes)
}

/// Scores of a trained classifier on `test`: (auroc, auprc, minority F1, supports).
pub fn score_classifier(clf: &Classifier, test: &[LabeledSeries], threshold: f64) -> Result<(f64, f64, f64, Vec<usize>)> {
    let scores: Vec<f64> = test.iter().map(|s| clf.positive_score(&s.x)).collect::<Result<_>>()?;
    let labels: Vec<usize> = test.iter().map(|s| s.y).collect();
    Ok((
        auroc(&scores, &labels)?,
        auprc(&scores, &labels)?,
        minority_f1(&scores, &labels, threshold)?,
        DatasetBundle::class_counts(test, clf.config.num_classes),
    ))
}

fn train_and_score(
    protocol: &str,
    train: &[LabeledSeries],
    test: &[LabeledSeries],
    cfg: &EvalConfig,
    seed: u64,
    alpha: Option<f64>,
    synthetic_used: usize,
) -> Result<MetricsReport> {
    let trained = train_classifier(train, &cfg.classifier, cfg.settings, seed)?;
    let (auroc, auprc, minority_f1, supports) = score_classifier(&trained.classifier, test, cfg.threshold)?;
    Ok(MetricsReport {
        protocol: protocol.to_string(),
        seed,
        auroc,
        auprc,
        minority_f1,
        threshold: cfg.threshold,
        supports,
        alpha,
        train_size: train.len(),
        synthetic_used,
        train_digest: samples_digest(train),
        test_digest: samples_digest(test),
    })
}

/// Real-data baseline: train on real train, test on real test.
pub fn trtr(real_train: &[LabeledSeries], test: &[LabeledSeries], cfg: &EvalConfig, seed: u64) -> Result<MetricsReport> {
    train_and_score("TRTR", real_train, test, cfg, seed, None, 0)
}

/// Train on synthetic data only, test on real data.
pub fn tstr(synthetic: &[LabeledSeries], test: &[LabeledSeries], cfg: &EvalConfig, seed: u64) -> Result<MetricsReport> {
    let mut seen = vec![false; cfg.classifier.num_classes];
    for s in synthetic {
        if let Some(v) = seen.get_mut(s.y) {
            *v = true;
        }
    }
    if !seen.iter().all(|&b| b) {
        return Err(Error::InvalidArgument("synthetic set must contain every class".into()));
    }
    train_and_score("TSTR", synthetic, test, cfg, seed, None, synthetic.len())
}

/// Train on real train plus `round(α·|real|)` synthetic samples drawn
/// without replacement, test on real test.
pub fn tsrtr(
    real_train: &[LabeledSeries],
    synthetic: &[LabeledSeries],
    alpha: f64,
    test: &[LabeledSeries],
    cfg: &EvalConfig,
    seed: u64,
) -> Result<MetricsReport> {
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidArgument(format!("mixing ratio must be non-negative, got {alpha}")));
    }
    let count = (alpha * real_train.len() as f64).round() as usize;
    if count > synthetic.len() {
        return Err(Error::InvalidArgument(format!(
            "mixing ratio {alpha} needs {count} synthetic samples, only {} available",
            synthetic.len()
        )));
    }
    let mut rng = seeding::rng(seeding::derive(seed, "tsrtr-mix"));
    let mut picked = sample_indices(&mut rng, synthetic.len(), count).into_vec();
    picked.sort_unstable();
    let mut train: Vec<LabeledSeries> = real_train.to_vec();
    train.extend(picked.into_iter().map(|i| synthetic[i].clone()));
    train_and_score("TSRTR", &train, test, cfg, seed, Some(alpha), count)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassGradNorms {
    pub class: usize,
    pub count: usize,
    pub mean: f64,
    pub std: f64,
}

/// Per-class mean and standard deviation of `‖∇_φ ℓ(x, y; φ)‖₂`.
pub fn gradient_norm_analysis(clf: &Classifier, samples: &[LabeledSeries]) -> Result<Vec<ClassGradNorms>> {
    let mut norms = vec![Vec::new(); clf.config.num_classes];
    for s in samples {
        let g = clf.param_grad(&s.x, s.y)?;
        norms[s.y].push(g.iter().map(|v| v * v).sum::<f64>().sqrt());
    }
    Ok(norms
        .into_iter()
        .enumerate()
        .map(|(class, v)| {
            let (mean, std) = if v.is_empty() { (f64::NAN, f64::NAN) } else { mean_std(&v) };
            ClassGradNorms {
                class,
                count: v.len(),
                mean,
                std,
            }
        })
        .collect())
}

/// `|held-out accuracy − 0.5|` of a real-vs-synthetic classifier trained on
/// half of an equal-sized mix of both sets.
pub fn discriminative_score(real: &[LabeledSeries], synthetic: &[LabeledSeries], cfg: &EvalConfig, seed: u64) -> Result<f64> {
    let n = real.len().min(synthetic.len());
    if n < 2 {
        return Err(Error::InvalidArgument("discriminative score needs two samples of each set".into()));
    }
    let mut rng = seeding::rng(seeding::derive(seed, "ds-split"));
    let mut pick = |set: &[LabeledSeries], label: usize| -> Vec<LabeledSeries> {
        sample_indices(&mut rng, set.len(), n)
            .into_iter()
            .map(|i| LabeledSeries {
                id: i as u64,
                x: set[i].x.clone(),
                y: label,
            })
            .collect()
    };
    let r = pick(real, 1);
    let s = pick(synthetic, 0);
    let half = n / 2;
    let train: Vec<LabeledSeries> = r[..half].iter().chain(&s[..half]).cloned().collect();
    let test: Vec<LabeledSeries> = r[half..].iter().chain(&s[half..]).cloned().collect();
    let config = ClassifierConfig {
        num_classes: 2,
        ..cfg.classifier.clone()
    };
    let clf = train_classifier(&train, &config, cfg.settings, seed)?.classifier;
    let mut correct = 0usize;
    for t in &test {
        let pred = usize::from(clf.positive_score(&t.x)? >= 0.5);
        correct += usize::from(pred == t.y);
    }
    Ok((correct as f64 / test.len() as f64 - 0.5).abs())
}

/// Per-channel autocorrelation at lags `1..=max_lag`, averaged over series.
fn mean_acf(set: &[LabeledSeries], max_lag: usize) -> Vec<Vec<f64>> {
    let (len, channels) = (set[0].x.shape()[0], set[0].x.shape()[1]);
    let mut acc = vec![vec![0.0; max_lag]; channels];
    for s in set {
        let d = s.x.data();
        for (c, row) in acc.iter_mut().enumerate() {
            let col: Vec<f64> = (0..len).map(|t| d[t * channels + c]).collect();
            let m = col.iter().sum::<f64>() / len as f64;
            let var: f64 = col.iter().map(|v| (v - m).powi(2)).sum();
            if var <= 0.0 {
                continue;
            }
            for (k, slot) in row.iter_mut().enumerate() {
                let lag = k + 1;
                let cov: f64 = (0..len - lag).map(|t| (col[t] - m) * (col[t + lag] - m)).sum();
                *slot += cov / var;
            }
        }
    }
    let n = set.len() as f64;
    acc.iter_mut().for_each(|r| r.iter_mut().for_each(|v| *v /= n));
    acc
}

/// Mean absolute difference between the average autocorrelation functions
/// of two sets of `[L, D]` series.
pub fn autocorrelation_similarity(real: &[LabeledSeries], synthetic: &[LabeledSeries], max_lag: usize) -> Result<f64> {
    let (first, other) = match (real.first(), synthetic.first()) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(Error::InvalidArgument("autocorrelation needs non-empty sets".into())),
    };
    if first.x.shape().len() != 2 || first.x.shape() != other.x.shape() {
        return Err(Error::InvalidArgument("sets must share an [L, D] shape".into()));
    }
    if max_lag == 0 || max_lag >= first.x.shape()[0] {
        return Err(Error::InvalidArgument(format!(
            "max lag must lie in 1..{}, got {max_lag}",
            first.x.shape()[0]
        )));
    }
    let a = mean_acf(real, max_lag);
    let b = mean_acf(synthetic, max_lag);
    let diffs: Vec<f64> = a.iter().flatten().zip(b.iter().flatten()).map(|(p, q)| (p - q).abs()).collect();
    Ok(diffs.iter().sum::<f64>() / diffs.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RuntimeReport {
    pub cache_build_seconds: f64,
    pub guided_step_seconds: f64,
    pub unguided_step_seconds: f64,
    pub overhead_ratio: f64,
}

fn mean_step(traces: &[SamplerTrace]) -> f64 {
    let (total, count) = traces.iter().flat_map(|t| &t.records).fold((0.0, 0usize), |(s, n), r| (s + r.seconds, n + 1));
    if count == 0 {
        0.0
    } else {
        total / count as f64
    }
}

pub fn runtime_report(cache_build_seconds: f64, guided: &[SamplerTrace], unguided: &[SamplerTrace]) -> RuntimeReport {
    let g = mean_step(guided);
    let u = mean_step(unguided);
    RuntimeReport {
        cache_build_seconds: cache_build_seconds.max(0.0),
        guided_step_seconds: g,
        unguided_step_seconds: u,
        overhead_ratio: if u > 0.0 { g / u } else { f64::NAN },
    }
}

/// Everything a guided-generation protocol needs besides the guidance itself.
#[derive(Clone, Debug)]
pub struct GenerationSetup<'a> {
    pub denoiser: &'a Denoiser,
    pub schedule: &'a NoiseSchedule,
    /// Samples to generate per class.
    pub class_counts: Vec<usize>,
    /// `|w|` at or above which the guidance gradient is clipped.
    pub clip_from: f64,
    pub clip: f64,
    pub step_range: Option<(usize, usize)>,
}

impl GenerationSetup<'_> {
    pub fn spec<'g>(&self, guide: &'g InfluenceGuide, w: f64) -> GuidanceSpec<'g> {
        let clip = (w.abs() >= self.clip_from).then_some(self.clip);
        GuidanceSpec::influence(guide, w)
            .with_clip(clip)
            .with_step_range(self.step_range)
    }

    pub fn generate(&self, spec: &GuidanceSpec, seed: u64) -> Result<(Vec<LabeledSeries>, Vec<SamplerTrace>)> {
        let (bundle, traces) = generate_dataset(self.denoiser, &self.class_counts, self.schedule, spec, seed)?;
        Ok((bundle.samples, traces))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub w: f64,
    pub mean_influence: f64,
    pub auroc: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub points: Vec<SweepPoint>,
    pub guidance_ids: Vec<u64>,
    pub evaluation_ids: Vec<u64>,
}

impl SweepResult {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("w,mean_influence,auroc,seed\n");
        for p in &self.points {
            out.push_str(&format!("{:?},{:?},{:?},{}\n", p.w, p.mean_influence, p.auroc, p.seed));
        }
        out
    }
}

/// Guidance-scale sweep. The validation set is halved into guidance-val
/// (builds the cache) and evaluation-val (scores the augmented classifier).
/// Every `w` reuses the same sampling seed.
pub fn guidance_sweep(
    ws: &[f64],
    setup: &GenerationSetup,
    phi: &Checkpoint,
    real_train: &[LabeledSeries],
    val: &[LabeledSeries],
    cfg: &EvalConfig,
    seed: u64,
) -> Result<SweepResult> {
    let mut sorted = ws.to_vec();
    sorted.sort_by(f64::total_cmp);
    if sorted.windows(2).any(|p| p[0] == p[1]) || sorted.iter().any(|w| !w.is_finite()) {
        return Err(Error::InvalidArgument("sweep scales must be distinct finite numbers".into()));
    }
    let (guide_val, eval_val) = halve(val, seeding::derive(seed, "sweep-halves"))?;
    let cache = class_conditional_cache(phi, &guide_val, ClassFilter::All)?;
    let guide = InfluenceGuide::new(phi, cache)?;
    let mut points = Vec::with_capacity(ws.len());
    for &w in ws {
        let spec = setup.spec(&guide, w);
        let (batch, _) = setup.generate(&spec, seed)?;
        let mean_influence = guide.mean_influence(&batch)?;
        let mut train = real_train.to_vec();
        train.extend(batch);
        let trained = train_classifier(&train, &cfg.classifier, cfg.settings, seed)?;
        let (auroc, ..) = score_classifier(&trained.classifier, &eval_val, cfg.threshold)?;
        points.push(SweepPoint {
            w,
            mean_influence,
            auroc,
            seed,
        });
    }
    Ok(SweepResult {
        points,
        guidance_ids: guide_val.iter().map(|s| s.id).collect(),
        evaluation_ids: eval_val.iter().map(|s| s.id).collect(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassGuidanceResult {
    pub filter: String,
    pub cache_norm: f64,
    pub report: MetricsReport,
}

/// Generate with caches built from all, majority-only and minority-only
/// guidance samples; each batch augments real train (TSRTR-style) and is
/// scored on `test`.
#[allow(clippy::too_many_arguments)]
pub fn class_specific_guidance(
    w: f64,
    setup: &GenerationSetup,
    phi: &Checkpoint,
    real_train: &[LabeledSeries],
    guidance: &[LabeledSeries],
    test: &[LabeledSeries],
    cfg: &EvalConfig,
    seed: u64,
) -> Result<Vec<ClassGuidanceResult>> {
    let mut out = Vec::with_capacity(3);
    for filter in [ClassFilter::All, ClassFilter::MajorityOnly, ClassFilter::MinorityOnly] {
        let cache = class_conditional_cache(phi, guidance, filter)?;
        let cache_norm = cache.norm();
        let guide = InfluenceGuide::new(phi, cache)?;
        let (batch, _) = setup.generate(&setup.spec(&guide, w), seed)?;
        let alpha = batch.len() as f64 / real_train.len() as f64;
        let mut report = tsrtr(real_train, &batch, alpha, test, cfg, seed)?;
        report.protocol = format!("TSRTR/{}", filter.name());
        out.push(ClassGuidanceResult {
            filter: filter.name().to_string(),
            cache_norm,
            report,
        });
    }
    Ok(out)
}

/// Seconds taken to build a gradient cache over `guidance`.
pub fn time_cache_build(phi: &Checkpoint, guidance: &[LabeledSeries]) -> Result<f64> {
    let start = Instant::now();
    class_conditional_cache(phi, guidance, ClassFilter::All)?;
    Ok(start.elapsed().as_secs_f64())
}
