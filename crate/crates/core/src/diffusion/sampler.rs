use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datasets::{DatasetBundle, LabeledSeries, Provenance};
use crate::error::{Error, Result};
use crate::gradcore::{GradError, Graph, Tensor};
use crate::influence::InfluenceGuide;
use crate::nets::{Classifier, Denoiser};
use crate::seeding::{self, Rng};

use super::NoiseSchedule;

/// Source of the term added to the reverse-step mean.
#[derive(Clone, Copy, Debug)]
pub enum Guidance<'a> {
    None,
    /// `∇_x log p(y | x)` of a classifier.
    Classifier(&'a Classifier),
    /// `∇_x [G · ∇_φ ℓ(x, y; φ*)]`.
    Influence(&'a InfluenceGuide),
}

#[derive(Clone, Copy, Debug)]
pub struct GuidanceSpec<'a> {
    pub guidance: Guidance<'a>,
    pub scale: f64,
    /// Rescale the guidance gradient to at most this L2 norm.
    pub grad_clip: Option<f64>,
    /// Inclusive `(lo, hi)` steps at which guidance is applied.
    pub step_range: Option<(usize, usize)>,
}

impl<'a> GuidanceSpec<'a> {
    pub fn none() -> Self {
        Self {
            guidance: Guidance::None,
            scale: 0.0,
            grad_clip: None,
            step_range: None,
        }
    }

    pub fn classifier(model: &'a Classifier, scale: f64) -> Self {
        Self {
            guidance: Guidance::Classifier(model),
            scale,
            ..Self::none()
        }
    }

    pub fn influence(guide: &'a InfluenceGuide, scale: f64) -> Self {
        Self {
            guidance: Guidance::Influence(guide),
            scale,
            ..Self::none()
        }
    }

    pub fn with_clip(mut self, clip: Option<f64>) -> Self {
        self.grad_clip = clip;
        self
    }

    pub fn with_step_range(mut self, range: Option<(usize, usize)>) -> Self {
        self.step_range = range;
        self
    }

    pub fn mode_name(&self) -> &'static str {
        match self.guidance {
            Guidance::None => "none",
            Guidance::Classifier(_) => "classifier",
            Guidance::Influence(_) => "influence",
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.scale.is_finite() {
            return Err(Error::InvalidArgument(format!("guidance scale {} is not finite", self.scale)));
        }
        if let Some(c) = self.grad_clip {
            if !(c >= 0.0 && c.is_finite()) {
                return Err(Error::InvalidArgument(format!("grad_clip must be a non-negative number, got {c}")));
            }
        }
        if let Some((lo, hi)) = self.step_range {
            if lo == 0 || lo > hi {
                return Err(Error::InvalidArgument(format!("invalid guidance step range {lo}..={hi}")));
            }
        }
        Ok(())
    }

    fn active_at(&self, t: usize) -> bool {
        !matches!(self.guidance, Guidance::None)
            && self.scale != 0.0
            && self.step_range.is_none_or(|(lo, hi)| (lo..=hi).contains(&t))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: usize,
    /// ‖μ_θ(x_t, y, t)‖ before guidance.
    pub mean_norm: f64,
    /// ‖w · J‖ actually added to the mean.
    pub guidance_norm: f64,
    pub seconds: f64,
    pub clipped: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SamplerTrace {
    pub records: Vec<StepRecord>,
    pub warnings: Vec<String>,
}

impl SamplerTrace {
    pub fn mean_step_seconds(&self) -> f64 {
        if self.records.is_empty() {
            return 0.0;
        }
        self.records.iter().map(|r| r.seconds).sum::<f64>() / self.records.len() as f64
    }
}

#[derive(Clone, Debug)]
pub struct GeneratedSample {
    pub x: Tensor,
    pub y: usize,
    pub trace: SamplerTrace,
}

fn classifier_direction(model: &Classifier, x: &Tensor, y: usize) -> Result<Tensor> {
    model.check_input(x)?;
    let mut g = Graph::new();
    let params = crate::nets::param_leaves(&mut g, &model.params, false);
    let xv = g.input(x.reshaped(&[1, model.config.input_dim()])?);
    let loss = model.loss_graph(&mut g, &params, xv, &[y])?;
    let grad = g.grad(loss, &[xv])?.remove(0);
    // log p(y|x) = -loss
    Ok(grad.map(|v| -v).reshaped(x.shape())?)
}

/// One ancestral step `x_t → x_{t−1}` with optional guidance on the mean.
pub fn p_sample_step(
    model: &Denoiser,
    x_t: &Tensor,
    y: usize,
    t: usize,
    schedule: &NoiseSchedule,
    spec: &GuidanceSpec,
    rng: &mut Rng,
) -> Result<(Tensor, StepRecord)> {
    schedule.check(t)?;
    let start = Instant::now();
    let eps = model.predict_noise(x_t, y, t)?;
    let (beta, alpha, ab) = (schedule.beta(t), schedule.alpha(t), schedule.alpha_bar(t));
    let coef = beta / (1.0 - ab).sqrt();
    let inv = 1.0 / alpha.sqrt();
    let mut mean: Vec<f64> = x_t.data().iter().zip(eps.data()).map(|(x, e)| inv * (x - coef * e)).collect();
    let mean_norm = mean.iter().map(|v| v * v).sum::<f64>().sqrt();

    let mut guidance_norm = 0.0;
    let mut clipped = false;
    if spec.active_at(t) {
        let direction = match spec.guidance {
            Guidance::Classifier(c) => classifier_direction(c, x_t, y),
            Guidance::Influence(guide) => guide.influence_gradient(x_t, y).map(|(_, j)| j),
            Guidance::None => unreachable!("inactive"),
        };
        let mut j = match direction {
            Err(Error::Grad(GradError::NonFinite { .. })) => return Err(Error::NonFiniteGuidance { step: t }),
            other => other?,
        };
        let norm = j.norm();
        if let Some(clip) = spec.grad_clip {
            if norm > clip {
                let k = clip / norm;
                j = j.map(|v| v * k);
                clipped = true;
            }
        }
        let w = spec.scale;
        if mean.iter().zip(j.data()).any(|(m, d)| !(m + w * d).is_finite()) {
            return Err(Error::NonFiniteGuidance { step: t });
        }
        for (m, d) in mean.iter_mut().zip(j.data()) {
            *m += w * d;
        }
        guidance_norm = w.abs() * j.norm();
    }

    if t > 1 {
        let sigma = schedule.posterior_variance(t).sqrt();
        let z = seeding::normal_vec(rng, mean.len());
        for (m, z) in mean.iter_mut().zip(z) {
            *m += sigma * z;
        }
    }
    let next = Tensor::new(x_t.shape().to_vec(), mean)?;
    let record = StepRecord {
        t,
        mean_norm,
        guidance_norm,
        seconds: start.elapsed().as_secs_f64(),
        clipped,
    };
    Ok((next, record))
}

fn run_chain(
    model: &Denoiser,
    y: usize,
    schedule: &NoiseSchedule,
    spec: &GuidanceSpec,
    mut rng: Rng,
) -> Result<GeneratedSample> {
    let c = &model.config;
    let mut x = Tensor::new(vec![c.series_len, c.channels], seeding::normal_vec(&mut rng, c.input_dim()))?;
    let mut trace = SamplerTrace::default();
    for t in (1..=schedule.steps()).rev() {
        let (next, record) = p_sample_step(model, &x, y, t, schedule, spec, &mut rng)?;
        if record.clipped {
            trace.warnings.push(format!("guidance gradient clipped at step {t}"));
        }
        trace.records.push(record);
        x = next;
    }
    Ok(GeneratedSample { x, y, trace })
}

/// `count` samples of class `y`; sample `i` draws from stream `(seed, i)`.
pub fn sample(
    model: &Denoiser,
    y: usize,
    count: usize,
    schedule: &NoiseSchedule,
    spec: &GuidanceSpec,
    seed: u64,
) -> Result<Vec<GeneratedSample>> {
    if count == 0 {
        return Err(Error::InvalidArgument("sample count must be at least 1".into()));
    }
    sample_labels(model, &vec![y; count], schedule, spec, seed, 0)
}

/// One sample per entry of `labels`; entry `k` uses stream `(seed, first_index + k)`,
/// so any partition of a run into calls reproduces the same samples.
pub fn sample_labels(
    model: &Denoiser,
    labels: &[usize],
    schedule: &NoiseSchedule,
    spec: &GuidanceSpec,
    seed: u64,
    first_index: u64,
) -> Result<Vec<GeneratedSample>> {
    spec.validate()?;
    if let Some(&y) = labels.iter().find(|&&y| y >= model.config.num_classes) {
        return Err(Error::InvalidArgument(format!("label {y} out of range")));
    }
    labels
        .par_iter()
        .enumerate()
        .map(|(k, &y)| run_chain(model, y, schedule, spec, seeding::stream(seed, first_index + k as u64)))
        .collect()
}

/// Reproducibility record written next to a generated dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationManifest {
    pub theta_hash: String,
    pub phi_hash: Option<String>,
    pub cache_hash: Option<String>,
    pub mode: String,
    pub scale: f64,
    pub grad_clip: Option<f64>,
    pub step_range: Option<(usize, usize)>,
    pub schedule: String,
    pub seed: u64,
    pub class_counts: Vec<usize>,
}

/// Generate `class_counts[c]` samples of every class `c` as a dataset.
pub fn generate_dataset(
    model: &Denoiser,
    class_counts: &[usize],
    schedule: &NoiseSchedule,
    spec: &GuidanceSpec,
    seed: u64,
) -> Result<(DatasetBundle, Vec<SamplerTrace>)> {
    if class_counts.len() != model.config.num_classes {
        return Err(Error::InvalidArgument(format!(
            "{} class counts for a {}-class denoiser",
            class_counts.len(),
            model.config.num_classes
        )));
    }
    let labels: Vec<usize> = class_counts
        .iter()
        .enumerate()
        .flat_map(|(c, &n)| std::iter::repeat_n(c, n))
        .collect();
    if labels.is_empty() {
        return Err(Error::InvalidArgument("nothing to generate".into()));
    }
    let out = sample_labels(model, &labels, schedule, spec, seed, 0)?;
    let mut traces = Vec::with_capacity(out.len());
    let samples = out
        .into_iter()
        .enumerate()
        .map(|(i, s)| {
            traces.push(s.trace);
            LabeledSeries {
                id: i as u64,
                x: s.x,
                y: s.y,
            }
        })
        .collect();
    let description = format!(
        "diffusion samples: mode={} w={:?} {} seed={seed}",
        spec.mode_name(),
        spec.scale,
        schedule.describe()
    );
    let bundle = DatasetBundle::from_samples(samples, model.config.num_classes, Provenance::Derived { description })?;
    Ok((bundle, traces))
}
