//! Influence of a candidate sample on the downstream task.
//!
//! With `φ*` the trained classifier and `G` the mean parameter gradient of
//! the task loss over a guidance set, the first-order influence of
//! `ẑ = (x, y)` is `G · ∇_φ ℓ(x, y; φ*)`. Positive influence means a
//! gradient-descent step on `ẑ` lowers the guidance-set loss to first
//! order. Its gradient with respect to `x` is the guidance direction added
//! to each reverse-diffusion mean.

mod cache;

use rayon::prelude::*;

use crate::datasets::LabeledSeries;
use crate::error::{Error, Result};
use crate::gradcore::{GradError, Graph, ParamVector, Tensor, Var};
use crate::nets::{param_leaves, Checkpoint, Classifier};

pub use cache::{build_cache, class_conditional_cache, ClassFilter, GradientCache, CACHE_VERSION};

/// A classifier paired with a gradient cache built from it.
#[derive(Clone, Debug)]
pub struct InfluenceGuide {
    pub classifier: Classifier,
    pub phi_hash: String,
    pub cache: GradientCache,
}

#[derive(Clone, Debug, PartialEq)]
pub struct InfluenceReport {
    pub estimate: f64,
    pub oracle: Option<f64>,
    pub candidate_digest: String,
}

impl InfluenceGuide {
    /// Fails unless the cache was built from exactly this checkpoint.
    pub fn new(phi: &Checkpoint, cache: GradientCache) -> Result<Self> {
        let classifier = Classifier::from_checkpoint(phi)?;
        let phi_hash = phi.digest();
        if cache.phi_hash != phi_hash {
            return Err(Error::ArchMismatch {
                expected: format!("cache built from classifier {phi_hash}"),
                found: format!("cache built from classifier {}", cache.phi_hash),
            });
        }
        Self::from_parts(classifier, phi_hash, cache)
    }

    pub fn from_parts(classifier: Classifier, phi_hash: String, cache: GradientCache) -> Result<Self> {
        if cache.arch_id != classifier.params.arch_id || cache.g.len() != classifier.params.len() {
            return Err(Error::ArchMismatch {
                expected: format!("{} ({} parameters)", classifier.params.arch_id, classifier.params.len()),
                found: format!("{} ({} parameters)", cache.arch_id, cache.g.len()),
            });
        }
        Ok(Self {
            classifier,
            phi_hash,
            cache,
        })
    }

    /// `ΔL(ẑ) = G · ∇_φ ℓ(x, y; φ*)`.
    pub fn influence(&self, x: &Tensor, y: usize) -> Result<f64> {
        let grad = self.classifier.param_grad(x, y)?;
        Ok(dot(&self.cache.g, &grad))
    }

    /// `J = ∇_x [G · ∇_φ ℓ(x, y; φ*)]`, obtained by differentiating the
    /// parameter-gradient graph a second time. Also returns the influence.
    pub fn influence_gradient(&self, x: &Tensor, y: usize) -> Result<(f64, Tensor)> {
        self.classifier.gradient_alignment(x, y, &self.cache.g)
    }

    /// [`influence_gradient`](Self::influence_gradient) computed by building
    /// the parameter-gradient graph and differentiating it again.
    pub fn influence_gradient_graph(&self, x: &Tensor, y: usize) -> Result<(f64, Tensor)> {
        let clf = &self.classifier;
        clf.check_input(x)?;
        let flat = x.reshaped(&[1, clf.config.input_dim()])?;
        let (value, j) = mixed_gradient(&clf.params, &self.cache.g, &flat, |g, params, xv| {
            clf.loss_graph(g, params, xv, &[y])
        })?;
        Ok((value, j.reshaped(x.shape())?))
    }

    /// Mean influence over a batch of samples.
    pub fn mean_influence(&self, samples: &[LabeledSeries]) -> Result<f64> {
        let vals: Vec<f64> = samples
            .par_iter()
            .map(|s| self.influence(&s.x, s.y))
            .collect::<Result<_>>()?;
        Ok(vals.iter().sum::<f64>() / vals.len().max(1) as f64)
    }

    pub fn report(&self, x: &Tensor, y: usize, oracle: Option<f64>) -> Result<InfluenceReport> {
        let mut bytes: Vec<u8> = x.data().iter().flat_map(|v| v.to_le_bytes()).collect();
        bytes.extend_from_slice(&(y as u64).to_le_bytes());
        Ok(InfluenceReport {
            estimate: self.influence(x, y)?,
            oracle,
            candidate_digest: crate::digest::sha256_hex(&bytes),
        })
    }
}

/// `v · ∇_φ f(φ, x)` and its gradient with respect to `x`, by building the
/// parameter gradient as a graph and differentiating through it.
pub fn mixed_gradient(
    params: &ParamVector,
    v: &[f64],
    x: &Tensor,
    f: impl Fn(&mut Graph, &[Var], Var) -> Result<Var>,
) -> Result<(f64, Tensor)> {
    if v.len() != params.len() {
        return Err(Error::ArchMismatch {
            expected: format!("{} parameters", params.len()),
            found: format!("{} entries", v.len()),
        });
    }
    let mut g = Graph::new();
    let leaves = param_leaves(&mut g, params, true);
    let xv = g.input(x.clone());
    let loss = f(&mut g, &leaves, xv)?;
    let grads = g.grad_graph(loss, &leaves)?;
    let mut total = None;
    for (grad, piece) in grads.into_iter().zip(params.unflatten(v)?) {
        let c = g.constant(piece);
        let prod = g.mul(grad, c)?;
        let s = g.sum(prod)?;
        total = Some(match total {
            None => s,
            Some(acc) => g.add(acc, s)?,
        });
    }
    let total = total.ok_or_else(|| Error::InvalidArgument("model has no parameters".into()))?;
    let value = g.value(total).item();
    let j = g.grad(total, &[xv])?.remove(0);
    if !j.is_finite() {
        return Err(GradError::NonFinite { op: "mixed_gradient" }.into());
    }
    Ok((value, j))
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p * q).sum()
}

/// Brute-force counterpart of the influence estimate: take `steps` plain
/// gradient-descent steps on `ℓ(ẑ)` from `φ*` and report the drop in summed
/// guidance-set loss, `Σ_guide [ℓ(φ*) − ℓ(φ_updated)]`.
pub fn retraining_oracle(
    candidate: (&Tensor, usize),
    phi: &Classifier,
    guidance: &[LabeledSeries],
    lr: f64,
    steps: usize,
) -> Result<f64> {
    if !(lr >= 0.0) || steps == 0 {
        return Err(Error::InvalidArgument(format!(
            "oracle needs lr >= 0 and steps >= 1, got lr={lr}, steps={steps}"
        )));
    }
    if guidance.is_empty() {
        return Err(Error::InvalidArgument("empty guidance set".into()));
    }
    let (x, y) = candidate;
    let mut updated = phi.clone();
    if lr > 0.0 {
        for _ in 0..steps {
            let grad = updated.param_grad(x, y)?;
            for (p, g) in updated.params.values.iter_mut().zip(&grad) {
                *p -= lr * g;
            }
        }
    }
    let mut delta = 0.0;
    for s in guidance {
        delta += phi.task_loss(&s.x, s.y)? - updated.task_loss(&s.x, s.y)?;
    }
    Ok(delta)
}
