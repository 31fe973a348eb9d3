//! The two networks of the pipeline: a label- and time-conditioned noise
//! predictor, and the downstream classifier whose loss drives guidance.
//!
//! Both are MLPs over the flattened `L·D` series.

mod checkpoint;
mod classifier;
mod denoiser;
mod optim;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::gradcore::{GradError, Graph, ParamVector, Tensor, Var};
use crate::seeding;

pub use checkpoint::{ArchConfig, Checkpoint, TrainingMeta, CHECKPOINT_VERSION};
pub use classifier::{train_classifier, Classifier, ClassifierConfig, TrainedClassifier};
pub use denoiser::{time_embedding, Denoiser, DenoiserConfig};
pub use optim::{Adam, EpochBatches, TrainSettings};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "tanh" => Some(Activation::Tanh),
            "relu" => Some(Activation::Relu),
            _ => None,
        }
    }

    pub(crate) fn apply_graph(self, g: &mut Graph, v: Var) -> Result<Var, GradError> {
        match self {
            Activation::Tanh => g.tanh(v),
            Activation::Relu => g.relu(v),
        }
    }

    pub(crate) fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Tanh => v.tanh(),
            Activation::Relu => v.max(0.0),
        }
    }

    /// First and second derivative at pre-activation `z`.
    pub(crate) fn derivatives(self, z: f64) -> (f64, f64) {
        match self {
            Activation::Tanh => {
                let t = z.tanh();
                let d = 1.0 - t * t;
                (d, -2.0 * t * d)
            }
            Activation::Relu => (if z > 0.0 { 1.0 } else { 0.0 }, 0.0),
        }
    }
}

/// Load every parameter tensor as a graph leaf, in layout order.
pub fn param_leaves(g: &mut Graph, params: &ParamVector, requires_grad: bool) -> Vec<Var> {
    (0..params.layout.len())
        .map(|i| g.leaf(params.tensor(i), requires_grad))
        .collect()
}

/// `h + b` with the `[1, n]` bias broadcast over the rows of `h`.
pub(crate) fn add_bias(g: &mut Graph, h: Var, b: Var) -> Result<Var, GradError> {
    let rows = g.shape(h)[0];
    if rows == 1 {
        return g.add(h, b);
    }
    let ones = g.constant(Tensor::ones(&[rows, 1]));
    let bb = g.matmul(ones, b)?;
    g.add(h, bb)
}

/// Fan-in uniform initialization of the entries named in `random`; all
/// other entries stay zero.
pub(crate) fn init_uniform(params: &mut ParamVector, seed: u64, fan_in: impl Fn(&str) -> Option<usize>) {
    let mut rng = seeding::rng(seed);
    for idx in 0..params.layout.len() {
        let name = params.layout[idx].name.clone();
        if let Some(fan) = fan_in(&name) {
            let bound = 1.0 / (fan as f64).sqrt();
            for v in params.slice_mut(idx) {
                *v = rng.gen_range(-bound..bound);
            }
        }
    }
}

/// Row-vector affine map `x·W + b` on raw slices.
pub(crate) fn affine_row(x: &[f64], w: &[f64], b: &[f64], out_dim: usize) -> Vec<f64> {
    let mut out = crate::gradcore::matmul_raw(x, w, 1, x.len(), out_dim);
    for (o, bv) in out.iter_mut().zip(b) {
        *o += bv;
    }
    out
}

pub(crate) fn format_widths(widths: &[usize]) -> String {
    widths.iter().map(usize::to_string).collect::<Vec<_>>().join("-")
}
