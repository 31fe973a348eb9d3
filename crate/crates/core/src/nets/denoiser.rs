use super::{add_bias, affine_row, format_widths, init_uniform, Activation, ArchConfig, Checkpoint, TrainingMeta};
use crate::error::{Error, Result};
use crate::gradcore::{Graph, ParamVector, Tensor, Var};

#[derive(Clone, Debug, PartialEq)]
pub struct DenoiserConfig {
    pub series_len: usize,
    pub channels: usize,
    pub hidden: Vec<usize>,
    pub time_embed_dim: usize,
    pub num_classes: usize,
    pub activation: Activation,
}

impl Default for DenoiserConfig {
    fn default() -> Self {
        Self {
            series_len: 24,
            channels: 7,
            hidden: vec![128, 128],
            time_embed_dim: 32,
            num_classes: 2,
            activation: Activation::Relu,
        }
    }
}

impl DenoiserConfig {
    pub fn input_dim(&self) -> usize {
        self.series_len * self.channels
    }

    pub fn arch_id(&self) -> String {
        format!(
            "denoiser:L{}xD{}:h{}:te{}:c{}:{}",
            self.series_len,
            self.channels,
            format_widths(&self.hidden),
            self.time_embed_dim,
            self.num_classes,
            self.activation.name()
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.series_len == 0
            || self.channels == 0
            || self.hidden.is_empty()
            || self.hidden.contains(&0)
            || self.time_embed_dim == 0
            || !self.time_embed_dim.is_multiple_of(2)
            || self.num_classes == 0
        {
            return Err(Error::InvalidArgument(format!(
                "invalid denoiser config {self:?} (time_embed_dim must be even and positive)"
            )));
        }
        Ok(())
    }

    pub fn layout(&self) -> ParamVector {
        let h0 = self.hidden[0];
        let mut entries = vec![
            ("in.w".to_string(), vec![self.input_dim(), h0]),
            ("in.b".to_string(), vec![1, h0]),
            ("time.w".to_string(), vec![self.time_embed_dim, h0]),
            ("label.emb".to_string(), vec![self.num_classes, h0]),
        ];
        for k in 1..self.hidden.len() {
            entries.push((format!("h{k}.w"), vec![self.hidden[k - 1], self.hidden[k]]));
            entries.push((format!("h{k}.b"), vec![1, self.hidden[k]]));
        }
        let last = *self.hidden.last().expect("validated");
        entries.push(("out.w".to_string(), vec![last, self.input_dim()]));
        entries.push(("out.b".to_string(), vec![1, self.input_dim()]));
        let refs: Vec<(&str, Vec<usize>)> = entries.iter().map(|(n, s)| (n.as_str(), s.clone())).collect();
        ParamVector::zeros(self.arch_id(), &refs)
    }
}

/// Sinusoidal embedding of step `t`: pairs `(sin(t·f_i), cos(t·f_i))` with
/// geometric frequencies `f_i = 10000^{-i/(dim/2)}`.
pub fn time_embedding(t: usize, dim: usize) -> Vec<f64> {
    let half = dim / 2;
    let mut out = Vec::with_capacity(dim);
    for i in 0..half {
        let freq = (-(10000f64.ln()) * i as f64 / half as f64).exp();
        let arg = t as f64 * freq;
        out.push(arg.sin());
        out.push(arg.cos());
    }
    out
}

/// Noise predictor `ε̂_θ(x_t, y, t)`.
///
/// The first hidden layer receives `x·W + b + emb(t)·W_t + E[y]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Denoiser {
    pub config: DenoiserConfig,
    pub params: ParamVector,
}

impl Denoiser {
    /// Fan-in uniform initialization; the output layer starts at zero so the
    /// untrained model predicts zero noise.
    pub fn new(config: DenoiserConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut params = config.layout();
        let hidden = config.hidden.clone();
        let (input, te) = (config.input_dim(), config.time_embed_dim);
        init_uniform(&mut params, seed, |name| match name {
            "in.w" | "label.emb" => Some(input),
            "time.w" => Some(te),
            _ => {
                let k: usize = name.strip_prefix('h')?.strip_suffix(".w")?.parse().ok()?;
                Some(hidden[k - 1])
            }
        });
        Ok(Self { config, params })
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        match &ckpt.arch {
            ArchConfig::Denoiser(c) => {
                c.validate()?;
                if ckpt.params.arch_id != c.arch_id() || ckpt.params.len() != c.layout().len() {
                    return Err(Error::ArchMismatch {
                        expected: c.arch_id(),
                        found: ckpt.params.arch_id.clone(),
                    });
                }
                Ok(Self {
                    config: c.clone(),
                    params: ckpt.params.clone(),
                })
            }
            ArchConfig::Classifier(_) => Err(Error::ArchMismatch {
                expected: "denoiser".into(),
                found: ckpt.params.arch_id.clone(),
            }),
        }
    }

    pub fn to_checkpoint(&self, meta: TrainingMeta) -> Checkpoint {
        Checkpoint {
            arch: ArchConfig::Denoiser(self.config.clone()),
            params: self.params.clone(),
            meta,
        }
    }

    /// Batched forward pass on graph nodes: `x` is `[B, L·D]`, one step and
    /// label per row.
    pub fn forward_graph(&self, g: &mut Graph, params: &[Var], x: Var, steps: &[usize], labels: &[usize]) -> Result<Var> {
        let c = &self.config;
        let b = steps.len();
        let mut temb = Vec::with_capacity(b * c.time_embed_dim);
        for &t in steps {
            temb.extend(time_embedding(t, c.time_embed_dim));
        }
        let mut onehot = vec![0.0; b * c.num_classes];
        for (i, &y) in labels.iter().enumerate() {
            onehot[i * c.num_classes + y] = 1.0;
        }
        let temb = g.constant(Tensor::matrix(b, c.time_embed_dim, temb)?);
        let onehot = g.constant(Tensor::matrix(b, c.num_classes, onehot)?);

        let h = g.matmul(x, params[0])?;
        let h = add_bias(g, h, params[1])?;
        let ht = g.matmul(temb, params[2])?;
        let hy = g.matmul(onehot, params[3])?;
        let h = g.add(h, ht)?;
        let h = g.add(h, hy)?;
        let mut h = c.activation.apply_graph(g, h)?;
        let mut p = 4;
        for _ in 1..c.hidden.len() {
            let z = g.matmul(h, params[p])?;
            let z = add_bias(g, z, params[p + 1])?;
            h = c.activation.apply_graph(g, z)?;
            p += 2;
        }
        let out = g.matmul(h, params[p])?;
        Ok(add_bias(g, out, params[p + 1])?)
    }

    fn check(&self, x: &Tensor, y: usize, t: usize) -> Result<()> {
        let c = &self.config;
        if x.shape() != [c.series_len, c.channels] {
            return Err(Error::InvalidArgument(format!(
                "denoiser expects [{}, {}] input, got {:?}",
                c.series_len,
                c.channels,
                x.shape()
            )));
        }
        if y >= c.num_classes {
            return Err(Error::InvalidArgument(format!("label {y} out of range")));
        }
        if t == 0 {
            return Err(Error::InvalidArgument("diffusion steps are 1-based".into()));
        }
        Ok(())
    }

    /// `ε̂_θ(x_t, y, t)` for one series, evaluated without building a graph.
    pub fn predict_noise(&self, x_t: &Tensor, y: usize, t: usize) -> Result<Tensor> {
        self.check(x_t, y, t)?;
        let c = &self.config;
        let p = &self.params;
        let h0 = c.hidden[0];
        let mut h = affine_row(x_t.data(), p.slice(0), p.slice(1), h0);
        let temb = time_embedding(t, c.time_embed_dim);
        let ht = crate::gradcore::matmul_raw(&temb, p.slice(2), 1, c.time_embed_dim, h0);
        let hy = &p.slice(3)[y * h0..(y + 1) * h0];
        for ((v, a), b) in h.iter_mut().zip(&ht).zip(hy) {
            *v = c.activation.apply(*v + a + b);
        }
        let mut idx = 4;
        for k in 1..c.hidden.len() {
            h = affine_row(&h, p.slice(idx), p.slice(idx + 1), c.hidden[k]);
            h.iter_mut().for_each(|v| *v = c.activation.apply(*v));
            idx += 2;
        }
        let out = affine_row(&h, p.slice(idx), p.slice(idx + 1), c.input_dim());
        let out = Tensor::new(x_t.shape().to_vec(), out)?;
        if !out.is_finite() {
            return Err(crate::gradcore::GradError::NonFinite { op: "denoiser" }.into());
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nets::param_leaves;
    use crate::seeding;
    use std::collections::HashSet;

    fn config() -> DenoiserConfig {
        DenoiserConfig {
            series_len: 24,
            channels: 7,
            hidden: vec![16, 12],
            time_embed_dim: 8,
            num_classes: 2,
            activation: Activation::Relu,
        }
    }

    #[test]
    fn zero_output_layer_predicts_zero() {
        let d = Denoiser::new(config(), 1).unwrap();
        let x = Tensor::new(vec![24, 7], seeding::normal_vec(&mut seeding::rng(0), 168)).unwrap();
        let eps = d.predict_noise(&x, 1, 10).unwrap();
        assert_eq!(eps.shape(), &[24, 7]);
        assert!(eps.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn fast_path_matches_graph_and_is_deterministic() {
        let mut d = Denoiser::new(config(), 3).unwrap();
        let mut rng = seeding::rng(9);
        let n = d.params.len();
        d.params.values = seeding::normal_vec(&mut rng, n).iter().map(|v| 0.1 * v).collect();
        let x = Tensor::new(vec![24, 7], seeding::normal_vec(&mut rng, 168)).unwrap();
        let fast = d.predict_noise(&x, 1, 37).unwrap();
        assert_eq!(fast, d.predict_noise(&x, 1, 37).unwrap());
        let mut g = Graph::new();
        let p = param_leaves(&mut g, &d.params, false);
        let xv = g.constant(x.reshaped(&[1, 168]).unwrap());
        let out = d.forward_graph(&mut g, &p, xv, &[37], &[1]).unwrap();
        assert!(g.value(out).max_abs_diff(&fast) < 1e-12);
        assert!(d.predict_noise(&x, 0, 37).unwrap().max_abs_diff(&fast) > 0.0);
    }

    #[test]
    fn shape_and_range_errors() {
        let d = Denoiser::new(config(), 1).unwrap();
        let bad = Tensor::zeros(&[7, 24]);
        assert!(d.predict_noise(&bad, 0, 1).is_err());
        let x = Tensor::zeros(&[24, 7]);
        assert!(d.predict_noise(&x, 2, 1).is_err());
        assert!(d.predict_noise(&x, 0, 0).is_err());
        let odd = DenoiserConfig {
            time_embed_dim: 7,
            ..config()
        };
        assert!(Denoiser::new(odd, 0).is_err());
    }

    #[test]
    fn time_embedding_is_injective() {
        let mut seen = HashSet::new();
        for t in 1..=10_000 {
            let e = time_embedding(t, 32);
            let key: Vec<u64> = e.iter().map(|v| v.to_bits()).collect();
            assert!(seen.insert(key), "collision at t={t}");
        }
    }
}
