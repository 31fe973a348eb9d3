use super::{add_bias, affine_row, format_widths, init_uniform, param_leaves, Activation, Adam, ArchConfig, Checkpoint, EpochBatches, TrainSettings, TrainingMeta};
use crate::datasets::LabeledSeries;
use crate::error::{Error, Result};
use crate::gradcore::{sigmoid, softmax_in_place, Graph, ParamVector, Tensor, Var};
use crate::seeding;

#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierConfig {
    pub series_len: usize,
    pub channels: usize,
    pub hidden: Vec<usize>,
    pub num_classes: usize,
    pub activation: Activation,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            series_len: 24,
            channels: 7,
            hidden: vec![32],
            num_classes: 2,
            activation: Activation::Tanh,
        }
    }
}

impl ClassifierConfig {
    pub fn input_dim(&self) -> usize {
        self.series_len * self.channels
    }

    /// One logit for binary tasks, one per class otherwise.
    pub fn output_dim(&self) -> usize {
        if self.num_classes == 2 {
            1
        } else {
            self.num_classes
        }
    }

    pub fn arch_id(&self) -> String {
        format!(
            "classifier:L{}xD{}:h{}:c{}:{}",
            self.series_len,
            self.channels,
            format_widths(&self.hidden),
            self.num_classes,
            self.activation.name()
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.series_len == 0 || self.channels == 0 || self.num_classes < 2 || self.hidden.contains(&0) {
            return Err(Error::InvalidArgument(format!("invalid classifier config {self:?}")));
        }
        Ok(())
    }

    pub(crate) fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.input_dim()];
        w.extend(&self.hidden);
        w.push(self.output_dim());
        w
    }

    pub fn layout(&self) -> ParamVector {
        let widths = self.widths();
        let mut entries = Vec::new();
        for k in 0..widths.len() - 1 {
            entries.push((format!("l{k}.w"), vec![widths[k], widths[k + 1]]));
            entries.push((format!("l{k}.b"), vec![1, widths[k + 1]]));
        }
        let refs: Vec<(&str, Vec<usize>)> = entries.iter().map(|(n, s)| (n.as_str(), s.clone())).collect();
        ParamVector::zeros(self.arch_id(), &refs)
    }
}

/// Downstream task model `f_φ` with its cross-entropy loss.
#[derive(Clone, Debug, PartialEq)]
pub struct Classifier {
    pub config: ClassifierConfig,
    pub params: ParamVector,
}

impl Classifier {
    pub fn new(config: ClassifierConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut params = config.layout();
        let widths = config.widths();
        init_uniform(&mut params, seed, |name| {
            let k: usize = name.strip_prefix('l')?.strip_suffix(".w")?.parse().ok()?;
            Some(widths[k])
        });
        Ok(Self { config, params })
    }

    pub fn from_params(config: ClassifierConfig, params: ParamVector) -> Result<Self> {
        config.validate()?;
        if params.arch_id != config.arch_id() {
            return Err(Error::ArchMismatch {
                expected: config.arch_id(),
                found: params.arch_id,
            });
        }
        params.validate()?;
        if params.len() != config.layout().len() {
            return Err(Error::ArchMismatch {
                expected: format!("{} parameters", config.layout().len()),
                found: format!("{} parameters", params.len()),
            });
        }
        Ok(Self { config, params })
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        match &ckpt.arch {
            ArchConfig::Classifier(c) => Self::from_params(c.clone(), ckpt.params.clone()),
            ArchConfig::Denoiser(_) => Err(Error::ArchMismatch {
                expected: "classifier".into(),
                found: ckpt.params.arch_id.clone(),
            }),
        }
    }

    pub fn to_checkpoint(&self, meta: TrainingMeta) -> Checkpoint {
        Checkpoint {
            arch: ArchConfig::Classifier(self.config.clone()),
            params: self.params.clone(),
            meta,
        }
    }

    pub fn check_input(&self, x: &Tensor) -> Result<()> {
        if x.shape() != [self.config.series_len, self.config.channels] {
            return Err(Error::InvalidArgument(format!(
                "classifier expects [{}, {}] input, got {:?}",
                self.config.series_len,
                self.config.channels,
                x.shape()
            )));
        }
        Ok(())
    }

    fn check_label(&self, y: usize) -> Result<()> {
        if y >= self.config.num_classes {
            return Err(Error::InvalidArgument(format!(
                "label {y} out of range for {} classes",
                self.config.num_classes
            )));
        }
        Ok(())
    }

    /// Stack series into a `[B, L·D]` input tensor.
    pub fn batch_input(&self, xs: &[&Tensor]) -> Result<Tensor> {
        let mut data = Vec::with_capacity(xs.len() * self.config.input_dim());
        for x in xs {
            self.check_input(x)?;
            data.extend_from_slice(x.data());
        }
        Ok(Tensor::matrix(xs.len(), self.config.input_dim(), data)?)
    }

    /// Logits `[B, out]` for a `[B, L·D]` input node.
    pub fn logits_graph(&self, g: &mut Graph, params: &[Var], x: Var) -> Result<Var> {
        let n_layers = params.len() / 2;
        let mut h = x;
        for k in 0..n_layers {
            let z = g.matmul(h, params[2 * k])?;
            h = add_bias(g, z, params[2 * k + 1])?;
            if k + 1 < n_layers {
                h = self.config.activation.apply_graph(g, h)?;
            }
        }
        Ok(h)
    }

    /// Mean task loss over the batch: sigmoid cross-entropy on the logit for
    /// binary tasks, softmax cross-entropy otherwise.
    pub fn loss_graph(&self, g: &mut Graph, params: &[Var], x: Var, labels: &[usize]) -> Result<Var> {
        for &y in labels {
            self.check_label(y)?;
        }
        let logits = self.logits_graph(g, params, x)?;
        let b = labels.len();
        if self.config.num_classes == 2 {
            let t = Tensor::matrix(b, 1, labels.iter().map(|&y| y as f64).collect())?;
            let t = g.constant(t);
            Ok(g.sigmoid_cross_entropy(logits, t)?)
        } else {
            let c = self.config.num_classes;
            let mut t = vec![0.0; b * c];
            for (i, &y) in labels.iter().enumerate() {
                t[i * c + y] = 1.0;
            }
            let t = g.constant(Tensor::matrix(b, c, t)?);
            Ok(g.softmax_cross_entropy(logits, t)?)
        }
    }

    /// `ℓ(x, y; φ)` for one sample.
    pub fn task_loss(&self, x: &Tensor, y: usize) -> Result<f64> {
        let mut g = Graph::new();
        let p = param_leaves(&mut g, &self.params, false);
        let xv = g.constant(self.batch_input(&[x])?);
        let l = self.loss_graph(&mut g, &p, xv, &[y])?;
        Ok(g.value(l).item())
    }

    /// `∇_φ ℓ(x, y; φ)` flattened in layout order.
    pub fn param_grad(&self, x: &Tensor, y: usize) -> Result<Vec<f64>> {
        Ok(self.batch_loss_and_grad(&[x], &[y])?.1)
    }

    /// Mean loss over a batch and its parameter gradient.
    pub fn batch_loss_and_grad(&self, xs: &[&Tensor], ys: &[usize]) -> Result<(f64, Vec<f64>)> {
        let mut g = Graph::new();
        let p = param_leaves(&mut g, &self.params, true);
        let xv = g.constant(self.batch_input(xs)?);
        let l = self.loss_graph(&mut g, &p, xv, ys)?;
        let grads = g.grad(l, &p)?;
        Ok((g.value(l).item(), self.params.flatten(&grads)?))
    }

    /// `v · ∇_φ ℓ(x, y; φ)` and its gradient with respect to `x`.
    ///
    /// A hand-written reverse pass over the backward pass of the MLP; it
    /// computes the same quantity as differentiating the gradient graph
    /// twice, without building one.
    pub fn gradient_alignment(&self, x: &Tensor, y: usize, v: &[f64]) -> Result<(f64, Tensor)> {
        self.check_input(x)?;
        if y >= self.config.num_classes {
            return Err(Error::InvalidArgument(format!("label {y} out of range")));
        }
        if v.len() != self.params.len() {
            return Err(Error::ArchMismatch {
                expected: format!("{} parameters", self.params.len()),
                found: format!("{} entries", v.len()),
            });
        }
        let widths = self.config.widths();
        let layers = widths.len() - 1;
        let act = self.config.activation;
        let p = &self.params;
        let wmat = |k: usize| p.slice(2 * k);
        let vmat = |k: usize| &v[p.layout[2 * k].offset..p.layout[2 * k].offset + p.layout[2 * k].size()];
        let vbias = |k: usize| &v[p.layout[2 * k + 1].offset..p.layout[2 * k + 1].offset + p.layout[2 * k + 1].size()];

        // Forward: a[k] feeds layer k, z[k] is its pre-activation.
        let mut a = vec![x.data().to_vec()];
        let mut z = Vec::with_capacity(layers);
        for k in 0..layers {
            let zk = affine_row(&a[k], wmat(k), p.slice(2 * k + 1), widths[k + 1]);
            if k + 1 < layers {
                a.push(zk.iter().map(|&q| act.apply(q)).collect());
            }
            z.push(zk);
        }
        let top = &z[layers - 1];
        let probs: Vec<f64> = if self.config.num_classes == 2 {
            vec![sigmoid(top[0])]
        } else {
            let mut q = top.clone();
            softmax_in_place(&mut q);
            q
        };
        let mut delta = vec![Vec::new(); layers];
        delta[layers - 1] = if self.config.num_classes == 2 {
            vec![probs[0] - y as f64]
        } else {
            probs.iter().enumerate().map(|(c, &q)| q - f64::from(c == y)).collect()
        };
        // e[k] = δ[k+1] W_{k+1}^T, δ[k] = e[k] ⊙ f'(z[k]).
        let mut e = vec![Vec::new(); layers];
        let mut dz = vec![Vec::new(); layers];
        for k in (0..layers - 1).rev() {
            e[k] = mat_t_vec(wmat(k + 1), &delta[k + 1], widths[k + 1], widths[k + 2]);
            dz[k] = z[k].iter().map(|&q| act.derivatives(q)).collect::<Vec<_>>();
            delta[k] = e[k].iter().zip(&dz[k]).map(|(ei, d)| ei * d.0).collect();
        }
        // s = Σ_k u[k] · δ[k], u[k] = a[k] V_k + c_k.
        let u: Vec<Vec<f64>> = (0..layers).map(|k| affine_row(&a[k], vmat(k), vbias(k), widths[k + 1])).collect();
        let value: f64 = (0..layers).map(|k| crate::influence::dot(&u[k], &delta[k])).sum();

        // Adjoints of the backward pass, bottom-up.
        let mut dbar = vec![Vec::new(); layers];
        let mut ebar = vec![Vec::new(); layers];
        for k in 0..layers {
            let mut d = u[k].clone();
            if k > 0 {
                let back = crate::gradcore::matmul_raw(&ebar[k - 1], wmat(k), 1, widths[k], widths[k + 1]);
                d.iter_mut().zip(back).for_each(|(x, b)| *x += b);
            }
            if k + 1 < layers {
                ebar[k] = d.iter().zip(&dz[k]).map(|(x, q)| x * q.0).collect();
            }
            dbar[k] = d;
        }
        // Adjoints of the forward pass, top-down.
        let db = &dbar[layers - 1];
        let mut zbar: Vec<f64> = if self.config.num_classes == 2 {
            vec![db[0] * probs[0] * (1.0 - probs[0])]
        } else {
            let pd = crate::influence::dot(&probs, db);
            probs.iter().zip(db).map(|(q, d)| q * d - pd * q).collect()
        };
        let mut abar = Vec::new();
        for k in (0..layers).rev() {
            abar = mat_t_vec(vmat(k), &delta[k], widths[k], widths[k + 1]);
            let via_w = mat_t_vec(wmat(k), &zbar, widths[k], widths[k + 1]);
            abar.iter_mut().zip(via_w).for_each(|(x, b)| *x += b);
            if k > 0 {
                zbar = (0..widths[k])
                    .map(|i| abar[i] * dz[k - 1][i].0 + dbar[k - 1][i] * e[k - 1][i] * dz[k - 1][i].1)
                    .collect();
            }
        }
        let j = Tensor::new(x.shape().to_vec(), abar)?;
        if !value.is_finite() || !j.is_finite() {
            return Err(crate::gradcore::GradError::NonFinite { op: "gradient_alignment" }.into());
        }
        Ok((value, j))
    }

    /// Class probabilities for one series.
    pub fn predict_proba(&self, x: &Tensor) -> Result<Vec<f64>> {
        let mut g = Graph::new();
        let p = param_leaves(&mut g, &self.params, false);
        let xv = g.constant(self.batch_input(&[x])?);
        let logits = self.logits_graph(&mut g, &p, xv)?;
        let z = g.value(logits).data();
        if self.config.num_classes == 2 {
            let p1 = sigmoid(z[0]);
            Ok(vec![1.0 - p1, p1])
        } else {
            let mut probs = z.to_vec();
            softmax_in_place(&mut probs);
            Ok(probs)
        }
    }

    /// Probability of class 1, the score used for ranking metrics.
    pub fn positive_score(&self, x: &Tensor) -> Result<f64> {
        Ok(self.predict_proba(x)?[1])
    }

    /// Mean loss over a sample set, evaluated in chunks.
    pub fn mean_loss(&self, samples: &[LabeledSeries]) -> Result<f64> {
        let mut total = 0.0;
        for chunk in samples.chunks(256) {
            let xs: Vec<&Tensor> = chunk.iter().map(|s| &s.x).collect();
            let ys: Vec<usize> = chunk.iter().map(|s| s.y).collect();
            let mut g = Graph::new();
            let p = param_leaves(&mut g, &self.params, false);
            let xv = g.constant(self.batch_input(&xs)?);
            let l = self.loss_graph(&mut g, &p, xv, &ys)?;
            total += g.value(l).item() * chunk.len() as f64;
        }
        Ok(total / samples.len().max(1) as f64)
    }
}

#[derive(Clone, Debug)]
pub struct TrainedClassifier {
    pub classifier: Classifier,
    pub checkpoint: Checkpoint,
    pub loss_history: Vec<f64>,
}

/// `d W^T` for `W` of shape `[rows, cols]` and `d` of length `cols`.
fn mat_t_vec(w: &[f64], d: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    (0..rows)
        .map(|i| w[i * cols..(i + 1) * cols].iter().zip(d).map(|(a, b)| a * b).sum())
        .collect()
}

/// Train `f_φ` with Adam on shuffled minibatches. Deterministic in `seed`.
pub fn train_classifier(
    train: &[LabeledSeries],
    config: &ClassifierConfig,
    settings: TrainSettings,
    seed: u64,
) -> Result<TrainedClassifier> {
    if train.is_empty() {
        return Err(Error::InvalidArgument("empty training set".into()));
    }
    let mut seen = vec![false; config.num_classes];
    for s in train {
        if s.y >= config.num_classes {
            return Err(Error::InvalidArgument(format!("label {} out of range", s.y)));
        }
        seen[s.y] = true;
    }
    if seen.iter().filter(|&&b| b).count() < 2 {
        return Err(Error::InvalidArgument(
            "training set contains a single class; the loss is degenerate".into(),
        ));
    }
    if settings.batch_size == 0 || settings.steps == 0 || !(settings.lr > 0.0) {
        return Err(Error::InvalidArgument(format!("invalid train settings {settings:?}")));
    }
    let mut clf = Classifier::new(config.clone(), seeding::derive(seed, "classifier-init"))?;
    let mut adam = Adam::new(clf.params.len(), settings.lr);
    let mut batches = EpochBatches::new(train.len(), seeding::rng(seeding::derive(seed, "classifier-batches")));
    let batch = settings.batch_size.min(train.len());
    let mut history = Vec::with_capacity(settings.steps);
    for _ in 0..settings.steps {
        let idx = batches.next_batch(batch);
        let xs: Vec<&Tensor> = idx.iter().map(|&i| &train[i].x).collect();
        let ys: Vec<usize> = idx.iter().map(|&i| train[i].y).collect();
        let (loss, grad) = clf.batch_loss_and_grad(&xs, &ys)?;
        history.push(loss);
        adam.step(&mut clf.params.values, &grad);
    }
    let final_loss = clf.mean_loss(train)?;
    let checkpoint = clf.to_checkpoint(TrainingMeta {
        seed,
        steps: settings.steps,
        final_loss,
    });
    Ok(TrainedClassifier {
        classifier: clf,
        checkpoint,
        loss_history: history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcore::central_difference;

    fn tiny(seed: u64) -> Classifier {
        Classifier::new(
            ClassifierConfig {
                series_len: 3,
                channels: 2,
                hidden: vec![4],
                num_classes: 2,
                activation: Activation::Tanh,
            },
            seed,
        )
        .unwrap()
    }

    fn series(v: &[f64]) -> Tensor {
        Tensor::new(vec![3, 2], v.to_vec()).unwrap()
    }

    #[test]
    fn loss_values_at_fixed_logits() {
        // A single linear layer with zero weights and a chosen bias fixes the logit.
        let config = ClassifierConfig {
            series_len: 3,
            channels: 2,
            hidden: vec![],
            num_classes: 2,
            activation: Activation::Tanh,
        };
        let mut clf = Classifier::new(config, 0).unwrap();
        clf.params.values.iter_mut().for_each(|v| *v = 0.0);
        let x = series(&[0.3, -0.1, 0.2, 0.9, -1.0, 0.5]);
        assert!((clf.task_loss(&x, 1).unwrap() - std::f64::consts::LN_2).abs() < 1e-12);
        let last = clf.params.len() - 1;
        clf.params.values[last] = 20.0;
        let l = clf.task_loss(&x, 1).unwrap();
        assert!((0.0..1e-8).contains(&l), "{l}");
    }

    #[test]
    fn loss_matches_scalar_recomputation() {
        let clf = tiny(11);
        let x = series(&[0.3, -0.1, 0.2, 0.9, -1.0, 0.5]);
        // Hand forward pass with raw slices.
        let w0 = clf.params.slice(0);
        let b0 = clf.params.slice(1);
        let w1 = clf.params.slice(2);
        let b1 = clf.params.slice(3);
        let mut z = b1[0];
        for j in 0..4 {
            let mut a = b0[j];
            for i in 0..6 {
                a += x.data()[i] * w0[i * 4 + j];
            }
            z += a.tanh() * w1[j];
        }
        let s = 1.0 / (1.0 + (-z).exp());
        for y in [0usize, 1] {
            let yf = y as f64;
            let expected = -(yf * s.ln() + (1.0 - yf) * (1.0 - s).ln());
            assert!((clf.task_loss(&x, y).unwrap() - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn param_grad_matches_finite_differences() {
        let clf = tiny(5);
        let x = series(&[0.3, -0.1, 0.2, 0.9, -1.0, 0.5]);
        let ad = clf.param_grad(&x, 1).unwrap();
        let theta = Tensor::new(vec![clf.params.len()], clf.params.values.clone()).unwrap();
        let fd = central_difference(
            |p| {
                let mut c = clf.clone();
                c.params.values = p.data().to_vec();
                c.task_loss(&x, 1).map_err(|_| crate::gradcore::GradError::NonFinite { op: "loss" })
            },
            &theta,
            1e-6,
        )
        .unwrap();
        let err = ad
            .iter()
            .zip(fd.data())
            .map(|(a, d)| (a - d).abs() / (a.abs() + d.abs() + 1e-12))
            .fold(0.0, f64::max);
        assert!(err < 1e-4, "{err}");
        assert_eq!(ad, clf.param_grad(&x, 1).unwrap());
    }

    #[test]
    fn gradient_layout_matches_per_parameter_gradients() {
        let clf = tiny(2);
        let x = series(&[1.0, 0.0, -1.0, 0.5, 0.5, 0.25]);
        let flat = clf.param_grad(&x, 0).unwrap();
        let mut g = Graph::new();
        let p = param_leaves(&mut g, &clf.params, true);
        let xv = g.constant(clf.batch_input(&[&x]).unwrap());
        let l = clf.loss_graph(&mut g, &p, xv, &[0]).unwrap();
        let per = g.grad(l, &p).unwrap();
        for (e, t) in clf.params.layout.iter().zip(&per) {
            assert_eq!(&flat[e.offset..e.offset + e.size()], t.data());
        }
    }

    #[test]
    fn multiclass_probabilities_sum_to_one() {
        let clf = Classifier::new(
            ClassifierConfig {
                series_len: 3,
                channels: 2,
                hidden: vec![5],
                num_classes: 3,
                activation: Activation::Tanh,
            },
            1,
        )
        .unwrap();
        let x = series(&[0.1, 0.2, 0.3, 0.4, 0.5, 0.6]);
        let p = clf.predict_proba(&x).unwrap();
        assert_eq!(p.len(), 3);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(clf.task_loss(&x, 2).unwrap() > 0.0);
        assert!(clf.task_loss(&x, 3).is_err());
    }

    fn separable(n: usize) -> Vec<LabeledSeries> {
        // Two clusters in the plane, separated by the line x0 + x1 = 0.
        let mut rng = seeding::rng(42);
        (0..n)
            .map(|i| {
                let y = i % 2;
                let sign = if y == 1 { 1.0 } else { -1.0 };
                let v = seeding::normal_vec(&mut rng, 2);
                let x = vec![sign * 2.0 + 0.5 * v[0], sign * 2.0 + 0.5 * v[1]];
                LabeledSeries {
                    id: i as u64,
                    x: Tensor::new(vec![1, 2], x).unwrap(),
                    y,
                }
            })
            .collect()
    }

    #[test]
    fn learns_separable_toy_deterministically() {
        let data = separable(100);
        let config = ClassifierConfig {
            series_len: 1,
            channels: 2,
            hidden: vec![8],
            num_classes: 2,
            activation: Activation::Tanh,
        };
        let settings = TrainSettings {
            steps: 500,
            batch_size: 32,
            lr: 1e-2,
        };
        let a = train_classifier(&data, &config, settings, 3).unwrap();
        let correct = data
            .iter()
            .filter(|s| (a.classifier.positive_score(&s.x).unwrap() > 0.5) == (s.y == 1))
            .count();
        assert!(correct as f64 / data.len() as f64 >= 0.99);
        let b = train_classifier(&data, &config, settings, 3).unwrap();
        assert_eq!(a.checkpoint.params.values, b.checkpoint.params.values);

        // Exponentially smoothed loss ends below its starting value.
        let mut ema = a.loss_history[0];
        for l in &a.loss_history {
            ema = 0.95 * ema + 0.05 * l;
        }
        assert!(ema < a.loss_history[0]);
    }

    #[test]
    fn gradient_vanishes_at_exact_minimum() {
        // Symmetric points, each seen once per label: the zero linear model
        // (logit 0 everywhere) is the exact optimum of the mean loss.
        let points = [[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]];
        let data: Vec<LabeledSeries> = points
            .iter()
            .flat_map(|p| [0usize, 1].map(|y| (p, y)))
            .enumerate()
            .map(|(i, (p, y))| LabeledSeries {
                id: i as u64,
                x: Tensor::new(vec![1, 2], p.to_vec()).unwrap(),
                y,
            })
            .collect();
        let config = ClassifierConfig {
            series_len: 1,
            channels: 2,
            hidden: vec![],
            num_classes: 2,
            activation: Activation::Tanh,
        };
        let mut clf = Classifier::new(config, 0).unwrap();
        clf.params.values.iter_mut().for_each(|v| *v = 0.0);
        let xs: Vec<&Tensor> = data.iter().map(|s| &s.x).collect();
        let ys: Vec<usize> = data.iter().map(|s| s.y).collect();
        let (_, grad) = clf.batch_loss_and_grad(&xs, &ys).unwrap();
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        assert!(norm < 1e-6, "{norm}");
        // Duplicate inputs give identical per-sample gradients.
        assert_eq!(clf.param_grad(&data[0].x, 1).unwrap(), clf.param_grad(&data[0].x, 1).unwrap());
    }

    #[test]
    fn single_class_is_rejected() {
        let mut data = separable(10);
        data.iter_mut().for_each(|s| s.y = 0);
        let config = ClassifierConfig {
            series_len: 1,
            channels: 2,
            hidden: vec![2],
            num_classes: 2,
            activation: Activation::Tanh,
        };
        assert!(train_classifier(&data, &config, TrainSettings::classifier(), 0).is_err());
    }
}
