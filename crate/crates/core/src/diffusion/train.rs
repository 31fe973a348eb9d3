use rand::Rng as _;

use crate::datasets::LabeledSeries;
use crate::error::{Error, Result};
use crate::gradcore::{Graph, Tensor};
use crate::nets::{param_leaves, Adam, Checkpoint, Denoiser, DenoiserConfig, EpochBatches, TrainSettings, TrainingMeta};
use crate::seeding::{self, Rng};

use super::{q_sample, NoiseSchedule};

/// Anything that predicts the noise in `x_t`.
pub trait NoisePredictor {
    fn predict_noise(&self, x_t: &Tensor, y: usize, t: usize) -> Result<Tensor>;
}

impl NoisePredictor for Denoiser {
    fn predict_noise(&self, x_t: &Tensor, y: usize, t: usize) -> Result<Tensor> {
        Denoiser::predict_noise(self, x_t, y, t)
    }
}

/// Noise-prediction loss with a fresh `t ~ U{1..T}` and `ε ~ N(0, I)` per
/// example, averaged over every element of the batch.
pub fn training_loss<P: NoisePredictor + ?Sized>(
    model: &P,
    batch: &[LabeledSeries],
    schedule: &NoiseSchedule,
    rng: &mut Rng,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for s in batch {
        let t = rng.gen_range(1..=schedule.steps());
        let eps = Tensor::new(s.x.shape().to_vec(), seeding::normal_vec(rng, s.x.len()))?;
        let x_t = q_sample(&s.x, t, &eps, schedule)?;
        let pred = model.predict_noise(&x_t, s.y, t)?;
        total += pred.data().iter().zip(eps.data()).map(|(p, e)| (p - e).powi(2)).sum::<f64>();
        count += eps.len();
    }
    Ok(total / count as f64)
}

#[derive(Clone, Debug)]
pub struct TrainedDenoiser {
    pub denoiser: Denoiser,
    pub checkpoint: Checkpoint,
    pub loss_history: Vec<f64>,
}

/// Fit `ε̂_θ` with Adam on the noise-prediction loss. Deterministic in `seed`.
pub fn train_denoiser(
    train: &[LabeledSeries],
    config: &DenoiserConfig,
    schedule: &NoiseSchedule,
    settings: TrainSettings,
    seed: u64,
) -> Result<TrainedDenoiser> {
    if train.is_empty() {
        return Err(Error::InvalidArgument("empty training set".into()));
    }
    if settings.batch_size == 0 || settings.steps == 0 || !(settings.lr > 0.0) {
        return Err(Error::InvalidArgument(format!("invalid train settings {settings:?}")));
    }
    let mut model = Denoiser::new(config.clone(), seeding::derive(seed, "denoiser-init"))?;
    let dim = config.input_dim();
    for s in train {
        if s.x.len() != dim || s.y >= config.num_classes {
            return Err(Error::ArchMismatch {
                expected: format!("[{}, {}] series with label < {}", config.series_len, config.channels, config.num_classes),
                found: format!("{:?} with label {}", s.x.shape(), s.y),
            });
        }
    }
    let mut adam = Adam::new(model.params.len(), settings.lr);
    let mut batches = EpochBatches::new(train.len(), seeding::rng(seeding::derive(seed, "denoiser-batches")));
    let mut rng = seeding::rng(seeding::derive(seed, "denoiser-noise"));
    let batch = settings.batch_size.min(train.len());
    let mut history = Vec::with_capacity(settings.steps);
    for _ in 0..settings.steps {
        let idx = batches.next_batch(batch);
        let mut steps = Vec::with_capacity(batch);
        let mut labels = Vec::with_capacity(batch);
        let mut noisy = Vec::with_capacity(batch * dim);
        let mut noise = Vec::with_capacity(batch * dim);
        for &i in &idx {
            let s = &train[i];
            let t = rng.gen_range(1..=schedule.steps());
            let eps = seeding::normal_vec(&mut rng, dim);
            let ab = schedule.alpha_bar(t);
            let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
            noisy.extend(s.x.data().iter().zip(&eps).map(|(x, e)| a * x + b * e));
            noise.extend(eps);
            steps.push(t);
            labels.push(s.y);
        }
        let mut g = Graph::new();
        let params = param_leaves(&mut g, &model.params, true);
        let x = g.input(Tensor::matrix(batch, dim, noisy)?);
        let target = g.constant(Tensor::matrix(batch, dim, noise)?);
        let pred = model.forward_graph(&mut g, &params, x, &steps, &labels)?;
        let loss = g.squared_error(pred, target)?;
        history.push(g.value(loss).item());
        let grads = g.grad(loss, &params)?;
        let flat = model.params.flatten(&grads)?;
        adam.step(&mut model.params.values, &flat);
    }
    let tail = &history[history.len().saturating_sub(50)..];
    let final_loss = tail.iter().sum::<f64>() / tail.len() as f64;
    let checkpoint = model.to_checkpoint(TrainingMeta {
        seed,
        steps: settings.steps,
        final_loss,
    });
    Ok(TrainedDenoiser {
        denoiser: model,
        checkpoint,
        loss_history: history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nets::Activation;

    fn config() -> DenoiserConfig {
        DenoiserConfig {
            series_len: 4,
            channels: 2,
            hidden: vec![16],
            time_embed_dim: 8,
            num_classes: 2,
            activation: Activation::Relu,
        }
    }

    fn data(n: usize, seed: u64) -> Vec<LabeledSeries> {
        let mut r = seeding::rng(seed);
        (0..n)
            .map(|i| LabeledSeries {
                id: i as u64,
                x: Tensor::new(vec![4, 2], seeding::normal_vec(&mut r, 8)).unwrap(),
                y: i % 2,
            })
            .collect()
    }

    struct Oracle<'a> {
        x0: &'a Tensor,
        schedule: &'a NoiseSchedule,
    }

    impl NoisePredictor for Oracle<'_> {
        fn predict_noise(&self, x_t: &Tensor, _y: usize, t: usize) -> Result<Tensor> {
            let ab = self.schedule.alpha_bar(t);
            Ok(Tensor::new(
                x_t.shape().to_vec(),
                x_t.data()
                    .iter()
                    .zip(self.x0.data())
                    .map(|(x, x0)| (x - ab.sqrt() * x0) / (1.0 - ab).sqrt())
                    .collect(),
            )?)
        }
    }

    #[test]
    fn zero_model_loss_is_noise_energy() {
        let s = NoiseSchedule::desk();
        let m = Denoiser::new(config(), 1).unwrap();
        let loss = training_loss(&m, &data(1000, 2), &s, &mut seeding::rng(3)).unwrap();
        assert!((loss - 1.0).abs() < 0.05, "{loss}");
    }

    #[test]
    fn oracle_and_determinism() {
        let s = NoiseSchedule::desk();
        let batch: Vec<LabeledSeries> = vec![data(1, 4)[0].clone(); 16];
        let oracle = Oracle { x0: &batch[0].x, schedule: &s };
        assert!(training_loss(&oracle, &batch, &s, &mut seeding::rng(5)).unwrap() < 1e-20);
        let m = Denoiser::new(config(), 6).unwrap();
        let set = data(20, 7);
        let a = training_loss(&m, &set, &s, &mut seeding::rng(8)).unwrap();
        let b = training_loss(&m, &set, &s, &mut seeding::rng(8)).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
        assert!(training_loss(&m, &[], &s, &mut seeding::rng(8)).is_err());
    }

    #[test]
    fn learns_constant_dataset_deterministically() {
        let s = NoiseSchedule::desk();
        let one = data(1, 9)[0].clone();
        let set: Vec<LabeledSeries> = (0..32).map(|i| LabeledSeries { id: i, y: (i % 2) as usize, ..one.clone() }).collect();
        let settings = TrainSettings {
            steps: 300,
            batch_size: 16,
            lr: 3e-3,
        };
        let a = train_denoiser(&set, &config(), &s, settings, 10).unwrap();
        let b = train_denoiser(&set, &config(), &s, settings, 10).unwrap();
        assert_eq!(a.checkpoint.to_bytes(), b.checkpoint.to_bytes());
        let head: f64 = a.loss_history[..20].iter().sum::<f64>() / 20.0;
        assert!(a.checkpoint.meta.final_loss < head, "{} vs {head}", a.checkpoint.meta.final_loss);
    }
}
