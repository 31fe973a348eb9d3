use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{DataError, DatasetBundle, LabeledSeries, Provenance};
use crate::gradcore::Tensor;
use crate::seeding;

/// Recipe for the synthetic imbalanced binary task.
///
/// Class 0 is a sum of sinusoids per channel with random phases plus
/// Gaussian noise. Class 1 adds a half-sine transient of fixed width at a
/// random onset on the first `event_channels` channels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub series_len: usize,
    pub channels: usize,
    pub n_samples: usize,
    pub positive_rate: f64,
    /// Cycles per series for each sinusoid component.
    pub base_frequencies: Vec<f64>,
    pub amplitudes: Vec<f64>,
    pub event_amplitude: f64,
    pub event_width: usize,
    pub event_channels: usize,
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        Self {
            series_len: 24,
            channels: 7,
            n_samples: 2000,
            positive_rate: 0.08,
            base_frequencies: vec![1.0, 2.5],
            amplitudes: vec![1.0, 0.5],
            event_amplitude: 1.0,
            event_width: 6,
            event_channels: 3,
            noise_std: 0.5,
            seed: 0,
        }
    }
}

impl GeneratorSpec {
    pub fn positive_count(&self) -> usize {
        (self.positive_rate * self.n_samples as f64).round() as usize
    }

    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |m: &str| Err(DataError::Degenerate(m.to_string()));
        if self.series_len == 0 || self.channels == 0 {
            return bad("series_len and channels must be positive");
        }
        if !(self.positive_rate > 0.0 && self.positive_rate < 1.0) {
            return bad("positive_rate must lie in (0, 1)");
        }
        if self.positive_rate * (self.n_samples as f64) < 10.0 {
            return bad("positive_rate * n_samples must be at least 10");
        }
        if self.positive_count() >= self.n_samples {
            return bad("no negative samples left");
        }
        if self.base_frequencies.len() != self.amplitudes.len() {
            return bad("base_frequencies and amplitudes differ in length");
        }
        if self.event_width == 0 || self.event_width > self.series_len {
            return bad("event_width must lie in 1..=series_len");
        }
        if self.event_channels == 0 || self.event_channels > self.channels {
            return bad("event_channels must lie in 1..=channels");
        }
        if !(self.noise_std >= 0.0) || !self.event_amplitude.is_finite() {
            return bad("noise_std must be non-negative and event_amplitude finite");
        }
        Ok(())
    }

    /// Half-sine event profile of length `event_width`.
    pub fn event_shape(&self) -> Vec<f64> {
        let w = self.event_width as f64;
        (0..self.event_width)
            .map(|k| self.event_amplitude * (std::f64::consts::PI * (k as f64 + 0.5) / w).sin())
            .collect()
    }
}

pub fn gen_synthetic(spec: &GeneratorSpec) -> Result<DatasetBundle, DataError> {
    spec.validate()?;
    let mut rng = seeding::rng(spec.seed);
    let n_pos = spec.positive_count();
    let mut labels: Vec<usize> = (0..spec.n_samples).map(|i| usize::from(i < n_pos)).collect();
    labels.shuffle(&mut rng);

    let (l, d) = (spec.series_len, spec.channels);
    let shape = spec.event_shape();
    let mut samples = Vec::with_capacity(spec.n_samples);
    let mut onsets = Vec::with_capacity(spec.n_samples);
    for (i, &y) in labels.iter().enumerate() {
        let mut r = seeding::stream(spec.seed, i as u64 + 1);
        let mut data = vec![0.0; l * d];
        for ch in 0..d {
            // Channels share the base frequencies, each slightly detuned.
            let detune = 1.0 + 0.15 * ch as f64;
            for (f, a) in spec.base_frequencies.iter().zip(&spec.amplitudes) {
                let phase = r.gen_range(0.0..std::f64::consts::TAU);
                for t in 0..l {
                    let arg = std::f64::consts::TAU * f * detune * t as f64 / l as f64 + phase;
                    data[t * d + ch] += a * arg.sin();
                }
            }
        }
        let noise = seeding::normal_vec(&mut r, l * d);
        for (v, z) in data.iter_mut().zip(noise) {
            *v += spec.noise_std * z;
        }
        let onset = if y == 1 {
            let onset = r.gen_range(0..=l - spec.event_width);
            for (k, s) in shape.iter().enumerate() {
                for ch in 0..spec.event_channels {
                    data[(onset + k) * d + ch] += s;
                }
            }
            Some(onset)
        } else {
            None
        };
        onsets.push(onset);
        samples.push(LabeledSeries {
            id: i as u64,
            x: Tensor::new(vec![l, d], data).expect("shape matches"),
            y,
        });
    }
    DatasetBundle::from_samples(
        samples,
        2,
        Provenance::Generated {
            spec: spec.clone(),
            event_onsets: onsets,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_positive_quota() {
        let spec = GeneratorSpec {
            n_samples: 5000,
            positive_rate: 0.08,
            ..Default::default()
        };
        let b = gen_synthetic(&spec).unwrap();
        assert_eq!(b.samples.iter().filter(|s| s.y == 1).count(), 400);
    }

    #[test]
    fn deterministic() {
        let spec = GeneratorSpec {
            n_samples: 200,
            ..Default::default()
        };
        assert_eq!(gen_synthetic(&spec).unwrap(), gen_synthetic(&spec).unwrap());
        let other = GeneratorSpec { seed: 1, ..spec.clone() };
        assert_ne!(gen_synthetic(&spec).unwrap().samples, gen_synthetic(&other).unwrap().samples);
    }

    #[test]
    fn every_positive_carries_its_event() {
        // Without background or noise the event is the whole signal.
        let spec = GeneratorSpec {
            n_samples: 200,
            positive_rate: 0.1,
            amplitudes: vec![0.0, 0.0],
            noise_std: 0.0,
            ..Default::default()
        };
        let b = gen_synthetic(&spec).unwrap();
        let Provenance::Generated { event_onsets, .. } = &b.provenance else { panic!() };
        let shape = spec.event_shape();
        for (s, onset) in b.samples.iter().zip(event_onsets) {
            assert_eq!(s.y == 1, onset.is_some());
            if let Some(o) = onset {
                for (k, v) in shape.iter().enumerate() {
                    assert!((s.x.data()[(o + k) * spec.channels] - v).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn degenerate_specs() {
        let too_few = GeneratorSpec {
            n_samples: 100,
            positive_rate: 0.05,
            ..Default::default()
        };
        assert!(gen_synthetic(&too_few).is_err());
        let wide = GeneratorSpec {
            event_width: 100,
            ..Default::default()
        };
        assert!(gen_synthetic(&wide).is_err());
    }
}
