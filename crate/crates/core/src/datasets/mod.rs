//! Labeled multivariate series, the synthetic imbalanced generator,
//! stratified splitting, train-only normalization and file formats.

mod generate;
mod io;
mod split;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gradcore::Tensor;

pub use generate::{gen_synthetic, GeneratorSpec};
pub use io::{decode_binary, encode_binary, load, load_binary, load_csv, save, save_binary, save_csv, write_manifest, Format};
pub(crate) use io::{header_value as io_header_value, parse_header as io_parse_header};
pub use split::{halve, split, SplitRatios};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: empty dataset")]
    Empty { path: PathBuf },
    #[error("{path}: truncated at byte offset {offset}: needed {needed} more bytes")]
    Truncated { path: PathBuf, offset: usize, needed: usize },
    #[error("{path}: bad header: {reason}")]
    BadHeader { path: PathBuf, reason: String },
    #[error("{path}: unsupported format version {found}")]
    Version { path: PathBuf, found: String },
    #[error("{path}: row {row}, column {column}: {reason}")]
    MalformedRow {
        path: PathBuf,
        row: usize,
        column: usize,
        reason: String,
    },
    #[error("channel {channel} has zero variance in the train split")]
    ZeroVariance { channel: usize },
    #[error("class {class} has {count} samples, too few to stratify into three splits")]
    Stratify { class: usize, count: usize },
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// One `(x, y)` pair: `x` has shape `[series_len, channels]`.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledSeries {
    /// Stable identifier; splitting keys on it rather than on position.
    pub id: u64,
    pub x: Tensor,
    pub y: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Splits {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Provenance {
    Generated { spec: GeneratorSpec, event_onsets: Vec<Option<usize>> },
    File { digest: String },
    Derived { description: String },
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetBundle {
    pub series_len: usize,
    pub channels: usize,
    pub num_classes: usize,
    pub samples: Vec<LabeledSeries>,
    pub splits: Option<Splits>,
    pub stats: Option<NormStats>,
    pub provenance: Provenance,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SplitName {
    Train,
    Val,
    Test,
}

impl DatasetBundle {
    /// Unsplit bundle over `samples`, which must all share one shape.
    pub fn from_samples(
        samples: Vec<LabeledSeries>,
        num_classes: usize,
        provenance: Provenance,
    ) -> Result<Self, DataError> {
        let first = samples.first().ok_or_else(|| DataError::Degenerate("no samples".into()))?;
        let (series_len, channels) = match first.x.shape() {
            [l, d] => (*l, *d),
            s => return Err(DataError::Degenerate(format!("sample shape {s:?} is not [L, D]"))),
        };
        for s in &samples {
            if s.x.shape() != [series_len, channels] {
                return Err(DataError::Degenerate(format!(
                    "sample {} has shape {:?}, expected [{series_len}, {channels}]",
                    s.id,
                    s.x.shape()
                )));
            }
            if s.y >= num_classes {
                return Err(DataError::Degenerate(format!("sample {} has label {} >= {num_classes}", s.id, s.y)));
            }
            if !s.x.is_finite() {
                return Err(DataError::Degenerate(format!("sample {} has non-finite values", s.id)));
            }
        }
        Ok(Self {
            series_len,
            channels,
            num_classes,
            samples,
            splits: None,
            stats: None,
            provenance,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn indices(&self, which: SplitName) -> &[usize] {
        match (&self.splits, which) {
            (Some(s), SplitName::Train) => &s.train,
            (Some(s), SplitName::Val) => &s.val,
            (Some(s), SplitName::Test) => &s.test,
            (None, _) => &[],
        }
    }

    /// Owned copy of one split's samples, in split order.
    pub fn subset(&self, which: SplitName) -> Vec<LabeledSeries> {
        self.indices(which).iter().map(|&i| self.samples[i].clone()).collect()
    }

    pub fn class_counts(samples: &[LabeledSeries], num_classes: usize) -> Vec<usize> {
        let mut counts = vec![0; num_classes];
        for s in samples {
            counts[s.y] += 1;
        }
        counts
    }

    /// Per-channel mean and population std over all time steps of `samples`.
    pub fn channel_stats(samples: &[LabeledSeries], channels: usize) -> NormStats {
        let mut sum = vec![0.0; channels];
        let mut count = 0usize;
        for s in samples {
            for row in s.x.data().chunks(channels) {
                for (acc, v) in sum.iter_mut().zip(row) {
                    *acc += v;
                }
                count += 1;
            }
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / count.max(1) as f64).collect();
        let mut sq = vec![0.0; channels];
        for s in samples {
            for row in s.x.data().chunks(channels) {
                for ((acc, v), m) in sq.iter_mut().zip(row).zip(&mean) {
                    *acc += (v - m) * (v - m);
                }
            }
        }
        let std = sq.iter().map(|s| (s / count.max(1) as f64).sqrt()).collect();
        NormStats { mean, std }
    }

    /// Z-score every sample per channel using statistics of the train split.
    pub fn normalize(&self) -> Result<Self, DataError> {
        if self.splits.is_none() {
            return Err(DataError::Degenerate("normalize requires assigned splits".into()));
        }
        let train = self.subset(SplitName::Train);
        let stats = Self::channel_stats(&train, self.channels);
        for (channel, s) in stats.std.iter().enumerate() {
            if *s < 1e-12 {
                return Err(DataError::ZeroVariance { channel });
            }
        }
        let mut out = self.clone();
        for s in &mut out.samples {
            apply_channelwise(&mut s.x, self.channels, |d, v| (v - stats.mean[d]) / stats.std[d]);
        }
        out.stats = Some(stats);
        Ok(out)
    }

    /// Map a normalized series back to the original units.
    pub fn denormalize(&self, x: &Tensor) -> Tensor {
        let mut out = x.clone();
        if let Some(stats) = &self.stats {
            apply_channelwise(&mut out, self.channels, |d, v| v * stats.std[d] + stats.mean[d]);
        }
        out
    }
}

fn apply_channelwise(x: &mut Tensor, channels: usize, f: impl Fn(usize, f64) -> f64) {
    for row in x.data_mut().chunks_mut(channels) {
        for (d, v) in row.iter_mut().enumerate() {
            *v = f(d, *v);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bundle() -> DatasetBundle {
        let spec = GeneratorSpec {
            n_samples: 300,
            positive_rate: 0.1,
            ..GeneratorSpec::default()
        };
        split(&gen_synthetic(&spec).unwrap(), SplitRatios::default(), 3).unwrap()
    }

    #[test]
    fn normalize_uses_train_statistics() {
        let b = bundle().normalize().unwrap();
        let train = b.subset(SplitName::Train);
        let st = DatasetBundle::channel_stats(&train, b.channels);
        for d in 0..b.channels {
            assert!(st.mean[d].abs() < 1e-9);
            assert!((st.std[d] - 1.0).abs() < 1e-6);
        }
        // Val statistics differ from the stored train statistics.
        let raw = bundle();
        let val_stats = DatasetBundle::channel_stats(&raw.subset(SplitName::Val), raw.channels);
        assert_ne!(Some(&val_stats), b.stats.as_ref());
    }

    #[test]
    fn normalize_round_trip_and_idempotence() {
        let raw = bundle();
        let b = raw.normalize().unwrap();
        for (orig, norm) in raw.samples.iter().zip(&b.samples) {
            assert!(b.denormalize(&norm.x).max_abs_diff(&orig.x) < 1e-12);
        }
        let again = b.normalize().unwrap();
        for (p, q) in again.samples.iter().zip(&b.samples) {
            assert!(p.x.max_abs_diff(&q.x) < 1e-9);
        }
    }

    #[test]
    fn constant_channel_is_rejected() {
        let mut b = bundle();
        for s in &mut b.samples {
            for row in s.x.data_mut().chunks_mut(b.channels) {
                row[2] = 5.0;
            }
        }
        assert!(matches!(b.normalize(), Err(DataError::ZeroVariance { channel: 2 })));
    }
}
