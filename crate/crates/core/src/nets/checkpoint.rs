//! Checkpoint container: a `key=value` text header terminated by `end`,
//! followed by the parameter vector as little-endian `f64` in layout order.

use std::path::Path;

use super::{Activation, ClassifierConfig, DenoiserConfig};
use crate::datasets::DataError;
use crate::digest::sha256_hex;
use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &str = "TARDIFF-CKPT";

#[derive(Clone, Debug, PartialEq)]
pub enum ArchConfig {
    Denoiser(DenoiserConfig),
    Classifier(ClassifierConfig),
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainingMeta {
    pub seed: u64,
    pub steps: usize,
    pub final_loss: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub arch: ArchConfig,
    pub params: crate::gradcore::ParamVector,
    pub meta: TrainingMeta,
}

fn widths(s: &str) -> Option<Vec<usize>> {
    if s.is_empty() {
        return Some(Vec::new());
    }
    s.split(',').map(|w| w.parse().ok()).collect()
}

fn join(w: &[usize]) -> String {
    w.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

impl Checkpoint {
    pub fn arch_name(&self) -> &'static str {
        match self.arch {
            ArchConfig::Denoiser(_) => "denoiser",
            ArchConfig::Classifier(_) => "classifier",
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut h = format!("{MAGIC}\nversion={CHECKPOINT_VERSION}\narch={}\n", self.arch_name());
        match &self.arch {
            ArchConfig::Denoiser(c) => {
                h += &format!(
                    "series_len={}\nchannels={}\nhidden={}\ntime_embed_dim={}\nnum_classes={}\nactivation={}\n",
                    c.series_len,
                    c.channels,
                    join(&c.hidden),
                    c.time_embed_dim,
                    c.num_classes,
                    c.activation.name()
                );
            }
            ArchConfig::Classifier(c) => {
                h += &format!(
                    "series_len={}\nchannels={}\nhidden={}\nnum_classes={}\nactivation={}\n",
                    c.series_len,
                    c.channels,
                    join(&c.hidden),
                    c.num_classes,
                    c.activation.name()
                );
            }
        }
        h += &format!(
            "arch_id={}\nseed={}\nsteps={}\nfinal_loss={:?}\nparams={}\nend\n",
            self.params.arch_id,
            self.meta.seed,
            self.meta.steps,
            self.meta.final_loss,
            self.params.len()
        );
        let mut out = h.into_bytes();
        for v in &self.params.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn digest(&self) -> String {
        sha256_hex(&self.to_bytes())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(path, &bytes)
    }

    pub fn from_bytes(path: &Path, bytes: &[u8]) -> Result<Self> {
        let fmt = |reason: String| Error::Format {
            path: path.to_path_buf(),
            reason,
        };
        if bytes.is_empty() {
            return Err(fmt("empty checkpoint".into()));
        }
        let (pairs, start) = crate::datasets::io_parse_header(path, bytes, MAGIC)?;
        let get = |k: &str| crate::datasets::io_header_value(path, &pairs, k);
        let version = get("version")?;
        if version != CHECKPOINT_VERSION.to_string() {
            return Err(DataError::Version {
                path: path.to_path_buf(),
                found: version.to_string(),
            }
            .into());
        }
        let num = |k: &str| -> Result<usize> {
            let v = get(k)?;
            v.parse().map_err(|_| fmt(format!("{k}={v} is not an integer")))
        };
        let activation = {
            let v = get("activation")?;
            Activation::parse(v).ok_or_else(|| fmt(format!("unknown activation {v}")))?
        };
        let hidden = widths(get("hidden")?).ok_or_else(|| fmt("hidden widths must be integers".into()))?;
        let arch = match get("arch")? {
            "denoiser" => ArchConfig::Denoiser(DenoiserConfig {
                series_len: num("series_len")?,
                channels: num("channels")?,
                hidden,
                time_embed_dim: num("time_embed_dim")?,
                num_classes: num("num_classes")?,
                activation,
            }),
            "classifier" => ArchConfig::Classifier(ClassifierConfig {
                series_len: num("series_len")?,
                channels: num("channels")?,
                hidden,
                num_classes: num("num_classes")?,
                activation,
            }),
            other => return Err(fmt(format!("unknown arch {other}"))),
        };
        let mut params = match &arch {
            ArchConfig::Denoiser(c) => {
                c.validate()?;
                c.layout()
            }
            ArchConfig::Classifier(c) => {
                c.validate()?;
                c.layout()
            }
        };
        let arch_id = get("arch_id")?;
        if arch_id != params.arch_id {
            return Err(Error::ArchMismatch {
                expected: params.arch_id.clone(),
                found: arch_id.to_string(),
            });
        }
        let n = num("params")?;
        if n != params.len() {
            return Err(fmt(format!("header declares {n} parameters, architecture needs {}", params.len())));
        }
        let payload = &bytes[start..];
        if payload.len() != 8 * n {
            return Err(DataError::Truncated {
                path: path.to_path_buf(),
                offset: bytes.len(),
                needed: (8 * n).saturating_sub(payload.len()),
            }
            .into());
        }
        for (v, chunk) in params.values.iter_mut().zip(payload.chunks_exact(8)) {
            *v = f64::from_le_bytes(chunk.try_into().expect("8 bytes"));
        }
        let final_loss = get("final_loss")?;
        let meta = TrainingMeta {
            seed: get("seed")?.parse().map_err(|_| fmt("seed must be an integer".into()))?,
            steps: num("steps")?,
            final_loss: final_loss
                .parse()
                .map_err(|_| fmt(format!("final_loss={final_loss} is not a number")))?,
        };
        Ok(Self { arch, params, meta })
    }
}
