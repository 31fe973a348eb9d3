use std::collections::BTreeMap;
use std::path::Path;

use crate::datasets::{GeneratorSpec, SplitName, SplitRatios};
use crate::diffusion::{make_schedule, NoiseSchedule, ScheduleKind};
use crate::error::{Error, Result};
use crate::influence::ClassFilter;
use crate::nets::{Activation, TrainSettings};

/// Every recognised key with its default value.
const DEFAULTS: &[(&str, &str)] = &[
    ("seed", "0"),
    ("data.source", "synthetic"),
    ("data.path", ""),
    ("data.series_len", "24"),
    ("data.channels", "7"),
    ("data.n_samples", "2000"),
    ("data.positive_rate", "0.08"),
    ("data.base_frequencies", "1.0,2.5"),
    ("data.amplitudes", "1.0,0.5"),
    ("data.event_amplitude", "1.0"),
    ("data.event_width", "6"),
    ("data.event_channels", "3"),
    ("data.noise_std", "0.5"),
    ("split.train", "0.8"),
    ("split.val", "0.1"),
    ("split.test", "0.1"),
    ("schedule.steps", "100"),
    ("schedule.beta_start", "0.0001"),
    ("schedule.beta_end", "0.02"),
    ("denoiser.hidden", "128,128"),
    ("denoiser.time_embed_dim", "32"),
    ("denoiser.activation", "relu"),
    ("denoiser.steps", "3000"),
    ("denoiser.batch_size", "64"),
    ("denoiser.lr", "0.0001"),
    ("classifier.hidden", "32"),
    ("classifier.activation", "tanh"),
    ("classifier.steps", "600"),
    ("classifier.batch_size", "64"),
    ("classifier.lr", "0.001"),
    ("guidance.mode", "influence"),
    ("guidance.scale", "100"),
    ("guidance.clip", "off"),
    ("guidance.class_filter", "all"),
    ("guidance.split", "val"),
    ("guidance.step_range", "all"),
    ("sample.counts", "train"),
    ("eval.threshold", "0.5"),
    ("eval.alphas", "0.2,0.4,0.6,0.8,1.0"),
    ("sweep.scales", "-1000,-100,-10,0,10,100,1000"),
    ("sweep.counts", "128,128"),
    ("sweep.clip", "10"),
    ("sweep.clip_from", "1000"),
    ("report.acf_max_lag", "6"),
    ("report.runtime_samples", "4"),
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GuidanceMode {
    None,
    Classifier,
    Influence,
}

/// Either the real train-split class counts or explicit per-class counts.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Counts {
    MatchTrain,
    Explicit(Vec<usize>),
}

/// Flat `section.key = value` configuration. Unknown keys are rejected.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            values: DEFAULTS.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::default();
        cfg.apply_text(&text, &path.display().to_string())?;
        Ok(cfg)
    }

    /// Apply `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("{origin}:{}: expected key = value, got {line:?}", n + 1)))?;
            self.set(k.trim(), v.trim())
                .map_err(|e| Error::Config(format!("{origin}:{}: {}", n + 1, strip(e))))?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match self.values.get_mut(key) {
            Some(slot) => {
                *slot = value.to_string();
                Ok(())
            }
            None => Err(Error::Config(format!("unknown key {key:?}"))),
        }
    }

    /// Apply a `key=value` override.
    pub fn set_pair(&mut self, pair: &str) -> Result<()> {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override {pair:?} is not key=value")))?;
        self.set(k.trim(), v.trim())
    }

    pub fn get(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).expect("key is in the defaults table")
    }

    /// Canonical text: one sorted `key = value` line per key.
    pub fn render(&self) -> String {
        self.values.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn digest(&self) -> String {
        crate::digest::sha256_hex(self.render().as_bytes())
    }

    fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let v = self.get(key);
        v.parse()
            .map_err(|_| Error::Config(format!("{key} = {v:?} is not a valid {}", std::any::type_name::<T>())))
    }

    fn list<T: std::str::FromStr>(&self, key: &str) -> Result<Vec<T>> {
        let v = self.get(key);
        if v.is_empty() {
            return Ok(Vec::new());
        }
        v.split(',')
            .map(|p| {
                p.trim()
                    .parse()
                    .map_err(|_| Error::Config(format!("{key}: cannot parse list item {p:?}")))
            })
            .collect()
    }

    fn activation(&self, key: &str) -> Result<Activation> {
        Activation::parse(self.get(key)).ok_or_else(|| Error::Config(format!("{key}: expected tanh or relu")))
    }

    pub fn seed(&self) -> Result<u64> {
        self.parse("seed")
    }

    pub fn generator(&self) -> Result<GeneratorSpec> {
        Ok(GeneratorSpec {
            series_len: self.parse("data.series_len")?,
            channels: self.parse("data.channels")?,
            n_samples: self.parse("data.n_samples")?,
            positive_rate: self.parse("data.positive_rate")?,
            base_frequencies: self.list("data.base_frequencies")?,
            amplitudes: self.list("data.amplitudes")?,
            event_amplitude: self.parse("data.event_amplitude")?,
            event_width: self.parse("data.event_width")?,
            event_channels: self.parse("data.event_channels")?,
            noise_std: self.parse("data.noise_std")?,
            seed: self.seed()?,
        })
    }

    /// `None` for the synthetic generator, else the dataset file.
    pub fn data_file(&self) -> Result<Option<&str>> {
        match self.get("data.source") {
            "synthetic" => Ok(None),
            "file" if !self.get("data.path").is_empty() => Ok(Some(self.get("data.path"))),
            "file" => Err(Error::Config("data.source = file needs data.path".into())),
            other => Err(Error::Config(format!("data.source: expected synthetic or file, got {other:?}"))),
        }
    }

    pub fn split_ratios(&self) -> Result<SplitRatios> {
        Ok(SplitRatios {
            train: self.parse("split.train")?,
            val: self.parse("split.val")?,
            test: self.parse("split.test")?,
        })
    }

    pub fn schedule(&self) -> Result<NoiseSchedule> {
        make_schedule(
            self.parse("schedule.steps")?,
            self.parse("schedule.beta_start")?,
            self.parse("schedule.beta_end")?,
            ScheduleKind::Linear,
        )
    }

    fn settings(&self, section: &str) -> Result<TrainSettings> {
        Ok(TrainSettings {
            steps: self.parse(&format!("{section}.steps"))?,
            batch_size: self.parse(&format!("{section}.batch_size"))?,
            lr: self.parse(&format!("{section}.lr"))?,
        })
    }

    pub fn denoiser_settings(&self) -> Result<TrainSettings> {
        self.settings("denoiser")
    }

    pub fn classifier_settings(&self) -> Result<TrainSettings> {
        self.settings("classifier")
    }

    pub fn denoiser_arch(&self) -> Result<(Vec<usize>, usize, Activation)> {
        Ok((
            self.list("denoiser.hidden")?,
            self.parse("denoiser.time_embed_dim")?,
            self.activation("denoiser.activation")?,
        ))
    }

    pub fn classifier_arch(&self) -> Result<(Vec<usize>, Activation)> {
        Ok((self.list("classifier.hidden")?, self.activation("classifier.activation")?))
    }

    pub fn guidance_mode(&self) -> Result<GuidanceMode> {
        match self.get("guidance.mode") {
            "none" => Ok(GuidanceMode::None),
            "classifier" => Ok(GuidanceMode::Classifier),
            "influence" => Ok(GuidanceMode::Influence),
            other => Err(Error::Config(format!(
                "guidance.mode: expected none, classifier or influence, got {other:?}"
            ))),
        }
    }

    pub fn guidance_scale(&self) -> Result<f64> {
        self.parse("guidance.scale")
    }

    fn optional_real(&self, key: &str) -> Result<Option<f64>> {
        match self.get(key) {
            "off" | "none" => Ok(None),
            _ => self.parse(key).map(Some),
        }
    }

    pub fn guidance_clip(&self) -> Result<Option<f64>> {
        self.optional_real("guidance.clip")
    }

    pub fn class_filter(&self) -> Result<ClassFilter> {
        ClassFilter::parse(self.get("guidance.class_filter"))
            .ok_or_else(|| Error::Config("guidance.class_filter: expected all, majority or minority".into()))
    }

    pub fn guidance_split(&self) -> Result<SplitName> {
        match self.get("guidance.split") {
            "train" => Ok(SplitName::Train),
            "val" => Ok(SplitName::Val),
            "test" => Ok(SplitName::Test),
            other => Err(Error::Config(format!("guidance.split: expected train, val or test, got {other:?}"))),
        }
    }

    pub fn step_range(&self) -> Result<Option<(usize, usize)>> {
        let v = self.get("guidance.step_range");
        if v == "all" {
            return Ok(None);
        }
        let parsed = v
            .split_once("..")
            .and_then(|(a, b)| Some((a.trim().parse().ok()?, b.trim().parse().ok()?)));
        parsed
            .map(Some)
            .ok_or_else(|| Error::Config(format!("guidance.step_range: expected all or lo..hi, got {v:?}")))
    }

    fn counts(&self, key: &str) -> Result<Counts> {
        match self.get(key) {
            "train" => Ok(Counts::MatchTrain),
            _ => Ok(Counts::Explicit(self.list(key)?)),
        }
    }

    pub fn sample_counts(&self) -> Result<Counts> {
        self.counts("sample.counts")
    }

    pub fn sweep_counts(&self) -> Result<Counts> {
        self.counts("sweep.counts")
    }

    pub fn threshold(&self) -> Result<f64> {
        self.parse("eval.threshold")
    }

    pub fn alphas(&self) -> Result<Vec<f64>> {
        self.list("eval.alphas")
    }

    pub fn sweep_scales(&self) -> Result<Vec<f64>> {
        self.list("sweep.scales")
    }

    pub fn sweep_clip(&self) -> Result<(Option<f64>, f64)> {
        Ok((self.optional_real("sweep.clip")?, self.parse("sweep.clip_from")?))
    }

    pub fn acf_max_lag(&self) -> Result<usize> {
        self.parse("report.acf_max_lag")
    }

    pub fn runtime_samples(&self) -> Result<usize> {
        self.parse("report.runtime_samples")
    }
}

fn strip(e: Error) -> String {
    match e {
        Error::Config(m) => m,
        other => other.to_string(),
    }
}
