use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use super::config::{Counts, GuidanceMode, RunConfig};
use super::manifest::{ManifestEntry, RunDir};
use crate::datasets::{self, encode_binary, gen_synthetic, DatasetBundle, Format, SplitName};
use crate::diffusion::{generate_dataset, train_denoiser, GenerationManifest, GuidanceSpec};
use crate::error::{Error, Result};
use crate::eval::{
    autocorrelation_similarity, discriminative_score, gradient_norm_analysis, guidance_sweep, runtime_report,
    spearman, time_cache_build, trtr, tsrtr, tstr, EvalConfig, GenerationSetup,
};
use crate::influence::{class_conditional_cache, GradientCache, InfluenceGuide};
use crate::nets::{train_classifier, Checkpoint, Classifier, ClassifierConfig, Denoiser, DenoiserConfig};
use crate::seeding;

pub const DATA: &str = "data.bin";
pub const DATA_MANIFEST: &str = "data.bin.manifest.json";
pub const CLASSIFIER: &str = "classifier.ckpt";
pub const DENOISER: &str = "denoiser.ckpt";
pub const CACHE: &str = "guidance.cache";
pub const SYNTHETIC: &str = "synthetic.bin";
pub const SYNTHETIC_META: &str = "synthetic.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    GenData,
    TrainClf,
    TrainDiff,
    CacheGrads,
    Sample,
    EvalTstr,
    EvalTsrtr,
    Sweep,
    Report,
}

impl Command {
    /// Pipeline order.
    pub const ALL: [Command; 9] = [
        Command::GenData,
        Command::TrainClf,
        Command::TrainDiff,
        Command::CacheGrads,
        Command::Sample,
        Command::EvalTstr,
        Command::EvalTsrtr,
        Command::Sweep,
        Command::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::GenData => "gen-data",
            Command::TrainClf => "train-clf",
            Command::TrainDiff => "train-diff",
            Command::CacheGrads => "cache-grads",
            Command::Sample => "sample",
            Command::EvalTstr => "eval-tstr",
            Command::EvalTsrtr => "eval-tsrtr",
            Command::Sweep => "sweep",
            Command::Report => "report",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == s)
    }
}

/// What a command wrote: artifact names and digests.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Outcome {
    pub command: &'static str,
    pub artifacts: Vec<(String, String)>,
}

struct Step<'a> {
    command: Command,
    run: &'a RunDir,
    seed: u64,
    config_digest: String,
    inputs: BTreeMap<String, String>,
    outputs: Vec<(String, String)>,
    start: Instant,
}

impl<'a> Step<'a> {
    fn input(&mut self, name: &str, producer: Command) -> Result<PathBuf> {
        let digest = self.run.verify_input(name, producer.name())?;
        self.inputs.insert(name.to_string(), digest);
        Ok(self.run.path(name))
    }

    fn output(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let digest = self.run.write(name, bytes)?;
        self.outputs.push((name.to_string(), digest));
        Ok(())
    }

    fn json(&mut self, name: &str, value: &impl Serialize) -> Result<()> {
        let text = serde_json::to_string_pretty(value)? + "\n";
        self.output(name, text.as_bytes())
    }

    fn finish(self) -> Result<Outcome> {
        let wall_seconds = self.start.elapsed().as_secs_f64();
        for (artifact, digest) in &self.outputs {
            self.run.append(&ManifestEntry {
                command: self.command.name().to_string(),
                artifact: artifact.clone(),
                digest: digest.clone(),
                inputs: self.inputs.clone(),
                config_digest: self.config_digest.clone(),
                seed: self.seed,
                wall_seconds,
            })?;
        }
        Ok(Outcome {
            command: self.command.name(),
            artifacts: self.outputs,
        })
    }
}

fn load_bundle(path: &Path) -> Result<DatasetBundle> {
    Ok(datasets::load_binary(path)?)
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    Checkpoint::load(path)
}

fn classifier_config(cfg: &RunConfig, data: &DatasetBundle) -> Result<ClassifierConfig> {
    let (hidden, activation) = cfg.classifier_arch()?;
    Ok(ClassifierConfig {
        series_len: data.series_len,
        channels: data.channels,
        hidden,
        num_classes: data.num_classes,
        activation,
    })
}

fn eval_config(cfg: &RunConfig, data: &DatasetBundle) -> Result<EvalConfig> {
    let mut e = EvalConfig::new(classifier_config(cfg, data)?, cfg.classifier_settings()?);
    e.threshold = cfg.threshold()?;
    Ok(e)
}

fn resolve_counts(counts: Counts, data: &DatasetBundle) -> Result<Vec<usize>> {
    match counts {
        Counts::MatchTrain => Ok(DatasetBundle::class_counts(&data.subset(SplitName::Train), data.num_classes)),
        Counts::Explicit(c) if c.len() == data.num_classes => Ok(c),
        Counts::Explicit(c) => Err(Error::Config(format!(
            "{} class counts given for a {}-class dataset",
            c.len(),
            data.num_classes
        ))),
    }
}

fn split_name(which: SplitName) -> &'static str {
    match which {
        SplitName::Train => "train",
        SplitName::Val => "val",
        SplitName::Test => "test",
    }
}

/// Run one command inside `run`, reading inputs and appending to its manifest.
pub fn execute(command: Command, cfg: &RunConfig, run: &RunDir) -> Result<Outcome> {
    let seed = cfg.seed()?;
    let mut step = Step {
        command,
        run,
        seed,
        config_digest: cfg.digest(),
        inputs: BTreeMap::new(),
        outputs: Vec::new(),
        start: Instant::now(),
    };
    let stream = seeding::derive(seed, command.name());
    match command {
        Command::GenData => gen_data(&mut step, cfg, seed)?,
        Command::TrainClf => train_clf(&mut step, cfg, stream)?,
        Command::TrainDiff => train_diff(&mut step, cfg, stream)?,
        Command::CacheGrads => cache_grads(&mut step, cfg)?,
        Command::Sample => sample(&mut step, cfg, stream)?,
        Command::EvalTstr => eval_tstr(&mut step, cfg, stream)?,
        Command::EvalTsrtr => eval_tsrtr(&mut step, cfg, stream)?,
        Command::Sweep => sweep(&mut step, cfg, stream)?,
        Command::Report => report(&mut step, cfg, stream)?,
    }
    step.output(&format!("{}.config", command.name()), cfg.render().as_bytes())?;
    step.finish()
}

fn gen_data(step: &mut Step, cfg: &RunConfig, seed: u64) -> Result<()> {
    let raw = match cfg.data_file()? {
        None => {
            let mut spec = cfg.generator()?;
            spec.seed = seeding::derive(seed, "generator");
            gen_synthetic(&spec)?
        }
        Some(path) => {
            let path = Path::new(path);
            datasets::load(path, Format::from_path(path))?
        }
    };
    let bundle = datasets::split(&raw, cfg.split_ratios()?, seeding::derive(seed, "split"))?.normalize()?;
    step.output(DATA, &encode_binary(&bundle))?;
    let r = cfg.split_ratios()?;
    let extra = serde_json::json!({ "seed": seed, "split_ratios": [r.train, r.val, r.test] });
    let sidecar = datasets::write_manifest(&step.run.path(DATA), &bundle, extra)?;
    let bytes = std::fs::read(&sidecar).map_err(|e| Error::io(&sidecar, e))?;
    step.output(DATA_MANIFEST, &bytes)
}

fn train_clf(step: &mut Step, cfg: &RunConfig, seed: u64) -> Result<()> {
    let data = load_bundle(&step.input(DATA, Command::GenData)?)?;
    let config = classifier_config(cfg, &data)?;
    let trained = train_classifier(&data.subset(SplitName::Train), &config, cfg.classifier_settings()?, seed)?;
    step.output(CLASSIFIER, &trained.checkpoint.to_bytes())
}

fn train_diff(step: &mut Step, cfg: &RunConfig, seed: u64) -> Result<()> {
    let data = load_bundle(&step.input(DATA, Command::GenData)?)?;
    let (hidden, time_embed_dim, activation) = cfg.denoiser_arch()?;
    let config = DenoiserConfig {
        series_len: data.series_len,
        channels: data.channels,
        hidden,
        time_embed_dim,
        num_classes: data.num_classes,
        activation,
    };
    let trained = train_denoiser(
        &data.subset(SplitName::Train),
        &config,
        &cfg.schedule()?,
        cfg.denoiser_settings()?,
        seed,
    )?;
    step.output(DENOISER, &trained.checkpoint.to_bytes())
}

fn cache_grads(step: &mut Step, cfg: &RunConfig) -> Result<()> {
    let data = load_bundle(&step.input(DATA, Command::GenData)?)?;
    let phi = load_checkpoint(&step.input(CLASSIFIER, Command::TrainClf)?)?;
    let guidance = data.subset(cfg.guidance_split()?);
    let cache = class_conditional_cache(&phi, &guidance, cfg.class_filter()?)?;
    step.output(CACHE, &cache.to_bytes())
}

/// Load the cache and check it was built from the configured guidance split
/// and class filter.
fn checked_cache(step: &mut Step, cfg: &RunConfig, data: &DatasetBundle) -> Result<GradientCache> {
    let path = step.input(CACHE, Command::CacheGrads)?;
    let cache = GradientCache::load(&path)?;
    let filter = cfg.class_filter()?;
    let which = cfg.guidance_split()?;
    if cache.filter != filter {
        return Err(Error::Config(format!(
            "{} was built with class filter {}, config asks for {}",
            path.display(),
            cache.filter.name(),
            filter.name()
        )));
    }
    let expected = filter.guidance_digest(&data.subset(which));
    if cache.guidance_digest != expected {
        return Err(Error::DigestMismatch {
            path,
            expected: format!("{expected} ({} split)", split_name(which)),
            actual: cache.guidance_digest,
        });
    }
    Ok(cache)
}

fn sample(step: &mut Step, cfg: &RunConfig, seed: u64) -> Result<()> {
    let data = load_bundle(&step.input(DATA, Command::GenData)?)?;
    let theta = load_checkpoint(&step.input(DENOISER, Command::TrainDiff)?)?;
    let denoiser = Denoiser::from_checkpoint(&theta)?;
    let schedule = cfg.schedule()?;
    let counts = resolve_counts(cfg.sample_counts()?, &data)?;
    let scale = cfg.guidance_scale()?;
    let mode = cfg.guidance_mode()?;

    let mut phi_hash = None;
    let mut cache_hash = None;
    let classifier;
    let guide;
    let spec = match mode {
        GuidanceMode::None => GuidanceSpec::none(),
        GuidanceMode::Classifier => {
            let phi = load_checkpoint(&step.input(CLASSIFIER, Command::TrainClf)?)?;
            phi_hash = Some(phi.digest());
            classifier = Classifier::from_checkpoint(&phi)?;
            GuidanceSpec::classifier(&classifier, scale)
        }
        GuidanceMode::Influence => {
            let phi = load_checkpoint(&step.input(CLASSIFIER, Command::TrainClf)?)?;
            let cache = checked_cache(step, cfg, &data)?;
            phi_hash = Some(phi.digest());
            cache_hash = Some(cache.digest());
            guide = InfluenceGuide::new(&phi, cache)?;
            GuidanceSpec::influence(&guide, scale)
        }
    };
    let spec = spec.with_clip(cfg.guidance_clip()?).with_step_range(cfg.step_range()?);
    let (bundle, traces) = generate_dataset(&denoiser, &counts, &schedule, &spec, seed)?;
    let clipped_steps: usize = traces.iter().flat_map(|t| &t.records).filter(|r| r.clipped).count();

    let manifest = GenerationManifest {
        theta_hash: theta.digest(),
        phi_hash,
        cache_hash,
        mode: spec.mode_name().to_string(),
        scale: spec.scale,
        grad_clip: spec.grad_clip,
        step_range: spec.step_range,
        schedule: schedule.describe(),
        seed,
        class_counts: counts,
    };
    step.output(SYNTHETIC, &encode_binary(&bundle))?;
    step.json(
        SYNTHETIC_META,
        &serde_json::json!({ "generation": manifest, "clipped_steps": clipped_steps }),
    )
}

fn eval_tstr(step: &mut Step, cfg: &RunConfig, seed: u64) -> Result<()> {
    let data = load_bundle(&step.input(DATA, Command::GenData)?)?;
    let synthetic = load_bundle(&step.input(SYNTHETIC, Command::Sample)?)?;
    let ecfg = eval_config(cfg, &data)?;
    let test = data.subset(SplitName::Test);
    let report = tstr(&synthetic.samples, &test, &ecfg, seed)?;
    let baseline = trtr(&data.subset(SplitName::Train), &test, &ecfg, seed)?;
    step.json("tstr.json", &report)?;
    step.json("trtr.json", &baseline)
}

fn eval_tsrtr(step: &mut Step, cfg: &RunConfig, seed: u64) -> Result<()> {
    let data = load_bundle(&step.input(DATA, Command::GenData)?)?;
    let synthetic = load_bundle(&step.input(SYNTHETIC, Command::Sample)?)?;
    let ecfg = eval_config(cfg, &data)?;
    let (train, test) = (data.subset(SplitName::Train), data.subset(SplitName::Test));
    let alphas = cfg.alphas()?;
    if alphas.is_empty() {
        return Err(Error::Config("eval.alphas is empty".into()));
    }
    let mut csv = String::from("protocol,alpha,auroc,auprc,minority_f1,train_size,synthetic_used\n");
    for alpha in alphas {
        let r = tsrtr(&train, &synthetic.samples, alpha, &test, &ecfg, seed)?;
        csv.push_str(&format!(
            "{},{:?},{:?},{:?},{:?},{},{}\n",
            r.protocol, alpha, r.auroc, r.auprc, r.minority_f1, r.train_size, r.synthetic_used
        ));
        step.json(&format!("tsrtr_{alpha:?}.json"), &r)?;
    }
    step.output("tsrtr.csv", csv.as_bytes())
}

fn sweep(step: &mut Step, cfg: &RunConfig, seed: u64) -> Result<()> {
    let data = load_bundle(&step.input(DATA, Command::GenData)?)?;
    let theta = load_checkpoint(&step.input(DENOISER, Command::TrainDiff)?)?;
    let phi = load_checkpoint(&step.input(CLASSIFIER, Command::TrainClf)?)?;
    let denoiser = Denoiser::from_checkpoint(&theta)?;
    let schedule = cfg.schedule()?;
    let (clip, clip_from) = cfg.sweep_clip()?;
    let setup = GenerationSetup {
        denoiser: &denoiser,
        schedule: &schedule,
        class_counts: resolve_counts(cfg.sweep_counts()?, &data)?,
        clip_from: if clip.is_some() { clip_from } else { f64::INFINITY },
        clip: clip.unwrap_or(f64::INFINITY),
        step_range: cfg.step_range()?,
    };
    let ws = cfg.sweep_scales()?;
    let ecfg = eval_config(cfg, &data)?;
    let result = guidance_sweep(
        &ws,
        &setup,
        &phi,
        &data.subset(SplitName::Train),
        &data.subset(SplitName::Val),
        &ecfg,
        seed,
    )?;
    let infl: Vec<f64> = result.points.iter().map(|p| p.mean_influence).collect();
    let rho = spearman(&ws, &infl);
    step.json(
        "sweep.json",
        &serde_json::json!({ "spearman_w_influence": rho, "sweep": result }),
    )?;
    step.output("sweep.csv", result.to_csv().as_bytes())
}

fn report(step: &mut Step, cfg: &RunConfig, seed: u64) -> Result<()> {
    let data = load_bundle(&step.input(DATA, Command::GenData)?)?;
    let phi = load_checkpoint(&step.input(CLASSIFIER, Command::TrainClf)?)?;
    let theta = load_checkpoint(&step.input(DENOISER, Command::TrainDiff)?)?;
    let cache = checked_cache(step, cfg, &data)?;
    let synthetic = load_bundle(&step.input(SYNTHETIC, Command::Sample)?)?;
    let clf = Classifier::from_checkpoint(&phi)?;
    let denoiser = Denoiser::from_checkpoint(&theta)?;
    let ecfg = eval_config(cfg, &data)?;
    let train = data.subset(SplitName::Train);
    let guidance = data.subset(cfg.guidance_split()?);

    let norms = gradient_norm_analysis(&clf, &train)?;
    let by_count = |pick_max: bool| {
        let mut sorted: Vec<_> = norms.iter().filter(|n| n.count > 0).collect();
        sorted.sort_by_key(|n| (n.count, n.class));
        if pick_max {
            sorted.last().copied()
        } else {
            sorted.first().copied()
        }
    };
    let disparity = match (by_count(false), by_count(true)) {
        (Some(min), Some(maj)) if maj.mean > 0.0 => min.mean / maj.mean,
        _ => f64::NAN,
    };
    let guide = InfluenceGuide::new(&phi, cache)?;
    let summary = serde_json::json!({
        "gradient_norms": norms,
        "minority_to_majority_norm_ratio": disparity,
        "cache_norm": guide.cache.norm(),
        "mean_influence_synthetic": guide.mean_influence(&synthetic.samples)?,
        "mean_influence_train": guide.mean_influence(&train)?,
        "discriminative_score": discriminative_score(&train, &synthetic.samples, &ecfg, seed)?,
        "autocorrelation_distance": autocorrelation_similarity(&train, &synthetic.samples, cfg.acf_max_lag()?)?,
    });
    step.json("report.json", &summary)?;

    // Timings are wall-clock and differ between runs.
    let schedule = cfg.schedule()?;
    let counts = vec![cfg.runtime_samples()?.max(1); data.num_classes];
    let scale = cfg.guidance_scale()?;
    let guided = GuidanceSpec::influence(&guide, if scale == 0.0 { 1.0 } else { scale })
        .with_clip(cfg.guidance_clip()?)
        .with_step_range(cfg.step_range()?);
    let (_, unguided_traces) = generate_dataset(&denoiser, &counts, &schedule, &GuidanceSpec::none(), seed)?;
    let (_, guided_traces) = generate_dataset(&denoiser, &counts, &schedule, &guided, seed)?;
    let runtime = runtime_report(time_cache_build(&phi, &guidance)?, &guided_traces, &unguided_traces);
    step.json("runtime.json", &runtime)
}
