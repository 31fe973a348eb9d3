//! Denoising diffusion: the noise schedule, the closed-form forward process,
//! the noise-prediction objective and the ancestral sampler.
//!
//! The reverse step uses the fixed posterior variance `β̃_t`; guidance adds
//! `w · J` to the mean before noise is injected.

mod sampler;
mod schedule;
mod train;

pub use sampler::{
    generate_dataset, p_sample_step, sample, sample_labels, GeneratedSample, GenerationManifest, Guidance, GuidanceSpec,
    SamplerTrace, StepRecord,
};
pub use schedule::{make_schedule, q_sample, NoiseSchedule, ScheduleKind};
pub use train::{train_denoiser, training_loss, NoisePredictor, TrainedDenoiser};
