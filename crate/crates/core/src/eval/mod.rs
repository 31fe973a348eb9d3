//! Metrics and experiment protocols.

mod metrics;
mod protocols;

pub use metrics::{auprc, auroc, f1_score, mean_std, minority_f1, pearson, spearman};
pub use protocols::{
    autocorrelation_similarity, class_specific_guidance, discriminative_score, gradient_norm_analysis, guidance_sweep,
    runtime_report, samples_digest, score_classifier, time_cache_build, trtr, tsrtr, tstr, ClassGradNorms,
    ClassGuidanceResult, EvalConfig, GenerationSetup, MetricsReport, RuntimeReport, SweepPoint, SweepResult,
};
