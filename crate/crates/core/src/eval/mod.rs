//! Downstream evaluation: frozen-backbone linear probes, ablation harnesses,
//! resize distortion reports and per-channel feature export.

mod ablation;
mod export;
mod logistic;
mod pi_report;
mod probe;

pub use ablation::{
    band_ablation, encoding_ablation, encoding_variants, loss_ablation, loss_variants, patch_ablation, pretrain_model,
    pretrain_probe_ablation, AblationAxis, AblationReport, AblationRow, ABLATION_COLUMNS,
};
pub use export::{channel_feature_maps, export_channel_features, FeatureStage};
pub use logistic::{FitOptions, LogisticRegression};
pub use pi_report::{
    least_squares_resize, pi_resize_report, DistortionRow, PiResizeReport, EXACT_TOL, PI_REPORT_COLUMNS,
};
pub use probe::{
    checkpoint_id, extract_features, extract_representation, fit_and_score, linear_probe, linear_probe_on,
    ClassifierScore, ProbeConfig, ProbeData, ProbeResult,
};

/// Band subsets of the robustness sweep, as Sentinel-2 profile indices.
pub const BAND_SUBSETS: [&[usize]; 4] = [
    &[0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12],
    &[1, 2, 3, 4, 5, 6, 7, 11, 12],
    &[1, 2, 3, 7, 11, 12],
    &[3, 2, 1],
];
