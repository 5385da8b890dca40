//! Image metrics, latent analysis and report tables.

mod latent;
mod metrics;
mod model_eval;
mod report;

pub use latent::{invariance_ratio, nearest_centroid_accuracy, pca_project, Projection, MIN_INVARIANCE_PAIRS};
pub use model_eval::{
    ablation_report, classification_accuracy, dfr_reconstruct, encode_means, latent_invariance_ratio, make_test_pairs,
    metrics_report, pilot_clustering, restore_batch, PilotClusters, RestorePath, TestPair, ABLATION_ROWS,
};
pub use metrics::{mse, psnr, ssim, ssim_contrast_structure};
pub use report::{write_projection_csv, MetricRow, MetricTable, ProjectionRow};
