//! Covariate synthesis, chronological splits, windowing and scaling.

pub mod cache;
pub mod covariates;
pub mod split;
pub mod window;

pub use covariates::{
    augment_dataset, gamma_for_target_pcc, gamma_grid, mean_realized_pcc, pcc_sweep, pearson_cc, synthesize_covariates,
    AugmentedSeries, Covariate, GammaChoice,
};
pub use split::{chronological_split, Split, SplitSpec};
pub use window::{
    evaluation_windows, inverse_scale, sample_training_batch, scale_batch, window_scale, ForecastDataset, WindowBatch,
    WindowSampler,
};
