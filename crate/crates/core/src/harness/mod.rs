//! Study orchestration: folds, per-model forecasts, aligned scoring and run
//! persistence.

pub mod classical;
pub mod deep;
pub mod output;
pub mod spec;
pub mod study;

pub use classical::{ClassicalTrack, DailySeries};
pub use deep::{predict_next, predict_targets, train_on_fold, TrainedNet};
pub use output::{sanitize, write_report_csv, write_run_dir, REPORT_SCHEMA};
pub use spec::{default_grid, derive_seed, parse_models, GridCell, ModelSpec, StudyKind, StudySpec};
pub use study::{
    deep_config, folds, forecast_next, grid_label, run_generalisation, run_grid, run_linearity, run_oos, run_study,
    ticker_split, Failure, Folds, StudyResult, StudyTable, Transfer, TrainingSummary, REFERENCES,
};
