//! Evaluation: confusion metrics, hypothesis tests, temporal and
//! hyperparameter harnesses, and the descriptive analytics behind the
//! report tables.

pub mod analytics;
pub mod chi2;
pub mod harness;
pub mod metrics;
pub mod report;
pub mod window;

pub use analytics::*;
pub use chi2::{chi2_sf, chi_square_2x2, gamma_q, ln_gamma, ChiSquareResult, ContingencyTable2x2, PeriodCounts};
pub use harness::{
    evaluate_detector, grid_search, object_seed, temporal_window_eval, AutoencoderGrid, Detector, ForestGrid,
    GridResult, GridSpec, LabeledRows, ModelFamily, TemporalConfig, TemporalRow,
};
pub use metrics::{accuracy, confusion, confusion_rows, f1, ConfusionCounts};
pub use window::PeriodWindow;
