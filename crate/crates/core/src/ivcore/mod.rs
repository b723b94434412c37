//! Leave-out judge instruments and fixed-effect OLS/2SLS.

pub mod estimate;
pub mod frame;
pub mod instrument;
pub mod kp;

pub use estimate::{fit_2sls, fit_ols, small_sample_factor, Column, Estimator, FitOptions, FitResult};
pub use frame::{
    build_frame, cluster_factor, column, fingerprint, fit_model, ols_version, report_table, AnalysisFrame, Extras, FrameSpec, ModelSpec,
    OutcomeColumn, FE_CELL,
};
pub use instrument::{
    build_instrument, stratum_key, Grouping, Horizon, InstrumentSeries, InstrumentSpec, InstrumentSummary, LeaveOut,
    MissingReason,
};
pub use kp::kp_rk_f;
