//! Configuration, end-to-end pipeline and cross-validation driver.

pub mod config;
pub mod crossval;
pub mod pipeline;

pub use config::{GeometrySpec, MaterialOverrides, ProcessParams, RunConfig, WindowParams, CONFIG_SCHEMA};
pub use crossval::{
    audit_fold, config_hash, crossval, crossval_datasets, curves_csv, training_pool, CrossvalReport, FoldReport,
    LeakageAudit, ValidationMetrics, WorstWindowRow, REPORT_SCHEMA,
};
pub use pipeline::{build_datasets, build_domain, build_part, extract_options, run_geometry, GeometryRun};
