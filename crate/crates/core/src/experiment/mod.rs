//! Configured experiment runs, metrics files and reports.

pub mod config;
pub mod metrics;
pub mod run;

pub use config::{
    load_config, DatasetSource, ExperimentConfig, GpParams, KMeansParams, KWindowsParams,
    ParamServerParams, PolicyConfig, PredictGrid, TaskKind, TransportConfig,
};
pub use metrics::{
    parse_metrics, read_metrics, render_table, write_report_csv, MetricsRecord, MetricsWriter,
};
pub use run::{resolve_out_dir, run_experiment, write_dataset, write_shards, Summary};

use crate::error::Error;

pub const EXIT_OK: u8 = 0;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;
pub const EXIT_IO: u8 = 4;

/// Process exit status for an error.
pub fn exit_code(err: &Error) -> u8 {
    match err {
        Error::InvalidArgument(_)
        | Error::DimensionMismatch { .. }
        | Error::EmptyDataset
        | Error::Config { .. }
        | Error::Json(_) => EXIT_CONFIG,
        Error::RankDeficient { .. }
        | Error::NotPositiveDefinite { .. }
        | Error::InconsistentPrecision(_)
        | Error::Diverged(_) => EXIT_NUMERICAL,
        Error::Parse { .. } | Error::Io(_) | Error::Protocol(_) | Error::Remote { .. } => EXIT_IO,
    }
}
