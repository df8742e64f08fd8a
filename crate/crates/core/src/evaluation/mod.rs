//! Synthetic data generators and interval-quality metrics.

mod metrics;
mod synthetic;

pub use metrics::{
    average_length, coverage_rate, group_report, pearson, pearson_interval_correlation, Correlation, GroupStats,
    LengthSummary, MetricsReport,
};
pub use synthetic::{generate, CovariateShift, Family, SyntheticSpec};
