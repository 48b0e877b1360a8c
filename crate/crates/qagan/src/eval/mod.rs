//! EM/F1 metrics and the embedding-space domain-gap analysis.

pub mod metrics;
pub mod probe;
pub mod project;

pub use metrics::{exact_match, f1, metric_report, normalize_answer, DatasetMetrics, MetricReport};
pub use probe::probe_domain_accuracy;
pub use project::{
    project_2d, silhouette, GapPoint, GapReport, Projection, ProjectionMethod, TsneParams,
};
