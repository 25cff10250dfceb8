//! Downstream evaluation of frozen embeddings.

mod kmeans;
mod metrics;
mod probe;

pub use kmeans::{kmeans, ClusterConfig, KMeansResult};
pub use metrics::{coverage, modularity, performance_metric, planted_modularity, EvalMetrics};
pub use probe::{linear_probe, ProbeConfig, ProbeResult};
