//! Point sampling and generative-quality metrics.

mod cloud;
mod distance;
mod suite;

pub use cloud::{sample_surface, PointCloud};
pub use distance::{chamfer, emd, min_cost_assignment, DistanceKind, EMD_MAX_POINTS};
pub use suite::{
    coverage, coverage_from_matrix, evaluate, mmd, mmd_from_matrix, one_nna, one_nna_from_matrices,
    DistanceMatrix, DistanceScores, EvalConfig, MetricKind, MetricReport,
};
