//! Post-fit analysis: calibration scoring, acquisition functions and the
//! automated active-learning loop, clustering, kernel PCA and similarity
//! retrieval in random-feature space.

mod bo;
mod calibrate;
mod cluster;

pub use bo::{run_bo_loop, Acquisition, BoConfig, BoTrajectory};
pub use calibrate::{auce, ucb, CalibrationCurve};
pub use cluster::{
    kmeans_rf, kpca_rf, retrieve_similar, ClusterIndex, KpcaResult, Retrieval, RetrievalMode,
};
