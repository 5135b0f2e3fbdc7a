//! Distances between point clouds viewed as uniform discrete measures:
//! Chamfer discrepancy, exact and entropic Wasserstein distances, sliced,
//! max-sliced, adaptive and generalized sliced Wasserstein, their gradients,
//! and a gradient-descent morphing harness that tracks exact EMD.

pub mod bench;
pub mod chamfer;
pub mod cloud;
pub mod error;
pub mod gradient;
pub mod io;
pub mod metric;
pub mod morph;
pub mod rng;
pub mod sliced;
mod sort;
pub mod verify;
pub mod wasserstein;

pub use chamfer::{chamfer, chamfer_grad, modified_chamfer, NnIndex, NnStrategy};
pub use cloud::{diameter, make_cloud, sample_uniform_sphere, Direction, DistanceOrder, PointCloud};
pub use error::{Error, Result};
pub use gradient::Gradient;
pub use metric::{evaluate, Metric, MetricParams, MetricReport};
pub use morph::{morph, sample_shape, LossKind, MorphConfig, MorphTrace, ShapeKind};
pub use rng::SeededRng;
pub use sliced::{
    max_sliced, project, swd_adaptive, swd_grad, swd_monte_carlo, AswConfig, ProjectionKind, SlicedEstimate,
    SlicingConfig,
};
pub use wasserstein::{
    emd_bruteforce, emd_exact, emd_grad, sinkhorn_approx, wasserstein_1d, Assignment, SinkhornConfig,
};
