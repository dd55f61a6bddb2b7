//! Manifold capacity and representation geometry.

pub mod activation;
pub mod cone;
pub mod error;
pub mod glue;
pub mod linalg;
pub mod model;
pub mod rng;
pub mod simcap;
pub mod stats;
pub mod synth;
pub mod theory;
pub mod twolayer;

pub use error::{Error, Result};
pub use model::{build_ensemble, Dichotomy, ManifoldEnsemble, PointCloudManifold};
pub use rng::RngStream;
