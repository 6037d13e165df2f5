//! Tool substitution by shape and material: ESF point-cloud descriptors,
//! spectral readings, tied-weight twin networks with a distance head, and
//! ranking of candidate tools for an action.
//!
//! Every numeric type is generic over [`scalar::Scalar`] (`f32` or `f64`);
//! the aliases below fix it to `f64`.

pub mod action;
pub mod error;
pub mod esf;
pub mod geometry;
pub mod matcher;
pub mod neuralnet;
pub mod ranker;
pub mod scalar;
pub mod seed;
pub mod spectral;

pub use action::ActionName;
pub use error::{Error, Result};
pub use scalar::Scalar;

/// Default real type.
pub type Real = f64;

pub type Cloud = geometry::PointCloud<Real>;
pub type Descriptor = esf::EsfDescriptor<Real>;
pub type Reading = spectral::SpectralReading<Real>;
pub type Net = neuralnet::DualNetwork<Real>;
pub type Pair = neuralnet::LabeledPair<Real>;
pub type Example = matcher::LabeledExample<Real>;
pub type Model = matcher::ActionModel<Real>;
pub type Models = ranker::ModelBank<Real>;
pub type Tool = ranker::Candidate<Real>;
pub type Ranking = ranker::RankedList<Real>;
pub type Set = ranker::EvalSet<Real>;

pub type CloudF32 = geometry::PointCloud<f32>;
pub type NetF32 = neuralnet::DualNetwork<f32>;
pub type ModelF32 = matcher::ActionModel<f32>;
