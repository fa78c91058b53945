//! Simulator for data-dependent elliptical exploration in online preference
//! optimization, in a synthetic linear Bradley–Terry world.
//!
//! The numerical core ([`mathcore`], [`estimator`]) is generic over the
//! scalar type; the aliases below fix it to `f64`, which is what the world,
//! policy, and driver layers use.

pub mod driver;
pub mod estimator;
pub mod mathcore;
pub mod policy;
pub mod rng;
pub mod world;

pub use driver::{run, run_baseline, run_depo, Arm, BaselineMode, DriverConfig, DriverError, RunTrace, WidthMode};
pub use mathcore::{MathError, Real};
pub use policy::{SoftmaxPolicy, TrainConfig};
pub use world::{FeatureGenerator, World, WorldError, WorldSpec};

pub type Vec64 = mathcore::Vector<f64>;
pub type Covariance = mathcore::CovarianceState<f64>;
pub type Pair = world::PairFeature<f64>;
pub type Record = estimator::PreferenceRecord<f64>;
pub type Estimate = estimator::RewardEstimate<f64>;
pub type Covariance32 = mathcore::CovarianceState<f32>;
