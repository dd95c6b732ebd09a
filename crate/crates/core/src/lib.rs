//! Hidden-variable models of the spin singlet that keep the hidden-variable
//! measure independent of the detector settings and keep single-wing
//! marginals independent of the remote setting.
//!
//! * [`geometry`] unit vectors, sphere sampling and quadrature, random streams
//! * [`models`] the model abstraction, built-in families, the Cerf model and
//!   the constructive recipe
//! * [`validator`] numerical certification of the admissibility constraints
//! * [`simulator`] Monte Carlo correlators, CHSH and Malus-law comparisons

pub mod error;
pub mod geometry;
pub mod models;
pub mod parallel;
pub mod simulator;
pub mod validator;

pub use error::{GeometryError, ModelError, SpecError};
pub use geometry::{
    dot, rotate_towards, sample_uniform_sphere, RandomStream, SphereGrid, UnitVector,
};
pub use models::{
    canonical_prob, hv_correlator, qm_singlet_prob, HiddenVariableModel, LambdaPoint, LambdaSpace,
    ModelSpec, Outcome, ProbabilityTable,
};
pub use simulator::{ChshResult, CorrelationEstimate, EstimatorMode, ExperimentConfig};
pub use validator::{ConstraintId, ConstraintReport, Status, SuiteConfig};
