use thiserror::Error;

use crate::geometry::UnitVector;
use crate::models::{LambdaPoint, Outcome};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("cannot normalize degenerate vector {0:?}")]
    Degenerate([f64; 3]),
    #[error("vector {components:?} has norm {norm}, expected 1")]
    NotUnit { components: [f64; 3], norm: f64 },
    #[error("tilt epsilon {0} outside (0, 0.1]")]
    EpsilonOutOfRange(f64),
    #[error("direction is parallel to the base vector")]
    ParallelDirection,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(
        "negative probability {value:e} for outcome ({sigma}, {tau}) at a={a:?}, b={b:?}, lambda={lambda:?}"
    )]
    NegativeProbability {
        lambda: LambdaPoint,
        a: UnitVector,
        b: UnitVector,
        sigma: Outcome,
        tau: Outcome,
        value: f64,
    },
    #[error("hidden variable lies on a measure-zero sign boundary")]
    MeasureZero,
    #[error("operation requires a canonical (excess-correlation) model")]
    NotCanonical,
    #[error("recipe function value {value} exceeds its declared bound {bound}")]
    Unbounded { value: f64, bound: f64 },
    #[error("average of the recipe function is not finite")]
    DivergentMean,
    #[error("table is not normalized: entries sum to {0}")]
    NotNormalized(f64),
    #[error("unknown recipe function '{0}'")]
    UnknownRecipe(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Error)]
pub enum SpecError {
    #[error("model spec: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("model spec: {0}")]
    Model(#[from] ModelError),
}
