//! Cerf–Gisin–Massar–Popescu model in its reduced two-vector form.

use crate::error::ModelError;
use crate::geometry::{dot, UnitVector};

use super::{
    DirectRule, HiddenVariableModel, LambdaPoint, LambdaSpace, ProbabilityRule, ProbabilityTable,
};

/// Sign arguments closer to zero than this are treated as measure-zero.
pub const SIGN_TOLERANCE: f64 = 1e-12;

fn sign(v: f64) -> Result<f64, ModelError> {
    if v.abs() <= SIGN_TOLERANCE {
        Err(ModelError::MeasureZero)
    } else {
        Ok(v.signum())
    }
}

/// Joint table for λ = (u, v). Every entry is 0 or 1/2.
pub fn cerf_prob(
    u: &UnitVector,
    v: &UnitVector,
    a: &UnitVector,
    b: &UnitVector,
) -> Result<ProbabilityTable, ModelError> {
    let [ux, uy, uz] = u.components();
    let [vx, vy, vz] = v.components();
    let [bx, by, bz] = b.components();
    let n_plus_b = (ux + vx) * bx + (uy + vy) * by + (uz + vz) * bz;
    let n_minus_b = (ux - vx) * bx + (uy - vy) * by + (uz - vz) * bz;

    let su = sign(dot(u, a))?;
    let sv = sign(dot(v, a))?;
    let sp = sign(n_plus_b)?;
    let sm = sign(n_minus_b)?;

    let x = su * sv;
    let y = sp * sm;
    // (1 + x + y - xy)/2 is ±1 for x, y ∈ {±1}
    let k = su * sp * (1.0 + x + y - x * y) / 2.0;
    let same = (1.0 - k) / 4.0;
    let diff = (1.0 + k) / 4.0;
    Ok(ProbabilityTable::from_entries([same, diff, diff, same]))
}

#[derive(Debug, Clone, Copy, Default)]
pub struct CerfRule;

impl DirectRule for CerfRule {
    fn table(&self, l: &LambdaPoint, a: &UnitVector, b: &UnitVector) -> Option<ProbabilityTable> {
        cerf_prob(&l.vectors[0], &l.vectors[1], a, b).ok()
    }
}

/// λ = (u, v), both uniform on the sphere. Sampling only: the integrand is
/// discontinuous and the product grid would be too large anyway.
pub fn cerf_model() -> HiddenVariableModel {
    let space = LambdaSpace::new(vec![], 2, vec![]).expect("two sphere components are valid");
    HiddenVariableModel::new(
        "cerf",
        space,
        ProbabilityRule::Direct(std::sync::Arc::new(CerfRule)),
    )
}
