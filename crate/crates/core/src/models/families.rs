//! Closed-form excess-correlation families.

use crate::error::ModelError;
use crate::geometry::{dot, UnitVector};

use super::{
    ExcessCorrelation, Exponents, HiddenVariableModel, LambdaPoint, LambdaSpace, QuadratureConfig,
    ScalarMeasure,
};

/// `(1 - (a·b)²) g`.
pub fn family1_c(g: f64, a: &UnitVector, b: &UnitVector) -> f64 {
    let x = dot(a, b);
    (1.0 - x * x) * g
}

/// `-(a·b) ((a·u)² - (b·u)²)² g`.
pub fn family2_c(g: f64, u: &UnitVector, a: &UnitVector, b: &UnitVector) -> f64 {
    let x = dot(a, b);
    let au = dot(a, u);
    let bu = dot(b, u);
    let d = au * au - bu * bu;
    -x * d * d * g
}

/// `√(1 - (a·b)²) g`. Inadmissible: produces negative probabilities near
/// coincident settings for any zero-mean `g`.
pub fn wrongtrial_c(g: f64, a: &UnitVector, b: &UnitVector) -> f64 {
    let x = dot(a, b);
    (1.0 - x * x).max(0.0).sqrt() * g
}

/// `C ≡ 0`: the quantum-mechanical reference.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroExcess;

impl ExcessCorrelation for ZeroExcess {
    fn eval(&self, _: &LambdaPoint, _: &UnitVector, _: &UnitVector) -> f64 {
        0.0
    }
}

/// λ = (g).
#[derive(Debug, Clone, Copy, Default)]
pub struct Family1;

impl ExcessCorrelation for Family1 {
    fn eval(&self, l: &LambdaPoint, a: &UnitVector, b: &UnitVector) -> f64 {
        family1_c(l.scalars[0], a, b)
    }

    fn exponents(&self) -> Option<Exponents> {
        Some(Exponents::symmetric(1.0))
    }
}

/// λ = (g, u).
#[derive(Debug, Clone, Copy, Default)]
pub struct Family2;

impl ExcessCorrelation for Family2 {
    fn eval(&self, l: &LambdaPoint, a: &UnitVector, b: &UnitVector) -> f64 {
        family2_c(l.scalars[0], &l.vectors[0], a, b)
    }

    fn exponents(&self) -> Option<Exponents> {
        Some(Exponents::symmetric(1.0))
    }
}

/// λ = (g).
#[derive(Debug, Clone, Copy, Default)]
pub struct WrongTrial;

impl ExcessCorrelation for WrongTrial {
    fn eval(&self, l: &LambdaPoint, a: &UnitVector, b: &UnitVector) -> f64 {
        wrongtrial_c(l.scalars[0], a, b)
    }

    fn exponents(&self) -> Option<Exponents> {
        Some(Exponents::symmetric(0.5))
    }
}

pub fn qm_model() -> HiddenVariableModel {
    let space = LambdaSpace::new(vec![], 0, vec![])
        .expect("empty space is valid")
        .with_quadrature(&QuadratureConfig::default());
    HiddenVariableModel::canonical("qm", space, ZeroExcess)
}

/// First family; requires `|g| < 1/2` on the whole support.
pub fn family1_model(
    measure: ScalarMeasure,
    quadrature: &QuadratureConfig,
) -> Result<HiddenVariableModel, ModelError> {
    if measure.support_bound() >= 0.5 {
        return Err(ModelError::InvalidParameter(format!(
            "family1 needs |g| < 1/2, support reaches {}",
            measure.support_bound()
        )));
    }
    let space = LambdaSpace::new(vec![measure], 0, vec![])?.with_quadrature(quadrature);
    Ok(HiddenVariableModel::canonical("family1", space, Family1))
}

/// Second family; requires `|g| <= 1/2`, `u` uniform on the sphere.
pub fn family2_model(
    measure: ScalarMeasure,
    quadrature: &QuadratureConfig,
) -> Result<HiddenVariableModel, ModelError> {
    if measure.support_bound() > 0.5 {
        return Err(ModelError::InvalidParameter(format!(
            "family2 needs |g| <= 1/2, support reaches {}",
            measure.support_bound()
        )));
    }
    let space = LambdaSpace::new(vec![measure], 1, vec![])?.with_quadrature(quadrature);
    Ok(HiddenVariableModel::canonical("family2", space, Family2))
}

/// The negative-probability counterexample. Accepts any scalar measure.
pub fn wrongtrial_model(
    measure: ScalarMeasure,
    quadrature: &QuadratureConfig,
) -> Result<HiddenVariableModel, ModelError> {
    let space = LambdaSpace::new(vec![measure], 0, vec![])?.with_quadrature(quadrature);
    Ok(HiddenVariableModel::canonical(
        "wrongtrial",
        space,
        WrongTrial,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::RandomStream;
    use crate::models::Outcome;

    fn pair(x: f64) -> (UnitVector, UnitVector) {
        (
            UnitVector::Z,
            UnitVector::Z.at_inner_product(&UnitVector::X, x),
        )
    }

    #[test]
    fn family1_examples() {
        let (a, b) = pair(0.0);
        assert!((family1_c(0.4, &a, &b) - 0.4).abs() < 1e-15);
        for g in [0.3, -0.49, 7.0] {
            assert_eq!(family1_c(g, &a, &a), 0.0);
            assert_eq!(family1_c(g, &a, &-a), 0.0);
        }
        let (a, b) = pair(0.5);
        assert!((family1_c(-0.25, &a, &b) - (-0.1875)).abs() < 1e-15);
    }

    #[test]
    fn family2_examples() {
        let a = UnitVector::Z;
        let b = UnitVector::normalize(1.0, 0.0, 1.0).unwrap();
        let got = family2_c(0.5, &UnitVector::Z, &a, &b);
        assert!((got - (-0.08838834764831843)).abs() < 1e-16);
        // bracket vanishes when a·u = b·u
        let u = UnitVector::normalize(1.0, 0.0, (2.0f64).sqrt() + 1.0).unwrap();
        assert!((dot(&a, &u) - dot(&b, &u)).abs() < 1e-15);
        assert!(family2_c(0.5, &u, &a, &b).abs() < 1e-15);
        // leading factor vanishes at a·b = 0
        let mut rng = RandomStream::new(4, 0);
        for _ in 0..100 {
            let u = rng.unit_vector();
            assert_eq!(family2_c(0.5, &u, &UnitVector::Z, &UnitVector::X), 0.0);
        }
    }

    #[test]
    fn wrongtrial_examples() {
        let (a, b) = pair(1.0 - 1e-4);
        let c = wrongtrial_c(0.4, &a, &b);
        assert!((c - 0.4 * (2e-4f64 - 1e-8).sqrt()).abs() < 1e-12);
        assert!((c - 5.657e-3).abs() < 1e-6);
        assert_eq!(wrongtrial_c(0.0, &a, &b), 0.0);
        let (a, b) = pair(0.0);
        for g in [0.4, -0.4] {
            let t = crate::models::ProbabilityTable::canonical(0.0, wrongtrial_c(g, &a, &b));
            for (_, _, p) in t.cells() {
                assert!((0.15 - 1e-15..=0.35 + 1e-15).contains(&p));
            }
        }
        let (a, b) = pair(1.0 - 1e-4);
        let t = crate::models::ProbabilityTable::canonical(dot(&a, &b), wrongtrial_c(-0.4, &a, &b));
        assert!(t.get(Outcome::Plus, Outcome::Plus) < 0.0);
    }

    #[test]
    fn family2_envelope_bounds_bracket() {
        // max_u ((a·u)² - (b·u)²)² = 1 - (a·b)²
        let mut rng = RandomStream::new(77, 0);
        for _ in 0..20 {
            let a = rng.unit_vector();
            let b = rng.unit_vector();
            let x = dot(&a, &b);
            let mut max: f64 = 0.0;
            for _ in 0..100_000 {
                let u = rng.unit_vector();
                let d = dot(&a, &u).powi(2) - dot(&b, &u).powi(2);
                max = max.max(d * d);
            }
            assert!(max <= 1.0 - x * x + 1e-9);
            assert!(max > (1.0 - x * x) * 0.98);
        }
    }

    #[test]
    fn construction_bounds() {
        let q = QuadratureConfig::default();
        assert!(family1_model(ScalarMeasure::two_point(0.5), &q).is_err());
        assert!(family1_model(ScalarMeasure::uniform(0.49), &q).is_ok());
        assert!(family2_model(ScalarMeasure::two_point(0.5), &q).is_ok());
        assert!(family2_model(ScalarMeasure::two_point(0.51), &q).is_err());
        assert!(wrongtrial_model(ScalarMeasure::two_point(3.0), &q).is_ok());
    }
}
