//! JSON model spec files.

use serde::{Deserialize, Serialize};

use crate::error::{ModelError, SpecError};
use crate::geometry::RandomStream;

use super::{
    build_recipe_model, cerf_model, family1_model, family2_model, recipe_function,
    recipe_model_with_scale, wrongtrial_model, HiddenVariableModel, LambdaSpace, QuadratureConfig,
    RecipeInput, RecipeSummary, ScalarMeasure, SupSearch,
};

/// Quadrature for recipe models. The registry functions are polynomials of
/// low degree in every λ component, so this rule is exact for them.
pub const RECIPE_QUADRATURE: QuadratureConfig = QuadratureConfig {
    scalar_nodes: 8,
    sphere_polar: 16,
    max_points: 1 << 20,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Family1,
    Family2,
    Cerf,
    Wrongtrial,
    Recipe,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalarMeasureKind {
    #[default]
    TwoPoint,
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Parameters {
    /// Registry name of the recipe function.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f: Option<String>,
    /// Recorded recipe scale factor; when present no search is run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sup_g: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inf_g: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bound: Option<f64>,
    /// Weight of `+γ` in the two-point measure (default 1/2).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight_plus: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub family: Family,
    #[serde(default)]
    pub parameters: Parameters,
    #[serde(default)]
    pub scalar_measure: ScalarMeasureKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl ModelSpec {
    pub fn new(family: Family) -> Self {
        ModelSpec {
            family,
            parameters: Parameters::default(),
            scalar_measure: ScalarMeasureKind::TwoPoint,
            gamma: None,
            s: None,
            seed: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, SpecError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model spec serializes")
    }

    fn gamma_or_default(&self) -> f64 {
        self.gamma.unwrap_or(match self.family {
            Family::Recipe => 1.0,
            _ => 0.4,
        })
    }

    pub fn scalar_measure(&self) -> ScalarMeasure {
        let gamma = self.gamma_or_default();
        match self.scalar_measure {
            ScalarMeasureKind::TwoPoint => ScalarMeasure::TwoPoint {
                gamma,
                weight_plus: self.parameters.weight_plus.unwrap_or(0.5),
            },
            ScalarMeasureKind::Uniform => ScalarMeasure::Uniform { gamma },
        }
    }

    fn recipe_input(&self) -> Result<RecipeInput, ModelError> {
        let name =
            self.parameters.f.as_deref().ok_or_else(|| {
                ModelError::InvalidParameter("recipe spec needs parameters.f".into())
            })?;
        let entry =
            recipe_function(name).ok_or_else(|| ModelError::UnknownRecipe(name.to_string()))?;
        let measure = self.scalar_measure();
        let space = LambdaSpace::new(vec![measure], 1, vec![])?.with_quadrature(&RECIPE_QUADRATURE);
        Ok(RecipeInput {
            name: name.to_string(),
            f: entry.f.clone(),
            f_bound: (entry.bound)(measure.support_bound()),
            s: self.s.unwrap_or(1.0),
            space,
        })
    }

    /// Builds the model. Recipe specs without a recorded scale run the
    /// extreme-value search seeded by `seed`.
    pub fn build(&self, quadrature: &QuadratureConfig) -> Result<HiddenVariableModel, ModelError> {
        let measure = self.scalar_measure();
        match self.family {
            Family::Family1 => family1_model(measure, quadrature),
            Family::Family2 => family2_model(measure, quadrature),
            Family::Wrongtrial => wrongtrial_model(measure, quadrature),
            Family::Cerf => Ok(cerf_model()),
            Family::Recipe => {
                let input = self.recipe_input()?;
                let seed = self.seed.unwrap_or(0);
                match self.parameters.scale {
                    Some(scale) => recipe_model_with_scale(&input, scale, seed),
                    None => Ok(build_recipe_model(
                        &input,
                        &SupSearch::default(),
                        &RandomStream::new(seed, 0),
                    )?
                    .0),
                }
            }
        }
    }

    /// Runs the recipe search and returns the spec with the result recorded.
    pub fn resolve_recipe(
        &self,
        search: &SupSearch,
    ) -> Result<(ModelSpec, RecipeSummary), ModelError> {
        if self.family != Family::Recipe {
            return Err(ModelError::InvalidParameter("not a recipe spec".into()));
        }
        let input = self.recipe_input()?;
        let seed = self.seed.unwrap_or(0);
        let (_, summary) = build_recipe_model(&input, search, &RandomStream::new(seed, 0))?;
        let mut out = self.clone();
        out.parameters.scale = Some(summary.scale);
        out.parameters.sup_g = Some(summary.sup_g);
        out.parameters.inf_g = Some(summary.inf_g);
        out.parameters.bound = Some(summary.bound);
        Ok((out, summary))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_minimal_and_full_specs() {
        let s = ModelSpec::from_json(r#"{"family": "family1"}"#).unwrap();
        assert_eq!(s.family, Family::Family1);
        assert_eq!(s.scalar_measure(), ScalarMeasure::two_point(0.4));

        let s = ModelSpec::from_json(
            r#"{"family": "recipe", "parameters": {"f": "poly1", "scale": 0.495},
                "scalar_measure": "uniform", "gamma": 1.0, "s": 1.0, "seed": 3}"#,
        )
        .unwrap();
        let model = s.build(&QuadratureConfig::default()).unwrap();
        assert_eq!(model.name(), "recipe:poly1");
        let back = ModelSpec::from_json(&s.to_json()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(ModelSpec::from_json(r#"{"family": "family9"}"#).is_err());
        assert!(ModelSpec::from_json(r#"{"family": "family1", "colour": 1}"#).is_err());
        assert!(ModelSpec::from_json("{").is_err());
        let s =
            ModelSpec::from_json(r#"{"family": "recipe", "parameters": {"f": "nope"}}"#).unwrap();
        assert_eq!(
            s.build(&QuadratureConfig::default()).unwrap_err(),
            ModelError::UnknownRecipe("nope".into())
        );
        let s = ModelSpec::from_json(r#"{"family": "family1", "gamma": 0.6}"#).unwrap();
        assert!(s.build(&QuadratureConfig::default()).is_err());
    }

    #[test]
    fn asymmetric_weight_is_carried() {
        let s =
            ModelSpec::from_json(r#"{"family": "family1", "parameters": {"weight_plus": 0.6}}"#)
                .unwrap();
        assert_eq!(
            s.scalar_measure(),
            ScalarMeasure::TwoPoint {
                gamma: 0.4,
                weight_plus: 0.6
            }
        );
    }
}
