//! Named recipe functions available to model spec files.
//!
//! Every entry is a polynomial in the scalar hidden variable `g`, `a·b`,
//! `a·u` and `b·u`, with λ = (g, u).

use std::sync::Arc;

use crate::geometry::{dot, UnitVector};

use super::{LambdaPoint, RecipeFn};

#[derive(Clone)]
pub struct RecipeEntry {
    pub name: &'static str,
    pub expression: &'static str,
    pub f: RecipeFn,
    /// Bound on `|f|` given the support bound `γ` of the scalar measure.
    pub bound: fn(f64) -> f64,
}

impl std::fmt::Debug for RecipeEntry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RecipeEntry")
            .field("name", &self.name)
            .field("expression", &self.expression)
            .finish()
    }
}

fn g(l: &LambdaPoint) -> f64 {
    l.scalars[0]
}

fn u(l: &LambdaPoint) -> &UnitVector {
    &l.vectors[0]
}

const NAMES: [&str; 4] = ["poly1", "poly-aubu", "poly-au2bu2", "poly-mixed"];

pub fn recipe_names() -> &'static [&'static str] {
    &NAMES
}

pub fn recipe_function(name: &str) -> Option<RecipeEntry> {
    let entry = match name {
        "poly1" => RecipeEntry {
            name: "poly1",
            expression: "g",
            f: Arc::new(|l: &LambdaPoint, _: &UnitVector, _: &UnitVector| g(l)),
            bound: |gamma| gamma,
        },
        "poly-aubu" => RecipeEntry {
            name: "poly-aubu",
            expression: "(a·u)(b·u)",
            f: Arc::new(|l: &LambdaPoint, a: &UnitVector, b: &UnitVector| {
                dot(a, u(l)) * dot(b, u(l))
            }),
            bound: |_| 1.0,
        },
        "poly-au2bu2" => RecipeEntry {
            name: "poly-au2bu2",
            expression: "(a·u)²(b·u)²",
            f: Arc::new(|l: &LambdaPoint, a: &UnitVector, b: &UnitVector| {
                (dot(a, u(l)) * dot(b, u(l))).powi(2)
            }),
            bound: |_| 1.0,
        },
        "poly-mixed" => RecipeEntry {
            name: "poly-mixed",
            expression: "g(a·b) + g(a·u) + (a·u)(b·u)²",
            f: Arc::new(|l: &LambdaPoint, a: &UnitVector, b: &UnitVector| {
                let au = dot(a, u(l));
                let bu = dot(b, u(l));
                g(l) * dot(a, b) + g(l) * au + au * bu * bu
            }),
            bound: |gamma| 2.0 * gamma + 1.0,
        },
        _ => return None,
    };
    Some(entry)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::RandomStream;

    #[test]
    fn every_name_resolves_and_respects_bound() {
        let mut rng = RandomStream::new(3, 0);
        for name in recipe_names() {
            let e = recipe_function(name).unwrap();
            assert_eq!(&e.name, name);
            for _ in 0..10_000 {
                let gamma = 0.8;
                let l = LambdaPoint::new(
                    &[gamma * (2.0 * rng.uniform() - 1.0)],
                    &[rng.unit_vector()],
                    &[],
                );
                let v = (e.f)(&l, &rng.unit_vector(), &rng.unit_vector());
                assert!(v.abs() <= (e.bound)(gamma));
            }
        }
        assert!(recipe_function("nope").is_none());
    }
}
